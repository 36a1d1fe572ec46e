//! Ladder-logic soft PLC: IEC 61131-3-style addressing, the Modbus process
//! image, and the Modbus service layer. The scan engine lives in [`scan`],
//! the rung grammar and parser in [`ladder`].

pub mod ladder;
pub mod scan;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use simpleics_protocols::modbus::{ExceptionCode, ModbusFrame, ModbusPdu};

/// Bit addresses live in the slave window `%?X100.0 ..= %?X199.7`.
pub const BIT_BYTE_LO: u16 = 100;
pub const BIT_BYTE_HI: u16 = 199;
/// Size of each bit table (coils, discrete inputs).
pub const BIT_TABLE_SIZE: usize = 1600;
/// Size of each word table (holding, input registers).
pub const WORD_TABLE_SIZE: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlcError {
    #[error("cannot parse ladder address '{0}'")]
    BadAddress(String),
    #[error("address {0} outside the slave window")]
    AddressOutOfRange(LadderAddress),
    #[error("modbus index {index} out of bounds for {table:?}")]
    IndexOutOfBounds { table: Table, index: u16 },
}

/// The four Modbus data tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Table {
    Coil,
    DiscreteInput,
    HoldingRegister,
    InputRegister,
}

/// Address kinds as written in ladder source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AddressKind {
    /// `%IX` — discrete input bit
    InputBit,
    /// `%QX` — output coil bit
    CoilBit,
    /// `%IW` — input register word
    InputWord,
    /// `%QW` — holding register word
    HoldingWord,
}

impl AddressKind {
    pub fn is_bit(&self) -> bool {
        matches!(self, AddressKind::InputBit | AddressKind::CoilBit)
    }

    pub fn table(&self) -> Table {
        match self {
            AddressKind::InputBit => Table::DiscreteInput,
            AddressKind::CoilBit => Table::Coil,
            AddressKind::InputWord => Table::InputRegister,
            AddressKind::HoldingWord => Table::HoldingRegister,
        }
    }
}

/// One IEC-style address, e.g. `%QX100.3` or `%IW102`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct LadderAddress {
    pub kind: AddressKind,
    pub byte_index: u16,
    /// Only meaningful for bit kinds.
    pub bit_index: u8,
}

impl LadderAddress {
    pub fn bit(kind: AddressKind, byte_index: u16, bit_index: u8) -> Self {
        Self { kind, byte_index, bit_index }
    }

    pub fn word(kind: AddressKind, index: u16) -> Self {
        Self { kind, byte_index: index, bit_index: 0 }
    }

    /// Maps to `(modbus table, modbus index)`.
    ///
    /// Bit addresses map to `byte_index * 8 + bit_index`, which puts
    /// `%QX100.0` at coil 800 — the 800-bit offset external Modbus clients
    /// must apply. Word addresses map through unchanged.
    pub fn to_modbus(&self) -> Result<(Table, u16), PlcError> {
        match self.kind {
            AddressKind::InputBit | AddressKind::CoilBit => {
                if !(BIT_BYTE_LO..=BIT_BYTE_HI).contains(&self.byte_index) || self.bit_index > 7 {
                    return Err(PlcError::AddressOutOfRange(*self));
                }
                Ok((self.kind.table(), self.byte_index * 8 + self.bit_index as u16))
            }
            AddressKind::InputWord | AddressKind::HoldingWord => {
                if self.byte_index as usize >= WORD_TABLE_SIZE {
                    return Err(PlcError::AddressOutOfRange(*self));
                }
                Ok((self.kind.table(), self.byte_index))
            }
        }
    }
}

impl fmt::Display for LadderAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            AddressKind::InputBit => write!(f, "%IX{}.{}", self.byte_index, self.bit_index),
            AddressKind::CoilBit => write!(f, "%QX{}.{}", self.byte_index, self.bit_index),
            AddressKind::InputWord => write!(f, "%IW{}", self.byte_index),
            AddressKind::HoldingWord => write!(f, "%QW{}", self.byte_index),
        }
    }
}

impl FromStr for LadderAddress {
    type Err = PlcError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PlcError::BadAddress(s.to_owned());
        let body = s.strip_prefix('%').ok_or_else(bad)?;
        let (kind, rest) = if let Some(r) = body.strip_prefix("IX") {
            (AddressKind::InputBit, r)
        } else if let Some(r) = body.strip_prefix("QX") {
            (AddressKind::CoilBit, r)
        } else if let Some(r) = body.strip_prefix("IW") {
            (AddressKind::InputWord, r)
        } else if let Some(r) = body.strip_prefix("QW") {
            (AddressKind::HoldingWord, r)
        } else {
            return Err(bad());
        };
        if kind.is_bit() {
            let (byte, bit) = rest.split_once('.').ok_or_else(bad)?;
            let addr = LadderAddress {
                kind,
                byte_index: byte.parse().map_err(|_| bad())?,
                bit_index: bit.parse().map_err(|_| bad())?,
            };
            addr.to_modbus()?;
            Ok(addr)
        } else {
            let addr = LadderAddress {
                kind,
                byte_index: rest.parse().map_err(|_| bad())?,
                bit_index: 0,
            };
            addr.to_modbus()?;
            Ok(addr)
        }
    }
}

/// The Modbus process image: two bit tables and two word tables, all
/// bounds-checked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterBank {
    pub coils: Vec<bool>,
    pub discrete_inputs: Vec<bool>,
    pub holding_registers: Vec<u16>,
    pub input_registers: Vec<u16>,
}

impl Default for RegisterBank {
    fn default() -> Self {
        Self::new()
    }
}

impl RegisterBank {
    pub fn new() -> Self {
        Self {
            coils: vec![false; BIT_TABLE_SIZE],
            discrete_inputs: vec![false; BIT_TABLE_SIZE],
            holding_registers: vec![0; WORD_TABLE_SIZE],
            input_registers: vec![0; WORD_TABLE_SIZE],
        }
    }

    pub fn get_bit(&self, table: Table, index: u16) -> Result<bool, PlcError> {
        let arr = match table {
            Table::Coil => &self.coils,
            Table::DiscreteInput => &self.discrete_inputs,
            _ => return Err(PlcError::IndexOutOfBounds { table, index }),
        };
        arr.get(index as usize).copied().ok_or(PlcError::IndexOutOfBounds { table, index })
    }

    pub fn set_bit(&mut self, table: Table, index: u16, value: bool) -> Result<(), PlcError> {
        let arr = match table {
            Table::Coil => &mut self.coils,
            Table::DiscreteInput => &mut self.discrete_inputs,
            _ => return Err(PlcError::IndexOutOfBounds { table, index }),
        };
        match arr.get_mut(index as usize) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(PlcError::IndexOutOfBounds { table, index }),
        }
    }

    pub fn get_word(&self, table: Table, index: u16) -> Result<u16, PlcError> {
        let arr = match table {
            Table::HoldingRegister => &self.holding_registers,
            Table::InputRegister => &self.input_registers,
            _ => return Err(PlcError::IndexOutOfBounds { table, index }),
        };
        arr.get(index as usize).copied().ok_or(PlcError::IndexOutOfBounds { table, index })
    }

    pub fn set_word(&mut self, table: Table, index: u16, value: u16) -> Result<(), PlcError> {
        let arr = match table {
            Table::HoldingRegister => &mut self.holding_registers,
            Table::InputRegister => &mut self.input_registers,
            _ => return Err(PlcError::IndexOutOfBounds { table, index }),
        };
        match arr.get_mut(index as usize) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(PlcError::IndexOutOfBounds { table, index }),
        }
    }

    pub fn read_bit_addr(&self, addr: LadderAddress) -> Result<bool, PlcError> {
        let (table, index) = addr.to_modbus()?;
        self.get_bit(table, index)
    }

    pub fn read_word_addr(&self, addr: LadderAddress) -> Result<u16, PlcError> {
        let (table, index) = addr.to_modbus()?;
        self.get_word(table, index)
    }
}

/// A write applied through the Modbus server, tagged for telemetry so
/// externally-driven mutations are distinguishable from scan commits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WriteEffect {
    pub table: Table,
    pub index: u16,
    pub count: u16,
}

/// Frozen full-image snapshot served to readers while a view override is
/// active; writes still hit the live bank underneath.
#[derive(Debug, Clone)]
pub struct ViewOverride {
    pub snapshot: RegisterBank,
}

/// Outcome of serving one request frame.
#[derive(Debug)]
pub struct ServeOutcome {
    pub response: ModbusFrame,
    pub writes: Vec<WriteEffect>,
    /// True when a view override answered the read with frozen values.
    pub stale_view: bool,
}

/// Serves one decoded request against the bank, returning the response
/// frame. Reads come from the override snapshot when one is installed.
pub fn serve_modbus(
    bank: &mut RegisterBank,
    request: &ModbusFrame,
    view_override: Option<&ViewOverride>,
) -> ServeOutcome {
    let mut writes = Vec::new();
    let mut stale_view = false;
    let respond = |pdu: ModbusPdu| ModbusFrame {
        txn_id: request.txn_id,
        unit_id: request.unit_id,
        pdu,
    };
    let exception = |code: ExceptionCode| request.exception_reply(code);

    let response = match &request.pdu {
        ModbusPdu::ReadCoilsRequest { addr, quantity }
        | ModbusPdu::ReadDiscreteInputsRequest { addr, quantity } => {
            let table = if matches!(request.pdu, ModbusPdu::ReadCoilsRequest { .. }) {
                Table::Coil
            } else {
                Table::DiscreteInput
            };
            let source = match view_override {
                Some(v) => {
                    stale_view = true;
                    &v.snapshot
                }
                None => bank,
            };
            let end = *addr as usize + *quantity as usize;
            if end > BIT_TABLE_SIZE {
                exception(ExceptionCode::IllegalDataAddress)
            } else {
                let arr = match table {
                    Table::Coil => &source.coils,
                    _ => &source.discrete_inputs,
                };
                let mut bits: Vec<bool> = arr[*addr as usize..end].to_vec();
                while bits.len() % 8 != 0 {
                    bits.push(false);
                }
                respond(match table {
                    Table::Coil => ModbusPdu::ReadCoilsResponse { bits },
                    _ => ModbusPdu::ReadDiscreteInputsResponse { bits },
                })
            }
        }
        ModbusPdu::ReadHoldingRegistersRequest { addr, quantity }
        | ModbusPdu::ReadInputRegistersRequest { addr, quantity } => {
            let table = if matches!(request.pdu, ModbusPdu::ReadHoldingRegistersRequest { .. }) {
                Table::HoldingRegister
            } else {
                Table::InputRegister
            };
            let source = match view_override {
                Some(v) => {
                    stale_view = true;
                    &v.snapshot
                }
                None => bank,
            };
            let end = *addr as usize + *quantity as usize;
            if end > WORD_TABLE_SIZE {
                exception(ExceptionCode::IllegalDataAddress)
            } else {
                let arr = match table {
                    Table::HoldingRegister => &source.holding_registers,
                    _ => &source.input_registers,
                };
                let words = arr[*addr as usize..end].to_vec();
                respond(match table {
                    Table::HoldingRegister => ModbusPdu::ReadHoldingRegistersResponse { words },
                    _ => ModbusPdu::ReadInputRegistersResponse { words },
                })
            }
        }
        ModbusPdu::WriteSingleCoil { addr, on } => match bank.set_bit(Table::Coil, *addr, *on) {
            Ok(()) => {
                writes.push(WriteEffect { table: Table::Coil, index: *addr, count: 1 });
                respond(ModbusPdu::WriteSingleCoil { addr: *addr, on: *on })
            }
            Err(_) => exception(ExceptionCode::IllegalDataAddress),
        },
        ModbusPdu::WriteSingleRegister { addr, value } => {
            match bank.set_word(Table::HoldingRegister, *addr, *value) {
                Ok(()) => {
                    writes.push(WriteEffect {
                        table: Table::HoldingRegister,
                        index: *addr,
                        count: 1,
                    });
                    respond(ModbusPdu::WriteSingleRegister { addr: *addr, value: *value })
                }
                Err(_) => exception(ExceptionCode::IllegalDataAddress),
            }
        }
        ModbusPdu::WriteMultipleCoilsRequest { addr, bits } => {
            let end = *addr as usize + bits.len();
            if end > BIT_TABLE_SIZE {
                exception(ExceptionCode::IllegalDataAddress)
            } else {
                for (i, bit) in bits.iter().enumerate() {
                    bank.coils[*addr as usize + i] = *bit;
                }
                writes.push(WriteEffect {
                    table: Table::Coil,
                    index: *addr,
                    count: bits.len() as u16,
                });
                respond(ModbusPdu::WriteMultipleCoilsResponse {
                    addr: *addr,
                    quantity: bits.len() as u16,
                })
            }
        }
        ModbusPdu::WriteMultipleRegistersRequest { addr, words } => {
            let end = *addr as usize + words.len();
            if end > WORD_TABLE_SIZE {
                exception(ExceptionCode::IllegalDataAddress)
            } else {
                for (i, word) in words.iter().enumerate() {
                    bank.holding_registers[*addr as usize + i] = *word;
                }
                writes.push(WriteEffect {
                    table: Table::HoldingRegister,
                    index: *addr,
                    count: words.len() as u16,
                });
                respond(ModbusPdu::WriteMultipleRegistersResponse {
                    addr: *addr,
                    quantity: words.len() as u16,
                })
            }
        }
        // requests only reach here through decode(Request); response PDUs and
        // exceptions cannot occur, but answer defensively rather than panic
        _ => exception(ExceptionCode::IllegalFunction),
    };

    ServeOutcome { response, writes, stale_view }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qx100_0_maps_to_coil_800() {
        let addr: LadderAddress = "%QX100.0".parse().unwrap();
        assert_eq!(addr.to_modbus().unwrap(), (Table::Coil, 800));
    }

    #[test]
    fn ix100_7_maps_to_discrete_807() {
        let addr: LadderAddress = "%IX100.7".parse().unwrap();
        assert_eq!(addr.to_modbus().unwrap(), (Table::DiscreteInput, 807));
    }

    #[test]
    fn qx200_0_is_out_of_window() {
        assert!(matches!(
            "%QX200.0".parse::<LadderAddress>(),
            Err(PlcError::AddressOutOfRange(_))
        ));
        assert!(matches!(
            "%QX100.8".parse::<LadderAddress>(),
            Err(PlcError::BadAddress(_)) | Err(PlcError::AddressOutOfRange(_))
        ));
    }

    #[test]
    fn word_addresses_pass_through() {
        let addr: LadderAddress = "%QW10".parse().unwrap();
        assert_eq!(addr.to_modbus().unwrap(), (Table::HoldingRegister, 10));
        let addr: LadderAddress = "%IW102".parse().unwrap();
        assert_eq!(addr.to_modbus().unwrap(), (Table::InputRegister, 102));
    }

    #[test]
    fn serve_reads_coil_800_after_qx100_0_set() {
        let mut bank = RegisterBank::new();
        bank.set_bit(Table::Coil, 800, true).unwrap();
        let req = ModbusFrame::new(1, 1, ModbusPdu::ReadCoilsRequest { addr: 800, quantity: 1 });
        let out = serve_modbus(&mut bank, &req, None);
        match out.response.pdu {
            ModbusPdu::ReadCoilsResponse { bits } => assert!(bits[0]),
            other => panic!("{other:?}"),
        }
        assert!(out.writes.is_empty());
    }

    #[test]
    fn out_of_range_write_yields_illegal_address() {
        let mut bank = RegisterBank::new();
        let req = ModbusFrame::new(2, 1, ModbusPdu::WriteSingleCoil { addr: 9999, on: true });
        let out = serve_modbus(&mut bank, &req, None);
        assert_eq!(
            out.response.pdu,
            ModbusPdu::Exception { function: 5, code: ExceptionCode::IllegalDataAddress }
        );
    }

    #[test]
    fn write_then_read_round_trips() {
        let mut bank = RegisterBank::new();
        let write =
            ModbusFrame::new(3, 1, ModbusPdu::WriteSingleRegister { addr: 10, value: 12800 });
        let out = serve_modbus(&mut bank, &write, None);
        assert_eq!(out.writes.len(), 1);
        let read = ModbusFrame::new(
            4,
            1,
            ModbusPdu::ReadHoldingRegistersRequest { addr: 10, quantity: 1 },
        );
        let out = serve_modbus(&mut bank, &read, None);
        match out.response.pdu {
            ModbusPdu::ReadHoldingRegistersResponse { words } => assert_eq!(words, [12800]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn view_override_freezes_reads_but_not_writes() {
        let mut bank = RegisterBank::new();
        bank.set_word(Table::InputRegister, 100, 111).unwrap();
        let snap = ViewOverride { snapshot: bank.clone() };
        bank.set_word(Table::InputRegister, 100, 222).unwrap();

        let read = ModbusFrame::new(
            5,
            1,
            ModbusPdu::ReadInputRegistersRequest { addr: 100, quantity: 1 },
        );
        let out = serve_modbus(&mut bank, &read, Some(&snap));
        assert!(out.stale_view);
        match out.response.pdu {
            ModbusPdu::ReadInputRegistersResponse { words } => assert_eq!(words, [111]),
            other => panic!("{other:?}"),
        }
        let out = serve_modbus(&mut bank, &read, None);
        match out.response.pdu {
            ModbusPdu::ReadInputRegistersResponse { words } => assert_eq!(words, [222]),
            other => panic!("{other:?}"),
        }
    }
}

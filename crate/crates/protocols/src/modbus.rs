//! Modbus TCP codec.
//!
//! A frame is the MBAP header (transaction id, protocol id, length, unit id)
//! followed by one PDU. Requests and responses share function codes but use
//! different body layouts, so decoding needs the [`PduDirection`] the bytes
//! travelled in.

use thiserror::Error;

/// Largest quantity of coils/discrete inputs in one read request.
pub const MAX_READ_BITS: u16 = 2000;
/// Largest quantity of registers in one read request.
pub const MAX_READ_WORDS: u16 = 125;
/// Largest quantity of coils in one write-multiple request.
pub const MAX_WRITE_BITS: u16 = 1968;
/// Largest quantity of registers in one write-multiple request.
pub const MAX_WRITE_WORDS: u16 = 123;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModbusError {
    #[error("frame truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("protocol id must be 0, got {0}")]
    BadProtocolId(u16),
    #[error("MBAP length {declared} does not match PDU length {actual}")]
    LengthMismatch { declared: u16, actual: u16 },
    #[error("unsupported function code {0}")]
    UnsupportedFunction(u8),
    #[error("quantity {quantity} out of range 1..={max} for function {function}")]
    QuantityOutOfRange { function: u8, quantity: u16, max: u16 },
    #[error("byte count {byte_count} inconsistent with quantity {quantity}")]
    ByteCountMismatch { byte_count: u8, quantity: u16 },
    #[error("single-coil value must be 0x0000 or 0xFF00, got {0:#06x}")]
    InvalidCoilValue(u16),
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error("exception code {0} is reserved or unknown")]
    UnknownExceptionCode(u8),
    #[error("exception frames only occur in responses")]
    ExceptionInRequest,
    #[error("response bit payload must be a whole number of bytes")]
    RaggedBitPayload,
    #[error("payload of {0} values exceeds what one frame can carry")]
    Oversized(usize),
    #[error("empty value list")]
    EmptyValues,
}

/// Whether bytes are interpreted as a client request or a server response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PduDirection {
    Request,
    Response,
}

/// Standard exception codes used by the simulated servers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[repr(u8)]
pub enum ExceptionCode {
    IllegalFunction = 0x01,
    IllegalDataAddress = 0x02,
    IllegalDataValue = 0x03,
    ServerDeviceFailure = 0x04,
}

impl ExceptionCode {
    pub fn from_u8(code: u8) -> Result<Self, ModbusError> {
        match code {
            0x01 => Ok(Self::IllegalFunction),
            0x02 => Ok(Self::IllegalDataAddress),
            0x03 => Ok(Self::IllegalDataValue),
            0x04 => Ok(Self::ServerDeviceFailure),
            other => Err(ModbusError::UnknownExceptionCode(other)),
        }
    }
}

/// One protocol data unit. Read/write-multiple operations distinguish the
/// request and response layouts; single writes echo the request byte-for-byte
/// so one variant serves both directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModbusPdu {
    ReadCoilsRequest { addr: u16, quantity: u16 },
    /// Bit payloads come back padded to whole bytes, so `bits.len() % 8 == 0`.
    ReadCoilsResponse { bits: Vec<bool> },
    ReadDiscreteInputsRequest { addr: u16, quantity: u16 },
    ReadDiscreteInputsResponse { bits: Vec<bool> },
    ReadHoldingRegistersRequest { addr: u16, quantity: u16 },
    ReadHoldingRegistersResponse { words: Vec<u16> },
    ReadInputRegistersRequest { addr: u16, quantity: u16 },
    ReadInputRegistersResponse { words: Vec<u16> },
    WriteSingleCoil { addr: u16, on: bool },
    WriteSingleRegister { addr: u16, value: u16 },
    WriteMultipleCoilsRequest { addr: u16, bits: Vec<bool> },
    WriteMultipleCoilsResponse { addr: u16, quantity: u16 },
    WriteMultipleRegistersRequest { addr: u16, words: Vec<u16> },
    WriteMultipleRegistersResponse { addr: u16, quantity: u16 },
    /// `function` is the original (unmasked) code the exception answers.
    Exception { function: u8, code: ExceptionCode },
}

impl ModbusPdu {
    /// Function code as it appears on the wire (exception bit applied).
    pub fn function_code(&self) -> u8 {
        match self {
            Self::ReadCoilsRequest { .. } | Self::ReadCoilsResponse { .. } => 1,
            Self::ReadDiscreteInputsRequest { .. } | Self::ReadDiscreteInputsResponse { .. } => 2,
            Self::ReadHoldingRegistersRequest { .. }
            | Self::ReadHoldingRegistersResponse { .. } => 3,
            Self::ReadInputRegistersRequest { .. } | Self::ReadInputRegistersResponse { .. } => 4,
            Self::WriteSingleCoil { .. } => 5,
            Self::WriteSingleRegister { .. } => 6,
            Self::WriteMultipleCoilsRequest { .. } | Self::WriteMultipleCoilsResponse { .. } => 15,
            Self::WriteMultipleRegistersRequest { .. }
            | Self::WriteMultipleRegistersResponse { .. } => 16,
            Self::Exception { function, .. } => function | 0x80,
        }
    }

    /// Natural direction of this PDU; single writes are valid in both.
    pub fn direction(&self) -> PduDirection {
        match self {
            Self::ReadCoilsRequest { .. }
            | Self::ReadDiscreteInputsRequest { .. }
            | Self::ReadHoldingRegistersRequest { .. }
            | Self::ReadInputRegistersRequest { .. }
            | Self::WriteMultipleCoilsRequest { .. }
            | Self::WriteMultipleRegistersRequest { .. }
            | Self::WriteSingleCoil { .. }
            | Self::WriteSingleRegister { .. } => PduDirection::Request,
            _ => PduDirection::Response,
        }
    }

    pub fn is_write(&self) -> bool {
        matches!(
            self,
            Self::WriteSingleCoil { .. }
                | Self::WriteSingleRegister { .. }
                | Self::WriteMultipleCoilsRequest { .. }
                | Self::WriteMultipleRegistersRequest { .. }
        )
    }
}

/// A complete Modbus TCP application data unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModbusFrame {
    pub txn_id: u16,
    pub unit_id: u8,
    pub pdu: ModbusPdu,
}

impl ModbusFrame {
    pub fn new(txn_id: u16, unit_id: u8, pdu: ModbusPdu) -> Self {
        Self { txn_id, unit_id, pdu }
    }

    /// Builds the exception response answering this frame.
    pub fn exception_reply(&self, code: ExceptionCode) -> ModbusFrame {
        ModbusFrame {
            txn_id: self.txn_id,
            unit_id: self.unit_id,
            pdu: ModbusPdu::Exception { function: self.pdu.function_code() & 0x7F, code },
        }
    }
}

fn pack_bits(bits: &[bool], out: &mut Vec<u8>) {
    let mut byte = 0u8;
    for (i, &b) in bits.iter().enumerate() {
        if b {
            byte |= 1 << (i % 8);
        }
        if i % 8 == 7 {
            out.push(byte);
            byte = 0;
        }
    }
    if bits.len() % 8 != 0 {
        out.push(byte);
    }
}

fn unpack_bits(bytes: &[u8], count: usize) -> Vec<bool> {
    (0..count).map(|i| bytes[i / 8] & (1 << (i % 8)) != 0).collect()
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_be_bytes());
}

/// Encodes a frame into its canonical byte form.
pub fn encode(frame: &ModbusFrame) -> Result<Vec<u8>, ModbusError> {
    let mut pdu = Vec::with_capacity(8);
    pdu.push(frame.pdu.function_code());
    match &frame.pdu {
        ModbusPdu::ReadCoilsRequest { addr, quantity }
        | ModbusPdu::ReadDiscreteInputsRequest { addr, quantity } => {
            check_quantity(frame.pdu.function_code(), *quantity, MAX_READ_BITS)?;
            put_u16(&mut pdu, *addr);
            put_u16(&mut pdu, *quantity);
        }
        ModbusPdu::ReadHoldingRegistersRequest { addr, quantity }
        | ModbusPdu::ReadInputRegistersRequest { addr, quantity } => {
            check_quantity(frame.pdu.function_code(), *quantity, MAX_READ_WORDS)?;
            put_u16(&mut pdu, *addr);
            put_u16(&mut pdu, *quantity);
        }
        ModbusPdu::ReadCoilsResponse { bits } | ModbusPdu::ReadDiscreteInputsResponse { bits } => {
            if bits.is_empty() {
                return Err(ModbusError::EmptyValues);
            }
            if bits.len() % 8 != 0 {
                return Err(ModbusError::RaggedBitPayload);
            }
            if bits.len() / 8 > 250 {
                return Err(ModbusError::Oversized(bits.len()));
            }
            pdu.push((bits.len() / 8) as u8);
            pack_bits(bits, &mut pdu);
        }
        ModbusPdu::ReadHoldingRegistersResponse { words }
        | ModbusPdu::ReadInputRegistersResponse { words } => {
            if words.is_empty() {
                return Err(ModbusError::EmptyValues);
            }
            if words.len() > MAX_READ_WORDS as usize {
                return Err(ModbusError::Oversized(words.len()));
            }
            pdu.push((words.len() * 2) as u8);
            for w in words {
                put_u16(&mut pdu, *w);
            }
        }
        ModbusPdu::WriteSingleCoil { addr, on } => {
            put_u16(&mut pdu, *addr);
            put_u16(&mut pdu, if *on { 0xFF00 } else { 0x0000 });
        }
        ModbusPdu::WriteSingleRegister { addr, value } => {
            put_u16(&mut pdu, *addr);
            put_u16(&mut pdu, *value);
        }
        ModbusPdu::WriteMultipleCoilsRequest { addr, bits } => {
            let quantity = bits.len() as u16;
            if bits.is_empty() {
                return Err(ModbusError::EmptyValues);
            }
            if bits.len() > MAX_WRITE_BITS as usize {
                return Err(ModbusError::Oversized(bits.len()));
            }
            put_u16(&mut pdu, *addr);
            put_u16(&mut pdu, quantity);
            pdu.push(bits.len().div_ceil(8) as u8);
            pack_bits(bits, &mut pdu);
        }
        ModbusPdu::WriteMultipleCoilsResponse { addr, quantity } => {
            check_quantity(15, *quantity, MAX_WRITE_BITS)?;
            put_u16(&mut pdu, *addr);
            put_u16(&mut pdu, *quantity);
        }
        ModbusPdu::WriteMultipleRegistersRequest { addr, words } => {
            if words.is_empty() {
                return Err(ModbusError::EmptyValues);
            }
            if words.len() > MAX_WRITE_WORDS as usize {
                return Err(ModbusError::Oversized(words.len()));
            }
            put_u16(&mut pdu, *addr);
            put_u16(&mut pdu, words.len() as u16);
            pdu.push((words.len() * 2) as u8);
            for w in words {
                put_u16(&mut pdu, *w);
            }
        }
        ModbusPdu::WriteMultipleRegistersResponse { addr, quantity } => {
            check_quantity(16, *quantity, MAX_WRITE_WORDS)?;
            put_u16(&mut pdu, *addr);
            put_u16(&mut pdu, *quantity);
        }
        ModbusPdu::Exception { code, .. } => {
            pdu.push(*code as u8);
        }
    }

    let mut out = Vec::with_capacity(6 + 1 + pdu.len());
    put_u16(&mut out, frame.txn_id);
    put_u16(&mut out, 0); // protocol id
    put_u16(&mut out, (1 + pdu.len()) as u16);
    out.push(frame.unit_id);
    out.extend_from_slice(&pdu);
    Ok(out)
}

fn check_quantity(function: u8, quantity: u16, max: u16) -> Result<(), ModbusError> {
    if quantity == 0 || quantity > max {
        return Err(ModbusError::QuantityOutOfRange { function: function & 0x7F, quantity, max });
    }
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn need(&self, n: usize) -> Result<(), ModbusError> {
        if self.buf.len() - self.pos < n {
            return Err(ModbusError::Truncated { need: self.pos + n, have: self.buf.len() });
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8, ModbusError> {
        self.need(1)?;
        let v = self.buf[self.pos];
        self.pos += 1;
        Ok(v)
    }

    fn u16(&mut self) -> Result<u16, ModbusError> {
        self.need(2)?;
        let v = u16::from_be_bytes([self.buf[self.pos], self.buf[self.pos + 1]]);
        self.pos += 2;
        Ok(v)
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8], ModbusError> {
        self.need(n)?;
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Decodes exactly one frame; trailing bytes are an error.
pub fn decode(bytes: &[u8], direction: PduDirection) -> Result<ModbusFrame, ModbusError> {
    let mut r = Reader::new(bytes);
    let txn_id = r.u16()?;
    let protocol_id = r.u16()?;
    if protocol_id != 0 {
        return Err(ModbusError::BadProtocolId(protocol_id));
    }
    let length = r.u16()?;
    if length as usize != r.remaining() {
        return Err(ModbusError::LengthMismatch {
            declared: length,
            actual: r.remaining() as u16,
        });
    }
    if length < 2 {
        return Err(ModbusError::Truncated { need: 8, have: bytes.len() });
    }
    let unit_id = r.u8()?;
    let function = r.u8()?;

    let pdu = if function & 0x80 != 0 {
        if direction == PduDirection::Request {
            return Err(ModbusError::ExceptionInRequest);
        }
        let code = ExceptionCode::from_u8(r.u8()?)?;
        let original = function & 0x7F;
        if !matches!(original, 1 | 2 | 3 | 4 | 5 | 6 | 15 | 16) {
            return Err(ModbusError::UnsupportedFunction(function));
        }
        ModbusPdu::Exception { function: original, code }
    } else {
        match (function, direction) {
            (1 | 2, PduDirection::Request) => {
                let addr = r.u16()?;
                let quantity = r.u16()?;
                check_quantity(function, quantity, MAX_READ_BITS)?;
                if function == 1 {
                    ModbusPdu::ReadCoilsRequest { addr, quantity }
                } else {
                    ModbusPdu::ReadDiscreteInputsRequest { addr, quantity }
                }
            }
            (1 | 2, PduDirection::Response) => {
                let byte_count = r.u8()?;
                if byte_count == 0 || byte_count > 250 {
                    return Err(ModbusError::ByteCountMismatch { byte_count, quantity: 0 });
                }
                let data = r.bytes(byte_count as usize)?;
                let bits = unpack_bits(data, byte_count as usize * 8);
                if function == 1 {
                    ModbusPdu::ReadCoilsResponse { bits }
                } else {
                    ModbusPdu::ReadDiscreteInputsResponse { bits }
                }
            }
            (3 | 4, PduDirection::Request) => {
                let addr = r.u16()?;
                let quantity = r.u16()?;
                check_quantity(function, quantity, MAX_READ_WORDS)?;
                if function == 3 {
                    ModbusPdu::ReadHoldingRegistersRequest { addr, quantity }
                } else {
                    ModbusPdu::ReadInputRegistersRequest { addr, quantity }
                }
            }
            (3 | 4, PduDirection::Response) => {
                let byte_count = r.u8()?;
                if byte_count == 0 || byte_count % 2 != 0 || byte_count > 250 {
                    return Err(ModbusError::ByteCountMismatch { byte_count, quantity: 0 });
                }
                let data = r.bytes(byte_count as usize)?;
                let words =
                    data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
                if function == 3 {
                    ModbusPdu::ReadHoldingRegistersResponse { words }
                } else {
                    ModbusPdu::ReadInputRegistersResponse { words }
                }
            }
            (5, _) => {
                let addr = r.u16()?;
                let value = r.u16()?;
                let on = match value {
                    0xFF00 => true,
                    0x0000 => false,
                    other => return Err(ModbusError::InvalidCoilValue(other)),
                };
                ModbusPdu::WriteSingleCoil { addr, on }
            }
            (6, _) => {
                let addr = r.u16()?;
                let value = r.u16()?;
                ModbusPdu::WriteSingleRegister { addr, value }
            }
            (15, PduDirection::Request) => {
                let addr = r.u16()?;
                let quantity = r.u16()?;
                check_quantity(15, quantity, MAX_WRITE_BITS)?;
                let byte_count = r.u8()?;
                if byte_count as usize != (quantity as usize).div_ceil(8) {
                    return Err(ModbusError::ByteCountMismatch { byte_count, quantity });
                }
                let data = r.bytes(byte_count as usize)?;
                ModbusPdu::WriteMultipleCoilsRequest {
                    addr,
                    bits: unpack_bits(data, quantity as usize),
                }
            }
            (15, PduDirection::Response) => {
                let addr = r.u16()?;
                let quantity = r.u16()?;
                check_quantity(15, quantity, MAX_WRITE_BITS)?;
                ModbusPdu::WriteMultipleCoilsResponse { addr, quantity }
            }
            (16, PduDirection::Request) => {
                let addr = r.u16()?;
                let quantity = r.u16()?;
                check_quantity(16, quantity, MAX_WRITE_WORDS)?;
                let byte_count = r.u8()?;
                if byte_count as usize != quantity as usize * 2 {
                    return Err(ModbusError::ByteCountMismatch { byte_count, quantity });
                }
                let data = r.bytes(byte_count as usize)?;
                let words =
                    data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
                ModbusPdu::WriteMultipleRegistersRequest { addr, words }
            }
            (16, PduDirection::Response) => {
                let addr = r.u16()?;
                let quantity = r.u16()?;
                check_quantity(16, quantity, MAX_WRITE_WORDS)?;
                ModbusPdu::WriteMultipleRegistersResponse { addr, quantity }
            }
            (other, _) => return Err(ModbusError::UnsupportedFunction(other)),
        }
    };

    if r.remaining() != 0 {
        return Err(ModbusError::TrailingBytes(r.remaining()));
    }
    Ok(ModbusFrame { txn_id, unit_id, pdu })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_single_coil_wire_form() {
        let frame = ModbusFrame::new(1, 1, ModbusPdu::WriteSingleCoil { addr: 0, on: true });
        let bytes = encode(&frame).unwrap();
        assert_eq!(
            bytes,
            [0x00, 0x01, 0x00, 0x00, 0x00, 0x06, 0x01, 0x05, 0x00, 0x00, 0xFF, 0x00]
        );
        assert_eq!(decode(&bytes, PduDirection::Request).unwrap(), frame);
    }

    #[test]
    fn read_holding_registers_wire_form() {
        let frame = ModbusFrame::new(
            2,
            1,
            ModbusPdu::ReadHoldingRegistersRequest { addr: 100, quantity: 2 },
        );
        let bytes = encode(&frame).unwrap();
        assert_eq!(
            bytes,
            [0x00, 0x02, 0x00, 0x00, 0x00, 0x06, 0x01, 0x03, 0x00, 0x64, 0x00, 0x02]
        );
        assert_eq!(decode(&bytes, PduDirection::Request).unwrap(), frame);
    }

    #[test]
    fn exception_round_trip() {
        let frame = ModbusFrame::new(
            7,
            3,
            ModbusPdu::Exception { function: 5, code: ExceptionCode::IllegalDataAddress },
        );
        let bytes = encode(&frame).unwrap();
        assert_eq!(&bytes[7..], [0x85, 0x02]);
        assert_eq!(decode(&bytes, PduDirection::Response).unwrap(), frame);
        assert_eq!(decode(&bytes, PduDirection::Request), Err(ModbusError::ExceptionInRequest));
    }

    #[test]
    fn length_mismatch_rejected() {
        let frame = ModbusFrame::new(9, 1, ModbusPdu::WriteSingleRegister { addr: 4, value: 10 });
        let mut bytes = encode(&frame).unwrap();
        bytes[5] = 0x09; // declared length now wrong
        assert!(matches!(
            decode(&bytes, PduDirection::Request),
            Err(ModbusError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn quantity_bounds_enforced() {
        let frame = ModbusFrame::new(
            1,
            1,
            ModbusPdu::ReadHoldingRegistersRequest { addr: 0, quantity: 126 },
        );
        assert!(matches!(encode(&frame), Err(ModbusError::QuantityOutOfRange { .. })));
    }

    #[test]
    fn bad_coil_value_rejected() {
        // 0x1234 is neither ON nor OFF
        let bytes = [0x00, 0x01, 0x00, 0x00, 0x00, 0x06, 0x01, 0x05, 0x00, 0x00, 0x12, 0x34];
        assert_eq!(
            decode(&bytes, PduDirection::Request),
            Err(ModbusError::InvalidCoilValue(0x1234))
        );
    }

    #[test]
    fn bit_packing_is_lsb_first() {
        let frame = ModbusFrame::new(
            1,
            1,
            ModbusPdu::WriteMultipleCoilsRequest {
                addr: 0,
                bits: vec![true, false, true, true, false, false, true, true, true, false],
            },
        );
        let bytes = encode(&frame).unwrap();
        // 10 coils -> byte count 2, first byte 0b1100_1101 = 0xCD, second 0b01 = 0x01
        assert_eq!(&bytes[12..], [0x02, 0xCD, 0x01]);
        let back = decode(&bytes, PduDirection::Request).unwrap();
        assert_eq!(back, frame);
    }
}

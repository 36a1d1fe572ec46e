//! Wire-accurate protocol support for the simulated plant floor.
//!
//! Two protocol families are implemented:
//!
//! * Modbus TCP ([`modbus`]): the MBAP header plus a PDU subset covering
//!   coil/register reads and writes (functions 1, 2, 3, 4, 5, 6, 15, 16)
//!   and exception responses.
//! * MQTT 3.1.1 ([`mqtt`]): CONNECT/CONNACK, PUBLISH (QoS 0 and 1), PUBACK,
//!   SUBSCRIBE/SUBACK, PINGREQ/PINGRESP and DISCONNECT, plus `+`/`#` topic
//!   filter matching. [`broker`] provides a minimal in-memory broker that
//!   fans published messages out to matching subscriptions.
//!
//! Both codecs are total: any byte string either decodes into a frame or
//! returns a structured error. Encoding is canonical, so
//! `encode(decode(encode(f))) == encode(f)` for every valid frame `f`.

pub mod broker;
pub mod modbus;
pub mod mqtt;

pub use broker::{Broker, BrokerError, SessionId};
pub use modbus::{ExceptionCode, ModbusError, ModbusFrame, ModbusPdu, PduDirection};
pub use mqtt::{MqttError, MqttPacket};

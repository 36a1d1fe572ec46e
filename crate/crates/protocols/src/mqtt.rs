//! MQTT 3.1.1 codec for the control-packet subset the testbed speaks.
//!
//! QoS is limited to 0 and 1. Topic names and filters follow the 3.1.1
//! rules: `+` matches exactly one level, `#` matches any remaining levels
//! and must be the final level of a filter.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MqttError {
    #[error("packet truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("unknown packet type {0}")]
    UnknownPacketType(u8),
    #[error("fixed-header flags {flags:#x} invalid for packet type {packet_type}")]
    BadFlags { packet_type: u8, flags: u8 },
    #[error("malformed remaining length")]
    BadRemainingLength,
    #[error("remaining length {declared} does not match body of {actual} bytes")]
    RemainingLengthMismatch { declared: usize, actual: usize },
    #[error("QoS {0} not supported (only 0 and 1)")]
    UnsupportedQos(u8),
    #[error("string is not valid UTF-8")]
    BadUtf8,
    #[error("topic '{0}' is not a valid topic name")]
    BadTopic(String),
    #[error("filter '{0}' is not a valid topic filter")]
    BadFilter(String),
    #[error("packet id required for QoS 1 and must be non-zero")]
    MissingPacketId,
    #[error("packet id not allowed for QoS 0")]
    UnexpectedPacketId,
    #[error("unsupported protocol name or level")]
    BadProtocolHeader,
    #[error("SUBSCRIBE must carry at least one filter")]
    EmptySubscribe,
    #[error("{0} trailing bytes after packet")]
    TrailingBytes(usize),
}

/// Control packets of the supported subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MqttPacket {
    Connect { client_id: String, keep_alive_s: u16, clean_session: bool },
    ConnAck { session_present: bool, return_code: u8 },
    Publish {
        dup: bool,
        qos: u8,
        retain: bool,
        topic: String,
        packet_id: Option<u16>,
        payload: Vec<u8>,
    },
    PubAck { packet_id: u16 },
    Subscribe { packet_id: u16, filters: Vec<(String, u8)> },
    SubAck { packet_id: u16, return_codes: Vec<u8> },
    PingReq,
    PingResp,
    Disconnect,
}

impl MqttPacket {
    pub fn packet_type(&self) -> u8 {
        match self {
            Self::Connect { .. } => 1,
            Self::ConnAck { .. } => 2,
            Self::Publish { .. } => 3,
            Self::PubAck { .. } => 4,
            Self::Subscribe { .. } => 8,
            Self::SubAck { .. } => 9,
            Self::PingReq => 12,
            Self::PingResp => 13,
            Self::Disconnect => 14,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Self::Connect { .. } => "CONNECT",
            Self::ConnAck { .. } => "CONNACK",
            Self::Publish { .. } => "PUBLISH",
            Self::PubAck { .. } => "PUBACK",
            Self::Subscribe { .. } => "SUBSCRIBE",
            Self::SubAck { .. } => "SUBACK",
            Self::PingReq => "PINGREQ",
            Self::PingResp => "PINGRESP",
            Self::Disconnect => "DISCONNECT",
        }
    }
}

/// True when `topic` is a legal publish topic (no wildcards, non-empty).
pub fn valid_topic(topic: &str) -> bool {
    !topic.is_empty() && !topic.contains(['+', '#']) && !topic.contains('\0')
}

/// True when `filter` is a legal subscription filter.
pub fn valid_filter(filter: &str) -> bool {
    if filter.is_empty() || filter.contains('\0') {
        return false;
    }
    let levels: Vec<&str> = filter.split('/').collect();
    for (i, level) in levels.iter().enumerate() {
        if level.contains('#') {
            if *level != "#" || i != levels.len() - 1 {
                return false;
            }
        }
        if level.contains('+') && *level != "+" {
            return false;
        }
    }
    true
}

/// Matches a topic name against a filter per the 3.1.1 rules.
pub fn topic_matches(filter: &str, topic: &str) -> bool {
    let mut f = filter.split('/');
    let mut t = topic.split('/');
    loop {
        match (f.next(), t.next()) {
            // a trailing "#" matches the rest, including the parent level itself
            (Some("#"), _) => return true,
            (Some("+"), Some(_)) => continue,
            (Some(fl), Some(tl)) if fl == tl => continue,
            (None, None) => return true,
            _ => return false,
        }
    }
}

fn encode_remaining_length(mut len: usize, out: &mut Vec<u8>) {
    loop {
        let mut byte = (len % 128) as u8;
        len /= 128;
        if len > 0 {
            byte |= 0x80;
        }
        out.push(byte);
        if len == 0 {
            break;
        }
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_be_bytes());
    out.extend_from_slice(s.as_bytes());
}

/// Encodes a packet into its canonical byte form.
pub fn encode(packet: &MqttPacket) -> Result<Vec<u8>, MqttError> {
    let mut body = Vec::new();
    let mut flags = 0u8;
    match packet {
        MqttPacket::Connect { client_id, keep_alive_s, clean_session } => {
            put_str(&mut body, "MQTT");
            body.push(0x04); // protocol level 3.1.1
            body.push(if *clean_session { 0x02 } else { 0x00 });
            body.extend_from_slice(&keep_alive_s.to_be_bytes());
            put_str(&mut body, client_id);
        }
        MqttPacket::ConnAck { session_present, return_code } => {
            body.push(u8::from(*session_present));
            body.push(*return_code);
        }
        MqttPacket::Publish { dup, qos, retain, topic, packet_id, payload } => {
            if *qos > 1 {
                return Err(MqttError::UnsupportedQos(*qos));
            }
            if !valid_topic(topic) {
                return Err(MqttError::BadTopic(topic.clone()));
            }
            match (qos, packet_id) {
                (0, Some(_)) => return Err(MqttError::UnexpectedPacketId),
                (1, None) | (1, Some(0)) => return Err(MqttError::MissingPacketId),
                _ => {}
            }
            flags = (u8::from(*dup) << 3) | (qos << 1) | u8::from(*retain);
            put_str(&mut body, topic);
            if let Some(id) = packet_id {
                body.extend_from_slice(&id.to_be_bytes());
            }
            body.extend_from_slice(payload);
        }
        MqttPacket::PubAck { packet_id } => {
            body.extend_from_slice(&packet_id.to_be_bytes());
        }
        MqttPacket::Subscribe { packet_id, filters } => {
            if filters.is_empty() {
                return Err(MqttError::EmptySubscribe);
            }
            flags = 0x02;
            body.extend_from_slice(&packet_id.to_be_bytes());
            for (filter, qos) in filters {
                if *qos > 1 {
                    return Err(MqttError::UnsupportedQos(*qos));
                }
                if !valid_filter(filter) {
                    return Err(MqttError::BadFilter(filter.clone()));
                }
                put_str(&mut body, filter);
                body.push(*qos);
            }
        }
        MqttPacket::SubAck { packet_id, return_codes } => {
            body.extend_from_slice(&packet_id.to_be_bytes());
            body.extend_from_slice(return_codes);
        }
        MqttPacket::PingReq | MqttPacket::PingResp | MqttPacket::Disconnect => {}
    }

    let mut out = Vec::with_capacity(2 + body.len());
    out.push((packet.packet_type() << 4) | flags);
    encode_remaining_length(body.len(), &mut out);
    out.extend_from_slice(&body);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn need(&self, n: usize) -> Result<(), MqttError> {
        if self.buf.len() - self.pos < n {
            return Err(MqttError::Truncated { need: self.pos + n, have: self.buf.len() });
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8, MqttError> {
        self.need(1)?;
        let v = self.buf[self.pos];
        self.pos += 1;
        Ok(v)
    }

    fn u16(&mut self) -> Result<u16, MqttError> {
        self.need(2)?;
        let v = u16::from_be_bytes([self.buf[self.pos], self.buf[self.pos + 1]]);
        self.pos += 2;
        Ok(v)
    }

    fn str(&mut self) -> Result<String, MqttError> {
        let len = self.u16()? as usize;
        self.need(len)?;
        let s = std::str::from_utf8(&self.buf[self.pos..self.pos + len])
            .map_err(|_| MqttError::BadUtf8)?;
        self.pos += len;
        Ok(s.to_owned())
    }

    fn rest(&mut self) -> Vec<u8> {
        let s = self.buf[self.pos..].to_vec();
        self.pos = self.buf.len();
        s
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

fn decode_remaining_length(bytes: &[u8], pos: &mut usize) -> Result<usize, MqttError> {
    let mut multiplier = 1usize;
    let mut value = 0usize;
    for _ in 0..4 {
        if *pos >= bytes.len() {
            return Err(MqttError::Truncated { need: *pos + 1, have: bytes.len() });
        }
        let byte = bytes[*pos];
        *pos += 1;
        value += (byte & 0x7F) as usize * multiplier;
        if byte & 0x80 == 0 {
            return Ok(value);
        }
        multiplier *= 128;
    }
    Err(MqttError::BadRemainingLength)
}

/// Decodes exactly one packet; trailing bytes are an error.
pub fn decode(bytes: &[u8]) -> Result<MqttPacket, MqttError> {
    if bytes.is_empty() {
        return Err(MqttError::Truncated { need: 2, have: 0 });
    }
    let first = bytes[0];
    let packet_type = first >> 4;
    let flags = first & 0x0F;
    let mut pos = 1;
    let remaining = decode_remaining_length(bytes, &mut pos)?;
    let actual = bytes.len() - pos;
    if remaining != actual {
        return Err(MqttError::RemainingLengthMismatch { declared: remaining, actual });
    }
    let mut r = Reader { buf: &bytes[pos..], pos: 0 };

    let packet = match packet_type {
        1 => {
            expect_flags(packet_type, flags, 0)?;
            let name = r.str()?;
            let level = r.u8()?;
            if name != "MQTT" || level != 0x04 {
                return Err(MqttError::BadProtocolHeader);
            }
            let connect_flags = r.u8()?;
            // will/user-name/password flags are outside the modelled subset
            if connect_flags & !0x02 != 0 {
                return Err(MqttError::BadProtocolHeader);
            }
            let keep_alive_s = r.u16()?;
            let client_id = r.str()?;
            MqttPacket::Connect {
                client_id,
                keep_alive_s,
                clean_session: connect_flags & 0x02 != 0,
            }
        }
        2 => {
            expect_flags(packet_type, flags, 0)?;
            let ack_flags = r.u8()?;
            if ack_flags & !0x01 != 0 {
                return Err(MqttError::BadProtocolHeader);
            }
            MqttPacket::ConnAck { session_present: ack_flags & 1 != 0, return_code: r.u8()? }
        }
        3 => {
            let dup = flags & 0x08 != 0;
            let qos = (flags >> 1) & 0x03;
            let retain = flags & 0x01 != 0;
            if qos > 1 {
                return Err(MqttError::UnsupportedQos(qos));
            }
            let topic = r.str()?;
            if !valid_topic(&topic) {
                return Err(MqttError::BadTopic(topic));
            }
            let packet_id = if qos == 1 {
                let id = r.u16()?;
                if id == 0 {
                    return Err(MqttError::MissingPacketId);
                }
                Some(id)
            } else {
                None
            };
            MqttPacket::Publish { dup, qos, retain, topic, packet_id, payload: r.rest() }
        }
        4 => {
            expect_flags(packet_type, flags, 0)?;
            MqttPacket::PubAck { packet_id: r.u16()? }
        }
        8 => {
            expect_flags(packet_type, flags, 0x02)?;
            let packet_id = r.u16()?;
            let mut filters = Vec::new();
            while r.remaining() > 0 {
                let filter = r.str()?;
                if !valid_filter(&filter) {
                    return Err(MqttError::BadFilter(filter));
                }
                let qos = r.u8()?;
                if qos > 1 {
                    return Err(MqttError::UnsupportedQos(qos));
                }
                filters.push((filter, qos));
            }
            if filters.is_empty() {
                return Err(MqttError::EmptySubscribe);
            }
            MqttPacket::Subscribe { packet_id, filters }
        }
        9 => {
            expect_flags(packet_type, flags, 0)?;
            let packet_id = r.u16()?;
            let return_codes = r.rest();
            MqttPacket::SubAck { packet_id, return_codes }
        }
        12 => {
            expect_flags(packet_type, flags, 0)?;
            MqttPacket::PingReq
        }
        13 => {
            expect_flags(packet_type, flags, 0)?;
            MqttPacket::PingResp
        }
        14 => {
            expect_flags(packet_type, flags, 0)?;
            MqttPacket::Disconnect
        }
        other => return Err(MqttError::UnknownPacketType(other)),
    };

    if r.remaining() != 0 {
        return Err(MqttError::TrailingBytes(r.remaining()));
    }
    Ok(packet)
}

fn expect_flags(packet_type: u8, flags: u8, want: u8) -> Result<(), MqttError> {
    if flags != want {
        return Err(MqttError::BadFlags { packet_type, flags });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ping_wire_forms() {
        assert_eq!(encode(&MqttPacket::PingReq).unwrap(), [0xC0, 0x00]);
        assert_eq!(encode(&MqttPacket::PingResp).unwrap(), [0xD0, 0x00]);
        assert_eq!(decode(&[0xC0, 0x00]).unwrap(), MqttPacket::PingReq);
        assert_eq!(decode(&[0xD0, 0x00]).unwrap(), MqttPacket::PingResp);
    }

    #[test]
    fn publish_qos0_wire_form() {
        let p = MqttPacket::Publish {
            dup: false,
            qos: 0,
            retain: false,
            topic: "factory/sorter/weight".into(),
            packet_id: None,
            payload: b"7.42".to_vec(),
        };
        let bytes = encode(&p).unwrap();
        assert_eq!(bytes[0], 0x30);
        // remaining length = 2 (topic length prefix) + 21 (topic) + 4 (payload)
        assert_eq!(bytes[1], 27);
        assert_eq!(decode(&bytes).unwrap(), p);
    }

    #[test]
    fn qos1_requires_packet_id() {
        let p = MqttPacket::Publish {
            dup: false,
            qos: 1,
            retain: false,
            topic: "a/b".into(),
            packet_id: None,
            payload: vec![],
        };
        assert_eq!(encode(&p), Err(MqttError::MissingPacketId));

        let p = MqttPacket::Publish {
            dup: false,
            qos: 0,
            retain: false,
            topic: "a/b".into(),
            packet_id: Some(3),
            payload: vec![],
        };
        assert_eq!(encode(&p), Err(MqttError::UnexpectedPacketId));
    }

    #[test]
    fn connect_round_trip() {
        let p = MqttPacket::Connect {
            client_id: "gw1".into(),
            keep_alive_s: 60,
            clean_session: true,
        };
        let bytes = encode(&p).unwrap();
        assert_eq!(decode(&bytes).unwrap(), p);
    }

    #[test]
    fn remaining_length_multi_byte() {
        let p = MqttPacket::Publish {
            dup: false,
            qos: 0,
            retain: false,
            topic: "t".into(),
            packet_id: None,
            payload: vec![0xAB; 300],
        };
        let bytes = encode(&p).unwrap();
        // 303 = 0xAF 0x02 as a varint
        assert_eq!(&bytes[1..3], [0xAF, 0x02]);
        assert_eq!(decode(&bytes).unwrap(), p);
    }

    #[test]
    fn filter_validation() {
        assert!(valid_filter("factory/+/status"));
        assert!(valid_filter("factory/#"));
        assert!(valid_filter("#"));
        assert!(!valid_filter("factory/#/more"));
        assert!(!valid_filter("factory/a+b"));
        assert!(!valid_filter(""));
        assert!(valid_topic("factory/line1/status"));
        assert!(!valid_topic("factory/+/status"));
    }

    #[test]
    fn topic_matching() {
        assert!(topic_matches("plant/+/status", "plant/line1/status"));
        assert!(!topic_matches("plant/+/status", "plant/line1/mode"));
        assert!(topic_matches("plant/#", "plant/line1/status"));
        assert!(topic_matches("plant/#", "plant"));
        assert!(!topic_matches("plant/+", "plant/a/b"));
        assert!(topic_matches("#", "anything/at/all"));
    }

    #[test]
    fn truncated_and_mismatched_lengths() {
        assert!(matches!(decode(&[0x30]), Err(MqttError::Truncated { .. })));
        assert!(matches!(
            decode(&[0x30, 0x05, 0x00]),
            Err(MqttError::RemainingLengthMismatch { .. })
        ));
    }
}

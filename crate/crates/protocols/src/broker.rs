//! Minimal MQTT broker state machine.
//!
//! The broker is transport-agnostic: the caller owns the connections and
//! feeds decoded packets in, tagged with an opaque session id. Each call
//! returns the packets the broker wants sent, as `(session, packet)` pairs
//! in a deterministic order (acks to the caller first, then fan-out in
//! ascending session-id order).

use std::collections::BTreeMap;

use thiserror::Error;

use crate::mqtt::{topic_matches, MqttPacket};

pub type SessionId = u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BrokerError {
    #[error("session {0}: packet before CONNECT")]
    NotConnected(SessionId),
    #[error("session {0}: duplicate CONNECT")]
    DuplicateConnect(SessionId),
    #[error("session {session}: client may not send {packet}")]
    ClientSent { session: SessionId, packet: &'static str },
}

#[derive(Debug, Default, Clone)]
struct Session {
    client_id: String,
    /// filter -> granted QoS
    subscriptions: BTreeMap<String, u8>,
    next_packet_id: u16,
}

impl Session {
    fn allocate_packet_id(&mut self) -> u16 {
        self.next_packet_id = self.next_packet_id.wrapping_add(1);
        if self.next_packet_id == 0 {
            self.next_packet_id = 1;
        }
        self.next_packet_id
    }
}

/// Broker state: live sessions and retained messages.
#[derive(Debug, Default)]
pub struct Broker {
    sessions: BTreeMap<SessionId, Session>,
    retained: BTreeMap<String, Vec<u8>>,
}

impl Broker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    pub fn client_id(&self, session: SessionId) -> Option<&str> {
        self.sessions.get(&session).map(|s| s.client_id.as_str())
    }

    /// All topics currently holding a retained message.
    pub fn retained_topics(&self) -> impl Iterator<Item = &str> {
        self.retained.keys().map(String::as_str)
    }

    /// Removes a session without a DISCONNECT (transport closed underneath).
    pub fn drop_session(&mut self, session: SessionId) {
        self.sessions.remove(&session);
    }

    /// Processes one inbound packet.
    ///
    /// On a protocol violation the offending session is terminated and the
    /// error returned; the broker itself stays consistent.
    pub fn handle(
        &mut self,
        session: SessionId,
        packet: MqttPacket,
    ) -> Result<Vec<(SessionId, MqttPacket)>, BrokerError> {
        match packet {
            MqttPacket::Connect { client_id, clean_session, .. } => {
                if self.sessions.contains_key(&session) {
                    self.sessions.remove(&session);
                    return Err(BrokerError::DuplicateConnect(session));
                }
                let _ = clean_session; // persistent sessions are not modelled
                self.sessions.insert(
                    session,
                    Session { client_id, subscriptions: BTreeMap::new(), next_packet_id: 0 },
                );
                Ok(vec![(
                    session,
                    MqttPacket::ConnAck { session_present: false, return_code: 0 },
                )])
            }
            MqttPacket::Subscribe { packet_id, filters } => {
                self.require_connected(session)?;
                let mut out = Vec::new();
                let mut return_codes = Vec::with_capacity(filters.len());
                for (filter, qos) in &filters {
                    self.sessions
                        .get_mut(&session)
                        .expect("checked connected")
                        .subscriptions
                        .insert(filter.clone(), *qos);
                    return_codes.push(*qos);
                }
                out.push((session, MqttPacket::SubAck { packet_id, return_codes }));
                // replay retained messages matching the new filters, once each
                for (topic, payload) in &self.retained {
                    if filters.iter().any(|(f, _)| topic_matches(f, topic)) {
                        out.push((
                            session,
                            MqttPacket::Publish {
                                dup: false,
                                qos: 0,
                                retain: true,
                                topic: topic.clone(),
                                packet_id: None,
                                payload: payload.clone(),
                            },
                        ));
                    }
                }
                Ok(out)
            }
            MqttPacket::Publish { qos, retain, topic, packet_id, payload, .. } => {
                self.require_connected(session)?;
                let mut out = Vec::new();
                if qos == 1 {
                    out.push((
                        session,
                        MqttPacket::PubAck { packet_id: packet_id.expect("qos1 decoded with id") },
                    ));
                }
                if retain {
                    if payload.is_empty() {
                        self.retained.remove(&topic);
                    } else {
                        self.retained.insert(topic.clone(), payload.clone());
                    }
                }
                // fan out once per matching session at min(pub, sub) QoS
                let targets: Vec<(SessionId, u8)> = self
                    .sessions
                    .iter()
                    .filter(|(id, _)| **id != session || self.self_delivery(&topic, session))
                    .filter_map(|(id, s)| {
                        s.subscriptions
                            .iter()
                            .filter(|(f, _)| topic_matches(f, &topic))
                            .map(|(_, sub_qos)| qos.min(*sub_qos))
                            .max()
                            .map(|q| (*id, q))
                    })
                    .collect();
                for (target, fwd_qos) in targets {
                    let fwd_id = if fwd_qos == 1 {
                        Some(self.sessions.get_mut(&target).expect("target exists").allocate_packet_id())
                    } else {
                        None
                    };
                    out.push((
                        target,
                        MqttPacket::Publish {
                            dup: false,
                            qos: fwd_qos,
                            retain: false,
                            topic: topic.clone(),
                            packet_id: fwd_id,
                            payload: payload.clone(),
                        },
                    ));
                }
                Ok(out)
            }
            MqttPacket::PubAck { .. } => {
                self.require_connected(session)?;
                Ok(vec![])
            }
            MqttPacket::PingReq => {
                self.require_connected(session)?;
                Ok(vec![(session, MqttPacket::PingResp)])
            }
            MqttPacket::Disconnect => {
                self.require_connected(session)?;
                self.sessions.remove(&session);
                Ok(vec![])
            }
            other @ (MqttPacket::ConnAck { .. }
            | MqttPacket::SubAck { .. }
            | MqttPacket::PingResp) => {
                self.sessions.remove(&session);
                Err(BrokerError::ClientSent { session, packet: other.type_name() })
            }
        }
    }

    // MQTT brokers do loop a publish back to the publisher when it subscribes
    // to its own topic.
    fn self_delivery(&self, topic: &str, session: SessionId) -> bool {
        self.sessions
            .get(&session)
            .map(|s| s.subscriptions.keys().any(|f| topic_matches(f, topic)))
            .unwrap_or(false)
    }

    fn require_connected(&self, session: SessionId) -> Result<(), BrokerError> {
        if !self.sessions.contains_key(&session) {
            return Err(BrokerError::NotConnected(session));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn connect(broker: &mut Broker, session: SessionId, id: &str) {
        let out = broker
            .handle(
                session,
                MqttPacket::Connect {
                    client_id: id.into(),
                    keep_alive_s: 60,
                    clean_session: true,
                },
            )
            .unwrap();
        assert_eq!(out.len(), 1);
    }

    fn subscribe(broker: &mut Broker, session: SessionId, filter: &str) -> Vec<(SessionId, MqttPacket)> {
        broker
            .handle(
                session,
                MqttPacket::Subscribe { packet_id: 1, filters: vec![(filter.into(), 0)] },
            )
            .unwrap()
    }

    fn publish(topic: &str, payload: &[u8]) -> MqttPacket {
        MqttPacket::Publish {
            dup: false,
            qos: 0,
            retain: false,
            topic: topic.into(),
            packet_id: None,
            payload: payload.to_vec(),
        }
    }

    #[test]
    fn wildcard_fanout() {
        let mut broker = Broker::new();
        connect(&mut broker, 1, "a");
        connect(&mut broker, 2, "b");
        subscribe(&mut broker, 1, "plant/+/status");

        let out = broker.handle(2, publish("plant/line1/status", b"up")).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0, 1);
        match &out[0].1 {
            MqttPacket::Publish { topic, payload, .. } => {
                assert_eq!(topic, "plant/line1/status");
                assert_eq!(payload, b"up");
            }
            other => panic!("expected PUBLISH, got {other:?}"),
        }
    }

    #[test]
    fn publish_without_subscribers_is_silent() {
        let mut broker = Broker::new();
        connect(&mut broker, 1, "a");
        let out = broker.handle(1, publish("nobody/listens", b"x")).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn publish_before_connect_is_a_violation() {
        let mut broker = Broker::new();
        let err = broker.handle(9, publish("t", b"x")).unwrap_err();
        assert_eq!(err, BrokerError::NotConnected(9));
    }

    #[test]
    fn overlapping_filters_deliver_once() {
        let mut broker = Broker::new();
        connect(&mut broker, 1, "a");
        connect(&mut broker, 2, "b");
        subscribe(&mut broker, 1, "plant/#");
        subscribe(&mut broker, 1, "plant/+/status");
        let out = broker.handle(2, publish("plant/line1/status", b"up")).unwrap();
        assert_eq!(out.len(), 1, "one delivery despite two matching filters");
    }

    #[test]
    fn retained_replayed_on_subscribe() {
        let mut broker = Broker::new();
        connect(&mut broker, 1, "pub");
        let retained = MqttPacket::Publish {
            dup: false,
            qos: 0,
            retain: true,
            topic: "factory/sorter/status".into(),
            packet_id: None,
            payload: b"run".to_vec(),
        };
        broker.handle(1, retained).unwrap();

        connect(&mut broker, 2, "sub");
        let out = subscribe(&mut broker, 2, "factory/#");
        assert_eq!(out.len(), 2); // SUBACK + retained replay
        assert!(matches!(out[1].1, MqttPacket::Publish { retain: true, .. }));
    }

    #[test]
    fn qos1_publish_gets_puback_and_forwards() {
        let mut broker = Broker::new();
        connect(&mut broker, 1, "pub");
        connect(&mut broker, 2, "sub");
        broker
            .handle(2, MqttPacket::Subscribe { packet_id: 7, filters: vec![("c/#".into(), 1)] })
            .unwrap();
        let out = broker
            .handle(
                1,
                MqttPacket::Publish {
                    dup: false,
                    qos: 1,
                    retain: false,
                    topic: "c/d".into(),
                    packet_id: Some(42),
                    payload: b"v".to_vec(),
                },
            )
            .unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0], (1, MqttPacket::PubAck { packet_id: 42 }));
        assert!(matches!(out[1].1, MqttPacket::Publish { qos: 1, packet_id: Some(_), .. }));
    }
}

//! Industrial-side event handlers: the PLC poll/scan pipeline, twin physics
//! ticks, HMI and historian polling, the MQTT broker, and the IIoT gateway.

use simpleics_protocols::modbus::{self, ModbusFrame, ModbusPdu, PduDirection};
use simpleics_protocols::mqtt::{self, MqttPacket};

use crate::kernel::MICROS_PER_MS;
use crate::net::Transport;
use crate::plc::{Table, ViewOverride};
use crate::telemetry::{BenignKind, Cause};
use crate::twins::OpEvent;

use super::{
    AppData, EventKind, Payload, SessionPurpose, SessionState, World, WorldError,
    POLL_BIT_BASE, POLL_BIT_COUNT, POLL_WORD_BASE, POLL_WORD_COUNT, VIEW_OVERRIDE_REGISTER,
};

fn protocol_cause() -> Cause {
    Cause::Benign(BenignKind::Protocol)
}

fn encode_frame(frame: &ModbusFrame) -> Payload {
    Payload::Bytes(modbus::encode(frame).expect("internally built frames are valid"))
}

impl World {
    // -----------------------------------------------------------------
    // PLC scan cycle: read twin inputs, run the ladder, write actuators
    // -----------------------------------------------------------------

    pub(super) fn on_plc_scan(&mut self, plc_id: &str) -> Result<(), WorldError> {
        let (host, twin_host, scan_ms, bits_txn, words_txn) = {
            let unit = self.plcs.get_mut(plc_id).expect("plc exists");
            unit.generation += 1;
            unit.next_txn = unit.next_txn.wrapping_add(1);
            let bits_txn = unit.next_txn;
            unit.next_txn = unit.next_txn.wrapping_add(1);
            let words_txn = unit.next_txn;
            unit.awaiting_bits = Some(bits_txn);
            unit.awaiting_words = Some(words_txn);
            let twin_host = self.addr_to_host[&unit.twin_addr].clone();
            (unit.host.clone(), twin_host, unit.scan_ms, bits_txn, words_txn)
        };

        let key = self.persistent_session(&host, &twin_host, 502, SessionPurpose::PlcPoll {
            plc: plc_id.to_owned(),
        });
        let read_bits = ModbusFrame::new(
            bits_txn,
            1,
            ModbusPdu::ReadDiscreteInputsRequest { addr: POLL_BIT_BASE, quantity: POLL_BIT_COUNT },
        );
        self.send_to_responder(key, encode_frame(&read_bits), AppData::ModbusRequest, protocol_cause())?;
        let read_words = ModbusFrame::new(
            words_txn,
            1,
            ModbusPdu::ReadInputRegistersRequest {
                addr: POLL_WORD_BASE,
                quantity: POLL_WORD_COUNT,
            },
        );
        self.send_to_responder(key, encode_frame(&read_words), AppData::ModbusRequest, protocol_cause())?;

        self.queue
            .schedule_in(scan_ms * MICROS_PER_MS, EventKind::PlcScan { plc: plc_id.to_owned() })?;
        Ok(())
    }

    fn on_plc_poll_response(&mut self, plc_id: &str, frame: ModbusFrame) -> Result<(), WorldError> {
        let ready = {
            let unit = self.plcs.get_mut(plc_id).expect("plc exists");
            match &frame.pdu {
                ModbusPdu::ReadDiscreteInputsResponse { bits }
                    if unit.awaiting_bits == Some(frame.txn_id) =>
                {
                    for (i, bit) in bits.iter().take(POLL_BIT_COUNT as usize).enumerate() {
                        unit.bank
                            .set_bit(Table::DiscreteInput, POLL_BIT_BASE + i as u16, *bit)
                            .expect("in range");
                    }
                    unit.awaiting_bits = None;
                }
                ModbusPdu::ReadInputRegistersResponse { words }
                    if unit.awaiting_words == Some(frame.txn_id) =>
                {
                    for (i, word) in words.iter().take(POLL_WORD_COUNT as usize).enumerate() {
                        unit.bank
                            .set_word(Table::InputRegister, POLL_WORD_BASE + i as u16, *word)
                            .expect("in range");
                    }
                    unit.awaiting_words = None;
                }
                ModbusPdu::Exception { .. } => {
                    unit.awaiting_bits = None;
                    unit.awaiting_words = None;
                }
                _ => {} // stale generation: drop silently
            }
            unit.awaiting_bits.is_none() && unit.awaiting_words.is_none()
        };
        if !ready {
            return Ok(());
        }

        // both halves of the image arrived: execute one scan and push the
        // actuator coils back to the twin
        let (host, twin_host, write_txn, coils, overflow_new) = {
            let unit = self.plcs.get_mut(plc_id).expect("plc exists");
            let report = unit.runtime.scan(&mut unit.bank, unit.scan_ms);
            let overflow_new = report.overflow_raised && !unit.overflow_reported;
            if overflow_new {
                unit.overflow_reported = true;
            }
            unit.next_txn = unit.next_txn.wrapping_add(1);
            let coils: Vec<bool> = (0..POLL_BIT_COUNT)
                .map(|i| unit.bank.coils[(POLL_BIT_BASE + i) as usize])
                .collect();
            let twin_host = self.addr_to_host[&unit.twin_addr].clone();
            (unit.host.clone(), twin_host, unit.next_txn, coils, overflow_new)
        };
        if overflow_new {
            let segment = self.hosts[&host].segment;
            self.emit_operational(
                &host.clone(),
                segment,
                format!("plc.{plc_id}.overflow"),
                1.0,
                &Cause::Benign(BenignKind::Protocol),
            )?;
        }

        let key = self.persistent_session(&host, &twin_host, 502, SessionPurpose::PlcWrite {
            plc: plc_id.to_owned(),
        });
        let write = ModbusFrame::new(
            write_txn,
            1,
            ModbusPdu::WriteMultipleCoilsRequest { addr: POLL_BIT_BASE, bits: coils },
        );
        self.send_to_responder(key, encode_frame(&write), AppData::ModbusRequest, protocol_cause())?;
        Ok(())
    }

    /// Opens-or-reuses the long-lived session between two hosts for one
    /// purpose. Polling loops must not mint a session per transaction.
    fn persistent_session(
        &mut self,
        initiator: &str,
        responder: &str,
        port: u16,
        purpose: SessionPurpose,
    ) -> crate::net::SessionKey {
        let found = self
            .sessions
            .values()
            .find(|s| {
                s.initiator == initiator
                    && s.responder == responder
                    && s.key.service_port == port
                    && s.purpose == purpose
            })
            .map(|s| s.key);
        match found {
            Some(key) => key,
            None => self.open_session(
                &initiator.to_owned(),
                &responder.to_owned(),
                Transport::Tcp,
                port,
                purpose,
            ),
        }
    }

    // -----------------------------------------------------------------
    // twins
    // -----------------------------------------------------------------

    pub(super) fn on_twin_tick(&mut self, twin_id: &str) -> Result<(), WorldError> {
        let (host, segment, prefix, tick_ms, events) = {
            let unit = self.twins.get_mut(twin_id).expect("twin exists");
            let events = match &mut unit.scene {
                super::SceneKind::Production(s) => s.tick(unit.tick_ms),
                super::SceneKind::Sorter(s) => s.tick(unit.tick_ms),
            };
            let segment = self.hosts[&unit.host].segment;
            (unit.host.clone(), segment, unit.scene.historian_prefix(), unit.tick_ms, events)
        };
        let cause = Cause::Benign(BenignKind::Physics);
        for event in events {
            match event {
                OpEvent::Sample { tag, value } => {
                    self.emit_operational(&host, segment, format!("{prefix}.{tag}"), value, &cause)?;
                }
                OpEvent::Fault { .. } => {
                    self.emit_operational(&host, segment, format!("{prefix}.fault"), 1.0, &cause)?;
                }
            }
        }
        self.queue
            .schedule_in(tick_ms * MICROS_PER_MS, EventKind::TwinTick { twin: twin_id.to_owned() })?;
        Ok(())
    }

    // -----------------------------------------------------------------
    // HMI / historian / gateway pollers
    // -----------------------------------------------------------------

    pub(super) fn on_hmi_poll(&mut self, hmi_id: &str) -> Result<(), WorldError> {
        let (host, plc_host, poll_ms, txn_a, txn_b) = {
            let hmi = self.hmis.get_mut(hmi_id).expect("hmi exists");
            hmi.next_txn = hmi.next_txn.wrapping_add(2);
            let plc_host = self.addr_to_host[&hmi.plc_addr].clone();
            (hmi.host.clone(), plc_host, hmi.poll_ms, hmi.next_txn - 1, hmi.next_txn)
        };
        let key = self.persistent_session(&host, &plc_host, 502, SessionPurpose::HmiPoll {
            hmi: hmi_id.to_owned(),
        });
        let coils = ModbusFrame::new(
            txn_a,
            1,
            ModbusPdu::ReadCoilsRequest { addr: POLL_BIT_BASE, quantity: 16 },
        );
        self.send_to_responder(key, encode_frame(&coils), AppData::ModbusRequest, protocol_cause())?;
        let words = ModbusFrame::new(
            txn_b,
            1,
            ModbusPdu::ReadInputRegistersRequest { addr: POLL_WORD_BASE, quantity: POLL_WORD_COUNT },
        );
        self.send_to_responder(key, encode_frame(&words), AppData::ModbusRequest, protocol_cause())?;
        self.queue
            .schedule_in(poll_ms * MICROS_PER_MS, EventKind::HmiPoll { hmi: hmi_id.to_owned() })?;
        Ok(())
    }

    pub(super) fn on_historian_poll(&mut self, id: &str) -> Result<(), WorldError> {
        let (host, plc_host, poll_ms, txn) = {
            let historian = self.historians.get_mut(id).expect("historian exists");
            historian.next_txn = historian.next_txn.wrapping_add(1);
            let plc_host = self.addr_to_host[&historian.plc_addr].clone();
            (historian.host.clone(), plc_host, historian.poll_ms, historian.next_txn)
        };
        let key = self.persistent_session(&host, &plc_host, 502, SessionPurpose::HistorianPoll {
            historian: id.to_owned(),
        });
        let words = ModbusFrame::new(
            txn,
            1,
            ModbusPdu::ReadInputRegistersRequest { addr: POLL_WORD_BASE, quantity: POLL_WORD_COUNT },
        );
        self.send_to_responder(key, encode_frame(&words), AppData::ModbusRequest, protocol_cause())?;
        self.queue.schedule_in(
            poll_ms * MICROS_PER_MS,
            EventKind::HistorianPoll { historian: id.to_owned() },
        )?;
        Ok(())
    }

    pub(super) fn on_gateway_poll(&mut self, client_id: &str) -> Result<(), WorldError> {
        let Some((host, plc_host, poll_ms, txn)) = ({
            let client = self.mqtt_clients.get_mut(client_id).expect("client exists");
            client.gateway.as_ref().map(|gw| {
                client.next_txn = client.next_txn.wrapping_add(1);
                (
                    client.host.clone(),
                    self.addr_to_host[&gw.plc_addr].clone(),
                    gw.poll_ms,
                    client.next_txn,
                )
            })
        }) else {
            return Ok(());
        };
        let key = self.persistent_session(&host, &plc_host, 502, SessionPurpose::GatewayPoll {
            client: client_id.to_owned(),
        });
        let words = ModbusFrame::new(
            txn,
            1,
            ModbusPdu::ReadInputRegistersRequest { addr: POLL_WORD_BASE, quantity: POLL_WORD_COUNT },
        );
        self.send_to_responder(key, encode_frame(&words), AppData::ModbusRequest, protocol_cause())?;
        self.queue.schedule_in(
            poll_ms * MICROS_PER_MS,
            EventKind::GatewayPoll { client: client_id.to_owned() },
        )?;
        Ok(())
    }

    // -----------------------------------------------------------------
    // MQTT clients
    // -----------------------------------------------------------------

    pub(super) fn on_mqtt_connect(&mut self, client_id: &str) -> Result<(), WorldError> {
        let (host, keep_alive_s) = {
            let client = self.mqtt_clients.get(client_id).expect("client exists");
            (client.host.clone(), client.keep_alive_s)
        };
        let broker_host = self.broker.host.clone();
        let key = self.persistent_session(&host, &broker_host, 1883, SessionPurpose::MqttLink {
            client: client_id.to_owned(),
        });
        self.mqtt_clients.get_mut(client_id).expect("client exists").session = Some(key);
        let connect = MqttPacket::Connect {
            client_id: client_id.to_owned(),
            keep_alive_s,
            clean_session: true,
        };
        let bytes = mqtt::encode(&connect).expect("valid packet");
        self.send_to_responder(key, Payload::Bytes(bytes), AppData::Mqtt, protocol_cause())?;
        self.note_mqtt_sent(client_id);
        self.queue.schedule_in(
            keep_alive_s as u64 * 1_000_000,
            EventKind::MqttKeepAlive { client: client_id.to_owned() },
        )?;
        Ok(())
    }

    fn note_mqtt_sent(&mut self, client_id: &str) {
        let now = self.now();
        if let Some(client) = self.mqtt_clients.get_mut(client_id) {
            client.last_sent_at = now;
        }
    }

    pub(super) fn on_mqtt_publish(
        &mut self,
        client_id: &str,
        publish_idx: usize,
    ) -> Result<(), WorldError> {
        let (key, publish, payload_text) = {
            let client = self.mqtt_clients.get(client_id).expect("client exists");
            let Some(key) = client.session else {
                return Ok(()); // not connected yet; periodic schedule continues below
            };
            let publish = client.publishes[publish_idx].clone();
            let words = client.image_words;
            let text = match publish.source.as_str() {
                "weight_v" => format!("{:.2}", words[0] as f64 / crate::twins::COUNTS_PER_VOLT),
                "exit_counts" => format!("{},{},{}", words[1], words[2], words[3]),
                _ => if words[4] != 0 { "run".to_owned() } else { "stop".to_owned() },
            };
            (key, publish, text)
        };
        let packet = MqttPacket::Publish {
            dup: false,
            qos: 0,
            retain: publish.retain,
            topic: publish.topic.clone(),
            packet_id: None,
            payload: payload_text.into_bytes(),
        };
        let bytes = mqtt::encode(&packet).expect("valid packet");
        self.send_to_responder(key, Payload::Bytes(bytes), AppData::Mqtt, protocol_cause())?;
        self.note_mqtt_sent(client_id);
        self.queue.schedule_in(
            publish.interval_ms * MICROS_PER_MS,
            EventKind::MqttPublish { client: client_id.to_owned(), publish_idx },
        )?;
        Ok(())
    }

    pub(super) fn on_mqtt_keepalive(&mut self, client_id: &str) -> Result<(), WorldError> {
        let (key, keep_alive_us, idle) = {
            let client = self.mqtt_clients.get(client_id).expect("client exists");
            let keep_alive_us = client.keep_alive_s as u64 * 1_000_000;
            let idle = self.now().saturating_sub(client.last_sent_at) >= keep_alive_us;
            (client.session, keep_alive_us, idle)
        };
        if let (Some(key), true) = (key, idle) {
            let bytes = mqtt::encode(&MqttPacket::PingReq).expect("valid packet");
            self.send_to_responder(key, Payload::Bytes(bytes), AppData::Mqtt, protocol_cause())?;
            self.note_mqtt_sent(client_id);
        }
        self.queue.schedule_in(
            keep_alive_us,
            EventKind::MqttKeepAlive { client: client_id.to_owned() },
        )?;
        Ok(())
    }

    fn client_on_mqtt_inbound(
        &mut self,
        client_id: &str,
        packet: MqttPacket,
        cause: Cause,
    ) -> Result<(), WorldError> {
        match packet {
            MqttPacket::ConnAck { return_code: 0, .. } => {
                let (key, subs, packet_id) = {
                    let client = self.mqtt_clients.get_mut(client_id).expect("client exists");
                    client.connected = true;
                    client.next_packet_id = client.next_packet_id.wrapping_add(1).max(1);
                    (client.session, client.subscriptions.clone(), client.next_packet_id)
                };
                if let (Some(key), false) = (key, subs.is_empty()) {
                    let subscribe = MqttPacket::Subscribe {
                        packet_id,
                        filters: subs.into_iter().map(|f| (f, 0u8)).collect(),
                    };
                    let bytes = mqtt::encode(&subscribe).expect("valid packet");
                    self.send_to_responder(key, Payload::Bytes(bytes), AppData::Mqtt, protocol_cause())?;
                    self.note_mqtt_sent(client_id);
                }
            }
            MqttPacket::Publish { topic, payload, .. } => {
                self.gateway_handle_control(client_id, &topic, &payload, cause)?;
            }
            _ => {}
        }
        Ok(())
    }

    /// A gateway client translating a control topic into a local Modbus
    /// write against its PLC. The write inherits the cause of the inbound
    /// message, so attacker-published commands stay labelled end to end.
    fn gateway_handle_control(
        &mut self,
        client_id: &str,
        topic: &str,
        payload: &[u8],
        cause: Cause,
    ) -> Result<(), WorldError> {
        let Some((host, plc_host, txn)) = ({
            let client = self.mqtt_clients.get_mut(client_id).expect("client exists");
            match &client.gateway {
                Some(gw) if topic.starts_with("factory/sorter/cmd/") => {
                    client.next_txn = client.next_txn.wrapping_add(1);
                    Some((
                        client.host.clone(),
                        self.addr_to_host[&gw.plc_addr].clone(),
                        client.next_txn,
                    ))
                }
                _ => None,
            }
        }) else {
            return Ok(());
        };
        // payload form: "reg=<idx>,val=<value>"
        let text = String::from_utf8_lossy(payload);
        let mut reg = None;
        let mut val = None;
        for part in text.split(',') {
            if let Some(v) = part.strip_prefix("reg=") {
                reg = v.trim().parse::<u16>().ok();
            } else if let Some(v) = part.strip_prefix("val=") {
                val = v.trim().parse::<u16>().ok();
            }
        }
        let (Some(reg), Some(val)) = (reg, val) else {
            return Ok(());
        };
        let key = self.persistent_session(&host, &plc_host, 502, SessionPurpose::GatewayCommand {
            client: client_id.to_owned(),
        });
        let write =
            ModbusFrame::new(txn, 1, ModbusPdu::WriteSingleRegister { addr: reg, value: val });
        self.send_to_responder(key, encode_frame(&write), AppData::ModbusRequest, cause)?;
        Ok(())
    }

    // -----------------------------------------------------------------
    // server-side packet handling
    // -----------------------------------------------------------------

    pub(super) fn handle_request(
        &mut self,
        state: &SessionState,
        packet: super::Packet,
    ) -> Result<(), WorldError> {
        match &packet.app {
            AppData::ModbusRequest => self.serve_modbus_request(state, &packet),
            AppData::Mqtt => self.serve_mqtt_request(state, &packet),
            AppData::Mail(item) => {
                let item = item.clone();
                self.serve_mail(state, &packet, item)
            }
            AppData::HttpRequest { response_bytes } => {
                let bytes = *response_bytes;
                self.send_to_initiator(
                    packet.session,
                    Payload::Opaque(bytes),
                    AppData::HttpResponse,
                    packet.cause.clone(),
                )?;
                Ok(())
            }
            AppData::SmbAccess { share } => {
                let share = share.clone();
                self.emit_host_event(
                    &state.responder.clone(),
                    crate::hosts::EVENT_SHARE_ACCESS,
                    &[("share", share.as_str()), ("client", &packet.src.to_string())],
                    &packet.cause,
                )?;
                self.send_to_initiator(
                    packet.session,
                    Payload::Opaque(400),
                    AppData::Ack,
                    packet.cause.clone(),
                )?;
                Ok(())
            }
            AppData::AuthRequest { .. } => self.serve_auth(state, &packet),
            AppData::CredentialRotate { .. } => self.serve_credential_rotate(state, &packet),
            AppData::Probe => {
                self.send_to_initiator(
                    packet.session,
                    Payload::Opaque(64),
                    AppData::ProbeReply,
                    packet.cause.clone(),
                )?;
                Ok(())
            }
            AppData::Beacon { .. } => {
                self.send_to_initiator(
                    packet.session,
                    Payload::Opaque(120),
                    AppData::BeaconReply,
                    packet.cause.clone(),
                )?;
                Ok(())
            }
            AppData::None if state.purpose == SessionPurpose::Heartbeat => {
                // machine-account refresh against the domain controller
                let responder = state.responder.clone();
                let initiator = state.initiator.clone();
                let machine = format!("{initiator}$");
                self.emit_host_event(
                    &responder,
                    crate::hosts::EVENT_LOGON_SUCCESS,
                    &[("user", machine.as_str()), ("logon_type", "3")],
                    &packet.cause,
                )?;
                self.send_to_initiator(
                    packet.session,
                    Payload::Opaque(300),
                    AppData::Ack,
                    packet.cause.clone(),
                )?;
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn serve_modbus_request(
        &mut self,
        state: &SessionState,
        packet: &super::Packet,
    ) -> Result<(), WorldError> {
        let Payload::Bytes(bytes) = &packet.payload else {
            return Ok(());
        };
        let Ok(frame) = modbus::decode(bytes, PduDirection::Request) else {
            return Ok(()); // malformed bytes never answer
        };

        let responder = state.responder.clone();
        let plc_id = self.plcs.values().find(|p| p.host == responder).map(|p| p.id.clone());

        let (response, response_cause) = if let Some(plc_id) = plc_id {
            // the modelled firmware hook: writing the override register
            // freezes the served view at the current image
            if let ModbusPdu::WriteMultipleRegistersRequest { addr, words } = &frame.pdu {
                let covers = *addr <= VIEW_OVERRIDE_REGISTER
                    && (VIEW_OVERRIDE_REGISTER as usize) < *addr as usize + words.len();
                if covers {
                    if let Cause::Attack(attack) = &packet.cause {
                        let unit = self.plcs.get_mut(&plc_id).expect("plc exists");
                        unit.view_override =
                            Some((ViewOverride { snapshot: unit.bank.clone() }, attack.clone()));
                    }
                }
            }
            let unit = self.plcs.get_mut(&plc_id).expect("plc exists");
            let overlay = unit.view_override.take();
            let out =
                crate::plc::serve_modbus(&mut unit.bank, &frame, overlay.as_ref().map(|(v, _)| v));
            let cause = if out.stale_view {
                Cause::Attack(overlay.as_ref().expect("stale implies override").1.clone())
            } else {
                packet.cause.clone()
            };
            unit.view_override = overlay;
            (out.response, cause)
        } else if let Some(twin_id) =
            self.twins.values().find(|t| t.host == responder).map(|t| t.id.clone())
        {
            let unit = self.twins.get_mut(&twin_id).expect("twin exists");
            let out = crate::plc::serve_modbus(unit.scene.bank_mut(), &frame, None);
            (out.response, packet.cause.clone())
        } else {
            return Ok(()); // a scanned host with 502 closed never reaches here
        };

        let bytes = modbus::encode(&response).expect("server responses are valid");
        self.send_to_initiator(
            packet.session,
            Payload::Bytes(bytes),
            AppData::ModbusResponse,
            response_cause,
        )?;
        Ok(())
    }

    fn serve_mqtt_request(
        &mut self,
        state: &SessionState,
        packet: &super::Packet,
    ) -> Result<(), WorldError> {
        let Payload::Bytes(bytes) = &packet.payload else {
            return Ok(());
        };
        let Ok(control) = mqtt::decode(bytes) else {
            return Ok(());
        };
        let key = packet.session;
        let session_id = match self.broker.by_key.get(&key) {
            Some(id) => *id,
            None => {
                let id = self.broker.next_session_id;
                self.broker.next_session_id += 1;
                self.broker.by_key.insert(key, id);
                self.broker.by_id.insert(id, key);
                id
            }
        };
        let disconnecting = matches!(control, MqttPacket::Disconnect);
        let out = match self.broker.broker.handle(session_id, control) {
            Ok(out) => out,
            Err(_) => {
                // protocol violation: terminate the session
                self.broker.by_key.remove(&key);
                self.broker.by_id.remove(&session_id);
                return Ok(());
            }
        };
        if disconnecting {
            self.broker.by_key.remove(&key);
            self.broker.by_id.remove(&session_id);
        }
        for (target_id, out_packet) in out {
            let Some(target_key) = self.broker.by_id.get(&target_id).copied() else {
                continue;
            };
            let bytes = mqtt::encode(&out_packet).expect("broker emits valid packets");
            self.send_to_initiator(
                target_key,
                Payload::Bytes(bytes),
                AppData::Mqtt,
                packet.cause.clone(),
            )?;
        }
        let _ = state;
        Ok(())
    }

    // -----------------------------------------------------------------
    // client-side response routing
    // -----------------------------------------------------------------

    pub(super) fn handle_response(
        &mut self,
        state: &SessionState,
        packet: super::Packet,
    ) -> Result<(), WorldError> {
        match state.purpose.clone() {
            SessionPurpose::PlcPoll { plc } => {
                if let Payload::Bytes(bytes) = &packet.payload {
                    if let Ok(frame) = modbus::decode(bytes, PduDirection::Response) {
                        self.on_plc_poll_response(&plc, frame)?;
                    }
                }
                Ok(())
            }
            SessionPurpose::GatewayPoll { client } => {
                if let Payload::Bytes(bytes) = &packet.payload {
                    if let Ok(frame) = modbus::decode(bytes, PduDirection::Response) {
                        if let ModbusPdu::ReadInputRegistersResponse { words } = frame.pdu {
                            let unit = self.mqtt_clients.get_mut(&client).expect("client exists");
                            for (i, w) in
                                words.iter().take(POLL_WORD_COUNT as usize).enumerate()
                            {
                                unit.image_words[i] = *w;
                            }
                        }
                    }
                }
                Ok(())
            }
            SessionPurpose::MqttLink { client } => {
                if let Payload::Bytes(bytes) = &packet.payload {
                    if let Ok(control) = mqtt::decode(bytes) {
                        let cause = packet.cause.clone();
                        self.client_on_mqtt_inbound(&client, control, cause)?;
                    }
                }
                Ok(())
            }
            SessionPurpose::CampaignMqtt
            | SessionPurpose::CampaignModbus { .. }
            | SessionPurpose::CampaignProbe => {
                let Some(mut runner) = self.campaign.take() else {
                    return Ok(());
                };
                let result = runner.on_response(self, state, &packet);
                self.campaign = Some(runner);
                result
            }
            SessionPurpose::NpcTraffic
            | SessionPurpose::Heartbeat
            | SessionPurpose::MailDelivery
            | SessionPurpose::C2 { .. }
            | SessionPurpose::PlcWrite { .. }
            | SessionPurpose::HmiPoll { .. }
            | SessionPurpose::HmiCommand { .. }
            | SessionPurpose::HistorianPoll { .. }
            | SessionPurpose::GatewayCommand { .. } => Ok(()),
        }
    }
}

//! Codec properties: round-trip identity on valid frames, canonical form,
//! and totality (no panics) on arbitrary byte strings. The broker fan-out is
//! checked against a brute-force matcher over all active filters.

use proptest::collection::vec;
use proptest::prelude::*;

use simpleics_protocols::broker::Broker;
use simpleics_protocols::modbus::{self, ModbusFrame, ModbusPdu};
use simpleics_protocols::mqtt::{self, topic_matches, MqttPacket};

fn arb_bits(max: usize) -> impl Strategy<Value = Vec<bool>> {
    vec(any::<bool>(), 1..=max)
}

fn arb_padded_bits() -> impl Strategy<Value = Vec<bool>> {
    (1usize..=64).prop_flat_map(|bytes| vec(any::<bool>(), bytes * 8..=bytes * 8))
}

fn arb_words(max: usize) -> impl Strategy<Value = Vec<u16>> {
    vec(any::<u16>(), 1..=max)
}

prop_compose! {
    fn arb_modbus_pdu()(choice in 0u8..14) (
        choice in Just(choice),
        addr in any::<u16>(),
        read_bits_qty in 1u16..=2000,
        read_words_qty in 1u16..=125,
        write_bits_qty in 1u16..=1968,
        write_words_qty in 1u16..=123,
        bits in arb_bits(1968),
        padded in arb_padded_bits(),
        words in arb_words(123),
        on in any::<bool>(),
        value in any::<u16>(),
        exc_fn in prop::sample::select(vec![1u8, 2, 3, 4, 5, 6, 15, 16]),
        exc_code in 1u8..=4,
    ) -> ModbusPdu {
        use simpleics_protocols::modbus::ExceptionCode;
        match choice {
            0 => ModbusPdu::ReadCoilsRequest { addr, quantity: read_bits_qty },
            1 => ModbusPdu::ReadCoilsResponse { bits: padded.clone() },
            2 => ModbusPdu::ReadDiscreteInputsRequest { addr, quantity: read_bits_qty },
            3 => ModbusPdu::ReadDiscreteInputsResponse { bits: padded },
            4 => ModbusPdu::ReadHoldingRegistersRequest { addr, quantity: read_words_qty },
            5 => ModbusPdu::ReadHoldingRegistersResponse { words: words.clone() },
            6 => ModbusPdu::ReadInputRegistersRequest { addr, quantity: read_words_qty },
            7 => ModbusPdu::ReadInputRegistersResponse { words: words.clone() },
            8 => ModbusPdu::WriteSingleCoil { addr, on },
            9 => ModbusPdu::WriteSingleRegister { addr, value },
            10 => ModbusPdu::WriteMultipleCoilsRequest { addr, bits },
            11 => ModbusPdu::WriteMultipleCoilsResponse { addr, quantity: write_bits_qty },
            12 => ModbusPdu::WriteMultipleRegistersRequest { addr, words },
            13 => ModbusPdu::WriteMultipleRegistersResponse { addr, quantity: write_words_qty },
            _ => ModbusPdu::Exception {
                function: exc_fn,
                code: ExceptionCode::from_u8(exc_code).unwrap(),
            },
        }
    }
}

prop_compose! {
    fn arb_modbus_frame()(txn_id in any::<u16>(), unit_id in any::<u8>(), pdu in arb_modbus_pdu())
        -> ModbusFrame {
        ModbusFrame { txn_id, unit_id, pdu }
    }
}

fn arb_topic() -> impl Strategy<Value = String> {
    vec("[a-z0-9]{1,8}", 1..=4).prop_map(|levels| levels.join("/"))
}

fn arb_filter() -> impl Strategy<Value = String> {
    vec(
        prop_oneof![4 => "[a-z0-9]{1,8}".boxed(), 1 => Just("+".to_string()).boxed()],
        1..=4,
    )
    .prop_flat_map(|levels| {
        any::<bool>().prop_map(move |hash| {
            let mut l = levels.clone();
            if hash {
                l.push("#".to_string());
            }
            l.join("/")
        })
    })
}

prop_compose! {
    fn arb_mqtt_packet()(choice in 0u8..9) (
        choice in Just(choice),
        client_id in "[a-z0-9]{1,16}",
        keep_alive in any::<u16>(),
        clean in any::<bool>(),
        session_present in any::<bool>(),
        return_code in 0u8..6,
        dup in any::<bool>(),
        qos in 0u8..=1,
        retain in any::<bool>(),
        topic in arb_topic(),
        packet_id in 1u16..=u16::MAX,
        payload in vec(any::<u8>(), 0..256),
        filters in vec((arb_filter(), 0u8..=1), 1..=4),
        return_codes in vec(0u8..=1, 1..=4),
    ) -> MqttPacket {
        match choice {
            0 => MqttPacket::Connect { client_id, keep_alive_s: keep_alive, clean_session: clean },
            1 => MqttPacket::ConnAck { session_present, return_code },
            2 => MqttPacket::Publish {
                dup,
                qos,
                retain,
                topic,
                packet_id: if qos == 1 { Some(packet_id) } else { None },
                payload,
            },
            3 => MqttPacket::PubAck { packet_id },
            4 => MqttPacket::Subscribe { packet_id, filters },
            5 => MqttPacket::SubAck { packet_id, return_codes },
            6 => MqttPacket::PingReq,
            7 => MqttPacket::PingResp,
            _ => MqttPacket::Disconnect,
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 512, ..ProptestConfig::default() })]

    #[test]
    fn modbus_round_trip(frame in arb_modbus_frame()) {
        let bytes = modbus::encode(&frame).unwrap();
        let back = modbus::decode(&bytes, frame.pdu.direction()).unwrap();
        prop_assert_eq!(&back, &frame);
        // canonical form
        prop_assert_eq!(modbus::encode(&back).unwrap(), bytes);
    }

    #[test]
    fn modbus_decode_never_panics(bytes in vec(any::<u8>(), 0..64)) {
        let _ = modbus::decode(&bytes, simpleics_protocols::PduDirection::Request);
        let _ = modbus::decode(&bytes, simpleics_protocols::PduDirection::Response);
    }

    #[test]
    fn mqtt_round_trip(packet in arb_mqtt_packet()) {
        let bytes = mqtt::encode(&packet).unwrap();
        let back = mqtt::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &packet);
        prop_assert_eq!(mqtt::encode(&back).unwrap(), bytes);
    }

    #[test]
    fn mqtt_decode_never_panics(bytes in vec(any::<u8>(), 0..64)) {
        let _ = mqtt::decode(&bytes);
    }

    #[test]
    fn broker_fanout_matches_brute_force(
        subs in vec((0u64..6, arb_filter()), 0..10),
        topic in arb_topic(),
    ) {
        let mut broker = Broker::new();
        for session in 0..6u64 {
            broker.handle(session, MqttPacket::Connect {
                client_id: format!("c{session}"),
                keep_alive_s: 0,
                clean_session: true,
            }).unwrap();
        }
        for (session, filter) in &subs {
            broker.handle(*session, MqttPacket::Subscribe {
                packet_id: 1,
                filters: vec![(filter.clone(), 0)],
            }).unwrap();
        }

        let publisher = 7u64;
        broker.handle(publisher, MqttPacket::Connect {
            client_id: "pub".into(),
            keep_alive_s: 0,
            clean_session: true,
        }).unwrap();
        let out = broker.handle(publisher, MqttPacket::Publish {
            dup: false,
            qos: 0,
            retain: false,
            topic: topic.clone(),
            packet_id: None,
            payload: b"x".to_vec(),
        }).unwrap();

        let mut delivered: Vec<u64> = out.iter().map(|(s, _)| *s).collect();
        delivered.sort_unstable();
        delivered.dedup();

        // brute force: a session receives the publish iff any of its filters match
        let mut expected: Vec<u64> = (0..6u64)
            .filter(|s| {
                subs.iter().any(|(ss, f)| ss == s && topic_matches(f, &topic))
            })
            .collect();
        expected.sort_unstable();

        prop_assert_eq!(delivered.clone(), expected, "fan-out for topic {}", topic);
        // exactly-once: no session appears twice in the output
        prop_assert_eq!(delivered.len(), out.len());
    }
}

use blecte::dataset_io::{
    parse_conversion_dictionary, parse_gt_file, parse_signal_file, read_packet_store, reassemble, write_packet_store,
    write_signal_file, Chunk, CtePacket, GtSchema, IqPair, ParseError, SignalSchema, MAX_CTE_SAMPLES,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn packet(idx: u64, seed: i16) -> CtePacket {
    let samples = (0..MAX_CTE_SAMPLES)
        .map(|k| IqPair::new(seed.wrapping_mul(7).wrapping_add(k as i16), -(k as i16)))
        .collect();
    CtePacket::complete(idx, 100.0 + idx as f64 * 0.1, -55 - idx as i32, (idx % 37) as u8, samples)
}

#[test]
fn sixteen_entries_make_one_packet() {
    let p = packet(3, 1);
    let chunks = p.to_chunks(1e-4);
    assert_eq!(chunks.len(), 16);
    assert_eq!(chunks.iter().map(|c| c.offset).collect::<Vec<_>>(), (0..16).map(|k| k * 32).collect::<Vec<_>>());
    assert_eq!(chunks.last().unwrap().samples.len(), 31);
    assert_eq!(chunks.iter().map(|c| c.samples.len()).sum::<usize>(), 511);

    let mut file = Vec::new();
    write_signal_file(&chunks, &SignalSchema::default(), &mut file).unwrap();
    let parsed = parse_signal_file(&file, &SignalSchema::default()).unwrap();
    let out = reassemble(&parsed).unwrap();
    assert_eq!(out, vec![p]);
}

#[test]
fn payload_fields_pass_through() {
    let entry = json!({
        "metadata": {"source": "uart0"},
        "payload": {
            "timestamp": 12.5, "idx": 7, "offset": 32, "rss": -61, "channel": 13,
            "samples": (0..32).map(|k| json!({"i": k, "q": -k})).collect::<Vec<_>>(),
        }
    });
    let chunks = parse_signal_file(entry.to_string().as_bytes(), &SignalSchema::default()).unwrap();
    assert_eq!(chunks.len(), 1);
    let c = &chunks[0];
    assert_eq!((c.idx, c.offset, c.rss, c.channel, c.samples.len()), (7, 32, -61, 13, 32));
    assert_eq!(c.samples[5], IqPair::new(5, -5));
}

#[test]
fn shuffled_log_reassembles_byte_identically() {
    let packets: Vec<CtePacket> = (0..10).map(|i| packet(i, i as i16)).collect();
    let mut reference = Vec::new();
    write_packet_store(&packets, &mut reference).unwrap();
    let mut chunks: Vec<Chunk> = packets.iter().flat_map(|p| p.to_chunks(1e-4)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        chunks.shuffle(&mut rng);
        let mut file = Vec::new();
        write_signal_file(&chunks, &SignalSchema::default(), &mut file).unwrap();
        let out = reassemble(&parse_signal_file(&file, &SignalSchema::default()).unwrap()).unwrap();
        let mut bytes = Vec::new();
        write_packet_store(&out, &mut bytes).unwrap();
        assert_eq!(bytes, reference);
    }
}

#[test]
fn lost_chunks_leave_flagged_packet() {
    let p = packet(9, 2);
    let mut chunks = p.to_chunks(1e-4);
    chunks.remove(4);
    let out = reassemble(&chunks).unwrap();
    assert_eq!(out.len(), 1);
    assert!(!out[0].complete);
    assert_eq!(out[0].gaps, vec![[128, 160]]);
    // the store keeps incomplete packets
    let mut bytes = Vec::new();
    write_packet_store(&out, &mut bytes).unwrap();
    assert_eq!(read_packet_store(bytes.as_slice()).unwrap(), out);
}

#[test]
fn conversion_dictionary_is_sorted() {
    let dict = br#"{"b_run": ["s2.json", "g2.json"], "a_run": {"signal": "s1.json", "gt": "g1.json", "height_mm": 800, "obstacles": true}}"#;
    let entries = parse_conversion_dictionary(dict).unwrap();
    assert_eq!(entries[0].name, "a_run");
    assert_eq!(entries[0].height_mm, Some(800.0));
    assert_eq!(entries[1].gt.to_str(), Some("g2.json"));
}

fn arb_packet(idx: u64) -> impl Strategy<Value = CtePacket> {
    (
        proptest::collection::vec((any::<i16>(), any::<i16>()), MAX_CTE_SAMPLES),
        -100i32..-20,
        0u8..37,
        0.0f64..1e6,
    )
        .prop_map(move |(s, rss, ch, ts)| {
            let samples = s.into_iter().map(|(i, q)| IqPair::new(i, q)).collect();
            CtePacket::complete(idx, ts, rss, ch, samples)
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn serialize_parse_roundtrip(a in arb_packet(0), b in arb_packet(1), seed in any::<u64>()) {
        let mut chunks: Vec<Chunk> = [&a, &b].iter().flat_map(|p| p.to_chunks(1e-4)).collect();
        chunks.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut file = Vec::new();
        write_signal_file(&chunks, &SignalSchema::default(), &mut file).unwrap();
        let parsed = parse_signal_file(&file, &SignalSchema::default()).unwrap();
        let mut out = reassemble(&parsed).unwrap();
        out.sort_by_key(|p| p.idx);
        prop_assert_eq!(out, vec![a, b]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 512, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn arbitrary_bytes_give_typed_errors(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        if let Err(e) = parse_signal_file(&bytes, &SignalSchema::default()) {
            prop_assert!(!e.kind().is_empty());
        }
        let _ = parse_gt_file(&bytes, &GtSchema::default());
        let _ = parse_conversion_dictionary(&bytes);
        let _ = read_packet_store(bytes.as_slice());
    }

    #[test]
    fn json_shaped_garbage_is_rejected(v in json_value()) {
        let text = v.to_string();
        if let Err(e) = parse_signal_file(text.as_bytes(), &SignalSchema::default()) {
            let malformed = matches!(e, ParseError::MalformedJson { .. });
            prop_assert!(!malformed);
        }
        if let Err(e) = parse_gt_file(text.as_bytes(), &GtSchema::default()) {
            let malformed = matches!(e, ParseError::MalformedJson { .. });
            prop_assert!(!malformed);
        }
    }
}

fn json_value() -> impl Strategy<Value = serde_json::Value> {
    let leaf = prop_oneof![
        Just(serde_json::Value::Null),
        any::<bool>().prop_map(serde_json::Value::from),
        any::<i32>().prop_map(serde_json::Value::from),
        (-1e6f64..1e6).prop_map(serde_json::Value::from),
        "[a-z]{0,6}".prop_map(serde_json::Value::from),
    ];
    leaf.prop_recursive(4, 32, 6, |inner| {
        prop_oneof![
            proptest::collection::vec(inner.clone(), 0..6).prop_map(serde_json::Value::from),
            proptest::collection::btree_map(
                prop_oneof![
                    Just("payload".to_string()),
                    Just("idx".to_string()),
                    Just("offset".to_string()),
                    Just("samples".to_string()),
                    Just("timestamp".to_string()),
                    Just("position".to_string()),
                    "[a-z]{1,4}"
                ],
                inner,
                0..5
            )
            .prop_map(|m| serde_json::Value::Object(m.into_iter().collect())),
        ]
    })
}

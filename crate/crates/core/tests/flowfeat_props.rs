use gadscan::flowfeat::{featurize, ingest_reader, to_batch, Direction, FlowRecord, Packet, Strictness};
use proptest::prelude::*;

fn flow(packets: Vec<(u32, bool)>) -> FlowRecord {
    FlowRecord {
        flow_id: "f".into(),
        packets: packets
            .into_iter()
            .map(|(size, cs)| Packet {
                size,
                dir: if cs { Direction::Cs } else { Direction::Sc },
            })
            .collect(),
        label: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn slots_alternate_and_preserve_order(
        packets in proptest::collection::vec((1u32..1500, any::<bool>()), 0..30),
        n in 1usize..12,
    ) {
        let f = flow(packets.clone());
        let v = featurize(&f, n);
        prop_assert_eq!(v.values.len(), 2 * n);
        prop_assert_eq!(v.empty, packets.is_empty());
        // Nonzero slots are a prefix of the packet sequence, in order, each on
        // the parity matching its direction.
        let mut seen = 0;
        for (slot, &x) in v.values.iter().enumerate() {
            if x != 0.0 {
                let (size, cs) = packets[seen];
                prop_assert_eq!(x, size as f64);
                prop_assert_eq!(slot % 2 == 0, cs);
                seen += 1;
            }
        }
        // Each packet advances at most two slots, so the first N always fit.
        prop_assert!(seen >= n.min(packets.len()));
    }
}

#[test]
fn server_only_flow_fills_odd_slots() {
    let v = featurize(&flow(vec![(10, false), (20, false), (30, false)]), 3);
    assert_eq!(v.values, vec![0.0, 10.0, 0.0, 20.0, 0.0, 30.0]);
}

#[test]
fn jsonl_to_batch_round_trip() {
    let text = r#"{"flow_id": "a", "packets": [{"size": 100, "dir": "cs"}, {"size": 40, "dir": "sc"}], "label": "normal"}
{"flow_id": 7, "packets": [{"size": 60, "dir": "SC"}]}
"#;
    let report = ingest_reader(text.as_bytes(), Strictness::Strict).unwrap();
    assert_eq!(report.flows.len(), 2);
    let vectors: Vec<_> = report.flows.iter().map(|f| featurize(f, 2)).collect();
    let batch = to_batch(&vectors, 2).unwrap();
    assert_eq!(batch.dim(), 4);
    assert_eq!(batch.row(0), &[100.0, 40.0, 0.0, 0.0]);
    assert_eq!(batch.row(1), &[0.0, 60.0, 0.0, 0.0]);
    assert_eq!(batch.sample_id(1), "7");
}

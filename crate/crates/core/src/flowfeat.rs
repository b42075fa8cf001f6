//! Packet size/direction features for bidirectional flows.
//!
//! The first `N` post-handshake packets fill `2N` slots that alternate
//! client-to-server and server-to-client. When a packet's direction does not
//! match the next slot, that slot is left at zero and the packet lands in the
//! following one.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::DataBatch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Client to server.
    Cs,
    /// Server to client.
    Sc,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::Cs => Direction::Sc,
            Direction::Sc => Direction::Cs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub size: u32,
    pub dir: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub flow_id: String,
    pub packets: Vec<Packet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowFeatureVector {
    pub flow_id: String,
    pub values: Vec<f64>,
    pub label: Option<String>,
    /// The flow had no packets at all.
    pub empty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizeOptions {
    /// Packets taken from the start of each flow.
    pub packets: usize,
    /// Direction of the first slot.
    pub first: Direction,
}

impl Default for FeaturizeOptions {
    fn default() -> Self {
        Self {
            packets: 10,
            first: Direction::Cs,
        }
    }
}

/// Featurizes with `n` packets and a CS-first layout.
pub fn featurize(flow: &FlowRecord, n: usize) -> FlowFeatureVector {
    featurize_with(
        flow,
        &FeaturizeOptions {
            packets: n,
            ..FeaturizeOptions::default()
        },
    )
}

pub fn featurize_with(flow: &FlowRecord, opts: &FeaturizeOptions) -> FlowFeatureVector {
    let width = 2 * opts.packets;
    let mut values = Vec::with_capacity(width + 1);
    let mut expected = opts.first;
    for p in flow.packets.iter().take(opts.packets) {
        if p.dir != expected {
            values.push(0.0);
            expected = expected.flip();
        }
        values.push(p.size as f64);
        expected = expected.flip();
    }
    values.resize(width, 0.0);
    FlowFeatureVector {
        flow_id: flow.flow_id.clone(),
        values,
        label: flow.label.clone(),
        empty: flow.packets.is_empty(),
    }
}

/// Stacks feature vectors into a batch with columns `p1..p2N`, ids and labels.
pub fn to_batch(vectors: &[FlowFeatureVector], n: usize) -> Result<DataBatch> {
    let width = 2 * n;
    let rows: Vec<Vec<f64>> = vectors.iter().map(|v| v.values.clone()).collect();
    let mut batch = DataBatch::from_rows(&rows, width)?
        .with_feature_names((1..=width).map(|i| format!("p{i}")).collect())?
        .with_ids(vectors.iter().map(|v| v.flow_id.clone()).collect())?;
    if vectors.iter().any(|v| v.label.is_some()) {
        batch = batch.with_labels(vectors.iter().map(|v| v.label.clone().unwrap_or_default()).collect())?;
    }
    Ok(batch)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strictness {
    /// Fail on the first malformed row.
    Strict,
    /// Skip malformed rows and report them.
    #[default]
    Lenient,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub flows: Vec<FlowRecord>,
    /// `(1-based line number, reason)` for every skipped row.
    pub rejected: Vec<(usize, String)>,
}

#[derive(Deserialize)]
struct RawPacket {
    size: serde_json::Number,
    dir: String,
}

#[derive(Deserialize)]
struct RawFlow {
    flow_id: serde_json::Value,
    packets: Vec<RawPacket>,
    #[serde(default)]
    label: Option<String>,
}

fn parse_line(line: &str) -> std::result::Result<FlowRecord, String> {
    let raw: RawFlow = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let flow_id = match raw.flow_id {
        serde_json::Value::String(s) => s,
        serde_json::Value::Number(n) => n.to_string(),
        other => return Err(format!("flow_id must be a string or number, got {other}")),
    };
    let packets = raw
        .packets
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let size = p
                .size
                .as_u64()
                .filter(|s| *s > 0 && *s <= u32::MAX as u64)
                .ok_or_else(|| format!("packet {}: size {} is not a positive integer", i + 1, p.size))?;
            let dir = match p.dir.to_ascii_lowercase().as_str() {
                "cs" => Direction::Cs,
                "sc" => Direction::Sc,
                other => return Err(format!("packet {}: unknown direction {other:?}", i + 1)),
            };
            Ok(Packet { size: size as u32, dir })
        })
        .collect::<std::result::Result<_, String>>()?;
    Ok(FlowRecord {
        flow_id,
        packets,
        label: raw.label,
    })
}

/// Reads JSONL flow records: `{"flow_id", "packets": [{"size", "dir"}], "label"?}`.
pub fn ingest_reader<R: Read>(reader: R, strictness: Strictness) -> Result<IngestReport> {
    let mut report = IngestReport::default();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io("<flow input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line) {
            Ok(flow) => report.flows.push(flow),
            Err(reason) => match strictness {
                Strictness::Strict => {
                    return Err(Error::DataQuality(format!("line {}: {reason}", i + 1)));
                }
                Strictness::Lenient => {
                    log::warn!("skipping line {}: {reason}", i + 1);
                    report.rejected.push((i + 1, reason));
                }
            },
        }
    }
    Ok(report)
}

pub fn ingest_flows(path: impl AsRef<Path>, strictness: Strictness) -> Result<IngestReport> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, strictness)
}

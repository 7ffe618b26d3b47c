use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Map;
use thiserror::Error;

use super::{Chunk, IqPair, MAX_CHUNK_SAMPLES, MAX_CTE_SAMPLES};

/// A constant tone extension rebuilt from its chunks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtePacket {
    pub idx: u64,
    /// Earliest constituent chunk timestamp, seconds.
    pub timestamp: f64,
    pub rss: i32,
    pub channel: u8,
    /// True iff every position in `0..511` was written.
    pub complete: bool,
    /// Half-open ranges of positions never written. Empty iff `complete`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gaps: Vec<[usize; 2]>,
    /// Always 511 long; unwritten positions hold `(0, 0)`.
    pub samples: Vec<IqPair>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReassemblyError {
    #[error("packet {idx}: chunks disagree on the sample at position {offset}")]
    OverlappingChunks { idx: u64, offset: usize },
    #[error("packet {idx}: chunks disagree on rss/channel")]
    ConflictingMetadata { idx: u64 },
}

struct Group {
    timestamp: f64,
    rss: i32,
    channel: u8,
    slots: Vec<Option<IqPair>>,
}

/// Groups chunks by `idx` and writes each at its offset.
///
/// The result does not depend on the order of `chunks`. Identical
/// retransmissions of a position are tolerated; differing ones are an error.
/// Packets are returned ordered by timestamp, then `idx`.
pub fn reassemble(chunks: &[Chunk]) -> Result<Vec<CtePacket>, ReassemblyError> {
    let mut groups: BTreeMap<u64, Group> = BTreeMap::new();
    for chunk in chunks {
        let group = groups.entry(chunk.idx).or_insert_with(|| Group {
            timestamp: chunk.timestamp,
            rss: chunk.rss,
            channel: chunk.channel,
            slots: vec![None; MAX_CTE_SAMPLES],
        });
        if group.rss != chunk.rss || group.channel != chunk.channel {
            return Err(ReassemblyError::ConflictingMetadata { idx: chunk.idx });
        }
        group.timestamp = group.timestamp.min(chunk.timestamp);
        for (k, sample) in chunk.samples.iter().enumerate() {
            let pos = chunk.offset + k;
            match group.slots.get_mut(pos) {
                Some(slot @ None) => *slot = Some(*sample),
                Some(Some(existing)) if existing == sample => {}
                _ => {
                    return Err(ReassemblyError::OverlappingChunks {
                        idx: chunk.idx,
                        offset: pos,
                    })
                }
            }
        }
    }

    let mut packets: Vec<CtePacket> = groups
        .into_iter()
        .map(|(idx, g)| {
            let gaps = gap_ranges(&g.slots);
            CtePacket {
                idx,
                timestamp: g.timestamp,
                rss: g.rss,
                channel: g.channel,
                complete: gaps.is_empty(),
                gaps,
                samples: g.slots.iter().map(|s| s.unwrap_or_default()).collect(),
            }
        })
        .collect();
    packets.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp).then(a.idx.cmp(&b.idx)));
    Ok(packets)
}

fn gap_ranges(slots: &[Option<IqPair>]) -> Vec<[usize; 2]> {
    let mut gaps = Vec::new();
    let mut start = None;
    for (pos, slot) in slots.iter().enumerate() {
        match (slot.is_none(), start) {
            (true, None) => start = Some(pos),
            (false, Some(s)) => {
                gaps.push([s, pos]);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        gaps.push([s, slots.len()]);
    }
    gaps
}

impl CtePacket {
    /// Builds a complete packet from a full sample buffer.
    pub fn complete(idx: u64, timestamp: f64, rss: i32, channel: u8, samples: Vec<IqPair>) -> Self {
        assert_eq!(samples.len(), MAX_CTE_SAMPLES, "a complete CTE holds 511 samples");
        Self {
            idx,
            timestamp,
            rss,
            channel,
            complete: true,
            gaps: Vec::new(),
            samples,
        }
    }

    fn is_written(&self, pos: usize) -> bool {
        !self.gaps.iter().any(|g| (g[0]..g[1]).contains(&pos))
    }

    /// Splits the written positions back into firmware-style chunks: blocks
    /// aligned to multiples of 32, the last one 31 samples long. Chunk `k`
    /// is stamped `timestamp + k * spacing`.
    pub fn to_chunks(&self, spacing: f64) -> Vec<Chunk> {
        let mut chunks = Vec::new();
        for block in (0..MAX_CTE_SAMPLES).step_by(MAX_CHUNK_SAMPLES) {
            let end = (block + MAX_CHUNK_SAMPLES).min(MAX_CTE_SAMPLES);
            let mut pos = block;
            while pos < end {
                if !self.is_written(pos) {
                    pos += 1;
                    continue;
                }
                let run_start = pos;
                while pos < end && self.is_written(pos) {
                    pos += 1;
                }
                let k = chunks.len();
                chunks.push(Chunk {
                    idx: self.idx,
                    offset: run_start,
                    samples: self.samples[run_start..pos].to_vec(),
                    rss: self.rss,
                    channel: self.channel,
                    timestamp: self.timestamp + k as f64 * spacing,
                    metadata: Map::new(),
                });
            }
        }
        chunks
    }
}

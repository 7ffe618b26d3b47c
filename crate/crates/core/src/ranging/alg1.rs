//! Assembly of 37-channel RSS feature rows from a packet stream.
//!
//! Follows the published pseudocode: each packet writes its RSS into the
//! current row at its channel (overwriting an earlier value), a gap longer
//! than the mean timestep clears the row, and a full row is emitted with the
//! distance of the packet that completed it.

use serde::{Deserialize, Serialize};

use super::RssObservation;
use crate::dataset_io::NUM_DATA_CHANNELS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangingFeatureRow {
    /// dBm per data channel.
    pub rss_by_channel: Vec<f64>,
    /// Meters.
    pub distance: f64,
    /// Timestamp of the first packet written into this row.
    pub start: f64,
    /// Timestamp of the packet that completed it.
    pub end: f64,
    pub packets: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureRowStats {
    pub rows: usize,
    /// Non-empty partial rows dropped because of a gap.
    pub cleared: usize,
    /// Packets that overwrote an already filled channel.
    pub duplicates: usize,
    /// Mean packets consumed per emitted row.
    pub packets_per_row: f64,
    /// Packets left in the unfinished row at the end of the stream.
    pub tail_packets: usize,
}

/// Mean interval between consecutive packets, seconds.
pub fn mean_timestep(stream: &[RssObservation]) -> f64 {
    match (stream.first(), stream.last()) {
        (Some(a), Some(b)) if stream.len() > 1 => (b.timestamp - a.timestamp) / (stream.len() - 1) as f64,
        _ => 0.0,
    }
}

pub fn build_feature_rows(stream: &[RssObservation], mean_timestep: f64) -> (Vec<RangingFeatureRow>, FeatureRowStats) {
    let mut rows = Vec::new();
    let mut stats = FeatureRowStats::default();
    let mut slots: [Option<f64>; NUM_DATA_CHANNELS] = [None; NUM_DATA_CHANNELS];
    let mut filled = 0usize;
    let mut packets = 0usize;
    let mut start = 0.0;
    let mut consumed = 0usize;

    for (i, obs) in stream.iter().enumerate() {
        if i > 0 && obs.timestamp - stream[i - 1].timestamp > mean_timestep {
            if packets > 0 {
                stats.cleared += 1;
            }
            slots = [None; NUM_DATA_CHANNELS];
            filled = 0;
            packets = 0;
        }
        let Some(slot) = slots.get_mut(obs.channel as usize) else {
            continue;
        };
        if packets == 0 {
            start = obs.timestamp;
        }
        packets += 1;
        if slot.replace(obs.rss).is_some() {
            stats.duplicates += 1;
        } else {
            filled += 1;
        }
        if filled == NUM_DATA_CHANNELS {
            rows.push(RangingFeatureRow {
                rss_by_channel: slots.iter().map(|s| s.unwrap_or_default()).collect(),
                distance: obs.distance,
                start,
                end: obs.timestamp,
                packets,
            });
            consumed += packets;
            slots = [None; NUM_DATA_CHANNELS];
            filled = 0;
            packets = 0;
        }
    }
    stats.rows = rows.len();
    stats.tail_packets = packets;
    stats.packets_per_row = if rows.is_empty() {
        0.0
    } else {
        consumed as f64 / rows.len() as f64
    };
    (rows, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obs(t: f64, channel: u8, rss: f64) -> RssObservation {
        RssObservation {
            timestamp: t,
            channel,
            rss,
            distance: 2.0,
        }
    }

    #[test]
    fn one_row_per_full_sweep() {
        let stream: Vec<_> = (0..37).map(|c| obs(c as f64 * 0.1, c, -60.0 - c as f64)).collect();
        let (rows, stats) = build_feature_rows(&stream, 0.15);
        assert_eq!(rows.len(), 1);
        assert_eq!(stats.packets_per_row, 37.0);
        assert_eq!(rows[0].rss_by_channel[36], -96.0);
    }

    #[test]
    fn gap_clears_partial_row() {
        let mut stream: Vec<_> = (0..36).map(|c| obs(c as f64 * 0.1, c, -60.0)).collect();
        stream.push(obs(10.0, 36, -60.0));
        let (rows, stats) = build_feature_rows(&stream, 0.2);
        assert!(rows.is_empty());
        assert_eq!(stats.cleared, 1);
        assert_eq!(stats.tail_packets, 1);
    }

    fn stream_strategy() -> impl Strategy<Value = Vec<RssObservation>> {
        proptest::collection::vec((0u8..37, -90.0f64..-40.0, prop::bool::weighted(0.01)), 1..3000).prop_map(|v| {
            let mut t = 0.0;
            v.into_iter()
                .map(|(c, rss, gap)| {
                    t += if gap { 3.0 } else { 0.1 };
                    obs(t, c, rss)
                })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn rows_never_span_a_gap(stream in stream_strategy()) {
            let mu = mean_timestep(&stream);
            let (rows, _) = build_feature_rows(&stream, mu);
            for row in &rows {
                let window: Vec<&RssObservation> = stream
                    .iter()
                    .filter(|o| o.timestamp >= row.start && o.timestamp <= row.end)
                    .collect();
                prop_assert_eq!(window.len(), row.packets);
                prop_assert!(window.windows(2).all(|w| w[1].timestamp - w[0].timestamp <= mu));
                for c in 0..NUM_DATA_CHANNELS {
                    let last = window.iter().rev().find(|o| o.channel as usize == c);
                    prop_assert_eq!(last.map(|o| o.rss), Some(row.rss_by_channel[c]));
                }
            }
        }
    }
}

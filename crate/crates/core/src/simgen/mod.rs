//! Synthetic data with known truth.

mod rss;
mod scenario;
mod tone;

pub use rss::{generate_rss_dataset, RssWorld, RssWorldConfig};
pub use scenario::{
    generate_scenario, ideal_rss, write_scenario, ManifestEntry, Obstacle, PathKind, Scenario, ScenarioConfig,
    Trajectory, CONVERSION_FILE, GT_FILE, MANIFEST_FILE, SIGNAL_FILE,
};
pub use tone::{antenna_schedule, quantize, snr_to_phase_sigma, synth_stream, ToneParams};

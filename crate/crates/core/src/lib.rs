//! BLE constant tone extension (CTE) angle-of-arrival and RSS ranging pipeline.
//!
//! Stages, in pipeline order:
//!
//! - [`dataset_io`]: signal/GT log parsing and chunk reassembly
//! - [`labeling`]: motion-capture interpolation and GT angle labels
//! - [`iq`]: slot filtering of the raw 4 MHz IQ stream and phase extraction
//! - [`aoa`]: naive PDoA, TI-style PDoA and MUSIC, RSS sub-array selection, moving average
//! - [`metrics`]: MAE / range-MAE / RMSE / CDF / CRLB
//! - [`ranging`]: log-loss, per-channel log-loss and GP distance regression
//! - [`simgen`]: synthetic scenarios that produce the same files as a real experiment

pub mod dataset_io;
pub mod labeling;
pub mod iq;
pub mod aoa;
pub mod metrics;
pub mod ranging;
pub mod simgen;

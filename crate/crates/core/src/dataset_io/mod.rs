//! Ingestion of the JSON signal and ground-truth logs.
//!
//! The receiver firmware splits every constant tone extension into chunks of
//! at most [`MAX_CHUNK_SAMPLES`] IQ pairs, tagged with the packet `idx` and
//! the write `offset`. The logger on the host side does not preserve chunk
//! order, so [`reassemble`] folds an arbitrary permutation of chunks back into
//! [`CtePacket`]s.

mod gt;
mod reassembly;
mod signal;
mod store;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gt::{parse_gt_file, write_gt_file, GtRecord, GtSchema, ROTATION_TOLERANCE};
pub use reassembly::{reassemble, CtePacket, ReassemblyError};
pub use signal::{parse_signal_file, write_signal_file, Chunk, SignalSchema};
pub use store::{
    parse_conversion_dictionary, read_packet_store, write_packet_store, ExperimentEntry,
};

/// Register cap of the receiver: a CTE never yields more than this many pairs.
pub const MAX_CTE_SAMPLES: usize = 511;

/// Pairs per UART chunk.
pub const MAX_CHUNK_SAMPLES: usize = 32;

/// BLE data channels 0..=36.
pub const NUM_DATA_CHANNELS: usize = 37;

/// One raw ADC sample. Serialized as a two-element array `[i, q]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(i16, i16)", into = "(i16, i16)")]
pub struct IqPair {
    pub i: i16,
    pub q: i16,
}

impl IqPair {
    pub const fn new(i: i16, q: i16) -> Self {
        Self { i, q }
    }
}

impl From<(i16, i16)> for IqPair {
    fn from((i, q): (i16, i16)) -> Self {
        Self { i, q }
    }
}

impl From<IqPair> for (i16, i16) {
    fn from(p: IqPair) -> Self {
        (p.i, p.q)
    }
}

/// Errors raised while parsing signal logs, GT logs and their companions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    MalformedJson {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("entry {entry}: missing field `{field}`")]
    MissingField { entry: usize, field: String },
    #[error("entry {entry}: field `{field}` has an unexpected type")]
    InvalidType { entry: usize, field: String },
    #[error("entry {entry}: field `{field}` out of range ({value})")]
    OutOfRange {
        entry: usize,
        field: String,
        value: f64,
    },
    #[error("entry {entry}: rotation matrix is not orthonormal (deviation {deviation:.3e})")]
    NonOrthonormalRotation { entry: usize, deviation: f64 },
}

impl ParseError {
    pub(crate) fn malformed(err: &serde_json::Error) -> Self {
        ParseError::MalformedJson {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    /// Short machine-readable tag, used by the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::MalformedJson { .. } => "MalformedJson",
            ParseError::MissingField { .. } => "MissingField",
            ParseError::InvalidType { .. } => "InvalidType",
            ParseError::OutOfRange { .. } => "OutOfRange",
            ParseError::NonOrthonormalRotation { .. } => "NonOrthonormalRotation",
        }
    }
}

/// Splits a byte stream into top-level JSON values. Accepts either a single
/// JSON array of entries or a sequence of whitespace/newline separated values.
pub(crate) fn json_entries(bytes: &[u8]) -> Result<Vec<serde_json::Value>, ParseError> {
    let first = bytes.iter().find(|b| !b.is_ascii_whitespace());
    if first == Some(&b'[') {
        let values: Vec<serde_json::Value> =
            serde_json::from_slice(bytes).map_err(|e| ParseError::malformed(&e))?;
        return Ok(values);
    }
    let mut out = Vec::new();
    for value in serde_json::Deserializer::from_slice(bytes).into_iter::<serde_json::Value>() {
        out.push(value.map_err(|e| ParseError::malformed(&e))?);
    }
    Ok(out)
}

pub(crate) type JsonMap = serde_json::Map<String, serde_json::Value>;

pub(crate) fn field<'a>(
    obj: &'a JsonMap,
    key: &str,
    entry: usize,
) -> Result<&'a serde_json::Value, ParseError> {
    obj.get(key).ok_or_else(|| ParseError::MissingField {
        entry,
        field: key.to_string(),
    })
}

pub(crate) fn as_object<'a>(
    v: &'a serde_json::Value,
    key: &str,
    entry: usize,
) -> Result<&'a JsonMap, ParseError> {
    v.as_object().ok_or_else(|| ParseError::InvalidType {
        entry,
        field: key.to_string(),
    })
}

pub(crate) fn as_f64(v: &serde_json::Value, key: &str, entry: usize) -> Result<f64, ParseError> {
    let x = v.as_f64().ok_or_else(|| ParseError::InvalidType {
        entry,
        field: key.to_string(),
    })?;
    if !x.is_finite() {
        return Err(ParseError::OutOfRange {
            entry,
            field: key.to_string(),
            value: x,
        });
    }
    Ok(x)
}

pub(crate) fn as_i64(v: &serde_json::Value, key: &str, entry: usize) -> Result<i64, ParseError> {
    if let Some(x) = v.as_i64() {
        return Ok(x);
    }
    // Some loggers emit integral floats ("13.0").
    match v.as_f64() {
        Some(x) if x.fract() == 0.0 && x.abs() < 9.0e15 => Ok(x as i64),
        Some(x) => Err(ParseError::OutOfRange {
            entry,
            field: key.to_string(),
            value: x,
        }),
        None => Err(ParseError::InvalidType {
            entry,
            field: key.to_string(),
        }),
    }
}

pub(crate) fn int_in_range(
    v: &serde_json::Value,
    key: &str,
    entry: usize,
    lo: i64,
    hi: i64,
) -> Result<i64, ParseError> {
    let x = as_i64(v, key, entry)?;
    if x < lo || x > hi {
        return Err(ParseError::OutOfRange {
            entry,
            field: key.to_string(),
            value: x as f64,
        });
    }
    Ok(x)
}

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    as_f64, as_object, field, int_in_range, json_entries, IqPair, JsonMap, ParseError,
    MAX_CHUNK_SAMPLES, MAX_CTE_SAMPLES, NUM_DATA_CHANNELS,
};

/// Field names used in the signal log. Defaults follow the keys written by
/// the receiver's serializer; override any of them for differently named logs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalSchema {
    pub metadata: String,
    pub payload: String,
    pub timestamp: String,
    pub idx: String,
    pub offset: String,
    pub rss: String,
    pub channel: String,
    pub samples: String,
    pub i: String,
    pub q: String,
}

impl Default for SignalSchema {
    fn default() -> Self {
        Self {
            metadata: "metadata".into(),
            payload: "payload".into(),
            timestamp: "timestamp".into(),
            idx: "idx".into(),
            offset: "offset".into(),
            rss: "rss".into(),
            channel: "channel".into(),
            samples: "samples".into(),
            i: "i".into(),
            q: "q".into(),
        }
    }
}

/// One UART chunk of a CTE.
#[derive(Clone, Debug, PartialEq)]
pub struct Chunk {
    pub idx: u64,
    /// Write position, in samples, within the 511-sample packet buffer.
    pub offset: usize,
    pub samples: Vec<IqPair>,
    pub rss: i32,
    pub channel: u8,
    /// Host-side log timestamp, seconds since epoch.
    pub timestamp: f64,
    /// Entry metadata, carried through untouched.
    pub metadata: JsonMap,
}

/// Parses a signal log into chunks, in file order.
///
/// Entries may be newline-delimited JSON objects or a single JSON array.
pub fn parse_signal_file(bytes: &[u8], schema: &SignalSchema) -> Result<Vec<Chunk>, ParseError> {
    json_entries(bytes)?
        .iter()
        .enumerate()
        .map(|(n, v)| parse_entry(v, n, schema))
        .collect()
}

fn parse_entry(value: &Value, entry: usize, schema: &SignalSchema) -> Result<Chunk, ParseError> {
    let obj = as_object(value, "entry", entry)?;
    let payload = as_object(field(obj, &schema.payload, entry)?, &schema.payload, entry)?;

    let metadata = match obj.get(&schema.metadata) {
        Some(v) => as_object(v, &schema.metadata, entry)?.clone(),
        None => JsonMap::new(),
    };
    // The local timestamp lives on the entry; tolerate loggers that put it in the payload.
    let ts_value = obj
        .get(&schema.timestamp)
        .or_else(|| payload.get(&schema.timestamp))
        .ok_or_else(|| ParseError::MissingField {
            entry,
            field: schema.timestamp.clone(),
        })?;
    let timestamp = as_f64(ts_value, &schema.timestamp, entry)?;

    let idx = int_in_range(field(payload, &schema.idx, entry)?, &schema.idx, entry, 0, i64::MAX)?;
    let offset = int_in_range(
        field(payload, &schema.offset, entry)?,
        &schema.offset,
        entry,
        0,
        MAX_CTE_SAMPLES as i64 - 1,
    )? as usize;
    let rss = int_in_range(
        field(payload, &schema.rss, entry)?,
        &schema.rss,
        entry,
        i32::MIN as i64,
        i32::MAX as i64,
    )? as i32;
    let channel = int_in_range(
        field(payload, &schema.channel, entry)?,
        &schema.channel,
        entry,
        0,
        NUM_DATA_CHANNELS as i64 - 1,
    )? as u8;

    let raw = field(payload, &schema.samples, entry)?
        .as_array()
        .ok_or_else(|| ParseError::InvalidType {
            entry,
            field: schema.samples.clone(),
        })?;
    if raw.is_empty() || raw.len() > MAX_CHUNK_SAMPLES || offset + raw.len() > MAX_CTE_SAMPLES {
        return Err(ParseError::OutOfRange {
            entry,
            field: schema.samples.clone(),
            value: raw.len() as f64,
        });
    }
    let samples = raw
        .iter()
        .map(|s| parse_sample(s, entry, schema))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(Chunk {
        idx: idx as u64,
        offset,
        samples,
        rss,
        channel,
        timestamp,
        metadata,
    })
}

fn parse_sample(value: &Value, entry: usize, schema: &SignalSchema) -> Result<IqPair, ParseError> {
    let lo = i16::MIN as i64;
    let hi = i16::MAX as i64;
    let (i, q) = match value {
        Value::Object(o) => (
            int_in_range(field(o, &schema.i, entry)?, &schema.i, entry, lo, hi)?,
            int_in_range(field(o, &schema.q, entry)?, &schema.q, entry, lo, hi)?,
        ),
        Value::Array(a) if a.len() == 2 => (
            int_in_range(&a[0], &schema.i, entry, lo, hi)?,
            int_in_range(&a[1], &schema.q, entry, lo, hi)?,
        ),
        _ => {
            return Err(ParseError::InvalidType {
                entry,
                field: schema.samples.clone(),
            })
        }
    };
    Ok(IqPair::new(i as i16, q as i16))
}

/// Writes chunks as newline-delimited JSON entries readable by
/// [`parse_signal_file`] with the same schema.
pub fn write_signal_file<W: Write>(
    chunks: &[Chunk],
    schema: &SignalSchema,
    mut out: W,
) -> io::Result<()> {
    for chunk in chunks {
        let samples: Vec<Value> = chunk
            .samples
            .iter()
            .map(|s| {
                let mut o = JsonMap::new();
                o.insert(schema.i.clone(), json!(s.i));
                o.insert(schema.q.clone(), json!(s.q));
                Value::Object(o)
            })
            .collect();
        let mut payload = JsonMap::new();
        payload.insert(schema.idx.clone(), json!(chunk.idx));
        payload.insert(schema.offset.clone(), json!(chunk.offset));
        payload.insert(schema.rss.clone(), json!(chunk.rss));
        payload.insert(schema.channel.clone(), json!(chunk.channel));
        payload.insert(schema.samples.clone(), Value::Array(samples));

        let mut entry = JsonMap::new();
        entry.insert(schema.metadata.clone(), Value::Object(chunk.metadata.clone()));
        entry.insert(schema.payload.clone(), Value::Object(payload));
        entry.insert(schema.timestamp.clone(), json!(chunk.timestamp));
        serde_json::to_writer(&mut out, &Value::Object(entry))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

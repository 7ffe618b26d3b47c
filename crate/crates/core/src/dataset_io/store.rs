use std::io::{self, BufRead, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{as_f64, as_object, field, CtePacket, ParseError};

/// Writes packets as JSON-lines, one [`CtePacket`] per line.
pub fn write_packet_store<W: Write>(packets: &[CtePacket], mut out: W) -> io::Result<()> {
    for p in packets {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a packet store written by [`write_packet_store`]. Blank lines are skipped.
pub fn read_packet_store<R: BufRead>(input: R) -> Result<Vec<CtePacket>, ParseError> {
    let mut packets = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| ParseError::MalformedJson {
            line: n + 1,
            column: 0,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let p: CtePacket = serde_json::from_str(&line).map_err(|e| ParseError::MalformedJson {
            line: n + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        packets.push(p);
    }
    Ok(packets)
}

/// One experiment listed in the conversion dictionary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentEntry {
    pub name: String,
    pub signal: PathBuf,
    pub gt: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obstacles: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
}

/// Parses the map of experiment names to `(signal, gt)` file names.
///
/// Values may be `["signal.json", "gt.json"]` or an object with `signal`
/// and `gt` keys plus optional `height_mm`, `obstacles` and `scenario`.
/// Entries are returned sorted by name.
pub fn parse_conversion_dictionary(bytes: &[u8]) -> Result<Vec<ExperimentEntry>, ParseError> {
    let root: Value = serde_json::from_slice(bytes).map_err(|e| ParseError::malformed(&e))?;
    let map = as_object(&root, "dictionary", 0)?;
    let mut out = Vec::with_capacity(map.len());
    for (n, (name, value)) in map.iter().enumerate() {
        let str_at = |v: &Value, key: &str| -> Result<PathBuf, ParseError> {
            v.as_str().map(PathBuf::from).ok_or_else(|| ParseError::InvalidType {
                entry: n,
                field: key.to_string(),
            })
        };
        let entry = match value {
            Value::Array(pair) if pair.len() == 2 => ExperimentEntry {
                name: name.clone(),
                signal: str_at(&pair[0], "signal")?,
                gt: str_at(&pair[1], "gt")?,
                height_mm: None,
                obstacles: None,
                scenario: None,
            },
            Value::Object(obj) => ExperimentEntry {
                name: name.clone(),
                signal: str_at(field(obj, "signal", n)?, "signal")?,
                gt: str_at(field(obj, "gt", n)?, "gt")?,
                height_mm: obj.get("height_mm").map(|v| as_f64(v, "height_mm", n)).transpose()?,
                obstacles: obj
                    .get("obstacles")
                    .map(|v| {
                        v.as_bool().ok_or_else(|| ParseError::InvalidType {
                            entry: n,
                            field: "obstacles".into(),
                        })
                    })
                    .transpose()?,
                scenario: obj.get("scenario").and_then(|v| v.as_str()).map(String::from),
            },
            _ => {
                return Err(ParseError::InvalidType {
                    entry: n,
                    field: name.clone(),
                })
            }
        };
        out.push(entry);
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}

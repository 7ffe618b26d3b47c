use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{as_f64, as_object, field, json_entries, JsonMap, ParseError};

/// Column norm and pairwise dot-product tolerance for GT rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-3;

/// Field names of the motion-capture log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GtSchema {
    pub timestamp: String,
    pub position: String,
    pub rotation: String,
}

impl Default for GtSchema {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            position: "position".into(),
            rotation: "rotation".into(),
        }
    }
}

/// A timestamped motion-capture pose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtRecord {
    pub timestamp: f64,
    /// Millimeters, room frame.
    pub position: [f64; 3],
    /// Row-major 3x3; column `j` is local axis `j` expressed in the room frame.
    pub rotation: [[f64; 3]; 3],
}

impl GtRecord {
    pub const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    /// Largest deviation from orthonormality over column norms and pairwise dots.
    pub fn rotation_deviation(&self) -> f64 {
        let col = |j: usize| [self.rotation[0][j], self.rotation[1][j], self.rotation[2][j]];
        let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        let mut worst: f64 = 0.0;
        for j in 0..3 {
            worst = worst.max((dot(col(j), col(j)).sqrt() - 1.0).abs());
            for k in (j + 1)..3 {
                worst = worst.max(dot(col(j), col(k)).abs());
            }
        }
        worst
    }
}

/// Parses a GT log. Records come back sorted by timestamp; for repeated
/// timestamps the first entry in file order is kept.
pub fn parse_gt_file(bytes: &[u8], schema: &GtSchema) -> Result<Vec<GtRecord>, ParseError> {
    let mut records = json_entries(bytes)?
        .iter()
        .enumerate()
        .map(|(n, v)| parse_entry(v, n, schema))
        .collect::<Result<Vec<_>, _>>()?;
    // stable: equal timestamps keep file order
    records.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    records.dedup_by(|later, earlier| later.timestamp == earlier.timestamp);
    Ok(records)
}

fn numbers(v: &Value, key: &str, entry: usize) -> Result<Vec<f64>, ParseError> {
    let arr = v.as_array().ok_or_else(|| ParseError::InvalidType {
        entry,
        field: key.to_string(),
    })?;
    let mut out = Vec::with_capacity(9);
    for item in arr {
        match item {
            Value::Array(inner) => {
                for x in inner {
                    out.push(as_f64(x, key, entry)?);
                }
            }
            x => out.push(as_f64(x, key, entry)?),
        }
    }
    Ok(out)
}

fn parse_entry(value: &Value, entry: usize, schema: &GtSchema) -> Result<GtRecord, ParseError> {
    let obj: &JsonMap = as_object(value, "entry", entry)?;
    let timestamp = as_f64(field(obj, &schema.timestamp, entry)?, &schema.timestamp, entry)?;

    let pos = numbers(field(obj, &schema.position, entry)?, &schema.position, entry)?;
    if pos.len() != 3 {
        return Err(ParseError::InvalidType {
            entry,
            field: schema.position.clone(),
        });
    }
    // accepts [[r00,r01,r02],[..],[..]] or a flat row-major list of nine
    let rot = numbers(field(obj, &schema.rotation, entry)?, &schema.rotation, entry)?;
    if rot.len() != 9 {
        return Err(ParseError::InvalidType {
            entry,
            field: schema.rotation.clone(),
        });
    }
    let record = GtRecord {
        timestamp,
        position: [pos[0], pos[1], pos[2]],
        rotation: [
            [rot[0], rot[1], rot[2]],
            [rot[3], rot[4], rot[5]],
            [rot[6], rot[7], rot[8]],
        ],
    };
    let deviation = record.rotation_deviation();
    if !(deviation < ROTATION_TOLERANCE) {
        return Err(ParseError::NonOrthonormalRotation { entry, deviation });
    }
    Ok(record)
}

/// Writes GT records as newline-delimited JSON.
pub fn write_gt_file<W: Write>(records: &[GtRecord], schema: &GtSchema, mut out: W) -> io::Result<()> {
    for r in records {
        let mut entry = JsonMap::new();
        entry.insert(schema.timestamp.clone(), json!(r.timestamp));
        entry.insert(schema.position.clone(), json!(r.position));
        entry.insert(schema.rotation.clone(), json!(r.rotation));
        serde_json::to_writer(&mut out, &Value::Object(entry))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_entry() {
        let text = r#"{"timestamp": 10.0, "position": [1500, 0, 800], "rotation": [[1,0,0],[0,1,0],[0,0,1]]}"#;
        let recs = parse_gt_file(text.as_bytes(), &GtSchema::default()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].position, [1500.0, 0.0, 800.0]);
        assert_eq!(recs[0].rotation, GtRecord::IDENTITY);
    }

    #[test]
    fn duplicate_timestamp_keeps_first() {
        let text = r#"
            {"timestamp": 11.0, "position": [0, 0, 0], "rotation": [1,0,0,0,1,0,0,0,1]}
            {"timestamp": 10.0, "position": [1, 0, 0], "rotation": [1,0,0,0,1,0,0,0,1]}
            {"timestamp": 10.0, "position": [2, 0, 0], "rotation": [1,0,0,0,1,0,0,0,1]}
        "#;
        let recs = parse_gt_file(text.as_bytes(), &GtSchema::default()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].timestamp, 10.0);
        assert_eq!(recs[0].position[0], 1.0);
        assert_eq!(recs[1].timestamp, 11.0);
    }

    #[test]
    fn rejects_non_orthonormal() {
        let text = r#"{"timestamp": 1.0, "position": [0, 0, 0], "rotation": [[1,0.01,0],[0,1,0],[0,0,1]]}"#;
        let err = parse_gt_file(text.as_bytes(), &GtSchema::default()).unwrap_err();
        assert!(matches!(err, ParseError::NonOrthonormalRotation { .. }));
    }

    #[test]
    fn accepts_rotation_about_z() {
        let (s, c) = 0.3f64.sin_cos();
        let rec = GtRecord {
            timestamp: 2.0,
            position: [1.0, 2.0, 3.0],
            rotation: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
        };
        let mut buf = Vec::new();
        write_gt_file(std::slice::from_ref(&rec), &GtSchema::default(), &mut buf).unwrap();
        assert_eq!(parse_gt_file(&buf, &GtSchema::default()).unwrap(), vec![rec]);
    }

    #[test]
    fn malformed() {
        let err = parse_gt_file(b"{\"timestamp\": 1.0,", &GtSchema::default()).unwrap_err();
        assert!(matches!(err, ParseError::MalformedJson { .. }));
    }
}

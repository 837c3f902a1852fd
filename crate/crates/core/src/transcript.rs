//! Line-delimited transcript records shared by both protocols.
//!
//! One JSON object per line:
//! `{run_id, round, sender, kind, payload_digest, payload?}`. The digest is
//! the SHA-256 of the payload's canonical JSON text; the payload itself is
//! inlined only when requested.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub run_id: String,
    pub round: u64,
    pub sender: String,
    pub kind: String,
    pub payload_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Value>,
}

pub fn digest(payload: &Value) -> String {
    let text = serde_json::to_string(payload).expect("json values always serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl TranscriptRecord {
    pub fn new(run_id: &str, round: u64, sender: String, kind: &str, payload: Value, inline: bool) -> Self {
        Self {
            run_id: run_id.to_string(),
            round,
            sender,
            kind: kind.to_string(),
            payload_digest: digest(&payload),
            payload: inline.then_some(payload),
        }
    }
}

pub fn write_jsonl<W: Write>(records: &[TranscriptRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<TranscriptRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

/// Every number appearing anywhere inside a JSON value.
pub fn numbers_in(value: &Value) -> Vec<f64> {
    let mut out = Vec::new();
    collect_numbers(value, &mut out);
    out
}

fn collect_numbers(value: &Value, out: &mut Vec<f64>) {
    match value {
        Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                out.push(f);
            }
        }
        Value::Array(items) => items.iter().for_each(|v| collect_numbers(v, out)),
        Value::Object(map) => map.values().for_each(|v| collect_numbers(v, out)),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn jsonl_round_trip_and_digest() {
        let recs = vec![
            TranscriptRecord::new("r", 0, "server".into(), "Start", Value::Null, false),
            TranscriptRecord::new("r", 1, "client-0".into(), "LocalParams", json!({"w": [1.0, 2.5]}), true),
        ];
        let mut buf = Vec::new();
        write_jsonl(&recs, &mut buf).unwrap();
        let back = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, recs);
        assert_eq!(back[1].payload_digest, digest(&json!({"w": [1.0, 2.5]})));
        assert_eq!(numbers_in(back[1].payload.as_ref().unwrap()), vec![1.0, 2.5]);
    }
}

//! Result files: one JSON record per line. The first line is the run
//! manifest, the last a timing record carrying the SHA-256 of every line
//! before it. Only the timing line depends on the clock.

use std::io::Write;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, Result};
use crate::ingest::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: Vec<InputDigest>,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: Value) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            inputs: Vec::new(),
        }
    }
}

/// Collects the records of one run before they are written out.
pub struct Report {
    lines: Vec<String>,
    started: Instant,
    started_unix_ms: u128,
}

impl Report {
    pub fn new(manifest: &RunManifest) -> Self {
        let mut r = Self {
            lines: Vec::new(),
            started: Instant::now(),
            started_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis()),
        };
        r.push("manifest", manifest);
        r
    }

    /// Appends `payload` tagged with `"record": kind`. Struct payloads are
    /// flattened into the record; anything else lands under `"value"`.
    pub fn push<T: Serialize>(&mut self, kind: &str, payload: &T) {
        let mut v = serde_json::to_value(payload).expect("records serialize");
        let record = match v {
            Value::Object(ref mut map) => {
                let mut out = serde_json::Map::with_capacity(map.len() + 1);
                out.insert("record".into(), Value::String(kind.into()));
                out.append(map);
                Value::Object(out)
            }
            other => json!({ "record": kind, "value": other }),
        };
        self.lines.push(record.to_string());
    }

    /// Writes the records plus the timing line to `out`, or stdout.
    pub fn finish(mut self, out: Option<&Path>) -> Result<()> {
        let mut hasher_input = String::new();
        for l in &self.lines {
            hasher_input.push_str(l);
            hasher_input.push('\n');
        }
        let timing = json!({
            "record": "timing",
            "started_unix_ms": self.started_unix_ms as u64,
            "elapsed_ms": self.started.elapsed().as_secs_f64() * 1e3,
            "payload_sha256": sha256_hex(hasher_input.as_bytes()),
        });
        self.lines.push(timing.to_string());
        let mut text = self.lines.join("\n");
        text.push('\n');
        match out {
            Some(p) => {
                std::fs::write(p, text).map_err(|e| CliError::io(p.display().to_string(), e))
            }
            None => std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::io("stdout", e)),
        }
    }
}

/// Parses a result file into records.
pub fn read_records(path: &Path) -> Result<Vec<Value>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(k, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), k + 1)))
        })
        .collect()
}

/// The payload of the first record of type `kind`, without its tag.
pub fn find_record<T: for<'de> Deserialize<'de>>(records: &[Value], kind: &str) -> Result<T> {
    let rec = records
        .iter()
        .find(|r| r["record"] == kind)
        .ok_or_else(|| CliError::Usage(format!("no `{kind}` record in bundle")))?;
    let mut rec = rec.clone();
    if let Value::Object(ref mut map) = rec {
        map.remove("record");
    }
    serde_json::from_value(rec).map_err(|e| CliError::Usage(format!("bad `{kind}` record: {e}")))
}

//! Versioned machine-readable verification reports. Key order is fixed by
//! struct declaration plus BTreeMap, so two runs with the same config and
//! seed serialize identically except for the timestamp line.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// One verified claim: an identifier, the claim it anchors to, measured
/// values, the thresholds applied, and the verdict.
#[derive(Clone, Debug, Serialize)]
pub struct CheckRecord {
    pub check_id: String,
    pub anchor: String,
    pub pass: bool,
    pub values: BTreeMap<String, Value>,
    pub tolerances: BTreeMap<String, f64>,
}

impl CheckRecord {
    pub fn new(check_id: &str, anchor: &str) -> Self {
        Self {
            check_id: check_id.to_string(),
            anchor: anchor.to_string(),
            pass: true,
            values: BTreeMap::new(),
            tolerances: BTreeMap::new(),
        }
    }

    pub fn value(mut self, key: &str, v: impl Serialize) -> Self {
        let val = serde_json::to_value(v).expect("check value serializes");
        self.values.insert(key.to_string(), val);
        self
    }

    pub fn tol(mut self, key: &str, v: f64) -> Self {
        self.tolerances.insert(key.to_string(), v);
        self
    }

    /// All gates must hold for the record to pass.
    pub fn gate(mut self, ok: bool) -> Self {
        self.pass &= ok;
        self
    }

    pub fn summary_line(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        for (k, v) in &self.values {
            match v {
                Value::Number(n) => parts.push(format!("{k}={n}")),
                Value::Bool(b) => parts.push(format!("{k}={b}")),
                Value::String(s) => parts.push(format!("{k}={s}")),
                _ => {}
            }
        }
        format!(
            "[{}] {} ({})",
            if self.pass { "PASS" } else { "FAIL" },
            self.check_id,
            parts.join(", ")
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GridStamp {
    pub l: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub schema: u32,
    pub command: String,
    pub code_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub grid: GridStamp,
    pub generated_at: String,
    pub overall_pass: bool,
    pub checks: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn new(command: &str, cfg: &RunConfig, checks: Vec<CheckRecord>) -> Self {
        let overall_pass = checks.iter().all(|c| c.pass);
        Self {
            schema: SCHEMA_VERSION,
            command: command.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash_hex(),
            seed: cfg.seed,
            grid: GridStamp { l: cfg.grid_l, n: cfg.grid_n },
            generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            overall_pass,
            checks,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Report body with the timestamp line blanked, for byte comparisons.
pub fn strip_timestamp(json: &str) -> String {
    json.lines()
        .filter(|l| !l.trim_start().starts_with("\"generated_at\""))
        .collect::<Vec<_>>()
        .join("\n")
}

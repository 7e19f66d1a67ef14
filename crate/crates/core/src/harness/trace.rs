//! Trace materialization: CSV and JSON, exact round-trips.
//!
//! CSV layout: `#`-prefixed header lines carry the config echo and the run
//! summary as single-line JSON payloads, followed by one header row and one
//! data row per round. Floats are written with 17 significant digits so
//! parsing reproduces the exact bit pattern.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, TraceFormat};
use crate::error::{Error, Result};
use crate::trainer::RoundRecord;

pub const CSV_COLUMNS: [&str; 13] = [
    "round",
    "q_l",
    "q_h",
    "rho",
    "p_l",
    "p_h",
    "u_l",
    "u_h",
    "nash_value",
    "alpha_l",
    "alpha_h",
    "defected_l",
    "defected_h",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Bargaining objective at the target minus its final recorded value.
    pub nash_gap: f64,
    pub defections_l: u32,
    pub defections_h: u32,
    /// Excluded from determinism comparisons.
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub config: RunConfig,
    pub records: Vec<RoundRecord>,
    pub summary: Summary,
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Trace {
    pub fn to_csv_string(&self) -> Result<String> {
        let config = serde_json::to_string(&self.config)
            .map_err(|e| Error::TraceParse(format!("config echo: {e}")))?;
        let summary = serde_json::to_string(&self.summary)
            .map_err(|e| Error::TraceParse(format!("summary: {e}")))?;
        let mut out = String::new();
        out.push_str("# dfcl-trace v1\n");
        out.push_str(&format!("# config: {config}\n"));
        out.push_str(&format!("# summary: {summary}\n"));
        out.push_str(&CSV_COLUMNS.join(","));
        out.push('\n');
        for r in &self.records {
            let fields = [
                r.round.to_string(),
                fmt_f64(r.q_l),
                fmt_f64(r.q_h),
                fmt_f64(r.rho),
                fmt_f64(r.p_l),
                fmt_f64(r.p_h),
                fmt_f64(r.u_l),
                fmt_f64(r.u_h),
                fmt_f64(r.nash_value),
                fmt_f64(r.alpha_l),
                fmt_f64(r.alpha_h),
                r.defected_l.to_string(),
                r.defected_h.to_string(),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut config: Option<RunConfig> = None;
        let mut summary: Option<Summary> = None;
        let mut saw_header = false;
        let mut records = Vec::new();

        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim_start();
                if let Some(payload) = rest.strip_prefix("config:") {
                    config = Some(
                        serde_json::from_str(payload.trim())
                            .map_err(|e| Error::TraceParse(format!("line {}: {e}", lineno + 1)))?,
                    );
                } else if let Some(payload) = rest.strip_prefix("summary:") {
                    summary = Some(
                        serde_json::from_str(payload.trim())
                            .map_err(|e| Error::TraceParse(format!("line {}: {e}", lineno + 1)))?,
                    );
                }
                continue;
            }
            if !saw_header {
                if line != CSV_COLUMNS.join(",") {
                    return Err(Error::TraceParse(format!(
                        "line {}: unexpected header '{line}'",
                        lineno + 1
                    )));
                }
                saw_header = true;
                continue;
            }
            records.push(parse_row(line, lineno + 1)?);
        }

        let config =
            config.ok_or_else(|| Error::TraceParse("missing '# config:' line".into()))?;
        let summary =
            summary.ok_or_else(|| Error::TraceParse("missing '# summary:' line".into()))?;
        if !saw_header {
            return Err(Error::TraceParse("missing column header".into()));
        }
        Ok(Trace {
            config,
            records,
            summary,
        })
    }

    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::TraceParse(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::TraceParse(e.to_string()))
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let payload = match self.config.format {
            TraceFormat::Csv => self.to_csv_string()?,
            TraceFormat::Json => self.to_json_string()?,
        };
        std::fs::write(path, payload)?;
        Ok(())
    }

    /// Reads a trace file, sniffing the format from the content.
    pub fn read_from(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if text.trim_start().starts_with('{') {
            Self::from_json_str(&text)
        } else {
            Self::from_csv_str(&text)
        }
    }

    /// Well-formedness beyond parsing: contiguous round numbers starting at 0
    /// matching the configured round count.
    pub fn check_structure(&self) -> Result<()> {
        if self.records.len() != self.config.rounds + 1 {
            return Err(Error::TraceParse(format!(
                "expected {} records, found {}",
                self.config.rounds + 1,
                self.records.len()
            )));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.round != i {
                return Err(Error::TraceParse(format!(
                    "record {i} carries round number {}",
                    r.round
                )));
            }
        }
        Ok(())
    }
}

fn parse_row(line: &str, lineno: usize) -> Result<RoundRecord> {
    let parts: Vec<&str> = line.split(',').collect();
    if parts.len() != CSV_COLUMNS.len() {
        return Err(Error::TraceParse(format!(
            "line {lineno}: expected {} fields, found {}",
            CSV_COLUMNS.len(),
            parts.len()
        )));
    }
    let f = |i: usize| -> Result<f64> {
        parts[i]
            .parse()
            .map_err(|e| Error::TraceParse(format!("line {lineno}, column {}: {e}", CSV_COLUMNS[i])))
    };
    let b = |i: usize| -> Result<bool> {
        parts[i]
            .parse()
            .map_err(|e| Error::TraceParse(format!("line {lineno}, column {}: {e}", CSV_COLUMNS[i])))
    };
    Ok(RoundRecord {
        round: parts[0]
            .parse()
            .map_err(|e| Error::TraceParse(format!("line {lineno}, column round: {e}")))?,
        q_l: f(1)?,
        q_h: f(2)?,
        rho: f(3)?,
        p_l: f(4)?,
        p_h: f(5)?,
        u_l: f(6)?,
        u_h: f(7)?,
        nash_value: f(8)?,
        alpha_l: f(9)?,
        alpha_h: f(10)?,
        defected_l: b(11)?,
        defected_h: b(12)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_trace(rounds: usize) -> Trace {
        let config = RunConfig {
            rounds,
            ..RunConfig::default()
        };
        let records = (0..=rounds)
            .map(|i| RoundRecord {
                round: i,
                q_l: 0.1 + i as f64 * 1e-3 + 1.0 / 3.0 * 1e-7,
                q_h: 0.5 + i as f64 * 1e-3,
                rho: 0.31415926535897931,
                p_l: 0.01,
                p_h: 0.2,
                u_l: f64::MIN_POSITIVE,
                u_h: 0.1 + i as f64 * 1e-9,
                nash_value: -1.5e-11,
                alpha_l: 0.0,
                alpha_h: 1.25,
                defected_l: false,
                defected_h: i == 2,
            })
            .collect();
        Trace {
            config,
            records,
            summary: Summary {
                nash_gap: 1e-6,
                defections_l: 0,
                defections_h: 1,
                wall_time_ms: 12.5,
            },
        }
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let t = sample_trace(3);
        let text = t.to_csv_string().unwrap();
        let back = Trace::from_csv_str(&text).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let t = sample_trace(2);
        let text = t.to_json_string().unwrap();
        let back = Trace::from_json_str(&text).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn structure_check_catches_gaps() {
        let mut t = sample_trace(2);
        t.check_structure().unwrap();
        t.records[1].round = 5;
        assert!(t.check_structure().is_err());
    }
}

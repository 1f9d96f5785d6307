//! Flattened result rows and the CSV/JSON writers.

use std::io::Write;

use serde::{Deserialize, Serialize};

use qkdnet::sim::{PairValue, PoolRecord, SimConfig, SimResult};

pub const CSV_HEADER: &str =
    "preset,policy,decoherence,seed,key_rate,secret_per_pair,waste_per_pair,runtime_ms";

/// One completed run, flattened for tabular output. The full effective
/// config rides along for auditability (JSON only; the CSV keeps the
/// stable header above).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub preset: String,
    pub policy: String,
    pub decoherence: f64,
    pub seed: u64,
    pub key_rate: f64,
    pub secret: Vec<PairValue>,
    pub flow: Vec<PairValue>,
    pub waste: Vec<PairValue>,
    /// Raw-key histograms per pair: (noise class k, sifted bits).
    pub pools: Vec<PoolRecord>,
    pub runtime_ms: u64,
    pub config: SimConfig,
}

impl OutputRecord {
    pub fn new(result: &SimResult, runtime_ms: u64) -> Self {
        OutputRecord {
            preset: result.config.preset.clone(),
            policy: result.config.policy.to_string(),
            decoherence: result.config.decoherence,
            seed: result.config.seed,
            key_rate: result.key_rate,
            secret: result.secret.clone(),
            flow: result.flow.clone(),
            waste: result.waste.clone(),
            pools: result.pools.clone(),
            runtime_ms,
            config: result.config.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected `csv` or `json`)")),
        }
    }
}

fn pack_pairs(values: &[PairValue]) -> String {
    values
        .iter()
        .map(|p| format!("{}:{}", p.pair, p.value))
        .collect::<Vec<_>>()
        .join(";")
}

/// Writes records as CSV (fixed header) or a JSON array, newline-terminated.
pub fn write_results(
    records: &[OutputRecord],
    out: &mut impl Write,
    format: Format,
) -> std::io::Result<()> {
    match format {
        Format::Csv => {
            writeln!(out, "{CSV_HEADER}")?;
            for r in records {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    r.preset,
                    r.policy,
                    r.decoherence,
                    r.seed,
                    r.key_rate,
                    pack_pairs(&r.secret),
                    pack_pairs(&r.waste),
                    r.runtime_ms
                )?;
            }
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, records)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use qkdnet::sim::{run, Policy};

    fn sample_records() -> Vec<OutputRecord> {
        let cfg = SimConfig {
            preset: "1tn-ideal".to_string(),
            policy: Policy::Static,
            rounds: 300,
            seed: 9,
            ..SimConfig::default()
        };
        let result = run(&cfg).unwrap();
        vec![OutputRecord::new(&result, 17)]
    }

    #[test]
    fn csv_has_header_and_one_row_per_record() {
        let records = sample_records();
        let mut buf = Vec::new();
        write_results(&records, &mut buf, Format::Csv).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("1tn-ideal,static,0.02,9,"));

        let mut empty = Vec::new();
        write_results(&[], &mut empty, Format::Csv).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap().trim(), CSV_HEADER);
    }

    #[test]
    fn json_round_trips() {
        let records = sample_records();
        let mut buf = Vec::new();
        write_results(&records, &mut buf, Format::Json).unwrap();
        let parsed: Vec<OutputRecord> = serde_json::from_slice(&buf).unwrap();
        assert_eq!(parsed, records);
    }
}

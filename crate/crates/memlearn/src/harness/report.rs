//! Metrics report assembly and canonical emission.
//!
//! JSON output uses a fixed key order (struct order) and is newline
//! terminated, so two reports with equal content are byte-identical. CSV
//! output is one header plus one row in the documented column order.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::harness::config::ReportFormat;
use crate::memory::MetricsLedger;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub run_id: String,
    pub config_digest: String,
    pub trace_digest: String,
    pub seed: u64,
    pub total_cycles: u64,
    pub instructions: u64,
    pub counters: MetricsLedger,
    pub coverage: Option<f64>,
    pub overprediction: Option<f64>,
    pub ocp_accuracy: Option<f64>,
    pub ocp_coverage: Option<f64>,
    /// Bandwidth-usage samples bucketed into deciles.
    pub bandwidth_histogram: [u64; 10],
    /// Coordination actions taken, indexed none/ocp/pref/both.
    pub athena_action_histogram: [u64; 4],
    /// Reserved; always zero in emitted reports so equal-content reports stay
    /// byte-identical. Elapsed time is reported on stderr by the CLI.
    pub wall_clock_seconds: f64,
}

/// Documented CSV column order.
pub const REPORT_CSV_COLUMNS: [&str; 38] = [
    "run_id",
    "config_digest",
    "trace_digest",
    "seed",
    "total_cycles",
    "instructions",
    "loads",
    "stores",
    "branches",
    "mispredicted_branches",
    "demand_accesses",
    "demand_misses_llc",
    "memory_level_accesses",
    "hits_l1",
    "hits_l2",
    "hits_llc",
    "prefetch_issued",
    "prefetch_useful",
    "prefetch_unused",
    "prefetch_dropped",
    "demand_hits_on_prefetch",
    "dram_demand_requests",
    "dram_prefetch_requests",
    "dram_hermes_requests",
    "dram_channel_bytes",
    "hermes_served_loads",
    "ocp_predicted_offchip",
    "ocp_correct_offchip",
    "ocp_true_offchip",
    "coverage",
    "overprediction",
    "ocp_accuracy",
    "ocp_coverage",
    "bandwidth_histogram",
    "athena_action_histogram",
    "cycles",
    "wall_clock_seconds",
    "format_version",
];

const CSV_FORMAT_VERSION: &str = "1";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>, String> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse::<f64>().map(Some).map_err(|e| e.to_string())
    }
}

impl MetricsReport {
    /// Canonical JSON: fixed key order, newline terminated.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_csv(&self) -> String {
        let c = &self.counters;
        let hist = self
            .bandwidth_histogram
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(";");
        let actions = self
            .athena_action_histogram
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(";");
        let row = [
            self.run_id.clone(),
            self.config_digest.clone(),
            self.trace_digest.clone(),
            self.seed.to_string(),
            self.total_cycles.to_string(),
            self.instructions.to_string(),
            c.loads.to_string(),
            c.stores.to_string(),
            c.branches.to_string(),
            c.mispredicted_branches.to_string(),
            c.demand_accesses.to_string(),
            c.demand_misses_llc.to_string(),
            c.memory_level_accesses.to_string(),
            c.hits_l1.to_string(),
            c.hits_l2.to_string(),
            c.hits_llc.to_string(),
            c.prefetch_issued.to_string(),
            c.prefetch_useful.to_string(),
            c.prefetch_unused.to_string(),
            c.prefetch_dropped.to_string(),
            c.demand_hits_on_prefetch.to_string(),
            c.dram_demand_requests.to_string(),
            c.dram_prefetch_requests.to_string(),
            c.dram_hermes_requests.to_string(),
            c.dram_channel_bytes.to_string(),
            c.hermes_served_loads.to_string(),
            c.ocp_predicted_offchip.to_string(),
            c.ocp_correct_offchip.to_string(),
            c.ocp_true_offchip.to_string(),
            fmt_opt(self.coverage),
            fmt_opt(self.overprediction),
            fmt_opt(self.ocp_accuracy),
            fmt_opt(self.ocp_coverage),
            hist,
            actions,
            c.cycles.to_string(),
            format!("{:.6}", self.wall_clock_seconds),
            CSV_FORMAT_VERSION.to_string(),
        ];
        format!("{}\n{}\n", REPORT_CSV_COLUMNS.join(","), row.join(","))
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("missing csv header")?;
        if header != REPORT_CSV_COLUMNS.join(",") {
            return Err("csv header does not match the documented column list".into());
        }
        let row = lines.next().ok_or("missing csv data row")?;
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != REPORT_CSV_COLUMNS.len() {
            return Err(format!(
                "expected {} csv fields, found {}",
                REPORT_CSV_COLUMNS.len(),
                fields.len()
            ));
        }
        let u = |i: usize| -> Result<u64, String> {
            fields[i]
                .parse::<u64>()
                .map_err(|e| format!("{}: {e}", REPORT_CSV_COLUMNS[i]))
        };
        let vec_u = |i: usize| -> Result<Vec<u64>, String> {
            fields[i]
                .split(';')
                .map(|s| s.parse::<u64>().map_err(|e| e.to_string()))
                .collect()
        };
        let counters = MetricsLedger {
            instructions: u(5)?,
            loads: u(6)?,
            stores: u(7)?,
            branches: u(8)?,
            mispredicted_branches: u(9)?,
            demand_accesses: u(10)?,
            demand_misses_llc: u(11)?,
            memory_level_accesses: u(12)?,
            hits_l1: u(13)?,
            hits_l2: u(14)?,
            hits_llc: u(15)?,
            prefetch_issued: u(16)?,
            prefetch_useful: u(17)?,
            prefetch_unused: u(18)?,
            prefetch_dropped: u(19)?,
            demand_hits_on_prefetch: u(20)?,
            dram_demand_requests: u(21)?,
            dram_prefetch_requests: u(22)?,
            dram_hermes_requests: u(23)?,
            dram_channel_bytes: u(24)?,
            hermes_served_loads: u(25)?,
            ocp_predicted_offchip: u(26)?,
            ocp_correct_offchip: u(27)?,
            ocp_true_offchip: u(28)?,
            cycles: u(35)?,
        };
        let hist = vec_u(33)?;
        let actions = vec_u(34)?;
        if hist.len() != 10 || actions.len() != 4 {
            return Err("histogram field has the wrong arity".into());
        }
        Ok(MetricsReport {
            run_id: fields[0].to_string(),
            config_digest: fields[1].to_string(),
            trace_digest: fields[2].to_string(),
            seed: u(3)?,
            total_cycles: u(4)?,
            instructions: u(5)?,
            counters,
            coverage: parse_opt(fields[29])?,
            overprediction: parse_opt(fields[30])?,
            ocp_accuracy: parse_opt(fields[31])?,
            ocp_coverage: parse_opt(fields[32])?,
            bandwidth_histogram: hist.try_into().expect("length checked"),
            athena_action_histogram: actions.try_into().expect("length checked"),
            wall_clock_seconds: fields[36].parse().map_err(|e| format!("wall_clock: {e}"))?,
        })
    }
}

pub fn emit_report(report: &MetricsReport, format: ReportFormat, path: &Path) -> io::Result<()> {
    let bytes = match format {
        ReportFormat::Json => report.to_canonical_json(),
        ReportFormat::Csv => report.to_csv(),
    };
    fs::write(path, bytes)
}

/// Result of a paired baseline / with-mechanisms run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedReport {
    pub baseline: MetricsReport,
    pub with_mechanisms: MetricsReport,
    pub coverage: f64,
    pub overprediction: f64,
    pub speedup: f64,
}

impl PairedReport {
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Field-by-field comparison of two reports; returns human-readable
/// difference lines (empty when identical).
pub fn diff_reports(a: &MetricsReport, b: &MetricsReport) -> Vec<String> {
    let va = serde_json::to_value(a).expect("report serializes");
    let vb = serde_json::to_value(b).expect("report serializes");
    let mut diffs = Vec::new();
    collect_diffs("", &va, &vb, &mut diffs);
    diffs
}

fn collect_diffs(prefix: &str, a: &serde_json::Value, b: &serde_json::Value, out: &mut Vec<String>) {
    use serde_json::Value;
    match (a, b) {
        (Value::Object(ma), Value::Object(mb)) => {
            for (k, va) in ma {
                let path = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                match mb.get(k) {
                    Some(vb) => collect_diffs(&path, va, vb, out),
                    None => out.push(format!("{path}: {va} vs <missing>")),
                }
            }
        }
        (Value::Array(xa), Value::Array(xb)) if xa.len() == xb.len() => {
            for (i, (va, vb)) in xa.iter().zip(xb.iter()).enumerate() {
                collect_diffs(&format!("{prefix}[{i}]"), va, vb, out);
            }
        }
        _ if a != b => out.push(format!("{prefix}: {a} vs {b}")),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MetricsReport {
        MetricsReport {
            run_id: "abc123".into(),
            config_digest: "deadbeef".into(),
            trace_digest: "feedface".into(),
            seed: 7,
            total_cycles: 123456,
            instructions: 1000,
            counters: MetricsLedger {
                instructions: 1000,
                loads: 700,
                stores: 150,
                branches: 125,
                demand_accesses: 850,
                demand_misses_llc: 42,
                cycles: 123456,
                ..Default::default()
            },
            coverage: Some(0.75),
            overprediction: None,
            ocp_accuracy: Some(0.9),
            ocp_coverage: Some(0.85),
            bandwidth_histogram: [1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
            athena_action_histogram: [4, 3, 2, 1],
            wall_clock_seconds: 0.0,
        }
    }

    #[test]
    fn json_round_trip_and_byte_identity() {
        let r = sample();
        let json = r.to_canonical_json();
        assert!(json.ends_with('\n'));
        let back = MetricsReport::from_json(&json).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_canonical_json(), json);
    }

    #[test]
    fn csv_round_trip_and_header_pin() {
        let r = sample();
        let csv = r.to_csv();
        let header = csv.lines().next().unwrap();
        assert_eq!(header, REPORT_CSV_COLUMNS.join(","));
        let back = MetricsReport::from_csv(&csv).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn diff_reports_finds_changed_fields() {
        let a = sample();
        let mut b = sample();
        assert!(diff_reports(&a, &b).is_empty());
        b.total_cycles = 1;
        b.counters.loads = 0;
        let diffs = diff_reports(&a, &b);
        assert_eq!(diffs.len(), 2);
        assert!(diffs.iter().any(|d| d.starts_with("total_cycles")));
        assert!(diffs.iter().any(|d| d.starts_with("counters.loads")));
    }
}

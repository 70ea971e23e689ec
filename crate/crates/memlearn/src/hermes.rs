//! Hashed-perceptron off-chip load predictor and its training rule.
//!
//! Five feature-indexed weight tables of 5-bit saturating signed integers.
//! A load is predicted off-chip when the summed weights exceed the activation
//! threshold; training nudges each indexed weight toward the observed outcome
//! whenever the sum lies strictly between the training thresholds.

use serde::{Deserialize, Serialize};

use crate::hash::{shift_constant, table_row};
use crate::trace::{LINE_BYTES, LINES_PER_PAGE, PAGE_BYTES};

/// Shift-constant table region reserved for the five weight tables.
const POPET_SHIFT_BASE: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopetConfig {
    /// Activation threshold: predict off-chip when w_sigma exceeds it.
    pub tau_act: i32,
    /// Negative training threshold.
    pub t_n: i32,
    /// Positive training threshold.
    pub t_p: i32,
    pub weight_min: i32,
    pub weight_max: i32,
    pub table_rows: [usize; 5],
    /// Cycles from the triggering demand to the speculative request entering
    /// the memory controller.
    pub issue_latency_cycles: u64,
}

impl Default for PopetConfig {
    fn default() -> Self {
        Self {
            tau_act: -18,
            t_n: -35,
            t_p: 40,
            weight_min: -16,
            weight_max: 15,
            table_rows: [1024, 1024, 1024, 128, 1024],
            issue_latency_cycles: 6,
        }
    }
}

impl PopetConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.t_n >= self.t_p {
            return Err(format!(
                "hermes.t_n ({}) must be below hermes.t_p ({})",
                self.t_n, self.t_p
            ));
        }
        if self.weight_min >= self.weight_max {
            return Err("hermes.weight_min must be below hermes.weight_max".into());
        }
        if self.table_rows.iter().any(|r| !r.is_power_of_two()) {
            return Err("hermes.table_rows must all be powers of two".into());
        }
        Ok(())
    }
}

/// Per-load prediction context, retained until training for the same load.
#[derive(Debug, Clone, Copy)]
pub struct LoadMetadata {
    pub rows: [usize; 5],
    pub w_sigma: i32,
    pub predicted_offchip: bool,
}

#[derive(Debug, Clone, Copy)]
struct PageEntry {
    page: u64,
    bitmap: u64,
    stamp: u64,
}

/// 64-entry LRU buffer of recently touched pages, one bit per cacheline.
#[derive(Debug, Clone)]
pub struct PageBuffer {
    entries: Vec<PageEntry>,
    capacity: usize,
    tick: u64,
}

impl PageBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: Vec::with_capacity(capacity),
            capacity,
            tick: 0,
        }
    }

    /// Read-then-set the bit for (page, line offset). Returns the first-access
    /// hint: true iff the bit was previously unset.
    pub fn first_access(&mut self, page: u64, line_offset: u64) -> bool {
        debug_assert!(line_offset < LINES_PER_PAGE);
        self.tick += 1;
        let bit = 1u64 << line_offset;
        if let Some(entry) = self.entries.iter_mut().find(|e| e.page == page) {
            entry.stamp = self.tick;
            let first = entry.bitmap & bit == 0;
            entry.bitmap |= bit;
            return first;
        }
        if self.entries.len() == self.capacity {
            let victim = self
                .entries
                .iter()
                .enumerate()
                .min_by_key(|(_, e)| e.stamp)
                .map(|(i, _)| i)
                .expect("buffer non-empty");
            self.entries.swap_remove(victim);
        }
        self.entries.push(PageEntry {
            page,
            bitmap: bit,
            stamp: self.tick,
        });
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Default, Clone, Copy, Serialize)]
pub struct OcpStats {
    pub predictions: u64,
    pub predicted_offchip: u64,
    pub correct_offchip: u64,
    pub true_offchip: u64,
}

/// The predictor: five weight tables plus the page buffer and PC history.
pub struct PopetPredictor {
    pub cfg: PopetConfig,
    tables: [Vec<i8>; 5],
    page_buffer: PageBuffer,
    /// Last four load PCs, oldest first, excluding the current load.
    last4_pcs: [u64; 4],
    pub stats: OcpStats,
}

/// Raw feature values for one load, before row folding.
pub fn popet_raw_features(pc: u64, vaddr: u64, first_access: bool, last4_pcs: &[u64; 4]) -> [u64; 5] {
    let line_offset = (vaddr % PAGE_BYTES) / LINE_BYTES;
    let byte_offset = vaddr % LINE_BYTES;
    let fa = first_access as u64;
    let last4 = last4_pcs.iter().fold(0u64, |acc, &p| (acc << 5) ^ p);
    [
        pc ^ line_offset,
        pc ^ byte_offset,
        (pc << 1) | fa,
        (line_offset << 1) | fa,
        last4,
    ]
}

impl PopetPredictor {
    pub fn new(cfg: PopetConfig) -> Self {
        cfg.validate().expect("validated by the harness");
        let tables = std::array::from_fn(|i| vec![0i8; cfg.table_rows[i]]);
        Self {
            cfg,
            tables,
            page_buffer: PageBuffer::new(64),
            last4_pcs: [0; 4],
            stats: OcpStats::default(),
        }
    }

    /// Fold raw features to table rows.
    fn rows_for(&self, raw: &[u64; 5]) -> [usize; 5] {
        std::array::from_fn(|i| {
            table_row(raw[i], shift_constant(POPET_SHIFT_BASE + i), self.cfg.table_rows[i])
        })
    }

    /// Predict for one demand load; updates the page buffer and PC history.
    pub fn predict(&mut self, pc: u64, vaddr: u64) -> LoadMetadata {
        let page = vaddr / PAGE_BYTES;
        let line_offset = (vaddr % PAGE_BYTES) / LINE_BYTES;
        let first_access = self.page_buffer.first_access(page, line_offset);
        let raw = popet_raw_features(pc, vaddr, first_access, &self.last4_pcs);
        let rows = self.rows_for(&raw);
        let meta = self.predict_at(rows);
        self.last4_pcs.rotate_left(1);
        self.last4_pcs[3] = pc;
        meta
    }

    /// Prediction from pre-folded rows: sum the indexed weights and compare
    /// against the activation threshold (strict).
    pub fn predict_at(&mut self, rows: [usize; 5]) -> LoadMetadata {
        let w_sigma: i32 = rows
            .iter()
            .enumerate()
            .map(|(i, &r)| self.tables[i][r] as i32)
            .sum();
        let predicted_offchip = w_sigma > self.cfg.tau_act;
        self.stats.predictions += 1;
        if predicted_offchip {
            self.stats.predicted_offchip += 1;
        }
        LoadMetadata {
            rows,
            w_sigma,
            predicted_offchip,
        }
    }

    /// Train on the resolved outcome of a predicted load.
    pub fn train(&mut self, meta: &LoadMetadata, went_offchip: bool) {
        if went_offchip {
            self.stats.true_offchip += 1;
            if meta.predicted_offchip {
                self.stats.correct_offchip += 1;
            }
        }
        if meta.w_sigma <= self.cfg.t_n || meta.w_sigma >= self.cfg.t_p {
            return;
        }
        let step = if went_offchip { 1i32 } else { -1i32 };
        for (i, &row) in meta.rows.iter().enumerate() {
            let w = (self.tables[i][row] as i32 + step)
                .clamp(self.cfg.weight_min, self.cfg.weight_max);
            self.tables[i][row] = w as i8;
        }
    }

    pub fn weight(&self, table: usize, row: usize) -> i8 {
        self.tables[table][row]
    }

    pub fn set_weight(&mut self, table: usize, row: usize, w: i8) {
        self.tables[table][row] = w;
    }

    pub fn weights_snapshot(&self) -> Vec<Vec<i8>> {
        self.tables.iter().map(|t| t.clone()).collect()
    }
}

/// Accuracy and coverage of off-chip prediction; `None` marks a zero
/// denominator (not applicable rather than failure).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OcpMetrics {
    pub accuracy: Option<f64>,
    pub coverage: Option<f64>,
}

pub fn ocp_metrics(predicted_offchip: u64, correct_offchip: u64, true_offchip: u64) -> OcpMetrics {
    OcpMetrics {
        accuracy: (predicted_offchip > 0)
            .then(|| correct_offchip as f64 / predicted_offchip as f64),
        coverage: (true_offchip > 0).then(|| correct_offchip as f64 / true_offchip as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn offsets_slice_correctly() {
        // vaddr 0x7f0043: line offset 1, byte offset 3.
        let raw = popet_raw_features(0, 0x7f0043, false, &[0; 4]);
        assert_eq!(raw[0], 0 ^ 1);
        assert_eq!(raw[1], 0 ^ 3);
    }

    #[test]
    fn first_access_read_then_set() {
        let mut pb = PageBuffer::new(64);
        assert!(pb.first_access(10, 5));
        assert!(!pb.first_access(10, 5));
        assert!(pb.first_access(10, 6));
    }

    #[test]
    fn page_buffer_lru_eviction() {
        let mut pb = PageBuffer::new(64);
        // Touch 65 distinct pages round-robin; page 1 gets evicted.
        for page in 1..=65u64 {
            assert!(pb.first_access(page, 0));
        }
        assert_eq!(pb.len(), 64);
        assert!(pb.first_access(1, 0), "evicted page looks fresh again");
    }

    #[test]
    fn fresh_tables_predict_offchip_at_default_threshold() {
        let mut p = PopetPredictor::new(PopetConfig::default());
        // All-zero weights: w_sigma = 0 > -18.
        let meta = p.predict(0x400, 0x7f0040);
        assert_eq!(meta.w_sigma, 0);
        assert!(meta.predicted_offchip);
    }

    #[test]
    fn saturated_negative_weights_predict_onchip() {
        let mut p = PopetPredictor::new(PopetConfig::default());
        let meta = p.predict(0x400, 0x7f0040);
        for (i, &row) in meta.rows.iter().enumerate() {
            p.set_weight(i, row, -16);
        }
        let meta2 = p.predict_at(meta.rows);
        assert_eq!(meta2.w_sigma, -80);
        assert!(!meta2.predicted_offchip);
    }

    #[test]
    fn mixed_weights_sum_against_threshold() {
        let mut p = PopetPredictor::new(PopetConfig::default());
        let meta = p.predict(0x400, 0x7f0040);
        for (i, &w) in [3i8, -2, 0, 1, -16].iter().enumerate() {
            p.set_weight(i, meta.rows[i], w);
        }
        let meta2 = p.predict_at(meta.rows);
        assert_eq!(meta2.w_sigma, -14);
        assert!(meta2.predicted_offchip);
    }

    #[test]
    fn prediction_boundary_is_strict() {
        let mut p = PopetPredictor::new(PopetConfig::default());
        let meta = p.predict(0x400, 0x7f0040);
        // Sum exactly tau_act = -18: NOT off-chip.
        for (i, &w) in [-16i8, -2, 0, 0, 0].iter().enumerate() {
            p.set_weight(i, meta.rows[i], w);
        }
        assert!(!p.predict_at(meta.rows).predicted_offchip);
        // Sum -17: off-chip.
        p.set_weight(1, meta.rows[1], -1);
        assert!(p.predict_at(meta.rows).predicted_offchip);
    }

    #[test]
    fn training_gated_by_thresholds() {
        let mut p = PopetPredictor::new(PopetConfig::default());
        let meta = LoadMetadata {
            rows: [0, 0, 0, 0, 0],
            w_sigma: 50, // >= T_P = 40: no change
            predicted_offchip: true,
        };
        let before = p.weights_snapshot();
        p.train(&meta, true);
        assert_eq!(p.weights_snapshot(), before);

        let meta = LoadMetadata {
            w_sigma: -35, // <= T_N: no change
            ..meta
        };
        p.train(&meta, false);
        assert_eq!(p.weights_snapshot(), before);
    }

    #[test]
    fn training_decrements_on_onchip() {
        let mut p = PopetPredictor::new(PopetConfig::default());
        let meta = LoadMetadata {
            rows: [1, 2, 3, 4, 5],
            w_sigma: 0,
            predicted_offchip: true,
        };
        p.train(&meta, false);
        for (i, &row) in meta.rows.iter().enumerate() {
            assert_eq!(p.weight(i, row), -1);
        }
    }

    #[test]
    fn training_saturates_at_bounds() {
        let mut p = PopetPredictor::new(PopetConfig::default());
        let meta = LoadMetadata {
            rows: [7, 7, 7, 7, 7],
            w_sigma: 0,
            predicted_offchip: true,
        };
        p.set_weight(0, 7, 15);
        p.train(&meta, true);
        assert_eq!(p.weight(0, 7), 15, "positive saturation");
        p.set_weight(0, 7, -16);
        p.train(&meta, false);
        assert_eq!(p.weight(0, 7), -16, "negative saturation");
    }

    #[test]
    fn metrics_handle_zero_denominators() {
        let m = ocp_metrics(100, 80, 120);
        assert!((m.accuracy.unwrap() - 0.80).abs() < 1e-12);
        assert!((m.coverage.unwrap() - 80.0 / 120.0).abs() < 1e-12);
        let silent = ocp_metrics(0, 0, 40);
        assert_eq!(silent.accuracy, None);
        assert_eq!(silent.coverage, Some(0.0));
        let oracle = ocp_metrics(120, 120, 120);
        assert_eq!(oracle.accuracy, Some(1.0));
        assert_eq!(oracle.coverage, Some(1.0));
    }

    proptest! {
        // Weights stay inside [-16, 15] under any training sequence, and
        // training is a no-op whenever w_sigma is outside (T_N, T_P).
        #[test]
        fn weight_bounds_hold(outcomes in proptest::collection::vec(any::<bool>(), 500),
                              pcs in proptest::collection::vec(0u64..64, 500)) {
            let mut p = PopetPredictor::new(PopetConfig::default());
            for (pc, went) in pcs.iter().zip(outcomes.iter()) {
                let meta = p.predict(*pc, pc * 8 + 0x40_0000);
                let before = p.weights_snapshot();
                p.train(&meta, *went);
                if meta.w_sigma <= -35 || meta.w_sigma >= 40 {
                    prop_assert_eq!(p.weights_snapshot(), before);
                }
                for t in &p.tables {
                    for &w in t {
                        prop_assert!((-16..=15).contains(&(w as i32)));
                    }
                }
            }
        }
    }
}

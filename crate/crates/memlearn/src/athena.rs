//! RL coordinator for the prefetcher and the off-chip predictor.
//!
//! Telemetry is gathered per epoch (Bloom-tracked prefetcher accuracy and
//! cache pollution, OCP counters, bandwidth usage), quantized into a small
//! state tuple, and fed to a plane-partitioned Q-table. Once per epoch the
//! agent picks one of four coordination actions and, when prefetching is
//! enabled, derives the prefetch degree from its Q-value confidence.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::hash::{shift_constant, table_row};
use crate::rng::SplitMix64;

/// Shift-constant regions for the Athena planes and the Bloom hashes.
const ATHENA_SHIFT_BASE: usize = 8;
const BLOOM_SHIFT_BASE: usize = 16;

/// Q-values are 8-bit signed fixed point with 3 fractional bits.
pub const ATHENA_Q_FRAC_BITS: u32 = 3;
const UNITS_PER_ONE: f64 = (1 << ATHENA_Q_FRAC_BITS) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub cycle: f64,
    pub llc_misses: f64,
    pub llc_miss_latency: f64,
    pub loads: f64,
    pub mispredicted_branches: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            cycle: 1.6,
            llc_misses: 0.0,
            llc_miss_latency: 0.0,
            loads: 0.6,
            mispredicted_branches: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Metric deltas normalized by the previous epoch's value.
    Relative,
    /// Raw metric differences.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AthenaConfig {
    /// Retired instructions per epoch.
    pub epoch_len: u64,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// Degree-confidence normalizer.
    pub tau: f64,
    pub reward_weights: RewardWeights,
    pub planes: usize,
    pub rows: usize,
    /// Nominal stored Q-value width.
    pub q_bits: u32,
    pub update_delay_cycles: u64,
    pub bloom_bits: usize,
    pub bloom_hashes: usize,
    pub feature_buckets: u32,
    pub reward_mode: RewardMode,
}

impl Default for AthenaConfig {
    fn default() -> Self {
        Self {
            epoch_len: 2000,
            alpha: 0.6,
            gamma: 0.6,
            epsilon: 0.0,
            tau: 0.12,
            reward_weights: RewardWeights::default(),
            planes: 8,
            rows: 64,
            q_bits: 8,
            update_delay_cycles: 50,
            bloom_bits: 4096,
            bloom_hashes: 2,
            feature_buckets: 8,
            reward_mode: RewardMode::Relative,
        }
    }
}

impl AthenaConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.epoch_len == 0 {
            return Err("athena.epoch_len must be positive".into());
        }
        if !self.rows.is_power_of_two() {
            return Err("athena.rows must be a power of two".into());
        }
        if self.tau <= 0.0 {
            return Err("athena.tau must be positive".into());
        }
        if self.planes == 0 || self.planes > 8 {
            return Err("athena.planes must lie in 1..=8".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(format!("athena.alpha {} outside (0, 1]", self.alpha));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(format!("athena.gamma {} outside [0, 1)", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(format!("athena.epsilon {} outside [0, 1]", self.epsilon));
        }
        if self.feature_buckets == 0 || self.feature_buckets > 256 {
            return Err("athena.feature_buckets must lie in 1..=256".into());
        }
        if !self.bloom_bits.is_power_of_two() {
            return Err("athena.bloom_bits must be a power of two".into());
        }
        if self.bloom_hashes == 0 || self.bloom_hashes > 8 {
            return Err("athena.bloom_hashes must lie in 1..=8".into());
        }
        Ok(())
    }
}

/// Fixed-size Bloom filter over cacheline addresses.
#[derive(Debug, Clone)]
pub struct BloomFilter {
    words: Vec<u64>,
    n_bits: usize,
    hashes: usize,
    pub inserted_count: u64,
}

impl BloomFilter {
    pub fn new(n_bits: usize, hashes: usize) -> Self {
        assert!(n_bits.is_power_of_two());
        assert!(hashes >= 1);
        Self {
            words: vec![0; n_bits / 64],
            n_bits,
            hashes,
            inserted_count: 0,
        }
    }

    fn bit_for(&self, x: u64, i: usize) -> usize {
        table_row(x, shift_constant(BLOOM_SHIFT_BASE + i), self.n_bits)
    }

    pub fn insert(&mut self, x: u64) {
        for i in 0..self.hashes {
            let bit = self.bit_for(x, i);
            self.words[bit / 64] |= 1 << (bit % 64);
        }
        self.inserted_count += 1;
    }

    pub fn query(&self, x: u64) -> bool {
        (0..self.hashes).all(|i| {
            let bit = self.bit_for(x, i);
            self.words[bit / 64] & (1 << (bit % 64)) != 0
        })
    }

    pub fn clear(&mut self) {
        self.words.fill(0);
        self.inserted_count = 0;
    }
}

/// Telemetry for one epoch.
#[derive(Debug, Default, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub pref_issued: u64,
    pub pref_useful: u64,
    pub ocp_predictions: u64,
    pub ocp_correct: u64,
    pub bw_usage: f64,
    pub pollution_misses: u64,
    pub total_demand_misses: u64,
    pub cycles: u64,
    pub llc_misses: u64,
    pub llc_miss_latency_sum: u64,
    pub loads: u64,
    pub mispredicted_branches: u64,
}

/// Quantized state: prefetcher accuracy, OCP accuracy, bandwidth usage,
/// prefetch-induced cache pollution.
pub type AthenaState = [u8; 4];

pub fn quantize_state(stats: &EpochStats, buckets: u32) -> AthenaState {
    let ratio = |num: u64, den: u64| -> f64 {
        if den == 0 {
            0.0
        } else {
            (num as f64 / den as f64).clamp(0.0, 1.0)
        }
    };
    let features = [
        ratio(stats.pref_useful, stats.pref_issued),
        ratio(stats.ocp_correct, stats.ocp_predictions),
        stats.bw_usage.clamp(0.0, 1.0),
        ratio(stats.pollution_misses, stats.total_demand_misses),
    ];
    features.map(|f| (((f * buckets as f64) as u32).min(buckets - 1)) as u8)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordChoice {
    Neither,
    OcpOnly,
    PrefOnly,
    Both,
}

pub const COORD_CHOICES: [CoordChoice; 4] = [
    CoordChoice::Neither,
    CoordChoice::OcpOnly,
    CoordChoice::PrefOnly,
    CoordChoice::Both,
];

impl CoordChoice {
    pub fn from_index(i: usize) -> Self {
        COORD_CHOICES[i]
    }

    pub fn enables_prefetch(self) -> bool {
        matches!(self, CoordChoice::PrefOnly | CoordChoice::Both)
    }

    pub fn enables_ocp(self) -> bool {
        matches!(self, CoordChoice::OcpOnly | CoordChoice::Both)
    }

    pub fn label(self) -> &'static str {
        match self {
            CoordChoice::Neither => "none",
            CoordChoice::OcpOnly => "ocp",
            CoordChoice::PrefOnly => "pref",
            CoordChoice::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AthenaAction {
    pub selection: CoordChoice,
    pub degree: u32,
}

impl AthenaAction {
    pub fn new(selection: CoordChoice, degree: u32) -> Self {
        let degree = if selection.enables_prefetch() { degree } else { 0 };
        Self { selection, degree }
    }
}

/// Prefetch degree from Q-value confidence: floor(min(1, max(0, dq)/tau) * d_max).
pub fn degree_from_confidence(delta_q: f64, tau: f64, d_max: u32) -> u32 {
    let r = (delta_q / tau).clamp(0.0, 1.0);
    (r * d_max as f64).floor() as u32
}

/// Composite reward: correlated metric improvements minus uncorrelated ones.
/// All constituents are lower-is-better; a positive delta means the metric
/// improved from the previous epoch.
pub fn compute_reward(
    prev: &EpochStats,
    cur: &EpochStats,
    weights: &RewardWeights,
    mode: RewardMode,
) -> f64 {
    let delta = |p: u64, c: u64| -> f64 {
        let diff = p as f64 - c as f64;
        match mode {
            RewardMode::Relative => diff / (p.max(1) as f64),
            RewardMode::Raw => diff,
        }
    };
    let corr = weights.cycle * delta(prev.cycles, cur.cycles)
        + weights.llc_misses * delta(prev.llc_misses, cur.llc_misses)
        + weights.llc_miss_latency * delta(prev.llc_miss_latency_sum, cur.llc_miss_latency_sum);
    let uncorr = weights.loads * delta(prev.loads, cur.loads)
        + weights.mispredicted_branches
            * delta(prev.mispredicted_branches, cur.mispredicted_branches);
    corr - uncorr
}

/// Plane-partitioned Q-table: the Q-value of a state-action pair is the sum
/// over planes of an 8-bit fixed-point partial value.
#[derive(Debug, Clone)]
pub struct AthenaQTable {
    planes: Vec<Vec<i8>>,
    rows: usize,
    n_actions: usize,
}

fn pack_state(state: &AthenaState) -> u64 {
    u64::from_le_bytes([state[0], state[1], state[2], state[3], 0, 0, 0, 0])
}

impl AthenaQTable {
    pub fn new(planes: usize, rows: usize) -> Self {
        assert!(rows.is_power_of_two());
        // Optimistic initialization, scaled to the composite-reward range so
        // every action gets tried despite epsilon = 0 while the bootstrap
        // term cannot keep re-inflating visited pairs from untried neighbors.
        let init = ((2 << ATHENA_Q_FRAC_BITS) / planes as i32).max(1) as i8;
        Self {
            planes: vec![vec![init; rows * 4]; planes],
            rows,
            n_actions: 4,
        }
    }

    fn row(&self, plane: usize, packed: u64) -> usize {
        table_row(packed, shift_constant(ATHENA_SHIFT_BASE + plane), self.rows)
    }

    /// Sum of partial values, in fixed-point units.
    pub fn lookup_units(&self, state: &AthenaState, action: usize) -> i32 {
        debug_assert!(action < self.n_actions);
        let packed = pack_state(state);
        self.planes
            .iter()
            .enumerate()
            .map(|(p, cells)| cells[self.row(p, packed) * self.n_actions + action] as i32)
            .sum()
    }

    pub fn q_value(&self, state: &AthenaState, action: usize) -> f64 {
        self.lookup_units(state, action) as f64 / UNITS_PER_ONE
    }

    /// Greedy action with lowest-index tie-break.
    pub fn best_action(&self, state: &AthenaState) -> usize {
        let mut best = (0usize, self.lookup_units(state, 0));
        for a in 1..self.n_actions {
            let q = self.lookup_units(state, a);
            if q > best.1 {
                best = (a, q);
            }
        }
        best.0
    }

    /// Total delta of one SARSA step, in fixed-point units of the summed
    /// Q-value.
    pub fn sarsa_delta_units(
        &self,
        s1: &AthenaState,
        a1: usize,
        reward: f64,
        s2: &AthenaState,
        a2: usize,
        alpha: f64,
        gamma: f64,
    ) -> i32 {
        let q1 = self.q_value(s1, a1);
        let q2 = self.q_value(s2, a2);
        let delta = alpha * (reward + gamma * q2 - q1);
        (delta * UNITS_PER_ONE).round() as i32
    }

    /// Apply a total delta, split across planes with the remainder in the
    /// first plane so the summed Q-value moves by exactly `delta_units`.
    /// Each cell saturates at the 8-bit bounds.
    pub fn apply_delta(&mut self, state: &AthenaState, action: usize, delta_units: i32) {
        let packed = pack_state(state);
        let planes = self.planes.len() as i32;
        let share = delta_units / planes;
        let first = delta_units - share * (planes - 1);
        for p in 0..self.planes.len() {
            let row = self.row(p, packed);
            let add = if p == 0 { first } else { share };
            let cell = &mut self.planes[p][row * self.n_actions + action];
            *cell = (*cell as i32 + add).clamp(i8::MIN as i32, i8::MAX as i32) as i8;
        }
    }

    pub fn set_plane_cell(&mut self, plane: usize, row: usize, action: usize, units: i8) {
        self.planes[plane][row * self.n_actions + action] = units;
    }

    pub fn plane_cell(&self, plane: usize, row: usize, action: usize) -> i8 {
        self.planes[plane][row * self.n_actions + action]
    }

    pub fn plane_row_of(&self, plane: usize, state: &AthenaState) -> usize {
        self.row(plane, pack_state(state))
    }

    pub fn n_planes(&self) -> usize {
        self.planes.len()
    }

    pub fn fill_all(&mut self, units: i8) {
        for plane in &mut self.planes {
            plane.fill(units);
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct PendingUpdate {
    apply_at: u64,
    state: AthenaState,
    action: usize,
    delta_units: i32,
}

/// One SARSA credit event, for diagnostics.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct UpdateTrace {
    pub epoch: u64,
    pub s1: AthenaState,
    pub a1: usize,
    pub reward: f64,
    pub q1_units: i32,
    pub s2: AthenaState,
    pub a2: usize,
    pub q2_units: i32,
    pub delta_units: i32,
}

/// One epoch's log row.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpochLog {
    pub epoch: u64,
    pub state: AthenaState,
    pub action: CoordChoice,
    pub degree: u32,
    pub reward: f64,
    pub stats: EpochStats,
}

/// The coordinator agent; telemetry flows in through the `note_*` hooks and
/// one action comes out per epoch boundary.
pub struct AthenaAgent {
    pub cfg: AthenaConfig,
    pub table: AthenaQTable,
    rng: SplitMix64,
    accuracy_bloom: BloomFilter,
    pollution_bloom: BloomFilter,
    cur: EpochStats,
    prev_stats: Option<EpochStats>,
    prev_state_action: Option<(AthenaState, usize)>,
    pending: Vec<PendingUpdate>,
    miss_completions: VecDeque<(u64, u64)>,
    epoch_start_cycles: u64,
    pub epoch_index: u64,
    pub current: AthenaAction,
    pub log: Vec<EpochLog>,
    pub update_log: Vec<UpdateTrace>,
    pub action_histogram: [u64; 4],
    d_max: u32,
}

impl AthenaAgent {
    pub fn new(cfg: AthenaConfig, seed: u64, d_max: u32) -> Self {
        cfg.validate().expect("validated by the harness");
        Self {
            table: AthenaQTable::new(cfg.planes, cfg.rows),
            rng: SplitMix64::from_label(seed, "athena-explore"),
            accuracy_bloom: BloomFilter::new(cfg.bloom_bits, cfg.bloom_hashes),
            pollution_bloom: BloomFilter::new(cfg.bloom_bits, cfg.bloom_hashes),
            cur: EpochStats::default(),
            prev_stats: None,
            prev_state_action: None,
            pending: Vec::new(),
            miss_completions: VecDeque::new(),
            epoch_start_cycles: 0,
            epoch_index: 0,
            // Coordination takes effect from the first boundary; start wide open.
            current: AthenaAction::new(CoordChoice::Both, d_max),
            log: Vec::new(),
            update_log: Vec::new(),
            action_histogram: [0; 4],
            cfg,
            d_max,
        }
    }

    pub fn note_prefetch_issued(&mut self, line: u64) {
        self.cur.pref_issued += 1;
        self.accuracy_bloom.insert(line);
    }

    pub fn note_demand_access(&mut self, line: u64) {
        if self.accuracy_bloom.query(line) {
            self.cur.pref_useful += 1;
        }
    }

    pub fn note_ocp_prediction(&mut self, correct: bool) {
        self.cur.ocp_predictions += 1;
        if correct {
            self.cur.ocp_correct += 1;
        }
    }

    pub fn note_llc_eviction_by_prefetch(&mut self, line: u64) {
        self.pollution_bloom.insert(line);
    }

    pub fn note_llc_demand_miss(&mut self, line: u64) {
        self.cur.total_demand_misses += 1;
        if self.pollution_bloom.query(line) {
            self.cur.pollution_misses += 1;
        }
    }

    /// A demand load missed the LLC; the miss is attributed to the epoch in
    /// which it completes.
    pub fn note_miss_issued(&mut self, completion_cycle: u64, latency: u64) {
        self.miss_completions.push_back((completion_cycle, latency));
    }

    pub fn note_load(&mut self) {
        self.cur.loads += 1;
    }

    pub fn note_branch(&mut self, mispredicted: bool) {
        if mispredicted {
            self.cur.mispredicted_branches += 1;
        }
    }

    /// Apply Q-table updates whose delay has elapsed.
    pub fn flush_pending(&mut self, now: u64) {
        let mut i = 0;
        while i < self.pending.len() {
            if self.pending[i].apply_at <= now {
                let u = self.pending.remove(i);
                self.table.apply_delta(&u.state, u.action, u.delta_units);
            } else {
                i += 1;
            }
        }
    }

    fn select(&mut self, state: &AthenaState) -> (usize, u32) {
        let explored = self.rng.chance(self.cfg.epsilon);
        let idx = if explored {
            self.rng.gen_range(4) as usize
        } else {
            self.table.best_action(state)
        };
        let degree = if COORD_CHOICES[idx].enables_prefetch() {
            if explored {
                // Exploring an action means executing it outright; the
                // confidence throttle applies to greedy choices only.
                self.d_max
            } else {
                let q = self.table.q_value(state, idx);
                let avg: f64 = (0..4)
                    .filter(|&a| a != idx)
                    .map(|a| self.table.q_value(state, a))
                    .sum::<f64>()
                    / 3.0;
                degree_from_confidence(q - avg, self.cfg.tau, self.d_max)
            }
        } else {
            0
        };
        (idx, degree)
    }

    /// Close the current epoch at state cycle `now` and perf cycle total
    /// `cycles_total`; returns the coordination action for the next epoch.
    pub fn epoch_boundary(&mut self, now: u64, cycles_total: u64, bw_usage: f64) -> AthenaAction {
        self.flush_pending(now);

        self.cur.cycles = cycles_total.saturating_sub(self.epoch_start_cycles);
        self.epoch_start_cycles = cycles_total;
        self.cur.bw_usage = bw_usage;
        // Completions are not monotone in issue order; scan the whole queue.
        self.miss_completions.retain(|&(completion, latency)| {
            if completion <= cycles_total {
                self.cur.llc_misses += 1;
                self.cur.llc_miss_latency_sum += latency;
                false
            } else {
                true
            }
        });

        let state = quantize_state(&self.cur, self.cfg.feature_buckets);
        let reward = self
            .prev_stats
            .as_ref()
            .map(|prev| compute_reward(prev, &self.cur, &self.cfg.reward_weights, self.cfg.reward_mode))
            .unwrap_or(0.0);
        let (action_idx, degree) = self.select(&state);

        if let Some((s1, a1)) = self.prev_state_action {
            let delta = self
                .table
                .sarsa_delta_units(&s1, a1, reward, &state, action_idx, self.cfg.alpha, self.cfg.gamma);
            self.update_log.push(UpdateTrace {
                epoch: self.epoch_index,
                s1,
                a1,
                reward,
                q1_units: self.table.lookup_units(&s1, a1),
                s2: state,
                a2: action_idx,
                q2_units: self.table.lookup_units(&state, action_idx),
                delta_units: delta,
            });
            self.pending.push(PendingUpdate {
                apply_at: now + self.cfg.update_delay_cycles,
                state: s1,
                action: a1,
                delta_units: delta,
            });
        }

        let action = AthenaAction::new(COORD_CHOICES[action_idx], degree);
        self.log.push(EpochLog {
            epoch: self.epoch_index,
            state,
            action: action.selection,
            degree: action.degree,
            reward,
            stats: self.cur,
        });
        self.action_histogram[action_idx] += 1;

        self.prev_state_action = Some((state, action_idx));
        self.prev_stats = Some(self.cur);
        self.cur = EpochStats::default();
        self.accuracy_bloom.clear();
        self.pollution_bloom.clear();
        self.epoch_index += 1;
        self.current = action;
        action
    }

    pub fn prev_epoch_stats(&self) -> Option<&EpochStats> {
        self.prev_stats.as_ref()
    }
}

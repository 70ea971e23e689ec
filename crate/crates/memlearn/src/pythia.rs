//! RL-based prefetcher: feature extraction, tile-coded Q-value store,
//! epsilon-greedy offset selection, and an evaluation queue that assigns
//! five-level rewards and drives SARSA updates on eviction.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::hash::{mix64, shift_constant, table_row};
use crate::prefetch::{DemandEvent, PrefetchDecision, Prefetcher};
use crate::rng::SplitMix64;
use crate::trace::{LINE_BYTES, LINES_PER_PAGE};

/// Q-values are 32-bit fixed point with 16 fractional bits.
pub const Q_FRAC_BITS: u32 = 16;
const Q_ONE: i64 = 1 << Q_FRAC_BITS;

pub fn to_fixed(x: f64) -> i32 {
    (x * Q_ONE as f64).round() as i32
}

pub fn fixed_to_f64(q: i32) -> f64 {
    q as f64 / Q_ONE as f64
}

fn mul_fixed(a: i32, b: i32) -> i32 {
    (((a as i64) * (b as i64)) >> Q_FRAC_BITS) as i32
}

/// Reward level values, tuned constants of the basic configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardLevels {
    /// Accurate and timely.
    pub accurate_timely: i32,
    /// Accurate but late.
    pub accurate_late: i32,
    /// Out-of-page target (loss of coverage).
    pub cross_page: i32,
    /// Inaccurate under high bandwidth usage.
    pub inaccurate_high_bw: i32,
    /// Inaccurate under low bandwidth usage.
    pub inaccurate_low_bw: i32,
    /// No-prefetch under high bandwidth usage.
    pub no_prefetch_high_bw: i32,
    /// No-prefetch under low bandwidth usage.
    pub no_prefetch_low_bw: i32,
}

impl Default for RewardLevels {
    fn default() -> Self {
        Self {
            accurate_timely: 20,
            accurate_late: 12,
            cross_page: -12,
            inaccurate_high_bw: -14,
            inaccurate_low_bw: -8,
            no_prefetch_high_bw: -2,
            no_prefetch_low_bw: -4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PythiaConfig {
    /// Candidate prefetch offsets in cachelines; must contain 0 (no-prefetch).
    pub actions: Vec<i64>,
    pub rewards: RewardLevels,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub vaults: usize,
    pub planes_per_vault: usize,
    pub plane_rows: usize,
    /// Nominal stored Q-value width; values are kept in wider fixed point.
    pub q_bits: u32,
    pub eq_size: usize,
    /// Bandwidth usage at or above this fraction counts as "high".
    pub high_bw_threshold: f64,
    /// Record per-decision telemetry (state, action, explored).
    pub track_decisions: bool,
}

impl Default for PythiaConfig {
    fn default() -> Self {
        Self {
            actions: vec![-6, -3, -1, 0, 1, 3, 4, 5, 10, 11, 12, 16, 22, 23, 30, 32],
            rewards: RewardLevels::default(),
            alpha: 0.0065,
            gamma: 0.556,
            epsilon: 0.002,
            vaults: 2,
            planes_per_vault: 3,
            plane_rows: 128,
            q_bits: 16,
            eq_size: 256,
            high_bw_threshold: 0.5,
            track_decisions: false,
        }
    }
}

impl PythiaConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !self.actions.contains(&0) {
            return Err("pythia.actions must contain the no-prefetch offset 0".into());
        }
        if self.actions.is_empty() || self.actions.len() > 64 {
            return Err("pythia.actions must hold between 1 and 64 offsets".into());
        }
        if self
            .actions
            .iter()
            .any(|o| o.unsigned_abs() >= LINES_PER_PAGE)
        {
            return Err("pythia.actions offsets must lie in [-63, 63]".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(format!("pythia.alpha {} outside (0, 1]", self.alpha));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(format!(
                "pythia.gamma {} outside [0, 1); the init constant 1/(1-gamma) requires gamma < 1",
                self.gamma
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(format!("pythia.epsilon {} outside [0, 1]", self.epsilon));
        }
        if self.vaults == 0 || self.vaults > 2 {
            return Err("pythia.vaults must be 1 or 2 (one per program feature)".into());
        }
        if self.planes_per_vault == 0 {
            return Err("pythia.planes_per_vault must be positive".into());
        }
        if !self.plane_rows.is_power_of_two() {
            return Err("pythia.plane_rows must be a power of two".into());
        }
        if self.eq_size == 0 {
            return Err("pythia.eq_size must be positive".into());
        }
        Ok(())
    }
}

/// Zigzag-encode a signed delta so small magnitudes fold into few bits.
fn zigzag(d: i64) -> u64 {
    ((d << 1) ^ (d >> 63)) as u64
}

/// Program feature 1: trigger PC combined with the signed cacheline delta from
/// the same PC's previous access. Injective for pc below 2^57 and deltas in
/// [-63, 63].
pub fn feature_pc_delta(pc: u64, delta_lines: i64) -> u64 {
    (pc << 7) ^ zigzag(delta_lines)
}

/// Program feature 2: shift-xor fold of the last four global cacheline deltas,
/// oldest to newest, 7 bits each.
pub fn feature_delta_seq(deltas: &[i64; 4]) -> u64 {
    deltas
        .iter()
        .fold(0u64, |acc, &d| (acc << 7) ^ (zigzag(d) & 0x7f))
}

/// Reduce a raw feature to the 21-bit state component used for plane hashing.
pub fn reduce_feature(raw: u64) -> u64 {
    mix64(raw) & 0x1f_ffff
}

/// State vector: one reduced feature per vault.
pub type StateVector = [u64; 2];

#[derive(Debug, Clone)]
struct Plane {
    shift: u64,
    cells: Vec<i32>,
}

/// Vault-per-feature Q-value store with tile-coded planes. The Q-value of a
/// state-action pair is the maximum over vaults of the per-vault plane sums.
#[derive(Debug, Clone)]
pub struct QvStore {
    vaults: Vec<Vec<Plane>>,
    rows: usize,
    n_actions: usize,
    init_fixed: i32,
}

impl QvStore {
    pub fn new(
        vaults: usize,
        planes_per_vault: usize,
        rows: usize,
        n_actions: usize,
        gamma: f64,
    ) -> Self {
        assert!(rows.is_power_of_two());
        assert!(gamma < 1.0);
        let init_fixed = to_fixed(1.0 / (1.0 - gamma));
        // Distribute the optimistic initial value across planes so a fresh
        // lookup returns exactly 1/(1-gamma).
        let planes = planes_per_vault as i32;
        let base = init_fixed / planes;
        let first = init_fixed - base * (planes - 1);
        let vaults = (0..vaults)
            .map(|v| {
                (0..planes_per_vault)
                    .map(|p| Plane {
                        shift: shift_constant(v * planes_per_vault + p),
                        cells: vec![if p == 0 { first } else { base }; rows * n_actions],
                    })
                    .collect()
            })
            .collect();
        Self {
            vaults,
            rows,
            n_actions,
            init_fixed,
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_vaults(&self) -> usize {
        self.vaults.len()
    }

    pub fn planes_per_vault(&self) -> usize {
        self.vaults[0].len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn init_fixed(&self) -> i32 {
        self.init_fixed
    }

    pub fn plane_shift(&self, vault: usize, plane: usize) -> u64 {
        self.vaults[vault][plane].shift
    }

    pub fn plane_cell(&self, vault: usize, plane: usize, row: usize, action: usize) -> i32 {
        self.vaults[vault][plane].cells[row * self.n_actions + action]
    }

    pub fn set_plane_cell(&mut self, vault: usize, plane: usize, row: usize, action: usize, q: i32) {
        let n = self.n_actions;
        self.vaults[vault][plane].cells[row * n + action] = q;
    }

    /// Testing hook: add a constant to every cell of every plane.
    #[doc(hidden)]
    pub fn nudge_all_cells(&mut self, delta: i32) {
        for vault in &mut self.vaults {
            for plane in vault {
                for c in &mut plane.cells {
                    *c = c.saturating_add(delta);
                }
            }
        }
    }

    fn vault_sum(&self, vault: usize, feature: u64, action: usize) -> i64 {
        self.vaults[vault]
            .iter()
            .map(|p| p.cells[table_row(feature, p.shift, self.rows) * self.n_actions + action] as i64)
            .sum()
    }

    /// Q(S, A) = max over vaults of the vault's plane sum.
    pub fn lookup(&self, state: &[u64], action: usize) -> i32 {
        debug_assert_eq!(state.len(), self.vaults.len());
        (0..self.vaults.len())
            .map(|v| self.vault_sum(v, state[v], action))
            .max()
            .expect("at least one vault") as i32
    }

    /// Greedy action: argmax over actions, ties broken by the lowest index.
    pub fn best_action(&self, state: &[u64]) -> (usize, i32) {
        let mut best = (0usize, self.lookup(state, 0));
        for a in 1..self.n_actions {
            let q = self.lookup(state, a);
            if q > best.1 {
                best = (a, q);
            }
        }
        best
    }

    /// SARSA step on fixed-point values. The delta lands in the vault that
    /// attained the max for (s1, a1), split across its planes so the vault sum
    /// moves by exactly the scalar SARSA delta.
    pub fn sarsa_update(
        &mut self,
        s1: &[u64],
        a1: usize,
        reward_fixed: i32,
        s2: &[u64],
        a2: usize,
        alpha_fixed: i32,
        gamma_fixed: i32,
    ) {
        let q1 = self.lookup(s1, a1);
        let q2 = self.lookup(s2, a2);
        let target = reward_fixed as i64 + mul_fixed(gamma_fixed, q2) as i64;
        let delta = mul_fixed(alpha_fixed, (target - q1 as i64) as i32);

        let winner = (0..self.vaults.len())
            .max_by_key(|&v| (self.vault_sum(v, s1[v], a1), std::cmp::Reverse(v)))
            .expect("at least one vault");
        let planes = self.vaults[winner].len() as i32;
        let share = delta / planes;
        let first = delta - share * (planes - 1);
        let feature = s1[winner];
        let n = self.n_actions;
        for (p, plane) in self.vaults[winner].iter_mut().enumerate() {
            let row = table_row(feature, plane.shift, self.rows);
            let add = if p == 0 { first } else { share };
            let cell = &mut plane.cells[row * n + a1];
            *cell = cell.saturating_add(add);
        }
    }
}

/// One tracked action awaiting its reward.
#[derive(Debug, Clone, Copy)]
pub struct EqEntry {
    pub state: StateVector,
    pub action_index: usize,
    /// Cacheline address of the emitted prefetch; `None` for no-prefetch and
    /// out-of-page actions.
    pub prefetch_line: Option<u64>,
    pub filled: bool,
    pub reward: Option<i32>,
}

#[derive(Debug, Default, Clone, Copy, Serialize)]
pub struct PythiaStats {
    pub decisions: u64,
    pub explores: u64,
    pub rewards_assigned: u64,
    pub entries_evicted: u64,
    /// Entries that reached eviction without a reward before the inaccurate
    /// reward was applied; stays zero by construction.
    pub evicted_missing_reward: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct DecisionRecord {
    pub state: StateVector,
    pub action_index: usize,
    pub explored: bool,
}

pub struct PythiaAgent {
    pub cfg: PythiaConfig,
    pub qv: QvStore,
    eq: VecDeque<EqEntry>,
    per_pc_last_line: HashMap<u64, u64>,
    prev_global_line: Option<u64>,
    global_deltas: [i64; 4],
    rng: SplitMix64,
    alpha_fixed: i32,
    gamma_fixed: i32,
    pub stats: PythiaStats,
    pub decision_log: Vec<DecisionRecord>,
}

impl PythiaAgent {
    pub fn new(cfg: PythiaConfig, seed: u64) -> Self {
        cfg.validate().expect("validated by the harness");
        let qv = QvStore::new(
            cfg.vaults,
            cfg.planes_per_vault,
            cfg.plane_rows,
            cfg.actions.len(),
            cfg.gamma,
        );
        Self {
            alpha_fixed: to_fixed(cfg.alpha),
            gamma_fixed: to_fixed(cfg.gamma),
            qv,
            eq: VecDeque::with_capacity(cfg.eq_size + 1),
            per_pc_last_line: HashMap::new(),
            prev_global_line: None,
            global_deltas: [0; 4],
            rng: SplitMix64::from_label(seed, "pythia-explore"),
            stats: PythiaStats::default(),
            decision_log: Vec::new(),
            cfg,
        }
    }

    /// Extract the two-feature state for a demand at `line_addr` and update
    /// the per-PC and global delta histories.
    pub fn extract_state(&mut self, pc: u64, line_addr: u64) -> StateVector {
        let line = line_addr / LINE_BYTES;
        let pc_delta = match self.per_pc_last_line.insert(pc, line) {
            Some(prev) => line as i64 - prev as i64,
            None => 0,
        };
        let state = [
            reduce_feature(feature_pc_delta(pc, pc_delta)),
            reduce_feature(feature_delta_seq(&self.global_deltas)),
        ];
        let global_delta = match self.prev_global_line.replace(line) {
            Some(prev) => line as i64 - prev as i64,
            None => 0,
        };
        self.global_deltas.rotate_left(1);
        self.global_deltas[3] = global_delta;
        state
    }

    fn select_action(&mut self, state: &StateVector) -> (usize, bool) {
        let explored = self.rng.chance(self.cfg.epsilon);
        let idx = if explored {
            self.rng.gen_range(self.cfg.actions.len() as u64) as usize
        } else {
            self.qv.best_action(state).0
        };
        self.stats.decisions += 1;
        if explored {
            self.stats.explores += 1;
        }
        (idx, explored)
    }

    fn assign_reward(entry: &mut EqEntry, reward: i32, stats: &mut PythiaStats) {
        debug_assert!(entry.reward.is_none(), "rewards are write-once");
        entry.reward = Some(reward);
        stats.rewards_assigned += 1;
    }

    /// One demand access at the training level. Returns the cacheline address
    /// to prefetch, if the selected action emits one.
    pub fn step(&mut self, pc: u64, addr: u64, bw_usage: f64, now: u64) -> Option<u64> {
        let _ = now;
        let line_addr = addr & !(LINE_BYTES - 1);
        let rewards = self.cfg.rewards;
        let high_bw = bw_usage >= self.cfg.high_bw_threshold;

        // Reward the oldest matching entry: the prefetched line got demanded.
        if let Some(entry) = self
            .eq
            .iter_mut()
            .find(|e| e.prefetch_line == Some(line_addr) && e.reward.is_none())
        {
            let r = if entry.filled {
                rewards.accurate_timely
            } else {
                rewards.accurate_late
            };
            Self::assign_reward(entry, r, &mut self.stats);
        }

        let state = self.extract_state(pc, line_addr);
        let (action_index, explored) = self.select_action(&state);
        if self.cfg.track_decisions {
            self.decision_log.push(DecisionRecord {
                state,
                action_index,
                explored,
            });
        }

        let offset = self.cfg.actions[action_index];
        let line = line_addr / LINE_BYTES;
        let mut entry = EqEntry {
            state,
            action_index,
            prefetch_line: None,
            filled: false,
            reward: None,
        };
        let mut emitted = None;
        if offset == 0 {
            let r = if high_bw {
                rewards.no_prefetch_high_bw
            } else {
                rewards.no_prefetch_low_bw
            };
            Self::assign_reward(&mut entry, r, &mut self.stats);
        } else {
            let target = line as i64 + offset;
            let in_page = target >= 0
                && (target as u64) / LINES_PER_PAGE == line / LINES_PER_PAGE;
            if in_page {
                let target_addr = target as u64 * LINE_BYTES;
                entry.prefetch_line = Some(target_addr);
                emitted = Some(target_addr);
            } else {
                Self::assign_reward(&mut entry, rewards.cross_page, &mut self.stats);
            }
        }

        self.eq.push_back(entry);
        if self.eq.len() > self.cfg.eq_size {
            let mut evicted = self.eq.pop_front().expect("eq non-empty");
            self.stats.entries_evicted += 1;
            if evicted.reward.is_none() {
                let r = if high_bw {
                    rewards.inaccurate_high_bw
                } else {
                    rewards.inaccurate_low_bw
                };
                Self::assign_reward(&mut evicted, r, &mut self.stats);
            }
            if evicted.reward.is_none() {
                self.stats.evicted_missing_reward += 1;
            }
            // SARSA: the evicted pair is (S1, A1); the newest entry is (S2, A2).
            let newest = *self.eq.back().expect("just pushed");
            let reward_fixed = to_fixed(evicted.reward.expect("assigned above") as f64);
            self.qv.sarsa_update(
                &evicted.state,
                evicted.action_index,
                reward_fixed,
                &newest.state,
                newest.action_index,
                self.alpha_fixed,
                self.gamma_fixed,
            );
        }
        emitted
    }

    /// Mark the matching EQ entry filled; no-op if already evicted.
    pub fn on_prefetch_fill(&mut self, line_addr: u64) {
        if let Some(entry) = self
            .eq
            .iter_mut()
            .find(|e| e.prefetch_line == Some(line_addr) && !e.filled)
        {
            entry.filled = true;
        }
    }

    pub fn eq_len(&self) -> usize {
        self.eq.len()
    }

    pub fn eq_iter(&self) -> impl Iterator<Item = &EqEntry> {
        self.eq.iter()
    }
}

/// Prefetcher-port adapter. Degree 0 suppresses emissions while the agent
/// keeps observing demands and learning.
pub struct PythiaPrefetcher {
    pub agent: PythiaAgent,
    degree: u32,
}

impl PythiaPrefetcher {
    pub fn new(cfg: PythiaConfig, seed: u64) -> Self {
        Self {
            agent: PythiaAgent::new(cfg, seed),
            degree: 1,
        }
    }
}

impl Prefetcher for PythiaPrefetcher {
    fn on_demand(&mut self, ev: &DemandEvent) -> PrefetchDecision {
        let emitted = self.agent.step(ev.pc, ev.addr, ev.bw_usage, ev.now);
        let mut decision = PrefetchDecision::empty(ev.pc, ev.addr);
        if self.degree > 0 {
            if let Some(line) = emitted {
                decision.addrs.push(line);
            }
        }
        decision
    }

    fn on_fill(&mut self, addr: u64, _now: u64) {
        self.agent.on_prefetch_fill(addr);
    }

    fn set_degree(&mut self, degree: u32) {
        self.degree = degree.min(1);
    }

    fn degree(&self) -> u32 {
        self.degree
    }

    fn d_max(&self) -> u32 {
        1
    }

    fn name(&self) -> &'static str {
        "pythia"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_cell_store(gamma: f64) -> QvStore {
        QvStore::new(1, 1, 8, 4, gamma)
    }

    #[test]
    fn fresh_store_returns_init_constant_exactly() {
        let qv = QvStore::new(2, 3, 128, 16, 0.5);
        let state = [123u64, 456u64];
        for a in 0..16 {
            assert_eq!(qv.lookup(&state, a), to_fixed(2.0));
        }
        // Odd plane counts distribute the remainder, still exact.
        let qv = QvStore::new(2, 3, 8, 4, 0.556);
        assert_eq!(qv.lookup(&[1, 2], 0), to_fixed(1.0 / (1.0 - 0.556)));
    }

    #[test]
    fn single_written_cell_reads_back() {
        let mut qv = one_cell_store(0.5);
        let state = [77u64];
        let row = table_row(77, qv.plane_shift(0, 0), 8);
        qv.set_plane_cell(0, 0, row, 2, to_fixed(7.25));
        assert_eq!(qv.lookup(&[77u64], 2), to_fixed(7.25));
        let _ = state;
    }

    #[test]
    fn sarsa_matches_hand_computed_example() {
        // Q(s1,a1)=10, r=20, gamma=0.5, Q(s2,a2)=8, alpha=0.1 -> 11.4.
        let mut qv = one_cell_store(0.5);
        let s1 = [1u64];
        let s2 = [2u64];
        let r1 = table_row(1, qv.plane_shift(0, 0), 8);
        let r2 = table_row(2, qv.plane_shift(0, 0), 8);
        assert_ne!(r1, r2, "chosen features must not collide in this test");
        qv.set_plane_cell(0, 0, r1, 0, to_fixed(10.0));
        qv.set_plane_cell(0, 0, r2, 1, to_fixed(8.0));
        qv.sarsa_update(&s1, 0, to_fixed(20.0), &s2, 1, to_fixed(0.1), to_fixed(0.5));
        let got = fixed_to_f64(qv.lookup(&s1, 0));
        assert!((got - 11.4).abs() < 1e-3, "got {got}");
    }

    #[test]
    fn sarsa_zero_alpha_is_identity() {
        let mut qv = QvStore::new(2, 3, 16, 4, 0.5);
        let before: Vec<i32> = (0..4).map(|a| qv.lookup(&[5, 6], a)).collect();
        qv.sarsa_update(&[5, 6], 1, to_fixed(20.0), &[7, 8], 2, 0, to_fixed(0.5));
        let after: Vec<i32> = (0..4).map(|a| qv.lookup(&[5, 6], a)).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn repeated_updates_converge_to_fixed_point() {
        // Terminal-style s2 folded in: fixed point q* satisfies
        // q* = r + gamma*q2 with q2 pinned at 0.
        let mut qv = one_cell_store(0.5);
        let s1 = [1u64];
        let s2 = [2u64];
        let r2 = table_row(2, qv.plane_shift(0, 0), 8);
        qv.set_plane_cell(0, 0, r2, 1, 0);
        for _ in 0..10_000 {
            qv.sarsa_update(&s1, 0, to_fixed(6.0), &s2, 1, to_fixed(0.05), to_fixed(0.5));
        }
        let q = fixed_to_f64(qv.lookup(&s1, 0));
        assert!((q - 6.0).abs() < 0.01, "q = {q}");
    }

    #[test]
    fn lookup_bound_under_bounded_rewards() {
        let mut qv = QvStore::new(2, 3, 8, 4, 0.556);
        let mut rng = SplitMix64::new(3);
        let bound = 20.0 / (1.0 - 0.556) + fixed_to_f64(qv.init_fixed());
        for _ in 0..50_000 {
            let s1 = [rng.gen_range(1 << 21), rng.gen_range(1 << 21)];
            let s2 = [rng.gen_range(1 << 21), rng.gen_range(1 << 21)];
            let a1 = rng.gen_range(4) as usize;
            let a2 = rng.gen_range(4) as usize;
            let r = (rng.gen_range(41) as i64 - 20) as f64;
            qv.sarsa_update(&s1, a1, to_fixed(r), &s2, a2, to_fixed(0.3), to_fixed(0.556));
            let q = fixed_to_f64(qv.lookup(&s1, a1)).abs();
            assert!(q <= bound + 1e-6, "|Q| = {q} exceeds bound {bound}");
        }
    }

    #[test]
    fn argmax_invariant_under_constant_shift() {
        let mut rng = SplitMix64::new(11);
        for _ in 0..50 {
            let mut qv = QvStore::new(2, 2, 8, 6, 0.5);
            for _ in 0..100 {
                let v = rng.gen_range(2) as usize;
                let p = rng.gen_range(2) as usize;
                let row = rng.gen_range(8) as usize;
                let a = rng.gen_range(6) as usize;
                qv.set_plane_cell(v, p, row, a, (rng.gen_range(2000) as i32 - 1000) << 8);
            }
            let state = [rng.gen_range(1 << 21), rng.gen_range(1 << 21)];
            let before = qv.best_action(&state).0;
            qv.nudge_all_cells(to_fixed(3.5));
            assert_eq!(qv.best_action(&state).0, before);
        }
    }

    #[test]
    fn feature_fold_is_injective_on_small_domain() {
        // Exhaustive scan over pc in [0, 2^16) and delta in [-63, 63].
        let mut seen = vec![false; 1 << 23];
        for pc in 0..(1u64 << 16) {
            for delta in -63i64..=63 {
                let f = feature_pc_delta(pc, delta);
                assert!((f as usize) < seen.len());
                assert!(!seen[f as usize], "collision at pc={pc:#x} delta={delta}");
                seen[f as usize] = true;
            }
        }
    }

    #[test]
    fn first_access_state_conventions() {
        let mut agent = PythiaAgent::new(PythiaConfig::default(), 1);
        let s = agent.extract_state(0x400, 100 * 64);
        assert_eq!(s[0], reduce_feature(feature_pc_delta(0x400, 0)));
        assert_eq!(s[1], reduce_feature(feature_delta_seq(&[0, 0, 0, 0])));
        // Same PC touching line 103 next: delta component +3.
        let s2 = agent.extract_state(0x400, 103 * 64);
        assert_eq!(s2[0], reduce_feature(feature_pc_delta(0x400, 3)));
    }

    fn quiet_config() -> PythiaConfig {
        PythiaConfig {
            epsilon: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn step_emits_offset_target_and_records_entry() {
        let mut agent = PythiaAgent::new(quiet_config(), 1);
        // Force the greedy choice to offset +3 by making it the unique max
        // everywhere: nudge its column in every cell of every plane.
        let plus3 = agent.cfg.actions.iter().position(|&o| o == 3).unwrap();
        for v in 0..agent.qv.n_vaults() {
            for p in 0..agent.qv.planes_per_vault() {
                for row in 0..agent.qv.rows() {
                    let q = agent.qv.plane_cell(v, p, row, plus3);
                    agent.qv.set_plane_cell(v, p, row, plus3, q + to_fixed(1.0));
                }
            }
        }
        let page = 0x77u64;
        let addr = page * 4096 + 40 * 64;
        let out = agent.step(0x400, addr, 0.0, 0);
        assert_eq!(out, Some(page * 4096 + 43 * 64));
        let entry = agent.eq_iter().last().unwrap();
        assert_eq!(entry.prefetch_line, Some(page * 4096 + 43 * 64));
        assert!(entry.reward.is_none());
    }

    #[test]
    fn out_of_page_action_gets_cross_page_reward() {
        let mut agent = PythiaAgent::new(quiet_config(), 1);
        let plus32 = agent.cfg.actions.iter().position(|&o| o == 32).unwrap();
        for v in 0..agent.qv.n_vaults() {
            for p in 0..agent.qv.planes_per_vault() {
                for row in 0..agent.qv.rows() {
                    let q = agent.qv.plane_cell(v, p, row, plus32);
                    agent.qv.set_plane_cell(v, p, row, plus32, q + to_fixed(1.0));
                }
            }
        }
        // Line 40 of a page: 40 + 32 = 72 >= 64 crosses the page.
        let out = agent.step(0x400, 0x77 * 4096 + 40 * 64, 0.0, 0);
        assert_eq!(out, None);
        let entry = agent.eq_iter().last().unwrap();
        assert_eq!(entry.reward, Some(-12));
    }

    #[test]
    fn demand_match_rewards_timely_or_late() {
        let mut agent = PythiaAgent::new(quiet_config(), 1);
        let line = 0x77u64 * 4096 + 43 * 64;
        // Fabricate an EQ entry as if a prefetch to `line` was emitted.
        agent.eq.push_back(EqEntry {
            state: [1, 2],
            action_index: 0,
            prefetch_line: Some(line),
            filled: false,
            reward: None,
        });
        // Demand before fill: accurate but late.
        agent.step(0x400, line, 0.0, 0);
        assert_eq!(agent.eq.front().unwrap().reward, Some(12));

        let mut agent = PythiaAgent::new(quiet_config(), 1);
        agent.eq.push_back(EqEntry {
            state: [1, 2],
            action_index: 0,
            prefetch_line: Some(line),
            filled: false,
            reward: None,
        });
        agent.on_prefetch_fill(line);
        assert!(agent.eq.front().unwrap().filled);
        agent.step(0x400, line, 0.0, 0);
        assert_eq!(agent.eq.front().unwrap().reward, Some(20));
        // A later fill is a no-op on the reward.
        agent.on_prefetch_fill(line);
        assert_eq!(agent.eq.front().unwrap().reward, Some(20));
    }

    #[test]
    fn fill_for_absent_entry_is_noop() {
        let mut agent = PythiaAgent::new(quiet_config(), 1);
        agent.on_prefetch_fill(0xdead_c0 * 64);
        assert_eq!(agent.eq_len(), 0);
    }

    #[test]
    fn eviction_assigns_inaccurate_reward_and_updates() {
        let mut cfg = quiet_config();
        cfg.eq_size = 4;
        let mut agent = PythiaAgent::new(cfg, 1);
        for i in 0..20u64 {
            agent.step(0x400, (0x77 * 64 + i) * 64, 0.9, i);
        }
        assert_eq!(agent.stats.entries_evicted, 16);
        // Reward totality: every evicted entry carried a reward.
        assert_eq!(agent.stats.evicted_missing_reward, 0);
        assert!(agent.stats.rewards_assigned >= agent.stats.entries_evicted);
    }

    #[test]
    fn epsilon_one_explores_uniformly() {
        let mut cfg = PythiaConfig::default();
        cfg.epsilon = 1.0;
        let mut agent = PythiaAgent::new(cfg, 42);
        let n = agent.cfg.actions.len();
        let mut counts = vec![0u64; n];
        let state = [1u64, 2u64];
        for _ in 0..16_000 {
            let (idx, explored) = agent.select_action(&state);
            assert!(explored);
            counts[idx] += 1;
        }
        for (a, &c) in counts.iter().enumerate() {
            assert!(
                (850..=1150).contains(&c),
                "action {a} drawn {c} times out of 16000"
            );
        }
    }

    #[test]
    fn epsilon_zero_is_pure_argmax_with_low_tiebreak() {
        let mut qv = one_cell_store(0.5);
        let row = table_row(9, qv.plane_shift(0, 0), 8);
        qv.set_plane_cell(0, 0, row, 2, to_fixed(50.0));
        qv.set_plane_cell(0, 0, row, 3, to_fixed(50.0));
        // Tie between 2 and 3: lowest index wins.
        assert_eq!(qv.best_action(&[9u64]).0, 2);
        qv.set_plane_cell(0, 0, row, 1, to_fixed(99.0));
        assert_eq!(qv.best_action(&[9u64]).0, 1);
    }

    #[test]
    fn config_validation_catches_bad_values() {
        let mut cfg = PythiaConfig::default();
        cfg.gamma = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = PythiaConfig::default();
        cfg.actions = vec![1, 3];
        assert!(cfg.validate().is_err());
        let mut cfg = PythiaConfig::default();
        cfg.plane_rows = 100;
        assert!(cfg.validate().is_err());
    }
}

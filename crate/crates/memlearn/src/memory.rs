//! Three-level cache hierarchy with a bandwidth-accounted DRAM channel.
//!
//! All state transitions (fills, evictions, LRU updates, channel occupancy)
//! are driven by the simulator's state clock, which is independent of any
//! speculative memory requests; speculative requests ride a dedicated port and
//! only shorten observed load latencies. This keeps toggling them a pure
//! timing effect.

use std::collections::VecDeque;

use serde::Serialize;

pub use crate::trace::{LINE_BYTES, PAGE_BYTES};

pub fn line_of(addr: u64) -> u64 {
    addr & !(LINE_BYTES - 1)
}

pub fn page_of(addr: u64) -> u64 {
    addr / PAGE_BYTES
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum HitLevel {
    L1,
    L2,
    Llc,
    Memory,
}

impl std::fmt::Display for HitLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            HitLevel::L1 => "L1",
            HitLevel::L2 => "L2",
            HitLevel::Llc => "LLC",
            HitLevel::Memory => "MEM",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Block {
    line: u64,
    valid: bool,
    dirty: bool,
    was_prefetch: bool,
    touched_since_fill: bool,
    stamp: u64,
}

/// Information about a block evicted from a cache level.
#[derive(Debug, Clone, Copy)]
pub struct Evicted {
    pub line: u64,
    pub was_unused_prefetch: bool,
}

/// One set-associative cache level with true-LRU replacement.
#[derive(Debug, Clone)]
pub struct CacheLevel {
    pub name: &'static str,
    sets: usize,
    ways: usize,
    pub round_trip: u64,
    blocks: Vec<Block>,
    tick: u64,
}

impl CacheLevel {
    pub fn new(name: &'static str, sets: usize, ways: usize, round_trip: u64) -> Self {
        assert!(sets.is_power_of_two(), "{name}: sets must be a power of two");
        assert!(ways > 0);
        Self {
            name,
            sets,
            ways,
            round_trip,
            blocks: vec![Block::default(); sets * ways],
            tick: 0,
        }
    }

    fn set_of(&self, line: u64) -> usize {
        ((line / LINE_BYTES) as usize) & (self.sets - 1)
    }

    fn slot(&self, line: u64) -> Option<usize> {
        let base = self.set_of(line) * self.ways;
        (base..base + self.ways).find(|&i| self.blocks[i].valid && self.blocks[i].line == line)
    }

    /// Residency check without touching recency state.
    pub fn contains(&self, line: u64) -> bool {
        self.slot(line).is_some()
    }

    /// LRU-updating lookup. Returns whether the hit landed on a block that was
    /// brought in by a prefetch and not yet demanded.
    pub fn access(&mut self, line: u64) -> Option<bool> {
        let idx = self.slot(line)?;
        self.tick += 1;
        let block = &mut self.blocks[idx];
        block.stamp = self.tick;
        let first_prefetch_hit = block.was_prefetch;
        block.was_prefetch = false;
        block.touched_since_fill = true;
        Some(first_prefetch_hit)
    }

    pub fn set_dirty(&mut self, line: u64) {
        if let Some(idx) = self.slot(line) {
            self.blocks[idx].dirty = true;
        }
    }

    /// Clear the prefetch marker without counting a hit (used when an upper
    /// level already consumed the first demand touch).
    pub fn absorb_prefetch_flag(&mut self, line: u64) {
        if let Some(idx) = self.slot(line) {
            self.blocks[idx].was_prefetch = false;
            self.blocks[idx].touched_since_fill = true;
        }
    }

    /// Insert `line`, evicting the LRU victim if the set is full. A fill of a
    /// resident line refreshes recency and keeps the stronger demand marking.
    pub fn fill(&mut self, line: u64, was_prefetch: bool) -> Option<Evicted> {
        self.tick += 1;
        if let Some(idx) = self.slot(line) {
            let block = &mut self.blocks[idx];
            block.stamp = self.tick;
            if !was_prefetch {
                block.was_prefetch = false;
            }
            return None;
        }
        let base = self.set_of(line) * self.ways;
        let victim = (base..base + self.ways)
            .min_by_key(|&i| {
                let b = &self.blocks[i];
                (b.valid, b.stamp)
            })
            .expect("ways > 0");
        let old = self.blocks[victim];
        self.blocks[victim] = Block {
            line,
            valid: true,
            dirty: false,
            was_prefetch,
            touched_since_fill: false,
            stamp: self.tick,
        };
        if old.valid {
            Some(Evicted {
                line: old.line,
                was_unused_prefetch: old.was_prefetch && !old.touched_since_fill,
            })
        } else {
            None
        }
    }

    /// Lines currently resident, in a stable order. Used for paired-run
    /// content comparisons.
    pub fn resident_lines(&self) -> Vec<u64> {
        let mut lines: Vec<u64> = self
            .blocks
            .iter()
            .filter(|b| b.valid)
            .map(|b| b.line)
            .collect();
        lines.sort_unstable();
        lines
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum DramKind {
    Demand,
    Prefetch,
    Hermes,
}

/// Ring of per-cycle byte counts used to measure bandwidth usage over a
/// sliding window. Writes run ahead of the clock by the channel backlog, so
/// the ring keeps headroom beyond the window length.
#[derive(Debug, Clone)]
struct BwWindow {
    cells: Vec<u64>,
    window: u64,
    /// Highest cycle ever written; cells beyond it are stale.
    frontier: u64,
}

const BW_HEADROOM: u64 = 8192;

impl BwWindow {
    fn new(window: u64) -> Self {
        assert!(window > 0);
        Self {
            cells: vec![0; (window + BW_HEADROOM) as usize],
            window,
            frontier: 0,
        }
    }

    fn add(&mut self, start: u64, bytes_per_cycle: u64, mut bytes: u64) {
        let len = self.cells.len() as u64;
        let mut c = start;
        while bytes > 0 {
            if c > self.frontier {
                // First write to this cycle; clear any stale content.
                let from = (self.frontier + 1).max(c.saturating_sub(len - 1));
                for z in from..=c {
                    self.cells[(z % len) as usize] = 0;
                }
                self.frontier = c;
            }
            let put = bytes.min(bytes_per_cycle);
            self.cells[(c % len) as usize] += put;
            bytes -= put;
            c += 1;
        }
    }

    fn usage(&self, now: u64, window: u64, bytes_per_cycle: u64) -> f64 {
        debug_assert!(window <= self.window);
        debug_assert!(
            self.frontier.saturating_sub(now) + window <= self.cells.len() as u64,
            "bandwidth window lost history: frontier {} now {now}",
            self.frontier
        );
        let len = self.cells.len() as u64;
        let lo = (now + 1).saturating_sub(window);
        let hi = now.min(self.frontier);
        let mut sum = 0u64;
        let mut c = lo;
        while c <= hi {
            sum += self.cells[(c % len) as usize];
            c += 1;
        }
        let cap = (window * bytes_per_cycle) as f64;
        (sum as f64 / cap).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone)]
struct HermesReq {
    line: u64,
    ready: u64,
}

/// Single-channel DRAM with fixed access latency and serial occupancy.
/// Speculative (Hermes) requests ride a dedicated port: they carry the same
/// device latency but never consume channel occupancy or window bytes.
#[derive(Debug, Clone)]
pub struct DramChannel {
    pub bytes_per_cycle: u64,
    pub access_latency: u64,
    pub window_cycles: u64,
    busy_until: u64,
    window: BwWindow,
    pub requests_demand: u64,
    pub requests_prefetch: u64,
    pub requests_hermes: u64,
    pub channel_bytes: u64,
    hermes_inflight: VecDeque<HermesReq>,
    pub hermes_delivered: u64,
    pub hermes_dropped: u64,
}

impl DramChannel {
    pub fn new(bytes_per_cycle: u64, access_latency: u64, window_cycles: u64) -> Self {
        assert!(bytes_per_cycle > 0);
        Self {
            bytes_per_cycle,
            access_latency,
            window_cycles,
            busy_until: 0,
            window: BwWindow::new(window_cycles),
            requests_demand: 0,
            requests_prefetch: 0,
            requests_hermes: 0,
            channel_bytes: 0,
            hermes_inflight: VecDeque::new(),
            hermes_delivered: 0,
            hermes_dropped: 0,
        }
    }

    fn occupancy(&self) -> u64 {
        LINE_BYTES.div_ceil(self.bytes_per_cycle)
    }

    /// Cycles of already-committed channel work beyond `now`.
    pub fn backlog(&self, now: u64) -> u64 {
        self.busy_until.saturating_sub(now)
    }

    /// Accept one fill-bound request; returns its ready cycle.
    pub fn enqueue(&mut self, kind: DramKind, now: u64) -> u64 {
        debug_assert!(kind != DramKind::Hermes);
        let start = now.max(self.busy_until);
        let ready = start + self.access_latency;
        self.busy_until = start + self.occupancy();
        self.window.add(start, self.bytes_per_cycle, LINE_BYTES);
        self.channel_bytes += LINE_BYTES;
        match kind {
            DramKind::Demand => self.requests_demand += 1,
            DramKind::Prefetch => self.requests_prefetch += 1,
            DramKind::Hermes => unreachable!(),
        }
        ready
    }

    /// Issue a speculative request for `line` at `issue_cycle` (the trigger
    /// cycle plus the configured issue latency). Duplicate in-flight lines are
    /// not re-enqueued.
    pub fn hermes_issue(&mut self, line: u64, issue_cycle: u64) {
        if self.hermes_inflight.iter().any(|r| r.line == line) {
            return;
        }
        self.requests_hermes += 1;
        self.hermes_inflight.push_back(HermesReq {
            line,
            ready: issue_cycle + self.access_latency,
        });
    }

    /// A demand miss for `line` meets an in-flight speculative request;
    /// returns the speculative ready cycle and consumes the request.
    pub fn hermes_rendezvous(&mut self, line: u64, now: u64) -> Option<u64> {
        let idx = self
            .hermes_inflight
            .iter()
            .position(|r| r.line == line && r.ready > now)?;
        let req = self.hermes_inflight.remove(idx).expect("index valid");
        self.hermes_delivered += 1;
        Some(req.ready)
    }

    /// Drop speculative requests that returned with no waiting demand.
    pub fn expire_hermes(&mut self, now: u64) {
        while let Some(front) = self.hermes_inflight.front() {
            if front.ready <= now {
                self.hermes_inflight.pop_front();
                self.hermes_dropped += 1;
            } else {
                break;
            }
        }
    }

    /// Fraction of peak bandwidth consumed over the trailing `window` cycles.
    pub fn bandwidth_usage(&self, now: u64, window: u64) -> f64 {
        assert!(window > 0);
        self.window.usage(now, window, self.bytes_per_cycle)
    }

    pub fn total_fill_requests(&self) -> u64 {
        self.requests_demand + self.requests_prefetch
    }
}

#[derive(Debug, Clone, Copy)]
struct PendingFill {
    line: u64,
    kind: DramKind,
    ready: u64,
    /// A demand merged with this in-flight request; fill as a demanded block.
    demanded: bool,
}

/// A DRAM return applied to the hierarchy.
#[derive(Debug, Clone)]
pub struct FillEvent {
    pub line: u64,
    pub kind: DramKind,
    pub ready: u64,
    /// Lines evicted from the LLC by this fill.
    pub llc_evicted: Vec<Evicted>,
}

/// Outcome of one demand access.
#[derive(Debug, Clone, Copy)]
pub struct DemandOutcome {
    pub hit_level: HitLevel,
    /// Demand-path latency; drives the state clock.
    pub latency_state: u64,
    /// Observed latency after speculative service; drives the perf clock.
    pub latency_perf: u64,
    pub served_by_hermes: bool,
    pub merged_with_inflight: bool,
    pub hit_on_prefetched: bool,
    /// A new Demand request crossed the LLC-memory boundary.
    pub new_demand_request: bool,
}

/// Outcome of one prefetch issue.
#[derive(Debug, Clone, Copy)]
pub struct PrefetchOutcome {
    pub enqueued: bool,
    /// Dropped because the channel backlog exceeded the queue bound.
    pub dropped: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct AccessKindMem {
    pub is_store: bool,
}

/// The full memory subsystem: L1/L2/LLC plus one DRAM channel.
#[derive(Debug, Clone)]
pub struct MemoryModel {
    pub l1: CacheLevel,
    pub l2: CacheLevel,
    pub llc: CacheLevel,
    pub dram: DramChannel,
    pending: VecDeque<PendingFill>,
    /// Prefetches are dropped when channel backlog exceeds this bound.
    pub prefetch_backlog_cap: u64,
    monotone_check: u64,
}

impl MemoryModel {
    pub fn new(l1: CacheLevel, l2: CacheLevel, llc: CacheLevel, dram: DramChannel) -> Self {
        Self {
            l1,
            l2,
            llc,
            dram,
            pending: VecDeque::new(),
            prefetch_backlog_cap: 2048,
            monotone_check: 0,
        }
    }

    fn pending_for(&mut self, line: u64) -> Option<&mut PendingFill> {
        self.pending.iter_mut().find(|p| p.line == line)
    }

    /// Apply all DRAM returns due at or before `now`. Demand fills populate
    /// all three levels; prefetch fills populate L2 and LLC only.
    pub fn apply_returns(&mut self, now: u64) -> Vec<FillEvent> {
        let mut events = Vec::new();
        while let Some(front) = self.pending.front() {
            if front.ready > now {
                break;
            }
            let fill = self.pending.pop_front().expect("front checked");
            let as_prefetch = fill.kind == DramKind::Prefetch && !fill.demanded;
            let mut llc_evicted = Vec::new();
            if fill.kind == DramKind::Demand || fill.demanded {
                self.l1.fill(fill.line, false);
            }
            self.l2.fill(fill.line, as_prefetch);
            if let Some(ev) = self.llc.fill(fill.line, as_prefetch) {
                llc_evicted.push(ev);
            }
            events.push(FillEvent {
                line: fill.line,
                kind: fill.kind,
                ready: fill.ready,
                llc_evicted,
            });
        }
        self.dram.expire_hermes(now);
        events
    }

    /// Walk L1 -> L2 -> LLC for a cacheline-aligned demand access at state
    /// cycle `now`.
    pub fn demand_access(&mut self, line: u64, kind: AccessKindMem, now: u64) -> DemandOutcome {
        debug_assert_eq!(line % LINE_BYTES, 0);
        debug_assert!(now >= self.monotone_check, "clock must be monotone");
        self.monotone_check = now;

        if let Some(prefetched) = self.l1.access(line) {
            if kind.is_store {
                self.l1.set_dirty(line);
            }
            if prefetched {
                self.l2.absorb_prefetch_flag(line);
                self.llc.absorb_prefetch_flag(line);
            }
            return DemandOutcome {
                hit_level: HitLevel::L1,
                latency_state: self.l1.round_trip,
                latency_perf: self.l1.round_trip,
                served_by_hermes: false,
                merged_with_inflight: false,
                hit_on_prefetched: prefetched,
                new_demand_request: false,
            };
        }
        if let Some(prefetched) = self.l2.access(line) {
            if prefetched {
                self.llc.absorb_prefetch_flag(line);
            }
            if kind.is_store {
                self.l2.set_dirty(line);
            }
            return DemandOutcome {
                hit_level: HitLevel::L2,
                latency_state: self.l2.round_trip,
                latency_perf: self.l2.round_trip,
                served_by_hermes: false,
                merged_with_inflight: false,
                hit_on_prefetched: prefetched,
                new_demand_request: false,
            };
        }
        if let Some(prefetched) = self.llc.access(line) {
            if kind.is_store {
                self.llc.set_dirty(line);
            }
            return DemandOutcome {
                hit_level: HitLevel::Llc,
                latency_state: self.llc.round_trip,
                latency_perf: self.llc.round_trip,
                served_by_hermes: false,
                merged_with_inflight: false,
                hit_on_prefetched: prefetched,
                new_demand_request: false,
            };
        }

        // Full miss. A matching in-flight fill absorbs the demand (MSHR-style
        // merge); otherwise a Demand request crosses to memory.
        let llc_rt = self.llc.round_trip;
        if let Some(pending) = self.pending_for(line) {
            let was_prefetch = pending.kind == DramKind::Prefetch && !pending.demanded;
            pending.demanded = true;
            let latency = pending.ready.saturating_sub(now) + llc_rt;
            return DemandOutcome {
                hit_level: HitLevel::Memory,
                latency_state: latency,
                latency_perf: latency,
                served_by_hermes: false,
                merged_with_inflight: true,
                hit_on_prefetched: was_prefetch,
                new_demand_request: false,
            };
        }

        let ready = self.dram.enqueue(DramKind::Demand, now);
        self.pending.push_back(PendingFill {
            line,
            kind: DramKind::Demand,
            ready,
            demanded: true,
        });
        let latency_state = (ready - now) + llc_rt;
        let (latency_perf, served_by_hermes) = match self.dram.hermes_rendezvous(line, now) {
            Some(hermes_ready) => (hermes_ready.max(now) - now, true),
            None => (latency_state, false),
        };
        DemandOutcome {
            hit_level: HitLevel::Memory,
            latency_state,
            latency_perf,
            served_by_hermes,
            merged_with_inflight: false,
            hit_on_prefetched: false,
            new_demand_request: true,
        }
    }

    /// Issue a prefetch for `line` targeting L2 and LLC. No-op for lines
    /// already on-chip or already being filled; dropped when the channel
    /// backlog exceeds the queue bound.
    pub fn prefetch_fill(&mut self, line: u64, now: u64) -> PrefetchOutcome {
        debug_assert_eq!(line % LINE_BYTES, 0);
        if self.l1.contains(line) || self.l2.contains(line) || self.llc.contains(line) {
            return PrefetchOutcome {
                enqueued: false,
                dropped: false,
            };
        }
        if self.pending.iter().any(|p| p.line == line) {
            return PrefetchOutcome {
                enqueued: false,
                dropped: false,
            };
        }
        if self.dram.backlog(now) > self.prefetch_backlog_cap {
            return PrefetchOutcome {
                enqueued: false,
                dropped: true,
            };
        }
        let ready = self.dram.enqueue(DramKind::Prefetch, now);
        self.pending.push_back(PendingFill {
            line,
            kind: DramKind::Prefetch,
            ready,
            demanded: false,
        });
        PrefetchOutcome {
            enqueued: true,
            dropped: false,
        }
    }

    /// True if the line would resolve at memory level right now (it misses
    /// every cache level). Used by the oracle off-chip predictor; mirrors the
    /// hit-level outcome of `demand_access` exactly.
    pub fn would_go_offchip(&self, line: u64) -> bool {
        !(self.l1.contains(line) || self.l2.contains(line) || self.llc.contains(line))
    }

    /// Stable digest input of the full cache contents.
    pub fn contents_snapshot(&self) -> Vec<Vec<u64>> {
        vec![
            self.l1.resident_lines(),
            self.l2.resident_lines(),
            self.llc.resident_lines(),
        ]
    }
}

/// Run-level counters, gated by the harness's warmup window.
#[derive(Debug, Default, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct MetricsLedger {
    pub instructions: u64,
    pub loads: u64,
    pub stores: u64,
    pub branches: u64,
    pub mispredicted_branches: u64,
    pub demand_accesses: u64,
    /// Demand requests that crossed the LLC-memory boundary.
    pub demand_misses_llc: u64,
    /// Accesses resolved at memory level, including merges with in-flight fills.
    pub memory_level_accesses: u64,
    pub hits_l1: u64,
    pub hits_l2: u64,
    pub hits_llc: u64,
    pub prefetch_issued: u64,
    pub prefetch_useful: u64,
    pub prefetch_unused: u64,
    pub prefetch_dropped: u64,
    pub demand_hits_on_prefetch: u64,
    pub dram_demand_requests: u64,
    pub dram_prefetch_requests: u64,
    pub dram_hermes_requests: u64,
    pub dram_channel_bytes: u64,
    pub hermes_served_loads: u64,
    pub ocp_predicted_offchip: u64,
    pub ocp_correct_offchip: u64,
    pub ocp_true_offchip: u64,
    pub cycles: u64,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no paired baseline run supplied")]
    BaselineMissing,
    #[error("baseline run has zero LLC misses")]
    ZeroBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageStats {
    pub coverage: f64,
    pub overprediction: f64,
}

/// Coverage and overprediction at the LLC-memory boundary, relative to a
/// paired no-prefetch baseline.
pub fn coverage_and_overprediction(
    baseline_llc_misses: u64,
    with: &MetricsLedger,
) -> Result<CoverageStats, MetricsError> {
    if baseline_llc_misses == 0 {
        return Err(MetricsError::ZeroBaseline);
    }
    let base = baseline_llc_misses as f64;
    Ok(CoverageStats {
        coverage: (base - with.demand_misses_llc as f64) / base,
        overprediction: with.prefetch_unused as f64 / base,
    })
}

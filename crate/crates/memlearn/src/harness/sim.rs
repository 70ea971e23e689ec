//! Simulation orchestration: drives trace records through the core clock,
//! the demand path, prefetcher training and issue, speculative off-chip
//! requests, and coordination epochs.
//!
//! Two clocks run side by side. The state clock drives every piece of
//! microarchitectural state (cache fills, channel occupancy, training) and is
//! computed from demand-path latencies only, so speculative requests can never
//! perturb it. The perf clock additionally credits speculative service and
//! produces the reported cycle counts; with speculation disabled the two
//! clocks are identical.

use std::collections::VecDeque;

use sha2::{Digest, Sha256};

use crate::athena::AthenaAgent;
use crate::harness::config::{
    hex_string, ConfigError, OcpKind, PrefetcherKind, SimConfig,
};
use crate::harness::report::{MetricsReport, PairedReport};
use crate::hermes::{ocp_metrics, PopetPredictor};
use crate::memory::{
    coverage_and_overprediction, AccessKindMem, DramKind, HitLevel, MemoryModel, MetricsLedger,
};
use crate::prefetch::{
    AdversarialPrefetcher, DemandEvent, NextLinePrefetcher, Prefetcher, StridePrefetcher,
};
use crate::pythia::{PythiaAgent, PythiaPrefetcher};
use crate::trace::{self, AccessKind, SyntheticSpec, TraceError, TraceRecord};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Core clock with an outstanding-load window. Each record costs one base
/// cycle; issuing a load past the window capacity stalls until the oldest
/// completes, and any load still unresolved after `resolve_window` younger
/// records forces the clock forward.
#[derive(Debug, Clone)]
pub struct LoadWindow {
    limit: usize,
    resolve_window: u64,
    pub now: u64,
    outstanding: VecDeque<(u64, u64)>,
}

impl LoadWindow {
    pub fn new(limit: usize, resolve_window: u64) -> Self {
        Self {
            limit,
            resolve_window,
            now: 0,
            outstanding: VecDeque::new(),
        }
    }

    pub fn tick(&mut self) {
        self.now += 1;
    }

    pub fn retire(&mut self, record_idx: u64) {
        while let Some(&(_, completion)) = self.outstanding.front() {
            if completion <= self.now {
                self.outstanding.pop_front();
            } else {
                break;
            }
        }
        while let Some(&(issued_at, completion)) = self.outstanding.front() {
            if issued_at + self.resolve_window <= record_idx {
                self.now = self.now.max(completion);
                self.outstanding.pop_front();
            } else {
                break;
            }
        }
    }

    /// Stall until the window has room for one more load.
    pub fn prepare_issue(&mut self) {
        while self.outstanding.len() >= self.limit {
            let (_, completion) = self.outstanding.pop_front().expect("non-empty");
            self.now = self.now.max(completion);
        }
        while let Some(&(_, completion)) = self.outstanding.front() {
            if completion <= self.now {
                self.outstanding.pop_front();
            } else {
                break;
            }
        }
    }

    pub fn push(&mut self, record_idx: u64, latency: u64) -> u64 {
        let completion = self.now + latency;
        self.outstanding.push_back((record_idx, completion));
        completion
    }

    /// Wait for every outstanding load.
    pub fn drain(&mut self) {
        while let Some((_, completion)) = self.outstanding.pop_front() {
            self.now = self.now.max(completion);
        }
    }
}

/// The configured prefetcher, concretely typed so tests can inspect agents.
pub enum EnginePrefetcher {
    Disabled,
    Stride(StridePrefetcher),
    NextLine(NextLinePrefetcher),
    Adversarial(AdversarialPrefetcher),
    Pythia(PythiaPrefetcher),
}

impl EnginePrefetcher {
    fn port(&mut self) -> Option<&mut dyn Prefetcher> {
        match self {
            EnginePrefetcher::Disabled => None,
            EnginePrefetcher::Stride(p) => Some(p),
            EnginePrefetcher::NextLine(p) => Some(p),
            EnginePrefetcher::Adversarial(p) => Some(p),
            EnginePrefetcher::Pythia(p) => Some(p),
        }
    }

    pub fn pythia_agent(&self) -> Option<&PythiaAgent> {
        match self {
            EnginePrefetcher::Pythia(p) => Some(&p.agent),
            _ => None,
        }
    }
}

pub struct Simulation {
    pub cfg: SimConfig,
    mem: MemoryModel,
    state_clock: LoadWindow,
    perf_clock: LoadWindow,
    prefetcher: EnginePrefetcher,
    popet: Option<PopetPredictor>,
    athena: Option<AthenaAgent>,
    ocp_active: bool,
    issue_latency: u64,
    ledger: MetricsLedger,
    records_processed: u64,
    warmup_records: u64,
    warmup_end_perf: u64,
    bw_histogram: [u64; 10],
    trace_hasher: Sha256,
    access_trace: Option<Vec<(u64, HitLevel)>>,
    collecting: bool,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let mem = cfg.build_memory()?;
        let seed = cfg.seed;
        let prefetcher = match cfg.prefetcher.kind {
            PrefetcherKind::None => EnginePrefetcher::Disabled,
            PrefetcherKind::Stride => {
                EnginePrefetcher::Stride(StridePrefetcher::new(cfg.prefetcher.degree))
            }
            PrefetcherKind::Nextline => {
                EnginePrefetcher::NextLine(NextLinePrefetcher::new(cfg.prefetcher.degree))
            }
            PrefetcherKind::Adversarial => {
                EnginePrefetcher::Adversarial(AdversarialPrefetcher::new(cfg.prefetcher.degree, seed))
            }
            PrefetcherKind::Pythia => {
                EnginePrefetcher::Pythia(PythiaPrefetcher::new(cfg.pythia.clone(), seed))
            }
        };
        let popet_cfg = cfg.hermes.resolved_popet();
        let popet = (cfg.hermes.enabled && cfg.hermes.ocp == OcpKind::Popet)
            .then(|| PopetPredictor::new(popet_cfg));
        let athena = cfg.athena.enabled.then(|| {
            let d_max = match &prefetcher {
                EnginePrefetcher::Pythia(p) => p.d_max(),
                EnginePrefetcher::Stride(p) => p.d_max(),
                EnginePrefetcher::NextLine(p) => p.d_max(),
                EnginePrefetcher::Adversarial(p) => p.d_max(),
                EnginePrefetcher::Disabled => 0,
            };
            AthenaAgent::new(cfg.athena.config, seed, d_max)
        });
        let total_records = Self::count_records(&cfg)?;
        let warmup_records = cfg
            .warmup_records
            .unwrap_or((total_records as f64 * cfg.warmup_fraction) as u64);
        Ok(Self {
            mem,
            state_clock: LoadWindow::new(cfg.core.load_window, cfg.core.resolve_window),
            perf_clock: LoadWindow::new(cfg.core.load_window, cfg.core.resolve_window),
            prefetcher,
            popet,
            athena,
            ocp_active: true,
            issue_latency: popet_cfg.issue_latency_cycles,
            ledger: MetricsLedger::default(),
            records_processed: 0,
            warmup_records,
            warmup_end_perf: 0,
            bw_histogram: [0; 10],
            trace_hasher: Sha256::new(),
            access_trace: None,
            collecting: false,
            cfg,
        })
    }

    fn count_records(cfg: &SimConfig) -> Result<u64, SimError> {
        if let Some(spec) = &cfg.trace.synthetic {
            return Ok(spec.length);
        }
        if let Some(path) = &cfg.trace.path {
            let mut n = 0u64;
            for rec in trace::load_trace(path)? {
                rec?;
                n += 1;
            }
            return Ok(n);
        }
        Err(ConfigError::invalid("trace", "no trace source configured (set trace.path or trace.synthetic)").into())
    }

    fn open_trace(
        cfg: &SimConfig,
    ) -> Result<Box<dyn Iterator<Item = Result<TraceRecord, TraceError>>>, SimError> {
        if let Some(spec) = &cfg.trace.synthetic {
            let spec: SyntheticSpec = *spec;
            return Ok(Box::new(trace::generate(&spec)?.map(Ok)));
        }
        if let Some(path) = &cfg.trace.path {
            return Ok(Box::new(trace::load_trace(path)?));
        }
        Err(ConfigError::invalid("trace", "no trace source configured").into())
    }

    /// Record every demand access as (line, hit level) for paired comparisons.
    pub fn enable_access_trace(&mut self) {
        self.access_trace = Some(Vec::new());
    }

    pub fn access_trace(&self) -> Option<&[(u64, HitLevel)]> {
        self.access_trace.as_deref()
    }

    pub fn memory(&self) -> &MemoryModel {
        &self.mem
    }

    pub fn ledger(&self) -> &MetricsLedger {
        &self.ledger
    }

    pub fn pythia_agent(&self) -> Option<&PythiaAgent> {
        self.prefetcher.pythia_agent()
    }

    pub fn athena_agent(&self) -> Option<&AthenaAgent> {
        self.athena.as_ref()
    }

    pub fn popet(&self) -> Option<&PopetPredictor> {
        self.popet.as_ref()
    }

    pub fn cache_contents(&self) -> Vec<Vec<u64>> {
        self.mem.contents_snapshot()
    }

    /// CSV rendering of the per-epoch coordination log.
    pub fn athena_log_csv(&self) -> Option<String> {
        let agent = self.athena.as_ref()?;
        let mut out = String::from(
            "epoch,pref_accuracy_bucket,ocp_accuracy_bucket,bw_bucket,pollution_bucket,action,degree,reward\n",
        );
        for row in &agent.log {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{:.6}\n",
                row.epoch,
                row.state[0],
                row.state[1],
                row.state[2],
                row.state[3],
                row.action.label(),
                row.degree,
                row.reward
            ));
        }
        Some(out)
    }

    pub fn run(&mut self) -> Result<MetricsReport, SimError> {
        let reader = Self::open_trace(&self.cfg)?;
        for rec in reader {
            let rec = rec?;
            self.step_record(&rec);
        }
        self.finish();
        Ok(self.build_report())
    }

    fn epoch_boundary(&mut self) {
        let Some(athena) = self.athena.as_mut() else {
            return;
        };
        let bw = self
            .mem
            .dram
            .bandwidth_usage(self.state_clock.now, self.cfg.dram.bandwidth_window);
        let action = athena.epoch_boundary(self.state_clock.now, self.perf_clock.now, bw);
        if let Some(port) = self.prefetcher.port() {
            port.set_degree(action.degree);
        }
        self.ocp_active = action.selection.enables_ocp();
    }

    fn step_record(&mut self, rec: &TraceRecord) {
        if let Some(athena) = &self.athena {
            let epoch_len = athena.cfg.epoch_len;
            if self.records_processed > 0 && self.records_processed % epoch_len == 0 {
                self.epoch_boundary();
            }
        }
        let record_idx = self.records_processed;
        self.records_processed += 1;
        if self.records_processed == self.warmup_records + 1 {
            self.collecting = true;
            self.warmup_end_perf = self.perf_clock.now;
            self.ledger = MetricsLedger::default();
        }
        self.trace_hasher.update(rec.canonical().as_bytes());
        self.trace_hasher.update(b"\n");

        self.state_clock.tick();
        self.perf_clock.tick();
        self.state_clock.retire(record_idx);
        self.perf_clock.retire(record_idx);

        if self.collecting {
            self.ledger.instructions += 1;
        }

        match rec.kind {
            AccessKind::Branch => {
                if self.collecting {
                    self.ledger.branches += 1;
                    if rec.mispredicted {
                        self.ledger.mispredicted_branches += 1;
                    }
                }
                if let Some(athena) = self.athena.as_mut() {
                    athena.note_branch(rec.mispredicted);
                }
            }
            AccessKind::Other => {}
            AccessKind::Load | AccessKind::Store => self.step_mem_record(rec, record_idx),
        }

        if self.collecting && record_idx % 64 == 0 {
            let bw = self
                .mem
                .dram
                .bandwidth_usage(self.state_clock.now, self.cfg.dram.bandwidth_window);
            let bucket = ((bw * 10.0) as usize).min(9);
            self.bw_histogram[bucket] += 1;
        }
    }

    fn step_mem_record(&mut self, rec: &TraceRecord, record_idx: u64) {
        let is_load = rec.kind == AccessKind::Load;
        let line = rec.line();

        if is_load {
            self.state_clock.prepare_issue();
            self.perf_clock.prepare_issue();
        }

        // Returns become visible before the access of this record.
        let fills = self.mem.apply_returns(self.state_clock.now);
        for fill in &fills {
            if fill.kind == DramKind::Prefetch {
                if let Some(port) = self.prefetcher.port() {
                    port.on_fill(fill.line, fill.ready);
                }
            }
            for ev in &fill.llc_evicted {
                if ev.was_unused_prefetch && self.collecting {
                    self.ledger.prefetch_unused += 1;
                }
                if fill.kind == DramKind::Prefetch {
                    if let Some(athena) = self.athena.as_mut() {
                        athena.note_llc_eviction_by_prefetch(ev.line);
                    }
                }
            }
        }

        if self.collecting {
            self.ledger.demand_accesses += 1;
            if is_load {
                self.ledger.loads += 1;
            } else {
                self.ledger.stores += 1;
            }
        }
        if let Some(athena) = self.athena.as_mut() {
            if is_load {
                athena.note_load();
            }
            athena.note_demand_access(line);
        }

        // Off-chip prediction and speculative issue happen before the access.
        let mut prediction: Option<(Option<crate::hermes::LoadMetadata>, bool)> = None;
        if is_load && self.cfg.hermes.enabled {
            let predicted = match self.cfg.hermes.ocp {
                OcpKind::Popet => {
                    let meta = self
                        .popet
                        .as_mut()
                        .expect("popet built for popet ocp")
                        .predict(rec.pc, rec.vaddr);
                    let p = meta.predicted_offchip;
                    prediction = Some((Some(meta), p));
                    p
                }
                OcpKind::Oracle => {
                    let p = self.mem.would_go_offchip(line);
                    prediction = Some((None, p));
                    p
                }
            };
            if predicted && self.ocp_active {
                self.mem
                    .dram
                    .hermes_issue(line, self.state_clock.now + self.issue_latency);
            }
        }

        let outcome = self.mem.demand_access(
            line,
            AccessKindMem { is_store: !is_load },
            self.state_clock.now,
        );
        if let Some(tracer) = self.access_trace.as_mut() {
            tracer.push((line, outcome.hit_level));
        }

        if is_load {
            self.state_clock.push(record_idx, outcome.latency_state);
            let t_completion = self.perf_clock.push(record_idx, outcome.latency_perf);
            if outcome.hit_level == HitLevel::Memory {
                if let Some(athena) = self.athena.as_mut() {
                    athena.note_miss_issued(t_completion, outcome.latency_perf);
                }
            }
        }

        if self.collecting {
            match outcome.hit_level {
                HitLevel::L1 => self.ledger.hits_l1 += 1,
                HitLevel::L2 => self.ledger.hits_l2 += 1,
                HitLevel::Llc => self.ledger.hits_llc += 1,
                HitLevel::Memory => self.ledger.memory_level_accesses += 1,
            }
            if outcome.new_demand_request {
                self.ledger.demand_misses_llc += 1;
            }
            if outcome.hit_on_prefetched {
                self.ledger.demand_hits_on_prefetch += 1;
                self.ledger.prefetch_useful += 1;
            }
            if outcome.served_by_hermes {
                self.ledger.hermes_served_loads += 1;
            }
        }
        if outcome.hit_level == HitLevel::Memory {
            if let Some(athena) = self.athena.as_mut() {
                athena.note_llc_demand_miss(line);
            }
        }

        // Train the off-chip predictor on the resolved outcome.
        if let Some((meta, predicted)) = prediction {
            let went_offchip = outcome.hit_level == HitLevel::Memory;
            if let Some(meta) = meta {
                self.popet
                    .as_mut()
                    .expect("popet present")
                    .train(&meta, went_offchip);
            }
            if self.collecting {
                if went_offchip {
                    self.ledger.ocp_true_offchip += 1;
                }
                if predicted {
                    self.ledger.ocp_predicted_offchip += 1;
                    if went_offchip {
                        self.ledger.ocp_correct_offchip += 1;
                    }
                }
            }
            if predicted && self.ocp_active {
                if let Some(athena) = self.athena.as_mut() {
                    athena.note_ocp_prediction(went_offchip);
                }
            }
        }

        // Prefetchers observe demand loads at the L2 lookup point.
        if is_load && outcome.hit_level != HitLevel::L1 {
            let bw = self
                .mem
                .dram
                .bandwidth_usage(self.state_clock.now, self.cfg.dram.bandwidth_window);
            let now = self.state_clock.now;
            let ev = DemandEvent {
                pc: rec.pc,
                addr: rec.vaddr,
                hit_level: outcome.hit_level,
                bw_usage: bw,
                now,
            };
            let decision = match self.prefetcher.port() {
                Some(port) => port.on_demand(&ev),
                None => return,
            };
            for addr in &decision.addrs {
                let target = addr & !(crate::trace::LINE_BYTES - 1);
                if self.collecting {
                    self.ledger.prefetch_issued += 1;
                }
                if let Some(athena) = self.athena.as_mut() {
                    athena.note_prefetch_issued(target);
                }
                let issue = self.mem.prefetch_fill(target, now);
                if issue.dropped && self.collecting {
                    self.ledger.prefetch_dropped += 1;
                }
                if !issue.enqueued && !issue.dropped {
                    // Target already on-chip or already being filled: report
                    // the fill immediately so timeliness bookkeeping settles.
                    if let Some(port) = self.prefetcher.port() {
                        port.on_fill(target, now);
                    }
                }
            }
        }
    }

    fn finish(&mut self) {
        self.state_clock.drain();
        self.perf_clock.drain();
        self.mem.apply_returns(self.state_clock.now);
        self.ledger.cycles = self.perf_clock.now - self.warmup_end_perf;
        if self.mem.dram.channel_bytes != 64 * self.mem.dram.total_fill_requests() {
            // Channel conservation is structural; a violation is a bug.
            panic!(
                "channel byte conservation violated: {} bytes vs {} requests",
                self.mem.dram.channel_bytes,
                self.mem.dram.total_fill_requests()
            );
        }
        self.ledger.dram_demand_requests = self.mem.dram.requests_demand;
        self.ledger.dram_prefetch_requests = self.mem.dram.requests_prefetch;
        self.ledger.dram_hermes_requests = self.mem.dram.requests_hermes;
        self.ledger.dram_channel_bytes = self.mem.dram.channel_bytes;
    }

    fn build_report(&self) -> MetricsReport {
        let trace_digest = hex_string(&self.trace_hasher.clone().finalize());
        let config_digest = self.cfg.digest();
        let run_id = {
            let mut h = Sha256::new();
            h.update(config_digest.as_bytes());
            h.update(trace_digest.as_bytes());
            hex_string(&h.finalize())[..16].to_string()
        };
        let ocp = ocp_metrics(
            self.ledger.ocp_predicted_offchip,
            self.ledger.ocp_correct_offchip,
            self.ledger.ocp_true_offchip,
        );
        MetricsReport {
            run_id,
            config_digest,
            trace_digest,
            seed: self.cfg.seed,
            total_cycles: self.ledger.cycles,
            instructions: self.ledger.instructions,
            counters: self.ledger.clone(),
            coverage: None,
            overprediction: None,
            ocp_accuracy: ocp.accuracy,
            ocp_coverage: ocp.coverage,
            bandwidth_histogram: self.bw_histogram,
            athena_action_histogram: self
                .athena
                .as_ref()
                .map(|a| a.action_histogram)
                .unwrap_or_default(),
            wall_clock_seconds: 0.0,
        }
    }
}

pub fn run_simulation(cfg: SimConfig) -> Result<MetricsReport, SimError> {
    Simulation::new(cfg)?.run()
}

/// Config with every mechanism disabled; the no-prefetch baseline of a pair.
pub fn baseline_config(cfg: &SimConfig) -> SimConfig {
    let mut base = cfg.clone();
    base.prefetcher.kind = PrefetcherKind::None;
    base.hermes.enabled = false;
    base.athena.enabled = false;
    base
}

/// Run the configuration twice, mechanisms off then on, and derive coverage,
/// overprediction, and speedup from the pair.
pub fn paired_run(cfg: SimConfig) -> Result<PairedReport, SimError> {
    let baseline = run_simulation(baseline_config(&cfg))?;
    let mut with = run_simulation(cfg)?;
    assert_eq!(
        baseline.trace_digest, with.trace_digest,
        "paired runs must consume identical traces"
    );
    let stats = coverage_and_overprediction(baseline.counters.demand_misses_llc, &with.counters);
    let (coverage, overprediction) = match stats {
        Ok(s) => {
            with.coverage = Some(s.coverage);
            with.overprediction = Some(s.overprediction);
            (s.coverage, s.overprediction)
        }
        Err(_) => (0.0, 0.0),
    };
    let speedup = if with.total_cycles == 0 {
        1.0
    } else {
        baseline.total_cycles as f64 / with.total_cycles as f64
    };
    Ok(PairedReport {
        baseline,
        with_mechanisms: with,
        coverage,
        overprediction,
        speedup,
    })
}

//! Prefetcher interface and the stride / next-line / adversarial baselines.
//!
//! Prefetchers observe demand accesses at the L2 lookup point and emit
//! cacheline-aligned target addresses confined to the trigger's 4 KB page.
//! The degree knob caps how many targets one trigger may emit; degree 0
//! silences a prefetcher entirely.

use std::collections::HashMap;

use crate::memory::HitLevel;
use crate::rng::SplitMix64;
use crate::trace::{LINE_BYTES, LINES_PER_PAGE, PAGE_BYTES};

/// Default degree cap for the baseline prefetchers.
pub const BASELINE_D_MAX: u32 = 4;

/// Targets emitted for one demand trigger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefetchDecision {
    pub addrs: Vec<u64>,
    pub trigger_pc: u64,
    pub trigger_addr: u64,
}

impl PrefetchDecision {
    pub fn empty(trigger_pc: u64, trigger_addr: u64) -> Self {
        Self {
            addrs: Vec::new(),
            trigger_pc,
            trigger_addr,
        }
    }

    fn push_in_page(&mut self, target_line: u64) {
        debug_assert_eq!(target_line % LINE_BYTES, 0);
        debug_assert_eq!(
            target_line / PAGE_BYTES,
            self.trigger_addr / PAGE_BYTES,
            "prefetch target left the trigger's page"
        );
        self.addrs.push(target_line);
    }
}

/// One demand event as seen by a prefetcher.
#[derive(Debug, Clone, Copy)]
pub struct DemandEvent {
    pub pc: u64,
    pub addr: u64,
    pub hit_level: HitLevel,
    /// Current DRAM bandwidth usage in [0, 1].
    pub bw_usage: f64,
    pub now: u64,
}

pub trait Prefetcher {
    fn on_demand(&mut self, ev: &DemandEvent) -> PrefetchDecision;

    /// A previously emitted prefetch finished filling.
    fn on_fill(&mut self, _addr: u64, _now: u64) {}

    fn set_degree(&mut self, degree: u32);
    fn degree(&self) -> u32;
    fn d_max(&self) -> u32;
    fn name(&self) -> &'static str;
}

/// Emit `addr + k*step_lines` for k in 1..=degree, truncated at the page edge.
fn emit_strided(decision: &mut PrefetchDecision, addr: u64, step_lines: i64, degree: u32) {
    if step_lines == 0 {
        return;
    }
    let line = addr / LINE_BYTES;
    let page = addr / PAGE_BYTES;
    for k in 1..=degree as i64 {
        let target = line as i64 + k * step_lines;
        if target < 0 {
            break;
        }
        let target = target as u64;
        if target / LINES_PER_PAGE != page {
            break;
        }
        decision.push_in_page(target * LINE_BYTES);
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct StrideEntry {
    last_line: u64,
    stride_lines: i64,
    confidence: u8,
}

/// PC-indexed stride detector with a saturating confidence counter.
pub struct StridePrefetcher {
    table: HashMap<u64, StrideEntry>,
    degree: u32,
}

impl StridePrefetcher {
    pub fn new(degree: u32) -> Self {
        Self {
            table: HashMap::new(),
            degree: degree.min(BASELINE_D_MAX),
        }
    }
}

impl Prefetcher for StridePrefetcher {
    fn on_demand(&mut self, ev: &DemandEvent) -> PrefetchDecision {
        let mut decision = PrefetchDecision::empty(ev.pc, ev.addr);
        let line = ev.addr / LINE_BYTES;
        match self.table.get_mut(&ev.pc) {
            None => {
                self.table.insert(
                    ev.pc,
                    StrideEntry {
                        last_line: line,
                        stride_lines: 0,
                        confidence: 0,
                    },
                );
            }
            Some(entry) => {
                let stride = line as i64 - entry.last_line as i64;
                if stride == entry.stride_lines && stride != 0 {
                    entry.confidence = (entry.confidence + 1).min(3);
                } else {
                    // Confidence resets on a stride change; the new stride has
                    // been observed once.
                    entry.stride_lines = stride;
                    entry.confidence = 1;
                }
                entry.last_line = line;
                if entry.confidence >= 2 {
                    emit_strided(&mut decision, ev.addr, entry.stride_lines, self.degree);
                }
            }
        }
        decision
    }

    fn set_degree(&mut self, degree: u32) {
        self.degree = degree.min(BASELINE_D_MAX);
    }

    fn degree(&self) -> u32 {
        self.degree
    }

    fn d_max(&self) -> u32 {
        BASELINE_D_MAX
    }

    fn name(&self) -> &'static str {
        "stride"
    }
}

/// Degenerate baseline: the next `degree` sequential lines.
pub struct NextLinePrefetcher {
    degree: u32,
}

impl NextLinePrefetcher {
    pub fn new(degree: u32) -> Self {
        Self {
            degree: degree.min(BASELINE_D_MAX),
        }
    }
}

impl Prefetcher for NextLinePrefetcher {
    fn on_demand(&mut self, ev: &DemandEvent) -> PrefetchDecision {
        let mut decision = PrefetchDecision::empty(ev.pc, ev.addr);
        emit_strided(&mut decision, ev.addr, 1, self.degree);
        decision
    }

    fn set_degree(&mut self, degree: u32) {
        self.degree = degree.min(BASELINE_D_MAX);
    }

    fn degree(&self) -> u32 {
        self.degree
    }

    fn d_max(&self) -> u32 {
        BASELINE_D_MAX
    }

    fn name(&self) -> &'static str {
        "nextline"
    }
}

/// Test double with near-zero accuracy by construction: emits seeded random
/// in-page lines, never the trigger's own line.
pub struct AdversarialPrefetcher {
    rng: SplitMix64,
    degree: u32,
}

impl AdversarialPrefetcher {
    pub fn new(degree: u32, seed: u64) -> Self {
        Self {
            rng: SplitMix64::from_label(seed, "adversarial-prefetch"),
            degree: degree.min(BASELINE_D_MAX),
        }
    }
}

impl Prefetcher for AdversarialPrefetcher {
    fn on_demand(&mut self, ev: &DemandEvent) -> PrefetchDecision {
        let mut decision = PrefetchDecision::empty(ev.pc, ev.addr);
        let page_base_line = (ev.addr / PAGE_BYTES) * LINES_PER_PAGE;
        let own_offset = (ev.addr / LINE_BYTES) % LINES_PER_PAGE;
        let mut picked = Vec::new();
        while (picked.len() as u32) < self.degree {
            let offset = self.rng.gen_range(LINES_PER_PAGE);
            if offset == own_offset || picked.contains(&offset) {
                continue;
            }
            picked.push(offset);
            decision.push_in_page((page_base_line + offset) * LINE_BYTES);
        }
        decision
    }

    fn set_degree(&mut self, degree: u32) {
        self.degree = degree.min(BASELINE_D_MAX);
    }

    fn degree(&self) -> u32 {
        self.degree
    }

    fn d_max(&self) -> u32 {
        BASELINE_D_MAX
    }

    fn name(&self) -> &'static str {
        "adversarial"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(pc: u64, addr: u64) -> DemandEvent {
        DemandEvent {
            pc,
            addr,
            hit_level: HitLevel::Memory,
            bw_usage: 0.0,
            now: 0,
        }
    }

    fn lines(d: &PrefetchDecision) -> Vec<u64> {
        d.addrs.iter().map(|a| a / LINE_BYTES).collect()
    }

    #[test]
    fn stride_learns_after_two_observations() {
        let mut p = StridePrefetcher::new(2);
        let base = 0x40_0000u64; // page-aligned
        assert!(p.on_demand(&ev(7, base + 10 * 64)).addrs.is_empty());
        assert!(p.on_demand(&ev(7, base + 14 * 64)).addrs.is_empty());
        let d = p.on_demand(&ev(7, base + 18 * 64));
        assert_eq!(lines(&d), vec![base / 64 + 22, base / 64 + 26]);
    }

    #[test]
    fn stride_first_occurrence_is_empty() {
        let mut p = StridePrefetcher::new(4);
        assert!(p.on_demand(&ev(9, 0x1000)).addrs.is_empty());
    }

    #[test]
    fn stride_truncates_at_page_end() {
        let mut p = StridePrefetcher::new(4);
        let base = 0x40_0000u64;
        p.on_demand(&ev(7, base + 50 * 64));
        p.on_demand(&ev(7, base + 55 * 64));
        let d = p.on_demand(&ev(7, base + 60 * 64));
        // 60 + 5 = 65 is past the 64-line page: truncated to nothing.
        assert!(d.addrs.is_empty());
        let mut p = StridePrefetcher::new(4);
        p.on_demand(&ev(7, base + 40 * 64));
        p.on_demand(&ev(7, base + 48 * 64));
        let d = p.on_demand(&ev(7, base + 56 * 64));
        // 56+8=64 is out; nothing fits.
        assert!(d.addrs.is_empty());
        let mut p = StridePrefetcher::new(4);
        p.on_demand(&ev(7, base + 41 * 64));
        p.on_demand(&ev(7, base + 48 * 64));
        let d = p.on_demand(&ev(7, base + 55 * 64));
        // 55+7=62 fits, 55+14=69 does not.
        assert_eq!(lines(&d), vec![base / 64 + 62]);
    }

    #[test]
    fn stride_confidence_resets_on_change() {
        let mut p = StridePrefetcher::new(2);
        let base = 0x40_0000u64;
        p.on_demand(&ev(7, base));
        p.on_demand(&ev(7, base + 3 * 64));
        assert!(!p.on_demand(&ev(7, base + 6 * 64)).addrs.is_empty());
        // Stride change: confidence drops, no emission until re-established.
        assert!(p.on_demand(&ev(7, base + 11 * 64)).addrs.is_empty());
        assert!(!p.on_demand(&ev(7, base + 16 * 64)).addrs.is_empty());
    }

    #[test]
    fn nextline_basic_and_page_bound() {
        let mut p = NextLinePrefetcher::new(3);
        let base = 0x40_0000u64;
        assert_eq!(
            lines(&p.on_demand(&ev(1, base))),
            vec![base / 64 + 1, base / 64 + 2, base / 64 + 3]
        );
        assert!(p.on_demand(&ev(1, base + 63 * 64)).addrs.is_empty());
        p.set_degree(0);
        assert!(p.on_demand(&ev(1, base)).addrs.is_empty());
    }

    #[test]
    fn adversarial_is_deterministic_and_avoids_own_line() {
        let mut a = AdversarialPrefetcher::new(4, 99);
        let mut b = AdversarialPrefetcher::new(4, 99);
        for i in 0..200u64 {
            let e = ev(1, 0x40_0000 + (i % 64) * 64);
            let da = a.on_demand(&e);
            let db = b.on_demand(&e);
            assert_eq!(da, db);
            assert_eq!(da.addrs.len(), 4);
            assert!(!da.addrs.contains(&e.addr));
        }
        let mut z = AdversarialPrefetcher::new(0, 99);
        assert!(z.on_demand(&ev(1, 0x40_0000)).addrs.is_empty());
    }

    proptest! {
        // Page containment and degree bound hold for all baselines.
        #[test]
        fn decisions_stay_in_page_and_under_degree(
            pcs in proptest::collection::vec(0u64..32, 0..200),
            offsets in proptest::collection::vec(0u64..64, 0..200),
            degree in 0u32..=4,
        ) {
            let mut stride = StridePrefetcher::new(degree);
            let mut next = NextLinePrefetcher::new(degree);
            let mut adv = AdversarialPrefetcher::new(degree, 5);
            for (pc, off) in pcs.iter().zip(offsets.iter()) {
                let addr = 0x7700_0000u64 + off * 64;
                let e = ev(*pc, addr);
                for d in [stride.on_demand(&e), next.on_demand(&e), adv.on_demand(&e)] {
                    prop_assert!(d.addrs.len() as u32 <= degree);
                    for a in &d.addrs {
                        prop_assert_eq!(a >> 12, addr >> 12);
                        prop_assert_eq!(a % 64, 0);
                    }
                }
            }
        }
    }
}

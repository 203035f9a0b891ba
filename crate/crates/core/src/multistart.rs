//! Random multistart over feasible starting points, each polished by PBCD.
//!
//! Start `i` draws from its own ChaCha stream (`seed`, stream `i`), so the
//! outcome of a start does not depend on which thread ran it or in which
//! order. Results are reduced by `(f_beta, comp_violation, index)`, which is a
//! total order, so any grouping of the reduction gives the same winner.

use alloc::string::ToString;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::assembly::{comp_violation, energy, PlanSet, ProblemData};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::pbcd::{pbcd_solve_with, Clock, NoClock, PbcdConfig, SolveReport};
use crate::projection::{project_onto_s, ProjectionConfig};

/// Multistart parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultistartConfig {
    /// Number of starts.
    pub n_starts: usize,
    /// Master seed.
    pub seed: u64,
    /// Local solver settings for every start.
    pub pbcd: PbcdConfig,
    /// How many of the best plans to retain.
    pub keep_top: usize,
}

impl Default for MultistartConfig {
    fn default() -> Self {
        Self {
            n_starts: 200,
            seed: 0,
            pbcd: PbcdConfig::default(),
            keep_top: 1,
        }
    }
}

/// RNG for start `index`.
pub fn start_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Each block: i.i.d. uniform `[0, 1)` entries, zero diagonal, projected onto `S`.
pub fn random_feasible_start(pd: &ProblemData, rng: &mut impl RngCore, proj: &ProjectionConfig) -> Result<PlanSet> {
    let k = pd.k();
    let mut blocks = Vec::with_capacity(pd.blocks());
    for _ in 0..pd.blocks() {
        let y = Mat::from_fn(k, k, |i, j| {
            let u = uniform(rng);
            if i == j {
                0.0
            } else {
                u
            }
        });
        let (w, _, _) = project_onto_s(&y, pd, proj, None)?;
        blocks.push(w);
    }
    PlanSet::new(blocks)
}

/// Result of one start.
#[derive(Debug, Clone, PartialEq)]
pub struct StartOutcome {
    /// Start index.
    pub index: usize,
    /// Final plan.
    pub plan: PlanSet,
    /// Unpenalized energy.
    pub energy: f64,
    /// Penalized energy.
    pub penalized: f64,
    /// Complementarity violation.
    pub comp_violation: f64,
    /// PBCD audit trail.
    pub report: SolveReport,
}

impl StartOutcome {
    fn rank(&self, other: &Self) -> Ordering {
        self.penalized
            .total_cmp(&other.penalized)
            .then(self.comp_violation.total_cmp(&other.comp_violation))
            .then(self.index.cmp(&other.index))
    }
}

/// Runs start `index`.
pub fn run_start(pd: &ProblemData, cfg: &MultistartConfig, index: usize) -> Result<StartOutcome> {
    run_start_with(pd, cfg, index, &NoClock)
}

/// [`run_start`] with a clock for the report timings.
pub fn run_start_with(pd: &ProblemData, cfg: &MultistartConfig, index: usize, clock: &dyn Clock) -> Result<StartOutcome> {
    let mut rng = start_rng(cfg.seed, index);
    let z0 = random_feasible_start(pd, &mut rng, &cfg.pbcd.projection)?;
    let (plan, report) = pbcd_solve_with(pd, z0, &cfg.pbcd, clock, &mut |_| {})?;
    let e = energy(&plan, pd);
    let c = comp_violation(&plan);
    Ok(StartOutcome {
        index,
        energy: e,
        penalized: e + pd.beta() * c,
        comp_violation: c,
        plan,
        report,
    })
}

/// Plan-free summary of one start.
#[derive(Debug, Clone, PartialEq)]
pub struct StartSummary {
    /// Start index.
    pub index: usize,
    /// Unpenalized energy.
    pub energy: f64,
    /// Penalized energy.
    pub penalized: f64,
    /// Complementarity violation.
    pub comp_violation: f64,
    /// PBCD audit trail.
    pub report: SolveReport,
}

/// Order-independent reduction of start outcomes.
#[derive(Debug, Clone, Default)]
pub struct MultistartAccumulator {
    keep: usize,
    top: Vec<StartOutcome>,
    summaries: Vec<StartSummary>,
    failures: Vec<(usize, Error)>,
}

impl MultistartAccumulator {
    /// Retains the `keep` best plans (at least one).
    pub fn new(keep: usize) -> Self {
        Self {
            keep: keep.max(1),
            ..Self::default()
        }
    }

    /// Adds the result of start `index`.
    pub fn push(&mut self, index: usize, outcome: Result<StartOutcome>) {
        match outcome {
            Ok(o) => {
                self.summaries.push(StartSummary {
                    index: o.index,
                    energy: o.energy,
                    penalized: o.penalized,
                    comp_violation: o.comp_violation,
                    report: o.report.clone(),
                });
                let pos = self.top.partition_point(|t| t.rank(&o) == Ordering::Less);
                if pos < self.keep {
                    self.top.insert(pos, o);
                    self.top.truncate(self.keep);
                }
            }
            Err(e) => self.failures.push((index, e)),
        }
    }

    /// Combines two partial reductions.
    pub fn merge(mut self, other: Self) -> Self {
        self.summaries.extend(other.summaries);
        self.failures.extend(other.failures);
        for o in other.top {
            let pos = self.top.partition_point(|t| t.rank(&o) == Ordering::Less);
            if pos < self.keep {
                self.top.insert(pos, o);
                self.top.truncate(self.keep);
            }
        }
        self
    }

    /// Final result; an error if every start failed.
    pub fn finish(mut self) -> Result<MultistartResult> {
        self.summaries.sort_by_key(|s| s.index);
        self.failures.sort_by_key(|f| f.0);
        if self.top.is_empty() {
            let n = self.failures.len();
            let first = self.failures.first().map(|f| f.1.to_string()).unwrap_or_default();
            return Err(Error::AllStartsFailed(n, first));
        }
        Ok(MultistartResult {
            top: self.top,
            starts: self.summaries,
            failures: self.failures,
        })
    }
}

/// Outcome of a multistart run.
#[derive(Debug, Clone, PartialEq)]
pub struct MultistartResult {
    /// Best plans, best first.
    pub top: Vec<StartOutcome>,
    /// Every successful start, by index.
    pub starts: Vec<StartSummary>,
    /// Failed starts, by index.
    pub failures: Vec<(usize, Error)>,
}

impl MultistartResult {
    /// The winner.
    pub fn best(&self) -> &StartOutcome {
        &self.top[0]
    }
}

/// Serial multistart.
pub fn multistart_solve(pd: &ProblemData, cfg: &MultistartConfig) -> Result<MultistartResult> {
    if cfg.n_starts == 0 {
        return Err(Error::param("n_starts", "must be at least 1"));
    }
    let mut acc = MultistartAccumulator::new(cfg.keep_top);
    for i in 0..cfg.n_starts {
        acc.push(i, run_start(pd, cfg, i));
    }
    acc.finish()
}

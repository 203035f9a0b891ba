//! Proximal block coordinate descent.
//!
//! One sweep updates the blocks in ascending order. Because `f_beta` is
//! linear in each block, the proximal block problem
//! `min_{X in S} <X, G_i> + sigma/2 |X - X_i|^2` is the projection of
//! `X_i - G_i / sigma` onto `S`.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::assembly::{apply_b, comp_violation, energy, gradient_from_others, PlanSet, ProblemData};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::math::{abs, norm2, sqrt};
use crate::projection::{project_onto_s, DualState, ProjectionConfig};

/// Solver parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PbcdConfig {
    /// Proximal parameter.
    pub sigma: f64,
    /// Stop when `sqrt(sigma) |Z_{k+1} - Z_k|_F < eps_outer`.
    pub eps_outer: f64,
    /// Stop when `|f_beta(Z_{k+1}) - f_beta(Z_k)| < energy_stall_tol`.
    pub energy_stall_tol: f64,
    /// Sweep budget.
    pub max_sweeps: usize,
    /// Inner projection settings.
    pub projection: ProjectionConfig,
}

impl Default for PbcdConfig {
    fn default() -> Self {
        Self {
            sigma: 1e-3,
            eps_outer: 1e-8,
            energy_stall_tol: 1e-8,
            max_sweeps: 1_000_000,
            projection: ProjectionConfig::default(),
        }
    }
}

impl PbcdConfig {
    /// Default settings with `eps_outer` taken from the size schedule.
    pub fn for_size(k: usize) -> Self {
        Self {
            eps_outer: crate::ggr::eps_outer_for(k),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", "must be positive"));
        }
        if !(self.eps_outer > 0.0) {
            return Err(Error::param("eps_outer", "must be positive"));
        }
        if !(self.energy_stall_tol > 0.0) {
            return Err(Error::param("energy_stall_tol", "must be positive"));
        }
        if !(self.projection.tol > 0.0) {
            return Err(Error::param("eps_inner", "must be positive"));
        }
        Ok(())
    }
}

/// Why a solve stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Scaled iterate difference below `eps_outer`.
    IterateGap,
    /// Penalized energy change below the stall tolerance.
    EnergyStall,
    /// Sweep budget exhausted; the last iterate is returned.
    SweepBudget,
}

impl Termination {
    /// Stable lowercase name.
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::IterateGap => "iterate_gap",
            Termination::EnergyStall => "energy_stall",
            Termination::SweepBudget => "sweep_budget",
        }
    }
}

/// Diagnostics of one sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    /// 1-based sweep number.
    pub sweep: usize,
    /// `f` after the sweep.
    pub energy: f64,
    /// `f_beta` after the sweep.
    pub penalized: f64,
    /// `sum_{i<j} <X_i, X_j>`.
    pub comp_violation: f64,
    /// `sum_i |B(X_i) - b|`.
    pub feasibility: f64,
    /// KKT violation functional between the last two iterates.
    pub kkt_violation: f64,
    /// `sqrt(sigma) |Z_{k+1} - Z_k|_F`.
    pub gap: f64,
    /// Newton steps summed over the blocks.
    pub newton_iters: usize,
    /// CG iterations over all projections of the sweep.
    pub cg_iters: usize,
    /// Largest projection residual among the blocks.
    pub max_projection_residual: f64,
    /// Seconds since the start of the solve, as reported by the clock.
    pub elapsed: f64,
}

/// Audit trail of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// One record per sweep.
    pub records: Vec<SweepRecord>,
    /// Why the solve stopped.
    pub termination: Termination,
    /// Seconds spent, as reported by the clock.
    pub wall_time: f64,
}

impl SolveReport {
    /// Sweeps performed.
    pub fn sweeps(&self) -> usize {
        self.records.len()
    }

    /// Last record.
    pub fn last(&self) -> Option<&SweepRecord> {
        self.records.last()
    }
}

/// Time source; the core crate has none of its own.
pub trait Clock {
    /// Monotone seconds.
    fn seconds(&self) -> f64;
}

/// Clock that always reads zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

/// Per-sweep counters returned by [`pbcd_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepStats {
    /// Newton steps summed over the blocks.
    pub newton_iters: usize,
    /// CG iterations over all projections of the sweep.
    pub cg_iters: usize,
    /// Largest projection residual among the blocks.
    pub max_projection_residual: f64,
}

/// One Gauss–Seidel sweep in place. `duals[i]` carries the warm start of
/// block `i` across sweeps.
pub fn pbcd_sweep(
    z: &mut PlanSet,
    pd: &ProblemData,
    cfg: &PbcdConfig,
    duals: &mut [Option<DualState>],
) -> Result<SweepStats> {
    if z.k() != pd.k() || z.len() != pd.blocks() || duals.len() != z.len() {
        return Err(Error::ContractViolation("plan, problem and warm starts disagree in size".into()));
    }
    let mut total = z.sum();
    let mut stats = SweepStats::default();
    for i in 0..z.len() {
        let mut others = total.clone();
        others.axpy(-1.0, z.block(i));
        let g = gradient_from_others(&others, pd);
        let mut y = z.block(i).clone();
        y.axpy(-1.0 / cfg.sigma, &g);
        let (w, state, st) = project_onto_s(&y, pd, &cfg.projection, duals[i].as_ref()).map_err(|e| Error::InBlock {
            block: i,
            source: Box::new(e),
        })?;
        stats.newton_iters += st.newton_iters;
        stats.cg_iters += st.cg_iters;
        stats.max_projection_residual = stats.max_projection_residual.max(st.residual);
        duals[i] = Some(state);
        total = others;
        total.axpy(1.0, &w);
        *z.block_mut(i) = w;
    }
    Ok(stats)
}

/// `sum_i |B(X_i) - b|_2`.
pub fn feasibility(z: &PlanSet, pd: &ProblemData) -> f64 {
    z.blocks()
        .iter()
        .map(|x| {
            let bx = apply_b(x, pd);
            let r: Vec<f64> = bx.iter().zip(pd.b()).map(|(a, b)| a - b).collect();
            norm2(&r)
        })
        .sum()
}

/// `sum_i | sum_{j>i} [Q(D_j) + beta D_j] - sigma D_i |_F` with
/// `D_j = X_j^prev - X_j^curr`.
pub fn kkt_violation(prev: &PlanSet, curr: &PlanSet, pd: &ProblemData, sigma: f64) -> f64 {
    let n = prev.len();
    let k = prev.k();
    let diffs: Vec<Mat> = prev.blocks().iter().zip(curr.blocks()).map(|(a, b)| a.sub(b)).collect();
    let mut suffix = Mat::zeros(k, k);
    let mut total = 0.0;
    for i in (0..n).rev() {
        let mut term = if i + 1 < n {
            let mut t = pd.pair_operator(&suffix);
            t.axpy(pd.beta(), &suffix);
            t
        } else {
            Mat::zeros(k, k)
        };
        term.axpy(-sigma, &diffs[i]);
        total += term.norm();
        suffix.axpy(1.0, &diffs[i]);
    }
    total
}

/// Runs sweeps from `z0` until a stopping rule fires.
pub fn pbcd_solve(pd: &ProblemData, z0: PlanSet, cfg: &PbcdConfig) -> Result<(PlanSet, SolveReport)> {
    pbcd_solve_with(pd, z0, cfg, &NoClock, &mut |_| {})
}

/// [`pbcd_solve`] with a clock and a per-sweep observer.
pub fn pbcd_solve_with(
    pd: &ProblemData,
    z0: PlanSet,
    cfg: &PbcdConfig,
    clock: &dyn Clock,
    observer: &mut dyn FnMut(&SweepRecord),
) -> Result<(PlanSet, SolveReport)> {
    cfg.validate()?;
    if z0.k() != pd.k() || z0.len() != pd.blocks() {
        return Err(Error::ContractViolation("initial plan does not match the problem".into()));
    }
    let t0 = clock.seconds();
    let mut z = z0;
    let mut duals: Vec<Option<DualState>> = (0..z.len()).map(|_| None).collect();
    let mut f_prev = energy(&z, pd) + pd.beta() * comp_violation(&z);
    let mut records = Vec::new();
    let sqrt_sigma = sqrt(cfg.sigma);
    let termination = loop {
        if records.len() >= cfg.max_sweeps {
            break Termination::SweepBudget;
        }
        let prev = z.clone();
        let st = pbcd_sweep(&mut z, pd, cfg, &mut duals)?;
        let f = energy(&z, pd);
        let comp = comp_violation(&z);
        let fb = f + pd.beta() * comp;
        if !fb.is_finite() {
            return Err(Error::NumericalBreakdown("non-finite energy".into()));
        }
        let gap = sqrt_sigma * z.distance(&prev);
        let rec = SweepRecord {
            sweep: records.len() + 1,
            energy: f,
            penalized: fb,
            comp_violation: comp,
            feasibility: feasibility(&z, pd),
            kkt_violation: kkt_violation(&prev, &z, pd, cfg.sigma),
            gap,
            newton_iters: st.newton_iters,
            cg_iters: st.cg_iters,
            max_projection_residual: st.max_projection_residual,
            elapsed: clock.seconds() - t0,
        };
        observer(&rec);
        records.push(rec);
        if gap < cfg.eps_outer {
            break Termination::IterateGap;
        }
        if abs(fb - f_prev) < cfg.energy_stall_tol {
            break Termination::EnergyStall;
        }
        f_prev = fb;
    };
    let report = SolveReport {
        records,
        termination,
        wall_time: clock.seconds() - t0,
    };
    Ok((z, report))
}

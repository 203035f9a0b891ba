//! The level loop: global solve on the coarse mesh, then refine, lift the
//! support and polish with PBCD, level after level.

use alloc::vec::Vec;

use crate::assembly::{assemble, comp_violation, energy, CostRule, PlanSet, ProblemData};
use crate::density::DensitySpec;
use crate::diagnostics::{avg_error, kkt_certificate, seidl_maps_1d, transport_maps, ComotionMaps, KktCertificate};
use crate::error::{Error, Result};
use crate::grinit::{gr_init, SUPPORT_THRESHOLD};
use crate::mesh::{build_initial_mesh, refine, Mesh, Mesher2d, RefinementMap, SplitRule};
use crate::multistart::{multistart_solve, MultistartConfig, MultistartResult, StartSummary};
use crate::pbcd::{feasibility, pbcd_solve_with, Clock, PbcdConfig, SolveReport, SweepRecord};
use crate::projection::ProjectionConfig;

/// Penalty parameter for a mesh with `k` elements.
pub fn beta_for(k: usize) -> f64 {
    match k {
        0..=9 => 4.0,
        10..=35 => 2.0,
        36..=79 => 1.0,
        80..=159 => 0.25,
        160..=319 => 0.125,
        320..=639 => 1.0 / 16.0,
        640..=1279 => 1.0 / 32.0,
        1280..=2559 => 1.0 / 64.0,
        2560..=5119 => 1.0 / 128.0,
        _ => 1.0 / 256.0,
    }
}

/// Outer stopping tolerance for a mesh with `k` elements.
pub fn eps_outer_for(k: usize) -> f64 {
    match k {
        0..=200 => 1e-8,
        201..=2000 => 1e-6,
        2001..=10000 => 1e-5,
        _ => 1e-4,
    }
}

/// Optional replacements of the per-level defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LevelOverrides {
    /// Penalty parameter.
    pub beta: Option<f64>,
    /// Outer tolerance.
    pub eps_outer: Option<f64>,
    /// Proximal parameter.
    pub sigma: Option<f64>,
    /// Projection tolerance.
    pub eps_inner: Option<f64>,
    /// Sweep budget.
    pub max_sweeps: Option<usize>,
}

impl LevelOverrides {
    fn or(self, other: LevelOverrides) -> LevelOverrides {
        LevelOverrides {
            beta: self.beta.or(other.beta),
            eps_outer: self.eps_outer.or(other.eps_outer),
            sigma: self.sigma.or(other.sigma),
            eps_inner: self.eps_inner.or(other.eps_inner),
            max_sweeps: self.max_sweeps.or(other.max_sweeps),
        }
    }
}

/// Pipeline configuration.
#[derive(Debug, Clone)]
pub struct GgrConfig {
    /// Density.
    pub spec: DensitySpec,
    /// Elements on the coarse mesh.
    pub k0: usize,
    /// Number of refinements after the coarse level.
    pub levels: usize,
    /// Global stage settings (its PBCD settings are replaced per level).
    pub multistart: MultistartConfig,
    /// GR scaling factor.
    pub r: f64,
    /// Entries at or below this are not lifted by GR.
    pub support_threshold: f64,
    /// 2D initial mesher.
    pub mesher: Mesher2d,
    /// Refinement split rule.
    pub split: SplitRule,
    /// Cost rule on the coarse level.
    pub coarse_cost: CostRule,
    /// Cost rule on refined levels.
    pub refined_cost: CostRule,
    /// Proximal parameter.
    pub sigma: f64,
    /// Projection tolerance.
    pub eps_inner: f64,
    /// Sweep budget per PBCD solve.
    pub max_sweeps: usize,
    /// Newton budget per projection.
    pub max_newton: usize,
    /// Energy stall tolerance.
    pub energy_stall_tol: f64,
    /// Overrides for every level.
    pub overrides: LevelOverrides,
    /// Overrides for individual levels (index = level); take precedence.
    pub level_overrides: Vec<LevelOverrides>,
}

impl GgrConfig {
    /// Defaults: `sigma = 1e-3`, `eps_inner = 1e-9`, `r = 1`, one million
    /// sweeps, 1e5 Newton steps, coarse center-distance cost, cell-average cost
    /// with midpoint splitting afterwards.
    pub fn new(spec: DensitySpec, k0: usize, levels: usize) -> Self {
        Self {
            spec,
            k0,
            levels,
            multistart: MultistartConfig::default(),
            r: 1.0,
            support_threshold: SUPPORT_THRESHOLD,
            mesher: Mesher2d::default(),
            split: SplitRule::Midpoint,
            coarse_cost: CostRule::Barycentric,
            refined_cost: CostRule::CellAverage,
            sigma: 1e-3,
            eps_inner: 1e-9,
            max_sweeps: 1_000_000,
            max_newton: 100_000,
            energy_stall_tol: 1e-8,
            overrides: LevelOverrides::default(),
            level_overrides: Vec::new(),
        }
    }

    /// Checks ranges.
    pub fn validate(&self) -> Result<()> {
        if self.k0 < 2 {
            return Err(Error::param("K0", "must be at least 2"));
        }
        if self.multistart.n_starts == 0 {
            return Err(Error::param("n_starts", "must be at least 1"));
        }
        if !(self.r > 0.0) {
            return Err(Error::param("r", "must be positive"));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::param("sigma", "must be positive"));
        }
        if !(self.eps_inner > 0.0) {
            return Err(Error::param("eps_inner", "must be positive"));
        }
        Ok(())
    }

    /// Penalty and PBCD settings for `level` on a mesh of `k` elements.
    pub fn level_settings(&self, level: usize, k: usize) -> (f64, PbcdConfig) {
        let o = self
            .level_overrides
            .get(level)
            .copied()
            .unwrap_or_default()
            .or(self.overrides);
        let cfg = PbcdConfig {
            sigma: o.sigma.unwrap_or(self.sigma),
            eps_outer: o.eps_outer.unwrap_or_else(|| eps_outer_for(k)),
            energy_stall_tol: self.energy_stall_tol,
            max_sweeps: o.max_sweeps.unwrap_or(self.max_sweeps),
            projection: ProjectionConfig {
                tol: o.eps_inner.unwrap_or(self.eps_inner),
                max_newton: self.max_newton,
                ..ProjectionConfig::default()
            },
        };
        (o.beta.unwrap_or_else(|| beta_for(k)), cfg)
    }

    /// Cost rule of `level`.
    pub fn cost_rule(&self, level: usize) -> CostRule {
        if level == 0 {
            self.coarse_cost
        } else {
            self.refined_cost
        }
    }
}

/// Everything computed on one level.
#[derive(Debug, Clone)]
pub struct LevelResult {
    /// Level index (0 = coarse).
    pub level: usize,
    /// Mesh of this level.
    pub mesh: Mesh,
    /// Link to the previous level.
    pub map: Option<RefinementMap>,
    /// Converged plan.
    pub plan: PlanSet,
    /// Penalty used.
    pub beta: f64,
    /// Solver settings used.
    pub pbcd: PbcdConfig,
    /// Cost rule used.
    pub cost_rule: CostRule,
    /// `f`.
    pub energy: f64,
    /// `f_beta`.
    pub penalized: f64,
    /// `sum_{i<j} <X_i, X_j>`.
    pub comp_violation: f64,
    /// `sum_i |B(X_i) - b|`.
    pub feasibility: f64,
    /// Optimality residuals of the returned plan.
    pub kkt: KktCertificate,
    /// Error of the GR starting point (refined 1D levels only).
    pub err_s: Option<f64>,
    /// Error of the converged plan (1D only).
    pub err_e: Option<f64>,
    /// Oracle map matched to each block for `err_e`.
    pub assignment: Option<Vec<usize>>,
    /// PBCD report of the returned plan.
    pub report: SolveReport,
    /// Per-start summaries on the coarse level.
    pub starts: Option<Vec<StartSummary>>,
    /// Seconds spent on the level, as reported by the clock.
    pub time: f64,
}

impl LevelResult {
    /// Mesh size.
    pub fn k(&self) -> usize {
        self.mesh.len()
    }
}

/// Global solver for the coarse level.
pub trait GlobalStage {
    /// Solves the coarse problem.
    fn solve(&self, pd: &ProblemData, cfg: &MultistartConfig) -> Result<MultistartResult>;
}

/// Single-threaded multistart.
#[derive(Debug, Clone, Copy, Default)]
pub struct SerialMultistart;

impl GlobalStage for SerialMultistart {
    fn solve(&self, pd: &ProblemData, cfg: &MultistartConfig) -> Result<MultistartResult> {
        multistart_solve(pd, cfg)
    }
}

/// Stepwise driver; see [`ggr_run`] for the whole loop.
#[derive(Debug, Clone)]
pub struct Ggr<'a> {
    cfg: &'a GgrConfig,
    oracle: Option<ComotionMaps>,
}

impl<'a> Ggr<'a> {
    /// Validates the configuration and prepares the 1D oracle when available.
    pub fn new(cfg: &'a GgrConfig) -> Result<Self> {
        cfg.validate()?;
        let oracle = if cfg.spec.dim() == 1 {
            Some(seidl_maps_1d(&cfg.spec)?)
        } else {
            None
        };
        Ok(Self { cfg, oracle })
    }

    /// Configuration.
    pub fn config(&self) -> &GgrConfig {
        self.cfg
    }

    /// Mesh of level 0.
    pub fn initial_mesh(&self) -> Result<Mesh> {
        build_initial_mesh(&self.cfg.spec, self.cfg.k0, self.cfg.mesher)
    }

    /// Refines `mesh` with the configured split rule.
    pub fn refine_mesh(&self, mesh: &Mesh) -> Result<(Mesh, RefinementMap)> {
        refine(mesh, &self.cfg.spec, self.cfg.split)
    }

    fn error_of(&self, z: &PlanSet, mesh: &Mesh) -> Result<Option<(f64, Vec<usize>)>> {
        match &self.oracle {
            Some(o) => {
                let e = avg_error(&transport_maps(z, mesh), o, mesh, &self.cfg.spec.domain())?;
                Ok(Some((e.value, e.assignment)))
            }
            None => Ok(None),
        }
    }

    /// Problem data for `level` on `mesh`.
    pub fn problem(&self, level: usize, mesh: &Mesh) -> Result<ProblemData> {
        let (beta, _) = self.cfg.level_settings(level, mesh.len());
        assemble(mesh, &self.cfg.spec, beta, self.cfg.cost_rule(level))
    }

    /// Level 0: global stage on the coarse mesh.
    pub fn initial_level(&self, stage: &dyn GlobalStage, clock: &dyn Clock) -> Result<LevelResult> {
        let t0 = clock.seconds();
        let mesh = self.initial_mesh()?;
        let pd = self.problem(0, &mesh)?;
        let (beta, pbcd) = self.cfg.level_settings(0, mesh.len());
        let ms = MultistartConfig {
            pbcd,
            ..self.cfg.multistart
        };
        let res = stage.solve(&pd, &ms)?;
        let best = res.best().clone();
        self.finish(0, mesh, None, &pd, beta, pbcd, best.plan, best.report, None, Some(res.starts), t0, clock)
    }

    /// One refinement step from the previous level's mesh and plan.
    pub fn refined_level(&self, level: usize, prev_mesh: &Mesh, prev_plan: &PlanSet, clock: &dyn Clock) -> Result<LevelResult> {
        self.refined_level_with(level, prev_mesh, prev_plan, clock, &mut |_| {})
    }

    /// [`Ggr::refined_level`] reporting every PBCD sweep to `observer`.
    pub fn refined_level_with(
        &self,
        level: usize,
        prev_mesh: &Mesh,
        prev_plan: &PlanSet,
        clock: &dyn Clock,
        observer: &mut dyn FnMut(&SweepRecord),
    ) -> Result<LevelResult> {
        let t0 = clock.seconds();
        let (mesh, map) = self.refine_mesh(prev_mesh)?;
        let pd = self.problem(level, &mesh)?;
        let (beta, pbcd) = self.cfg.level_settings(level, mesh.len());
        let z0 = gr_init(prev_plan, &map, self.cfg.r, self.cfg.support_threshold)?;
        let err_s = self.error_of(&z0, &mesh)?.map(|e| e.0);
        let (plan, report) = pbcd_solve_with(&pd, z0, &pbcd, clock, observer)?;
        self.finish(level, mesh, Some(map), &pd, beta, pbcd, plan, report, err_s, None, t0, clock)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        level: usize,
        mesh: Mesh,
        map: Option<RefinementMap>,
        pd: &ProblemData,
        beta: f64,
        pbcd: PbcdConfig,
        plan: PlanSet,
        report: SolveReport,
        err_s: Option<f64>,
        starts: Option<Vec<StartSummary>>,
        t0: f64,
        clock: &dyn Clock,
    ) -> Result<LevelResult> {
        let e = energy(&plan, pd);
        let c = comp_violation(&plan);
        let err = self.error_of(&plan, &mesh)?;
        Ok(LevelResult {
            level,
            map,
            beta,
            pbcd,
            cost_rule: self.cfg.cost_rule(level),
            energy: e,
            penalized: e + beta * c,
            comp_violation: c,
            feasibility: feasibility(&plan, pd),
            kkt: kkt_certificate(&plan, pd, self.cfg.support_threshold),
            err_s,
            err_e: err.as_ref().map(|x| x.0),
            assignment: err.map(|x| x.1),
            report,
            starts,
            time: clock.seconds() - t0,
            mesh,
            plan,
        })
    }
}

/// A failed run together with the levels that completed.
#[derive(Debug, Clone)]
pub struct GgrFailure {
    /// What went wrong.
    pub error: Error,
    /// Levels finished before the failure.
    pub completed: Vec<LevelResult>,
}

/// Runs level 0 and `cfg.levels` refinements.
pub fn ggr_run(cfg: &GgrConfig, stage: &dyn GlobalStage, clock: &dyn Clock) -> core::result::Result<Vec<LevelResult>, GgrFailure> {
    let fail = |error, completed| GgrFailure { error, completed };
    let g = Ggr::new(cfg).map_err(|e| fail(e, Vec::new()))?;
    let mut out: Vec<LevelResult> = Vec::with_capacity(cfg.levels + 1);
    match g.initial_level(stage, clock) {
        Ok(l) => out.push(l),
        Err(e) => return Err(fail(e, out)),
    }
    for level in 1..=cfg.levels {
        let prev = out.last().expect("level 0 exists");
        match g.refined_level(level, &prev.mesh, &prev.plan, clock) {
            Ok(l) => out.push(l),
            Err(e) => return Err(fail(e, out)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_schedule() {
        assert_eq!(beta_for(48), 1.0);
        assert_eq!(beta_for(192), 0.125);
        assert_eq!(beta_for(5120), 1.0 / 256.0);
        assert_eq!(beta_for(9), 4.0);
        assert_eq!(beta_for(10), 2.0);
        assert_eq!(beta_for(36), 1.0);
        assert_eq!(beta_for(80), 0.25);
    }

    #[test]
    fn eps_schedule() {
        assert_eq!(eps_outer_for(96), 1e-8);
        assert_eq!(eps_outer_for(200), 1e-8);
        assert_eq!(eps_outer_for(960), 1e-6);
        assert_eq!(eps_outer_for(10000), 1e-5);
        assert_eq!(eps_outer_for(15360), 1e-4);
    }
}

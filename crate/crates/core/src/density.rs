//! Single-particle densities and their cumulative distribution in 1D.

use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::math::{abs, ceil, cos, exp, sqrt};
use crate::quadrature::{adaptive, gk15, GaussRule};

/// Computational domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// `[lo, hi]`.
    Interval {
        /// Left end.
        lo: f64,
        /// Right end.
        hi: f64,
    },
    /// `[x0, x1] x [y0, y1]`.
    Rect {
        /// x range.
        x: (f64, f64),
        /// y range.
        y: (f64, f64),
    },
}

impl Domain {
    /// Spatial dimension (1 or 2).
    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Rect { .. } => 2,
        }
    }

    /// Lebesgue measure.
    pub fn measure(&self) -> f64 {
        match *self {
            Domain::Interval { lo, hi } => hi - lo,
            Domain::Rect { x, y } => (x.1 - x.0) * (y.1 - y.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Domain::Interval { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Domain::Rect { x, y } => {
                x.0.is_finite() && x.1.is_finite() && y.0.is_finite() && y.1.is_finite() && x.0 < x.1 && y.0 < y.1
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param("domain", "bounds must be finite and increasing"))
        }
    }
}

/// One isotropic Gaussian bump `weight * exp(-rate * |p - center|^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    /// Amplitude.
    pub weight: f64,
    /// Exponential rate.
    pub rate: f64,
    /// Center (the second coordinate is ignored in 1D).
    pub center: [f64; 2],
}

/// Unnormalized density shape.
#[derive(Clone)]
pub enum Profile {
    /// Constant.
    Uniform,
    /// `cos(pi x) + 1`.
    CosineBump,
    /// `exp(-|x|)`.
    AbsExponential,
    /// Sum of Gaussians.
    Gaussians(Vec<Gaussian>),
    /// User supplied function of `(x, y)`; `y` is 0 in 1D.
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Uniform => f.write_str("Uniform"),
            Profile::CosineBump => f.write_str("CosineBump"),
            Profile::AbsExponential => f.write_str("AbsExponential"),
            Profile::Gaussians(g) => f.debug_tuple("Gaussians").field(g).finish(),
            Profile::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Profile {
    /// Unnormalized value at `(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Profile::Uniform => 1.0,
            Profile::CosineBump => cos(core::f64::consts::PI * x) + 1.0,
            Profile::AbsExponential => exp(-abs(x)),
            Profile::Gaussians(terms) => terms
                .iter()
                .map(|g| {
                    let dx = x - g.center[0];
                    let dy = y - g.center[1];
                    g.weight * exp(-g.rate * (dx * dx + dy * dy))
                })
                .sum(),
            Profile::Custom(f) => f(x, y),
        }
    }
}

/// Benchmark densities shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinSystem {
    /// `cos(pi x) + 1` on `[-1, 1]`, three electrons.
    System1,
    /// Two Gaussians on `[-1, 1]`, three electrons.
    System2,
    /// `exp(-|x|)` on `[-5, 5]`, three electrons.
    System3,
    /// Gaussian on `[-2, 2]`, seven electrons.
    System4,
    /// Seven Gaussians on `[-4, 4]`, seven electrons.
    System5,
    /// Seven Gaussians on `[-3, 3]`, seven electrons.
    System6,
    /// Two Gaussians on `[-3, 3] x [-2, 2]`, three electrons.
    System7,
    /// Three Gaussians on `[-2.5, 2.5]^2`, three electrons.
    System8,
}

impl BuiltinSystem {
    /// All systems in order.
    pub const ALL: [BuiltinSystem; 8] = [
        BuiltinSystem::System1,
        BuiltinSystem::System2,
        BuiltinSystem::System3,
        BuiltinSystem::System4,
        BuiltinSystem::System5,
        BuiltinSystem::System6,
        BuiltinSystem::System7,
        BuiltinSystem::System8,
    ];

    /// Parses `"system1"` .. `"system8"` (also `"rho1"` .. `"rho8"`).
    pub fn from_name(name: &str) -> Option<Self> {
        let idx = name
            .strip_prefix("system")
            .or_else(|| name.strip_prefix("rho"))?
            .parse::<usize>()
            .ok()?;
        Self::ALL.get(idx.checked_sub(1)?).copied()
    }

    /// Coarsest mesh size used by the benchmarks.
    pub fn default_k0(self) -> usize {
        match self {
            BuiltinSystem::System1 | BuiltinSystem::System2 | BuiltinSystem::System3 => 12,
            BuiltinSystem::System4 | BuiltinSystem::System5 | BuiltinSystem::System6 => 14,
            BuiltinSystem::System7 => 240,
            BuiltinSystem::System8 => 170,
        }
    }

    /// The normalized density.
    pub fn spec(self) -> DensitySpec {
        let g1 = |weight: f64, rate: f64, c: f64| Gaussian {
            weight,
            rate,
            center: [c, 0.0],
        };
        let (domain, n, profile, kinks) = match self {
            BuiltinSystem::System1 => (interval(-1.0, 1.0), 3, Profile::CosineBump, vec![]),
            BuiltinSystem::System2 => (
                interval(-1.0, 1.0),
                3,
                Profile::Gaussians(vec![g1(2.0, 6.0, -0.5), g1(1.5, 4.0, 0.5)]),
                vec![],
            ),
            BuiltinSystem::System3 => (interval(-5.0, 5.0), 3, Profile::AbsExponential, vec![0.0]),
            BuiltinSystem::System4 => (
                interval(-2.0, 2.0),
                7,
                Profile::Gaussians(vec![g1(1.0, 1.0 / sqrt(core::f64::consts::PI), 0.0)]),
                vec![],
            ),
            BuiltinSystem::System5 => {
                let centers = [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
                let rates = [3.0, 3.0, 2.0, 1.0, 2.0, 3.0, 3.0];
                let terms = centers.iter().zip(rates).map(|(&c, r)| g1(1.0, r, c)).collect();
                (interval(-4.0, 4.0), 7, Profile::Gaussians(terms), vec![])
            }
            BuiltinSystem::System6 => {
                let mut terms: Vec<Gaussian> = [-2.7, -2.025, -1.35, -0.675]
                    .iter()
                    .map(|&c| g1(1.0, 8.0, c))
                    .collect();
                terms.extend([0.5, 1.5, 2.5].iter().map(|&c| g1(1.0, 5.0, c)));
                (interval(-3.0, 3.0), 7, Profile::Gaussians(terms), vec![])
            }
            BuiltinSystem::System7 => (
                Domain::Rect {
                    x: (-3.0, 3.0),
                    y: (-2.0, 2.0),
                },
                3,
                Profile::Gaussians(vec![
                    Gaussian {
                        weight: 1.0,
                        rate: 2.5,
                        center: [-1.5, 0.0],
                    },
                    Gaussian {
                        weight: 0.5,
                        rate: 2.5,
                        center: [1.5, 0.0],
                    },
                ]),
                vec![],
            ),
            BuiltinSystem::System8 => (
                Domain::Rect {
                    x: (-2.5, 2.5),
                    y: (-2.5, 2.5),
                },
                3,
                Profile::Gaussians(
                    [[-1.032, -0.84], [0.0, 0.96], [1.032, -0.84]]
                        .iter()
                        .map(|&center| Gaussian {
                            weight: 1.0,
                            rate: 2.5,
                            center,
                        })
                        .collect(),
                ),
                vec![],
            ),
        };
        DensitySpec::with_kinks(domain, n, profile, kinks).expect("builtin densities are valid")
    }
}

fn interval(lo: f64, hi: f64) -> Domain {
    Domain::Interval { lo, hi }
}

/// A density on a domain normalized so that it integrates to the number of
/// electrons `N`.
#[derive(Debug, Clone)]
pub struct DensitySpec {
    domain: Domain,
    electrons: usize,
    profile: Profile,
    kinks: Vec<f64>,
    scale: f64,
}

/// Composite tensor Gauss parameters for 2D masses.
const PANELS_2D: f64 = 64.0;
const RULE_2D: usize = 8;

impl DensitySpec {
    /// Normalizes `profile` on `domain` to total mass `electrons`.
    pub fn new(domain: Domain, electrons: usize, profile: Profile) -> Result<Self> {
        Self::with_kinks(domain, electrons, profile, Vec::new())
    }

    /// Like [`DensitySpec::new`], with 1D points where the profile is not smooth.
    /// Quadrature panels are aligned to them.
    pub fn with_kinks(domain: Domain, electrons: usize, profile: Profile, mut kinks: Vec<f64>) -> Result<Self> {
        domain.validate()?;
        if electrons < 2 {
            return Err(Error::param("electrons", "need at least two electrons"));
        }
        kinks.sort_by(|a, b| a.total_cmp(b));
        let mut spec = Self {
            domain,
            electrons,
            profile,
            kinks,
            scale: 1.0,
        };
        let total = spec.raw_mass(&domain_cell(&domain))?;
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::DegenerateDensity(alloc::format!(
                "profile integrates to {total}"
            )));
        }
        spec.scale = electrons as f64 / total;
        Ok(spec)
    }

    /// Domain.
    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Spatial dimension.
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Number of electrons `N`.
    pub fn electrons(&self) -> usize {
        self.electrons
    }

    /// Profile.
    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Normalized density at `(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.scale * self.profile.eval(x, y)
    }

    /// Mass of an interval `[a, b]` (1D only).
    pub fn interval_mass(&self, a: f64, b: f64) -> Result<f64> {
        Ok(self.scale * self.raw_mass(&[a, b, 0.0, 0.0])?)
    }

    /// Mass of a rectangle (2D only).
    pub fn rect_mass(&self, x: (f64, f64), y: (f64, f64)) -> Result<f64> {
        Ok(self.scale * self.raw_mass(&[x.0, x.1, y.0, y.1])?)
    }

    fn raw_mass(&self, b: &[f64; 4]) -> Result<f64> {
        let v = match self.domain {
            Domain::Interval { .. } => {
                let mut pts = vec![b[0]];
                pts.extend(self.kinks.iter().copied().filter(|&k| k > b[0] && k < b[1]));
                pts.push(b[1]);
                let mut s = 0.0;
                for w in pts.windows(2) {
                    s += adaptive(w[0], w[1], 1e-15, 4096, |x| self.profile.eval(x, 0.0))?;
                }
                s
            }
            Domain::Rect { x, y } => {
                let hx = (x.1 - x.0) / PANELS_2D;
                let hy = (y.1 - y.0) / PANELS_2D;
                let nx = (ceil((b[1] - b[0]) / hx) as usize).max(1);
                let ny = (ceil((b[3] - b[2]) / hy) as usize).max(1);
                let rule = GaussRule::legendre(RULE_2D);
                let dx = (b[1] - b[0]) / nx as f64;
                let dy = (b[3] - b[2]) / ny as f64;
                let mut s = 0.0;
                for i in 0..nx {
                    let xa = b[0] + i as f64 * dx;
                    for j in 0..ny {
                        let ya = b[2] + j as f64 * dy;
                        s += rule.integrate_2d((xa, xa + dx), (ya, ya + dy), |p, q| self.profile.eval(p, q));
                    }
                }
                s
            }
        };
        if v < 0.0 || !v.is_finite() {
            return Err(Error::DegenerateDensity(alloc::format!(
                "negative or non-finite mass {v} on a cell"
            )));
        }
        Ok(v)
    }

    /// Tabulated cumulative distribution (1D only).
    pub fn cdf(&self) -> Result<Cdf1d> {
        Cdf1d::new(self)
    }
}

fn domain_cell(d: &Domain) -> [f64; 4] {
    match *d {
        Domain::Interval { lo, hi } => [lo, hi, 0.0, 0.0],
        Domain::Rect { x, y } => [x.0, x.1, y.0, y.1],
    }
}

/// Tabulated mass function `F(x) = int_lo^x rho` of a 1D density.
#[derive(Debug, Clone)]
pub struct Cdf1d {
    spec: DensitySpec,
    breaks: Vec<f64>,
    cum: Vec<f64>,
}

const CDF_PANELS: usize = 2048;

impl Cdf1d {
    /// Builds the table. Panels are uniform and split at the kinks.
    pub fn new(spec: &DensitySpec) -> Result<Self> {
        let Domain::Interval { lo, hi } = spec.domain else {
            return Err(Error::ContractViolation("cdf requires a 1D density".to_string()));
        };
        let h = (hi - lo) / CDF_PANELS as f64;
        let mut breaks: Vec<f64> = (0..=CDF_PANELS).map(|i| lo + i as f64 * h).collect();
        breaks[CDF_PANELS] = hi;
        breaks.extend(spec.kinks.iter().copied().filter(|&k| k > lo && k < hi));
        breaks.sort_by(|a, b| a.total_cmp(b));
        breaks.dedup();
        let mut cum = Vec::with_capacity(breaks.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in breaks.windows(2) {
            let m = adaptive(w[0], w[1], 1e-16, 256, |x| spec.eval(x, 0.0))?;
            if m < 0.0 {
                return Err(Error::DegenerateDensity("negative density".to_string()));
            }
            acc += m;
            cum.push(acc);
        }
        // The table is normalized against its own total so that F(hi) = N exactly.
        let total = acc;
        let n = spec.electrons as f64;
        for c in cum.iter_mut() {
            *c *= n / total;
        }
        Ok(Self {
            spec: spec.clone(),
            breaks,
            cum,
        })
    }

    /// Total mass `N`.
    pub fn total(&self) -> f64 {
        *self.cum.last().expect("table is non-empty")
    }

    /// Domain ends.
    pub fn bounds(&self) -> (f64, f64) {
        (self.breaks[0], *self.breaks.last().expect("non-empty"))
    }

    /// The underlying density.
    pub fn density(&self) -> &DensitySpec {
        &self.spec
    }

    fn panel_of(&self, x: f64) -> usize {
        let i = self.breaks.partition_point(|&b| b <= x);
        i.saturating_sub(1).min(self.breaks.len() - 2)
    }

    fn partial(&self, p: usize, x: f64) -> f64 {
        let a = self.breaks[p];
        if x <= a {
            return 0.0;
        }
        let scale = self.total() / self.spec.electrons as f64;
        let mut f = |t: f64| self.spec.eval(t, 0.0);
        scale * gk15(a, x, &mut f).0
    }

    /// `F(x)`, clamped to `[0, N]` outside the domain.
    pub fn mass(&self, x: f64) -> f64 {
        let (lo, hi) = self.bounds();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return self.total();
        }
        let p = self.panel_of(x);
        self.cum[p] + self.partial(p, x)
    }

    /// Smallest `x` with `F(x) = m`, found by bisection.
    pub fn inverse(&self, m: f64) -> Result<f64> {
        let total = self.total();
        if !(0.0..=total).contains(&m) {
            return Err(Error::ContractViolation(alloc::format!(
                "mass level {m} outside [0, {total}]"
            )));
        }
        let (lo, hi) = self.bounds();
        if m <= 0.0 {
            return Ok(lo);
        }
        if m >= total {
            return Ok(hi);
        }
        // first panel whose right cumulative value reaches m
        let p = self.cum.partition_point(|&c| c < m).saturating_sub(1).min(self.breaks.len() - 2);
        let (mut a, mut b) = (self.breaks[p], self.breaks[p + 1]);
        let target = m - self.cum[p];
        let panel_mass = self.cum[p + 1] - self.cum[p];
        if panel_mass <= 0.0 {
            return Err(Error::DegenerateDensity(alloc::format!(
                "density vanishes around x = {a}; mass level {m} has no unique preimage"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if self.partial(p, mid) < target {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(0.5 * (a + b))
    }
}

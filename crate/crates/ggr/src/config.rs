//! Run configuration: JSON parsing with per-key validation and the mapping to
//! [`GgrConfig`].

use std::fmt;
use std::path::PathBuf;

use ggr_core::density::{BuiltinSystem, DensitySpec, Domain, Profile};
use ggr_core::ggr::{GgrConfig, LevelOverrides};
use ggr_core::mesh::{Mesher2d, SplitRule};
use ggr_core::multistart::MultistartConfig;
use ggr_core::pbcd::PbcdConfig;
use ggr_core::CostRule;
use serde_json::{json, Map, Value};

use crate::expr::DensityExpr;

/// One problem with one key of the configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    /// Dotted path of the key, e.g. `overrides.beta`.
    pub key: String,
    /// What is wrong.
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

/// Where the density comes from.
#[derive(Debug, Clone)]
pub enum SystemSource {
    /// One of the eight benchmark densities.
    Builtin(BuiltinSystem),
    /// A user expression in `x` (and `y` in 2D).
    Expression {
        /// Parsed expression.
        expr: DensityExpr,
        /// Domain.
        domain: Domain,
        /// Number of electrons.
        electrons: usize,
        /// 1D points where the expression is not smooth.
        kinks: Vec<f64>,
    },
}

impl SystemSource {
    /// The normalized density.
    pub fn spec(&self) -> ggr_core::Result<DensitySpec> {
        match self {
            SystemSource::Builtin(s) => Ok(s.spec()),
            SystemSource::Expression {
                expr,
                domain,
                electrons,
                kinks,
            } => DensitySpec::with_kinks(*domain, *electrons, Profile::Custom(expr.clone().into_fn()), kinks.clone()),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            SystemSource::Builtin(s) => Value::String(builtin_name(*s).to_string()),
            SystemSource::Expression {
                expr,
                domain,
                electrons,
                kinks,
            } => {
                let domain = match *domain {
                    Domain::Interval { lo, hi } => json!([lo, hi]),
                    Domain::Rect { x, y } => json!([[x.0, x.1], [y.0, y.1]]),
                };
                json!({
                    "expression": expr.source(),
                    "domain": domain,
                    "electrons": electrons,
                    "kinks": kinks,
                })
            }
        }
    }
}

/// Canonical name of a builtin system.
pub fn builtin_name(s: BuiltinSystem) -> &'static str {
    match s {
        BuiltinSystem::System1 => "system1",
        BuiltinSystem::System2 => "system2",
        BuiltinSystem::System3 => "system3",
        BuiltinSystem::System4 => "system4",
        BuiltinSystem::System5 => "system5",
        BuiltinSystem::System6 => "system6",
        BuiltinSystem::System7 => "system7",
        BuiltinSystem::System8 => "system8",
    }
}

/// Disk and radius selecting the points of a 2D slice plot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceSpec {
    /// Center of the pre-image disk.
    pub center: [f64; 2],
    /// Radius of the pre-image disk.
    pub radius: f64,
}

/// Validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Density.
    pub system: SystemSource,
    /// Coarse mesh size.
    pub k0: usize,
    /// Refinement steps after the coarse level.
    pub levels: usize,
    /// Multistart count on the coarse level.
    pub n_starts: usize,
    /// Master seed.
    pub seed: u64,
    /// Proximal parameter.
    pub sigma: f64,
    /// Projection tolerance.
    pub eps_inner: f64,
    /// PBCD sweep budget.
    pub max_sweeps: usize,
    /// Newton budget per projection.
    pub max_newton: usize,
    /// Energy stall tolerance.
    pub energy_stall_tol: f64,
    /// GR scaling.
    pub r: f64,
    /// Support threshold of the GR lift and the KKT certificate.
    pub support_threshold: f64,
    /// Coarse plans retained by the multistart.
    pub keep_top: usize,
    /// Overrides for every level.
    pub overrides: LevelOverrides,
    /// Overrides per level.
    pub level_overrides: Vec<LevelOverrides>,
    /// 2D mesher.
    pub mesher: Mesher2d,
    /// Refinement split rule.
    pub split: SplitRule,
    /// Cost rule on the coarse level.
    pub coarse_cost: CostRule,
    /// Cost rule on refined levels.
    pub refined_cost: CostRule,
    /// Slice plot for 2D maps.
    pub slice: Option<SliceSpec>,
    /// Output directory named in the file.
    pub out: Option<PathBuf>,
}

const KEYS: &[&str] = &[
    "system",
    "K0",
    "levels",
    "n_starts",
    "seed",
    "sigma",
    "eps_inner",
    "max_sweeps",
    "max_newton",
    "energy_stall_tol",
    "r",
    "support_threshold",
    "keep_top",
    "overrides",
    "level_overrides",
    "mesher",
    "split",
    "coarse_cost",
    "refined_cost",
    "slice",
    "out",
];

const OVERRIDE_KEYS: &[&str] = &["beta", "eps_outer", "sigma", "eps_inner", "max_sweeps"];

struct Reader {
    issues: Vec<ConfigIssue>,
}

impl Reader {
    fn issue(&mut self, key: &str, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            key: key.to_string(),
            message: message.into(),
        });
    }

    fn unknown(&mut self, obj: &Map<String, Value>, allowed: &[&str], prefix: &str) {
        for k in obj.keys() {
            if !allowed.contains(&k.as_str()) {
                self.issue(&format!("{prefix}{k}"), "unknown key");
            }
        }
    }

    fn uint(&mut self, v: Option<&Value>, key: &str, min: u64) -> Option<u64> {
        let v = v?;
        match v.as_u64() {
            Some(n) if n >= min => Some(n),
            Some(_) => {
                self.issue(key, format!("must be at least {min}"));
                None
            }
            None => {
                self.issue(key, "must be a non-negative integer");
                None
            }
        }
    }

    fn positive(&mut self, v: Option<&Value>, key: &str) -> Option<f64> {
        let v = v?;
        match v.as_f64() {
            Some(x) if x > 0.0 && x.is_finite() => Some(x),
            Some(_) => {
                self.issue(key, "must be positive and finite");
                None
            }
            None => {
                self.issue(key, "must be a number");
                None
            }
        }
    }

    fn number(&mut self, v: &Value, key: &str) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.issue(key, "must be a finite number");
                None
            }
        }
    }

    fn choice<T: Copy>(&mut self, v: Option<&Value>, key: &str, options: &[(&str, T)]) -> Option<T> {
        let v = v?;
        let names: Vec<&str> = options.iter().map(|o| o.0).collect();
        match v.as_str().and_then(|s| options.iter().find(|o| o.0 == s)) {
            Some(o) => Some(o.1),
            None => {
                self.issue(key, format!("must be one of {}", names.join(", ")));
                None
            }
        }
    }

    fn overrides(&mut self, v: &Value, prefix: &str) -> LevelOverrides {
        let mut o = LevelOverrides::default();
        let Some(obj) = v.as_object() else {
            self.issue(prefix.trim_end_matches('.'), "must be an object");
            return o;
        };
        self.unknown(obj, OVERRIDE_KEYS, prefix);
        o.beta = self.positive(obj.get("beta"), &format!("{prefix}beta"));
        o.eps_outer = self.positive(obj.get("eps_outer"), &format!("{prefix}eps_outer"));
        o.sigma = self.positive(obj.get("sigma"), &format!("{prefix}sigma"));
        o.eps_inner = self.positive(obj.get("eps_inner"), &format!("{prefix}eps_inner"));
        o.max_sweeps = self.uint(obj.get("max_sweeps"), &format!("{prefix}max_sweeps"), 1).map(|n| n as usize);
        o
    }

    fn interval(&mut self, v: &Value, key: &str) -> Option<(f64, f64)> {
        let pair = v.as_array().filter(|a| a.len() == 2);
        let Some(pair) = pair else {
            self.issue(key, "must be a pair [lo, hi]");
            return None;
        };
        let lo = self.number(&pair[0], key)?;
        let hi = self.number(&pair[1], key)?;
        if lo < hi {
            Some((lo, hi))
        } else {
            self.issue(key, "needs lo < hi");
            None
        }
    }

    fn system(&mut self, v: Option<&Value>) -> Option<SystemSource> {
        let Some(v) = v else {
            self.issue("system", "missing");
            return None;
        };
        if let Some(name) = v.as_str() {
            return match BuiltinSystem::from_name(name) {
                Some(s) => Some(SystemSource::Builtin(s)),
                None => {
                    self.issue("system", format!("unknown builtin system `{name}`"));
                    None
                }
            };
        }
        let Some(obj) = v.as_object() else {
            self.issue("system", "must be a builtin name or an object with an expression");
            return None;
        };
        self.unknown(obj, &["expression", "domain", "electrons", "kinks"], "system.");
        let expr = match obj.get("expression").map(|e| e.as_str()) {
            Some(Some(src)) => match DensityExpr::parse(src) {
                Ok(e) => Some(e),
                Err(msg) => {
                    self.issue("system.expression", msg);
                    None
                }
            },
            Some(None) => {
                self.issue("system.expression", "must be a string");
                None
            }
            None => {
                self.issue("system.expression", "missing");
                None
            }
        };
        let domain = match obj.get("domain") {
            None => {
                self.issue("system.domain", "missing");
                None
            }
            Some(d) => {
                let nested = d.as_array().is_some_and(|a| a.first().is_some_and(Value::is_array));
                if nested {
                    let a = d.as_array().unwrap();
                    if a.len() != 2 {
                        self.issue("system.domain", "a 2D domain is [[x0, x1], [y0, y1]]");
                        None
                    } else {
                        let x = self.interval(&a[0], "system.domain");
                        let y = self.interval(&a[1], "system.domain");
                        Some(Domain::Rect { x: x?, y: y? })
                    }
                } else {
                    self.interval(d, "system.domain").map(|(lo, hi)| Domain::Interval { lo, hi })
                }
            }
        };
        let electrons = match obj.get("electrons") {
            None => {
                self.issue("system.electrons", "missing");
                None
            }
            e => self.uint(e, "system.electrons", 2).map(|n| n as usize),
        };
        let kinks = match obj.get("kinks") {
            None => Some(Vec::new()),
            Some(Value::Array(a)) => a.iter().map(|k| self.number(k, "system.kinks")).collect(),
            Some(_) => {
                self.issue("system.kinks", "must be an array of numbers");
                None
            }
        };
        Some(SystemSource::Expression {
            expr: expr?,
            domain: domain?,
            electrons: electrons?,
            kinks: kinks?,
        })
    }
}

const MESHERS: &[(&str, Mesher2d)] = &[("quadtree", Mesher2d::Quadtree), ("equal_mass_kd", Mesher2d::EqualMassKd)];
const SPLITS: &[(&str, SplitRule)] = &[("midpoint", SplitRule::Midpoint), ("equal_mass", SplitRule::EqualMass)];
const COSTS: &[(&str, CostRule)] = &[("cell_average", CostRule::CellAverage), ("barycentric", CostRule::Barycentric)];

fn name_of<T: PartialEq>(options: &[(&'static str, T)], v: T) -> &'static str {
    options.iter().find(|o| o.1 == v).map(|o| o.0).expect("every variant is listed")
}

fn overrides_json(o: &LevelOverrides) -> Value {
    let mut m = Map::new();
    if let Some(v) = o.beta {
        m.insert("beta".into(), json!(v));
    }
    if let Some(v) = o.eps_outer {
        m.insert("eps_outer".into(), json!(v));
    }
    if let Some(v) = o.sigma {
        m.insert("sigma".into(), json!(v));
    }
    if let Some(v) = o.eps_inner {
        m.insert("eps_inner".into(), json!(v));
    }
    if let Some(v) = o.max_sweeps {
        m.insert("max_sweeps".into(), json!(v));
    }
    Value::Object(m)
}

impl RunConfig {
    /// Parses JSON text; every offending key is reported.
    pub fn from_json_str(text: &str) -> Result<Self, Vec<ConfigIssue>> {
        let v: Value = serde_json::from_str(text).map_err(|e| {
            vec![ConfigIssue {
                key: String::new(),
                message: format!("not valid JSON: {e}"),
            }]
        })?;
        Self::from_value(&v)
    }

    /// Builds a configuration from a parsed JSON document.
    pub fn from_value(v: &Value) -> Result<Self, Vec<ConfigIssue>> {
        let mut r = Reader { issues: Vec::new() };
        let Some(obj) = v.as_object() else {
            return Err(vec![ConfigIssue {
                key: String::new(),
                message: "top level must be an object".into(),
            }]);
        };
        r.unknown(obj, KEYS, "");
        let system = r.system(obj.get("system"));
        let defaults = GgrConfig::new(BuiltinSystem::System1.spec(), 2, 0);
        let k0 = r.uint(obj.get("K0"), "K0", 2).map(|n| n as usize);
        let k0 = match (k0, &system) {
            (Some(k), _) => Some(k),
            (None, Some(SystemSource::Builtin(s))) => Some(s.default_k0()),
            (None, Some(SystemSource::Expression { .. })) => {
                if !obj.contains_key("K0") {
                    r.issue("K0", "required for expression densities");
                }
                None
            }
            (None, None) => None,
        };
        let levels = r.uint(obj.get("levels"), "levels", 0).unwrap_or(0) as usize;
        let n_starts = r
            .uint(obj.get("n_starts"), "n_starts", 1)
            .map_or(defaults.multistart.n_starts, |n| n as usize);
        let seed = match obj.get("seed") {
            None => 0,
            Some(s) => s.as_u64().unwrap_or_else(|| {
                r.issue("seed", "must be a non-negative integer");
                0
            }),
        };
        let sigma = r.positive(obj.get("sigma"), "sigma").unwrap_or(defaults.sigma);
        let eps_inner = r.positive(obj.get("eps_inner"), "eps_inner").unwrap_or(defaults.eps_inner);
        let max_sweeps = r
            .uint(obj.get("max_sweeps"), "max_sweeps", 1)
            .map_or(defaults.max_sweeps, |n| n as usize);
        let max_newton = r
            .uint(obj.get("max_newton"), "max_newton", 1)
            .map_or(defaults.max_newton, |n| n as usize);
        let energy_stall_tol = r
            .positive(obj.get("energy_stall_tol"), "energy_stall_tol")
            .unwrap_or(defaults.energy_stall_tol);
        let rr = r.positive(obj.get("r"), "r").unwrap_or(defaults.r);
        let support_threshold = r
            .positive(obj.get("support_threshold"), "support_threshold")
            .unwrap_or(defaults.support_threshold);
        let keep_top = r.uint(obj.get("keep_top"), "keep_top", 1).map_or(1, |n| n as usize);
        let overrides = obj.get("overrides").map(|o| r.overrides(o, "overrides.")).unwrap_or_default();
        let level_overrides = match obj.get("level_overrides") {
            None => Vec::new(),
            Some(Value::Array(a)) => a
                .iter()
                .enumerate()
                .map(|(i, o)| r.overrides(o, &format!("level_overrides[{i}].")))
                .collect(),
            Some(_) => {
                r.issue("level_overrides", "must be an array of objects");
                Vec::new()
            }
        };
        let mesher = r.choice(obj.get("mesher"), "mesher", MESHERS).unwrap_or(defaults.mesher);
        let split = r.choice(obj.get("split"), "split", SPLITS).unwrap_or(defaults.split);
        let coarse_cost = r.choice(obj.get("coarse_cost"), "coarse_cost", COSTS).unwrap_or(defaults.coarse_cost);
        let refined_cost = r.choice(obj.get("refined_cost"), "refined_cost", COSTS).unwrap_or(defaults.refined_cost);
        let slice = match obj.get("slice") {
            None => None,
            Some(Value::Object(s)) => {
                r.unknown(s, &["center", "radius"], "slice.");
                let center = match s.get("center").and_then(Value::as_array) {
                    Some(c) if c.len() == 2 => match (r.number(&c[0], "slice.center"), r.number(&c[1], "slice.center")) {
                        (Some(a), Some(b)) => Some([a, b]),
                        _ => None,
                    },
                    _ => {
                        r.issue("slice.center", "must be a pair [x, y]");
                        None
                    }
                };
                let radius = match s.get("radius") {
                    None => {
                        r.issue("slice.radius", "missing");
                        None
                    }
                    v => r.positive(v, "slice.radius"),
                };
                match (center, radius) {
                    (Some(center), Some(radius)) => Some(SliceSpec { center, radius }),
                    _ => None,
                }
            }
            Some(_) => {
                r.issue("slice", "must be an object {center, radius}");
                None
            }
        };
        let out = match obj.get("out") {
            None => None,
            Some(Value::String(s)) => Some(PathBuf::from(s)),
            Some(_) => {
                r.issue("out", "must be a string");
                None
            }
        };
        if !r.issues.is_empty() {
            return Err(r.issues);
        }
        let (Some(system), Some(k0)) = (system, k0) else {
            unreachable!("missing values are reported as issues")
        };
        Ok(Self {
            system,
            k0,
            levels,
            n_starts,
            seed,
            sigma,
            eps_inner,
            max_sweeps,
            max_newton,
            energy_stall_tol,
            r: rr,
            support_threshold,
            keep_top,
            overrides,
            level_overrides,
            mesher,
            split,
            coarse_cost,
            refined_cost,
            slice,
            out,
        })
    }

    /// Fully resolved configuration as JSON, without `out`. Parsing the
    /// result gives back the same configuration.
    pub fn canonical_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("system".into(), self.system.to_json());
        m.insert("K0".into(), json!(self.k0));
        m.insert("levels".into(), json!(self.levels));
        m.insert("n_starts".into(), json!(self.n_starts));
        m.insert("seed".into(), json!(self.seed));
        m.insert("sigma".into(), json!(self.sigma));
        m.insert("eps_inner".into(), json!(self.eps_inner));
        m.insert("max_sweeps".into(), json!(self.max_sweeps));
        m.insert("max_newton".into(), json!(self.max_newton));
        m.insert("energy_stall_tol".into(), json!(self.energy_stall_tol));
        m.insert("r".into(), json!(self.r));
        m.insert("support_threshold".into(), json!(self.support_threshold));
        m.insert("keep_top".into(), json!(self.keep_top));
        m.insert("overrides".into(), overrides_json(&self.overrides));
        m.insert(
            "level_overrides".into(),
            Value::Array(self.level_overrides.iter().map(overrides_json).collect()),
        );
        m.insert("mesher".into(), json!(name_of(MESHERS, self.mesher)));
        m.insert("split".into(), json!(name_of(SPLITS, self.split)));
        m.insert("coarse_cost".into(), json!(name_of(COSTS, self.coarse_cost)));
        m.insert("refined_cost".into(), json!(name_of(COSTS, self.refined_cost)));
        if let Some(s) = self.slice {
            m.insert("slice".into(), json!({"center": s.center, "radius": s.radius}));
        }
        Value::Object(m)
    }

    /// Pipeline configuration for `ggr-core`.
    pub fn to_ggr(&self) -> ggr_core::Result<GgrConfig> {
        let mut cfg = GgrConfig::new(self.system.spec()?, self.k0, self.levels);
        cfg.multistart = MultistartConfig {
            n_starts: self.n_starts,
            seed: self.seed,
            pbcd: PbcdConfig::default(),
            keep_top: self.keep_top,
        };
        cfg.r = self.r;
        cfg.support_threshold = self.support_threshold;
        cfg.mesher = self.mesher;
        cfg.split = self.split;
        cfg.coarse_cost = self.coarse_cost;
        cfg.refined_cost = self.refined_cost;
        cfg.sigma = self.sigma;
        cfg.eps_inner = self.eps_inner;
        cfg.max_sweeps = self.max_sweeps;
        cfg.max_newton = self.max_newton;
        cfg.energy_stall_tol = self.energy_stall_tol;
        cfg.overrides = self.overrides;
        cfg.level_overrides = self.level_overrides.clone();
        Ok(cfg)
    }
}

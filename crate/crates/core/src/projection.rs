//! Euclidean projection onto `S` by a semismooth Newton method on the dual.
//!
//! The dual function is
//!
//! ```text
//! theta(l) = <l, b> - 1/2 |max(0, Y + B*(l))|^2 + 1/2 |Y|^2
//! ```
//!
//! with gradient `b - B(W(l))`, `W(l) = max(0, Y + B*(l))`. Newton directions
//! solve `(V + eps I) d = b - B(W)` where `V = B diag(active) B*`, by CG with
//! the null direction of `B*` deflated and a diagonal preconditioner (the
//! two K x K diagonal blocks of `V` are themselves diagonal).

use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{apply_b, apply_b_adjoint, ProblemData};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::math::{dot, norm2, powf};

/// Solver parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    /// Stop when `|B(W) - b|_2 <= tol`.
    pub tol: f64,
    /// Newton iteration cap.
    pub max_newton: usize,
    /// Armijo slope parameter.
    pub armijo: f64,
    /// Backtracking factor.
    pub backtrack: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_newton: 100_000,
            armijo: 1e-4,
            backtrack: 0.5,
        }
    }
}

/// Dual iterate. `active` marks the positive entries of `Y + B*(lambda)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    /// Multipliers of `B(W) = b`.
    pub lambda: Vec<f64>,
    /// Row-major `K x K` support mask of the primal candidate.
    pub active: Vec<bool>,
}

impl DualState {
    /// Zero multipliers.
    pub fn zeros(k: usize) -> Self {
        Self {
            lambda: vec![0.0; 2 * k + 1],
            active: vec![false; k * k],
        }
    }
}

/// Counters of one projection.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProjectionStats {
    /// Newton steps taken.
    pub newton_iters: usize,
    /// Total CG iterations.
    pub cg_iters: usize,
    /// Steps that fell back to steepest ascent.
    pub fallback_steps: usize,
    /// Final `|B(W) - b|_2`.
    pub residual: f64,
}

/// Result of [`newton_system_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonDirection {
    /// Ascent direction.
    pub d: Vec<f64>,
    /// CG iterations used.
    pub cg_iters: usize,
    /// False when CG hit its cap and `d` is the steepest ascent direction.
    pub converged: bool,
}

fn primal(y: &Mat, lambda: &[f64], pd: &ProblemData) -> Mat {
    let mut z = apply_b_adjoint(lambda, pd);
    for (zi, yi) in z.as_mut_slice().iter_mut().zip(y.as_slice()) {
        *zi = (*zi + yi).max(0.0);
    }
    z
}

fn gradient(w: &Mat, pd: &ProblemData) -> Vec<f64> {
    let bw = apply_b(w, pd);
    pd.b().iter().zip(&bw).map(|(b, v)| b - v).collect()
}

/// `theta(lambda)` and its gradient `b - B(W(lambda))`.
pub fn dual_objective(lambda: &[f64], y: &Mat, pd: &ProblemData) -> (f64, Vec<f64>) {
    let w = primal(y, lambda, pd);
    let theta = dot(lambda, pd.b()) - 0.5 * w.dot(&w) + 0.5 * y.dot(y);
    (theta, gradient(&w, pd))
}

struct Operator<'a> {
    pd: &'a ProblemData,
    /// Flat indices `j * K + l` of the active entries.
    active: Vec<usize>,
    eps: f64,
}

impl<'a> Operator<'a> {
    fn new(pd: &'a ProblemData, mask: &[bool], eps: f64) -> Self {
        let active = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
        Self { pd, active, eps }
    }

    /// `(B diag(mask) B* + eps I) u`.
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let k = self.pd.k();
        let vol = self.pd.vol();
        let w = self.pd.weights();
        for (o, ui) in out.iter_mut().zip(u) {
            *o = self.eps * ui;
        }
        let u3 = u[2 * k];
        for &idx in &self.active {
            let (j, l) = (idx / k, idx % k);
            let mut m = u[j] * vol[l] + w[j] * u[k + l];
            if l == j {
                m += u3;
                out[2 * k] += m;
            }
            out[j] += m * vol[l];
            out[k + l] += w[j] * m;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let k = self.pd.k();
        let vol = self.pd.vol();
        let w = self.pd.weights();
        let mut p = vec![self.eps; 2 * k + 1];
        for &idx in &self.active {
            let (j, l) = (idx / k, idx % k);
            p[j] += vol[l] * vol[l];
            p[k + l] += w[j] * w[j];
            if j == l {
                p[2 * k] += 1.0;
            }
        }
        p
    }
}

fn deflate(v: &mut [f64], nu_hat: &[f64]) {
    let c = dot(v, nu_hat);
    for (x, n) in v.iter_mut().zip(nu_hat) {
        *x -= c * n;
    }
}

fn unit_null(pd: &ProblemData) -> Vec<f64> {
    let mut nu = pd.null_vector();
    let n = norm2(&nu);
    nu.iter_mut().for_each(|x| *x /= n);
    nu
}

/// Solves `(V + eps I) d = rhs` on the complement of the null direction by
/// preconditioned CG, stopping at relative residual `rel_tol`. Returns the
/// solution, iterations and whether the tolerance was met.
fn pcg(op: &Operator<'_>, rhs: &[f64], nu_hat: &[f64], rel_tol: f64, max_iter: usize) -> (Vec<f64>, usize, bool) {
    let n = rhs.len();
    let prec = op.diagonal();
    let mut r = rhs.to_vec();
    deflate(&mut r, nu_hat);
    let rhs_norm = norm2(&r);
    let mut x = vec![0.0; n];
    if rhs_norm == 0.0 {
        return (x, 0, true);
    }
    let mut z: Vec<f64> = r.iter().zip(&prec).map(|(a, p)| a / p).collect();
    deflate(&mut z, nu_hat);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    for it in 0..max_iter {
        if norm2(&r) <= rel_tol * rhs_norm {
            return (x, it, true);
        }
        op.apply(&p, &mut q);
        deflate(&mut q, nu_hat);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return (x, it, false);
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        for i in 0..n {
            z[i] = r[i] / prec[i];
        }
        deflate(&mut z, nu_hat);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let ok = norm2(&r) <= rel_tol * rhs_norm;
    (x, max_iter, ok)
}

fn mask_of(y: &Mat, lambda: &[f64], pd: &ProblemData) -> Vec<bool> {
    let z = apply_b_adjoint(lambda, pd);
    z.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a + b > 0.0).collect()
}

/// Least-squares multipliers: solves `B diag(mask) B* lambda = rhs` (lightly
/// regularized, null direction deflated).
pub(crate) fn masked_normal_solve(pd: &ProblemData, mask: &[bool], rhs: &[f64], rel_tol: f64) -> Vec<f64> {
    let mut op = Operator::new(pd, mask, 0.0);
    let scale = op.diagonal().iter().fold(0.0f64, |m, v| m.max(*v));
    op.eps = 1e-13 * scale.max(f64::MIN_POSITIVE);
    pcg(&op, rhs, &unit_null(pd), rel_tol, 50 * (2 * pd.k() + 1)).0
}

/// Newton direction for the dual at `state`. `eps_cg` is the relative CG
/// tolerance; the regularization is `max(1e-12, 1e-4 |r|)`.
pub fn newton_system_solve(state: &DualState, y: &Mat, pd: &ProblemData, eps_cg: f64) -> NewtonDirection {
    let w = primal(y, &state.lambda, pd);
    let g = gradient(&w, pd);
    direction(&state.active, &g, pd, &unit_null(pd), eps_cg)
}

fn direction(mask: &[bool], g: &[f64], pd: &ProblemData, nu_hat: &[f64], eps_cg: f64) -> NewtonDirection {
    let rn = norm2(g);
    let op = Operator::new(pd, mask, (1e-4 * rn).max(1e-12));
    let cap = 10 * (2 * pd.k() + 1);
    let (d, it, ok) = pcg(&op, g, nu_hat, eps_cg, cap);
    if ok {
        NewtonDirection {
            d,
            cg_iters: it,
            converged: true,
        }
    } else {
        NewtonDirection {
            d: g.to_vec(),
            cg_iters: it,
            converged: false,
        }
    }
}

/// Projects `y` onto `S`. Returns the projection, the final dual state (for
/// warm starts) and counters.
pub fn project_onto_s(
    y: &Mat,
    pd: &ProblemData,
    cfg: &ProjectionConfig,
    warm: Option<&DualState>,
) -> Result<(Mat, DualState, ProjectionStats)> {
    let k = pd.k();
    if y.rows() != k || y.cols() != k {
        return Err(Error::ContractViolation("projection input has the wrong shape".into()));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::param("eps_inner", "must be positive"));
    }
    if !y.is_finite() {
        return Err(Error::NumericalBreakdown("non-finite projection input".into()));
    }
    let nu_hat = unit_null(pd);
    let mut lambda = match warm {
        Some(s) if s.lambda.len() == 2 * k + 1 => s.lambda.clone(),
        _ => vec![0.0; 2 * k + 1],
    };
    let lambda_cap = 1e14 * (1.0 + y.max_abs());
    let mut stats = ProjectionStats::default();
    let mut z = apply_b_adjoint(&lambda, pd);
    z.axpy(1.0, y);
    let mut w = z.clone();
    w.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
    let mut g = gradient(&w, pd);
    let mut rn = norm2(&g);
    let b = pd.b().to_vec();
    let mut w_trial = Mat::zeros(k, k);
    let mut stalled = 0usize;
    loop {
        if rn <= cfg.tol {
            break;
        }
        if stats.newton_iters >= cfg.max_newton {
            return Err(Error::ProjectionNotConverged {
                iterations: stats.newton_iters,
                residual: rn,
            });
        }
        stats.newton_iters += 1;
        let mask: Vec<bool> = z.as_slice().iter().map(|&v| v > 0.0).collect();
        let eps_cg = powf(rn, 0.5).min(0.1);
        let mut dir = direction(&mask, &g, pd, &nu_hat, eps_cg);
        stats.cg_iters += dir.cg_iters;
        if !dir.converged {
            stats.fallback_steps += 1;
        }
        let mut accepted = false;
        for attempt in 0..2 {
            if attempt == 1 {
                if !dir.converged {
                    break;
                }
                // Newton step rejected outright: retry along the gradient.
                stats.fallback_steps += 1;
                dir.d = g.clone();
                dir.converged = false;
            }
            let slope = dot(&g, &dir.d);
            let db = dot(&dir.d, &b);
            let dz = apply_b_adjoint(&dir.d, pd);
            let mut t = 1.0;
            for _ in 0..80 {
                let mut gain = t * db;
                for ((wt, (zv, dv)), wo) in w_trial
                    .as_mut_slice()
                    .iter_mut()
                    .zip(z.as_slice().iter().zip(dz.as_slice()))
                    .zip(w.as_slice())
                {
                    let v = (zv + t * dv).max(0.0);
                    *wt = v;
                    gain -= 0.5 * (v - wo) * (v + wo);
                }
                if gain >= cfg.armijo * t * slope {
                    accepted = true;
                    break;
                }
                // Near the precision floor the gain is lost in rounding; accept
                // steps that still shrink the residual.
                let g_trial = gradient(&w_trial, pd);
                if norm2(&g_trial) < rn && gain > -64.0 * f64::EPSILON * (1.0 + w.dot(&w)) {
                    accepted = true;
                    break;
                }
                t *= cfg.backtrack;
            }
            if accepted {
                for (l, dl) in lambda.iter_mut().zip(&dir.d) {
                    *l += t * dl;
                }
                z.axpy(t, &dz);
                break;
            }
        }
        if !accepted {
            stalled += 1;
            if stalled > 3 {
                return Err(Error::ProjectionNotConverged {
                    iterations: stats.newton_iters,
                    residual: rn,
                });
            }
            // recompute from scratch to shed accumulated drift in z
            z = apply_b_adjoint(&lambda, pd);
            z.axpy(1.0, y);
        } else {
            stalled = 0;
        }
        w.as_mut_slice()
            .iter_mut()
            .zip(z.as_slice())
            .for_each(|(a, b)| *a = b.max(0.0));
        g = gradient(&w, pd);
        rn = norm2(&g);
        if !rn.is_finite() || lambda.iter().any(|l| !l.is_finite()) {
            return Err(Error::NumericalBreakdown("non-finite dual iterate".into()));
        }
        if lambda.iter().fold(0.0f64, |m, l| m.max(l.abs())) > lambda_cap {
            return Err(Error::Infeasible("dual ascent is unbounded".into()));
        }
    }
    // Final primal from a fresh evaluation so that W and the reported residual agree.
    let w_final = primal(y, &lambda, pd);
    let res = norm2(&gradient(&w_final, pd));
    stats.residual = res;
    if res > cfg.tol {
        // drift between the incremental and the fresh evaluation; polish once more
        return project_onto_s(
            y,
            pd,
            cfg,
            Some(&DualState {
                lambda,
                active: Vec::new(),
            }),
        )
        .map(|(w, s, mut st2)| {
            st2.newton_iters += stats.newton_iters;
            st2.cg_iters += stats.cg_iters;
            st2.fallback_steps += stats.fallback_steps;
            (w, s, st2)
        });
    }
    let active = mask_of(y, &lambda, pd);
    Ok((w_final, DualState { lambda, active }, stats))
}

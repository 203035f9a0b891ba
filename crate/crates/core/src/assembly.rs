//! Discretized problem data: marginal weights, volumes, Coulomb cost matrix,
//! the constraint operator `B` and the (penalized) objective.
//!
//! Notation: `vol_k = |e_k|`, `rho_k` is the average density on `e_k`,
//! `w_k = rho_k vol_k` its mass. The feasible set of a block is
//!
//! ```text
//! S = { W : W vol = 1, W^T w = rho, tr W = 0, W >= 0 }
//! ```
//!
//! and `B(W) = [W vol; W^T w; tr W]`, `b = [1; rho; 0]`.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::density::DensitySpec;
use crate::error::{Error, Result};
use crate::linalg::{gemm, Mat};
use crate::math::{abs, asinh, sqrt, xlogx};
use crate::mesh::{Cell, Mesh};
use crate::quadrature::GaussRule;

/// How `c_jk` is computed from two elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostRule {
    /// Cell average `1/(|e_j||e_k|) int_{e_j} int_{e_k} 1/|r - r'|`.
    #[default]
    CellAverage,
    /// `1 / |a_j - a_k|` between cell centers.
    Barycentric,
}

/// Discretized instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemData {
    k: usize,
    n: usize,
    varrho: Vec<f64>,
    vol: Vec<f64>,
    w: Vec<f64>,
    cost: Mat,
    beta: f64,
    b: Vec<f64>,
    lin: Mat,
    /// `diag(vol) C diag(vol)`.
    vcv: Mat,
}

impl ProblemData {
    /// Builds and validates problem data from raw arrays.
    pub fn new(varrho: Vec<f64>, vol: Vec<f64>, cost: Mat, n: usize, beta: f64) -> Result<Self> {
        let k = vol.len();
        if k < 2 {
            return Err(Error::param("K", "need at least two elements"));
        }
        if n < 2 {
            return Err(Error::param("N", "need at least two marginals"));
        }
        if varrho.len() != k || cost.rows() != k || cost.cols() != k {
            return Err(Error::ContractViolation("inconsistent problem sizes".to_string()));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::param("beta", "must be finite and non-negative"));
        }
        if vol.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::ContractViolation("volumes must be positive".to_string()));
        }
        if varrho.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
            return Err(Error::ContractViolation("densities must be non-negative".to_string()));
        }
        for j in 0..k {
            if cost.get(j, j) != 0.0 {
                return Err(Error::ContractViolation("cost diagonal must be zero".to_string()));
            }
            for l in 0..j {
                if cost.get(j, l) != cost.get(l, j) {
                    return Err(Error::ContractViolation("cost must be symmetric".to_string()));
                }
            }
        }
        let w: Vec<f64> = varrho.iter().zip(&vol).map(|(r, v)| r * v).collect();
        let mut b = vec![1.0; k];
        b.extend_from_slice(&varrho);
        b.push(0.0);
        let mut lin = cost.clone();
        lin.scale_rows_cols(&w, &vol);
        let mut vcv = cost.clone();
        vcv.scale_rows_cols(&vol, &vol);
        Ok(Self {
            k,
            n,
            varrho,
            vol,
            w,
            cost,
            beta,
            b,
            lin,
            vcv,
        })
    }

    /// Number of elements `K`.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of marginals `N`.
    pub fn marginals(&self) -> usize {
        self.n
    }

    /// Number of plan blocks, `N - 1`.
    pub fn blocks(&self) -> usize {
        self.n - 1
    }

    /// Average densities `rho_k`.
    pub fn varrho(&self) -> &[f64] {
        &self.varrho
    }

    /// Volumes `|e_k|`.
    pub fn vol(&self) -> &[f64] {
        &self.vol
    }

    /// Masses `rho_k |e_k|`.
    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// Cost matrix.
    pub fn cost(&self) -> &Mat {
        &self.cost
    }

    /// Penalty parameter.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Same data with another penalty.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::param("beta", "must be finite and non-negative"));
        }
        let mut out = self.clone();
        out.beta = beta;
        Ok(out)
    }

    /// Right-hand side `b = [1; rho; 0]`.
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Linear term `diag(w) C diag(vol)`.
    pub fn linear_term(&self) -> &Mat {
        &self.lin
    }

    /// `nu = (w, -vol, 0)`, the null direction of `B*`.
    pub fn null_vector(&self) -> Vec<f64> {
        let mut nu = self.w.clone();
        nu.extend(self.vol.iter().map(|v| -v));
        nu.push(0.0);
        nu
    }

    /// Pair operator `Q(X) = diag(w) X diag(vol) C diag(vol)`.
    pub fn pair_operator(&self, x: &Mat) -> Mat {
        let k = self.k;
        let nnz = x.as_slice().iter().filter(|v| **v != 0.0).count();
        let mut q = Mat::zeros(k, k);
        if nnz * 8 < k * k {
            for j in 0..k {
                let wj = self.w[j];
                let qrow = q.row_mut(j);
                for (l, &v) in x.row(j).iter().enumerate() {
                    if v != 0.0 {
                        let c = wj * v;
                        for (qv, a) in qrow.iter_mut().zip(self.vcv.row(l)) {
                            *qv += c * a;
                        }
                    }
                }
            }
        } else {
            let ones = vec![1.0; k];
            let mut t = x.clone();
            t.scale_rows_cols(&self.w, &ones);
            gemm(1.0, &t, &self.vcv, 0.0, &mut q);
        }
        q
    }
}

/// The tuple `(X_2, ..., X_N)`. Block `0` holds `X_2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanSet {
    blocks: Vec<Mat>,
}

impl PlanSet {
    /// Wraps blocks; all must be square of equal size.
    pub fn new(blocks: Vec<Mat>) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::ContractViolation("plan set needs at least one block".to_string()));
        };
        let k = first.rows();
        if blocks.iter().any(|b| b.rows() != k || b.cols() != k) {
            return Err(Error::ContractViolation("plan blocks must be square and equal in size".to_string()));
        }
        Ok(Self { blocks })
    }

    /// `n_blocks` zero blocks of size `k`.
    pub fn zeros(k: usize, n_blocks: usize) -> Self {
        Self {
            blocks: (0..n_blocks).map(|_| Mat::zeros(k, k)).collect(),
        }
    }

    /// Block size `K`.
    pub fn k(&self) -> usize {
        self.blocks[0].rows()
    }

    /// Number of blocks.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    /// Always false.
    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// All blocks.
    pub fn blocks(&self) -> &[Mat] {
        &self.blocks
    }

    /// Block `i` (0-based, i.e. `X_{i+2}`).
    pub fn block(&self, i: usize) -> &Mat {
        &self.blocks[i]
    }

    /// Mutable block `i`.
    pub fn block_mut(&mut self, i: usize) -> &mut Mat {
        &mut self.blocks[i]
    }

    /// Frobenius norm of `self - other` over all blocks.
    pub fn distance(&self, other: &PlanSet) -> f64 {
        let mut s = 0.0;
        for (a, b) in self.blocks.iter().zip(&other.blocks) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                s += (x - y) * (x - y);
            }
        }
        sqrt(s)
    }

    /// Sum of all blocks.
    pub fn sum(&self) -> Mat {
        let mut s = Mat::zeros(self.k(), self.k());
        for b in &self.blocks {
            s.axpy(1.0, b);
        }
        s
    }

    /// Consumes into blocks.
    pub fn into_blocks(self) -> Vec<Mat> {
        self.blocks
    }

    fn check(&self, pd: &ProblemData) {
        assert_eq!(self.k(), pd.k, "plan size does not match problem");
        assert_eq!(self.len(), pd.blocks(), "block count does not match problem");
    }
}

fn cost_1d(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    let (l, r) = if a.1 <= b.0 {
        (a, b)
    } else if b.1 <= a.0 {
        (b, a)
    } else {
        return Err(Error::ContractViolation("overlapping elements".to_string()));
    };
    let (p, q) = l;
    let (r0, s) = r;
    let wl = q - p;
    let wr = s - r0;
    let gap = r0 - q;
    if gap >= wl.max(wr) {
        let rule = GaussRule::legendre(8);
        let v = rule.integrate(p, q, |x| rule.integrate(r0, s, |y| 1.0 / (y - x)));
        return Ok(v / (wl * wr));
    }
    let v = xlogx(s - p) - xlogx(s - q) - xlogx(r0 - p) + xlogx(r0 - q);
    Ok(v / (wl * wr))
}

/// Antiderivative with `d^4 G / du^2 dv^2 = 1 / sqrt(u^2 + v^2)`.
fn g2(u: f64, v: f64) -> f64 {
    let au = abs(u);
    let av = abs(v);
    let mut s = -(u * u + v * v) * sqrt(u * u + v * v) / 6.0;
    if au > 0.0 && av > 0.0 {
        s += 0.5 * u * u * av * asinh(av / au) + 0.5 * au * v * v * asinh(au / av);
    }
    s
}

fn corner_points(a: (f64, f64), b: (f64, f64)) -> [(f64, f64); 4] {
    [(b.1 - a.0, 1.0), (b.1 - a.1, -1.0), (b.0 - a.0, -1.0), (b.0 - a.1, 1.0)]
}

fn cost_2d(a: [f64; 4], b: [f64; 4]) -> Result<f64> {
    let ca = Cell::Rect {
        x0: a[0],
        x1: a[1],
        y0: a[2],
        y1: a[3],
    };
    let cb = Cell::Rect {
        x0: b[0],
        x1: b[1],
        y0: b[2],
        y1: b[3],
    };
    if ca.overlaps(&cb) {
        return Err(Error::ContractViolation("overlapping elements".to_string()));
    }
    let va = ca.volume();
    let vb = cb.volume();
    let [ax, ay] = ca.center();
    let [bx, by] = cb.center();
    let dist = sqrt((ax - bx) * (ax - bx) + (ay - by) * (ay - by));
    let diam = |c: &[f64; 4]| sqrt((c[1] - c[0]) * (c[1] - c[0]) + (c[3] - c[2]) * (c[3] - c[2]));
    let ratio = dist / diam(&a).max(diam(&b));
    if ratio > 2.0 {
        let n = if ratio > 8.0 { 4 } else if ratio > 4.0 { 6 } else { 8 };
        let rule = GaussRule::legendre(n);
        let v = rule.integrate_2d((a[0], a[1]), (a[2], a[3]), |x, y| {
            rule.integrate_2d((b[0], b[1]), (b[2], b[3]), |s, t| {
                1.0 / sqrt((x - s) * (x - s) + (y - t) * (y - t))
            })
        });
        return Ok(v / (va * vb));
    }
    let xs = corner_points((a[0], a[1]), (b[0], b[1]));
    let ys = corner_points((a[2], a[3]), (b[2], b[3]));
    let mut v = 0.0;
    for (u, su) in xs {
        for (t, st) in ys {
            v += su * st * g2(u, t);
        }
    }
    Ok(v / (va * vb))
}

/// `c_jk` for two distinct, non-overlapping cells.
pub fn cost_coefficient(a: &Cell, b: &Cell, rule: CostRule) -> Result<f64> {
    if a.overlaps(b) {
        return Err(Error::ContractViolation("overlapping elements".to_string()));
    }
    match rule {
        CostRule::Barycentric => {
            let [ax, ay] = a.center();
            let [bx, by] = b.center();
            let d = sqrt((ax - bx) * (ax - bx) + (ay - by) * (ay - by));
            if d > 0.0 {
                Ok(1.0 / d)
            } else {
                Err(Error::ContractViolation("coincident cell centers".to_string()))
            }
        }
        CostRule::CellAverage => match (*a, *b) {
            (Cell::Interval { lo: p, hi: q }, Cell::Interval { lo: r, hi: s }) => cost_1d((p, q), (r, s)),
            (Cell::Rect { x0, x1, y0, y1 }, Cell::Rect { x0: u0, x1: u1, y0: v0, y1: v1 }) => {
                cost_2d([x0, x1, y0, y1], [u0, u1, v0, v1])
            }
            _ => Err(Error::ContractViolation("cells of different dimension".to_string())),
        },
    }
}

/// Assembles the problem on `mesh` for a density with `spec.electrons()` marginals.
pub fn assemble(mesh: &Mesh, spec: &DensitySpec, beta: f64, rule: CostRule) -> Result<ProblemData> {
    let k = mesh.len();
    let els = mesh.elements();
    let mut cost = Mat::zeros(k, k);
    for j in 0..k {
        for l in j + 1..k {
            let c = cost_coefficient(&els[j].cell, &els[l].cell, rule).map_err(|e| match e {
                Error::ContractViolation(m) => Error::ContractViolation(alloc::format!("elements {j},{l}: {m}")),
                other => other,
            })?;
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::NumericalBreakdown(alloc::format!("cost between elements {j},{l} is {c}")));
            }
            cost.set(j, l, c);
            cost.set(l, j, c);
        }
    }
    let total = mesh.total_mass();
    let n = spec.electrons();
    if abs(total - n as f64) > 1e-6 {
        return Err(Error::ContractViolation(alloc::format!("mesh carries mass {total}, expected {n}")));
    }
    ProblemData::new(mesh.densities(), mesh.volumes(), cost, n, beta)
}

/// `B(W) = [W vol; W^T w; tr W]`.
pub fn apply_b(wm: &Mat, pd: &ProblemData) -> Vec<f64> {
    let k = pd.k;
    let mut out = vec![0.0; 2 * k + 1];
    for j in 0..k {
        let row = wm.row(j);
        let mut s = 0.0;
        let wj = pd.w[j];
        for (l, &x) in row.iter().enumerate() {
            s += x * pd.vol[l];
            out[k + l] += wj * x;
        }
        out[j] = s;
        out[2 * k] += row[j];
    }
    out
}

/// `B*(lambda)_jk = lambda1_j vol_k + w_j lambda2_k + lambda3 delta_jk`.
pub fn apply_b_adjoint(lambda: &[f64], pd: &ProblemData) -> Mat {
    let k = pd.k;
    assert_eq!(lambda.len(), 2 * k + 1);
    let mut out = Mat::zeros(k, k);
    for j in 0..k {
        let l1 = lambda[j];
        let wj = pd.w[j];
        for (l, v) in out.row_mut(j).iter_mut().enumerate() {
            *v = l1 * pd.vol[l] + wj * lambda[k + l];
        }
        let d = out.get(j, j) + lambda[2 * k];
        out.set(j, j, d);
    }
    out
}

/// `f(Z) = sum_i <X_i, diag(w) C diag(vol)> + sum_{i<j} <X_i, Q(X_j)>`.
pub fn energy(z: &PlanSet, pd: &ProblemData) -> f64 {
    z.check(pd);
    let mut f: f64 = z.blocks().iter().map(|x| x.dot(&pd.lin)).sum();
    let mut prefix = z.block(0).clone();
    for j in 1..z.len() {
        let q = pd.pair_operator(z.block(j));
        f += prefix.dot(&q);
        prefix.axpy(1.0, z.block(j));
    }
    f
}

/// `sum_{i<j} <X_i, X_j>`.
pub fn comp_violation(z: &PlanSet) -> f64 {
    let mut s = 0.0;
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            s += z.block(i).dot(z.block(j));
        }
    }
    s
}

/// `f_beta = f + beta * comp_violation`.
pub fn penalized_energy(z: &PlanSet, pd: &ProblemData) -> f64 {
    energy(z, pd) + pd.beta * comp_violation(z)
}

/// Gradient of `f_beta` with respect to block `i` (0-based), using the other
/// blocks exactly as stored in `z`.
pub fn block_gradient(z: &PlanSet, i: usize, pd: &ProblemData) -> Mat {
    z.check(pd);
    let mut others = Mat::zeros(pd.k, pd.k);
    for (j, x) in z.blocks().iter().enumerate() {
        if j != i {
            others.axpy(1.0, x);
        }
    }
    gradient_from_others(&others, pd)
}

/// `diag(w) C diag(vol) + Q(S) + beta S` for `S = sum_{j != i} X_j`.
pub fn gradient_from_others(others: &Mat, pd: &ProblemData) -> Mat {
    let mut g = pd.pair_operator(others);
    g.axpy(1.0, &pd.lin);
    g.axpy(pd.beta, others);
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive;

    #[test]
    fn adjacent_intervals_match_quadrature() {
        let c = cost_coefficient(
            &Cell::Interval { lo: 0.0, hi: 1.0 },
            &Cell::Interval { lo: 1.0, hi: 2.0 },
            CostRule::CellAverage,
        )
        .unwrap();
        // inner integral in closed form: int_1^2 dy/(y-x) = ln((2-x)/(1-x))
        let v = adaptive(0.0, 1.0 - 1e-300, 1e-13, 10_000, |x: f64| ((2.0 - x) / (1.0 - x)).ln()).unwrap();
        assert!((c - v).abs() < 1e-8, "{c} vs {v}");
        assert!((c - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn far_intervals() {
        let c = cost_coefficient(
            &Cell::Interval { lo: 0.0, hi: 1.0 },
            &Cell::Interval { lo: 10.0, hi: 11.0 },
            CostRule::CellAverage,
        )
        .unwrap();
        assert!((c - 0.1).abs() < 1e-3);
    }

    #[test]
    fn far_rule_agrees_with_closed_form_1d() {
        // gap exactly at the switch: evaluate both branches
        let (a, b) = ((0.0, 0.3), (0.6, 0.75));
        let closed = {
            let (p, q, r, s) = (a.0, a.1, b.0, b.1);
            (xlogx(s - p) - xlogx(s - q) - xlogx(r - p) + xlogx(r - q)) / ((q - p) * (s - r))
        };
        let gauss = cost_1d(a, b).unwrap();
        assert!((closed - gauss).abs() < 1e-11 * closed);
    }

    fn tensor_oracle(a: [f64; 4], b: [f64; 4], np: usize) -> f64 {
        let rule = GaussRule::legendre(10);
        let split = |lo: f64, hi: f64, i: usize| (lo + (hi - lo) * i as f64 / np as f64, lo + (hi - lo) * (i + 1) as f64 / np as f64);
        let mut v = 0.0;
        for i in 0..np * np {
            let ax = split(a[0], a[1], i % np);
            let ay = split(a[2], a[3], i / np);
            for j in 0..np * np {
                let bx = split(b[0], b[1], j % np);
                let by = split(b[2], b[3], j / np);
                v += rule.integrate_2d(ax, ay, |x, y| {
                    rule.integrate_2d(bx, by, |s, t| 1.0 / ((x - s).powi(2) + (y - t).powi(2)).sqrt())
                });
            }
        }
        v / ((a[1] - a[0]) * (a[3] - a[2]) * (b[1] - b[0]) * (b[3] - b[2]))
    }

    #[test]
    fn rect_closed_form_matches_tensor_gauss() {
        let a = [0.0, 1.0, 0.0, 0.5];
        let b = [1.2, 1.7, -0.25, 0.75];
        let closed = cost_2d(a, b).unwrap();
        let v = tensor_oracle(a, b, 4);
        assert!((closed - v).abs() < 1e-10 * closed, "{closed} vs {v}");
    }

    #[test]
    fn touching_rects_are_additive() {
        // splitting the second cell must not change the total interaction
        let a = [0.0, 1.0, 0.0, 0.5];
        let b = [1.0, 1.5, -0.25, 0.75];
        let whole = cost_2d(a, b).unwrap() * 0.5 * 0.5;
        let mut parts = 0.0;
        for (y0, y1) in [(-0.25, 0.0), (0.0, 0.5), (0.5, 0.75)] {
            for (x0, x1) in [(1.0, 1.1), (1.1, 1.5)] {
                let c = [x0, x1, y0, y1];
                parts += cost_2d(a, c).unwrap() * 0.5 * (x1 - x0) * (y1 - y0);
            }
        }
        assert!((whole - parts).abs() < 1e-12, "{whole} vs {parts}");
    }

    #[test]
    fn far_squares() {
        let c = cost_coefficient(
            &Cell::Rect { x0: -0.5, x1: 0.5, y0: -0.5, y1: 0.5 },
            &Cell::Rect { x0: 4.5, x1: 5.5, y0: -0.5, y1: 0.5 },
            CostRule::CellAverage,
        )
        .unwrap();
        assert!((c - 0.2).abs() < 1e-3);
        assert!((c - 0.20067).abs() < 1e-5);
    }

    #[test]
    fn overlapping_is_rejected() {
        let r = cost_coefficient(
            &Cell::Interval { lo: 0.0, hi: 1.0 },
            &Cell::Interval { lo: 0.5, hi: 2.0 },
            CostRule::CellAverage,
        );
        assert!(matches!(r, Err(Error::ContractViolation(_))));
    }

    #[test]
    fn trace_component_of_adjoint_is_identity() {
        let pd = ProblemData::new(
            vec![1.0, 2.0, 3.0],
            vec![0.5, 0.25, 0.2],
            Mat::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 }),
            3,
            1.0,
        )
        .unwrap();
        let mut lam = vec![0.0; 7];
        lam[6] = 1.0;
        assert_eq!(apply_b_adjoint(&lam, &pd), Mat::identity(3));
        let nu = pd.null_vector();
        assert!(apply_b_adjoint(&nu, &pd).max_abs() < 1e-15);
    }
}

//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use ggr_core::assembly::{PlanSet, ProblemData};
use ggr_core::linalg::Mat;
use ggr_core::multistart::start_rng;
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::RngCore;

pub struct Rng(pub ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64, stream: usize) -> Self {
        Rng(start_rng(seed, stream))
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + (hi - lo) * u
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }

    pub fn mat(&mut self, k: usize, lo: f64, hi: f64) -> Mat {
        Mat::from_fn(k, k, |_, _| self.uniform(lo, hi))
    }
}

/// Random instance with masses in `[1, 2]`, volumes in `[0.5, 1.5]` and a
/// symmetric positive cost; `k = 2` gets equal masses so that `S` is nonempty.
pub fn random_problem(rng: &mut Rng, k: usize, n: usize, beta: f64) -> ProblemData {
    let vol: Vec<f64> = (0..k).map(|_| rng.uniform(0.5, 1.5)).collect();
    let mass: Vec<f64> = if k == 2 {
        vec![1.5; 2]
    } else {
        (0..k).map(|_| rng.uniform(1.0, 2.0)).collect()
    };
    let varrho = mass.iter().zip(&vol).map(|(m, v)| m / v).collect();
    let mut cost = Mat::zeros(k, k);
    for j in 0..k {
        for l in 0..j {
            let c = rng.uniform(0.2, 2.0);
            cost.set(j, l, c);
            cost.set(l, j, c);
        }
    }
    ProblemData::new(varrho, vol, cost, n, beta).unwrap()
}

/// Euclidean projection onto `S` by enumerating every support pattern of the
/// off-diagonal entries. For each pattern the equality-constrained least
/// squares problem is solved in minimum-norm form; the best candidate that
/// is nonnegative and satisfies the constraints wins.
pub fn project_enum(y: &Mat, pd: &ProblemData) -> Mat {
    let k = pd.k();
    let vol = pd.vol();
    let w = pd.weights();
    let entries: Vec<(usize, usize)> = (0..k).flat_map(|j| (0..k).filter(move |&l| l != j).map(move |l| (j, l))).collect();
    let n = entries.len();
    let b = DVector::from_column_slice(&pd.b()[..2 * k]);
    let mut best: Option<(f64, Mat)> = None;
    for pattern in 1u64..(1 << n) {
        let pick: Vec<(usize, usize)> = (0..n).filter(|t| pattern >> t & 1 == 1).map(|t| entries[t]).collect();
        let mut row_hit = vec![false; k];
        let mut col_hit = vec![false; k];
        for &(j, l) in &pick {
            row_hit[j] = true;
            col_hit[l] = true;
        }
        if row_hit.contains(&false) || col_hit.contains(&false) {
            continue;
        }
        let m = pick.len();
        let mut bp = DMatrix::<f64>::zeros(2 * k, m);
        let mut yp = DVector::<f64>::zeros(m);
        for (c, &(j, l)) in pick.iter().enumerate() {
            bp[(j, c)] = vol[l];
            bp[(k + l, c)] = w[j];
            yp[c] = y.get(j, l);
        }
        let wp = &yp - min_norm_solution(&bp, &(&bp * &yp - &b));
        if wp.iter().any(|&v| v < -1e-12) {
            continue;
        }
        if (&bp * &wp - &b).norm() > 1e-9 * (1.0 + b.norm()) {
            continue;
        }
        let mut out = Mat::zeros(k, k);
        for (c, &(j, l)) in pick.iter().enumerate() {
            out.set(j, l, wp[c].max(0.0));
        }
        let d = out.sub(y);
        let obj = 0.5 * d.dot(&d);
        if best.as_ref().map_or(true, |(o, _)| obj < *o) {
            best = Some((obj, out));
        }
    }
    best.expect("S is nonempty").1
}

/// `B^T (B B^T)^+ r` through a symmetric eigendecomposition of `B B^T`.
fn min_norm_solution(b: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
    let eig = (b * b.transpose()).symmetric_eigen();
    let cut = 1e-12 * eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let mut mu = DVector::<f64>::zeros(r.len());
    for (t, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > cut {
            let v = eig.eigenvectors.column(t);
            mu += v * (v.dot(r) / ev);
        }
    }
    b.transpose() * mu
}

/// Energy by the explicit sums
/// `sum_i sum_{m,n} rho_m x_mn c_mn |e_m||e_n|
///  + sum_{i<j} sum_{m,n,t} rho_m x_{i,mn} x_{j,mt} c_nt |e_m||e_n||e_t|`.
pub fn energy_direct(z: &PlanSet, pd: &ProblemData) -> f64 {
    let k = pd.k();
    let (r, e, c) = (pd.varrho(), pd.vol(), pd.cost());
    let mut f = 0.0;
    for x in z.blocks() {
        for m in 0..k {
            for n in 0..k {
                f += r[m] * x.get(m, n) * c.get(m, n) * e[m] * e[n];
            }
        }
    }
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            let (xi, xj) = (z.block(i), z.block(j));
            for m in 0..k {
                for n in 0..k {
                    for t in 0..k {
                        f += r[m] * xi.get(m, n) * xj.get(m, t) * c.get(n, t) * e[m] * e[n] * e[t];
                    }
                }
            }
        }
    }
    f
}

/// `sum_{i<j} sum_{m,n} x_{i,mn} x_{j,mn}`.
pub fn comp_direct(z: &PlanSet) -> f64 {
    let k = z.k();
    let mut s = 0.0;
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            for m in 0..k {
                for n in 0..k {
                    s += z.block(i).get(m, n) * z.block(j).get(m, n);
                }
            }
        }
    }
    s
}

/// `sum_i |B(X_i) - b|_2` with `B` written out entrywise.
pub fn feasibility_direct(z: &PlanSet, pd: &ProblemData) -> f64 {
    let k = pd.k();
    let (e, w, b) = (pd.vol(), pd.weights(), pd.b());
    z.blocks()
        .iter()
        .map(|x| {
            let mut s = 0.0;
            for j in 0..k {
                let row: f64 = (0..k).map(|l| x.get(j, l) * e[l]).sum();
                s += (row - b[j]).powi(2);
            }
            for l in 0..k {
                let col: f64 = (0..k).map(|j| x.get(j, l) * w[j]).sum();
                s += (col - b[k + l]).powi(2);
            }
            let tr: f64 = (0..k).map(|j| x.get(j, j)).sum();
            s += tr * tr;
            s.sqrt()
        })
        .sum()
}

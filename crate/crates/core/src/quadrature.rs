//! Gauss–Legendre rules and adaptive Gauss–Kronrod integration.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{abs, cos};

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    /// Nodes in increasing order.
    pub nodes: Vec<f64>,
    /// Weights, summing to 2.
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// `n`-point Gauss–Legendre rule computed by Newton iteration on `P_n`.
    pub fn legendre(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_and_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if abs(dx) < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_and_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = 0.5 * (b - a);
        let c = 0.5 * (a + b);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(c + h * x);
        }
        s * h
    }

    /// Tensor-product rule over `[x0, x1] x [y0, y1]`.
    pub fn integrate_2d(
        &self,
        x: (f64, f64),
        y: (f64, f64),
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> f64 {
        let hx = 0.5 * (x.1 - x.0);
        let cx = 0.5 * (x.0 + x.1);
        let hy = 0.5 * (y.1 - y.0);
        let cy = 0.5 * (y.0 + y.1);
        let mut s = 0.0;
        for (u, wu) in self.nodes.iter().zip(&self.weights) {
            let px = cx + hx * u;
            let mut inner = 0.0;
            for (v, wv) in self.nodes.iter().zip(&self.weights) {
                inner += wv * f(px, cy + hy * v);
            }
            s += wu * inner;
        }
        s * hx * hy
    }
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod evaluation. Returns `(estimate, error estimate)`.
pub fn gk15(a: f64, b: f64, f: &mut impl FnMut(f64) -> f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, abs((kron - gauss) * h))
}

/// Adaptive Gauss–Kronrod integration with a global absolute tolerance.
///
/// Intervals are bisected (largest error first) until the summed error
/// estimate falls below `abs_tol` or `max_intervals` is reached.
pub fn adaptive(
    a: f64,
    b: f64,
    abs_tol: f64,
    max_intervals: usize,
    mut f: impl FnMut(f64) -> f64,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut pieces: Vec<(f64, f64, f64, f64)> = Vec::new();
    let (v, e) = gk15(a, b, &mut f);
    pieces.push((a, b, v, e));
    loop {
        let (total, err) = pieces
            .iter()
            .fold((0.0, 0.0), |(s, e), p| (s + p.2, e + p.3));
        if !total.is_finite() {
            return Err(Error::QuadratureFailure {
                estimate: total,
                error: err,
            });
        }
        if err <= abs_tol || err <= 64.0 * f64::EPSILON * abs(total) {
            return Ok(total);
        }
        if pieces.len() >= max_intervals {
            return Err(Error::QuadratureFailure {
                estimate: total,
                error: err,
            });
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bi, be), (i, p)| if p.3 > be { (i, p.3) } else { (bi, be) });
        let (lo, hi, _, _) = pieces.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // cannot split further; accept what we have
            let total: f64 = pieces.iter().map(|p| p.2).sum::<f64>() + gk15(lo, hi, &mut f).0;
            return Ok(total);
        }
        let (v1, e1) = gk15(lo, mid, &mut f);
        let (v2, e2) = gk15(mid, hi, &mut f);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_is_exact_for_polynomials() {
        for n in 1..12 {
            let rule = GaussRule::legendre(n);
            let sw: f64 = rule.weights.iter().sum();
            assert!((sw - 2.0).abs() < 1e-13, "n={n}");
            for p in 0..(2 * n) {
                let got = rule.integrate(0.0, 1.0, |x| x.powi(p as i32));
                assert!((got - 1.0 / (p as f64 + 1.0)).abs() < 1e-13, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn adaptive_handles_kinks() {
        let v = adaptive(-5.0, 5.0, 1e-13, 10_000, |x: f64| (-x.abs()).exp()).unwrap();
        let want = 2.0 * (1.0 - (-5.0f64).exp());
        assert!((v - want).abs() < 1e-12);
    }

    #[test]
    fn tensor_rule() {
        let r = GaussRule::legendre(6);
        let v = r.integrate_2d((0.0, 2.0), (-1.0, 1.0), |x, y| x * x * y * y + 1.0);
        assert!((v - (8.0 / 3.0 * 2.0 / 3.0 + 4.0)).abs() < 1e-12);
    }
}

//! Transport maps, the exact 1D co-motion functions, average errors and
//! first-order optimality certificates.

use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{apply_b, apply_b_adjoint, block_gradient, PlanSet, ProblemData};
use crate::density::{Cdf1d, DensitySpec, Domain};
use crate::error::{Error, Result};
use crate::math::{abs, floor, norm2};
use crate::mesh::Mesh;
use crate::projection::{masked_normal_solve, project_onto_s, ProjectionConfig};

/// Approximate maps `T_i^K(a_j)` for every block and row. `None` marks a row
/// with zero sum.
#[derive(Debug, Clone, PartialEq)]
pub struct MapTable {
    /// Spatial dimension.
    pub dim: usize,
    /// Cell centers `a_j`.
    pub points: Vec<[f64; 2]>,
    /// `images[block][row]`.
    pub images: Vec<Vec<Option<[f64; 2]>>>,
}

impl MapTable {
    /// Number of rows with an undefined image, over all blocks.
    pub fn undefined_rows(&self) -> usize {
        self.images.iter().flatten().filter(|v| v.is_none()).count()
    }
}

/// `T_i^K(a_j) = sum_k a_k x_jk / sum_l x_jl`.
pub fn transport_maps(z: &PlanSet, mesh: &Mesh) -> MapTable {
    let pts = mesh.barycenters();
    let images = z
        .blocks()
        .iter()
        .map(|x| {
            (0..x.rows())
                .map(|j| {
                    let row = x.row(j);
                    let s: f64 = row.iter().sum();
                    if !(s > 0.0) {
                        return None;
                    }
                    let mut p = [0.0; 2];
                    for (v, a) in row.iter().zip(&pts) {
                        p[0] += v * a[0];
                        p[1] += v * a[1];
                    }
                    Some([p[0] / s, p[1] / s])
                })
                .collect()
        })
        .collect();
    MapTable {
        dim: mesh.dim(),
        points: pts,
        images,
    }
}

/// Exact co-motion functions of a 1D density,
/// `T_i(x) = F^{-1}((F(x) + i - 1) mod N)` for `i = 2..N`.
#[derive(Debug, Clone)]
pub struct ComotionMaps {
    cdf: Cdf1d,
    n: usize,
}

/// Builds the co-motion functions of `spec` (1D only).
pub fn seidl_maps_1d(spec: &DensitySpec) -> Result<ComotionMaps> {
    if spec.dim() != 1 {
        return Err(Error::ContractViolation("co-motion functions need a 1D density".into()));
    }
    Ok(ComotionMaps {
        cdf: spec.cdf()?,
        n: spec.electrons(),
    })
}

impl ComotionMaps {
    /// Number of electrons.
    pub fn electrons(&self) -> usize {
        self.n
    }

    /// The cumulative distribution used.
    pub fn cdf(&self) -> &Cdf1d {
        &self.cdf
    }

    /// `T_i(x)` for `2 <= i <= N`.
    pub fn eval(&self, i: usize, x: f64) -> Result<f64> {
        if i < 2 || i > self.n {
            return Err(Error::param("i", "map index must lie in 2..=N"));
        }
        let n = self.n as f64;
        let mut m = self.cdf.mass(x) + (i - 1) as f64;
        if m > n {
            m -= n;
        }
        self.cdf.inverse(m.clamp(0.0, n))
    }
}

/// Average error of a map table against the co-motion functions.
#[derive(Debug, Clone, PartialEq)]
pub struct AvgError {
    /// `(1/(K |Omega|)) sum_j min_perm sum_i |T_perm(i)(a_j) - T_i^K(a_j)|`:
    /// the images of each row are matched to the oracle branches separately.
    pub value: f64,
    /// The same sum under one block to branch assignment shared by all rows.
    pub global_value: f64,
    /// `assignment[b]` is the oracle index `i` (2..=N) matched to block `b`
    /// by the shared assignment.
    pub assignment: Vec<usize>,
    /// Undefined images, which contribute nothing.
    pub skipped_rows: usize,
}

/// Block counts up to this size are matched by exhaustive search.
pub const EXACT_ASSIGNMENT_MAX_BLOCKS: usize = 8;

/// Average error of `maps` against the co-motion functions.
///
/// Swapping the blocks on a whole cycle `{a, T a, T^2 a, ..}` of a plan leaves
/// the constraints and the energy unchanged, so labels are only meaningful
/// per row. `value` matches each row's images to the oracle branches by the
/// cheapest permutation; `global_value` uses one permutation for all rows.
/// Permutations are searched exhaustively up to
/// [`EXACT_ASSIGNMENT_MAX_BLOCKS`] blocks and greedily above.
pub fn avg_error(maps: &MapTable, oracle: &ComotionMaps, mesh: &Mesh, domain: &Domain) -> Result<AvgError> {
    let nb = maps.images.len();
    if nb != oracle.n - 1 {
        return Err(Error::ContractViolation("block count does not match the oracle".into()));
    }
    let k = mesh.len();
    if maps.points.len() != k {
        return Err(Error::ContractViolation("map table does not match the mesh".into()));
    }
    let mut skipped = 0;
    let mut global = vec![vec![0.0; nb]; nb];
    let mut per_row = 0.0;
    let mut row_cost = vec![vec![0.0; nb]; nb];
    let mut exact = vec![0.0; nb];
    for j in 0..k {
        for (i, v) in exact.iter_mut().enumerate() {
            *v = oracle.eval(i + 2, maps.points[j][0])?;
        }
        for b in 0..nb {
            match maps.images[b][j] {
                Some(p) => {
                    for i in 0..nb {
                        row_cost[b][i] = abs(exact[i] - p[0]);
                        global[b][i] += row_cost[b][i];
                    }
                }
                None => {
                    skipped += 1;
                    row_cost[b].iter_mut().for_each(|c| *c = 0.0);
                }
            }
        }
        let perm = assign(&row_cost);
        per_row += perm.iter().enumerate().map(|(b, &i)| row_cost[b][i]).sum::<f64>();
    }
    let perm = assign(&global);
    let total: f64 = perm.iter().enumerate().map(|(b, &i)| global[b][i]).sum();
    let scale = k as f64 * domain.measure();
    Ok(AvgError {
        value: per_row / scale,
        global_value: total / scale,
        assignment: perm.iter().map(|i| i + 2).collect(),
        skipped_rows: skipped,
    })
}

fn assign(cost: &[Vec<f64>]) -> Vec<usize> {
    if cost.len() <= EXACT_ASSIGNMENT_MAX_BLOCKS {
        best_permutation(cost)
    } else {
        greedy_assignment(cost)
    }
}

fn best_permutation(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let score = |p: &[usize]| p.iter().enumerate().map(|(b, &i)| cost[b][i]).sum::<f64>();
    let mut best = perm.clone();
    let mut best_score = score(&perm);
    // Heap's algorithm; the identity is visited first so ties keep it
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let s = score(&perm);
            if s < best_score {
                best_score = s;
                best.clone_from(&perm);
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

fn greedy_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut out = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for _ in 0..n {
        let mut pick = (0, 0, f64::INFINITY);
        for (b, row) in cost.iter().enumerate() {
            if out[b] != usize::MAX {
                continue;
            }
            for (i, &v) in row.iter().enumerate() {
                if !used[i] && v < pick.2 {
                    pick = (b, i, v);
                }
            }
        }
        out[pick.0] = pick.1;
        used[pick.1] = true;
    }
    out
}

/// First-order optimality residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct KktCertificate {
    /// Largest `|Phi|` on the support plus largest negative part off it, over blocks.
    pub stationarity: f64,
    /// `sum_i sum |Phi_i * X_i|`.
    pub complementarity: f64,
    /// `sum_i |B(X_i) - b|`.
    pub feasibility: f64,
    /// Maximum of the three.
    pub overall: f64,
    /// `[stationarity, complementarity, feasibility]` per block.
    pub per_block: Vec<[f64; 3]>,
}

/// Fits multipliers `lambda_i` by least squares of `grad_i f_beta - B*(lambda)`
/// on the support `{x > support_tol}` and reports the residual
/// `Phi_i = grad_i f_beta - B*(lambda_i)`.
///
/// On a degenerate support the least-squares solutions form an affine set.
/// The fit is anchored at the multipliers of the projection of `X_i - grad_i`
/// onto `S`, which are exact at a KKT point, and corrected by the
/// minimum-norm least-squares step from there.
pub fn kkt_certificate(z: &PlanSet, pd: &ProblemData, support_tol: f64) -> KktCertificate {
    let mut per_block = Vec::with_capacity(z.len());
    let proj = ProjectionConfig {
        tol: 1e-12,
        max_newton: 500,
        ..ProjectionConfig::default()
    };
    for i in 0..z.len() {
        let x = z.block(i);
        let g = block_gradient(z, i, pd);
        let mask: Vec<bool> = x.as_slice().iter().map(|&v| v > support_tol).collect();
        let mut y = x.clone();
        y.axpy(-1.0, &g);
        let anchor = match project_onto_s(&y, pd, &proj, None) {
            Ok((_, state, _)) => state.lambda,
            Err(_) => vec![0.0; 2 * pd.k() + 1],
        };
        let mut resid = g.clone();
        resid.axpy(-1.0, &apply_b_adjoint(&anchor, pd));
        for (v, &m) in resid.as_mut_slice().iter_mut().zip(&mask) {
            if !m {
                *v = 0.0;
            }
        }
        let rhs = apply_b(&resid, pd);
        let delta = masked_normal_solve(pd, &mask, &rhs, 1e-14);
        let lambda: Vec<f64> = anchor.iter().zip(&delta).map(|(a, d)| a + d).collect();
        let mut phi = g;
        phi.axpy(-1.0, &apply_b_adjoint(&lambda, pd));
        let mut on = 0.0f64;
        let mut off = 0.0f64;
        let mut comp = 0.0;
        for ((p, &m), xv) in phi.as_slice().iter().zip(&mask).zip(x.as_slice()) {
            if m {
                on = on.max(abs(*p));
            } else {
                off = off.max((-p).max(0.0));
            }
            comp += abs(p * xv);
        }
        let bx = apply_b(x, pd);
        let r: Vec<f64> = bx.iter().zip(pd.b()).map(|(a, b)| a - b).collect();
        per_block.push([on + off, comp, norm2(&r)]);
    }
    let stationarity = per_block.iter().fold(0.0f64, |m, b| m.max(b[0]));
    let complementarity = per_block.iter().map(|b| b[1]).sum();
    let feasibility = per_block.iter().map(|b| b[2]).sum();
    KktCertificate {
        stationarity,
        complementarity,
        feasibility,
        overall: stationarity.max(complementarity).max(feasibility),
        per_block,
    }
}

/// Points of `maps.points` inside the disk `(center, radius)` together with
/// their images under every block, for slice plots of 2D maps.
pub fn slice(maps: &MapTable, center: [f64; 2], radius: f64) -> Vec<(usize, [f64; 2], Vec<Option<[f64; 2]>>)> {
    maps.points
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let dx = p[0] - center[0];
            let dy = p[1] - center[1];
            dx * dx + dy * dy <= radius * radius
        })
        .map(|(j, p)| (j, *p, maps.images.iter().map(|b| b[j]).collect()))
        .collect()
}

/// `(F(T_i(x)) - F(x)) mod N`, which should equal `i - 1`.
pub fn cdf_shift(oracle: &ComotionMaps, i: usize, x: f64) -> Result<f64> {
    let n = oracle.n as f64;
    let d = oracle.cdf.mass(oracle.eval(i, x)?) - oracle.cdf.mass(x);
    Ok(d - n * floor(d / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{BuiltinSystem, Profile};
    use crate::linalg::Mat;
    use crate::mesh::partition_equal_mass_1d;

    #[test]
    fn uniform_closed_form() {
        let spec = DensitySpec::new(Domain::Interval { lo: 0.0, hi: 1.0 }, 3, Profile::Uniform).unwrap();
        let o = seidl_maps_1d(&spec).unwrap();
        for &x in &[0.05, 0.3, 0.6, 0.9] {
            let want = if x <= 2.0 / 3.0 { x + 1.0 / 3.0 } else { x - 2.0 / 3.0 };
            assert!((o.eval(2, x).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn point_mass_row() {
        let spec = BuiltinSystem::System1.spec();
        let mesh = partition_equal_mass_1d(&spec, 4).unwrap();
        let mut x = Mat::zeros(4, 4);
        x.set(0, 2, 1.0);
        x.set(1, 2, 1.0);
        x.set(1, 3, 1.0);
        let maps = transport_maps(&PlanSet::new(vec![x.clone(), x]).unwrap(), &mesh);
        let a = mesh.barycenters();
        assert_eq!(maps.images[0][0], Some(a[2]));
        assert!((maps.images[0][1].unwrap()[0] - 0.5 * (a[2][0] + a[3][0])).abs() < 1e-15);
        assert_eq!(maps.images[0][2], None);
        assert_eq!(maps.undefined_rows(), 4);
    }

    #[test]
    fn permutation_search_finds_optimum() {
        let cost = vec![vec![5.0, 1.0, 9.0], vec![1.0, 7.0, 9.0], vec![9.0, 9.0, 0.5]];
        assert_eq!(best_permutation(&cost), vec![1, 0, 2]);
        assert_eq!(greedy_assignment(&cost), vec![1, 0, 2]);
    }
}

//! Grid-refinement initialization: lift the support of a coarse plan onto
//! the refined mesh.

use alloc::vec::Vec;

use crate::assembly::PlanSet;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::mesh::RefinementMap;

/// Entries at or below this value are treated as zero when lifting.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

/// For every coarse entry `x_jk > threshold`, sets all fine entries
/// `(children(j), children(k))` to `r * x_jk`; everything else is zero.
/// The result is generally not feasible.
pub fn gr_init(coarse: &PlanSet, map: &RefinementMap, r: f64, threshold: f64) -> Result<PlanSet> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::param("r", "scaling must be positive"));
    }
    let kc = coarse.k();
    if map.coarse_len() != kc {
        return Err(Error::ContractViolation(alloc::format!(
            "refinement map has {} parents, plan has {kc} rows",
            map.coarse_len()
        )));
    }
    let kf = map.fine_len();
    let mut seen = alloc::vec![false; kf];
    for j in 0..kc {
        for &c in map.children(j) {
            if c >= kf || seen[c] {
                return Err(Error::ContractViolation(alloc::format!("child index {c} is out of range or repeated")));
            }
            seen[c] = true;
        }
    }
    let blocks: Vec<Mat> = coarse
        .blocks()
        .iter()
        .map(|x| {
            let mut f = Mat::zeros(kf, kf);
            for j in 0..kc {
                for k in 0..kc {
                    let v = x.get(j, k);
                    if v > threshold {
                        for &a in map.children(j) {
                            for &b in map.children(k) {
                                f.set(a, b, r * v);
                            }
                        }
                    }
                }
            }
            f
        })
        .collect();
    PlanSet::new(blocks)
}

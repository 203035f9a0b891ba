mod oracles;

use ggr_core::assembly::PlanSet;
use ggr_core::density::BuiltinSystem;
use ggr_core::grinit::{gr_init, SUPPORT_THRESHOLD};
use ggr_core::linalg::Mat;
use ggr_core::mesh::{build_equal_mass_kd_2d, partition_equal_mass_1d, refine, Mesh, RefinementMap, SplitRule};
use oracles::Rng;
use proptest::prelude::*;

fn sparse_plan(rng: &mut Rng, k: usize, blocks: usize) -> PlanSet {
    PlanSet::new(
        (0..blocks)
            .map(|_| {
                Mat::from_fn(k, k, |_, _| match rng.below(4) {
                    0 | 1 => 0.0,
                    2 => rng.uniform(0.0, 1e-8),
                    _ => rng.uniform(0.01, 3.0),
                })
            })
            .collect(),
    )
    .unwrap()
}

/// Fine value of every entry from the `parent` links of the fine mesh.
fn lift_oracle(coarse: &PlanSet, fine: &Mesh, r: f64) -> Vec<Mat> {
    let parent: Vec<usize> = fine.elements().iter().map(|e| e.parent.unwrap()).collect();
    let kf = fine.len();
    coarse
        .blocks()
        .iter()
        .map(|x| {
            Mat::from_fn(kf, kf, |a, b| {
                let v = x.get(parent[a], parent[b]);
                if v > SUPPORT_THRESHOLD {
                    r * v
                } else {
                    0.0
                }
            })
        })
        .collect()
}

fn check_lift(coarse: &PlanSet, fine: &Mesh, map: &RefinementMap, per_entry: usize) {
    let got = gr_init(coarse, map, 1.0, SUPPORT_THRESHOLD).unwrap();
    let want = lift_oracle(coarse, fine, 1.0);
    for (g, w) in got.blocks().iter().zip(&want) {
        assert_eq!(g, w);
    }
    for (g, x) in got.blocks().iter().zip(coarse.blocks()) {
        let nnz_fine = g.as_slice().iter().filter(|v| **v > 0.0).count();
        let nnz_coarse = x.as_slice().iter().filter(|v| **v > SUPPORT_THRESHOLD).count();
        assert_eq!(nnz_fine, per_entry * nnz_coarse);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn one_dimensional_lift_is_exact(seed in any::<u64>(), k in 3usize..20, blocks in 2usize..7) {
        let spec = BuiltinSystem::System2.spec();
        let mesh = partition_equal_mass_1d(&spec, k).unwrap();
        let (fine, map) = refine(&mesh, &spec, SplitRule::Midpoint).unwrap();
        let mut rng = Rng::new(seed, 0);
        check_lift(&sparse_plan(&mut rng, k, blocks), &fine, &map, 4);
    }

    #[test]
    fn lift_is_homogeneous_in_r(seed in any::<u64>(), r in 0.1f64..10.0) {
        let map = RefinementMap::new((0..6).map(|j| vec![2 * j, 2 * j + 1]).collect());
        let mut rng = Rng::new(seed, 2);
        let z = sparse_plan(&mut rng, 6, 3);
        let a = gr_init(&z, &map, r, SUPPORT_THRESHOLD).unwrap();
        let b = gr_init(&z, &map, 1.0, SUPPORT_THRESHOLD).unwrap();
        for (x, y) in a.blocks().iter().zip(b.blocks()) {
            for (u, v) in x.as_slice().iter().zip(y.as_slice()) {
                prop_assert_eq!(*u, r * v);
            }
        }
    }
}

#[test]
fn two_dimensional_lift_is_exact() {
    let spec = BuiltinSystem::System7.spec();
    let mut rng = Rng::new(17, 1);
    for k in [5, 12, 20] {
        let mesh = build_equal_mass_kd_2d(&spec, k).unwrap();
        let (fine, map) = refine(&mesh, &spec, SplitRule::Midpoint).unwrap();
        for _ in 0..10 {
            check_lift(&sparse_plan(&mut rng, k, 2), &fine, &map, 16);
        }
    }
}

#[test]
fn single_coarse_entry_lifts_to_four_fine_entries() {
    // coarse entry (3, 4) in 1-based numbering; children of j are 2j-1 and 2j
    let map = RefinementMap::new((0..6).map(|j| vec![2 * j, 2 * j + 1]).collect());
    let mut x = Mat::zeros(6, 6);
    x.set(2, 3, 0.8);
    let z = PlanSet::new(vec![x.clone(), x]).unwrap();
    let f = gr_init(&z, &map, 1.0, SUPPORT_THRESHOLD).unwrap();
    for b in f.blocks() {
        for a in 0..12 {
            for c in 0..12 {
                let want = if (a == 4 || a == 5) && (c == 6 || c == 7) { 0.8 } else { 0.0 };
                assert_eq!(b.get(a, c), want);
            }
        }
    }
}

#[test]
fn single_coarse_entry_in_two_dimensions_lifts_to_sixteen() {
    let spec = BuiltinSystem::System8.spec();
    let mesh = build_equal_mass_kd_2d(&spec, 8).unwrap();
    let (fine, map) = refine(&mesh, &spec, SplitRule::Midpoint).unwrap();
    let mut x = Mat::zeros(8, 8);
    x.set(1, 5, 2.5);
    let z = PlanSet::new(vec![x.clone(), x]).unwrap();
    let f = gr_init(&z, &map, 1.0, SUPPORT_THRESHOLD).unwrap();
    assert_eq!(fine.len(), 32);
    for b in f.blocks() {
        let positive: Vec<(usize, usize)> =
            (0..32).flat_map(|a| (0..32).map(move |c| (a, c))).filter(|&(a, c)| b.get(a, c) > 0.0).collect();
        assert_eq!(positive.len(), 16);
        for (a, c) in positive {
            assert_eq!(b.get(a, c), 2.5);
            assert!(map.children(1).contains(&a) && map.children(5).contains(&c));
        }
    }
}

#[test]
fn zero_plan_lifts_to_zero() {
    let map = RefinementMap::new((0..5).map(|j| vec![2 * j, 2 * j + 1]).collect());
    let f = gr_init(&PlanSet::zeros(5, 4), &map, 1.0, SUPPORT_THRESHOLD).unwrap();
    assert_eq!(f, PlanSet::zeros(10, 4));
}

#[test]
fn inconsistent_map_is_rejected() {
    let map = RefinementMap::new((0..5).map(|j| vec![2 * j, 2 * j + 1]).collect());
    assert!(gr_init(&PlanSet::zeros(6, 2), &map, 1.0, SUPPORT_THRESHOLD).is_err());
    let bad = RefinementMap::new(vec![vec![0, 1], vec![1, 2]]);
    assert!(gr_init(&PlanSet::zeros(2, 2), &bad, 1.0, SUPPORT_THRESHOLD).is_err());
    assert!(gr_init(&PlanSet::zeros(5, 2), &map, 0.0, SUPPORT_THRESHOLD).is_err());
}

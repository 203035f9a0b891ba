mod oracles;

use ggr_core::assembly::{
    apply_b, apply_b_adjoint, assemble, block_gradient, comp_violation, cost_coefficient, energy, penalized_energy, CostRule,
    PlanSet, ProblemData,
};
use ggr_core::density::{BuiltinSystem, DensitySpec, Domain, Profile};
use ggr_core::linalg::Mat;
use ggr_core::mesh::{partition_equal_mass_1d, Cell};
use oracles::{comp_direct, energy_direct, random_problem, Rng};
use proptest::prelude::*;

fn random_plan(rng: &mut Rng, k: usize, n: usize) -> PlanSet {
    PlanSet::new((1..n).map(|_| rng.mat(k, 0.0, 2.0)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn adjoint_identity(seed in any::<u64>(), k in 2usize..8) {
        let mut rng = Rng::new(seed, 0);
        let pd = random_problem(&mut rng, k, 3, 1.0);
        let w = rng.mat(k, -1.0, 1.0);
        let lambda: Vec<f64> = (0..2 * k + 1).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let lhs: f64 = apply_b(&w, &pd).iter().zip(&lambda).map(|(a, b)| a * b).sum();
        let rhs = w.dot(&apply_b_adjoint(&lambda, &pd));
        let scale = w.norm() * apply_b_adjoint(&lambda, &pd).norm();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>(), k in 2usize..6, n in 3usize..6) {
        let mut rng = Rng::new(seed, 1);
        let beta = rng.uniform(0.1, 4.0);
        let pd = random_problem(&mut rng, k, n, beta);
        let z = random_plan(&mut rng, k, n);
        let i = rng.below(n - 1);
        let g = block_gradient(&z, i, &pd);
        let h = 1e-6;
        for j in 0..k {
            for l in 0..k {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp.block_mut(i).set(j, l, z.block(i).get(j, l) + h);
                zm.block_mut(i).set(j, l, z.block(i).get(j, l) - h);
                let fd = (penalized_energy(&zp, &pd) - penalized_energy(&zm, &pd)) / (2.0 * h);
                let gv = g.get(j, l);
                prop_assert!((fd - gv).abs() <= 1e-5 * gv.abs().max(1.0), "{fd} vs {gv}");
            }
        }
    }

    #[test]
    fn energy_matches_direct_summation(seed in any::<u64>(), k in 2usize..7, n in 3usize..6) {
        let mut rng = Rng::new(seed, 2);
        let pd = random_problem(&mut rng, k, n, 1.0);
        let z = random_plan(&mut rng, k, n);
        let want = energy_direct(&z, &pd);
        prop_assert!((energy(&z, &pd) - want).abs() <= 1e-10 * want.abs());
        let comp = comp_direct(&z);
        prop_assert!((comp_violation(&z) - comp).abs() <= 1e-10 * comp.abs().max(1.0));
        let fb = penalized_energy(&z, &pd);
        prop_assert!((fb - (want + pd.beta() * comp)).abs() <= 1e-10 * fb.abs());
    }
}

#[test]
fn single_entry_plans_match_the_triple_sum() {
    let mut rng = Rng::new(11, 0);
    let pd = random_problem(&mut rng, 3, 3, 1.0);
    let mut a = Mat::zeros(3, 3);
    a.set(0, 1, 0.7);
    let mut b = Mat::zeros(3, 3);
    b.set(0, 2, 1.3);
    let z = PlanSet::new(vec![a, b]).unwrap();
    let (r, e, c) = (pd.varrho(), pd.vol(), pd.cost());
    let linear = r[0] * 0.7 * c.get(0, 1) * e[0] * e[1] + r[0] * 1.3 * c.get(0, 2) * e[0] * e[2];
    let pair = r[0] * 0.7 * 1.3 * c.get(1, 2) * e[0] * e[1] * e[2];
    assert!((energy(&z, &pd) - (linear + pair)).abs() < 1e-14);
}

#[test]
fn zero_cost_gives_zero_energy_and_gradient() {
    let pd = ProblemData::new(vec![1.0; 4], vec![0.5; 4], Mat::zeros(4, 4), 3, 0.0).unwrap();
    let mut rng = Rng::new(3, 0);
    let z = random_plan(&mut rng, 4, 3);
    assert_eq!(energy(&z, &pd), 0.0);
    assert_eq!(block_gradient(&z, 1, &pd).max_abs(), 0.0);
}

#[test]
fn gradient_with_other_blocks_zero_is_the_linear_term() {
    let mut rng = Rng::new(5, 0);
    let pd = random_problem(&mut rng, 5, 4, 2.0);
    let mut z = PlanSet::zeros(5, 3);
    *z.block_mut(1) = rng.mat(5, 0.0, 1.0);
    assert!(block_gradient(&z, 1, &pd).sub(pd.linear_term()).max_abs() == 0.0);
}

#[test]
fn identical_blocks_comp_is_squared_norm() {
    let mut rng = Rng::new(9, 0);
    let x = rng.mat(4, 0.0, 1.0);
    let z = PlanSet::new(vec![x.clone(), x.clone()]).unwrap();
    assert!((comp_violation(&z) - x.dot(&x)).abs() < 1e-14);
}

#[test]
fn disjoint_supports_have_no_penalty() {
    let mut rng = Rng::new(4, 0);
    let pd = random_problem(&mut rng, 4, 3, 3.0);
    let a = Mat::from_fn(4, 4, |j, l| if (j + 1) % 4 == l { 1.0 } else { 0.0 });
    let b = Mat::from_fn(4, 4, |j, l| if (j + 2) % 4 == l { 1.0 } else { 0.0 });
    let z = PlanSet::new(vec![a, b]).unwrap();
    assert_eq!(comp_violation(&z), 0.0);
    assert_eq!(penalized_energy(&z, &pd), energy(&z, &pd));
}

#[test]
fn trace_multiplier_gives_identity() {
    let mut rng = Rng::new(6, 0);
    let pd = random_problem(&mut rng, 5, 3, 1.0);
    let mut lambda = vec![0.0; 11];
    lambda[10] = 1.0;
    assert_eq!(apply_b_adjoint(&lambda, &pd), Mat::identity(5));
}

#[test]
fn far_field_coefficients() {
    let a = Cell::Interval { lo: 0.0, hi: 1.0 };
    let b = Cell::Interval { lo: 10.0, hi: 11.0 };
    assert!((cost_coefficient(&a, &b, CostRule::CellAverage).unwrap() - 0.1).abs() < 1e-3);
    let s = Cell::Rect { x0: -0.5, x1: 0.5, y0: -0.5, y1: 0.5 };
    let t = Cell::Rect { x0: 4.5, x1: 5.5, y0: -0.5, y1: 0.5 };
    assert!((cost_coefficient(&s, &t, CostRule::CellAverage).unwrap() - 0.2).abs() < 1e-3);
}

#[test]
fn adjacent_squares_match_nested_quadrature() {
    // inner integral over y' in closed form, the other three by tensor Gauss
    // on panels graded toward the shared edge (y is covered twice, once
    // graded toward each end, hence the factor 1/2)
    let s = Cell::Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
    let t = Cell::Rect { x0: 1.0, x1: 2.0, y0: 0.0, y1: 1.0 };
    let got = cost_coefficient(&s, &t, CostRule::CellAverage).unwrap();
    let rule = ggr_core::quadrature::GaussRule::legendre(12);
    let edges: Vec<f64> = (0..=20).map(|i| 2f64.powi(-(20 - i)) * if i == 0 { 0.0 } else { 1.0 }).collect();
    let inner = |dx: f64, dy0: f64, dy1: f64| -> f64 {
        // int_{dy0}^{dy1} dy / sqrt(dx^2 + dy^2)
        (dy1 + (dx * dx + dy1 * dy1).sqrt()).ln() - (dy0 + (dx * dx + dy0 * dy0).sqrt()).ln()
    };
    let mut total = 0.0;
    // x in [0,1], x' in [1,2]: use u = 1 - x, v = x' - 1, both graded toward 0
    for wu in edges.windows(2) {
        for wv in edges.windows(2) {
            total += rule.integrate(wu[0], wu[1], |u| {
                rule.integrate(wv[0], wv[1], |v| {
                    let mut s = 0.0;
                    for wy in edges.windows(2) {
                        s += rule.integrate(wy[0], wy[1], |y| inner(u + v, -y, 1.0 - y));
                        s += rule.integrate(1.0 - wy[1], 1.0 - wy[0], |y| inner(u + v, -y, 1.0 - y));
                    }
                    0.5 * s
                })
            });
        }
    }
    assert!((got - total).abs() < 1e-8 * total, "{got} vs {total}");
}

#[test]
fn assembled_data_invariants() {
    let spec = BuiltinSystem::System1.spec();
    let mesh = partition_equal_mass_1d(&spec, 12).unwrap();
    let pd = assemble(&mesh, &spec, 2.0, CostRule::CellAverage).unwrap();
    let total: f64 = pd.varrho().iter().zip(pd.vol()).map(|(r, v)| r * v).sum();
    assert!((total - 3.0).abs() < 1e-6);
    let c = pd.cost();
    for j in 0..12 {
        assert_eq!(c.get(j, j), 0.0);
        for l in 0..12 {
            assert_eq!(c.get(j, l), c.get(l, j));
            if l != j {
                assert!(c.get(j, l) > 0.0);
            }
        }
    }
    assert_eq!(&pd.b()[..12], &[1.0; 12]);
    assert_eq!(&pd.b()[12..24], pd.varrho());
    assert_eq!(pd.b()[24], 0.0);
}

#[test]
fn uniform_density_gives_equal_varrho() {
    let spec = DensitySpec::new(Domain::Interval { lo: 0.0, hi: 1.0 }, 3, Profile::Uniform).unwrap();
    let mesh = partition_equal_mass_1d(&spec, 6).unwrap();
    let pd = assemble(&mesh, &spec, 1.0, CostRule::CellAverage).unwrap();
    for r in pd.varrho() {
        assert!((r - 3.0).abs() < 1e-10);
    }
}

use ggr::formats::{decode_plan, encode_plan, read_mesh, read_plan, write_mesh, write_plan};
use ggr::RayonMultistart;
use ggr_core::assembly::assemble;
use ggr_core::ggr::{GlobalStage, SerialMultistart};
use ggr_core::mesh::{build_equal_mass_kd_2d, partition_equal_mass_1d, refine, SplitRule};
use ggr_core::multistart::MultistartConfig;
use ggr_core::pbcd::PbcdConfig;
use ggr_core::{BuiltinSystem, Cell, CostRule, Element, Mat, Mesh, PlanSet};
use proptest::prelude::*;
use tempfile::TempDir;

fn plan_strategy() -> impl Strategy<Value = PlanSet> {
    (1usize..6, 1usize..4).prop_flat_map(|(k, n)| {
        prop::collection::vec(prop::num::f64::ANY, k * k * n).prop_map(move |data| {
            let blocks = data.chunks(k * k).map(|c| Mat::from_vec(k, k, c.to_vec())).collect();
            PlanSet::new(blocks).unwrap()
        })
    })
}

fn same_bits(a: &PlanSet, b: &PlanSet) -> bool {
    a.k() == b.k()
        && a.len() == b.len()
        && a.blocks()
            .iter()
            .zip(b.blocks())
            .all(|(x, y)| x.as_slice().iter().zip(y.as_slice()).all(|(u, v)| u.to_bits() == v.to_bits()))
}

fn interval_mesh(cuts: &[f64], masses: &[f64]) -> Mesh {
    let elements = cuts
        .windows(2)
        .zip(masses)
        .enumerate()
        .map(|(id, (w, &mass))| Element {
            id,
            cell: Cell::Interval { lo: w[0], hi: w[1] },
            mass,
            parent: (id % 3 == 0).then_some(id / 2),
            depth: (id % 4) as u32,
        })
        .collect();
    Mesh::from_elements(elements).unwrap()
}

proptest! {
    #[test]
    fn plan_bytes_round_trip(z in plan_strategy()) {
        let bytes = encode_plan(&z);
        prop_assert_eq!(bytes.len(), 24 + 8 * z.k() * z.k() * z.len());
        let back = decode_plan(&bytes).unwrap();
        prop_assert!(same_bits(&z, &back));
    }

    #[test]
    fn truncated_plans_are_rejected(z in plan_strategy(), cut in 1usize..16) {
        let bytes = encode_plan(&z);
        let cut = cut.min(bytes.len());
        prop_assert!(decode_plan(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn interval_mesh_round_trips(
        steps in prop::collection::vec(1e-3f64..1.0, 1..30),
        start in -5.0f64..5.0,
        seed_mass in 1e-6f64..10.0,
    ) {
        let mut cuts = vec![start];
        for s in &steps {
            cuts.push(cuts.last().unwrap() + s);
        }
        let masses: Vec<f64> = steps.iter().map(|s| s * seed_mass).collect();
        let mesh = interval_mesh(&cuts, &masses);
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("mesh.json");
        write_mesh(&path, &mesh).unwrap();
        prop_assert_eq!(read_mesh(&path).unwrap(), mesh);
    }
}

#[test]
fn builtin_meshes_round_trip() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("mesh.json");
    let s3 = BuiltinSystem::System3.spec();
    let m1 = partition_equal_mass_1d(&s3, 12).unwrap();
    let (m1r, _) = refine(&m1, &s3, SplitRule::Midpoint).unwrap();
    let s8 = BuiltinSystem::System8.spec();
    let m2 = build_equal_mass_kd_2d(&s8, 17).unwrap();
    let (m2r, _) = refine(&m2, &s8, SplitRule::EqualMass).unwrap();
    for mesh in [m1, m1r, m2, m2r] {
        write_mesh(&path, &mesh).unwrap();
        assert_eq!(read_mesh(&path).unwrap(), mesh);
    }
}

#[test]
fn plan_file_round_trip_and_errors() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("plan.bin");
    let z = PlanSet::new(vec![Mat::from_fn(3, 3, |i, j| (i * 3 + j) as f64 * 0.1); 2]).unwrap();
    write_plan(&path, &z).unwrap();
    assert!(same_bits(&z, &read_plan(&path).unwrap()));
    std::fs::write(&path, b"GGRPLAN0 and some more bytes here").unwrap();
    assert!(read_plan(&path).is_err());
    assert!(read_plan(&dir.path().join("missing.bin")).is_err());
}

#[test]
fn rayon_multistart_matches_serial() {
    let spec = BuiltinSystem::System2.spec();
    let mesh = partition_equal_mass_1d(&spec, 8).unwrap();
    let pd = assemble(&mesh, &spec, 0.5, CostRule::Barycentric).unwrap();
    let cfg = MultistartConfig {
        n_starts: 7,
        seed: 5,
        pbcd: PbcdConfig::default(),
        keep_top: 3,
    };
    let serial = SerialMultistart.solve(&pd, &cfg).unwrap();
    for threads in [1, 2, 4] {
        let par = RayonMultistart::new(threads).unwrap().solve(&pd, &cfg).unwrap();
        assert_eq!(par.top.len(), serial.top.len());
        for (a, b) in par.top.iter().zip(&serial.top) {
            assert_eq!(a.index, b.index);
            assert!(same_bits(&a.plan, &b.plan));
            assert_eq!(a.penalized.to_bits(), b.penalized.to_bits());
        }
        let pi: Vec<(usize, u64, usize)> = par.starts.iter().map(|s| (s.index, s.energy.to_bits(), s.report.sweeps())).collect();
        let si: Vec<(usize, u64, usize)> = serial.starts.iter().map(|s| (s.index, s.energy.to_bits(), s.report.sweeps())).collect();
        assert_eq!(pi, si);
    }
}

#[test]
fn rayon_multistart_rejects_zero_starts() {
    let spec = BuiltinSystem::System1.spec();
    let mesh = partition_equal_mass_1d(&spec, 4).unwrap();
    let pd = assemble(&mesh, &spec, 0.5, CostRule::Barycentric).unwrap();
    let cfg = MultistartConfig {
        n_starts: 0,
        ..MultistartConfig::default()
    };
    assert!(RayonMultistart::new(2).unwrap().solve(&pd, &cfg).is_err());
}

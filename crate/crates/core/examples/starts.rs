//! Prints the energy histogram of a coarse multistart run.
//!
//! `cargo run --release -p ggr-core --example starts -- system1 200 [bary|cell]`

use ggr_core::assembly::{assemble, CostRule};
use ggr_core::density::BuiltinSystem;
use ggr_core::diagnostics::{avg_error, seidl_maps_1d, transport_maps};
use ggr_core::ggr::beta_for;
use ggr_core::mesh::partition_equal_mass_1d;
use ggr_core::multistart::{multistart_solve, MultistartConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let sys = BuiltinSystem::from_name(args.get(1).map_or("system1", |s| s)).expect("unknown system");
    let n: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(200);
    let rule = match args.get(3).map(String::as_str) {
        Some("cell") => CostRule::CellAverage,
        _ => CostRule::Barycentric,
    };
    let spec = sys.spec();
    let k = sys.default_k0();
    let mesh = partition_equal_mass_1d(&spec, k).unwrap();
    let pd = assemble(&mesh, &spec, beta_for(k), rule).unwrap();
    let cfg = MultistartConfig {
        n_starts: n,
        keep_top: 1,
        ..Default::default()
    };
    let res = multistart_solve(&pd, &cfg).unwrap();
    let mut e: Vec<(f64, f64, usize)> = res.starts.iter().map(|s| (s.penalized, s.comp_violation, s.report.sweeps())).collect();
    e.sort_by(|a, b| a.0.total_cmp(&b.0));
    for chunk in e.chunks(e.len().div_ceil(20)) {
        println!("{:.6} comp={:.2e} sweeps={}", chunk[0].0, chunk[0].1, chunk[0].2);
    }
    let b = res.best();
    println!("best {} E={:.6}", b.index, b.energy);
    for r in 0..k {
        let row: Vec<String> = b.plan.block(0).row(r).iter().map(|v| format!("{:5.2}", v)).collect();
        println!("{}", row.join(" "));
    }
    if spec.dim() == 1 {
        let oracle = seidl_maps_1d(&spec).unwrap();
        let maps = transport_maps(&b.plan, &mesh);
        let err = avg_error(&maps, &oracle, &mesh, &spec.domain()).unwrap();
        println!("err={:.4} assignment={:?}", err.value, err.assignment);
        for (j, p) in maps.points.iter().enumerate() {
            let imgs: Vec<String> = maps.images.iter().map(|bl| bl[j].map_or("-".into(), |v| format!("{:+.3}", v[0]))).collect();
            let ex: Vec<String> = (2..=spec.electrons()).map(|i| format!("{:+.3}", oracle.eval(i, p[0]).unwrap())).collect();
            println!("a={:+.3} maps=[{}] exact=[{}]", p[0], imgs.join(" "), ex.join(" "));
        }
    }
}

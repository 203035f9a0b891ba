//! Runs the 1D pipeline for a built-in system and prints one line per level.
//!
//! `cargo run --release -p ggr-core --example chain -- system1 3 200 [trace_every]`

use std::time::Instant;

use ggr_core::density::BuiltinSystem;
use ggr_core::ggr::{Ggr, GgrConfig, SerialMultistart};
use ggr_core::pbcd::Clock;

struct Wall(Instant);

impl Clock for Wall {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let sys = BuiltinSystem::from_name(args.get(1).map_or("system1", |s| s)).expect("unknown system");
    let levels: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2);
    let n_starts: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(50);
    let every: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut cfg = GgrConfig::new(sys.spec(), sys.default_k0(), levels);
    cfg.multistart.n_starts = n_starts;
    let clock = Wall(Instant::now());
    let g = Ggr::new(&cfg).expect("config");
    let mut lvl = g.initial_level(&SerialMultistart, &clock).expect("level 0");
    loop {
        println!(
            "K={:5} E={:.6} Ebeta={:.6} comp={:.2e} err_s={:?} err_e={:?} feas={:.1e} kkt={:.1e} sweeps={} stop={} t={:.1}s",
            lvl.k(),
            lvl.energy,
            lvl.penalized,
            lvl.comp_violation,
            lvl.err_s,
            lvl.err_e,
            lvl.feasibility,
            lvl.kkt.overall,
            lvl.report.sweeps(),
            lvl.report.termination.as_str(),
            lvl.time
        );
        if lvl.level == levels {
            break;
        }
        lvl = g
            .refined_level_with(lvl.level + 1, &lvl.mesh, &lvl.plan, &clock, &mut |r| {
                if every > 0 && r.sweep % every == 0 {
                    println!(
                        "  {:7} E={:.10} gap={:.2e} kkt={:.2e} newton={} cg={} t={:.1}",
                        r.sweep, r.penalized, r.gap, r.kkt_violation, r.newton_iters, r.cg_iters, r.elapsed
                    );
                }
            })
            .expect("level");
    }
}

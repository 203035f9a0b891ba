//! Multistart on a rayon thread pool.

use std::time::Instant;

use ggr_core::ggr::GlobalStage;
use ggr_core::multistart::{run_start_with, MultistartAccumulator, MultistartConfig, MultistartResult};
use ggr_core::pbcd::Clock;
use ggr_core::ProblemData;
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

/// Wall clock measured from construction.
#[derive(Debug, Clone, Copy)]
pub struct WallClock(Instant);

impl WallClock {
    /// Starts the clock now.
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Runs the starts in parallel. Each start has its own RNG stream and the
/// reduction is a total order, so the winner does not depend on the thread count.
pub struct RayonMultistart {
    pool: ThreadPool,
}

impl RayonMultistart {
    /// Pool with `threads` workers; 0 lets rayon decide.
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        Ok(Self {
            pool: ThreadPoolBuilder::new().num_threads(threads).build()?,
        })
    }

    /// Worker count.
    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl GlobalStage for RayonMultistart {
    fn solve(&self, pd: &ProblemData, cfg: &MultistartConfig) -> ggr_core::Result<MultistartResult> {
        if cfg.n_starts == 0 {
            return Err(ggr_core::Error::InvalidParameter {
                name: "n_starts",
                reason: "must be at least 1".into(),
            });
        }
        let keep = cfg.keep_top;
        self.pool
            .install(|| {
                (0..cfg.n_starts)
                    .into_par_iter()
                    .fold(
                        || MultistartAccumulator::new(keep),
                        |mut acc, i| {
                            acc.push(i, run_start_with(pd, cfg, i, &WallClock::start()));
                            acc
                        },
                    )
                    .reduce(|| MultistartAccumulator::new(keep), MultistartAccumulator::merge)
            })
            .finish()
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ggr::driver::stored_config;
use ggr::{run, RunConfig, RunError, RunOptions};

/// Grid-refinement solver for multi-marginal optimal transport with Coulomb cost.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed of the multistart.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of refinement steps after the coarse level.
    #[arg(long)]
    levels: Option<usize>,
    /// Worker threads for the multistart (0 = all cores).
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Continue the run stored in the output directory.
    #[arg(long)]
    resume: bool,
    /// Write transport maps to maps.csv (and slice.csv in 2D).
    #[arg(long)]
    emit_maps: bool,
    /// Write per-sweep PBCD records to trace.csv.
    #[arg(long)]
    emit_traces: bool,
}

fn issue(key: &str, message: &str) -> RunError {
    RunError::Config(vec![ggr::ConfigIssue {
        key: key.into(),
        message: message.into(),
    }])
}

fn load(args: &Args) -> Result<(RunConfig, RunOptions), RunError> {
    let mut cfg = match (&args.config, args.resume) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| issue("--config", &format!("{}: {e}", path.display())))?;
            RunConfig::from_json_str(&text).map_err(RunError::Config)?
        }
        (None, true) => {
            let out = args.out.as_ref().ok_or_else(|| issue("--out", "required with --resume"))?;
            stored_config(out)?
        }
        (None, false) => return Err(issue("--config", "required unless --resume is given")),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(levels) = args.levels {
        cfg.levels = levels;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| issue("out", "no output directory; pass --out or set `out`"))?;
    let opts = RunOptions {
        out,
        threads: args.threads,
        resume: args.resume,
        emit_maps: args.emit_maps,
        emit_traces: args.emit_traces,
    };
    Ok((cfg, opts))
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = load(&args).and_then(|(cfg, opts)| run(&cfg, &opts));
    match result {
        Ok(summary) => {
            println!("{:>5} {:>8} {:>14} {:>10} {:>10} {:>10} {:>10}", "level", "K", "E", "err_s", "err_e", "feas", "kkt");
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
            for l in &summary.levels {
                println!(
                    "{:>5} {:>8} {:>14.6} {:>10} {:>10} {:>10.1e} {:>10.1e}",
                    l.level,
                    l.k,
                    l.energy,
                    fmt(l.err_s),
                    fmt(l.err_e),
                    l.feas,
                    l.kkt.overall
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.to_json()).expect("json"));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

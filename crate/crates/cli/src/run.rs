use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};

use sol_core::config::load_config;
use sol_core::report::episode_summary;
use sol_core::{run_episode, EpisodeTrace, SolConfig, Termination};

use crate::plots;

struct SeedOutcome {
    seed: u64,
    dir: PathBuf,
    termination: Termination,
    diagnostic: Option<String>,
    final_error: f64,
}

pub fn run(config: &Path, seeds: &[u64], out: &Path, plots: bool) -> Result<ExitCode> {
    let loaded = load_config(config).with_context(|| format!("loading {}", config.display()))?;
    let label = loaded.benchmark.name();
    let seeds = if seeds.is_empty() { vec![loaded.config.seed] } else { seeds.to_vec() };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    // Every seed writes to its own directory, so episodes run side by side.
    let outcomes: Vec<Result<SeedOutcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let cfg = SolConfig { seed, ..loaded.config.clone() };
                let dir = out.join(format!("{label}_seed{seed}"));
                scope.spawn(move || run_seed(label, cfg, dir, plots))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("episode thread panicked")).collect()
    });

    let mut aggregate = String::new();
    let mut successes = 0;
    let mut diverged = false;
    for outcome in outcomes {
        let o = outcome?;
        successes += usize::from(o.termination == Termination::Success);
        aggregate.push_str(&format!("seed {}: {} final_error_inf {:.6e}\n", o.seed, o.termination, o.final_error));
        println!("seed {:>4}  {:<12} ‖x−x_ref‖∞ = {:.3e}  → {}", o.seed, o.termination.to_string(), o.final_error, o.dir.display());
        if o.termination == Termination::Divergence {
            diverged = true;
            eprintln!("seed {} diverged: {}", o.seed, o.diagnostic.as_deref().unwrap_or("no diagnostic"));
        }
    }
    let tally = format!("successes: {successes}/{}\n", seeds.len());
    aggregate.push_str(&tally);
    print!("{tally}");
    fs::write(out.join("aggregate.txt"), aggregate)?;

    Ok(if diverged { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn run_seed(label: &str, cfg: SolConfig, dir: PathBuf, plots: bool) -> Result<SeedOutcome> {
    let seed = cfg.seed;
    let trace = run_episode(&cfg).with_context(|| format!("seed {seed}"))?;
    fs::create_dir_all(&dir)?;
    write_artifacts(label, seed, &trace, &dir)?;
    if plots {
        plots::write_all(&trace, &dir).with_context(|| format!("plotting seed {seed}"))?;
    }
    Ok(SeedOutcome {
        seed,
        dir,
        termination: trace.termination,
        diagnostic: trace.diagnostic.clone(),
        final_error: trace.final_error(),
    })
}

fn write_artifacts(label: &str, seed: u64, trace: &EpisodeTrace, dir: &Path) -> Result<()> {
    trace.write_csv(BufWriter::new(File::create(dir.join("trace.csv"))?))?;
    trace.write_p_csv(BufWriter::new(File::create(dir.join("p.csv"))?))?;
    fs::write(dir.join("summary.txt"), episode_summary(label, seed, trace))?;
    Ok(())
}

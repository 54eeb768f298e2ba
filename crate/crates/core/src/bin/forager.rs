//! Command-line front end: single runs, experiment presets, and heatmap
//! rendering.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use forager_core::config::RunConfig;
use forager_core::experiment::run_experiment;
use forager_core::heatmap::csv_to_pgm;
use forager_core::metrics::RunMetrics;
use forager_core::sim::run;

#[derive(Parser)]
#[command(name = "forager", version, about = "Multi-robot hotspot exploration simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run and print its metrics row.
    Run {
        /// Flat key = value config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        team_size: Option<u32>,
        /// Particle-filter localization: on or off.
        #[arg(long, value_parser = parse_switch)]
        pf: Option<bool>,
        /// Pheromone blocking coordination: on or off.
        #[arg(long, value_parser = parse_switch)]
        coord: Option<bool>,
        /// clear, fog, or rain.
        #[arg(long)]
        weather: Option<String>,
        /// Simulation horizon in seconds.
        #[arg(long)]
        horizon: Option<f64>,
        /// Artifact directory (trajectory, grids, metrics, summary).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rerun a study preset (1 team size, 2 localization, 3 coordination)
    /// across seeds and aggregate.
    Experiment {
        #[arg(long)]
        preset: u8,
        /// Seed list: "0..9" (inclusive) or "0,3,17".
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
        /// Base config applied to every arm before arm overrides.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Render a grid CSV as a grayscale PGM image.
    Heatmap {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_switch(s: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(format!("expected on or off, got {s:?}")),
    }
}

/// Parse "0..9" (inclusive) or a comma-separated list.
fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo.trim().parse().context("bad range start")?;
        let hi: u64 = hi.trim().parse().context("bad range end")?;
        if hi < lo {
            bail!("seed range end {hi} below start {lo}");
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',')
        .map(|t| t.trim().parse::<u64>().map_err(Into::into))
        .collect::<Result<Vec<u64>>>()
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, team_size, pf, coord, weather, horizon, out } => {
            let mut cfg = match config {
                Some(path) => RunConfig::from_file(&path)
                    .with_context(|| format!("loading {}", path.display()))?,
                None => RunConfig::default(),
            };
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if let Some(v) = team_size {
                cfg.team_size = v;
            }
            if let Some(v) = pf {
                cfg.pf_enabled = v;
            }
            if let Some(v) = coord {
                cfg.coordination_enabled = v;
            }
            if let Some(v) = weather {
                cfg.weather = v.parse()?;
            }
            if let Some(v) = horizon {
                cfg.horizon_s = v;
            }
            if let Some(v) = out {
                cfg.out_dir = Some(v);
            }
            let output = run(&cfg)?;
            println!("{}", RunMetrics::csv_header());
            println!("{}", output.metrics.to_csv_row());
            match output.stop_time_s {
                Some(t) => println!("# all hotspots confirmed, stopped at {t:.1} s"),
                None => println!(
                    "# horizon reached with {}/4 hotspots",
                    output.supervisor.maps.hotspots_confirmed
                ),
            }
            if let Some(dir) = &cfg.out_dir {
                println!("# artifacts in {}", dir.display());
            }
        }
        Command::Experiment { preset, seeds, out, config } => {
            let base = match config {
                Some(path) => RunConfig::from_file(&path)
                    .with_context(|| format!("loading {}", path.display()))?,
                None => RunConfig::default(),
            };
            let seeds = parse_seeds(&seeds)?;
            let report = run_experiment(preset, &seeds, &base, Some(&out))?;
            print!("{}", report.render_text());
            println!("# report in {}", out.display());
        }
        Command::Heatmap { input, out } => {
            let csv = std::fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let pgm = csv_to_pgm(&csv)?;
            std::fs::write(&out, pgm).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

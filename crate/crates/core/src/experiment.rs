//! Multi-seed experiment presets and their aggregated reports.
//!
//! Preset 1 sweeps team size (1, 3, 5 robots), preset 2 compares
//! localization on/off at five robots, preset 3 compares coordination on/off
//! at five robots. Each arm runs every seed, reports per-metric medians and
//! interquartile ranges, and evaluates the direction hypotheses:
//!
//! - H1a: coverage and blob recall grow with team size.
//! - H1b: redundancy stays below the full-overlap baseline extrapolated from
//!   the single-robot arm (more robots stay more sample-efficient than pure
//!   duplication).
//! - H2a: localization-on robots engage blobs; localization-off robots never
//!   leave EXPLORE.
//! - H2b: localization-off runs produce no samples and no coverage.
//! - H3a: coordination reduces redundancy.
//! - H3b: coordination maintains or improves recall and detection.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::metrics::RunMetrics;
use crate::sim::{run, RunOutput, SimError};

/// Interpolated median and quartiles of a sample.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Quartiles {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub n: usize,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = p / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Quartiles of the finite values in `values`; None when empty.
pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Some(Quartiles {
        median: percentile(&v, 50.0),
        q1: percentile(&v, 25.0),
        q3: percentile(&v, 75.0),
        n: v.len(),
    })
}

/// One run inside an arm, with the controller counters the metrics row does
/// not carry.
#[derive(Clone, Debug, Serialize)]
pub struct ArmRun {
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: RunMetrics,
    pub blob_entries: u64,
    pub sample_requests: u64,
    pub unstuck_events: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ArmSummary {
    pub name: String,
    pub runs: Vec<ArmRun>,
    /// Median/IQR per metric; undefined values are skipped, `n` records how
    /// many runs defined the metric.
    pub stats: BTreeMap<String, Quartiles>,
}

impl ArmSummary {
    fn median(&self, key: &str) -> Option<f64> {
        self.stats.get(key).map(|q| q.median)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub description: String,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub preset: u8,
    pub seeds: Vec<u64>,
    pub arms: Vec<ArmSummary>,
    pub checks: Vec<Check>,
}

fn collect_stats(runs: &[ArmRun]) -> BTreeMap<String, Quartiles> {
    let mut stats = BTreeMap::new();
    let mut put = |key: &str, values: Vec<f64>| {
        if let Some(q) = quartiles(&values) {
            stats.insert(key.to_string(), q);
        }
    };
    put("coverage", runs.iter().map(|r| r.metrics.coverage).collect());
    put("recall", runs.iter().map(|r| r.metrics.recall).collect());
    put("precision", runs.iter().map(|r| r.metrics.precision).collect());
    put("f1", runs.iter().map(|r| r.metrics.f1).collect());
    put("accuracy", runs.iter().map(|r| r.metrics.accuracy).collect());
    put("detected", runs.iter().map(|r| f64::from(r.metrics.detected)).collect());
    put("redundancy", runs.iter().map(|r| r.metrics.redundancy).collect());
    put("blocked_frac", runs.iter().map(|r| r.metrics.blocked_fraction).collect());
    put("total_samples", runs.iter().map(|r| r.metrics.total_samples as f64).collect());
    put("unique_cells", runs.iter().map(|r| r.metrics.unique_cells as f64).collect());
    put("blob_entries", runs.iter().map(|r| r.blob_entries as f64).collect());
    put(
        "entropy_nats",
        runs.iter().filter_map(|r| r.metrics.entropy_nats).collect(),
    );
    put(
        "time_to_stop_s",
        runs.iter().filter_map(|r| r.metrics.time_to_stop_s).collect(),
    );
    put(
        "mae_m",
        runs.iter().filter_map(|r| r.metrics.pf_stats.map(|s| s.mae)).collect(),
    );
    put(
        "rmse_m",
        runs.iter().filter_map(|r| r.metrics.pf_stats.map(|s| s.rmse)).collect(),
    );
    put(
        "max_err_m",
        runs.iter().filter_map(|r| r.metrics.pf_stats.map(|s| s.max)).collect(),
    );
    stats
}

type ArmSpec = (&'static str, fn(&mut RunConfig));

fn preset_arms(preset: u8) -> Option<Vec<ArmSpec>> {
    match preset {
        1 => Some(vec![
            ("n1", |c: &mut RunConfig| c.team_size = 1),
            ("n3", |c: &mut RunConfig| c.team_size = 3),
            ("n5", |c: &mut RunConfig| c.team_size = 5),
        ]),
        2 => Some(vec![
            ("pf_on", |c: &mut RunConfig| {
                c.team_size = 5;
                c.pf_enabled = true;
            }),
            ("pf_off", |c: &mut RunConfig| {
                c.team_size = 5;
                c.pf_enabled = false;
            }),
        ]),
        3 => Some(vec![
            // ON applies the full coordination stack: blocked zones plus the
            // pheromone no-revisit steering penalty
            ("coord_on", |c: &mut RunConfig| {
                c.team_size = 5;
                c.coordination_enabled = true;
                if c.ctrl.pheromone_gain <= 0.0 {
                    c.ctrl.pheromone_gain = 0.4;
                }
            }),
            // OFF is the raw baseline: no blocking and no long-term
            // repulsion of any kind (block messages ignored, private
            // forbidden discs exert no steering)
            ("coord_off", |c: &mut RunConfig| {
                c.team_size = 5;
                c.coordination_enabled = false;
                c.ctrl.pheromone_gain = 0.0;
                c.ctrl.repulsion_gain = 0.0;
            }),
        ]),
        _ => None,
    }
}

/// Run one preset's arm matrix over the seeds. With `out_dir` set, per-run
/// artifacts land in `<out>/<arm>/seed_<k>/` next to `report.csv` and
/// `report_summary.json`.
pub fn run_experiment(
    preset: u8,
    seeds: &[u64],
    base: &RunConfig,
    out_dir: Option<&Path>,
) -> Result<ExperimentReport, SimError> {
    let arms = preset_arms(preset).ok_or_else(|| {
        SimError::Config(crate::config::ConfigError::Invalid(format!(
            "unknown experiment preset {preset} (expected 1, 2, or 3)"
        )))
    })?;
    if seeds.is_empty() {
        return Err(SimError::Config(crate::config::ConfigError::Invalid(
            "experiment needs at least one seed".into(),
        )));
    }

    let mut summaries = Vec::new();
    for (name, mutate) in &arms {
        let mut runs = Vec::new();
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.out_dir = out_dir.map(|d| d.join(name).join(format!("seed_{seed}")));
            mutate(&mut cfg);
            let out: RunOutput = run(&cfg)?;
            runs.push(ArmRun {
                seed,
                metrics: out.metrics,
                blob_entries: out.blob_entries,
                sample_requests: out.sample_requests_sent,
                unstuck_events: out.unstuck_events,
            });
        }
        let stats = collect_stats(&runs);
        summaries.push(ArmSummary { name: name.to_string(), runs, stats });
    }

    let checks = direction_checks(preset, &summaries);
    let report = ExperimentReport { preset, seeds: seeds.to_vec(), arms: summaries, checks };

    if let Some(dir) = out_dir {
        write_report(&report, dir)?;
    }
    Ok(report)
}

fn arm<'a>(summaries: &'a [ArmSummary], name: &str) -> &'a ArmSummary {
    summaries.iter().find(|a| a.name == name).expect("arm exists")
}

fn direction_checks(preset: u8, arms: &[ArmSummary]) -> Vec<Check> {
    let mut checks = Vec::new();
    let mut check = |name: &str, description: String, pass: bool| {
        checks.push(Check { name: name.to_string(), description, pass });
    };
    match preset {
        1 => {
            let (n1, n3, n5) = (arm(arms, "n1"), arm(arms, "n3"), arm(arms, "n5"));
            let cov = (
                n1.median("coverage").unwrap_or(0.0),
                n3.median("coverage").unwrap_or(0.0),
                n5.median("coverage").unwrap_or(0.0),
            );
            check(
                "h1a_coverage",
                format!("median coverage increases with team size: {:.3} < {:.3} < {:.3}", cov.0, cov.1, cov.2),
                cov.0 < cov.1 && cov.1 < cov.2,
            );
            let rec = (
                n1.median("recall").unwrap_or(0.0),
                n3.median("recall").unwrap_or(0.0),
                n5.median("recall").unwrap_or(0.0),
            );
            check(
                "h1a_recall",
                format!("median blob recall increases with team size: {:.3} < {:.3} < {:.3}", rec.0, rec.1, rec.2),
                rec.0 < rec.1 && rec.1 < rec.2,
            );
            let det = (n1.median("detected").unwrap_or(0.0), n5.median("detected").unwrap_or(0.0));
            check(
                "h1a_detected",
                format!("median blobs detected at n5 >= n1: {:.1} >= {:.1}", det.1, det.0),
                det.1 >= det.0,
            );
            // full-overlap baseline: five robots sampling like the single
            // robot with zero new cells
            let u1 = n1.median("unique_cells").unwrap_or(0.0);
            let s1 = n1.median("total_samples").unwrap_or(0.0);
            let baseline = if s1 > 0.0 { 1.0 - u1 / (5.0 * s1) } else { 1.0 };
            let red5 = n5.median("redundancy").unwrap_or(1.0);
            check(
                "h1b_redundancy",
                format!("median n5 redundancy {red5:.3} below full-overlap baseline {baseline:.3}"),
                red5 < baseline,
            );
        }
        2 => {
            let (on, off) = (arm(arms, "pf_on"), arm(arms, "pf_off"));
            let on_blob = on.median("blob_entries").unwrap_or(0.0);
            let off_blob_max = off
                .runs
                .iter()
                .map(|r| r.blob_entries)
                .max()
                .unwrap_or(0);
            check(
                "h2a_blob_engagement",
                format!("localization-on robots enter blobs (median {on_blob:.1}), localization-off never do ({off_blob_max})"),
                on_blob > 0.0 && off_blob_max == 0,
            );
            let off_ok = off
                .runs
                .iter()
                .all(|r| r.metrics.total_samples == 0 && r.metrics.coverage == 0.0);
            let on_ok = on
                .runs
                .iter()
                .all(|r| r.metrics.total_samples > 0 && r.metrics.coverage > 0.0);
            check(
                "h2b_sampling",
                "localization-on runs sample and cover; localization-off runs log nothing".into(),
                off_ok && on_ok,
            );
        }
        3 => {
            let (on, off) = (arm(arms, "coord_on"), arm(arms, "coord_off"));
            let (red_on, red_off) = (
                on.median("redundancy").unwrap_or(1.0),
                off.median("redundancy").unwrap_or(0.0),
            );
            check(
                "h3a_redundancy",
                format!("median redundancy on {red_on:.3} < off {red_off:.3}"),
                red_on < red_off,
            );
            let (rec_on, rec_off) = (
                on.median("recall").unwrap_or(0.0),
                off.median("recall").unwrap_or(1.0),
            );
            check(
                "h3b_recall",
                format!("median recall on {rec_on:.3} > off {rec_off:.3}"),
                rec_on > rec_off,
            );
            let (det_on, det_off) = (
                on.median("detected").unwrap_or(0.0),
                off.median("detected").unwrap_or(4.0),
            );
            check(
                "h3b_detected",
                format!("median detected on {det_on:.1} >= off {det_off:.1}"),
                det_on >= det_off,
            );
            let off_never_blocks = off.runs.iter().all(|r| r.metrics.blocked_fraction == 0.0);
            check(
                "h3_off_never_blocks",
                "blocked fraction is zero in every coordination-off run".into(),
                off_never_blocks,
            );
        }
        _ => {}
    }
    checks
}

impl ExperimentReport {
    /// Compact human-readable rendering for the CLI.
    pub fn render_text(&self) -> String {
        let mut out = format!("experiment preset {} over {} seeds\n", self.preset, self.seeds.len());
        for arm in &self.arms {
            out.push_str(&format!("arm {}:\n", arm.name));
            for key in [
                "coverage",
                "recall",
                "precision",
                "f1",
                "detected",
                "redundancy",
                "entropy_nats",
                "blocked_frac",
                "time_to_stop_s",
                "mae_m",
                "rmse_m",
            ] {
                if let Some(q) = arm.stats.get(key) {
                    out.push_str(&format!(
                        "  {key}: median {:.4} (IQR {:.4}..{:.4}, n={})\n",
                        q.median, q.q1, q.q3, q.n
                    ));
                }
            }
        }
        for check in &self.checks {
            out.push_str(&format!(
                "{} {}: {}\n",
                if check.pass { "PASS" } else { "FAIL" },
                check.name,
                check.description
            ));
        }
        out
    }

    /// All per-run metric rows with an arm column, as one CSV.
    pub fn rows_csv(&self) -> String {
        let mut out = format!("arm,{}\n", RunMetrics::csv_header());
        for arm in &self.arms {
            for run in &arm.runs {
                out.push_str(&format!("{},{}\n", arm.name, run.metrics.to_csv_row()));
            }
        }
        out
    }
}

fn write_report(report: &ExperimentReport, dir: &Path) -> Result<(), SimError> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::Artifact {
        path: dir.display().to_string(),
        source: e,
    })?;
    let csv_path = dir.join("report.csv");
    std::fs::write(&csv_path, report.rows_csv()).map_err(|e| SimError::Artifact {
        path: csv_path.display().to_string(),
        source: e,
    })?;
    let json_path = dir.join("report_summary.json");
    let json = serde_json::to_string_pretty(report).expect("serializable");
    std::fs::write(&json_path, json).map_err(|e| SimError::Artifact {
        path: json_path.display().to_string(),
        source: e,
    })?;
    Ok(())
}

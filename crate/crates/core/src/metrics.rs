//! Run evaluation: coverage, blob recall/precision/F1/accuracy, detection,
//! redundancy, visit entropy, and localization error statistics.
//!
//! Coverage metrics treat blob cells as positives: recall is the fraction of
//! blob cells ever visited, precision the fraction of visited cells that are
//! blob cells, and accuracy counts unvisited background cells as true
//! negatives. Redundancy is `1 - unique_visited / total_samples`, the
//! fraction of sampling effort spent re-visiting known cells. Entropy is
//! Shannon entropy of the normalized visit distribution, in nats.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Weather;
use crate::field::RichnessField;
use crate::grid::Grid;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("unique cells ({unique}) cannot exceed total samples ({total})")]
    UniqueExceedsTotal { unique: u64, total: u64 },
}

/// Coverage-and-detection slice of a run's metrics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageMetrics {
    /// Fraction of all grid cells ever visited.
    pub coverage: f64,
    /// Fraction of blob cells visited.
    pub recall: f64,
    /// Fraction of visited cells that are blob cells (0 when nothing visited).
    pub precision: f64,
    /// Harmonic mean of precision and recall (0 when both are 0).
    pub f1: f64,
    /// (TP + TN) / all cells, unvisited background counting as TN.
    pub accuracy: f64,
    /// Blobs with at least one visited cell, out of 4.
    pub detected: u32,
}

/// F1 from a (precision, recall) pair; 0 when the pair sums to 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall <= 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Score the visited mask against the field's blob mask.
pub fn coverage_metrics(visited: &Grid<bool>, field: &RichnessField) -> CoverageMetrics {
    let spec = &field.spec;
    let total_cells = (spec.nx * spec.ny) as f64;
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    let mut tn = 0u64;
    let mut blob_hit = [false; 4];
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let blob = *field.blob_mask.at(i, j);
            let vis = *visited.at(i, j);
            match (blob, vis) {
                (true, true) => {
                    tp += 1;
                    blob_hit[field.nearest_blob(i, j)] = true;
                }
                (true, false) => fn_ += 1,
                (false, true) => fp += 1,
                (false, false) => tn += 1,
            }
        }
    }
    let visited_count = tp + fp;
    let blob_count = tp + fn_;
    let coverage = visited_count as f64 / total_cells;
    let recall = if blob_count > 0 { tp as f64 / blob_count as f64 } else { 0.0 };
    let precision = if visited_count > 0 { tp as f64 / visited_count as f64 } else { 0.0 };
    CoverageMetrics {
        coverage,
        recall,
        precision,
        f1: f1_score(precision, recall),
        accuracy: (tp + tn) as f64 / total_cells,
        detected: blob_hit.iter().filter(|&&h| h).count() as u32,
    }
}

/// Fraction of samples spent on already-visited cells.
pub fn redundancy(total_samples: u64, unique_cells: u64) -> Result<f64, MetricsError> {
    if unique_cells > total_samples {
        return Err(MetricsError::UniqueExceedsTotal { unique: unique_cells, total: total_samples });
    }
    if total_samples == 0 {
        return Ok(0.0);
    }
    Ok(1.0 - unique_cells as f64 / total_samples as f64)
}

/// Shannon entropy of the normalized visit distribution, in nats; None when
/// no visits were recorded.
pub fn visit_entropy(counts: &Grid<u32>) -> Option<f64> {
    let total: u64 = counts.cells().map(|&c| u64::from(c)).sum();
    if total == 0 {
        return None;
    }
    let total = total as f64;
    let mut h = 0.0;
    for &c in counts.cells() {
        if c > 0 {
            let p = f64::from(c) / total;
            h -= p * p.ln();
        }
    }
    Some(h)
}

/// MAE / RMSE / max over an error series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mae: f64,
    pub rmse: f64,
    pub max: f64,
}

/// Aggregate a localization-error series; None when the series is empty
/// (localization-off runs have no defined error).
pub fn pf_error_stats(errors: &[f64]) -> Option<ErrorStats> {
    if errors.is_empty() {
        return None;
    }
    let n = errors.len() as f64;
    let mae = errors.iter().sum::<f64>() / n;
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let max = errors.iter().cloned().fold(0.0, f64::max);
    Some(ErrorStats { mae, rmse, max })
}

/// One run's full metrics row.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub team_size: u32,
    pub pf_enabled: bool,
    pub coordination: bool,
    pub weather: Weather,
    pub coverage: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub detected: u32,
    /// Seconds until STOP_ALL; None when the horizon expired first.
    pub time_to_stop_s: Option<f64>,
    pub redundancy: f64,
    /// None when no visits were recorded.
    pub entropy_nats: Option<f64>,
    pub blocked_fraction: f64,
    /// Pooled over all robots; None for localization-off runs.
    pub pf_stats: Option<ErrorStats>,
    pub total_samples: u64,
    pub unique_cells: u64,
}

fn opt(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.6}")).unwrap_or_default()
}

impl RunMetrics {
    pub fn csv_header() -> &'static str {
        "seed,team_size,pf_enabled,coordination,weather,coverage,recall,precision,f1,accuracy,\
         detected,time_to_stop_s,redundancy,entropy_nats,blocked_frac,mae_m,rmse_m,max_err_m"
    }

    /// Render the metrics row; undefined values become empty fields.
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{:.6},{},{:.6},{},{},{}",
            self.seed,
            self.team_size,
            self.pf_enabled,
            self.coordination,
            self.weather,
            self.coverage,
            self.recall,
            self.precision,
            self.f1,
            self.accuracy,
            self.detected,
            opt(self.time_to_stop_s),
            self.redundancy,
            opt(self.entropy_nats),
            self.blocked_fraction,
            opt(self.pf_stats.map(|s| s.mae)),
            opt(self.pf_stats.map(|s| s.rmse)),
            opt(self.pf_stats.map(|s| s.max)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{build_field, BlobParams};
    use crate::grid::GridSpec;

    fn reference_field() -> RichnessField {
        build_field(GridSpec::standard(), BlobParams::default(), 0).unwrap()
    }

    #[test]
    fn f1_closed_form_pairs() {
        // precision/recall pairs with known F1 values
        assert!((f1_score(0.170, 0.200) - 0.184).abs() <= 0.001);
        assert!((f1_score(0.344, 0.467) - 0.396).abs() <= 0.001);
        assert!((f1_score(0.261, 0.656) - 0.373).abs() <= 0.001);
        assert!((f1_score(0.167, 0.339) - 0.223).abs() <= 0.001);
        assert_eq!(f1_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn perfect_visited_mask_scores_ones() {
        let field = reference_field();
        let visited = field.blob_mask.clone();
        let m = coverage_metrics(&visited, &field);
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.f1, 1.0);
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.detected, 4);
        assert!((m.coverage - 180.0 / 2500.0).abs() < 1e-12);
    }

    #[test]
    fn empty_visited_mask_scores_zeros() {
        let field = reference_field();
        let visited = Grid::filled(50, 50, false);
        let m = coverage_metrics(&visited, &field);
        assert_eq!(m.coverage, 0.0);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.f1, 0.0);
        assert_eq!(m.detected, 0);
        // everything unvisited: background cells all count as true negatives
        assert!((m.accuracy - (2500.0 - 180.0) / 2500.0).abs() < 1e-12);
    }

    #[test]
    fn integer_consistency_of_precision_and_recall() {
        let field = reference_field();
        let mut visited = Grid::filled(50, 50, false);
        // visit an arbitrary mix of blob and background cells
        for j in (0..50).step_by(3) {
            for i in (0..50).step_by(4) {
                *visited.at_mut(i, j) = true;
            }
        }
        let m = coverage_metrics(&visited, &field);
        let v_count = visited.cells().filter(|&&v| v).count() as f64;
        let tp_from_precision = m.precision * v_count;
        let tp_from_recall = m.recall * 180.0;
        assert!((tp_from_precision - tp_from_recall).abs() < 1e-9);
        assert!((tp_from_precision - tp_from_precision.round()).abs() < 1e-9);
    }

    #[test]
    fn detected_counts_blobs_with_any_visited_cell() {
        let field = reference_field();
        let mut visited = Grid::filled(50, 50, false);
        let peaks = field.blob_peak_cells();
        *visited.at_mut(peaks[0].0, peaks[0].1) = true;
        *visited.at_mut(peaks[2].0, peaks[2].1) = true;
        let m = coverage_metrics(&visited, &field);
        assert_eq!(m.detected, 2);
    }

    #[test]
    fn redundancy_examples() {
        assert_eq!(redundancy(100, 100).unwrap(), 0.0);
        assert_eq!(redundancy(100, 50).unwrap(), 0.5);
        assert_eq!(redundancy(0, 0).unwrap(), 0.0);
        assert!(matches!(
            redundancy(10, 20),
            Err(MetricsError::UniqueExceedsTotal { .. })
        ));
    }

    #[test]
    fn redundancy_monotone_in_total() {
        let mut last = 0.0;
        for total in 50..200 {
            let r = redundancy(total, 50).unwrap();
            assert!(r >= last);
            last = r;
        }
    }

    #[test]
    fn entropy_examples() {
        let mut counts = Grid::filled(50, 50, 0u32);
        assert_eq!(visit_entropy(&counts), None);

        *counts.at_mut(3, 3) = 17;
        assert_eq!(visit_entropy(&counts), Some(0.0));

        let mut two = Grid::filled(50, 50, 0u32);
        *two.at_mut(0, 0) = 5;
        *two.at_mut(1, 0) = 5;
        assert!((visit_entropy(&two).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);

        let uniform = Grid::filled(50, 50, 1u32);
        assert!((visit_entropy(&uniform).unwrap() - 2500.0f64.ln()).abs() < 1e-12);
        assert!((2500.0f64.ln() - 7.824).abs() < 1e-3);
    }

    #[test]
    fn error_stats_examples() {
        let s = pf_error_stats(&[0.1, 0.1, 0.1]).unwrap();
        assert!((s.mae - 0.1).abs() < 1e-12);
        assert!((s.rmse - 0.1).abs() < 1e-12);
        assert!((s.max - 0.1).abs() < 1e-12);

        let s = pf_error_stats(&[0.0, 0.3]).unwrap();
        assert!((s.mae - 0.15).abs() < 1e-12);
        assert!((s.rmse - (0.09f64 / 2.0).sqrt()).abs() < 1e-12);
        assert!((s.rmse - 0.2121).abs() < 1e-4);
        assert_eq!(s.max, 0.3);

        assert_eq!(pf_error_stats(&[]), None);
    }

    #[test]
    fn csv_row_renders_undefined_as_empty() {
        let m = RunMetrics {
            seed: 3,
            team_size: 5,
            pf_enabled: false,
            coordination: true,
            weather: Weather::Clear,
            coverage: 0.0,
            recall: 0.0,
            precision: 0.0,
            f1: 0.0,
            accuracy: 0.9,
            detected: 0,
            time_to_stop_s: None,
            redundancy: 0.0,
            entropy_nats: None,
            blocked_fraction: 0.0,
            pf_stats: None,
            total_samples: 0,
            unique_cells: 0,
        };
        let row = m.to_csv_row();
        assert!(row.contains(",,"), "undefined fields render empty: {row}");
        assert_eq!(row.split(',').count(), RunMetrics::csv_header().split(',').count());
    }
}

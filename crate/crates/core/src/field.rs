//! The hidden richness field: four Gaussian bumps on the supervisor grid.
//!
//! The field is built once per run as the sum of four Gaussian blobs
//! evaluated at integer cell coordinates, perturbed with a small uniform
//! noise, and normalized so the hottest cell is exactly 1. Robots never read
//! it directly; the supervisor answers point queries with a noisy value and a
//! central-difference gradient, returning zeros inside blocked cells.
//!
//! A cell belongs to the blob mask when the un-noised mixture reaches half of
//! its own maximum. With the default centers and width the mask covers
//! exactly 180 of the 2500 cells, which fixes the denominators of every
//! recall/precision figure downstream.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, GridSpec};
use crate::rng::{derive_rng, Stream};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("blob sigma must be positive, got {0}")]
    BadSigma(f64),
    #[error("blob center ({0}, {1}) lies outside the grid")]
    CenterOutOfBounds(f64, f64),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

/// Parameters of the four-bump mixture, in grid-cell coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobParams {
    /// Centers (mu_x, mu_y) of the four bumps.
    pub centers: [(f64, f64); 4],
    /// Shared width in grid cells.
    pub sigma: f64,
    /// Amplitude of the uniform construction noise, applied pre-normalization.
    pub noise_amp: f64,
}

impl Default for BlobParams {
    fn default() -> Self {
        // Reference layout: four bumps at staggered radii from the arena
        // center (1.6 to 4.6 m), so no single sweep finds them all, with a
        // width inside the window where the half-max mask is exactly 180
        // cells.
        BlobParams {
            centers: [(20.0, 18.0), (35.0, 30.0), (10.0, 38.0), (42.0, 10.0)],
            sigma: 3.2,
            noise_amp: 0.02,
        }
    }
}

/// The built field: normalized values, the blob-membership mask, and the
/// parameters it was built from. Immutable after construction.
#[derive(Clone, Debug)]
pub struct RichnessField {
    pub spec: GridSpec,
    /// Normalized noisy values in [0, 1]; the maximum cell is exactly 1.
    pub values: Grid<f64>,
    /// True where the un-noised mixture reaches half of its own max.
    pub blob_mask: Grid<bool>,
    pub blobs: BlobParams,
    pub blob_cell_count: usize,
}

fn gaussian_mixture(blobs: &BlobParams, i: usize, j: usize) -> f64 {
    let two_sigma_sq = 2.0 * blobs.sigma * blobs.sigma;
    blobs
        .centers
        .iter()
        .map(|&(cx, cy)| {
            let di = i as f64 - cx;
            let dj = j as f64 - cy;
            (-(di * di + dj * dj) / two_sigma_sq).exp()
        })
        .sum()
}

/// Build the field for `(spec, blobs, seed)`. Pure: identical inputs yield a
/// bitwise-identical field.
pub fn build_field(spec: GridSpec, blobs: BlobParams, rng_seed: u64) -> Result<RichnessField, FieldError> {
    spec.validate()?;
    if blobs.sigma <= 0.0 {
        return Err(FieldError::BadSigma(blobs.sigma));
    }
    for &(cx, cy) in &blobs.centers {
        if !(0.0..=(spec.nx - 1) as f64).contains(&cx) || !(0.0..=(spec.ny - 1) as f64).contains(&cy) {
            return Err(FieldError::CenterOutOfBounds(cx, cy));
        }
    }

    let mut base = Grid::filled(spec.nx, spec.ny, 0.0f64);
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            *base.at_mut(i, j) = gaussian_mixture(&blobs, i, j);
        }
    }
    let base_max = base.cells().cloned().fold(f64::MIN, f64::max);

    let mut blob_mask = Grid::filled(spec.nx, spec.ny, false);
    let mut blob_cell_count = 0;
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let hit = *base.at(i, j) >= 0.5 * base_max;
            *blob_mask.at_mut(i, j) = hit;
            blob_cell_count += usize::from(hit);
        }
    }

    let mut rng = derive_rng(rng_seed, Stream::FieldNoise);
    let mut values = base;
    for cell in values.cells_mut() {
        *cell += blobs.noise_amp * rng.random::<f64>();
    }
    let max = values.cells().cloned().fold(f64::MIN, f64::max);
    for cell in values.cells_mut() {
        *cell /= max;
    }

    Ok(RichnessField { spec, values, blob_mask, blobs, blob_cell_count })
}

impl RichnessField {
    /// Central-difference gradient at cell `(i, j)` with neighbor indices
    /// clamped into range at the borders, per meter.
    pub fn gradient_at(&self, i: usize, j: usize) -> (f64, f64) {
        let spec = &self.spec;
        let ip = (i + 1).min(spec.nx - 1);
        let im = i.saturating_sub(1);
        let jp = (j + 1).min(spec.ny - 1);
        let jm = j.saturating_sub(1);
        let gx = (self.values.at(ip, j) - self.values.at(im, j)) / (2.0 * spec.dx());
        let gy = (self.values.at(i, jp) - self.values.at(i, jm)) / (2.0 * spec.dy());
        (gx, gy)
    }

    /// Answer a point query: the noisy cell value (clamped to [0, 1]) and the
    /// cell gradient. Blocked cells report zero richness and zero gradient.
    pub fn sample(
        &self,
        x: f64,
        y: f64,
        blocked: &Grid<bool>,
        noise_sd: f64,
        rng: &mut ChaCha8Rng,
    ) -> (f64, (f64, f64)) {
        debug_assert_eq!(blocked.nx(), self.spec.nx);
        debug_assert_eq!(blocked.ny(), self.spec.ny);
        let (i, j) = self.spec.world_to_grid(x, y);
        if *blocked.at(i, j) {
            return (0.0, (0.0, 0.0));
        }
        let mut value = *self.values.at(i, j);
        if noise_sd > 0.0 {
            let noise = Normal::new(0.0, noise_sd).expect("finite sd").sample(rng);
            value = (value + noise).clamp(0.0, 1.0);
        }
        (value, self.gradient_at(i, j))
    }

    /// Index of the blob whose center is nearest to cell `(i, j)`.
    pub fn nearest_blob(&self, i: usize, j: usize) -> usize {
        let mut best = 0;
        let mut best_d = f64::MAX;
        for (k, &(cx, cy)) in self.blobs.centers.iter().enumerate() {
            let d = (i as f64 - cx).powi(2) + (j as f64 - cy).powi(2);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }

    /// Cell indices of each blob's peak (nearest cell to the center).
    pub fn blob_peak_cells(&self) -> [(usize, usize); 4] {
        let mut peaks = [(0usize, 0usize); 4];
        for (k, &(cx, cy)) in self.blobs.centers.iter().enumerate() {
            let i = (cx.round().max(0.0) as usize).min(self.spec.nx - 1);
            let j = (cy.round().max(0.0) as usize).min(self.spec.ny - 1);
            peaks[k] = (i, j);
        }
        peaks
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_blocks(spec: &GridSpec) -> Grid<bool> {
        Grid::filled(spec.nx, spec.ny, false)
    }

    #[test]
    fn reference_field_has_180_blob_cells() {
        let f = build_field(GridSpec::standard(), BlobParams::default(), 0).unwrap();
        assert_eq!(f.blob_cell_count, 180);
        let frac = f.blob_cell_count as f64 / 2500.0;
        assert!((frac - 0.072).abs() < 1e-12);
    }

    #[test]
    fn normalization_forces_max_one() {
        let f = build_field(GridSpec::standard(), BlobParams::default(), 3).unwrap();
        let max = f.values.cells().cloned().fold(f64::MIN, f64::max);
        assert_eq!(max, 1.0);
        assert!(f.values.cells().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn build_is_deterministic_in_seed() {
        let a = build_field(GridSpec::standard(), BlobParams::default(), 11).unwrap();
        let b = build_field(GridSpec::standard(), BlobParams::default(), 11).unwrap();
        assert_eq!(a.values, b.values);
        let c = build_field(GridSpec::standard(), BlobParams::default(), 12).unwrap();
        assert_ne!(a.values, c.values);
        // the mask ignores construction noise entirely
        assert_eq!(a.blob_mask, c.blob_mask);
    }

    #[test]
    fn rejects_bad_params() {
        let spec = GridSpec::standard();
        let mut blobs = BlobParams::default();
        blobs.sigma = 0.0;
        assert!(matches!(build_field(spec, blobs, 0), Err(FieldError::BadSigma(_))));
        let mut blobs = BlobParams::default();
        blobs.centers[2] = (55.0, 10.0);
        assert!(matches!(build_field(spec, blobs, 0), Err(FieldError::CenterOutOfBounds(..))));
    }

    #[test]
    fn constant_field_has_zero_gradient() {
        let mut f = build_field(GridSpec::standard(), BlobParams::default(), 0).unwrap();
        for cell in f.values.cells_mut() {
            *cell = 0.7;
        }
        for (i, j) in [(25, 25), (1, 1), (48, 30)] {
            assert_eq!(f.gradient_at(i, j), (0.0, 0.0));
        }
    }

    #[test]
    fn linear_ramp_gradient_is_unit_slope() {
        // values[j][i] = i * dx gives dR/dx = 1.0 per meter in the interior
        let spec = GridSpec::standard();
        let mut f = build_field(spec, BlobParams::default(), 0).unwrap();
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                *f.values.at_mut(i, j) = i as f64 * spec.dx();
            }
        }
        let mut rng = derive_rng(0, Stream::SampleNoise(0));
        let (_, grad) = f.sample(0.03, -0.11, &no_blocks(&spec), 0.0, &mut rng);
        assert!((grad.0 - 1.0).abs() < 1e-12, "gx = {}", grad.0);
        assert_eq!(grad.1, 0.0);
    }

    #[test]
    fn blocked_cell_samples_zero() {
        let spec = GridSpec::standard();
        let f = build_field(spec, BlobParams::default(), 0).unwrap();
        let mut blocked = no_blocks(&spec);
        let (i, j) = spec.world_to_grid(-2.5, -2.5);
        *blocked.at_mut(i, j) = true;
        let mut rng = derive_rng(0, Stream::SampleNoise(0));
        assert_eq!(f.sample(-2.5, -2.5, &blocked, 0.05, &mut rng), (0.0, (0.0, 0.0)));
    }

    #[test]
    fn noiseless_sample_returns_stored_value() {
        let spec = GridSpec::standard();
        let f = build_field(spec, BlobParams::default(), 5).unwrap();
        let mut rng = derive_rng(5, Stream::SampleNoise(0));
        let (v, _) = f.sample(1.23, -3.3, &no_blocks(&spec), 0.0, &mut rng);
        let (i, j) = spec.world_to_grid(1.23, -3.3);
        assert_eq!(v, *f.values.at(i, j));
    }

    #[test]
    fn gradient_matches_brute_force_oracle() {
        // independent re-evaluation of the clamped central differences
        let spec = GridSpec::standard();
        let f = build_field(spec, BlobParams::default(), 9).unwrap();
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let v = |ii: i64, jj: i64| -> f64 {
                    let ii = ii.clamp(0, spec.nx as i64 - 1) as usize;
                    let jj = jj.clamp(0, spec.ny as i64 - 1) as usize;
                    *f.values.at(ii, jj)
                };
                let gx = (v(i as i64 + 1, j as i64) - v(i as i64 - 1, j as i64)) / (2.0 * spec.dx());
                let gy = (v(i as i64, j as i64 + 1) - v(i as i64, j as i64 - 1)) / (2.0 * spec.dy());
                assert_eq!(f.gradient_at(i, j), (gx, gy), "cell ({i},{j})");
            }
        }
    }
}

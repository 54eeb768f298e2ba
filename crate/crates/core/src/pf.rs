//! Per-robot Monte Carlo localization.
//!
//! 150 weighted pose hypotheses track (x, y, theta) from odometry deltas,
//! intermittent GPS fixes, and heading measurements. The filter initializes
//! on the first valid GPS fix, predicts with motion noise proportional to the
//! commanded displacement (plus small floors so a stationary filter keeps
//! tracking), reweights with Gaussian position/heading likelihoods, and runs
//! low-variance systematic resampling whenever the effective particle count
//! falls below `alpha * N`.
//!
//! The heading estimate is a weighted circular mean (atan2 of weighted
//! sin/cos sums): a naive weighted average of angles breaks for clouds
//! straddling the +-pi wrap.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::{normalize_angle, Pose};

#[derive(Debug, Error)]
pub enum PfError {
    #[error("particle filter is already initialized")]
    AlreadyInitialized,
    #[error("particle filter must be initialized first")]
    NotInitialized,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PfConfig {
    pub n_particles: usize,
    /// Resample when n_eff < alpha * n_particles.
    pub alpha: f64,
    pub gps_sd: f64,
    pub heading_sd: f64,
    /// Process noise sigma_d = motion_d_gain * |d| + motion_d_floor.
    pub motion_d_gain: f64,
    pub motion_d_floor: f64,
    /// Process noise sigma_theta = motion_theta_gain * |dtheta| + floor.
    pub motion_theta_gain: f64,
    pub motion_theta_floor: f64,
    pub init_pos_sd: f64,
    pub init_heading_sd: f64,
}

impl Default for PfConfig {
    fn default() -> Self {
        PfConfig {
            n_particles: 150,
            alpha: 0.95,
            gps_sd: 0.02,
            heading_sd: 0.05,
            motion_d_gain: 0.1,
            motion_d_floor: 0.001,
            motion_theta_gain: 0.1,
            motion_theta_floor: 0.002,
            init_pos_sd: 0.1,
            init_heading_sd: 0.1,
        }
    }
}

/// The weighted hypothesis cloud.
#[derive(Clone, Debug)]
pub struct ParticleSet {
    pub poses: Vec<Pose>,
    pub weights: Vec<f64>,
    pub initialized: bool,
}

impl ParticleSet {
    fn empty(n: usize) -> Self {
        ParticleSet { poses: vec![Pose::default(); n], weights: vec![1.0 / n as f64; n], initialized: false }
    }

    pub fn n_eff(&self) -> f64 {
        let sum_sq: f64 = self.weights.iter().map(|w| w * w).sum();
        if sum_sq > 0.0 {
            1.0 / sum_sq
        } else {
            0.0
        }
    }
}

/// Weighted-mean pose estimate plus the effective particle count it was
/// computed from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub n_eff: f64,
}

#[derive(Clone, Debug)]
pub struct ParticleFilter {
    pub cfg: PfConfig,
    pub particles: ParticleSet,
    /// Times the weights underflowed to zero and were reset to uniform;
    /// exposed in telemetry as a divergence signal.
    pub underflow_count: u64,
    pub resample_count: u64,
}

impl ParticleFilter {
    pub fn new(cfg: PfConfig) -> Self {
        assert!(cfg.n_particles >= 2, "need at least two particles");
        assert!(cfg.alpha > 0.0 && cfg.alpha <= 1.0, "alpha must be in (0, 1]");
        let n = cfg.n_particles;
        ParticleFilter { cfg, particles: ParticleSet::empty(n), underflow_count: 0, resample_count: 0 }
    }

    pub fn is_initialized(&self) -> bool {
        self.particles.initialized
    }

    /// Spread the cloud in a Gaussian window around the first GPS fix and
    /// heading, with uniform weights.
    pub fn initialize(
        &mut self,
        gps_fix: (f64, f64),
        heading: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), PfError> {
        if self.particles.initialized {
            return Err(PfError::AlreadyInitialized);
        }
        let n = self.cfg.n_particles;
        for pose in &mut self.particles.poses {
            let nx: f64 = StandardNormal.sample(rng);
            let ny: f64 = StandardNormal.sample(rng);
            let nt: f64 = StandardNormal.sample(rng);
            *pose = Pose::new(
                gps_fix.0 + self.cfg.init_pos_sd * nx,
                gps_fix.1 + self.cfg.init_pos_sd * ny,
                heading + self.cfg.init_heading_sd * nt,
            );
        }
        self.particles.weights.fill(1.0 / n as f64);
        self.particles.initialized = true;
        Ok(())
    }

    /// Propagate every particle by the odometry deltas plus process noise.
    /// Weights are untouched.
    pub fn predict(&mut self, d: f64, dtheta: f64, rng: &mut ChaCha8Rng) {
        debug_assert!(self.particles.initialized);
        let sigma_d = self.cfg.motion_d_gain * d.abs() + self.cfg.motion_d_floor;
        let sigma_t = self.cfg.motion_theta_gain * dtheta.abs() + self.cfg.motion_theta_floor;
        for pose in &mut self.particles.poses {
            let nt: f64 = StandardNormal.sample(rng);
            let nx: f64 = StandardNormal.sample(rng);
            let ny: f64 = StandardNormal.sample(rng);
            let theta = normalize_angle(pose.theta + dtheta + sigma_t * nt);
            pose.theta = theta;
            pose.x += d * theta.sin() + sigma_d * nx;
            pose.y += d * theta.cos() + sigma_d * ny;
        }
    }

    /// Reweight with whatever measurements are present, normalize, estimate,
    /// and resample if the cloud has degenerated.
    pub fn update(
        &mut self,
        gps: Option<(f64, f64)>,
        heading: Option<f64>,
        rng: &mut ChaCha8Rng,
    ) -> PoseEstimate {
        debug_assert!(self.particles.initialized);
        let n = self.cfg.n_particles;

        if let Some((gx, gy)) = gps {
            let inv = 1.0 / (2.0 * self.cfg.gps_sd * self.cfg.gps_sd);
            for (pose, w) in self.particles.poses.iter().zip(&mut self.particles.weights) {
                let dx = pose.x - gx;
                let dy = pose.y - gy;
                *w *= (-(dx * dx + dy * dy) * inv).exp();
            }
        }
        if let Some(h) = heading {
            let inv = 1.0 / (2.0 * self.cfg.heading_sd * self.cfg.heading_sd);
            for (pose, w) in self.particles.poses.iter().zip(&mut self.particles.weights) {
                let dt = normalize_angle(pose.theta - h);
                *w *= (-dt * dt * inv).exp();
            }
        }

        let sum: f64 = self.particles.weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            self.particles.weights.fill(1.0 / n as f64);
            self.underflow_count += 1;
        } else {
            for w in &mut self.particles.weights {
                *w /= sum;
            }
        }

        let estimate = self.estimate();
        if estimate.n_eff < self.cfg.alpha * n as f64 {
            self.systematic_resample(rng);
            self.resample_count += 1;
        }
        estimate
    }

    /// Weighted mean position and weighted circular-mean heading.
    pub fn estimate(&self) -> PoseEstimate {
        let mut x = 0.0;
        let mut y = 0.0;
        let mut sin_sum = 0.0;
        let mut cos_sum = 0.0;
        for (pose, w) in self.particles.poses.iter().zip(&self.particles.weights) {
            x += w * pose.x;
            y += w * pose.y;
            sin_sum += w * pose.theta.sin();
            cos_sum += w * pose.theta.cos();
        }
        PoseEstimate { x, y, theta: sin_sum.atan2(cos_sum), n_eff: self.particles.n_eff() }
    }

    /// Low-variance resampling: one uniform offset in [0, 1/N), stride 1/N
    /// over the cumulative weights; weights reset to uniform.
    pub fn systematic_resample(&mut self, rng: &mut ChaCha8Rng) {
        let n = self.cfg.n_particles;
        let offset = rng.random::<f64>() / n as f64;
        let mut new_poses = Vec::with_capacity(n);
        let mut cumulative = self.particles.weights[0];
        let mut idx = 0usize;
        for k in 0..n {
            let point = offset + k as f64 / n as f64;
            while point > cumulative && idx < n - 1 {
                idx += 1;
                cumulative += self.particles.weights[idx];
            }
            new_poses.push(self.particles.poses[idx]);
        }
        self.particles.poses = new_poses;
        self.particles.weights.fill(1.0 / n as f64);
    }
}

/// Instantaneous localization error: planar Euclidean distance between the
/// true pose and the estimate.
pub fn localisation_error(true_pose: &Pose, estimate: &PoseEstimate) -> f64 {
    ((true_pose.x - estimate.x).powi(2) + (true_pose.y - estimate.y).powi(2)).sqrt()
}

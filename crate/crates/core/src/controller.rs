//! Per-robot behavior controller: EXPLORE / BLOB / RECOVER plus an emergency
//! unstuck maneuver.
//!
//! EXPLORE is a biased random walk: a zero-mean oscillation term redrawn
//! every `osc_period`, layered with obstacle and corner avoidance from the 16
//! IR readings, soft wall recentering, a radial-band dispersion bias that
//! spreads the team over annuli of different radii, and repulsion from
//! private forbidden discs and supervisor-declared blocks.
//!
//! BLOB engages when a sample clears `blob_enter_val`: the robot tracks the
//! bearing to the best point seen this episode with bounded proportional
//! control, switches to climbing the supervisor's gradient once it is close,
//! and declares a bullseye (at most once per episode) when the best value is
//! high and the local gradient is flat. Consecutive samples below
//! `blob_exit_val` abandon the blob, append its best point to the private
//! forbidden list, and enter RECOVER, which drives roughly straight until the
//! robot has put `recover_min_dist` behind it or times out.
//!
//! The unstuck maneuver preempts everything when the estimated pose has not
//! moved by `stuck_pos_eps` over `stuck_time`: scripted reverse-and-turn,
//! then forward-turn, then back to the prior mode.
//!
//! Until the particle filter produces an estimate the controller emits zero
//! commands and never requests samples, which is exactly the localization-off
//! ablation contract.

use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::arena::{normalize_angle, Pose, SensorFrame, IR_COUNT};
use crate::env::EnvState;
use crate::grid::Grid;
use crate::pf::PoseEstimate;

/// A circular soft-repulsion region (private forbidden blob or global block).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

impl Disc {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.x).powi(2) + (y - self.y).powi(2) <= self.radius * self.radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Cruise speed in EXPLORE and BLOB, m/s.
    pub base_fwd: f64,
    /// Speed of the straight drive in RECOVER, m/s.
    pub recover_speed: f64,
    /// Sample value that switches EXPLORE -> BLOB.
    pub blob_enter_val: f64,
    /// Sample value below which a blob sample counts as "low".
    pub blob_exit_val: f64,
    /// Consecutive low samples that abandon a blob.
    pub blob_exit_count: u32,
    pub recover_min_dist: f64,
    pub recover_timeout: f64,
    pub stuck_pos_eps: f64,
    pub stuck_time: f64,
    /// Seconds between sample requests (scaled by weather).
    pub sample_period: f64,
    /// Seconds between redraws of the exploration oscillation.
    pub osc_period: f64,
    /// Std dev of the oscillation term, rad/s.
    pub osc_sd: f64,
    /// Proportional heading gain, rad/s per radian of error.
    pub heading_gain: f64,
    pub max_w: f64,
    /// IR reading above which front arcs start steering away.
    pub front_thresh: f64,
    /// IR reading at which forward speed reaches zero.
    pub hard_stop: f64,
    /// Turn multiplier when both front arcs are high.
    pub corner_boost: f64,
    /// Gain of the avoidance turn.
    pub obstacle_gain: f64,
    /// Gain of the lateral centering term.
    pub lateral_gain: f64,
    /// Distance from a wall at which recentering engages, m.
    pub wall_margin: f64,
    pub wall_gain: f64,
    pub dispersion_gain: f64,
    /// Gain of the repulsion from forbidden/blocked discs.
    pub repulsion_gain: f64,
    /// Radius of private forbidden discs around abandoned blobs, m.
    pub forbidden_radius: f64,
    /// Best-sample value required before a bullseye may fire.
    pub bullseye_val: f64,
    /// Gradient magnitude (per meter) below which the field counts as flat.
    pub bullseye_flat_grad: f64,
    /// Within this distance of the best point, follow the gradient instead.
    pub blob_near_radius: f64,
    pub unstuck_reverse_s: f64,
    pub unstuck_forward_s: f64,
    /// Optional steering penalty away from high pheromone (0 disables).
    pub pheromone_gain: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            base_fwd: 0.25,
            recover_speed: 0.3,
            blob_enter_val: 0.55,
            blob_exit_val: 0.35,
            blob_exit_count: 5,
            recover_min_dist: 1.0,
            recover_timeout: 8.0,
            stuck_pos_eps: 0.05,
            stuck_time: 4.0,
            sample_period: 0.5,
            osc_period: 0.8,
            osc_sd: 0.6,
            heading_gain: 1.5,
            max_w: 1.5,
            front_thresh: 0.25,
            hard_stop: 0.95,
            corner_boost: 1.6,
            obstacle_gain: 2.0,
            lateral_gain: 0.4,
            wall_margin: 0.8,
            wall_gain: 1.2,
            dispersion_gain: 0.25,
            repulsion_gain: 1.2,
            forbidden_radius: 0.6,
            bullseye_val: 0.85,
            bullseye_flat_grad: 0.05,
            blob_near_radius: 0.2,
            unstuck_reverse_s: 1.0,
            unstuck_forward_s: 1.0,
            pheromone_gain: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Explore,
    Blob,
    Recover,
    Unstuck,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Explore => write!(f, "EXPLORE"),
            Mode::Blob => write!(f, "BLOB"),
            Mode::Recover => write!(f, "RECOVER"),
            Mode::Unstuck => write!(f, "UNSTUCK"),
        }
    }
}

/// Private 40x40 window at 0.1 m resolution around the robot's spawn point,
/// holding per-cell visit counts and running means of sampled richness.
#[derive(Clone, Debug)]
pub struct LocalBeliefGrid {
    pub x0: f64,
    pub y0: f64,
    pub resolution: f64,
    counts: Grid<u32>,
    means: Grid<f64>,
}

impl LocalBeliefGrid {
    pub const CELLS: usize = 40;

    pub fn new(center_x: f64, center_y: f64) -> Self {
        let half = Self::CELLS as f64 * 0.1 / 2.0;
        LocalBeliefGrid {
            x0: center_x - half,
            y0: center_y - half,
            resolution: 0.1,
            counts: Grid::filled(Self::CELLS, Self::CELLS, 0),
            means: Grid::filled(Self::CELLS, Self::CELLS, 0.0),
        }
    }

    /// Fold a measured richness into the window; no-op outside it. The mean
    /// is the exact arithmetic mean of everything recorded into the cell.
    pub fn record(&mut self, x: f64, y: f64, r_meas: f64) {
        let i = ((x - self.x0) / self.resolution).floor();
        let j = ((y - self.y0) / self.resolution).floor();
        if i < 0.0 || j < 0.0 || i >= Self::CELLS as f64 || j >= Self::CELLS as f64 {
            return;
        }
        let (i, j) = (i as usize, j as usize);
        let c = *self.counts.at(i, j);
        let m = self.means.at_mut(i, j);
        *m += (r_meas - *m) / (c + 1) as f64;
        *self.counts.at_mut(i, j) = c + 1;
    }

    pub fn counts(&self) -> &Grid<u32> {
        &self.counts
    }

    pub fn means(&self) -> &Grid<f64> {
        &self.means
    }
}

/// A sample response paired with the request position it answered.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleInfo {
    pub value: f64,
    pub grad: (f64, f64),
    pub pher_grad: (f64, f64),
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Action {
    SampleRequest { x: f64, y: f64 },
    Bullseye { x: f64, y: f64 },
}

#[derive(Clone, Debug, Default)]
pub struct StepOutput {
    pub v_cmd: f64,
    pub w_cmd: f64,
    pub actions: Vec<Action>,
}

/// Grouped IR arc steering: turn away from the stronger front arc, slow down
/// as readings approach the hard stop, boost the turn in corners (ties break
/// to a right turn), and add gentle lateral centering.
pub fn obstacle_steer(ir: &[f64; IR_COUNT], cfg: &ControllerConfig) -> (f64, f64) {
    // sensor k points at theta + k * 22.5 deg; 0 is dead ahead and belongs to
    // both front arcs so a head-on wall reads as a corner
    let front_right = ir[0].max(ir[1]).max(ir[2]).max(ir[3]);
    let front_left = ir[0].max(ir[13]).max(ir[14]).max(ir[15]);
    let front = front_right.max(front_left);

    let mut w = 0.0;
    let mut v_scale = 1.0;
    if front > cfg.front_thresh {
        let mut strength =
            cfg.obstacle_gain * (front - cfg.front_thresh) / (1.0 - cfg.front_thresh);
        if front_left > cfg.front_thresh && front_right > cfg.front_thresh {
            strength *= cfg.corner_boost;
        }
        w = if front_left >= front_right { strength } else { -strength };
        v_scale = ((cfg.hard_stop - front) / (cfg.hard_stop - cfg.front_thresh)).clamp(0.0, 1.0);
    }

    let lat_right = ir[4].max(ir[5]);
    let lat_left = ir[11].max(ir[12]);
    w += cfg.lateral_gain * (lat_left - lat_right);
    (w, v_scale)
}

/// Bearing from one point to another in the sin/cos heading convention
/// (theta measured from +y).
fn bearing(from_x: f64, from_y: f64, to_x: f64, to_y: f64) -> f64 {
    (to_x - from_x).atan2(to_y - from_y)
}

#[derive(Clone, Debug)]
struct BlobEpisode {
    best_x: f64,
    best_y: f64,
    best_val: f64,
    low_count: u32,
    bullseye_fired: bool,
}

#[derive(Clone, Debug)]
pub struct Controller {
    pub id: u32,
    pub cfg: ControllerConfig,
    mode: Mode,
    blob: BlobEpisode,
    recover_anchor: (f64, f64),
    /// Point to retreat from while recovering (the blob's best point).
    recover_repel: Option<(f64, f64)>,
    recover_elapsed: f64,
    unstuck_elapsed: f64,
    prior_mode: Mode,
    w_osc: f64,
    osc_elapsed: f64,
    last_request_time: Option<f64>,
    pending_request: Option<(f64, f64)>,
    last_sample: Option<SampleInfo>,
    fresh_sample: bool,
    /// Private repulsion discs from self-exited blobs; append-only.
    pub forbidden: Vec<Disc>,
    /// Blocks received from the supervisor.
    pub known_blocks: Vec<Disc>,
    pub belief: LocalBeliefGrid,
    pose_history: VecDeque<(f64, f64, f64)>,
    pub halted: bool,
    pub sample_requests: u64,
    pub blob_entries: u64,
    pub bullseyes_sent: u64,
    pub unstuck_count: u64,
}

impl Controller {
    pub fn new(id: u32, cfg: ControllerConfig, spawn: Pose) -> Self {
        Controller {
            id,
            cfg,
            mode: Mode::Explore,
            blob: BlobEpisode {
                best_x: 0.0,
                best_y: 0.0,
                best_val: 0.0,
                low_count: 0,
                bullseye_fired: false,
            },
            recover_anchor: (0.0, 0.0),
            recover_repel: None,
            recover_elapsed: 0.0,
            unstuck_elapsed: 0.0,
            prior_mode: Mode::Explore,
            w_osc: 0.0,
            osc_elapsed: f64::MAX, // draw an oscillation term on the first step
            last_request_time: None,
            pending_request: None,
            last_sample: None,
            fresh_sample: false,
            forbidden: Vec::new(),
            known_blocks: Vec::new(),
            belief: LocalBeliefGrid::new(spawn.x, spawn.y),
            pose_history: VecDeque::new(),
            halted: false,
            sample_requests: 0,
            blob_entries: 0,
            bullseyes_sent: 0,
            unstuck_count: 0,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn last_sample(&self) -> Option<&SampleInfo> {
        self.last_sample.as_ref()
    }

    /// Pair an incoming SAMPLE_RESPONSE with the request that elicited it and
    /// fold it into the local belief window.
    pub fn on_sample_response(&mut self, value: f64, grad: (f64, f64), pher_grad: (f64, f64)) {
        let Some((x, y)) = self.pending_request.take() else {
            return; // stale response with no matching request
        };
        self.belief.record(x, y, value);
        self.last_sample = Some(SampleInfo { value, grad, pher_grad, x, y });
        self.fresh_sample = true;
    }

    pub fn on_block(&mut self, disc: Disc) {
        self.known_blocks.push(disc);
    }

    pub fn on_stop(&mut self) {
        self.halted = true;
    }

    /// One control step. `est` is the particle-filter estimate, absent until
    /// the filter initializes (or forever, in the localization-off ablation).
    pub fn step(
        &mut self,
        now: f64,
        dt: f64,
        est: Option<&PoseEstimate>,
        sensors: &SensorFrame,
        env: &EnvState,
        rng: &mut ChaCha8Rng,
    ) -> StepOutput {
        let mut out = StepOutput::default();
        if self.halted {
            return out;
        }
        let Some(est) = est.filter(|e| e.x.is_finite() && e.y.is_finite()) else {
            return out;
        };

        self.track_displacement(now, est);

        // finish an expired unstuck maneuver before anything else
        if self.mode == Mode::Unstuck {
            let total = self.cfg.unstuck_reverse_s + self.cfg.unstuck_forward_s;
            if self.unstuck_elapsed >= total {
                self.mode = self.prior_mode;
                self.pose_history.clear();
            }
        }

        if self.fresh_sample && self.mode != Mode::Unstuck {
            self.process_sample(est);
        }

        let speed = env.speed_scale;
        match self.mode {
            Mode::Explore => {
                self.osc_elapsed += dt;
                if self.osc_elapsed >= self.cfg.osc_period {
                    self.w_osc = Normal::new(0.0, self.cfg.osc_sd)
                        .expect("finite sd")
                        .sample(rng);
                    self.osc_elapsed = 0.0;
                }
                let (w_obs, v_scale) = obstacle_steer(&sensors.ir, &self.cfg);
                let w = self.w_osc
                    + w_obs
                    + self.wall_steer(est)
                    + self.dispersion_steer(est)
                    + self.repulsion_steer(est)
                    + self.pheromone_steer(est);
                out.w_cmd = w.clamp(-self.cfg.max_w, self.cfg.max_w);
                out.v_cmd = self.cfg.base_fwd * speed * v_scale;
            }
            Mode::Blob => {
                let (w_obs, v_scale) = obstacle_steer(&sensors.ir, &self.cfg);
                let to_best = ((est.x - self.blob.best_x).powi(2)
                    + (est.y - self.blob.best_y).powi(2))
                .sqrt();
                let target = if to_best > self.cfg.blob_near_radius {
                    Some(bearing(est.x, est.y, self.blob.best_x, self.blob.best_y))
                } else {
                    // close to the best point: climb the supervisor gradient
                    self.last_sample.and_then(|s| {
                        let mag = (s.grad.0 * s.grad.0 + s.grad.1 * s.grad.1).sqrt();
                        (mag > 1e-12).then(|| s.grad.0.atan2(s.grad.1))
                    })
                };
                let delta = normalize_angle(target.unwrap_or(est.theta) - est.theta);
                let gain = self.cfg.heading_gain * env.gradient_gain_scale;
                out.w_cmd = (gain * delta + w_obs).clamp(-self.cfg.max_w, self.cfg.max_w);
                out.v_cmd = self.cfg.base_fwd * speed * delta.cos().max(0.0) * v_scale;

                self.maybe_bullseye(est, &mut out);
            }
            Mode::Recover => {
                self.recover_elapsed += dt;
                let (w_obs, v_scale) = obstacle_steer(&sensors.ir, &self.cfg);
                // head away from the hotspot that triggered the retreat, so
                // the escape does not cut back through it
                let w_away = match self.recover_repel {
                    Some((rx, ry)) => {
                        let (dx, dy) = (est.x - rx, est.y - ry);
                        let away = if dx.hypot(dy) > 0.05 {
                            dx.atan2(dy)
                        } else {
                            normalize_angle(est.theta + std::f64::consts::PI)
                        };
                        self.cfg.heading_gain * normalize_angle(away - est.theta)
                    }
                    None => 0.0,
                };
                let w = w_away + w_obs + self.wall_steer(est) + self.repulsion_steer(est);
                out.w_cmd = w.clamp(-self.cfg.max_w, self.cfg.max_w);
                out.v_cmd = self.cfg.recover_speed * speed * v_scale;
                let moved = ((est.x - self.recover_anchor.0).powi(2)
                    + (est.y - self.recover_anchor.1).powi(2))
                .sqrt();
                if moved >= self.cfg.recover_min_dist
                    || self.recover_elapsed >= self.cfg.recover_timeout
                {
                    self.mode = Mode::Explore;
                }
            }
            Mode::Unstuck => {
                self.unstuck_elapsed += dt;
                if self.unstuck_elapsed <= self.cfg.unstuck_reverse_s {
                    out.v_cmd = -self.cfg.recover_speed * speed;
                    out.w_cmd = 0.5 * self.cfg.max_w;
                } else {
                    out.v_cmd = self.cfg.base_fwd * speed;
                    out.w_cmd = -0.5 * self.cfg.max_w;
                }
            }
        }

        // sampling cadence: at most one request per (weather-scaled) period
        let period = self.cfg.sample_period * env.sample_period_scale;
        if self
            .last_request_time
            .is_none_or(|t| now - t >= period - 1e-9)
        {
            out.actions.push(Action::SampleRequest { x: est.x, y: est.y });
            self.pending_request = Some((est.x, est.y));
            self.last_request_time = Some(now);
            self.sample_requests += 1;
        }

        out
    }

    fn track_displacement(&mut self, now: f64, est: &PoseEstimate) {
        self.pose_history.push_back((now, est.x, est.y));
        let horizon = now - self.cfg.stuck_time;
        while self
            .pose_history
            .front()
            .is_some_and(|&(t, _, _)| t < horizon - 1e-9)
        {
            self.pose_history.pop_front();
        }
        if self.mode == Mode::Unstuck {
            return;
        }
        let Some(&(t0, x0, y0)) = self.pose_history.front() else {
            return;
        };
        // only judge once the window actually spans stuck_time
        if now - t0 < self.cfg.stuck_time - 1e-9 {
            return;
        }
        let moved = ((est.x - x0).powi(2) + (est.y - y0).powi(2)).sqrt();
        if moved < self.cfg.stuck_pos_eps {
            self.prior_mode = self.mode;
            self.mode = Mode::Unstuck;
            self.unstuck_elapsed = 0.0;
            self.unstuck_count += 1;
        }
    }

    fn process_sample(&mut self, est: &PoseEstimate) {
        self.fresh_sample = false;
        let Some(s) = self.last_sample else {
            return;
        };
        match self.mode {
            Mode::Explore => {
                if s.value >= self.cfg.blob_enter_val {
                    self.mode = Mode::Blob;
                    self.blob = BlobEpisode {
                        best_x: s.x,
                        best_y: s.y,
                        best_val: s.value,
                        low_count: 0,
                        bullseye_fired: false,
                    };
                    self.blob_entries += 1;
                }
            }
            Mode::Blob => {
                if s.value > self.blob.best_val {
                    self.blob.best_x = s.x;
                    self.blob.best_y = s.y;
                    self.blob.best_val = s.value;
                }
                if s.value < self.cfg.blob_exit_val {
                    self.blob.low_count += 1;
                } else {
                    self.blob.low_count = 0;
                }
                if self.blob.low_count >= self.cfg.blob_exit_count {
                    self.forbidden.push(Disc {
                        x: self.blob.best_x,
                        y: self.blob.best_y,
                        radius: self.cfg.forbidden_radius,
                    });
                    self.enter_recover(est);
                }
            }
            Mode::Recover | Mode::Unstuck => {}
        }
    }

    /// Fire when the episode's best value clears the threshold and the latest
    /// gradient is flat (the robot sits near a local max); once per episode.
    fn maybe_bullseye(&mut self, est: &PoseEstimate, out: &mut StepOutput) {
        if self.blob.bullseye_fired || self.blob.best_val < self.cfg.bullseye_val {
            return;
        }
        let Some(s) = self.last_sample else {
            return;
        };
        let mag = (s.grad.0 * s.grad.0 + s.grad.1 * s.grad.1).sqrt();
        if mag <= self.cfg.bullseye_flat_grad {
            out.actions.push(Action::Bullseye { x: self.blob.best_x, y: self.blob.best_y });
            self.blob.bullseye_fired = true;
            self.bullseyes_sent += 1;
            self.enter_recover(est);
        }
    }

    fn enter_recover(&mut self, est: &PoseEstimate) {
        self.mode = Mode::Recover;
        self.recover_anchor = (est.x, est.y);
        self.recover_repel = Some((self.blob.best_x, self.blob.best_y));
        self.recover_elapsed = 0.0;
    }

    fn wall_steer(&self, est: &PoseEstimate) -> f64 {
        // soft recentering; arena extent is fixed at [-5, 5]^2
        let m = self.cfg.wall_margin;
        let d = (est.x + 5.0).min(5.0 - est.x).min(est.y + 5.0).min(5.0 - est.y);
        if d >= m {
            return 0.0;
        }
        let push = 1.0 - (d / m).max(0.0);
        let delta = normalize_angle(bearing(est.x, est.y, 0.0, 0.0) - est.theta);
        self.cfg.wall_gain * push * delta.clamp(-1.0, 1.0)
    }

    fn dispersion_steer(&self, est: &PoseEstimate) -> f64 {
        // nudge robot id toward its preferred annulus around the arena center
        let r_pref = 1.0 + 0.8 * f64::from(self.id % 5);
        let r = (est.x * est.x + est.y * est.y).sqrt();
        let err = r - r_pref;
        if err.abs() < 1e-9 {
            return 0.0;
        }
        let toward_center = bearing(est.x, est.y, 0.0, 0.0);
        let target = if err > 0.0 {
            toward_center
        } else {
            normalize_angle(toward_center + std::f64::consts::PI)
        };
        let delta = normalize_angle(target - est.theta);
        self.cfg.dispersion_gain * (err.abs() / 0.8).min(1.0) * delta.clamp(-1.0, 1.0)
    }

    fn repulsion_steer(&self, est: &PoseEstimate) -> f64 {
        // inverse-linear turn away from discs within 1.5x their radius
        let mut w = 0.0;
        for disc in self.forbidden.iter().chain(&self.known_blocks) {
            let reach = 1.5 * disc.radius;
            let d = ((est.x - disc.x).powi(2) + (est.y - disc.y).powi(2)).sqrt();
            if d >= reach {
                continue;
            }
            let delta = normalize_angle(bearing(est.x, est.y, disc.x, disc.y) - est.theta);
            if delta.abs() > std::f64::consts::FRAC_PI_2 {
                continue; // already heading away
            }
            let strength = self.cfg.repulsion_gain * (1.0 - d / reach);
            w -= delta.signum() * strength;
        }
        w
    }

    fn pheromone_steer(&self, est: &PoseEstimate) -> f64 {
        if self.cfg.pheromone_gain <= 0.0 {
            return 0.0;
        }
        let Some(s) = self.last_sample else {
            return 0.0;
        };
        let (px, py) = s.pher_grad;
        let mag = (px * px + py * py).sqrt();
        if mag < 1e-9 {
            return 0.0;
        }
        // steer down-gradient of the pheromone map
        let delta = normalize_angle((-px).atan2(-py) - est.theta);
        self.cfg.pheromone_gain * mag.min(1.0) * delta.clamp(-1.0, 1.0)
    }
}

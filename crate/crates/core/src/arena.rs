//! True-world simulation: differential-drive kinematics, collision handling,
//! and raw sensor generation at a fixed tick rate.
//!
//! Headings follow the convention used throughout the system: theta is
//! measured from the +y axis, so a robot at heading theta moves along
//! `(sin theta, cos theta)`. The drive is abstracted to a unicycle with a
//! body radius; wheel accelerations are rate-limited for stable dynamics.
//!
//! Per tick, the true pose advances by the commanded motion plus slip noise,
//! while odometry reports the commanded motion plus independent encoder
//! noise. Collisions with walls and circular obstacles are resolved by
//! projection, so robots slide along surfaces and never overlap them.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::EnvState;
use crate::grid::GridSpec;

pub const IR_COUNT: usize = 16;

/// Normalize an angle into (-pi, pi].
pub fn normalize_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(std::f64::consts::TAU);
    if a > std::f64::consts::PI {
        a - std::f64::consts::TAU
    } else {
        a
    }
}

/// A planar pose; `theta` is kept normalized in (-pi, pi].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose { x, y, theta: normalize_angle(theta) }
    }

    /// Unit heading vector `(sin theta, cos theta)`.
    pub fn heading_vec(&self) -> (f64, f64) {
        (self.theta.sin(), self.theta.cos())
    }
}

/// A circular obstacle, fully inside the arena.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

/// Sensor and actuation noise scales.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// GPS standard deviation per axis, meters.
    pub gps_sd: f64,
    /// Heading measurement standard deviation, radians.
    pub heading_sd: f64,
    /// Fractional noise on commanded wheel motion; scales both the slip noise
    /// on the true pose and the independent encoder noise on odometry.
    pub slip_gain: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { gps_sd: 0.02, heading_sd: 0.05, slip_gain: 0.05 }
    }
}

/// One robot's physical state inside the arena.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RobotBody {
    pub id: u32,
    pub true_pose: Pose,
    pub body_radius: f64,
    pub wheel_base: f64,
    pub v_cmd: f64,
    pub w_cmd: f64,
    pub max_speed: f64,
    /// Linear acceleration limit, m/s^2.
    pub accel_limit: f64,
    /// Angular acceleration limit, rad/s^2.
    pub ang_accel_limit: f64,
    /// Rate-limited speeds actually applied this tick.
    v_act: f64,
    w_act: f64,
    /// Noisy integrated wheel deltas since the previous tick.
    odo_d: f64,
    odo_dtheta: f64,
}

impl RobotBody {
    pub fn new(id: u32, pose: Pose) -> Self {
        RobotBody {
            id,
            true_pose: pose,
            body_radius: 0.15,
            wheel_base: 0.3,
            v_cmd: 0.0,
            w_cmd: 0.0,
            max_speed: 0.5,
            accel_limit: 1.0,
            ang_accel_limit: 8.0,
            v_act: 0.0,
            w_act: 0.0,
            odo_d: 0.0,
            odo_dtheta: 0.0,
        }
    }

    /// Fixed, slightly offset starting poses in the common spawn region.
    pub fn spawn_pose(id: u32) -> Pose {
        Pose::new(-1.0 + 0.5 * id as f64, -4.5, 0.0)
    }
}

/// One tick's raw sensor readings for one robot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    /// Noisy GPS fix, absent on intermittency ticks and weather dropouts.
    pub gps: Option<(f64, f64)>,
    /// Noisy heading, wrapped into (-pi, pi].
    pub heading_meas: Option<f64>,
    /// Proximity readings in [0, 1]; 1 means touching.
    pub ir: [f64; IR_COUNT],
    pub odo_d: f64,
    pub odo_dtheta: f64,
}

/// The world: bounds, obstacles, and all robot bodies. Single writer; robot
/// steps within a tick are applied sequentially in id order.
#[derive(Clone, Debug)]
pub struct Arena {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub obstacles: Vec<Obstacle>,
    pub robots: Vec<RobotBody>,
    pub noise: NoiseConfig,
    /// GPS is present every `gps_period` ticks.
    pub gps_period: u64,
    /// IR sensing range, meters from the body surface.
    pub ir_range: f64,
    /// Whether robots occlude each other's IR (off by default).
    pub ir_sees_robots: bool,
}

/// The default obstacle set: six circles placed clear of the blob centers
/// and the spawn line.
pub fn default_obstacles() -> Vec<Obstacle> {
    vec![
        Obstacle { cx: 0.6, cy: -0.9, radius: 0.30 },
        Obstacle { cx: -3.4, cy: 0.6, radius: 0.25 },
        Obstacle { cx: 3.2, cy: 0.5, radius: 0.20 },
        Obstacle { cx: -0.9, cy: 2.9, radius: 0.35 },
        Obstacle { cx: 1.7, cy: -3.3, radius: 0.15 },
        Obstacle { cx: -2.6, cy: -0.3, radius: 0.25 },
    ]
}

impl Arena {
    pub fn new(spec: &GridSpec, obstacles: Vec<Obstacle>, noise: NoiseConfig) -> Self {
        Arena {
            x_min: spec.x_min,
            x_max: spec.x_max,
            y_min: spec.y_min,
            y_max: spec.y_max,
            obstacles,
            robots: Vec::new(),
            noise,
            gps_period: 4,
            ir_range: 0.6,
            ir_sees_robots: false,
        }
    }

    pub fn spawn_team(&mut self, team_size: u32) {
        for id in 0..team_size {
            self.robots.push(RobotBody::new(id, RobotBody::spawn_pose(id)));
        }
    }

    /// Advance one robot by `dt` under the current commands. `env` caps the
    /// speed and scales slip noise; `rng` must be the robot's motion stream.
    pub fn step_robot(&mut self, idx: usize, dt: f64, env: &EnvState, rng: &mut ChaCha8Rng) {
        debug_assert!(dt > 0.0);
        let slip_gain = self.noise.slip_gain;
        let slip = env.motion_noise_scale;
        let body = &mut self.robots[idx];

        let v_limit = body.max_speed * env.speed_scale;
        let v_target = body.v_cmd.clamp(-v_limit, v_limit);
        let dv = (v_target - body.v_act).clamp(-body.accel_limit * dt, body.accel_limit * dt);
        body.v_act += dv;
        let dw = (body.w_cmd - body.w_act)
            .clamp(-body.ang_accel_limit * dt, body.ang_accel_limit * dt);
        body.w_act += dw;

        let d_cmd = body.v_act * dt;
        let dtheta_cmd = body.w_act * dt;

        let mut noise4 = [0.0f64; 4];
        if slip_gain > 0.0 {
            for n in &mut noise4 {
                *n = StandardNormal.sample(rng);
            }
        }
        let d_true = d_cmd + slip * slip_gain * d_cmd.abs() * noise4[0];
        let dtheta_true = dtheta_cmd + slip * slip_gain * dtheta_cmd.abs() * noise4[1];
        body.odo_d = d_cmd + slip_gain * d_cmd.abs() * noise4[2];
        body.odo_dtheta = dtheta_cmd + slip_gain * dtheta_cmd.abs() * noise4[3];

        let theta = normalize_angle(body.true_pose.theta + dtheta_true);
        let mut x = body.true_pose.x + d_true * theta.sin();
        let mut y = body.true_pose.y + d_true * theta.cos();

        // resolve penetration: push out of obstacles, then clamp to walls
        let r = body.body_radius;
        for _ in 0..3 {
            for obs in &self.obstacles {
                let dx = x - obs.cx;
                let dy = y - obs.cy;
                let dist = (dx * dx + dy * dy).sqrt();
                let min_dist = obs.radius + r;
                if dist < min_dist {
                    if dist < 1e-12 {
                        x = obs.cx + min_dist;
                    } else {
                        x = obs.cx + dx / dist * min_dist;
                        y = obs.cy + dy / dist * min_dist;
                    }
                }
            }
            x = x.clamp(self.x_min + r, self.x_max - r);
            y = y.clamp(self.y_min + r, self.y_max - r);
        }

        body.true_pose = Pose { x, y, theta };
    }

    /// Produce this tick's sensor frame for one robot. `rng` must be the
    /// robot's sensor stream.
    pub fn read_sensors(
        &self,
        idx: usize,
        tick: u64,
        env: &EnvState,
        rng: &mut ChaCha8Rng,
    ) -> SensorFrame {
        let body = &self.robots[idx];
        let pose = body.true_pose;

        let gps_scheduled = tick % self.gps_period == 0;
        let gps_dropped = gps_scheduled && env.drop_prob > 0.0 && rng.random::<f64>() < env.drop_prob;
        let gps = if gps_scheduled && !gps_dropped {
            let nx: f64 = StandardNormal.sample(rng);
            let ny: f64 = StandardNormal.sample(rng);
            Some((pose.x + self.noise.gps_sd * nx, pose.y + self.noise.gps_sd * ny))
        } else {
            None
        };

        let nh: f64 = StandardNormal.sample(rng);
        let heading_meas = Some(normalize_angle(pose.theta + self.noise.heading_sd * nh));

        let mut ir = [0.0f64; IR_COUNT];
        for (k, reading) in ir.iter_mut().enumerate() {
            let ang = pose.theta + k as f64 * (std::f64::consts::TAU / IR_COUNT as f64);
            let (ux, uy) = (ang.sin(), ang.cos());
            let ox = pose.x + body.body_radius * ux;
            let oy = pose.y + body.body_radius * uy;
            let dist = self.raycast(idx, ox, oy, ux, uy);
            if dist <= self.ir_range {
                *reading = (1.0 - dist / self.ir_range).clamp(0.0, 1.0);
            }
        }

        SensorFrame { gps, heading_meas, ir, odo_d: body.odo_d, odo_dtheta: body.odo_dtheta }
    }

    /// Distance along the ray from `(ox, oy)` in direction `(ux, uy)` to the
    /// nearest wall or obstacle surface.
    fn raycast(&self, self_idx: usize, ox: f64, oy: f64, ux: f64, uy: f64) -> f64 {
        let mut best = f64::INFINITY;
        if ux > 1e-12 {
            best = best.min((self.x_max - ox) / ux);
        } else if ux < -1e-12 {
            best = best.min((self.x_min - ox) / ux);
        }
        if uy > 1e-12 {
            best = best.min((self.y_max - oy) / uy);
        } else if uy < -1e-12 {
            best = best.min((self.y_min - oy) / uy);
        }
        for obs in &self.obstacles {
            if let Some(t) = ray_circle(ox, oy, ux, uy, obs.cx, obs.cy, obs.radius) {
                best = best.min(t);
            }
        }
        if self.ir_sees_robots {
            for (i, other) in self.robots.iter().enumerate() {
                if i == self_idx {
                    continue;
                }
                let p = other.true_pose;
                if let Some(t) = ray_circle(ox, oy, ux, uy, p.x, p.y, other.body_radius) {
                    best = best.min(t);
                }
            }
        }
        best.max(0.0)
    }

    /// Shortest distance from a point to any wall or obstacle surface
    /// (negative when inside an obstacle). Used by the non-penetration tests.
    pub fn clearance(&self, x: f64, y: f64) -> f64 {
        let mut d = (x - self.x_min)
            .min(self.x_max - x)
            .min(y - self.y_min)
            .min(self.y_max - y);
        for obs in &self.obstacles {
            let dist = ((x - obs.cx).powi(2) + (y - obs.cy).powi(2)).sqrt() - obs.radius;
            d = d.min(dist);
        }
        d
    }
}

fn ray_circle(ox: f64, oy: f64, ux: f64, uy: f64, cx: f64, cy: f64, r: f64) -> Option<f64> {
    let fx = cx - ox;
    let fy = cy - oy;
    let along = fx * ux + fy * uy;
    let disc = along * along - (fx * fx + fy * fy - r * r);
    if disc < 0.0 {
        return None;
    }
    let t = along - disc.sqrt();
    (t >= 0.0).then_some(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{env_params, Weather};
    use crate::rng::{derive_rng, Stream};

    const DT: f64 = 0.0625;

    fn quiet_arena() -> Arena {
        let mut a = Arena::new(
            &GridSpec::standard(),
            Vec::new(),
            NoiseConfig { gps_sd: 0.0, heading_sd: 0.0, slip_gain: 0.0 },
        );
        a.spawn_team(1);
        a
    }

    #[test]
    fn normalize_angle_half_open_interval() {
        use std::f64::consts::PI;
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(0.1 - 4.0 * PI) - 0.1).abs() < 1e-9);
    }

    #[test]
    fn zero_commands_leave_pose_and_odo_unchanged() {
        let mut a = quiet_arena();
        let env = env_params(Weather::Clear);
        let mut rng = derive_rng(0, Stream::Motion(0));
        let before = a.robots[0].true_pose;
        a.step_robot(0, DT, &env, &mut rng);
        assert_eq!(a.robots[0].true_pose, before);
        assert_eq!(a.robots[0].odo_d, 0.0);
        assert_eq!(a.robots[0].odo_dtheta, 0.0);
    }

    #[test]
    fn straight_noiseless_motion_follows_sin_cos_convention() {
        // theta = 0 points along +y: one 0.1 s step at 1 m/s moves (0, 0.1)
        let mut a = quiet_arena();
        a.robots[0].true_pose = Pose::new(0.0, 0.0, 0.0);
        a.robots[0].max_speed = 1.0;
        a.robots[0].accel_limit = 1e9; // reach the commanded speed instantly
        a.robots[0].v_cmd = 1.0;
        let env = env_params(Weather::Clear);
        let mut rng = derive_rng(0, Stream::Motion(0));
        a.step_robot(0, 0.1, &env, &mut rng);
        let p = a.robots[0].true_pose;
        assert!((p.x - 0.0).abs() < 1e-12, "x = {}", p.x);
        assert!((p.y - 0.1).abs() < 1e-12, "y = {}", p.y);
    }

    #[test]
    fn wall_and_obstacle_are_never_penetrated() {
        let mut a = Arena::new(
            &GridSpec::standard(),
            vec![Obstacle { cx: 0.0, cy: 2.0, radius: 0.3 }],
            NoiseConfig::default(),
        );
        a.spawn_team(1);
        a.robots[0].true_pose = Pose::new(0.0, 0.0, 0.0); // heading straight at the obstacle
        a.robots[0].v_cmd = 0.4;
        let env = env_params(Weather::Clear);
        let mut rng = derive_rng(1, Stream::Motion(0));
        for _ in 0..2000 {
            a.step_robot(0, DT, &env, &mut rng);
            let p = a.robots[0].true_pose;
            assert!(
                a.clearance(p.x, p.y) >= a.robots[0].body_radius - 1e-9,
                "penetration at ({}, {})",
                p.x,
                p.y
            );
        }
    }

    #[test]
    fn noiseless_odometry_dead_reckons_to_true_pose() {
        let mut a = quiet_arena();
        a.robots[0].true_pose = Pose::new(1.0, -2.0, 0.3);
        a.robots[0].v_cmd = 0.25;
        a.robots[0].w_cmd = 0.4;
        let env = env_params(Weather::Clear);
        let mut rng = derive_rng(2, Stream::Motion(0));
        let mut dead = a.robots[0].true_pose;
        for _ in 0..500 {
            a.step_robot(0, DT, &env, &mut rng);
            let b = &a.robots[0];
            dead.theta = normalize_angle(dead.theta + b.odo_dtheta);
            dead.x += b.odo_d * dead.theta.sin();
            dead.y += b.odo_d * dead.theta.cos();
        }
        let t = a.robots[0].true_pose;
        assert!((dead.x - t.x).abs() < 1e-9);
        assert!((dead.y - t.y).abs() < 1e-9);
        assert!((normalize_angle(dead.theta - t.theta)).abs() < 1e-9);
    }

    #[test]
    fn gps_noise_sd_matches_config() {
        let mut a = Arena::new(&GridSpec::standard(), Vec::new(), NoiseConfig::default());
        a.spawn_team(1);
        a.gps_period = 1;
        let env = env_params(Weather::Clear);
        let mut rng = derive_rng(3, Stream::Sensors(0));
        let truth = a.robots[0].true_pose;
        let mut sum_sq = 0.0;
        let n = 20_000usize;
        for tick in 0..n as u64 {
            let frame = a.read_sensors(0, tick, &env, &mut rng);
            let (gx, _) = frame.gps.unwrap();
            sum_sq += (gx - truth.x).powi(2);
        }
        let sd = (sum_sq / n as f64).sqrt();
        assert!((sd - 0.02).abs() / 0.02 < 0.1, "empirical gps sd {sd}");
    }

    #[test]
    fn gps_intermittency_follows_period() {
        let a = {
            let mut a = quiet_arena();
            a.gps_period = 4;
            a
        };
        let env = env_params(Weather::Clear);
        let mut rng = derive_rng(4, Stream::Sensors(0));
        for tick in 0..16 {
            let frame = a.read_sensors(0, tick, &env, &mut rng);
            assert_eq!(frame.gps.is_some(), tick % 4 == 0);
        }
    }

    #[test]
    fn ir_zero_in_empty_center_and_near_wall_reading() {
        let mut a = quiet_arena();
        a.robots[0].true_pose = Pose::new(0.0, 0.0, 0.0);
        let env = env_params(Weather::Clear);
        let mut rng = derive_rng(5, Stream::Sensors(0));
        let frame = a.read_sensors(0, 1, &env, &mut rng);
        assert!(frame.ir.iter().all(|&v| v == 0.0));

        // face the +x wall with the body surface 0.1 m away
        let r = a.robots[0].body_radius;
        a.robots[0].true_pose = Pose::new(5.0 - 0.1 - r, 0.0, std::f64::consts::FRAC_PI_2);
        let frame = a.read_sensors(0, 1, &env, &mut rng);
        assert!((frame.ir[0] - (1.0 - 0.1 / 0.6)).abs() < 1e-9, "front ir {}", frame.ir[0]);
    }

    #[test]
    fn speed_never_exceeds_env_scaled_max() {
        let mut a = quiet_arena();
        a.robots[0].v_cmd = 10.0;
        let env = env_params(Weather::Rain);
        let mut rng = derive_rng(6, Stream::Motion(0));
        let mut prev = a.robots[0].true_pose;
        for _ in 0..200 {
            a.step_robot(0, DT, &env, &mut rng);
            let p = a.robots[0].true_pose;
            let moved = ((p.x - prev.x).powi(2) + (p.y - prev.y).powi(2)).sqrt();
            assert!(moved <= a.robots[0].max_speed * env.speed_scale * DT + 1e-9);
            prev = p;
        }
    }
}

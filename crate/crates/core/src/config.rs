//! Run configuration and the flat `key = value` config file format.
//!
//! A `RunConfig` plus the code version pins a run bit-exactly. Every module
//! parameter is overridable through a flat text file of `key = value` lines
//! ('#' starts a comment); unknown keys are errors. `to_kv()` dumps the
//! complete configuration in the same format, so the `config_used.txt`
//! artifact of a run is itself a loadable config file.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::arena::{default_obstacles, NoiseConfig, Obstacle};
use crate::controller::ControllerConfig;
use crate::env::Weather;
use crate::field::BlobParams;
use crate::grid::GridSpec;
use crate::pf::PfConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for key {key:?}: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("malformed line {line}: expected `key = value`, got {text:?}")]
    MalformedLine { line: usize, text: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything a run needs; defaults reproduce the reference setup.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub team_size: u32,
    pub pf_enabled: bool,
    pub coordination_enabled: bool,
    pub weather: Weather,
    pub horizon_s: f64,
    pub out_dir: Option<PathBuf>,
    /// Trajectory/telemetry logging interval, in ticks.
    pub log_interval_ticks: u64,
    /// GPS fixes arrive every this many ticks.
    pub gps_period_ticks: u64,
    pub grid: GridSpec,
    pub blobs: BlobParams,
    /// Seed of the field's construction noise, independent of `seed` so all
    /// runs of an experiment share one field.
    pub field_seed: u64,
    /// Measurement noise on sample responses.
    pub sample_noise_sd: f64,
    pub block_radius: f64,
    pub count_blocked_samples: bool,
    pub noise: NoiseConfig,
    pub pf: PfConfig,
    pub ctrl: ControllerConfig,
    pub obstacles: Vec<Obstacle>,
    pub body_radius: f64,
    pub wheel_base: f64,
    pub max_speed: f64,
    pub accel_limit: f64,
    pub ang_accel_limit: f64,
    pub ir_range: f64,
    pub ir_sees_robots: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            team_size: 5,
            pf_enabled: true,
            coordination_enabled: true,
            weather: Weather::Clear,
            horizon_s: 600.0,
            out_dir: None,
            log_interval_ticks: 8,
            gps_period_ticks: 4,
            grid: GridSpec::standard(),
            blobs: BlobParams::default(),
            field_seed: 10,
            sample_noise_sd: 0.02,
            block_radius: 0.7,
            count_blocked_samples: true,
            noise: NoiseConfig::default(),
            pf: PfConfig::default(),
            ctrl: ControllerConfig::default(),
            obstacles: default_obstacles(),
            body_radius: 0.15,
            wheel_base: 0.3,
            max_speed: 0.5,
            accel_limit: 1.0,
            ang_accel_limit: 8.0,
            ir_range: 0.6,
            ir_sees_robots: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "on" | "1" | "yes" => Ok(true),
        "false" | "off" | "0" | "no" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected true/false".to_string(),
        }),
    }
}

fn parse_obstacles(key: &str, value: &str) -> Result<Vec<Obstacle>, ConfigError> {
    let trimmed = value.trim();
    if trimmed.eq_ignore_ascii_case("none") || trimmed.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for part in trimmed.split(';') {
        let nums: Vec<&str> = part.split(',').map(str::trim).collect();
        if nums.len() != 3 {
            return Err(ConfigError::BadValue {
                key: key.to_string(),
                value: value.to_string(),
                reason: "expected cx,cy,r triples separated by ';'".to_string(),
            });
        }
        out.push(Obstacle {
            cx: parse(key, nums[0])?,
            cy: parse(key, nums[1])?,
            radius: parse(key, nums[2])?,
        });
    }
    Ok(out)
}

fn parse_centers(key: &str, value: &str) -> Result<[(f64, f64); 4], ConfigError> {
    let parts: Vec<&str> = value.trim().split(';').collect();
    if parts.len() != 4 {
        return Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected exactly 4 x,y pairs separated by ';'".to_string(),
        });
    }
    let mut centers = [(0.0, 0.0); 4];
    for (k, part) in parts.iter().enumerate() {
        let nums: Vec<&str> = part.split(',').map(str::trim).collect();
        if nums.len() != 2 {
            return Err(ConfigError::BadValue {
                key: key.to_string(),
                value: value.to_string(),
                reason: "each center must be x,y".to_string(),
            });
        }
        centers[k] = (parse(key, nums[0])?, parse(key, nums[1])?);
    }
    Ok(centers)
}

impl RunConfig {
    /// Apply one `key = value` assignment. Unknown keys are errors.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "team_size" => self.team_size = parse(key, value)?,
            "pf_enabled" => self.pf_enabled = parse_bool(key, value)?,
            "coordination_enabled" => self.coordination_enabled = parse_bool(key, value)?,
            "weather" => self.weather = parse(key, value)?,
            "horizon_s" => self.horizon_s = parse(key, value)?,
            "out_dir" => self.out_dir = Some(PathBuf::from(value.trim())),
            "log_interval_ticks" => self.log_interval_ticks = parse(key, value)?,
            "gps_period_ticks" => self.gps_period_ticks = parse(key, value)?,
            "field_seed" => self.field_seed = parse(key, value)?,
            "field_sigma" => self.blobs.sigma = parse(key, value)?,
            "field_noise_amp" => self.blobs.noise_amp = parse(key, value)?,
            "field_centers" => self.blobs.centers = parse_centers(key, value)?,
            "sample_noise_sd" => self.sample_noise_sd = parse(key, value)?,
            "block_radius" => self.block_radius = parse(key, value)?,
            "count_blocked_samples" => self.count_blocked_samples = parse_bool(key, value)?,
            "obstacles" => self.obstacles = parse_obstacles(key, value)?,
            "noise_gps_sd" => self.noise.gps_sd = parse(key, value)?,
            "noise_heading_sd" => self.noise.heading_sd = parse(key, value)?,
            "noise_slip_gain" => self.noise.slip_gain = parse(key, value)?,
            "robot_body_radius" => self.body_radius = parse(key, value)?,
            "robot_wheel_base" => self.wheel_base = parse(key, value)?,
            "robot_max_speed" => self.max_speed = parse(key, value)?,
            "robot_accel_limit" => self.accel_limit = parse(key, value)?,
            "robot_ang_accel_limit" => self.ang_accel_limit = parse(key, value)?,
            "ir_range" => self.ir_range = parse(key, value)?,
            "ir_sees_robots" => self.ir_sees_robots = parse_bool(key, value)?,
            "pf_n_particles" => self.pf.n_particles = parse(key, value)?,
            "pf_alpha" => self.pf.alpha = parse(key, value)?,
            "pf_gps_sd" => self.pf.gps_sd = parse(key, value)?,
            "pf_heading_sd" => self.pf.heading_sd = parse(key, value)?,
            "pf_motion_d_gain" => self.pf.motion_d_gain = parse(key, value)?,
            "pf_motion_d_floor" => self.pf.motion_d_floor = parse(key, value)?,
            "pf_motion_theta_gain" => self.pf.motion_theta_gain = parse(key, value)?,
            "pf_motion_theta_floor" => self.pf.motion_theta_floor = parse(key, value)?,
            "pf_init_pos_sd" => self.pf.init_pos_sd = parse(key, value)?,
            "pf_init_heading_sd" => self.pf.init_heading_sd = parse(key, value)?,
            "ctrl_base_fwd" => self.ctrl.base_fwd = parse(key, value)?,
            "ctrl_recover_speed" => self.ctrl.recover_speed = parse(key, value)?,
            "ctrl_blob_enter_val" => self.ctrl.blob_enter_val = parse(key, value)?,
            "ctrl_blob_exit_val" => self.ctrl.blob_exit_val = parse(key, value)?,
            "ctrl_blob_exit_count" => self.ctrl.blob_exit_count = parse(key, value)?,
            "ctrl_recover_min_dist" => self.ctrl.recover_min_dist = parse(key, value)?,
            "ctrl_recover_timeout" => self.ctrl.recover_timeout = parse(key, value)?,
            "ctrl_stuck_pos_eps" => self.ctrl.stuck_pos_eps = parse(key, value)?,
            "ctrl_stuck_time" => self.ctrl.stuck_time = parse(key, value)?,
            "ctrl_sample_period" => self.ctrl.sample_period = parse(key, value)?,
            "ctrl_osc_period" => self.ctrl.osc_period = parse(key, value)?,
            "ctrl_osc_sd" => self.ctrl.osc_sd = parse(key, value)?,
            "ctrl_heading_gain" => self.ctrl.heading_gain = parse(key, value)?,
            "ctrl_max_w" => self.ctrl.max_w = parse(key, value)?,
            "ctrl_front_thresh" => self.ctrl.front_thresh = parse(key, value)?,
            "ctrl_hard_stop" => self.ctrl.hard_stop = parse(key, value)?,
            "ctrl_corner_boost" => self.ctrl.corner_boost = parse(key, value)?,
            "ctrl_obstacle_gain" => self.ctrl.obstacle_gain = parse(key, value)?,
            "ctrl_lateral_gain" => self.ctrl.lateral_gain = parse(key, value)?,
            "ctrl_wall_margin" => self.ctrl.wall_margin = parse(key, value)?,
            "ctrl_wall_gain" => self.ctrl.wall_gain = parse(key, value)?,
            "ctrl_dispersion_gain" => self.ctrl.dispersion_gain = parse(key, value)?,
            "ctrl_repulsion_gain" => self.ctrl.repulsion_gain = parse(key, value)?,
            "ctrl_forbidden_radius" => self.ctrl.forbidden_radius = parse(key, value)?,
            "ctrl_bullseye_val" => self.ctrl.bullseye_val = parse(key, value)?,
            "ctrl_bullseye_flat_grad" => self.ctrl.bullseye_flat_grad = parse(key, value)?,
            "ctrl_blob_near_radius" => self.ctrl.blob_near_radius = parse(key, value)?,
            "ctrl_unstuck_reverse_s" => self.ctrl.unstuck_reverse_s = parse(key, value)?,
            "ctrl_unstuck_forward_s" => self.ctrl.unstuck_forward_s = parse(key, value)?,
            "ctrl_pheromone_gain" => self.ctrl.pheromone_gain = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Parse a flat config file body; later lines override earlier ones.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::MalformedLine { line: lineno + 1, text: raw.to_string() });
            };
            self.apply_kv(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    /// Dump the full configuration as `key = value` lines (a loadable file).
    pub fn to_kv(&self) -> String {
        let centers = self
            .blobs
            .centers
            .iter()
            .map(|(x, y)| format!("{x},{y}"))
            .collect::<Vec<_>>()
            .join(";");
        let obstacles = if self.obstacles.is_empty() {
            "none".to_string()
        } else {
            self.obstacles
                .iter()
                .map(|o| format!("{},{},{}", o.cx, o.cy, o.radius))
                .collect::<Vec<_>>()
                .join(";")
        };
        let mut lines = vec![
            format!("seed = {}", self.seed),
            format!("team_size = {}", self.team_size),
            format!("pf_enabled = {}", self.pf_enabled),
            format!("coordination_enabled = {}", self.coordination_enabled),
            format!("weather = {}", self.weather),
            format!("horizon_s = {}", self.horizon_s),
            format!("log_interval_ticks = {}", self.log_interval_ticks),
            format!("gps_period_ticks = {}", self.gps_period_ticks),
            format!("field_seed = {}", self.field_seed),
            format!("field_sigma = {}", self.blobs.sigma),
            format!("field_noise_amp = {}", self.blobs.noise_amp),
            format!("field_centers = {centers}"),
            format!("sample_noise_sd = {}", self.sample_noise_sd),
            format!("block_radius = {}", self.block_radius),
            format!("count_blocked_samples = {}", self.count_blocked_samples),
            format!("obstacles = {obstacles}"),
            format!("noise_gps_sd = {}", self.noise.gps_sd),
            format!("noise_heading_sd = {}", self.noise.heading_sd),
            format!("noise_slip_gain = {}", self.noise.slip_gain),
            format!("robot_body_radius = {}", self.body_radius),
            format!("robot_wheel_base = {}", self.wheel_base),
            format!("robot_max_speed = {}", self.max_speed),
            format!("robot_accel_limit = {}", self.accel_limit),
            format!("robot_ang_accel_limit = {}", self.ang_accel_limit),
            format!("ir_range = {}", self.ir_range),
            format!("ir_sees_robots = {}", self.ir_sees_robots),
            format!("pf_n_particles = {}", self.pf.n_particles),
            format!("pf_alpha = {}", self.pf.alpha),
            format!("pf_gps_sd = {}", self.pf.gps_sd),
            format!("pf_heading_sd = {}", self.pf.heading_sd),
            format!("pf_motion_d_gain = {}", self.pf.motion_d_gain),
            format!("pf_motion_d_floor = {}", self.pf.motion_d_floor),
            format!("pf_motion_theta_gain = {}", self.pf.motion_theta_gain),
            format!("pf_motion_theta_floor = {}", self.pf.motion_theta_floor),
            format!("pf_init_pos_sd = {}", self.pf.init_pos_sd),
            format!("pf_init_heading_sd = {}", self.pf.init_heading_sd),
            format!("ctrl_base_fwd = {}", self.ctrl.base_fwd),
            format!("ctrl_recover_speed = {}", self.ctrl.recover_speed),
            format!("ctrl_blob_enter_val = {}", self.ctrl.blob_enter_val),
            format!("ctrl_blob_exit_val = {}", self.ctrl.blob_exit_val),
            format!("ctrl_blob_exit_count = {}", self.ctrl.blob_exit_count),
            format!("ctrl_recover_min_dist = {}", self.ctrl.recover_min_dist),
            format!("ctrl_recover_timeout = {}", self.ctrl.recover_timeout),
            format!("ctrl_stuck_pos_eps = {}", self.ctrl.stuck_pos_eps),
            format!("ctrl_stuck_time = {}", self.ctrl.stuck_time),
            format!("ctrl_sample_period = {}", self.ctrl.sample_period),
            format!("ctrl_osc_period = {}", self.ctrl.osc_period),
            format!("ctrl_osc_sd = {}", self.ctrl.osc_sd),
            format!("ctrl_heading_gain = {}", self.ctrl.heading_gain),
            format!("ctrl_max_w = {}", self.ctrl.max_w),
            format!("ctrl_front_thresh = {}", self.ctrl.front_thresh),
            format!("ctrl_hard_stop = {}", self.ctrl.hard_stop),
            format!("ctrl_corner_boost = {}", self.ctrl.corner_boost),
            format!("ctrl_obstacle_gain = {}", self.ctrl.obstacle_gain),
            format!("ctrl_lateral_gain = {}", self.ctrl.lateral_gain),
            format!("ctrl_wall_margin = {}", self.ctrl.wall_margin),
            format!("ctrl_wall_gain = {}", self.ctrl.wall_gain),
            format!("ctrl_dispersion_gain = {}", self.ctrl.dispersion_gain),
            format!("ctrl_repulsion_gain = {}", self.ctrl.repulsion_gain),
            format!("ctrl_forbidden_radius = {}", self.ctrl.forbidden_radius),
            format!("ctrl_bullseye_val = {}", self.ctrl.bullseye_val),
            format!("ctrl_bullseye_flat_grad = {}", self.ctrl.bullseye_flat_grad),
            format!("ctrl_blob_near_radius = {}", self.ctrl.blob_near_radius),
            format!("ctrl_unstuck_reverse_s = {}", self.ctrl.unstuck_reverse_s),
            format!("ctrl_unstuck_forward_s = {}", self.ctrl.unstuck_forward_s),
            format!("ctrl_pheromone_gain = {}", self.ctrl.pheromone_gain),
        ];
        if let Some(dir) = &self.out_dir {
            lines.push(format!("out_dir = {}", dir.display()));
        }
        lines.join("\n") + "\n"
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.team_size < 1 {
            return fail("team_size must be >= 1".into());
        }
        if !(self.horizon_s > 0.0) {
            return fail("horizon_s must be positive".into());
        }
        self.grid.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.pf.n_particles < 2 {
            return fail("pf_n_particles must be >= 2".into());
        }
        if !(self.pf.alpha > 0.0 && self.pf.alpha <= 1.0) {
            return fail("pf_alpha must be in (0, 1]".into());
        }
        for (name, v) in [
            ("noise_gps_sd", self.noise.gps_sd),
            ("noise_heading_sd", self.noise.heading_sd),
            ("noise_slip_gain", self.noise.slip_gain),
            ("sample_noise_sd", self.sample_noise_sd),
        ] {
            if v < 0.0 {
                return fail(format!("{name} must be >= 0"));
            }
        }
        let c = &self.ctrl;
        if !(0.0 <= c.blob_exit_val && c.blob_exit_val < c.blob_enter_val && c.blob_enter_val <= 1.0)
        {
            return fail("need 0 <= blob_exit_val < blob_enter_val <= 1".into());
        }
        for (name, v) in [
            ("ctrl_base_fwd", c.base_fwd),
            ("ctrl_recover_speed", c.recover_speed),
            ("ctrl_sample_period", c.sample_period),
            ("ctrl_osc_period", c.osc_period),
            ("ctrl_stuck_time", c.stuck_time),
            ("ctrl_recover_timeout", c.recover_timeout),
            ("robot_max_speed", self.max_speed),
            ("block_radius", self.block_radius),
        ] {
            if !(v > 0.0) {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.blobs.sigma <= 0.0 {
            return fail("field_sigma must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_dump_round_trips() {
        let mut reference = RunConfig::default();
        reference.seed = 42;
        reference.team_size = 3;
        reference.weather = Weather::Rain;
        reference.ctrl.blob_enter_val = 0.6;
        reference.pf.alpha = 0.7;
        reference.obstacles = vec![Obstacle { cx: 1.0, cy: -2.0, radius: 0.25 }];

        let mut parsed = RunConfig::default();
        parsed.apply_text(&reference.to_kv()).unwrap();
        assert_eq!(parsed, reference);
    }

    #[test]
    fn every_dumped_key_is_accepted() {
        let dump = RunConfig::default().to_kv();
        let mut cfg = RunConfig::default();
        for line in dump.lines() {
            let (k, v) = line.split_once('=').unwrap();
            cfg.apply_kv(k.trim(), v.trim())
                .unwrap_or_else(|e| panic!("key {k:?} rejected: {e}"));
        }
    }

    #[test]
    fn unknown_key_is_an_error() {
        let mut cfg = RunConfig::default();
        assert!(matches!(
            cfg.apply_kv("warp_speed", "9"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            cfg.apply_text("team_size = 3\nbogus = 1\n"),
            Err(ConfigError::UnknownKey(_))
        ));
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# a comment\n\nseed = 9 # trailing\n  weather = fog\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.weather, Weather::Fog);
    }

    #[test]
    fn malformed_line_is_reported_with_number() {
        let mut cfg = RunConfig::default();
        match cfg.apply_text("seed = 1\nnot a kv line\n") {
            Err(ConfigError::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed line, got {other:?}"),
        }
    }

    #[test]
    fn validation_catches_bad_thresholds() {
        let mut cfg = RunConfig::default();
        cfg.ctrl.blob_exit_val = 0.9; // above enter threshold
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.team_size = 0;
        assert!(cfg.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn obstacles_none_clears_the_list() {
        let mut cfg = RunConfig::default();
        cfg.apply_kv("obstacles", "none").unwrap();
        assert!(cfg.obstacles.is_empty());
        cfg.apply_kv("obstacles", "1.0,2.0,0.3; -1,0,0.2").unwrap();
        assert_eq!(cfg.obstacles.len(), 2);
        assert!(cfg.apply_kv("obstacles", "1.0,2.0").is_err());
    }
}

//! Flat `key = value` run configuration.

use std::fmt;

use inekf_core::dynamics::NoiseParams;
use inekf_core::kinematics::{LeggedRobot, DEFAULT_HIP_OFFSET, DEFAULT_LINKS};
use inekf_core::liegroup::Vec3;
use inekf_core::qekf::Discretization;
use inekf_core::sim::{BodyMotion, FilterSetup, Gait, InitSampler, InitStd, SpeedProfile, TrajectorySpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub noise: NoiseParams,
    pub init: InitStd,
    pub gravity: Vec3,
    pub links: [f64; 3],
    pub hip_offset: f64,
    pub gait: Gait,
    pub duration: f64,
    pub imu_rate: f64,
    pub encoder_rate: f64,
    pub start_speed: f64,
    pub speed: f64,
    pub ramp_start: f64,
    pub ramp_end: f64,
    pub body_motion: bool,
    pub slip: f64,
    pub sim_noise: bool,
    pub sim_seed: u64,
    pub estimate_bias: bool,
    /// Chi-square gate probability; zero disables gating.
    pub gate_probability: f64,
    pub qekf_discretization: Discretization,
    pub mc_angle: f64,
    pub mc_velocity: f64,
    pub lintest_duration: f64,
    pub lintest_speed: f64,
    /// Per-axis initial orientation errors, radians.
    pub lintest_scales: Vec<f64>,
    pub covsample_duration: f64,
    pub covsample_yaw_std: f64,
    pub covsample_samples: usize,
}

impl Default for Config {
    fn default() -> Self {
        let spec = TrajectorySpec::accelerating_walk();
        Config {
            noise: NoiseParams::default(),
            init: InitStd::default(),
            gravity: spec.gravity,
            links: DEFAULT_LINKS,
            hip_offset: DEFAULT_HIP_OFFSET,
            gait: Gait::default(),
            duration: spec.duration,
            imu_rate: spec.imu_rate,
            encoder_rate: spec.encoder_rate,
            start_speed: spec.speed.start,
            speed: spec.speed.end,
            ramp_start: spec.speed.ramp_start,
            ramp_end: spec.speed.ramp_end,
            body_motion: true,
            slip: 0.0,
            sim_noise: true,
            sim_seed: spec.seed,
            estimate_bias: false,
            gate_probability: 0.0,
            qekf_discretization: Discretization::Exponential,
            mc_angle: 30f64.to_radians(),
            mc_velocity: 1.0,
            lintest_duration: 1.0,
            lintest_speed: 0.5,
            lintest_scales: [0.0, 22.5, 45.0, 67.5, 90.0].iter().map(|d: &f64| d.to_radians()).collect(),
            covsample_duration: 8.0,
            covsample_yaw_std: 360f64.to_radians(),
            covsample_samples: 10_000,
        }
    }
}

fn number(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("expected a number, found '{v}'"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a finite number, found '{v}'"))
    }
}

fn list(v: &str) -> Result<Vec<f64>, String> {
    v.split(',').map(|s| number(s.trim())).collect()
}

fn triple(v: &str) -> Result<[f64; 3], String> {
    let xs = list(v)?;
    xs.try_into().map_err(|xs: Vec<f64>| format!("expected 3 comma-separated numbers, found {}", xs.len()))
}

fn flag(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected true or false, found '{v}'")),
    }
}

fn count(v: &str) -> Result<u64, String> {
    v.parse().map_err(|_| format!("expected a non-negative integer, found '{v}'"))
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut c = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError { line: i + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key = value, found '{line}'")))?;
            c.set(key.trim(), value.trim()).map_err(err)?;
        }
        c.validate().map_err(|message| ConfigError { line: 0, message })?;
        Ok(c)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let deg = |v: &str| number(v).map(f64::to_radians);
        match key {
            "noise.gyro" => self.noise.gyro = number(v)?,
            "noise.accel" => self.noise.accel = number(v)?,
            "noise.gyro_bias" => self.noise.gyro_bias = number(v)?,
            "noise.accel_bias" => self.noise.accel_bias = number(v)?,
            "noise.contact" => self.noise.contact = number(v)?,
            "noise.encoder_deg" => self.noise.encoder = deg(v)?,
            "init.orientation_deg" => self.init.orientation = deg(v)?,
            "init.velocity" => self.init.velocity = number(v)?,
            "init.position" => self.init.position = number(v)?,
            "init.gyro_bias" => self.init.gyro_bias = number(v)?,
            "init.accel_bias" => self.init.accel_bias = number(v)?,
            "gravity" => self.gravity = Vec3::from(triple(v)?),
            "leg.links" => self.links = triple(v)?,
            "leg.hip_offset" => self.hip_offset = number(v)?,
            "gait.step_period" => self.gait.step_period = number(v)?,
            "gait.stance_fraction" => self.gait.stance_fraction = number(v)?,
            "gait.swing_height" => self.gait.swing_height = number(v)?,
            "gait.unload_time" => self.gait.unload_time = number(v)?,
            "sim.duration" => self.duration = number(v)?,
            "sim.imu_rate" => self.imu_rate = number(v)?,
            "sim.encoder_rate" => self.encoder_rate = number(v)?,
            "sim.start_speed" => self.start_speed = number(v)?,
            "sim.speed" => self.speed = number(v)?,
            "sim.ramp_start" => self.ramp_start = number(v)?,
            "sim.ramp_end" => self.ramp_end = number(v)?,
            "sim.body_motion" => self.body_motion = flag(v)?,
            "sim.slip" => self.slip = number(v)?,
            "sim.noise" => self.sim_noise = flag(v)?,
            "sim.seed" => self.sim_seed = count(v)?,
            "filter.estimate_bias" => self.estimate_bias = flag(v)?,
            "filter.gate_probability" => self.gate_probability = number(v)?,
            "filter.qekf_discretization" => {
                self.qekf_discretization = match v {
                    "exponential" => Discretization::Exponential,
                    "first-order" => Discretization::FirstOrder,
                    _ => return Err(format!("expected exponential or first-order, found '{v}'")),
                }
            }
            "mc.init_angle_deg" => self.mc_angle = deg(v)?,
            "mc.init_velocity" => self.mc_velocity = number(v)?,
            "lintest.duration" => self.lintest_duration = number(v)?,
            "lintest.speed" => self.lintest_speed = number(v)?,
            "lintest.scales_deg" => self.lintest_scales = list(v)?.into_iter().map(f64::to_radians).collect(),
            "covsample.duration" => self.covsample_duration = number(v)?,
            "covsample.yaw_std_deg" => self.covsample_yaw_std = deg(v)?,
            "covsample.samples" => self.covsample_samples = count(v)? as usize,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), String> {
        let positive = [
            ("sim.duration", self.duration),
            ("sim.imu_rate", self.imu_rate),
            ("sim.encoder_rate", self.encoder_rate),
            ("gait.step_period", self.gait.step_period),
            ("lintest.duration", self.lintest_duration),
            ("covsample.duration", self.covsample_duration),
        ];
        for (k, v) in positive {
            if v <= 0.0 {
                return Err(format!("{k} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.gate_probability) {
            return Err("filter.gate_probability must be in [0, 1)".into());
        }
        Ok(())
    }

    pub fn robot(&self) -> LeggedRobot {
        LeggedRobot::biped(self.hip_offset, self.links)
    }

    pub fn trajectory(&self) -> TrajectorySpec {
        let defaults = TrajectorySpec::accelerating_walk();
        let body = if self.body_motion { defaults.body } else { BodyMotion::still(defaults.body.height) };
        let spec = TrajectorySpec {
            duration: self.duration,
            imu_rate: self.imu_rate,
            encoder_rate: self.encoder_rate,
            gait: self.gait,
            speed: SpeedProfile { start: self.start_speed, end: self.speed, ramp_start: self.ramp_start, ramp_end: self.ramp_end },
            body,
            noise: self.noise,
            slip: self.slip,
            gravity: self.gravity,
            robot: self.robot(),
            seed: self.sim_seed,
            ..defaults
        };
        if self.sim_noise {
            spec
        } else {
            spec.noiseless()
        }
    }

    pub fn filter_setup(&self) -> FilterSetup {
        let mut setup = FilterSetup {
            noise: self.noise,
            gravity: self.gravity,
            robot: self.robot(),
            init_std: self.init,
            estimate_bias: self.estimate_bias,
            qekf_discretization: self.qekf_discretization,
            ..FilterSetup::default()
        };
        if self.gate_probability > 0.0 {
            setup.options.gate_probability = Some(self.gate_probability);
        }
        setup
    }

    pub fn sampler(&self) -> InitSampler {
        InitSampler { roll: self.mc_angle, pitch: self.mc_angle, yaw: self.mc_angle, velocity: self.mc_velocity }
    }
}

//! Synthetic legged-walking data.
//!
//! The body follows a smooth analytic path. IMU samples are the exact body
//! rate and specific force at the middle of each interval, and the ground
//! truth is the zero-order-hold integral of those samples, so replaying the
//! noiseless stream through the filter integrator reproduces it exactly.

mod experiments;
mod montecarlo;
mod runner;

pub use experiments::*;
pub use montecarlo::*;
pub use runner::*;

use std::f64::consts::TAU;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::{integrate_world, standard_gravity, NoiseParams};
use crate::error::{Error, Result};
use crate::kinematics::{KinematicsModel, LeggedRobot};
use crate::liegroup::{gamma0, Mat3, Vec3, SEK3};
use crate::state::BiasVector;

/// Timestamp in integer nanoseconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Stamp(pub i64);

impl Stamp {
    pub fn from_secs(t: f64) -> Self {
        Stamp((t * 1e9).round() as i64)
    }

    pub fn secs(self) -> f64 {
        self.0 as f64 * 1e-9
    }
}

impl fmt::Display for Stamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:09}", a / 1_000_000_000, a % 1_000_000_000)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SensorData {
    Imu { gyro: Vec3, accel: Vec3 },
    Encoders(Vec<f64>),
    Contact { id: u32, flag: bool },
    Landmark { id: u32, pos: Vec3 },
    Gps(Vec3),
    Mag(Vec3),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensorRecord {
    pub stamp: Stamp,
    pub data: SensorData,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruthState {
    pub stamp: Stamp,
    pub x: SEK3,
    pub bias: BiasVector,
    /// World position of every foot, stance or not.
    pub feet: Vec<Vec3>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SensorLog {
    pub records: Vec<SensorRecord>,
    /// Truth at every IMU sample time.
    pub truth: Vec<TruthState>,
}

impl SensorLog {
    pub fn truth_at(&self, stamp: Stamp) -> Option<&TruthState> {
        self.truth.binary_search_by_key(&stamp, |s| s.stamp).ok().map(|i| &self.truth[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gait {
    pub step_period: f64,
    pub stance_fraction: f64,
    pub swing_height: f64,
    /// Time between the contact flag dropping and the foot starting to move.
    pub unload_time: f64,
}

impl Default for Gait {
    fn default() -> Self {
        Gait { step_period: 0.8, stance_fraction: 0.6, swing_height: 0.06, unload_time: 0.005 }
    }
}

/// Forward speed ramps smoothly from `start` to `end` over `[ramp_start, ramp_end]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpeedProfile {
    pub start: f64,
    pub end: f64,
    pub ramp_start: f64,
    pub ramp_end: f64,
}

impl SpeedProfile {
    pub fn constant(v: f64) -> Self {
        SpeedProfile { start: v, end: v, ramp_start: 0.0, ramp_end: 1.0 }
    }

    fn is_moving(&self) -> bool {
        self.start != 0.0 || self.end != 0.0
    }

    fn ramp(&self, t: f64) -> (f64, f64, f64) {
        let len = self.ramp_end - self.ramp_start;
        let u = ((t - self.ramp_start) / len).clamp(0.0, 1.0);
        let s = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
        let ds = if u > 0.0 && u < 1.0 { 30.0 * u * u * (1.0 - u) * (1.0 - u) / len } else { 0.0 };
        let integral = if t <= self.ramp_start {
            0.0
        } else if t >= self.ramp_end {
            0.5 * len + (t - self.ramp_end)
        } else {
            len * u.powi(4) * (2.5 - 3.0 * u + u * u)
        };
        (integral, s, ds)
    }

    /// Distance, speed and acceleration at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let dv = self.end - self.start;
        let (i, s, ds) = self.ramp(t);
        (self.start * t + dv * i, self.start + dv * s, dv * ds)
    }
}

/// Small periodic body motions on top of the forward walk.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyMotion {
    pub height: f64,
    pub bob: f64,
    pub sway: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub yaw_period: f64,
}

impl Default for BodyMotion {
    fn default() -> Self {
        BodyMotion { height: 0.75, bob: 0.01, sway: 0.02, roll: 0.03, pitch: 0.03, yaw: 0.1, yaw_period: 6.0 }
    }
}

impl BodyMotion {
    pub fn still(height: f64) -> Self {
        BodyMotion { height, bob: 0.0, sway: 0.0, roll: 0.0, pitch: 0.0, yaw: 0.0, yaw_period: 6.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySpec {
    pub duration: f64,
    pub imu_rate: f64,
    pub encoder_rate: f64,
    pub gait: Gait,
    pub speed: SpeedProfile,
    pub body: BodyMotion,
    pub noise: NoiseParams,
    /// Random-walk std of each stance foot in its contact frame (m/sqrt(s)).
    pub slip: f64,
    pub initial_bias: BiasVector,
    pub gravity: Vec3,
    pub robot: LeggedRobot,
    pub seed: u64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec {
            duration: 10.0,
            imu_rate: 1000.0,
            encoder_rate: 1000.0,
            gait: Gait::default(),
            speed: SpeedProfile { start: 0.0, end: 0.3, ramp_start: 0.5, ramp_end: 3.0 },
            body: BodyMotion::default(),
            noise: NoiseParams::default(),
            slip: 0.0,
            initial_bias: BiasVector::default(),
            gravity: standard_gravity(),
            robot: LeggedRobot::default(),
            seed: 1,
        }
    }
}

impl TrajectorySpec {
    /// Walk accelerating from rest to 0.3 m/s with the default noise levels.
    pub fn accelerating_walk() -> Self {
        TrajectorySpec::default()
    }

    pub fn steady_walk(speed: f64) -> Self {
        let gait = if speed > 0.6 { Gait { step_period: 0.6, ..Gait::default() } } else { Gait::default() };
        TrajectorySpec { speed: SpeedProfile::constant(speed), gait, ..TrajectorySpec::default() }
    }

    pub fn standing() -> Self {
        TrajectorySpec {
            speed: SpeedProfile::constant(0.0),
            body: BodyMotion::still(0.75),
            ..TrajectorySpec::default()
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.noise = NoiseParams::zero();
        self
    }

    fn validate(&self) -> Result<()> {
        let ok = self.duration > 0.0
            && self.imu_rate > 0.0
            && self.encoder_rate > 0.0
            && self.gait.step_period > 0.0
            && self.gait.stance_fraction > 0.0
            && self.gait.stance_fraction <= 1.0
            && 1.0 / self.imu_rate <= crate::dynamics::MAX_IMU_DT;
        if ok {
            Ok(())
        } else {
            Err(Error::Unsupported("trajectory spec out of range"))
        }
    }
}

/// Euler angles (roll, pitch, yaw) and their rates.
fn attitude(b: &BodyMotion, gait: &Gait, t: f64) -> ([f64; 3], [f64; 3]) {
    let w1 = TAU / gait.step_period;
    let w2 = 2.0 * w1;
    let wy = TAU / b.yaw_period;
    (
        [b.roll * (w1 * t).sin(), b.pitch * (w2 * t).sin(), b.yaw * (wy * t).sin()],
        [b.roll * w1 * (w1 * t).cos(), b.pitch * w2 * (w2 * t).cos(), b.yaw * wy * (wy * t).cos()],
    )
}

pub fn euler_to_rotation(roll: f64, pitch: f64, yaw: f64) -> Mat3 {
    gamma0(&(Vec3::z() * yaw)) * gamma0(&(Vec3::y() * pitch)) * gamma0(&(Vec3::x() * roll))
}

struct Plan<'a> {
    spec: &'a TrajectorySpec,
}

impl Plan<'_> {
    fn rotation(&self, t: f64) -> Mat3 {
        let (e, _) = attitude(&self.spec.body, &self.spec.gait, t);
        euler_to_rotation(e[0], e[1], e[2])
    }

    fn body_rate(&self, t: f64) -> Vec3 {
        let (e, d) = attitude(&self.spec.body, &self.spec.gait, t);
        let (sr, cr) = e[0].sin_cos();
        let (sp, cp) = e[1].sin_cos();
        Vec3::new(d[0] - d[2] * sp, d[1] * cr + d[2] * cp * sr, -d[1] * sr + d[2] * cp * cr)
    }

    /// Position, velocity and acceleration of the body.
    fn translation(&self, t: f64) -> (Vec3, Vec3, Vec3) {
        let b = &self.spec.body;
        let w1 = TAU / self.spec.gait.step_period;
        let w2 = 2.0 * w1;
        let (x, vx, ax) = self.spec.speed.eval(t);
        let (s1, c1) = (w1 * t).sin_cos();
        let (s2, c2) = (w2 * t).sin_cos();
        (
            Vec3::new(x, b.sway * s1, b.height + b.bob * c2),
            Vec3::new(vx, b.sway * w1 * c1, -b.bob * w2 * s2),
            Vec3::new(ax, -b.sway * w1 * w1 * s1, -b.bob * w2 * w2 * c2),
        )
    }

    fn stepping(&self) -> bool {
        self.spec.speed.is_moving()
    }

    fn leg_offset(leg: usize) -> f64 {
        if leg.is_multiple_of(2) {
            0.0
        } else {
            0.5
        }
    }

    /// Index of the stance interval containing `t`, or the last one before it.
    fn stance_index(&self, leg: usize, t: f64) -> (i64, bool) {
        let g = &self.spec.gait;
        let phase = t / g.step_period + Self::leg_offset(leg);
        let n = phase.floor();
        (n as i64, phase - n < g.stance_fraction)
    }

    fn stance_bounds(&self, leg: usize, n: i64) -> (f64, f64) {
        let g = &self.spec.gait;
        let start = (n as f64 - Self::leg_offset(leg)) * g.step_period;
        (start, start + g.stance_fraction * g.step_period)
    }

    fn foothold(&self, leg: usize, n: i64) -> Vec3 {
        let hip = self.spec.robot.legs[leg].base;
        let tm = if self.stepping() {
            let (s, e) = self.stance_bounds(leg, n);
            0.5 * (s + e)
        } else {
            0.0
        };
        let (p, _, _) = self.translation(tm);
        let (e, _) = attitude(&self.spec.body, &self.spec.gait, tm);
        let h = gamma0(&(Vec3::z() * e[2])) * Vec3::new(hip.x, hip.y, 0.0);
        Vec3::new(p.x + h.x, p.y + h.y, 0.0)
    }

    /// Foothold of the current (or last) stance, the next foothold, and the
    /// swing progress in `[0, 1]` (zero while the foot is planted).
    fn foot_phase(&self, leg: usize, t: f64) -> (i64, bool, Vec3, Vec3, f64) {
        if !self.stepping() {
            let f = self.foothold(leg, 0);
            return (0, true, f, f, 0.0);
        }
        let (n, stance) = self.stance_index(leg, t);
        let from = self.foothold(leg, n);
        if stance {
            return (n, true, from, from, 0.0);
        }
        let to = self.foothold(leg, n + 1);
        let (_, lift) = self.stance_bounds(leg, n);
        let (land, _) = self.stance_bounds(leg, n + 1);
        let start = lift + self.spec.gait.unload_time;
        let u = ((t - start) / (land - start)).max(0.0);
        (n, false, from, to, u)
    }
}

fn swing_point(from: &Vec3, to: &Vec3, u: f64, height: f64) -> Vec3 {
    if u <= 0.0 {
        return *from;
    }
    let blend = u - (TAU * u).sin() / TAU;
    let mut p = from + (to - from) * blend;
    p.z += height * 0.5 * (1.0 - (TAU * u).cos());
    p
}

fn period_ns(rate: f64) -> i64 {
    (1e9 / rate).round() as i64
}

/// Noise substream ids.
const STREAM_GYRO: u64 = 0;
const STREAM_ACCEL: u64 = 1;
const STREAM_GYRO_BIAS: u64 = 2;
const STREAM_ACCEL_BIAS: u64 = 3;
const STREAM_ENCODER: u64 = 4;
const STREAM_SLIP: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normal3(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng))
}

/// Simulates the walk described by `spec`.
pub fn generate(spec: &TrajectorySpec) -> Result<SensorLog> {
    spec.validate()?;
    let plan = Plan { spec };
    let legs = spec.robot.legs.len();
    let imu_ns = period_ns(spec.imu_rate);
    let enc_ns = period_ns(spec.encoder_rate);
    let end_ns = Stamp::from_secs(spec.duration).0;
    let dt = imu_ns as f64 * 1e-9;
    let noise = &spec.noise;
    let g = spec.gravity;

    let mut rng_g = stream(spec.seed, STREAM_GYRO);
    let mut rng_a = stream(spec.seed, STREAM_ACCEL);
    let mut rng_bg = stream(spec.seed, STREAM_GYRO_BIAS);
    let mut rng_ba = stream(spec.seed, STREAM_ACCEL_BIAS);
    let mut rng_e = stream(spec.seed, STREAM_ENCODER);
    let mut rng_s = stream(spec.seed, STREAM_SLIP);

    let (p0, v0, _) = plan.translation(0.0);
    let mut x = SEK3 { rot: plan.rotation(0.0), cols: vec![v0, p0] };
    let mut bias = spec.initial_bias;
    let mut alphas: Vec<Vec<f64>> = vec![vec![0.0, 0.3, -0.6]; legs];
    let mut slip = vec![(i64::MIN, Vec3::zeros()); legs];

    let mut log = SensorLog::default();
    let mut next_imu = 0i64;
    let mut next_enc = 0i64;
    let mut held = (Vec3::zeros(), Vec3::zeros());
    let mut held_stamp = 0i64;
    let mut held_x = x.clone();

    let foot_world = |leg: usize, t: f64, slip: &[(i64, Vec3)]| {
        let (n, _, from, to, u) = plan.foot_phase(leg, t);
        let from = if slip[leg].0 == n { from + slip[leg].1 } else { from };
        swing_point(&from, &to, u, spec.gait.swing_height)
    };

    while next_imu <= end_ns || next_enc <= end_ns {
        let now = next_imu.min(next_enc);
        let t = now as f64 * 1e-9;
        if now == next_imu {
            if now > 0 {
                x = integrate_world(&x, &held.0, &held.1, dt, &g);
            }
            let feet = (0..legs).map(|l| foot_world(l, t, &slip)).collect();
            log.truth.push(TruthState { stamp: Stamp(now), x: x.clone(), bias, feet });

            let mid = t + 0.5 * dt;
            let rot_mid = plan.rotation(mid);
            let (_, _, acc) = plan.translation(mid);
            let w = plan.body_rate(mid);
            let f = rot_mid.transpose() * (acc - g);
            let sd = 1.0 / dt.sqrt();
            let gyro = w + bias.gyro + normal3(&mut rng_g) * (noise.gyro * sd);
            let accel = f + bias.accel + normal3(&mut rng_a) * (noise.accel * sd);
            log.records.push(SensorRecord { stamp: Stamp(now), data: SensorData::Imu { gyro, accel } });
            held = (w, f);
            held_stamp = now;
            held_x = x.clone();
            bias.gyro += normal3(&mut rng_bg) * (noise.gyro_bias * dt.sqrt());
            bias.accel += normal3(&mut rng_ba) * (noise.accel_bias * dt.sqrt());
            next_imu += imu_ns;
        }
        if now == next_enc {
            // truth pose at this instant from the held IMU sample
            let pose = if now == held_stamp {
                held_x.clone()
            } else {
                integrate_world(&held_x, &held.0, &held.1, (now - held_stamp) as f64 * 1e-9, &g)
            };
            let enc_dt = enc_ns as f64 * 1e-9;
            let mut reading = Vec::with_capacity(spec.robot.joint_count());
            let mut flags = Vec::with_capacity(legs);
            for leg in 0..legs {
                let (n, stance, _, _, _) = plan.foot_phase(leg, t);
                let foot = foot_world(leg, t, &slip);
                let rel = pose.rot.transpose() * (foot - pose.cols[1]);
                let model = &spec.robot.legs[leg];
                let q = model
                    .inverse(&rel, &alphas[leg])
                    .map_err(|e| match e {
                        Error::Unreachable { residual, .. } => Error::Unreachable { leg, residual },
                        other => other,
                    })?;
                if spec.slip > 0.0 && stance {
                    if slip[leg].0 != n {
                        slip[leg] = (n, Vec3::zeros());
                    }
                    let contact_rot = pose.rot * model.orientation(&q)?;
                    slip[leg].1 += contact_rot * normal3(&mut rng_s) * (spec.slip * enc_dt.sqrt());
                }
                for &qi in &q {
                    let n: f64 = StandardNormal.sample(&mut rng_e);
                    reading.push(qi + noise.encoder * n);
                }
                alphas[leg] = q;
                flags.push(stance);
            }
            log.records.push(SensorRecord { stamp: Stamp(now), data: SensorData::Encoders(reading) });
            for (leg, flag) in flags.into_iter().enumerate() {
                log.records.push(SensorRecord {
                    stamp: Stamp(now),
                    data: SensorData::Contact { id: leg as u32, flag },
                });
            }
            next_enc += enc_ns;
        }
    }
    Ok(log)
}

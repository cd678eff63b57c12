//! Subcommand bodies. Each returns its CSV output as a string.

use std::fmt::Write as _;

use inekf_core::sim::{
    generate, horizontal_ring_ratio, linearization_sweep, make_estimator, monte_carlo, position_cloud, replay_log, truth_pose, FilterKind,
    Pose, SensorLog, SpeedProfile, TrajectorySpec,
};
use inekf_core::state::BiasVector;
use nalgebra::{Rotation3, UnitQuaternion};

use crate::config::Config;
use crate::logio::{write_log, write_truth};

pub type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

/// Sensor log text and its truth companion.
pub fn simulate(cfg: &Config) -> Result<(String, String)> {
    let log = generate(&cfg.trajectory())?;
    Ok((write_log(&log.records), write_truth(&log.truth)))
}

fn start_of(log: &SensorLog) -> (Pose, BiasVector) {
    match log.truth.first() {
        Some(t) => (truth_pose(&t.x), t.bias),
        None => (Pose { rot: nalgebra::Matrix3::identity(), vel: Default::default(), pos: Default::default() }, BiasVector::default()),
    }
}

pub const TRAJECTORY_HEADER: &str =
    "t,qw,qx,qy,qz,vx,vy,vz,px,py,pz,bgx,bgy,bgz,bax,bay,baz,P_phix,P_phiy,P_phiz,P_vx,P_vy,P_vz,P_px,P_py,P_pz";

/// Filter estimate after every IMU record. Starts from the first truth
/// sample when the log has one, otherwise from rest at the origin.
pub fn run(cfg: &Config, log: &SensorLog, kind: FilterKind) -> Result<String> {
    let (pose, bias) = start_of(log);
    let est = make_estimator(kind, &pose, bias, &cfg.filter_setup())?;
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    let mut failure = None;
    replay_log(log, est, |stamp, e| {
        let p = e.pose();
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(p.rot));
        let b = e.bias();
        let cov = match e.euclidean_covariance() {
            Ok(c) => c,
            Err(err) => {
                failure.get_or_insert(err);
                return;
            }
        };
        write!(out, "{stamp}").unwrap();
        let diag = cov.diagonal();
        let values = [q.w, q.i, q.j, q.k]
            .into_iter()
            .chain(p.vel.iter().copied())
            .chain(p.pos.iter().copied())
            .chain(b.gyro.iter().copied())
            .chain(b.accel.iter().copied())
            .chain(diag.iter().copied());
        for v in values {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    })?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(out),
    }
}

pub const METRICS_HEADER: &str = "filter,run,time_to_converge,steady_tilt_deg,steady_velocity,final_position_error";

/// Monte Carlo metrics, one row per filter and run; an empty
/// `time_to_converge` means the run never converged.
pub fn montecarlo(cfg: &Config, log: &SensorLog, kinds: &[FilterKind], runs: usize, seed: u64) -> Result<String> {
    if log.truth.is_empty() {
        return Err("Monte Carlo needs the log's truth file".into());
    }
    let setup = cfg.filter_setup();
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for &kind in kinds {
        for m in monte_carlo(log, runs, &cfg.sampler(), kind, &setup, seed)? {
            let ttc = m.time_to_converge.map(|t| t.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{ttc},{},{},{}",
                kind.name(),
                m.run,
                m.steady_tilt.to_degrees(),
                m.steady_velocity,
                m.final_position_error
            )
            .unwrap();
        }
    }
    Ok(out)
}

/// Prediction error of the linearized error dynamics against the initial
/// attitude error, on a noiseless bias-free walk.
pub fn lintest(cfg: &Config) -> Result<String> {
    let spec = TrajectorySpec {
        duration: cfg.lintest_duration,
        speed: SpeedProfile::constant(cfg.lintest_speed),
        initial_bias: BiasVector::default(),
        ..cfg.trajectory()
    }
    .noiseless();
    let log = generate(&spec)?;
    let mut out = String::from("scale_deg,inekf_error,qekf_error\n");
    for p in linearization_sweep(&log, &cfg.lintest_scales, &cfg.gravity)? {
        writeln!(out, "{},{},{}", p.scale.to_degrees(), p.inekf, p.qekf).unwrap();
    }
    Ok(out)
}

/// Position samples after a walk started with a large yaw uncertainty,
/// plus each cloud's ring ratio.
pub fn covsample(cfg: &Config, kinds: &[FilterKind], seed: u64) -> Result<(String, Vec<(FilterKind, f64)>)> {
    let spec = TrajectorySpec { duration: cfg.covsample_duration, ..cfg.trajectory() };
    let log = generate(&spec)?;
    let setup = cfg.filter_setup();
    let mut out = String::from("filter,x,y,z\n");
    let mut ratios = Vec::new();
    for &kind in kinds {
        let pts = position_cloud(&log, kind, &setup, cfg.covsample_yaw_std, cfg.covsample_samples, seed)?;
        for p in &pts {
            writeln!(out, "{},{},{},{}", kind.name(), p.x, p.y, p.z).unwrap();
        }
        ratios.push((kind, horizontal_ring_ratio(&pts)));
    }
    Ok((out, ratios))
}

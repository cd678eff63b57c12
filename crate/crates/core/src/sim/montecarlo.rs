use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{gaussian_samples, tilt_error, time_to_converge, ConvergenceCriteria};
use crate::error::Result;
use crate::liegroup::{Vec3, SEK3};
use crate::qekf::QekfBelief;
use crate::state::{Convention, ErrorFrame, FilterBelief};

use super::runner::{make_estimator, truth_pose, Estimator, FilterKind, FilterSetup, Pose, Replay, ReplayStats};
use super::{euler_to_rotation, SensorData, SensorLog, Stamp};

/// Uniform initial errors: each Euler angle in `[-a, a]`, each velocity component in `[-v, v]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitSampler {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub velocity: f64,
}

impl Default for InitSampler {
    fn default() -> Self {
        let a = 30.0_f64.to_radians();
        InitSampler { roll: a, pitch: a, yaw: a, velocity: 1.0 }
    }
}

impl InitSampler {
    pub fn exact() -> Self {
        InitSampler { roll: 0.0, pitch: 0.0, yaw: 0.0, velocity: 0.0 }
    }

    pub fn sample<R: Rng>(&self, truth: &Pose, rng: &mut R) -> Pose {
        let mut u = |a: f64| if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 };
        let (dr, dp, dy) = (u(self.roll), u(self.pitch), u(self.yaw));
        let dv = Vec3::new(u(self.velocity), u(self.velocity), u(self.velocity));
        Pose { rot: truth.rot * euler_to_rotation(dr, dp, dy), vel: truth.vel + dv, pos: truth.pos }
    }
}

/// Estimation errors sampled at every IMU record.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorSeries {
    pub times: Vec<f64>,
    pub tilt: Vec<f64>,
    /// Norm of the body-frame velocity error.
    pub velocity: Vec<f64>,
    pub position: Vec<f64>,
}

impl ErrorSeries {
    /// Mean tilt and velocity error over the final `window` seconds.
    pub fn tail_mean(&self, window: f64) -> (f64, f64) {
        let Some(&end) = self.times.last() else { return (f64::NAN, f64::NAN) };
        let idx: Vec<usize> = (0..self.times.len()).filter(|&i| self.times[i] >= end - window).collect();
        let n = idx.len() as f64;
        (
            idx.iter().map(|&i| self.tilt[i]).sum::<f64>() / n,
            idx.iter().map(|&i| self.velocity[i]).sum::<f64>() / n,
        )
    }
}

/// Replays the whole log, calling `sample` after the state reaches each IMU time.
pub fn replay_log<E: Estimator>(
    log: &SensorLog,
    estimator: E,
    mut sample: impl FnMut(Stamp, &E),
) -> Result<(E, ReplayStats)> {
    let mut replay = Replay::new(estimator);
    for rec in &log.records {
        replay.step(rec)?;
        if matches!(rec.data, SensorData::Imu { .. }) {
            sample(rec.stamp, &replay.estimator);
        }
    }
    Ok((replay.estimator, replay.stats))
}

pub fn track_errors<E: Estimator>(log: &SensorLog, estimator: E) -> Result<(E, ErrorSeries)> {
    let mut s = ErrorSeries::default();
    let (est, _) = replay_log(log, estimator, |stamp, e| {
        if let Some(truth) = log.truth_at(stamp) {
            let p = e.pose();
            let t = truth_pose(&truth.x);
            s.times.push(stamp.secs());
            s.tilt.push(tilt_error(&p.rot, &t.rot));
            s.velocity.push((p.rot.transpose() * p.vel - t.rot.transpose() * t.vel).norm());
            s.position.push((p.pos - t.pos).norm());
        }
    })?;
    Ok((est, s))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub run: usize,
    pub time_to_converge: Option<f64>,
    /// Mean tilt error over the final second, radians.
    pub steady_tilt: f64,
    pub steady_velocity: f64,
    pub final_position_error: f64,
    pub errors: ErrorSeries,
}

fn run_seed(seed: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    rng
}

/// Initial pose for run `run`, identical for every filter kind.
pub fn initial_pose(log: &SensorLog, sampler: &InitSampler, seed: u64, run: usize) -> Pose {
    let truth = truth_pose(&log.truth[0].x);
    sampler.sample(&truth, &mut run_seed(seed, run))
}

pub fn run_once(
    log: &SensorLog,
    kind: FilterKind,
    init: &Pose,
    setup: &FilterSetup,
    criteria: &ConvergenceCriteria,
    run: usize,
) -> Result<RunMetrics> {
    let est = make_estimator(kind, init, log.truth[0].bias, setup)?;
    let (_, errors) = track_errors(log, est)?;
    let (steady_tilt, steady_velocity) = errors.tail_mean(1.0);
    Ok(RunMetrics {
        run,
        time_to_converge: time_to_converge(&errors.times, &errors.tilt, &errors.velocity, criteria),
        steady_tilt,
        steady_velocity,
        final_position_error: errors.position.last().copied().unwrap_or(f64::NAN),
        errors,
    })
}

/// Runs `n_runs` filters with randomized initial orientation and velocity on the
/// same measurements. Results are ordered by run index.
pub fn monte_carlo(
    log: &SensorLog,
    n_runs: usize,
    sampler: &InitSampler,
    kind: FilterKind,
    setup: &FilterSetup,
    seed: u64,
) -> Result<Vec<RunMetrics>> {
    let criteria = ConvergenceCriteria::default();
    (0..n_runs)
        .map(|run| {
            let init = initial_pose(log, sampler, seed, run);
            run_once(log, kind, &init, setup, &criteria, run)
        })
        .collect()
}

/// World positions drawn from an invariant belief by pushing tangent samples
/// through the group exponential.
pub fn covariance_samples<R: Rng>(b: &FilterBelief, n: usize, rng: &mut R) -> Vec<Vec3> {
    let world = if b.convention == Convention::Robo { b.inverted() } else { b.clone() };
    let g = world.group_dim();
    let cov: DMatrix<f64> = world.cov.view((0, 0), (g, g)).into_owned();
    gaussian_samples(&cov, n, rng)
        .into_iter()
        .map(|xi| {
            let e = SEK3::exp(&xi);
            let x = match world.frame {
                ErrorFrame::Right => e.compose(&world.x),
                ErrorFrame::Left => world.x.compose(&e),
            }
            .expect("matching dimension");
            x.cols[1]
        })
        .collect()
}

/// Additive Gaussian position samples from the baseline filter.
pub fn qekf_covariance_samples<R: Rng>(b: &QekfBelief, n: usize, rng: &mut R) -> Vec<Vec3> {
    let cov: DMatrix<f64> = b.cov.view((6, 6), (3, 3)).into_owned();
    gaussian_samples(&cov, n, rng)
        .into_iter()
        .map(|d| b.p + Vec3::new(d[0], d[1], d[2]))
        .collect()
}

use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::ring_ratio;
use crate::dynamics::{integrate_world, propagate_mean, transition_matrix, ImuSample};
use crate::error::{Error, Result};
use crate::liegroup::{log_so3, Vec3, SEK3};
use crate::qekf::{Discretization, QekfBelief};
use crate::state::{BiasVector, Convention, ErrorFrame, FilterBelief, BASE_DIM, BIAS_DIM};

use super::montecarlo::{covariance_samples, qekf_covariance_samples, replay_log};
use super::runner::{truth_pose, FilterSetup, InvariantEstimator, QekfEstimator};
use super::{FilterKind, SensorData, SensorLog};

/// IMU samples of a log, each held until the next IMU record.
pub fn imu_samples(log: &SensorLog) -> Result<Vec<ImuSample>> {
    let imus: Vec<_> = log
        .records
        .iter()
        .filter_map(|r| match &r.data {
            SensorData::Imu { gyro, accel } => Some((r.stamp, *gyro, *accel)),
            _ => None,
        })
        .collect();
    imus.windows(2)
        .map(|w| ImuSample::new(w[0].1, w[0].2, w[1].0.secs() - w[0].0.secs()))
        .collect()
}

fn full(xi: &DVector<f64>) -> DVector<f64> {
    let mut v = DVector::zeros(BASE_DIM + BIAS_DIM);
    v.rows_mut(0, BASE_DIM).copy_from(xi);
    v
}

/// Propagates a right-invariant world belief started at `exp(xi0) X0` and its
/// linearized error alongside the true state. Returns the distance between the
/// true error coordinates and the linearly propagated ones.
pub fn inekf_linearization_error(log: &SensorLog, xi0: &DVector<f64>, g: &Vec3) -> Result<f64> {
    if xi0.len() != BASE_DIM {
        return Err(Error::DimensionMismatch { expected: BASE_DIM, found: xi0.len() });
    }
    let mut truth = log.truth.first().ok_or(Error::Unsupported("empty log"))?.x.clone();
    let start = SEK3::exp(xi0).compose(&truth)?;
    let cov = DMatrix::identity(BASE_DIM + BIAS_DIM, BASE_DIM + BIAS_DIM);
    let mut b = FilterBelief::new(
        start.rot,
        start.cols[0],
        start.cols[1],
        BiasVector::default(),
        cov,
        ErrorFrame::Right,
        Convention::World,
    )?;
    let mut xi = full(xi0);
    for imu in imu_samples(log)? {
        truth = integrate_world(&truth, &imu.gyro, &imu.accel, imu.dt, g);
        let next = propagate_mean(&b, &imu, g)?;
        xi = transition_matrix(&b, &next, &imu, g) * xi;
        b = next;
    }
    let actual = b.x.compose(&truth.inverse())?.log()?;
    Ok((actual - xi.rows(0, BASE_DIM)).norm())
}

/// Same experiment for the quaternion filter with errors
/// `(log(R^T R_hat), v_hat - v, p_hat - p)`.
pub fn qekf_linearization_error(log: &SensorLog, xi0: &DVector<f64>, g: &Vec3) -> Result<f64> {
    let mut truth = log.truth.first().ok_or(Error::Unsupported("empty log"))?.x.clone();
    let start = SEK3::exp(xi0).compose(&truth)?;
    let cov = DMatrix::identity(BASE_DIM + BIAS_DIM, BASE_DIM + BIAS_DIM);
    let mut b = QekfBelief::new(&start.rot, start.cols[0], start.cols[1], BiasVector::default(), cov)?;
    let error = |b: &QekfBelief, t: &SEK3| -> Result<DVector<f64>> {
        let dth = log_so3(&(t.rot.transpose() * b.rot()))?;
        let (dv, dp) = (b.v - t.cols[0], b.p - t.cols[1]);
        Ok(full(&DVector::from_iterator(BASE_DIM, dth.iter().chain(dv.iter()).chain(dp.iter()).cloned())))
    };
    let mut d = error(&b, &truth)?;
    for imu in imu_samples(log)? {
        truth = integrate_world(&truth, &imu.gyro, &imu.accel, imu.dt, g);
        d = b.transition(&imu, Discretization::Exponential) * d;
        b = b.predict_mean(&imu, g);
    }
    Ok((error(&b, &truth)? - d).norm())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearizationPoint {
    pub scale: f64,
    pub inekf: f64,
    pub qekf: f64,
}

/// Sweeps the initial orientation error `(s, s, s)` over `scales`.
pub fn linearization_sweep(log: &SensorLog, scales: &[f64], g: &Vec3) -> Result<Vec<LinearizationPoint>> {
    scales
        .iter()
        .map(|&s| {
            let mut xi0 = DVector::zeros(BASE_DIM);
            xi0.rows_mut(0, 3).copy_from(&Vector3::repeat(s));
            Ok(LinearizationPoint {
                scale: s,
                inekf: inekf_linearization_error(log, &xi0, g)?,
                qekf: qekf_linearization_error(log, &xi0, g)?,
            })
        })
        .collect()
}

/// Position cloud after replaying a log from the true start, with a
/// world-yaw standard deviation of `yaw_std` radians on top of `setup.init_std`.
pub fn position_cloud(
    log: &SensorLog,
    kind: FilterKind,
    setup: &FilterSetup,
    yaw_std: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<Vec3>> {
    let start = log.truth.first().ok_or(Error::Unsupported("empty log"))?;
    let pose = truth_pose(&start.x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let var = yaw_std * yaw_std;
    if kind == FilterKind::Qekf {
        let mut est = QekfEstimator::new(&pose, start.bias, setup)?;
        // The baseline's attitude error lives in the body frame.
        let z = pose.rot.transpose() * Vec3::z();
        let add = z * z.transpose() * var;
        let mut block = est.belief.cov.fixed_view_mut::<3, 3>(0, 0);
        block += add;
        let (est, _) = replay_log(log, est, |_, _| {})?;
        return Ok(qekf_covariance_samples(&est.belief, samples, &mut rng));
    }
    let mut est = InvariantEstimator::new(kind, &pose, start.bias, setup)?;
    let robo = est.belief.convention == Convention::Robo;
    let home = if robo { est.belief.frame.flipped() } else { est.belief.frame };
    let world = if robo { est.belief.inverted() } else { est.belief.clone() };
    let mut right = world.in_frame(ErrorFrame::Right);
    right.cov[(2, 2)] += var;
    let back = right.in_frame(home);
    est.belief = if robo { back.inverted() } else { back };
    let (est, _) = replay_log(log, est, |_, _| {})?;
    Ok(covariance_samples(&est.belief, samples, &mut rng))
}

/// Ring-shape statistic of a cloud's horizontal coordinates.
pub fn horizontal_ring_ratio(points: &[Vec3]) -> f64 {
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
    ring_ratio(&xy)
}

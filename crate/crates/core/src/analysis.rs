//! Error-coordinate conversions and experiment metrics.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::correction::{fk_term, invariant_observation};
use crate::dynamics::{propagate_mean, transition_matrix, ImuSample};
use crate::error::{Error, Result};
use crate::liegroup::{gamma1_inverse, log_so3, skew, Mat3, Vec3};
use crate::qekf::QekfBelief;
use crate::state::{Convention, ErrorFrame, FilterBelief, PointKind};

fn set3(m: &mut DMatrix<f64>, r: usize, c: usize, b: &Mat3) {
    m.fixed_view_mut::<3, 3>(r, c).copy_from(b);
}

/// Covariance of `(dphi, dv, dp)`, truth minus estimate with `R = exp(phi)`,
/// for a world-centric right-invariant belief.
pub fn right_invariant_to_euclidean(b: &FilterBelief) -> Result<DMatrix<f64>> {
    if b.frame != ErrorFrame::Right || b.convention != Convention::World {
        return Err(Error::WrongConvention);
    }
    let phi = log_so3(b.rot())?;
    let mut j = DMatrix::zeros(9, 9);
    set3(&mut j, 0, 0, &-gamma1_inverse(&phi)?);
    set3(&mut j, 3, 0, &skew(b.vel()));
    set3(&mut j, 3, 3, &-Mat3::identity());
    set3(&mut j, 6, 0, &skew(b.pos()));
    set3(&mut j, 6, 6, &-Mat3::identity());
    let base = b.cov.view((0, 0), (9, 9));
    Ok(&j * base * j.transpose())
}

/// Euclidean covariance for any belief, converting frame and convention first.
pub fn euclidean_covariance(b: &FilterBelief) -> Result<DMatrix<f64>> {
    let world = match b.convention {
        Convention::World => b.clone(),
        Convention::Robo => b.inverted(),
    };
    right_invariant_to_euclidean(&world.in_frame(ErrorFrame::Right))
}

pub fn qekf_euclidean_covariance(b: &QekfBelief) -> Result<DMatrix<f64>> {
    let phi = log_so3(&b.rot())?;
    let mut j = DMatrix::zeros(9, 9);
    set3(&mut j, 0, 0, &-gamma1_inverse(&-phi)?);
    set3(&mut j, 3, 3, &-Mat3::identity());
    set3(&mut j, 6, 6, &-Mat3::identity());
    let base = b.cov.view((0, 0), (9, 9));
    Ok(&j * base * j.transpose())
}

/// First-order map from baseline errors (estimate minus truth) to right-invariant coordinates.
pub fn qekf_error_to_invariant(dtheta: &Vec3, dv: &Vec3, dp: &Vec3, rot: &Mat3, vel: &Vec3, pos: &Vec3) -> DVector<f64> {
    let xr = rot * dtheta;
    let xv = dv + skew(vel) * xr;
    let xp = dp + skew(pos) * xr;
    DVector::from_iterator(9, xr.iter().chain(xv.iter()).chain(xp.iter()).cloned())
}

pub fn world_to_robocentric(b: &FilterBelief) -> Result<FilterBelief> {
    if b.convention != Convention::World {
        return Err(Error::WrongConvention);
    }
    Ok(b.inverted())
}

pub fn robocentric_to_world(b: &FilterBelief) -> Result<FilterBelief> {
    if b.convention != Convention::Robo {
        return Err(Error::WrongConvention);
    }
    Ok(b.inverted())
}

/// Angle between the estimated and true gravity directions in the body frame.
pub fn tilt_error(rot_hat: &Mat3, rot: &Mat3) -> f64 {
    let a = rot_hat.transpose() * Vec3::z();
    let b = rot.transpose() * Vec3::z();
    a.cross(&b).norm().atan2(a.dot(&b))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceCriteria {
    pub tilt: f64,
    pub body_velocity: f64,
    pub hold: f64,
}

impl Default for ConvergenceCriteria {
    fn default() -> Self {
        ConvergenceCriteria { tilt: 2.0_f64.to_radians(), body_velocity: 0.05, hold: 0.2 }
    }
}

/// Earliest sample time from which both errors stay under their thresholds
/// for at least `hold` seconds.
pub fn time_to_converge(times: &[f64], tilt: &[f64], body_velocity: &[f64], c: &ConvergenceCriteria) -> Option<f64> {
    let ok = |i: usize| tilt[i] < c.tilt && body_velocity[i] < c.body_velocity;
    let mut start: Option<usize> = None;
    for i in 0..times.len() {
        if !ok(i) {
            start = None;
            continue;
        }
        let s = *start.get_or_insert(i);
        if times[i] - times[s] >= c.hold - 1e-9 {
            return Some(times[s]);
        }
    }
    None
}

/// Zero-mean Gaussian draws through an eigen-decomposition, so singular
/// covariances are fine.
pub fn gaussian_samples<R: Rng>(cov: &DMatrix<f64>, n: usize, rng: &mut R) -> Vec<DVector<f64>> {
    let eig = cov.clone().symmetric_eigen();
    let d = cov.nrows();
    let scale = DVector::from_iterator(d, eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()));
    let l = &eig.eigenvectors * DMatrix::from_diagonal(&scale);
    (0..n)
        .map(|_| {
            let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
            &l * z
        })
        .collect()
}

/// Radial spread divided by tangential spread of planar points around the origin.
/// A ring gives a small value; a compact round blob gives about one.
pub fn ring_ratio(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let radii: Vec<f64> = points.iter().map(|(x, y)| x.hypot(*y)).collect();
    let mean_r = radii.iter().sum::<f64>() / n;
    let var_r = radii.iter().map(|r| (r - mean_r).powi(2)).sum::<f64>() / n;
    let (s, c) = points
        .iter()
        .fold((0.0, 0.0), |(s, c), (x, y)| {
            let a = y.atan2(*x);
            (s + a.sin(), c + a.cos())
        });
    let resultant = (s / n).hypot(c / n);
    let circular_std = (-2.0 * resultant.ln()).sqrt();
    var_r.sqrt() / (mean_r * circular_std)
}

/// Stacked `[H; H Phi_1; H Phi_2 Phi_1; ...]` for a world right-invariant
/// belief whose rows come from forward-kinematic terms for every contact.
/// The estimate is propagated with each sample in turn.
pub fn observability_matrix(b: &FilterBelief, imus: &[ImuSample], g: &Vec3) -> Result<DMatrix<f64>> {
    if b.frame != ErrorFrame::Right || b.convention != Convention::World {
        return Err(Error::WrongConvention);
    }
    let h_at = |b: &FilterBelief| -> Result<DMatrix<f64>> {
        let terms = b
            .registry
            .ids(PointKind::Contact)
            .map(|id| {
                let slot = b.slot_of(PointKind::Contact, id)?;
                let foot = b.rot().transpose() * (b.point(slot) - b.pos());
                fk_term(b, id, foot, Mat3::identity())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(invariant_observation(b, ErrorFrame::Right, &terms).h)
    };
    let n = b.dim();
    let mut blocks = vec![h_at(b)?];
    let mut acc = DMatrix::identity(n, n);
    let mut cur = b.clone();
    for imu in imus {
        let next = propagate_mean(&cur, imu, g)?;
        acc = transition_matrix(&cur, &next, imu, g) * acc;
        cur = next;
        blocks.push(h_at(&cur)? * &acc);
    }
    let rows: usize = blocks.iter().map(|m| m.nrows()).sum();
    let mut o = DMatrix::zeros(rows, n);
    let mut r = 0;
    for m in blocks {
        o.rows_mut(r, m.nrows()).copy_from(&m);
        r += m.nrows();
    }
    Ok(o)
}

//! Quaternion error-state EKF over the same sensors, used as a baseline.
//!
//! Hamilton, scalar-first quaternions mapping body to world. Errors are
//! estimate minus truth: `exp(dtheta) = R^T R_hat`, `dv = v_hat - v`, and so on.

use nalgebra::{DMatrix, DVector, UnitQuaternion};

use crate::correction::MAX_CONDITION;
use crate::dynamics::{integrate_world, ImuSample, NoiseParams};
use crate::error::{Error, Result};
use crate::liegroup::{skew, Mat3, Vec3, SEK3};
use crate::state::{check_covariance, symmetrize, BiasVector, PointKind, Registry, BASE_DIM, BIAS_DIM};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Discretization {
    /// `expm(A dt)` with `A` frozen over the step.
    #[default]
    Exponential,
    /// `I + A dt`.
    FirstOrder,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QekfBelief {
    pub q: UnitQuaternion<f64>,
    pub v: Vec3,
    pub p: Vec3,
    pub points: Vec<Vec3>,
    pub registry: Registry,
    pub bias: BiasVector,
    pub cov: DMatrix<f64>,
}

impl QekfBelief {
    pub fn new(rot: &Mat3, v: Vec3, p: Vec3, bias: BiasVector, cov: DMatrix<f64>) -> Result<Self> {
        check_covariance(&cov, BASE_DIM + BIAS_DIM)?;
        let q = UnitQuaternion::from_matrix_eps(rot, 1e-14, 100, UnitQuaternion::identity());
        Ok(QekfBelief { q, v, p, points: vec![], registry: Registry::default(), bias, cov })
    }

    pub fn rot(&self) -> Mat3 {
        self.q.to_rotation_matrix().into_inner()
    }

    pub fn dim(&self) -> usize {
        BASE_DIM + 3 * self.points.len() + BIAS_DIM
    }

    fn bias_offset(&self) -> usize {
        BASE_DIM + 3 * self.points.len()
    }

    /// Continuous error dynamics matrix at the current estimate.
    pub fn error_dynamics(&self, imu: &ImuSample) -> DMatrix<f64> {
        let n = self.dim();
        let bg = self.bias_offset();
        let w = imu.gyro - self.bias.gyro;
        let a = imu.accel - self.bias.accel;
        let r = self.rot();
        let mut m = DMatrix::zeros(n, n);
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&-skew(&w));
        m.fixed_view_mut::<3, 3>(0, bg).copy_from(&-Mat3::identity());
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-r * skew(&a)));
        m.fixed_view_mut::<3, 3>(3, bg + 3).copy_from(&-r);
        m.fixed_view_mut::<3, 3>(6, 3).copy_from(&Mat3::identity());
        m
    }

    fn noise_density(&self, noise: &NoiseParams) -> DMatrix<f64> {
        let n = self.dim();
        let mut q = DMatrix::zeros(n, n);
        let mut fill = |start: usize, var: f64| {
            for i in start..start + 3 {
                q[(i, i)] = var;
            }
        };
        fill(0, noise.gyro * noise.gyro);
        fill(3, noise.accel * noise.accel);
        for (slot, (kind, _)) in self.registry.entries().iter().enumerate() {
            if *kind == PointKind::Contact {
                fill(BASE_DIM + 3 * slot, noise.contact * noise.contact);
            }
        }
        let bg = self.bias_offset();
        fill(bg, noise.gyro_bias * noise.gyro_bias);
        fill(bg + 3, noise.accel_bias * noise.accel_bias);
        q
    }

    pub fn transition(&self, imu: &ImuSample, method: Discretization) -> DMatrix<f64> {
        let a = self.error_dynamics(imu) * imu.dt;
        match method {
            Discretization::Exponential => a.exp(),
            Discretization::FirstOrder => DMatrix::identity(a.nrows(), a.ncols()) + a,
        }
    }

    /// Mean only; identical integrator to the invariant filter.
    pub fn predict_mean(&self, imu: &ImuSample, g: &Vec3) -> QekfBelief {
        let w = imu.gyro - self.bias.gyro;
        let a = imu.accel - self.bias.accel;
        let x = SEK3 { rot: self.rot(), cols: vec![self.v, self.p] };
        let next = integrate_world(&x, &w, &a, imu.dt, g);
        QekfBelief {
            q: self.q * UnitQuaternion::from_scaled_axis(w * imu.dt),
            v: next.cols[0],
            p: next.cols[1],
            ..self.clone()
        }
    }
}

pub fn qekf_predict(b: &QekfBelief, imu: &ImuSample, noise: &NoiseParams, g: &Vec3) -> QekfBelief {
    qekf_predict_with(b, imu, noise, g, Discretization::Exponential)
}

pub fn qekf_predict_with(
    b: &QekfBelief,
    imu: &ImuSample,
    noise: &NoiseParams,
    g: &Vec3,
    method: Discretization,
) -> QekfBelief {
    let phi = b.transition(imu, method);
    let qbar = b.noise_density(noise);
    let mut next = b.predict_mean(imu, g);
    let mut cov = &phi * (&b.cov + qbar * imu.dt) * phi.transpose();
    symmetrize(&mut cov);
    next.cov = cov;
    next
}

/// Body-frame foot measurement for one contact.
#[derive(Clone, Debug, PartialEq)]
pub struct FootMeasurement {
    pub id: u32,
    pub foot: Vec3,
    pub cov: Mat3,
}

/// Stacked observation matrix, innovation and noise for the given feet.
pub fn qekf_observation(
    b: &QekfBelief,
    feet: &[FootMeasurement],
) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let n = b.dim();
    let rows = 3 * feet.len();
    let rt = b.rot().transpose();
    let mut h = DMatrix::zeros(rows, n);
    let mut z = DVector::zeros(rows);
    let mut nn = DMatrix::zeros(rows, rows);
    for (k, m) in feet.iter().enumerate() {
        let o = 3 * k;
        let slot = b.registry.slot(PointKind::Contact, m.id).ok_or(Error::UnknownPoint(m.id))?;
        let pred = rt * (b.points[slot] - b.p);
        h.fixed_view_mut::<3, 3>(o, 0).copy_from(&skew(&pred));
        h.fixed_view_mut::<3, 3>(o, 6).copy_from(&-rt);
        h.fixed_view_mut::<3, 3>(o, BASE_DIM + 3 * slot).copy_from(&rt);
        z.fixed_rows_mut::<3>(o).copy_from(&(m.foot - pred));
        nn.fixed_view_mut::<3, 3>(o, o).copy_from(&m.cov);
    }
    Ok((h, z, nn))
}

pub fn qekf_update(b: &QekfBelief, feet: &[FootMeasurement]) -> Result<QekfBelief> {
    if feet.is_empty() {
        return Ok(b.clone());
    }
    let (h, z, nn) = qekf_observation(b, feet)?;
    let ph_t = &b.cov * h.transpose();
    let mut s = &h * &ph_t + &nn;
    symmetrize(&mut s);
    let eig = s.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if lo.is_nan() || lo <= 0.0 || hi / lo > MAX_CONDITION {
        return Err(Error::IllConditioned(hi / lo));
    }
    let chol = s.cholesky().ok_or(Error::IllConditioned(hi / lo))?;
    let gain = chol.solve(&ph_t.transpose()).transpose();
    let d = &gain * z;
    let n = b.dim();
    let ikh = DMatrix::identity(n, n) - &gain * &h;
    let mut cov = &ikh * &b.cov * ikh.transpose() + &gain * nn * gain.transpose();
    symmetrize(&mut cov);

    let part = |o: usize| Vec3::new(d[o], d[o + 1], d[o + 2]);
    let mut out = b.clone();
    out.q = b.q * UnitQuaternion::from_scaled_axis(part(0));
    out.v += part(3);
    out.p += part(6);
    for (slot, pt) in out.points.iter_mut().enumerate() {
        *pt += part(BASE_DIM + 3 * slot);
    }
    let bg = b.bias_offset();
    out.bias.gyro += part(bg);
    out.bias.accel += part(bg + 3);
    out.cov = cov;
    Ok(out)
}

/// Adds a foot at body-frame offset `rel`; `dd = dp - R skew(rel) dtheta + R w`.
pub fn qekf_add_contact(b: &QekfBelief, id: u32, rel: &Vec3, rel_cov: &Mat3) -> Result<QekfBelief> {
    let mut registry = b.registry.clone();
    registry.insert(PointKind::Contact, id)?;
    let r = b.rot();
    let n = b.dim();
    let ins = b.bias_offset();
    let mut f = DMatrix::zeros(3, n);
    f.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-r * skew(rel)));
    for i in 0..3 {
        f[(i, 6 + i)] = 1.0;
    }
    let added = r * rel_cov * r.transpose();
    let fp = &f * &b.cov;
    let diag = &fp * f.transpose() + DMatrix::from_column_slice(3, 3, added.as_slice());
    let map = |i: usize| if i < ins { i } else { i + 3 };
    let mut cov = DMatrix::zeros(n + 3, n + 3);
    for j in 0..n {
        for i in 0..n {
            cov[(map(i), map(j))] = b.cov[(i, j)];
        }
        for i in 0..3 {
            cov[(ins + i, map(j))] = fp[(i, j)];
            cov[(map(j), ins + i)] = fp[(i, j)];
        }
    }
    for j in 0..3 {
        for i in 0..3 {
            cov[(ins + i, ins + j)] = 0.5 * (diag[(i, j)] + diag[(j, i)]);
        }
    }
    let mut out = b.clone();
    out.points.push(b.p + r * rel);
    out.registry = registry;
    out.cov = cov;
    Ok(out)
}

pub fn qekf_remove_contact(b: &QekfBelief, id: u32) -> Result<QekfBelief> {
    let mut out = b.clone();
    let slot = out.registry.remove(PointKind::Contact, id)?;
    out.points.remove(slot);
    let start = BASE_DIM + 3 * slot;
    out.cov = b.cov.clone().remove_rows(start, 3).remove_columns(start, 3);
    Ok(out)
}

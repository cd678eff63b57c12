//! IMU propagation: exact zero-order-hold mean integration, closed-form
//! state-transition matrices and discrete process noise.

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};
use crate::liegroup::{gamma0, gamma1, gamma2, gamma3, orthonormalize, skew, Mat3, Vec3, SEK3};
use crate::state::{symmetrize, Convention, ErrorFrame, FilterBelief, PointKind, BASE_DIM};

/// Longest IMU interval accepted before the sample is considered stale.
pub const MAX_IMU_DT: f64 = 0.1;

/// Rotation is re-projected onto SO(3) after this many propagation steps.
pub const REORTHONORMALIZE_EVERY: u64 = 256;

/// Below this value of `|w| dt` the psi integrals use their power series.
pub const PSI_SERIES_THRESHOLD: f64 = 0.25;
const PSI_SERIES_ORDER: usize = 14;

pub fn standard_gravity() -> Vec3 {
    Vector3::new(0.0, 0.0, -9.81)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub gyro: Vec3,
    pub accel: Vec3,
    pub dt: f64,
}

impl ImuSample {
    pub fn new(gyro: Vec3, accel: Vec3, dt: f64) -> Result<Self> {
        let finite = gyro.iter().chain(accel.iter()).all(|x| x.is_finite());
        if !(dt > 0.0 && dt <= MAX_IMU_DT) || !finite {
            return Err(Error::BadImuInterval(dt));
        }
        Ok(ImuSample { gyro, accel, dt })
    }
}

/// Continuous-time noise standard deviations. The encoder entry is in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseParams {
    pub gyro: f64,
    pub accel: f64,
    pub gyro_bias: f64,
    pub accel_bias: f64,
    pub contact: f64,
    pub encoder: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            gyro: 0.002,
            accel: 0.04,
            gyro_bias: 0.001,
            accel_bias: 0.001,
            contact: 0.05,
            encoder: 1.0_f64.to_radians(),
        }
    }
}

impl NoiseParams {
    pub fn zero() -> Self {
        NoiseParams { gyro: 0.0, accel: 0.0, gyro_bias: 0.0, accel_bias: 0.0, contact: 0.0, encoder: 0.0 }
    }
}

fn set3(m: &mut DMatrix<f64>, r: usize, c: usize, b: &Mat3) {
    m.fixed_view_mut::<3, 3>(r, c).copy_from(b);
}

/// Exact ZOH step of `(R, v, p)` for the bias-corrected rates; other columns are untouched.
pub fn integrate_world(x: &SEK3, w: &Vec3, a: &Vec3, dt: f64, g: &Vec3) -> SEK3 {
    let phi = w * dt;
    let r = &x.rot;
    let v = x.cols[0];
    let p = x.cols[1];
    let mut out = x.clone();
    out.rot = r * gamma0(&phi);
    out.cols[0] = v + r * gamma1(&phi) * a * dt + g * dt;
    out.cols[1] = p + v * dt + r * gamma2(&phi) * a * (dt * dt) + g * (0.5 * dt * dt);
    out
}

fn corrected_inputs(b: &FilterBelief, imu: &ImuSample) -> (Vec3, Vec3) {
    (imu.gyro - b.bias.gyro, imu.accel - b.bias.accel)
}

pub fn propagate_mean(b: &FilterBelief, imu: &ImuSample, g: &Vec3) -> Result<FilterBelief> {
    if b.convention != Convention::World {
        return Err(Error::WrongConvention);
    }
    let (w, a) = corrected_inputs(b, imu);
    Ok(FilterBelief { x: integrate_world(&b.x, &w, &a, imu.dt, g), ..b.clone() })
}

/// Robo-centric step: the world-centric closed form applied to the inverse state.
pub fn propagate_mean_robocentric(b: &FilterBelief, imu: &ImuSample, g: &Vec3) -> Result<FilterBelief> {
    if b.convention != Convention::Robo {
        return Err(Error::WrongConvention);
    }
    let (w, a) = corrected_inputs(b, imu);
    let world = integrate_world(&b.x.inverse(), &w, &a, imu.dt, g);
    Ok(FilterBelief { x: world.inverse(), ..b.clone() })
}

fn psi_series(w: &Vec3, a: &Vec3, dt: f64) -> (Mat3, Mat3) {
    // Psi1 = sum skew(W^n a) W^m dt^(n+m+2) / (n! (m+1)! (n+m+2)), Psi2 integrates it once more.
    let wd = skew(&(w * dt));
    let mut skews = Vec::with_capacity(PSI_SERIES_ORDER + 1);
    let mut pows = Vec::with_capacity(PSI_SERIES_ORDER + 1);
    let mut u = *a;
    let mut wp = Mat3::identity();
    for _ in 0..=PSI_SERIES_ORDER {
        skews.push(skew(&u));
        pows.push(wp);
        u = wd * u;
        wp *= wd;
    }
    let mut fact = [1.0; PSI_SERIES_ORDER + 2];
    for i in 1..fact.len() {
        fact[i] = fact[i - 1] * i as f64;
    }
    let mut p1 = Mat3::zeros();
    let mut p2 = Mat3::zeros();
    for total in 0..=PSI_SERIES_ORDER {
        let mut level = Mat3::zeros();
        for n in 0..=total {
            let m = total - n;
            level += skews[n] * pows[m] / (fact[n] * fact[m + 1]);
        }
        let t = (total + 2) as f64;
        p1 += level / t;
        p2 += level / (t * (t + 1.0));
    }
    (p1 * (dt * dt), p2 * (dt * dt * dt))
}

fn psi_closed(w: &Vec3, a: &Vec3, dt: f64) -> (Mat3, Mat3) {
    let ph = w.norm();
    let th = ph * dt;
    let (s, c) = th.sin_cos();
    let (s2, c2) = (2.0 * th).sin_cos();
    let ww = skew(w);
    let aa = skew(a);
    let wa = ww * aa;
    let waw = wa * ww;
    let waww = waw * ww;
    let wwa = ww * wa;
    let wwaw = wwa * ww;
    let wwaww = wwaw * ww;
    let (p3, p4, p5, p6, p7) = (ph.powi(3), ph.powi(4), ph.powi(5), ph.powi(6), ph.powi(7));
    let t2 = th * th;
    let t3 = t2 * th;

    let psi1 = aa * gamma2(&(-w * dt)) * (dt * dt)
        + wa * ((s - th * c) / p3)
        - waw * ((c2 - 4.0 * c + 3.0) / (4.0 * p4))
        + waww * ((4.0 * s + s2 - 4.0 * th * c - 2.0 * th) / (4.0 * p5))
        + wwa * ((t2 - 2.0 * th * s - 2.0 * c + 2.0) / (2.0 * p4))
        - wwaw * ((6.0 * th - 8.0 * s + s2) / (4.0 * p5))
        + wwaww * ((2.0 * t2 - 4.0 * th * s - c2 + 1.0) / (4.0 * p6));

    let psi2 = aa * gamma3(&(-w * dt)) * (dt * dt * dt)
        - wa * ((th * s + 2.0 * c - 2.0) / p4)
        - waw * ((6.0 * th - 8.0 * s + s2) / (8.0 * p5))
        - waww * ((2.0 * t2 + 8.0 * th * s + 16.0 * c + c2 - 17.0) / (8.0 * p6))
        + wwa * ((t3 + 6.0 * th - 12.0 * s + 6.0 * th * c) / (6.0 * p5))
        - wwaw * ((6.0 * t2 + 16.0 * c - c2 - 15.0) / (8.0 * p6))
        + wwaww * ((4.0 * t3 + 6.0 * th - 24.0 * s - 3.0 * s2 + 24.0 * th * c) / (24.0 * p7));
    (psi1, psi2)
}

/// Both gyro-bias coupling integrals at once.
pub fn psi(w: &Vec3, a: &Vec3, dt: f64) -> (Mat3, Mat3) {
    if w.norm() * dt < PSI_SERIES_THRESHOLD {
        psi_series(w, a, dt)
    } else {
        psi_closed(w, a, dt)
    }
}

/// `int_0^dt skew(Gamma0(w t) a) Gamma1(w t) t dt`.
pub fn psi1(w: &Vec3, a: &Vec3, dt: f64) -> Mat3 {
    psi(w, a, dt).0
}

/// Time integral of [`psi1`] over the same interval.
pub fn psi2(w: &Vec3, a: &Vec3, dt: f64) -> Mat3 {
    psi(w, a, dt).1
}

/// Left-invariant world-centric transition for `k` tracked points and bias-corrected inputs.
pub fn phi_left(w: &Vec3, a: &Vec3, dt: f64, k: usize) -> DMatrix<f64> {
    let n = BASE_DIM + 3 * k + 6;
    let bg = BASE_DIM + 3 * k;
    let ba = bg + 3;
    let phi = w * dt;
    let g0t = gamma0(&phi).transpose();
    let g1 = gamma1(&phi);
    let g2 = gamma2(&phi);
    let (p1, p2) = psi(w, a, dt);
    let mut m = DMatrix::identity(n, n);
    for i in 0..(3 + k) {
        set3(&mut m, 3 * i, 3 * i, &g0t);
    }
    set3(&mut m, 3, 0, &(-g0t * skew(&(g1 * a)) * dt));
    set3(&mut m, 6, 0, &(-g0t * skew(&(g2 * a)) * (dt * dt)));
    set3(&mut m, 6, 3, &(g0t * dt));
    let g0t_g1 = g0t * g1 * dt;
    set3(&mut m, 0, bg, &-g0t_g1);
    set3(&mut m, 3, ba, &-g0t_g1);
    set3(&mut m, 6, ba, &(-g0t * g2 * (dt * dt)));
    set3(&mut m, 3, bg, &(g0t * p1));
    set3(&mut m, 6, bg, &(g0t * p2));
    m
}

/// Right-invariant world-centric transition between the means before and after a step.
pub fn phi_right(next: &SEK3, prev: &SEK3, w: &Vec3, a: &Vec3, dt: f64, g: &Vec3) -> DMatrix<f64> {
    let k = prev.k() - 2;
    let n = BASE_DIM + 3 * k + 6;
    let bg = BASE_DIM + 3 * k;
    let ba = bg + 3;
    let phi = w * dt;
    let r = &prev.rot;
    let rg1 = r * gamma1(&phi) * dt;
    let (p1, p2) = psi(w, a, dt);
    let gs = skew(g);
    let mut m = DMatrix::identity(n, n);
    set3(&mut m, 3, 0, &(gs * dt));
    set3(&mut m, 6, 0, &(gs * (0.5 * dt * dt)));
    set3(&mut m, 6, 3, &(Mat3::identity() * dt));
    set3(&mut m, 0, bg, &-rg1);
    set3(&mut m, 3, bg, &(-skew(&next.cols[0]) * rg1 + r * p1));
    set3(&mut m, 6, bg, &(-skew(&next.cols[1]) * rg1 + r * p2));
    for i in 0..k {
        set3(&mut m, BASE_DIM + 3 * i, bg, &(-skew(&next.cols[2 + i]) * rg1));
    }
    set3(&mut m, 3, ba, &-rg1);
    set3(&mut m, 6, ba, &(-r * gamma2(&phi) * (dt * dt)));
    m
}

/// Flips the sign of the group/bias cross blocks: `diag(-I, I6) M diag(-I, I6)`.
fn flip_group_sign(m: &mut DMatrix<f64>, group_dim: usize) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            if (i < group_dim) != (j < group_dim) {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

/// Transition matrix for the belief's own frame and convention.
pub fn transition_matrix(prev: &FilterBelief, next: &FilterBelief, imu: &ImuSample, g: &Vec3) -> DMatrix<f64> {
    let (w, a) = corrected_inputs(prev, imu);
    let k = prev.point_count();
    match (prev.convention, prev.frame) {
        (Convention::World, ErrorFrame::Left) => phi_left(&w, &a, imu.dt, k),
        (Convention::World, ErrorFrame::Right) => phi_right(&next.x, &prev.x, &w, &a, imu.dt, g),
        // Inverting the state turns a left error into the negated right error and vice versa.
        (Convention::Robo, ErrorFrame::Left) => {
            let mut m = phi_right(&next.x.inverse(), &prev.x.inverse(), &w, &a, imu.dt, g);
            flip_group_sign(&mut m, prev.group_dim());
            m
        }
        (Convention::Robo, ErrorFrame::Right) => {
            let mut m = phi_left(&w, &a, imu.dt, k);
            flip_group_sign(&mut m, prev.group_dim());
            m
        }
    }
}

/// Diagonal continuous noise covariance in left-invariant world coordinates.
fn raw_noise_covariance(b: &FilterBelief, noise: &NoiseParams) -> DMatrix<f64> {
    let n = b.dim();
    let mut q = DMatrix::zeros(n, n);
    let mut fill = |start: usize, var: f64| {
        for i in start..start + 3 {
            q[(i, i)] = var;
        }
    };
    fill(0, noise.gyro * noise.gyro);
    fill(3, noise.accel * noise.accel);
    for (slot, (kind, _)) in b.registry.entries().iter().enumerate() {
        if *kind == PointKind::Contact {
            fill(BASE_DIM + 3 * slot, noise.contact * noise.contact);
        }
    }
    let bg = b.group_dim();
    fill(bg, noise.gyro_bias * noise.gyro_bias);
    fill(bg + 3, noise.accel_bias * noise.accel_bias);
    q
}

/// Continuous process-noise covariance expressed in the belief's error coordinates.
pub fn process_noise(b: &FilterBelief, noise: &NoiseParams) -> DMatrix<f64> {
    let cov = raw_noise_covariance(b, noise);
    let world_right = match (b.convention, b.frame) {
        (Convention::World, ErrorFrame::Right) => Some(b.x.clone()),
        (Convention::Robo, ErrorFrame::Left) => Some(b.x.inverse()),
        _ => None,
    };
    match world_right {
        None => cov,
        Some(x) => {
            let g = b.group_dim();
            let ad = x.adjoint();
            let mut q = cov.clone();
            let block = &ad * cov.view((0, 0), (g, g)) * ad.transpose();
            q.view_mut((0, 0), (g, g)).copy_from(&block);
            // the sign flip of the robo map cancels on a block-diagonal covariance
            symmetrize(&mut q);
            q
        }
    }
}

pub fn discrete_noise(phi: &DMatrix<f64>, qbar: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    let mut q = phi * qbar * phi.transpose() * dt;
    symmetrize(&mut q);
    q
}

/// Gauss-Legendre evaluation of `int_0^dt Phi(s) Qbar Phi(s)^T ds` for the
/// left-invariant world-centric model, where the transition is time invariant.
pub fn discrete_noise_integral(w: &Vec3, a: &Vec3, dt: f64, k: usize, qbar: &DMatrix<f64>) -> DMatrix<f64> {
    const NODES: [(f64, f64); 5] = [
        (0.0, 0.568_888_888_888_888_9),
        (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    let mut out = DMatrix::zeros(qbar.nrows(), qbar.ncols());
    for (x, wt) in NODES {
        let s = 0.5 * dt * (x + 1.0);
        let phi = phi_left(w, a, s, k);
        out += &phi * qbar * phi.transpose() * (0.5 * dt * wt);
    }
    symmetrize(&mut out);
    out
}

/// One full prediction step: mean, covariance, periodic re-orthonormalization.
pub fn propagate(b: &FilterBelief, imu: &ImuSample, noise: &NoiseParams, g: &Vec3) -> Result<FilterBelief> {
    let mut next = match b.convention {
        Convention::World => propagate_mean(b, imu, g)?,
        Convention::Robo => propagate_mean_robocentric(b, imu, g)?,
    };
    let phi = transition_matrix(b, &next, imu, g);
    let qbar = process_noise(b, noise);
    let mut cov = &phi * &b.cov * phi.transpose() + discrete_noise(&phi, &qbar, imu.dt);
    symmetrize(&mut cov);
    next.cov = cov;
    next.steps = b.steps + 1;
    if next.steps % REORTHONORMALIZE_EVERY == 0 {
        next.x.rot = orthonormalize(&next.x.rot);
    }
    Ok(next)
}

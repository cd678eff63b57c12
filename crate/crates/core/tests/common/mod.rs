//! Reference implementations used only by the tests: dense matrix
//! exponential, quadrature, RK4 and random test data.
#![allow(dead_code)]

use inekf_core::liegroup::{Mat3, Vec3, SEK3};
use inekf_core::state::{BiasVector, Convention, ErrorFrame, FilterBelief, PointKind, BASE_DIM, BIAS_DIM};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Scaling-and-squaring with a long Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.abs().row_sum().max();
    let mut s = 0;
    while norm / f64::powi(2.0, s) > 0.25 {
        s += 1;
    }
    let scaled = a / f64::powi(2.0, s);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

pub fn skew_dense(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn expm3(m: &Mat3) -> Mat3 {
    let d = expm(&DMatrix::from_column_slice(3, 3, m.as_slice()));
    Mat3::from_column_slice(d.as_slice())
}

/// `sum_{n < terms} W^n / (n + m)!` with `W = skew(phi)`.
pub fn gamma_series(m: usize, phi: &Vec3, terms: usize) -> Mat3 {
    let w = skew_dense(phi);
    let mut pow = Mat3::identity();
    let mut fact: f64 = (1..=m).map(|i| i as f64).product();
    let mut sum = Mat3::zeros();
    for n in 0..terms {
        sum += pow / fact;
        pow *= w;
        fact *= (n + m + 1) as f64;
    }
    sum
}

const GL_NODES: [f64; 7] = [
    -0.949_107_912_342_758_5,
    -0.741_531_185_599_394_4,
    -0.405_845_151_377_397_2,
    0.0,
    0.405_845_151_377_397_2,
    0.741_531_185_599_394_4,
    0.949_107_912_342_758_5,
];
const GL_WEIGHTS: [f64; 7] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
    0.381_830_050_505_118_9,
    0.279_705_391_489_276_7,
    0.129_484_966_168_869_7,
];

fn gl7(f: &dyn Fn(f64) -> Mat3, a: f64, b: f64) -> Mat3 {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut s = Mat3::zeros();
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
        s += f(c + h * x) * (w * h);
    }
    s
}

/// Adaptive 7-point Gauss-Legendre quadrature of a matrix-valued function.
pub fn integrate(f: &dyn Fn(f64) -> Mat3, a: f64, b: f64, tol: f64) -> Mat3 {
    fn rec(f: &dyn Fn(f64) -> Mat3, a: f64, b: f64, whole: Mat3, tol: f64, depth: u32) -> Mat3 {
        let m = 0.5 * (a + b);
        let (l, r) = (gl7(f, a, m), gl7(f, m, b));
        if depth > 30 || (l + r - whole).abs().max() < tol {
            l + r
        } else {
            rec(f, a, m, l, 0.5 * tol, depth + 1) + rec(f, m, b, r, 0.5 * tol, depth + 1)
        }
    }
    rec(f, a, b, gl7(f, a, b), tol, 0)
}

/// Classic fourth-order Runge-Kutta on a flat state vector.
pub fn rk4(f: &dyn Fn(&DVector<f64>) -> DVector<f64>, y0: &DVector<f64>, h: f64, steps: usize) -> DVector<f64> {
    let mut y = y0.clone();
    for _ in 0..steps {
        let k1 = f(&y);
        let k2 = f(&(&y + &k1 * (0.5 * h)));
        let k3 = f(&(&y + &k2 * (0.5 * h)));
        let k4 = f(&(&y + &k3 * h));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    y
}

pub fn vec3<R: Rng>(rng: &mut R, scale: f64) -> Vec3 {
    Vec3::from_fn(|_, _| rng.gen_range(-scale..scale))
}

pub fn tangent<R: Rng>(rng: &mut R, k: usize, rot: f64, trans: f64) -> DVector<f64> {
    DVector::from_fn(3 + 3 * k, |i, _| if i < 3 { rng.gen_range(-rot..rot) } else { rng.gen_range(-trans..trans) })
}

pub fn element<R: Rng>(rng: &mut R, k: usize) -> SEK3 {
    SEK3::exp(&tangent(rng, k, 1.5, 2.0))
}

pub fn spd<R: Rng>(rng: &mut R, n: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    (&a * a.transpose() + DMatrix::identity(n, n) * 0.1) * scale
}

pub fn bias<R: Rng>(rng: &mut R) -> BiasVector {
    BiasVector { gyro: vec3(rng, 0.05), accel: vec3(rng, 0.2) }
}

/// Random world belief with `k` contacts and a random SPD covariance.
pub fn belief<R: Rng>(rng: &mut R, k: usize, frame: ErrorFrame) -> FilterBelief {
    let x = element(rng, 2 + k);
    let mut b = FilterBelief::new(
        x.rot,
        x.cols[0],
        x.cols[1],
        bias(rng),
        DMatrix::identity(BASE_DIM + BIAS_DIM, BASE_DIM + BIAS_DIM),
        frame,
        Convention::World,
    )
    .unwrap();
    for i in 0..k {
        b.registry.insert(PointKind::Contact, i as u32).unwrap();
    }
    b.x = x;
    b.cov = spd(rng, b.dim(), 0.01);
    b
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.abs().max()
}

pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn block(m: &DMatrix<f64>, r: usize, c: usize) -> Mat3 {
    m.fixed_view::<3, 3>(r, c).into_owned()
}

pub fn sample_mean_cov(samples: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = samples.len() as f64;
    let d = samples[0].len();
    let mean = samples.iter().fold(DVector::zeros(d), |acc, s| acc + s) / n;
    let cov = samples.iter().fold(DMatrix::zeros(d, d), |acc, s| {
        let e = s - &mean;
        acc + &e * e.transpose()
    }) / (n - 1.0);
    (mean, cov)
}

fn set3(m: &mut DMatrix<f64>, r: usize, c: usize, b: &Mat3) {
    m.fixed_view_mut::<3, 3>(r, c).copy_from(b);
}

/// Continuous left-invariant error dynamics with biases, built from the error ODE.
pub fn a_left(w: &Vec3, a: &Vec3, k: usize) -> DMatrix<f64> {
    let n = 9 + 3 * k + 6;
    let (bg, ba) = (9 + 3 * k, 12 + 3 * k);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..(3 + k) {
        set3(&mut m, 3 * i, 3 * i, &-skew_dense(w));
    }
    set3(&mut m, 3, 0, &-skew_dense(a));
    set3(&mut m, 6, 3, &Mat3::identity());
    set3(&mut m, 0, bg, &-Mat3::identity());
    set3(&mut m, 3, ba, &-Mat3::identity());
    m
}

pub fn world_belief(x: &SEK3, bias: BiasVector, frame: ErrorFrame) -> FilterBelief {
    let mut b = FilterBelief::new(x.rot, x.cols[0], x.cols[1], bias, DMatrix::identity(15, 15), frame, Convention::World).unwrap();
    for i in 2..x.cols.len() {
        b.registry.insert(PointKind::Contact, i as u32).unwrap();
    }
    b.x = x.clone();
    b.cov = DMatrix::identity(b.dim(), b.dim()) * 0.01;
    b
}

/// Both integrals by adaptive quadrature.
pub fn psi_oracle(w: &Vec3, a: &Vec3, dt: f64) -> (Mat3, Mat3) {
    let f = |t: f64| {
        let phi = w * t;
        skew_dense(&(expm3(&skew_dense(&phi)) * a)) * gamma_series(1, &phi, 40) * t
    };
    let p1 = integrate(&f, 0.0, dt, 1e-16);
    let p2 = integrate(&|t| f(t) * (dt - t), 0.0, dt, 1e-17);
    (p1, p2)
}

/// Right-invariant transition from a left-invariant one through the adjoints.
pub fn sandwich(next: &SEK3, prev: &SEK3, left: &DMatrix<f64>) -> DMatrix<f64> {
    let lift = |x: &SEK3| {
        let ad = x.adjoint();
        let g = ad.nrows();
        let mut j = DMatrix::identity(g + 6, g + 6);
        j.view_mut((0, 0), (g, g)).copy_from(&ad);
        j
    };
    lift(next) * left * lift(&prev.inverse())
}

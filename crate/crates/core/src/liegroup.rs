//! Rotation and extended-pose group primitives.
//!
//! An [`SEK3`] element is a rotation plus `K` translation-like columns that
//! share it. Tangent vectors are plain `DVector`s ordered `(phi, xi_1, ..., xi_K)`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Below this rotation angle the gamma coefficients come from their Taylor
/// series instead of the trigonometric closed forms.
pub const GAMMA_SERIES_THRESHOLD: f64 = 0.5;

/// Largest rotation angle `log` will accept.
pub const LOG_ANGLE_LIMIT: f64 = std::f64::consts::PI - 1e-6;

const INV_FACTORIAL: [f64; 4] = [1.0, 1.0, 0.5, 1.0 / 6.0];

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`]; reads the antisymmetric part only.
pub fn vee(m: &Mat3) -> Vec3 {
    Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5
}

/// Coefficients `(beta, gamma)` with `Gamma_m(phi) = I/m! + beta*W + gamma*W^2`, `W = skew(phi)`.
fn gamma_coefficients(m: usize, theta: f64) -> (f64, f64) {
    if theta < GAMMA_SERIES_THRESHOLD {
        gamma_coefficients_series(m, theta)
    } else {
        gamma_coefficients_closed(m, theta)
    }
}

#[doc(hidden)]
pub fn gamma_coefficients_series(m: usize, theta: f64) -> (f64, f64) {
    // beta = sum (-t^2)^k / (2k+1+m)!, gamma = sum (-t^2)^k / (2k+2+m)!
    let t2 = theta * theta;
    let mut fact = 1.0;
    for i in 1..=(m + 1) {
        fact *= i as f64;
    }
    let (mut beta, mut gamma) = (0.0, 0.0);
    let mut pow = 1.0;
    let mut n = m + 1;
    for _ in 0..8 {
        beta += pow / fact;
        n += 1;
        fact *= n as f64;
        gamma += pow / fact;
        n += 1;
        fact *= n as f64;
        pow *= -t2;
    }
    (beta, gamma)
}

#[doc(hidden)]
pub fn gamma_coefficients_closed(m: usize, theta: f64) -> (f64, f64) {
    let t2 = theta * theta;
    let s = theta.sin();
    let half = (0.5 * theta).sin();
    let one_minus_cos = 2.0 * half * half;
    match m {
        0 => (s / theta, one_minus_cos / t2),
        1 => (one_minus_cos / t2, (theta - s) / (t2 * theta)),
        2 => ((theta - s) / (t2 * theta), (t2 - 2.0 * one_minus_cos) / (2.0 * t2 * t2)),
        _ => (
            (t2 - 2.0 * one_minus_cos) / (2.0 * t2 * t2),
            (t2 * theta - 6.0 * theta + 6.0 * s) / (6.0 * t2 * t2 * theta),
        ),
    }
}

fn gamma_unchecked(m: usize, phi: &Vec3) -> Mat3 {
    let w = skew(phi);
    let (beta, gamma) = gamma_coefficients(m, phi.norm());
    Mat3::identity() * INV_FACTORIAL[m] + w * beta + w * w * gamma
}

/// `sum_n skew(phi)^n / (n+m)!` for `m` in `0..=3`.
pub fn gamma(m: usize, phi: &Vec3) -> Result<Mat3> {
    if m > 3 {
        return Err(Error::InvalidGammaOrder(m));
    }
    Ok(gamma_unchecked(m, phi))
}

/// Rotation exponential.
pub fn gamma0(phi: &Vec3) -> Mat3 {
    gamma_unchecked(0, phi)
}

/// Left Jacobian of the rotation exponential.
pub fn gamma1(phi: &Vec3) -> Mat3 {
    gamma_unchecked(1, phi)
}

pub fn gamma2(phi: &Vec3) -> Mat3 {
    gamma_unchecked(2, phi)
}

pub fn gamma3(phi: &Vec3) -> Mat3 {
    gamma_unchecked(3, phi)
}

pub fn log_so3(r: &Mat3) -> Result<Vec3> {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sin_axis = vee(r);
    let sin = sin_axis.norm();
    let theta = sin.atan2(cos);
    if theta > LOG_ANGLE_LIMIT {
        return Err(Error::AngleNearPi(theta));
    }
    let scale = if theta < 1e-4 {
        let t2 = theta * theta;
        1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0
    } else {
        theta / sin
    };
    Ok(sin_axis * scale)
}

/// Inverse of the left Jacobian by a direct 3x3 solve.
pub fn gamma1_inverse(phi: &Vec3) -> Result<Mat3> {
    let theta = phi.norm();
    if theta > std::f64::consts::PI - 1e-3 {
        return Err(Error::AngleNearPi(theta));
    }
    gamma1(phi).try_inverse().ok_or(Error::AngleNearPi(theta))
}

/// Nearest rotation in the Frobenius sense.
pub fn orthonormalize(r: &Mat3) -> Mat3 {
    let svd = r.svd(true, true);
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let mut out = u * v_t;
    if out.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        out = u * v_t;
    }
    out
}

pub fn is_rotation(r: &Mat3, tol: f64) -> bool {
    r.iter().all(|x| x.is_finite())
        && (r.transpose() * r - Mat3::identity()).abs().max() <= tol
        && (r.determinant() - 1.0).abs() <= tol
}

/// Dense `(3+K)x(3+K)` Lie-algebra matrix of a tangent vector.
pub fn hat(xi: &DVector<f64>) -> DMatrix<f64> {
    let k = (xi.len() - 3) / 3;
    let mut m = DMatrix::zeros(3 + k, 3 + k);
    let phi = Vec3::new(xi[0], xi[1], xi[2]);
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&phi));
    for i in 0..k {
        for r in 0..3 {
            m[(r, 3 + i)] = xi[3 + 3 * i + r];
        }
    }
    m
}

#[allow(clippy::upper_case_acronyms)]
#[derive(Clone, Debug, PartialEq)]
pub struct SEK3 {
    pub rot: Mat3,
    pub cols: Vec<Vec3>,
}

impl SEK3 {
    pub fn identity(k: usize) -> Self {
        SEK3 { rot: Mat3::identity(), cols: vec![Vec3::zeros(); k] }
    }

    pub fn new(rot: Mat3, cols: Vec<Vec3>) -> Result<Self> {
        if !is_rotation(&rot, 1e-9) {
            return Err(Error::NotARotation);
        }
        Ok(SEK3 { rot, cols })
    }

    pub fn k(&self) -> usize {
        self.cols.len()
    }

    pub fn tangent_dim(&self) -> usize {
        3 + 3 * self.cols.len()
    }

    pub fn exp(xi: &DVector<f64>) -> Self {
        let k = (xi.len() - 3) / 3;
        let phi = Vec3::new(xi[0], xi[1], xi[2]);
        let w = skew(&phi);
        let w2 = w * w;
        let theta = phi.norm();
        let (b0, g0) = gamma_coefficients(0, theta);
        let (b1, g1) = gamma_coefficients(1, theta);
        let rot = Mat3::identity() + w * b0 + w2 * g0;
        let jac = Mat3::identity() + w * b1 + w2 * g1;
        let cols = (0..k)
            .map(|i| jac * xi.fixed_rows::<3>(3 + 3 * i))
            .collect();
        SEK3 { rot, cols }
    }

    pub fn log(&self) -> Result<DVector<f64>> {
        let phi = log_so3(&self.rot)?;
        let jac = gamma1(&phi);
        let lu = jac.lu();
        let mut xi = DVector::zeros(self.tangent_dim());
        xi.fixed_rows_mut::<3>(0).copy_from(&phi);
        for (i, c) in self.cols.iter().enumerate() {
            let x = lu.solve(c).ok_or(Error::AngleNearPi(phi.norm()))?;
            xi.fixed_rows_mut::<3>(3 + 3 * i).copy_from(&x);
        }
        Ok(xi)
    }

    pub fn compose(&self, other: &SEK3) -> Result<SEK3> {
        if self.k() != other.k() {
            return Err(Error::DimensionMismatch { expected: self.k(), found: other.k() });
        }
        let cols = self
            .cols
            .iter()
            .zip(&other.cols)
            .map(|(a, b)| self.rot * b + a)
            .collect();
        Ok(SEK3 { rot: self.rot * other.rot, cols })
    }

    pub fn inverse(&self) -> SEK3 {
        let rt = self.rot.transpose();
        SEK3 { rot: rt, cols: self.cols.iter().map(|c| -(rt * c)).collect() }
    }

    pub fn adjoint(&self) -> DMatrix<f64> {
        let n = self.tangent_dim();
        let mut ad = DMatrix::zeros(n, n);
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rot);
        for (i, c) in self.cols.iter().enumerate() {
            let o = 3 + 3 * i;
            ad.fixed_view_mut::<3, 3>(o, o).copy_from(&self.rot);
            ad.fixed_view_mut::<3, 3>(o, 0).copy_from(&(skew(c) * self.rot));
        }
        ad
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut m = DMatrix::identity(3 + k, 3 + k);
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rot);
        for (i, c) in self.cols.iter().enumerate() {
            m.fixed_view_mut::<3, 1>(0, 3 + i).copy_from(c);
        }
        m
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<SEK3> {
        if m.nrows() < 3 || m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: 3, found: m.nrows() });
        }
        let k = m.nrows() - 3;
        let rot: Mat3 = m.fixed_view::<3, 3>(0, 0).into_owned();
        let cols = (0..k).map(|i| m.fixed_view::<3, 1>(0, 3 + i).into_owned()).collect();
        SEK3::new(rot, cols)
    }
}

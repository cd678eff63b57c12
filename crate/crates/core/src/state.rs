//! Filter belief: group mean, biases, covariance and the tracked-point registry.
//!
//! Covariance ordering is `(xi_R, xi_v, xi_p, xi_point_1 .. xi_point_K, zeta_gyro, zeta_accel)`.
//! The group columns are `v, p` followed by the tracked points in registry order.

use nalgebra::{DMatrix, DVector, Vector6};

use crate::error::{Error, Result};
use crate::liegroup::{is_rotation, Mat3, Vec3, SEK3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ErrorFrame {
    Right,
    Left,
}

impl ErrorFrame {
    pub fn flipped(self) -> Self {
        match self {
            ErrorFrame::Right => ErrorFrame::Left,
            ErrorFrame::Left => ErrorFrame::Right,
        }
    }
}

/// World-centric beliefs hold the body pose in the world; robo-centric ones
/// hold its inverse (world expressed in the body frame).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Convention {
    World,
    Robo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PointKind {
    Contact,
    Landmark,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BiasVector {
    pub gyro: Vec3,
    pub accel: Vec3,
}

impl BiasVector {
    pub fn as_vector(&self) -> Vector6<f64> {
        Vector6::new(self.gyro.x, self.gyro.y, self.gyro.z, self.accel.x, self.accel.y, self.accel.z)
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        BiasVector {
            gyro: Vec3::new(v[0], v[1], v[2]),
            accel: Vec3::new(v[3], v[4], v[5]),
        }
    }
}

/// Maps `(kind, id)` to a point slot; slot `i` is group column `2 + i`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Registry {
    entries: Vec<(PointKind, u32)>,
}

impl Registry {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn slot(&self, kind: PointKind, id: u32) -> Option<usize> {
        self.entries.iter().position(|&e| e == (kind, id))
    }

    pub fn contains(&self, kind: PointKind, id: u32) -> bool {
        self.slot(kind, id).is_some()
    }

    pub fn entries(&self) -> &[(PointKind, u32)] {
        &self.entries
    }

    pub fn ids(&self, kind: PointKind) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().filter(move |e| e.0 == kind).map(|e| e.1)
    }

    pub fn insert(&mut self, kind: PointKind, id: u32) -> Result<usize> {
        if self.contains(kind, id) {
            return Err(Error::DuplicatePoint(id));
        }
        self.entries.push((kind, id));
        Ok(self.entries.len() - 1)
    }

    /// Removes the entry and compacts later slots down by one.
    pub fn remove(&mut self, kind: PointKind, id: u32) -> Result<usize> {
        let slot = self.slot(kind, id).ok_or(Error::UnknownPoint(id))?;
        self.entries.remove(slot);
        Ok(slot)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterBelief {
    pub x: SEK3,
    pub bias: BiasVector,
    pub cov: DMatrix<f64>,
    pub frame: ErrorFrame,
    pub convention: Convention,
    pub registry: Registry,
    /// Number of propagation steps taken; drives periodic re-orthonormalization.
    pub steps: u64,
}

pub const BASE_DIM: usize = 9;
pub const BIAS_DIM: usize = 6;

/// Smallest eigenvalue of the symmetric part.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

pub fn check_covariance(p: &DMatrix<f64>, dim: usize) -> Result<()> {
    if p.nrows() != dim || p.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: p.nrows() });
    }
    if (p - p.transpose()).abs().max() > 1e-9 {
        return Err(Error::NotPositiveSemidefinite(f64::NAN));
    }
    let e = min_eigenvalue(p);
    if e < -1e-9 {
        return Err(Error::NotPositiveSemidefinite(e));
    }
    Ok(())
}

impl FilterBelief {
    pub fn new(
        rot: Mat3,
        vel: Vec3,
        pos: Vec3,
        bias: BiasVector,
        cov: DMatrix<f64>,
        frame: ErrorFrame,
        convention: Convention,
    ) -> Result<Self> {
        if !is_rotation(&rot, 1e-9) {
            return Err(Error::NotARotation);
        }
        check_covariance(&cov, BASE_DIM + BIAS_DIM)?;
        Ok(FilterBelief {
            x: SEK3 { rot, cols: vec![vel, pos] },
            bias,
            cov,
            frame,
            convention,
            registry: Registry::default(),
            steps: 0,
        })
    }

    pub fn rot(&self) -> &Mat3 {
        &self.x.rot
    }

    pub fn vel(&self) -> &Vec3 {
        &self.x.cols[0]
    }

    pub fn pos(&self) -> &Vec3 {
        &self.x.cols[1]
    }

    pub fn point_count(&self) -> usize {
        self.x.cols.len() - 2
    }

    pub fn point(&self, slot: usize) -> &Vec3 {
        &self.x.cols[2 + slot]
    }

    /// Dimension of the group part of the error, `9 + 3K`.
    pub fn group_dim(&self) -> usize {
        self.x.tangent_dim()
    }

    pub fn dim(&self) -> usize {
        self.group_dim() + BIAS_DIM
    }

    /// Covariance row offset of a point slot.
    pub fn point_offset(slot: usize) -> usize {
        BASE_DIM + 3 * slot
    }

    pub fn slot_of(&self, kind: PointKind, id: u32) -> Result<usize> {
        self.registry.slot(kind, id).ok_or(Error::UnknownPoint(id))
    }

    /// Invariant error against a reference trajectory, plus `bias_hat - bias`.
    pub fn invariant_error(
        &self,
        truth: &SEK3,
        truth_bias: &BiasVector,
    ) -> Result<(DVector<f64>, Vector6<f64>)> {
        let eta = match self.frame {
            ErrorFrame::Right => self.x.compose(&truth.inverse())?,
            ErrorFrame::Left => truth.inverse().compose(&self.x)?,
        };
        Ok((eta.log()?, self.bias.as_vector() - truth_bias.as_vector()))
    }

    /// Block-diagonal `diag(Ad, I6)` style map applied as `J P J^T`.
    pub fn frame_switch_jacobian(&self) -> DMatrix<f64> {
        let ad = match self.frame {
            ErrorFrame::Left => self.x.adjoint(),
            ErrorFrame::Right => self.x.inverse().adjoint(),
        };
        let g = self.group_dim();
        let mut j = DMatrix::identity(self.dim(), self.dim());
        j.view_mut((0, 0), (g, g)).copy_from(&ad);
        j
    }

    /// Re-expresses the covariance in the other error frame; the mean is untouched.
    pub fn switch_error_frame(&self) -> FilterBelief {
        let j = self.frame_switch_jacobian();
        let mut cov = &j * &self.cov * j.transpose();
        symmetrize(&mut cov);
        FilterBelief { cov, frame: self.frame.flipped(), ..self.clone() }
    }

    /// Same belief seen from the other convention: the group element is
    /// inverted, which turns a right error into the negated left error.
    pub fn inverted(&self) -> FilterBelief {
        let g = self.group_dim();
        let mut cov = self.cov.clone();
        let n = cov.nrows();
        for i in 0..n {
            for j in 0..n {
                if (i < g) != (j < g) {
                    cov[(i, j)] = -cov[(i, j)];
                }
            }
        }
        let convention = match self.convention {
            Convention::World => Convention::Robo,
            Convention::Robo => Convention::World,
        };
        FilterBelief { x: self.x.inverse(), cov, frame: self.frame.flipped(), convention, ..self.clone() }
    }

    pub fn in_frame(&self, frame: ErrorFrame) -> FilterBelief {
        if self.frame == frame {
            self.clone()
        } else {
            self.switch_error_frame()
        }
    }
}

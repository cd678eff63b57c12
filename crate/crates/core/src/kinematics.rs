//! Forward kinematics of serial revolute legs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::liegroup::{gamma0, Mat3, Vec3};

/// Anything that maps joint angles to a body-frame contact pose.
pub trait KinematicsModel: Send + Sync {
    fn joint_count(&self) -> usize;
    fn position(&self, alpha: &[f64]) -> Result<Vec3>;
    fn orientation(&self, alpha: &[f64]) -> Result<Mat3>;
    /// `3 x joint_count` Jacobian of [`KinematicsModel::position`].
    fn jacobian(&self, alpha: &[f64]) -> Result<DMatrix<f64>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub axis: Vec3,
    /// Translation to the next joint (or the foot), in this joint's rotated frame.
    pub offset: Vec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SerialLeg {
    /// Position of the first joint in the body frame.
    pub base: Vec3,
    pub joints: Vec<Joint>,
}

pub const DEFAULT_LINKS: [f64; 3] = [0.12, 0.35, 0.40];
pub const DEFAULT_HIP_OFFSET: f64 = 0.1;

struct Chain {
    foot: Vec3,
    rot: Mat3,
    axes: Vec<Vec3>,
    origins: Vec<Vec3>,
}

impl SerialLeg {
    /// Hip yaw about z, then hip and knee pitch about y; links hang along -z.
    pub fn three_dof(base: Vec3, links: [f64; 3]) -> Self {
        let down = |l: f64| Vec3::new(0.0, 0.0, -l);
        SerialLeg {
            base,
            joints: vec![
                Joint { axis: Vec3::z(), offset: down(links[0]) },
                Joint { axis: Vec3::y(), offset: down(links[1]) },
                Joint { axis: Vec3::y(), offset: down(links[2]) },
            ],
        }
    }

    fn check(&self, alpha: &[f64]) -> Result<()> {
        if alpha.len() != self.joints.len() {
            return Err(Error::DimensionMismatch { expected: self.joints.len(), found: alpha.len() });
        }
        Ok(())
    }

    fn chain(&self, alpha: &[f64]) -> Result<Chain> {
        self.check(alpha)?;
        let mut p = self.base;
        let mut r = Mat3::identity();
        let mut axes = Vec::with_capacity(alpha.len());
        let mut origins = Vec::with_capacity(alpha.len());
        for (j, &q) in self.joints.iter().zip(alpha) {
            origins.push(p);
            axes.push(r * j.axis);
            r *= gamma0(&(j.axis * q));
            p += r * j.offset;
        }
        Ok(Chain { foot: p, rot: r, axes, origins })
    }

    /// Damped least-squares inverse kinematics starting from `guess`.
    pub fn inverse(&self, target: &Vec3, guess: &[f64]) -> Result<Vec<f64>> {
        self.check(guess)?;
        let mut q = DVector::from_column_slice(guess);
        let mut residual = f64::INFINITY;
        for _ in 0..200 {
            let err = target - self.position(q.as_slice())?;
            residual = err.norm();
            if residual < 1e-12 {
                return Ok(q.as_slice().to_vec());
            }
            let j = self.jacobian(q.as_slice())?;
            let damping = (1e-3 * residual).min(1e-2);
            let jjt = &j * j.transpose() + DMatrix::identity(3, 3) * (damping * damping);
            let e = DVector::from_column_slice(err.as_slice());
            let step = j.transpose() * jjt.lu().solve(&e).ok_or(Error::Unreachable { leg: 0, residual })?;
            q += step;
        }
        if residual < 1e-10 {
            Ok(q.as_slice().to_vec())
        } else {
            Err(Error::Unreachable { leg: 0, residual })
        }
    }
}

impl KinematicsModel for SerialLeg {
    fn joint_count(&self) -> usize {
        self.joints.len()
    }

    fn position(&self, alpha: &[f64]) -> Result<Vec3> {
        Ok(self.chain(alpha)?.foot)
    }

    fn orientation(&self, alpha: &[f64]) -> Result<Mat3> {
        Ok(self.chain(alpha)?.rot)
    }

    fn jacobian(&self, alpha: &[f64]) -> Result<DMatrix<f64>> {
        let c = self.chain(alpha)?;
        let mut j = DMatrix::zeros(3, alpha.len());
        for (i, (axis, origin)) in c.axes.iter().zip(&c.origins).enumerate() {
            j.fixed_view_mut::<3, 1>(0, i).copy_from(&axis.cross(&(c.foot - origin)));
        }
        Ok(j)
    }
}

/// Independent legs; the encoder vector is the concatenation of their joints
/// and contact id `i` is the foot of leg `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct LeggedRobot {
    pub legs: Vec<SerialLeg>,
}

impl Default for LeggedRobot {
    fn default() -> Self {
        LeggedRobot::biped(DEFAULT_HIP_OFFSET, DEFAULT_LINKS)
    }
}

impl LeggedRobot {
    pub fn biped(hip_offset: f64, links: [f64; 3]) -> Self {
        LeggedRobot {
            legs: vec![
                SerialLeg::three_dof(Vec3::new(0.0, hip_offset, 0.0), links),
                SerialLeg::three_dof(Vec3::new(0.0, -hip_offset, 0.0), links),
            ],
        }
    }

    pub fn joint_count(&self) -> usize {
        self.legs.iter().map(|l| l.joints.len()).sum()
    }

    pub fn leg(&self, id: u32) -> Result<&SerialLeg> {
        self.legs.get(id as usize).ok_or(Error::UnknownPoint(id))
    }

    /// The leg's model and its slice of the full encoder vector.
    pub fn split<'a>(&self, id: u32, alpha: &'a [f64]) -> Result<(&SerialLeg, &'a [f64])> {
        if alpha.len() != self.joint_count() {
            return Err(Error::DimensionMismatch { expected: self.joint_count(), found: alpha.len() });
        }
        let leg = self.leg(id)?;
        let start: usize = self.legs[..id as usize].iter().map(|l| l.joints.len()).sum();
        Ok((leg, &alpha[start..start + leg.joints.len()]))
    }
}

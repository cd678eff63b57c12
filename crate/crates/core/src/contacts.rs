//! Adding and marginalizing tracked points (contacts and landmarks).

use nalgebra::DMatrix;

use crate::correction::fk_measurement;
use crate::error::Result;
use crate::kinematics::KinematicsModel;
use crate::liegroup::{skew, Mat3, Vec3};
use crate::state::{Convention, ErrorFrame, FilterBelief, PointKind, BASE_DIM};

/// Drops the point's column and the matching covariance rows and columns.
pub fn remove_point(b: &FilterBelief, kind: PointKind, id: u32) -> Result<FilterBelief> {
    let mut out = b.clone();
    let slot = out.registry.remove(kind, id)?;
    out.x.cols.remove(2 + slot);
    let start = BASE_DIM + 3 * slot;
    out.cov = b.cov.clone().remove_rows(start, 3).remove_columns(start, 3);
    Ok(out)
}

pub fn remove_contact(b: &FilterBelief, id: u32) -> Result<FilterBelief> {
    remove_point(b, PointKind::Contact, id)
}

/// Appends a point at body-frame offset `rel` (covariance `rel_cov`, body frame).
pub fn add_point(b: &FilterBelief, kind: PointKind, id: u32, rel: &Vec3, rel_cov: &Mat3) -> Result<FilterBelief> {
    if b.convention == Convention::Robo {
        // augmenting the inverse is the same as augmenting the world state
        return Ok(add_point(&b.inverted(), kind, id, rel, rel_cov)?.inverted());
    }
    let mut registry = b.registry.clone();
    registry.insert(kind, id)?;
    let r = b.rot();
    let n = b.dim();
    let ins = b.group_dim();

    // linear map from the old error to the new point error, plus added noise
    let mut f = DMatrix::zeros(3, n);
    for i in 0..3 {
        f[(i, 6 + i)] = 1.0;
    }
    let added = match b.frame {
        ErrorFrame::Right => r * rel_cov * r.transpose(),
        ErrorFrame::Left => {
            f.fixed_view_mut::<3, 3>(0, 0).copy_from(&-skew(rel));
            *rel_cov
        }
    };
    let fp = &f * &b.cov;
    let diag = &fp * f.transpose() + DMatrix::from_column_slice(3, 3, added.as_slice());

    let map = |i: usize| if i < ins { i } else { i + 3 };
    let mut cov = DMatrix::zeros(n + 3, n + 3);
    for j in 0..n {
        for i in 0..n {
            cov[(map(i), map(j))] = b.cov[(i, j)];
        }
    }
    for j in 0..n {
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

    let mut x = b.x.clone();
    x.cols.push(b.pos() + r * rel);
    Ok(FilterBelief { x, cov, registry, ..b.clone() })
}

/// Starts tracking a foot from its encoder readings.
pub fn add_contact(
    b: &FilterBelief,
    id: u32,
    alpha: &[f64],
    kin: &dyn KinematicsModel,
    encoder_std: f64,
) -> Result<FilterBelief> {
    let (foot, cov) = fk_measurement(kin, alpha, encoder_std)?;
    add_point(b, PointKind::Contact, id, &foot, &cov)
}

//! Invariant measurement updates.
//!
//! Every supported sensor reduces to one or more three-row terms of the form
//! `R y + sum_j c_j col_j = b` (right-invariant) or `y = R b + sum_j c_j col_j`
//! (left-invariant), where `col_j` are group columns (`v`, `p`, points).

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::kinematics::KinematicsModel;
use crate::liegroup::{skew, Mat3, Vec3, SEK3};
use crate::state::{symmetrize, Convention, ErrorFrame, FilterBelief, PointKind};

/// Updates are refused when the innovation covariance condition number exceeds this.
pub const MAX_CONDITION: f64 = 1e12;

/// Group column index of the velocity.
pub const COL_VEL: usize = 0;
/// Group column index of the position.
pub const COL_POS: usize = 1;

pub fn point_column(slot: usize) -> usize {
    2 + slot
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationTerm {
    pub y: Vec3,
    pub b: Vec3,
    /// `(group column, coefficient)` pairs.
    pub coeffs: Vec<(usize, f64)>,
    /// Noise covariance of `y` in its own frame.
    pub noise: Mat3,
}

/// Linearized observation ready for the Kalman step. `innovation`, `h` and
/// `noise` are stacked three rows per term.
#[derive(Clone, Debug, PartialEq)]
pub struct InvariantObservation {
    pub form: ErrorFrame,
    pub innovation: DVector<f64>,
    pub h: DMatrix<f64>,
    pub noise: DMatrix<f64>,
}

pub fn invariant_observation(b: &FilterBelief, form: ErrorFrame, terms: &[ObservationTerm]) -> InvariantObservation {
    let n = b.dim();
    let rows = 3 * terms.len();
    let mut z = DVector::zeros(rows);
    let mut h = DMatrix::zeros(rows, n);
    let mut nbar = DMatrix::zeros(rows, rows);
    let r = b.rot();
    for (t, term) in terms.iter().enumerate() {
        let o = 3 * t;
        let combo: Vec3 = term.coeffs.iter().map(|&(j, c)| b.x.cols[j] * c).sum();
        let (zt, rot_block, sign, nt) = match form {
            ErrorFrame::Right => (r * term.y + combo - term.b, skew(&term.b), -1.0, r * term.noise * r.transpose()),
            ErrorFrame::Left => {
                (r.transpose() * (term.y - combo) - term.b, -skew(&term.b), 1.0, r.transpose() * term.noise * r)
            }
        };
        z.fixed_rows_mut::<3>(o).copy_from(&zt);
        h.fixed_view_mut::<3, 3>(o, 0).copy_from(&rot_block);
        for &(j, c) in &term.coeffs {
            let col = 3 + 3 * j;
            for i in 0..3 {
                h[(o + i, col + i)] += sign * c;
            }
        }
        nbar.fixed_view_mut::<3, 3>(o, o).copy_from(&nt);
    }
    InvariantObservation { form, innovation: z, h, noise: nbar }
}

/// Contact position measured by forward kinematics, expressed for the belief's convention.
pub fn fk_term(b: &FilterBelief, contact_id: u32, foot: Vec3, foot_cov: Mat3) -> Result<ObservationTerm> {
    let slot = b.slot_of(PointKind::Contact, contact_id)?;
    Ok(ObservationTerm {
        y: foot,
        b: Vec3::zeros(),
        coeffs: vec![(COL_POS, 1.0), (point_column(slot), -1.0)],
        noise: foot_cov,
    })
}

/// Form used by FK and relative-landmark terms under a given convention.
pub fn relative_form(convention: Convention) -> ErrorFrame {
    match convention {
        Convention::World => ErrorFrame::Right,
        Convention::Robo => ErrorFrame::Left,
    }
}

/// Body-frame foot position and its covariance from encoder readings.
pub fn fk_measurement(kin: &dyn KinematicsModel, alpha: &[f64], encoder_std: f64) -> Result<(Vec3, Mat3)> {
    let foot = kin.position(alpha)?;
    let j = kin.jacobian(alpha)?;
    let cov = &j * j.transpose() * (encoder_std * encoder_std);
    Ok((foot, Mat3::from_iterator(cov.iter().cloned())))
}

pub fn fk_position_observation(
    b: &FilterBelief,
    kin: &dyn KinematicsModel,
    alpha: &[f64],
    contact_id: u32,
    encoder_std: f64,
) -> Result<InvariantObservation> {
    let (foot, cov) = fk_measurement(kin, alpha, encoder_std)?;
    let term = fk_term(b, contact_id, foot, cov)?;
    Ok(invariant_observation(b, relative_form(b.convention), &[term]))
}

#[derive(Clone, Debug, PartialEq)]
pub enum ObservationKind {
    /// Body-frame position of a tracked landmark.
    LandmarkRelative { id: u32, y: Vec3 },
    /// Body-frame position of a landmark with known world position `l`.
    LandmarkAbsolute { l: Vec3, y: Vec3 },
    /// Body-frame reading of a known world field `m`.
    Magnetometer { m: Vec3, y: Vec3 },
    /// World position of the body.
    Gps { y: Vec3 },
}

pub fn observation_term(b: &FilterBelief, kind: &ObservationKind, noise: Mat3) -> Result<(ErrorFrame, ObservationTerm)> {
    let world = b.convention == Convention::World;
    let term = |y: Vec3, bv: Vec3, coeffs: Vec<(usize, f64)>| ObservationTerm { y, b: bv, coeffs, noise };
    Ok(match *kind {
        ObservationKind::LandmarkRelative { id, y } => {
            let slot = b.slot_of(PointKind::Landmark, id)?;
            let t = term(y, Vec3::zeros(), vec![(COL_POS, 1.0), (point_column(slot), -1.0)]);
            (relative_form(b.convention), t)
        }
        ObservationKind::LandmarkAbsolute { l, y } => {
            (relative_form(b.convention), term(y, l, vec![(COL_POS, 1.0)]))
        }
        ObservationKind::Magnetometer { m, y } => (relative_form(b.convention), term(y, m, vec![])),
        ObservationKind::Gps { y } => {
            let form = if world { ErrorFrame::Left } else { ErrorFrame::Right };
            (form, term(y, Vec3::zeros(), vec![(COL_POS, 1.0)]))
        }
    })
}

pub fn build_observation(b: &FilterBelief, kind: &ObservationKind, noise: Mat3) -> Result<InvariantObservation> {
    let (form, term) = observation_term(b, kind, noise)?;
    Ok(invariant_observation(b, form, &[term]))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateOptions {
    /// Reject the update when the innovation falls outside this chi-square probability.
    pub gate_probability: Option<f64>,
}

/// Kalman gain and Joseph-form posterior in the current error coordinates.
fn kalman_step(
    cov: &DMatrix<f64>,
    obs: &InvariantObservation,
    options: &UpdateOptions,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let ph_t = cov * obs.h.transpose();
    let mut s = &obs.h * &ph_t + &obs.noise;
    symmetrize(&mut s);
    let eig = s.symmetric_eigenvalues();
    let lo = eig.min();
    let hi = eig.max();
    if lo.is_nan() || lo <= 0.0 || hi / lo > MAX_CONDITION {
        return Err(Error::IllConditioned(hi / lo));
    }
    let chol = s.clone().cholesky().ok_or(Error::IllConditioned(hi / lo))?;
    if let Some(prob) = options.gate_probability {
        let d2 = obs.innovation.dot(&chol.solve(&obs.innovation));
        let limit = ChiSquared::new(obs.innovation.len() as f64)
            .map_err(|_| Error::Unsupported("chi-square gate"))?
            .inverse_cdf(prob);
        if d2 > limit {
            return Err(Error::GateRejected(d2));
        }
    }
    let gain = chol.solve(&ph_t.transpose()).transpose();
    let delta = &gain * &obs.innovation;
    let n = cov.nrows();
    let ikh = DMatrix::identity(n, n) - &gain * &obs.h;
    let mut post = &ikh * cov * ikh.transpose() + &gain * &obs.noise * gain.transpose();
    symmetrize(&mut post);
    Ok((delta, post))
}

fn apply(b: &FilterBelief, delta: &DVector<f64>, cov: DMatrix<f64>) -> FilterBelief {
    let g = b.group_dim();
    let step = SEK3::exp(&delta.rows(0, g).into_owned());
    let x = match b.frame {
        ErrorFrame::Right => step.compose(&b.x),
        ErrorFrame::Left => b.x.compose(&step),
    }
    .expect("update step has matching dimension");
    let mut bias = b.bias;
    bias.gyro += delta.fixed_rows::<3>(g);
    bias.accel += delta.fixed_rows::<3>(g + 3);
    FilterBelief { x, bias, cov, ..b.clone() }
}

/// Generic invariant update; switches the covariance frame temporarily when
/// the observation form differs from the belief's frame.
pub fn update(b: &FilterBelief, obs: &InvariantObservation, options: &UpdateOptions) -> Result<FilterBelief> {
    if obs.h.ncols() != b.dim() {
        return Err(Error::DimensionMismatch { expected: b.dim(), found: obs.h.ncols() });
    }
    if obs.form == b.frame {
        let (delta, cov) = kalman_step(&b.cov, obs, options)?;
        Ok(apply(b, &delta, cov))
    } else {
        let switched = b.switch_error_frame();
        let (delta, cov) = kalman_step(&switched.cov, obs, options)?;
        Ok(apply(&switched, &delta, cov).switch_error_frame())
    }
}

pub fn update_right(b: &FilterBelief, obs: &InvariantObservation) -> Result<FilterBelief> {
    if obs.form != ErrorFrame::Right {
        return Err(Error::Unsupported("left-invariant observation passed to update_right"));
    }
    update(b, obs, &UpdateOptions::default())
}

pub fn update_left(b: &FilterBelief, obs: &InvariantObservation) -> Result<FilterBelief> {
    if obs.form != ErrorFrame::Left {
        return Err(Error::Unsupported("right-invariant observation passed to update_left"));
    }
    update(b, obs, &UpdateOptions::default())
}

/// Applies each term as its own update; equivalent to the stacked update when
/// the term noises are independent.
pub fn update_sequential(
    b: &FilterBelief,
    form: ErrorFrame,
    terms: &[ObservationTerm],
    options: &UpdateOptions,
) -> Result<FilterBelief> {
    let mut out = b.clone();
    for t in terms {
        let obs = invariant_observation(&out, form, std::slice::from_ref(t));
        out = update(&out, &obs, options)?;
    }
    Ok(out)
}

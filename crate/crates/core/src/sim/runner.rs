use std::collections::HashMap;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::analysis::{euclidean_covariance, qekf_euclidean_covariance};
use crate::contacts::{add_contact, add_point, remove_contact};
use crate::correction::{
    fk_measurement, fk_term, invariant_observation, relative_form, update, update_sequential, ObservationKind,
    UpdateOptions,
};
use crate::dynamics::{propagate, ImuSample, NoiseParams};
use crate::error::{Error, Result};
use crate::kinematics::LeggedRobot;
use crate::liegroup::{Mat3, Vec3, SEK3};
use crate::qekf::{
    qekf_add_contact, qekf_predict_with, qekf_remove_contact, qekf_update, Discretization, FootMeasurement,
    QekfBelief,
};
use crate::state::{BiasVector, Convention, ErrorFrame, FilterBelief, PointKind};

use super::{SensorData, SensorRecord, Stamp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FilterKind {
    InekfRight,
    InekfLeft,
    InekfRobocentric,
    Qekf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 4] =
        [FilterKind::InekfRight, FilterKind::InekfLeft, FilterKind::InekfRobocentric, FilterKind::Qekf];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::InekfRight => "inekf-right",
            FilterKind::InekfLeft => "inekf-left",
            FilterKind::InekfRobocentric => "inekf-robocentric",
            FilterKind::Qekf => "qekf",
        }
    }
}

impl FromStr for FilterKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown filter '{s}' (expected inekf-right, inekf-left, inekf-robocentric or qekf)"))
    }
}

/// Initial standard deviations, each applied in the filter's own error coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitStd {
    pub orientation: f64,
    pub velocity: f64,
    pub position: f64,
    pub gyro_bias: f64,
    pub accel_bias: f64,
}

impl Default for InitStd {
    fn default() -> Self {
        InitStd {
            orientation: 30.0_f64.to_radians(),
            velocity: 1.0,
            position: 0.1,
            gyro_bias: 0.005,
            accel_bias: 0.05,
        }
    }
}

impl InitStd {
    pub fn covariance(&self, estimate_bias: bool) -> DMatrix<f64> {
        let b = if estimate_bias { 1.0 } else { 0.0 };
        let sds = [self.orientation, self.velocity, self.position, self.gyro_bias * b, self.accel_bias * b];
        let diag: Vec<f64> = sds.iter().flat_map(|s| [s * s; 3]).collect();
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag))
    }
}

/// Everything a filter needs besides the data.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterSetup {
    pub noise: NoiseParams,
    pub gravity: Vec3,
    pub robot: LeggedRobot,
    pub init_std: InitStd,
    /// When false the bias covariance and bias random walk are zeroed.
    pub estimate_bias: bool,
    pub options: UpdateOptions,
    pub qekf_discretization: Discretization,
    /// Std of GPS position readings (m).
    pub gps_std: f64,
    /// Known world magnetic field used for magnetometer readings.
    pub magnetic_field: Vec3,
    pub mag_std: f64,
    /// Std of body-frame landmark position readings (m).
    pub landmark_std: f64,
}

impl Default for FilterSetup {
    fn default() -> Self {
        FilterSetup {
            noise: NoiseParams::default(),
            gravity: crate::dynamics::standard_gravity(),
            robot: LeggedRobot::default(),
            init_std: InitStd::default(),
            estimate_bias: true,
            options: UpdateOptions::default(),
            qekf_discretization: Discretization::Exponential,
            gps_std: 0.5,
            magnetic_field: Vec3::new(0.2, 0.0, -0.4),
            mag_std: 0.01,
            landmark_std: 0.05,
        }
    }
}

impl FilterSetup {
    fn process_noise(&self) -> NoiseParams {
        let mut n = self.noise;
        if !self.estimate_bias {
            n.gyro_bias = 0.0;
            n.accel_bias = 0.0;
        }
        n
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rot: Mat3,
    pub vel: Vec3,
    pub pos: Vec3,
}

/// Common interface of the invariant filters and the quaternion baseline.
pub trait Estimator {
    fn propagate(&mut self, imu: &ImuSample) -> Result<()>;
    fn add_contact(&mut self, id: u32, alpha: &[f64]) -> Result<()>;
    fn remove_contact(&mut self, id: u32) -> Result<()>;
    /// Forward-kinematic correction with every active contact.
    fn correct_contacts(&mut self, alpha: &[f64]) -> Result<()>;
    fn has_contact(&self, id: u32) -> bool;
    /// World-frame pose.
    fn pose(&self) -> Pose;
    fn bias(&self) -> BiasVector;
    /// Covariance of `(dphi, dv, dp)` in world coordinates.
    fn euclidean_covariance(&self) -> Result<DMatrix<f64>>;
    fn setup(&self) -> &FilterSetup;
    fn observe(&mut self, _kind: &ObservationKind, _noise: Mat3) -> Result<()> {
        Err(Error::Unsupported("observation type for this filter"))
    }
    /// Body-frame landmark reading; starts tracking unknown ids.
    fn landmark(&mut self, _id: u32, _y: &Vec3) -> Result<()> {
        Err(Error::Unsupported("landmarks for this filter"))
    }
}

#[derive(Clone, Debug)]
pub struct InvariantEstimator {
    pub belief: FilterBelief,
    pub setup: FilterSetup,
    /// Apply multi-contact corrections one contact at a time.
    pub sequential: bool,
}

impl InvariantEstimator {
    pub fn new(kind: FilterKind, pose: &Pose, bias: BiasVector, setup: &FilterSetup) -> Result<Self> {
        let cov = setup.init_std.covariance(setup.estimate_bias);
        let (frame, convention) = match kind {
            FilterKind::InekfRight => (ErrorFrame::Right, Convention::World),
            FilterKind::InekfLeft => (ErrorFrame::Left, Convention::World),
            FilterKind::InekfRobocentric => (ErrorFrame::Left, Convention::Robo),
            FilterKind::Qekf => return Err(Error::Unsupported("qekf is not an invariant filter")),
        };
        let mut belief = FilterBelief::new(pose.rot, pose.vel, pose.pos, bias, cov, frame, convention)?;
        if convention == Convention::Robo {
            belief.x = belief.x.inverse();
        }
        Ok(InvariantEstimator { belief, setup: setup.clone(), sequential: false })
    }
}

impl Estimator for InvariantEstimator {
    fn propagate(&mut self, imu: &ImuSample) -> Result<()> {
        self.belief = propagate(&self.belief, imu, &self.setup.process_noise(), &self.setup.gravity)?;
        Ok(())
    }

    fn add_contact(&mut self, id: u32, alpha: &[f64]) -> Result<()> {
        let (leg, a) = self.setup.robot.split(id, alpha)?;
        self.belief = add_contact(&self.belief, id, a, leg, self.setup.noise.encoder)?;
        Ok(())
    }

    fn remove_contact(&mut self, id: u32) -> Result<()> {
        self.belief = remove_contact(&self.belief, id)?;
        Ok(())
    }

    fn correct_contacts(&mut self, alpha: &[f64]) -> Result<()> {
        let ids: Vec<u32> = self.belief.registry.ids(PointKind::Contact).collect();
        if ids.is_empty() {
            return Ok(());
        }
        let mut terms = Vec::with_capacity(ids.len());
        for id in ids {
            let (leg, a) = self.setup.robot.split(id, alpha)?;
            let (foot, cov) = fk_measurement(leg, a, self.setup.noise.encoder)?;
            terms.push(fk_term(&self.belief, id, foot, cov)?);
        }
        let form = relative_form(self.belief.convention);
        self.belief = if self.sequential {
            update_sequential(&self.belief, form, &terms, &self.setup.options)?
        } else {
            let obs = invariant_observation(&self.belief, form, &terms);
            update(&self.belief, &obs, &self.setup.options)?
        };
        Ok(())
    }

    fn has_contact(&self, id: u32) -> bool {
        self.belief.registry.contains(PointKind::Contact, id)
    }

    fn pose(&self) -> Pose {
        let x = match self.belief.convention {
            Convention::World => self.belief.x.clone(),
            Convention::Robo => self.belief.x.inverse(),
        };
        Pose { rot: x.rot, vel: x.cols[0], pos: x.cols[1] }
    }

    fn bias(&self) -> BiasVector {
        self.belief.bias
    }

    fn euclidean_covariance(&self) -> Result<DMatrix<f64>> {
        euclidean_covariance(&self.belief)
    }

    fn setup(&self) -> &FilterSetup {
        &self.setup
    }

    fn observe(&mut self, kind: &ObservationKind, noise: Mat3) -> Result<()> {
        let obs = crate::correction::build_observation(&self.belief, kind, noise)?;
        self.belief = update(&self.belief, &obs, &self.setup.options)?;
        Ok(())
    }

    fn landmark(&mut self, id: u32, y: &Vec3) -> Result<()> {
        let var = self.setup.landmark_std * self.setup.landmark_std;
        if self.belief.registry.contains(PointKind::Landmark, id) {
            self.observe(&ObservationKind::LandmarkRelative { id, y: *y }, Mat3::identity() * var)
        } else {
            self.belief = add_point(&self.belief, PointKind::Landmark, id, y, &(Mat3::identity() * var))?;
            Ok(())
        }
    }
}

#[derive(Clone, Debug)]
pub struct QekfEstimator {
    pub belief: QekfBelief,
    pub setup: FilterSetup,
}

impl QekfEstimator {
    pub fn new(pose: &Pose, bias: BiasVector, setup: &FilterSetup) -> Result<Self> {
        let cov = setup.init_std.covariance(setup.estimate_bias);
        let belief = QekfBelief::new(&pose.rot, pose.vel, pose.pos, bias, cov)?;
        Ok(QekfEstimator { belief, setup: setup.clone() })
    }
}

impl Estimator for QekfEstimator {
    fn propagate(&mut self, imu: &ImuSample) -> Result<()> {
        let s = &self.setup;
        self.belief = qekf_predict_with(&self.belief, imu, &s.process_noise(), &s.gravity, s.qekf_discretization);
        Ok(())
    }

    fn add_contact(&mut self, id: u32, alpha: &[f64]) -> Result<()> {
        let (leg, a) = self.setup.robot.split(id, alpha)?;
        let (foot, cov) = fk_measurement(leg, a, self.setup.noise.encoder)?;
        self.belief = qekf_add_contact(&self.belief, id, &foot, &cov)?;
        Ok(())
    }

    fn remove_contact(&mut self, id: u32) -> Result<()> {
        self.belief = qekf_remove_contact(&self.belief, id)?;
        Ok(())
    }

    fn correct_contacts(&mut self, alpha: &[f64]) -> Result<()> {
        let ids: Vec<u32> = self.belief.registry.ids(PointKind::Contact).collect();
        let mut feet = Vec::with_capacity(ids.len());
        for id in ids {
            let (leg, a) = self.setup.robot.split(id, alpha)?;
            let (foot, cov) = fk_measurement(leg, a, self.setup.noise.encoder)?;
            feet.push(FootMeasurement { id, foot, cov });
        }
        self.belief = qekf_update(&self.belief, &feet)?;
        Ok(())
    }

    fn has_contact(&self, id: u32) -> bool {
        self.belief.registry.contains(PointKind::Contact, id)
    }

    fn pose(&self) -> Pose {
        Pose { rot: self.belief.rot(), vel: self.belief.v, pos: self.belief.p }
    }

    fn bias(&self) -> BiasVector {
        self.belief.bias
    }

    fn euclidean_covariance(&self) -> Result<DMatrix<f64>> {
        qekf_euclidean_covariance(&self.belief)
    }

    fn setup(&self) -> &FilterSetup {
        &self.setup
    }
}

pub fn make_estimator(kind: FilterKind, pose: &Pose, bias: BiasVector, setup: &FilterSetup) -> Result<Box<dyn Estimator>> {
    Ok(match kind {
        FilterKind::Qekf => Box::new(QekfEstimator::new(pose, bias, setup)?),
        _ => Box::new(InvariantEstimator::new(kind, pose, bias, setup)?),
    })
}

/// Counts of non-fatal problems met while replaying a log.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReplayStats {
    pub rejected_updates: usize,
    pub stale_imu: usize,
    pub contacts_added: usize,
    pub contacts_removed: usize,
    /// Records the estimator has no model for.
    pub unsupported: usize,
}

#[derive(Clone, Copy, Debug, Default)]
struct Debounce {
    raw: Option<bool>,
    count: u32,
    state: bool,
}

/// Feeds sensor records to an estimator in file order.
///
/// IMU samples are held and applied over the interval up to the next record
/// time. Contact flags must repeat twice before a contact is added or removed.
pub struct Replay<E> {
    pub estimator: E,
    pub stats: ReplayStats,
    time: Option<Stamp>,
    held: Option<(Vec3, Vec3)>,
    alpha: Option<Vec<f64>>,
    flags: HashMap<u32, Debounce>,
}

/// Consecutive identical contact flags needed to change contact state.
pub const DEBOUNCE_COUNT: u32 = 2;

impl<E: Estimator> Replay<E> {
    pub fn new(estimator: E) -> Self {
        Replay {
            estimator,
            stats: ReplayStats::default(),
            time: None,
            held: None,
            alpha: None,
            flags: HashMap::new(),
        }
    }

    pub fn time(&self) -> Option<Stamp> {
        self.time
    }

    fn advance(&mut self, to: Stamp) -> Result<()> {
        if let (Some(from), Some((gyro, accel))) = (self.time, self.held) {
            if to < from {
                return Err(Error::Unsupported("timestamps must not decrease"));
            }
            if to > from {
                let dt = (to.0 - from.0) as f64 * 1e-9;
                match ImuSample::new(gyro, accel, dt) {
                    Ok(imu) => self.estimator.propagate(&imu)?,
                    Err(_) => self.stats.stale_imu += 1,
                }
            }
        }
        self.time = Some(to);
        Ok(())
    }

    fn soft<T>(&mut self, r: Result<T>) -> Result<()> {
        match r {
            Ok(_) => Ok(()),
            Err(Error::IllConditioned(_)) | Err(Error::GateRejected(_)) => {
                self.stats.rejected_updates += 1;
                Ok(())
            }
            Err(Error::Unsupported(_)) => {
                self.stats.unsupported += 1;
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    pub fn step(&mut self, rec: &SensorRecord) -> Result<()> {
        self.advance(rec.stamp)?;
        match &rec.data {
            SensorData::Imu { gyro, accel } => self.held = Some((*gyro, *accel)),
            SensorData::Encoders(a) => {
                self.alpha = Some(a.clone());
                let r = self.estimator.correct_contacts(a);
                self.soft(r)?;
            }
            SensorData::Contact { id, flag } => {
                let d = self.flags.entry(*id).or_default();
                d.count = if d.raw == Some(*flag) { d.count + 1 } else { 1 };
                d.raw = Some(*flag);
                if d.count >= DEBOUNCE_COUNT && d.state != *flag {
                    d.state = *flag;
                    if *flag {
                        if let Some(a) = self.alpha.clone() {
                            self.estimator.add_contact(*id, &a)?;
                            self.stats.contacts_added += 1;
                        } else {
                            self.flags.get_mut(id).unwrap().state = false;
                        }
                    } else if self.estimator.has_contact(*id) {
                        self.estimator.remove_contact(*id)?;
                        self.stats.contacts_removed += 1;
                    }
                }
            }
            SensorData::Landmark { id, pos } => {
                let r = self.estimator.landmark(*id, pos);
                self.soft(r)?;
            }
            SensorData::Gps(y) => {
                let var = self.estimator.setup().gps_std.powi(2);
                let r = self.estimator.observe(&ObservationKind::Gps { y: *y }, Mat3::identity() * var);
                self.soft(r)?;
            }
            SensorData::Mag(y) => {
                let m = self.estimator.setup().magnetic_field;
                let var = self.estimator.setup().mag_std.powi(2);
                let r = self.estimator.observe(&ObservationKind::Magnetometer { m, y: *y }, Mat3::identity() * var);
                self.soft(r)?;
            }
        }
        Ok(())
    }
}

impl<E: Estimator + ?Sized> Estimator for Box<E> {
    fn propagate(&mut self, imu: &ImuSample) -> Result<()> {
        (**self).propagate(imu)
    }
    fn add_contact(&mut self, id: u32, alpha: &[f64]) -> Result<()> {
        (**self).add_contact(id, alpha)
    }
    fn remove_contact(&mut self, id: u32) -> Result<()> {
        (**self).remove_contact(id)
    }
    fn correct_contacts(&mut self, alpha: &[f64]) -> Result<()> {
        (**self).correct_contacts(alpha)
    }
    fn has_contact(&self, id: u32) -> bool {
        (**self).has_contact(id)
    }
    fn pose(&self) -> Pose {
        (**self).pose()
    }
    fn bias(&self) -> BiasVector {
        (**self).bias()
    }
    fn euclidean_covariance(&self) -> Result<DMatrix<f64>> {
        (**self).euclidean_covariance()
    }
    fn setup(&self) -> &FilterSetup {
        (**self).setup()
    }
    fn observe(&mut self, kind: &ObservationKind, noise: Mat3) -> Result<()> {
        (**self).observe(kind, noise)
    }
    fn landmark(&mut self, id: u32, y: &Vec3) -> Result<()> {
        (**self).landmark(id, y)
    }
}

/// Pose of a truth snapshot.
pub fn truth_pose(x: &SEK3) -> Pose {
    Pose { rot: x.rot, vel: x.cols[0], pos: x.cols[1] }
}

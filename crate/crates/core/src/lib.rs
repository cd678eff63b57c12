//! Contact-aided invariant extended Kalman filtering for legged robots.
//!
//! The filter state lives on the extended pose group [`liegroup::SEK3`]
//! (orientation, velocity, position and tracked contact or landmark points)
//! with an additive IMU bias vector. [`dynamics`] propagates it with an exact
//! zero-order-hold discretization, [`correction`] applies invariant
//! measurement updates and [`contacts`] adds and marginalizes contact points.
//! [`qekf`] is a conventional quaternion EKF used as a baseline and [`sim`]
//! generates synthetic walking data to compare them.

pub mod analysis;
pub mod contacts;
pub mod correction;
pub mod dynamics;
pub mod error;
pub mod kinematics;
pub mod liegroup;
pub mod qekf;
pub mod sim;
pub mod state;

pub use error::{Error, Result};

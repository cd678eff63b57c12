mod common;

use common::*;
use inekf_core::kinematics::*;
use inekf_core::liegroup::{Mat3, Vec3};
use inekf_core::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn leg() -> SerialLeg {
    SerialLeg::three_dof(Vec3::new(0.02, 0.1, -0.05), DEFAULT_LINKS)
}

fn central_difference(leg: &SerialLeg, q: &[f64], h: f64) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(3, q.len());
    for i in 0..q.len() {
        let (mut a, mut b) = (q.to_vec(), q.to_vec());
        a[i] += h;
        b[i] -= h;
        let d = (leg.position(&a).unwrap() - leg.position(&b).unwrap()) / (2.0 * h);
        j.fixed_view_mut::<3, 1>(0, i).copy_from(&d);
    }
    j
}

#[test]
fn zero_pose_hangs_straight_down() {
    let l = leg();
    let total: f64 = DEFAULT_LINKS.iter().sum();
    let foot = l.position(&[0.0, 0.0, 0.0]).unwrap();
    assert!((foot - (l.base + Vec3::new(0.0, 0.0, -total))).amax() < 1e-15);
    assert_eq!(l.orientation(&[0.0; 3]).unwrap(), Mat3::identity());
}

#[test]
fn jacobian_matches_finite_differences() {
    let l = leg();
    let mut r = rng(41);
    for _ in 0..200 {
        let q: Vec<f64> = (0..3).map(|_| r.gen_range(-1.5..1.5)).collect();
        let fd = central_difference(&l, &q, 1e-6);
        assert!(max_abs(&(l.jacobian(&q).unwrap() - fd)) < 1e-6);
    }
}

#[test]
fn orientation_is_a_rotation() {
    let l = leg();
    let mut r = rng(42);
    for _ in 0..100 {
        let q: Vec<f64> = (0..3).map(|_| r.gen_range(-3.0..3.0)).collect();
        let rot = l.orientation(&q).unwrap();
        assert!((rot.transpose() * rot - Mat3::identity()).amax() < 1e-10);
        assert!((rot.determinant() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn wrong_joint_count_is_rejected() {
    let l = leg();
    assert!(matches!(l.position(&[0.0; 2]), Err(Error::DimensionMismatch { expected: 3, found: 2 })));
    assert!(l.jacobian(&[0.0; 4]).is_err());
    let robot = LeggedRobot::default();
    assert_eq!(robot.joint_count(), 6);
    assert!(robot.split(0, &[0.0; 5]).is_err());
    assert!(matches!(robot.leg(2), Err(Error::UnknownPoint(2))));
}

#[test]
fn robot_split_selects_leg_joints() {
    let robot = LeggedRobot::default();
    let alpha = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    let (l1, q1) = robot.split(1, &alpha).unwrap();
    assert_eq!(q1, &[0.4, 0.5, 0.6]);
    assert_eq!(l1.base, Vec3::new(0.0, -DEFAULT_HIP_OFFSET, 0.0));
}

#[test]
fn inverse_kinematics_round_trip() {
    let l = leg();
    let mut r = rng(43);
    for _ in 0..50 {
        let q: Vec<f64> = vec![r.gen_range(-0.4..0.4), r.gen_range(-0.8..0.4), r.gen_range(-1.5..-0.2)];
        let target = l.position(&q).unwrap();
        let sol = l.inverse(&target, &[0.0, 0.3, -0.6]).unwrap();
        assert!((l.position(&sol).unwrap() - target).norm() < 1e-10);
    }
    assert!(matches!(l.inverse(&Vec3::new(0.0, 0.0, -5.0), &[0.0, 0.3, -0.6]), Err(Error::Unreachable { .. })));
}

proptest! {
    #[test]
    fn position_change_bounded_by_jacobian(q in prop::array::uniform3(-2.0..2.0f64), d in prop::array::uniform3(-1.0..1.0f64)) {
        let l = leg();
        let delta: Vec<f64> = d.iter().map(|x| x * 1e-4).collect();
        let moved: Vec<f64> = q.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let dp = (l.position(&moved).unwrap() - l.position(&q).unwrap()).norm();
        let jn = l.jacobian(&q).unwrap().norm();
        let dn = delta.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(dp <= jn * dn + 1e-7);
    }
}

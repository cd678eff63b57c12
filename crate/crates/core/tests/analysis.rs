mod common;

use common::*;
use inekf_core::analysis::*;
use inekf_core::dynamics::{standard_gravity, ImuSample};
use inekf_core::liegroup::{gamma0, log_so3, Mat3, Vec3, SEK3};
use inekf_core::qekf::QekfBelief;
use inekf_core::state::*;
use inekf_core::Error;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn moderate_belief<R: Rng>(r: &mut R) -> FilterBelief {
    let mut b = belief(r, 0, ErrorFrame::Right);
    b.x.rot = gamma0(&Vec3::new(0.4, -0.3, 1.1));
    b
}

#[test]
fn identity_mean_keeps_covariance() {
    let mut r = rng(101);
    let mut b = belief(&mut r, 0, ErrorFrame::Right);
    b.x = SEK3::identity(2);
    let e = right_invariant_to_euclidean(&b).unwrap();
    assert!(max_abs(&(e - b.cov.view((0, 0), (9, 9)))) < 1e-15);
    assert!(matches!(right_invariant_to_euclidean(&b.switch_error_frame()), Err(Error::WrongConvention)));
}

#[test]
fn euclidean_covariance_matches_samples() {
    let mut r = rng(102);
    let mut b = moderate_belief(&mut r);
    b.cov = spd(&mut r, 15, 1e-5);
    let phi_hat = log_so3(b.rot()).unwrap();
    let base: DMatrix<f64> = b.cov.view((0, 0), (9, 9)).into_owned();
    let samples: Vec<DVector<f64>> = gaussian_samples(&base, 20_000, &mut r)
        .into_iter()
        .map(|xi| {
            let truth = SEK3::exp(&-xi).compose(&b.x).unwrap();
            let dphi = log_so3(&truth.rot).unwrap() - phi_hat;
            let dv = truth.cols[0] - b.vel();
            let dp = truth.cols[1] - b.pos();
            DVector::from_iterator(9, dphi.iter().chain(dv.iter()).chain(dp.iter()).cloned())
        })
        .collect();
    let (_, sampled) = sample_mean_cov(&samples);
    let predicted = right_invariant_to_euclidean(&b).unwrap();
    assert!(rel_frobenius(&sampled, &predicted) < 0.05);

    // the same covariance reached from other frames and conventions
    let left = b.switch_error_frame();
    assert!(rel_frobenius(&euclidean_covariance(&left).unwrap(), &predicted) < 1e-10);
    let robo = world_to_robocentric(&left).unwrap();
    assert!(rel_frobenius(&euclidean_covariance(&robo).unwrap(), &predicted) < 1e-10);
}

#[test]
fn qekf_covariance_matches_samples() {
    let mut r = rng(103);
    let b0 = moderate_belief(&mut r);
    let q = QekfBelief::new(b0.rot(), *b0.vel(), *b0.pos(), b0.bias, spd(&mut r, 15, 1e-5)).unwrap();
    let phi_hat = log_so3(&q.rot()).unwrap();
    let base: DMatrix<f64> = q.cov.view((0, 0), (9, 9)).into_owned();
    let samples: Vec<DVector<f64>> = gaussian_samples(&base, 20_000, &mut r)
        .into_iter()
        .map(|e| {
            let rot = q.rot() * gamma0(&-Vec3::new(e[0], e[1], e[2]));
            let dphi = log_so3(&rot).unwrap() - phi_hat;
            DVector::from_iterator(9, dphi.iter().cloned().chain(e.iter().skip(3).map(|x| -x)))
        })
        .collect();
    let (_, sampled) = sample_mean_cov(&samples);
    assert!(rel_frobenius(&sampled, &qekf_euclidean_covariance(&q).unwrap()) < 0.05);
}

#[test]
fn pure_yaw_spreads_position_sideways() {
    let mut r = rng(104);
    let mut b = belief(&mut r, 0, ErrorFrame::Right);
    b.x.rot = Mat3::identity();
    b.x.cols[1] = Vec3::new(3.0, 4.0, 0.5);
    b.cov = DMatrix::zeros(15, 15);
    let sigma2 = 0.01;
    b.cov[(2, 2)] = sigma2;
    let e = right_invariant_to_euclidean(&b).unwrap();
    let pp = block(&e, 6, 6);
    let side = Vec3::new(-4.0, 3.0, 0.0) / 5.0;
    assert!((pp - side * side.transpose() * (sigma2 * 25.0)).amax() < 1e-15);
    assert!((e[(2, 2)] - sigma2).abs() < 1e-15);
}

#[test]
fn qekf_error_map_is_first_order() {
    let mut r = rng(105);
    let truth = SEK3 { rot: gamma0(&vec3(&mut r, 1.0)), cols: vec![vec3(&mut r, 1.0), vec3(&mut r, 2.0)] };
    let dir: Vec<Vec3> = (0..3).map(|_| vec3(&mut r, 1.0)).collect();
    let residual = |s: f64| {
        let (dth, dv, dp) = (dir[0] * s, dir[1] * s, dir[2] * s);
        let est = SEK3 { rot: truth.rot * gamma0(&dth), cols: vec![truth.cols[0] + dv, truth.cols[1] + dp] };
        let exact = est.compose(&truth.inverse()).unwrap().log().unwrap();
        let approx = qekf_error_to_invariant(&dth, &dv, &dp, &est.rot, &est.cols[0], &est.cols[1]);
        (exact - approx).norm()
    };
    let slope = (residual(1e-2) / residual(1e-3)).log10();
    assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
}

#[test]
fn robocentric_round_trip() {
    let mut r = rng(106);
    let b = belief(&mut r, 2, ErrorFrame::Left);
    let robo = world_to_robocentric(&b).unwrap();
    assert_eq!(robo.convention, Convention::Robo);
    assert!((robo.vel() + b.rot().transpose() * b.vel()).amax() < 1e-14);
    assert!((robo.rot() - b.rot().transpose()).amax() < 1e-15);
    let back = robocentric_to_world(&robo).unwrap();
    assert!((back.x.to_matrix() - b.x.to_matrix()).amax() < 1e-14);
    assert_eq!(back.cov, b.cov);
    assert_eq!(back.frame, b.frame);
    assert!(matches!(world_to_robocentric(&robo), Err(Error::WrongConvention)));
    assert!(matches!(robocentric_to_world(&b), Err(Error::WrongConvention)));
}

#[test]
fn tilt_ignores_yaw() {
    let r0 = gamma0(&Vec3::new(0.1, 0.2, 0.3));
    assert!(tilt_error(&(gamma0(&Vec3::new(0.0, 0.0, 1.2)) * r0), &r0) < 1e-15);
    let tilted = gamma0(&Vec3::new(0.05, 0.0, 0.0)) * r0;
    assert!((tilt_error(&tilted, &r0) - 0.05).abs() < 1e-12);
}

#[test]
fn convergence_time_examples() {
    let c = ConvergenceCriteria::default();
    let times: Vec<f64> = (0..300).map(|i| i as f64 * 0.01).collect();
    let zeros = vec![0.0; 300];
    assert_eq!(time_to_converge(&times, &zeros, &zeros, &c), Some(0.0));
    let big = vec![1.0; 300];
    assert_eq!(time_to_converge(&times, &big, &zeros, &c), None);
    // a short dip at 0.5 s does not count; the window starting at 1.0 s does
    let tilt: Vec<f64> = times.iter().map(|&t| if (0.5..0.6).contains(&t) || t >= 1.0 - 1e-9 { 0.0 } else { 1.0 }).collect();
    assert_eq!(time_to_converge(&times, &tilt, &zeros, &c), Some(1.0));
    // passing late is still reported if it holds long enough
    let vel: Vec<f64> = times.iter().map(|&t| if t >= 2.75 { 0.0 } else { 1.0 }).collect();
    assert_eq!(time_to_converge(&times, &zeros, &vel, &c), Some(2.75));
    let vel: Vec<f64> = times.iter().map(|&t| if t >= 2.85 { 0.0 } else { 1.0 }).collect();
    assert_eq!(time_to_converge(&times, &zeros, &vel, &c), None);
}

#[test]
fn ring_statistic() {
    let mut r = rng(107);
    let ring: Vec<(f64, f64)> = (0..2000)
        .map(|_| {
            let a: f64 = r.gen_range(-1.0..1.0);
            let rad = 2.0 + r.gen_range(-0.01..0.01);
            (rad * a.cos(), rad * a.sin())
        })
        .collect();
    assert!(ring_ratio(&ring) < 0.05);
    let cov = DMatrix::identity(2, 2) * 0.01;
    let blob: Vec<(f64, f64)> = gaussian_samples(&cov, 5000, &mut r).iter().map(|d| (2.0 + d[0], d[1])).collect();
    assert!((ring_ratio(&blob) - 1.0).abs() < 0.1);
}

#[test]
fn gaussian_samples_handle_singular_covariance() {
    let mut r = rng(108);
    let mut cov = DMatrix::zeros(3, 3);
    cov[(1, 1)] = 4.0;
    let s = gaussian_samples(&cov, 4000, &mut r);
    assert!(s.iter().all(|v| v[0].abs() < 1e-15 && v[2].abs() < 1e-15));
    let var = s.iter().map(|v| v[1] * v[1]).sum::<f64>() / 4000.0;
    assert!((var / 4.0 - 1.0).abs() < 0.1);
}

#[test]
fn observability_loses_position_and_yaw() {
    let mut r = rng(109);
    let b = belief(&mut r, 2, ErrorFrame::Right);
    let imus: Vec<ImuSample> = (0..12).map(|_| ImuSample::new(vec3(&mut r, 1.0), vec3(&mut r, 5.0), 0.01).unwrap()).collect();
    let o = observability_matrix(&b, &imus, &standard_gravity()).unwrap();
    let sv = o.singular_values();
    let mut s: Vec<f64> = sv.iter().cloned().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let n = b.dim();
    assert!(s[n - 5] / s[n - 4] > 1e6, "{:?}", &s[n - 6..]);
    assert!(s[n - 4] / s[0] < 1e-12);
    assert!(matches!(observability_matrix(&b.switch_error_frame(), &imus, &standard_gravity()), Err(Error::WrongConvention)));
}

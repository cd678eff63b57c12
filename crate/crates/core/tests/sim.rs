mod common;

use common::*;
use inekf_core::dynamics::{integrate_world, NoiseParams};
use inekf_core::liegroup::{Mat3, Vec3};
use inekf_core::sim::*;
use inekf_core::state::{ErrorFrame, FilterBelief};
use nalgebra::DMatrix;

fn imu_readings(log: &SensorLog) -> Vec<(Stamp, Vec3, Vec3)> {
    log.records
        .iter()
        .filter_map(|r| match r.data {
            SensorData::Imu { gyro, accel } => Some((r.stamp, gyro, accel)),
            _ => None,
        })
        .collect()
}

#[test]
fn stamps_print_and_parse_to_the_nanosecond() {
    let s = Stamp::from_secs(1.25);
    assert_eq!(s, Stamp(1_250_000_000));
    assert_eq!(s.to_string(), "1.250000000");
    assert_eq!(Stamp(7).to_string(), "0.000000007");
    assert_eq!(Stamp::from_secs(0.001).0, 1_000_000);
}

#[test]
fn standing_still_reads_gravity_and_constant_joints() {
    let spec = TrajectorySpec { duration: 1.0, ..TrajectorySpec::standing().noiseless() };
    let log = generate(&spec).unwrap();
    let rot = log.truth[0].x.rot;
    let expected = -rot.transpose() * spec.gravity;
    let imu = imu_readings(&log);
    assert_eq!(imu.len(), 1001);
    for (_, gyro, accel) in imu {
        assert!(gyro.amax() < 1e-15);
        assert!((accel - expected).amax() < 1e-12);
    }
    let joints: Vec<&Vec<f64>> = log
        .records
        .iter()
        .filter_map(|r| if let SensorData::Encoders(a) = &r.data { Some(a) } else { None })
        .collect();
    assert_eq!(joints[0].len(), 6);
    for a in &joints {
        for (x, y) in a.iter().zip(joints[0].iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }
    assert!(log.records.iter().all(|r| !matches!(r.data, SensorData::Contact { flag: false, .. })));
    let last = log.truth.last().unwrap();
    assert!((last.x.cols[1] - log.truth[0].x.cols[1]).amax() < 1e-12);
}

#[test]
fn integrating_noiseless_imu_recovers_truth() {
    let spec = TrajectorySpec::accelerating_walk().noiseless();
    let log = generate(&spec).unwrap();
    assert!((log.truth.last().unwrap().stamp.secs() - 10.0).abs() < 1e-12);
    let samples = imu_samples(&log).unwrap();
    let mut x = log.truth[0].x.clone();
    let mut worst: f64 = 0.0;
    for (s, truth) in samples.iter().zip(&log.truth[1..]) {
        x = integrate_world(&x, &s.gyro, &s.accel, s.dt, &spec.gravity);
        worst = worst.max((x.cols[1] - truth.x.cols[1]).norm());
    }
    assert!(worst < 1e-5, "position drift {worst}");
    // the walk actually goes somewhere
    assert!(log.truth.last().unwrap().x.cols[1].x > 2.0);
}

#[test]
fn gyro_noise_has_the_configured_density() {
    let noise = NoiseParams { gyro: 0.002, ..NoiseParams::zero() };
    let spec = TrajectorySpec { duration: 100.0, encoder_rate: 10.0, noise, ..TrajectorySpec::standing() };
    let log = generate(&spec).unwrap();
    let readings = imu_readings(&log);
    assert!(readings.len() > 100_000);
    let n = (readings.len() * 3) as f64;
    let sum_sq: f64 = readings.iter().map(|(_, g, _)| g.norm_squared()).sum();
    let std = (sum_sq / n).sqrt();
    let expected = 0.002 * spec.imu_rate.sqrt();
    assert!((std / expected - 1.0).abs() < 0.05, "{std} vs {expected}");
}

#[test]
fn same_seed_same_log() {
    let spec = TrajectorySpec { duration: 1.0, ..TrajectorySpec::default() };
    let a = generate(&spec).unwrap();
    let b = generate(&spec).unwrap();
    assert_eq!(a, b);
    let c = generate(&TrajectorySpec { seed: 2, ..spec }).unwrap();
    assert_ne!(a.records, c.records);
    assert_eq!(a.truth.iter().map(|t| &t.x).collect::<Vec<_>>(), c.truth.iter().map(|t| &t.x).collect::<Vec<_>>());
}

#[test]
fn feet_stay_planted_while_in_contact() {
    let spec = TrajectorySpec { duration: 4.0, ..TrajectorySpec::steady_walk(0.4).noiseless() };
    let log = generate(&spec).unwrap();
    let mut flags = [false; 2];
    let mut planted: Vec<Option<Vec3>> = vec![None; 2];
    let mut swings = 0;
    for rec in &log.records {
        if let SensorData::Contact { id, flag } = rec.data {
            let leg = id as usize;
            let foot = log.truth_at(rec.stamp).unwrap().feet[leg];
            if flag && flags[leg] {
                let anchor = planted[leg].get_or_insert(foot);
                assert!((foot - *anchor).norm() < 1e-9, "leg {leg} moved at {}", rec.stamp);
                assert!(foot.z.abs() < 1e-12);
            } else {
                planted[leg] = if flag { Some(foot) } else { None };
                swings += usize::from(!flag && flags[leg]);
            }
            flags[leg] = flag;
        }
    }
    assert!(swings >= 8);
}

#[test]
fn slipping_feet_move() {
    let spec = TrajectorySpec { duration: 2.0, slip: 0.05, ..TrajectorySpec::steady_walk(0.3).noiseless() };
    let log = generate(&spec).unwrap();
    let first = log.truth[100].feet[0];
    let later = log.truth[300].feet[0];
    assert!((first - later).norm() > 1e-5);
}

#[test]
fn perfect_start_converges_immediately() {
    let spec = TrajectorySpec { duration: 2.0, ..TrajectorySpec::accelerating_walk().noiseless() };
    let log = generate(&spec).unwrap();
    let setup = FilterSetup { noise: NoiseParams::default(), ..FilterSetup::default() };
    for kind in FilterKind::ALL {
        let runs = monte_carlo(&log, 1, &InitSampler::exact(), kind, &setup, 3).unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].time_to_converge, Some(0.0), "{}", kind.name());
        assert!(runs[0].final_position_error < 1e-5);
    }
}

#[test]
fn monte_carlo_is_reproducible() {
    let spec = TrajectorySpec { duration: 1.5, ..TrajectorySpec::accelerating_walk() };
    let log = generate(&spec).unwrap();
    let setup = FilterSetup::default();
    let a = monte_carlo(&log, 3, &InitSampler::default(), FilterKind::InekfRight, &setup, 11).unwrap();
    let b = monte_carlo(&log, 3, &InitSampler::default(), FilterKind::InekfRight, &setup, 11).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.iter().map(|m| m.run).collect::<Vec<_>>(), vec![0, 1, 2]);
    // every filter kind sees the same initial pose for a given run
    let p = initial_pose(&log, &InitSampler::default(), 11, 1);
    assert_eq!(p, initial_pose(&log, &InitSampler::default(), 11, 1));
    assert_ne!(p, initial_pose(&log, &InitSampler::default(), 11, 2));
}

#[test]
fn sampler_respects_bounds() {
    let truth = Pose { rot: Mat3::identity(), vel: Vec3::new(0.3, 0.0, 0.0), pos: Vec3::z() };
    let mut r = rng(91);
    let s = InitSampler::default();
    for _ in 0..500 {
        let p = s.sample(&truth, &mut r);
        assert!((p.vel - truth.vel).amax() <= 1.0);
        assert_eq!(p.pos, truth.pos);
        let angle = nalgebra::Rotation3::from_matrix_unchecked(p.rot).angle();
        assert!(angle <= 3f64.sqrt() * 30f64.to_radians() + 1e-12);
    }
    assert_eq!(InitSampler::exact().sample(&truth, &mut r), truth);
}

#[test]
fn zero_covariance_samples_are_the_mean() {
    let mut r = rng(92);
    let mut b = belief(&mut r, 1, ErrorFrame::Right);
    b.cov = DMatrix::zeros(18, 18);
    for p in covariance_samples(&b, 20, &mut r) {
        assert!((p - b.pos()).amax() < 1e-15);
    }
}

#[test]
fn yaw_only_samples_lie_on_an_arc() {
    let mut r = rng(93);
    let mut b: FilterBelief = belief(&mut r, 0, ErrorFrame::Right);
    b.cov = DMatrix::zeros(15, 15);
    b.cov[(2, 2)] = 0.5;
    let pos = *b.pos();
    let radius = pos.xy().norm();
    let pts = covariance_samples(&b, 500, &mut r);
    for p in &pts {
        assert!((p.xy().norm() - radius).abs() < 1e-12);
        assert!((p.z - pos.z).abs() < 1e-12);
    }
    let spread = pts.iter().map(|p| p.y.atan2(p.x)).fold((f64::MAX, f64::MIN), |(lo, hi), a| (lo.min(a), hi.max(a)));
    assert!(spread.1 - spread.0 > 0.5);
}

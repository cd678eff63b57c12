use inekf_cli::config::Config;
use inekf_cli::logio::{parse_stamp, read_log, read_truth, write_log, write_truth};
use inekf_core::liegroup::Vec3;
use inekf_core::sim::{generate, SensorData, SensorRecord, Stamp, TrajectorySpec};
use proptest::prelude::*;

fn short_walk() -> TrajectorySpec {
    TrajectorySpec { duration: 0.3, ..TrajectorySpec::accelerating_walk() }
}

#[test]
fn simulated_log_round_trips() {
    let log = generate(&short_walk()).unwrap();
    assert!(!log.records.is_empty());
    let back = read_log(&write_log(&log.records)).unwrap();
    assert_eq!(back, log.records);
    let truth = read_truth(&write_truth(&log.truth)).unwrap();
    assert_eq!(truth, log.truth);
}

#[test]
fn every_record_type_round_trips() {
    let v = Vec3::new(0.1, -2.5e-7, 3.0);
    let records = vec![
        SensorRecord { stamp: Stamp(0), data: SensorData::Imu { gyro: v, accel: -v } },
        SensorRecord { stamp: Stamp(1), data: SensorData::Encoders(vec![0.25, -1.0, 1e-12]) },
        SensorRecord { stamp: Stamp(1), data: SensorData::Contact { id: 3, flag: true } },
        SensorRecord { stamp: Stamp(2), data: SensorData::Contact { id: 0, flag: false } },
        SensorRecord { stamp: Stamp(1_000_000_002), data: SensorData::Landmark { id: 7, pos: v } },
        SensorRecord { stamp: Stamp(3_000_000_000), data: SensorData::Gps(v) },
        SensorRecord { stamp: Stamp(3_000_000_001), data: SensorData::Mag(v) },
    ];
    let text = write_log(&records);
    assert!(text.starts_with("#inekf-log v1\n"));
    assert!(text.contains("\n3.000000000,GPS,"));
    assert_eq!(read_log(&text).unwrap(), records);
}

#[test]
fn stamps_parse_exactly() {
    assert_eq!(parse_stamp("1.5").unwrap(), Stamp(1_500_000_000));
    assert_eq!(parse_stamp("0.000000001").unwrap(), Stamp(1));
    assert_eq!(parse_stamp("12").unwrap(), Stamp(12_000_000_000));
    assert!(parse_stamp("0.0000000001").is_err());
    assert!(parse_stamp("1e3").is_err());
    assert!(parse_stamp("").is_err());
}

#[test]
fn malformed_log_reports_line() {
    let text = "#inekf-log v1\n0.000000000,IMU,0,0,0,0,0,9.81\n0.001000000,IMU,0,0,zero,0,0,9.81\n";
    let e = read_log(text).unwrap_err();
    assert_eq!(e.line, 3);
    assert!(e.to_string().contains("line 3"), "{e}");

    let e = read_log("0.0,IMU,0,0,0,0,0,0\n").unwrap_err();
    assert_eq!(e.line, 1);

    let e = read_log("#inekf-log v1\n0.0,WHEEL,1\n").unwrap_err();
    assert_eq!(e.line, 2);
    assert!(e.message.contains("WHEEL"));
}

#[test]
fn decreasing_timestamps_rejected() {
    let text = "#inekf-log v1\n0.002,CONTACT,0,1\n0.002,CONTACT,1,1\n0.001,CONTACT,0,0\n";
    let e = read_log(text).unwrap_err();
    assert_eq!(e.line, 4);
    assert!(e.message.contains("goes back"));
}

#[test]
fn default_config_noise_and_init() {
    let c = Config::default();
    assert_eq!(c.noise.gyro, 0.002);
    assert_eq!(c.noise.accel, 0.04);
    assert_eq!(c.noise.contact, 0.05);
    assert!((c.noise.encoder - 1f64.to_radians()).abs() < 1e-15);
    assert!((c.init.orientation - 30f64.to_radians()).abs() < 1e-15);
    assert_eq!(c.init.velocity, 1.0);
    assert_eq!(c.init.position, 0.1);
    assert_eq!(c.init.gyro_bias, 0.005);
    assert_eq!(c.init.accel_bias, 0.05);
    assert_eq!(Config::parse("").unwrap(), c);
}

#[test]
fn config_keys_override_defaults() {
    let c = Config::parse("# comment\nnoise.gyro = 0.01  # trailing\n\ngravity = 0, 0, -9.8\nsim.noise = false\n").unwrap();
    assert_eq!(c.noise.gyro, 0.01);
    assert_eq!(c.gravity, Vec3::new(0.0, 0.0, -9.8));
    assert!(!c.sim_noise);
}

#[test]
fn malformed_config_reports_line() {
    let e = Config::parse("noise.gyro = 0.01\nnoise.accel = fast\n").unwrap_err();
    assert_eq!(e.line, 2);
    assert!(e.to_string().starts_with("config line 2:"), "{e}");

    let e = Config::parse("\n\nsim.duration 3\n").unwrap_err();
    assert_eq!(e.line, 3);

    let e = Config::parse("noise.gyro = 1\nnoise.warp = 2\n").unwrap_err();
    assert_eq!(e.line, 2);
    assert!(e.message.contains("noise.warp"));

    let e = Config::parse("gravity = 0, -9.81\n").unwrap_err();
    assert_eq!(e.line, 1);
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e3..1e3f64, -1e-6..1e-6f64]
}

fn record() -> impl Strategy<Value = SensorData> {
    let v = || (finite(), finite(), finite()).prop_map(|(x, y, z)| Vec3::new(x, y, z));
    prop_oneof![
        (v(), v()).prop_map(|(gyro, accel)| SensorData::Imu { gyro, accel }),
        prop::collection::vec(finite(), 0..7).prop_map(SensorData::Encoders),
        (0u32..8, any::<bool>()).prop_map(|(id, flag)| SensorData::Contact { id, flag }),
        (0u32..100, v()).prop_map(|(id, pos)| SensorData::Landmark { id, pos }),
        v().prop_map(SensorData::Gps),
        v().prop_map(SensorData::Mag),
    ]
}

proptest! {
    #[test]
    fn arbitrary_logs_round_trip(steps in prop::collection::vec((0i64..5_000_000, record()), 0..40)) {
        let mut t = 0;
        let records: Vec<SensorRecord> = steps
            .into_iter()
            .map(|(dt, data)| {
                t += dt;
                SensorRecord { stamp: Stamp(t), data }
            })
            .collect();
        prop_assert_eq!(read_log(&write_log(&records)).unwrap(), records);
    }
}

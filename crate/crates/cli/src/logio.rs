//! Text formats for sensor logs and their ground-truth companions.

use std::fmt::{self, Write as _};

use inekf_core::liegroup::{Mat3, Vec3, SEK3};
use inekf_core::sim::{SensorData, SensorRecord, Stamp, TruthState};
use inekf_core::state::BiasVector;

pub const LOG_HEADER: &str = "#inekf-log v1";
pub const TRUTH_HEADER: &str = "#inekf-truth v1";

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub what: &'static str,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} line {}: {}", self.what, self.line, self.message)
    }
}

impl std::error::Error for ParseError {}

/// Parses a decimal seconds value exactly into nanoseconds.
pub fn parse_stamp(s: &str) -> Result<Stamp, String> {
    let bad = || format!("bad timestamp '{s}'");
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
    let digits = |d: &str| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit());
    if !digits(whole) || !(frac.is_empty() || digits(frac)) || frac.len() > 9 {
        return Err(bad());
    }
    let secs: i64 = whole.parse().map_err(|_| bad())?;
    let nanos: i64 = if frac.is_empty() { 0 } else { format!("{frac:0<9}").parse().map_err(|_| bad())? };
    let ns = secs.checked_mul(1_000_000_000).and_then(|v| v.checked_add(nanos)).ok_or_else(bad)?;
    Ok(Stamp(if neg { -ns } else { ns }))
}

fn push_values(out: &mut String, values: impl IntoIterator<Item = f64>) {
    for v in values {
        // shortest representation that reads back to the same bits
        write!(out, ",{v}").unwrap();
    }
}

pub fn write_log(records: &[SensorRecord]) -> String {
    let mut out = String::with_capacity(64 * records.len());
    out.push_str(LOG_HEADER);
    out.push('\n');
    for r in records {
        write!(out, "{}", r.stamp).unwrap();
        match &r.data {
            SensorData::Imu { gyro, accel } => {
                out.push_str(",IMU");
                push_values(&mut out, gyro.iter().chain(accel.iter()).copied());
            }
            SensorData::Encoders(a) => {
                out.push_str(",ENC");
                push_values(&mut out, a.iter().copied());
            }
            SensorData::Contact { id, flag } => write!(out, ",CONTACT,{id},{}", u8::from(*flag)).unwrap(),
            SensorData::Landmark { id, pos } => {
                write!(out, ",LANDMARK,{id}").unwrap();
                push_values(&mut out, pos.iter().copied());
            }
            SensorData::Gps(p) => {
                out.push_str(",GPS");
                push_values(&mut out, p.iter().copied());
            }
            SensorData::Mag(m) => {
                out.push_str(",MAG");
                push_values(&mut out, m.iter().copied());
            }
        }
        out.push('\n');
    }
    out
}

fn numbers(fields: &[&str]) -> Result<Vec<f64>, String> {
    fields
        .iter()
        .map(|f| {
            let v: f64 = f.trim().parse().map_err(|_| format!("bad number '{f}'"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("non-finite value '{f}'"))
            }
        })
        .collect()
}

fn vec3(fields: &[&str]) -> Result<Vec3, String> {
    let v = numbers(fields)?;
    if v.len() != 3 {
        return Err(format!("expected 3 values, found {}", v.len()));
    }
    Ok(Vec3::new(v[0], v[1], v[2]))
}

fn id(s: &str) -> Result<u32, String> {
    s.trim().parse().map_err(|_| format!("bad id '{s}'"))
}

fn parse_record(line: &str) -> Result<SensorRecord, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() < 2 {
        return Err("expected at least a timestamp and a record type".into());
    }
    let stamp = parse_stamp(fields[0].trim())?;
    let rest = &fields[2..];
    let data = match fields[1].trim() {
        "IMU" => {
            if rest.len() != 6 {
                return Err(format!("IMU needs 6 values, found {}", rest.len()));
            }
            SensorData::Imu { gyro: vec3(&rest[..3])?, accel: vec3(&rest[3..])? }
        }
        "ENC" => SensorData::Encoders(numbers(rest)?),
        "CONTACT" => {
            if rest.len() != 2 {
                return Err(format!("CONTACT needs an id and a flag, found {} fields", rest.len()));
            }
            let flag = match rest[1].trim() {
                "1" => true,
                "0" => false,
                other => return Err(format!("contact flag must be 0 or 1, found '{other}'")),
            };
            SensorData::Contact { id: id(rest[0])?, flag }
        }
        "LANDMARK" => {
            if rest.len() != 4 {
                return Err(format!("LANDMARK needs an id and 3 values, found {} fields", rest.len()));
            }
            SensorData::Landmark { id: id(rest[0])?, pos: vec3(&rest[1..])? }
        }
        "GPS" => SensorData::Gps(vec3(rest)?),
        "MAG" => SensorData::Mag(vec3(rest)?),
        other => return Err(format!("unknown record type '{other}'")),
    };
    Ok(SensorRecord { stamp, data })
}

/// Reads a sensor log; timestamps must not decrease.
pub fn read_log(text: &str) -> Result<Vec<SensorRecord>, ParseError> {
    let err = |line: usize, message: String| ParseError { what: "log", line, message };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == LOG_HEADER => {}
        _ => return Err(err(1, format!("missing '{LOG_HEADER}' header"))),
    }
    let mut records: Vec<SensorRecord> = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rec = parse_record(line).map_err(|m| err(i + 1, m))?;
        if let Some(prev) = records.last() {
            if rec.stamp < prev.stamp {
                return Err(err(i + 1, format!("timestamp {} goes back from {}", rec.stamp, prev.stamp)));
            }
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn write_truth(truth: &[TruthState]) -> String {
    let mut out = String::with_capacity(256 * truth.len());
    out.push_str(TRUTH_HEADER);
    out.push('\n');
    let feet = truth.first().map_or(0, |t| t.feet.len());
    out.push_str("t,r11,r12,r13,r21,r22,r23,r31,r32,r33,vx,vy,vz,px,py,pz,bgx,bgy,bgz,bax,bay,baz");
    for f in 0..feet {
        write!(out, ",foot{f}x,foot{f}y,foot{f}z").unwrap();
    }
    out.push('\n');
    for t in truth {
        write!(out, "{}", t.stamp).unwrap();
        let r = &t.x.rot;
        push_values(&mut out, (0..3).flat_map(|i| (0..3).map(move |j| r[(i, j)])));
        for c in t.x.cols.iter().chain([&t.bias.gyro, &t.bias.accel]).chain(t.feet.iter()) {
            push_values(&mut out, c.iter().copied());
        }
        out.push('\n');
    }
    out
}

pub fn read_truth(text: &str) -> Result<Vec<TruthState>, ParseError> {
    let err = |line: usize, message: String| ParseError { what: "truth", line, message };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRUTH_HEADER => {}
        _ => return Err(err(1, format!("missing '{TRUTH_HEADER}' header"))),
    }
    lines.next();
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let stamp = parse_stamp(fields[0].trim()).map_err(|m| err(i + 1, m))?;
        let v = numbers(&fields[1..]).map_err(|m| err(i + 1, m))?;
        if v.len() < 21 || (v.len() - 21) % 3 != 0 {
            return Err(err(i + 1, format!("expected 21 values plus 3 per foot, found {}", v.len())));
        }
        let at = |k: usize| Vec3::new(v[k], v[k + 1], v[k + 2]);
        let rot = Mat3::from_row_slice(&v[..9]);
        out.push(TruthState {
            stamp,
            x: SEK3 { rot, cols: vec![at(9), at(12)] },
            bias: BiasVector { gyro: at(15), accel: at(18) },
            feet: (21..v.len()).step_by(3).map(at).collect(),
        });
    }
    Ok(out)
}

/// Path of the truth file that accompanies a log.
pub fn truth_path(log: &std::path::Path) -> std::path::PathBuf {
    let mut s = log.as_os_str().to_owned();
    s.push(".truth.csv");
    s.into()
}

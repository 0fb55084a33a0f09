//! CSV formats for sensor streams, truth, estimates, network inputs and
//! correction records.
//!
//! Floats are written with 17 significant digits so that every value reads
//! back bit-identical. Line numbers in format errors are 1-based and count
//! the header.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::blends::{NetInputRow, NET_INPUT_LEN};
use crate::error::{NavError, Result};
use crate::linalg::{Mat15, Vec15};
use crate::types::{CorrectionRecord, Cov15, Geodetic, GnssFix, ImuSample, NominalState};

pub const IMU_HEADER: [&str; 7] = ["t", "fx", "fy", "fz", "wx", "wy", "wz"];
pub const GNSS_HEADER: [&str; 7] = ["t", "lat", "lon", "alt", "rn", "re", "rd"];
pub const TRUTH_HEADER: [&str; 11] = ["t", "lat", "lon", "alt", "vn", "ve", "vd", "q0", "q1", "q2", "q3"];

/// Values per correction-record row: `t`, `D_f`, `D_b` (column-major), `c`.
pub const RECORD_LEN: usize = 1 + 225 + 225 + 15;

/// A navigation state with its time stamp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StampedState {
    pub t: f64,
    pub state: NominalState,
}

/// One row of an estimate file: the state and its covariance diagonal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateRow {
    pub t: f64,
    pub state: NominalState,
    pub cov_diag: Vec15,
}

impl EstimateRow {
    pub fn new(t: f64, state: NominalState, p: &Cov15) -> Self {
        EstimateRow { t, state, cov_diag: p.diagonal() }
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_error(e: csv::Error) -> NavError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => NavError::Io(io),
        other => NavError::format(line, format!("{other:?}")),
    }
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_rows<W: Write>(out: &mut W, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn owned(h: &[&str]) -> Vec<String> {
    h.iter().map(|s| s.to_string()).collect()
}

/// Rows of a headered numeric CSV: `(line, values)`. The header must match
/// exactly and every row must have the header's width.
fn read_table(path: &Path, header: &[String]) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error)?;
    let mut rows = Vec::new();
    let mut seen_header = false;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if !seen_header {
            let got: Vec<&str> = rec.iter().collect();
            if got != header.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(NavError::format(line, format!("expected header '{}', got '{}'", header.join(","), got.join(","))));
            }
            seen_header = true;
            continue;
        }
        if rec.len() != header.len() {
            return Err(NavError::format(line, format!("expected {} columns, got {}", header.len(), rec.len())));
        }
        let values = parse_fields(&rec, line)?;
        rows.push((line, values));
    }
    if !seen_header {
        return Err(NavError::format(1, "missing header"));
    }
    Ok(rows)
}

fn parse_fields(rec: &csv::StringRecord, line: usize) -> Result<Vec<f64>> {
    rec.iter()
        .enumerate()
        .map(|(i, f)| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| NavError::format(line, format!("column {}: '{f}' is not a finite number", i + 1)))
        })
        .collect()
}

fn check_increasing(rows: &[(usize, Vec<f64>)]) -> Result<()> {
    for w in rows.windows(2) {
        if w[1].1[0] <= w[0].1[0] {
            return Err(NavError::format(w[1].0, format!("time {} does not increase", w[1].1[0])));
        }
    }
    Ok(())
}

pub fn write_imu_csv(path: &Path, imu: &[ImuSample]) -> Result<()> {
    let rows = imu.iter().map(|s| vec![s.t, s.f_b.x, s.f_b.y, s.f_b.z, s.w_b.x, s.w_b.y, s.w_b.z]);
    write_rows(&mut writer(path)?, &owned(&IMU_HEADER), rows)
}

pub fn read_imu_csv(path: &Path) -> Result<Vec<ImuSample>> {
    let rows = read_table(path, &owned(&IMU_HEADER))?;
    check_increasing(&rows)?;
    Ok(rows
        .into_iter()
        .map(|(_, v)| ImuSample { t: v[0], f_b: Vector3::new(v[1], v[2], v[3]), w_b: Vector3::new(v[4], v[5], v[6]) })
        .collect())
}

pub fn write_gnss_csv(path: &Path, gnss: &[GnssFix]) -> Result<()> {
    let rows = gnss
        .iter()
        .map(|f| vec![f.t, f.pos.lat, f.pos.lon, f.pos.alt, f.r_diag.x, f.r_diag.y, f.r_diag.z]);
    write_rows(&mut writer(path)?, &owned(&GNSS_HEADER), rows)
}

pub fn read_gnss_csv(path: &Path) -> Result<Vec<GnssFix>> {
    let rows = read_table(path, &owned(&GNSS_HEADER))?;
    check_increasing(&rows)?;
    rows.into_iter()
        .map(|(line, v)| {
            let fix = GnssFix { t: v[0], pos: Geodetic::new(v[1], v[2], v[3]), r_diag: Vector3::new(v[4], v[5], v[6]) };
            fix.validate().map_err(|e| NavError::format(line, e.to_string()))?;
            Ok(fix)
        })
        .collect()
}

fn state_values(t: f64, x: &NominalState) -> Vec<f64> {
    let q = UnitQuaternion::from_rotation_matrix(&x.att);
    vec![t, x.pos.lat, x.pos.lon, x.pos.alt, x.vel_ned.x, x.vel_ned.y, x.vel_ned.z, q.w, q.i, q.j, q.k]
}

fn state_from(v: &[f64], line: usize) -> Result<NominalState> {
    let q = Quaternion::new(v[7], v[8], v[9], v[10]);
    if (q.norm() - 1.0).abs() > 1e-6 {
        return Err(NavError::format(line, format!("quaternion norm {} is not 1", q.norm())));
    }
    let att = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
    Ok(NominalState::new(Geodetic::new(v[1], v[2], v[3]), Vector3::new(v[4], v[5], v[6]), att))
}

pub fn write_truth_csv(path: &Path, truth: &[StampedState]) -> Result<()> {
    let rows = truth.iter().map(|s| state_values(s.t, &s.state));
    write_rows(&mut writer(path)?, &owned(&TRUTH_HEADER), rows)
}

pub fn read_truth_csv(path: &Path) -> Result<Vec<StampedState>> {
    let rows = read_table(path, &owned(&TRUTH_HEADER))?;
    check_increasing(&rows)?;
    rows.into_iter().map(|(line, v)| Ok(StampedState { t: v[0], state: state_from(&v, line)? })).collect()
}

fn estimate_header() -> Vec<String> {
    let mut h = owned(&TRUTH_HEADER);
    h.extend((0..15).map(|i| format!("cov{i}")));
    h
}

/// Truth columns plus the 15 covariance-diagonal entries `cov0..cov14`.
pub fn write_estimates_csv(path: &Path, rows: &[EstimateRow]) -> Result<()> {
    let rows = rows.iter().map(|r| {
        let mut v = state_values(r.t, &r.state);
        v.extend(r.cov_diag.iter());
        v
    });
    write_rows(&mut writer(path)?, &estimate_header(), rows)
}

pub fn read_estimates_csv(path: &Path) -> Result<Vec<EstimateRow>> {
    let rows = read_table(path, &estimate_header())?;
    check_increasing(&rows)?;
    rows.into_iter()
        .map(|(line, v)| {
            Ok(EstimateRow { t: v[0], state: state_from(&v, line)?, cov_diag: Vec15::from_column_slice(&v[11..26]) })
        })
        .collect()
}

fn record_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..225).map(|i| format!("df_{i}")));
    h.extend((0..225).map(|i| format!("db_{i}")));
    h.extend((0..15).map(|i| format!("c_{i}")));
    h
}

/// One row per epoch: `t`, `D_f` (225, column-major), `D_b` (225), `c` (15).
pub fn write_correction_records(path: &Path, records: &[CorrectionRecord]) -> Result<()> {
    let rows = records.iter().map(|r| {
        let mut v = Vec::with_capacity(RECORD_LEN);
        v.push(r.t);
        v.extend_from_slice(r.d_f.as_slice());
        v.extend_from_slice(r.d_b.as_slice());
        v.extend_from_slice(r.c.as_slice());
        v
    });
    write_rows(&mut writer(path)?, &record_header(), rows)
}

/// Reads a correction-record file. The header row is optional and is
/// recognized by a non-numeric first field.
pub fn read_correction_records(path: &Path) -> Result<Vec<CorrectionRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        if i == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if rec.len() != RECORD_LEN {
            return Err(NavError::format(line, format!("row has {} values, expects {RECORD_LEN}", rec.len())));
        }
        let v = parse_fields(&rec, line)?;
        out.push(CorrectionRecord {
            t: v[0],
            d_f: Mat15::from_column_slice(&v[1..226]),
            d_b: Mat15::from_column_slice(&v[226..451]),
            c: Vec15::from_column_slice(&v[451..466]),
        });
    }
    Ok(out)
}

/// Network inputs for the trainer: `t` followed by the 480-value row.
pub fn write_net_inputs(path: &Path, times: &[f64], rows: &[NetInputRow]) -> Result<()> {
    if times.len() != rows.len() {
        return Err(NavError::Argument(format!("{} times for {} input rows", times.len(), rows.len())));
    }
    let mut header = vec!["t".to_string()];
    header.extend((0..NET_INPUT_LEN).map(|i| format!("u{i}")));
    let rows = times.iter().zip(rows).map(|(&t, r)| {
        let mut v = Vec::with_capacity(NET_INPUT_LEN + 1);
        v.push(t);
        v.extend_from_slice(r.values());
        v
    });
    write_rows(&mut writer(path)?, &header, rows)
}

/// Writes a small headered CSV of arbitrary float columns.
pub fn write_columns(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    write_rows(&mut writer(path)?, &owned(header), rows)
}

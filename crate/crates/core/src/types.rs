//! Domain types shared by every stage of the pipeline.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::linalg::{self, Mat15, Vec15};

/// Slot offsets inside the 15-element error state.
pub mod slot {
    pub const POS: usize = 0;
    pub const VEL: usize = 3;
    pub const ATT: usize = 6;
    pub const ACC_BIAS: usize = 9;
    pub const GYRO_BIAS: usize = 12;
}

/// Geodetic position: latitude and longitude in radians, altitude in metres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geodetic {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

impl Geodetic {
    pub fn new(lat: f64, lon: f64, alt: f64) -> Self {
        Geodetic { lat, lon, alt }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.lat, self.lon, self.alt)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Geodetic::new(v.x, v.y, v.z)
    }
}

/// One IMU sample: specific force (m/s²) and angular rate (rad/s), body frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub f_b: Vector3<f64>,
    pub w_b: Vector3<f64>,
}

impl ImuSample {
    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.f_b.iter().chain(self.w_b.iter()).all(|v| v.is_finite())
    }
}

/// A loosely coupled GNSS position fix with per-axis NED variances (m²).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GnssFix {
    pub t: f64,
    pub pos: Geodetic,
    pub r_diag: Vector3<f64>,
}

impl GnssFix {
    pub fn validate(&self) -> Result<()> {
        if self.pos.lat.abs() > PI / 2.0 {
            return Err(NavError::Argument(format!("fix latitude {} out of range", self.pos.lat)));
        }
        if self.r_diag.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(NavError::Argument(format!(
                "fix at t={} has non-positive variance {:?}",
                self.t,
                self.r_diag.as_slice()
            )));
        }
        Ok(())
    }
}

/// Full navigation state: the nominal trajectory the error state is measured against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NominalState {
    pub pos: Geodetic,
    pub vel_ned: Vector3<f64>,
    /// Body-to-NED rotation.
    pub att: Rotation3<f64>,
    pub b_a: Vector3<f64>,
    pub b_g: Vector3<f64>,
}

impl NominalState {
    pub fn new(pos: Geodetic, vel_ned: Vector3<f64>, att: Rotation3<f64>) -> Self {
        NominalState {
            pos,
            vel_ned,
            att,
            b_a: Vector3::zeros(),
            b_g: Vector3::zeros(),
        }
    }

    /// Orthonormality and determinant check on the attitude, within 1e-9.
    pub fn attitude_is_valid(&self) -> bool {
        let m = self.att.matrix();
        (m * m.transpose() - Matrix3::identity()).amax() < 1e-9 && (m.determinant() - 1.0).abs() < 1e-9
    }

    /// Correct the nominal by an error state under `x = x_nom − δx`.
    ///
    /// Position, velocity and biases are subtracted; attitude is rotated by
    /// `exp(−[δε×])` in the navigation frame.
    pub fn corrected(&self, dx: &ErrorState15) -> NominalState {
        let dp = dx.dp();
        let att = Rotation3::from_matrix_unchecked(linalg::exp_so3(&(-dx.deps())) * self.att.matrix());
        NominalState {
            pos: Geodetic::new(self.pos.lat - dp.x, self.pos.lon - dp.y, self.pos.alt - dp.z),
            vel_ned: self.vel_ned - dx.dv(),
            att: att.renormalize_owned(),
            b_a: self.b_a - dx.dba(),
            b_g: self.b_g - dx.dbg(),
        }
    }

    /// Error state `δx` such that `other ≈ self.corrected(δx)`, i.e. the
    /// first-order difference `self ⊟ other`.
    pub fn error_to(&self, other: &NominalState) -> ErrorState15 {
        let dp = self.pos.as_vector() - other.pos.as_vector();
        let deps = linalg::log_so3(&(self.att.matrix() * other.att.matrix().transpose()));
        ErrorState15::from_parts(
            dp,
            self.vel_ned - other.vel_ned,
            deps,
            self.b_a - other.b_a,
            self.b_g - other.b_g,
        )
    }

    /// Roll, pitch, yaw of the body-to-NED rotation (ZYX convention).
    pub fn euler(&self) -> Vector3<f64> {
        let (r, p, y) = self.att.euler_angles();
        Vector3::new(r, p, y)
    }
}

trait RenormalizeOwned {
    fn renormalize_owned(self) -> Self;
}

impl RenormalizeOwned for Rotation3<f64> {
    fn renormalize_owned(mut self) -> Self {
        self.renormalize();
        self
    }
}

/// Error state ordered as position (rad, rad, m), velocity (m/s),
/// misalignment (rad), accelerometer bias (m/s²), gyro bias (rad/s).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorState15(pub Vec15);

impl ErrorState15 {
    pub fn zeros() -> Self {
        ErrorState15(Vec15::zeros())
    }

    pub fn from_parts(
        dp: Vector3<f64>,
        dv: Vector3<f64>,
        deps: Vector3<f64>,
        dba: Vector3<f64>,
        dbg: Vector3<f64>,
    ) -> Self {
        let mut v = Vec15::zeros();
        v.fixed_rows_mut::<3>(slot::POS).copy_from(&dp);
        v.fixed_rows_mut::<3>(slot::VEL).copy_from(&dv);
        v.fixed_rows_mut::<3>(slot::ATT).copy_from(&deps);
        v.fixed_rows_mut::<3>(slot::ACC_BIAS).copy_from(&dba);
        v.fixed_rows_mut::<3>(slot::GYRO_BIAS).copy_from(&dbg);
        ErrorState15(v)
    }

    fn block(&self, at: usize) -> Vector3<f64> {
        self.0.fixed_rows::<3>(at).into_owned()
    }

    pub fn dp(&self) -> Vector3<f64> {
        self.block(slot::POS)
    }
    pub fn dv(&self) -> Vector3<f64> {
        self.block(slot::VEL)
    }
    pub fn deps(&self) -> Vector3<f64> {
        self.block(slot::ATT)
    }
    pub fn dba(&self) -> Vector3<f64> {
        self.block(slot::ACC_BIAS)
    }
    pub fn dbg(&self) -> Vector3<f64> {
        self.block(slot::GYRO_BIAS)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn vector(&self) -> &Vec15 {
        &self.0
    }
}

/// Symmetric positive-definite 15×15 covariance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cov15(Mat15);

impl Cov15 {
    /// Symmetrizes and conditions `m`; fails on non-finite input.
    pub fn new(m: Mat15) -> Result<Self> {
        Ok(Cov15(linalg::symmetrize_and_condition(&m)?))
    }

    pub fn from_diagonal(d: &Vec15) -> Result<Self> {
        if d.iter().any(|v| !(*v > 0.0)) {
            return Err(NavError::Argument("covariance diagonal must be positive".into()));
        }
        Cov15::new(Mat15::from_diagonal(d))
    }

    pub fn matrix(&self) -> &Mat15 {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn diagonal(&self) -> Vec15 {
        self.0.diagonal()
    }

    pub fn information(&self) -> Result<Mat15> {
        linalg::spd_inverse(&self.0)
    }
}

/// Backward information matrix and information vector `s = 𝓘·δx_b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BackwardInfo {
    pub info: Mat15,
    pub s: Vec15,
}

impl BackwardInfo {
    pub fn zero() -> Self {
        BackwardInfo {
            info: Mat15::zeros(),
            s: Vec15::zeros(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.info.iter().all(|v| *v == 0.0) && self.s.iter().all(|v| *v == 0.0)
    }
}

/// Learned per-epoch quantities: covariance modification matrices and an
/// additive error-state correction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrectionRecord {
    pub t: f64,
    pub d_f: Mat15,
    pub d_b: Mat15,
    pub c: Vec15,
}

impl CorrectionRecord {
    /// The record that leaves the classic two-filter smoother unchanged.
    pub fn identity(t: f64) -> Self {
        CorrectionRecord {
            t,
            d_f: Mat15::identity(),
            d_b: Mat15::identity(),
            c: Vec15::zeros(),
        }
    }

    /// Checks full rank of both modification matrices and `|c_i| ≤ bound_i`.
    pub fn validate(&self, bound: &Vec15) -> Result<()> {
        for (name, d) in [("D_f", &self.d_f), ("D_b", &self.d_b)] {
            if !d.iter().all(|v| v.is_finite()) || d.determinant().abs() <= 1e-30 {
                return Err(NavError::Argument(format!("{name} at t={} is rank deficient", self.t)));
            }
        }
        for i in 0..linalg::N {
            if !self.c[i].is_finite() || self.c[i].abs() > bound[i] {
                return Err(NavError::Argument(format!(
                    "correction slot {i} at t={} is {} but bound is {}",
                    self.t, self.c[i], bound[i]
                )));
            }
        }
        Ok(())
    }
}

/// Per-slot correction bounds and the curriculum that contracts them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSchedule {
    pub m_wide: [f64; 15],
    pub m_base: [f64; 15],
    /// Warm-up length in training epochs.
    pub e_w: u32,
    pub p: f64,
}

fn per_slot(pos_h: f64, pos_v: f64, vel: f64, att: f64, ba: f64, bg: f64) -> [f64; 15] {
    let mut m = [0.0; 15];
    m[0] = pos_h;
    m[1] = pos_h;
    m[2] = pos_v;
    m[3..6].fill(vel);
    m[6..9].fill(att);
    m[9..12].fill(ba);
    m[12..15].fill(bg);
    m
}

impl BoundSchedule {
    /// Bounds used for the wheeled mobile-robot platform.
    pub fn mobile_robot() -> Self {
        BoundSchedule {
            m_wide: per_slot(3e-7, 50.0, 2.0, PI, 0.5, 0.05),
            m_base: per_slot(2e-7, 1.0, 0.5, PI / 180.0, 0.2, 0.002),
            e_w: 1000,
            p: 2.0,
        }
    }

    /// Bounds used for the quadrotor platform.
    pub fn quadrotor() -> Self {
        BoundSchedule {
            m_wide: per_slot(3e-7, 50.0, 15.0, PI, 0.5, 0.05),
            m_base: per_slot(2e-7, 1.0, 5.0, PI / 180.0, 0.1, 0.01),
            e_w: 1000,
            p: 2.0,
        }
    }

    /// A flat schedule whose bound is `m` at every epoch.
    pub fn constant(m: [f64; 15]) -> Self {
        BoundSchedule {
            m_wide: m,
            m_base: m,
            e_w: 1,
            p: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..15 {
            let (b, w) = (self.m_base[i], self.m_wide[i]);
            if !(b > 0.0 && b <= w && w.is_finite()) {
                return Err(NavError::Argument(format!(
                    "bound slot {i}: need 0 < m_base ({b}) <= m_wide ({w})"
                )));
            }
        }
        if self.e_w < 1 {
            return Err(NavError::Argument("warm-up must be at least one epoch".into()));
        }
        if !(self.p > 0.0) {
            return Err(NavError::Argument("ramp power must be positive".into()));
        }
        Ok(())
    }

    /// Ramp `ρ(e) = clamp(e/e_w, 0, 1)^p`.
    pub fn rho(&self, epoch: f64) -> f64 {
        (epoch / self.e_w as f64).clamp(0.0, 1.0).powf(self.p)
    }

    /// Bound vector `m = (1−ρ)·m_wide + ρ·m_base` at a training epoch.
    pub fn bound(&self, epoch: f64) -> Vec15 {
        let rho = self.rho(epoch);
        Vec15::from_fn(|i, _| (1.0 - rho) * self.m_wide[i] + rho * self.m_base[i])
    }
}

impl Default for BoundSchedule {
    fn default() -> Self {
        BoundSchedule::mobile_robot()
    }
}

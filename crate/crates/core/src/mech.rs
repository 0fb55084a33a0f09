//! Strapdown mechanization in the local NED frame and the linearized
//! error-state model around it.

use nalgebra::{Matrix3, Rotation3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::geo;
use crate::linalg::{self, Mat15};
use crate::types::{slot, Geodetic, ImuSample, NominalState};

pub type Mat15x12 = SMatrix<f64, 15, 12>;

/// Continuous-time white-noise densities driving the error model.
///
/// `sigma_a` and `sigma_g` are sensor noise densities (m/s²/√Hz, rad/s/√Hz);
/// the bias terms are random-walk intensities (m/s²·√s⁻¹, rad/s·√s⁻¹).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuNoiseSpec {
    pub sigma_a: [f64; 3],
    pub sigma_g: [f64; 3],
    pub sigma_ab: f64,
    pub sigma_gb: f64,
}

impl ImuNoiseSpec {
    /// Densities equivalent to white per-sample standard deviations at `rate_hz`.
    pub fn from_per_sample(accel_std: f64, gyro_std: f64, rate_hz: f64, sigma_ab: f64, sigma_gb: f64) -> Self {
        let k = 1.0 / rate_hz.sqrt();
        ImuNoiseSpec {
            sigma_a: [accel_std * k; 3],
            sigma_g: [gyro_std * k; 3],
            sigma_ab,
            sigma_gb,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .sigma_a
            .iter()
            .chain(self.sigma_g.iter())
            .chain(std::iter::once(&self.sigma_ab))
            .chain(std::iter::once(&self.sigma_gb));
        for v in all {
            if !(*v > 0.0 && v.is_finite()) {
                return Err(NavError::Argument(format!("noise intensity {v} must be positive")));
            }
        }
        Ok(())
    }

    /// Diagonal 12×12 spectral density in `(ω_a, ω_g, ω_ab, ω_gb)` order.
    pub fn spectral_density(&self) -> SMatrix<f64, 12, 12> {
        let mut q = SMatrix::<f64, 12, 12>::zeros();
        for i in 0..3 {
            q[(i, i)] = self.sigma_a[i].powi(2);
            q[(3 + i, 3 + i)] = self.sigma_g[i].powi(2);
            q[(6 + i, 6 + i)] = self.sigma_ab.powi(2);
            q[(9 + i, 9 + i)] = self.sigma_gb.powi(2);
        }
        q
    }
}

/// How the discrete process noise is formed from `G·Q·Gᵀ·dt`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessNoiseForm {
    /// `Qd = ½·G·Q·Gᵀ·dt`.
    #[default]
    Half,
    /// `Qd = G·Q·Gᵀ·dt`.
    Full,
}

impl ProcessNoiseForm {
    fn factor(self) -> f64 {
        match self {
            ProcessNoiseForm::Half => 0.5,
            ProcessNoiseForm::Full => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemMatrices {
    pub f: Mat15,
    pub g: Mat15x12,
    pub phi: Mat15,
    pub qd: Mat15,
}

/// Trapezoidal position update shared by the mechanization and the simulator.
pub fn integrate_position(pos: &Geodetic, v0: &Vector3<f64>, v1: &Vector3<f64>, dt: f64) -> Geodetic {
    let rate = geo::velocity_to_geodetic_rate(pos) * ((v0 + v1) * 0.5);
    Geodetic::new(pos.lat + rate.x * dt, pos.lon + rate.y * dt, pos.alt + rate.z * dt)
}

/// Advance the nominal state by one IMU sample.
///
/// Attitude takes one rotation-vector step from the bias-corrected rate,
/// velocity integrates the rotated bias-corrected specific force plus
/// gravity using the attitude at the start of the step, and position
/// integrates the mean NED velocity through the curvature matrix.
pub fn propagate_nominal(x: &NominalState, u: &ImuSample, dt: f64) -> Result<NominalState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(NavError::Argument(format!("propagation step {dt} must be positive")));
    }
    let w = u.w_b - x.b_g;
    let f = u.f_b - x.b_a;
    let acc = x.att * f + geo::gravity_ned();
    let vel = x.vel_ned + acc * dt;
    let mut att = Rotation3::from_matrix_unchecked(x.att.matrix() * linalg::exp_so3(&(w * dt)));
    att.renormalize();
    Ok(NominalState {
        pos: integrate_position(&x.pos, &x.vel_ned, &vel, dt),
        vel_ned: vel,
        att,
        b_a: x.b_a,
        b_g: x.b_g,
    })
}

/// Continuous system matrix `F` of the error model at `x` with input `u`.
pub fn system_matrix(x: &NominalState, u: &ImuSample) -> Mat15 {
    let c = *x.att.matrix();
    let f_ned = c * (u.f_b - x.b_a);
    let mut f = Mat15::zeros();
    f.fixed_view_mut::<3, 3>(slot::POS, slot::VEL)
        .copy_from(&geo::velocity_to_geodetic_rate(&x.pos));
    f.fixed_view_mut::<3, 3>(slot::VEL, slot::ATT)
        .copy_from(&(-linalg::skew(&f_ned)));
    f.fixed_view_mut::<3, 3>(slot::VEL, slot::ACC_BIAS).copy_from(&(-c));
    f.fixed_view_mut::<3, 3>(slot::ATT, slot::GYRO_BIAS).copy_from(&(-c));
    f
}

/// Noise distribution matrix routing `(ω_a, ω_g, ω_ab, ω_gb)` into
/// `(δv, δε, δb_a, δb_g)`.
pub fn noise_matrix(x: &NominalState) -> Mat15x12 {
    let c = *x.att.matrix();
    let mut g = Mat15x12::zeros();
    g.fixed_view_mut::<3, 3>(slot::VEL, 0).copy_from(&c);
    g.fixed_view_mut::<3, 3>(slot::ATT, 3).copy_from(&c);
    g.fixed_view_mut::<3, 3>(slot::ACC_BIAS, 6).copy_from(&Matrix3::identity());
    g.fixed_view_mut::<3, 3>(slot::GYRO_BIAS, 9).copy_from(&Matrix3::identity());
    g
}

/// `F`, `G`, first-order `Φ = I + F·dt` and `Qd = k·G·Q·Gᵀ·dt`.
pub fn linearize(
    x: &NominalState,
    u: &ImuSample,
    noise: &ImuNoiseSpec,
    form: ProcessNoiseForm,
    dt: f64,
) -> Result<SystemMatrices> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(NavError::Argument(format!("linearization step {dt} must be non-negative")));
    }
    let f = system_matrix(x, u);
    let g = noise_matrix(x);
    let phi = Mat15::identity() + f * dt;
    let qd = linalg::symmetrize(&(g * noise.spectral_density() * g.transpose() * (form.factor() * dt)));
    Ok(SystemMatrices { f, g, phi, qd })
}

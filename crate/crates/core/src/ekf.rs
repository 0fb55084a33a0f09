//! Forward error-state EKF with loosely coupled GNSS position updates.
//!
//! Every epoch of the run is recorded in a [`FilterTrace`]; the smoothers
//! and the learned fusion stage work purely from that record.

use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::geo;
use crate::linalg::{self, Mat15, Vec15};
use crate::mech::{self, ImuNoiseSpec, ProcessNoiseForm, SystemMatrices};
use crate::types::{Cov15, ErrorState15, GnssFix, ImuSample, NominalState};

pub type Mat3x15 = SMatrix<f64, 3, 15>;

/// `H = [I₃ 0₃ₓ₁₂]`.
pub fn position_observation() -> Mat3x15 {
    let mut h = Mat3x15::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    h
}

/// Initial one-sigma uncertainties. Position is given in NED metres and
/// converted to (rad, rad, m) at the initial latitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialUncertainty {
    pub pos_m: [f64; 3],
    pub vel: [f64; 3],
    pub att: [f64; 3],
    pub acc_bias: f64,
    pub gyro_bias: f64,
}

impl Default for InitialUncertainty {
    fn default() -> Self {
        InitialUncertainty {
            pos_m: [1.0; 3],
            vel: [0.5; 3],
            att: [0.05, 0.05, 0.1],
            acc_bias: 0.1,
            gyro_bias: 0.01,
        }
    }
}

impl InitialUncertainty {
    pub fn covariance(&self, at: &NominalState) -> Result<Cov15> {
        let m = geo::metres_per_unit(&at.pos);
        let mut d = Vec15::zeros();
        for i in 0..3 {
            d[i] = (self.pos_m[i] / m[i]).powi(2);
            d[3 + i] = self.vel[i].powi(2);
            d[6 + i] = self.att[i].powi(2);
            d[9 + i] = self.acc_bias.powi(2);
            d[12 + i] = self.gyro_bias.powi(2);
        }
        Cov15::from_diagonal(&d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardConfig {
    pub noise: ImuNoiseSpec,
    #[serde(default)]
    pub noise_form: ProcessNoiseForm,
    #[serde(default)]
    pub initial: InitialUncertainty,
}

/// A position update as applied: residual, observation matrix and noise,
/// all in error-state units (rad, rad, m).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub dz: Vector3<f64>,
    pub h: Mat3x15,
    pub r: Matrix3<f64>,
}

/// Everything the smoothers need from one forward epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardEpoch {
    pub t: f64,
    /// Propagated nominal before this epoch's update.
    pub nominal_prior: NominalState,
    /// Nominal after the update has been folded in (the forward estimate).
    pub nominal: NominalState,
    /// Error state before the update (zero after every reset).
    pub dx_minus: ErrorState15,
    /// Error state after the update, before the reset.
    pub dx_plus: ErrorState15,
    pub p_minus: Cov15,
    pub p_plus: Cov15,
    /// Transition from the previous epoch into this one (identity at epoch 0).
    pub phi: Mat15,
    /// Process noise of the step into this epoch (zero at epoch 0).
    pub qd: Mat15,
    pub measurement: Option<Measurement>,
}

#[derive(Clone, Debug, Default)]
pub struct FilterTrace {
    pub epochs: Vec<ForwardEpoch>,
}

impl FilterTrace {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.t).collect()
    }
}

/// Kalman prediction `δx⁻ = Φ·δx⁺`, `P⁻ = Φ·P⁺·Φᵀ + Qd`.
pub fn predict(dx_plus: &ErrorState15, p_plus: &Cov15, sys: &SystemMatrices) -> Result<(ErrorState15, Cov15)> {
    let dx = ErrorState15(sys.phi * dx_plus.0);
    let p = Cov15::new(sys.phi * p_plus.matrix() * sys.phi.transpose() + sys.qd)?;
    Ok((dx, p))
}

#[derive(Clone, Copy, Debug)]
pub struct UpdateOutcome {
    pub dx_plus: ErrorState15,
    pub p_plus: Cov15,
    pub gain: SMatrix<f64, 15, 3>,
    pub measurement: Measurement,
}

/// Measurement noise of `fix` converted to (rad, rad, m) at `at`.
pub fn measurement_noise(fix: &GnssFix, at: &NominalState) -> Matrix3<f64> {
    let m = geo::metres_per_unit(&at.pos);
    Matrix3::from_diagonal(&fix.r_diag.component_div(&m.component_mul(&m)))
}

/// `δz = z_INS − z_GNSS` in (rad, rad, m).
pub fn position_residual(fix: &GnssFix, nominal: &NominalState) -> Vector3<f64> {
    nominal.pos.as_vector() - fix.pos.as_vector()
}

/// GNSS position update.
///
/// The `−H·δx⁻` term is kept for generality; with a reset every epoch
/// `δx⁻` is zero and it vanishes.
pub fn update(
    dx_minus: &ErrorState15,
    p_minus: &Cov15,
    fix: &GnssFix,
    nominal: &NominalState,
) -> Result<UpdateOutcome> {
    fix.validate()?;
    let h = position_observation();
    let r = measurement_noise(fix, nominal);
    let dz = position_residual(fix, nominal);
    let p = p_minus.matrix();
    let s = h * p * h.transpose() + r;
    let s_inv = linalg::spd_inverse(&s)
        .map_err(|_| NavError::Numerical(format!("innovation covariance at t={} is singular", fix.t)))?;
    let k = p * h.transpose() * s_inv;
    let p_plus = Cov15::new((Mat15::identity() - k * h) * p)?;
    let dx_plus = ErrorState15(dx_minus.0 + k * (dz - h * dx_minus.0));
    Ok(UpdateOutcome {
        dx_plus,
        p_plus,
        gain: k,
        measurement: Measurement { dz, h, r },
    })
}

/// Fold the error state into the nominal (`x = x_nom − δx`); the error
/// state is zero afterwards.
pub fn apply_and_reset(nominal: &NominalState, dx_plus: &ErrorState15) -> NominalState {
    nominal.corrected(dx_plus)
}

fn validate_streams(imu: &[ImuSample], gnss: &[GnssFix]) -> Result<()> {
    if imu.is_empty() {
        return Err(NavError::Argument("IMU stream is empty".into()));
    }
    for (i, w) in imu.windows(2).enumerate() {
        if !(w[1].t > w[0].t) {
            return Err(NavError::Argument(format!("IMU time not increasing at sample {}", i + 1)));
        }
    }
    if let Some(i) = imu.iter().position(|s| !s.is_finite()) {
        return Err(NavError::Argument(format!("IMU sample {i} is not finite")));
    }
    for (i, w) in gnss.windows(2).enumerate() {
        if !(w[1].t > w[0].t) {
            return Err(NavError::Argument(format!("GNSS time not increasing at fix {}", i + 1)));
        }
    }
    for fix in gnss {
        fix.validate()?;
    }
    Ok(())
}

/// Run the forward filter over the whole IMU stream.
///
/// Epoch `k` sits at `imu[k].t`; sample `k−1` drives the step into it. A
/// GNSS fix is applied at the IMU epoch nearest to it when it lies within
/// half an IMU period; other fixes are skipped.
pub fn run_forward(
    imu: &[ImuSample],
    gnss: &[GnssFix],
    init: &NominalState,
    cfg: &ForwardConfig,
) -> Result<FilterTrace> {
    validate_streams(imu, gnss)?;
    cfg.noise.validate()?;
    let half_period = if imu.len() > 1 {
        0.5 * (imu[imu.len() - 1].t - imu[0].t) / (imu.len() - 1) as f64
    } else {
        f64::INFINITY
    };

    let mut epochs = Vec::with_capacity(imu.len());
    let mut next_fix = 0usize;
    let mut nominal = *init;
    let mut p_plus = cfg.initial.covariance(init)?;
    let mut skipped = 0usize;

    for k in 0..imu.len() {
        let t = imu[k].t;
        let (nominal_prior, p_minus, phi, qd) = if k == 0 {
            (nominal, p_plus, Mat15::identity(), Mat15::zeros())
        } else {
            let dt = t - imu[k - 1].t;
            let sys = mech::linearize(&nominal, &imu[k - 1], &cfg.noise, cfg.noise_form, dt)?;
            let prior = mech::propagate_nominal(&nominal, &imu[k - 1], dt)?;
            let (_, p_minus) = predict(&ErrorState15::zeros(), &p_plus, &sys)?;
            (prior, p_minus, sys.phi, sys.qd)
        };

        while next_fix < gnss.len() && gnss[next_fix].t < t - half_period {
            skipped += 1;
            next_fix += 1;
        }
        let fix = match gnss.get(next_fix) {
            Some(f) if (f.t - t).abs() <= half_period => {
                next_fix += 1;
                Some(f)
            }
            _ => None,
        };

        let dx_minus = ErrorState15::zeros();
        let (dx_plus, p_post, measurement) = match fix {
            Some(fix) => {
                let out = update(&dx_minus, &p_minus, fix, &nominal_prior)?;
                (out.dx_plus, out.p_plus, Some(out.measurement))
            }
            None => (dx_minus, p_minus, None),
        };
        nominal = apply_and_reset(&nominal_prior, &dx_plus);
        p_plus = p_post;

        epochs.push(ForwardEpoch {
            t,
            nominal_prior,
            nominal,
            dx_minus,
            dx_plus,
            p_minus,
            p_plus,
            phi,
            qd,
            measurement,
        });
    }
    skipped += gnss.len() - next_fix;
    if skipped > 0 {
        log::warn!("{skipped} GNSS fixes had no IMU epoch within half a period and were skipped");
    }
    Ok(FilterTrace { epochs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Geodetic;
    use nalgebra::Rotation3;

    fn state() -> NominalState {
        NominalState::new(Geodetic::new(0.56, 0.61, 10.0), Vector3::new(1.0, 0.5, 0.0), Rotation3::identity())
    }

    fn fix_at(x: &NominalState, north_m: f64, var: f64) -> GnssFix {
        let pos = geo::ned_to_geo(&Vector3::new(north_m, 0.0, 0.0), &x.pos).unwrap();
        GnssFix { t: 0.0, pos, r_diag: Vector3::repeat(var) }
    }

    #[test]
    fn reset_state_predicts_to_zero() {
        let sys = SystemMatrices {
            f: Mat15::zeros(),
            g: SMatrix::zeros(),
            phi: Mat15::identity() * 1.1,
            qd: Mat15::zeros(),
        };
        let p = Cov15::new(Mat15::identity()).unwrap();
        let (dx, _) = predict(&ErrorState15::zeros(), &p, &sys).unwrap();
        assert_eq!(dx, ErrorState15::zeros());
    }

    #[test]
    fn identity_transition_adds_process_noise() {
        let sys = SystemMatrices {
            f: Mat15::zeros(),
            g: SMatrix::zeros(),
            phi: Mat15::identity(),
            qd: Mat15::identity() * 0.1,
        };
        let p = Cov15::new(Mat15::identity() * 2.0).unwrap();
        let (_, pm) = predict(&ErrorState15::zeros(), &p, &sys).unwrap();
        assert!((pm.matrix() - Mat15::identity() * 2.1).amax() < 1e-15);
    }

    #[test]
    fn scalar_gain_by_hand() {
        // Unit prior on the position slots against a unit measurement variance.
        let x = state();
        let m = geo::metres_per_unit(&x.pos);
        let mut d = Vec15::repeat(1.0);
        for i in 0..3 {
            d[i] = 1.0 / (m[i] * m[i]);
        }
        let p = Cov15::from_diagonal(&d).unwrap();
        let out = update(&ErrorState15::zeros(), &p, &fix_at(&x, 0.0, 1.0), &x).unwrap();
        for i in 0..3 {
            assert!((out.gain[(i, i)] - 0.5).abs() < 1e-12);
            assert!((out.p_plus.matrix()[(i, i)] * m[i] * m[i] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_measurement_noise_leaves_prior_alone() {
        let x = state();
        let p = InitialUncertainty::default().covariance(&x).unwrap();
        let out = update(&ErrorState15::zeros(), &p, &fix_at(&x, 2.0, 1e12), &x).unwrap();
        assert!(linalg::rel_frobenius(out.p_plus.matrix(), p.matrix()) < 1e-6);
        assert!(out.dx_plus.dp().x.abs() * 6.4e6 < 1e-6);
    }

    #[test]
    fn joseph_form_agrees() {
        let x = state();
        let mut pm = InitialUncertainty::default().covariance(&x).unwrap().matrix().clone_owned();
        pm[(0, 3)] = 0.3 * (pm[(0, 0)] * pm[(3, 3)]).sqrt();
        pm[(3, 0)] = pm[(0, 3)];
        let p = Cov15::new(pm).unwrap();
        let out = update(&ErrorState15::zeros(), &p, &fix_at(&x, 1.0, 0.25), &x).unwrap();
        let k = out.gain;
        let h = out.measurement.h;
        let i_kh = Mat15::identity() - k * h;
        let joseph = i_kh * p.matrix() * i_kh.transpose() + k * out.measurement.r * k.transpose();
        // compare entrywise relative to the diagonal scale
        for i in 0..15 {
            for j in 0..15 {
                let s = (joseph[(i, i)] * joseph[(j, j)]).sqrt();
                assert!((joseph[(i, j)] - out.p_plus.matrix()[(i, j)]).abs() / s < 1e-9);
            }
        }
        assert!(out.p_plus.trace() <= p.trace());
    }

    #[test]
    fn biased_fix_pulls_nominal_north() {
        let x = state();
        let init = InitialUncertainty { pos_m: [10.0; 3], ..Default::default() };
        let p = init.covariance(&x).unwrap();
        let out = update(&ErrorState15::zeros(), &p, &fix_at(&x, 3.0, 0.25), &x).unwrap();
        let m = geo::metres_per_unit(&x.pos);
        let north = out.dx_plus.dp().x * m.x;
        // residual is INS minus GNSS, so the error slot is negative and the
        // corrected nominal moves north
        assert!((north + 3.0).abs() < 0.3, "{north}");
        let corrected = apply_and_reset(&x, &out.dx_plus);
        let moved = geo::geo_to_ned(&corrected.pos, &x.pos).unwrap().x;
        assert!((moved - 3.0).abs() < 0.3);
    }

    #[test]
    fn zero_correction_is_identity() {
        let x = state();
        assert_eq!(apply_and_reset(&x, &ErrorState15::zeros()).pos, x.pos);
        assert_eq!(apply_and_reset(&x, &ErrorState15::zeros()).vel_ned, x.vel_ned);
    }

    #[test]
    fn misalignment_rotates_heading() {
        let mut x = state();
        x.att = Rotation3::from_euler_angles(0.0, 0.0, 0.4);
        let dx = ErrorState15::from_parts(
            Vector3::zeros(),
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, 1e-3),
            Vector3::zeros(),
            Vector3::zeros(),
        );
        let y = apply_and_reset(&x, &dx);
        // exact composition with a yaw rotation of −1e-3
        let expected = Rotation3::from_euler_angles(0.0, 0.0, -1e-3) * x.att;
        assert!((y.att.matrix() - expected.matrix()).amax() < 1e-12);
        assert!(((x.euler().z - y.euler().z).abs() - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn empty_imu_stream_is_an_argument_error() {
        let cfg = ForwardConfig {
            noise: ImuNoiseSpec::from_per_sample(0.3, 0.03, 100.0, 1e-4, 1e-5),
            noise_form: ProcessNoiseForm::Half,
            initial: InitialUncertainty::default(),
        };
        let err = run_forward(&[], &[], &state(), &cfg).unwrap_err();
        assert!(matches!(err, NavError::Argument(_)));
    }
}

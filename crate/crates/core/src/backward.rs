//! Backward information filter.
//!
//! Runs from the last epoch to the first with no prior information and sees
//! only the transition matrices, process noise and measurements recorded by
//! the forward pass. It never reads a forward state estimate or covariance.
//!
//! The backward error state at epoch `k` is measured against the forward
//! filter's corrected nominal at `k`. That nominal jumps by the forward
//! reset at every update epoch, so propagation shifts the backward mean by
//! the recorded reset (a known, deterministic change of linearization point)
//! before mapping it through `Φ⁻¹`.

use nalgebra::{Cholesky, Matrix3};

use crate::ekf::{FilterTrace, Measurement};
use crate::error::{NavError, Result};
use crate::linalg::{self, Mat15, Vec15};
use crate::types::{BackwardInfo, ErrorState15};

/// Per-epoch sequences consumed by the backward pass.
#[derive(Clone, Debug, Default)]
pub struct BackwardInputs {
    /// `phi[k]` maps epoch `k−1` into epoch `k`.
    pub phi: Vec<Mat15>,
    /// Forward discrete process noise of the step into epoch `k`.
    pub qd: Vec<Mat15>,
    /// Measurement at epoch `k`, residual taken against the corrected nominal.
    pub measurements: Vec<Option<Measurement>>,
    /// Shift of the reference nominal at epoch `k` (the forward reset).
    pub realign: Vec<Vec15>,
}

impl BackwardInputs {
    /// Extract the measurement record from a forward trace.
    ///
    /// Only `Φ`, `Qd`, `δz`, `H`, `R` and the applied resets are read.
    pub fn from_trace(trace: &FilterTrace) -> Self {
        let mut inputs = BackwardInputs::default();
        for e in &trace.epochs {
            inputs.phi.push(e.phi);
            inputs.qd.push(e.qd);
            inputs.measurements.push(e.measurement.map(|m| Measurement {
                dz: m.dz - m.h * e.dx_plus.0,
                ..m
            }));
            inputs.realign.push(e.dx_plus.0);
        }
        inputs
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let n = self.phi.len();
        if self.qd.len() != n || self.measurements.len() != n || self.realign.len() != n {
            return Err(NavError::Argument(format!(
                "backward input lengths differ: phi {}, qd {}, measurements {}, realign {}",
                n,
                self.qd.len(),
                self.measurements.len(),
                self.realign.len()
            )));
        }
        Ok(())
    }
}

/// No prior information: zero information matrix and vector.
pub fn init_backward() -> BackwardInfo {
    BackwardInfo::zero()
}

/// Information-form measurement update:
/// `𝓘⁺ = 𝓘⁻ + HᵀR⁻¹H`, `s⁺ = s⁻ + HᵀR⁻¹δz` (with `s⁻ = 𝓘⁻·δx⁻_b`).
pub fn backward_update(info: &BackwardInfo, m: &Measurement) -> Result<BackwardInfo> {
    let r_inv: Matrix3<f64> = linalg::spd_inverse(&m.r)
        .map_err(|_| NavError::Numerical("measurement noise R is singular".into()))?;
    let ht_rinv = m.h.transpose() * r_inv;
    Ok(BackwardInfo {
        info: linalg::symmetrize(&(info.info + ht_rinv * m.h)),
        s: info.s + ht_rinv * m.dz,
    })
}

/// Backward process noise `Q_b = Φ⁻¹·Qd·Φ⁻ᵀ` for the step into an epoch.
pub fn backward_process_noise(phi: &Mat15, qd: &Mat15) -> Result<Mat15> {
    let phi_inv = linalg::inverse(phi)?;
    Ok(linalg::symmetrize(&(phi_inv * qd * phi_inv.transpose())))
}

/// Propagate one step back in time.
///
/// Covariance form: `δx⁻_{k−1} = Φ⁻¹(δx⁺_k + a)`, `P⁻_{k−1} = Φ⁻¹(P⁺_k + Q_b)Φ⁻ᵀ`,
/// where `a` is the reference shift at `k`. In information form this is
/// `𝓘' = Φᵀ(I + 𝓘Q_b)⁻¹𝓘Φ`, `s' = Φᵀ(I + 𝓘Q_b)⁻¹(s + 𝓘a)`, which stays
/// defined for singular `𝓘`. The solve is done on the equilibrated
/// information matrix.
pub fn backward_propagate(info: &BackwardInfo, phi: &Mat15, q_b: &Mat15, realign: &Vec15) -> Result<BackwardInfo> {
    if phi.determinant().abs() <= 1e-30 {
        return Err(NavError::Numerical("transition matrix is singular".into()));
    }
    let scale = Vec15::from_fn(|i, _| {
        let d = info.info[(i, i)];
        if d > 0.0 { d.sqrt() } else { 1.0 }
    });
    let info_eq = Mat15::from_fn(|i, j| info.info[(i, j)] / (scale[i] * scale[j]));
    let q_eq = Mat15::from_fn(|i, j| q_b[(i, j)] * scale[i] * scale[j]);
    let shifted = info.s + info.info * realign;
    let a = Mat15::identity() + info_eq * q_eq;
    let lu = a.lu();
    let x_info = lu
        .solve(&info_eq)
        .ok_or_else(|| NavError::Numerical("I + 𝓘·Q_b is singular".into()))?;
    let x_s = lu
        .solve(&shifted.component_div(&scale))
        .ok_or_else(|| NavError::Numerical("I + 𝓘·Q_b is singular".into()))?;
    let mid_info = Mat15::from_fn(|i, j| x_info[(i, j)] * scale[i] * scale[j]);
    let mid_s = x_s.component_mul(&scale);
    Ok(BackwardInfo {
        info: linalg::symmetrize(&(phi.transpose() * mid_info * phi)),
        s: phi.transpose() * mid_s,
    })
}

/// Backward quantities stored for one epoch: the information gathered from
/// all later epochs (the backward prediction at `k`).
#[derive(Clone, Debug, PartialEq)]
pub struct BackwardEpoch {
    pub info: BackwardInfo,
    /// Recovered error state and covariance; `None` while the position
    /// block of the information matrix is not yet positive definite.
    pub recovered: Option<(ErrorState15, Mat15)>,
}

impl BackwardEpoch {
    pub fn is_informative(&self) -> bool {
        self.recovered.is_some()
    }

    pub fn dx_b(&self) -> Option<ErrorState15> {
        self.recovered.map(|(dx, _)| dx)
    }

    pub fn p_b(&self) -> Option<Mat15> {
        self.recovered.map(|(_, p)| p)
    }
}

/// Whether the position block of the information matrix is positive definite.
pub fn position_block_informative(info: &BackwardInfo) -> bool {
    let block: Matrix3<f64> = info.info.fixed_view::<3, 3>(0, 0).into_owned();
    block.iter().all(|v| v.is_finite()) && linalg::is_positive_definite(&block) && Cholesky::new(block).is_some()
}

/// Recover `δx_b` and `P_b` from information form with a relative ridge.
pub fn recover(info: &BackwardInfo) -> Result<Option<(ErrorState15, Mat15)>> {
    if !position_block_informative(info) {
        return Ok(None);
    }
    let p = linalg::regularized_spd_inverse(&info.info)?;
    Ok(Some((ErrorState15(p * info.s), p)))
}

/// Run the backward pass over all epochs.
pub fn run_backward(inputs: &BackwardInputs) -> Result<Vec<BackwardEpoch>> {
    inputs.validate()?;
    let n = inputs.len();
    let mut out = Vec::with_capacity(n);
    let mut info = init_backward();
    for k in (0..n).rev() {
        out.push(BackwardEpoch {
            info,
            recovered: recover(&info)?,
        });
        if let Some(m) = &inputs.measurements[k] {
            info = backward_update(&info, m)?;
        }
        if k > 0 {
            let q_b = backward_process_noise(&inputs.phi[k], &inputs.qd[k])?;
            info = backward_propagate(&info, &inputs.phi[k], &q_b, &inputs.realign[k])?;
        }
    }
    out.reverse();
    Ok(out)
}

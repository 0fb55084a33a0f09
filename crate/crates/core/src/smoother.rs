//! Two-filter smoother and Rauch–Tung–Striebel smoother over a forward trace.

use crate::backward::BackwardEpoch;
use crate::ekf::FilterTrace;
use crate::error::{NavError, Result};
use crate::linalg::{self, Mat15, Vec15};
use crate::types::{BackwardInfo, Cov15, ErrorState15, NominalState};

/// One smoothed epoch. `dx_s` is relative to the forward filter's corrected
/// nominal at the same epoch, and `x_s = nominal ⊖ dx_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedEpoch {
    pub t: f64,
    pub x_s: NominalState,
    pub dx_s: ErrorState15,
    pub p_s: Cov15,
}

/// Result of fusing one forward estimate with backward information.
#[derive(Clone, Copy, Debug)]
pub struct Fusion {
    pub dx_s: Vec15,
    pub p_s: Mat15,
    pub k_f: Mat15,
    pub k_b: Mat15,
}

/// Information-form fusion: `P_s = (𝓘_f + 𝓘_b)⁻¹`,
/// `δx_s = P_s(𝓘_f·δx_f + s_b)`, `K_f = P_s·𝓘_f`, `K_b = I − K_f`.
///
/// With zero backward information the forward estimate is returned as is.
pub fn tfs_fuse_epoch(dx_f: &Vec15, p_f: &Mat15, back: &BackwardInfo) -> Result<Fusion> {
    if back.is_zero() {
        return Ok(Fusion { dx_s: *dx_f, p_s: *p_f, k_f: Mat15::identity(), k_b: Mat15::zeros() });
    }
    let i_f = linalg::spd_inverse(p_f)?;
    let p_s = linalg::spd_inverse(&(i_f + back.info))
        .map_err(|_| NavError::Numerical("combined forward and backward information is singular".into()))?;
    let k_f = p_s * i_f;
    Ok(Fusion {
        dx_s: p_s * (i_f * dx_f + back.s),
        p_s,
        k_f,
        k_b: Mat15::identity() - k_f,
    })
}

/// Covariance-form fusion with the optimal gains
/// `K_f = P_b(P_f + P_b)⁻¹`, `K_b = P_f(P_f + P_b)⁻¹` and
/// `P_s = K_f·P_f·K_fᵀ + K_b·P_b·K_bᵀ`.
pub fn tfs_gain_form(dx_f: &Vec15, p_f: &Mat15, dx_b: &Vec15, p_b: &Mat15) -> Result<Fusion> {
    let sum_inv = linalg::spd_inverse(&(p_f + p_b))?;
    let k_f = p_b * sum_inv;
    let k_b = p_f * sum_inv;
    let p_s = linalg::symmetrize(&(k_f * p_f * k_f.transpose() + k_b * p_b * k_b.transpose()));
    Ok(Fusion { dx_s: k_f * dx_f + k_b * dx_b, p_s, k_f, k_b })
}

/// Fusion of two full-state estimates, `x_s = P_s(𝓘_f·x_f + 𝓘_b·x_b)`.
///
/// Evaluated in coordinates scaled by the forward standard deviations so
/// that slots of very different magnitude do not lose precision.
pub fn tfs_full_state_fuse(x_f: &Vec15, x_b: &Vec15, p_f: &Mat15, p_b: &Mat15) -> Result<Vec15> {
    let d = p_f.diagonal();
    if !d.iter().all(|v| *v > 0.0 && v.is_finite()) {
        return Err(NavError::Numerical("forward covariance has a non-positive diagonal".into()));
    }
    let s = d.map(f64::sqrt);
    let scale = |m: &Mat15| Mat15::from_fn(|i, j| m[(i, j)] / (s[i] * s[j]));
    let i_f = linalg::spd_inverse(&scale(p_f))?;
    let i_b = linalg::spd_inverse(&scale(p_b))?;
    let p_s = linalg::spd_inverse(&(i_f + i_b))
        .map_err(|_| NavError::Numerical("combined information is singular".into()))?;
    let x = p_s * (i_f * x_f.component_div(&s) + i_b * x_b.component_div(&s));
    Ok(x.component_mul(&s))
}

/// Two-filter smoother. Backward epochs whose position information is not
/// yet positive definite fall back to the forward estimate.
pub fn tfs_smooth(trace: &FilterTrace, backward: &[BackwardEpoch]) -> Result<Vec<SmoothedEpoch>> {
    if trace.len() != backward.len() {
        return Err(NavError::Argument(format!(
            "forward trace has {} epochs but backward pass has {}",
            trace.len(),
            backward.len()
        )));
    }
    trace
        .epochs
        .iter()
        .zip(backward)
        .map(|(f, b)| {
            let p_f = *f.p_plus.matrix();
            if !b.is_informative() {
                return Ok(SmoothedEpoch { t: f.t, x_s: f.nominal, dx_s: ErrorState15::zeros(), p_s: f.p_plus });
            }
            let fused = tfs_fuse_epoch(&Vec15::zeros(), &p_f, &b.info)?;
            let dx_s = ErrorState15(fused.dx_s);
            Ok(SmoothedEpoch { t: f.t, x_s: f.nominal.corrected(&dx_s), dx_s, p_s: Cov15::new(fused.p_s)? })
        })
        .collect()
}

/// Rauch–Tung–Striebel smoother.
///
/// `K_k = P⁺_k·Φᵀ·(P⁻_{k+1})⁻¹`, `δx_s,k = δx⁺_k + K_k(δx_s,k+1 − δx⁻_{k+1})`,
/// `P_s,k = P⁺_k + K_k(P_s,k+1 − P⁻_{k+1})K_kᵀ`, initialized with the forward
/// posterior at the last epoch. The forward pass resets after every epoch,
/// so each smoothed error is re-expressed against the corrected nominal.
pub fn rtss_smooth(trace: &FilterTrace) -> Result<Vec<SmoothedEpoch>> {
    let n = trace.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(n);
    let last = &trace.epochs[n - 1];
    let mut dx_next = Vec15::zeros();
    let mut p_next = *last.p_plus.matrix();
    out.push(SmoothedEpoch { t: last.t, x_s: last.nominal, dx_s: ErrorState15::zeros(), p_s: last.p_plus });
    for k in (0..n - 1).rev() {
        let cur = &trace.epochs[k];
        let next = &trace.epochs[k + 1];
        let p_plus = cur.p_plus.matrix();
        let p_minus_next = next.p_minus.matrix();
        let p_minus_inv = linalg::spd_inverse(p_minus_next)
            .map_err(|_| NavError::Numerical(format!("predicted covariance at epoch {} is singular", k + 1)))?;
        let gain = p_plus * next.phi.transpose() * p_minus_inv;
        // smoothed error at k+1 against the propagated (pre-update) nominal
        let innovation = next.dx_plus.0 + dx_next - next.dx_minus.0;
        let dx = gain * innovation;
        let p = Cov15::new(p_plus + gain * (p_next - p_minus_next) * gain.transpose())?;
        let dx_s = ErrorState15(dx);
        out.push(SmoothedEpoch { t: cur.t, x_s: cur.nominal.corrected(&dx_s), dx_s, p_s: p });
        dx_next = dx;
        p_next = *p.matrix();
    }
    out.reverse();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ekf::ForwardEpoch;
    use crate::types::Geodetic;
    use nalgebra::{Rotation3, Vector3};

    fn spd(seed: u64, scale: f64) -> Mat15 {
        let mut state = seed.wrapping_add(17);
        let a = Mat15::from_fn(|_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        });
        (a * a.transpose() + Mat15::identity()) * scale
    }

    #[test]
    fn equal_scalar_variances_halve() {
        let p = Mat15::identity() * 2.0;
        let back = BackwardInfo { info: Mat15::identity() * 0.5, s: Vec15::zeros() };
        let f = tfs_fuse_epoch(&Vec15::zeros(), &p, &back).unwrap();
        assert!((f.p_s - Mat15::identity()).amax() < 1e-15);
    }

    #[test]
    fn no_backward_information_returns_forward() {
        let p = spd(1, 1.0);
        let dx = Vec15::from_element(0.3);
        let f = tfs_fuse_epoch(&dx, &p, &BackwardInfo::zero()).unwrap();
        assert_eq!(f.p_s, p);
        assert_eq!(f.dx_s, dx);
    }

    #[test]
    fn opposite_estimates_average_to_zero() {
        let mut e1 = Vec15::zeros();
        e1[0] = 1.0;
        let back = BackwardInfo { info: Mat15::identity(), s: -e1 };
        let f = tfs_fuse_epoch(&e1, &Mat15::identity(), &back).unwrap();
        assert!(f.dx_s.amax() < 1e-15);
    }

    #[test]
    fn gains_sum_to_identity() {
        let p_f = spd(2, 1.0);
        let p_b = spd(3, 2.0);
        let back = BackwardInfo { info: linalg::spd_inverse(&p_b).unwrap(), s: Vec15::zeros() };
        let f = tfs_fuse_epoch(&Vec15::zeros(), &p_f, &back).unwrap();
        assert_eq!(f.k_f + f.k_b, Mat15::identity());
        let g = tfs_gain_form(&Vec15::zeros(), &p_f, &Vec15::zeros(), &p_b).unwrap();
        assert!((g.k_f + g.k_b - Mat15::identity()).amax() < 1e-12);
    }

    #[test]
    fn information_and_gain_forms_agree() {
        for seed in 0..20 {
            let p_f = spd(seed, 0.5);
            let p_b = spd(seed + 100, 3.0);
            let dx_f = Vec15::from_fn(|i, _| (i as f64).sin());
            let dx_b = Vec15::from_fn(|i, _| (i as f64).cos());
            let i_b = linalg::spd_inverse(&p_b).unwrap();
            let back = BackwardInfo { info: i_b, s: i_b * dx_b };
            let info = tfs_fuse_epoch(&dx_f, &p_f, &back).unwrap();
            let gain = tfs_gain_form(&dx_f, &p_f, &dx_b, &p_b).unwrap();
            assert!(linalg::rel_frobenius(&info.p_s, &gain.p_s) < 1e-9);
            assert!((info.dx_s - gain.dx_s).norm() / gain.dx_s.norm() < 1e-9);
        }
    }

    #[test]
    fn one_dimensional_full_state_average() {
        let mut x_f = Vec15::zeros();
        let mut x_b = Vec15::zeros();
        x_f[0] = 1.0;
        x_b[0] = 3.0;
        let x = tfs_full_state_fuse(&x_f, &x_b, &Mat15::identity(), &Mat15::identity()).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-15);
    }

    fn flat_trace(n: usize) -> FilterTrace {
        let nominal = NominalState::new(Geodetic::new(0.5, 0.2, 10.0), Vector3::new(1.0, 0.0, 0.0), Rotation3::identity());
        let p = Cov15::new(spd(7, 0.1)).unwrap();
        let epochs = (0..n)
            .map(|k| ForwardEpoch {
                t: k as f64 * 0.01,
                nominal_prior: nominal,
                nominal,
                dx_minus: ErrorState15::zeros(),
                dx_plus: ErrorState15::zeros(),
                p_minus: p,
                p_plus: p,
                phi: Mat15::identity(),
                qd: Mat15::zeros(),
                measurement: None,
            })
            .collect();
        FilterTrace { epochs }
    }

    #[test]
    fn rtss_degenerate_recursion_is_forward() {
        let trace = flat_trace(20);
        let s = rtss_smooth(&trace).unwrap();
        for (f, e) in trace.epochs.iter().zip(&s) {
            assert!(linalg::rel_frobenius(e.p_s.matrix(), f.p_plus.matrix()) < 1e-12);
            assert!(e.dx_s.0.amax() < 1e-15);
        }
        assert_eq!(s.last().unwrap().p_s, trace.epochs.last().unwrap().p_plus);
    }

    #[test]
    fn tfs_length_mismatch_is_rejected() {
        let trace = flat_trace(3);
        assert!(matches!(tfs_smooth(&trace, &[]), Err(NavError::Argument(_))));
    }
}

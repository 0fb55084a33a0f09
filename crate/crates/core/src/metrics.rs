//! Estimation error metrics.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;

use crate::error::{NavError, Result};
use crate::geo;
use crate::types::{Cov15, Geodetic, NominalState};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rmse {
    pub axes: [f64; 3],
    /// RMSE of the vector norm.
    pub norm: f64,
}

pub fn rmse(errors: &[Vector3<f64>]) -> Result<Rmse> {
    if errors.is_empty() {
        return Err(NavError::Argument("RMSE of an empty sequence".into()));
    }
    let n = errors.len() as f64;
    let mut axes = [0.0; 3];
    for (i, a) in axes.iter_mut().enumerate() {
        *a = (errors.iter().map(|e| e[i] * e[i]).sum::<f64>() / n).sqrt();
    }
    let norm = (errors.iter().map(|e| e.norm_squared()).sum::<f64>() / n).sqrt();
    Ok(Rmse { axes, norm })
}

/// `sqrt(mean(e_N² + e_E²))`.
pub fn horizontal_rmse(errors: &[Vector3<f64>]) -> Result<f64> {
    if errors.is_empty() {
        return Err(NavError::Argument("RMSE of an empty sequence".into()));
    }
    Ok((errors.iter().map(|e| e.x * e.x + e.y * e.y).sum::<f64>() / errors.len() as f64).sqrt())
}

/// Mean of the horizontal error magnitude.
pub fn mean_horizontal_error(errors: &[Vector3<f64>]) -> Result<f64> {
    if errors.is_empty() {
        return Err(NavError::Argument("mean of an empty sequence".into()));
    }
    Ok(errors.iter().map(|e| e.x.hypot(e.y)).sum::<f64>() / errors.len() as f64)
}

/// Percent covariance improvement `100·(Tr_ref − Tr_test)/Tr_ref` per epoch.
pub fn pci(ref_traces: &[f64], test_traces: &[f64]) -> Result<Vec<f64>> {
    if ref_traces.len() != test_traces.len() {
        return Err(NavError::Argument(format!(
            "trace sequences differ in length: {} vs {}",
            ref_traces.len(),
            test_traces.len()
        )));
    }
    ref_traces
        .iter()
        .zip(test_traces)
        .enumerate()
        .map(|(k, (&r, &t))| {
            if !(r > 0.0) {
                return Err(NavError::Argument(format!("reference trace at epoch {k} is {r}")));
            }
            Ok(100.0 * (r - t) / r)
        })
        .collect()
}

/// Fraction of epochs with `|e| ≤ k·σ` (inclusive).
pub fn sigma_coverage(errors: &[f64], variances: &[f64], k: f64) -> Result<f64> {
    if errors.len() != variances.len() {
        return Err(NavError::Argument(format!(
            "errors and variances differ in length: {} vs {}",
            errors.len(),
            variances.len()
        )));
    }
    if errors.is_empty() {
        return Err(NavError::Argument("coverage of an empty sequence".into()));
    }
    let mut inside = 0usize;
    for (i, (&e, &v)) in errors.iter().zip(variances).enumerate() {
        if !(v > 0.0) {
            return Err(NavError::Argument(format!("variance at epoch {i} is {v}")));
        }
        if e.abs() <= k * v.sqrt() {
            inside += 1;
        }
    }
    Ok(inside as f64 / errors.len() as f64)
}

pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w == -PI { PI } else { w }
}

/// Per-epoch errors of an estimate against truth.
#[derive(Clone, Debug, Default)]
pub struct NavErrors {
    /// NED metres, both positions taken relative to the truth origin.
    pub pos: Vec<Vector3<f64>>,
    pub vel: Vec<Vector3<f64>>,
    /// Wrapped roll, pitch, yaw differences.
    pub att: Vec<Vector3<f64>>,
}

pub fn nav_errors(estimate: &[NominalState], truth: &[NominalState]) -> Result<NavErrors> {
    if estimate.len() != truth.len() {
        return Err(NavError::Argument(format!(
            "estimate has {} epochs, truth has {}",
            estimate.len(),
            truth.len()
        )));
    }
    let Some(first) = truth.first() else {
        return Ok(NavErrors::default());
    };
    let origin = first.pos;
    let mut out = NavErrors::default();
    for (e, t) in estimate.iter().zip(truth) {
        out.pos.push(geo::geo_to_ned(&e.pos, &origin)? - geo::geo_to_ned(&t.pos, &origin)?);
        out.vel.push(e.vel_ned - t.vel_ned);
        out.att.push((e.euler() - t.euler()).map(wrap_angle));
    }
    Ok(out)
}

/// Position variances of a covariance in NED m² at `at`.
pub fn position_variance_m2(p: &Cov15, at: &Geodetic) -> Vector3<f64> {
    let m = geo::metres_per_unit(at);
    let d = p.diagonal();
    Vector3::new(d[0] * m.x * m.x, d[1] * m.y * m.y, d[2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_cases() {
        let r = rmse(&[Vector3::repeat(3.0); 4]).unwrap();
        assert_eq!(r.axes, [3.0; 3]);
        let r = rmse(&[Vector3::new(1.0, 0.0, 0.0), Vector3::new(-1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(r.axes[0], 1.0);
        let r = rmse(&[Vector3::zeros(), Vector3::new(2.0, 0.0, 0.0)]).unwrap();
        assert!((r.axes[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!(rmse(&[]).is_err());
    }

    #[test]
    fn pci_cases() {
        assert_eq!(pci(&[10.0], &[4.0]).unwrap(), vec![60.0]);
        assert_eq!(pci(&[2.5, 1.0], &[2.5, 1.0]).unwrap(), vec![0.0, 0.0]);
        assert!(pci(&[0.0], &[1.0]).is_err());
        assert!(pci(&[1.0], &[]).is_err());
    }

    #[test]
    fn coverage_boundary_is_inclusive() {
        assert_eq!(sigma_coverage(&[0.0; 5], &[1.0; 5], 2.0).unwrap(), 1.0);
        assert_eq!(sigma_coverage(&[2.0, -6.0], &[1.0, 9.0], 2.0).unwrap(), 1.0);
        assert_eq!(sigma_coverage(&[2.1, 0.0], &[1.0, 1.0], 2.0).unwrap(), 0.5);
        assert!(sigma_coverage(&[1.0], &[1.0, 2.0], 2.0).is_err());
    }

    #[test]
    fn angles_wrap_into_half_open_range() {
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(0.1) - 0.1).abs() < 1e-15);
    }
}

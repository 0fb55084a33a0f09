//! Learned-correction fusion on top of the two-filter smoother.
//!
//! Per epoch a [`CorrectionRecord`] supplies covariance modification
//! matrices `D_f`, `D_b` and a bounded additive correction `c`. The forward
//! and backward covariances are congruence-transformed, fused with the
//! resulting hybrid gains, and `c` is appended to the fused error state.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::backward::BackwardEpoch;
use crate::ekf::FilterTrace;
use crate::error::{NavError, Result};
use crate::geo;
use crate::linalg::{self, Mat15, Vec15};
use crate::smoother::SmoothedEpoch;
use crate::types::{BackwardInfo, BoundSchedule, CorrectionRecord, Cov15, ErrorState15, NominalState};

/// Length of one network input row.
pub const NET_INPUT_LEN: usize = 480;

/// `[δx_f, δx_b, vec(P_f), vec(P_b)]`, with `vec` column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct NetInputRow(Vec<f64>);

impl NetInputRow {
    /// Backward slots are zero when the backward estimate is unavailable.
    pub fn assemble(dx_f: &Vec15, p_f: &Mat15, backward: Option<(&Vec15, &Mat15)>) -> Self {
        let mut v = Vec::with_capacity(NET_INPUT_LEN);
        v.extend_from_slice(dx_f.as_slice());
        match backward {
            Some((dx_b, _)) => v.extend_from_slice(dx_b.as_slice()),
            None => v.extend(std::iter::repeat_n(0.0, 15)),
        }
        v.extend_from_slice(p_f.as_slice());
        match backward {
            Some((_, p_b)) => v.extend_from_slice(p_b.as_slice()),
            None => v.extend(std::iter::repeat_n(0.0, 225)),
        }
        NetInputRow(v)
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() != NET_INPUT_LEN {
            return Err(NavError::Argument(format!(
                "network input row has {} values, expected {NET_INPUT_LEN}",
                values.len()
            )));
        }
        Ok(NetInputRow(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// `D = I + α·tanh(D̂)`.
pub fn near_identity(alpha: f64, d_hat: &Mat15) -> Mat15 {
    Mat15::identity() + d_hat.map(f64::tanh) * alpha
}

/// `c = tanh(ĉ) ⊙ m`.
pub fn bounded_correction(c_hat: &Vec15, bound: &Vec15) -> Vec15 {
    c_hat.map(f64::tanh).component_mul(bound)
}

fn check_rank(name: &str, d: &Mat15) -> Result<()> {
    if !d.iter().all(|v| v.is_finite()) || d.determinant().abs() <= 1e-30 {
        return Err(NavError::Argument(format!("{name} is rank deficient")));
    }
    Ok(())
}

/// `P̃_f = D_f·P_f·D_fᵀ`, `P̃_b = D_b·P_b·D_bᵀ`.
pub fn modify_covariances(p_f: &Mat15, p_b: &Mat15, rec: &CorrectionRecord) -> Result<(Mat15, Mat15)> {
    check_rank("D_f", &rec.d_f)?;
    check_rank("D_b", &rec.d_b)?;
    Ok((
        linalg::symmetrize(&(rec.d_f * p_f * rec.d_f.transpose())),
        linalg::symmetrize(&(rec.d_b * p_b * rec.d_b.transpose())),
    ))
}

/// Fused error state and covariance at one epoch.
#[derive(Clone, Copy, Debug)]
pub struct BlendsFusion {
    pub dx: Vec15,
    pub p_s: Mat15,
}

/// Fuse one epoch.
///
/// The backward side is given in information form together with its
/// recovered error state (needed only when `D_b ≠ I`). The modified
/// information is `𝓘̃_f = P̃_f⁻¹`, `𝓘̃_b = D_b⁻ᵀ·𝓘_b·D_b⁻¹`, and the modified
/// information vector is `s̃_b = 𝓘̃_b·δx_b`. Then
/// `δx = P̃_s⁰(𝓘̃_f·δx_f + s̃_b) + c` with `P̃_s⁰ = (𝓘̃_f + 𝓘̃_b)⁻¹`, and
/// `P̃_s = K̃_f·P̃_f·K̃_fᵀ + K̃_b·P̃_b·K̃_bᵀ + c·cᵀ`, where the backward term is
/// evaluated as `P̃_s⁰·𝓘̃_b·P̃_s⁰` so that a singular `𝓘_b` is allowed.
pub fn blends_fuse_epoch(
    dx_f: &Vec15,
    p_f: &Mat15,
    back: &BackwardInfo,
    dx_b: Option<&Vec15>,
    rec: &CorrectionRecord,
) -> Result<BlendsFusion> {
    check_rank("D_f", &rec.d_f)?;
    check_rank("D_b", &rec.d_b)?;
    let c = rec.c;
    let cct = c * c.transpose();

    let p_f_mod = if rec.d_f == Mat15::identity() {
        *p_f
    } else {
        linalg::symmetrize(&(rec.d_f * p_f * rec.d_f.transpose()))
    };
    if back.is_zero() {
        return Ok(BlendsFusion { dx: dx_f + c, p_s: p_f_mod + cct });
    }
    let (info_b, s_b) = if rec.d_b == Mat15::identity() {
        (back.info, back.s)
    } else {
        let dx_b = dx_b.ok_or_else(|| {
            NavError::Argument("modifying backward covariance needs the recovered backward state".into())
        })?;
        let d_inv = linalg::inverse(&rec.d_b)?;
        let info = linalg::symmetrize(&(d_inv.transpose() * back.info * d_inv));
        let s = d_inv.transpose() * (back.s + back.info * (d_inv - Mat15::identity()) * dx_b);
        (info, s)
    };

    let info_f = linalg::spd_inverse(&p_f_mod)?;
    let p_s0 = linalg::spd_inverse(&(info_f + info_b))
        .map_err(|_| NavError::Numerical("combined modified information is singular".into()))?;
    let k_f = p_s0 * info_f;
    let dx = p_s0 * (info_f * dx_f + s_b) + c;
    let p_s = linalg::symmetrize(&(k_f * p_f_mod * k_f.transpose() + p_s0 * info_b * p_s0)) + cct;
    Ok(BlendsFusion { dx, p_s })
}

/// The slice of the run a provider is asked to correct.
#[derive(Clone, Copy, Debug)]
pub struct Window<'a> {
    /// Index of the first epoch of the window in the whole run.
    pub start: usize,
    pub times: &'a [f64],
    pub inputs: &'a [NetInputRow],
    pub nominals: &'a [NominalState],
}

impl Window<'_> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Source of per-epoch correction records, queried one window at a time.
pub trait CorrectionProvider {
    /// One record per epoch of `window`, in order.
    fn corrections(&mut self, window: &Window<'_>) -> Result<Vec<CorrectionRecord>>;
}

/// Identity modifications and zero correction; reduces the fusion to the
/// plain two-filter smoother.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroProvider;

impl CorrectionProvider for ZeroProvider {
    fn corrections(&mut self, window: &Window<'_>) -> Result<Vec<CorrectionRecord>> {
        Ok(window.times.iter().map(|&t| CorrectionRecord::identity(t)).collect())
    }
}

/// Records loaded from a file, one per epoch of the run.
#[derive(Clone, Debug)]
pub struct FileProvider {
    records: Vec<CorrectionRecord>,
    time_tolerance: f64,
}

impl FileProvider {
    pub fn new(records: Vec<CorrectionRecord>) -> Self {
        FileProvider { records, time_tolerance: 1e-6 }
    }
}

impl CorrectionProvider for FileProvider {
    fn corrections(&mut self, window: &Window<'_>) -> Result<Vec<CorrectionRecord>> {
        window
            .times
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let epoch = window.start + i;
                let rec = self.records.get(epoch).ok_or_else(|| NavError::Provider {
                    epoch,
                    message: format!("file has {} records", self.records.len()),
                })?;
                if (rec.t - t).abs() > self.time_tolerance {
                    return Err(NavError::Provider {
                        epoch,
                        message: format!("record time {} does not match epoch time {t}", rec.t),
                    });
                }
                Ok(*rec)
            })
            .collect()
    }
}

/// Test provider that knows the GNSS bias: emits identity modifications and
/// the correction that removes a constant NED position offset, passed
/// through the same bounded parameterization a trained network uses.
#[derive(Clone, Debug)]
pub struct OracleProvider {
    pub bias_ned: Vector3<f64>,
    pub bound: Vec15,
}

impl OracleProvider {
    pub fn new(bias_ned: Vector3<f64>, schedule: &BoundSchedule, epoch: f64) -> Self {
        OracleProvider { bias_ned, bound: schedule.bound(epoch) }
    }

    /// The bias in error-state units at `at`: a fix biased north pulls the
    /// nominal north, and `x = x_nom − δx` needs a positive latitude error.
    pub fn target(&self, at: &NominalState) -> Vec15 {
        let m = geo::metres_per_unit(&at.pos);
        let mut c = Vec15::zeros();
        c[0] = self.bias_ned.x / m.x;
        c[1] = self.bias_ned.y / m.y;
        c[2] = -self.bias_ned.z;
        c
    }
}

impl CorrectionProvider for OracleProvider {
    fn corrections(&mut self, window: &Window<'_>) -> Result<Vec<CorrectionRecord>> {
        Ok(window
            .times
            .iter()
            .zip(window.nominals)
            .map(|(&t, x)| {
                let target = self.target(x);
                let c_hat = Vec15::from_fn(|i, _| (target[i] / self.bound[i]).clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh());
                CorrectionRecord { t, d_f: Mat15::identity(), d_b: Mat15::identity(), c: bounded_correction(&c_hat, &self.bound) }
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlendsConfig {
    pub schedule: BoundSchedule,
    /// Training epoch whose bounds apply at inference.
    pub final_epoch: f64,
    /// Provider window length and stride, in epochs.
    pub window: usize,
    /// Largest allowed `|D − I|` entry, matching `D = I + α·tanh(D̂)`.
    pub alpha: f64,
}

impl Default for BlendsConfig {
    fn default() -> Self {
        BlendsConfig { schedule: BoundSchedule::mobile_robot(), final_epoch: 200.0, window: 150, alpha: 1e-8 }
    }
}

impl BlendsConfig {
    pub fn bound(&self) -> Vec15 {
        self.schedule.bound(self.final_epoch)
    }
}

#[derive(Clone, Debug)]
pub struct BlendsOutput {
    pub epochs: Vec<SmoothedEpoch>,
    pub records: Vec<CorrectionRecord>,
}

fn check_record(rec: &CorrectionRecord, bound: &Vec15, alpha: f64, epoch: usize) -> Result<()> {
    let provider_err = |message: String| NavError::Provider { epoch, message };
    rec.validate(bound).map_err(|e| provider_err(e.to_string()))?;
    for (name, d) in [("D_f", &rec.d_f), ("D_b", &rec.d_b)] {
        let dev = (d - Mat15::identity()).amax();
        if dev > alpha {
            return Err(provider_err(format!("{name} departs from identity by {dev:e}, more than alpha {alpha:e}")));
        }
    }
    Ok(())
}

/// Full inference pass over an aligned forward trace and backward result.
pub fn run_blends(
    trace: &FilterTrace,
    backward: &[BackwardEpoch],
    provider: &mut dyn CorrectionProvider,
    cfg: &BlendsConfig,
) -> Result<BlendsOutput> {
    if trace.len() != backward.len() {
        return Err(NavError::Argument(format!(
            "forward trace has {} epochs but backward pass has {}",
            trace.len(),
            backward.len()
        )));
    }
    if cfg.window == 0 {
        return Err(NavError::Argument("window length must be positive".into()));
    }
    cfg.schedule.validate()?;
    let bound = cfg.bound();
    let dx_f = Vec15::zeros();
    let mut epochs = Vec::with_capacity(trace.len());
    let mut records = Vec::with_capacity(trace.len());

    for start in (0..trace.len()).step_by(cfg.window) {
        let end = (start + cfg.window).min(trace.len());
        let fwd = &trace.epochs[start..end];
        let times: Vec<f64> = fwd.iter().map(|e| e.t).collect();
        let nominals: Vec<NominalState> = fwd.iter().map(|e| e.nominal).collect();
        let inputs: Vec<NetInputRow> = fwd
            .iter()
            .zip(&backward[start..end])
            .map(|(f, b)| {
                let rec = b.recovered.as_ref().map(|(dx, p)| (&dx.0, p));
                NetInputRow::assemble(&dx_f, f.p_plus.matrix(), rec)
            })
            .collect();
        let window = Window { start, times: &times, inputs: &inputs, nominals: &nominals };
        let recs = provider.corrections(&window)?;
        if recs.len() != window.len() {
            return Err(NavError::Provider {
                epoch: start,
                message: format!("provider returned {} records for a window of {}", recs.len(), window.len()),
            });
        }
        for (i, rec) in recs.iter().enumerate() {
            let k = start + i;
            check_record(rec, &bound, cfg.alpha, k)?;
            let f = &fwd[i];
            let b = &backward[k];
            let fused = if b.is_informative() {
                blends_fuse_epoch(&dx_f, f.p_plus.matrix(), &b.info, b.dx_b().as_ref().map(|d| &d.0), rec)?
            } else {
                blends_fuse_epoch(&dx_f, f.p_plus.matrix(), &BackwardInfo::zero(), None, rec)?
            };
            let dx_s = ErrorState15(fused.dx);
            epochs.push(SmoothedEpoch {
                t: f.t,
                x_s: f.nominal.corrected(&dx_s),
                dx_s,
                p_s: Cov15::new(fused.p_s)?,
            });
        }
        records.extend(recs);
    }
    Ok(BlendsOutput { epochs, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoother::tfs_fuse_epoch;

    fn spd(seed: u64) -> Mat15 {
        let mut state = seed.wrapping_add(99);
        let a = Mat15::from_fn(|_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        });
        a * a.transpose() + Mat15::identity() * 0.1
    }

    #[test]
    fn identity_and_scalar_congruence() {
        let p = spd(1);
        let mut rec = CorrectionRecord::identity(0.0);
        let (pf, pb) = modify_covariances(&p, &p, &rec).unwrap();
        assert_eq!(pf, p);
        assert_eq!(pb, p);
        rec.d_f = Mat15::identity() * 2.0;
        let (pf, _) = modify_covariances(&p, &p, &rec).unwrap();
        assert!(linalg::rel_frobenius(&pf, &(p * 4.0)) < 1e-15);
    }

    #[test]
    fn rank_deficient_modification_is_rejected() {
        let mut rec = CorrectionRecord::identity(0.0);
        rec.d_b[(4, 4)] = 0.0;
        assert!(matches!(modify_covariances(&spd(2), &spd(3), &rec), Err(NavError::Argument(_))));
    }

    #[test]
    fn correction_saturates_at_bound() {
        let s = BoundSchedule::mobile_robot();
        let m = s.bound(0.0);
        assert_eq!(m, Vec15::from_column_slice(&s.m_wide));
        let c = bounded_correction(&Vec15::from_element(1e6), &m);
        for i in 0..15 {
            assert!((c[i] - m[i]).abs() <= 1e-9 * m[i]);
        }
        let c = bounded_correction(&Vec15::from_element(3.0), &m);
        assert!((0..15).all(|i| c[i].abs() < m[i]));
    }

    #[test]
    fn zero_record_matches_tfs() {
        let p_f = spd(4);
        let i_b = linalg::spd_inverse(&spd(5)).unwrap();
        let back = BackwardInfo { info: i_b, s: i_b * Vec15::from_element(0.2) };
        let tfs = tfs_fuse_epoch(&Vec15::zeros(), &p_f, &back).unwrap();
        let b = blends_fuse_epoch(&Vec15::zeros(), &p_f, &back, None, &CorrectionRecord::identity(0.0)).unwrap();
        assert_eq!(b.dx, tfs.dx_s);
        assert!(linalg::rel_frobenius(&b.p_s, &tfs.p_s) < 1e-12);
    }

    #[test]
    fn correction_adds_outer_product() {
        let p_f = spd(6);
        let i_b = linalg::spd_inverse(&spd(7)).unwrap();
        let back = BackwardInfo { info: i_b, s: Vec15::zeros() };
        let base = blends_fuse_epoch(&Vec15::zeros(), &p_f, &back, None, &CorrectionRecord::identity(0.0)).unwrap();
        let mut rec = CorrectionRecord::identity(0.0);
        rec.c[0] = 0.1;
        let with_c = blends_fuse_epoch(&Vec15::zeros(), &p_f, &back, None, &rec).unwrap();
        assert!((with_c.p_s[(0, 0)] - base.p_s[(0, 0)] - 0.01).abs() < 1e-15);
        assert!((with_c.dx - base.dx - rec.c).amax() < 1e-15);
    }

    #[test]
    fn modified_backward_information_matches_covariance_route() {
        let p_f = spd(8);
        let p_b = spd(9);
        let dx_b = Vec15::from_fn(|i, _| 0.01 * i as f64);
        let i_b = linalg::spd_inverse(&p_b).unwrap();
        let back = BackwardInfo { info: i_b, s: i_b * dx_b };
        let mut rec = CorrectionRecord::identity(0.0);
        rec.d_f = near_identity(0.3, &spd(10));
        rec.d_b = near_identity(0.3, &spd(11));
        let fused = blends_fuse_epoch(&Vec15::zeros(), &p_f, &back, Some(&dx_b), &rec).unwrap();
        // Oracle: modify both covariances, then fuse in covariance form.
        let (pf, pb) = modify_covariances(&p_f, &p_b, &rec).unwrap();
        let k_f = pb * (pf + pb).try_inverse().unwrap();
        let k_b = pf * (pf + pb).try_inverse().unwrap();
        let p_s = k_f * pf * k_f.transpose() + k_b * pb * k_b.transpose();
        assert!(linalg::rel_frobenius(&fused.p_s, &p_s) < 1e-9);
        assert!((fused.dx - k_b * dx_b).norm() < 1e-9 * dx_b.norm());
    }

    #[test]
    fn net_input_layout() {
        let dx_f = Vec15::from_element(1.0);
        let p_f = Mat15::from_fn(|i, j| (i * 15 + j) as f64);
        let row = NetInputRow::assemble(&dx_f, &p_f, None);
        assert_eq!(row.values().len(), NET_INPUT_LEN);
        assert_eq!(row.values()[0], 1.0);
        assert_eq!(row.values()[15], 0.0);
        // column-major: second element is P[1,0]
        assert_eq!(row.values()[31], 15.0);
        assert!(NetInputRow::from_values(vec![0.0; 479]).is_err());
    }

    #[test]
    fn oracle_sign_for_north_bias() {
        let x = NominalState::new(crate::types::Geodetic::new(0.5, 0.1, 0.0), Vector3::zeros(), nalgebra::Rotation3::identity());
        let p = OracleProvider::new(Vector3::new(3.0, 0.0, 1.0), &BoundSchedule::constant([1.0; 15]), 0.0);
        let c = p.target(&x);
        assert!(c[0] > 0.0);
        assert_eq!(c[2], -1.0);
        let corrected = x.corrected(&ErrorState15(c));
        let ned = geo::geo_to_ned(&corrected.pos, &x.pos).unwrap();
        assert!((ned.x + 3.0).abs() < 1e-9);
    }
}

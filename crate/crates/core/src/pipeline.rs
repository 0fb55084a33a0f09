//! End-to-end runs: configuration, data ingest or simulation, estimation,
//! metrics and file output.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::backward::{self, BackwardEpoch, BackwardInputs};
use crate::blends::{self, BlendsConfig, BlendsOutput, CorrectionProvider, FileProvider, NetInputRow, OracleProvider, ZeroProvider};
use crate::ekf::{self, FilterTrace, ForwardConfig, InitialUncertainty};
use crate::error::{NavError, Result};
use crate::geo;
use crate::io::{self, EstimateRow, StampedState};
use crate::linalg::Vec15;
use crate::mech::{ImuNoiseSpec, ProcessNoiseForm};
use crate::metrics;
use crate::sim::{self, SensorNoiseSpec, TrajectorySpec};
use crate::smoother::{self, SmoothedEpoch};
use crate::types::{GnssFix, ImuSample, NominalState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    Ekf,
    Tfs,
    Rtss,
    Blends,
    MotivationStudy,
}

impl FromStr for Mode {
    type Err = NavError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "simulate" => Mode::Simulate,
            "ekf" => Mode::Ekf,
            "tfs" => Mode::Tfs,
            "rtss" => Mode::Rtss,
            "blends" => Mode::Blends,
            "motivation-study" => Mode::MotivationStudy,
            other => return Err(NavError::Argument(format!("unknown mode '{other}'"))),
        })
    }
}

/// Where BLENDS corrections come from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ProviderChoice {
    Zero,
    File(PathBuf),
    /// Removes the configured GNSS bias; only meaningful on simulated data.
    Oracle,
}

impl FromStr for ProviderChoice {
    type Err = NavError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(ProviderChoice::Zero),
            "oracle" => Ok(ProviderChoice::Oracle),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(ProviderChoice::File(PathBuf::from(p))),
                _ => Err(NavError::Argument(format!("unknown provider '{s}'; use zero, oracle or file:<path>"))),
            },
        }
    }
}

impl TryFrom<String> for ProviderChoice {
    type Error = NavError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ProviderChoice> for String {
    fn from(p: ProviderChoice) -> String {
        match p {
            ProviderChoice::Zero => "zero".into(),
            ProviderChoice::Oracle => "oracle".into(),
            ProviderChoice::File(p) => format!("file:{}", p.display()),
        }
    }
}

/// Input files for the ingest modes. Without `imu` and `gnss` the data are
/// simulated from the trajectory and sensor sections.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub imu: Option<PathBuf>,
    pub gnss: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

/// Filter tuning and initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSettings {
    /// Accelerometer and gyro noise; taken from the sensor section when absent.
    pub accel_std: Option<f64>,
    pub gyro_std: Option<f64>,
    pub accel_bias_walk: f64,
    pub gyro_bias_walk: f64,
    pub noise_form: ProcessNoiseForm,
    pub initial: InitialUncertainty,
    /// Initial roll, pitch, yaw (rad) and NED velocity; taken from the
    /// first truth sample when absent.
    pub attitude: Option<[f64; 3]>,
    pub velocity: Option<[f64; 3]>,
}

impl Default for FilterSettings {
    fn default() -> Self {
        FilterSettings {
            accel_std: None,
            gyro_std: None,
            accel_bias_walk: 1e-4,
            gyro_bias_walk: 1e-5,
            noise_form: ProcessNoiseForm::Half,
            initial: InitialUncertainty::default(),
            attitude: None,
            velocity: None,
        }
    }
}

/// GNSS bias magnitudes for the motivation study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudySettings {
    pub mus: Vec<f64>,
    /// Unit NED direction of the bias.
    pub direction: [f64; 3],
    pub gnss_std: f64,
}

impl Default for StudySettings {
    fn default() -> Self {
        StudySettings { mus: vec![0.0, 1.5, 3.0], direction: [1.0, 0.0, 0.0], gnss_std: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub provider: ProviderChoice,
    pub paths: Paths,
    pub trajectory: TrajectorySpec,
    pub sensors: SensorNoiseSpec,
    pub filter: FilterSettings,
    pub blends: BlendsConfig,
    pub study: StudySettings,
    /// Write the per-epoch network inputs in blends mode.
    pub export_net_inputs: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::MotivationStudy,
            seed: 0,
            out_dir: PathBuf::from("out"),
            provider: ProviderChoice::Zero,
            paths: Paths::default(),
            trajectory: TrajectorySpec::default(),
            sensors: SensorNoiseSpec::default(),
            filter: FilterSettings::default(),
            blends: BlendsConfig::default(),
            study: StudySettings::default(),
            export_net_inputs: true,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| NavError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NavError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The bias-inheritance study setup: lawnmower, consumer-grade IMU at 100 Hz, GNSS
    /// at 10 Hz with σ = 0.5 m. The filter uses the full `G·Q·Gᵀ·dt`
    /// discretization, which matches the simulator's per-sample noise.
    pub fn motivation_study() -> Self {
        RunConfig {
            filter: FilterSettings { noise_form: ProcessNoiseForm::Full, ..FilterSettings::default() },
            ..RunConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.trajectory.validate().map_err(|e| NavError::Config(e.to_string()))?;
        self.sensors.validate().map_err(|e| NavError::Config(e.to_string()))?;
        self.blends.schedule.validate().map_err(|e| NavError::Config(e.to_string()))?;
        if self.paths.imu.is_some() != self.paths.gnss.is_some() {
            return Err(NavError::Config("paths.imu and paths.gnss must be given together".into()));
        }
        for p in [&self.paths.imu, &self.paths.gnss, &self.paths.truth].into_iter().flatten() {
            if !p.exists() {
                return Err(NavError::Config(format!("input file {} does not exist", p.display())));
            }
        }
        if let ProviderChoice::File(p) = &self.provider {
            if self.mode == Mode::Blends && !p.exists() {
                return Err(NavError::Config(format!("correction file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn forward_config(&self) -> Result<ForwardConfig> {
        let noise = ImuNoiseSpec::from_per_sample(
            self.filter.accel_std.unwrap_or(self.sensors.accel_std),
            self.filter.gyro_std.unwrap_or(self.sensors.gyro_std),
            self.sensors.imu_rate,
            self.filter.accel_bias_walk,
            self.filter.gyro_bias_walk,
        );
        noise.validate().map_err(|e| NavError::Config(e.to_string()))?;
        Ok(ForwardConfig { noise, noise_form: self.filter.noise_form, initial: self.filter.initial })
    }
}

/// A pipeline failure tagged with the stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: NavError,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

/// Sensor streams plus optional truth aligned with the IMU epochs.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub imu: Vec<ImuSample>,
    pub gnss: Vec<GnssFix>,
    pub truth: Option<Vec<StampedState>>,
    /// Known GNSS bias in NED metres (simulated data only).
    pub gnss_bias: Option<Vector3<f64>>,
}

pub fn simulate(traj: &TrajectorySpec, sensors: &SensorNoiseSpec) -> Result<Dataset> {
    let truth = sim::generate_truth(traj, 1.0 / sensors.imu_rate)?;
    let imu = sim::synthesize_imu(&truth, sensors)?;
    let gnss = sim::synthesize_gnss(&truth, sensors)?;
    Ok(Dataset {
        imu,
        gnss,
        truth: Some(truth.iter().map(|s| StampedState { t: s.t, state: s.state }).collect()),
        gnss_bias: Some(Vector3::from_column_slice(&sensors.gnss_mu)),
    })
}

pub fn load(paths: &Paths) -> Result<Dataset> {
    let (Some(imu), Some(gnss)) = (&paths.imu, &paths.gnss) else {
        return Err(NavError::Config("paths.imu and paths.gnss are required".into()));
    };
    let imu = io::read_imu_csv(imu)?;
    let gnss = io::read_gnss_csv(gnss)?;
    let truth = paths.truth.as_deref().map(io::read_truth_csv).transpose()?;
    Ok(Dataset { imu, gnss, truth, gnss_bias: None })
}

impl Dataset {
    /// Truth states at the IMU epochs, if the truth stream lines up with them.
    pub fn aligned_truth(&self) -> Option<Vec<NominalState>> {
        let truth = self.truth.as_ref()?;
        let aligned = truth.len() == self.imu.len()
            && truth.iter().zip(&self.imu).all(|(a, b)| (a.t - b.t).abs() <= 1e-9);
        if !aligned {
            log::warn!("truth epochs do not match IMU epochs; accuracy metrics skipped");
            return None;
        }
        Some(truth.iter().map(|s| s.state).collect())
    }
}

/// Initial nominal: position from the first GNSS fix, attitude and velocity
/// from the configuration or, failing that, from the first truth sample.
pub fn initial_state(ds: &Dataset, filter: &FilterSettings) -> Result<NominalState> {
    let fix = ds.gnss.first().ok_or_else(|| NavError::Argument("no GNSS fixes".into()))?;
    let truth0 = ds.truth.as_ref().and_then(|t| t.first());
    let att = match (filter.attitude, truth0) {
        (Some([r, p, y]), _) => Rotation3::from_euler_angles(r, p, y),
        (None, Some(t)) => t.state.att,
        (None, None) => return Err(NavError::Config("filter.attitude is required without truth".into())),
    };
    let vel = match (filter.velocity, truth0) {
        (Some(v), _) => Vector3::from_column_slice(&v),
        (None, Some(t)) => t.state.vel_ned,
        (None, None) => return Err(NavError::Config("filter.velocity is required without truth".into())),
    };
    Ok(NominalState::new(fix.pos, vel, att))
}

/// Which estimators to run on top of the forward filter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Estimators {
    pub tfs: bool,
    pub rtss: bool,
    pub blends: bool,
}

impl Estimators {
    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Simulate | Mode::Ekf => Estimators::default(),
            Mode::Tfs => Estimators { tfs: true, ..Default::default() },
            Mode::Rtss => Estimators { rtss: true, ..Default::default() },
            Mode::Blends => Estimators { tfs: true, blends: true, ..Default::default() },
            Mode::MotivationStudy => Estimators { tfs: true, rtss: true, blends: false },
        }
    }
}

/// Everything computed for one dataset.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub trace: FilterTrace,
    pub backward: Option<Vec<BackwardEpoch>>,
    pub tfs: Option<Vec<SmoothedEpoch>>,
    pub rtss: Option<Vec<SmoothedEpoch>>,
    pub blends: Option<BlendsOutput>,
}

fn provider_for(cfg: &RunConfig, ds: &Dataset) -> Result<Box<dyn CorrectionProvider>> {
    Ok(match &cfg.provider {
        ProviderChoice::Zero => Box::new(ZeroProvider),
        ProviderChoice::File(p) => Box::new(FileProvider::new(io::read_correction_records(p)?)),
        ProviderChoice::Oracle => {
            let bias = ds
                .gnss_bias
                .ok_or_else(|| NavError::Config("the oracle provider needs simulated data with a known bias".into()))?;
            Box::new(OracleProvider { bias_ned: bias, bound: cfg.blends.bound() })
        }
    })
}

pub fn process(ds: &Dataset, cfg: &RunConfig, which: Estimators) -> StageResult<RunArtifacts> {
    let fcfg = cfg.forward_config().stage("config")?;
    let init = initial_state(ds, &cfg.filter).stage("init")?;
    let trace = ekf::run_forward(&ds.imu, &ds.gnss, &init, &fcfg).stage("forward")?;
    let backward = if which.tfs || which.blends {
        Some(backward::run_backward(&BackwardInputs::from_trace(&trace)).stage("backward")?)
    } else {
        None
    };
    let tfs = match (&backward, which.tfs) {
        (Some(b), true) => Some(smoother::tfs_smooth(&trace, b).stage("tfs")?),
        _ => None,
    };
    let rtss = if which.rtss { Some(smoother::rtss_smooth(&trace).stage("rtss")?) } else { None };
    let blends = match (&backward, which.blends) {
        (Some(b), true) => {
            let mut provider = provider_for(cfg, ds).stage("provider")?;
            Some(blends::run_blends(&trace, b, provider.as_mut(), &cfg.blends).stage("blends")?)
        }
        _ => None,
    };
    Ok(RunArtifacts { trace, backward, tfs, rtss, blends })
}

impl RunArtifacts {
    pub fn forward_rows(&self) -> Vec<EstimateRow> {
        self.trace.epochs.iter().map(|e| EstimateRow::new(e.t, e.nominal, &e.p_plus)).collect()
    }

    /// `(name, rows)` for every estimator that was run, forward filter first.
    pub fn estimates(&self) -> Vec<(&'static str, Vec<EstimateRow>)> {
        let rows = |s: &[SmoothedEpoch]| s.iter().map(|e| EstimateRow::new(e.t, e.x_s, &e.p_s)).collect();
        let mut out = vec![("ekf", self.forward_rows())];
        if let Some(s) = &self.tfs {
            out.push(("tfs", rows(s)));
        }
        if let Some(s) = &self.rtss {
            out.push(("rtss", rows(s)));
        }
        if let Some(b) = &self.blends {
            out.push(("blends", rows(&b.epochs)));
        }
        out
    }

    pub fn net_inputs(&self) -> Option<Vec<NetInputRow>> {
        let b = self.backward.as_ref()?;
        Some(
            self.trace
                .epochs
                .iter()
                .zip(b)
                .map(|(f, b)| {
                    let rec = b.recovered.as_ref().map(|(dx, p)| (&dx.0, p));
                    NetInputRow::assemble(&Vec15::zeros(), f.p_plus.matrix(), rec)
                })
                .collect(),
        )
    }
}

/// Burn-in before PCI is summarized, seconds.
pub const PCI_BURN_IN: f64 = 5.0;

const AXIS_KEYS: [&str; 9] = ["p_N", "p_E", "p_D", "v_N", "v_E", "v_D", "phi", "theta", "psi"];

/// Accuracy and consistency metrics of one estimate against truth.
pub fn estimate_metrics(rows: &[EstimateRow], truth: &[NominalState]) -> Result<Value> {
    let est: Vec<NominalState> = rows.iter().map(|r| r.state).collect();
    let errs = metrics::nav_errors(&est, truth)?;
    let p = metrics::rmse(&errs.pos)?;
    let v = metrics::rmse(&errs.vel)?;
    let a = metrics::rmse(&errs.att)?;
    let mut rmse = Map::new();
    for (key, val) in AXIS_KEYS.iter().zip(p.axes.iter().chain(&v.axes).chain(&a.axes)) {
        rmse.insert(key.to_string(), json!(val));
    }
    let mut coverage = Map::new();
    for (i, key) in AXIS_KEYS[..3].iter().enumerate() {
        let e: Vec<f64> = errs.pos.iter().map(|x| x[i]).collect();
        let var: Vec<f64> = rows
            .iter()
            .map(|r| {
                let m = geo::metres_per_unit(&r.state.pos);
                r.cov_diag[i] * m[i] * m[i]
            })
            .collect();
        coverage.insert(key.to_string(), json!(metrics::sigma_coverage(&e, &var, 2.0)?));
    }
    Ok(json!({
        "rmse": rmse,
        "horizontal_rmse": metrics::horizontal_rmse(&errs.pos)?,
        "mean_horizontal_error": metrics::mean_horizontal_error(&errs.pos)?,
        "coverage_2sigma": coverage,
    }))
}

/// PCI of each smoother against the forward filter, per epoch.
pub fn pci_series(art: &RunArtifacts) -> Result<Vec<(&'static str, Vec<f64>)>> {
    let reference: Vec<f64> = art.trace.epochs.iter().map(|e| e.p_plus.trace()).collect();
    let mut out = Vec::new();
    for (name, rows) in art.estimates().into_iter().skip(1) {
        let test: Vec<f64> = rows.iter().map(|r| r.cov_diag.sum()).collect();
        out.push((name, metrics::pci(&reference, &test)?));
    }
    Ok(out)
}

pub fn summarize(ds: &Dataset, art: &RunArtifacts) -> Result<Value> {
    let truth = ds.aligned_truth();
    let times = art.trace.times();
    let mut summary = Map::new();
    summary.insert("epochs".into(), json!(art.trace.len()));
    summary.insert("gnss_fixes".into(), json!(ds.gnss.len()));
    let mut per = Map::new();
    for (name, rows) in art.estimates() {
        let mut entry = match &truth {
            Some(t) => estimate_metrics(&rows, t)?,
            None => json!({}),
        };
        entry["mean_covariance_trace"] = json!(rows.iter().map(|r| r.cov_diag.sum()).sum::<f64>() / rows.len() as f64);
        per.insert(name.into(), entry);
    }
    for (name, series) in pci_series(art)? {
        let after: Vec<f64> = series.iter().zip(&times).filter(|(_, &t)| t - times[0] >= PCI_BURN_IN).map(|(p, _)| *p).collect();
        let entry = per.get_mut(name).expect("estimator entry");
        entry["pci_min_after_burn_in"] = json!(after.iter().cloned().fold(f64::INFINITY, f64::min));
        entry["pci_mean"] = json!(series.iter().sum::<f64>() / series.len() as f64);
    }
    summary.insert("estimators".into(), Value::Object(per));
    Ok(Value::Object(summary))
}

fn plot_origin(ds: &Dataset) -> crate::types::Geodetic {
    match ds.truth.as_ref().and_then(|t| t.first()) {
        Some(t) => t.state.pos,
        None => ds.gnss[0].pos,
    }
}

/// Writes estimates, plot data, PCI series and the summary into `dir`.
pub fn write_outputs(dir: &Path, ds: &Dataset, art: &RunArtifacts, summary: &Value, net_inputs: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let estimates = art.estimates();
    for (name, rows) in &estimates {
        io::write_estimates_csv(&dir.join(format!("{name}.csv")), rows)?;
    }

    let origin = plot_origin(ds);
    let mut header = vec!["t".to_string()];
    let truth = ds.aligned_truth();
    if truth.is_some() {
        header.extend(["truth_n".into(), "truth_e".into()]);
    }
    for (name, _) in &estimates {
        header.extend([format!("{name}_n"), format!("{name}_e")]);
    }
    let mut rows = Vec::with_capacity(art.trace.len());
    for k in 0..art.trace.len() {
        let mut row = vec![art.trace.epochs[k].t];
        if let Some(t) = &truth {
            let n = geo::geo_to_ned(&t[k].pos, &origin)?;
            row.extend([n.x, n.y]);
        }
        for (_, est) in &estimates {
            let n = geo::geo_to_ned(&est[k].state.pos, &origin)?;
            row.extend([n.x, n.y]);
        }
        rows.push(row);
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    io::write_columns(&dir.join("trajectory_2d.csv"), &header_refs, rows.into_iter())?;

    let gnss_rows: Vec<Vec<f64>> = ds
        .gnss
        .iter()
        .map(|f| geo::geo_to_ned(&f.pos, &origin).map(|n| vec![f.t, n.x, n.y]))
        .collect::<Result<_>>()?;
    io::write_columns(&dir.join("gnss_2d.csv"), &["t", "n", "e"], gnss_rows.into_iter())?;

    let pci = pci_series(art)?;
    if !pci.is_empty() {
        let mut header = vec!["t"];
        header.extend(pci.iter().map(|(n, _)| *n));
        let rows = (0..art.trace.len()).map(|k| {
            let mut r = vec![art.trace.epochs[k].t];
            r.extend(pci.iter().map(|(_, s)| s[k]));
            r
        });
        io::write_columns(&dir.join("pci.csv"), &header, rows)?;
    }

    if let Some(b) = &art.blends {
        io::write_correction_records(&dir.join("records.csv"), &b.records)?;
    }
    if net_inputs {
        if let Some(inputs) = art.net_inputs() {
            io::write_net_inputs(&dir.join("net_inputs.csv"), &art.trace.times(), &inputs)?;
        }
    }
    let text = serde_json::to_string_pretty(summary).map_err(|e| NavError::Argument(e.to_string()))?;
    std::fs::write(dir.join("summary.json"), text + "\n")?;
    Ok(())
}

fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::write_imu_csv(&dir.join("imu.csv"), &ds.imu)?;
    io::write_gnss_csv(&dir.join("gnss.csv"), &ds.gnss)?;
    if let Some(t) = &ds.truth {
        io::write_truth_csv(&dir.join("truth.csv"), t)?;
    }
    Ok(())
}

fn run_one(cfg: &RunConfig, dir: &Path, which: Estimators) -> StageResult<Value> {
    let ds = if cfg.paths.imu.is_some() {
        load(&cfg.paths).stage("ingest")?
    } else {
        simulate(&cfg.trajectory, &cfg.sensors).stage("simulate")?
    };
    let started = std::time::Instant::now();
    let art = process(&ds, cfg, which)?;
    log::info!("estimation over {} epochs took {:.2?}", art.trace.len(), started.elapsed());
    let summary = summarize(&ds, &art).stage("metrics")?;
    if cfg.paths.imu.is_none() {
        write_dataset(dir, &ds).stage("output")?;
    }
    write_outputs(dir, &ds, &art, &summary, cfg.export_net_inputs && which.blends).stage("output")?;
    Ok(summary)
}

/// Runs the configured mode and returns the summary that was written.
pub fn run_pipeline(cfg: &RunConfig) -> StageResult<Value> {
    cfg.validate().stage("config")?;
    let mut cfg = cfg.clone();
    cfg.sensors.seed = cfg.seed;
    match cfg.mode {
        Mode::Simulate => {
            let ds = simulate(&cfg.trajectory, &cfg.sensors).stage("simulate")?;
            write_dataset(&cfg.out_dir, &ds).stage("output")?;
            Ok(json!({ "epochs": ds.imu.len(), "gnss_fixes": ds.gnss.len() }))
        }
        Mode::MotivationStudy => {
            let dir = cfg.out_dir.clone();
            let dir_unit = Vector3::from_column_slice(&cfg.study.direction);
            if !(dir_unit.norm() > 0.0) {
                return Err(NavError::Config("study.direction must be non-zero".into())).stage("config");
            }
            let dir_unit = dir_unit.normalize();
            let mut runs = Map::new();
            for &mu in &cfg.study.mus {
                let mut run = cfg.clone();
                run.paths = Paths::default();
                run.sensors.gnss_std = cfg.study.gnss_std;
                let bias = dir_unit * mu;
                run.sensors.gnss_mu = [bias.x, bias.y, bias.z];
                let name = format!("mu_{mu:.1}");
                let summary = run_one(&run, &dir.join(&name), Estimators::for_mode(Mode::MotivationStudy))?;
                runs.insert(name, summary);
            }
            let summary = json!({ "runs": runs });
            let text = serde_json::to_string_pretty(&summary).expect("serializable summary");
            std::fs::write(dir.join("summary.json"), text + "\n").map_err(NavError::from).stage("output")?;
            Ok(summary)
        }
        mode => run_one(&cfg, &cfg.out_dir, Estimators::for_mode(mode)),
    }
}

#![allow(dead_code)]

use blends_core::pipeline::{self, Dataset, Estimators, RunArtifacts, RunConfig};
use blends_core::NominalState;

/// Study configuration shortened to `duration` seconds.
pub fn config(duration: f64, mu: f64, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::motivation_study();
    cfg.seed = seed;
    cfg.sensors.seed = seed;
    cfg.trajectory.duration = duration;
    cfg.sensors.gnss_mu = [mu, 0.0, 0.0];
    cfg
}

pub fn run(cfg: &RunConfig, which: Estimators) -> (Dataset, RunArtifacts, Vec<NominalState>) {
    let ds = pipeline::simulate(&cfg.trajectory, &cfg.sensors).unwrap();
    let art = pipeline::process(&ds, cfg, which).unwrap();
    let truth = ds.aligned_truth().unwrap();
    (ds, art, truth)
}

pub fn all() -> Estimators {
    Estimators { tfs: true, rtss: true, blends: false }
}

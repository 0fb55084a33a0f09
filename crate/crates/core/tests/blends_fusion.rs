mod common;

use blends_core::blends::{self, BlendsConfig, CorrectionProvider, FileProvider, OracleProvider, Window, ZeroProvider};
use blends_core::linalg::Vec15;
use blends_core::pipeline::Estimators;
use blends_core::types::{BoundSchedule, CorrectionRecord};
use blends_core::{metrics, NavError, NominalState};

fn wide_schedule() -> BoundSchedule {
    let mut m = BoundSchedule::mobile_robot().m_wide;
    m[0] = 1e-6;
    m[1] = 1e-6;
    BoundSchedule::constant(m)
}

fn tfs_only() -> Estimators {
    Estimators { tfs: true, ..Default::default() }
}

#[test]
fn oracle_removes_most_of_a_known_bias() {
    let cfg = common::config(60.0, 1.5, 31);
    let (ds, art, truth) = common::run(&cfg, tfs_only());
    let schedule = wide_schedule();
    let bcfg = BlendsConfig { schedule: schedule.clone(), ..Default::default() };
    let mut oracle = OracleProvider::new(ds.gnss_bias.unwrap(), &schedule, bcfg.final_epoch);
    let out = blends::run_blends(&art.trace, art.backward.as_ref().unwrap(), &mut oracle, &bcfg).unwrap();
    let est: Vec<NominalState> = out.epochs.iter().map(|e| e.x_s).collect();
    let e = metrics::nav_errors(&est, &truth).unwrap();
    let m = metrics::mean_horizontal_error(&e.pos).unwrap();
    assert!(m < 0.3, "mean horizontal error {m}");
}

#[test]
fn zero_provider_reproduces_the_two_filter_smoother() {
    let cfg = common::config(30.0, 3.0, 32);
    let (_, art, _) = common::run(&cfg, tfs_only());
    let out = blends::run_blends(&art.trace, art.backward.as_ref().unwrap(), &mut ZeroProvider, &BlendsConfig::default())
        .unwrap();
    for (b, t) in out.epochs.iter().zip(art.tfs.as_ref().unwrap()) {
        assert_eq!(b.dx_s, t.dx_s);
        assert_eq!(b.x_s, t.x_s);
    }
    assert!(out.records.iter().all(|r| *r == CorrectionRecord::identity(r.t)));
}

#[test]
fn file_provider_replays_recorded_corrections() {
    let cfg = common::config(10.0, 1.5, 33);
    let (ds, art, _) = common::run(&cfg, tfs_only());
    let schedule = wide_schedule();
    let bcfg = BlendsConfig { schedule: schedule.clone(), ..Default::default() };
    let back = art.backward.as_ref().unwrap();
    let mut oracle = OracleProvider::new(ds.gnss_bias.unwrap(), &schedule, bcfg.final_epoch);
    let first = blends::run_blends(&art.trace, back, &mut oracle, &bcfg).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.csv");
    blends_core::io::write_correction_records(&path, &first.records).unwrap();
    let records = blends_core::io::read_correction_records(&path).unwrap();
    let mut file = FileProvider::new(records);
    let second = blends::run_blends(&art.trace, back, &mut file, &bcfg).unwrap();
    for (a, b) in first.epochs.iter().zip(&second.epochs) {
        assert_eq!(a.x_s, b.x_s);
        assert_eq!(a.p_s, b.p_s);
    }
}

struct Overshoot;

impl CorrectionProvider for Overshoot {
    fn corrections(&mut self, window: &Window<'_>) -> blends_core::Result<Vec<CorrectionRecord>> {
        Ok(window
            .times
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let mut r = CorrectionRecord::identity(t);
                if window.start + i == 170 {
                    r.c[3] = 10.0;
                }
                r
            })
            .collect())
    }
}

#[test]
fn out_of_bound_corrections_are_provider_errors() {
    let cfg = common::config(3.0, 0.0, 34);
    let (_, art, _) = common::run(&cfg, tfs_only());
    let err = blends::run_blends(&art.trace, art.backward.as_ref().unwrap(), &mut Overshoot, &BlendsConfig::default())
        .unwrap_err();
    match err {
        NavError::Provider { epoch, .. } => assert_eq!(epoch, 170),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn bounded_corrections_never_exceed_the_schedule() {
    let s = BoundSchedule::mobile_robot();
    for epoch in [0.0, 200.0, 500.0, 1000.0, 5000.0] {
        let m = s.bound(epoch);
        for scale in [0.1, 1.0, 30.0, 1e6] {
            let c = blends::bounded_correction(&Vec15::from_fn(|i, _| if i % 2 == 0 { scale } else { -scale }), &m);
            assert!((0..15).all(|i| c[i].abs() <= m[i]));
        }
    }
    assert_eq!(s.bound(1000.0), Vec15::from_column_slice(&s.m_base));
    assert_eq!(s.bound(0.0), Vec15::from_column_slice(&s.m_wide));
}

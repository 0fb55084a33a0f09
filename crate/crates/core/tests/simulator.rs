use blends_core::sim::{self, Pattern, SensorNoiseSpec, TrajectorySpec};
use blends_core::{geo, metrics};
use nalgebra::Vector3;

fn spec(pattern: Pattern, duration: f64) -> TrajectorySpec {
    TrajectorySpec { pattern, duration, ..TrajectorySpec::default() }
}

#[test]
fn circle_has_the_expected_centripetal_acceleration() {
    let t = spec(Pattern::Circle, 60.0);
    let expected = t.speed * t.speed / t.radius;
    for k in 1..50 {
        let a = sim::truth_acceleration(&t, k as f64);
        let horiz = a.x.hypot(a.y);
        assert!((horiz - expected).abs() < 0.01 * expected, "t = {k}: {horiz}");
    }
}

#[test]
fn gyro_noise_has_the_configured_spread() {
    let t = spec(Pattern::Lawnmower, 100.0);
    let truth = sim::generate_truth(&t, 0.01).unwrap();
    let clean = sim::synthesize_imu(&truth, &SensorNoiseSpec { gyro_std: 0.0, accel_std: 0.0, ..Default::default() }).unwrap();
    let noisy = sim::synthesize_imu(&truth, &SensorNoiseSpec::default()).unwrap();
    let d: Vec<f64> = noisy.iter().zip(&clean).map(|(a, b)| a.w_b.x - b.w_b.x).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!((std - 0.0316).abs() < 0.05 * 0.0316, "std {std}");
    let lag1 = d.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / (n * std * std);
    assert!(lag1.abs() < 0.05, "lag-1 autocorrelation {lag1}");
}

#[test]
fn same_seed_same_data() {
    let t = spec(Pattern::Lawnmower, 20.0);
    let truth = sim::generate_truth(&t, 0.01).unwrap();
    let n = SensorNoiseSpec { seed: 42, ..Default::default() };
    assert_eq!(sim::synthesize_imu(&truth, &n).unwrap(), sim::synthesize_imu(&truth, &n).unwrap());
    assert_eq!(sim::synthesize_gnss(&truth, &n).unwrap(), sim::synthesize_gnss(&truth, &n).unwrap());
    let other = SensorNoiseSpec { seed: 43, ..Default::default() };
    assert_ne!(sim::synthesize_imu(&truth, &n).unwrap(), sim::synthesize_imu(&truth, &other).unwrap());
}

#[test]
fn gnss_errors_are_centred_on_the_bias() {
    let t = spec(Pattern::Lawnmower, 400.0);
    let truth = sim::generate_truth(&t, 0.01).unwrap();
    let n = SensorNoiseSpec { gnss_mu: [1.5, -0.5, 0.25], seed: 5, ..Default::default() };
    let fixes = sim::synthesize_gnss(&truth, &n).unwrap();
    assert_eq!(fixes.len(), 4001);
    let mut sum = Vector3::zeros();
    for f in &fixes {
        let k = (f.t * 100.0).round() as usize;
        sum += geo::geo_to_ned(&f.pos, &truth[k].state.pos).unwrap();
        assert!((f.r_diag.x - 0.25).abs() < 1e-12);
    }
    let mean = sum / fixes.len() as f64;
    // σ/√N ≈ 0.008 m; allow four of those.
    assert!((mean - Vector3::new(1.5, -0.5, 0.25)).amax() < 0.032, "{mean:?}");
}

#[test]
fn every_pattern_is_kinematically_consistent() {
    for p in [Pattern::Lawnmower, Pattern::Square, Pattern::Circle, Pattern::Sine, Pattern::Zigzag, Pattern::Infinity] {
        let t = spec(p, 60.0);
        let truth = sim::generate_truth(&t, 0.01).unwrap();
        for w in truth.windows(2).step_by(37) {
            let dn = geo::geo_to_ned(&w[1].state.pos, &w[0].state.pos).unwrap();
            let v = (w[0].state.vel_ned + w[1].state.vel_ned) * 0.5;
            assert!((dn - v * 0.01).norm() < 1e-6, "{p:?} at t = {}", w[0].t);
            assert!((w[0].state.vel_ned.norm() - t.speed).abs() < 1e-6 || p == Pattern::Infinity || p == Pattern::Sine);
        }
        let yaw_steps = truth.windows(2).map(|w| metrics::wrap_angle(w[1].state.euler().z - w[0].state.euler().z).abs());
        assert!(yaw_steps.fold(0.0, f64::max) < 0.05, "{p:?} heading jumps");
    }
}

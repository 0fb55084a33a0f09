//! Ground-truth trajectories and synthetic IMU/GNSS streams.
//!
//! Truth is generated in a local NED frame around an origin, then
//! integrated to geodetic position with the same trapezoid rule the
//! mechanization uses. The IMU synthesis inverts the mechanization step
//! exactly, so noiseless samples reproduce the truth to rounding.

use std::f64::consts::{PI, TAU};

use nalgebra::{Rotation3, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::geo;
use crate::linalg;
use crate::mech;
use crate::types::{Geodetic, GnssFix, ImuSample, NominalState};

/// Milli-g to m/s².
pub const MG: f64 = geo::GRAVITY * 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    Lawnmower,
    Square,
    Circle,
    Sine,
    Zigzag,
    Infinity,
}

impl std::str::FromStr for Pattern {
    type Err = NavError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lawnmower" => Pattern::Lawnmower,
            "square" => Pattern::Square,
            "circle" => Pattern::Circle,
            "sine" => Pattern::Sine,
            "zigzag" => Pattern::Zigzag,
            "infinity" => Pattern::Infinity,
            other => return Err(NavError::Argument(format!("unsupported trajectory pattern '{other}'"))),
        })
    }
}

/// Trajectory geometry. Lengths in metres, speed in m/s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectorySpec {
    pub pattern: Pattern,
    pub duration: f64,
    pub speed: f64,
    /// Lawnmower leg extent, square side, zigzag leg.
    pub leg_length: f64,
    /// Lawnmower track spacing; the end turns are semicircles of half this.
    pub spacing: f64,
    /// Corner arc radius for square and zigzag.
    pub corner_radius: f64,
    /// Circle radius and infinity half-width.
    pub radius: f64,
    /// Sine cross-track amplitude and along-track wavelength.
    pub amplitude: f64,
    pub wavelength: f64,
    pub origin: Geodetic,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec {
            pattern: Pattern::Lawnmower,
            duration: 400.0,
            speed: 2.0,
            leg_length: 100.0,
            spacing: 20.0,
            corner_radius: 5.0,
            radius: 30.0,
            amplitude: 10.0,
            wavelength: 50.0,
            origin: Geodetic::new(32f64.to_radians(), 35f64.to_radians(), 10.0),
        }
    }
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("duration", self.duration),
            ("speed", self.speed),
            ("leg_length", self.leg_length),
            ("spacing", self.spacing),
            ("corner_radius", self.corner_radius),
            ("radius", self.radius),
            ("amplitude", self.amplitude),
            ("wavelength", self.wavelength),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(NavError::Argument(format!("trajectory {name} must be positive, got {v}")));
            }
        }
        if self.pattern == Pattern::Lawnmower && self.leg_length < self.spacing {
            return Err(NavError::Argument("lawnmower leg_length must be at least the spacing".into()));
        }
        if matches!(self.pattern, Pattern::Square | Pattern::Zigzag) && self.leg_length <= 2.0 * self.corner_radius {
            return Err(NavError::Argument("leg_length must exceed twice the corner radius".into()));
        }
        Ok(())
    }
}

/// IMU and GNSS error model and rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorNoiseSpec {
    pub gyro_std: f64,
    pub accel_std: f64,
    /// Constant GNSS position bias in NED metres.
    pub gnss_mu: [f64; 3],
    pub gnss_std: f64,
    pub imu_rate: f64,
    pub gnss_rate: f64,
    pub seed: u64,
    /// Random generator; only `chacha20` is implemented.
    pub rng: String,
}

impl Default for SensorNoiseSpec {
    fn default() -> Self {
        SensorNoiseSpec {
            gyro_std: 0.0316,
            accel_std: 32.2 * MG,
            gnss_mu: [0.0; 3],
            gnss_std: 0.5,
            imu_rate: 100.0,
            gnss_rate: 10.0,
            seed: 0,
            rng: "chacha20".into(),
        }
    }
}

/// Floor on reported GNSS variance so that a noiseless configuration still
/// yields an invertible measurement covariance.
pub const MIN_GNSS_VARIANCE: f64 = 1e-6;

impl SensorNoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.imu_rate > 0.0 && self.gnss_rate > 0.0) {
            return Err(NavError::Argument("sensor rates must be positive".into()));
        }
        if self.gnss_rate > self.imu_rate {
            return Err(NavError::Argument("GNSS rate cannot exceed IMU rate".into()));
        }
        if !(self.gyro_std >= 0.0 && self.accel_std >= 0.0 && self.gnss_std >= 0.0) {
            return Err(NavError::Argument("noise standard deviations must be non-negative".into()));
        }
        if self.rng != "chacha20" {
            return Err(NavError::Argument(format!("unsupported rng '{}'", self.rng)));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// One truth sample. `ned` is the analytic local position relative to the
/// trajectory origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub state: NominalState,
    pub ned: Vector3<f64>,
}

#[derive(Clone, Copy, Debug)]
enum Segment {
    Line { start: Vector2<f64>, heading: f64, length: f64 },
    /// `sweep` is signed: positive turns clockwise seen from above (right).
    Arc { center: Vector2<f64>, radius: f64, start_angle: f64, sweep: f64 },
}

impl Segment {
    fn length(&self) -> f64 {
        match *self {
            Segment::Line { length, .. } => length,
            Segment::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    /// Position, heading and signed curvature at arc length `s`.
    fn eval(&self, s: f64) -> (Vector2<f64>, f64, f64) {
        match *self {
            Segment::Line { start, heading, .. } => {
                (start + Vector2::new(heading.cos(), heading.sin()) * s, heading, 0.0)
            }
            Segment::Arc { center, radius, start_angle, sweep } => {
                let dir = sweep.signum();
                let angle = start_angle + dir * s / radius;
                let pos = center + Vector2::new(angle.cos(), angle.sin()) * radius;
                (pos, angle + dir * PI / 2.0, dir / radius)
            }
        }
    }

    fn end(&self) -> (Vector2<f64>, f64) {
        let (p, h, _) = self.eval(self.length());
        (p, h)
    }
}

/// Piecewise line/arc path walked at constant speed.
#[derive(Clone, Debug, Default)]
struct SegmentPath {
    segments: Vec<Segment>,
    cursor: (Vector2<f64>, f64),
}

impl SegmentPath {
    fn new(start: Vector2<f64>, heading: f64) -> Self {
        SegmentPath { segments: Vec::new(), cursor: (start, heading) }
    }

    fn line(&mut self, length: f64) {
        let (start, heading) = self.cursor;
        self.push(Segment::Line { start, heading, length });
    }

    /// Turn through `angle` (positive right) on a circle of `radius`.
    fn turn(&mut self, radius: f64, angle: f64) {
        let (p, heading) = self.cursor;
        let dir = angle.signum();
        let to_center = heading + dir * PI / 2.0;
        let center = p + Vector2::new(to_center.cos(), to_center.sin()) * radius;
        let start_angle = to_center + PI;
        self.push(Segment::Arc { center, radius, start_angle, sweep: angle });
    }

    fn push(&mut self, seg: Segment) {
        self.cursor = seg.end();
        self.segments.push(seg);
    }

    fn total(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    fn eval(&self, mut s: f64) -> (Vector2<f64>, f64, f64) {
        for seg in &self.segments {
            let len = seg.length();
            if s <= len {
                return seg.eval(s);
            }
            s -= len;
        }
        let last = self.segments.last().expect("non-empty path");
        last.eval(last.length() + s)
    }
}

fn lawnmower(spec: &TrajectorySpec, needed: f64) -> SegmentPath {
    let r = spec.spacing / 2.0;
    let mut path = SegmentPath::new(Vector2::zeros(), 0.0);
    path.line(spec.leg_length - r);
    let mut right = true;
    while path.total() < needed {
        path.turn(r, if right { PI } else { -PI });
        path.line(spec.leg_length - 2.0 * r);
        right = !right;
    }
    path
}

fn square(spec: &TrajectorySpec, needed: f64) -> SegmentPath {
    let rc = spec.corner_radius;
    let mut path = SegmentPath::new(Vector2::new(rc, 0.0), 0.0);
    while path.total() < needed {
        path.line(spec.leg_length - 2.0 * rc);
        path.turn(rc, PI / 2.0);
    }
    path
}

fn circle(spec: &TrajectorySpec, needed: f64) -> SegmentPath {
    let mut path = SegmentPath::new(Vector2::zeros(), 0.0);
    while path.total() < needed {
        path.turn(spec.radius, TAU);
    }
    path
}

fn zigzag(spec: &TrajectorySpec, needed: f64) -> SegmentPath {
    let rc = spec.corner_radius;
    // a 90° corner eats rc·tan(45°) = rc of each adjoining leg
    let mut path = SegmentPath::new(Vector2::zeros(), PI / 4.0);
    path.line(spec.leg_length - rc);
    let mut left = true;
    while path.total() < needed {
        path.turn(rc, if left { -PI / 2.0 } else { PI / 2.0 });
        path.line(spec.leg_length - 2.0 * rc);
        left = !left;
    }
    path
}

/// Horizontal position, velocity and acceleration at time `t`.
type Kinematics = (Vector2<f64>, Vector2<f64>, Vector2<f64>);

fn kinematics(spec: &TrajectorySpec, path: Option<&SegmentPath>, t: f64) -> Kinematics {
    let v = spec.speed;
    match spec.pattern {
        Pattern::Sine => {
            let k = TAU / spec.wavelength;
            let a = spec.amplitude;
            let phase = k * v * t;
            (
                Vector2::new(v * t, a * phase.sin()),
                Vector2::new(v, a * k * v * phase.cos()),
                Vector2::new(0.0, -a * k * k * v * v * phase.sin()),
            )
        }
        Pattern::Infinity => {
            let r = spec.radius;
            let w = v / r;
            let (s1, c1) = (w * t).sin_cos();
            let (s2, c2) = (2.0 * w * t).sin_cos();
            (
                Vector2::new(r * s1, 0.5 * r * s2),
                Vector2::new(r * w * c1, r * w * c2),
                Vector2::new(-r * w * w * s1, -2.0 * r * w * w * s2),
            )
        }
        _ => {
            let path = path.expect("segment path for piecewise patterns");
            let (p, heading, kappa) = path.eval(v * t);
            let dir = Vector2::new(heading.cos(), heading.sin());
            let normal = Vector2::new(-heading.sin(), heading.cos());
            (p, dir * v, normal * (v * v * kappa))
        }
    }
}

/// Sample the truth trajectory every `dt` seconds over `spec.duration`.
pub fn generate_truth(spec: &TrajectorySpec, dt: f64) -> Result<Vec<TruthSample>> {
    spec.validate()?;
    if !(dt > 0.0) {
        return Err(NavError::Argument(format!("sample period must be positive, got {dt}")));
    }
    let steps = (spec.duration / dt).round();
    if ((steps * dt) - spec.duration).abs() > 1e-9 * spec.duration.max(1.0) {
        return Err(NavError::Argument(format!("dt {dt} does not divide duration {}", spec.duration)));
    }
    let steps = steps as usize;
    let needed = spec.speed * spec.duration + spec.leg_length;
    let path = match spec.pattern {
        Pattern::Lawnmower => Some(lawnmower(spec, needed)),
        Pattern::Square => Some(square(spec, needed)),
        Pattern::Circle => Some(circle(spec, needed)),
        Pattern::Zigzag => Some(zigzag(spec, needed)),
        Pattern::Sine | Pattern::Infinity => None,
    };

    let mut out = Vec::with_capacity(steps + 1);
    let mut pos = spec.origin;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let (p, v, _) = kinematics(spec, path.as_ref(), t);
        let vel = Vector3::new(v.x, v.y, 0.0);
        if let Some(prev) = out.last() {
            let prev: &TruthSample = prev;
            pos = mech::integrate_position(&prev.state.pos, &prev.state.vel_ned, &vel, dt);
        }
        let heading = v.y.atan2(v.x);
        let att = Rotation3::from_euler_angles(0.0, 0.0, heading);
        out.push(TruthSample {
            t,
            state: NominalState::new(pos, vel, att),
            ned: Vector3::new(p.x, p.y, 0.0),
        });
    }
    Ok(out)
}

/// Analytic NED acceleration of the truth trajectory at `t`.
pub fn truth_acceleration(spec: &TrajectorySpec, t: f64) -> Vector3<f64> {
    let path = match spec.pattern {
        Pattern::Lawnmower => Some(lawnmower(spec, spec.speed * t + spec.leg_length)),
        Pattern::Square => Some(square(spec, spec.speed * t + spec.leg_length)),
        Pattern::Circle => Some(circle(spec, spec.speed * t + spec.leg_length)),
        Pattern::Zigzag => Some(zigzag(spec, spec.speed * t + spec.leg_length)),
        Pattern::Sine | Pattern::Infinity => None,
    };
    let (_, _, a) = kinematics(spec, path.as_ref(), t);
    Vector3::new(a.x, a.y, 0.0)
}

/// Noiseless specific force and angular rate that carry `a` into `b`.
fn ideal_imu(a: &NominalState, b: &NominalState, dt: f64) -> (Vector3<f64>, Vector3<f64>) {
    let c0 = a.att.matrix();
    let w = linalg::log_so3(&(c0.transpose() * b.att.matrix())) / dt;
    let f = c0.transpose() * ((b.vel_ned - a.vel_ned) / dt - geo::gravity_ned());
    (f, w)
}

/// IMU samples at the truth epochs; sample `k` drives the step `k → k+1`.
pub fn synthesize_imu(truth: &[TruthSample], noise: &SensorNoiseSpec) -> Result<Vec<ImuSample>> {
    noise.validate()?;
    if truth.len() < 2 {
        return Err(NavError::Argument("need at least two truth samples".into()));
    }
    let mut rng = noise.rng(0);
    let accel = Normal::new(0.0, noise.accel_std).map_err(|e| NavError::Argument(e.to_string()))?;
    let gyro = Normal::new(0.0, noise.gyro_std).map_err(|e| NavError::Argument(e.to_string()))?;
    let mut out = Vec::with_capacity(truth.len());
    let mut last = (Vector3::zeros(), Vector3::zeros());
    for k in 0..truth.len() {
        if k + 1 < truth.len() {
            last = ideal_imu(&truth[k].state, &truth[k + 1].state, truth[k + 1].t - truth[k].t);
        }
        let (f, w) = last;
        let df = Vector3::from_fn(|_, _| accel.sample(&mut rng));
        let dw = Vector3::from_fn(|_, _| gyro.sample(&mut rng));
        out.push(ImuSample { t: truth[k].t, f_b: f + df, w_b: w + dw });
    }
    Ok(out)
}

/// GNSS fixes at `gnss_rate`, taken at the matching truth epochs.
pub fn synthesize_gnss(truth: &[TruthSample], noise: &SensorNoiseSpec) -> Result<Vec<GnssFix>> {
    noise.validate()?;
    if truth.len() < 2 {
        return Err(NavError::Argument("need at least two truth samples".into()));
    }
    let imu_dt = (truth[truth.len() - 1].t - truth[0].t) / (truth.len() - 1) as f64;
    let stride = ((1.0 / noise.gnss_rate) / imu_dt).round().max(1.0) as usize;
    let mut rng = noise.rng(1);
    let normal = Normal::new(0.0, noise.gnss_std).map_err(|e| NavError::Argument(e.to_string()))?;
    let bias = Vector3::from_column_slice(&noise.gnss_mu);
    let var = (noise.gnss_std * noise.gnss_std).max(MIN_GNSS_VARIANCE);
    truth
        .iter()
        .step_by(stride)
        .map(|s| {
            let offset = bias + Vector3::from_fn(|_, _| normal.sample(&mut rng));
            Ok(GnssFix { t: s.t, pos: geo::ned_to_geo(&offset, &s.state.pos)?, r_diag: Vector3::repeat(var) })
        })
        .collect()
}

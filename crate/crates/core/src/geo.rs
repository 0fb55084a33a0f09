//! WGS-84 radii of curvature and local-tangent NED conversion.

use nalgebra::{Matrix3, Vector3};

use crate::error::{NavError, Result};
use crate::types::Geodetic;

pub const WGS84_A: f64 = 6_378_137.0;
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

/// Standard gravity, applied along +down in NED.
pub const GRAVITY: f64 = 9.806_65;

pub fn gravity_ned() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, GRAVITY)
}

/// Meridian (north-south) radius of curvature.
pub fn meridian_radius(lat: f64) -> f64 {
    let s = lat.sin();
    let w = 1.0 - WGS84_E2 * s * s;
    WGS84_A * (1.0 - WGS84_E2) / (w * w.sqrt())
}

/// Prime-vertical (east-west) radius of curvature.
pub fn transverse_radius(lat: f64) -> f64 {
    let s = lat.sin();
    WGS84_A / (1.0 - WGS84_E2 * s * s).sqrt()
}

/// Metres per radian of latitude and longitude, and metres per metre of
/// altitude, at `p`. Multiplying a (rad, rad, m) position error by these
/// gives (north m, east m, up m).
pub fn metres_per_unit(p: &Geodetic) -> Vector3<f64> {
    Vector3::new(
        meridian_radius(p.lat) + p.alt,
        (transverse_radius(p.lat) + p.alt) * p.lat.cos(),
        1.0,
    )
}

/// `d(lat, lon, alt)/dt = T · v_ned`.
pub fn velocity_to_geodetic_rate(p: &Geodetic) -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(
        1.0 / (meridian_radius(p.lat) + p.alt),
        1.0 / ((transverse_radius(p.lat) + p.alt) * p.lat.cos()),
        -1.0,
    ))
}

fn check_reference(r: &Geodetic) -> Result<()> {
    if !(r.lat.is_finite() && r.lon.is_finite() && r.alt.is_finite()) {
        return Err(NavError::Domain("non-finite reference position".into()));
    }
    if r.lat.abs() >= std::f64::consts::FRAC_PI_2 - 1e-9 {
        return Err(NavError::Domain(format!(
            "reference latitude {} rad is at a pole; east radius is singular",
            r.lat
        )));
    }
    Ok(())
}

/// NED displacement of `p` relative to `reference`, using the radii of
/// curvature evaluated at the reference.
pub fn geo_to_ned(p: &Geodetic, reference: &Geodetic) -> Result<Vector3<f64>> {
    check_reference(reference)?;
    let m = metres_per_unit(reference);
    Ok(Vector3::new(
        (p.lat - reference.lat) * m.x,
        (p.lon - reference.lon) * m.y,
        -(p.alt - reference.alt),
    ))
}

/// Inverse of [`geo_to_ned`].
pub fn ned_to_geo(ned: &Vector3<f64>, reference: &Geodetic) -> Result<Geodetic> {
    check_reference(reference)?;
    let m = metres_per_unit(reference);
    Ok(Geodetic {
        lat: reference.lat + ned.x / m.x,
        lon: reference.lon + ned.y / m.y,
        alt: reference.alt - ned.z,
    })
}

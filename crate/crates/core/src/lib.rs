//! Post-processing INS/GNSS navigation: forward error-state EKF, backward
//! information filter, two-filter and RTS smoothers, bounded learned
//! corrections for smoother fusion, and a trajectory simulator.

pub mod backward;
pub mod blends;
pub mod ekf;
pub mod error;
pub mod geo;
pub mod io;
pub mod linalg;
pub mod mech;
pub mod metrics;
pub mod pipeline;
pub mod sim;
pub mod smoother;
pub mod types;

pub use error::{NavError, Result};
pub use types::{
    BackwardInfo, BoundSchedule, CorrectionRecord, Cov15, ErrorState15, Geodetic, GnssFix, ImuSample, NominalState,
};

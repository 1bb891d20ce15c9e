use serde::{Deserialize, Serialize};

use super::VehicleState;
use crate::error::TrackingError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    pub rmse_angle_deg: f64,
    pub rmse_dist: f64,
    pub rmse_vel: f64,
    /// DT position error along the road, m.
    pub rmse_x: f64,
    /// DT position error across the road, m.
    pub rmse_y: f64,
}

/// Cartesian position of a pose seen from an RSU at `rsu`.
pub fn to_cartesian(rsu: (f64, f64), q: &VehicleState) -> (f64, f64) {
    (rsu.0 + q.distance * q.angle.cos(), rsu.1 + q.distance * q.angle.sin())
}

pub fn tracking_metrics(
    estimates: &[VehicleState],
    truths: &[VehicleState],
    rsu: (f64, f64),
) -> Result<TrackingMetrics, TrackingError> {
    if estimates.len() != truths.len() {
        return Err(TrackingError::LengthMismatch {
            estimates: estimates.len(),
            truths: truths.len(),
        });
    }
    if estimates.is_empty() {
        return Err(TrackingError::Empty);
    }
    let n = estimates.len() as f64;
    let mut sq = [0.0f64; 5];
    for (e, t) in estimates.iter().zip(truths) {
        let (ex, ey) = to_cartesian(rsu, e);
        let (tx, ty) = to_cartesian(rsu, t);
        sq[0] += (e.angle - t.angle).to_degrees().powi(2);
        sq[1] += (e.distance - t.distance).powi(2);
        sq[2] += (e.velocity - t.velocity).powi(2);
        sq[3] += (ex - tx).powi(2);
        sq[4] += (ey - ty).powi(2);
    }
    let r = |s: f64| (s / n).sqrt();
    Ok(TrackingMetrics {
        rmse_angle_deg: r(sq[0]),
        rmse_dist: r(sq[1]),
        rmse_vel: r(sq[2]),
        rmse_x: r(sq[3]),
        rmse_y: r(sq[4]),
    })
}

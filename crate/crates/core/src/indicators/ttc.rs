use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// One-dimensional time-to-collision from a bumper-to-bumper gap.
pub fn ttc_1d(gap: f64, v_follower: f64, v_leader: f64) -> Result<f64> {
    if gap < 0.0 {
        return Err(Error::Domain(format!("negative gap {gap}: vehicles overlap")));
    }
    let closing = v_follower - v_leader;
    Ok(if closing > 0.0 { gap / closing } else { f64::INFINITY })
}

/// Range rate between two points: derivative of their Euclidean distance.
pub fn range_rate(p_i: Vec2, v_i: Vec2, p_j: Vec2, v_j: Vec2) -> Result<(f64, f64)> {
    let dp = p_i - p_j;
    let d = dp.norm();
    if !(d > 0.0) {
        return Err(Error::Domain("coincident positions".into()));
    }
    Ok((d, dp.dot(v_i - v_j) / d))
}

/// Planar time-to-collision of two center points with constant velocities:
/// `-d / d'` when approaching, `+inf` otherwise.
pub fn ttc_2d(p_i: Vec2, v_i: Vec2, p_j: Vec2, v_j: Vec2) -> Result<f64> {
    let (d, ddot) = range_rate(p_i, v_i, p_j, v_j)?;
    Ok(if ddot < 0.0 { -d / ddot } else { f64::INFINITY })
}

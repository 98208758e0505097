use crate::geometry::Vec2;

use super::Track;

/// Fills velocity and acceleration from positions by finite differences.
///
/// Velocity uses central differences inside the track and one-sided differences at
/// both ends. Acceleration uses the second difference, with the stencil shifted
/// inward at the ends. Columns the dataset supplied are kept. A single-frame track
/// is left untouched and flagged as incomplete. Returns whether anything was filled.
pub fn derive_kinematics(track: &mut Track, timestep: f64) -> bool {
    let n = track.frames.len();
    if n < 2 {
        track.kinematics_incomplete = true;
        return false;
    }
    let p: Vec<Vec2> = track.frames.iter().map(|f| f.center).collect();
    let h = timestep;
    if !track.fields.velocity {
        for i in 0..n {
            let v = if i == 0 {
                (p[1] - p[0]) * (1.0 / h)
            } else if i == n - 1 {
                (p[n - 1] - p[n - 2]) * (1.0 / h)
            } else {
                (p[i + 1] - p[i - 1]) * (0.5 / h)
            };
            track.frames[i].velocity = v;
        }
    }
    if !track.fields.acceleration {
        for i in 0..n {
            let a = if n < 3 {
                Vec2::ZERO
            } else {
                let c = i.clamp(1, n - 2);
                (p[c + 1] - p[c] * 2.0 + p[c - 1]) * (1.0 / (h * h))
            };
            track.frames[i].acceleration = a;
        }
    }
    true
}

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cloudio::{RigidTransform, StampedPose};
use crate::error::{Error, Result};

/// Sensor pose knot. `z` is absolute; `yaw` in radians about +z.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    #[serde(default)]
    pub yaw: f64,
}

impl Waypoint {
    fn pose(&self) -> RigidTransform {
        RigidTransform::from_euler(0.0, 0.0, self.yaw, Vector3::new(self.x, self.y, self.z))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub waypoints: Vec<Waypoint>,
    /// m/s
    #[serde(default = "default_speed")]
    pub speed: f64,
    /// Scans per second.
    #[serde(default = "default_rate")]
    pub rate: f64,
    /// Scans taken at the first waypoint before moving (at least one is always taken).
    #[serde(default = "default_dwell")]
    pub dwell_ticks: usize,
}

fn default_speed() -> f64 {
    1.0
}

fn default_rate() -> f64 {
    10.0
}

fn default_dwell() -> usize {
    10
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(Error::Config {
                field: format!("trajectory.{field}"),
                message: message.into(),
            })
        };
        if self.waypoints.is_empty() {
            return bad("waypoints", "need at least one waypoint");
        }
        if !(self.speed > 0.0) || !self.speed.is_finite() {
            return bad("speed", "must be positive");
        }
        if !(self.rate > 0.0) || !self.rate.is_finite() {
            return bad("rate", "must be positive");
        }
        if self.waypoints.iter().any(|w| ![w.x, w.y, w.z, w.yaw].iter().all(|v| v.is_finite())) {
            return bad("waypoints", "coordinates must be finite");
        }
        Ok(())
    }

    /// Ground-truth poses, one per tick at `k / rate` seconds.
    ///
    /// The dwell comes first; then the sensor advances `speed / rate` meters of
    /// path per tick, with linear position and shortest-arc yaw interpolation
    /// inside each segment, stopping at the last tick that does not overshoot.
    pub fn poses(&self) -> Result<Vec<StampedPose>> {
        self.validate()?;
        let mut poses: Vec<RigidTransform> = vec![self.waypoints[0].pose(); self.dwell_ticks.max(1)];
        let lengths: Vec<f64> = self
            .waypoints
            .windows(2)
            .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y).hypot(w[1].z - w[0].z))
            .collect();
        let total: f64 = lengths.iter().sum();
        let ds = self.speed / self.rate;
        let steps = (total / ds + 1e-9).floor() as usize;
        let mut seg = 0;
        let mut seg_start = 0.0;
        for k in 1..=steps {
            let s = (k as f64 * ds).min(total);
            while seg + 1 < lengths.len() && s > seg_start + lengths[seg] {
                seg_start += lengths[seg];
                seg += 1;
            }
            let (a, b) = (&self.waypoints[seg], &self.waypoints[seg + 1]);
            let f = if lengths[seg] > 0.0 { ((s - seg_start) / lengths[seg]).clamp(0.0, 1.0) } else { 1.0 };
            let dyaw = (b.yaw - a.yaw + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
            let w = Waypoint {
                x: a.x + f * (b.x - a.x),
                y: a.y + f * (b.y - a.y),
                z: a.z + f * (b.z - a.z),
                yaw: a.yaw + f * dyaw,
            };
            poses.push(w.pose());
        }
        Ok(poses
            .into_iter()
            .enumerate()
            .map(|(k, p)| (k as f64 / self.rate, p))
            .collect())
    }
}

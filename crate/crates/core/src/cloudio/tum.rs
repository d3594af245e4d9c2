use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::RigidTransform;
use crate::error::{Error, Result};

/// A timestamped pose (seconds, map frame).
pub type StampedPose = (f64, RigidTransform);

/// `timestamp tx ty tz qx qy qz qw`, one pose per line.
pub fn format_tum(poses: &[StampedPose]) -> String {
    let mut out = String::new();
    for (t, pose) in poses {
        let q = pose.quaternion();
        let tr = pose.translation();
        out.push_str(&format!(
            "{t} {} {} {} {} {} {} {}\n",
            tr.x, tr.y, tr.z, q.i, q.j, q.k, q.w
        ));
    }
    out
}

pub fn write_tum(path: impl AsRef<Path>, poses: &[StampedPose]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_tum(poses)).map_err(|e| Error::io(path, e))
}

/// Reads a TUM trajectory; `#` comments and blank lines are skipped.
pub fn read_tum(path: impl AsRef<Path>) -> Result<Vec<StampedPose>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut poses = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| parse_err(format!("`{s}`: {e}"))))
            .collect::<Result<_>>()?;
        if v.len() != 8 {
            return Err(parse_err(format!("expected 8 fields, found {}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(parse_err("non-finite value".into()));
        }
        let q = Quaternion::new(v[7], v[4], v[5], v[6]);
        if q.norm() < 1e-12 {
            return Err(parse_err("zero quaternion".into()));
        }
        let rotation = UnitQuaternion::from_quaternion(q);
        poses.push((v[0], RigidTransform::from_rotation(&rotation, Vector3::new(v[1], v[2], v[3]))));
    }
    Ok(poses)
}

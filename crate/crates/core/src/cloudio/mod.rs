//! Point cloud data model, ASCII PLY/PCD I/O, rigid transforms and PCA normals.
//!
//! Coordinates are meters in a right-handed, z-up frame.

mod normals;
mod pcd;
mod ply;
mod transform;
mod tum;

use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

pub use normals::{estimate_normals, EstimatedNormals};
pub use tum::{format_tum, read_tum, write_tum, StampedPose};
pub use transform::{RigidTransform, ROTATION_TOLERANCE};
#[cfg(test)]
pub(crate) use transform::is_rotation;

/// Tolerance on `‖n‖ = 1` for stored normals.
pub const NORMAL_TOLERANCE: f64 = 1e-6;

/// An ordered set of 3D points with optional per-point unit normals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
    normals: Option<Vec<Vector3<f64>>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Result<Self> {
        check_points(&points)?;
        Ok(Self {
            points,
            normals: None,
        })
    }

    pub fn with_normals(points: Vec<Point3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self> {
        check_points(&points)?;
        if normals.len() != points.len() {
            return Err(Error::InvalidInput(format!(
                "{} normals for {} points",
                normals.len(),
                points.len()
            )));
        }
        if let Some(i) = normals
            .iter()
            .position(|n| !n.iter().all(|v| v.is_finite()) || (n.norm() - 1.0).abs() > NORMAL_TOLERANCE)
        {
            return Err(Error::InvalidInput(format!("normal {i} is not unit length")));
        }
        Ok(Self {
            points,
            normals: Some(normals),
        })
    }

    pub(crate) fn from_parts_unchecked(
        points: Vec<Point3<f64>>,
        normals: Option<Vec<Vector3<f64>>>,
    ) -> Self {
        debug_assert!(normals.as_ref().is_none_or(|n| n.len() == points.len()));
        Self { points, normals }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vector3<f64>]> {
        self.normals.as_deref()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    pub fn into_parts(self) -> (Vec<Point3<f64>>, Option<Vec<Vector3<f64>>>) {
        (self.points, self.normals)
    }

    pub fn without_normals(&self) -> PointCloud {
        PointCloud {
            points: self.points.clone(),
            normals: None,
        }
    }

    /// Sub-cloud at the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
        }
    }

    /// Appends `other`. Normals survive only if both sides carry them.
    pub fn extend(&mut self, other: &PointCloud) {
        let keep_normals = (self.is_empty() || self.normals.is_some()) && other.normals.is_some();
        self.normals = if keep_normals {
            let mut n = self.normals.take().unwrap_or_default();
            n.extend_from_slice(other.normals.as_deref().unwrap_or_default());
            Some(n)
        } else {
            None
        };
        self.points.extend_from_slice(&other.points);
    }

    /// Axis-aligned bounds `(min, max)`, or `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }
}

fn check_points(points: &[Point3<f64>]) -> Result<()> {
    match points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
        Some(i) => Err(Error::InvalidInput(format!("point {i} has a non-finite coordinate"))),
        None => Ok(()),
    }
}

/// A sensor-frame scan with its capture time (seconds).
#[derive(Clone, Debug)]
pub struct StampedScan {
    pub timestamp: f64,
    pub cloud: PointCloud,
}

impl StampedScan {
    pub fn new(timestamp: f64, cloud: PointCloud) -> Result<Self> {
        if !timestamp.is_finite() {
            return Err(Error::InvalidInput(format!("scan timestamp {timestamp} is not finite")));
        }
        if cloud.is_empty() {
            return Err(Error::InvalidInput(format!("scan at t={timestamp} is empty")));
        }
        Ok(Self { timestamp, cloud })
    }
}

/// Output point `R·p + t`; normals are rotated only. The input is left untouched.
pub fn apply_transform(cloud: &PointCloud, transform: &RigidTransform) -> PointCloud {
    PointCloud {
        points: cloud
            .points
            .iter()
            .map(|p| transform.transform_point(p))
            .collect(),
        normals: cloud
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|n| transform.transform_vector(n)).collect()),
    }
}

/// Supported on-disk cloud formats (ASCII only).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CloudFormat {
    Ply,
    Pcd,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "ply" => Some(CloudFormat::Ply),
            "pcd" => Some(CloudFormat::Pcd),
            _ => None,
        }
    }
}

/// Reads an ASCII PLY or PCD file, choosing the parser from the file's magic line.
pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(text).map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: "file is not ASCII text (binary clouds are not supported)".into(),
    })?;
    let first = text.lines().next().unwrap_or("").trim();
    if first == "ply" {
        ply::parse(path, &text)
    } else if first.starts_with('#') || first.starts_with("VERSION") || first.starts_with("FIELDS") {
        pcd::parse(path, &text)
    } else {
        match CloudFormat::from_path(path) {
            Some(CloudFormat::Pcd) => pcd::parse(path, &text),
            _ => Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("unrecognized header line `{first}`"),
            }),
        }
    }
}

/// Writes the cloud as ASCII; normals are written iff present.
pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>, format: CloudFormat) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        CloudFormat::Ply => ply::render(cloud),
        CloudFormat::Pcd => pcd::render(cloud),
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_coord(path: &Path, line: usize, token: &str) -> Result<f64> {
    let v: f64 = token.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("cannot parse `{token}` as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("non-finite coordinate `{token}`"),
        });
    }
    Ok(v)
}

/// Writes a float so that it parses back to the same `f64`.
pub(crate) fn fmt_coord(out: &mut String, v: f64) {
    use std::fmt::Write;
    // Display for f64 is the shortest representation that round-trips.
    let _ = write!(out, "{v}");
}

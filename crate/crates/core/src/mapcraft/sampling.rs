use std::collections::BTreeMap;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::cloudio::PointCloud;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniformSamplingParams {
    /// Voxel edge length (meters).
    pub voxel_size: f64,
}

impl Default for UniformSamplingParams {
    fn default() -> Self {
        Self { voxel_size: 0.05 }
    }
}

impl UniformSamplingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size > 0.0) || !self.voxel_size.is_finite() {
            return Err(Error::Config {
                field: "uniform_sampling.voxel_size".into(),
                message: format!("must be positive and finite, got {}", self.voxel_size),
            });
        }
        Ok(())
    }
}

/// Integer voxel coordinates of `p` for a grid anchored at the origin.
pub fn voxel_key(p: &Point3<f64>, voxel_size: f64) -> [i64; 3] {
    [
        (p.x / voxel_size).floor() as i64,
        (p.y / voxel_size).floor() as i64,
        (p.z / voxel_size).floor() as i64,
    ]
}

fn voxel_center(key: &[i64; 3], voxel_size: f64) -> Point3<f64> {
    Point3::new(
        (key[0] as f64 + 0.5) * voxel_size,
        (key[1] as f64 + 0.5) * voxel_size,
        (key[2] as f64 + 0.5) * voxel_size,
    )
}

/// Keeps, per occupied voxel, the input point nearest the voxel center (lowest
/// index on ties). Output is in ascending voxel-key order; normals follow their points.
pub fn uniform_sample(cloud: &PointCloud, params: &UniformSamplingParams) -> Result<PointCloud> {
    params.validate()?;
    let v = params.voxel_size;
    let mut best: BTreeMap<[i64; 3], (f64, usize)> = BTreeMap::new();
    for (i, p) in cloud.points().iter().enumerate() {
        let key = voxel_key(p, v);
        let d2 = (p - voxel_center(&key, v)).norm_squared();
        best.entry(key)
            .and_modify(|slot| {
                if d2 < slot.0 {
                    *slot = (d2, i);
                }
            })
            .or_insert((d2, i));
    }
    let keep: Vec<usize> = best.values().map(|&(_, i)| i).collect();
    Ok(cloud.select(&keep))
}

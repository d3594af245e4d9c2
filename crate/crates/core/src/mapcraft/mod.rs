//! Map de-noising: uniform voxel sampling followed by moving-least-squares smoothing.

mod mls;
mod sampling;

pub use mls::{
    mls_smooth, plane_objective, plane_objective_gradient, weighted_plane_fit, MlsOutput, MlsParams,
    WeightedPlane,
};
pub use sampling::{uniform_sample, voxel_key, UniformSamplingParams};

use crate::cloudio::PointCloud;
use crate::error::Result;

/// `uniform_sample` then `mls_smooth`; output normals are the smoothed surface normals.
pub fn craft_map(cloud: &PointCloud, us: &UniformSamplingParams, mls: &MlsParams) -> Result<MlsOutput> {
    let sampled = uniform_sample(cloud, us)?;
    mls_smooth(&sampled, mls)
}

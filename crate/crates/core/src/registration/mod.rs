//! Rigid registration: closed-form alignment, point-to-point ICP gated by a
//! fitness score, and Gauss-Newton point-to-plane refinement.

mod icp;
mod plane;
mod rigid;

use serde::{Deserialize, Serialize};

use crate::cloudio::RigidTransform;
use crate::error::{Error, Result};

pub use icp::{
    find_correspondences, fitness_score, icp, icp_traced, Correspondence, CorrespondenceSet,
    IcpIteration,
};
pub use plane::{
    apply_increment, associate_planes, fit_local_plane, fit_local_plane_within, point_to_plane_gradient,
    point_to_plane_objective, point_to_plane_refine, LocalPlane, PlaneConstraint,
};
pub use rigid::best_rigid_transform;

/// Iteration and gating parameters shared by [`icp`] and [`point_to_plane_refine`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Meters.
    pub max_correspondence_distance: f64,
    /// Meters.
    pub translation_epsilon: f64,
    /// Radians.
    pub rotation_epsilon: f64,
    /// Mean squared distance (m²) below which an alignment is accepted.
    pub fitness_threshold: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            max_correspondence_distance: 1.0,
            translation_epsilon: 1e-4,
            rotation_epsilon: 1e-4,
            fitness_threshold: 0.01,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("max_iterations", self.max_iterations as f64),
            ("max_correspondence_distance", self.max_correspondence_distance),
            ("translation_epsilon", self.translation_epsilon),
            ("rotation_epsilon", self.rotation_epsilon),
            ("fitness_threshold", self.fitness_threshold),
        ];
        for (field, v) in checks {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config {
                    field: format!("icp.{field}"),
                    message: format!("must be positive, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Local plane association used by point-to-plane refinement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlaneParams {
    /// Map neighbors per plane.
    pub neighbors: usize,
    /// Maximum neighbor-to-plane distance for a valid plane (meters).
    pub max_plane_dist: f64,
    /// Fewer valid planes than this ends refinement unconverged.
    pub min_valid_planes: usize,
}

impl Default for PlaneParams {
    fn default() -> Self {
        Self {
            neighbors: 5,
            max_plane_dist: 0.1,
            min_valid_planes: 10,
        }
    }
}

impl PlaneParams {
    pub fn validate(&self) -> Result<()> {
        if self.neighbors < 3 {
            return Err(Error::Config {
                field: "plane.neighbors".into(),
                message: "need at least 3".into(),
            });
        }
        if !(self.max_plane_dist > 0.0) {
            return Err(Error::Config {
                field: "plane.max_plane_dist".into(),
                message: "must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Outcome of an iterative registration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    /// Mean squared residual (m²); `+∞` when nothing matched.
    pub fitness: f64,
    pub iterations_used: usize,
    pub converged: bool,
}

use nalgebra::Point3;
use rayon::prelude::*;

use super::{best_rigid_transform, IcpParams, IcpResult};
use crate::cloudio::{PointCloud, RigidTransform};
use crate::error::{Error, Result};
use crate::spatial::NeighborSearch;

/// One source→target pairing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub source: usize,
    pub target: usize,
    /// Euclidean distance after transforming the source point (meters).
    pub distance: f64,
}

/// Nearest-neighbor pairs whose distance is within `max_distance`, at most one per
/// source point, ordered by source id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Correspondence>,
    pub max_distance: f64,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Mean squared distance, `+∞` when empty.
    pub fn mean_squared_distance(&self) -> f64 {
        if self.pairs.is_empty() {
            return f64::INFINITY;
        }
        // sequential sum in source order keeps the result thread-count independent
        let sum: f64 = self.pairs.iter().map(|c| c.distance * c.distance).sum();
        sum / self.pairs.len() as f64
    }
}

/// For each `T·p`, the nearest target point if it lies within `max_distance`.
pub fn find_correspondences<S: NeighborSearch + ?Sized>(
    source: &[Point3<f64>],
    target: &S,
    transform: &RigidTransform,
    max_distance: f64,
) -> CorrespondenceSet {
    let pairs = source
        .par_iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let q = transform.transform_point(p);
            let hit = target.nearest_within(&q, max_distance)?;
            Some(Correspondence {
                source: i,
                target: hit.id,
                distance: hit.distance,
            })
        })
        .collect();
    CorrespondenceSet {
        pairs,
        max_distance,
    }
}

/// Mean of squared closest-point distances over correspondences within
/// `max_distance`. Returns `+∞` if there are none.
pub fn fitness_score<S: NeighborSearch + ?Sized>(
    source: &[Point3<f64>],
    target: &S,
    transform: &RigidTransform,
    max_distance: f64,
) -> f64 {
    find_correspondences(source, target, transform, max_distance).mean_squared_distance()
}

/// Objective values around one ICP update, with correspondences held fixed.
#[derive(Clone, Copy, Debug)]
pub struct IcpIteration {
    pub correspondences: usize,
    /// Σ‖T_k p − q̂‖² before the update.
    pub objective_before: f64,
    /// Same sum with the updated pose and the same pairs.
    pub objective_after: f64,
}

/// Point-to-point ICP with closed-form SVD updates.
pub fn icp<S: NeighborSearch + ?Sized>(
    source: &PointCloud,
    target: &S,
    initial_guess: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult> {
    icp_traced(source, target, initial_guess, params).map(|(r, _)| r)
}

/// Like [`icp`], also returning the per-iteration objective trace.
pub fn icp_traced<S: NeighborSearch + ?Sized>(
    source: &PointCloud,
    target: &S,
    initial_guess: &RigidTransform,
    params: &IcpParams,
) -> Result<(IcpResult, Vec<IcpIteration>)> {
    params.validate()?;
    if source.is_empty() {
        return Err(Error::InvalidInput("icp source cloud is empty".into()));
    }
    let src = source.points();
    let max_dist = params.max_correspondence_distance;
    let mut pose = *initial_guess;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=params.max_iterations {
        iterations = it;
        let corr = find_correspondences(src, target, &pose, max_dist);
        if corr.is_empty() {
            return Ok((
                IcpResult {
                    transform: pose,
                    fitness: f64::INFINITY,
                    iterations_used: it,
                    converged: false,
                },
                trace,
            ));
        }
        let moved: Vec<Point3<f64>> = corr
            .pairs
            .iter()
            .map(|c| pose.transform_point(&src[c.source]))
            .collect();
        let matched: Vec<Point3<f64>> = corr.pairs.iter().map(|c| *target.point(c.target)).collect();
        let Ok(delta) = best_rigid_transform(&moved, &matched) else {
            break;
        };
        let before: f64 = corr.pairs.iter().map(|c| c.distance * c.distance).sum();
        let after: f64 = moved
            .iter()
            .zip(&matched)
            .map(|(p, q)| (delta.transform_point(p) - q).norm_squared())
            .sum();
        trace.push(IcpIteration {
            correspondences: corr.len(),
            objective_before: before,
            objective_after: after,
        });
        pose = delta.compose(&pose);
        if delta.translation().norm() < params.translation_epsilon
            && delta.rotation_angle() < params.rotation_epsilon
        {
            converged = true;
            break;
        }
    }
    let pose = pose.renormalized();
    Ok((
        IcpResult {
            transform: pose,
            fitness: fitness_score(src, target, &pose, max_dist),
            iterations_used: iterations,
            converged,
        },
        trace,
    ))
}

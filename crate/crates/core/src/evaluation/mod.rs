//! Cloud-to-cloud distance and absolute trajectory error.
//!
//! The cloud metric is asymmetric: every source point is matched to its nearest
//! target point, and matches farther than the outlier threshold are dropped
//! (they usually belong to geometry the target never saw).

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloudio::{PointCloud, StampedPose};
use crate::error::{Error, Result};
use crate::spatial::{NeighborSearch, SpatialIndex};

/// Default outlier threshold (m).
pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 0.5;
/// Default timestamp association tolerance (s).
pub const DEFAULT_TIME_TOLERANCE: f64 = 1e-3;

/// Published real-scale results kept in reports for scale: (method, mean m, std m).
pub const REFERENCE_RESULTS: [(&str, f64, f64); 2] = [("FAST-LIO-LOC", 0.026, 0.049), ("LIORF", 0.050, 0.069)];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudDistanceReport {
    /// Mean of accepted nearest-point distances (m).
    pub mean_error: f64,
    /// Population standard deviation of the same distances (m).
    pub std_dev: f64,
    pub accepted_count: usize,
    pub rejected_count: usize,
    pub outlier_threshold: f64,
}

/// Per-point nearest distances from `source` into `target`.
pub fn nearest_distances(source: &PointCloud, target: &PointCloud) -> Vec<f64> {
    let index = SpatialIndex::build(target.points());
    source
        .points()
        .par_iter()
        .map(|p| index.nearest(p).map_or(f64::INFINITY, |n| n.distance))
        .collect()
}

pub fn cloud_to_cloud(source: &PointCloud, target: &PointCloud, outlier_threshold: f64) -> Result<CloudDistanceReport> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidInput("cloud-to-cloud needs two non-empty clouds".into()));
    }
    if !(outlier_threshold > 0.0) {
        return Err(Error::InvalidInput(format!(
            "outlier threshold must be positive, got {outlier_threshold}"
        )));
    }
    let distances = nearest_distances(source, target);
    let accepted: Vec<f64> = distances.iter().copied().filter(|d| *d <= outlier_threshold).collect();
    if accepted.is_empty() {
        return Err(Error::EmptyReport {
            threshold: outlier_threshold,
        });
    }
    let n = accepted.len() as f64;
    let mean = accepted.iter().sum::<f64>() / n;
    let var = accepted.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    Ok(CloudDistanceReport {
        mean_error: mean,
        std_dev: var.sqrt(),
        accepted_count: accepted.len(),
        rejected_count: distances.len() - accepted.len(),
        outlier_threshold,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryErrorReport {
    /// RMS translational error over matched poses (m).
    pub rmse: f64,
    pub mean: f64,
    pub max: f64,
    pub matched_count: usize,
    pub unmatched_count: usize,
}

/// Pairs each estimate with the ground-truth pose nearest in time, if within `tolerance`.
pub fn associate(estimate: &[StampedPose], truth: &[StampedPose], tolerance: f64) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..truth.len()).collect();
    order.sort_by(|&a, &b| truth[a].0.total_cmp(&truth[b].0));
    let times: Vec<f64> = order.iter().map(|&i| truth[i].0).collect();
    estimate
        .iter()
        .enumerate()
        .filter_map(|(i, (t, _))| {
            let k = times.partition_point(|x| x < t);
            let best = [k.checked_sub(1), (k < times.len()).then_some(k)]
                .into_iter()
                .flatten()
                .min_by(|&a, &b| (times[a] - t).abs().total_cmp(&(times[b] - t).abs()))?;
            ((times[best] - t).abs() <= tolerance).then_some((i, order[best]))
        })
        .collect()
}

/// Translational error after timestamp association, without any alignment.
pub fn absolute_trajectory_error(
    estimate: &[StampedPose],
    truth: &[StampedPose],
    tolerance: f64,
) -> Result<TrajectoryErrorReport> {
    let pairs = associate(estimate, truth, tolerance);
    if pairs.is_empty() {
        return Err(Error::Alignment);
    }
    let errs: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| (estimate[i].1.translation() - truth[j].1.translation()).norm())
        .collect();
    let n = errs.len() as f64;
    Ok(TrajectoryErrorReport {
        rmse: (errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
        mean: errs.iter().sum::<f64>() / n,
        max: errs.iter().copied().fold(0.0, f64::max),
        matched_count: pairs.len(),
        unmatched_count: estimate.len() - pairs.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceResult {
    pub method: String,
    pub mean_error: f64,
    pub std_dev: f64,
}

/// Full evaluation of a localization run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub cloud_to_cloud: CloudDistanceReport,
    pub trajectory: TrajectoryErrorReport,
    pub reference: Vec<ReferenceResult>,
}

pub fn evaluate_run(
    prior_map: &PointCloud,
    registered: &PointCloud,
    trajectory: &[StampedPose],
    ground_truth: &[StampedPose],
    outlier_threshold: f64,
) -> Result<RunReport> {
    Ok(RunReport {
        cloud_to_cloud: cloud_to_cloud(registered, prior_map, outlier_threshold)?,
        trajectory: absolute_trajectory_error(trajectory, ground_truth, DEFAULT_TIME_TOLERANCE)?,
        reference: REFERENCE_RESULTS
            .iter()
            .map(|(m, mean, std)| ReferenceResult {
                method: m.to_string(),
                mean_error: *mean,
                std_dev: *std,
            })
            .collect(),
    })
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.cloud_to_cloud;
        let t = &self.trajectory;
        writeln!(f, "cloud-to-cloud (registered -> prior map, per-point)")?;
        writeln!(f, "  mean error   {:.4} m", c.mean_error)?;
        writeln!(f, "  std dev      {:.4} m", c.std_dev)?;
        writeln!(
            f,
            "  accepted     {} / {} (threshold {} m)",
            c.accepted_count,
            c.accepted_count + c.rejected_count,
            c.outlier_threshold
        )?;
        writeln!(f, "absolute trajectory error")?;
        writeln!(f, "  rmse         {:.4} m", t.rmse)?;
        writeln!(f, "  mean / max   {:.4} / {:.4} m", t.mean, t.max)?;
        writeln!(f, "  matched      {} (unmatched {})", t.matched_count, t.unmatched_count)?;
        writeln!(f, "published real-scale results, for scale (mean / std, m)")?;
        for r in &self.reference {
            writeln!(f, "  {:<14} {:.3} / {:.3}", r.method, r.mean_error, r.std_dev)?;
        }
        Ok(())
    }
}

use nalgebra::{Matrix6, Point3, Vector3, Vector6};
use rayon::prelude::*;

use super::{IcpParams, IcpResult, PlaneParams};
use crate::cloudio::{PointCloud, RigidTransform};
use crate::error::{Error, Result};
use crate::geometry::PlaneFit;
use crate::spatial::NeighborSearch;

/// Plane through a small map neighborhood.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalPlane {
    pub centroid: Point3<f64>,
    /// Unit normal when `valid`.
    pub normal: Vector3<f64>,
    pub valid: bool,
    /// Distance from the query to its farthest neighbor.
    pub extent: f64,
}

impl LocalPlane {
    fn invalid() -> Self {
        Self {
            centroid: Point3::origin(),
            normal: Vector3::z(),
            valid: false,
            extent: f64::INFINITY,
        }
    }

    #[inline]
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&(p - self.centroid))
    }
}

/// Least-squares plane through the `k` map points nearest `query`.
///
/// Invalid if the index holds fewer than `k` points, the neighborhood is
/// (near-)collinear, or any neighbor lies farther than `max_plane_dist` from the plane.
pub fn fit_local_plane<S: NeighborSearch + ?Sized>(
    index: &S,
    query: &Point3<f64>,
    k: usize,
    max_plane_dist: f64,
) -> LocalPlane {
    fit_local_plane_within(index, query, k, max_plane_dist, f64::INFINITY)
}

/// [`fit_local_plane`] that is invalid unless all `k` neighbors lie within `radius`.
pub fn fit_local_plane_within<S: NeighborSearch + ?Sized>(
    index: &S,
    query: &Point3<f64>,
    k: usize,
    max_plane_dist: f64,
    radius: f64,
) -> LocalPlane {
    if k < 3 || index.len() < k {
        return LocalPlane::invalid();
    }
    let hood = index.knn_within(query, k, radius);
    if hood.len() < k {
        return LocalPlane::invalid();
    }
    let Some(fit) = PlaneFit::of_points(hood.iter().map(|n| index.point(n.id))) else {
        return LocalPlane::invalid();
    };
    let [_, mid, max] = fit.eigenvalues;
    let degenerate = !(max > 0.0) || mid <= 1e-10 * max;
    let flat = hood
        .iter()
        .all(|n| fit.signed_distance(index.point(n.id)).abs() <= max_plane_dist);
    LocalPlane {
        centroid: fit.centroid,
        normal: fit.normal,
        valid: !degenerate && flat,
        extent: hood.last().map_or(f64::INFINITY, |n| n.distance),
    }
}

/// A scan point (sensor frame) tied to a map plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneConstraint {
    pub point: Point3<f64>,
    pub centroid: Point3<f64>,
    pub normal: Vector3<f64>,
}

impl PlaneConstraint {
    #[inline]
    pub fn residual(&self, pose: &RigidTransform) -> f64 {
        self.normal.dot(&(pose.transform_point(&self.point) - self.centroid))
    }
}

/// Left-multiplied pose increment: rotation `Exp(ω)` then translation `v`.
pub fn apply_increment(delta: &Vector6<f64>, pose: &RigidTransform) -> RigidTransform {
    let omega = Vector3::new(delta[0], delta[1], delta[2]);
    let v = Vector3::new(delta[3], delta[4], delta[5]);
    let step = RigidTransform::from_axis_angle(&omega, omega.norm(), v);
    step.compose(pose)
}

/// `Σ rᵢ²` over the constraints at `pose`.
pub fn point_to_plane_objective(constraints: &[PlaneConstraint], pose: &RigidTransform) -> f64 {
    constraints.iter().map(|c| c.residual(pose).powi(2)).sum()
}

/// Gradient of [`point_to_plane_objective`] with respect to the increment of
/// [`apply_increment`], evaluated at zero.
pub fn point_to_plane_gradient(constraints: &[PlaneConstraint], pose: &RigidTransform) -> Vector6<f64> {
    let (_, g) = normal_equations(constraints, pose);
    2.0 * g
}

#[inline]
fn jacobian_row(x: &Point3<f64>, n: &Vector3<f64>) -> Vector6<f64> {
    let c = x.coords.cross(n);
    Vector6::new(c[0], c[1], c[2], n[0], n[1], n[2])
}

/// `(JᵀJ, Jᵀr)` accumulated in constraint order.
fn normal_equations(constraints: &[PlaneConstraint], pose: &RigidTransform) -> (Matrix6<f64>, Vector6<f64>) {
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    for c in constraints {
        let x = pose.transform_point(&c.point);
        let j = jacobian_row(&x, &c.normal);
        let r = c.normal.dot(&(x - c.centroid));
        h += j * j.transpose();
        g += j * r;
    }
    (h, g)
}

/// Associates each transformed scan point with a valid map plane.
///
/// A point is kept when its plane is valid, the neighborhood lies within
/// `max_correspondence_distance`, and the point itself is within that distance of
/// the plane. Output order follows the scan.
pub fn associate_planes<S: NeighborSearch + ?Sized>(
    scan: &[Point3<f64>],
    map: &S,
    pose: &RigidTransform,
    params: &IcpParams,
    plane: &PlaneParams,
) -> Vec<PlaneConstraint> {
    let gate = params.max_correspondence_distance;
    scan.par_iter()
        .filter_map(|p| {
            let x = pose.transform_point(p);
            let lp = fit_local_plane_within(map, &x, plane.neighbors, plane.max_plane_dist, gate);
            if !lp.valid || lp.extent > gate || lp.signed_distance(&x).abs() > gate {
                return None;
            }
            Some(PlaneConstraint {
                point: *p,
                centroid: lp.centroid,
                normal: lp.normal,
            })
        })
        .collect()
}

/// Gauss-Newton on point-to-plane residuals, re-associating planes every iteration.
///
/// `fitness` of the result is the mean squared point-to-plane residual at the
/// final pose (`+∞` if no planes could be associated).
pub fn point_to_plane_refine<S: NeighborSearch + ?Sized>(
    scan: &PointCloud,
    map: &S,
    initial: &RigidTransform,
    params: &IcpParams,
    plane: &PlaneParams,
) -> Result<IcpResult> {
    params.validate()?;
    if scan.is_empty() {
        return Err(Error::InvalidInput("scan is empty".into()));
    }
    let pts = scan.points();
    let mut pose = *initial;
    let mut converged = false;
    let mut iterations = 0;
    let mut constraints = Vec::new();

    for it in 1..=params.max_iterations {
        iterations = it;
        constraints = associate_planes(pts, map, &pose, params, plane);
        if constraints.len() < plane.min_valid_planes {
            return Ok(IcpResult {
                transform: pose,
                fitness: mean_squared(&constraints, &pose),
                iterations_used: it,
                converged: false,
            });
        }
        let (h, g) = normal_equations(&constraints, &pose);
        let delta = solve_spd(&h, &(-g));
        pose = apply_increment(&delta, &pose);
        let omega = Vector3::new(delta[0], delta[1], delta[2]).norm();
        let v = Vector3::new(delta[3], delta[4], delta[5]).norm();
        if v < params.translation_epsilon && omega < params.rotation_epsilon {
            converged = true;
            break;
        }
    }
    let pose = pose.renormalized();
    let final_constraints = associate_planes(pts, map, &pose, params, plane);
    let fitness = if final_constraints.is_empty() {
        mean_squared(&constraints, &pose)
    } else {
        mean_squared(&final_constraints, &pose)
    };
    Ok(IcpResult {
        transform: pose,
        fitness,
        iterations_used: iterations,
        converged,
    })
}

fn mean_squared(constraints: &[PlaneConstraint], pose: &RigidTransform) -> f64 {
    if constraints.is_empty() {
        f64::INFINITY
    } else {
        point_to_plane_objective(constraints, pose) / constraints.len() as f64
    }
}

/// Solves `H x = b` for symmetric positive semi-definite `H`; unconstrained
/// directions get a zero step.
fn solve_spd(h: &Matrix6<f64>, b: &Vector6<f64>) -> Vector6<f64> {
    if let Some(chol) = h.cholesky() {
        let x = chol.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return x;
        }
    }
    let scale = h.diagonal().amax().max(f64::MIN_POSITIVE);
    h.svd(true, true)
        .solve(b, 1e-10 * scale)
        .unwrap_or_else(|_| Vector6::zeros())
}

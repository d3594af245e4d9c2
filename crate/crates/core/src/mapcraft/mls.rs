use nalgebra::{Matrix6, Point3, SymmetricEigen, Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloudio::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::PlaneFit;
use crate::spatial::{NeighborSearch, SpatialIndex};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlsParams {
    /// Neighborhood radius (meters).
    pub search_radius: f64,
    /// 1 = project onto the weighted plane, 2 = onto a quadratic surface over it.
    pub polynomial_order: u8,
    /// Width of the Gaussian weight `exp(-d²/h²)` (meters). `+∞` gives uniform weights.
    pub gaussian_scale: f64,
}

impl Default for MlsParams {
    fn default() -> Self {
        Self {
            search_radius: 0.3,
            polynomial_order: 2,
            gaussian_scale: 0.3,
        }
    }
}

impl MlsParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::Config {
                field: format!("mls.{field}"),
                message,
            })
        };
        if !(self.search_radius > 0.0) || !self.search_radius.is_finite() {
            return bad("search_radius", format!("must be positive, got {}", self.search_radius));
        }
        if !(self.gaussian_scale > 0.0) {
            return bad("gaussian_scale", format!("must be positive, got {}", self.gaussian_scale));
        }
        if !matches!(self.polynomial_order, 1 | 2) {
            return bad(
                "polynomial_order",
                format!("must be 1 or 2, got {}", self.polynomial_order),
            );
        }
        Ok(())
    }

    #[inline]
    pub fn weight(&self, distance: f64) -> f64 {
        (-(distance * distance) / (self.gaussian_scale * self.gaussian_scale)).exp()
    }
}

/// Smoothed cloud plus the number of points left untouched for lack of support.
#[derive(Clone, Debug)]
pub struct MlsOutput {
    pub cloud: PointCloud,
    pub passthrough: usize,
}

/// Plane `{x : n·x = offset}` with unit `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedPlane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

/// Unit-normal plane minimizing `Σ wᵢ (n·pᵢ − D)²`. `None` if the weights sum to zero.
pub fn weighted_plane_fit(points: &[Point3<f64>], weights: &[f64]) -> Option<WeightedPlane> {
    let items: Vec<_> = points.iter().copied().zip(weights.iter().copied()).collect();
    let fit = PlaneFit::weighted(&items)?;
    Some(WeightedPlane {
        normal: fit.normal,
        offset: fit.normal.dot(&fit.centroid.coords),
    })
}

/// `Σ wᵢ (n·pᵢ − D)²`.
pub fn plane_objective(points: &[Point3<f64>], weights: &[f64], normal: &Vector3<f64>, offset: f64) -> f64 {
    points
        .iter()
        .zip(weights)
        .map(|(p, w)| w * (normal.dot(&p.coords) - offset).powi(2))
        .sum()
}

/// Gradient of [`plane_objective`] with respect to `(n, D)`, with `n` unconstrained.
pub fn plane_objective_gradient(
    points: &[Point3<f64>],
    weights: &[f64],
    normal: &Vector3<f64>,
    offset: f64,
) -> (Vector3<f64>, f64) {
    let mut gn = Vector3::zeros();
    let mut gd = 0.0;
    for (p, w) in points.iter().zip(weights) {
        let r = normal.dot(&p.coords) - offset;
        gn += p.coords * (2.0 * w * r);
        gd -= 2.0 * w * r;
    }
    (gn, gd)
}

/// Moving-least-squares projection of every point onto its local surface.
///
/// Neighborhoods come from the unmodified input. Points with fewer than three
/// neighbors (or a collinear neighborhood) pass through unchanged and are counted.
pub fn mls_smooth(cloud: &PointCloud, params: &MlsParams) -> Result<MlsOutput> {
    params.validate()?;
    if cloud.is_empty() {
        return Ok(MlsOutput {
            cloud: PointCloud::empty(),
            passthrough: 0,
        });
    }
    let index = SpatialIndex::build(cloud.points());
    let prior = cloud.normals();
    let results: Vec<Option<(Point3<f64>, Vector3<f64>)>> = cloud
        .points()
        .par_iter()
        .map(|q| smooth_point(q, &index, params))
        .collect();

    let mut points = Vec::with_capacity(cloud.len());
    let mut normals = Vec::with_capacity(cloud.len());
    let mut passthrough = 0;
    for (i, r) in results.into_iter().enumerate() {
        let reference = prior.map(|ns| ns[i]);
        match r {
            Some((p, mut n)) => {
                let flip = match reference {
                    Some(pn) => n.dot(&pn) < 0.0,
                    None => n.z < 0.0,
                };
                if flip {
                    n = -n;
                }
                points.push(p);
                normals.push(n);
            }
            None => {
                passthrough += 1;
                points.push(cloud.points()[i]);
                normals.push(reference.unwrap_or_else(Vector3::z));
            }
        }
    }
    Ok(MlsOutput {
        cloud: PointCloud::from_parts_unchecked(points, Some(normals)),
        passthrough,
    })
}

fn smooth_point(q: &Point3<f64>, index: &SpatialIndex, params: &MlsParams) -> Option<(Point3<f64>, Vector3<f64>)> {
    let hood = index.radius_search(q, params.search_radius);
    if hood.len() < 3 {
        return None;
    }
    let items: Vec<(Point3<f64>, f64)> = hood
        .iter()
        .map(|n| (*index.point(n.id), params.weight(n.distance)))
        .collect();
    let fit = PlaneFit::weighted(&items)?;
    let [_, mid, max] = fit.eigenvalues;
    if !(max > 0.0) || mid <= 1e-12 * max {
        return None;
    }
    let n = fit.normal;
    let origin = q - n * n.dot(&(q - fit.centroid));
    if params.polynomial_order == 2 && items.len() >= 6 {
        if let Some(out) = quadratic_projection(&items, &origin, &fit, params.search_radius) {
            return Some(out);
        }
    }
    Some((origin, n))
}

/// Fits `w = a0 + a1 u + a2 v + a3 u² + a4 uv + a5 v²` in the plane's frame around
/// `origin` and projects onto it. `None` if the system is ill-conditioned.
fn quadratic_projection(
    items: &[(Point3<f64>, f64)],
    origin: &Point3<f64>,
    fit: &PlaneFit,
    scale: f64,
) -> Option<(Point3<f64>, Vector3<f64>)> {
    let n = fit.normal;
    let u_axis = fit.eigenvectors[2];
    let v_axis = n.cross(&u_axis);
    let mut ata = Matrix6::zeros();
    let mut atb = Vector6::zeros();
    for (p, w) in items {
        let d = p - origin;
        let (u, v) = (d.dot(&u_axis) / scale, d.dot(&v_axis) / scale);
        let row = Vector6::new(1.0, u, v, u * u, u * v, v * v);
        ata += row * row.transpose() * *w;
        atb += row * (d.dot(&n) * w);
    }
    let eig = SymmetricEigen::new(ata);
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(hi > 0.0) || lo <= 1e-10 * hi {
        return None;
    }
    let a = ata.cholesky()?.solve(&atb);
    if !a.iter().all(|c| c.is_finite()) {
        return None;
    }
    let point = origin + n * a[0];
    let normal = (n - u_axis * (a[1] / scale) - v_axis * (a[2] / scale)).normalize();
    Some((point, normal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn noisy_plane(n: usize, sigma: f64, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-1.5..1.5),
                        rng.random_range(-1.5..1.5),
                        noise.sample(&mut rng),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    fn rms_z(points: &[Point3<f64>]) -> f64 {
        (points.iter().map(|p| p.z * p.z).sum::<f64>() / points.len() as f64).sqrt()
    }

    #[test]
    fn noiseless_plane_is_fixed_point() {
        for order in [1u8, 2] {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let pts: Vec<_> = (0..800)
                .map(|_| {
                    let (x, y) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    Point3::new(x, y, 0.3 * x - 0.2 * y + 0.5)
                })
                .collect();
            let cloud = PointCloud::new(pts.clone()).unwrap();
            let params = MlsParams {
                polynomial_order: order,
                ..MlsParams::default()
            };
            let out = mls_smooth(&cloud, &params).unwrap();
            assert_eq!(out.passthrough, 0);
            for (a, b) in out.cloud.points().iter().zip(&pts) {
                assert!((a - b).norm() < 1e-9, "order {order}: moved {}", (a - b).norm());
            }
        }
    }

    #[test]
    fn uniform_weights_order1_on_coplanar_input_is_identity() {
        let cloud = noisy_plane(500, 0.0, 2);
        let params = MlsParams {
            polynomial_order: 1,
            gaussian_scale: f64::INFINITY,
            ..MlsParams::default()
        };
        let out = mls_smooth(&cloud, &params).unwrap();
        for (a, b) in out.cloud.points().iter().zip(cloud.points()) {
            assert!((a - b).norm() < 1e-9);
        }
        for n in out.cloud.normals().unwrap() {
            assert!((n - Vector3::z()).norm() < 1e-9);
        }
    }

    #[test]
    fn noisy_plane_rms_drops_fivefold() {
        let cloud = noisy_plane(20_000, 0.05, 3);
        let out = mls_smooth(&cloud, &MlsParams::default()).unwrap();
        let before = rms_z(cloud.points());
        let after = rms_z(out.cloud.points());
        assert!(before / after >= 5.0, "rms {before} -> {after}");
    }

    #[test]
    fn sphere_radial_error_below_third_of_sigma() {
        let sigma = 0.02;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.0, sigma).unwrap();
        let pts: Vec<_> = (0..20_000)
            .map(|_| {
                let v = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                let v = if v.norm() < 1e-3 { Vector3::z() } else { v.normalize() };
                Point3::from(v * (1.0 + noise.sample(&mut rng)))
            })
            .collect();
        let cloud = PointCloud::new(pts).unwrap();
        let out = mls_smooth(&cloud, &MlsParams::default()).unwrap();
        let err = out
            .cloud
            .points()
            .iter()
            .map(|p| (p.coords.norm() - 1.0).abs())
            .sum::<f64>()
            / out.cloud.len() as f64;
        assert!(err < sigma / 3.0, "mean radial error {err}");
    }

    #[test]
    fn sparse_points_pass_through() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(5.0, 0.0, 0.0),
            Point3::new(0.0, 5.0, 0.0),
        ];
        let cloud = PointCloud::new(pts.clone()).unwrap();
        let out = mls_smooth(&cloud, &MlsParams::default()).unwrap();
        assert_eq!(out.passthrough, 3);
        assert_eq!(out.cloud.points(), &pts[..]);
    }

    #[test]
    fn normals_follow_prior_orientation() {
        let cloud = noisy_plane(2000, 0.0, 5);
        let down = vec![-Vector3::z(); cloud.len()];
        let with = PointCloud::with_normals(cloud.points().to_vec(), down).unwrap();
        let out = mls_smooth(&with, &MlsParams::default()).unwrap();
        assert!(out.cloud.normals().unwrap().iter().all(|n| n.z < -0.999));
        let out = mls_smooth(&cloud, &MlsParams::default()).unwrap();
        assert!(out.cloud.normals().unwrap().iter().all(|n| n.z > 0.999));
    }

    #[test]
    fn weighted_fit_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let pts: Vec<_> = (0..30)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-0.1..0.1),
                    )
                })
                .collect();
            let w: Vec<f64> = (0..30).map(|_| rng.random_range(0.1..1.0)).collect();
            let plane = weighted_plane_fit(&pts, &w).unwrap();
            let (gn, gd) = plane_objective_gradient(&pts, &w, &plane.normal, plane.offset);
            let tangential = gn - plane.normal * plane.normal.dot(&gn);
            let scale = plane_objective(&pts, &w, &plane.normal, plane.offset).max(1.0);
            assert!(tangential.norm() / scale < 1e-8);
            assert!(gd.abs() / scale < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_params() {
        let cloud = noisy_plane(10, 0.0, 0);
        for p in [
            MlsParams { search_radius: 0.0, ..MlsParams::default() },
            MlsParams { gaussian_scale: -1.0, ..MlsParams::default() },
            MlsParams { polynomial_order: 3, ..MlsParams::default() },
        ] {
            assert!(mls_smooth(&cloud, &p).is_err());
        }
    }
}

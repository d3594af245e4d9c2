use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use super::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::PlaneFit;
use crate::spatial::{NeighborSearch, SpatialIndex};

/// Eigenvalue spread below which a neighborhood has no preferred direction.
const DEGENERATE_SPREAD: f64 = 1e-12;

/// Result of [`estimate_normals`].
#[derive(Clone, Debug)]
pub struct EstimatedNormals {
    pub cloud: PointCloud,
    /// `true` where the neighborhood was degenerate and the normal defaulted to `+z`.
    pub degenerate: Vec<bool>,
}

impl EstimatedNormals {
    pub fn degenerate_count(&self) -> usize {
        self.degenerate.iter().filter(|d| **d).count()
    }
}

/// PCA normals over the `k` nearest neighbors, flipped to face `viewpoint`.
pub fn estimate_normals(
    cloud: &PointCloud,
    k: usize,
    viewpoint: &Point3<f64>,
) -> Result<EstimatedNormals> {
    if k < 3 {
        return Err(Error::InvalidInput(format!("k must be at least 3, got {k}")));
    }
    if cloud.len() < k {
        return Err(Error::InvalidInput(format!(
            "cloud has {} points, fewer than k = {k}",
            cloud.len()
        )));
    }
    let index = SpatialIndex::build(cloud.points());
    let results: Vec<(Vector3<f64>, bool)> = cloud
        .points()
        .par_iter()
        .map(|p| {
            let hood = index.knn(p, k);
            let fit = PlaneFit::of_points(hood.iter().map(|n| index.point(n.id)))
                .expect("non-empty neighborhood");
            if fit.eigenvalues[2] - fit.eigenvalues[0] <= DEGENERATE_SPREAD {
                return (Vector3::z(), true);
            }
            let mut n = fit.normal;
            if n.dot(&(viewpoint - p)) < 0.0 {
                n = -n;
            }
            (n, false)
        })
        .collect();
    let (normals, degenerate): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(EstimatedNormals {
        cloud: PointCloud::from_parts_unchecked(cloud.points().to_vec(), Some(normals)),
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloudio::{apply_transform, RigidTransform};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn grid_plane(n: usize, noise: f64, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise.max(1e-300)).unwrap();
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let z = if noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                pts.push(Point3::new(
                    i as f64 / (n - 1) as f64,
                    j as f64 / (n - 1) as f64,
                    z,
                ));
            }
        }
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn plane_z0_faces_viewpoint() {
        let cloud = grid_plane(20, 0.0, 0);
        let out = estimate_normals(&cloud, 8, &Point3::new(0.0, 0.0, 10.0)).unwrap();
        for n in out.cloud.normals().unwrap() {
            assert!((n - Vector3::z()).norm() < 1e-6);
        }
        assert_eq!(out.degenerate_count(), 0);
    }

    #[test]
    fn plane_x0_faces_viewpoint() {
        let pts = grid_plane(20, 0.0, 0)
            .points()
            .iter()
            .map(|p| Point3::new(0.0, p.x, p.y))
            .collect();
        let cloud = PointCloud::new(pts).unwrap();
        let out = estimate_normals(&cloud, 8, &Point3::new(10.0, 0.0, 0.0)).unwrap();
        for n in out.cloud.normals().unwrap() {
            assert!((n - Vector3::x()).norm() < 1e-6);
        }
    }

    #[test]
    fn noisy_plane_mean_angle_below_5_degrees() {
        let cloud = grid_plane(15, 0.01, 9);
        let out = estimate_normals(&cloud, 15, &Point3::new(0.0, 0.0, 10.0)).unwrap();
        let ns = out.cloud.normals().unwrap();
        let mean: f64 =
            ns.iter().map(|n| n.z.clamp(-1.0, 1.0).acos()).sum::<f64>() / ns.len() as f64;
        assert!(mean.to_degrees() < 5.0, "mean angular error {}", mean.to_degrees());
    }

    #[test]
    fn identical_points_are_degenerate() {
        let cloud = PointCloud::new(vec![Point3::new(1.0, 1.0, 1.0); 6]).unwrap();
        let out = estimate_normals(&cloud, 4, &Point3::origin()).unwrap();
        assert_eq!(out.degenerate, vec![true; 6]);
        assert_eq!(out.cloud.normals().unwrap()[0], Vector3::z());
    }

    #[test]
    fn rejects_small_k_and_small_clouds() {
        let cloud = grid_plane(3, 0.0, 0);
        assert!(estimate_normals(&cloud, 2, &Point3::origin()).is_err());
        assert!(estimate_normals(&cloud, 10, &Point3::origin()).is_err());
    }

    #[test]
    fn rigid_motion_rotates_normals() {
        let cloud = grid_plane(15, 0.0, 0);
        let view = Point3::new(0.3, 0.2, 5.0);
        let t = RigidTransform::from_axis_angle(
            &Vector3::new(0.3, -1.0, 0.5),
            0.7,
            Vector3::new(1.0, -2.0, 0.5),
        );
        let a = estimate_normals(&cloud, 6, &view).unwrap();
        let b = estimate_normals(&apply_transform(&cloud, &t), 6, &t.transform_point(&view)).unwrap();
        for (na, nb) in a.cloud.normals().unwrap().iter().zip(b.cloud.normals().unwrap()) {
            let rotated = t.transform_vector(na);
            let angle = rotated.dot(nb).clamp(-1.0, 1.0).acos();
            assert!(angle < 1e-6, "angle {angle}");
            assert!((nb.norm() - 1.0).abs() < 1e-12);
        }
    }
}

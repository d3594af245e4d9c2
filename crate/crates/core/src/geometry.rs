//! Small dense linear-algebra helpers shared by the plane fits.

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};

/// Weighted centroid and covariance of a point set, with eigen-decomposition
/// sorted by ascending eigenvalue.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PlaneFit {
    pub centroid: Point3<f64>,
    /// Unit eigenvector of the smallest eigenvalue.
    pub normal: Vector3<f64>,
    /// Ascending.
    pub eigenvalues: [f64; 3],
    pub eigenvectors: [Vector3<f64>; 3],
}

impl PlaneFit {
    /// Unweighted fit. Returns `None` for an empty slice.
    pub fn of_points<'a, I>(points: I) -> Option<PlaneFit>
    where
        I: IntoIterator<Item = &'a Point3<f64>>,
    {
        let items: Vec<_> = points.into_iter().map(|p| (*p, 1.0)).collect();
        Self::weighted(&items)
    }

    /// Fit with per-point nonnegative weights.
    pub fn weighted(items: &[(Point3<f64>, f64)]) -> Option<PlaneFit> {
        let mut wsum = 0.0;
        let mut acc = Vector3::zeros();
        for &(p, w) in items {
            wsum += w;
            acc += p.coords * w;
        }
        if wsum <= 0.0 {
            return None;
        }
        let centroid = Point3::from(acc / wsum);
        let mut cov = Matrix3::zeros();
        for &(p, w) in items {
            let d = p - centroid;
            cov += d * d.transpose() * w;
        }
        cov /= wsum;
        Some(Self::from_covariance(centroid, cov))
    }

    pub fn from_covariance(centroid: Point3<f64>, cov: Matrix3<f64>) -> PlaneFit {
        let eig = SymmetricEigen::new(cov);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues = order.map(|i| eig.eigenvalues[i]);
        let eigenvectors = order.map(|i| eig.eigenvectors.column(i).normalize());
        PlaneFit {
            centroid,
            normal: eigenvectors[0],
            eigenvalues,
            eigenvectors,
        }
    }

    /// Signed distance of `p` from the fitted plane.
    #[inline]
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&(p - self.centroid))
    }
}

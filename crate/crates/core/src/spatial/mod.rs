//! Exact k-nearest-neighbor and radius queries.
//!
//! [`SpatialIndex`] is an immutable kd-tree over a snapshot of points.
//! [`IncrementalIndex`] accepts insertions: new points go to a buffer of small
//! trees, and the whole set is rebuilt into one balanced tree once the buffer
//! exceeds `rebuild_ratio` of the total. Both return results identical to a
//! brute-force scan: sorted by distance, ties broken by lower point id.
//!
//! `SpatialIndex` may be shared between threads. `IncrementalIndex` needs
//! external exclusion between `insert` and queries.

mod kdtree;

use nalgebra::Point3;

use kdtree::{dist2, KdTree, KnnSet, DEFAULT_LEAF_SIZE};

/// Default buffered fraction that triggers a full rebuild.
pub const DEFAULT_REBUILD_RATIO: f64 = 0.3;

/// A query hit. `distance` is Euclidean (meters).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub distance: f64,
}

/// Read access shared by the static and incremental indices.
pub trait NeighborSearch: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn point(&self, id: usize) -> &Point3<f64>;

    fn points(&self) -> &[Point3<f64>];

    /// The `min(k, len)` nearest points, nondecreasing distance, ties by lower id.
    fn knn(&self, query: &Point3<f64>, k: usize) -> Vec<Neighbor>;

    /// Every point within `radius` (inclusive), sorted like [`NeighborSearch::knn`].
    fn radius_search(&self, query: &Point3<f64>, radius: f64) -> Vec<Neighbor>;

    /// Like [`NeighborSearch::knn`] restricted to points within `radius`.
    fn knn_within(&self, query: &Point3<f64>, k: usize, radius: f64) -> Vec<Neighbor>;

    fn nearest(&self, query: &Point3<f64>) -> Option<Neighbor> {
        self.knn(query, 1).into_iter().next()
    }

    fn nearest_within(&self, query: &Point3<f64>, radius: f64) -> Option<Neighbor> {
        self.knn_within(query, 1, radius).into_iter().next()
    }
}

/// Immutable kd-tree over an owned copy of the input points.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    points: Vec<Point3<f64>>,
    tree: KdTree,
    leaf_size: usize,
}

impl SpatialIndex {
    pub fn build(points: &[Point3<f64>]) -> Self {
        Self::build_owned(points.to_vec())
    }

    pub fn build_owned(points: Vec<Point3<f64>>) -> Self {
        Self::with_leaf_size(points, DEFAULT_LEAF_SIZE)
    }

    pub fn with_leaf_size(points: Vec<Point3<f64>>, max_points_per_leaf: usize) -> Self {
        let tree = KdTree::build(&points, 0..points.len(), max_points_per_leaf);
        Self {
            points,
            tree,
            leaf_size: max_points_per_leaf.max(1),
        }
    }

    pub fn max_points_per_leaf(&self) -> usize {
        self.leaf_size
    }

    /// Coordinate comparisons performed while building the tree.
    pub fn build_comparisons(&self) -> u64 {
        self.tree.comparisons()
    }
}

fn finish_radius(mut hits: Vec<(f64, usize)>) -> Vec<Neighbor> {
    hits.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    hits.into_iter()
        .map(|(d2, id)| Neighbor {
            id,
            distance: d2.sqrt(),
        })
        .collect()
}

impl NeighborSearch for SpatialIndex {
    fn len(&self) -> usize {
        self.points.len()
    }

    fn point(&self, id: usize) -> &Point3<f64> {
        &self.points[id]
    }

    fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    fn knn(&self, query: &Point3<f64>, k: usize) -> Vec<Neighbor> {
        self.knn_within(query, k, f64::INFINITY)
    }

    fn knn_within(&self, query: &Point3<f64>, k: usize, radius: f64) -> Vec<Neighbor> {
        let mut set = KnnSet::bounded(k, radius * radius);
        self.tree.knn_into(&self.points, query, &mut set);
        set.into_neighbors()
    }

    fn radius_search(&self, query: &Point3<f64>, radius: f64) -> Vec<Neighbor> {
        let mut hits = Vec::new();
        self.tree
            .radius_into(&self.points, query, radius * radius, &mut hits);
        finish_radius(hits)
    }
}

/// Kd-tree with online insertion.
///
/// Points get ids in insertion order (prior points first). The buffer of
/// recent insertions is organized as a few trees of doubling size so queries
/// stay logarithmic between full rebuilds.
#[derive(Clone, Debug)]
pub struct IncrementalIndex {
    points: Vec<Point3<f64>>,
    main: KdTree,
    buffer: Vec<KdTree>,
    buffered: usize,
    rebuild_ratio: f64,
    rebuilds: usize,
}

impl IncrementalIndex {
    pub fn new(rebuild_ratio: f64) -> Self {
        Self::from_points(Vec::new(), rebuild_ratio)
    }

    pub fn from_points(points: Vec<Point3<f64>>, rebuild_ratio: f64) -> Self {
        let main = KdTree::build(&points, 0..points.len(), DEFAULT_LEAF_SIZE);
        Self {
            points,
            main,
            buffer: Vec::new(),
            buffered: 0,
            rebuild_ratio: rebuild_ratio.clamp(0.0, 1.0),
            rebuilds: 0,
        }
    }

    pub fn rebuild_ratio(&self) -> f64 {
        self.rebuild_ratio
    }

    /// Points inserted since the last full rebuild.
    pub fn buffered(&self) -> usize {
        self.buffered
    }

    /// Number of full rebuilds performed by `insert`.
    pub fn rebuild_count(&self) -> usize {
        self.rebuilds
    }

    pub fn insert(&mut self, new_points: &[Point3<f64>]) {
        if new_points.is_empty() {
            return;
        }
        let start = self.points.len();
        self.points.extend_from_slice(new_points);
        self.buffered += new_points.len();
        if self.buffered as f64 > self.rebuild_ratio * self.points.len() as f64 {
            self.rebuild();
            return;
        }
        // Binary-counter merge: fold in trailing trees no larger than the new batch.
        let mut lo = start;
        let mut size = new_points.len();
        while let Some(last) = self.buffer.last() {
            if last.len() > size {
                break;
            }
            size += last.len();
            lo -= last.len();
            self.buffer.pop();
        }
        self.buffer
            .push(KdTree::build(&self.points, lo..self.points.len(), DEFAULT_LEAF_SIZE));
    }

    /// Folds the buffer into a single balanced tree.
    pub fn rebuild(&mut self) {
        self.main = KdTree::build(&self.points, 0..self.points.len(), DEFAULT_LEAF_SIZE);
        self.buffer.clear();
        self.buffered = 0;
        self.rebuilds += 1;
    }

    pub fn into_points(self) -> Vec<Point3<f64>> {
        self.points
    }
}

impl NeighborSearch for IncrementalIndex {
    fn len(&self) -> usize {
        self.points.len()
    }

    fn point(&self, id: usize) -> &Point3<f64> {
        &self.points[id]
    }

    fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    fn knn(&self, query: &Point3<f64>, k: usize) -> Vec<Neighbor> {
        self.knn_within(query, k, f64::INFINITY)
    }

    fn knn_within(&self, query: &Point3<f64>, k: usize, radius: f64) -> Vec<Neighbor> {
        let mut set = KnnSet::bounded(k, radius * radius);
        // recent trees first: they cover areas the prior lacks
        for tree in self.buffer.iter().rev() {
            tree.knn_into(&self.points, query, &mut set);
        }
        self.main.knn_into(&self.points, query, &mut set);
        set.into_neighbors()
    }

    fn radius_search(&self, query: &Point3<f64>, radius: f64) -> Vec<Neighbor> {
        let r2 = radius * radius;
        let mut hits = Vec::new();
        self.main.radius_into(&self.points, query, r2, &mut hits);
        for tree in &self.buffer {
            tree.radius_into(&self.points, query, r2, &mut hits);
        }
        finish_radius(hits)
    }
}

/// Exhaustive k-NN used where an index would not pay for itself.
pub fn brute_force_knn(points: &[Point3<f64>], query: &Point3<f64>, k: usize) -> Vec<Neighbor> {
    let mut set = KnnSet::new(k);
    for (id, p) in points.iter().enumerate() {
        set.offer(dist2(p, query), id);
    }
    set.into_neighbors()
}

use std::cell::Cell;
use std::ops::Range;

use nalgebra::Point3;

use super::Neighbor;

pub(crate) const DEFAULT_LEAF_SIZE: usize = 16;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f64, left: u32, right: u32 },
}

/// Tree structure over a contiguous id range of an external point buffer.
///
/// The tree stores ids only; points are passed back in at query time so that
/// several trees can share one buffer.
#[derive(Clone, Debug)]
pub(crate) struct KdTree {
    ids: Vec<u32>,
    nodes: Vec<Node>,
    comparisons: u64,
}

/// The `k` best `(squared distance, id)` pairs seen so far, kept sorted.
pub(crate) struct KnnSet {
    k: usize,
    bound: f64,
    items: Vec<(f64, usize)>,
}

impl KnnSet {
    pub(crate) fn new(k: usize) -> Self {
        Self::bounded(k, f64::INFINITY)
    }

    /// Only candidates with squared distance `<= bound` are kept.
    pub(crate) fn bounded(k: usize, bound: f64) -> Self {
        Self {
            k,
            bound,
            items: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    fn full(&self) -> bool {
        self.items.len() >= self.k
    }

    #[inline]
    fn worst(&self) -> f64 {
        if self.full() {
            self.items[self.items.len() - 1].0
        } else {
            self.bound
        }
    }

    #[inline]
    pub(crate) fn offer(&mut self, d2: f64, id: usize) {
        if self.k == 0 || d2 > self.bound {
            return;
        }
        if self.full() {
            let (wd, wid) = self.items[self.items.len() - 1];
            if (d2, id) >= (wd, wid) {
                return;
            }
            self.items.pop();
        }
        let pos = self
            .items
            .partition_point(|&(d, i)| (d, i) < (d2, id));
        self.items.insert(pos, (d2, id));
    }

    pub(crate) fn into_neighbors(self) -> Vec<Neighbor> {
        self.items
            .into_iter()
            .map(|(d2, id)| Neighbor {
                id,
                distance: d2.sqrt(),
            })
            .collect()
    }
}

#[inline]
pub(crate) fn dist2(a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

impl KdTree {
    pub(crate) fn build(points: &[Point3<f64>], range: Range<usize>, leaf_size: usize) -> Self {
        let leaf_size = leaf_size.max(1);
        let mut ids: Vec<u32> = range.map(|i| i as u32).collect();
        let mut nodes = Vec::new();
        let counter = Cell::new(0u64);
        if !ids.is_empty() {
            let n = ids.len();
            build_node(points, &mut ids, 0, n, leaf_size, &mut nodes, &counter);
        }
        Self {
            ids,
            nodes,
            comparisons: counter.get(),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.ids.len()
    }

    pub(crate) fn comparisons(&self) -> u64 {
        self.comparisons
    }

    pub(crate) fn knn_into(&self, points: &[Point3<f64>], q: &Point3<f64>, set: &mut KnnSet) {
        if !self.nodes.is_empty() {
            self.knn_node(points, 0, q, set);
        }
    }

    fn knn_node(&self, points: &[Point3<f64>], node: usize, q: &Point3<f64>, set: &mut KnnSet) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &id in &self.ids[start as usize..end as usize] {
                    let id = id as usize;
                    set.offer(dist2(&points[id], q), id);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_node(points, near as usize, q, set);
                // `<=` keeps equal-distance candidates with lower ids reachable.
                if diff * diff <= set.worst() {
                    self.knn_node(points, far as usize, q, set);
                }
            }
        }
    }

    pub(crate) fn radius_into(
        &self,
        points: &[Point3<f64>],
        q: &Point3<f64>,
        r2: f64,
        out: &mut Vec<(f64, usize)>,
    ) {
        if !self.nodes.is_empty() {
            self.radius_node(points, 0, q, r2, out);
        }
    }

    fn radius_node(
        &self,
        points: &[Point3<f64>],
        node: usize,
        q: &Point3<f64>,
        r2: f64,
        out: &mut Vec<(f64, usize)>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &id in &self.ids[start as usize..end as usize] {
                    let id = id as usize;
                    let d2 = dist2(&points[id], q);
                    if d2 <= r2 {
                        out.push((d2, id));
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.radius_node(points, near as usize, q, r2, out);
                if diff * diff <= r2 {
                    self.radius_node(points, far as usize, q, r2, out);
                }
            }
        }
    }
}

fn build_node(
    points: &[Point3<f64>],
    ids: &mut [u32],
    start: usize,
    end: usize,
    leaf_size: usize,
    nodes: &mut Vec<Node>,
    counter: &Cell<u64>,
) -> u32 {
    let index = nodes.len() as u32;
    let slice = &mut ids[start..end];
    if slice.len() <= leaf_size {
        nodes.push(Node::Leaf {
            start: start as u32,
            end: end as u32,
        });
        return index;
    }
    let mut lo = points[slice[0] as usize];
    let mut hi = lo;
    for &id in slice.iter() {
        let p = &points[id as usize];
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let extent = hi - lo;
    let axis = extent.imax();
    if extent[axis] == 0.0 {
        // every point identical: splitting cannot separate them
        nodes.push(Node::Leaf {
            start: start as u32,
            end: end as u32,
        });
        return index;
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        counter.set(counter.get() + 1);
        points[a as usize][axis].total_cmp(&points[b as usize][axis])
    });
    let value = points[slice[mid] as usize][axis];
    nodes.push(Node::Split {
        axis: axis as u8,
        value,
        left: 0,
        right: 0,
    });
    let left = build_node(points, ids, start, start + mid, leaf_size, nodes, counter);
    let right = build_node(points, ids, start + mid, end, leaf_size, nodes, counter);
    if let Node::Split {
        left: l, right: r, ..
    } = &mut nodes[index as usize]
    {
        *l = left;
        *r = right;
    }
    index
}

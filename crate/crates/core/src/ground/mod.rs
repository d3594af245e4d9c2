//! Cloth simulation ground filter.
//!
//! The cloud is flipped upside down and a grid of particles is dropped onto it.
//! Each particle collides with the highest flipped point in its footprint and
//! becomes fixed there; spring passes keep free particles from sinking into the
//! pits left by overground objects. Points close to the settled cloth are ground.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloudio::PointCloud;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsfParams {
    /// Particle spacing (m).
    pub cloth_resolution: f64,
    /// Maximum point-to-cloth distance for a ground label (m).
    pub class_threshold: f64,
    /// Spring passes per step, 1 to 3.
    pub rigidness: u8,
    /// Seconds.
    pub time_step: f64,
    /// m/s². A free particle drops `gravity · time_step²` per step.
    pub gravity: f64,
    pub max_iterations: usize,
    /// Stop once no particle moves more than this in a step (m).
    pub displacement_epsilon: f64,
}

impl Default for CsfParams {
    fn default() -> Self {
        Self {
            cloth_resolution: 0.5,
            class_threshold: 0.1,
            rigidness: 2,
            time_step: 0.65,
            gravity: 0.2,
            max_iterations: 500,
            displacement_epsilon: 1e-4,
        }
    }
}

impl CsfParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cloth_resolution", self.cloth_resolution),
            ("class_threshold", self.class_threshold),
            ("time_step", self.time_step),
            ("gravity", self.gravity),
            ("max_iterations", self.max_iterations as f64),
            ("displacement_epsilon", self.displacement_epsilon),
        ];
        for (field, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config {
                    field: format!("csf.{field}"),
                    message: format!("must be positive, got {v}"),
                });
            }
        }
        if !(1..=3).contains(&self.rigidness) {
            return Err(Error::Config {
                field: "csf.rigidness".into(),
                message: format!("must be 1, 2 or 3, got {}", self.rigidness),
            });
        }
        Ok(())
    }

    /// Per-step fall of a free particle (m).
    pub fn step_drop(&self) -> f64 {
        self.gravity * self.time_step * self.time_step
    }
}

/// Particle grid over the flipped cloud. Heights are in the flipped frame
/// (`-z`), row-major with `x` varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Cloth {
    /// xy of particle (0, 0).
    pub origin: [f64; 2],
    pub spacing: f64,
    pub cols: usize,
    pub rows: usize,
    pub heights: Vec<f64>,
    pub movable: Vec<bool>,
}

impl Cloth {
    /// A flat, fully movable cloth at `height`.
    pub fn new(origin: [f64; 2], spacing: f64, cols: usize, rows: usize, height: f64) -> Self {
        Self {
            origin,
            spacing,
            cols,
            rows,
            heights: vec![height; cols * rows],
            movable: vec![true; cols * rows],
        }
    }

    /// Covers the xy bounds of `cloud` with one spacing of margin on every side.
    fn covering(cloud: &PointCloud, spacing: f64, height: f64) -> Option<Self> {
        let (lo, hi) = cloud.bounds()?;
        let cols = ((hi.x - lo.x) / spacing).floor() as usize + 3;
        let rows = ((hi.y - lo.y) / spacing).floor() as usize + 3;
        Some(Self::new([lo.x - spacing, lo.y - spacing], spacing, cols, rows, height))
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.cols + col
    }

    /// Particle whose footprint contains `(x, y)`, clamped to the grid.
    pub fn nearest_particle(&self, x: f64, y: f64) -> usize {
        let c = ((x - self.origin[0]) / self.spacing).round().clamp(0.0, (self.cols - 1) as f64);
        let r = ((y - self.origin[1]) / self.spacing).round().clamp(0.0, (self.rows - 1) as f64);
        self.index(c as usize, r as usize)
    }

    /// Bilinear cloth height at `(x, y)`.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let fx = ((x - self.origin[0]) / self.spacing).clamp(0.0, (self.cols - 1) as f64);
        let fy = ((y - self.origin[1]) / self.spacing).clamp(0.0, (self.rows - 1) as f64);
        let c0 = (fx.floor() as usize).min(self.cols.saturating_sub(2));
        let r0 = (fy.floor() as usize).min(self.rows.saturating_sub(2));
        let c1 = (c0 + 1).min(self.cols - 1);
        let r1 = (r0 + 1).min(self.rows - 1);
        let (tx, ty) = (fx - c0 as f64, fy - r0 as f64);
        let h = |c, r| self.heights[self.index(c, r)];
        let bottom = h(c0, r0) * (1.0 - tx) + h(c1, r0) * tx;
        let top = h(c0, r1) * (1.0 - tx) + h(c1, r1) * tx;
        bottom * (1.0 - ty) + top * ty
    }

    fn clamp_to(&mut self, collision: &[f64]) {
        for ((h, m), c) in self.heights.iter_mut().zip(&mut self.movable).zip(collision) {
            if *m && *h <= *c {
                *h = *c;
                *m = false;
            }
        }
    }

    /// One Jacobi pass moving each free particle half-way to its 4-neighbor mean.
    fn relax(&mut self) {
        let prev = &self.heights;
        let (cols, rows) = (self.cols, self.rows);
        let next: Vec<f64> = (0..prev.len())
            .into_par_iter()
            .map(|i| {
                if !self.movable[i] {
                    return prev[i];
                }
                let (c, r) = (i % cols, i / cols);
                let mut sum = 0.0;
                let mut count = 0.0;
                if c > 0 {
                    sum += prev[i - 1];
                    count += 1.0;
                }
                if c + 1 < cols {
                    sum += prev[i + 1];
                    count += 1.0;
                }
                if r > 0 {
                    sum += prev[i - cols];
                    count += 1.0;
                }
                if r + 1 < rows {
                    sum += prev[i + cols];
                    count += 1.0;
                }
                if count == 0.0 {
                    prev[i]
                } else {
                    prev[i] + 0.5 * (sum / count - prev[i])
                }
            })
            .collect();
        self.heights = next;
    }
}

/// One gravity + collision + spring step. Returns the largest height change.
pub fn simulate_cloth_step(cloth: &mut Cloth, collision_heights: &[f64], params: &CsfParams) -> f64 {
    assert_eq!(collision_heights.len(), cloth.heights.len(), "collision field size mismatch");
    let before = cloth.heights.clone();
    let drop = params.step_drop();
    for (h, m) in cloth.heights.iter_mut().zip(&cloth.movable) {
        if *m {
            *h -= drop;
        }
    }
    cloth.clamp_to(collision_heights);
    for _ in 0..params.rigidness {
        cloth.relax();
        cloth.clamp_to(collision_heights);
    }
    before
        .iter()
        .zip(&cloth.heights)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Result of [`csf_extract`]. Both parts keep input order.
#[derive(Clone, Debug)]
pub struct GroundSplit {
    pub ground: PointCloud,
    pub nonground: PointCloud,
    pub is_ground: Vec<bool>,
    pub cloth: Cloth,
    pub iterations: usize,
    pub converged: bool,
}

/// Per-particle collision height: the flipped height of the point nearest the
/// particle in xy among those in its footprint (the highest such point on ties).
/// Empty footprints copy the nearest populated one (breadth-first).
pub fn collision_field(cloth: &Cloth, cloud: &PointCloud) -> Vec<f64> {
    let mut best = vec![(f64::INFINITY, f64::NEG_INFINITY); cloth.heights.len()];
    for p in cloud.points() {
        let i = cloth.nearest_particle(p.x, p.y);
        let (c, r) = (i % cloth.cols, i / cloth.cols);
        let dx = p.x - (cloth.origin[0] + c as f64 * cloth.spacing);
        let dy = p.y - (cloth.origin[1] + r as f64 * cloth.spacing);
        let d2 = dx * dx + dy * dy;
        let (bd, bh) = best[i];
        if d2 < bd || (d2 == bd && -p.z > bh) {
            best[i] = (d2, -p.z);
        }
    }
    let mut field: Vec<f64> = best.into_iter().map(|(_, h)| h).collect();
    let mut queue: VecDeque<usize> = (0..field.len()).filter(|&i| field[i].is_finite()).collect();
    while let Some(i) = queue.pop_front() {
        let (c, r) = (i % cloth.cols, i / cloth.cols);
        let mut visit = |j: usize| {
            if !field[j].is_finite() {
                field[j] = field[i];
                queue.push_back(j);
            }
        };
        if c > 0 {
            visit(i - 1);
        }
        if c + 1 < cloth.cols {
            visit(i + 1);
        }
        if r > 0 {
            visit(i - cloth.cols);
        }
        if r + 1 < cloth.rows {
            visit(i + cloth.cols);
        }
    }
    field
}

/// Splits `cloud` into ground and overground points.
pub fn csf_extract(cloud: &PointCloud, params: &CsfParams) -> Result<GroundSplit> {
    params.validate()?;
    let (lo, hi) = cloud
        .bounds()
        .ok_or_else(|| Error::InvalidInput("ground extraction needs a non-empty cloud".into()))?;
    if hi.x - lo.x <= 0.0 && hi.y - lo.y <= 0.0 {
        return Err(Error::Degenerate("cloud has zero horizontal extent".into()));
    }
    let top = -lo.z + params.cloth_resolution;
    let mut cloth = Cloth::covering(cloud, params.cloth_resolution, top).expect("non-empty cloud");
    let collision = collision_field(&cloth, cloud);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iterations {
        iterations += 1;
        if simulate_cloth_step(&mut cloth, &collision, params) < params.displacement_epsilon {
            converged = true;
            break;
        }
    }

    let is_ground: Vec<bool> = cloud
        .points()
        .par_iter()
        .map(|p| (-p.z - cloth.height_at(p.x, p.y)).abs() <= params.class_threshold)
        .collect();
    let (g, ng): (Vec<usize>, Vec<usize>) = (0..cloud.len()).partition(|&i| is_ground[i]);
    Ok(GroundSplit {
        ground: cloud.select(&g),
        nonground: cloud.select(&ng),
        is_ground,
        cloth,
        iterations,
        converged,
    })
}

use nalgebra::{Point3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::cloudio::PointCloud;
use crate::error::{Error, Result};

/// `z = a·x + b·y + c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneSpec {
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub c: f64,
}

/// `amplitude · sin(2π (direction·xy) / wavelength + phase)`, direction normalized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub wavelength: f64,
    pub direction: [f64; 2],
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainSpec {
    #[serde(default = "flat")]
    pub plane: PlaneSpec,
    #[serde(default)]
    pub sinusoids: Vec<Sinusoid>,
}

fn flat() -> PlaneSpec {
    PlaneSpec { a: 0.0, b: 0.0, c: 0.0 }
}

impl Default for PlaneSpec {
    fn default() -> Self {
        flat()
    }
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }
}

/// Analytic heightfield.
#[derive(Clone, Debug, PartialEq)]
pub struct Terrain {
    plane: PlaneSpec,
    waves: Vec<(f64, Vector2<f64>, f64)>,
    gradient_bound: f64,
}

impl Terrain {
    pub fn new(spec: &TerrainSpec) -> Result<Self> {
        let mut waves = Vec::new();
        let mut bound = spec.plane.a.hypot(spec.plane.b);
        for (i, s) in spec.sinusoids.iter().enumerate() {
            let dir = Vector2::new(s.direction[0], s.direction[1]);
            let field = |name: &str| format!("terrain.sinusoids[{i}].{name}");
            if !(s.wavelength > 0.0) || !s.wavelength.is_finite() {
                return Err(Error::Config {
                    field: field("wavelength"),
                    message: "must be positive".into(),
                });
            }
            if !(dir.norm() > 0.0) || !dir.iter().all(|v| v.is_finite()) {
                return Err(Error::Config {
                    field: field("direction"),
                    message: "must be a nonzero finite vector".into(),
                });
            }
            if !s.amplitude.is_finite() || !s.phase.is_finite() {
                return Err(Error::Config {
                    field: field("amplitude"),
                    message: "amplitude and phase must be finite".into(),
                });
            }
            let k = dir.normalize() * (std::f64::consts::TAU / s.wavelength);
            bound += s.amplitude.abs() * k.norm();
            waves.push((s.amplitude, k, s.phase));
        }
        let p = spec.plane;
        if ![p.a, p.b, p.c].iter().all(|v| v.is_finite()) {
            return Err(Error::Config {
                field: "terrain.plane".into(),
                message: "coefficients must be finite".into(),
            });
        }
        Ok(Self {
            plane: spec.plane,
            waves,
            gradient_bound: bound,
        })
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        let mut z = self.plane.a * x + self.plane.b * y + self.plane.c;
        for (amp, k, phase) in &self.waves {
            z += amp * (k.x * x + k.y * y + phase).sin();
        }
        z
    }

    /// Upper bound on `‖∇height‖` anywhere.
    pub fn gradient_bound(&self) -> f64 {
        self.gradient_bound
    }
}

/// Terrain plus boxes within xy bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub terrain: Terrain,
    pub boxes: Vec<BoxSpec>,
    pub bounds: Bounds,
}

/// Densely sampled scene surfaces with generator labels.
#[derive(Clone, Debug)]
pub struct LabeledCloud {
    pub cloud: PointCloud,
    pub is_ground: Vec<bool>,
}

impl LabeledCloud {
    pub fn ground(&self) -> PointCloud {
        let idx: Vec<usize> = (0..self.cloud.len()).filter(|&i| self.is_ground[i]).collect();
        self.cloud.select(&idx)
    }

    pub fn nonground(&self) -> PointCloud {
        let idx: Vec<usize> = (0..self.cloud.len()).filter(|&i| !self.is_ground[i]).collect();
        self.cloud.select(&idx)
    }
}

impl Scene {
    pub fn new(terrain: &TerrainSpec, boxes: &[BoxSpec], bounds: Bounds) -> Result<Self> {
        if !(bounds.max[0] > bounds.min[0] && bounds.max[1] > bounds.min[1]) {
            return Err(Error::Config {
                field: "bounds".into(),
                message: "max must exceed min on both axes".into(),
            });
        }
        for (i, b) in boxes.iter().enumerate() {
            let ordered = (0..3).all(|a| b.min[a] < b.max[a]);
            let finite = b.min.iter().chain(&b.max).all(|v| v.is_finite());
            if !ordered || !finite {
                return Err(Error::Config {
                    field: format!("boxes[{i}]"),
                    message: "min must be strictly below max on every axis".into(),
                });
            }
            if !bounds.contains(b.min[0], b.min[1]) || !bounds.contains(b.max[0], b.max[1]) {
                return Err(Error::Config {
                    field: format!("boxes[{i}]"),
                    message: "box extends outside the scene bounds".into(),
                });
            }
        }
        Ok(Self {
            terrain: Terrain::new(terrain)?,
            boxes: boxes.to_vec(),
            bounds,
        })
    }

    fn inside_box(&self, p: &Point3<f64>) -> bool {
        self.boxes
            .iter()
            .any(|b| (0..3).all(|a| p[a] > b.min[a] && p[a] < b.max[a]))
    }

    /// Terrain sampled on a `spacing` grid over the bounds (ground), plus box
    /// tops and sides above the terrain (not ground). Terrain hidden inside boxes
    /// is omitted.
    pub fn reference_cloud(&self, spacing: f64) -> Result<LabeledCloud> {
        if !(spacing > 0.0) {
            return Err(Error::InvalidInput(format!("reference spacing must be positive, got {spacing}")));
        }
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        let [x0, y0] = self.bounds.min;
        let nx = ((self.bounds.max[0] - x0) / spacing).floor() as usize;
        let ny = ((self.bounds.max[1] - y0) / spacing).floor() as usize;
        for j in 0..=ny {
            for i in 0..=nx {
                let (x, y) = (x0 + i as f64 * spacing, y0 + j as f64 * spacing);
                let p = Point3::new(x, y, self.terrain.height(x, y));
                if !self.inside_box(&p) {
                    pts.push(p);
                    labels.push(true);
                }
            }
        }
        for b in &self.boxes {
            for p in box_surface(b, spacing) {
                if p.z >= self.terrain.height(p.x, p.y) && !self.inside_box(&p) {
                    pts.push(p);
                    labels.push(false);
                }
            }
        }
        Ok(LabeledCloud {
            cloud: PointCloud::new(pts)?,
            is_ground: labels,
        })
    }
}

fn steps(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let n = ((hi - lo) / spacing).ceil().max(1.0) as usize;
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

/// Grid samples on the top and four side faces of a box.
fn box_surface(b: &BoxSpec, spacing: f64) -> Vec<Point3<f64>> {
    let xs = steps(b.min[0], b.max[0], spacing);
    let ys = steps(b.min[1], b.max[1], spacing);
    let zs = steps(b.min[2], b.max[2], spacing);
    let mut out = Vec::new();
    for &x in &xs {
        for &y in &ys {
            out.push(Point3::new(x, y, b.max[2]));
        }
    }
    for &z in &zs[..zs.len() - 1] {
        for &x in &xs {
            out.push(Point3::new(x, b.min[1], z));
            out.push(Point3::new(x, b.max[1], z));
        }
        for &y in &ys[1..ys.len() - 1] {
            out.push(Point3::new(b.min[0], y, z));
            out.push(Point3::new(b.max[0], y, z));
        }
    }
    out
}

/// Entry distance of the ray `origin + t·dir` into `b`, if it enters at `t ≥ t_min`.
pub(crate) fn ray_box(origin: &Point3<f64>, dir: &Vector3<f64>, b: &BoxSpec, t_min: f64) -> Option<f64> {
    let mut enter = f64::NEG_INFINITY;
    let mut exit = f64::INFINITY;
    for a in 0..3 {
        if dir[a] == 0.0 {
            if origin[a] < b.min[a] || origin[a] > b.max[a] {
                return None;
            }
            continue;
        }
        let t1 = (b.min[a] - origin[a]) / dir[a];
        let t2 = (b.max[a] - origin[a]) / dir[a];
        enter = enter.max(t1.min(t2));
        exit = exit.min(t1.max(t2));
    }
    (enter <= exit && enter >= t_min).then_some(enter)
}

use nalgebra::{Point3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scene::{ray_box, Scene, Terrain};
use crate::cloudio::{PointCloud, RigidTransform};
use crate::error::{Error, Result};

/// Smallest march step along a ray (m).
const MIN_STEP: f64 = 1e-3;
/// Root bracket width at which bisection stops (m).
const ROOT_TOLERANCE: f64 = 1e-12;
/// ChaCha words reserved per ray.
const WORDS_PER_RAY: u128 = 64;

/// Ring layout and range model of a spinning multi-beam lidar.
#[derive(Clone, Debug, PartialEq)]
pub struct LidarModel {
    /// Beam elevation angles (rad).
    pub ring_elevations: Vec<f64>,
    /// Azimuth step (rad).
    pub horizontal_resolution: f64,
    pub min_range: f64,
    pub max_range: f64,
    /// Gaussian range noise (m).
    pub range_noise_sigma: f64,
    pub seed: u64,
}

/// YAML form of [`LidarModel`], angles in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarSpec {
    pub rings: usize,
    pub min_elevation_deg: f64,
    pub max_elevation_deg: f64,
    pub horizontal_resolution_deg: f64,
    pub min_range: f64,
    pub max_range: f64,
    pub range_noise_sigma: f64,
    pub seed: u64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            rings: 16,
            min_elevation_deg: -15.0,
            max_elevation_deg: 15.0,
            horizontal_resolution_deg: 0.4,
            min_range: 0.2,
            max_range: 30.0,
            range_noise_sigma: 0.01,
            seed: 0,
        }
    }
}

impl LidarSpec {
    pub fn to_model(&self) -> Result<LidarModel> {
        let bad = |field: &str, message: &str| {
            Err(Error::Config {
                field: format!("lidar.{field}"),
                message: message.into(),
            })
        };
        if self.rings == 0 {
            return bad("rings", "need at least one ring");
        }
        if self.rings > 1 && !(self.max_elevation_deg >= self.min_elevation_deg) {
            return bad("max_elevation_deg", "must not be below min_elevation_deg");
        }
        let elevations = if self.rings == 1 {
            vec![self.min_elevation_deg.to_radians()]
        } else {
            (0..self.rings)
                .map(|i| {
                    let f = i as f64 / (self.rings - 1) as f64;
                    (self.min_elevation_deg + f * (self.max_elevation_deg - self.min_elevation_deg)).to_radians()
                })
                .collect()
        };
        let model = LidarModel {
            ring_elevations: elevations,
            horizontal_resolution: self.horizontal_resolution_deg.to_radians(),
            min_range: self.min_range,
            max_range: self.max_range,
            range_noise_sigma: self.range_noise_sigma,
            seed: self.seed,
        };
        model.validate()?;
        Ok(model)
    }
}

impl Default for LidarModel {
    fn default() -> Self {
        LidarSpec::default().to_model().expect("default lidar spec is valid")
    }
}

impl LidarModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(Error::Config {
                field: format!("lidar.{field}"),
                message: message.into(),
            })
        };
        if !(self.horizontal_resolution > 0.0) || !self.horizontal_resolution.is_finite() {
            return bad("horizontal_resolution_deg", "must be positive");
        }
        if !(self.range_noise_sigma >= 0.0) || !self.range_noise_sigma.is_finite() {
            return bad("range_noise_sigma", "must be nonnegative");
        }
        if !(self.min_range >= 0.0) || !(self.max_range > self.min_range) || !self.max_range.is_finite() {
            return bad("max_range", "need 0 <= min_range < max_range");
        }
        if self.ring_elevations.iter().any(|e| !e.is_finite() || e.abs() >= std::f64::consts::FRAC_PI_2) {
            return bad("rings", "elevations must lie strictly between -90 and 90 degrees");
        }
        Ok(())
    }

    pub fn azimuth_count(&self) -> usize {
        (std::f64::consts::TAU / self.horizontal_resolution).round().max(1.0) as usize
    }

    pub fn ray_count(&self) -> usize {
        self.azimuth_count() * self.ring_elevations.len()
    }

    /// Unit direction of ray `(ring, azimuth index)` in the sensor frame.
    pub fn direction(&self, ring: usize, azimuth: usize) -> Vector3<f64> {
        let el = self.ring_elevations[ring];
        let az = azimuth as f64 * std::f64::consts::TAU / self.azimuth_count() as f64;
        Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }
}

/// First `t ≥ 0` where `origin + t·dir` meets the terrain, within `t_max`.
pub(crate) fn ray_terrain(terrain: &Terrain, origin: &Point3<f64>, dir: &Vector3<f64>, t_max: f64) -> Option<f64> {
    let gap = |t: f64| {
        let p = origin + dir * t;
        p.z - terrain.height(p.x, p.y)
    };
    // |d gap / dt| <= lipschitz, so a step of gap/lipschitz cannot cross the surface
    let lipschitz = dir.z.abs() + terrain.gradient_bound() * dir.xy().norm();
    if gap(0.0) <= 0.0 || lipschitz == 0.0 {
        return None;
    }
    let mut t = 0.0;
    let mut g = gap(0.0);
    loop {
        let next = t + (g / lipschitz).max(MIN_STEP);
        if next > t_max {
            let g_end = gap(t_max);
            if g_end > 0.0 {
                return None;
            }
            return Some(bisect(&gap, t, t_max));
        }
        let g_next = gap(next);
        if g_next <= 0.0 {
            return Some(bisect(&gap, t, next));
        }
        t = next;
        g = g_next;
    }
}

/// Root of `gap` in `[lo, hi]` with `gap(lo) > 0 >= gap(hi)`.
fn bisect(gap: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        if hi - lo <= ROOT_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Scan for the first tick of a sequence. See [`simulate_scan_at_tick`].
pub fn simulate_scan(scene: &Scene, pose: &RigidTransform, model: &LidarModel) -> PointCloud {
    simulate_scan_at_tick(scene, pose, model, 0)
}

/// Casts every ray from `pose` and returns the hits in the sensor frame, ring-major.
///
/// Range noise for ray `r` of tick `k` is drawn from ChaCha stream `k` at word
/// offset `64·r` of the model seed, so it is independent of evaluation order.
pub fn simulate_scan_at_tick(scene: &Scene, pose: &RigidTransform, model: &LidarModel, tick: u64) -> PointCloud {
    let origin = Point3::from(*pose.translation());
    let azimuths = model.azimuth_count();
    let noise = (model.range_noise_sigma > 0.0)
        .then(|| Normal::new(0.0, model.range_noise_sigma).expect("validated sigma"));
    let hits: Vec<Option<Point3<f64>>> = (0..model.ray_count())
        .into_par_iter()
        .map(|ray| {
            let (ring, az) = (ray / azimuths, ray % azimuths);
            let local = model.direction(ring, az);
            let dir = pose.transform_vector(&local);
            let mut range = ray_terrain(&scene.terrain, &origin, &dir, model.max_range);
            for b in &scene.boxes {
                if let Some(t) = ray_box(&origin, &dir, b, 0.0) {
                    if t <= model.max_range && range.is_none_or(|r| t < r) {
                        range = Some(t);
                    }
                }
            }
            let mut range = range?;
            if range < model.min_range {
                return None;
            }
            if let Some(n) = &noise {
                let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
                rng.set_stream(tick);
                rng.set_word_pos(ray as u128 * WORDS_PER_RAY);
                range += n.sample(&mut rng);
            }
            Some(Point3::from(local * range))
        })
        .collect();
    PointCloud::from_parts_unchecked(hits.into_iter().flatten().collect(), None)
}

//! Elevation grids built from ground points, the normal/slope/roughness filter
//! chain, traversability cost, and costmap export.

mod grid;

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Point2, Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloudio::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::PlaneFit;

pub use grid::{
    is_no_data, ElevationGrid, ELEVATION, NORMAL_X, NORMAL_Y, NORMAL_Z, NO_DATA, ROUGHNESS, SLOPE,
    TRAVERSABILITY,
};

/// PGM value of a traversable cell.
pub const PGM_FREE: u8 = 254;
/// PGM value of a non-traversable cell.
pub const PGM_OCCUPIED: u8 = 0;
/// PGM value of a no-data cell.
pub const PGM_UNKNOWN: u8 = 205;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraversabilityParams {
    /// m
    pub cell_size: f64,
    /// m
    pub normal_radius: f64,
    /// m
    pub roughness_radius: f64,
    /// rad
    pub slope_critical: f64,
    /// m
    pub roughness_critical: f64,
    pub slope_weight: f64,
    pub roughness_weight: f64,
    /// Cells with cost above this are not traversable.
    pub cost_cutoff: f64,
}

impl Default for TraversabilityParams {
    fn default() -> Self {
        Self {
            cell_size: 0.2,
            normal_radius: 0.4,
            roughness_radius: 0.2,
            slope_critical: 0.35,
            roughness_critical: 0.1,
            slope_weight: 0.5,
            roughness_weight: 0.5,
            cost_cutoff: 0.8,
        }
    }
}

impl TraversabilityParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::Config {
                field: format!("traversability.{field}"),
                message,
            })
        };
        for (field, v) in [
            ("cell_size", self.cell_size),
            ("normal_radius", self.normal_radius),
            ("roughness_radius", self.roughness_radius),
            ("slope_critical", self.slope_critical),
            ("roughness_critical", self.roughness_critical),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(field, format!("must be positive, got {v}"));
            }
        }
        for (field, v) in [("slope_weight", self.slope_weight), ("roughness_weight", self.roughness_weight)] {
            if !(v >= 0.0) {
                return bad(field, format!("must be nonnegative, got {v}"));
            }
        }
        if (self.slope_weight + self.roughness_weight - 1.0).abs() > 1e-9 {
            return bad("slope_weight", "slope_weight + roughness_weight must equal 1".into());
        }
        if !(0.0..=1.0).contains(&self.cost_cutoff) {
            return bad("cost_cutoff", format!("must lie in [0, 1], got {}", self.cost_cutoff));
        }
        Ok(())
    }
}

/// Mean point height per cell over the xy bounds of `ground`.
pub fn rasterize_elevation(ground: &PointCloud, params: &TraversabilityParams) -> Result<ElevationGrid> {
    params.validate()?;
    let (lo, hi) = ground
        .bounds()
        .ok_or_else(|| Error::InvalidInput("cannot rasterize an empty cloud".into()))?;
    let cs = params.cell_size;
    let width = ((hi.x - lo.x) / cs).floor() as usize + 1;
    let height = ((hi.y - lo.y) / cs).floor() as usize + 1;
    let mut grid = ElevationGrid::new(Point2::new(lo.x + 0.5 * cs, lo.y + 0.5 * cs), cs, width, height)?;
    let mut sum = vec![0.0; grid.cell_count()];
    let mut count = vec![0usize; grid.cell_count()];
    for p in ground.points() {
        let col = (((p.x - lo.x) / cs).floor() as usize).min(width - 1);
        let row = (((p.y - lo.y) / cs).floor() as usize).min(height - 1);
        let i = grid.index(col, row);
        sum[i] += p.z;
        count[i] += 1;
    }
    let elevation = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| if c == 0 { NO_DATA } else { s / c as f64 })
        .collect();
    grid.set_layer(ELEVATION, elevation)?;
    Ok(grid)
}

fn cell_point(grid: &ElevationGrid, elevation: &[f64], col: usize, row: usize) -> Option<Point3<f64>> {
    let z = elevation[grid.index(col, row)];
    (!is_no_data(z)).then(|| {
        let c = grid.cell_center(col, row);
        Point3::new(c.x, c.y, z)
    })
}

fn per_cell<T: Send>(grid: &ElevationGrid, f: impl Fn(usize, usize) -> T + Sync) -> Vec<T> {
    (0..grid.cell_count())
        .into_par_iter()
        .map(|i| f(i % grid.width(), i / grid.width()))
        .collect()
}

/// Plane-fit normals over the square window of half-width `normal_radius`.
/// Cells with fewer than three valid neighbors get no-data.
pub fn surface_normals_layer(grid: &ElevationGrid, params: &TraversabilityParams) -> Result<ElevationGrid> {
    let elevation = grid.require(ELEVATION)?;
    let normals: Vec<Option<Vector3<f64>>> = per_cell(grid, |col, row| {
        let center = cell_point(grid, elevation, col, row)?;
        let mut pts = vec![center];
        pts.extend(
            grid.window(col, row, params.normal_radius)
                .filter_map(|(c, r)| cell_point(grid, elevation, c, r)),
        );
        if pts.len() < 4 {
            return None;
        }
        let fit = PlaneFit::of_points(&pts)?;
        let [_, mid, max] = fit.eigenvalues;
        if !(max > 0.0) || mid <= 1e-12 * max {
            return None;
        }
        Some(if fit.normal.z < 0.0 { -fit.normal } else { fit.normal })
    });
    let mut out = grid.clone();
    for (k, name) in [NORMAL_X, NORMAL_Y, NORMAL_Z].iter().enumerate() {
        out.set_layer(name, normals.iter().map(|n| n.map_or(NO_DATA, |n| n[k])).collect())?;
    }
    Ok(out)
}

fn normal_at(grid: &ElevationGrid, i: usize) -> Option<Vector3<f64>> {
    let n = Vector3::new(
        grid.layer(NORMAL_X)?[i],
        grid.layer(NORMAL_Y)?[i],
        grid.layer(NORMAL_Z)?[i],
    );
    (!n.iter().any(|v| is_no_data(*v))).then_some(n)
}

/// `acos(normal_z)` in radians.
pub fn slope_layer(grid: &ElevationGrid) -> Result<ElevationGrid> {
    grid.require(NORMAL_Z)?;
    let nz = grid.layer(NORMAL_Z).unwrap_or_default();
    let slope = nz
        .iter()
        .map(|&z| if is_no_data(z) { NO_DATA } else { z.clamp(-1.0, 1.0).acos() })
        .collect();
    let mut out = grid.clone();
    out.set_layer(SLOPE, slope)?;
    Ok(out)
}

/// RMS distance of the neighboring cells (square window of half-width
/// `roughness_radius`) to the plane with the cell's normal through their centroid.
pub fn roughness_layer(grid: &ElevationGrid, params: &TraversabilityParams) -> Result<ElevationGrid> {
    let elevation = grid.require(ELEVATION)?;
    for name in [NORMAL_X, NORMAL_Y, NORMAL_Z] {
        grid.require(name)?;
    }
    let roughness = per_cell(grid, |col, row| {
        let i = grid.index(col, row);
        let (Some(n), false) = (normal_at(grid, i), is_no_data(elevation[i])) else {
            return NO_DATA;
        };
        let hood: Vec<Point3<f64>> = grid
            .window(col, row, params.roughness_radius)
            .filter_map(|(c, r)| cell_point(grid, elevation, c, r))
            .collect();
        if hood.len() < 3 {
            return NO_DATA;
        }
        let centroid = hood.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / hood.len() as f64;
        let ss: f64 = hood.iter().map(|p| n.dot(&(p.coords - centroid)).powi(2)).sum();
        (ss / hood.len() as f64).sqrt()
    });
    let mut out = grid.clone();
    out.set_layer(ROUGHNESS, roughness)?;
    Ok(out)
}

/// Cost of one cell from its slope (rad) and roughness (m).
pub fn cell_cost(slope: f64, roughness: f64, params: &TraversabilityParams) -> f64 {
    if is_no_data(slope) || is_no_data(roughness) {
        return NO_DATA;
    }
    let s = (slope / params.slope_critical).min(1.0);
    let r = (roughness / params.roughness_critical).min(1.0);
    if s >= 1.0 || r >= 1.0 {
        1.0
    } else {
        params.slope_weight * s + params.roughness_weight * r
    }
}

/// Weighted, saturated slope/roughness cost in `[0, 1]`.
pub fn traversability_layer(grid: &ElevationGrid, params: &TraversabilityParams) -> Result<ElevationGrid> {
    params.validate()?;
    let slope = grid.require(SLOPE)?;
    let rough = grid.require(ROUGHNESS)?;
    let cost = slope.iter().zip(rough).map(|(&s, &r)| cell_cost(s, r, params)).collect();
    let mut out = grid.clone();
    out.set_layer(TRAVERSABILITY, cost)?;
    Ok(out)
}

/// Runs every filter after rasterization.
pub fn build_traversability(ground: &PointCloud, params: &TraversabilityParams) -> Result<ElevationGrid> {
    let grid = rasterize_elevation(ground, params)?;
    let grid = surface_normals_layer(&grid, params)?;
    let grid = slope_layer(&grid)?;
    let grid = roughness_layer(&grid, params)?;
    traversability_layer(&grid, params)
}

/// PGM pixel value per cell, in raster order (row 0 = max-y edge).
pub fn costmap_pixels(grid: &ElevationGrid, params: &TraversabilityParams) -> Result<Vec<u8>> {
    let cost = grid.require(TRAVERSABILITY)?;
    let mut pixels = Vec::with_capacity(grid.cell_count());
    for row in (0..grid.height()).rev() {
        for col in 0..grid.width() {
            let c = cost[grid.index(col, row)];
            pixels.push(if is_no_data(c) {
                PGM_UNKNOWN
            } else if c <= params.cost_cutoff {
                PGM_FREE
            } else {
                PGM_OCCUPIED
            });
        }
    }
    Ok(pixels)
}

/// Occupancy-map YAML text for an image named `image`.
pub fn costmap_yaml(grid: &ElevationGrid, image: &str) -> String {
    let o = grid.min_corner();
    format!(
        "image: {image}\nresolution: {}\norigin: [{}, {}, 0.0]\nnegate: 0\noccupied_thresh: 0.65\nfree_thresh: 0.196\n",
        fmt_float(grid.cell_size()),
        fmt_float(o.x),
        fmt_float(o.y)
    )
}

fn fmt_float(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        v.to_string()
    }
}

/// Writes `<prefix>.pgm` and `<prefix>.yaml`; returns both paths.
pub fn export_costmap(
    grid: &ElevationGrid,
    path_prefix: impl AsRef<Path>,
    params: &TraversabilityParams,
) -> Result<(PathBuf, PathBuf)> {
    let prefix = path_prefix.as_ref();
    let pgm_path = with_suffix(prefix, "pgm");
    let yaml_path = with_suffix(prefix, "yaml");
    let mut pgm = format!("P5\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    pgm.extend(costmap_pixels(grid, params)?);
    fs::write(&pgm_path, pgm).map_err(|e| Error::io(&pgm_path, e))?;
    let image = pgm_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    fs::write(&yaml_path, costmap_yaml(grid, &image)).map_err(|e| Error::io(&yaml_path, e))?;
    Ok((pgm_path, yaml_path))
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

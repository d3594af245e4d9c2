use std::collections::BTreeMap;

use nalgebra::Point2;

use crate::error::{Error, Result};

/// Value stored in a layer where a cell has no data.
pub const NO_DATA: f64 = f64::NAN;

pub const ELEVATION: &str = "elevation";
pub const NORMAL_X: &str = "normal_x";
pub const NORMAL_Y: &str = "normal_y";
pub const NORMAL_Z: &str = "normal_z";
pub const SLOPE: &str = "slope";
pub const ROUGHNESS: &str = "roughness";
pub const TRAVERSABILITY: &str = "traversability";

#[inline]
pub fn is_no_data(v: f64) -> bool {
    v.is_nan()
}

/// Row-major raster (`x` fastest) with named layers. `NaN` marks no-data.
#[derive(Clone, Debug, PartialEq)]
pub struct ElevationGrid {
    origin: Point2<f64>,
    cell_size: f64,
    width: usize,
    height: usize,
    layers: BTreeMap<String, Vec<f64>>,
}

impl ElevationGrid {
    /// `origin` is the center of cell `(0, 0)`.
    pub fn new(origin: Point2<f64>, cell_size: f64, width: usize, height: usize) -> Result<Self> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(Error::InvalidInput(format!("cell size must be positive, got {cell_size}")));
        }
        if !(origin.x.is_finite() && origin.y.is_finite()) {
            return Err(Error::InvalidInput("grid origin must be finite".into()));
        }
        Ok(Self {
            origin,
            cell_size,
            width,
            height,
            layers: BTreeMap::new(),
        })
    }

    pub fn origin(&self) -> Point2<f64> {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn cell_center(&self, col: usize, row: usize) -> Point2<f64> {
        Point2::new(
            self.origin.x + col as f64 * self.cell_size,
            self.origin.y + row as f64 * self.cell_size,
        )
    }

    /// Lower-left corner of the raster.
    pub fn min_corner(&self) -> Point2<f64> {
        Point2::new(self.origin.x - 0.5 * self.cell_size, self.origin.y - 0.5 * self.cell_size)
    }

    pub fn layer(&self, name: &str) -> Option<&[f64]> {
        self.layers.get(name).map(Vec::as_slice)
    }

    pub fn has_layer(&self, name: &str) -> bool {
        self.layers.contains_key(name)
    }

    pub fn layer_names(&self) -> impl Iterator<Item = &str> {
        self.layers.keys().map(String::as_str)
    }

    pub(crate) fn require(&self, name: &str) -> Result<&[f64]> {
        self.layer(name)
            .ok_or_else(|| Error::InvalidInput(format!("grid is missing the `{name}` layer")))
    }

    /// Adds or replaces a layer; its length must match the grid.
    pub fn set_layer(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.cell_count() {
            return Err(Error::InvalidInput(format!(
                "layer `{name}` has {} cells, grid has {}",
                values.len(),
                self.cell_count()
            )));
        }
        self.layers.insert(name.to_string(), values);
        Ok(())
    }

    /// Cells whose centers lie within `radius` of cell `(col, row)` along both
    /// axes, excluding the cell itself.
    pub(crate) fn window(&self, col: usize, row: usize, radius: f64) -> impl Iterator<Item = (usize, usize)> + '_ {
        let reach = (radius / self.cell_size + 1e-9).floor() as isize;
        let (w, h) = (self.width as isize, self.height as isize);
        let (c0, r0) = (col as isize, row as isize);
        (-reach..=reach).flat_map(move |dr| {
            (-reach..=reach).filter_map(move |dc| {
                let (c, r) = (c0 + dc, r0 + dr);
                if (dc == 0 && dr == 0) || c < 0 || r < 0 || c >= w || r >= h {
                    None
                } else {
                    Some((c as usize, r as usize))
                }
            })
        })
    }

    /// CSV dump of a layer: one line per row (ascending `y`), `nan` for no-data.
    pub fn layer_csv(&self, name: &str) -> Result<String> {
        let values = self.require(name)?;
        let mut out = String::new();
        for row in 0..self.height {
            let line: Vec<String> = (0..self.width)
                .map(|col| {
                    let v = values[self.index(col, row)];
                    if is_no_data(v) {
                        "nan".to_string()
                    } else {
                        v.to_string()
                    }
                })
                .collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        Ok(out)
    }
}

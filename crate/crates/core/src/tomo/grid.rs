use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Node-centred velocities (km/s) on the square `[−L, L]²`.
///
/// `values[[iy, ix]]` is the velocity at `(−L + ix·h, −L + iy·h)` with
/// `h = 2L / (G − 1)`; each node owns the square cell of side `h` around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityGrid {
    pub values: Array2<f64>,
    pub half_width: f64,
}

impl VelocityGrid {
    pub fn new(values: Array2<f64>, half_width: f64) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c || r < 3 {
            return Err(Error::input(format!("velocity grid must be square with G >= 3, got {r}x{c}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::input("domain half-width must be positive"));
        }
        if !values.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(Error::input("velocities must be positive and finite"));
        }
        Ok(VelocityGrid { values: values.as_standard_layout().into_owned(), half_width })
    }

    pub fn homogeneous(g: usize, half_width: f64, velocity: f64) -> Result<Self> {
        Self::new(Array2::from_elem((g, g), velocity), half_width)
    }

    /// Samples `velocity(x, y)` at every node.
    pub fn from_fn(g: usize, half_width: f64, velocity: impl Fn(Point) -> f64) -> Result<Self> {
        let geom = Geometry::new(g, half_width);
        let values = Array2::from_shape_fn((g, g), |(iy, ix)| velocity(geom.node_position(ix, iy)));
        Self::new(values, half_width)
    }

    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.size(), self.half_width)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.values.mapv(|v| v * factor), self.half_width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub g: usize,
    pub half_width: f64,
    pub spacing: f64,
}

impl Geometry {
    pub fn new(g: usize, half_width: f64) -> Self {
        Geometry { g, half_width, spacing: 2.0 * half_width / (g - 1) as f64 }
    }

    #[inline]
    pub fn node_position(&self, ix: usize, iy: usize) -> Point {
        [-self.half_width + ix as f64 * self.spacing, -self.half_width + iy as f64 * self.spacing]
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.g + ix
    }

    pub fn contains(&self, p: Point) -> bool {
        let l = self.half_width * (1.0 + 1e-12);
        p.iter().all(|c| c.is_finite() && c.abs() <= l)
    }

    /// Continuous grid coordinates of a point (node units).
    #[inline]
    pub fn grid_coords(&self, p: Point) -> (f64, f64) {
        ((p[0] + self.half_width) / self.spacing, (p[1] + self.half_width) / self.spacing)
    }

    /// Node whose cell contains `p`.
    pub fn nearest_node(&self, p: Point) -> (usize, usize) {
        let (gx, gy) = self.grid_coords(p);
        let clamp = |v: f64| (v.round().max(0.0) as usize).min(self.g - 1);
        (clamp(gx), clamp(gy))
    }

    /// Bilinear interpolation weights: four `(flat index, weight)` pairs.
    pub fn bilinear(&self, p: Point) -> [(usize, f64); 4] {
        let (gx, gy) = self.grid_coords(p);
        let max = (self.g - 2) as f64;
        let fx = gx.floor().clamp(0.0, max);
        let fy = gy.floor().clamp(0.0, max);
        let (tx, ty) = ((gx - fx).clamp(0.0, 1.0), (gy - fy).clamp(0.0, 1.0));
        let (ix, iy) = (fx as usize, fy as usize);
        [
            (self.index(ix, iy), (1.0 - tx) * (1.0 - ty)),
            (self.index(ix + 1, iy), tx * (1.0 - ty)),
            (self.index(ix, iy + 1), (1.0 - tx) * ty),
            (self.index(ix + 1, iy + 1), tx * ty),
        ]
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_basics() {
        let g = Geometry::new(11, 5.0);
        assert_eq!(g.spacing, 1.0);
        assert_eq!(g.node_position(0, 0), [-5.0, -5.0]);
        assert_eq!(g.node_position(10, 5), [5.0, 0.0]);
        assert_eq!(g.nearest_node([0.4, -0.6]), (5, 4));
        let w = g.bilinear([0.25, 0.5]);
        assert!((w.iter().map(|(_, w)| w).sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(g.contains([5.0, -5.0]));
        assert!(!g.contains([5.1, 0.0]));
    }

    #[test]
    fn invalid_grids() {
        assert!(VelocityGrid::homogeneous(2, 5.0, 1.0).is_err());
        assert!(VelocityGrid::homogeneous(5, 5.0, 0.0).is_err());
        assert!(VelocityGrid::new(Array2::from_elem((3, 4), 1.0), 1.0).is_err());
    }
}

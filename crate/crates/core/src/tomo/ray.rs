//! Ray backtracking through a travel-time field.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::tomo::fmm::TravelTimeField;
use crate::tomo::grid::{distance, Geometry, Point, VelocityGrid};

/// Per-node path lengths (km) of the first-arrival ray from `receiver` back to
/// the field's source, as a `G × G` array.
///
/// The ray follows `−∇T` with steps of half a cell; `∇T` is the bilinear
/// interpolation of centred node differences. Each step's length is credited
/// to the node owning its midpoint. Once the ray is within one cell of the
/// source the remaining straight segment is added.
pub fn ray_path_lengths(field: &TravelTimeField, receiver: Point) -> Result<Array2<f64>> {
    let geom = field.geometry();
    if !geom.contains(receiver) {
        return Err(Error::input(format!("receiver {receiver:?} lies outside the domain")));
    }
    let g = geom.g;
    let h = geom.spacing;
    let step = 0.5 * h;
    let grads = node_gradients(&geom, field.raw_times());
    let mut lengths = Array2::zeros((g, g));
    let credit = |a: Point, b: Point, lengths: &mut Array2<f64>| {
        let len = distance(a, b);
        if len == 0.0 {
            return;
        }
        // split long segments so every piece lies mostly in one cell
        let pieces = (len / (0.25 * h)).ceil().max(1.0) as usize;
        for k in 0..pieces {
            let t = (k as f64 + 0.5) / pieces as f64;
            let mid = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let (ix, iy) = geom.nearest_node(mid);
            lengths[[iy, ix]] += len / pieces as f64;
        }
    };

    let source = field.source;
    let mut p = receiver;
    let max_steps = 10 * g;
    for _ in 0..max_steps {
        if distance(p, source) <= h {
            credit(p, source, &mut lengths);
            return Ok(lengths);
        }
        let gr = interpolate_gradient(&geom, &grads, p);
        let norm = (gr[0] * gr[0] + gr[1] * gr[1]).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Numerical(format!("ray stalled at {p:?}")));
        }
        let mut next = [p[0] - step * gr[0] / norm, p[1] - step * gr[1] / norm];
        let l = geom.half_width;
        next[0] = next[0].clamp(-l, l);
        next[1] = next[1].clamp(-l, l);
        credit(p, next, &mut lengths);
        p = next;
    }
    Err(Error::Numerical(format!("ray from {receiver:?} did not reach the source within {max_steps} steps")))
}

/// Ray-based sensitivity `∂T/∂v_c ≈ −ℓ_c / v_c²`.
pub fn ray_sensitivity(grid: &VelocityGrid, field: &TravelTimeField, receiver: Point) -> Result<Array2<f64>> {
    let mut lengths = ray_path_lengths(field, receiver)?;
    lengths.zip_mut_with(&grid.values, |l, v| *l = -*l / (v * v));
    Ok(lengths)
}

fn node_gradients(geom: &Geometry, times: &[f64]) -> Vec<[f64; 2]> {
    let g = geom.g;
    let h = geom.spacing;
    let t = |ix: usize, iy: usize| times[geom.index(ix, iy)];
    let mut out = vec![[0.0; 2]; g * g];
    for iy in 0..g {
        for ix in 0..g {
            let dx = match ix {
                0 => (t(1, iy) - t(0, iy)) / h,
                _ if ix == g - 1 => (t(ix, iy) - t(ix - 1, iy)) / h,
                _ => (t(ix + 1, iy) - t(ix - 1, iy)) / (2.0 * h),
            };
            let dy = match iy {
                0 => (t(ix, 1) - t(ix, 0)) / h,
                _ if iy == g - 1 => (t(ix, iy) - t(ix, iy - 1)) / h,
                _ => (t(ix, iy + 1) - t(ix, iy - 1)) / (2.0 * h),
            };
            out[geom.index(ix, iy)] = [dx, dy];
        }
    }
    out
}

fn interpolate_gradient(geom: &Geometry, grads: &[[f64; 2]], p: Point) -> [f64; 2] {
    let mut out = [0.0; 2];
    for (k, w) in geom.bilinear(p) {
        out[0] += w * grads[k][0];
        out[1] += w * grads[k][1];
    }
    out
}

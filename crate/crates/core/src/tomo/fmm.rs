//! First-order fast marching for `|∇T| = 1 / v` and its reverse-mode derivative.
//!
//! Nodes within [`SOURCE_RADIUS`] cells of the source are seeded with the
//! straight-ray time `dist · (s_node + s_src) / 2` (`s = 1/v`), then the
//! narrow band is advanced with the standard upwind update
//!
//! ```text
//! (T − a)² + (T − b)² = (d s)²      if |a − b| < d s
//! T = min(a, b) + d s               otherwise
//! ```
//!
//! where `a`, `b` are the smallest accepted neighbours on two orthogonal arms
//! of length `d`, taken over both the axis-aligned (`d = h`) and the diagonal
//! (`d = h√2`) stencil. Each node keeps the stencil that produced its final
//! value, so the solution is an explicit composition of smooth maps along the
//! accepted order and the adjoint sweep in reverse order yields exact
//! derivatives of the discrete travel times with respect to every node slowness.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::tomo::grid::{distance, Geometry, Point, VelocityGrid};

/// Radius (in cells) of the analytically initialized neighbourhood of the source.
pub const SOURCE_RADIUS: f64 = 2.0;

const NONE: u32 = u32::MAX;

const NEIGHBOURS: [(isize, isize); 8] = [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (1, 1), (1, -1), (-1, 1)];

/// How a node's accepted time depends on upstream times and slownesses:
/// `dT = Σ parent_coef · dT_parent + Σ slow_coef · ds_node`.
#[derive(Debug, Clone, Copy)]
struct Stencil {
    parents: [(u32, f64); 2],
    slowness: [(u32, f64); 2],
}

impl Stencil {
    const EMPTY: Stencil = Stencil { parents: [(NONE, 0.0); 2], slowness: [(NONE, 0.0); 2] };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Far,
    Band,
    Accepted,
}

#[derive(Debug, Clone, Copy)]
struct HeapEntry(f64, u32);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// First-arrival times from one source, with the bookkeeping needed for the adjoint.
#[derive(Debug, Clone)]
pub struct TravelTimeField {
    pub source: Point,
    geometry: Geometry,
    times: Vec<f64>,
    order: Vec<u32>,
    stencils: Vec<Stencil>,
}

/// Solves the discrete Eikonal equation from `source`.
pub fn fast_marching(grid: &VelocityGrid, source: Point) -> Result<TravelTimeField> {
    let geom = grid.geometry();
    if !geom.contains(source) {
        return Err(Error::input(format!("source {source:?} lies outside the domain")));
    }
    let g = geom.g;
    let h = geom.spacing;
    let slowness: Vec<f64> = grid.values.iter().map(|v| 1.0 / v).collect();
    let n = g * g;
    let mut times = vec![f64::INFINITY; n];
    let mut state = vec![State::Far; n];
    let mut stencils = vec![Stencil::EMPTY; n];
    let mut order = Vec::with_capacity(n);
    let mut heap = BinaryHeap::with_capacity(4 * g);

    let (sx, sy) = geom.nearest_node(source);
    let src_node = geom.index(sx, sy);
    let radius = SOURCE_RADIUS * h;
    let reach = SOURCE_RADIUS.ceil() as isize + 1;
    let (gx, gy) = geom.grid_coords(source);
    let (cx, cy) = (gx.floor() as isize, gy.floor() as isize);
    for iy in (cy - reach)..=(cy + reach + 1) {
        for ix in (cx - reach)..=(cx + reach + 1) {
            if ix < 0 || iy < 0 || ix >= g as isize || iy >= g as isize {
                continue;
            }
            let (ix, iy) = (ix as usize, iy as usize);
            let dist = distance(geom.node_position(ix, iy), source);
            let corner = (ix as isize == cx || ix as isize == cx + 1) && (iy as isize == cy || iy as isize == cy + 1);
            if dist > radius && !corner {
                continue;
            }
            let k = geom.index(ix, iy);
            times[k] = 0.5 * dist * (slowness[k] + slowness[src_node]);
            stencils[k] = Stencil {
                parents: [(NONE, 0.0); 2],
                slowness: [(k as u32, 0.5 * dist), (src_node as u32, 0.5 * dist)],
            };
            state[k] = State::Band;
            heap.push(HeapEntry(times[k], k as u32));
        }
    }

    while let Some(HeapEntry(t, k)) = heap.pop() {
        let k = k as usize;
        if state[k] == State::Accepted || t > times[k] {
            continue;
        }
        state[k] = State::Accepted;
        order.push(k as u32);
        let (ix, iy) = (k % g, k / g);
        for (dx, dy) in NEIGHBOURS {
            let (nx, ny) = (ix.wrapping_add_signed(dx), iy.wrapping_add_signed(dy));
            if nx >= g || ny >= g {
                continue;
            }
            let m = geom.index(nx, ny);
            if state[m] == State::Accepted {
                continue;
            }
            if let Some((tm, st)) = upwind_update(&geom, &times, &state, &slowness, nx, ny, h) {
                if tm < times[m] {
                    times[m] = tm;
                    stencils[m] = st;
                    state[m] = State::Band;
                    heap.push(HeapEntry(tm, m as u32));
                }
            }
        }
    }

    Ok(TravelTimeField { source, geometry: geom, times, order, stencils })
}

/// Smallest accepted node among two candidates.
fn pair_min(geom: &Geometry, times: &[f64], state: &[State], a: Option<(usize, usize)>, b: Option<(usize, usize)>) -> Option<(f64, usize)> {
    [a, b]
        .into_iter()
        .flatten()
        .map(|(x, y)| geom.index(x, y))
        .filter(|&k| state[k] == State::Accepted)
        .map(|k| (times[k], k))
        .min_by(|p, q| p.0.total_cmp(&q.0))
}

/// Upwind candidate from one orthogonal stencil with arm length `arm`.
fn stencil_update(k: usize, hs: f64, arm: f64, ax: Option<(f64, usize)>, ay: Option<(f64, usize)>) -> Option<(f64, Stencil)> {
    let one_sided = |(a, ka): (f64, usize)| {
        (
            a + hs,
            Stencil { parents: [(ka as u32, 1.0), (NONE, 0.0)], slowness: [(k as u32, arm), (NONE, 0.0)] },
        )
    };
    match (ax, ay) {
        (None, None) => None,
        (Some(p), None) | (None, Some(p)) => Some(one_sided(p)),
        (Some((a, ka)), Some((b, kb))) => {
            let diff = a - b;
            if diff.abs() >= hs {
                Some(one_sided(if a <= b { (a, ka) } else { (b, kb) }))
            } else {
                let root = (2.0 * hs * hs - diff * diff).sqrt();
                let t = 0.5 * (a + b + root);
                let ca = 0.5 - 0.5 * diff / root;
                let cb = 0.5 + 0.5 * diff / root;
                // ∂t/∂s = arm² s / root
                let cs = arm * hs / root;
                Some((
                    t,
                    Stencil { parents: [(ka as u32, ca), (kb as u32, cb)], slowness: [(k as u32, cs), (NONE, 0.0)] },
                ))
            }
        }
    }
}

/// The smaller of the axis-aligned and the diagonal (rotated) stencil candidates.
fn upwind_update(geom: &Geometry, times: &[f64], state: &[State], slowness: &[f64], ix: usize, iy: usize, h: f64) -> Option<(f64, Stencil)> {
    let g = geom.g as isize;
    let at = |dx: isize, dy: isize| {
        let (x, y) = (ix as isize + dx, iy as isize + dy);
        (x >= 0 && y >= 0 && x < g && y < g).then_some((x as usize, y as usize))
    };
    let k = geom.index(ix, iy);
    let axis = stencil_update(
        k,
        h * slowness[k],
        h,
        pair_min(geom, times, state, at(-1, 0), at(1, 0)),
        pair_min(geom, times, state, at(0, -1), at(0, 1)),
    );
    let arm = std::f64::consts::SQRT_2 * h;
    let diagonal = stencil_update(
        k,
        arm * slowness[k],
        arm,
        pair_min(geom, times, state, at(-1, -1), at(1, 1)),
        pair_min(geom, times, state, at(1, -1), at(-1, 1)),
    );
    match (axis, diagonal) {
        (Some(a), Some(d)) => Some(if d.0 < a.0 { d } else { a }),
        (a, d) => a.or(d),
    }
}

impl TravelTimeField {
    /// Node times as a `G × G` array indexed `[iy, ix]`.
    pub fn times(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.geometry.g, self.geometry.g), self.times.clone()).expect("square grid")
    }

    pub(crate) fn raw_times(&self) -> &[f64] {
        &self.times
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    /// Flat node indices in the order they were accepted.
    pub fn accepted_order(&self) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().map(|&k| k as usize)
    }

    /// Bilinearly interpolated travel time at `p`.
    pub fn time_at(&self, p: Point) -> Result<f64> {
        if !self.geometry.contains(p) {
            return Err(Error::input(format!("receiver {p:?} lies outside the domain")));
        }
        Ok(self.geometry.bilinear(p).iter().map(|&(k, w)| w * self.times[k]).sum())
    }

    /// Accumulates `Σ_r c_r ∂T(receiver_r)/∂s` over node slownesses `s` into `grad_slowness`.
    pub fn accumulate_slowness_gradient(&self, receivers: &[(Point, f64)], grad_slowness: &mut [f64]) -> Result<()> {
        let mut adj = vec![0.0; self.times.len()];
        for &(p, c) in receivers {
            if !self.geometry.contains(p) {
                return Err(Error::input(format!("receiver {p:?} lies outside the domain")));
            }
            for (k, w) in self.geometry.bilinear(p) {
                adj[k] += c * w;
            }
        }
        for &k in self.order.iter().rev() {
            let lam = adj[k as usize];
            if lam == 0.0 {
                continue;
            }
            let st = &self.stencils[k as usize];
            for &(p, c) in &st.parents {
                if p != NONE {
                    adj[p as usize] += c * lam;
                }
            }
            for &(q, c) in &st.slowness {
                if q != NONE {
                    grad_slowness[q as usize] += c * lam;
                }
            }
        }
        Ok(())
    }
}

/// `∂T(receiver)/∂v_c` for every node `c`, as a `G × G` array.
///
/// Exact derivative of the discrete solver (adjoint sweep) followed by the
/// chain rule `∂/∂v = −s² ∂/∂s`.
pub fn travel_time_gradient(grid: &VelocityGrid, source: Point, receiver: Point) -> Result<Array2<f64>> {
    let field = fast_marching(grid, source)?;
    let mut gs = vec![0.0; field.times.len()];
    field.accumulate_slowness_gradient(&[(receiver, 1.0)], &mut gs)?;
    let g = grid.size();
    Ok(Array2::from_shape_fn((g, g), |(iy, ix)| {
        let v = grid.values[[iy, ix]];
        -gs[iy * g + ix] / (v * v)
    }))
}

/// Travel-time field from every source in `sources`.
pub fn solve_all(grid: &VelocityGrid, sources: &[Point]) -> Result<Vec<TravelTimeField>> {
    sources.iter().map(|&s| fast_marching(grid, s)).collect()
}

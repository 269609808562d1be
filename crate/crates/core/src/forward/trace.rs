//! Exact line integrals of piecewise-constant pixel maps by grid traversal.

use crate::geometry::{GridSpec, MaterialMap, PixelBounds};

/// ∫ μ along the segment `start → end`, exact for the pixelized map.
///
/// Parts of the segment outside the grid contribute nothing. When the map
/// declares a uniform background outside an active box, only the box is
/// traversed and the background contribution is added in closed form.
pub fn segment_integral(map: &MaterialMap, start: (f64, f64), end: (f64, f64)) -> f64 {
    let grid = &map.grid;
    let n = grid.n_xy();
    let full = PixelBounds {
        ix0: 0,
        ix1: n - 1,
        iy0: 0,
        iy1: n - 1,
    };
    match map.background_mu {
        Some(bg) => {
            let length = clipped_length(grid, &full, start, end);
            let excess = match map.active {
                Some(bounds) => traverse(grid, &bounds, start, end, |p| map.mu[p] - bg),
                None => 0.0,
            };
            bg * length + excess
        }
        None => traverse(grid, &full, start, end, |p| map.mu[p]),
    }
}

/// Optical depth from the center of `pixel` to `target`.
pub fn pixel_to_point(map: &MaterialMap, pixel: usize, target: (f64, f64)) -> f64 {
    segment_integral(map, map.grid.pixel_center(pixel), target)
}

fn box_mm(grid: &GridSpec, b: &PixelBounds) -> (f64, f64, f64, f64) {
    let half = grid.covered_half_width();
    (
        -half + b.ix0 as f64 * grid.dx,
        -half + (b.ix1 + 1) as f64 * grid.dx,
        -half + b.iy0 as f64 * grid.dx,
        -half + (b.iy1 + 1) as f64 * grid.dx,
    )
}

/// Parametric interval `[t0, t1] ⊂ [0, 1]` of the segment inside the box.
fn clip(grid: &GridSpec, b: &PixelBounds, start: (f64, f64), end: (f64, f64)) -> Option<(f64, f64)> {
    let (x0, x1, y0, y1) = box_mm(grid, b);
    let (dx, dy) = (end.0 - start.0, end.1 - start.1);
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for (p, d, lo, hi) in [(start.0, dx, x0, x1), (start.1, dy, y0, y1)] {
        if d == 0.0 {
            if p < lo || p > hi {
                return None;
            }
        } else {
            let (a, b) = ((lo - p) / d, (hi - p) / d);
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            t0 = t0.max(a);
            t1 = t1.min(b);
        }
    }
    (t1 > t0).then_some((t0, t1))
}

fn clipped_length(grid: &GridSpec, b: &PixelBounds, start: (f64, f64), end: (f64, f64)) -> f64 {
    let len = (end.0 - start.0).hypot(end.1 - start.1);
    clip(grid, b, start, end).map_or(0.0, |(t0, t1)| (t1 - t0) * len)
}

/// Σ value(q) · chord(q) over the pixels of box `b` crossed by the segment.
fn traverse(
    grid: &GridSpec,
    b: &PixelBounds,
    start: (f64, f64),
    end: (f64, f64),
    value: impl Fn(usize) -> f64,
) -> f64 {
    let Some((t_enter, t_exit)) = clip(grid, b, start, end) else {
        return 0.0;
    };
    let n = grid.n_xy();
    let h = grid.dx;
    let half = grid.covered_half_width();
    let (dx, dy) = (end.0 - start.0, end.1 - start.1);
    let len = dx.hypot(dy);

    let entry = (start.0 + t_enter * dx, start.1 + t_enter * dy);
    let cell = |v: f64, lo: usize, hi: usize| -> isize {
        (((v + half) / h).floor() as isize).clamp(lo as isize, hi as isize)
    };
    let mut ix = cell(entry.0, b.ix0, b.ix1);
    let mut iy = cell(entry.1, b.iy0, b.iy1);

    let step_x: isize = if dx > 0.0 { 1 } else { -1 };
    let step_y: isize = if dy > 0.0 { 1 } else { -1 };
    let boundary = |i: isize, step: isize| -half + (i + (step > 0) as isize) as f64 * h;
    let (mut t_max_x, t_delta_x) = if dx != 0.0 {
        ((boundary(ix, step_x) - start.0) / dx, h / dx.abs())
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let (mut t_max_y, t_delta_y) = if dy != 0.0 {
        ((boundary(iy, step_y) - start.1) / dy, h / dy.abs())
    } else {
        (f64::INFINITY, f64::INFINITY)
    };

    let (lo_x, hi_x, lo_y, hi_y) = (b.ix0 as isize, b.ix1 as isize, b.iy0 as isize, b.iy1 as isize);
    let mut t = t_enter;
    let mut sum = 0.0;
    loop {
        let t_next = t_max_x.min(t_max_y).min(t_exit);
        if t_next > t {
            sum += (t_next - t) * value(iy as usize * n + ix as usize);
            t = t_next;
        }
        if t >= t_exit {
            break;
        }
        if t_max_x <= t_max_y {
            ix += step_x;
            t_max_x += t_delta_x;
            if ix < lo_x || ix > hi_x {
                break;
            }
        } else {
            iy += step_y;
            t_max_y += t_delta_y;
            if iy < lo_y || iy > hi_y {
                break;
            }
        }
    }
    sum * len
}

//! Shortest traversable paths on the ground-truth grid: 8-connected A*
//! followed by line-of-sight shortcutting. Used both as the per-trial
//! optimal-length reference and as the local expert for training data.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geom::{polyline_length, WorldPoint};
use crate::raster::{GeoRef, ProbabilityRaster};

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn is_free(raster: &ProbabilityRaster, row: usize, col: usize) -> bool {
    raster.get(row, col) > 0.5
}

#[derive(PartialEq)]
struct OpenEntry {
    f: f64,
    g: f64,
    cell: usize,
}

impl Eq for OpenEntry {}

// min-heap on f; ties broken on g then cell index so pop order is fixed
impl Ord for OpenEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(other.g.total_cmp(&self.g))
            .then(other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest 8-connected path between the cells containing `from` and `to`,
/// as cell-center points with the exact endpoints substituted at both ends.
/// Diagonal moves are allowed only when both adjacent orthogonal cells are
/// free, so paths never squeeze between corner-touching obstacles. Returns
/// `None` when either endpoint is off-grid or blocked, or no path exists.
pub fn grid_path(
    raster: &ProbabilityRaster,
    from: &WorldPoint,
    to: &WorldPoint,
) -> Option<Vec<WorldPoint>> {
    let g = raster.georef();
    let (rows, cols) = (g.height, g.width);
    let (sr, sc) = g.world_to_cell(from).ok()?;
    let (tr, tc) = g.world_to_cell(to).ok()?;
    if !is_free(raster, sr, sc) || !is_free(raster, tr, tc) {
        return None;
    }
    let start = sr * cols + sc;
    let target = tr * cols + tc;
    let res = g.resolution;

    let octile = |cell: usize| -> f64 {
        let (r, c) = (cell / cols, cell % cols);
        let dr = r.abs_diff(tr) as f64;
        let dc = c.abs_diff(tc) as f64;
        res * (dr.max(dc) + (SQRT2 - 1.0) * dr.min(dc))
    };

    let mut best_g = vec![f64::INFINITY; rows * cols];
    let mut parent = vec![usize::MAX; rows * cols];
    let mut open = BinaryHeap::new();
    best_g[start] = 0.0;
    open.push(OpenEntry {
        f: octile(start),
        g: 0.0,
        cell: start,
    });

    while let Some(OpenEntry { g: gd, cell, .. }) = open.pop() {
        if gd > best_g[cell] {
            continue; // stale entry
        }
        if cell == target {
            break;
        }
        let (r, c) = (cell / cols, cell % cols);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                    continue;
                }
                let (nr, nc) = (nr as usize, nc as usize);
                if !is_free(raster, nr, nc) {
                    continue;
                }
                let step = if dr != 0 && dc != 0 {
                    // both orthogonal neighbors must be free to cut the corner
                    if !is_free(raster, r, nc) || !is_free(raster, nr, c) {
                        continue;
                    }
                    res * SQRT2
                } else {
                    res
                };
                let next = nr * cols + nc;
                let ng = gd + step;
                if ng < best_g[next] - 1e-12 {
                    best_g[next] = ng;
                    parent[next] = cell;
                    open.push(OpenEntry {
                        f: ng + octile(next),
                        g: ng,
                        cell: next,
                    });
                }
            }
        }
    }

    if best_g[target].is_infinite() {
        return None;
    }
    let mut cells = vec![target];
    while *cells.last().unwrap() != start {
        cells.push(parent[*cells.last().unwrap()]);
    }
    cells.reverse();
    let mut points: Vec<WorldPoint> = cells
        .iter()
        .map(|&cell| g.cell_center(cell / cols, cell % cols))
        .collect();
    *points.first_mut().unwrap() = *from;
    *points.last_mut().unwrap() = *to;
    Some(points)
}

/// All sample points at `step` spacing along `a`-`b` (inclusive ends) lie on
/// free cells.
pub fn line_of_sight(
    raster: &ProbabilityRaster,
    a: &WorldPoint,
    b: &WorldPoint,
    step: f64,
) -> bool {
    let dist = a.distance(b);
    let n = (dist / step).ceil().max(1.0) as usize;
    (0..=n).all(|i| {
        let t = i as f64 / n as f64;
        let p = WorldPoint::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
        matches!(raster.sample_prob(&p), Ok(v) if v > 0.5)
    })
}

/// Greedy shortcutting: from each kept vertex, jump to the farthest later
/// vertex still in line of sight. Output vertices are a subsequence of the
/// input, so the result stays on free cells.
pub fn string_pull(
    raster: &ProbabilityRaster,
    path: &[WorldPoint],
    step: f64,
) -> Vec<WorldPoint> {
    if path.len() <= 2 {
        return path.to_vec();
    }
    let mut out = vec![path[0]];
    let mut i = 0;
    while i + 1 < path.len() {
        let mut j = path.len() - 1;
        while j > i + 1 && !line_of_sight(raster, &path[i], &path[j], step) {
            j -= 1;
        }
        out.push(path[j]);
        i = j;
    }
    out
}

/// Shortest traversable path between nearby points, searched inside a
/// cell-aligned bounding box padded by `pad_m` and string-pulled. Operating
/// on a window keeps short-hop queries cheap on large worlds; results stay
/// in world coordinates. Deterministic in the raster and endpoints.
pub fn windowed_path(
    raster: &ProbabilityRaster,
    a: &WorldPoint,
    b: &WorldPoint,
    pad_m: f64,
) -> Option<Vec<WorldPoint>> {
    let g = raster.georef();
    let res = g.resolution;
    let col0 = (((a.x.min(b.x) - pad_m - g.origin_x) / res).floor()).max(0.0) as usize;
    let row0 = (((a.y.min(b.y) - pad_m - g.origin_y) / res).floor()).max(0.0) as usize;
    let col1 = ((((a.x.max(b.x) + pad_m - g.origin_x) / res).ceil()).max(0.0) as usize).min(g.width);
    let row1 = ((((a.y.max(b.y) + pad_m - g.origin_y) / res).ceil()).max(0.0) as usize).min(g.height);
    if col1 <= col0 || row1 <= row0 {
        return None;
    }
    let sub_georef = GeoRef::new(
        g.origin_x + col0 as f64 * res,
        g.origin_y + row0 as f64 * res,
        res,
        col1 - col0,
        row1 - row0,
    );
    let mut cells = Vec::with_capacity(sub_georef.cell_count());
    for r in row0..row1 {
        for c in col0..col1 {
            cells.push(raster.get(r, c));
        }
    }
    let sub = ProbabilityRaster::new(sub_georef, cells).ok()?;
    let path = grid_path(&sub, a, b)?;
    Some(string_pull(&sub, &path, res * 0.4))
}

/// Length of the shortcut shortest traversable path between two points — a
/// tight lower bound on any route a robot can actually drive between them.
pub fn geodesic_length(
    raster: &ProbabilityRaster,
    from: &WorldPoint,
    to: &WorldPoint,
) -> Option<f64> {
    let path = grid_path(raster, from, to)?;
    let pulled = string_pull(raster, &path, raster.georef().resolution * 0.4);
    Some(polyline_length(&pulled))
}

//! Planar geometry primitives shared across the crate.
//!
//! All coordinates live in a local metric frame (meters). GPS or other
//! geodetic inputs are assumed to be projected upstream.

use serde::{Deserialize, Serialize};

/// A point in the local world frame, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &WorldPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn sub(&self, other: &WorldPoint) -> (f64, f64) {
        (self.x - other.x, self.y - other.y)
    }

    pub fn add_offset(&self, dx: f64, dy: f64) -> WorldPoint {
        WorldPoint::new(self.x + dx, self.y + dy)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Closest point to `p` on the segment `a`-`b`, with the segment parameter in [0, 1].
pub fn project_on_segment(p: &WorldPoint, a: &WorldPoint, b: &WorldPoint) -> (WorldPoint, f64) {
    let (ex, ey) = b.sub(a);
    let len2 = ex * ex + ey * ey;
    if len2 == 0.0 {
        return (*a, 0.0);
    }
    let (px, py) = p.sub(a);
    let t = ((px * ex + py * ey) / len2).clamp(0.0, 1.0);
    (WorldPoint::new(a.x + t * ex, a.y + t * ey), t)
}

/// Minimum distance from `p` to the polyline through `points`.
///
/// Returns `(distance, arc_length_of_closest_point)`. A single-point
/// polyline degenerates to point distance at arc length 0.
pub fn distance_to_polyline(p: &WorldPoint, points: &[WorldPoint]) -> (f64, f64) {
    assert!(!points.is_empty(), "polyline must have at least one point");
    if points.len() == 1 {
        return (p.distance(&points[0]), 0.0);
    }
    let mut best = (f64::INFINITY, 0.0);
    let mut arc = 0.0;
    for pair in points.windows(2) {
        let (proj, t) = project_on_segment(p, &pair[0], &pair[1]);
        let d = p.distance(&proj);
        let seg_len = pair[0].distance(&pair[1]);
        if d < best.0 {
            best = (d, arc + t * seg_len);
        }
        arc += seg_len;
    }
    best
}

/// Point on the polyline at the given arc length, clamped to the ends.
pub fn polyline_point_at(points: &[WorldPoint], arc: f64) -> WorldPoint {
    assert!(!points.is_empty());
    if arc <= 0.0 || points.len() == 1 {
        return points[0];
    }
    let mut remaining = arc;
    for pair in points.windows(2) {
        let seg_len = pair[0].distance(&pair[1]);
        if remaining <= seg_len {
            if seg_len == 0.0 {
                return pair[0];
            }
            let t = remaining / seg_len;
            let (ex, ey) = pair[1].sub(&pair[0]);
            return WorldPoint::new(pair[0].x + t * ex, pair[0].y + t * ey);
        }
        remaining -= seg_len;
    }
    *points.last().unwrap()
}

/// Total length of the polyline through `points`.
pub fn polyline_length(points: &[WorldPoint]) -> f64 {
    points.windows(2).map(|p| p[0].distance(&p[1])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn segment_projection_clamps_to_endpoints() {
        let a = WorldPoint::new(0.0, 0.0);
        let b = WorldPoint::new(10.0, 0.0);
        let (p, t) = project_on_segment(&WorldPoint::new(-5.0, 3.0), &a, &b);
        assert_eq!(p, a);
        assert_eq!(t, 0.0);
        let (p, t) = project_on_segment(&WorldPoint::new(4.0, 7.0), &a, &b);
        assert_relative_eq!(p.x, 4.0);
        assert_relative_eq!(t, 0.4);
    }

    #[test]
    fn polyline_distance_picks_nearest_segment() {
        let pts = [
            WorldPoint::new(0.0, 0.0),
            WorldPoint::new(10.0, 0.0),
            WorldPoint::new(10.0, 10.0),
        ];
        let (d, arc) = distance_to_polyline(&WorldPoint::new(12.0, 5.0), &pts);
        assert_relative_eq!(d, 2.0);
        assert_relative_eq!(arc, 15.0);
    }

    #[test]
    fn polyline_point_round_trips_arc_length() {
        let pts = [
            WorldPoint::new(0.0, 0.0),
            WorldPoint::new(3.0, 0.0),
            WorldPoint::new(3.0, 4.0),
        ];
        let p = polyline_point_at(&pts, 5.0);
        assert_relative_eq!(p.x, 3.0);
        assert_relative_eq!(p.y, 2.0);
        assert_relative_eq!(polyline_length(&pts), 7.0);
    }
}

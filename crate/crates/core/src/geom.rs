//! Planar distance queries between points, segments and triangles.

use std::cmp::Ordering;

use crate::exact::orient;
use crate::mesh::Vertex;

pub fn point_segment_dist(p: &Vertex, a: &Vertex, b: &Vertex) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let s = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(&Vertex::new(a.x + s * dx, a.y + s * dy))
}

/// Closed triangle containment; the triangle may have either orientation.
pub fn point_in_triangle(p: &Vertex, t: &[Vertex; 3]) -> bool {
    let o = |a: &Vertex, b: &Vertex| orient(a.xy(), b.xy(), p.xy());
    let s = [o(&t[0], &t[1]), o(&t[1], &t[2]), o(&t[2], &t[0])];
    !s.contains(&Ordering::Less) || !s.contains(&Ordering::Greater)
}

fn on_segment(p: &Vertex, a: &Vertex, b: &Vertex) -> bool {
    a.x.min(b.x) <= p.x && p.x <= a.x.max(b.x) && a.y.min(b.y) <= p.y && p.y <= a.y.max(b.y)
}

pub fn segments_intersect(a: &Vertex, b: &Vertex, c: &Vertex, d: &Vertex) -> bool {
    let o1 = orient(a.xy(), b.xy(), c.xy());
    let o2 = orient(a.xy(), b.xy(), d.xy());
    let o3 = orient(c.xy(), d.xy(), a.xy());
    let o4 = orient(c.xy(), d.xy(), b.xy());
    if o1 != o2
        && o3 != o4
        && o1 != Ordering::Equal
        && o2 != Ordering::Equal
        && o3 != Ordering::Equal
        && o4 != Ordering::Equal
    {
        return true;
    }
    (o1 == Ordering::Equal && on_segment(c, a, b))
        || (o2 == Ordering::Equal && on_segment(d, a, b))
        || (o3 == Ordering::Equal && on_segment(a, c, d))
        || (o4 == Ordering::Equal && on_segment(b, c, d))
}

pub fn segment_segment_dist(a: &Vertex, b: &Vertex, c: &Vertex, d: &Vertex) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_dist(a, c, d)
        .min(point_segment_dist(b, c, d))
        .min(point_segment_dist(c, a, b))
        .min(point_segment_dist(d, a, b))
}

/// Distance between a point and a closed triangle.
pub fn point_triangle_dist(p: &Vertex, t: &[Vertex; 3]) -> f64 {
    if point_in_triangle(p, t) {
        return 0.0;
    }
    (0..3).map(|i| point_segment_dist(p, &t[i], &t[(i + 1) % 3])).fold(f64::INFINITY, f64::min)
}

/// Distance between the closest points of two closed triangles.
pub fn triangle_dist(s: &[Vertex; 3], t: &[Vertex; 3]) -> f64 {
    if s.iter().any(|p| point_in_triangle(p, t)) || t.iter().any(|p| point_in_triangle(p, s)) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for i in 0..3 {
        for j in 0..3 {
            best = best.min(segment_segment_dist(&s[i], &s[(i + 1) % 3], &t[j], &t[(j + 1) % 3]));
        }
    }
    best
}

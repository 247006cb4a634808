//! Closest-feature classification and separation distances between
//! segments, points and triangles.

use crate::autodiff::Real;
use crate::vector::{Vec3, V3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    /// Point to point: `[a, b]`.
    PP,
    /// Point to edge: edge `[a, b]`, point `c`.
    PE,
    /// Edge to edge: `[a, b]` against `[c, d]`.
    EE,
    /// Point to triangle: triangle `[a, b, c]`, point `d`.
    PT,
    /// Point `a` above a horizontal ground plane.
    Ground,
}

impl FeatureKind {
    pub fn n_nodes(self) -> usize {
        match self {
            FeatureKind::Ground => 1,
            FeatureKind::PP => 2,
            FeatureKind::PE => 3,
            FeatureKind::EE | FeatureKind::PT => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FeatureKind::PP => "PP",
            FeatureKind::PE => "PE",
            FeatureKind::EE => "EE",
            FeatureKind::PT => "PT",
            FeatureKind::Ground => "ground",
        }
    }
}

/// Closest features of a contact pair with node indices in formula order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Feature {
    pub kind: FeatureKind,
    pub nodes: [usize; 4],
    pub distance: f64,
}

/// Relative tolerance for deciding that a closest-point parameter sits on an
/// endpoint.
const END_TOL: f64 = 1e-9;

/// Closest points of segments `p1-q1` and `p2-q2` as parameters `(s, t)`.
/// Parallel segments pin `s` to an endpoint.
pub fn segment_params(p1: Vec3, q1: Vec3, p2: Vec3, q2: Vec3) -> (f64, f64) {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let c = d1.dot(&r);
    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    let mut s = if denom > 1e-10 * a * e {
        ((b * f - c * e) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    (s, t)
}

fn is_end(s: f64) -> Option<usize> {
    if s <= END_TOL {
        Some(0)
    } else if s >= 1.0 - END_TOL {
        Some(1)
    } else {
        None
    }
}

/// Classifies the closest features of segments `e1 = [a, b]` and `e2 = [c, d]`
/// (Lumelsky-style clamped parameters).
pub fn classify_segments(e1: [usize; 2], e2: [usize; 2], x: impl Fn(usize) -> Vec3) -> Feature {
    let (p1, q1, p2, q2) = (x(e1[0]), x(e1[1]), x(e2[0]), x(e2[1]));
    let (s, t) = segment_params(p1, q1, p2, q2);
    let c1 = p1 + (q1 - p1) * s;
    let c2 = p2 + (q2 - p2) * t;
    let distance = (c1 - c2).norm();
    let nodes = match (is_end(s), is_end(t)) {
        (None, None) => {
            // near-parallel lines make the plane formula ill-conditioned
            let n = (q1 - p1).cross(&(q2 - p2));
            if n.norm() <= 1e-8 * (q1 - p1).norm() * (q2 - p2).norm() {
                return point_segment(e1[0], e2, &x);
            }
            return Feature {
                kind: FeatureKind::EE,
                nodes: [e1[0], e1[1], e2[0], e2[1]],
                distance,
            };
        }
        (Some(i), None) => [e2[0], e2[1], e1[i], usize::MAX],
        (None, Some(j)) => [e1[0], e1[1], e2[j], usize::MAX],
        (Some(i), Some(j)) => [e1[i], e2[j], usize::MAX, usize::MAX],
    };
    let kind = if nodes[2] == usize::MAX {
        FeatureKind::PP
    } else {
        FeatureKind::PE
    };
    Feature { kind, nodes, distance }
}

/// Closest feature between point `p` and segment `e`.
pub fn point_segment(p: usize, e: [usize; 2], x: impl Fn(usize) -> Vec3) -> Feature {
    let (xp, a, b) = (x(p), x(e[0]), x(e[1]));
    let d = b - a;
    let t = ((xp - a).dot(&d) / d.dot(&d)).clamp(0.0, 1.0);
    let distance = (xp - (a + d * t)).norm();
    match is_end(t) {
        None => Feature {
            kind: FeatureKind::PE,
            nodes: [e[0], e[1], p, usize::MAX],
            distance,
        },
        Some(i) => Feature {
            kind: FeatureKind::PP,
            nodes: [p, e[i], usize::MAX, usize::MAX],
            distance,
        },
    }
}

/// Barycentric coordinates `(u, v, w)` of the projection of `p` onto the plane
/// of triangle `a, b, c`.
pub fn barycentric<T: Real>(p: V3<T>, a: V3<T>, b: V3<T>, c: V3<T>) -> [T; 3] {
    let v0 = b - a;
    let v1 = c - a;
    let v2 = p - a;
    let d00 = v0.dot(&v0);
    let d01 = v0.dot(&v1);
    let d11 = v1.dot(&v1);
    let d20 = v2.dot(&v0);
    let d21 = v2.dot(&v1);
    let denom = d00 * d11 - d01 * d01;
    let v = (d11 * d20 - d01 * d21) / denom;
    let w = (d00 * d21 - d01 * d20) / denom;
    [T::cst(1.0) - v - w, v, w]
}

/// Closest feature between point `p` and triangle `tri`.
pub fn point_triangle(p: usize, tri: [usize; 3], x: impl Fn(usize) -> Vec3) -> Feature {
    let (xp, a, b, c) = (x(p), x(tri[0]), x(tri[1]), x(tri[2]));
    let bary = barycentric(xp, a, b, c);
    if bary.iter().all(|&w| w > END_TOL) {
        let n = (b - a).cross(&(c - a)).normalized();
        return Feature {
            kind: FeatureKind::PT,
            nodes: [tri[0], tri[1], tri[2], p],
            distance: (xp - a).dot(&n).abs(),
        };
    }
    let mut best: Option<Feature> = None;
    for k in 0..3 {
        let f = point_segment(p, [tri[k], tri[(k + 1) % 3]], &x);
        if best.map_or(true, |b| f.distance < b.distance) {
            best = Some(f);
        }
    }
    best.expect("triangle has edges")
}

fn keep_min(best: &mut Option<Feature>, f: Feature) {
    if best.map_or(true, |b| f.distance < b.distance) {
        *best = Some(f);
    }
}

/// Closest feature between segment `e` and triangle `tri`.
pub fn segment_triangle(e: [usize; 2], tri: [usize; 3], x: impl Fn(usize) -> Vec3) -> Feature {
    let mut best = None;
    for p in e {
        keep_min(&mut best, point_triangle(p, tri, &x));
    }
    for k in 0..3 {
        keep_min(&mut best, classify_segments(e, [tri[k], tri[(k + 1) % 3]], &x));
    }
    best.expect("non-empty feature set")
}

/// Closest feature between two triangles.
pub fn triangle_triangle(t1: [usize; 3], t2: [usize; 3], x: impl Fn(usize) -> Vec3) -> Feature {
    let mut best = None;
    for p in t1 {
        keep_min(&mut best, point_triangle(p, t2, &x));
    }
    for p in t2 {
        keep_min(&mut best, point_triangle(p, t1, &x));
    }
    for i in 0..3 {
        for j in 0..3 {
            keep_min(
                &mut best,
                classify_segments([t1[i], t1[(i + 1) % 3]], [t2[j], t2[(j + 1) % 3]], &x),
            );
        }
    }
    best.expect("non-empty feature set")
}

/// Separation of a classified feature, written once for floats and duals.
/// `x` holds the feature's nodes in formula order; `plane` is the ground
/// height for [`FeatureKind::Ground`].
pub fn separation<T: Real>(kind: FeatureKind, x: &[V3<T>; 4], plane: f64) -> T {
    let [a, b, c, d] = *x;
    match kind {
        FeatureKind::PP => (a - b).norm(),
        FeatureKind::PE => (a - b).cross(&(b - c)).norm() / (a - b).norm(),
        FeatureKind::EE => {
            let n = (a - b).cross(&(c - d));
            ((a - c).dot(&n) / n.norm()).abs()
        }
        FeatureKind::PT => {
            let n = (b - a).cross(&(c - a));
            ((d - a).dot(&n) / n.norm()).abs()
        }
        FeatureKind::Ground => a.z - plane,
    }
}

/// Closest-point weights, positive on the first side and negative on the
/// second, so that `sum w_i x_i` runs from the second closest point to the
/// first. They sum to zero except for ground contact.
pub fn closest_weights<T: Real>(kind: FeatureKind, x: &[V3<T>; 4]) -> [T; 4] {
    let [a, b, c, d] = *x;
    let one = T::cst(1.0);
    let zero = T::cst(0.0);
    match kind {
        FeatureKind::Ground => [one, zero, zero, zero],
        FeatureKind::PP => [one, -one, zero, zero],
        FeatureKind::PE => {
            let e = b - a;
            let t = (c - a).dot(&e) / e.norm_sq();
            [-(one - t), -t, one, zero]
        }
        FeatureKind::EE => {
            let d1 = b - a;
            let d2 = d - c;
            let r = a - c;
            let (aa, bb, cc) = (d1.norm_sq(), d1.dot(&d2), d2.norm_sq());
            let (dd, ee) = (d1.dot(&r), d2.dot(&r));
            let den = aa * cc - bb * bb;
            let s = (bb * ee - cc * dd) / den;
            let t = (aa * ee - bb * dd) / den;
            [one - s, s, -(one - t), -t]
        }
        FeatureKind::PT => {
            let [u, v, w] = barycentric(d, a, b, c);
            [-u, -v, -w, one]
        }
    }
}

//! Reference and material frames on twisting edges, parallel transport,
//! reference twist and the per-step mid-edge frames of shell edges.

use std::collections::VecDeque;
use std::f64::consts::PI;

use crate::autodiff::Real;
use crate::error::{Result, SimError};
use crate::robot::{BendTwistSpring, SoftRobot};
use crate::vector::{node_pos, Vec3, V3};

/// Below this value of `1 + t_from . t_to` transport goes through an
/// intermediate perpendicular axis.
const ANTIPODAL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct FrameSet {
    /// Unit tangent per edge (zero on edges without a frame).
    pub tangent: Vec<Vec3>,
    pub d1: Vec<Vec3>,
    pub d2: Vec<Vec3>,
    /// Unwrapped reference twist per bend-twist spring.
    pub ref_twist: Vec<f64>,
    /// Averaged face normal per shell edge.
    pub n_avg: Vec<Vec3>,
    /// `n_avg x e_hat` snapshot taken at the start of the step.
    pub tau0: Vec<Vec3>,
}

impl FrameSet {
    /// Material directors `(m1, m2)` for twist angle `theta`.
    pub fn material_frame(&self, edge: usize, theta: f64) -> (Vec3, Vec3) {
        let (s, c) = theta.sin_cos();
        let (d1, d2) = (self.d1[edge], self.d2[edge]);
        (d1 * c + d2 * s, d2 * c - d1 * s)
    }

    /// Worst deviation of `{d1, d2, t}` from an orthonormal basis.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.tangent.len() {
            let b = [self.d1[k], self.d2[k], self.tangent[k]];
            if b[2] == Vec3::zero() {
                continue;
            }
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((b[i].dot(&b[j]) - want).abs());
                }
            }
        }
        worst
    }
}

/// Minimal rotation taking unit `from` to unit `to`, applied to `v`.
pub fn parallel_transport<T: Real>(v: V3<T>, from: V3<T>, to: V3<T>) -> V3<T> {
    let c = from.dot(&to);
    if c.re() + 1.0 < ANTIPODAL_TOL {
        let p = V3::<T>::from_f64(seed_director(from.re()));
        let half = rotate_min(v, from, p);
        return rotate_min(half, p, to);
    }
    rotate_min(v, from, to)
}

fn rotate_min<T: Real>(v: V3<T>, from: V3<T>, to: V3<T>) -> V3<T> {
    let c = from.dot(&to);
    let w = from.cross(&to);
    if c.re() > 0.0 {
        let k = w.dot(&v) / (c + 1.0);
        return v.scale(c) + w.cross(&v) + w.scale(k);
    }
    // axis-angle form keeps precision when the tangents are nearly opposite
    let s = w.norm();
    let axis = w.scale(T::cst(1.0) / s);
    v.scale(c) + axis.cross(&v).scale(s) + axis.scale(axis.dot(&v) * (T::cst(1.0) - c))
}

/// Unit vector perpendicular to `t`, built from the global axis least aligned
/// with it (ties resolved in the order z, y, x).
pub fn seed_director(t: Vec3) -> Vec3 {
    let axes = [Vec3::unit_z(), Vec3::unit_y(), Vec3::unit_x()];
    let mut best = axes[0];
    let mut best_dot = f64::INFINITY;
    for a in axes {
        let d = a.dot(&t).abs();
        if d < best_dot - 1e-14 {
            best = a;
            best_dot = d;
        }
    }
    (best - t * best.dot(&t)).normalized()
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Signed angle about `tj` taking `d1i`, transported from `ti` to `tj`, onto
/// `d1j`. Inputs are the sign-adjusted frames of a bend-twist spring.
pub fn reference_twist_raw<T: Real>(d1i: V3<T>, ti: V3<T>, d1j: V3<T>, tj: V3<T>) -> T {
    let u = parallel_transport(d1i, ti, tj);
    u.cross(&d1j).dot(&tj).atan2(u.dot(&d1j))
}

/// Sign-adjusted tangent and first director of the two edges of a spring.
pub fn spring_frames(spring: &BendTwistSpring, frames: &FrameSet) -> [(Vec3, Vec3); 2] {
    let f = |k: usize| {
        let e = spring.edges[k];
        let s = spring.signs[k];
        (frames.tangent[e] * s, frames.d1[e] * s)
    };
    [f(0), f(1)]
}

/// Reference twist of `spring`, unwrapped against `base`.
pub fn compute_reference_twist(spring: &BendTwistSpring, frames: &FrameSet, base: f64) -> f64 {
    let [(ti, d1i), (tj, d1j)] = spring_frames(spring, frames);
    let raw = reference_twist_raw(d1i, ti, d1j, tj);
    base + wrap_angle(raw - base)
}

fn edge_tangent(robot: &SoftRobot, q: &[f64], edge: usize) -> Result<Vec3> {
    let [a, b] = robot.edges[edge].nodes;
    let e = node_pos(q, b) - node_pos(q, a);
    let l = e.norm();
    if l < 1e-12 {
        return Err(SimError::Geometry(format!("edge {edge} has zero tangent")));
    }
    Ok(e * (1.0 / l))
}

/// Builds reference frames on every twisting edge by seeding the first edge of
/// each connected component and space-transporting across shared nodes.
pub fn init_reference_frames(robot: &SoftRobot, q: &[f64]) -> Result<FrameSet> {
    let n_edges = robot.edges.len();
    let mut tangent = vec![Vec3::zero(); n_edges];
    let mut d1 = vec![Vec3::zero(); n_edges];
    let mut d2 = vec![Vec3::zero(); n_edges];
    for k in robot.twisting_edges() {
        tangent[k] = edge_tangent(robot, q, k)?;
    }

    let mut incident = vec![Vec::new(); robot.n_nodes()];
    for k in robot.twisting_edges() {
        let [a, b] = robot.edges[k].nodes;
        incident[a].push(k);
        incident[b].push(k);
    }
    let mut visited = vec![false; n_edges];
    let mut queue = VecDeque::new();
    for root in robot.twisting_edges() {
        if visited[root] {
            continue;
        }
        visited[root] = true;
        d1[root] = seed_director(tangent[root]);
        queue.push_back(root);
        while let Some(a) = queue.pop_front() {
            for n in robot.edges[a].nodes {
                let sa = if robot.edges[a].nodes[1] == n { 1.0 } else { -1.0 };
                for &b in &incident[n] {
                    if visited[b] {
                        continue;
                    }
                    let sb = if robot.edges[b].nodes[0] == n { 1.0 } else { -1.0 };
                    let moved = parallel_transport(d1[a] * sa, tangent[a] * sa, tangent[b] * sb);
                    d1[b] = orthonormalize(moved * sb, tangent[b]);
                    visited[b] = true;
                    queue.push_back(b);
                }
            }
        }
    }
    for k in robot.twisting_edges() {
        d2[k] = tangent[k].cross(&d1[k]);
    }

    let mut frames = FrameSet {
        tangent,
        d1,
        d2,
        ref_twist: vec![0.0; robot.bend_twist_springs.len()],
        n_avg: vec![Vec3::zero(); n_edges],
        tau0: vec![Vec3::zero(); n_edges],
    };
    for (i, s) in robot.bend_twist_springs.iter().enumerate() {
        frames.ref_twist[i] = compute_reference_twist(s, &frames, 0.0);
    }
    update_midedge_edge_frames(robot, q, &mut frames);
    Ok(frames)
}

fn orthonormalize(d: Vec3, t: Vec3) -> Vec3 {
    (d - t * d.dot(&t)).normalized()
}

/// Time-parallel transport of every reference frame onto the tangents of `q`,
/// followed by reference twist and mid-edge frame updates.
pub fn update_frames_after_step(robot: &SoftRobot, old: &FrameSet, q: &[f64]) -> Result<FrameSet> {
    let mut new = old.clone();
    for k in robot.twisting_edges() {
        let t = edge_tangent(robot, q, k)?;
        let mut d1 = parallel_transport(old.d1[k], old.tangent[k], t);
        let mut d2 = t.cross(&d1);
        let drift = d1.dot(&t).abs().max((d1.norm() - 1.0).abs());
        if drift > 1e-12 {
            d1 = orthonormalize(d1, t);
            d2 = t.cross(&d1);
        }
        new.tangent[k] = t;
        new.d1[k] = d1;
        new.d2[k] = d2;
    }
    for (i, s) in robot.bend_twist_springs.iter().enumerate() {
        new.ref_twist[i] = compute_reference_twist(s, &new, old.ref_twist[i]);
    }
    update_midedge_edge_frames(robot, q, &mut new);
    Ok(new)
}

/// Unit normal of triangle `t` at `q`.
pub fn triangle_normal(robot: &SoftRobot, q: &[f64], t: usize) -> Vec3 {
    let [a, b, c] = robot.mesh.triangles[t];
    let (xa, xb, xc) = (node_pos(q, a), node_pos(q, b), node_pos(q, c));
    (xb - xa).cross(&(xc - xa)).normalized()
}

/// Recomputes `n_avg` and the `tau0` snapshot on shell edges. On fold-through
/// (opposite face normals) the previous snapshot is kept.
pub fn update_midedge_edge_frames(robot: &SoftRobot, q: &[f64], frames: &mut FrameSet) {
    for k in robot.shell_edges() {
        let e = &robot.edges[k];
        let mut sum = Vec3::zero();
        for &t in &e.triangles {
            sum = sum + triangle_normal(robot, q, t);
        }
        if sum.norm() < 1e-6 {
            log::warn!("fold-through at shell edge {k}; keeping previous mid-edge frame");
            continue;
        }
        let n = sum.normalized();
        let ehat = (node_pos(q, e.nodes[1]) - node_pos(q, e.nodes[0])).normalized();
        frames.n_avg[k] = n;
        frames.tau0[k] = n.cross(&ehat);
    }
}

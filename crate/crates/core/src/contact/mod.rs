//! Incremental-potential style contact: candidate pairs, smooth penalty
//! energy on the separation distance and smoothed Coulomb friction.

pub mod broadphase;
pub mod geometry;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{EnergyContribution, Local};
use crate::autodiff::{Dual, HyperDual, Real};
use crate::error::{Result, SimError};
use crate::robot::{EdgeKind, SoftRobot};
use crate::vector::{node_pos, V3};

pub use broadphase::{brute_force_candidates, build_candidate_set};
pub use geometry::{Feature, FeatureKind};

/// Regularization of the tangential speed norm (m/s).
pub const FRICTION_EPS: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactParams {
    /// Distance tolerance `delta` of the smooth branch (m).
    pub delta: f64,
    /// Penalty stiffness multiplier (N/m, energy is `k_c` times m^2).
    pub stiffness: f64,
    #[serde(default)]
    pub friction: f64,
    /// Slipping tolerance `nu` (m/s).
    #[serde(default = "default_slip")]
    pub slip_tolerance: f64,
    /// Extra broad-phase reach (m). Defaults to twice the largest nodal
    /// displacement of the previous step.
    #[serde(default)]
    pub margin: Option<f64>,
    #[serde(default = "default_true")]
    pub self_contact: bool,
    /// Height of a horizontal ground plane, if any.
    #[serde(default)]
    pub ground: Option<f64>,
    /// Shorten Newton updates that would move a candidate pair across its
    /// current separation, so a step cannot jump through a thin layer.
    #[serde(default = "default_true")]
    pub step_filter: bool,
}

fn default_slip() -> f64 {
    1e-3
}

fn default_true() -> bool {
    true
}

impl ContactParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(SimError::Config("contact delta must be positive".into()));
        }
        if !(self.slip_tolerance > 0.0) {
            return Err(SimError::Config("contact slip_tolerance must be positive".into()));
        }
        if !(self.friction >= 0.0) {
            return Err(SimError::Config("friction coefficient must be nonnegative".into()));
        }
        if !(self.stiffness >= 0.0) {
            return Err(SimError::Config("contact stiffness must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn k1(&self) -> f64 {
        15.0 / self.delta
    }

    pub fn k2(&self) -> f64 {
        15.0 / self.slip_tolerance
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PairKind {
    RodRod,
    RodShell,
    ShellShell,
    Ground,
}

/// A contact entity: a rod edge, a triangle or (for ground contact) a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Entity {
    Edge(usize),
    Triangle(usize),
    Node(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactPair {
    pub kind: PairKind,
    pub first: Entity,
    pub second: Entity,
    /// Activation distance `2h` of this pair (m).
    pub reach: f64,
    /// Closest-feature type and nodes held fixed instead of reclassifying.
    pub frozen: Option<(FeatureKind, [usize; 4])>,
}

impl ContactPair {
    /// Current closest feature.
    pub fn classify(&self, robot: &SoftRobot, q: &[f64], ground: f64) -> Feature {
        match self.frozen {
            Some((kind, nodes)) => {
                let x = [0, 1, 2, 3].map(|i| if i < kind.n_nodes() { node_pos(q, nodes[i]) } else { crate::vector::Vec3::zero() });
                Feature {
                    kind,
                    nodes,
                    distance: geometry::separation(kind, &x, ground),
                }
            }
            None => classify_entities(robot, self.first, self.second, |n| node_pos(q, n), ground),
        }
    }

    /// Copy with the closest feature at `q` held fixed.
    pub fn freeze(&self, robot: &SoftRobot, q: &[f64], ground: f64) -> Self {
        let f = classify_entities(robot, self.first, self.second, |n| node_pos(q, n), ground);
        Self {
            frozen: Some((f.kind, f.nodes)),
            ..*self
        }
    }
}

pub(crate) fn classify_entities(
    robot: &SoftRobot,
    a: Entity,
    b: Entity,
    x: impl Fn(usize) -> crate::vector::Vec3,
    ground: f64,
) -> Feature {
    use geometry::*;
    let edge = |e: usize| robot.edges[e].nodes;
    let tri = |t: usize| robot.mesh.triangles[t];
    match (a, b) {
        (Entity::Edge(i), Entity::Edge(j)) => classify_segments(edge(i), edge(j), x),
        (Entity::Edge(i), Entity::Triangle(t)) => segment_triangle(edge(i), tri(t), x),
        (Entity::Triangle(s), Entity::Triangle(t)) => triangle_triangle(tri(s), tri(t), x),
        (Entity::Node(n), _) => Feature {
            kind: FeatureKind::Ground,
            nodes: [n, usize::MAX, usize::MAX, usize::MAX],
            distance: x(n).z - ground,
        },
        _ => unreachable!("pairs are stored in canonical order"),
    }
}

/// Half of each pair's activation distance for rods and shells.
pub fn entity_radius(robot: &SoftRobot, e: Entity) -> f64 {
    let r = robot.geometry.rod_radius;
    let h = robot.geometry.shell_thickness;
    match e {
        Entity::Edge(_) => r,
        Entity::Triangle(_) => 0.5 * h,
        Entity::Node(n) => {
            let on_rod = robot
                .edges
                .iter()
                .any(|e| e.kind == EdgeKind::Rod && e.nodes.contains(&n));
            if on_rod {
                r
            } else {
                0.5 * h
            }
        }
    }
}

/// Penalty energy `E(Delta)` per unit `k_c` and its first two derivatives.
pub fn contact_energy(delta: f64, reach: f64, tol: f64) -> (f64, f64, f64) {
    if delta >= reach + tol {
        return (0.0, 0.0, 0.0);
    }
    if delta <= reach - tol {
        let g = reach - delta;
        return (g * g, -2.0 * g, 2.0);
    }
    let k1 = 15.0 / tol;
    let z = k1 * (reach - delta);
    let sp = softplus(z) / k1;
    let sig = 1.0 / (1.0 + (-z).exp());
    let ds = -sig;
    let dds = k1 * sig * (1.0 - sig);
    (sp * sp, 2.0 * sp * ds, 2.0 * (ds * ds + sp * dds))
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `dE/dDelta` on generic reals (the branch is picked on the primal value).
fn contact_slope<T: Real>(delta: T, reach: f64, tol: f64) -> T {
    let d = delta.re();
    if d >= reach + tol {
        return T::cst(0.0);
    }
    if d <= reach - tol {
        return (delta - reach) * 2.0;
    }
    let k1 = 15.0 / tol;
    let z = (delta - reach) * (-k1);
    let sp = if z.re() > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    } / k1;
    let sig = T::cst(1.0) / ((-z).exp() + 1.0);
    sp * sig * (-2.0)
}

/// Smoothed stick-slip factor `gamma = 2 / (1 + exp(-K2 |u|)) - 1`.
pub fn friction_gamma(speed: f64, k2: f64) -> f64 {
    2.0 / (1.0 + (-k2 * speed).exp()) - 1.0
}

/// Per-pair diagnostics of one evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ContactStats {
    pub active_pairs: usize,
    /// Largest `2h - Delta` over active pairs (m).
    pub max_penetration: f64,
    pub energy: f64,
}

/// Force and Jacobian of a single pair, ready for scattering.
#[derive(Clone, Debug)]
pub struct PairResult {
    pub feature: Feature,
    pub contact: Local<12>,
    /// Friction force on each stencil slot and its Jacobian rows (already
    /// with respect to the Newton unknown).
    pub friction: Option<([f64; 12], [[f64; 12]; 12])>,
}

fn stencil_dofs(feature: &Feature) -> [usize; 12] {
    let mut dofs = [usize::MAX; 12];
    for (k, &n) in feature.nodes.iter().enumerate().take(feature.kind.n_nodes()) {
        for c in 0..3 {
            dofs[3 * k + c] = 3 * n + c;
        }
    }
    dofs
}

/// Evaluation inputs shared by all pairs.
#[derive(Clone, Copy, Debug)]
pub struct ContactEval<'a> {
    pub q: &'a [f64],
    pub u: &'a [f64],
    pub dq_scale: f64,
    pub du_scale: f64,
}

/// Contact (and friction) on one candidate pair, `None` when inactive.
pub fn evaluate_pair(
    robot: &SoftRobot,
    pair: &ContactPair,
    params: &ContactParams,
    ev: ContactEval<'_>,
) -> Option<PairResult> {
    let ground = params.ground.unwrap_or(0.0);
    let feature = pair.classify(robot, ev.q, ground);
    if feature.distance >= pair.reach + params.delta {
        return None;
    }
    let kind = feature.kind;
    let nn = kind.n_nodes();
    let dofs = stencil_dofs(&feature);

    let v = |k: usize| {
        if k / 3 < nn {
            HyperDual::<12>::var(ev.q[dofs[k]], k, 1.0)
        } else {
            HyperDual::constant(0.0)
        }
    };
    let x: [V3<HyperDual<12>>; 4] = [0, 1, 2, 3].map(|i| V3::new(v(3 * i), v(3 * i + 1), v(3 * i + 2)));
    let delta = geometry::separation(kind, &x, ground);
    let (e, de, dde) = contact_energy(delta.v, pair.reach, params.delta);
    let kc = params.stiffness;
    let dh = delta.hessian();
    let mut local = Local::zero(dofs);
    local.energy = kc * e;
    for a in 0..12 {
        local.grad[a] = kc * de * delta.g[a];
        for b in 0..12 {
            local.hess[a][b] = kc * (dde * delta.g[a] * delta.g[b] + de * dh[a][b]);
        }
    }

    let friction = (params.friction > 0.0)
        .then(|| friction_force(pair, params, ev, &feature, &dofs, ground))
        .flatten();
    Some(PairResult {
        feature,
        contact: local,
        friction,
    })
}

fn friction_force(
    pair: &ContactPair,
    params: &ContactParams,
    ev: ContactEval<'_>,
    feature: &Feature,
    dofs: &[usize; 12],
    ground: f64,
) -> Option<([f64; 12], [[f64; 12]; 12])> {
    let nn = feature.kind.n_nodes();
    let xv = |k: usize| {
        if k / 3 < nn {
            Dual::<12>::var(ev.q[dofs[k]], k, ev.dq_scale)
        } else {
            Dual::constant(0.0)
        }
    };
    let uv = |k: usize| {
        if k / 3 < nn {
            Dual::<12>::var(ev.u[dofs[k]], k, ev.du_scale)
        } else {
            Dual::constant(0.0)
        }
    };
    let x: [V3<Dual<12>>; 4] = [0, 1, 2, 3].map(|i| V3::new(xv(3 * i), xv(3 * i + 1), xv(3 * i + 2)));
    let u: [V3<Dual<12>>; 4] = [0, 1, 2, 3].map(|i| V3::new(uv(3 * i), uv(3 * i + 1), uv(3 * i + 2)));

    let delta = geometry::separation(feature.kind, &x, ground);
    let fn_mag = contact_slope(delta, pair.reach, params.delta).abs() * params.stiffness;
    if fn_mag.re() == 0.0 {
        return None;
    }
    let w = geometry::closest_weights(feature.kind, &x);
    let normal = if feature.kind == FeatureKind::Ground {
        V3::new(Dual::constant(0.0), Dual::constant(0.0), Dual::constant(1.0))
    } else {
        let gap = (0..nn).fold(V3::<Dual<12>>::zero(), |acc, i| acc + x[i].scale(w[i]));
        if gap.norm().re() < 1e-14 {
            return None;
        }
        gap.normalized()
    };
    let rel = (0..nn).fold(V3::<Dual<12>>::zero(), |acc, i| acc + u[i].scale(w[i]));
    let tangential = rel - normal.scale(rel.dot(&normal));
    let speed = (tangential.norm_sq() + FRICTION_EPS * FRICTION_EPS).sqrt();
    let gamma = T1::cst(2.0) / ((speed * (-params.k2())).exp() + 1.0) - 1.0;
    let dir = tangential.scale(T1::cst(1.0) / speed);
    let coef = gamma * fn_mag * params.friction;

    let mut force = [0.0; 12];
    let mut jac = [[0.0; 12]; 12];
    for i in 0..nn {
        let fi = dir.scale(coef * w[i] * -1.0);
        for c in 0..3 {
            force[3 * i + c] = fi[c].v;
            jac[3 * i + c] = fi[c].g;
        }
    }
    Some((force, jac))
}

type T1 = Dual<12>;

/// Sums contact and friction over the candidate pairs into `out`.
pub fn assemble_contact(
    robot: &SoftRobot,
    pairs: &[ContactPair],
    params: &ContactParams,
    ev: ContactEval<'_>,
    out: &mut EnergyContribution,
) -> ContactStats {
    let results: Vec<Option<PairResult>> = pairs
        .par_iter()
        .map(|p| evaluate_pair(robot, p, params, ev))
        .collect();
    let mut stats = ContactStats::default();
    for (pair, r) in pairs.iter().zip(results) {
        let Some(r) = r else { continue };
        stats.active_pairs += 1;
        stats.max_penetration = stats.max_penetration.max(pair.reach - r.feature.distance);
        stats.energy += r.contact.energy;
        scatter(out, &r, ev.dq_scale);
    }
    stats
}

fn scatter(out: &mut EnergyContribution, r: &PairResult, dq_scale: f64) {
    let dofs = r.contact.dofs;
    out.energy += r.contact.energy;
    for a in 0..12 {
        if dofs[a] == usize::MAX {
            continue;
        }
        out.force[dofs[a]] -= r.contact.grad[a];
        for b in 0..12 {
            if dofs[b] != usize::MAX {
                out.add_jacobian(dofs[a], dofs[b], -dq_scale * r.contact.hess[a][b]);
            }
        }
    }
    if let Some((f, j)) = &r.friction {
        for a in 0..12 {
            if dofs[a] == usize::MAX {
                continue;
            }
            out.force[dofs[a]] += f[a];
            for b in 0..12 {
                if dofs[b] != usize::MAX {
                    out.add_jacobian(dofs[a], dofs[b], j[a][b]);
                }
            }
        }
    }
}

/// Fraction in `(0, 1]` of the update `dir` (positions along DOFs) that no
/// candidate pair can cross: the relative motion of the two entities stays
/// below `safety` times their current separation.
pub fn max_step_fraction(
    robot: &SoftRobot,
    pairs: &[ContactPair],
    params: &ContactParams,
    q: &[f64],
    dir: &[f64],
    safety: f64,
) -> f64 {
    let ground = params.ground.unwrap_or(0.0);
    let disp = |n: usize| node_pos(dir, n).norm();
    let entity_disp = |e: Entity| match e {
        Entity::Edge(i) => robot.edges[i].nodes.iter().map(|&n| disp(n)).fold(0.0, f64::max),
        Entity::Triangle(t) => robot.mesh.triangles[t].iter().map(|&n| disp(n)).fold(0.0, f64::max),
        Entity::Node(n) => disp(n),
    };
    let mut alpha = 1.0f64;
    for p in pairs {
        let (d, motion) = match p.first {
            Entity::Node(n) => (node_pos(q, n).z - ground, (-dir[3 * n + 2]).max(0.0)),
            _ => {
                let f = classify_entities(robot, p.first, p.second, |n| node_pos(q, n), ground);
                (f.distance, entity_disp(p.first) + entity_disp(p.second))
            }
        };
        if d > 0.0 && motion > safety * d {
            alpha = alpha.min(safety * d / motion);
        }
    }
    alpha
}

/// Total contact energy at `q` (friction is dissipative and excluded).
pub fn contact_energy_total(robot: &SoftRobot, pairs: &[ContactPair], params: &ContactParams, q: &[f64]) -> f64 {
    let ground = params.ground.unwrap_or(0.0);
    pairs
        .iter()
        .map(|p| {
            let f = p.classify(robot, q, ground);
            params.stiffness * contact_energy(f.distance, p.reach, params.delta).0
        })
        .sum()
}

//! Candidate pair search with a uniform spatial hash.

use std::collections::HashMap;

use super::{classify_entities, entity_radius, ContactPair, ContactParams, Entity, PairKind};
use crate::robot::{EdgeKind, SoftRobot};
use crate::vector::{node_pos, Vec3};

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn of(points: impl Iterator<Item = Vec3>) -> Self {
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for p in points {
            lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        Self { lo, hi }
    }

    /// Euclidean distance between boxes (zero when overlapping).
    fn distance(&self, o: &Aabb) -> f64 {
        let gap = |a0: f64, a1: f64, b0: f64, b1: f64| (b0 - a1).max(a0 - b1).max(0.0);
        Vec3::new(
            gap(self.lo.x, self.hi.x, o.lo.x, o.hi.x),
            gap(self.lo.y, self.hi.y, o.lo.y, o.hi.y),
            gap(self.lo.z, self.hi.z, o.lo.z, o.hi.z),
        )
        .norm()
    }
}

fn entity_nodes(robot: &SoftRobot, e: Entity) -> Vec<usize> {
    match e {
        Entity::Edge(i) => robot.edges[i].nodes.to_vec(),
        Entity::Triangle(t) => robot.mesh.triangles[t].to_vec(),
        Entity::Node(n) => vec![n],
    }
}

/// Rod edges and triangles taking part in self-contact.
fn entities(robot: &SoftRobot) -> Vec<Entity> {
    let mut out: Vec<Entity> = robot
        .edges
        .iter()
        .enumerate()
        .filter(|(_, e)| e.kind == EdgeKind::Rod)
        .map(|(k, _)| Entity::Edge(k))
        .collect();
    out.extend((0..robot.mesh.triangles.len()).map(Entity::Triangle));
    out
}

fn pair_kind(a: Entity, b: Entity) -> PairKind {
    match (a, b) {
        (Entity::Edge(_), Entity::Edge(_)) => PairKind::RodRod,
        (Entity::Triangle(_), Entity::Triangle(_)) => PairKind::ShellShell,
        _ => PairKind::RodShell,
    }
}

/// Applies the adjacency, rest-separation and reach filters to an ordered
/// entity pair.
fn admissible(
    robot: &SoftRobot,
    a: Entity,
    b: Entity,
    boxes: (&Aabb, &Aabb),
    params: &ContactParams,
    margin: f64,
) -> Option<ContactPair> {
    let na = entity_nodes(robot, a);
    let nb = entity_nodes(robot, b);
    if na.iter().any(|n| nb.contains(n)) {
        return None;
    }
    let reach = entity_radius(robot, a) + entity_radius(robot, b);
    if boxes.0.distance(boxes.1) > reach + params.delta + margin {
        return None;
    }
    // entities already within reach in the stress-free state never interact
    let rest = classify_entities(robot, a, b, |n| robot.mesh.nodes[n], 0.0);
    if rest.distance < reach + params.delta {
        return None;
    }
    Some(ContactPair {
        frozen: None,
        kind: pair_kind(a, b),
        first: a,
        second: b,
        reach,
    })
}

fn ground_pairs(robot: &SoftRobot, q: &[f64], params: &ContactParams, margin: f64) -> Vec<ContactPair> {
    let Some(z0) = params.ground else {
        return Vec::new();
    };
    (0..robot.n_nodes())
        .filter_map(|n| {
            let e = Entity::Node(n);
            let r = entity_radius(robot, e);
            (node_pos(q, n).z - z0 <= r + params.delta + margin).then_some(ContactPair {
                frozen: None,
                kind: PairKind::Ground,
                first: e,
                second: e,
                reach: r,
            })
        })
        .collect()
}

/// Candidate pairs at `q`: all admissible entity pairs whose bounding boxes
/// come within `2h + delta + margin`, plus nodes near the ground plane.
/// Output order is deterministic.
pub fn build_candidate_set(robot: &SoftRobot, q: &[f64], params: &ContactParams, margin: f64) -> Vec<ContactPair> {
    let mut out = Vec::new();
    if params.self_contact {
        let ents = entities(robot);
        let boxes: Vec<Aabb> = ents
            .iter()
            .map(|&e| Aabb::of(entity_nodes(robot, e).into_iter().map(|n| node_pos(q, n))))
            .collect();
        let r_max = ents.iter().map(|&e| entity_radius(robot, e)).fold(0.0, f64::max);
        let cutoff = 2.0 * r_max + params.delta + margin;
        let mean_extent = boxes
            .iter()
            .map(|b| (b.hi - b.lo).max_abs())
            .sum::<f64>()
            / boxes.len().max(1) as f64;
        let cell = cutoff.max(mean_extent).max(1e-12);
        let key = |v: f64| (v / cell).floor() as i64;

        let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, b) in boxes.iter().enumerate() {
            let pad = 0.5 * cutoff;
            let (lo, hi) = (b.lo - Vec3::new(pad, pad, pad), b.hi + Vec3::new(pad, pad, pad));
            for x in key(lo.x)..=key(hi.x) {
                for y in key(lo.y)..=key(hi.y) {
                    for z in key(lo.z)..=key(hi.z) {
                        grid.entry((x, y, z)).or_default().push(i);
                    }
                }
            }
        }
        let mut raw: Vec<(usize, usize)> = Vec::new();
        for members in grid.values() {
            for (k, &i) in members.iter().enumerate() {
                for &j in &members[k + 1..] {
                    raw.push((i.min(j), i.max(j)));
                }
            }
        }
        raw.sort_unstable();
        raw.dedup();
        for (i, j) in raw {
            if let Some(p) = admissible(robot, ents[i], ents[j], (&boxes[i], &boxes[j]), params, margin) {
                out.push(p);
            }
        }
    }
    out.extend(ground_pairs(robot, q, params, margin));
    out
}

/// All-pairs reference for [`build_candidate_set`].
pub fn brute_force_candidates(robot: &SoftRobot, q: &[f64], params: &ContactParams, margin: f64) -> Vec<ContactPair> {
    let mut out = Vec::new();
    if params.self_contact {
        let ents = entities(robot);
        let boxes: Vec<Aabb> = ents
            .iter()
            .map(|&e| Aabb::of(entity_nodes(robot, e).into_iter().map(|n| node_pos(q, n))))
            .collect();
        for i in 0..ents.len() {
            for j in i + 1..ents.len() {
                if let Some(p) = admissible(robot, ents[i], ents[j], (&boxes[i], &boxes[j]), params, margin) {
                    out.push(p);
                }
            }
        }
    }
    out.extend(ground_pairs(robot, q, params, margin));
    out
}

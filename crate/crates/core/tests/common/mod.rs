//! Finite-difference and sampling oracles shared by the integration tests
//! and the acceptance report.
#![allow(dead_code)]

use ddgsim::assembly::EnergyContribution;
use ddgsim::contact::geometry::{classify_segments, closest_weights, point_triangle};
use ddgsim::contact::{
    brute_force_candidates, contact_energy_total, assemble_contact, evaluate_pair, ContactEval, ContactPair,
    FeatureKind,
};
use ddgsim::elastic::{assemble_elastic, elastic_energy};
use ddgsim::external::{assemble_external, gravity_potential, ExternalEval, RftParams};
use ddgsim::frames::FrameSet;
use ddgsim::mesh::{helix, rect_grid, rod_line, MeshInput};
use ddgsim::vector::{node_pos, Vec3};
use ddgsim::{ContactParams, Environment, Geometry, Material, MaterialProps, RobotState, ShellModel, SoftRobot};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CONFIGS: usize = 100;

/// Worst errors over a batch, relative to the largest analytic entry.
#[derive(Clone, Copy, Debug, Default)]
pub struct FdErrors {
    pub force: f64,
    pub jacobian: f64,
    pub samples: usize,
}

impl FdErrors {
    fn merge(&mut self, o: FdErrors) {
        self.force = self.force.max(o.force);
        self.jacobian = self.jacobian.max(o.jacobian);
        self.samples += o.samples;
    }

    pub fn ok(&self) -> bool {
        self.samples > 0 && self.force < 1e-6 && self.jacobian < 2e-4
    }
}

fn max_abs<'a>(v: impl IntoIterator<Item = &'a f64>) -> f64 {
    v.into_iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Compares `force` against `-dE/dq` and its Jacobian against central
/// differences of `force`. Pass `energy = None` for non-conservative forces.
fn fd_check(
    q: &[f64],
    h: f64,
    energy: Option<&dyn Fn(&[f64]) -> f64>,
    assemble: &dyn Fn(&[f64]) -> EnergyContribution,
) -> FdErrors {
    let base = assemble(q);
    let fmax = max_abs(&base.force).max(1e-300);
    let j = base.dense_jacobian();
    let jmax = j.iter().flat_map(|r| r.iter()).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut out = FdErrors {
        samples: 1,
        ..Default::default()
    };
    for i in 0..q.len() {
        let mut qp = q.to_vec();
        let mut qm = q.to_vec();
        qp[i] += h;
        qm[i] -= h;
        if let Some(e) = energy {
            let fd = -(e(&qp) - e(&qm)) / (2.0 * h);
            out.force = out.force.max((fd - base.force[i]).abs() / fmax);
        }
        let (fp, fm) = (assemble(&qp), assemble(&qm));
        for k in 0..q.len() {
            let fd = (fp.force[k] - fm.force[k]) / (2.0 * h);
            out.jacobian = out.jacobian.max((fd - j[k][i]).abs() / jmax);
        }
    }
    out
}

pub fn build(mesh: MeshInput, model: ShellModel, rod_radius: f64) -> (SoftRobot, RobotState) {
    let mut r = SoftRobot::build(
        mesh,
        Geometry {
            rod_radius,
            shell_thickness: 0.01,
        },
        Material::uniform(MaterialProps {
            density: 1000.0,
            youngs_modulus: 1e6,
            poisson_ratio: 0.3,
        }),
        model,
    )
    .unwrap();
    let s = RobotState::rest(&mut r).unwrap();
    (r, s)
}

fn perturb(r: &SoftRobot, q: &[f64], rng: &mut ChaCha8Rng, pos: f64, ang: f64) -> Vec<f64> {
    q.iter()
        .enumerate()
        .map(|(i, v)| v + if r.layout.is_position(i) { pos } else { ang } * rng.gen_range(-1.0..1.0))
        .collect()
}

/// Shell square with a short rod standing on its centre node.
fn rod_on_shell() -> MeshInput {
    let mut m = rect_grid(3, 3, 0.1, 0.1);
    let base = m.nodes.len();
    for k in 1..=3 {
        m.nodes.push(Vec3::new(0.05, 0.05, 0.03 * k as f64));
    }
    m.rod_edges = vec![[4, base], [base, base + 1], [base + 1, base + 2]];
    m
}

/// Elastic stencils of one energy mode, with every other mode removed.
pub fn elastic_mode(mode: &str) -> (SoftRobot, RobotState) {
    let (mut r, s) = match mode {
        "stretch" | "bend" | "twist" => build(helix(6, 0.02, 0.01, 0.6, 0.0), ShellModel::Hinge, 0.01),
        "hinge" => build(rect_grid(3, 3, 0.1, 0.1), ShellModel::Hinge, 0.01),
        "midedge" => build(rect_grid(3, 3, 0.1, 0.1), ShellModel::Midedge, 0.01),
        "joint" => build(rod_on_shell(), ShellModel::Hinge, 0.01),
        _ => panic!("unknown mode {mode}"),
    };
    if mode != "stretch" {
        r.stretch_springs.clear();
    }
    if !matches!(mode, "bend" | "twist" | "joint") {
        r.bend_twist_springs.clear();
    }
    for sp in &mut r.bend_twist_springs {
        match mode {
            "bend" => sp.twist_stiffness = 0.0,
            "twist" => sp.bend_stiffness = [0.0; 2],
            _ => {}
        }
    }
    if mode != "hinge" {
        r.hinge_springs.clear();
    }
    if mode != "midedge" {
        r.triangle_springs.clear();
    }
    (r, s)
}

pub const ELASTIC_MODES: [&str; 6] = ["stretch", "bend", "twist", "hinge", "midedge", "joint"];

pub fn elastic_errors(mode: &str, configs: usize, seed: u64) -> FdErrors {
    let (mut r, s) = elastic_mode(mode);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = FdErrors::default();
    for _ in 0..configs {
        // a random natural state as well as a random configuration
        for sp in &mut r.bend_twist_springs {
            sp.inc_curvature = [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)];
        }
        for h in &mut r.hinge_springs {
            h.nat_angle += rng.gen_range(-0.05..0.05);
        }
        let q = perturb(&r, &s.q, &mut rng, 4e-3, 0.3);
        let frames: &FrameSet = &s.frames;
        let e = |q: &[f64]| elastic_energy(&r, q, frames).unwrap();
        let a = |q: &[f64]| {
            let mut c = EnergyContribution::new(q.len(), true);
            assemble_elastic(&r, q, frames, &mut c, 1.0).unwrap();
            c
        };
        out.merge(fd_check(&q, 1e-6, Some(&e), &a));
    }
    out
}

// ---------------------------------------------------------------- contact

pub fn contact_params(mu: f64, ground: Option<f64>) -> ContactParams {
    ContactParams {
        delta: 1e-3,
        stiffness: 1e3,
        friction: mu,
        slip_tolerance: 1e-3,
        margin: None,
        self_contact: ground.is_none(),
        ground,
        step_filter: true,
    }
}

fn rand_vec(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
    Vec3::new(rng.gen_range(-s..s), rng.gen_range(-s..s), rng.gen_range(-s..s))
}

fn flat(nodes: &[Vec3]) -> Vec<f64> {
    nodes.iter().flat_map(|p| p.to_array()).collect()
}

/// Two rods, a rod over a triangle, or a rod above the ground, placed so the
/// single candidate pair sits inside its activation band.
pub struct ContactCase {
    pub robot: SoftRobot,
    pub pair: ContactPair,
    pub params: ContactParams,
    pub q: Vec<f64>,
    /// Nodes of the second entity (moved to set the separation).
    moving: Vec<usize>,
}

fn random_mesh(rng: &mut ChaCha8Rng, family: usize) -> (MeshInput, Vec<usize>) {
    let a = rand_vec(rng, 0.05);
    let b = a + rand_vec(rng, 0.05);
    match family {
        0 => {
            let c = rand_vec(rng, 0.05);
            let d = c + rand_vec(rng, 0.05);
            (MeshInput::new(vec![a, b, c, d], vec![[0, 1], [2, 3]], vec![]), vec![2, 3])
        }
        1 => {
            let t0 = Vec3::new(0.0, 0.0, 0.0);
            let t1 = Vec3::new(0.08, rng.gen_range(-0.02..0.02), rng.gen_range(-0.01..0.01));
            let t2 = Vec3::new(rng.gen_range(-0.02..0.04), 0.08, rng.gen_range(-0.01..0.01));
            let p = Vec3::new(rng.gen_range(-0.02..0.08), rng.gen_range(-0.02..0.08), 0.05);
            let e = p + rand_vec(rng, 0.04);
            (MeshInput::new(vec![t0, t1, t2, p, e], vec![[3, 4]], vec![[0, 1, 2]]), vec![3, 4])
        }
        _ => (
            MeshInput::new(vec![a, a + Vec3::new(0.05, 0.0, rng.gen_range(-0.003..0.003))], vec![[0, 1]], vec![]),
            vec![0, 1],
        ),
    }
}

/// Random case whose (unfrozen) classification is `want`, or `None`.
pub fn contact_case(rng: &mut ChaCha8Rng, want: FeatureKind, mu: f64) -> Option<ContactCase> {
    let family = match want {
        FeatureKind::PT => 1,
        FeatureKind::Ground => 2,
        _ => rng.gen_range(0..2),
    };
    let (mesh, moving) = random_mesh(rng, family);
    let ground = (family == 2).then_some(0.0);
    let params = contact_params(mu, ground);
    let (robot, _) = build(mesh, ShellModel::Hinge, 0.005);
    let mut q = flat(&robot.mesh.nodes);
    let pairs = brute_force_candidates(&robot, &q, &params, 10.0);
    let pair = *pairs.iter().find(|p| p.classify(&robot, &q, 0.0).kind == want)?;
    let f = pair.classify(&robot, &q, 0.0);
    // pull the second entity along the gap direction to a target separation
    // inside the band, away from the kink at reach - delta
    let delta = params.delta;
    let mut target = pair.reach + delta * rng.gen_range(-1.5..0.9);
    if (target - (pair.reach - delta)).abs() < 0.05 * delta {
        target += 0.1 * delta;
    }
    let shift = if want == FeatureKind::Ground {
        Vec3::new(0.0, 0.0, target - f.distance)
    } else {
        let x = [0, 1, 2, 3].map(|i| if i < want.n_nodes() { node_pos(&q, f.nodes[i]) } else { Vec3::zero() });
        let w = closest_weights(want, &x);
        let gap = (0..4).fold(Vec3::zero(), |acc, i| acc + x[i] * w[i]);
        let n = gap * (1.0 / gap.norm());
        // the gap runs from the second closest point to the first
        let lead = (0..want.n_nodes()).max_by(|&i, &j| w[i].total_cmp(&w[j])).unwrap_or(0);
        let moving_first = moving.contains(&f.nodes[lead]);
        n * ((target - f.distance) * if moving_first { 1.0 } else { -1.0 })
    };
    let movers: Vec<usize> = if want == FeatureKind::Ground { vec![f.nodes[0]] } else { moving.clone() };
    for &m in &movers {
        for c in 0..3 {
            q[3 * m + c] += shift[c];
        }
    }
    let f2 = pair.classify(&robot, &q, 0.0);
    if f2.kind != want || (f2.distance - target).abs() > 1e-9 {
        return None;
    }
    // other ground nodes stay well above the band
    if want == FeatureKind::Ground {
        let other = 1 - f.nodes[0];
        q[3 * other + 2] = q[3 * other + 2].max(0.1);
    }
    let pair = pair.freeze(&robot, &q, 0.0);
    Some(ContactCase {
        robot,
        pair,
        params,
        q,
        moving,
    })
}

pub const CONTACT_KINDS: [FeatureKind; 5] =
    [FeatureKind::PP, FeatureKind::PE, FeatureKind::EE, FeatureKind::PT, FeatureKind::Ground];

/// FD check of one frozen pair with implicit-Euler velocities
/// `u = (q - q_prev) / dt`.
pub fn contact_case_errors(case: &ContactCase, rng: &mut ChaCha8Rng) -> FdErrors {
    let dt = 1e-3;
    let u0: Vec<f64> = (0..case.q.len())
        .map(|_| 10f64.powf(rng.gen_range(-4.0..0.0)) * rng.gen_range(-1.0..1.0))
        .collect();
    let q_prev: Vec<f64> = case.q.iter().zip(&u0).map(|(a, b)| a - dt * b).collect();
    let pairs = [case.pair];
    let (r, p) = (&case.robot, &case.params);
    let assemble = |q: &[f64]| {
        let u: Vec<f64> = q.iter().zip(&q_prev).map(|(a, b)| (a - b) / dt).collect();
        let mut out = EnergyContribution::new(q.len(), true);
        let ev = ContactEval {
            q,
            u: &u,
            dq_scale: 1.0,
            du_scale: 1.0 / dt,
        };
        assemble_contact(r, &pairs, p, ev, &mut out);
        out
    };
    let energy = |q: &[f64]| contact_energy_total(r, &pairs, p, q);
    // friction varies on the speed scale of the slip tolerance
    let h = if p.friction > 0.0 { 1e-10 } else { 1e-8 };
    let conservative: Option<&dyn Fn(&[f64]) -> f64> = if p.friction > 0.0 { None } else { Some(&energy) };
    fd_check(&case.q, h, conservative, &assemble)
}

pub fn contact_errors(kind: FeatureKind, mu: f64, configs: usize, seed: u64) -> FdErrors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = FdErrors::default();
    let mut attempts = 0;
    while out.samples < configs && attempts < 200_000 {
        attempts += 1;
        if let Some(case) = contact_case(&mut rng, kind, mu) {
            out.merge(contact_case_errors(&case, &mut rng));
        }
    }
    out
}

// --------------------------------------------------------------- external

/// Drag and damping on a randomly bent rod, checked against FD of the force
/// with respect to the Newton unknown under implicit Euler (`dq_scale` 1)
/// and the implicit midpoint rule (`dq_scale` 1/2).
pub fn external_errors(configs: usize, seed: u64) -> FdErrors {
    let (r, s) = build(rod_line(6, 0.1, Vec3::zero(), Vec3::unit_x()), ShellModel::Hinge, 0.005);
    let env = Environment {
        gravity: [0.0, 0.0, -9.81],
        damping: 0.7,
        fluid_density: 300.0,
        rft: Some(RftParams {
            ct: 0.3,
            cn: 2.0,
            tangent_terms: true,
        }),
        point_forces: vec![],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = FdErrors::default();
    let dt = 1e-3;
    for k in 0..configs {
        let qk = perturb(&r, &s.q, &mut rng, 5e-3, 0.2);
        let uk: Vec<f64> = (0..qk.len()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let q: Vec<f64> = qk.iter().zip(&uk).map(|(a, b)| a + dt * b + rng.gen_range(-1e-4..1e-4)).collect();
        let midpoint = k % 2 == 1;
        let assemble = |q: &[f64]| {
            let (x, u, dq_scale): (Vec<f64>, Vec<f64>, f64) = if midpoint {
                (
                    q.iter().zip(&qk).map(|(a, b)| 0.5 * (a + b)).collect(),
                    q.iter().zip(&qk).map(|(a, b)| (a - b) / dt).collect(),
                    0.5,
                )
            } else {
                (q.to_vec(), q.iter().zip(&qk).map(|(a, b)| (a - b) / dt).collect(), 1.0)
            };
            let mut c = EnergyContribution::new(q.len(), true);
            let ev = ExternalEval {
                q: &x,
                u: &u,
                dq_scale,
                du_scale: 1.0 / dt,
                time: 0.0,
            };
            assemble_external(&r, &env, ev, &mut c);
            c
        };
        out.merge(fd_check(&q, 1e-7, None, &assemble));
    }
    out
}

/// Gravity with buoyancy against FD of its potential.
pub fn gravity_errors(configs: usize, seed: u64) -> FdErrors {
    let (r, s) = build(helix(8, 0.02, 0.01, 1.0, 0.0), ShellModel::Hinge, 0.005);
    let env = Environment {
        gravity: [0.3, -1.0, -9.81],
        fluid_density: 400.0,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = FdErrors::default();
    for _ in 0..configs {
        let q = perturb(&r, &s.q, &mut rng, 1e-2, 0.5);
        let u = vec![0.0; q.len()];
        let e = |q: &[f64]| gravity_potential(&r, &env, q);
        let a = |q: &[f64]| {
            let mut c = EnergyContribution::new(q.len(), true);
            let ev = ExternalEval {
                q,
                u: &u,
                dq_scale: 1.0,
                du_scale: 0.0,
                time: 0.0,
            };
            assemble_external(&r, &env, ev, &mut c);
            c
        };
        out.merge(fd_check(&q, 1e-6, Some(&e), &a));
    }
    out
}

// ----------------------------------------------------------------- oracle

/// Minimum of a convex function on the unit square by grid sampling with
/// successive zooming around the best sample.
fn sample_min(f: impl Fn(f64, f64) -> f64) -> f64 {
    let n = 24;
    let (mut lo, mut hi) = ([0.0, 0.0], [1.0, 1.0]);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for _ in 0..14 {
        for i in 0..=n {
            for j in 0..=n {
                let s = lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64;
                let t = lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64;
                let v = f(s, t);
                if v < best.0 {
                    best = (v, s, t);
                }
            }
        }
        let w = [(hi[0] - lo[0]) / 4.0, (hi[1] - lo[1]) / 4.0];
        lo = [(best.1 - w[0]).max(0.0), (best.2 - w[1]).max(0.0)];
        hi = [(best.1 + w[0]).min(1.0), (best.2 + w[1]).min(1.0)];
    }
    best.0
}

pub fn sampled_segment_distance(p1: Vec3, q1: Vec3, p2: Vec3, q2: Vec3) -> f64 {
    sample_min(|s, t| ((p1 + (q1 - p1) * s) - (p2 + (q2 - p2) * t)).norm())
}

pub fn sampled_point_triangle_distance(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> f64 {
    sample_min(|s, t| {
        // fold the square onto the triangle
        let (s, t) = if s + t > 1.0 { (1.0 - t, 1.0 - s) } else { (s, t) };
        (a + (b - a) * s + (c - a) * t - p).norm()
    })
}

#[derive(Clone, Copy, Debug, Default)]
pub struct OracleReport {
    pub segment_pairs: usize,
    pub triangle_pairs: usize,
    pub max_distance_error: f64,
    pub max_pair_sum: f64,
    pub max_friction_ratio: f64,
    pub force_evaluations: usize,
}

impl OracleReport {
    pub fn ok(&self) -> bool {
        self.segment_pairs >= 1000
            && self.triangle_pairs >= 1000
            && self.max_distance_error < 1e-4
            && self.max_pair_sum < 1e-12
            && self.max_friction_ratio <= 1.0
            && self.force_evaluations > 0
    }
}

fn random_segment(rng: &mut ChaCha8Rng) -> (Vec3, Vec3) {
    let a = rand_vec(rng, 0.1);
    // a mix of nearly parallel, short and ordinary segments
    let d = match rng.gen_range(0..4) {
        0 => Vec3::new(0.05, 1e-4 * rng.gen_range(-1.0..1.0), 1e-4 * rng.gen_range(-1.0..1.0)),
        1 => rand_vec(rng, 0.005),
        _ => rand_vec(rng, 0.08),
    };
    (a, a + d)
}

/// Checks `check` on forces of the pair: pair sum and friction bound.
fn force_checks(case: &ContactCase, rng: &mut ChaCha8Rng, report: &mut OracleReport) {
    let u: Vec<f64> = (0..case.q.len())
        .map(|_| 10f64.powf(rng.gen_range(-6.0..1.0)) * rng.gen_range(-1.0..1.0))
        .collect();
    let ev = ContactEval {
        q: &case.q,
        u: &u,
        dq_scale: 1.0,
        du_scale: 1.0,
    };
    let Some(res) = evaluate_pair(&case.robot, &case.pair, &case.params, ev) else { return };
    report.force_evaluations += 1;
    let nn = res.feature.kind.n_nodes();
    let g = &res.contact.grad;
    let gmax = max_abs(g.iter());
    if res.feature.kind != FeatureKind::Ground {
        for c in 0..3 {
            let s: f64 = (0..nn).map(|k| g[3 * k + c]).sum();
            report.max_pair_sum = report.max_pair_sum.max(s.abs() / gmax.max(1e-300));
        }
    }
    let Some((f, _)) = res.friction else { return };
    let sides: [&[usize]; 2] = match res.feature.kind {
        FeatureKind::EE => [&[0, 1], &[2, 3]],
        FeatureKind::PE => [&[2], &[0, 1]],
        FeatureKind::PP => [&[0], &[1]],
        FeatureKind::PT => [&[3], &[0, 1, 2]],
        FeatureKind::Ground => [&[0], &[]],
    };
    for side in sides.iter().filter(|s| !s.is_empty()) {
        let mut fc = Vec3::zero();
        let mut ff = Vec3::zero();
        for &k in side.iter() {
            fc = fc - Vec3::new(g[3 * k], g[3 * k + 1], g[3 * k + 2]);
            ff = ff + Vec3::new(f[3 * k], f[3 * k + 1], f[3 * k + 2]);
        }
        let bound = case.params.friction * fc.norm();
        if bound > 0.0 {
            // closest-point weights and the separation gradient agree to
            // round-off only
            let ratio = ff.norm() / (bound * (1.0 + 1e-12));
            report.max_friction_ratio = report.max_friction_ratio.max(ratio);
        }
    }
}

pub fn contact_oracle(pairs: usize, seed: u64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport::default();
    let x = |v: &[Vec3]| {
        let v = v.to_vec();
        move |i: usize| v[i]
    };
    while report.segment_pairs < pairs {
        let (a, b) = random_segment(&mut rng);
        let (c, d) = random_segment(&mut rng);
        let f = classify_segments([0, 1], [2, 3], x(&[a, b, c, d]));
        let oracle = sampled_segment_distance(a, b, c, d);
        if oracle < 1e-6 {
            continue;
        }
        report.max_distance_error = report.max_distance_error.max((f.distance - oracle).abs() / oracle);
        report.segment_pairs += 1;
    }
    while report.triangle_pairs < pairs {
        let a = rand_vec(&mut rng, 0.1);
        let b = a + rand_vec(&mut rng, 0.1);
        let c = a + rand_vec(&mut rng, 0.1);
        if (b - a).cross(&(c - a)).norm() < 1e-5 {
            continue;
        }
        let p = rand_vec(&mut rng, 0.15);
        let f = point_triangle(3, [0, 1, 2], x(&[a, b, c, p]));
        let oracle = sampled_point_triangle_distance(p, a, b, c);
        if oracle < 1e-6 {
            continue;
        }
        report.max_distance_error = report.max_distance_error.max((f.distance - oracle).abs() / oracle);
        report.triangle_pairs += 1;
    }
    // forces on pairs placed inside the activation band
    for kind in CONTACT_KINDS {
        let mut done = 0;
        while done < pairs / 5 {
            if let Some(case) = contact_case(&mut rng, kind, 0.4) {
                force_checks(&case, &mut rng, &mut report);
                done += 1;
            }
        }
    }
    report
}


pub mod dynamics;
pub mod scenarios;

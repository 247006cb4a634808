//! Runs of the bundled scenarios and the quantities they are judged by.

use std::path::Path;

use ddgsim::analysis::{center_of_mass, count_lobes, max_height, max_speed, min_height, radial_profile};
use ddgsim::mesh::disk_ring;
use ddgsim::scenario::{bundled_config, Instance, MeshGenerator};
use ddgsim::vector::node_pos;
use ddgsim::{load_config, Integrator, ScenarioConfig, Simulation};

pub fn config(name: &str) -> ScenarioConfig {
    bundled_config(name).unwrap()
}

pub fn run(cfg: &ScenarioConfig) -> Instance {
    let mut inst = cfg.instantiate().unwrap();
    inst.run(|_, _| true).unwrap();
    inst
}

/// Tip deflection of the clamped rod and the Euler-Bernoulli value
/// `w L^4 / (8 E I)` for the same rod.
pub fn cantilever(name: &str) -> (f64, f64) {
    let cfg = config(name);
    let inst = run(&cfg);
    let sim = &inst.sim;
    let tip = sim.robot.n_nodes() - 1;
    let deflection = -node_pos(&sim.state.q, tip).z;
    let r = cfg.geometry.rod_radius;
    let area = std::f64::consts::PI * r * r;
    let inertia = std::f64::consts::PI * r.powi(4) / 4.0;
    let w = cfg.material.density * area * 9.81;
    let Some(MeshGenerator::RodLine { length, .. }) = cfg.mesh.generator.clone() else {
        panic!("cantilever must use a generated rod")
    };
    (deflection, w * length.powi(4) / (8.0 * cfg.material.youngs_modulus * inertia))
}

/// Final highest point and largest nodal speed.
pub fn fold(name: &str) -> (f64, f64) {
    let inst = run(&config(name));
    let s = &inst.sim;
    (max_height(&s.robot, &s.state.q), max_speed(&s.robot, &s.state.u))
}

/// Number of lobes of the rim's distance from the axis after the fall.
pub fn rim_lobes(name: &str, tol: f64) -> usize {
    let cfg = config(name);
    let Some(MeshGenerator::Disk { rings, sectors, .. }) = cfg.mesh.generator.clone() else {
        panic!("circle fold must use a generated disk")
    };
    let inst = run(&cfg);
    count_lobes(&radial_profile(&inst.sim.state.q, disk_ring(sectors, rings)), tol)
}

/// Lowest node height at the end of a helix run and its spread over the
/// final second relative to its size. Newmark keeps a small undissipated
/// jitter in the stiff stretch and twist modes, so settling is judged on the
/// height itself rather than on nodal speeds.
pub fn helix(name: &str, integrator: Integrator) -> (f64, f64) {
    let mut cfg = config(name);
    cfg.sim.integrator = integrator;
    let end = cfg.sim.total_time;
    let mut inst = cfg.instantiate().unwrap();
    let mut late = Vec::new();
    inst.run(|s, r| {
        if r.time >= end - 1.0 {
            late.push(min_height(&s.robot, &s.state.q));
        }
        true
    })
    .unwrap();
    let h = *late.last().unwrap();
    let (lo, hi) = late.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    (h, (hi - lo) / h.abs())
}

/// Centre of mass along x at every whole second.
pub fn snake_positions(cfg: &ScenarioConfig) -> Vec<f64> {
    let mut inst = cfg.instantiate().unwrap();
    let per_second = (1.0 / cfg.sim.dt).round() as usize;
    let mut xs = vec![center_of_mass(&inst.sim.robot, &inst.sim.state.q).x];
    inst.run(|s: &Simulation, r| {
        if r.step % per_second == 0 {
            xs.push(center_of_mass(&s.robot, &s.state.q).x);
        }
        true
    })
    .unwrap();
    xs
}

#[derive(Clone, Debug)]
pub struct SnakeReport {
    /// Per-cycle displacement along the direction of travel after the ramp.
    pub cycles: Vec<f64>,
    /// Largest per-cycle displacement with isotropic drag.
    pub isotropic_cycle: f64,
    pub body_length: f64,
}

impl SnakeReport {
    pub fn ok(&self) -> bool {
        !self.cycles.is_empty() && self.cycles.iter().all(|c| *c > 0.0) && self.isotropic_cycle < 0.01 * self.body_length
    }
}

pub fn snake() -> SnakeReport {
    let cfg = config("snake");
    let ramp = match &cfg.actuation {
        Some(ddgsim::actuation::Actuation::TravelingWave(w)) => w.ramp,
        _ => panic!("snake is driven by a traveling wave"),
    };
    let Some(MeshGenerator::RodLine { length, .. }) = cfg.mesh.generator.clone() else {
        panic!("snake must use a generated rod")
    };
    let after = |xs: Vec<f64>| xs[ramp.round() as usize..].windows(2).map(|w| w[1] - w[0]).collect::<Vec<f64>>();
    let steps = after(snake_positions(&cfg));
    let heading = steps.iter().sum::<f64>().signum();
    let mut iso = cfg.clone();
    let rft = iso.environment.rft.as_mut().unwrap();
    rft.cn = rft.ct;
    let iso_steps = after(snake_positions(&iso));
    SnakeReport {
        cycles: steps.iter().map(|d| d * heading).collect(),
        isotropic_cycle: iso_steps.iter().fold(0.0f64, |m, d| m.max(d.abs())),
        body_length: length,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Tracking {
    pub residual: [f64; 2],
    pub rmse: Option<[f64; 2]>,
}

/// First and final (or worst steady, for `steady` seconds before the end)
/// residual and RMSE of a controlled run.
pub fn tracking(name: &str, steady: f64) -> Tracking {
    let inst = run(&config(name));
    let rec = inst.control_records();
    let first = &rec[0];
    let end = rec[rec.len() - 1].time;
    let late = rec.iter().filter(|r| r.time >= end - steady);
    let residual = late.clone().fold(0.0f64, |m, r| m.max(r.residual_rms));
    let rmse = first
        .rmse
        .map(|r0| [r0, late.fold(0.0f64, |m, r| m.max(r.rmse.unwrap_or(f64::INFINITY)))]);
    Tracking {
        residual: [first.residual_rms, residual],
        rmse,
    }
}

/// Runs `cfg` single-threaded twice in memory and once from its resolved
/// config on disk; returns (bitwise repeat, bitwise reload).
pub fn determinism(cfg: &ScenarioConfig, dir: &Path) -> (bool, bool) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let trajectory = |cfg: &ScenarioConfig| {
            let mut inst = cfg.instantiate().unwrap();
            let mut out: Vec<u64> = Vec::new();
            inst.run(|s, _| {
                out.extend(s.state.q.iter().chain(&s.state.u).map(|v| v.to_bits()));
                true
            })
            .unwrap();
            out
        };
        let repeat = trajectory(cfg) == trajectory(cfg);
        let first = dir.join("first");
        let second = dir.join("second");
        cfg.instantiate().unwrap().run_to_dir(&first).unwrap();
        let reloaded = load_config(&first.join("resolved.toml")).unwrap();
        reloaded.instantiate().unwrap().run_to_dir(&second).unwrap();
        let read = |d: &Path| std::fs::read(d.join("trajectory.csv")).unwrap();
        let reload = reloaded == *cfg && read(&first) == read(&second);
        (repeat, reload)
    })
}

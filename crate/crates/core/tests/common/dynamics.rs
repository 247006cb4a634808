//! Energy behaviour of the time integrators on small systems.

use ddgsim::mesh::rod_line;
use ddgsim::vector::Vec3;
use ddgsim::{
    ConstraintSet, Environment, Geometry, Integrator, Material, MaterialProps, RobotState, ShellModel, SimParams,
    Simulation, SoftRobot,
};

fn rod(n: usize, length: f64, e: f64) -> SoftRobot {
    SoftRobot::build(
        rod_line(n, length, Vec3::zero(), Vec3::unit_x()),
        Geometry {
            rod_radius: 0.01,
            shell_thickness: 0.0,
        },
        Material::uniform(MaterialProps {
            density: 1000.0,
            youngs_modulus: e,
            poisson_ratio: 0.5,
        }),
        ShellModel::Hinge,
    )
    .unwrap()
}

/// A point mass on an elastic bar pinned at the origin, spinning and
/// breathing radially: a nonlinear oscillator with conserved energy.
pub fn spring_pendulum(integrator: Integrator, dt: f64, total_time: f64) -> Simulation {
    let mut robot = rod(2, 1.0, 1e6);
    let mut state = RobotState::rest(&mut robot).unwrap();
    state.u[3] = 1.0;
    state.u[4] = 10.0;
    let mut c = ConstraintSet::new(robot.total_dofs());
    c.fix_nodes(&robot, &[0]).unwrap();
    c.fix_dof(robot.layout.theta_dof(0).unwrap()).unwrap();
    let mut p = SimParams::new(dt, total_time);
    p.integrator = integrator;
    p.newton_tol = Some(1e-10);
    Simulation::new(robot, Environment::default(), None, c, p, state).unwrap()
}

/// Largest `|E - E0| / E0` along the run.
pub fn max_energy_drift(mut sim: Simulation) -> f64 {
    let e0 = sim.energy().unwrap().total();
    let mut worst = 0.0f64;
    sim.simulate(None, |s, _| {
        worst = worst.max((s.energy().unwrap().total() - e0).abs() / e0);
        true
    })
    .unwrap();
    worst
}

/// Total energies of an undamped clamped rod released under gravity.
pub fn undamped_cantilever_energies(integrator: Integrator, dt: f64, total_time: f64) -> Vec<f64> {
    let mut robot = rod(11, 0.1, 1e6);
    let state = RobotState::rest(&mut robot).unwrap();
    let mut c = ConstraintSet::new(robot.total_dofs());
    c.fix_edges(&robot, &[0]).unwrap();
    let env = Environment {
        gravity: [0.0, 0.0, -9.81],
        ..Default::default()
    };
    let mut p = SimParams::new(dt, total_time);
    p.integrator = integrator;
    p.newton_tol = Some(1e-10);
    let mut sim = Simulation::new(robot, env, None, c, p, state).unwrap();
    let mut out = vec![sim.energy().unwrap().total()];
    sim.simulate(None, |s, _| {
        out.push(s.energy().unwrap().total());
        true
    })
    .unwrap();
    out
}

#[derive(Clone, Copy, Debug)]
pub struct IntegratorReport {
    /// Drift of the implicit midpoint rule at `dt` and `dt / 2`.
    pub midpoint_drift: [f64; 2],
    pub newmark_drift: f64,
    pub newmark_steps: usize,
    /// Largest energy increase of one implicit-Euler step relative to the
    /// energy released by the fall.
    pub euler_worst_rise: f64,
    pub euler_decay: f64,
}

impl IntegratorReport {
    pub fn midpoint_ratio(&self) -> f64 {
        self.midpoint_drift[0] / self.midpoint_drift[1]
    }

    pub fn ok(&self) -> bool {
        let r = self.midpoint_ratio();
        (3.5..=4.5).contains(&r)
            && self.newmark_drift < 1e-3
            && self.newmark_steps >= 10_000
            && self.euler_worst_rise <= 1e-9
            && self.euler_decay > 0.0
    }
}

pub fn integrator_report() -> IntegratorReport {
    let dt = 2e-3;
    let midpoint_drift = [dt, dt / 2.0].map(|h| max_energy_drift(spring_pendulum(Integrator::ImplicitMidpoint, h, 1.0)));
    let newmark_steps = 10_000;
    let newmark_drift = max_energy_drift(spring_pendulum(Integrator::NewmarkBeta, 1e-3, newmark_steps as f64 * 1e-3));
    let e = undamped_cantilever_energies(Integrator::ImplicitEuler, 1e-2, 3.0);
    let scale = e.iter().fold(0.0f64, |m, v| m.max((v - e[0]).abs())).max(1e-300);
    let euler_worst_rise = e.windows(2).map(|w| (w[1] - w[0]) / scale).fold(f64::NEG_INFINITY, f64::max);
    IntegratorReport {
        midpoint_drift,
        newmark_drift,
        newmark_steps,
        euler_worst_rise,
        euler_decay: (e[0] - e[e.len() - 1]) / scale,
    }
}

//! External forces: gravity, buoyancy, mass-proportional damping, resistive
//! force theory drag and scheduled point loads.

use serde::{Deserialize, Serialize};

use crate::assembly::EnergyContribution;
use crate::autodiff::{Dual, Real};
use crate::error::{Result, SimError};
use crate::robot::{EdgeKind, SoftRobot};
use crate::vector::{node_pos, Vec3, V3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RftParams {
    /// Tangential drag coefficient (N s/m^2).
    pub ct: f64,
    /// Normal drag coefficient (N s/m^2).
    pub cn: f64,
    /// Keep the derivative of the tangent in the Jacobian.
    #[serde(default)]
    pub tangent_terms: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Constant { value: [f64; 3] },
    /// Linear rise from zero to `value` over `duration`, then held.
    Ramp { value: [f64; 3], duration: f64 },
    Sine {
        amplitude: [f64; 3],
        /// Hz
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl Schedule {
    pub fn at(&self, t: f64) -> Vec3 {
        match self {
            Schedule::Constant { value } => Vec3::from_slice(value),
            Schedule::Ramp { value, duration } => {
                let s = if *duration > 0.0 { (t / duration).clamp(0.0, 1.0) } else { 1.0 };
                Vec3::from_slice(value) * s
            }
            Schedule::Sine {
                amplitude,
                frequency,
                phase,
            } => Vec3::from_slice(amplitude) * (2.0 * std::f64::consts::PI * frequency * t + phase).sin(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointForce {
    pub node: usize,
    pub schedule: Schedule,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    /// m/s^2
    #[serde(default)]
    pub gravity: [f64; 3],
    /// Mass-proportional damping rate (1/s).
    #[serde(default)]
    pub damping: f64,
    /// Density of a surrounding fluid for buoyancy (kg/m^3).
    #[serde(default)]
    pub fluid_density: f64,
    #[serde(default)]
    pub rft: Option<RftParams>,
    #[serde(default)]
    pub point_forces: Vec<PointForce>,
}

impl Environment {
    pub fn validate(&self, robot: &SoftRobot) -> Result<()> {
        if self.damping < 0.0 || self.fluid_density < 0.0 {
            return Err(SimError::Config("damping and fluid density must be nonnegative".into()));
        }
        if let Some(r) = &self.rft {
            if r.ct < 0.0 || r.cn < 0.0 {
                return Err(SimError::Config("RFT coefficients must be nonnegative".into()));
            }
        }
        for p in &self.point_forces {
            if p.node >= robot.n_nodes() {
                return Err(SimError::Config(format!("point force on unknown node {}", p.node)));
            }
        }
        Ok(())
    }

    pub fn g(&self) -> Vec3 {
        Vec3::from_slice(&self.gravity)
    }
}

/// Body density seen by buoyancy at a node.
fn node_density(robot: &SoftRobot, n: usize) -> f64 {
    let on_rod = robot.edges.iter().any(|e| e.kind == EdgeKind::Rod && e.nodes.contains(&n));
    if on_rod {
        robot.material.rod.density
    } else {
        robot.material.shell.density
    }
}

/// Net weight per node (gravity minus buoyancy).
pub fn gravity_forces(robot: &SoftRobot, env: &Environment) -> Vec<Vec3> {
    let g = env.g();
    (0..robot.n_nodes())
        .map(|n| {
            let m = robot.mass.node_mass(n);
            let buoy = env.fluid_density / node_density(robot, n);
            g * (m * (1.0 - buoy))
        })
        .collect()
}

/// Gravitational potential `-sum m g . x` (buoyancy included).
pub fn gravity_potential(robot: &SoftRobot, env: &Environment, q: &[f64]) -> f64 {
    gravity_forces(robot, env)
        .iter()
        .enumerate()
        .map(|(n, f)| -f.dot(&node_pos(q, n)))
        .sum()
}

/// Drag force on edge `[a, b]` with endpoint velocities, as generic reals.
fn rft_edge<T: Real>(xa: V3<T>, xb: V3<T>, ua: V3<T>, ub: V3<T>, rest: f64, p: &RftParams) -> V3<T> {
    let e = xb - xa;
    let t = e.scale(T::cst(1.0) / e.norm());
    let u = (ua + ub).scale_f(0.5);
    let ut = t.scale(u.dot(&t));
    (ut.scale_f(p.ct) + (u - ut).scale_f(p.cn)).scale_f(-rest)
}

/// Evaluation point of velocity-dependent forces.
#[derive(Clone, Copy, Debug)]
pub struct ExternalEval<'a> {
    pub q: &'a [f64],
    pub u: &'a [f64],
    pub dq_scale: f64,
    pub du_scale: f64,
    pub time: f64,
}

/// Adds all external forces (and Jacobians with respect to the Newton
/// unknown) to `out`.
pub fn assemble_external(robot: &SoftRobot, env: &Environment, ev: ExternalEval<'_>, out: &mut EnergyContribution) {
    for (n, f) in gravity_forces(robot, env).iter().enumerate() {
        for c in 0..3 {
            out.add_force(3 * n + c, f[c]);
        }
    }
    if env.damping > 0.0 {
        for (i, m) in robot.mass.mass.iter().enumerate() {
            out.add_force(i, -env.damping * m * ev.u[i]);
            out.add_jacobian(i, i, -env.damping * m * ev.du_scale);
        }
    }
    if let Some(p) = &env.rft {
        for e in robot.edges.iter().filter(|e| e.kind == EdgeKind::Rod) {
            let [a, b] = e.nodes;
            let dofs = [3 * a, 3 * a + 1, 3 * a + 2, 3 * b, 3 * b + 1, 3 * b + 2];
            let xs = if p.tangent_terms { ev.dq_scale } else { 0.0 };
            let xv = |k: usize| Dual::<6>::var(ev.q[dofs[k]], k, xs);
            let uv = |k: usize| Dual::<6>::var(ev.u[dofs[k]], k, ev.du_scale);
            let f = rft_edge(
                V3::new(xv(0), xv(1), xv(2)),
                V3::new(xv(3), xv(4), xv(5)),
                V3::new(uv(0), uv(1), uv(2)),
                V3::new(uv(3), uv(4), uv(5)),
                e.rest_length,
                p,
            );
            for side in 0..2 {
                for c in 0..3 {
                    let row = dofs[3 * side + c];
                    out.add_force(row, 0.5 * f[c].v);
                    for k in 0..6 {
                        out.add_jacobian(row, dofs[k], 0.5 * f[c].g[k]);
                    }
                }
            }
        }
    }
    for pf in &env.point_forces {
        let f = pf.schedule.at(ev.time);
        for c in 0..3 {
            out.add_force(3 * pf.node + c, f[c]);
        }
    }
}

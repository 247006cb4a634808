//! Implicit time integration with Newton-Raphson.
//!
//! Every integrator expresses the unknown `q_{k+1}` through an evaluation
//! point `(q_eval, u_eval)` with known derivatives `dq_eval/dq` and
//! `du_eval/dq`. The residual is
//!
//! `f(q) = M a(q) - F(q_eval, u_eval)`
//!
//! and its Jacobian `J = M da/dq - dF/dq`. All modules return `F` and
//! `dF/dq` (already scaled by those derivatives), so `J` is assembled here
//! only from their triplet streams and the diagonal inertia.

use serde::{Deserialize, Serialize};

use crate::assembly::EnergyContribution;
use crate::contact::{assemble_contact, build_candidate_set, contact_energy_total, max_step_fraction, ContactEval, ContactPair, ContactParams, ContactStats};
use crate::elastic::{assemble_elastic, elastic_energy};
use crate::error::{Result, SimError};
use crate::external::{assemble_external, gravity_forces, gravity_potential, Environment, ExternalEval};
use crate::frames::update_frames_after_step;
use crate::linsolve::{LinearSolver, SolverKind};
use crate::robot::SoftRobot;
use crate::state::RobotState;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    ImplicitEuler,
    NewmarkBeta,
    ImplicitMidpoint,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineSearch {
    /// Full Newton steps, halved only when the trial state cannot be
    /// evaluated (kinked or collapsed edges).
    #[default]
    Off,
    /// Halve while the residual norm does not decrease.
    Backtracking,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    pub dt: f64,
    pub total_time: f64,
    /// Infinity-norm residual threshold (N). Defaults to `1e-6` times the
    /// total weight, with a floor of `1e-10` N.
    #[serde(default)]
    pub newton_tol: Option<f64>,
    #[serde(default = "default_iters")]
    pub max_newton_iters: usize,
    #[serde(default)]
    pub line_search: LineSearch,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "default_beta")]
    pub newmark_beta: f64,
    #[serde(default = "default_gamma")]
    pub newmark_gamma: f64,
    /// Drop inertia and solve for equilibrium at every step.
    #[serde(default, rename = "static")]
    pub static_flag: bool,
    /// Number of load increments of a static solve.
    #[serde(default = "default_one")]
    pub load_steps: usize,
    /// Planar motion: pins z and every twist angle.
    #[serde(default)]
    pub two_d: bool,
    #[serde(default)]
    pub solver: SolverKind,
    /// Times a failed step may be retried with half the step size.
    #[serde(default)]
    pub max_halvings: usize,
}

fn default_iters() -> usize {
    25
}
fn default_beta() -> f64 {
    0.25
}
fn default_gamma() -> f64 {
    0.5
}
fn default_one() -> usize {
    1
}

impl SimParams {
    pub fn new(dt: f64, total_time: f64) -> Self {
        Self {
            dt,
            total_time,
            newton_tol: None,
            max_newton_iters: default_iters(),
            line_search: LineSearch::Off,
            integrator: Integrator::ImplicitEuler,
            newmark_beta: default_beta(),
            newmark_gamma: default_gamma(),
            static_flag: false,
            load_steps: 1,
            two_d: false,
            solver: SolverKind::Sparse,
            max_halvings: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.total_time >= 0.0) {
            return Err(SimError::Config("dt must be positive and total_time nonnegative".into()));
        }
        if matches!(self.newton_tol, Some(t) if !(t > 0.0)) {
            return Err(SimError::Config("newton_tol must be positive".into()));
        }
        if self.max_newton_iters == 0 || self.load_steps == 0 {
            return Err(SimError::Config("max_newton_iters and load_steps must be at least 1".into()));
        }
        if !(self.newmark_beta > 0.0) || !(self.newmark_gamma > 0.0) {
            return Err(SimError::Config("Newmark parameters must be positive".into()));
        }
        Ok(())
    }

    /// Number of steps covering `total_time`.
    pub fn n_steps(&self) -> usize {
        (self.total_time / self.dt + 1e-9).floor() as usize
    }
}

/// Scalar motion profile of a prescribed DOF, relative to its value when
/// the prescription was installed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// Constant velocity (units per second).
    Linear { rate: f64 },
    /// Linear rise to `value` over `duration`, then held.
    Ramp { value: f64, duration: f64 },
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl Profile {
    pub fn offset(&self, t: f64) -> f64 {
        match self {
            Profile::Linear { rate } => rate * t,
            Profile::Ramp { value, duration } => {
                if *duration > 0.0 {
                    value * (t / duration).clamp(0.0, 1.0)
                } else {
                    *value
                }
            }
            Profile::Sine {
                amplitude,
                frequency,
                phase,
            } => amplitude * ((2.0 * std::f64::consts::PI * frequency * t + phase).sin() - phase.sin()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Motion {
    dof: usize,
    base: f64,
    profile: Profile,
}

/// Fixed and prescribed DOFs. Everything else is free.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    fixed: Vec<bool>,
    prescribed: Vec<bool>,
    motions: Vec<Motion>,
}

impl ConstraintSet {
    pub fn new(n_dofs: usize) -> Self {
        Self {
            fixed: vec![false; n_dofs],
            prescribed: vec![false; n_dofs],
            motions: Vec::new(),
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.fixed.len()
    }

    fn check(&self, dof: usize) -> Result<()> {
        if dof >= self.fixed.len() {
            return Err(SimError::Config(format!("constraint on unknown DOF {dof}")));
        }
        Ok(())
    }

    pub fn fix_dof(&mut self, dof: usize) -> Result<()> {
        self.check(dof)?;
        if self.prescribed[dof] {
            return Err(SimError::Config(format!("DOF {dof} is both fixed and prescribed")));
        }
        self.fixed[dof] = true;
        Ok(())
    }

    pub fn fix_nodes(&mut self, robot: &SoftRobot, nodes: &[usize]) -> Result<()> {
        for &n in nodes {
            if n >= robot.n_nodes() {
                return Err(SimError::Config(format!("fix_nodes: unknown node {n}")));
            }
            for d in robot.layout.node_dofs(n) {
                self.fix_dof(d)?;
            }
        }
        Ok(())
    }

    /// Clamps edges: both end nodes and the twist angle.
    pub fn fix_edges(&mut self, robot: &SoftRobot, edges: &[usize]) -> Result<()> {
        for &e in edges {
            let edge = robot
                .edges
                .get(e)
                .ok_or_else(|| SimError::Config(format!("fix_edges: unknown edge {e}")))?;
            self.fix_nodes(robot, &edge.nodes)?;
            if let Some(d) = robot.layout.theta_dof(e) {
                self.fix_dof(d)?;
            }
        }
        Ok(())
    }

    /// Pins z of every node and every twist angle.
    pub fn two_d(&mut self, robot: &SoftRobot) -> Result<()> {
        for n in 0..robot.n_nodes() {
            self.fix_dof(3 * n + 2)?;
        }
        for e in robot.twisting_edges() {
            self.fix_dof(robot.layout.theta_dof(e).expect("twisting edge"))?;
        }
        Ok(())
    }

    /// Prescribes `q[dof] = base + profile(t)`.
    pub fn prescribe(&mut self, dof: usize, base: f64, profile: Profile) -> Result<()> {
        self.check(dof)?;
        if self.fixed[dof] || self.prescribed[dof] {
            return Err(SimError::Config(format!("conflicting prescriptions on DOF {dof}")));
        }
        self.prescribed[dof] = true;
        self.motions.push(Motion { dof, base, profile });
        Ok(())
    }

    /// Moves one coordinate (`axis` 0..3) of a node from its value in `q`.
    pub fn move_node(&mut self, robot: &SoftRobot, q: &[f64], node: usize, axis: usize, profile: Profile) -> Result<()> {
        if node >= robot.n_nodes() || axis > 2 {
            return Err(SimError::Config(format!("move_nodes: bad node {node} or axis {axis}")));
        }
        let d = 3 * node + axis;
        self.prescribe(d, q[d], profile)
    }

    pub fn twist_edge(&mut self, robot: &SoftRobot, q: &[f64], edge: usize, profile: Profile) -> Result<()> {
        let d = robot
            .layout
            .theta_dof(edge)
            .ok_or_else(|| SimError::Config(format!("twist_edges: edge {edge} has no twist angle")))?;
        self.prescribe(d, q[d], profile)
    }

    pub fn is_free(&self, dof: usize) -> bool {
        !self.fixed[dof] && !self.prescribed[dof]
    }

    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.fixed.len()).filter(|&d| self.is_free(d)).collect()
    }

    /// Writes prescribed values at time `t` into `q`.
    pub fn apply(&self, q: &mut [f64], t: f64) {
        for m in &self.motions {
            q[m.dof] = m.base + m.profile.offset(t);
        }
    }
}

/// Mechanical energy split (J).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub elastic: f64,
    pub gravity: f64,
    pub contact: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.kinetic + self.elastic + self.gravity + self.contact
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    /// Newton iterations summed over substeps.
    pub iterations: usize,
    pub residual: f64,
    pub substeps: usize,
    pub active_contacts: usize,
    pub max_penetration: f64,
    /// Residual norms of the last solve, one per iteration.
    #[serde(skip)]
    pub residual_history: Vec<f64>,
}

/// Per-step relation between the unknown `q` and the evaluation point.
#[derive(Clone, Copy, Debug)]
enum Scheme {
    Euler,
    Newmark { beta: f64, gamma: f64 },
    Midpoint,
    Static,
}

struct StepFrame<'a> {
    qk: &'a [f64],
    uk: &'a [f64],
    ak: &'a [f64],
    dt: f64,
    scheme: Scheme,
}

impl StepFrame<'_> {
    fn accel(&self, q: &[f64], i: usize) -> f64 {
        let dt = self.dt;
        match self.scheme {
            Scheme::Euler => ((q[i] - self.qk[i]) / dt - self.uk[i]) / dt,
            Scheme::Newmark { beta, .. } => {
                (q[i] - self.qk[i] - dt * self.uk[i] - dt * dt * (0.5 - beta) * self.ak[i]) / (beta * dt * dt)
            }
            Scheme::Midpoint => 2.0 * ((q[i] - self.qk[i]) / dt - self.uk[i]) / dt,
            Scheme::Static => 0.0,
        }
    }

    /// `d accel / dq`.
    fn accel_jac(&self) -> f64 {
        let dt = self.dt;
        match self.scheme {
            Scheme::Euler => 1.0 / (dt * dt),
            Scheme::Newmark { beta, .. } => 1.0 / (beta * dt * dt),
            Scheme::Midpoint => 2.0 / (dt * dt),
            Scheme::Static => 0.0,
        }
    }

    /// Velocity at the end of the step.
    fn velocity(&self, q: &[f64], i: usize) -> f64 {
        let dt = self.dt;
        match self.scheme {
            Scheme::Euler => (q[i] - self.qk[i]) / dt,
            Scheme::Newmark { gamma, .. } => self.uk[i] + dt * ((1.0 - gamma) * self.ak[i] + gamma * self.accel(q, i)),
            Scheme::Midpoint => 2.0 * (q[i] - self.qk[i]) / dt - self.uk[i],
            Scheme::Static => 0.0,
        }
    }

    fn eval_point(&self, q: &[f64]) -> (Vec<f64>, Vec<f64>, f64, f64) {
        let n = q.len();
        let dt = self.dt;
        match self.scheme {
            Scheme::Euler => (q.to_vec(), (0..n).map(|i| self.velocity(q, i)).collect(), 1.0, 1.0 / dt),
            Scheme::Newmark { beta, gamma } => (
                q.to_vec(),
                (0..n).map(|i| self.velocity(q, i)).collect(),
                1.0,
                gamma / (beta * dt),
            ),
            Scheme::Midpoint => (
                (0..n).map(|i| 0.5 * (q[i] + self.qk[i])).collect(),
                (0..n).map(|i| (q[i] - self.qk[i]) / dt).collect(),
                0.5,
                1.0 / dt,
            ),
            Scheme::Static => (q.to_vec(), vec![0.0; n], 1.0, 0.0),
        }
    }
}

/// Objects called around every step of [`Simulation::simulate`].
pub trait StepHook {
    /// Runs before the step ending at `t_next`. May edit natural strains,
    /// constraints or the environment.
    fn before_step(&mut self, sim: &mut Simulation, t_next: f64) -> Result<()>;

    fn after_step(&mut self, _sim: &Simulation, _report: &StepReport) -> Result<()> {
        Ok(())
    }
}

/// A robot together with its environment, constraints and state.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub robot: SoftRobot,
    pub env: Environment,
    pub contact: Option<ContactParams>,
    pub constraints: ConstraintSet,
    pub params: SimParams,
    pub state: RobotState,
    pub steps_taken: usize,
    last_disp: f64,
    /// Time of the initial state; step `k` ends at `origin + k dt`.
    origin: f64,
    accel_ready: bool,
    solver: LinearSolver,
}

impl Simulation {
    pub fn new(
        robot: SoftRobot,
        env: Environment,
        contact: Option<ContactParams>,
        mut constraints: ConstraintSet,
        params: SimParams,
        state: RobotState,
    ) -> Result<Self> {
        params.validate()?;
        env.validate(&robot)?;
        if let Some(c) = &contact {
            c.validate()?;
        }
        if constraints.n_dofs() != robot.total_dofs() || state.q.len() != robot.total_dofs() {
            return Err(SimError::Config("constraint/state size does not match the robot".into()));
        }
        if params.two_d {
            constraints.two_d(&robot)?;
        }
        let origin = state.time;
        Ok(Self {
            robot,
            env,
            contact,
            constraints,
            params,
            state,
            steps_taken: 0,
            last_disp: 0.0,
            origin,
            accel_ready: false,
            solver: LinearSolver::new(SolverKind::default()),
        })
    }

    /// Newton tolerance in force units.
    pub fn newton_tol(&self) -> f64 {
        self.params.newton_tol.unwrap_or_else(|| {
            let w = gravity_forces(&self.robot, &self.env)
                .iter()
                .fold(crate::vector::Vec3::zero(), |a, b| a + *b)
                .norm();
            (1e-6 * w).max(1e-10)
        })
    }

    fn scheme(&self) -> Scheme {
        if self.params.static_flag {
            return Scheme::Static;
        }
        match self.params.integrator {
            Integrator::ImplicitEuler => Scheme::Euler,
            Integrator::NewmarkBeta => Scheme::Newmark {
                beta: self.params.newmark_beta,
                gamma: self.params.newmark_gamma,
            },
            Integrator::ImplicitMidpoint => Scheme::Midpoint,
        }
    }

    /// Sum of all forces and their Jacobian at the evaluation point.
    #[allow(clippy::too_many_arguments)]
    fn forces(
        &self,
        q_eval: &[f64],
        u_eval: &[f64],
        dq: f64,
        du: f64,
        time: f64,
        load_scale: f64,
        pairs: &[ContactPair],
        with_jac: bool,
    ) -> Result<(EnergyContribution, ContactStats)> {
        let n = q_eval.len();
        let mut out = EnergyContribution::new(n, with_jac);
        assemble_elastic(&self.robot, q_eval, &self.state.frames, &mut out, dq)?;
        let mut ext = EnergyContribution::new(n, with_jac);
        let ev = ExternalEval {
            q: q_eval,
            u: u_eval,
            dq_scale: dq,
            du_scale: du,
            time,
        };
        assemble_external(&self.robot, &self.env, ev, &mut ext);
        if load_scale != 1.0 {
            ext.force.iter_mut().for_each(|f| *f *= load_scale);
            ext.jacobian.iter_mut().for_each(|t| t.2 *= load_scale);
        }
        out.merge(&ext);
        let mut stats = ContactStats::default();
        if let Some(cp) = &self.contact {
            let ev = ContactEval {
                q: q_eval,
                u: u_eval,
                dq_scale: dq,
                du_scale: du,
            };
            stats = assemble_contact(&self.robot, pairs, cp, ev, &mut out);
        }
        Ok((out, stats))
    }

    /// Full residual `M a(q) - F` over all DOFs for a step of size `dt`
    /// from the current state (contact pairs taken at the current state).
    pub fn residual(&self, q_new: &[f64], dt: f64) -> Result<Vec<f64>> {
        let pairs = self.candidates(dt);
        let frame = StepFrame {
            qk: &self.state.q,
            uk: &self.state.u,
            ak: &self.state.a,
            dt,
            scheme: self.scheme(),
        };
        let (f, _) = self.residual_with(&frame, q_new, self.state.time + dt, 1.0, &pairs, false)?;
        Ok(f)
    }

    fn residual_with(
        &self,
        frame: &StepFrame<'_>,
        q: &[f64],
        time: f64,
        load_scale: f64,
        pairs: &[ContactPair],
        with_jac: bool,
    ) -> Result<(Vec<f64>, (EnergyContribution, ContactStats))> {
        let (qe, ue, dq, du) = frame.eval_point(q);
        let (forces, stats) = self.forces(&qe, &ue, dq, du, time, load_scale, pairs, with_jac)?;
        let m = &self.robot.mass.mass;
        let f = (0..q.len()).map(|i| m[i] * frame.accel(q, i) - forces.force[i]).collect();
        Ok((f, (forces, stats)))
    }

    fn candidates(&self, dt: f64) -> Vec<ContactPair> {
        let Some(cp) = &self.contact else {
            return Vec::new();
        };
        let margin = cp.margin.unwrap_or_else(|| {
            let umax = self.state.u.iter().take(self.robot.layout.n_positions()).fold(0.0f64, |a, v| a.max(v.abs()));
            (2.0 * self.last_disp).max(2.0 * dt * umax)
        });
        build_candidate_set(&self.robot, &self.state.q, cp, margin)
    }

    /// Largest fraction of a pair's separation one Newton update may close.
    const STEP_FILTER_SAFETY: f64 = 0.8;

/// Newton iteration from which contact pairs keep their classification.
pub const FREEZE_CONTACT_AFTER: usize = 5;

/// Solves one step of size `dt`, committing the state on success.
    fn solve_step(&mut self, dt: f64, load_scale: f64, report: &mut StepReport) -> Result<()> {
        let t_next = self.state.time + dt;
        let mut pairs = self.candidates(dt);
        let free = self.constraints.free_dofs();
        let n = self.robot.total_dofs();
        let mut index = vec![usize::MAX; n];
        for (k, &d) in free.iter().enumerate() {
            index[d] = k;
        }
        if self.solver.kind != self.params.solver {
            self.solver = LinearSolver::new(self.params.solver);
        }
        let tol = self.newton_tol();
        let frame = StepFrame {
            qk: &self.state.q,
            uk: &self.state.u,
            ak: &self.state.a,
            dt,
            scheme: self.scheme(),
        };
        let mut q = self.state.q.clone();
        self.constraints.apply(&mut q, t_next);

        let norm = |f: &[f64]| free.iter().fold(0.0f64, |a, &d| a.max(f[d].abs()));
        let mut history = Vec::new();
        let mut converged = false;
        let mut iters = 0;
        let (mut f, (mut eval, mut stats)) = self.residual_with(&frame, &q, t_next, load_scale, &pairs, true)?;
        let mut r = norm(&f);
        loop {
            history.push(r);
            if r < tol || free.is_empty() {
                converged = true;
                break;
            }
            if iters >= self.params.max_newton_iters {
                break;
            }
            iters += 1;
            if iters == Self::FREEZE_CONTACT_AFTER {
                // Closest-feature switching makes the contact gradient only
                // piecewise smooth, and Newton can cycle between two
                // classifications; later iterations keep the current one.
                let ground = self.contact.as_ref().and_then(|c| c.ground).unwrap_or(0.0);
                pairs = pairs.iter().map(|p| p.freeze(&self.robot, &q, ground)).collect();
            }
            let ajac = frame.accel_jac();
            let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(eval.jacobian.len() + free.len());
            for &d in &free {
                trip.push((index[d], index[d], self.robot.mass.mass[d] * ajac));
            }
            for &(a, b, v) in &eval.jacobian {
                let (i, j) = (index[a], index[b]);
                if i != usize::MAX && j != usize::MAX {
                    trip.push((i, j, -v));
                }
            }
            let rhs: Vec<f64> = free.iter().map(|&d| f[d]).collect();
            let delta = self.solver.solve(free.len(), &trip, &rhs)?;
            let trial_at = |alpha: f64| {
                let mut trial = q.clone();
                for (k, &d) in free.iter().enumerate() {
                    trial[d] -= alpha * delta[k];
                }
                trial
            };

            // Monotone backtracking; when no halving decreases the residual
            // the full step is kept (residuals of stiff geometrically
            // nonlinear problems often rise before they fall). Without line
            // search the step is only halved while the trial state cannot be
            // evaluated.
            let monotone = self.params.line_search == LineSearch::Backtracking;
            let mut alpha = match &self.contact {
                Some(cp) if cp.step_filter && !pairs.is_empty() => {
                    let mut dir = vec![0.0; n];
                    for (k, &d) in free.iter().enumerate() {
                        dir[d] = -delta[k];
                    }
                    max_step_fraction(&self.robot, &pairs, cp, &q, &dir, Self::STEP_FILTER_SAFETY)
                }
                _ => 1.0,
            };
            let full = alpha;
            if monotone {
                let decreases = |alpha: f64| {
                    self.residual_with(&frame, &trial_at(alpha), t_next, load_scale, &pairs, false)
                        .is_ok_and(|(ft, _)| norm(&ft) < r)
                };
                while !decreases(alpha) && alpha > full / 256.0 {
                    alpha *= 0.5;
                }
                if !decreases(alpha) {
                    alpha = full;
                }
            }
            let mut next = None;
            for _ in 0..=8 {
                match self.residual_with(&frame, &trial_at(alpha), t_next, load_scale, &pairs, true) {
                    Ok(v) if v.0.iter().all(|x| x.is_finite()) => {
                        next = Some(v);
                        break;
                    }
                    Ok(_) => {}
                    Err(e) => log::debug!("Newton trial not evaluable: {e}"),
                }
                alpha *= 0.5;
            }
            let Some((ft, et)) = next else {
                return Err(self.failure(t_next, r, iters));
            };
            q = trial_at(alpha);
            f = ft;
            (eval, stats) = et;
            r = norm(&f);
            if !r.is_finite() {
                return Err(self.failure(t_next, r, iters));
            }
        }
        report.iterations += iters;
        report.residual = r;
        log::debug!("residuals {history:?}");
        report.residual_history = history;
        report.substeps += 1;
        report.active_contacts = stats.active_pairs;
        report.max_penetration = stats.max_penetration;
        if !converged {
            return Err(self.failure(t_next, r, iters));
        }

        let u: Vec<f64> = (0..n).map(|i| frame.velocity(&q, i)).collect();
        let a: Vec<f64> = match frame.scheme {
            Scheme::Newmark { .. } => (0..n).map(|i| frame.accel(&q, i)).collect(),
            Scheme::Static => vec![0.0; n],
            _ => (0..n).map(|i| (u[i] - self.state.u[i]) / dt).collect(),
        };
        let frames = update_frames_after_step(&self.robot, &self.state.frames, &q)?;
        self.last_disp = (0..self.robot.layout.n_positions()).fold(0.0f64, |m, i| m.max((q[i] - self.state.q[i]).abs()));
        self.state = RobotState {
            q,
            u,
            a,
            frames,
            time: t_next,
        };
        Ok(())
    }

    fn failure(&self, time: f64, residual: f64, iterations: usize) -> SimError {
        SimError::StepFailure {
            step: self.steps_taken + 1,
            time,
            residual,
            iterations,
        }
    }

    /// Consistent initial acceleration `M a = F` on free DOFs.
    fn init_acceleration(&mut self) -> Result<()> {
        let n = self.robot.total_dofs();
        let (f, _) = self.forces(&self.state.q, &self.state.u, 1.0, 0.0, self.state.time, 1.0, &self.candidates(self.params.dt), false)?;
        for i in 0..n {
            self.state.a[i] = if self.constraints.is_free(i) {
                f.force[i] / self.robot.mass.mass[i]
            } else {
                0.0
            };
        }
        Ok(())
    }

    fn step_recursive(&mut self, dt: f64, level: usize, report: &mut StepReport) -> Result<()> {
        let saved = (self.state.clone(), self.last_disp);
        match self.solve_step(dt, 1.0, report) {
            Ok(()) => Ok(()),
            Err(e @ SimError::StepFailure { .. }) | Err(e @ SimError::Kink { .. }) | Err(e @ SimError::SingularStretch { .. })
                if level < self.params.max_halvings =>
            {
                log::warn!("{e}; retrying with dt = {:.3e}", dt / 2.0);
                (self.state, self.last_disp) = saved;
                self.step_recursive(dt / 2.0, level + 1, report)?;
                self.step_recursive(dt / 2.0, level + 1, report)
            }
            Err(e) => {
                (self.state, self.last_disp) = saved;
                Err(e)
            }
        }
    }

    /// End time of the next step.
    pub fn next_time(&self) -> f64 {
        self.origin + (self.steps_taken + 1) as f64 * self.params.dt
    }

    /// One step of size `params.dt` (hooks not invoked).
    pub fn step(&mut self) -> Result<StepReport> {
        let mut report = StepReport {
            step: self.steps_taken + 1,
            ..Default::default()
        };
        if self.params.static_flag {
            self.static_step(&mut report)?;
        } else {
            if matches!(self.params.integrator, Integrator::NewmarkBeta) && !self.accel_ready {
                self.init_acceleration()?;
                self.accel_ready = true;
            }
            let dt = self.params.dt;
            let t_next = self.next_time();
            self.step_recursive(dt, 0, &mut report)?;
            // halved substeps accumulate round-off in time
            self.state.time = t_next;
        }
        self.steps_taken += 1;
        report.time = self.state.time;
        Ok(report)
    }

    /// Equilibrium at `t + dt` with optional load ramping.
    fn static_step(&mut self, report: &mut StepReport) -> Result<()> {
        let dt = self.params.dt;
        let t_next = self.next_time();
        let n = self.params.load_steps;
        for k in 1..=n {
            let scale = k as f64 / n as f64;
            let saved = self.state.clone();
            self.solve_step(dt, scale, report)?;
            if k < n {
                // stay at the same time until the final increment
                self.state.time = saved.time;
            }
        }
        self.state.time = t_next;
        Ok(())
    }

    /// Runs `params.n_steps()` steps. `on_step` sees every committed step
    /// (with its report) and may stop early by returning `false`.
    pub fn simulate(
        &mut self,
        mut hook: Option<&mut dyn StepHook>,
        mut on_step: impl FnMut(&Simulation, &StepReport) -> bool,
    ) -> Result<()> {
        let n = self.params.n_steps();
        for _ in 0..n {
            let t_next = self.next_time();
            if let Some(h) = hook.as_deref_mut() {
                h.before_step(self, t_next)?;
            }
            let report = self.step()?;
            if let Some(h) = hook.as_deref_mut() {
                h.after_step(self, &report)?;
            }
            if !on_step(self, &report) {
                break;
            }
        }
        Ok(())
    }

    pub fn energy(&self) -> Result<EnergyBreakdown> {
        let q = &self.state.q;
        let kinetic = 0.5
            * self
                .state
                .u
                .iter()
                .zip(&self.robot.mass.mass)
                .map(|(u, m)| m * u * u)
                .sum::<f64>();
        let contact = match &self.contact {
            Some(cp) => contact_energy_total(&self.robot, &self.candidates(self.params.dt), cp, q),
            None => 0.0,
        };
        Ok(EnergyBreakdown {
            kinetic,
            elastic: elastic_energy(&self.robot, q, &self.state.frames)?,
            gravity: gravity_potential(&self.robot, &self.env, q),
            contact,
        })
    }
}

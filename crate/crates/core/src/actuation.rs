//! Open-loop actuation through natural strains.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::robot::{EdgeKind, SoftRobot};
use crate::stepper::{Simulation, StepHook};

/// Natural curvature `A r(t) sin(2 pi (s / lambda - f t))` on one curvature
/// component of every bend-twist spring, where `s` is the rest arc length
/// of the spring's middle node and `r` ramps linearly from 0 to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TravelingWave {
    /// Curvature amplitude (1/m).
    pub amplitude: f64,
    /// m
    pub wavelength: f64,
    /// Hz
    pub frequency: f64,
    /// Ramp duration (s).
    #[serde(default)]
    pub ramp: f64,
    /// Curvature component, 0 or 1. For a rod in the xy-plane the in-plane
    /// component is 1.
    #[serde(default = "in_plane")]
    pub component: usize,
}

fn in_plane() -> usize {
    1
}

/// Periodic scaling of the natural dihedral angles of all hinges:
/// `bar(theta) = bar(theta_0) (1 + a sin(2 pi f t))`, plus a uniform
/// offset `b sin(2 pi f t)` (rad).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShellPulse {
    #[serde(default)]
    pub relative: f64,
    #[serde(default)]
    pub offset: f64,
    pub frequency: f64,
    #[serde(default)]
    pub ramp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Actuation {
    TravelingWave(TravelingWave),
    ShellPulse(ShellPulse),
}

impl Actuation {
    pub fn validate(&self) -> Result<()> {
        match self {
            Actuation::TravelingWave(w) => {
                if !(w.wavelength > 0.0) || w.component > 1 || !(w.ramp >= 0.0) {
                    return Err(SimError::Config(
                        "traveling wave needs wavelength > 0, ramp >= 0 and component 0 or 1".into(),
                    ));
                }
            }
            Actuation::ShellPulse(p) => {
                if !(p.ramp >= 0.0) || !p.frequency.is_finite() {
                    return Err(SimError::Config("shell pulse needs finite frequency and ramp >= 0".into()));
                }
            }
        }
        Ok(())
    }
}

fn ramp(t: f64, duration: f64) -> f64 {
    if duration > 0.0 {
        (t / duration).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// Rest arc length of every node, walking rod edges in input order from
/// node 0 of each connected piece.
pub fn rod_arc_length(robot: &SoftRobot) -> Vec<f64> {
    let mut s = vec![f64::NAN; robot.n_nodes()];
    for e in &robot.edges {
        if e.kind != EdgeKind::Rod {
            continue;
        }
        let [a, b] = e.nodes;
        if s[a].is_nan() && s[b].is_nan() {
            s[a] = 0.0;
        }
        if s[b].is_nan() {
            s[b] = s[a] + e.rest_length;
        } else if s[a].is_nan() {
            s[a] = s[b] + e.rest_length;
        }
    }
    s.iter().map(|v| if v.is_nan() { 0.0 } else { *v }).collect()
}

/// Before-step hook writing the actuation into the natural strains.
#[derive(Clone, Debug)]
pub struct Actuator {
    pub actuation: Actuation,
    arc: Vec<f64>,
    hinge_rest: Vec<f64>,
}

impl Actuator {
    pub fn new(robot: &SoftRobot, actuation: Actuation) -> Result<Self> {
        actuation.validate()?;
        let s = rod_arc_length(robot);
        let arc = robot.bend_twist_springs.iter().map(|sp| s[sp.nodes[1]]).collect();
        let hinge_rest = robot.hinge_springs.iter().map(|h| h.nat_angle).collect();
        Ok(Self {
            actuation,
            arc,
            hinge_rest,
        })
    }

    /// Writes the actuation at time `t` into `robot`.
    pub fn apply(&self, robot: &mut SoftRobot, t: f64) {
        use std::f64::consts::TAU;
        match &self.actuation {
            Actuation::TravelingWave(w) => {
                let r = ramp(t, w.ramp);
                for (sp, s) in robot.bend_twist_springs.iter_mut().zip(&self.arc) {
                    let kappa = w.amplitude * r * (TAU * (s / w.wavelength - w.frequency * t)).sin();
                    sp.inc_curvature[w.component] = kappa * sp.voronoi_length;
                }
            }
            Actuation::ShellPulse(p) => {
                let phase = ramp(t, p.ramp) * (TAU * p.frequency * t).sin();
                for (h, rest) in robot.hinge_springs.iter_mut().zip(&self.hinge_rest) {
                    h.nat_angle = rest * (1.0 + p.relative * phase) + p.offset * phase;
                }
            }
        }
    }
}

impl StepHook for Actuator {
    fn before_step(&mut self, sim: &mut Simulation, t_next: f64) -> Result<()> {
        self.apply(&mut sim.robot, t_next);
        Ok(())
    }
}

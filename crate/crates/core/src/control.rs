//! Closed-loop PI regulation of natural strains.
//!
//! Strain fields here are relative to the stress-free state: stretch
//! `eps - eps_rest` per stretch spring and curvature `kappa - kappa_rest`
//! per bend-twist spring. The controller writes the actuation increments
//! (`inc_strain`, `inc_curvature`) that the elastic energies read.

use serde::{Deserialize, Serialize};

use crate::elastic::measure_strains;
use crate::error::{Result, SimError};
use crate::frames::{init_reference_frames, FrameSet};
use crate::robot::SoftRobot;
use crate::stepper::{Simulation, StepHook};
use crate::vector::{node_pos, set_node_pos, Vec3};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StrainSample {
    pub stretch: Vec<f64>,
    pub curvature: Vec<[f64; 2]>,
}

impl StrainSample {
    pub fn zeros(robot: &SoftRobot) -> Self {
        Self {
            stretch: vec![0.0; robot.stretch_springs.len()],
            curvature: vec![[0.0; 2]; robot.bend_twist_springs.len()],
        }
    }

    fn lerp(&self, o: &Self, s: f64) -> Self {
        Self {
            stretch: self.stretch.iter().zip(&o.stretch).map(|(a, b)| a + s * (b - a)).collect(),
            curvature: self
                .curvature
                .iter()
                .zip(&o.curvature)
                .map(|(a, b)| [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])])
                .collect(),
        }
    }

    pub fn minus(&self, o: &Self) -> Self {
        Self {
            stretch: self.stretch.iter().zip(&o.stretch).map(|(a, b)| a - b).collect(),
            curvature: self
                .curvature
                .iter()
                .zip(&o.curvature)
                .map(|(a, b)| [a[0] - b[0], a[1] - b[1]])
                .collect(),
        }
    }

    /// Root mean square over the given modes.
    pub fn rms(&self, modes: &Modes) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        if modes.stretch {
            sum += self.stretch.iter().map(|v| v * v).sum::<f64>();
            n += self.stretch.len();
        }
        if modes.bend {
            sum += self.curvature.iter().map(|c| c[0] * c[0] + c[1] * c[1]).sum::<f64>();
            n += 2 * self.curvature.len();
        }
        if n == 0 {
            0.0
        } else {
            (sum / n as f64).sqrt()
        }
    }
}

/// Strains at `q` relative to the stress-free state.
pub fn measure_strain(robot: &SoftRobot, q: &[f64], frames: &FrameSet) -> Result<StrainSample> {
    let f = measure_strains(robot, q, frames)?;
    Ok(StrainSample {
        stretch: f.stretch.iter().zip(&robot.stretch_springs).map(|(v, s)| v - s.nat_strain).collect(),
        curvature: f
            .curvature
            .iter()
            .zip(&robot.bend_twist_springs)
            .map(|(c, s)| [c[0] - s.nat_curvature[0], c[1] - s.nat_curvature[1]])
            .collect(),
    })
}

/// Strains of a target node configuration (angular DOFs at zero), measured
/// with the same operators as [`measure_strain`].
pub fn reference_strain_from_shape(robot: &SoftRobot, target: &[Vec3]) -> Result<StrainSample> {
    if target.len() != robot.n_nodes() {
        return Err(SimError::Topology(format!(
            "target shape has {} nodes, robot has {}",
            target.len(),
            robot.n_nodes()
        )));
    }
    let mut q = vec![0.0; robot.total_dofs()];
    for (n, p) in target.iter().enumerate() {
        set_node_pos(&mut q, n, *p);
    }
    let frames = init_reference_frames(robot, &q)?;
    measure_strain(robot, &q, &frames)
}

/// Time-indexed reference strains, linearly interpolated. Optional node
/// shapes per sample are used for the nodal RMSE diagnostic.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub times: Vec<f64>,
    pub samples: Vec<StrainSample>,
    #[serde(default)]
    pub shapes: Vec<Vec<Vec3>>,
}

impl ReferenceTrajectory {
    pub fn constant(sample: StrainSample, shape: Option<Vec<Vec3>>) -> Self {
        Self {
            times: vec![0.0],
            samples: vec![sample],
            shapes: shape.into_iter().collect(),
        }
    }

    pub fn validate(&self, robot: &SoftRobot) -> Result<()> {
        if self.times.is_empty() || self.times.len() != self.samples.len() {
            return Err(SimError::Config("reference needs one sample per time".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SimError::Config("reference times must be strictly increasing".into()));
        }
        if !self.shapes.is_empty() && self.shapes.len() != self.times.len() {
            return Err(SimError::Config("reference shapes must match the samples".into()));
        }
        let (ns, nb) = (robot.stretch_springs.len(), robot.bend_twist_springs.len());
        if self.samples.iter().any(|s| s.stretch.len() != ns || s.curvature.len() != nb) {
            return Err(SimError::Topology("reference strain size does not match the robot".into()));
        }
        Ok(())
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// Bracketing samples and interpolation weight at time `t`.
    fn locate(&self, t: f64) -> (usize, usize, f64) {
        let n = self.times.len();
        if t <= self.times[0] {
            return (0, 0, 0.0);
        }
        if t >= self.times[n - 1] {
            return (n - 1, n - 1, 0.0);
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        (k, k + 1, (t - self.times[k]) / (self.times[k + 1] - self.times[k]))
    }

    pub fn at(&self, t: f64) -> StrainSample {
        let (a, b, s) = self.locate(t);
        self.samples[a].lerp(&self.samples[b], s)
    }

    pub fn shape_at(&self, t: f64) -> Option<Vec<Vec3>> {
        if self.shapes.is_empty() {
            return None;
        }
        let (a, b, s) = self.locate(t);
        Some(self.shapes[a].iter().zip(&self.shapes[b]).map(|(p, q)| *p + (*q - *p) * s).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Modes {
    #[serde(default)]
    pub stretch: bool,
    #[serde(default = "yes")]
    pub bend: bool,
}

fn yes() -> bool {
    true
}

impl Default for Modes {
    fn default() -> Self {
        Self {
            stretch: false,
            bend: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiConfig {
    pub kp_bend: f64,
    /// 1/s
    pub ki_bend: f64,
    #[serde(default)]
    pub kp_stretch: f64,
    #[serde(default)]
    pub ki_stretch: f64,
    #[serde(default = "one")]
    pub smoothing_window: usize,
    /// Largest natural curvature change per update (1/m, integrated).
    pub rate_limit_bend: f64,
    #[serde(default = "default_rate")]
    pub rate_limit_stretch: f64,
    pub integral_clamp: f64,
    #[serde(default)]
    pub modes: Modes,
    /// Update every `interval` steps.
    #[serde(default = "one")]
    pub interval: usize,
    /// Start from natural strains equal to the reference instead of the
    /// current ones.
    #[serde(default)]
    pub feedforward: bool,
}

fn one() -> usize {
    1
}

fn default_rate() -> f64 {
    1e-3
}

impl PiConfig {
    pub fn validate(&self) -> Result<()> {
        let gains = [self.kp_bend, self.ki_bend, self.kp_stretch, self.ki_stretch];
        if gains.iter().any(|g| !(*g >= 0.0)) {
            return Err(SimError::Config("controller gains must be nonnegative".into()));
        }
        if self.smoothing_window == 0 || self.smoothing_window % 2 == 0 {
            return Err(SimError::Config("smoothing_window must be odd and at least 1".into()));
        }
        if !(self.rate_limit_bend > 0.0) || !(self.rate_limit_stretch > 0.0) || !(self.integral_clamp > 0.0) {
            return Err(SimError::Config("rate limits and integral clamp must be positive".into()));
        }
        if self.interval == 0 {
            return Err(SimError::Config("controller interval must be at least 1".into()));
        }
        Ok(())
    }
}

/// Centered moving average whose window shrinks symmetrically near the ends,
/// so constant fields pass unchanged.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let h = window / 2;
    let n = values.len();
    (0..n)
        .map(|i| {
            let w = h.min(i).min(n - 1 - i);
            values[i - w..=i + w].iter().sum::<f64>() / (2 * w + 1) as f64
        })
        .collect()
}

/// Controller state: integral of the residual per spring component.
#[derive(Clone, Debug, PartialEq)]
pub struct PiState {
    pub integral: StrainSample,
}

/// One PI update. Returns the increments to add to the natural strains.
pub fn pi_update(residual: &StrainSample, state: &mut PiState, cfg: &PiConfig, dt: f64) -> StrainSample {
    let c = cfg.integral_clamp;
    let mut out = StrainSample {
        stretch: vec![0.0; residual.stretch.len()],
        curvature: vec![[0.0; 2]; residual.curvature.len()],
    };
    if cfg.modes.stretch {
        let raw: Vec<f64> = residual
            .stretch
            .iter()
            .zip(state.integral.stretch.iter_mut())
            .map(|(r, i)| {
                *i = (*i + r * dt).clamp(-c, c);
                cfg.kp_stretch * r + cfg.ki_stretch * *i
            })
            .collect();
        out.stretch = smooth(&raw, cfg.smoothing_window)
            .into_iter()
            .map(|v| v.clamp(-cfg.rate_limit_stretch, cfg.rate_limit_stretch))
            .collect();
    }
    if cfg.modes.bend {
        for k in 0..2 {
            let raw: Vec<f64> = residual
                .curvature
                .iter()
                .zip(state.integral.curvature.iter_mut())
                .map(|(r, i)| {
                    i[k] = (i[k] + r[k] * dt).clamp(-c, c);
                    cfg.kp_bend * r[k] + cfg.ki_bend * i[k]
                })
                .collect();
            for (o, v) in out.curvature.iter_mut().zip(smooth(&raw, cfg.smoothing_window)) {
                o[k] = v.clamp(-cfg.rate_limit_bend, cfg.rate_limit_bend);
            }
        }
    }
    out
}

pub fn apply_increments(robot: &mut SoftRobot, inc: &StrainSample) {
    for (s, d) in robot.stretch_springs.iter_mut().zip(&inc.stretch) {
        s.inc_strain += d;
    }
    for (s, d) in robot.bend_twist_springs.iter_mut().zip(&inc.curvature) {
        s.inc_curvature[0] += d[0];
        s.inc_curvature[1] += d[1];
    }
}

/// Writes `sample` as the absolute natural strain (relative to rest).
pub fn set_natural(robot: &mut SoftRobot, sample: &StrainSample) {
    for (s, v) in robot.stretch_springs.iter_mut().zip(&sample.stretch) {
        s.inc_strain = *v;
    }
    for (s, v) in robot.bend_twist_springs.iter_mut().zip(&sample.curvature) {
        s.inc_curvature = *v;
    }
}

/// Nodal RMSE between the positions in `q` and `shape`.
pub fn nodal_rmse(q: &[f64], shape: &[Vec3]) -> f64 {
    let s: f64 = shape.iter().enumerate().map(|(n, p)| (node_pos(q, n) - *p).norm_sq()).sum();
    (s / shape.len().max(1) as f64).sqrt()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ControlRecord {
    pub time: f64,
    /// RMS of reference minus measured strain over controlled modes, both
    /// at `time`.
    pub residual_rms: f64,
    /// RMS of the applied increment.
    pub increment_rms: f64,
    /// Nodal RMSE against the reference shape, when one is known.
    pub rmse: Option<f64>,
    pub integral_max: f64,
}

/// PI controller installed as a before-step hook.
#[derive(Clone, Debug)]
pub struct PiController {
    pub config: PiConfig,
    pub reference: ReferenceTrajectory,
    pub state: PiState,
    pub records: Vec<ControlRecord>,
    calls: usize,
    warned: bool,
}

impl PiController {
    pub fn new(robot: &SoftRobot, config: PiConfig, reference: ReferenceTrajectory) -> Result<Self> {
        config.validate()?;
        reference.validate(robot)?;
        Ok(Self {
            config,
            reference,
            state: PiState {
                integral: StrainSample::zeros(robot),
            },
            records: Vec::new(),
            calls: 0,
            warned: false,
        })
    }
}

impl StepHook for PiController {
    fn before_step(&mut self, sim: &mut Simulation, t_next: f64) -> Result<()> {
        let call = self.calls;
        self.calls += 1;
        if t_next > self.reference.end_time() && self.reference.times.len() > 1 && !self.warned {
            log::warn!("reference ends at {} s, holding the last sample", self.reference.end_time());
            self.warned = true;
        }
        let reference = self.reference.at(t_next);
        if call == 0 && self.config.feedforward {
            set_natural(&mut sim.robot, &reference);
        }
        if call % self.config.interval != 0 {
            return Ok(());
        }
        let measured = measure_strain(&sim.robot, &sim.state.q, &sim.state.frames)?;
        let residual = reference.minus(&measured);
        let dt = sim.params.dt * self.config.interval as f64;
        let inc = pi_update(&residual, &mut self.state, &self.config, dt);
        apply_increments(&mut sim.robot, &inc);

        let integral_max = self
            .state
            .integral
            .stretch
            .iter()
            .map(|v| v.abs())
            .chain(self.state.integral.curvature.iter().flat_map(|c| [c[0].abs(), c[1].abs()]))
            .fold(0.0, f64::max);
        // hard invariant of the anti-windup clamp
        assert!(integral_max <= self.config.integral_clamp);
        let modes = &self.config.modes;
        // the update uses the reference one step ahead; the logged tracking
        // error compares reference and state at the same instant
        let tracking = self.reference.at(sim.state.time).minus(&measured);
        self.records.push(ControlRecord {
            time: sim.state.time,
            residual_rms: tracking.rms(modes),
            increment_rms: inc.rms(modes),
            rmse: self.reference.shape_at(sim.state.time).map(|s| nodal_rmse(&sim.state.q, &s)),
            integral_max,
        });
        Ok(())
    }
}

//! Scenario files: a TOML description of mesh, material, environment,
//! constraints, contact, actuation, control and output, turned into a ready
//! [`Simulation`].
//!
//! All quantities are SI. Unknown keys are rejected. Loading fills every
//! default, and [`ScenarioConfig::to_toml`] writes the resolved form, which
//! loads back to an identical configuration.

mod bundled;
mod output;

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actuation::{Actuation, Actuator, TravelingWave};
use crate::contact::ContactParams;
use crate::control::{
    measure_strain, reference_strain_from_shape, ControlRecord, PiConfig, PiController, ReferenceTrajectory,
    StrainSample,
};
use crate::error::{Result, SimError};
use crate::external::Environment;
use crate::mesh::{self, MeshInput};
use crate::robot::{Geometry, Material, MaterialProps, ShellModel, SoftRobot};
use crate::state::RobotState;
use crate::stepper::{ConstraintSet, Profile, SimParams, Simulation, StepHook, StepReport};
use crate::vector::Vec3;

pub use bundled::{bundled, bundled_config, BundledScenario};
pub use output::{OutputWriter, RunSummary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Shipped for illustration; parameters are not validated against data.
    #[serde(default)]
    pub experimental: bool,
    /// Seeds every random choice of the scenario (mesh jitter).
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub shell_model: ShellModel,
    pub mesh: MeshConfig,
    pub geometry: Geometry,
    pub material: MaterialConfig,
    #[serde(default)]
    pub environment: Environment,
    pub sim: SimParams,
    #[serde(default)]
    pub constraints: Constraints,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact: Option<ContactParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actuation: Option<Actuation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Either a mesh file or a generator, plus optional seeded jitter of z.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<MeshGenerator>,
    /// Uniform random offset of every z coordinate in `[-jitter, jitter]`
    /// (m), applied before the robot is built.
    #[serde(default)]
    pub jitter: f64,
}

fn origin() -> [f64; 3] {
    [0.0; 3]
}

fn x_axis() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

/// Procedural meshes. Angles are in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshGenerator {
    RodLine {
        nodes: usize,
        length: f64,
        #[serde(default = "origin")]
        start: [f64; 3],
        #[serde(default = "x_axis")]
        direction: [f64; 3],
    },
    Helix {
        nodes: usize,
        radius: f64,
        pitch: f64,
        turns: f64,
        #[serde(default)]
        top_z: f64,
    },
    RectGrid {
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
    },
    Disk {
        radius: f64,
        rings: usize,
        sectors: usize,
        #[serde(default)]
        z: f64,
    },
    FoldedStrip {
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        base: f64,
        radius: f64,
        angle: f64,
        #[serde(default)]
        lift: f64,
    },
    /// Spherical cap with straight rods hanging from every
    /// `tentacle_stride`-th rim node.
    Jellyfish {
        radius: f64,
        polar: f64,
        rings: usize,
        sectors: usize,
        tentacle_stride: usize,
        tentacle_length: f64,
        tentacle_nodes: usize,
    },
}

impl MeshGenerator {
    pub fn generate(&self) -> Result<MeshInput> {
        let bad = |what: &str| Err(SimError::Config(format!("mesh.generator: {what}")));
        let m = match *self {
            MeshGenerator::RodLine {
                nodes,
                length,
                start,
                direction,
            } => {
                if nodes < 2 || !(length > 0.0) || Vec3::from_slice(&direction).norm() == 0.0 {
                    return bad("rod_line needs nodes >= 2, length > 0 and a nonzero direction");
                }
                mesh::rod_line(nodes, length, Vec3::from_slice(&start), Vec3::from_slice(&direction))
            }
            MeshGenerator::Helix {
                nodes,
                radius,
                pitch,
                turns,
                top_z,
            } => {
                if nodes < 3 || !(radius > 0.0) || !(turns > 0.0) {
                    return bad("helix needs nodes >= 3, radius > 0 and turns > 0");
                }
                mesh::helix(nodes, radius, pitch, turns, top_z)
            }
            MeshGenerator::RectGrid { nx, ny, lx, ly } => {
                if nx < 2 || ny < 2 || !(lx > 0.0) || !(ly > 0.0) {
                    return bad("rect_grid needs nx, ny >= 2 and positive sizes");
                }
                mesh::rect_grid(nx, ny, lx, ly)
            }
            MeshGenerator::Disk {
                radius,
                rings,
                sectors,
                z,
            } => {
                if rings < 1 || sectors < 3 || !(radius > 0.0) {
                    return bad("disk needs rings >= 1, sectors >= 3 and radius > 0");
                }
                let mut m = mesh::disk(radius, rings, sectors);
                m.nodes.iter_mut().for_each(|p| p.z = z);
                m
            }
            MeshGenerator::FoldedStrip {
                nx,
                ny,
                lx,
                ly,
                base,
                radius,
                angle,
                lift,
            } => {
                if nx < 2 || ny < 2 || !(lx > base + radius * angle) || !(radius > 0.0) || !(base >= 0.0) {
                    return bad("folded_strip needs nx, ny >= 2, radius > 0 and lx > base + radius * angle");
                }
                mesh::folded_strip(nx, ny, lx, ly, base, radius, angle, lift)
            }
            MeshGenerator::Jellyfish {
                radius,
                polar,
                rings,
                sectors,
                tentacle_stride,
                tentacle_length,
                tentacle_nodes,
            } => {
                if rings < 1 || sectors < 3 || tentacle_stride == 0 || tentacle_nodes < 2 || !(tentacle_length > 0.0) {
                    return bad("jellyfish needs rings >= 1, sectors >= 3, tentacle_stride >= 1, tentacle_nodes >= 2");
                }
                let mut m = mesh::spherical_cap(radius, polar, rings, sectors);
                let de = tentacle_length / (tentacle_nodes - 1) as f64;
                for root in mesh::disk_ring(sectors, rings).step_by(tentacle_stride) {
                    let p = m.nodes[root];
                    let mut prev = root;
                    for k in 1..tentacle_nodes {
                        m.nodes.push(p - Vec3::unit_z() * (de * k as f64));
                        let id = m.nodes.len() - 1;
                        m.rod_edges.push([prev, id]);
                        prev = id;
                    }
                }
                m
            }
        };
        Ok(m)
    }
}

/// Material shared by rods and shells, optionally overridden per component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    /// kg/m^3
    pub density: f64,
    /// Pa
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rod: Option<MaterialProps>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shell: Option<MaterialProps>,
}

impl MaterialConfig {
    pub fn resolve(&self) -> Material {
        let base = MaterialProps {
            density: self.density,
            youngs_modulus: self.youngs_modulus,
            poisson_ratio: self.poisson_ratio,
        };
        Material {
            rod: self.rod.unwrap_or(base),
            shell: self.shell.unwrap_or(base),
        }
    }
}

/// Pins selected coordinates (`axes` in 0..3) of a node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pin {
    pub node: usize,
    pub axes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeMotion {
    pub node: usize,
    pub axis: usize,
    pub profile: Profile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeTwist {
    pub edge: usize,
    pub profile: Profile,
}

/// Boundary conditions. Edge indices refer to the robot's edge list: rod
/// edges in input order, then shell edges sorted by node pair.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraints {
    #[serde(default)]
    pub fixed_nodes: Vec<usize>,
    /// Clamped edges: both nodes and the twist angle.
    #[serde(default)]
    pub fixed_edges: Vec<usize>,
    #[serde(default)]
    pub pins: Vec<Pin>,
    #[serde(default)]
    pub moves: Vec<NodeMotion>,
    #[serde(default)]
    pub twists: Vec<EdgeTwist>,
}

/// Where the controller's reference strains come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// Planar S-shaped target for a single straight rod: the tangent turns
    /// by `amplitude * cos(2 pi s / L)` (rad) from the rest direction, in
    /// the plane spanned by the rod and `normal`.
    SCurve {
        amplitude: f64,
        #[serde(default = "y_axis")]
        normal: [f64; 3],
    },
    /// Static target shape from a mesh file with the same node count.
    Shape { path: PathBuf },
    /// Time-stamped strain rows: `time, stretch_0..stretch_{S-1},
    /// kappa1_0, kappa2_0, .., kappa1_{B-1}, kappa2_{B-1}` with S stretch
    /// springs and B bend-twist springs, relative to rest.
    Strains { path: PathBuf },
    /// Strains measured on an open-loop run of the same scenario under a
    /// traveling wave, from time `start` on (shifted to begin at zero).
    RecordedWave { wave: TravelingWave, start: f64 },
}

fn y_axis() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub pi: PiConfig,
    pub reference: ReferenceSpec,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory; the CLI flag `--out-dir` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Write a trajectory frame every `log_interval` steps.
    #[serde(default = "one")]
    pub log_interval: usize,
    /// Nodes whose positions go to `probe.csv` every step.
    #[serde(default)]
    pub probes: Vec<usize>,
    #[serde(default = "yes")]
    pub trajectory: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            log_interval: 1,
            probes: Vec::new(),
            trajectory: true,
        }
    }
}

fn config_err(msg: impl Into<String>) -> SimError {
    SimError::Config(msg.into())
}

impl ScenarioConfig {
    /// Parses TOML. Relative paths stay relative; see [`load_config`].
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string().trim_end().to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// The resolved configuration with every default written out.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(format!("cannot serialize configuration: {e}")))
    }

    /// Field-level checks that need no mesh.
    pub fn check(&self) -> Result<()> {
        let m = &self.material;
        for (field, p) in [
            ("material", Some(self.material.resolve().rod)),
            ("material.rod", m.rod),
            ("material.shell", m.shell),
        ] {
            let Some(p) = p else { continue };
            if !(p.youngs_modulus > 0.0) {
                return Err(config_err(format!("{field}.youngs_modulus must be positive")));
            }
            if !(p.density > 0.0) {
                return Err(config_err(format!("{field}.density must be positive")));
            }
            if !(p.poisson_ratio > -1.0 && p.poisson_ratio <= 0.5) {
                return Err(config_err(format!("{field}.poisson_ratio must lie in (-1, 0.5]")));
            }
        }
        if !(self.geometry.rod_radius >= 0.0) || !(self.geometry.shell_thickness >= 0.0) {
            return Err(config_err("geometry.rod_radius and geometry.shell_thickness must be nonnegative"));
        }
        match (&self.mesh.path, &self.mesh.generator) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(config_err("mesh: give exactly one of mesh.path and mesh.generator"));
            }
            _ => {}
        }
        if !(self.mesh.jitter >= 0.0) {
            return Err(config_err("mesh.jitter must be nonnegative"));
        }
        if self.output.log_interval == 0 {
            return Err(config_err("output.log_interval must be at least 1"));
        }
        self.sim.validate().map_err(|e| config_err(format!("sim: {}", strip(e))))?;
        if let Some(c) = &self.contact {
            c.validate().map_err(|e| config_err(format!("contact: {}", strip(e))))?;
        }
        if let Some(a) = &self.actuation {
            a.validate().map_err(|e| config_err(format!("actuation: {}", strip(e))))?;
        }
        if let Some(c) = &self.controller {
            c.pi.validate().map_err(|e| config_err(format!("controller.pi: {}", strip(e))))?;
        }
        Ok(())
    }

    /// Makes every relative path absolute with respect to `base`.
    pub fn anchor_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.mesh.path.as_mut() {
            fix(p);
        }
        if let Some(c) = self.controller.as_mut() {
            match &mut c.reference {
                ReferenceSpec::Shape { path } | ReferenceSpec::Strains { path } => fix(path),
                _ => {}
            }
        }
    }

    pub fn build_mesh(&self) -> Result<MeshInput> {
        let mut m = match (&self.mesh.path, &self.mesh.generator) {
            (Some(p), None) => MeshInput::load(p)?,
            (None, Some(g)) => g.generate()?,
            _ => return Err(config_err("mesh: give exactly one of mesh.path and mesh.generator")),
        };
        if self.mesh.jitter > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for p in m.nodes.iter_mut() {
                p.z += rng.gen_range(-1.0..=1.0) * self.mesh.jitter;
            }
        }
        Ok(m)
    }

    /// Builds the robot, state, constraints and hooks.
    pub fn instantiate(&self) -> Result<Instance> {
        self.check()?;
        let mesh = self.build_mesh()?;
        let mut robot = SoftRobot::build(mesh, self.geometry, self.material.resolve(), self.shell_model)?;
        let state = RobotState::rest(&mut robot)?;
        let constraints = self.constraints(&robot, &state.q)?;
        for &n in &self.output.probes {
            if n >= robot.n_nodes() {
                return Err(config_err(format!("output.probes: unknown node {n}")));
            }
        }
        let actuator = self.actuation.clone().map(|a| Actuator::new(&robot, a)).transpose()?;
        let sim = Simulation::new(
            robot,
            self.environment.clone(),
            self.contact.clone(),
            constraints,
            self.sim.clone(),
            state,
        )?;
        let controller = match &self.controller {
            Some(c) => Some(PiController::new(&sim.robot, c.pi.clone(), self.reference(&sim, &c.reference)?)?),
            None => None,
        };
        Ok(Instance {
            config: self.clone(),
            sim,
            actuator,
            controller,
        })
    }

    fn constraints(&self, robot: &SoftRobot, q: &[f64]) -> Result<ConstraintSet> {
        let c = &self.constraints;
        let mut set = ConstraintSet::new(robot.total_dofs());
        set.fix_nodes(robot, &c.fixed_nodes)?;
        set.fix_edges(robot, &c.fixed_edges)?;
        for p in &c.pins {
            if p.node >= robot.n_nodes() || p.axes.iter().any(|&a| a > 2) {
                return Err(config_err(format!("constraints.pins: bad node {} or axes {:?}", p.node, p.axes)));
            }
            for &a in &p.axes {
                set.fix_dof(3 * p.node + a)?;
            }
        }
        for m in &c.moves {
            set.move_node(robot, q, m.node, m.axis, m.profile.clone())?;
        }
        for t in &c.twists {
            set.twist_edge(robot, q, t.edge, t.profile.clone())?;
        }
        Ok(set)
    }

    fn reference(&self, sim: &Simulation, spec: &ReferenceSpec) -> Result<ReferenceTrajectory> {
        let robot = &sim.robot;
        match spec {
            ReferenceSpec::SCurve { amplitude, normal } => {
                let shape = s_curve(robot, *amplitude, Vec3::from_slice(normal))?;
                Ok(ReferenceTrajectory::constant(reference_strain_from_shape(robot, &shape)?, Some(shape)))
            }
            ReferenceSpec::Shape { path } => {
                let target = MeshInput::load(path)?;
                let sample = reference_strain_from_shape(robot, &target.nodes)?;
                Ok(ReferenceTrajectory::constant(sample, Some(target.nodes)))
            }
            ReferenceSpec::Strains { path } => read_strain_rows(robot, path),
            ReferenceSpec::RecordedWave { wave, start } => {
                let mut open = sim.clone();
                open.params.total_time = start + self.sim.total_time + self.sim.dt;
                let mut act = Actuator::new(robot, Actuation::TravelingWave(wave.clone()))?;
                let mut traj = ReferenceTrajectory::default();
                let mut err = None;
                open.simulate(Some(&mut act), |s, _| {
                    if s.state.time >= start - 1e-9 * self.sim.dt {
                        match measure_strain(&s.robot, &s.state.q, &s.state.frames) {
                            Ok(m) => {
                                traj.times.push(s.state.time - start);
                                traj.samples.push(m);
                            }
                            Err(e) => {
                                err = Some(e);
                                return false;
                            }
                        }
                    }
                    true
                })?;
                if let Some(e) = err {
                    return Err(e);
                }
                if traj.times.is_empty() {
                    return Err(config_err("controller.reference: recorded run produced no samples"));
                }
                Ok(traj)
            }
        }
    }
}

fn strip(e: SimError) -> String {
    match e {
        SimError::Config(m) => m,
        e => e.to_string(),
    }
}

/// S-shaped planar target for a rod built as a single chain `0..N`.
pub fn s_curve(robot: &SoftRobot, amplitude: f64, normal: Vec3) -> Result<Vec<Vec3>> {
    let n = robot.n_nodes();
    let chain = robot.edges.len() == n - 1
        && robot
            .edges
            .iter()
            .enumerate()
            .all(|(i, e)| e.nodes == [i, i + 1] && e.kind == crate::robot::EdgeKind::Rod);
    if !chain {
        return Err(config_err("s_curve reference needs a single rod numbered 0..N in order"));
    }
    let x0 = robot.rest_position(0);
    let d = (robot.rest_position(n - 1) - x0).normalized();
    let m = (normal - d * normal.dot(&d)).normalized();
    let total: f64 = robot.edges.iter().map(|e| e.rest_length).sum();
    let mut shape = vec![x0];
    let mut s = 0.0;
    for e in &robot.edges {
        let mid = s + 0.5 * e.rest_length;
        let th = amplitude * (std::f64::consts::TAU * mid / total).cos();
        let p = *shape.last().expect("nonempty");
        shape.push(p + (d * th.cos() + m * th.sin()) * e.rest_length);
        s += e.rest_length;
    }
    Ok(shape)
}

fn read_strain_rows(robot: &SoftRobot, path: &Path) -> Result<ReferenceTrajectory> {
    let text = std::fs::read_to_string(path)?;
    let (ns, nb) = (robot.stretch_springs.len(), robot.bend_twist_springs.len());
    let mut traj = ReferenceTrajectory::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() || line.starts_with(|c: char| c.is_ascii_alphabetic()) {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> =
            line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(str::parse).collect();
        let vals = vals.map_err(|e| config_err(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if vals.len() != 1 + ns + 2 * nb {
            return Err(config_err(format!(
                "{}:{}: expected {} columns, found {}",
                path.display(),
                i + 1,
                1 + ns + 2 * nb,
                vals.len()
            )));
        }
        traj.times.push(vals[0]);
        traj.samples.push(StrainSample {
            stretch: vals[1..1 + ns].to_vec(),
            curvature: vals[1 + ns..].chunks(2).map(|c| [c[0], c[1]]).collect(),
        });
    }
    if traj.times.is_empty() {
        return Err(config_err(format!("{}: no strain rows", path.display())));
    }
    Ok(traj)
}

/// Reads and validates a scenario file, anchoring relative paths at the
/// file's directory.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = ScenarioConfig::from_toml(&text).map_err(|e| match e {
        SimError::Config(m) => config_err(format!("{}: {m}", path.display())),
        e => e,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
    cfg.anchor_paths(&std::fs::canonicalize(&base).unwrap_or(base));
    Ok(cfg)
}

/// A built scenario: simulation plus its before-step hooks.
#[derive(Clone, Debug)]
pub struct Instance {
    pub config: ScenarioConfig,
    pub sim: Simulation,
    pub actuator: Option<Actuator>,
    pub controller: Option<PiController>,
}

struct Hooks<'a> {
    actuator: Option<&'a mut Actuator>,
    controller: Option<&'a mut PiController>,
}

impl StepHook for Hooks<'_> {
    fn before_step(&mut self, sim: &mut Simulation, t_next: f64) -> Result<()> {
        if let Some(a) = self.actuator.as_deref_mut() {
            a.before_step(sim, t_next)?;
        }
        if let Some(c) = self.controller.as_deref_mut() {
            c.before_step(sim, t_next)?;
        }
        Ok(())
    }
}

impl Instance {
    /// Runs to the configured end time. `on_step` sees every committed step
    /// and may stop the run by returning `false`.
    pub fn run(&mut self, mut on_step: impl FnMut(&Simulation, &StepReport) -> bool) -> Result<()> {
        let mut hooks = Hooks {
            actuator: self.actuator.as_mut(),
            controller: self.controller.as_mut(),
        };
        self.sim.simulate(Some(&mut hooks), |s, r| on_step(s, r))
    }

    pub fn control_records(&self) -> &[ControlRecord] {
        self.controller.as_ref().map(|c| c.records.as_slice()).unwrap_or(&[])
    }

    /// Runs and writes all outputs into `dir`. Partial logs are flushed on
    /// failure and the error is returned.
    pub fn run_to_dir(&mut self, dir: &Path) -> Result<RunSummary> {
        let mut writer = OutputWriter::create(dir, &self.config, &self.sim)?;
        let started = std::time::Instant::now();
        let mut io_err = None;
        let res = {
            let w = &mut writer;
            let e = &mut io_err;
            let mut hooks = Hooks {
                actuator: self.actuator.as_mut(),
                controller: self.controller.as_mut(),
            };
            self.sim.simulate(Some(&mut hooks), |s, r| match w.record(s, r) {
                Ok(()) => true,
                Err(err) => {
                    *e = Some(err);
                    false
                }
            })
        };
        let res = match (res, io_err) {
            (Err(e), _) | (Ok(()), Some(e)) => Err(e),
            (Ok(()), None) => Ok(()),
        };
        let records = self.controller.as_ref().map(|c| c.records.as_slice()).unwrap_or(&[]);
        writer.finish(&self.sim, records, started.elapsed().as_secs_f64(), res.as_ref().err())?;
        res.map(|_| writer.summary().clone())
    }
}

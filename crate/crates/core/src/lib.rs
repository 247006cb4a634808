//! Simulation of elastic rods, shells and rod-shell structures with
//! discrete differential geometry.
//!
//! A [`SoftRobot`] holds the mesh, material and springs (stretch, bend-twist,
//! hinge or mid-edge). A [`Simulation`] advances a [`RobotState`] with an
//! implicit integrator and Newton's method, adding external forces from an
//! [`Environment`] and optional contact ([`ContactParams`]). Scenarios tie
//! these together from TOML ([`ScenarioConfig`]), with open-loop actuation
//! and PI control of natural strains as step hooks.
//!
//! ```
//! use ddgsim::scenario::bundled_config;
//!
//! let mut cfg = bundled_config("cantilever-1e6").unwrap();
//! cfg.sim.total_time = 0.05;
//! let mut run = cfg.instantiate().unwrap();
//! run.run(|_, _| true).unwrap();
//! assert!(run.sim.state.time > 0.0);
//! ```

pub mod actuation;
pub mod analysis;
pub mod assembly;
pub mod autodiff;
pub mod contact;
pub mod control;
pub mod elastic;
pub mod error;
pub mod external;
pub mod frames;
pub mod linsolve;
pub mod mesh;
pub mod robot;
pub mod scenario;
pub mod state;
pub mod stepper;
pub mod vector;

pub use contact::ContactParams;
pub use control::{PiConfig, PiController, ReferenceTrajectory, StrainSample};
pub use error::{Result, SimError};
pub use external::Environment;
pub use mesh::MeshInput;
pub use robot::{Geometry, Material, MaterialProps, ShellModel, SoftRobot};
pub use scenario::{load_config, ScenarioConfig};
pub use state::RobotState;
pub use stepper::{ConstraintSet, Integrator, SimParams, Simulation, StepReport};
pub use vector::Vec3;

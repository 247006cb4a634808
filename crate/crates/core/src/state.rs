use crate::elastic::adopt_natural_state;
use crate::error::Result;
use crate::frames::{init_reference_frames, FrameSet};
use crate::robot::SoftRobot;
use crate::vector::set_node_pos;

/// Dynamic state: generalized coordinates, velocities, accelerations (used by
/// Newmark) and the committed frames.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotState {
    pub q: Vec<f64>,
    pub u: Vec<f64>,
    pub a: Vec<f64>,
    pub frames: FrameSet,
    pub time: f64,
}

impl RobotState {
    /// State at rest at coordinates `q`, frames initialized from scratch.
    pub fn from_dofs(robot: &SoftRobot, q: Vec<f64>) -> Result<Self> {
        let frames = init_reference_frames(robot, &q)?;
        let n = q.len();
        Ok(Self {
            q,
            u: vec![0.0; n],
            a: vec![0.0; n],
            frames,
            time: 0.0,
        })
    }

    /// Input mesh configuration with zero twist angles and mid-edge
    /// rotations, adopted as the stress-free natural state.
    pub fn rest(robot: &mut SoftRobot) -> Result<Self> {
        let state = Self::from_dofs(robot, rest_dofs(robot))?;
        adopt_natural_state(robot, &state.q, &state.frames)?;
        Ok(state)
    }
}

/// Coordinate vector of the input mesh with all angular DOFs at zero.
pub fn rest_dofs(robot: &SoftRobot) -> Vec<f64> {
    let mut q = vec![0.0; robot.total_dofs()];
    for (n, p) in robot.mesh.nodes.iter().enumerate() {
        set_node_pos(&mut q, n, *p);
    }
    q
}

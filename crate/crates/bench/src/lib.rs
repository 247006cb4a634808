//! Fixtures shared by the benchmarks.

use ddgsim::assembly::EnergyContribution;
use ddgsim::elastic::assemble_elastic;
use ddgsim::mesh::{rect_grid, rod_line, MeshInput};
use ddgsim::scenario::{bundled_config, Instance};
use ddgsim::vector::Vec3;
use ddgsim::{Geometry, Material, MaterialProps, RobotState, ShellModel, SoftRobot};

pub fn robot(mesh: MeshInput, model: ShellModel) -> (SoftRobot, RobotState) {
    let mut r = SoftRobot::build(
        mesh,
        Geometry {
            rod_radius: 0.001,
            shell_thickness: 0.001,
        },
        Material::uniform(MaterialProps {
            density: 1000.0,
            youngs_modulus: 1e7,
            poisson_ratio: 0.3,
        }),
        model,
    )
    .expect("valid fixture mesh");
    let mut s = RobotState::rest(&mut r).expect("fixture has a rest state");
    // a little off rest so every stencil has nonzero forces
    for (i, q) in s.q.iter_mut().enumerate() {
        *q += 1e-4 * ((i as f64) * 0.7).sin();
    }
    (r, s)
}

pub fn rod(nodes: usize) -> (SoftRobot, RobotState) {
    robot(rod_line(nodes, 0.1, Vec3::zero(), Vec3::unit_x()), ShellModel::Hinge)
}

pub fn sheet(n: usize, model: ShellModel) -> (SoftRobot, RobotState) {
    robot(rect_grid(n, n, 0.1, 0.1), model)
}

/// Elastic force and Jacobian at the fixture state.
pub fn assemble(r: &SoftRobot, s: &RobotState) -> EnergyContribution {
    let mut c = EnergyContribution::new(r.total_dofs(), true);
    assemble_elastic(r, &s.q, &s.frames, &mut c, 1.0).expect("fixture is well conditioned");
    c
}

pub fn scenario(name: &str) -> Instance {
    bundled_config(name)
        .and_then(|c| c.instantiate())
        .expect("bundled scenario")
}

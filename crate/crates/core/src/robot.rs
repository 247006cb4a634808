//! Discrete structure: edges, degrees of freedom, spring stencils and lumped
//! mass.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::mesh::{edge_key, MeshInput};
use crate::vector::Vec3;

/// Cross-section data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    /// Rod cross-section radius (m).
    pub rod_radius: f64,
    /// Shell thickness (m).
    pub shell_thickness: f64,
}

impl Geometry {
    pub fn area(&self) -> f64 {
        PI * self.rod_radius.powi(2)
    }

    /// Second moment of area about either in-plane axis.
    pub fn second_moment(&self) -> f64 {
        PI * self.rod_radius.powi(4) / 4.0
    }

    pub fn polar_moment(&self) -> f64 {
        PI * self.rod_radius.powi(4) / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialProps {
    /// kg/m^3
    pub density: f64,
    /// Pa
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
}

impl MaterialProps {
    pub fn shear_modulus(&self) -> f64 {
        self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub rod: MaterialProps,
    pub shell: MaterialProps,
}

impl Material {
    pub fn uniform(props: MaterialProps) -> Self {
        Self {
            rod: props,
            shell: props,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShellModel {
    #[default]
    Hinge,
    Midedge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    Rod,
    Shell,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub nodes: [usize; 2],
    pub kind: EdgeKind,
    /// Carries a twist angle and material frame (rod edges and shell edges
    /// touching a rod-shell joint).
    pub twisting: bool,
    pub rest_length: f64,
    /// Triangles incident to a shell edge.
    pub triangles: Vec<usize>,
}

/// Maps nodes and edges onto positions in the generalized coordinate vector
/// `[x_1 .. x_N, theta_1 .. theta_E, xi_1 .. xi_Z]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DofLayout {
    pub n_nodes: usize,
    pub n_twist_edges: usize,
    pub n_xi_edges: usize,
    pub total_dofs: usize,
    edge_theta: Vec<Option<usize>>,
    edge_xi: Vec<Option<usize>>,
}

impl DofLayout {
    #[inline]
    pub fn node_dofs(&self, node: usize) -> [usize; 3] {
        [3 * node, 3 * node + 1, 3 * node + 2]
    }

    #[inline]
    pub fn theta_dof(&self, edge: usize) -> Option<usize> {
        self.edge_theta.get(edge).copied().flatten()
    }

    #[inline]
    pub fn xi_dof(&self, edge: usize) -> Option<usize> {
        self.edge_xi.get(edge).copied().flatten()
    }

    pub fn n_positions(&self) -> usize {
        3 * self.n_nodes
    }

    pub fn is_position(&self, dof: usize) -> bool {
        dof < 3 * self.n_nodes
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StretchSpring {
    pub nodes: [usize; 2],
    pub edge: usize,
    pub rest_length: f64,
    /// N
    pub stiffness: f64,
    pub nat_strain: f64,
    /// Actuation increment added on top of `nat_strain`.
    pub inc_strain: f64,
}

impl StretchSpring {
    pub fn natural(&self) -> f64 {
        self.nat_strain + self.inc_strain
    }
}

/// Three nodes `m -> n -> o` and the two edges joining them. `signs[k]` is
/// `-1` when the stored orientation of edge `k` opposes the spring's
/// `m -> n -> o` direction.
#[derive(Clone, Debug, PartialEq)]
pub struct BendTwistSpring {
    pub nodes: [usize; 3],
    pub edges: [usize; 2],
    pub signs: [f64; 2],
    pub nat_curvature: [f64; 2],
    pub inc_curvature: [f64; 2],
    pub nat_twist: f64,
    pub voronoi_length: f64,
    /// Diagonal bending stiffness (N m^2).
    pub bend_stiffness: [f64; 2],
    pub twist_stiffness: f64,
}

impl BendTwistSpring {
    pub fn natural_curvature(&self) -> [f64; 2] {
        [
            self.nat_curvature[0] + self.inc_curvature[0],
            self.nat_curvature[1] + self.inc_curvature[1],
        ]
    }
}

/// Hinge across shell edge `nodes[0]-nodes[1]` with wing vertices
/// `nodes[2]` and `nodes[3]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HingeSpring {
    pub nodes: [usize; 4],
    pub edge: usize,
    pub nat_angle: f64,
    pub stiffness: f64,
}

/// Mid-edge bending stencil of one triangle. Slot `k` refers to the edge
/// opposite vertex `nodes[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleSpring {
    pub triangle: usize,
    pub nodes: [usize; 3],
    pub edges: [usize; 3],
    /// `+1` when the triangle's counter-clockwise traversal of the edge
    /// agrees with its stored orientation.
    pub signs: [f64; 3],
    pub rest_area: f64,
    pub rest_edge_lengths: [f64; 3],
    /// Natural shape operator expressed as coefficients on `t^k (x) t^k`.
    pub nat_coeffs: [f64; 3],
    pub stiffness: f64,
    pub poisson_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LumpedMass {
    pub mass: Vec<f64>,
}

impl LumpedMass {
    pub fn node_mass(&self, node: usize) -> f64 {
        self.mass[3 * node]
    }
}

/// Immutable topology and material data plus the spring stencils, whose
/// natural strains may be edited between steps.
#[derive(Clone, Debug)]
pub struct SoftRobot {
    pub mesh: MeshInput,
    pub geometry: Geometry,
    pub material: Material,
    pub shell_model: ShellModel,
    pub edges: Vec<Edge>,
    pub layout: DofLayout,
    pub joints: Vec<usize>,
    pub triangle_edges: Vec<[usize; 3]>,
    pub triangle_signs: Vec<[f64; 3]>,
    pub rest_areas: Vec<f64>,
    pub stretch_springs: Vec<StretchSpring>,
    pub bend_twist_springs: Vec<BendTwistSpring>,
    pub hinge_springs: Vec<HingeSpring>,
    pub triangle_springs: Vec<TriangleSpring>,
    pub mass: LumpedMass,
}

/// Nodes shared by a rod edge and at least one triangle, and the shell edges
/// incident to them.
pub fn classify_joints(mesh: &MeshInput) -> (Vec<usize>, Vec<(usize, usize)>) {
    let rod_nodes: BTreeSet<usize> = mesh.rod_edges.iter().flatten().copied().collect();
    let shell_nodes: BTreeSet<usize> = mesh.triangles.iter().flatten().copied().collect();
    let joints: Vec<usize> = rod_nodes.intersection(&shell_nodes).copied().collect();
    let joint_set: BTreeSet<usize> = joints.iter().copied().collect();
    let mut promoted = BTreeSet::new();
    for t in &mesh.triangles {
        for s in 0..3 {
            let (a, b) = (t[(s + 1) % 3], t[(s + 2) % 3]);
            if joint_set.contains(&a) || joint_set.contains(&b) {
                promoted.insert(edge_key(a, b));
            }
        }
    }
    (joints, promoted.into_iter().collect())
}

/// One spring per pair of twisting edges sharing a node, oriented so that the
/// first edge points into and the second out of the shared node.
pub fn derive_bend_twist_springs(edges: &[Edge], n_nodes: usize) -> Vec<(usize, [usize; 3], [usize; 2], [f64; 2])> {
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for (k, e) in edges.iter().enumerate() {
        if e.twisting {
            incident[e.nodes[0]].push(k);
            incident[e.nodes[1]].push(k);
        }
    }
    let mut out = Vec::new();
    for (n, inc) in incident.iter().enumerate() {
        for a in 0..inc.len() {
            for b in a + 1..inc.len() {
                let (ei, ej) = (inc[a], inc[b]);
                let m = if edges[ei].nodes[1] == n { edges[ei].nodes[0] } else { edges[ei].nodes[1] };
                let o = if edges[ej].nodes[0] == n { edges[ej].nodes[1] } else { edges[ej].nodes[0] };
                let si = if edges[ei].nodes[1] == n { 1.0 } else { -1.0 };
                let sj = if edges[ej].nodes[0] == n { 1.0 } else { -1.0 };
                out.push((n, [m, n, o], [ei, ej], [si, sj]));
            }
        }
    }
    out.sort_by(|a, b| a.1.cmp(&b.1).then(a.2.cmp(&b.2)));
    out
}

impl SoftRobot {
    /// Builds the discrete structure. Natural strains are left at zero; use
    /// [`crate::state::RobotState::rest`] to adopt the input configuration as
    /// the stress-free state.
    pub fn build(
        mesh: MeshInput,
        geometry: Geometry,
        material: Material,
        shell_model: ShellModel,
    ) -> Result<Self> {
        mesh.validate()?;
        let n_nodes = mesh.nodes.len();
        let has_rods = !mesh.rod_edges.is_empty();
        let has_shells = !mesh.triangles.is_empty();
        if has_rods && geometry.rod_radius <= 0.0 {
            return Err(SimError::Config("rod radius must be positive".into()));
        }
        if has_shells && geometry.shell_thickness <= 0.0 {
            return Err(SimError::Config("shell thickness must be positive".into()));
        }

        // edges: rod edges in input order, then shell edges sorted by key
        let (joints, promoted) = classify_joints(&mesh);
        let promoted: BTreeSet<(usize, usize)> = promoted.into_iter().collect();
        let mut edges: Vec<Edge> = Vec::new();
        for e in &mesh.rod_edges {
            edges.push(Edge {
                nodes: *e,
                kind: EdgeKind::Rod,
                twisting: true,
                rest_length: 0.0,
                triangles: Vec::new(),
            });
        }
        let mut shell_edge_tris: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (ti, t) in mesh.triangles.iter().enumerate() {
            for s in 0..3 {
                shell_edge_tris
                    .entry(edge_key(t[(s + 1) % 3], t[(s + 2) % 3]))
                    .or_default()
                    .push(ti);
            }
        }
        let mut edge_index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (key, tris) in &shell_edge_tris {
            edge_index.insert(*key, edges.len());
            edges.push(Edge {
                nodes: [key.0, key.1],
                kind: EdgeKind::Shell,
                twisting: promoted.contains(key),
                rest_length: 0.0,
                triangles: tris.clone(),
            });
        }
        for (k, e) in edges.iter_mut().enumerate() {
            let l = (mesh.nodes[e.nodes[1]] - mesh.nodes[e.nodes[0]]).norm();
            if l < 1e-12 {
                return Err(SimError::Geometry(format!("edge {k} has zero length")));
            }
            e.rest_length = l;
        }

        // dof layout
        let mut edge_theta = vec![None; edges.len()];
        let mut edge_xi = vec![None; edges.len()];
        let mut next = 3 * n_nodes;
        for (k, e) in edges.iter().enumerate() {
            if e.twisting {
                edge_theta[k] = Some(next);
                next += 1;
            }
        }
        let n_twist_edges = next - 3 * n_nodes;
        if shell_model == ShellModel::Midedge {
            for (k, e) in edges.iter().enumerate() {
                if e.kind == EdgeKind::Shell {
                    edge_xi[k] = Some(next);
                    next += 1;
                }
            }
        }
        let layout = DofLayout {
            n_nodes,
            n_twist_edges,
            n_xi_edges: next - 3 * n_nodes - n_twist_edges,
            total_dofs: next,
            edge_theta,
            edge_xi,
        };

        // triangles
        let mut triangle_edges = Vec::with_capacity(mesh.triangles.len());
        let mut triangle_signs = Vec::with_capacity(mesh.triangles.len());
        let mut rest_areas = Vec::with_capacity(mesh.triangles.len());
        for (ti, t) in mesh.triangles.iter().enumerate() {
            let (a, b, c) = (mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]);
            let area = 0.5 * (b - a).cross(&(c - a)).norm();
            if area < 1e-12 {
                return Err(SimError::DegenerateTriangle { triangle: ti });
            }
            rest_areas.push(area);
            let mut te = [0usize; 3];
            let mut ts = [0.0; 3];
            for k in 0..3 {
                let (u, v) = (t[(k + 1) % 3], t[(k + 2) % 3]);
                te[k] = edge_index[&edge_key(u, v)];
                ts[k] = if edges[te[k]].nodes[0] == u { 1.0 } else { -1.0 };
            }
            triangle_edges.push(te);
            triangle_signs.push(ts);
        }

        let rod = material.rod;
        let shell = material.shell;
        let h = geometry.shell_thickness;

        let stretch_springs = edges
            .iter()
            .enumerate()
            .map(|(k, e)| StretchSpring {
                nodes: e.nodes,
                edge: k,
                rest_length: e.rest_length,
                stiffness: match e.kind {
                    EdgeKind::Rod => rod.youngs_modulus * geometry.area(),
                    EdgeKind::Shell => 3f64.sqrt() / 4.0 * shell.youngs_modulus * h * e.rest_length,
                },
                nat_strain: 0.0,
                inc_strain: 0.0,
            })
            .collect();

        let bend_twist_springs = derive_bend_twist_springs(&edges, n_nodes)
            .into_iter()
            .map(|(_, nodes, es, signs)| BendTwistSpring {
                nodes,
                edges: es,
                signs,
                nat_curvature: [0.0; 2],
                inc_curvature: [0.0; 2],
                nat_twist: 0.0,
                voronoi_length: 0.5 * (edges[es[0]].rest_length + edges[es[1]].rest_length),
                bend_stiffness: [rod.youngs_modulus * geometry.second_moment(); 2],
                twist_stiffness: rod.shear_modulus() * geometry.polar_moment(),
            })
            .collect();

        let mut hinge_springs = Vec::new();
        let mut triangle_springs = Vec::new();
        match shell_model {
            ShellModel::Hinge => {
                for (k, e) in edges.iter().enumerate() {
                    if e.kind != EdgeKind::Shell || e.triangles.len() != 2 {
                        continue;
                    }
                    let wing = |ti: usize| {
                        *mesh.triangles[ti]
                            .iter()
                            .find(|&&v| v != e.nodes[0] && v != e.nodes[1])
                            .expect("triangle has a vertex off its own edge")
                    };
                    hinge_springs.push(HingeSpring {
                        nodes: [e.nodes[0], e.nodes[1], wing(e.triangles[0]), wing(e.triangles[1])],
                        edge: k,
                        nat_angle: 0.0,
                        stiffness: shell.youngs_modulus * h.powi(3) / (12.0 * 3f64.sqrt()),
                    });
                }
            }
            ShellModel::Midedge => {
                for (ti, t) in mesh.triangles.iter().enumerate() {
                    let te = triangle_edges[ti];
                    triangle_springs.push(TriangleSpring {
                        triangle: ti,
                        nodes: *t,
                        edges: te,
                        signs: triangle_signs[ti],
                        rest_area: rest_areas[ti],
                        rest_edge_lengths: [
                            edges[te[0]].rest_length,
                            edges[te[1]].rest_length,
                            edges[te[2]].rest_length,
                        ],
                        nat_coeffs: [0.0; 3],
                        stiffness: shell.youngs_modulus * h.powi(3)
                            / (24.0 * (1.0 - shell.poisson_ratio.powi(2))),
                        poisson_ratio: shell.poisson_ratio,
                    });
                }
            }
        }

        let mut robot = SoftRobot {
            mesh,
            geometry,
            material,
            shell_model,
            edges,
            layout,
            joints,
            triangle_edges,
            triangle_signs,
            rest_areas,
            stretch_springs,
            bend_twist_springs,
            hinge_springs,
            triangle_springs,
            mass: LumpedMass { mass: Vec::new() },
        };
        robot.mass = compute_lumped_mass(&robot)?;
        Ok(robot)
    }

    pub fn n_nodes(&self) -> usize {
        self.layout.n_nodes
    }

    pub fn total_dofs(&self) -> usize {
        self.layout.total_dofs
    }

    pub fn rest_position(&self, node: usize) -> Vec3 {
        self.mesh.nodes[node]
    }

    /// Sum of the translational nodal masses.
    pub fn total_mass(&self) -> f64 {
        (0..self.n_nodes()).map(|n| self.mass.node_mass(n)).sum()
    }

    /// Analytic structural mass: rods `rho A L`, shells `rho h A`.
    pub fn analytic_mass(&self) -> f64 {
        let rods: f64 = self
            .edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Rod)
            .map(|e| self.material.rod.density * self.geometry.area() * e.rest_length)
            .sum();
        let shells: f64 = self
            .rest_areas
            .iter()
            .map(|a| self.material.shell.density * self.geometry.shell_thickness * a)
            .sum();
        rods + shells
    }

    pub fn twisting_edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().enumerate().filter(|(_, e)| e.twisting).map(|(k, _)| k)
    }

    pub fn shell_edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.kind == EdgeKind::Shell)
            .map(|(k, _)| k)
    }

    /// Edges incident to each node.
    pub fn node_edges(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_nodes()];
        for (k, e) in self.edges.iter().enumerate() {
            out[e.nodes[0]].push(k);
            out[e.nodes[1]].push(k);
        }
        out
    }
}

/// Diagonal lumped mass. Nodes take half of each incident rod edge and a
/// third of each incident triangle. Twist angles take the polar inertia
/// `m_e r^2 / 2` of the rod segment; mid-edge rotations take
/// `m_strip |e|^2 / 12`, where `m_strip` is a third of the adjacent shell mass.
pub fn compute_lumped_mass(robot: &SoftRobot) -> Result<LumpedMass> {
    let layout = &robot.layout;
    let mut mass = vec![0.0; layout.total_dofs];
    let rod = robot.material.rod;
    let area = robot.geometry.area();
    let r = robot.geometry.rod_radius;
    let h = robot.geometry.shell_thickness;
    let rho_s = robot.material.shell.density;

    let add_node = |mass: &mut Vec<f64>, n: usize, m: f64| {
        for d in layout.node_dofs(n) {
            mass[d] += m;
        }
    };
    for e in robot.edges.iter().filter(|e| e.kind == EdgeKind::Rod) {
        let m = rod.density * area * e.rest_length;
        add_node(&mut mass, e.nodes[0], 0.5 * m);
        add_node(&mut mass, e.nodes[1], 0.5 * m);
    }
    for (ti, t) in robot.mesh.triangles.iter().enumerate() {
        let m = rho_s * h * robot.rest_areas[ti];
        for &v in t {
            add_node(&mut mass, v, m / 3.0);
        }
    }
    for (k, e) in robot.edges.iter().enumerate() {
        if let Some(d) = layout.theta_dof(k) {
            let m_e = rod.density * area * e.rest_length;
            mass[d] = m_e * r * r / 2.0;
        }
        if let Some(d) = layout.xi_dof(k) {
            let m_strip: f64 = e
                .triangles
                .iter()
                .map(|&ti| rho_s * h * robot.rest_areas[ti] / 3.0)
                .sum();
            mass[d] = m_strip * e.rest_length.powi(2) / 12.0;
        }
    }
    if let Some(i) = mass.iter().position(|&m| !(m > 0.0)) {
        return Err(SimError::Config(format!("degree of freedom {i} has zero mass")));
    }
    Ok(LumpedMass { mass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::rod_line;

    fn unit_material() -> Material {
        Material::uniform(MaterialProps {
            density: 1000.0,
            youngs_modulus: 1e6,
            poisson_ratio: 0.5,
        })
    }

    fn geom() -> Geometry {
        Geometry {
            rod_radius: 0.01,
            shell_thickness: 0.001,
        }
    }

    fn two_triangles() -> MeshInput {
        MeshInput::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
            ],
            vec![],
            vec![[0, 1, 2], [1, 3, 2]],
        )
    }

    #[test]
    fn three_node_rod() {
        let mesh = rod_line(3, 2.0, Vec3::zero(), Vec3::unit_x());
        let r = SoftRobot::build(mesh, geom(), unit_material(), ShellModel::Hinge).unwrap();
        assert_eq!(r.stretch_springs.len(), 2);
        assert_eq!(r.bend_twist_springs.len(), 1);
        assert_eq!(r.total_dofs(), 11);
        let s = &r.bend_twist_springs[0];
        assert_eq!(s.nodes, [0, 1, 2]);
        assert_eq!(s.signs, [1.0, 1.0]);
    }

    #[test]
    fn two_triangles_hinge_and_midedge() {
        let r = SoftRobot::build(two_triangles(), geom(), unit_material(), ShellModel::Hinge).unwrap();
        assert_eq!(r.stretch_springs.len(), 5);
        assert_eq!(r.hinge_springs.len(), 1);
        assert_eq!(r.total_dofs(), 12);
        let h = &r.hinge_springs[0];
        assert_eq!(&h.nodes[..2], &[1, 2]);
        assert_eq!(r.hinge_springs.len(), r.edges.iter().filter(|e| e.triangles.len() == 2).count());

        let r = SoftRobot::build(two_triangles(), geom(), unit_material(), ShellModel::Midedge).unwrap();
        assert_eq!(r.triangle_springs.len(), 2);
        // enumerate unique edges by hand: 01, 02, 12, 13, 23
        assert_eq!(r.edges.len(), 5);
        assert_eq!(r.total_dofs(), 12 + 5);
        // the shared edge (1,2) is traversed in opposite directions by the two triangles
        let shared = r.edges.iter().position(|e| e.nodes == [1, 2]).unwrap();
        let mut signs = vec![];
        for ts in &r.triangle_springs {
            for k in 0..3 {
                if ts.edges[k] == shared {
                    signs.push(ts.signs[k]);
                }
            }
        }
        signs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(signs, vec![-1.0, 1.0]);
    }

    #[test]
    fn star_of_edges_into_hub() {
        let nodes = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(-1.0, -1.0, 0.0),
        ];
        let mesh = MeshInput::new(nodes, vec![[1, 0], [2, 0], [3, 0]], vec![]);
        let r = SoftRobot::build(mesh, geom(), unit_material(), ShellModel::Hinge).unwrap();
        assert_eq!(r.bend_twist_springs.len(), 3);
        for s in &r.bend_twist_springs {
            assert_eq!(s.nodes[1], 0);
            // both edges point into the hub, so exactly one is flipped
            assert_eq!(s.signs, [1.0, -1.0]);
        }
    }

    #[test]
    fn single_edge_has_no_bend_springs() {
        let mesh = rod_line(2, 1.0, Vec3::zero(), Vec3::unit_x());
        let r = SoftRobot::build(mesh, geom(), unit_material(), ShellModel::Hinge).unwrap();
        assert!(r.bend_twist_springs.is_empty());
    }

    #[test]
    fn joint_promotes_incident_shell_edges() {
        let mut mesh = MeshInput::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 3]],
            vec![[0, 1, 2]],
        );
        let (joints, promoted) = classify_joints(&mesh);
        assert_eq!(joints, vec![0]);
        assert_eq!(promoted, vec![(0, 1), (0, 2)]);
        let r = SoftRobot::build(mesh.clone(), geom(), unit_material(), ShellModel::Midedge).unwrap();
        // joint shell edges carry theta and xi
        let e01 = r.edges.iter().position(|e| e.nodes == [0, 1]).unwrap();
        assert!(r.layout.theta_dof(e01).is_some() && r.layout.xi_dof(e01).is_some());
        // rod + two promoted edges at node 0: C(3, 2) springs
        assert_eq!(r.bend_twist_springs.len(), 3);
        assert_eq!(r.total_dofs(), 12 + 3 + 3);

        mesh.triangles.clear();
        assert!(classify_joints(&mesh).0.is_empty());
        let shell_only = two_triangles();
        assert!(classify_joints(&shell_only).0.is_empty());
    }

    #[test]
    fn zero_length_and_degenerate_inputs_rejected() {
        let mesh = MeshInput::new(vec![Vec3::zero(), Vec3::zero()], vec![[0, 1]], vec![]);
        assert!(matches!(
            SoftRobot::build(mesh, geom(), unit_material(), ShellModel::Hinge),
            Err(SimError::Geometry(_))
        ));
        let mesh = MeshInput::new(
            vec![Vec3::zero(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)],
            vec![],
            vec![[0, 1, 2]],
        );
        assert!(matches!(
            SoftRobot::build(mesh, geom(), unit_material(), ShellModel::Hinge),
            Err(SimError::DegenerateTriangle { triangle: 0 })
        ));
    }

    #[test]
    fn lumped_mass_examples() {
        // 2-node rod with total mass 1 kg
        let mut mat = unit_material();
        let g = geom();
        mat.rod.density = 1.0 / g.area();
        let r = SoftRobot::build(rod_line(2, 1.0, Vec3::zero(), Vec3::unit_x()), g, mat, ShellModel::Hinge).unwrap();
        assert!((r.mass.node_mass(0) - 0.5).abs() < 1e-12);
        assert!((r.mass.node_mass(1) - 0.5).abs() < 1e-12);

        // 3-node chain of equal edges with total 2 kg
        mat.rod.density = 1.0 / g.area();
        let r = SoftRobot::build(rod_line(3, 2.0, Vec3::zero(), Vec3::unit_x()), g, mat, ShellModel::Hinge).unwrap();
        let m: Vec<f64> = (0..3).map(|n| r.mass.node_mass(n)).collect();
        for (a, b) in m.iter().zip([0.5, 1.0, 0.5]) {
            assert!((a - b).abs() < 1e-12);
        }

        // equilateral triangle with total mass 0.3 kg
        let s = 3f64.sqrt();
        let mesh = MeshInput::new(
            vec![Vec3::zero(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.5, s / 2.0, 0.0)],
            vec![],
            vec![[0, 1, 2]],
        );
        let area = s / 4.0;
        mat.shell.density = 0.3 / (area * g.shell_thickness);
        let r = SoftRobot::build(mesh, g, mat, ShellModel::Hinge).unwrap();
        for n in 0..3 {
            assert!((r.mass.node_mass(n) - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn build_is_deterministic() {
        let mesh = crate::mesh::rect_grid(5, 4, 0.2, 0.1);
        let a = SoftRobot::build(mesh.clone(), geom(), unit_material(), ShellModel::Midedge).unwrap();
        let b = SoftRobot::build(mesh, geom(), unit_material(), ShellModel::Midedge).unwrap();
        assert_eq!(a.edges, b.edges);
        assert_eq!(a.triangle_springs, b.triangle_springs);
        assert_eq!(a.stretch_springs, b.stretch_springs);
    }
}

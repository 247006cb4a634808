//! Mesh input: nodes, rod edges and shell triangles, plus the plain-text
//! mesh file format and a handful of procedural generators.
//!
//! # File format
//!
//! ```text
//! # comments start with '#'
//! *nodes
//! 0.0 0.0 0.0
//! 0.1 0.0 0.0
//! *edges
//! 0 1
//! *triangles
//! 0 1 2
//! ```
//!
//! Section headers are case-insensitive. Values may be separated by
//! whitespace or commas. Indices are zero-based. Sections may be omitted or
//! repeated; rows accumulate in order.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::vector::Vec3;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeshInput {
    pub nodes: Vec<Vec3>,
    pub rod_edges: Vec<[usize; 2]>,
    pub triangles: Vec<[usize; 3]>,
}

/// Undirected edge key.
#[inline]
pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl MeshInput {
    pub fn new(nodes: Vec<Vec3>, rod_edges: Vec<[usize; 2]>, triangles: Vec<[usize; 3]>) -> Self {
        Self {
            nodes,
            rod_edges,
            triangles,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Checks the index and manifold invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        let mut seen = HashMap::new();
        for (k, e) in self.rod_edges.iter().enumerate() {
            if e[0] >= n || e[1] >= n {
                return Err(SimError::Topology(format!("rod edge {k} references a missing node")));
            }
            if e[0] == e[1] {
                return Err(SimError::Topology(format!("rod edge {k} is a self loop")));
            }
            if seen.insert(edge_key(e[0], e[1]), k).is_some() {
                return Err(SimError::Topology(format!("duplicate rod edge {k} ({}, {})", e[0], e[1])));
            }
        }
        let mut shell_edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for (k, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= n) {
                return Err(SimError::Topology(format!("triangle {k} references a missing node")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(SimError::Topology(format!("triangle {k} has repeated vertices")));
            }
            for s in 0..3 {
                let key = edge_key(t[(s + 1) % 3], t[(s + 2) % 3]);
                if seen.contains_key(&key) {
                    return Err(SimError::Topology(format!(
                        "triangle {k} edge ({}, {}) coincides with a rod edge",
                        key.0, key.1
                    )));
                }
                let c = shell_edge_count.entry(key).or_insert(0);
                *c += 1;
                if *c > 2 {
                    return Err(SimError::Topology(format!(
                        "non-manifold shell edge ({}, {}) shared by more than two triangles",
                        key.0, key.1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        #[derive(Clone, Copy)]
        enum Section {
            None,
            Nodes,
            Edges,
            Triangles,
        }
        let mut section = Section::None;
        let mut mesh = MeshInput::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| SimError::MeshParse {
                line: lineno + 1,
                msg,
            };
            if let Some(name) = line.strip_prefix('*') {
                section = match name.trim().to_ascii_lowercase().as_str() {
                    "nodes" => Section::Nodes,
                    "edges" => Section::Edges,
                    "triangles" => Section::Triangles,
                    other => return Err(err(format!("unknown section '*{other}'"))),
                };
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            match section {
                Section::None => return Err(err("data before any section header".into())),
                Section::Nodes => {
                    if fields.len() != 3 {
                        return Err(err(format!("expected 3 coordinates, found {}", fields.len())));
                    }
                    let mut v = [0.0; 3];
                    for (i, f) in fields.iter().enumerate() {
                        v[i] = f.parse().map_err(|_| err(format!("bad coordinate '{f}'")))?;
                    }
                    mesh.nodes.push(Vec3::new(v[0], v[1], v[2]));
                }
                Section::Edges => {
                    if fields.len() != 2 {
                        return Err(err(format!("expected 2 indices, found {}", fields.len())));
                    }
                    let mut v = [0usize; 2];
                    for (i, f) in fields.iter().enumerate() {
                        v[i] = f.parse().map_err(|_| err(format!("bad index '{f}'")))?;
                    }
                    mesh.rod_edges.push(v);
                }
                Section::Triangles => {
                    if fields.len() != 3 {
                        return Err(err(format!("expected 3 indices, found {}", fields.len())));
                    }
                    let mut v = [0usize; 3];
                    for (i, f) in fields.iter().enumerate() {
                        v[i] = f.parse().map_err(|_| err(format!("bad index '{f}'")))?;
                    }
                    mesh.triangles.push(v);
                }
            }
        }
        Ok(mesh)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("*nodes\n");
        for p in &self.nodes {
            let _ = writeln!(s, "{:?} {:?} {:?}", p.x, p.y, p.z);
        }
        if !self.rod_edges.is_empty() {
            s.push_str("*edges\n");
            for e in &self.rod_edges {
                let _ = writeln!(s, "{} {}", e[0], e[1]);
            }
        }
        if !self.triangles.is_empty() {
            s.push_str("*triangles\n");
            for t in &self.triangles {
                let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
            }
        }
        s
    }
}

/// Straight rod of `n_nodes` nodes from `start` along `dir` with total `length`.
pub fn rod_line(n_nodes: usize, length: f64, start: Vec3, dir: Vec3) -> MeshInput {
    let d = dir.normalized();
    let de = length / (n_nodes.max(2) - 1) as f64;
    let nodes = (0..n_nodes).map(|i| start + d * (de * i as f64)).collect();
    let rod_edges = (1..n_nodes).map(|i| [i - 1, i]).collect();
    MeshInput::new(nodes, rod_edges, Vec::new())
}

/// Helix about the z axis, starting at `(radius, 0, top_z)` and descending
/// by `pitch` per turn.
pub fn helix(n_nodes: usize, radius: f64, pitch: f64, turns: f64, top_z: f64) -> MeshInput {
    let nodes = (0..n_nodes)
        .map(|i| {
            let s = i as f64 / (n_nodes - 1) as f64;
            let phi = 2.0 * std::f64::consts::PI * turns * s;
            Vec3::new(radius * phi.cos(), radius * phi.sin(), top_z - pitch * turns * s)
        })
        .collect();
    let rod_edges = (1..n_nodes).map(|i| [i - 1, i]).collect();
    MeshInput::new(nodes, rod_edges, Vec::new())
}

/// Planar rectangular grid in the xy-plane with `nx * ny` nodes, split into
/// triangles with alternating diagonals.
pub fn rect_grid(nx: usize, ny: usize, lx: f64, ly: f64) -> MeshInput {
    let mut nodes = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            nodes.push(Vec3::new(
                lx * i as f64 / (nx - 1) as f64,
                ly * j as f64 / (ny - 1) as f64,
                0.0,
            ));
        }
    }
    let id = |i: usize, j: usize| j * nx + i;
    let mut triangles = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }
    MeshInput::new(nodes, Vec::new(), triangles)
}

/// Flat disk in the xy-plane centred at the origin. Ring `k` (1-based) holds
/// `sectors * k` nodes, so the triangles stay roughly equilateral.
pub fn disk(radius: f64, rings: usize, sectors: usize) -> MeshInput {
    use std::f64::consts::PI;
    let mut nodes = vec![Vec3::new(0.0, 0.0, 0.0)];
    let mut ring_start = vec![0usize];
    for k in 1..=rings {
        ring_start.push(nodes.len());
        let m = sectors * k;
        let r = radius * k as f64 / rings as f64;
        for i in 0..m {
            let a = 2.0 * PI * i as f64 / m as f64;
            nodes.push(Vec3::new(r * a.cos(), r * a.sin(), 0.0));
        }
    }
    let mut triangles = Vec::new();
    // innermost fan
    for i in 0..sectors {
        let a = ring_start[1] + i;
        let b = ring_start[1] + (i + 1) % sectors;
        triangles.push([0, a, b]);
    }
    for k in 1..rings {
        let (m_in, m_out) = (sectors * k, sectors * (k + 1));
        let (s_in, s_out) = (ring_start[k], ring_start[k + 1]);
        // merge the two rings by angle
        let (mut i, mut o) = (0usize, 0usize);
        while i < m_in || o < m_out {
            let ang_i = (i as f64 + 1.0) / m_in as f64;
            let ang_o = (o as f64 + 1.0) / m_out as f64;
            let vi = s_in + i % m_in;
            let vo = s_out + o % m_out;
            if o < m_out && (i >= m_in || ang_o <= ang_i) {
                let vo2 = s_out + (o + 1) % m_out;
                triangles.push([vi, vo, vo2]);
                o += 1;
            } else {
                let vi2 = s_in + (i + 1) % m_in;
                triangles.push([vi, vo, vi2]);
                i += 1;
            }
        }
    }
    MeshInput::new(nodes, Vec::new(), triangles)
}

/// Rectangular sheet bent into an L: a flat base of length `base` along x at
/// height `lift`, a circular bend of `radius` turning through `angle`
/// (radians), and a straight flap for the rest of `lx`. Arc length along x
/// is preserved, so the rest shape is the bent sheet itself.
pub fn folded_strip(nx: usize, ny: usize, lx: f64, ly: f64, base: f64, radius: f64, angle: f64, lift: f64) -> MeshInput {
    use std::f64::consts::FRAC_PI_2;
    let mut mesh = rect_grid(nx, ny, lx, ly);
    let arc = radius * angle;
    for p in mesh.nodes.iter_mut() {
        let s = p.x;
        let (x, z) = if s <= base {
            (s, 0.0)
        } else if s <= base + arc {
            let th = -FRAC_PI_2 + (s - base) / radius;
            (base + radius * th.cos(), radius + radius * th.sin())
        } else {
            let th = -FRAC_PI_2 + angle;
            let d = s - base - arc;
            (base + radius * th.cos() - d * th.sin(), radius + radius * th.sin() + d * th.cos())
        };
        p.x = x;
        p.z = z + lift;
    }
    mesh
}

/// Spherical cap of sphere radius `radius` spanning polar angle `polar`,
/// apex at the origin and opening towards -z. Built from [`disk`], so ring
/// numbering is the same (apex is node 0, the rim is the last ring).
pub fn spherical_cap(radius: f64, polar: f64, rings: usize, sectors: usize) -> MeshInput {
    let mut mesh = disk(1.0, rings, sectors);
    for p in mesh.nodes.iter_mut() {
        let r = (p.x * p.x + p.y * p.y).sqrt();
        let th = polar * r;
        let (c, s) = if r > 0.0 { (p.x / r, p.y / r) } else { (1.0, 0.0) };
        *p = Vec3::new(radius * th.sin() * c, radius * th.sin() * s, radius * (th.cos() - 1.0));
    }
    mesh
}

/// Index range of ring `k` of a [`disk`] or [`spherical_cap`] mesh.
pub fn disk_ring(sectors: usize, k: usize) -> std::ops::Range<usize> {
    if k == 0 {
        return 0..1;
    }
    let start = 1 + sectors * k * (k - 1) / 2;
    start..start + sectors * k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        let text = "# demo\n*nodes\n0 0 0\n1, 0, 0\n0 1 0\n*EDGES\n0 1\n*triangles\n0 1 2 # tri\n";
        let err = MeshInput::parse(text).unwrap().validate().unwrap_err();
        assert!(matches!(err, SimError::Topology(_)));
        let text = "*nodes\n0 0 0\n1 0 0\n0 1 0\n2 0 0\n*edges\n1 3\n*triangles\n0 1 2\n";
        let m = MeshInput::parse(text).unwrap();
        m.validate().unwrap();
        assert_eq!(m.nodes.len(), 4);
        assert_eq!(MeshInput::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match MeshInput::parse("*nodes\n0 0\n").unwrap_err() {
            SimError::MeshParse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
        assert!(MeshInput::parse("1 2 3\n").is_err());
        assert!(MeshInput::parse("*quads\n").is_err());
    }

    #[test]
    fn non_manifold_edge_rejected() {
        let nodes = (0..5).map(|i| Vec3::new(i as f64, (i * i) as f64, 0.0)).collect();
        let m = MeshInput::new(nodes, vec![], vec![[0, 1, 2], [0, 1, 3], [0, 1, 4]]);
        assert!(matches!(m.validate(), Err(SimError::Topology(_))));
    }

    #[test]
    fn generators_are_valid() {
        rod_line(5, 1.0, Vec3::zero(), Vec3::unit_x()).validate().unwrap();
        helix(30, 0.02, 0.02, 3.0, 0.0).validate().unwrap();
        let g = rect_grid(4, 3, 0.3, 0.2);
        g.validate().unwrap();
        assert_eq!(g.triangles.len(), 2 * 3 * 2);
        let d = disk(0.1, 4, 6);
        d.validate().unwrap();
        // area of the polygonal disk approaches pi r^2
        let area: f64 = d
            .triangles
            .iter()
            .map(|t| {
                let (a, b, c) = (d.nodes[t[0]], d.nodes[t[1]], d.nodes[t[2]]);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum();
        assert!((area - std::f64::consts::PI * 0.01).abs() < 0.05 * std::f64::consts::PI * 0.01);
        assert_eq!(disk_ring(6, 4).end, d.nodes.len());
        for n in disk_ring(6, 3) {
            assert!((d.nodes[n].norm() - 0.075).abs() < 1e-12);
        }
    }

    #[test]
    fn folded_strip_keeps_arc_length() {
        let m = folded_strip(31, 3, 0.3, 0.1, 0.12, 0.02, 1.7, 0.001);
        m.validate().unwrap();
        let len: f64 = (1..31).map(|i| (m.nodes[i] - m.nodes[i - 1]).norm()).sum();
        // chords of the arc are slightly shorter than the arc itself,
        // by about s^3 / (24 R^2) per element of length s
        assert!(len <= 0.3 + 1e-12 && 0.3 - len < 5e-4, "{len}");
        assert!(m.nodes[..31].iter().all(|p| p.z >= 0.001 - 1e-15));
    }

    #[test]
    fn cap_lies_on_sphere() {
        let m = spherical_cap(0.05, 1.2, 5, 6);
        m.validate().unwrap();
        let c = Vec3::new(0.0, 0.0, -0.05);
        assert!(m.nodes.iter().all(|p| ((*p - c).norm() - 0.05).abs() < 1e-12));
        let rim = disk_ring(6, 5);
        assert!(m.nodes[rim].iter().all(|p| (p.z + 0.05 * (1.0 - 1.2f64.cos())).abs() < 1e-12));
    }
}

//! Elastic strains and energies: stretch, bend, twist, hinge and mid-edge
//! bending.
//!
//! Every mode follows the same contract. With strain `eps` and stiffness `K`,
//! `E = 1/2 K eps^T eps`, the force is `-K eps grad(eps)` and the Jacobian is
//! `-K (eps hess(eps) + grad(eps) grad(eps)^T)`. Bend and twist energies are
//! divided by the Voronoi length, stretch energy is multiplied by the rest
//! length. Mid-edge bending is differentiated directly on the energy.

use rayon::prelude::*;

use crate::assembly::{EnergyContribution, Local};
use crate::autodiff::{HyperDual, Real};
use crate::error::{Result, SimError};
use crate::frames::{parallel_transport, spring_frames, wrap_angle, FrameSet};
use crate::robot::{BendTwistSpring, HingeSpring, SoftRobot, StretchSpring, TriangleSpring};
use crate::vector::{node_pos, Vec3, V3};

/// Strain with its gradient and Hessian over an `N`-DOF stencil.
#[derive(Clone, Debug)]
pub struct Strain<const N: usize> {
    pub value: f64,
    pub grad: [f64; N],
    pub hess: [[f64; N]; N],
}

impl<const N: usize> From<HyperDual<N>> for Strain<N> {
    fn from(h: HyperDual<N>) -> Self {
        Self {
            value: h.v,
            grad: h.g,
            hess: h.hessian(),
        }
    }
}

/// Derivatives over reduced variables `r = A x` lifted to the stencil DOFs;
/// `map` lists the nonzeros `(r, x, A_rx)`.
fn lift<const M: usize, const N: usize>(h: HyperDual<M>, map: &[(usize, usize, f64)]) -> Strain<N> {
    let hr = h.hessian();
    let mut grad = [0.0; N];
    let mut hess = [[0.0; N]; N];
    for &(r, x, c) in map {
        grad[x] += c * h.g[r];
    }
    // H = A^T Hr A, first Hr A then the left product
    let mut ha = [[0.0; N]; M];
    for (r1, row) in hr.iter().enumerate() {
        for &(r2, x, c) in map {
            ha[r1][x] += row[r2] * c;
        }
    }
    for &(r, x1, c) in map {
        for x2 in 0..N {
            hess[x1][x2] += c * ha[r][x2];
        }
    }
    Strain {
        value: h.v,
        grad,
        hess,
    }
}

/// Offsets `x_i - x_0` (i = 1..3) of the four hinge nodes.
const HINGE_MAP: [(usize, usize, f64); 18] = {
    let mut m = [(0, 0, 0.0); 18];
    let mut k = 0;
    while k < 9 {
        m[2 * k] = (k, 3 + k, 1.0);
        m[2 * k + 1] = (k, k % 3, -1.0);
        k += 1;
    }
    m
};

/// Edge vectors `x1 - x0`, `x2 - x1` and the two twist angles.
const BEND_TWIST_MAP: [(usize, usize, f64); 14] = {
    let mut m = [(0, 0, 0.0); 14];
    let mut c = 0;
    while c < 3 {
        m[4 * c] = (c, 3 + c, 1.0);
        m[4 * c + 1] = (c, c, -1.0);
        m[4 * c + 2] = (3 + c, 6 + c, 1.0);
        m[4 * c + 3] = (3 + c, 3 + c, -1.0);
        c += 1;
    }
    m[12] = (6, 9, 1.0);
    m[13] = (7, 10, 1.0);
    m
};

/// Chain rule for `E = 1/2 k eps^2`, accumulated into `local`.
fn add_quadratic<const N: usize>(local: &mut Local<N>, k: f64, s: &Strain<N>) {
    local.energy += 0.5 * k * s.value * s.value;
    for a in 0..N {
        local.grad[a] += k * s.value * s.grad[a];
        for b in 0..N {
            local.hess[a][b] += k * (s.value * s.hess[a][b] + s.grad[a] * s.grad[b]);
        }
    }
}

fn position_dofs<const M: usize>(nodes: &[usize]) -> [usize; M] {
    let mut out = [0usize; M];
    for (i, &n) in nodes.iter().enumerate() {
        for c in 0..3 {
            out[3 * i + c] = 3 * n + c;
        }
    }
    out
}

// ---------------------------------------------------------------- stretch

/// Stretch strain `|e|/|e_bar| - 1 - natural` of a spring with its gradient
/// and Hessian over the two nodal positions.
pub fn stretch_strain(q: &[f64], spring: &StretchSpring, index: usize) -> Result<Strain<6>> {
    let e = node_pos(q, spring.nodes[1]) - node_pos(q, spring.nodes[0]);
    let l = e.norm();
    if l < 1e-12 {
        return Err(SimError::SingularStretch {
            spring: index,
            length: l,
        });
    }
    let l0 = spring.rest_length;
    let t = e * (1.0 / l);
    let mut grad = [0.0; 6];
    for c in 0..3 {
        grad[c] = -t[c] / l0;
        grad[3 + c] = t[c] / l0;
    }
    let mut hess = [[0.0; 6]; 6];
    for a in 0..3 {
        for b in 0..3 {
            let p = ((a == b) as u8 as f64 - t[a] * t[b]) / (l0 * l);
            hess[a][b] = p;
            hess[3 + a][3 + b] = p;
            hess[a][3 + b] = -p;
            hess[3 + a][b] = -p;
        }
    }
    Ok(Strain {
        value: l / l0 - 1.0 - spring.natural(),
        grad,
        hess,
    })
}

pub fn stretch_local(q: &[f64], spring: &StretchSpring, index: usize) -> Result<Local<6>> {
    let s = stretch_strain(q, spring, index)?;
    let mut local = Local::zero(position_dofs(&spring.nodes));
    add_quadratic(&mut local, spring.stiffness * spring.rest_length, &s);
    Ok(local)
}

// ---------------------------------------------------------- bend and twist

/// Committed, sign-adjusted frames of a bend-twist spring.
#[derive(Clone, Copy, Debug)]
pub struct SpringFrames {
    pub ti: Vec3,
    pub d1i: Vec3,
    pub tj: Vec3,
    pub d1j: Vec3,
    pub base_twist: f64,
}

impl SpringFrames {
    pub fn new(spring: &BendTwistSpring, frames: &FrameSet, index: usize) -> Self {
        let [(ti, d1i), (tj, d1j)] = spring_frames(spring, frames);
        Self {
            ti,
            d1i,
            tj,
            d1j,
            base_twist: frames.ref_twist[index],
        }
    }
}

/// Curvature binormal `2 e_i x e_j / (|e_i||e_j| + e_i . e_j)`, or `None` for
/// antiparallel edges.
pub fn curvature_binormal<T: Real>(ei: V3<T>, ej: V3<T>) -> Option<V3<T>> {
    let ll = ei.norm() * ej.norm();
    let denom = ll + ei.dot(&ej);
    if denom.re() < 1e-12 * ll.re().max(1e-300) {
        return None;
    }
    Some(ei.cross(&ej).scale(T::cst(2.0) / denom))
}

/// `[kappa1, kappa2, twist]` of a spring at positions `x` (`m, n, o`) and raw
/// twist angles `theta`, with committed frames transported onto the current
/// tangents. Natural values are not subtracted.
pub fn bend_twist_strains<T: Real>(
    x: [V3<T>; 3],
    theta: [T; 2],
    signs: [f64; 2],
    frames: &SpringFrames,
) -> Option<[T; 3]> {
    let ei = x[1] - x[0];
    let ej = x[2] - x[1];
    let kb = curvature_binormal(ei, ej)?;
    let ti = ei.scale(T::cst(1.0) / ei.norm());
    let tj = ej.scale(T::cst(1.0) / ej.norm());
    let d1i = parallel_transport(V3::from_f64(frames.d1i), V3::from_f64(frames.ti), ti);
    let d1j = parallel_transport(V3::from_f64(frames.d1j), V3::from_f64(frames.tj), tj);
    let d2i = ti.cross(&d1i);
    let d2j = tj.cross(&d1j);
    let thi = theta[0] * signs[0];
    let thj = theta[1] * signs[1];
    let (ci, si) = (thi.cos(), thi.sin());
    let (cj, sj) = (thj.cos(), thj.sin());
    let m1i = d1i.scale(ci) + d2i.scale(si);
    let m2i = d2i.scale(ci) - d1i.scale(si);
    let m1j = d1j.scale(cj) + d2j.scale(sj);
    let m2j = d2j.scale(cj) - d1j.scale(sj);
    let k1 = (m2i + m2j).dot(&kb) * 0.5;
    let k2 = -((m1i + m1j).dot(&kb) * 0.5);

    let u = parallel_transport(d1i, ti, tj);
    let raw = u.cross(&d1j).dot(&tj).atan2(u.dot(&d1j));
    let offset = frames.base_twist + wrap_angle(raw.re() - frames.base_twist) - raw.re();
    let twist = thj - thi + raw + offset;
    Some([k1, k2, twist])
}

fn bend_twist_dofs(robot: &SoftRobot, spring: &BendTwistSpring) -> [usize; 11] {
    let mut dofs = [0usize; 11];
    dofs[..9].copy_from_slice(&position_dofs::<9>(&spring.nodes));
    dofs[9] = robot.layout.theta_dof(spring.edges[0]).expect("bend-twist edge carries theta");
    dofs[10] = robot.layout.theta_dof(spring.edges[1]).expect("bend-twist edge carries theta");
    dofs
}

/// Bend-twist strains at `q` with derivatives over the 11-DOF stencil.
fn bend_twist_hyper(
    robot: &SoftRobot,
    q: &[f64],
    frames: &FrameSet,
    index: usize,
) -> Result<([Strain<11>; 3], [usize; 11])> {
    let spring = &robot.bend_twist_springs[index];
    let dofs = bend_twist_dofs(robot, spring);
    let v = |k: usize, val: f64| HyperDual::<8>::var(val, k, 1.0);
    let p = spring.nodes.map(|n| node_pos(q, n));
    let (ei, ej) = (p[1] - p[0], p[2] - p[1]);
    let zero = HyperDual::constant(0.0);
    let x = [
        V3::new(zero, zero, zero),
        V3::new(v(0, ei.x), v(1, ei.y), v(2, ei.z)),
        V3::new(v(3, ej.x), v(4, ej.y), v(5, ej.z)),
    ];
    let x = [x[0], x[1], x[1] + x[2]];
    let sf = SpringFrames::new(spring, frames, index);
    let s = bend_twist_strains(x, [v(6, q[dofs[9]]), v(7, q[dofs[10]])], spring.signs, &sf)
        .ok_or(SimError::Kink { spring: index })?;
    Ok((s.map(|h| lift(h, &BEND_TWIST_MAP)), dofs))
}

/// Plain-float `[kappa1, kappa2, twist]` of spring `index`.
pub fn bend_twist_values(robot: &SoftRobot, q: &[f64], frames: &FrameSet, index: usize) -> Result<[f64; 3]> {
    let spring = &robot.bend_twist_springs[index];
    let dofs = bend_twist_dofs(robot, spring);
    let x = [node_pos(q, spring.nodes[0]), node_pos(q, spring.nodes[1]), node_pos(q, spring.nodes[2])];
    let sf = SpringFrames::new(spring, frames, index);
    bend_twist_strains(x, [q[dofs[9]], q[dofs[10]]], spring.signs, &sf).ok_or(SimError::Kink { spring: index })
}

/// Curvature binormal and material curvatures of spring `index`.
pub fn rod_curvature(robot: &SoftRobot, q: &[f64], frames: &FrameSet, index: usize) -> Result<(Vec3, f64, f64)> {
    let s = &robot.bend_twist_springs[index];
    let ei = node_pos(q, s.nodes[1]) - node_pos(q, s.nodes[0]);
    let ej = node_pos(q, s.nodes[2]) - node_pos(q, s.nodes[1]);
    let kb = curvature_binormal(ei, ej).ok_or(SimError::Kink { spring: index })?;
    let [k1, k2, _] = bend_twist_values(robot, q, frames, index)?;
    Ok((kb, k1, k2))
}

/// Bending strain `kappa - kappa_bar` (two components) with derivatives.
pub fn bend_strain(robot: &SoftRobot, q: &[f64], frames: &FrameSet, index: usize) -> Result<[Strain<11>; 2]> {
    let (s, _) = bend_twist_hyper(robot, q, frames, index)?;
    let nat = robot.bend_twist_springs[index].natural_curvature();
    let [mut k1, mut k2, _] = s;
    k1.value -= nat[0];
    k2.value -= nat[1];
    Ok([k1, k2])
}

/// Twisting strain `theta_j - theta_i + ref_twist - nat_twist` with derivatives.
pub fn twist_strain(robot: &SoftRobot, q: &[f64], frames: &FrameSet, index: usize) -> Result<Strain<11>> {
    let (s, _) = bend_twist_hyper(robot, q, frames, index)?;
    let [_, _, mut tw] = s;
    tw.value -= robot.bend_twist_springs[index].nat_twist;
    Ok(tw)
}

pub fn bend_twist_local(robot: &SoftRobot, q: &[f64], frames: &FrameSet, index: usize) -> Result<Local<11>> {
    let spring = &robot.bend_twist_springs[index];
    let (mut s, dofs) = bend_twist_hyper(robot, q, frames, index)?;
    let nat = spring.natural_curvature();
    s[0].value -= nat[0];
    s[1].value -= nat[1];
    s[2].value -= spring.nat_twist;
    let dl = spring.voronoi_length;
    let mut local = Local::zero(dofs);
    add_quadratic(&mut local, spring.bend_stiffness[0] / dl, &s[0]);
    add_quadratic(&mut local, spring.bend_stiffness[1] / dl, &s[1]);
    add_quadratic(&mut local, spring.twist_stiffness / dl, &s[2]);
    Ok(local)
}

// ------------------------------------------------------------------ hinge

/// Signed dihedral angle across the hinge edge `x0 -> x1` with wings `x2`,
/// `x3`; zero when flat. `None` when a wing triangle is degenerate (returns
/// the offending wing slot).
pub fn hinge_angle<T: Real>(x: [V3<T>; 4]) -> std::result::Result<T, usize> {
    hinge_angle_rel([x[1] - x[0], x[2] - x[0], x[3] - x[0]])
}

/// Hinge angle from the positions of nodes 1..4 relative to node 0.
fn hinge_angle_rel<T: Real>(d: [V3<T>; 3]) -> std::result::Result<T, usize> {
    let e = d[0];
    let na = e.cross(&d[1]);
    let nb = d[2].cross(&e);
    let el = e.norm().re();
    if na.norm().re() < 1e-12 * el * el {
        return Err(0);
    }
    if nb.norm().re() < 1e-12 * el * el {
        return Err(1);
    }
    let ehat = e.scale(T::cst(1.0) / e.norm());
    Ok(na.cross(&nb).dot(&ehat).atan2(na.dot(&nb)))
}

fn hinge_error(robot: &SoftRobot, spring: &HingeSpring, slot: usize) -> SimError {
    SimError::DegenerateTriangle {
        triangle: robot.edges[spring.edge].triangles[slot],
    }
}

/// Hinge strain `phi - phi_bar` with derivatives over the four nodes.
pub fn hinge_strain(robot: &SoftRobot, q: &[f64], index: usize) -> Result<Strain<12>> {
    let spring = &robot.hinge_springs[index];
    let x0 = node_pos(q, spring.nodes[0]);
    let d = [1, 2, 3].map(|i| {
        let r = node_pos(q, spring.nodes[i]) - x0;
        let k = 3 * (i - 1);
        V3::new(
            HyperDual::<9>::var(r.x, k, 1.0),
            HyperDual::var(r.y, k + 1, 1.0),
            HyperDual::var(r.z, k + 2, 1.0),
        )
    });
    let phi = hinge_angle_rel(d).map_err(|slot| hinge_error(robot, spring, slot))?;
    Ok(lift(phi - spring.nat_angle, &HINGE_MAP))
}

pub fn hinge_value(robot: &SoftRobot, q: &[f64], index: usize) -> Result<f64> {
    let spring = &robot.hinge_springs[index];
    let x = spring.nodes.map(|n| node_pos(q, n));
    hinge_angle(x).map_err(|slot| hinge_error(robot, spring, slot))
}

pub fn hinge_local(robot: &SoftRobot, q: &[f64], index: usize) -> Result<Local<12>> {
    let spring = &robot.hinge_springs[index];
    let s = hinge_strain(robot, q, index)?;
    let mut local = Local::zero(position_dofs(&spring.nodes));
    add_quadratic(&mut local, spring.stiffness, &s);
    Ok(local)
}

// --------------------------------------------------------------- mid-edge

/// Per-triangle inputs frozen for the step: `tau0` of each slot's edge in the
/// edge's global orientation.
#[derive(Clone, Copy, Debug)]
pub struct MidedgeFrames {
    pub tau0: [Vec3; 3],
}

impl MidedgeFrames {
    pub fn new(spring: &TriangleSpring, frames: &FrameSet) -> Self {
        Self {
            tau0: spring.edges.map(|e| frames.tau0[e]),
        }
    }
}

/// Coefficients `c_k` of the shape operator `sum_k c_k t^k (x) t^k` and the
/// (unnormalized) tangents `t^k = n x e^k`. Errors return the slot with a
/// near-orthogonal `t_hat . tau`.
pub fn midedge_coefficients<T: Real>(
    x: [V3<T>; 3],
    xi: [T; 3],
    spring: &TriangleSpring,
    mf: &MidedgeFrames,
) -> std::result::Result<([T; 3], [V3<T>; 3]), usize> {
    let nraw = (x[1] - x[0]).cross(&(x[2] - x[0]));
    let n = nraw.scale(T::cst(1.0) / nraw.norm());
    let mut c = [T::cst(0.0); 3];
    let mut t = [V3::<T>::zero(); 3];
    for k in 0..3 {
        let ek = x[(k + 2) % 3] - x[(k + 1) % 3];
        let tk = n.cross(&ek);
        let tau = V3::<T>::from_f64(mf.tau0[k] * spring.signs[k]);
        let that_tau = tk.dot(&tau) / tk.norm();
        if that_tau.re().abs() < 1e-10 {
            return Err(k);
        }
        let num = xi[k] * spring.signs[k] - n.dot(&tau);
        c[k] = num / (that_tau * (spring.rest_area * spring.rest_edge_lengths[k]));
        t[k] = tk;
    }
    Ok((c, t))
}

/// Shape operator as a dense 3x3 matrix.
pub fn midedge_shape_operator(
    robot: &SoftRobot,
    q: &[f64],
    frames: &FrameSet,
    index: usize,
) -> Result<[[f64; 3]; 3]> {
    let spring = &robot.triangle_springs[index];
    let (x, xi) = midedge_inputs(robot, q, spring);
    let (c, t) = midedge_coefficients(x, xi, spring, &MidedgeFrames::new(spring, frames)).map_err(|slot| {
        SimError::Conditioning {
            triangle: spring.triangle,
            slot,
        }
    })?;
    let mut m = [[0.0; 3]; 3];
    for k in 0..3 {
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] += c[k] * t[k][a] * t[k][b];
            }
        }
    }
    Ok(m)
}

fn midedge_inputs(robot: &SoftRobot, q: &[f64], spring: &TriangleSpring) -> ([Vec3; 3], [f64; 3]) {
    let x = spring.nodes.map(|n| node_pos(q, n));
    let xi = spring.edges.map(|e| q[robot.layout.xi_dof(e).expect("shell edge carries xi")]);
    (x, xi)
}

/// `1/2 K A_bar [(1 - nu) Tr(dL^2) + nu (Tr dL)^2]` with
/// `dL = sum_k (c_k - c_bar_k) t^k (x) t^k`.
pub fn midedge_energy<T: Real>(
    x: [V3<T>; 3],
    xi: [T; 3],
    spring: &TriangleSpring,
    mf: &MidedgeFrames,
) -> std::result::Result<T, usize> {
    let (c, t) = midedge_coefficients(x, xi, spring, mf)?;
    let d = [0, 1, 2].map(|k| c[k] - spring.nat_coeffs[k]);
    let mut tr = T::cst(0.0);
    let mut tr2 = T::cst(0.0);
    for k in 0..3 {
        tr = tr + d[k] * t[k].norm_sq();
        for l in 0..3 {
            let g = t[k].dot(&t[l]);
            tr2 = tr2 + d[k] * d[l] * g * g;
        }
    }
    let nu = spring.poisson_ratio;
    Ok((tr2 * (1.0 - nu) + tr * tr * nu) * (0.5 * spring.stiffness * spring.rest_area))
}

fn midedge_dofs(robot: &SoftRobot, spring: &TriangleSpring) -> [usize; 12] {
    let mut dofs = [0usize; 12];
    dofs[..9].copy_from_slice(&position_dofs::<9>(&spring.nodes));
    for k in 0..3 {
        dofs[9 + k] = robot.layout.xi_dof(spring.edges[k]).expect("shell edge carries xi");
    }
    dofs
}

pub fn midedge_local(robot: &SoftRobot, q: &[f64], frames: &FrameSet, index: usize) -> Result<Local<12>> {
    let spring = &robot.triangle_springs[index];
    let dofs = midedge_dofs(robot, spring);
    let v = |k: usize| HyperDual::<12>::var(q[dofs[k]], k, 1.0);
    let x = [0, 1, 2].map(|i| V3::new(v(3 * i), v(3 * i + 1), v(3 * i + 2)));
    let xi = [v(9), v(10), v(11)];
    let e = midedge_energy(x, xi, spring, &MidedgeFrames::new(spring, frames)).map_err(|slot| {
        SimError::Conditioning {
            triangle: spring.triangle,
            slot,
        }
    })?;
    Ok(Local {
        dofs,
        energy: e.v,
        grad: e.g,
        hess: e.hessian(),
    })
}

// --------------------------------------------------------------- assembly

fn collect<L: Send, F>(n: usize, f: F) -> Result<Vec<L>>
where
    F: Fn(usize) -> Result<L> + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Sums all elastic stencils into `out`, scaling Jacobian entries by
/// `jac_scale`. Stencils are evaluated in parallel and scattered in a fixed
/// order, so results do not depend on the thread count.
pub fn assemble_elastic(
    robot: &SoftRobot,
    q: &[f64],
    frames: &FrameSet,
    out: &mut EnergyContribution,
    jac_scale: f64,
) -> Result<()> {
    for l in collect(robot.stretch_springs.len(), |i| stretch_local(q, &robot.stretch_springs[i], i))? {
        out.add_local(&l, jac_scale);
    }
    for l in collect(robot.bend_twist_springs.len(), |i| bend_twist_local(robot, q, frames, i))? {
        out.add_local(&l, jac_scale);
    }
    for l in collect(robot.hinge_springs.len(), |i| hinge_local(robot, q, i))? {
        out.add_local(&l, jac_scale);
    }
    for l in collect(robot.triangle_springs.len(), |i| midedge_local(robot, q, frames, i))? {
        out.add_local(&l, jac_scale);
    }
    Ok(())
}

/// Total elastic energy without derivatives.
pub fn elastic_energy(robot: &SoftRobot, q: &[f64], frames: &FrameSet) -> Result<f64> {
    let mut e = 0.0;
    for (i, s) in robot.stretch_springs.iter().enumerate() {
        let eps = stretch_strain(q, s, i)?.value;
        e += 0.5 * s.stiffness * s.rest_length * eps * eps;
    }
    for (i, s) in robot.bend_twist_springs.iter().enumerate() {
        let [k1, k2, tw] = bend_twist_values(robot, q, frames, i)?;
        let nat = s.natural_curvature();
        let dl = s.voronoi_length;
        e += 0.5 * s.bend_stiffness[0] * (k1 - nat[0]).powi(2) / dl;
        e += 0.5 * s.bend_stiffness[1] * (k2 - nat[1]).powi(2) / dl;
        e += 0.5 * s.twist_stiffness * (tw - s.nat_twist).powi(2) / dl;
    }
    for (i, s) in robot.hinge_springs.iter().enumerate() {
        e += 0.5 * s.stiffness * (hinge_value(robot, q, i)? - s.nat_angle).powi(2);
    }
    for s in &robot.triangle_springs {
        let (x, xi) = midedge_inputs(robot, q, s);
        e += midedge_energy(x, xi, s, &MidedgeFrames::new(s, frames)).map_err(|slot| SimError::Conditioning {
            triangle: s.triangle,
            slot,
        })?;
    }
    Ok(e)
}

/// Measured strain fields, natural values not subtracted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StrainField {
    /// `|e|/|e_bar| - 1` per stretch spring.
    pub stretch: Vec<f64>,
    /// `[kappa1, kappa2]` per bend-twist spring.
    pub curvature: Vec<[f64; 2]>,
    pub twist: Vec<f64>,
}

pub fn measure_strains(robot: &SoftRobot, q: &[f64], frames: &FrameSet) -> Result<StrainField> {
    let mut out = StrainField::default();
    for (i, s) in robot.stretch_springs.iter().enumerate() {
        out.stretch.push(stretch_strain(q, s, i)?.value + s.natural());
    }
    for i in 0..robot.bend_twist_springs.len() {
        let [k1, k2, tw] = bend_twist_values(robot, q, frames, i)?;
        out.curvature.push([k1, k2]);
        out.twist.push(tw);
    }
    Ok(out)
}

/// Makes configuration `q` stress free by storing its strains as natural
/// values (actuation increments are reset to zero).
pub fn adopt_natural_state(robot: &mut SoftRobot, q: &[f64], frames: &FrameSet) -> Result<()> {
    let field = measure_strains(robot, q, frames)?;
    for (s, v) in robot.stretch_springs.iter_mut().zip(&field.stretch) {
        s.nat_strain = *v;
        s.inc_strain = 0.0;
    }
    for (i, s) in robot.bend_twist_springs.iter_mut().enumerate() {
        s.nat_curvature = field.curvature[i];
        s.inc_curvature = [0.0; 2];
        s.nat_twist = field.twist[i];
    }
    for i in 0..robot.hinge_springs.len() {
        robot.hinge_springs[i].nat_angle = hinge_value(robot, q, i)?;
    }
    for i in 0..robot.triangle_springs.len() {
        let s = &robot.triangle_springs[i];
        let (x, xi) = midedge_inputs(robot, q, s);
        let (c, _) = midedge_coefficients(x, xi, s, &MidedgeFrames::new(s, frames)).map_err(|slot| {
            SimError::Conditioning {
                triangle: s.triangle,
                slot,
            }
        })?;
        robot.triangle_springs[i].nat_coeffs = c;
    }
    Ok(())
}

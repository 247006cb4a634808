//! Accumulation of per-stencil energy, force and Jacobian into global
//! buffers.

/// Energy, gradient and Hessian of one stencil over `N` local DOFs.
#[derive(Clone, Debug)]
pub struct Local<const N: usize> {
    pub dofs: [usize; N],
    pub energy: f64,
    pub grad: [f64; N],
    pub hess: [[f64; N]; N],
}

impl<const N: usize> Local<N> {
    pub fn zero(dofs: [usize; N]) -> Self {
        Self {
            dofs,
            energy: 0.0,
            grad: [0.0; N],
            hess: [[0.0; N]; N],
        }
    }
}

/// Global energy, force (`-dE/dq`) and Jacobian (`dF/dq`) triplets. The
/// Jacobian is with respect to the Newton unknown, so contributions are
/// scaled by `dq_eval/dq` (and `du_eval/dq` for velocity-dependent forces).
#[derive(Clone, Debug, Default)]
pub struct EnergyContribution {
    pub energy: f64,
    pub force: Vec<f64>,
    pub jacobian: Vec<(usize, usize, f64)>,
    pub with_jacobian: bool,
}

impl EnergyContribution {
    pub fn new(n_dofs: usize, with_jacobian: bool) -> Self {
        Self {
            energy: 0.0,
            force: vec![0.0; n_dofs],
            jacobian: Vec::new(),
            with_jacobian,
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.force.len()
    }

    /// Adds a conservative stencil: `F -= grad`, `J -= scale * hess`.
    pub fn add_local<const N: usize>(&mut self, local: &Local<N>, jac_scale: f64) {
        self.energy += local.energy;
        for a in 0..N {
            self.force[local.dofs[a]] -= local.grad[a];
        }
        if self.with_jacobian {
            for a in 0..N {
                for b in 0..N {
                    let v = local.hess[a][b];
                    if v != 0.0 {
                        self.jacobian.push((local.dofs[a], local.dofs[b], -jac_scale * v));
                    }
                }
            }
        }
    }

    #[inline]
    pub fn add_force(&mut self, dof: usize, f: f64) {
        self.force[dof] += f;
    }

    #[inline]
    pub fn add_jacobian(&mut self, row: usize, col: usize, v: f64) {
        if self.with_jacobian && v != 0.0 {
            self.jacobian.push((row, col, v));
        }
    }

    /// Adds another contribution over the same DOFs.
    pub fn merge(&mut self, other: &EnergyContribution) {
        self.energy += other.energy;
        for (a, b) in self.force.iter_mut().zip(&other.force) {
            *a += b;
        }
        if self.with_jacobian {
            self.jacobian.extend_from_slice(&other.jacobian);
        }
    }

    /// Dense row-major Jacobian with duplicates summed.
    pub fn dense_jacobian(&self) -> Vec<Vec<f64>> {
        let n = self.n_dofs();
        let mut j = vec![vec![0.0; n]; n];
        for &(r, c, v) in &self.jacobian {
            j[r][c] += v;
        }
        j
    }
}

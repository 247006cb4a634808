//! Linear solves `J x = f` over the free DOFs, assembled from a triplet
//! stream. Dense uses full-pivot LU with an SVD pseudoinverse fallback,
//! sparse uses a direct sparse LU.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Dense,
    #[default]
    Sparse,
}

/// Pivot ratio below which a dense factorization is deemed rank deficient.
const RANK_TOL: f64 = 1e-13;

/// Cached sparsity pattern (a superset of recent triplet layouts) with its
/// symbolic factorization. Newton iterations mostly reuse one layout, and a
/// changing contact set only adds a few entries.
#[derive(Clone, Debug)]
struct Pattern {
    symbolic: SymbolicSparseColMat<usize>,
    lu: SymbolicLu<usize>,
    /// Triplet layout of the last solve and its value slots.
    idx: Vec<(usize, usize)>,
    slots: Vec<usize>,
}

impl Pattern {
    fn build(n: usize, entries: impl Iterator<Item = (usize, usize)>) -> Option<Self> {
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (r, c) in entries {
            cols[c].push(r);
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for col in &mut cols {
            col.sort_unstable();
            col.dedup();
            row_idx.extend_from_slice(col);
            col_ptr.push(row_idx.len());
        }
        let symbolic = SymbolicSparseColMat::new_checked(n, n, col_ptr, None, row_idx);
        let lu = SymbolicLu::try_new(symbolic.as_ref()).ok()?;
        Some(Self {
            symbolic,
            lu,
            idx: Vec::new(),
            slots: Vec::new(),
        })
    }

    fn n(&self) -> usize {
        self.symbolic.ncols()
    }

    fn nnz(&self) -> usize {
        self.symbolic.row_idx().len()
    }

    fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cp = self.symbolic.col_ptr();
        let ri = self.symbolic.row_idx();
        (0..self.n()).flat_map(move |c| ri[cp[c]..cp[c + 1]].iter().map(move |&r| (r, c)))
    }

    fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let cp = self.symbolic.col_ptr();
        let rows = &self.symbolic.row_idx()[cp[c]..cp[c + 1]];
        rows.binary_search(&r).ok().map(|k| cp[c] + k)
    }

    /// Records the value slots of `triplets`; false if an entry lies outside
    /// the pattern.
    fn locate(&mut self, triplets: &[(usize, usize, f64)]) -> bool {
        let same = self.idx.len() == triplets.len() && self.idx.iter().zip(triplets).all(|(a, b)| a.0 == b.0 && a.1 == b.1);
        if same {
            return true;
        }
        let slots: Option<Vec<usize>> = triplets.iter().map(|&(r, c, _)| self.slot(r, c)).collect();
        match slots {
            Some(slots) => {
                self.slots = slots;
                self.idx = triplets.iter().map(|&(r, c, _)| (r, c)).collect();
                true
            }
            None => false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LinearSolver {
    pub kind: SolverKind,
    /// Use the pseudoinverse (minimum-norm solution) on rank deficiency.
    pub pinv_fallback: bool,
    pattern: Option<Pattern>,
}

impl LinearSolver {
    pub fn new(kind: SolverKind) -> Self {
        Self {
            kind,
            pinv_fallback: true,
            pattern: None,
        }
    }

    /// Solves the `n x n` system given by `triplets` (duplicates summed).
    pub fn solve(&mut self, n: usize, triplets: &[(usize, usize, f64)], rhs: &[f64]) -> Result<Vec<f64>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        match self.kind {
            SolverKind::Dense => self.dense(n, triplets, rhs),
            SolverKind::Sparse => match self.sparse_lu(n, triplets, rhs) {
                Some(x) => Ok(x),
                None => {
                    log::warn!("sparse LU failed, retrying densely");
                    self.dense(n, triplets, rhs)
                }
            },
        }
    }

    fn dense(&self, n: usize, triplets: &[(usize, usize, f64)], rhs: &[f64]) -> Result<Vec<f64>> {
        let mut a = Mat::<f64>::zeros(n, n);
        for &(r, c, v) in triplets {
            a[(r, c)] += v;
        }
        let b = Mat::from_fn(n, 1, |i, _| rhs[i]);
        let lu = a.full_piv_lu();
        let u = lu.U();
        let pivots: Vec<f64> = (0..n).map(|i| u[(i, i)].abs()).collect();
        let pmax = pivots.iter().cloned().fold(0.0, f64::max);
        let pmin = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
        let ratio = if pmax > 0.0 { pmin / pmax } else { 0.0 };
        if ratio > RANK_TOL && ratio.is_finite() {
            let x = lu.solve(&b);
            return Ok((0..n).map(|i| x[(i, 0)]).collect());
        }
        if !self.pinv_fallback {
            return Err(SimError::Solver(format!(
                "singular {n}x{n} Jacobian (pivot ratio {ratio:.3e})"
            )));
        }
        log::debug!("rank-deficient Jacobian (pivot ratio {ratio:.3e}), using pseudoinverse");
        let svd = a
            .svd()
            .map_err(|e| SimError::Solver(format!("SVD did not converge: {e:?}")))?;
        let x = svd.pseudoinverse() * &b;
        Ok((0..n).map(|i| x[(i, 0)]).collect())
    }
}

impl LinearSolver {
    fn sparse_lu(&mut self, n: usize, triplets: &[(usize, usize, f64)], rhs: &[f64]) -> Option<Vec<f64>> {
        let fits = match self.pattern.as_mut() {
            Some(p) if p.n() == n => p.locate(triplets),
            _ => false,
        };
        if !fits {
            let fresh = Pattern::build(n, triplets.iter().map(|&(r, c, _)| (r, c)))?;
            let mut next = match self.pattern.take().filter(|p| p.n() == n) {
                // grow the old pattern unless it has become much larger than needed
                Some(old) if old.nnz() <= 2 * fresh.nnz() => {
                    Pattern::build(n, old.entries().chain(triplets.iter().map(|&(r, c, _)| (r, c))))?
                }
                _ => fresh,
            };
            if !next.locate(triplets) {
                return None;
            }
            self.pattern = Some(next);
        }
        let pat = self.pattern.as_ref()?;
        let mut vals = vec![0.0; pat.nnz()];
        for (&slot, t) in pat.slots.iter().zip(triplets) {
            vals[slot] += t.2;
        }
        let a = SparseColMatRef::new(pat.symbolic.as_ref(), &vals);
        let lu = Lu::try_new_with_symbolic(pat.lu.clone(), a).ok()?;
        let b = Mat::from_fn(n, 1, |i, _| rhs[i]);
        let x = lu.solve(&b);
        let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        if !out.iter().all(|v| v.is_finite()) {
            return None;
        }
        // reject numerically singular factorizations
        let mut res = rhs.to_vec();
        for &(r, c, v) in triplets {
            res[r] -= v * out[c];
        }
        let scale = rhs.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
        (res.iter().map(|v| v.abs()).fold(0.0, f64::max) <= 1e-6 * scale).then_some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn to_triplets(a: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::new();
        for (i, row) in a.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if *v != 0.0 {
                    t.push((i, j, *v));
                }
            }
        }
        t
    }

    #[test]
    fn identity_returns_rhs() {
        let t: Vec<_> = (0..5).map(|i| (i, i, 1.0)).collect();
        let f = vec![1.0, -2.0, 3.0, 0.5, 7.0];
        for k in [SolverKind::Dense, SolverKind::Sparse] {
            assert_eq!(LinearSolver::new(k).solve(5, &t, &f).unwrap(), f);
        }
    }

    #[test]
    fn dense_and_sparse_agree_on_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 50;
        let b: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = (0..n).map(|k| b[k][i] * b[k][j]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
            }
        }
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = to_triplets(&a);
        let xd = LinearSolver::new(SolverKind::Dense).solve(n, &t, &f).unwrap();
        let xs = LinearSolver::new(SolverKind::Sparse).solve(n, &t, &f).unwrap();
        for (d, s) in xd.iter().zip(&xs) {
            assert!((d - s).abs() < 1e-10 * (1.0 + d.abs()));
        }
    }

    #[test]
    fn duplicate_triplets_are_summed() {
        let t = vec![(0, 0, 1.0), (0, 0, 1.0), (1, 1, 4.0)];
        for k in [SolverKind::Dense, SolverKind::Sparse] {
            let x = LinearSolver::new(k).solve(2, &t, &[2.0, 2.0]).unwrap();
            assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn cached_pattern_follows_changing_layouts() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 30;
        let mut sparse = LinearSolver::new(SolverKind::Sparse);
        for round in 0..12 {
            // banded SPD core plus a few random symmetric couplings
            let mut t = Vec::new();
            for i in 0..n {
                t.push((i, i, 4.0 + rng.gen_range(0.0..1.0)));
                if i + 1 < n {
                    t.push((i, i + 1, -1.0));
                    t.push((i + 1, i, -1.0));
                }
            }
            for _ in 0..(round % 4) {
                let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
                let v = rng.gen_range(-0.5..0.5);
                t.push((a, b, v));
                t.push((b, a, v));
            }
            let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let xd = LinearSolver::new(SolverKind::Dense).solve(n, &t, &f).unwrap();
            let xs = sparse.solve(n, &t, &f).unwrap();
            for (d, s) in xd.iter().zip(&xs) {
                assert!((d - s).abs() < 1e-10, "round {round}: {d} vs {s}");
            }
        }
    }

    #[test]
    fn singular_uses_minimum_norm_solution() {
        // rank 1: [[1,1],[1,1]]
        let t = vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)];
        let f = [1.0, 3.0];
        let x = LinearSolver::new(SolverKind::Dense).solve(2, &t, &f).unwrap();
        // least squares gives x0 + x1 = 2, minimum norm gives x0 = x1
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
        // normal equations A^T (A x - f) = 0
        let r = [x[0] + x[1] - f[0], x[0] + x[1] - f[1]];
        assert!((r[0] + r[1]).abs() < 1e-12);

        let mut strict = LinearSolver::new(SolverKind::Dense);
        strict.pinv_fallback = false;
        assert!(matches!(strict.solve(2, &t, &f), Err(SimError::Solver(_))));
        // sparse falls back to the dense path
        let xs = LinearSolver::new(SolverKind::Sparse).solve(2, &t, &f).unwrap();
        assert!((xs[0] - 1.0).abs() < 1e-12);
    }
}

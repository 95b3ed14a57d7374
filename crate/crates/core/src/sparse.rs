//! Compressed-column matrices assembled on a fixed pattern, a reusable
//! sparse LU and a Jacobi-preconditioned conjugate gradient.

use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::prelude::{Reborrow, Solve};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};

use crate::error::{Error, Result};

/// Square CSC matrix with sorted row indices in every column.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    /// Pattern containing every (i, j) pair of dofs that share a group.
    pub fn from_groups<'a>(n: usize, groups: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for g in groups {
            for &j in g {
                cols[j].extend_from_slice(g);
            }
        }
        for j in 0..n {
            cols[j].push(j);
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for mut c in cols {
            c.sort_unstable();
            c.dedup();
            row_idx.extend(c);
            col_ptr.push(row_idx.len());
        }
        let nnz = row_idx.len();
        Self {
            n,
            col_ptr,
            row_idx,
            values: vec![0.0; nnz],
        }
    }

    /// Position of entry (i, j) in `values`.
    pub fn index(&self, i: usize, j: usize) -> Option<usize> {
        let (lo, hi) = (self.col_ptr[j], self.col_ptr[j + 1]);
        self.row_idx[lo..hi].binary_search(&i).ok().map(|k| lo + k)
    }

    /// Adds `v` to entry (i, j); the entry must exist in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .index(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside sparsity pattern"));
        self.values[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.index(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn zero_values(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[k]] += self.values[k] * xj;
            }
        }
    }

    /// Imposes x_i = value by symmetric elimination: the column is moved to
    /// the right-hand side, then row and column i are replaced by the identity.
    pub fn eliminate(&mut self, dofs: &[(usize, f64)], rhs: &mut [f64]) {
        let mut fixed = vec![None; self.n];
        for &(i, v) in dofs {
            fixed[i] = Some(v);
        }
        for j in 0..self.n {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[k];
                match (fixed[i], fixed[j]) {
                    (None, Some(vj)) => {
                        rhs[i] -= self.values[k] * vj;
                        self.values[k] = 0.0;
                    }
                    (Some(_), _) => {
                        self.values[k] = if i == j { 1.0 } else { 0.0 };
                    }
                    (None, None) => {}
                }
            }
        }
        for &(i, v) in dofs {
            rhs[i] = v;
        }
    }

    /// Right-hand side correction of [`eliminate`](Self::eliminate) for a new
    /// load vector, computed from the matrix before elimination.
    pub fn dirichlet_rhs(&self, dofs: &[(usize, f64)], is_fixed: &[bool], rhs: &mut [f64]) {
        for &(j, v) in dofs {
            if v != 0.0 {
                for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                    let i = self.row_idx[k];
                    if !is_fixed[i] {
                        rhs[i] -= self.values[k] * v;
                    }
                }
            }
        }
        for &(i, v) in dofs {
            rhs[i] = v;
        }
    }

    /// Largest |A_ij − s_i s_j A_ji| over the pattern, where `signs` flips block rows.
    pub fn symmetry_defect(&self, signs: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.n {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[k];
                let a = signs[i] * self.values[k];
                let b = signs[j] * self.get(j, i);
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }
}

/// Sparse LU of a Jacobi-scaled matrix. The symbolic analysis is computed
/// once per pattern and reused by every numeric refactorization.
pub struct LuSolver {
    symbolic_matrix: SymbolicSparseColMat<usize>,
    symbolic_lu: SymbolicLu<usize>,
    numeric: Option<(Lu<usize, f64>, Vec<f64>)>,
}

impl std::fmt::Debug for LuSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LuSolver")
            .field("n", &self.symbolic_matrix.nrows())
            .field("factored", &self.numeric.is_some())
            .finish()
    }
}

impl LuSolver {
    pub fn new(pattern: &CscMatrix) -> Result<Self> {
        let symbolic_matrix = SymbolicSparseColMat::new_checked(
            pattern.n,
            pattern.n,
            pattern.col_ptr.clone(),
            None,
            pattern.row_idx.clone(),
        );
        let symbolic_lu = SymbolicLu::try_new(symbolic_matrix.rb())
            .map_err(|e| Error::LinearSolver(format!("symbolic factorization: {e:?}")))?;
        Ok(Self {
            symbolic_matrix,
            symbolic_lu,
            numeric: None,
        })
    }

    pub fn factor(&mut self, a: &CscMatrix) -> Result<()> {
        let scale: Vec<f64> = a
            .diagonal()
            .iter()
            .map(|&d| if d != 0.0 && d.is_finite() { 1.0 / d.abs().sqrt() } else { 1.0 })
            .collect();
        let mut vals = a.values.clone();
        for j in 0..a.n {
            for k in a.col_ptr[j]..a.col_ptr[j + 1] {
                vals[k] *= scale[a.row_idx[k]] * scale[j];
            }
        }
        let mat = SparseColMat::new(self.symbolic_matrix.clone(), vals);
        let lu = Lu::try_new_with_symbolic(self.symbolic_lu.clone(), mat.rb())
            .map_err(|e| Error::LinearSolver(format!("numeric factorization: {e:?}")))?;
        self.numeric = Some((lu, scale));
        Ok(())
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let (lu, scale) = self
            .numeric
            .as_ref()
            .ok_or_else(|| Error::LinearSolver("solve called before factorization".into()))?;
        let mut b = faer::Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i] * scale[i]);
        lu.solve_in_place(b.as_mut());
        let x: Vec<f64> = (0..rhs.len()).map(|i| b[(i, 0)] * scale[i]).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolver("singular system (non-finite solution)".into()));
        }
        Ok(x)
    }
}

/// Jacobi-preconditioned conjugate gradient for symmetric positive-definite systems.
pub fn conjugate_gradient(
    a: &CscMatrix,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<usize> {
    let n = a.n;
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let mut r = a.matvec(x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..=max_iter {
        let res = norm(&r) / b_norm;
        if res <= rel_tol {
            return Ok(it);
        }
        if it == max_iter {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: res,
            });
        }
        a.matvec_into(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    unreachable!()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CscMatrix {
        let groups: Vec<[usize; 2]> = (0..n - 1).map(|i| [i, i + 1]).collect();
        let mut a = CscMatrix::from_groups(n, groups.iter().map(|g| &g[..]));
        for g in &groups {
            for &i in g {
                for &j in g {
                    a.add(i, j, if i == j { 1.0 } else { -1.0 });
                }
            }
        }
        a.add(0, 0, 1.0);
        a
    }

    #[test]
    fn lu_matches_cg_on_spd_system() {
        let a = laplacian_1d(50);
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let mut lu = LuSolver::new(&a).unwrap();
        lu.factor(&a).unwrap();
        let x1 = lu.solve(&b).unwrap();
        let mut x2 = vec![0.0; 50];
        conjugate_gradient(&a, &b, &mut x2, 1e-12, 500).unwrap();
        for (u, v) in x1.iter().zip(&x2) {
            assert!((u - v).abs() < 1e-8 * (1.0 + u.abs()));
        }
        let r = a.matvec(&x1);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-10);
        }
    }

    #[test]
    fn elimination_imposes_values_and_keeps_symmetry() {
        let mut a = laplacian_1d(10);
        let mut rhs = vec![0.0; 10];
        a.eliminate(&[(9, 2.0)], &mut rhs);
        assert_eq!(a.symmetry_defect(&[1.0; 10]), 0.0);
        let mut lu = LuSolver::new(&a).unwrap();
        lu.factor(&a).unwrap();
        let x = lu.solve(&rhs).unwrap();
        assert!((x[9] - 2.0).abs() < 1e-14);
        // The extra diagonal at node 0 makes x linear through a ghost zero: x_i = 0.2 (i + 1).
        for (i, v) in x.iter().enumerate() {
            assert!((v - 0.2 * (i + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut a = CscMatrix::from_groups(3, [&[0usize, 1][..]]);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        let mut lu = LuSolver::new(&a).unwrap();
        let failed = lu.factor(&a).is_err() || lu.solve(&[1.0, 1.0, 1.0]).is_err();
        assert!(failed);
    }

    #[test]
    fn cg_iteration_cap() {
        let a = laplacian_1d(200);
        let b = vec![1.0; 200];
        let mut x = vec![0.0; 200];
        let err = conjugate_gradient(&a, &b, &mut x, 1e-14, 3).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 3, .. }));
    }
}

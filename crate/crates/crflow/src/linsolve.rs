//! Sparse linear solves for the per-step systems. Default is a direct LU
//! factorization (removes solver noise from the identity checks); a
//! Jacobi-preconditioned BiCGSTAB is available as the iterative option.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinSolveError {
    #[error("matrix assembly failed: {0}")]
    Assembly(String),
    #[error("LU factorization failed (singular or ill-conditioned matrix)")]
    Factorization,
    #[error("iterative solver stalled: residual {residual} after {iters} iterations")]
    NotConverged { residual: f64, iters: usize },
}

#[derive(Debug, Clone, Copy)]
pub enum LinearSolver {
    Direct,
    BiCgStab { tol: f64, max_iters: usize },
}

impl Default for LinearSolver {
    fn default() -> Self {
        LinearSolver::Direct
    }
}

/// Square sparse matrix in triplet form; duplicate entries accumulate.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub n: usize,
    pub triplets: Vec<(usize, usize, f64)>,
}

impl SparseSystem {
    pub fn new(n: usize) -> Self {
        SparseSystem {
            n,
            triplets: Vec::new(),
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        if value != 0.0 {
            self.triplets.push((row, col, value));
        }
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>, LinSolveError> {
        let t: Vec<Triplet<usize, usize, f64>> = self
            .triplets
            .iter()
            .map(|&(i, j, v)| Triplet::new(i, j, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.n, self.n, &t)
            .map_err(|e| LinSolveError::Assembly(format!("{:?}", e)))
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for &(i, j, v) in &self.triplets {
            y[i] += v * x[j];
        }
    }

    pub fn solve(&self, b: &[f64], solver: LinearSolver) -> Result<Vec<f64>, LinSolveError> {
        assert_eq!(b.len(), self.n);
        match solver {
            LinearSolver::Direct => {
                let a = self.to_faer()?;
                let lu = a.sp_lu().map_err(|_| LinSolveError::Factorization)?;
                let rhs = faer::Mat::from_fn(self.n, 1, |i, _| b[i]);
                let x = lu.solve(&rhs);
                let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(LinSolveError::Factorization);
                }
                Ok(out)
            }
            LinearSolver::BiCgStab { tol, max_iters } => self.bicgstab(b, tol, max_iters),
        }
    }

    fn bicgstab(&self, b: &[f64], tol: f64, max_iters: usize) -> Result<Vec<f64>, LinSolveError> {
        let n = self.n;
        let mut diag = vec![0.0; n];
        for &(i, j, v) in &self.triplets {
            if i == j {
                diag[i] += v;
            }
        }
        let precond = |r: &[f64], z: &mut [f64]| {
            for i in 0..n {
                z[i] = if diag[i] != 0.0 { r[i] / diag[i] } else { r[i] };
            }
        };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let norm = |a: &[f64]| dot(a, a).sqrt();

        let b_norm = norm(b).max(f64::MIN_POSITIVE);
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let r0 = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut t = vec![0.0; n];
        for it in 0..max_iters {
            let rho_new = dot(&r0, &r);
            if rho_new.abs() < f64::MIN_POSITIVE {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            precond(&p, &mut scratch);
            let phat = scratch.clone();
            self.matvec(&phat, &mut v);
            alpha = rho / dot(&r0, &v);
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm(&s) / b_norm < tol {
                for i in 0..n {
                    x[i] += alpha * phat[i];
                }
                return Ok(x);
            }
            precond(&s, &mut scratch);
            let shat = scratch.clone();
            self.matvec(&shat, &mut t);
            omega = dot(&t, &s) / dot(&t, &t);
            for i in 0..n {
                x[i] += alpha * phat[i] + omega * shat[i];
                r[i] = s[i] - omega * t[i];
            }
            let res = norm(&r) / b_norm;
            if res < tol {
                return Ok(x);
            }
            if it + 1 == max_iters {
                return Err(LinSolveError::NotConverged {
                    residual: res,
                    iters: max_iters,
                });
            }
        }
        Ok(x)
    }
}

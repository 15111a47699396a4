//! Smallest eigenpairs of the symmetric pencil `K x = λ C x`.
//!
//! `K` is positive semidefinite with the constants as kernel, `C` is positive
//! semidefinite and may be singular (the Steklov boundary-mass pencil has a
//! kernel made of every interior node). The solver runs blocked subspace
//! iteration with Rayleigh-Ritz projection on `(K + τC)^{-1} C`, which only
//! needs SPD solves and never sees the infinite eigenvalues of the pencil
//! (they map to the transform eigenvalue 0).

use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cholesky::SpdSolver;
use crate::par::Exec;
use crate::sparse::{dot, norm2, SymmetricSparseMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual tolerance for every requested pair.
    pub tol: f64,
    pub max_iter: usize,
    /// Extra block vectors beyond the requested count.
    pub guard: usize,
    pub seed: u64,
    /// Shift `τ` of the transformed operator `(K + τ C)^{-1} C`.
    pub shift: f64,
    /// Largest Cholesky fill accepted before falling back to PCG.
    pub max_fill: usize,
    pub exec: Exec,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 500,
            guard: 5,
            seed: 0x5eed,
            shift: 1.0,
            max_fill: 150_000_000,
            exec: Exec::default(),
        }
    }
}

impl SolverOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

/// Ascending eigenvalues with `C`-orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    /// `‖Kx - λCx‖ / (‖Kx‖ + |λ| ‖Cx‖)` per pair.
    pub residuals: Vec<f64>,
    /// Rayleigh quotients of the transformed operator; `≈ 1 / (λ + shift)`.
    pub transform_values: Vec<f64>,
    pub shift: f64,
    pub iterations: usize,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Consecutive index ranges whose eigenvalues agree within `rel_tol`.
    pub fn clusters(&self, rel_tol: f64) -> Vec<Range<usize>> {
        clusters(&self.eigenvalues, rel_tol)
    }
}

/// Group sorted values into clusters of relative spread at most `rel_tol`.
pub fn clusters(values: &[f64], rel_tol: f64) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        let split = i == values.len() || {
            let scale = values[i].abs().max(values[start].abs()).max(f64::MIN_POSITIVE);
            (values[i] - values[start]).abs() > rel_tol * scale
        };
        if split {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// Cluster containing `index`.
pub fn cluster_of(clusters: &[Range<usize>], index: usize) -> Range<usize> {
    clusters
        .iter()
        .find(|r| r.contains(&index))
        .cloned()
        .unwrap_or(index..index + 1)
}

fn relative_residual(k: &SymmetricSparseMatrix, c: &SymmetricSparseMatrix, lambda: f64, x: &[f64]) -> f64 {
    let kx = k.matvec(x);
    let cx = c.matvec(x);
    let r: Vec<f64> = kx.iter().zip(&cx).map(|(a, b)| a - lambda * b).collect();
    let mut denom = norm2(&kx) + lambda.abs() * norm2(&cx);
    if lambda == 0.0 {
        // null pair: `Kx` is pure rounding, so measure it against the scale of K
        denom = denom.max(k.max_abs() * norm2(x));
    }
    if denom == 0.0 {
        0.0
    } else {
        norm2(&r) / denom
    }
}

/// Recompute the relative residual of every pair of `spectrum`, independently
/// of the solver state.
pub fn residual_report(k: &SymmetricSparseMatrix, c: &SymmetricSparseMatrix, spectrum: &Spectrum) -> Result<Vec<f64>> {
    if k.dim() != c.dim() {
        return Err(Error::DimensionMismatch(format!("K is {}, C is {}", k.dim(), c.dim())));
    }
    spectrum
        .eigenvalues
        .iter()
        .zip(&spectrum.eigenvectors)
        .enumerate()
        .map(|(i, (&lambda, x))| {
            if x.len() != k.dim() {
                return Err(Error::DimensionMismatch(format!("eigenvector {i} has length {}", x.len())));
            }
            if x.iter().all(|v| *v == 0.0) {
                return Err(Error::InvalidEigenvector(format!("eigenvector {i} is zero")));
            }
            Ok(relative_residual(k, c, lambda, x))
        })
        .collect()
}

/// `C`-orthonormalise `block` against `fixed` and itself (two Gram-Schmidt
/// passes), dropping numerically dependent columns.
fn c_orthonormalise(c: &SymmetricSparseMatrix, fixed: &[Vec<f64>], block: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let fixed_c: Vec<Vec<f64>> = fixed.iter().map(|f| c.matvec(f)).collect();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(block.len());
    let mut basis_c: Vec<Vec<f64>> = Vec::with_capacity(block.len());
    for mut y in block {
        let initial = c.quad_form(&y).max(0.0).sqrt();
        if initial == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for (f, fc) in fixed.iter().zip(&fixed_c).chain(basis.iter().zip(&basis_c)) {
                let h = dot(fc, &y);
                y.iter_mut().zip(f).for_each(|(a, b)| *a -= h * b);
            }
        }
        let cy = c.matvec(&y);
        let norm = dot(&y, &cy).max(0.0).sqrt();
        if norm <= 1e-10 * initial {
            continue;
        }
        y.iter_mut().for_each(|v| *v /= norm);
        basis_c.push(cy.into_iter().map(|v| v / norm).collect());
        basis.push(y);
    }
    basis
}

/// Smallest `count` nonzero eigenpairs of `K x = λ C x` together with the
/// constant pair `λ_0 = 0`. Infinite eigenvalues are never returned.
pub fn solve_pencil_smallest(
    k: &SymmetricSparseMatrix,
    c: &SymmetricSparseMatrix,
    count: usize,
    opts: &SolverOptions,
) -> Result<Spectrum> {
    let n = k.dim();
    if c.dim() != n {
        return Err(Error::DimensionMismatch(format!("K is {n}, C is {}", c.dim())));
    }
    if n == 0 {
        return Err(Error::DimensionMismatch("empty pencil".into()));
    }
    let ones = vec![1.0; n];
    let k1 = k.matvec(&ones);
    if norm2(&k1) > 1e-9 * k.max_abs().max(1.0) * (n as f64).sqrt() {
        return Err(Error::InvalidParameter("K must annihilate constant vectors".into()));
    }
    let c_norm1 = c.quad_form(&ones);
    if !(c_norm1 > 0.0) {
        return Err(Error::InvalidParameter("constants must have positive C-norm".into()));
    }
    let x0: Vec<f64> = ones.iter().map(|v| v / c_norm1.sqrt()).collect();
    let fixed = vec![x0.clone()];

    let a = k.linear_combination(1.0, c, opts.shift)?;
    let solver = SpdSolver::new(&a, opts.max_fill, 1e-13)?;

    let block = (count + opts.guard).min(n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();

    let mut worst = f64::INFINITY;
    let mut theta: Vec<f64> = Vec::new();
    for iter in 1..=opts.max_iter {
        let rhs = opts.exec.map(&x, |v| c.matvec(v));
        let y = solver.solve_many(&rhs, opts.exec)?;
        let q = c_orthonormalise(c, &fixed, y);
        let m = q.len();
        if m < count {
            return Err(Error::DimensionMismatch(format!(
                "pencil has only {} finite nonzero eigenvalues, {count} requested",
                m
            )));
        }
        let kq = opts.exec.map(&q, |v| k.matvec(v));
        let h = DMatrix::from_fn(m, m, |i, j| 0.5 * (dot(&q[i], &kq[j]) + dot(&q[j], &kq[i])));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        theta = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        x = order
            .iter()
            .map(|&col| {
                let mut v = vec![0.0; n];
                for (r, qr) in q.iter().enumerate() {
                    let w = eig.eigenvectors[(r, col)];
                    v.iter_mut().zip(qr).for_each(|(a, b)| *a += w * b);
                }
                v
            })
            .collect();
        let res = opts
            .exec
            .map_range(count, |i| relative_residual(k, c, theta[i], &x[i]));
        worst = res.iter().copied().fold(0.0, f64::max);
        if worst <= opts.tol {
            let mut eigenvalues = vec![0.0];
            eigenvalues.extend_from_slice(&theta[..count]);
            let mut eigenvectors = vec![x0];
            eigenvectors.extend(x.into_iter().take(count));
            let residuals = opts
                .exec
                .map_range(count + 1, |i| relative_residual(k, c, eigenvalues[i], &eigenvectors[i]));
            let transform_values = opts
                .exec
                .map(&eigenvectors, |v| {
                    let cv = c.matvec(v);
                    solver.solve(&cv).map(|w| dot(&cv, &w))
                })
                .into_iter()
                .collect::<Result<Vec<f64>>>()?;
            return Ok(Spectrum {
                eigenvalues,
                eigenvectors,
                residuals,
                transform_values,
                shift: opts.shift,
                iterations: iter,
            });
        }
    }
    let _ = theta;
    Err(Error::ConvergenceFailure {
        iterations: opts.max_iter,
        worst_residual: worst,
    })
}

/// Dense reference: all finite eigenvalues of a small pencil, ascending.
/// Uses `(K + C) = L L^T` and the spectrum of `L^{-1} C L^{-T}`.
pub fn dense_pencil_eigenvalues(k: &SymmetricSparseMatrix, c: &SymmetricSparseMatrix) -> Result<Vec<f64>> {
    let n = k.dim();
    if c.dim() != n {
        return Err(Error::DimensionMismatch(format!("K is {n}, C is {}", c.dim())));
    }
    if n > 200 {
        return Err(Error::InvalidParameter(format!("dense reference limited to 200 unknowns (got {n})")));
    }
    let kd = k.to_dense();
    let cd = c.to_dense();
    let a = DMatrix::from_fn(n, n, |i, j| kd[i][j] + cd[i][j]);
    let cm = DMatrix::from_fn(n, n, |i, j| cd[i][j]);
    let chol = a
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { row: 0, pivot: f64::NAN })?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite { row: 0, pivot: f64::NAN })?;
    let s = &linv * cm * linv.transpose();
    let s = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let mut out: Vec<f64> = eig
        .eigenvalues
        .iter()
        .filter(|&&nu| nu > 1e-12)
        .map(|&nu| 1.0 / nu - 1.0)
        .collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

//! Sparse Cholesky factorisation with a nested-dissection ordering, and a
//! Jacobi-preconditioned conjugate-gradient fallback.
//!
//! The factorisation is the classic up-looking scheme: the nonzero pattern of
//! row `k` of `L` is the reach of column `k` of the upper triangle in the
//! elimination tree.

use std::collections::VecDeque;

use crate::par::Exec;
use crate::sparse::{dot, SymmetricSparseMatrix};
use crate::{Error, Result};

const NONE: usize = usize::MAX;
const LEAF_SIZE: usize = 48;

/// Fill-reducing ordering by recursive BFS-level bisection. Returns `perm`
/// with `perm[new] = old`.
pub fn nested_dissection(a: &SymmetricSparseMatrix) -> Vec<usize> {
    let n = a.dim();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| a.row(i).map(|(j, _)| j).filter(|&j| j != i).collect())
        .collect();
    let mut label = vec![0usize; n];
    let mut next_label = 1;
    let mut order = Vec::with_capacity(n);
    let mut level = vec![NONE; n];
    // Explicit work stack: (nodes, separator to emit after both halves).
    enum Job {
        Split(Vec<usize>),
        Emit(Vec<usize>),
    }
    let mut stack = vec![Job::Split((0..n).collect())];
    while let Some(job) = stack.pop() {
        let nodes = match job {
            Job::Emit(sep) => {
                order.extend(sep);
                continue;
            }
            Job::Split(nodes) => nodes,
        };
        if nodes.len() <= LEAF_SIZE {
            order.extend(nodes);
            continue;
        }
        let id = next_label;
        next_label += 1;
        for &v in &nodes {
            label[v] = id;
        }
        let bfs = |root: usize, level: &mut Vec<usize>| -> Vec<usize> {
            let mut seen = vec![root];
            level[root] = 0;
            let mut q = VecDeque::from([root]);
            while let Some(v) = q.pop_front() {
                for &w in &adj[v] {
                    if label[w] == id && level[w] == NONE {
                        level[w] = level[v] + 1;
                        seen.push(w);
                        q.push_back(w);
                    }
                }
            }
            seen
        };
        let reset = |seen: &[usize], level: &mut Vec<usize>| seen.iter().for_each(|&v| level[v] = NONE);

        let comp = bfs(nodes[0], &mut level);
        if comp.len() < nodes.len() {
            // Disconnected: split into the found component and the rest.
            reset(&comp, &mut level);
            let marked: std::collections::HashSet<usize> = comp.iter().copied().collect();
            let rest: Vec<usize> = nodes.iter().copied().filter(|v| !marked.contains(v)).collect();
            stack.push(Job::Split(rest));
            stack.push(Job::Split(comp));
            continue;
        }
        // Pseudo-peripheral root: repeat BFS from the farthest node.
        let mut seen = comp;
        for _ in 0..3 {
            let far = *seen.iter().max_by_key(|&&v| level[v]).expect("non-empty");
            let depth = level[far];
            reset(&seen, &mut level);
            seen = bfs(far, &mut level);
            let new_depth = seen.iter().map(|&v| level[v]).max().unwrap_or(0);
            if new_depth <= depth {
                break;
            }
        }
        let depth = seen.iter().map(|&v| level[v]).max().unwrap_or(0);
        if depth < 2 {
            reset(&seen, &mut level);
            order.extend(nodes);
            continue;
        }
        let mut counts = vec![0usize; depth + 1];
        for &v in &seen {
            counts[level[v]] += 1;
        }
        let half = seen.len() / 2;
        let mut acc = 0;
        let mut cut = 1;
        for (l, c) in counts.iter().enumerate() {
            acc += c;
            if acc > half {
                cut = l.clamp(1, depth - 1);
                break;
            }
        }
        let mut left = Vec::new();
        let mut right = Vec::new();
        let mut sep = Vec::new();
        for &v in &seen {
            let l = level[v];
            if l < cut {
                left.push(v);
            } else if l > cut {
                right.push(v);
            } else if adj[v].iter().any(|&w| label[w] == id && level[w] == cut + 1) {
                sep.push(v);
            } else {
                left.push(v);
            }
        }
        reset(&seen, &mut level);
        stack.push(Job::Emit(sep));
        stack.push(Job::Split(right));
        stack.push(Job::Split(left));
    }
    order
}

/// Sparse Cholesky factor `P A P^T = L L^T`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    n: usize,
    perm: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

struct Symbolic {
    perm: Vec<usize>,
    upper_cols: Vec<Vec<(usize, f64)>>,
    parent: Vec<usize>,
    col_ptr: Vec<usize>,
}

fn symbolic(a: &SymmetricSparseMatrix) -> Symbolic {
    let n = a.dim();
    let perm = nested_dissection(a);
    let mut inv = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let upper_cols: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|k| {
            let mut col: Vec<(usize, f64)> = a
                .row(perm[k])
                .map(|(j, v)| (inv[j], v))
                .filter(|&(i, _)| i <= k)
                .collect();
            col.sort_by_key(|&(i, _)| i);
            col
        })
        .collect();
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for &(mut i, _) in &upper_cols[k] {
            while i != NONE && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    let mut counts = vec![1usize; n];
    let mut mark = vec![NONE; n];
    let mut stack = Vec::new();
    let mut pattern = Vec::new();
    for k in 0..n {
        ereach(&upper_cols[k], k, &parent, &mut mark, &mut stack, &mut pattern);
        for &i in &pattern {
            counts[i] += 1;
        }
    }
    let mut col_ptr = vec![0; n + 1];
    for i in 0..n {
        col_ptr[i + 1] = col_ptr[i] + counts[i];
    }
    Symbolic {
        perm,
        upper_cols,
        parent,
        col_ptr,
    }
}

/// Nonzero pattern of row `k` of `L`, excluding the diagonal, in topological order.
fn ereach(
    col: &[(usize, f64)],
    k: usize,
    parent: &[usize],
    mark: &mut [usize],
    stack: &mut Vec<usize>,
    pattern: &mut Vec<usize>,
) {
    pattern.clear();
    mark[k] = k;
    for &(i0, _) in col {
        let mut i = i0;
        stack.clear();
        while mark[i] != k {
            stack.push(i);
            mark[i] = k;
            i = parent[i];
        }
        while let Some(v) = stack.pop() {
            pattern.push(v);
        }
    }
    pattern.reverse();
}

/// Number of nonzeros `L` would have, without factorising.
pub fn predicted_fill(a: &SymmetricSparseMatrix) -> usize {
    *symbolic(a).col_ptr.last().unwrap_or(&0)
}

impl CholeskyFactor {
    pub fn factor(a: &SymmetricSparseMatrix) -> Result<Self> {
        let sym = symbolic(a);
        Self::numeric(sym)
    }

    fn numeric(sym: Symbolic) -> Result<Self> {
        let n = sym.perm.len();
        let nnz = sym.col_ptr[n];
        let mut row_idx = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];
        let mut next: Vec<usize> = sym.col_ptr[..n].to_vec();
        let mut x = vec![0.0; n];
        let mut mark = vec![NONE; n];
        let mut stack = Vec::new();
        let mut pattern = Vec::new();
        let scale = sym
            .upper_cols
            .iter()
            .flat_map(|c| c.iter().map(|&(_, v)| v.abs()))
            .fold(0.0f64, f64::max);
        for k in 0..n {
            let col = &sym.upper_cols[k];
            ereach(col, k, &sym.parent, &mut mark, &mut stack, &mut pattern);
            for &(i, v) in col {
                x[i] = v;
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &pattern {
                let lki = x[i] / values[sym.col_ptr[i]];
                x[i] = 0.0;
                for p in sym.col_ptr[i] + 1..next[i] {
                    x[row_idx[p]] -= values[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                row_idx[p] = k;
                values[p] = lki;
            }
            if !(d > 1e-14 * scale) {
                return Err(Error::NotPositiveDefinite {
                    row: sym.perm[k],
                    pivot: d,
                });
            }
            let p = next[k];
            next[k] += 1;
            row_idx[p] = k;
            values[p] = d.sqrt();
        }
        Ok(CholeskyFactor {
            n,
            perm: sym.perm,
            col_ptr: sym.col_ptr,
            row_idx,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for j in 0..self.n {
            let start = self.col_ptr[j];
            y[j] /= self.values[start];
            let yj = y[j];
            for p in start + 1..self.col_ptr[j + 1] {
                y[self.row_idx[p]] -= self.values[p] * yj;
            }
        }
        for j in (0..self.n).rev() {
            let start = self.col_ptr[j];
            let mut s = y[j];
            for p in start + 1..self.col_ptr[j + 1] {
                s -= self.values[p] * y[self.row_idx[p]];
            }
            y[j] = s / self.values[start];
        }
        let mut out = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = y[new];
        }
        out
    }
}

/// Conjugate gradients with diagonal preconditioning. Returns the solution and
/// the iteration count.
pub fn pcg(a: &SymmetricSparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)> {
    let n = a.dim();
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok((x, 0));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        a.matvec_into(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= tol * b_norm {
            return Ok((x, it));
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
    Err(Error::ConvergenceFailure {
        iterations: max_iter,
        worst_residual: dot(&r, &r).sqrt() / b_norm,
    })
}

/// SPD solver: a sparse Cholesky factor when its fill fits the budget,
/// otherwise preconditioned conjugate gradients.
#[derive(Debug, Clone)]
pub enum SpdSolver {
    Direct(CholeskyFactor),
    Iterative {
        matrix: SymmetricSparseMatrix,
        tol: f64,
        max_iter: usize,
    },
}

impl SpdSolver {
    /// Factorise when `nnz(L) <= max_fill`, else fall back to PCG with
    /// relative tolerance `cg_tol`.
    pub fn new(a: &SymmetricSparseMatrix, max_fill: usize, cg_tol: f64) -> Result<Self> {
        let sym = symbolic(a);
        if sym.col_ptr[a.dim()] <= max_fill {
            Ok(SpdSolver::Direct(CholeskyFactor::numeric(sym)?))
        } else {
            Ok(SpdSolver::Iterative {
                matrix: a.clone(),
                tol: cg_tol,
                max_iter: 20 * a.dim().max(100),
            })
        }
    }

    pub fn is_direct(&self) -> bool {
        matches!(self, SpdSolver::Direct(_))
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            SpdSolver::Direct(f) => Ok(f.solve(b)),
            SpdSolver::Iterative { matrix, tol, max_iter } => pcg(matrix, b, *tol, *max_iter).map(|r| r.0),
        }
    }

    /// Solve for several right-hand sides, in parallel under `exec`.
    pub fn solve_many(&self, rhs: &[Vec<f64>], exec: Exec) -> Result<Vec<Vec<f64>>> {
        exec.map(rhs, |b| self.solve(b)).into_iter().collect()
    }
}

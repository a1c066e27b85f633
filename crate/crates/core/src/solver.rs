//! Sparse storage, direct linear solves and the damped Newton driver.

use std::sync::Arc;

#[cfg(not(feature = "umfpack"))]
use faer::dyn_stack::{MemBuffer, MemStack};
#[cfg(not(feature = "umfpack"))]
use faer::sparse::linalg::lu::{factorize_symbolic_lu, NumericLu, SymbolicLu};
#[cfg(not(feature = "umfpack"))]
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
#[cfg(not(feature = "umfpack"))]
use faer::{Conj, Mat};

use crate::error::{Error, Result};

/// Compressed-column sparsity pattern with sorted row indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Pattern of a square `n x n` matrix holding the given `(row, col)`
    /// entries. Duplicates are merged.
    pub fn from_entries(n: usize, entries: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (r, c) in entries {
            if r >= n || c >= n {
                return Err(Error::InvalidArgument(format!("entry ({r}, {c}) outside a {n}x{n} matrix")));
            }
            cols[c].push(r);
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for mut rows in cols {
            rows.sort_unstable();
            rows.dedup();
            row_idx.extend(rows);
            col_ptr.push(row_idx.len());
        }
        Ok(Self { n, col_ptr, row_idx })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Index of `(row, col)` in the value array.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let (a, b) = (self.col_ptr[col], self.col_ptr[col + 1]);
        self.row_idx[a..b].binary_search(&row).ok().map(|k| a + k)
    }

    pub fn column(&self, col: usize) -> (&[usize], std::ops::Range<usize>) {
        let range = self.col_ptr[col]..self.col_ptr[col + 1];
        (&self.row_idx[range.clone()], range)
    }

    #[cfg(not(feature = "umfpack"))]
    fn faer_ref(&self) -> SymbolicSparseColMatRef<'_, usize> {
        SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.col_ptr, None, &self.row_idx)
    }
}

/// Square sparse matrix over a shared pattern.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub pattern: Arc<SparsityPattern>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(pattern: &Arc<SparsityPattern>) -> Self {
        Self {
            pattern: Arc::clone(pattern),
            values: vec![0.0; pattern.nnz()],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let pattern = Arc::new(SparsityPattern::from_entries(n, triplets.iter().map(|&(r, c, _)| (r, c)))?);
        let mut m = Self::zeros(&pattern);
        for &(r, c, v) in triplets {
            m.add(r, c, v);
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.pattern.n
    }

    /// Adds `v` at `(row, col)`; the entry must be in the pattern.
    pub fn add(&mut self, row: usize, col: usize, v: f64) {
        let k = self
            .pattern
            .position(row, col)
            .unwrap_or_else(|| panic!("({row}, {col}) not in sparsity pattern"));
        self.values[k] += v;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pattern.position(row, col).map_or(0.0, |k| self.values[k])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        for (c, &xc) in x.iter().enumerate().take(self.dim()) {
            let (rows, range) = self.pattern.column(c);
            for (&r, &v) in rows.iter().zip(&self.values[range]) {
                y[r] += v * xc;
            }
        }
        y
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        let mut rows = vec![0.0f64; self.dim()];
        for c in 0..self.dim() {
            let (idx, range) = self.pattern.column(c);
            for (&r, &v) in idx.iter().zip(&self.values[range]) {
                rows[r] += v.abs();
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    /// Replaces every flagged row by the corresponding identity row.
    pub fn set_identity_rows(&mut self, flagged: &[bool]) {
        for c in 0..self.dim() {
            let (idx, range) = self.pattern.column(c);
            let start = range.start;
            for (k, &r) in idx.iter().enumerate() {
                if flagged[r] {
                    self.values[start + k] = if r == c { 1.0 } else { 0.0 };
                }
            }
        }
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Sparse LU solver that keeps the symbolic factorisation of the last
/// pattern it saw.
#[derive(Default)]
pub struct LinearSolver {
    analysis: Option<(Arc<SparsityPattern>, Analysis)>,
}

#[cfg(feature = "umfpack")]
struct Analysis(crate::umfpack::Symbolic);

#[cfg(feature = "umfpack")]
impl Analysis {
    fn new(a: &SparseMatrix) -> Result<Self> {
        let p = &a.pattern;
        crate::umfpack::Symbolic::new(p.n, &p.col_ptr, &p.row_idx, &a.values).map(Self)
    }

    fn factor<'a>(&'a mut self, a: &'a SparseMatrix) -> Result<impl FnMut(&[f64]) -> Result<Vec<f64>> + 'a> {
        let sym = &self.0;
        let num = sym.factor(&a.values)?;
        Ok(move |b: &[f64]| sym.solve(&num, &a.values, b))
    }
}

#[cfg(not(feature = "umfpack"))]
struct Analysis {
    symbolic: SymbolicLu<usize>,
    numeric: NumericLu<usize, f64>,
}

#[cfg(not(feature = "umfpack"))]
impl Analysis {
    fn new(a: &SparseMatrix) -> Result<Self> {
        let symbolic = factorize_symbolic_lu(a.pattern.faer_ref(), Default::default())
            .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
        Ok(Self {
            symbolic,
            numeric: NumericLu::new(),
        })
    }

    fn factor<'a>(&'a mut self, a: &'a SparseMatrix) -> Result<impl FnMut(&[f64]) -> Result<Vec<f64>> + 'a> {
        let n = a.dim();
        let sym = &self.symbolic;
        let mat = SparseColMatRef::new(a.pattern.faer_ref(), &a.values);
        let par = faer::get_global_parallelism();
        let oom = |_| Error::LinearSolve("out of memory".into());
        let mut buf = MemBuffer::try_new(sym.factorize_numeric_lu_scratch::<f64>(par, Default::default())).map_err(oom)?;
        let lu = sym
            .factorize_numeric_lu(&mut self.numeric, mat, par, MemStack::new(&mut buf), Default::default())
            .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
        let mut solve_buf = MemBuffer::try_new(sym.solve_in_place_scratch::<f64>(1, par)).map_err(oom)?;
        Ok(move |b: &[f64]| {
            let mut x = Mat::from_fn(n, 1, |i, _| b[i]);
            lu.solve_in_place_with_conj(Conj::No, x.as_mut(), par, MemStack::new(&mut solve_buf));
            Ok((0..n).map(|i| x[(i, 0)]).collect())
        })
    }
}

impl LinearSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(&mut self, a: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = a.dim();
        if rhs.len() != n {
            return Err(Error::InvalidArgument(format!(
                "right-hand side has length {}, matrix is {n}x{n}",
                rhs.len()
            )));
        }
        let reuse = matches!(&self.analysis, Some((p, _)) if Arc::ptr_eq(p, &a.pattern) || **p == *a.pattern);
        if !reuse {
            self.analysis = Some((Arc::clone(&a.pattern), Analysis::new(a)?));
        }
        let (_, analysis) = self.analysis.as_mut().expect("analysis present");
        let mut lu_solve = analysis.factor(a)?;
        let mut x = lu_solve(rhs)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve("factorisation is singular".into()));
        }
        // one step of iterative refinement when the backward error is poor
        let bound = |x: &[f64]| 1e-10 * (a.norm_inf() * norm_inf(x) + norm_inf(rhs));
        let resid = |x: &[f64]| -> Vec<f64> { a.matvec(x).iter().zip(rhs).map(|(ax, b)| b - ax).collect() };
        let r = resid(&x);
        if norm_inf(&r) > bound(&x) {
            let dx = lu_solve(&r)?;
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
            let r2 = norm_inf(&resid(&x));
            if !r2.is_finite() {
                return Err(Error::LinearSolve("factorisation is singular".into()));
            }
            if r2 > bound(&x) {
                log::warn!("linear solve residual {r2:.3e} above backward-error bound {:.3e}", bound(&x));
            }
        }
        Ok(x)
    }
}

/// One-shot direct solve of `A x = rhs`.
pub fn sparse_direct_solve(a: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    LinearSolver::new().solve(a, rhs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub increment_tol: f64,
    pub max_iters: usize,
    pub max_halvings: usize,
    /// Smallest admissible nodal temperature as a fraction of the melting
    /// temperature.
    pub theta_floor_fraction: f64,
    /// Residual norms below this are accepted by the damping loop even if
    /// they do not decrease.
    pub residual_floor: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            increment_tol: 1e-8,
            max_iters: 30,
            max_halvings: 20,
            theta_floor_fraction: 1e-8,
            residual_floor: 1e-13,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub increment_norm: f64,
    pub residual_norm: f64,
    pub damping_events: usize,
    pub converged: bool,
}

/// A nonlinear system `R(x) = 0` as seen by [`newton_solve`].
pub trait NonlinearProblem {
    fn residual(&mut self, x: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&mut self, x: &[f64]) -> Result<SparseMatrix>;
    /// Cheap pre-check on a trial iterate, e.g. temperature positivity.
    fn admissible(&self, _x: &[f64]) -> bool {
        true
    }
}

fn is_positivity_error(e: &Error) -> bool {
    matches!(e, Error::PositivityViolation { .. } | Error::Domain(_))
}

/// Damped Newton iteration. The full step is taken when it keeps the iterate
/// admissible and decreases the residual; otherwise the step is halved.
pub fn newton_solve<P: NonlinearProblem>(
    problem: &mut P,
    x0: Vec<f64>,
    config: &NewtonConfig,
    linear: &mut LinearSolver,
) -> Result<(Vec<f64>, NewtonReport)> {
    if !(config.increment_tol > 0.0) {
        return Err(Error::InvalidArgument("increment tolerance must be positive".into()));
    }
    let mut x = x0;
    let mut r = problem.residual(&x)?;
    let mut report = NewtonReport {
        residual_norm: norm2(&r),
        increment_norm: f64::INFINITY,
        ..NewtonReport::default()
    };

    for iter in 1..=config.max_iters {
        report.iterations = iter;
        let jac = problem.jacobian(&x)?;
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = linear.solve(&jac, &rhs)?;
        let inc = norm2(&delta);
        report.increment_norm = inc;
        log::trace!("newton iter {iter}: |R| = {:.3e}, |dx| = {inc:.3e}", report.residual_norm);

        if inc < config.increment_tol {
            for (xi, d) in x.iter_mut().zip(&delta) {
                *xi += d;
            }
            match problem.residual(&x) {
                Ok(rn) => report.residual_norm = norm2(&rn),
                Err(e) if is_positivity_error(&e) => return Err(Error::PositivityFailure(Box::new(report))),
                Err(e) => return Err(e),
            }
            report.converged = true;
            return Ok((x, report));
        }

        let r_norm = report.residual_norm;
        let mut step = 1.0;
        let mut accepted: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
        for halving in 0..=config.max_halvings {
            if halving > 0 {
                step *= 0.5;
                report.damping_events += 1;
            }
            let trial: Vec<f64> = x.iter().zip(&delta).map(|(xi, d)| xi + step * d).collect();
            if !problem.admissible(&trial) {
                continue;
            }
            match problem.residual(&trial) {
                Ok(rt) => {
                    let n = norm2(&rt);
                    if n < r_norm || n <= config.residual_floor {
                        accepted = Some((trial, rt));
                        break;
                    }
                    if best.as_ref().is_none_or(|(b, _, _)| n < *b) {
                        best = Some((n, trial, rt));
                    }
                }
                Err(e) if is_positivity_error(&e) => continue,
                Err(e) => return Err(e),
            }
        }
        let (xn, rn) = match (accepted, best) {
            (Some(a), _) => a,
            (None, Some((_, t, rt))) => (t, rt),
            (None, None) => return Err(Error::PositivityFailure(Box::new(report))),
        };
        log::trace!("newton iter {iter}: step {step:e}");
        x = xn;
        r = rn;
        report.residual_norm = norm2(&r);
    }
    Err(Error::NonConvergence(Box::new(report)))
}

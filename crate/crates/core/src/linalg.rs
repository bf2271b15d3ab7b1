//! Truncated-SVD numerical rank, orthogonal projectors and the sparse linear
//! least-squares solver used by every identification routine.
//!
//! Everything here is real-valued; conjugate transposes become transposes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RrcError};

/// `H_delta(x)`: 1 when `x > delta`, 0 otherwise.
pub fn heaviside_delta(x: f64, delta: f64) -> usize {
    usize::from(x > delta)
}

/// Economy SVD `A = U * diag(S) * V` with singular values sorted in
/// non-increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    /// m x s, orthonormal columns.
    pub u: DMatrix<f64>,
    /// s = min(m, n) singular values, non-increasing.
    pub s: DVector<f64>,
    /// s x n, orthonormal rows.
    pub v: DMatrix<f64>,
}

impl SvdFactors {
    pub fn largest(&self) -> f64 {
        self.s.iter().copied().next().unwrap_or(0.0)
    }

    /// Number of singular values strictly above `delta`.
    pub fn rank_delta(&self, delta: f64) -> usize {
        self.s.iter().map(|&s| heaviside_delta(s, delta)).sum()
    }
}

/// Economy-sized SVD with sorted singular values.
pub fn svd(a: &DMatrix<f64>) -> Result<SvdFactors> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(RrcError::InvalidInput(format!("cannot decompose an empty {m}x{n} matrix")));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(RrcError::Decomposition("matrix has non-finite entries".into()));
    }
    let decomposition = faer::Mat::from_fn(m, n, |i, j| a[(i, j)])
        .thin_svd()
        .map_err(|e| RrcError::Decomposition(format!("{e:?}")))?;
    let (u, s_diag, v) = (decomposition.U(), decomposition.S().column_vector(), decomposition.V());
    let values: Vec<f64> = (0..s_diag.nrows()).map(|i| s_diag[i]).collect();

    let k = values.len();
    let mut order: Vec<usize> = (0..k).collect();
    // Stable, so equal singular values keep their relative order.
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));

    let s = DVector::from_iterator(k, order.iter().map(|&i| values[i].max(0.0)));
    let u = DMatrix::from_fn(m, k, |r, c| u[(r, order[c])]);
    let v = DMatrix::from_fn(k, n, |r, c| v[(c, order[r])]);
    Ok(SvdFactors { u, s, v })
}

/// `rk_delta(A)`: the number of singular values of `A` exceeding `delta`.
pub fn rank_delta(a: &DMatrix<f64>, delta: f64) -> Result<usize> {
    check_delta(delta)?;
    Ok(svd(a)?.rank_delta(delta))
}

/// Rank-`r` orthogonal projector onto the leading left singular subspace.
#[derive(Debug, Clone)]
pub struct TruncatedProjector {
    pub q: DMatrix<f64>,
    pub rank: usize,
    pub factors: SvdFactors,
}

/// `Q = sum_{j <= r} u_j u_j^T` with `r = rk_delta(A)`.
///
/// Fails with [`RrcError::RankZero`] when no singular value exceeds `delta`.
pub fn truncated_projector(a: &DMatrix<f64>, delta: f64) -> Result<TruncatedProjector> {
    check_delta(delta)?;
    let factors = svd(a)?;
    let rank = factors.rank_delta(delta);
    if rank == 0 {
        return Err(RrcError::RankZero { delta });
    }
    let u_r = factors.u.columns(0, rank);
    let q = &u_r * u_r.transpose();
    Ok(TruncatedProjector { q, rank, factors })
}

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_finite() && delta > 0.0 {
        Ok(())
    } else {
        Err(RrcError::InvalidInput(format!("delta must be positive and finite, got {delta}")))
    }
}

/// Parameters of the sparse least-squares solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Singular-value cutoff and convergence threshold.
    pub delta: f64,
    /// Iteration cap per column.
    pub max_iter: usize,
    /// Support-inclusion threshold. Zero keeps every nonzero coefficient.
    pub epsilon: f64,
}

impl SolverConfig {
    pub fn new(delta: f64, max_iter: usize, epsilon: f64) -> Result<Self> {
        let cfg = SolverConfig { delta, max_iter, epsilon };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_delta(self.delta)?;
        if self.max_iter == 0 {
            return Err(RrcError::InvalidInput("max_iter must be at least 1".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(RrcError::InvalidInput(format!(
                "epsilon must be finite and non-negative, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { delta: 1e-8, max_iter: 50, epsilon: 1e-8 }
    }
}

/// Output of [`sparse_lstsq`].
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSolution {
    /// n x p coefficients.
    pub x: DMatrix<f64>,
    /// `rk_delta(A)`; every column has at most this many nonzeros.
    pub rank: usize,
    pub nnz_per_column: Vec<usize>,
    pub iterations_per_column: Vec<usize>,
    /// False when a column hit the iteration cap without meeting `delta`.
    pub converged: Vec<bool>,
    /// `||A x_j - y_j||`.
    pub residual_norms: Vec<f64>,
    /// `||(I - Q) y_j||`, the part of each target outside the retained subspace.
    pub unexplained_norms: Vec<f64>,
}

impl SparseSolution {
    /// Right-hand side of the per-column residual guarantee
    /// `||A x - y|| <= ||x|| * sqrt(r (min(m, n) - r)) * delta + ||(I - Q) y||`.
    pub fn residual_bound(&self, column: usize, min_dim: usize, delta: f64) -> f64 {
        let r = self.rank as f64;
        let spread = (r * (min_dim - self.rank) as f64).sqrt();
        self.x.column(column).norm() * spread * delta + self.unexplained_norms[column]
    }

    pub fn nnz(&self) -> usize {
        self.nnz_per_column.iter().sum()
    }
}

/// Sparse least squares `A X ~= Y` by truncated-SVD projection followed by
/// greedy support refinement.
///
/// Each column starts from the `delta`-truncated pseudoinverse solution; the
/// support is the set of coefficients above `epsilon` (largest first, at most
/// `rk_delta(A)` of them), the projected problem is re-solved on that support
/// and the loop stops once the iterate moves by at most `delta` in the max
/// norm or after `max_iter` passes.
pub fn sparse_lstsq(a: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &SolverConfig) -> Result<SparseSolution> {
    cfg.validate()?;
    let (m, n) = a.shape();
    if y.nrows() != m {
        return Err(RrcError::DimensionMismatch {
            context: "sparse_lstsq right-hand side rows",
            expected: m,
            found: y.nrows(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(RrcError::InvalidInput("right-hand side has non-finite entries".into()));
    }
    let factors = svd(a)?;
    let rank = factors.rank_delta(cfg.delta);
    if rank == 0 {
        return Err(RrcError::RankZero { delta: cfg.delta });
    }

    let u_r = factors.u.columns(0, rank);
    let a_hat = u_r.transpose() * a;
    let y_hat = u_r.transpose() * y;
    let inv_s = DMatrix::from_diagonal(&factors.s.rows(0, rank).map(|s| 1.0 / s));
    let x_start = factors.v.rows(0, rank).transpose() * (inv_s * &y_hat);

    let p = y.ncols();
    let mut x = DMatrix::zeros(n, p);
    let mut nnz_per_column = Vec::with_capacity(p);
    let mut iterations_per_column = Vec::with_capacity(p);
    let mut converged = Vec::with_capacity(p);
    let mut residual_norms = Vec::with_capacity(p);
    let mut unexplained_norms = Vec::with_capacity(p);

    for j in 0..p {
        let target = y_hat.column(j).clone_owned();
        let (col, iterations, done) =
            refine_column(&a_hat, &target, x_start.column(j).clone_owned(), rank, cfg)?;
        nnz_per_column.push(col.iter().filter(|v| **v != 0.0).count());
        iterations_per_column.push(iterations);
        converged.push(done);
        residual_norms.push((a * &col - y.column(j)).norm());
        let y_j = y.column(j);
        unexplained_norms.push((y_j - &u_r * (u_r.transpose() * y_j)).norm());
        x.set_column(j, &col);
    }

    Ok(SparseSolution {
        x,
        rank,
        nnz_per_column,
        iterations_per_column,
        converged,
        residual_norms,
        unexplained_norms,
    })
}

fn refine_column(
    a_hat: &DMatrix<f64>,
    target: &DVector<f64>,
    start: DVector<f64>,
    rank: usize,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, usize, bool)> {
    let n = a_hat.ncols();
    let mut previous = start;
    let (mut order, mut support) = rank_support(&previous, cfg.epsilon, rank);
    let mut iterations = 0;
    let mut error = 1.0 + cfg.delta;

    while iterations < cfg.max_iter && error > cfg.delta {
        let restricted = a_hat.select_columns(order[..support].iter());
        let coeffs = min_norm_lstsq(&restricted, target)?;
        let mut next = DVector::zeros(n);
        for (k, &idx) in order[..support].iter().enumerate() {
            next[idx] = coeffs[k];
        }
        error = (&next - &previous).amax();
        previous = next;
        (order, support) = rank_support(&previous, cfg.epsilon, rank);
        iterations += 1;
    }
    Ok((previous, iterations, error <= cfg.delta))
}

/// Indices sorted by decreasing magnitude (ties by ascending index) and the
/// support size `min(max(#{|c| > epsilon}, 1), rank)`.
fn rank_support(c: &DVector<f64>, epsilon: f64, rank: usize) -> (Vec<usize>, usize) {
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&i, &j| c[j].abs().total_cmp(&c[i].abs()));
    let above: usize = c.iter().map(|v| heaviside_delta(v.abs(), epsilon)).sum();
    (order, above.max(1).min(rank))
}

/// Minimum-norm least-squares solution of `A x ~= b` through the SVD, with the
/// usual `max(m, n) * eps * s_1` cutoff.
pub fn min_norm_lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if b.iter().all(|v| *v == 0.0) {
        return Ok(DVector::zeros(a.ncols()));
    }
    let factors = svd(a)?;
    let cutoff = a.nrows().max(a.ncols()) as f64 * f64::EPSILON * factors.largest();
    let keep = factors.s.iter().filter(|&&s| s > cutoff).count();
    if keep == 0 {
        return Ok(DVector::zeros(a.ncols()));
    }
    let u_k = factors.u.columns(0, keep);
    let mut coeffs = u_k.transpose() * b;
    for (c, s) in coeffs.iter_mut().zip(factors.s.iter()) {
        *c /= *s;
    }
    Ok(factors.v.rows(0, keep).transpose() * coeffs)
}

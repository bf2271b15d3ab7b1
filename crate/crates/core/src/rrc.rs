//! Sparse regressive reservoir computers: training, one-step evaluation and
//! autoregressive rollout.
//!
//! A model maps the delay window `x_L(t)` through `eth_p`, compresses the
//! duplicated monomials and applies the sparse readout `W_hat`, producing the
//! next window `y_L(t)`. The selector then extracts one value per variable.

use nalgebra::{DMatrix, DVector};

use crate::compression::{compression_matrix, CompressionMatrix, CompressionParams};
use crate::embedding::{build_data_matrices, eth_map, EmbeddingConfig, TimeSeries};
use crate::error::{Result, RrcError};
use crate::linalg::{sparse_lstsq, SolverConfig};

/// Identifier of the pseudorandom generator feeding the compression sample.
pub const RNG_NAME: &str = "chacha8/rand_chacha-0.9";

/// Default divergence guard multiplier applied to the training data range.
pub const DEFAULT_GUARD_FACTOR: f64 = 1e6;

/// Picks entry `(j - 1) L + offset` of every variable block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectorMatrix {
    n: usize,
    lag: usize,
    offset: usize,
}

impl SelectorMatrix {
    /// `offset` is 1-based within each block: 1 is the oldest slot, `lag` the newest.
    pub fn new(n: usize, lag: usize, offset: usize) -> Result<Self> {
        if offset == 0 || offset > lag {
            return Err(RrcError::InvalidInput(format!(
                "selector offset must lie in [1, {lag}], got {offset}"
            )));
        }
        Ok(SelectorMatrix { n, lag, offset })
    }

    /// 0-based positions picked from a window of length `nL`.
    pub fn indices(&self) -> Vec<usize> {
        (0..self.n).map(|j| j * self.lag + self.offset - 1).collect()
    }

    pub fn apply(&self, dilated: &[f64]) -> Vec<f64> {
        self.indices().into_iter().map(|i| dilated[i]).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(self.n, self.n * self.lag);
        for (row, col) in self.indices().into_iter().enumerate() {
            k[(row, col)] = 1.0;
        }
        k
    }
}

/// Quantities recorded while training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingDiagnostics {
    /// `rk_delta(R H0)`.
    pub rank: usize,
    /// Nonzero entries of `W_hat`.
    pub nnz: usize,
    /// `||W_hat R H0 - H1||_F`.
    pub residual: f64,
    /// Residual divided by `||H1||_F`.
    pub relative_residual: f64,
    /// Per output row: residual and its guaranteed upper bound.
    pub row_residuals: Vec<f64>,
    pub row_bounds: Vec<f64>,
    /// Rows of `W_hat` that hit the iteration cap.
    pub unconverged_rows: usize,
    /// Training pairs (columns of `H0`).
    pub samples: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub nu: f64,
    pub rng: String,
    /// Per-variable extrema of the training inputs.
    pub data_min: Vec<f64>,
    pub data_max: Vec<f64>,
}

impl TrainingDiagnostics {
    /// Largest per-variable range of the training data, or the largest
    /// magnitude (at least 1) when every variable is constant.
    pub fn data_range(&self) -> f64 {
        let spread = self
            .data_min
            .iter()
            .zip(&self.data_max)
            .map(|(lo, hi)| hi - lo)
            .fold(0.0, f64::max);
        if spread > 0.0 {
            spread
        } else {
            self.data_min
                .iter()
                .chain(&self.data_max)
                .map(|v| v.abs())
                .fold(1.0, f64::max)
        }
    }
}

/// A trained sparse regressive reservoir computer.
#[derive(Debug, Clone, PartialEq)]
pub struct RrcModel {
    pub(crate) n: usize,
    pub(crate) embedding: EmbeddingConfig,
    pub(crate) selector_offset: usize,
    pub(crate) compression: CompressionMatrix,
    pub(crate) w_hat: DMatrix<f64>,
    pub(crate) diagnostics: TrainingDiagnostics,
}

/// Training settings beyond the embedding and the solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub embedding: EmbeddingConfig,
    pub solver: SolverConfig,
    /// Seed of the compression matrix sample.
    pub seed: u64,
    /// Scale of the compression matrix sample.
    pub nu: f64,
    /// Window slot exposed by the selector; defaults to the newest (`lag`).
    pub selector_offset: Option<usize>,
}

impl TrainOptions {
    pub fn new(embedding: EmbeddingConfig, solver: SolverConfig, seed: u64) -> Self {
        TrainOptions { embedding, solver, seed, nu: 1.0, selector_offset: None }
    }

    pub fn compression_params(&self) -> CompressionParams {
        CompressionParams {
            nu: self.nu,
            eps: crate::compression::default_eps(self.nu, self.embedding.order),
            seed: self.seed,
        }
    }
}

/// The reduced system `W (R H0) = H1` solved during training.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystem {
    pub compression: CompressionMatrix,
    /// `R H0`, rho x (T - L + 1).
    pub features: DMatrix<f64>,
    /// `H1`, nL x (T - L + 1).
    pub targets: DMatrix<f64>,
}

/// Build the compression matrix and the reduced data matrices.
pub fn reduced_system(x: &TimeSeries, y: &TimeSeries, opts: &TrainOptions) -> Result<ReducedSystem> {
    let emb = opts.embedding;
    let compression = compression_matrix(x.dim(), emb.lag, emb.order, &opts.compression_params())?;
    let data = build_data_matrices(x, y, &emb)?;
    let features = compression.compress_columns(&data.h0)?;
    Ok(ReducedSystem { compression, features, targets: data.h1 })
}

/// Train on paired series: `y_L(t) ~= W_hat R eth_p(x_L(t))`.
pub fn train_rrc(
    x: &TimeSeries,
    y: &TimeSeries,
    cfg: &EmbeddingConfig,
    solver: &SolverConfig,
    seed: u64,
) -> Result<RrcModel> {
    train_rrc_with(x, y, &TrainOptions::new(*cfg, *solver, seed))
}

pub fn train_rrc_with(x: &TimeSeries, y: &TimeSeries, opts: &TrainOptions) -> Result<RrcModel> {
    if x.len() <= opts.embedding.lag {
        return Err(RrcError::InvalidInput(format!(
            "need more than {} samples for lag {}, got {}",
            opts.embedding.lag,
            opts.embedding.lag,
            x.len()
        )));
    }
    let lag = opts.embedding.lag;
    let selector_offset = opts.selector_offset.unwrap_or(lag);
    SelectorMatrix::new(x.dim(), lag, selector_offset)?;
    opts.solver.validate()?;

    let system = reduced_system(x, y, opts)?;
    // Solve the transposed system so each row of W_hat is one solver column.
    let a = system.features.transpose();
    let rhs = system.targets.transpose();
    let solution = sparse_lstsq(&a, &rhs, &opts.solver)?;
    let w_hat = solution.x.transpose();

    let min_dim = a.nrows().min(a.ncols());
    let row_bounds = (0..rhs.ncols())
        .map(|j| solution.residual_bound(j, min_dim, opts.solver.delta))
        .collect();
    let residual = solution.residual_norms.iter().map(|r| r * r).sum::<f64>().sqrt();
    let target_norm = system.targets.norm();
    let relative_residual = if target_norm > 0.0 { residual / target_norm } else { residual };

    let values = x.values();
    let data_min = values.column_iter().map(|c| c.min()).collect();
    let data_max = values.column_iter().map(|c| c.max()).collect();

    let diagnostics = TrainingDiagnostics {
        rank: solution.rank,
        nnz: solution.nnz(),
        residual,
        relative_residual,
        row_residuals: solution.residual_norms.clone(),
        row_bounds,
        unconverged_rows: solution.converged.iter().filter(|c| !**c).count(),
        samples: a.nrows(),
        delta: opts.solver.delta,
        epsilon: opts.solver.epsilon,
        max_iter: opts.solver.max_iter,
        seed: opts.seed,
        nu: opts.nu,
        rng: RNG_NAME.to_string(),
        data_min,
        data_max,
    };

    Ok(RrcModel {
        n: x.dim(),
        embedding: opts.embedding,
        selector_offset,
        compression: system.compression,
        w_hat,
        diagnostics,
    })
}

/// Split a series into the one-step pairs `(x_t, x_{t+1})`.
pub fn autoregressive_pairs(x: &TimeSeries) -> Result<(TimeSeries, TimeSeries)> {
    let total = x.len();
    if total < 2 {
        return Err(RrcError::InvalidInput("autoregressive training needs at least 2 samples".into()));
    }
    Ok((x.slice(0, total - 1)?, x.slice(1, total)?))
}

/// Train with `y_t = x_{t+1}`.
pub fn train_autoregressive(
    x: &TimeSeries,
    cfg: &EmbeddingConfig,
    solver: &SolverConfig,
    seed: u64,
) -> Result<RrcModel> {
    train_autoregressive_with(x, &TrainOptions::new(*cfg, *solver, seed))
}

pub fn train_autoregressive_with(x: &TimeSeries, opts: &TrainOptions) -> Result<RrcModel> {
    if x.len() < opts.embedding.lag + 1 {
        return Err(RrcError::InvalidInput(format!(
            "autoregressive training with lag {} needs at least {} samples, got {}",
            opts.embedding.lag,
            opts.embedding.lag + 1,
            x.len()
        )));
    }
    let (inputs, targets) = autoregressive_pairs(x)?;
    train_rrc_with(&inputs, &targets, opts)
}

/// Output of [`RrcModel::transform`].
#[derive(Debug, Clone, PartialEq)]
pub struct Transformed {
    /// Predicted next window, length nL.
    pub dilated: Vec<f64>,
    /// One value per variable, length n.
    pub selected: Vec<f64>,
}

impl RrcModel {
    /// Assemble a model from parts, checking the shapes agree.
    pub fn from_parts(
        n: usize,
        embedding: EmbeddingConfig,
        selector_offset: usize,
        compression: CompressionMatrix,
        w_hat: DMatrix<f64>,
        diagnostics: TrainingDiagnostics,
    ) -> Result<Self> {
        SelectorMatrix::new(n, embedding.lag, selector_offset)?;
        if compression.n() != n || compression.lag() != embedding.lag || compression.order() != embedding.order {
            return Err(RrcError::Schema("compression parameters do not match the model".into()));
        }
        if w_hat.nrows() != n * embedding.lag {
            return Err(RrcError::DimensionMismatch {
                context: "W_hat rows",
                expected: n * embedding.lag,
                found: w_hat.nrows(),
            });
        }
        if w_hat.ncols() != compression.rows() {
            return Err(RrcError::DimensionMismatch {
                context: "W_hat columns",
                expected: compression.rows(),
                found: w_hat.ncols(),
            });
        }
        Ok(RrcModel { n, embedding, selector_offset, compression, w_hat, diagnostics })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lag(&self) -> usize {
        self.embedding.lag
    }

    pub fn order(&self) -> usize {
        self.embedding.order
    }

    pub fn embedding(&self) -> EmbeddingConfig {
        self.embedding
    }

    pub fn window_len(&self) -> usize {
        self.n * self.embedding.lag
    }

    pub fn selector_offset(&self) -> usize {
        self.selector_offset
    }

    pub fn selector(&self) -> SelectorMatrix {
        SelectorMatrix { n: self.n, lag: self.embedding.lag, offset: self.selector_offset }
    }

    /// Same readout with a different selector slot.
    pub fn with_selector_offset(mut self, offset: usize) -> Result<Self> {
        SelectorMatrix::new(self.n, self.embedding.lag, offset)?;
        self.selector_offset = offset;
        Ok(self)
    }

    pub fn compression(&self) -> &CompressionMatrix {
        &self.compression
    }

    /// Sparse readout, nL x rho.
    pub fn w_hat(&self) -> &DMatrix<f64> {
        &self.w_hat
    }

    /// Full coupling `W_hat R`, nL x d.
    pub fn coupling(&self) -> DMatrix<f64> {
        &self.w_hat * self.compression.to_dense()
    }

    pub fn diagnostics(&self) -> &TrainingDiagnostics {
        &self.diagnostics
    }

    /// One-step map of a window `x_L(t)` (blockwise, oldest first).
    pub fn transform(&self, window: &[f64]) -> Result<Transformed> {
        if window.len() != self.window_len() {
            return Err(RrcError::DimensionMismatch {
                context: "transform window",
                expected: self.window_len(),
                found: window.len(),
            });
        }
        let features = self.compression.compress(&eth_map(window, self.embedding.order)?)?;
        let dilated = &self.w_hat * DVector::from_vec(features);
        let dilated: Vec<f64> = dilated.iter().copied().collect();
        let selected = self.selector().apply(&dilated);
        Ok(Transformed { dilated, selected })
    }

    /// Iterated one-step prediction from `seed_window`, returning `horizon`
    /// predicted samples.
    pub fn forecast(&self, seed_window: &[f64], horizon: usize) -> Result<DMatrix<f64>> {
        self.forecast_guarded(seed_window, horizon, DEFAULT_GUARD_FACTOR)
    }

    /// As [`forecast`](Self::forecast) with the divergence guard set to
    /// `guard_factor` times the training data range.
    pub fn forecast_guarded(&self, seed_window: &[f64], horizon: usize, guard_factor: f64) -> Result<DMatrix<f64>> {
        if horizon == 0 {
            return Err(RrcError::InvalidInput("forecast horizon must be at least 1".into()));
        }
        if seed_window.len() != self.window_len() {
            return Err(RrcError::DimensionMismatch {
                context: "forecast seed window",
                expected: self.window_len(),
                found: seed_window.len(),
            });
        }
        let guard = guard_factor * self.diagnostics.data_range();
        let lag = self.embedding.lag;
        let mut window = seed_window.to_vec();
        let mut out = DMatrix::zeros(horizon, self.n);
        for step in 0..horizon {
            let next = self.transform(&window)?.selected;
            if let Some(&bad) = next.iter().find(|v| !v.is_finite() || v.abs() > guard) {
                return Err(RrcError::NumericBlowup { step: step + 1, value: bad.abs(), guard });
            }
            for (j, &value) in next.iter().enumerate() {
                let block = &mut window[j * lag..(j + 1) * lag];
                block.rotate_left(1);
                block[lag - 1] = value;
                out[(step, j)] = value;
            }
        }
        Ok(out)
    }
}

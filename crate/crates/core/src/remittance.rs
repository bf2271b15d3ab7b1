//! Remittance-to-deposit models and the exposure measure.
//!
//! Deposits `d(t)` of each institution are regressed on regional remittances
//! `r(t)` (non-lagged) or on `[r(t); r(t-1)]` (lagged) through a sparse
//! linear readout with a bias term. The exposure of institution `j` is the
//! root-mean-square fit error normalized by the largest observed deposit:
//!
//! ```text
//! E_j = sqrt(sum_t (dhat_j(t) - d_j(t))^2) / (sqrt(T + 1) * max_t |d_j(t)|)
//! ```

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embedding::{eth_map, TimeSeries};
use crate::error::{Result, RrcError};
use crate::linalg::{sparse_lstsq, SolverConfig};

/// Fraction of quarters used for fitting unless told otherwise.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct RemittancePanel {
    /// quarters x regions.
    remittances: DMatrix<f64>,
    /// quarters x institutions.
    deposits: DMatrix<f64>,
    period_labels: Vec<String>,
}

impl RemittancePanel {
    pub fn new(remittances: DMatrix<f64>, deposits: DMatrix<f64>) -> Result<Self> {
        if remittances.nrows() != deposits.nrows() {
            return Err(RrcError::DimensionMismatch {
                context: "remittance/deposit quarters",
                expected: remittances.nrows(),
                found: deposits.nrows(),
            });
        }
        if remittances.nrows() == 0 || remittances.ncols() == 0 || deposits.ncols() == 0 {
            return Err(RrcError::InvalidInput("panel needs at least one quarter, region and institution".into()));
        }
        if remittances.iter().chain(deposits.iter()).any(|v| !v.is_finite()) {
            return Err(RrcError::InvalidInput("panel values must be finite".into()));
        }
        let period_labels = (0..remittances.nrows()).map(|t| t.to_string()).collect();
        Ok(RemittancePanel { remittances, deposits, period_labels })
    }

    pub fn from_series(remittances: &TimeSeries, deposits: &TimeSeries) -> Result<Self> {
        let mut panel = RemittancePanel::new(remittances.values().clone(), deposits.values().clone())?;
        if let Some(times) = remittances.times() {
            panel.period_labels = times.iter().map(|t| t.to_string()).collect();
        }
        Ok(panel)
    }

    pub fn with_period_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.quarters() {
            return Err(RrcError::DimensionMismatch {
                context: "period labels",
                expected: self.quarters(),
                found: labels.len(),
            });
        }
        self.period_labels = labels;
        Ok(self)
    }

    pub fn quarters(&self) -> usize {
        self.remittances.nrows()
    }

    pub fn regions(&self) -> usize {
        self.remittances.ncols()
    }

    pub fn institutions(&self) -> usize {
        self.deposits.ncols()
    }

    pub fn remittances(&self) -> &DMatrix<f64> {
        &self.remittances
    }

    pub fn deposits(&self) -> &DMatrix<f64> {
        &self.deposits
    }

    pub fn period_labels(&self) -> &[String] {
        &self.period_labels
    }

    /// Copy with different deposits, e.g. perturbed or permuted.
    pub fn with_deposits(&self, deposits: DMatrix<f64>) -> Result<Self> {
        let mut panel = RemittancePanel::new(self.remittances.clone(), deposits)?;
        panel.period_labels = self.period_labels.clone();
        Ok(panel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    NonLagged,
    Lagged,
}

impl ModelKind {
    /// First quarter (0-based) with a complete feature vector.
    pub fn first_quarter(self) -> usize {
        match self {
            ModelKind::NonLagged => 0,
            ModelKind::Lagged => 1,
        }
    }

    fn min_quarters(self) -> usize {
        match self {
            ModelKind::NonLagged => 2,
            ModelKind::Lagged => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::NonLagged => "non-lagged",
            ModelKind::Lagged => "lagged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub solver: SolverConfig,
    pub train_fraction: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { solver: SolverConfig::new(1e-8, 50, 1e-8).expect("valid"), train_fraction: DEFAULT_TRAIN_FRACTION }
    }
}

/// Number of leading rows covered by `fraction` of `total`, rounded up.
pub fn train_rows(total: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(RrcError::InvalidInput(format!("train fraction must lie in (0, 1], got {fraction}")));
    }
    // Guard against 0.95 * 20 = 19.000000000000004 rounding up to 20.
    let rows = (fraction * total as f64 - 1e-9).ceil() as usize;
    Ok(rows.clamp(1, total))
}

/// Sparse linear readout from remittance features to deposits.
#[derive(Debug, Clone, PartialEq)]
pub struct RemittanceModel {
    pub kind: ModelKind,
    pub regions: usize,
    /// institutions x features; features are `[r(t); 1]` or `[r(t); r(t-1); 1]`.
    pub coefficients: DMatrix<f64>,
    /// Leading quarters used for fitting.
    pub train_rows: usize,
    /// `rk_delta` of the training feature matrix.
    pub rank: usize,
}

/// A nonzero coefficient of the readout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// 1-based institution.
    pub institution: usize,
    /// 1-based region, or `None` for the bias term.
    pub region: Option<usize>,
    /// 0 for `r(t)`, 1 for `r(t-1)`.
    pub lag: usize,
    pub weight: f64,
}

fn feature_row(panel: &RemittancePanel, kind: ModelKind, t: usize) -> Result<Vec<f64>> {
    let current = panel.remittances.row(t);
    let mut input: Vec<f64> = current.iter().copied().collect();
    if kind == ModelKind::Lagged {
        input.extend(panel.remittances.row(t - 1).iter());
    }
    eth_map(&input, 1)
}

impl RemittanceModel {
    pub fn institutions(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.coefficients.iter().filter(|v| **v != 0.0).count()
    }

    /// Fitted deposits for quarters `first_quarter()..quarters`.
    pub fn predict(&self, panel: &RemittancePanel) -> Result<DMatrix<f64>> {
        if panel.regions() != self.regions {
            return Err(RrcError::DimensionMismatch {
                context: "panel regions",
                expected: self.regions,
                found: panel.regions(),
            });
        }
        let first = self.kind.first_quarter();
        let rows = panel.quarters().saturating_sub(first);
        let mut out = DMatrix::zeros(rows, self.institutions());
        for k in 0..rows {
            let features = nalgebra::DVector::from_vec(feature_row(panel, self.kind, first + k)?);
            let fitted = &self.coefficients * features;
            out.row_mut(k).copy_from(&fitted.transpose());
        }
        Ok(out)
    }

    pub fn edges(&self) -> Vec<Edge> {
        let mut edges = Vec::new();
        let bias = self.coefficients.ncols() - 1;
        for i in 0..self.coefficients.nrows() {
            for c in 0..self.coefficients.ncols() {
                let weight = self.coefficients[(i, c)];
                if weight == 0.0 {
                    continue;
                }
                let (region, lag) = if c == bias {
                    (None, 0)
                } else {
                    (Some(c % self.regions + 1), c / self.regions)
                };
                edges.push(Edge { institution: i + 1, region, lag, weight });
            }
        }
        edges
    }
}

/// Fit `dhat(t) = M [r(t); 1]` on the leading training quarters.
pub fn fit_nonlagged(panel: &RemittancePanel, opts: &FitOptions) -> Result<RemittanceModel> {
    fit(panel, ModelKind::NonLagged, opts)
}

/// Fit `dhat(t) = M [r(t); r(t-1); 1]` on the leading training quarters.
pub fn fit_lagged(panel: &RemittancePanel, opts: &FitOptions) -> Result<RemittanceModel> {
    fit(panel, ModelKind::Lagged, opts)
}

pub fn fit(panel: &RemittancePanel, kind: ModelKind, opts: &FitOptions) -> Result<RemittanceModel> {
    let quarters = panel.quarters();
    if quarters < kind.min_quarters() {
        return Err(RrcError::InvalidInput(format!(
            "{} model needs at least {} quarters, got {quarters}",
            kind.name(),
            kind.min_quarters()
        )));
    }
    let rows = train_rows(quarters, opts.train_fraction)?;
    let first = kind.first_quarter();
    if rows <= first {
        return Err(RrcError::InvalidInput(format!(
            "train fraction {} leaves no complete {} training quarter",
            opts.train_fraction,
            kind.name()
        )));
    }
    let features: Vec<Vec<f64>> = (first..rows).map(|t| feature_row(panel, kind, t)).collect::<Result<_>>()?;
    let width = features[0].len();
    let a = DMatrix::from_fn(features.len(), width, |r, c| features[r][c]);
    let y = panel.deposits.rows(first, rows - first).clone_owned();
    let solution = sparse_lstsq(&a, &y, &opts.solver)?;
    Ok(RemittanceModel {
        kind,
        regions: panel.regions(),
        coefficients: solution.x.transpose(),
        train_rows: rows,
        rank: solution.rank,
    })
}

/// Exposure of every column of `observed` to the fit in `fitted`.
pub fn exposure(observed: &DMatrix<f64>, fitted: &DMatrix<f64>) -> Result<Vec<f64>> {
    if observed.shape() != fitted.shape() {
        return Err(RrcError::DimensionMismatch {
            context: "exposure rows",
            expected: observed.nrows(),
            found: fitted.nrows(),
        });
    }
    if observed.nrows() == 0 {
        return Err(RrcError::InvalidInput("no time steps to evaluate".into()));
    }
    let steps = observed.nrows() as f64;
    observed
        .column_iter()
        .zip(fitted.column_iter())
        .enumerate()
        .map(|(j, (obs, fit))| {
            let peak = obs.amax();
            if peak == 0.0 {
                return Err(RrcError::DegenerateChannel { channel: j + 1 });
            }
            let squares: f64 = fit.iter().zip(obs.iter()).map(|(f, o)| (f - o) * (f - o)).sum();
            Ok((squares / steps).sqrt() / peak)
        })
        .collect()
}

/// Which quarters enter the exposure measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalRange {
    /// Every quarter with a complete feature vector.
    #[default]
    All,
    /// Only the quarters after the training window.
    HeldOut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureReport {
    pub exposures: Vec<f64>,
    /// Fitted deposits over the evaluated quarters.
    pub fitted: DMatrix<f64>,
    /// Observed deposits over the same quarters.
    pub observed: DMatrix<f64>,
    /// 0-based quarter of the first evaluated row.
    pub first_quarter: usize,
    pub model_kind: ModelKind,
    pub train_fraction: f64,
}

/// Fit the chosen model and measure every institution's exposure.
pub fn analyze(
    panel: &RemittancePanel,
    kind: ModelKind,
    opts: &FitOptions,
    range: EvalRange,
) -> Result<(RemittanceModel, ExposureReport)> {
    let model = fit(panel, kind, opts)?;
    let fitted_all = model.predict(panel)?;
    let first = kind.first_quarter();
    let start = match range {
        EvalRange::All => first,
        EvalRange::HeldOut => model.train_rows,
    };
    if start >= panel.quarters() {
        return Err(RrcError::InvalidInput("no held-out quarters to evaluate".into()));
    }
    let count = panel.quarters() - start;
    let fitted = fitted_all.rows(start - first, count).clone_owned();
    let observed = panel.deposits.rows(start, count).clone_owned();
    let exposures = exposure(&observed, &fitted)?;
    let report = ExposureReport {
        exposures,
        fitted,
        observed,
        first_quarter: start,
        model_kind: kind,
        train_fraction: opts.train_fraction,
    };
    Ok((model, report))
}

/// The `k` largest exposures as `(1-based institution, exposure)`, ties
/// broken by the lower index.
pub fn rank_exposures(exposures: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
    if k == 0 || k > exposures.len() {
        return Err(RrcError::InvalidInput(format!(
            "k must lie in [1, {}], got {k}",
            exposures.len()
        )));
    }
    let mut order: Vec<usize> = (0..exposures.len()).collect();
    order.sort_by(|&a, &b| exposures[b].total_cmp(&exposures[a]));
    Ok(order.into_iter().take(k).map(|i| (i + 1, exposures[i])).collect())
}

/// Shape and randomness of a synthetic panel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub regions: usize,
    pub institutions: usize,
    pub quarters: usize,
    pub seed: u64,
    /// Relative magnitude of the Gaussian noise on remittances and deposits.
    pub noise_level: f64,
    /// Fraction of nonzero planted coefficients.
    pub density: f64,
    /// Plant a nonzero `r(t-1)` term.
    pub lagged: bool,
}

impl SynthSpec {
    pub fn new(regions: usize, institutions: usize, quarters: usize, seed: u64, noise_level: f64) -> Self {
        SynthSpec { regions, institutions, quarters, seed, noise_level, density: 0.3, lagged: true }
    }
}

/// A synthetic panel with its planted ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPanel {
    pub panel: RemittancePanel,
    /// institutions x regions coefficients on `r(t)`.
    pub m0: DMatrix<f64>,
    /// institutions x regions coefficients on `r(t-1)`; zero when not lagged.
    pub m1: DMatrix<f64>,
    pub bias: Vec<f64>,
}

/// Remittances follow drift plus a yearly (4-quarter) cycle plus noise;
/// deposits follow a planted sparse map of current and previous remittances.
pub fn synth_panel(regions: usize, institutions: usize, quarters: usize, seed: u64, noise_level: f64) -> Result<SynthPanel> {
    synth_panel_with(&SynthSpec::new(regions, institutions, quarters, seed, noise_level))
}

pub fn synth_panel_with(spec: &SynthSpec) -> Result<SynthPanel> {
    if spec.regions == 0 || spec.institutions == 0 || spec.quarters == 0 {
        return Err(RrcError::InvalidInput("panel counts must be at least 1".into()));
    }
    if !(spec.noise_level >= 0.0 && spec.noise_level.is_finite()) || !(0.0..=1.0).contains(&spec.density) {
        return Err(RrcError::InvalidInput("noise level must be >= 0 and density in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    // One extra leading quarter feeds r(t-1) at t = 0.
    let span = spec.quarters + 1;
    let mut full = DMatrix::zeros(span, spec.regions);
    for k in 0..spec.regions {
        let base = rng.random_range(5.0..20.0);
        let drift = rng.random_range(0.05..0.4);
        let amplitude = rng.random_range(0.3..2.0);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        for s in 0..span {
            let t = s as f64 - 1.0;
            let seasonal = amplitude * (std::f64::consts::FRAC_PI_2 * t + phase).sin();
            let noise = spec.noise_level * base * normal(&mut rng);
            full[(s, k)] = (base + drift * t + seasonal + noise).max(0.0);
        }
    }

    let planted = |rng: &mut ChaCha8Rng| {
        let mut m = DMatrix::zeros(spec.institutions, spec.regions);
        for i in 0..spec.institutions {
            for k in 0..spec.regions {
                if rng.random::<f64>() < spec.density {
                    m[(i, k)] = rng.random_range(0.1..1.0);
                }
            }
        }
        m
    };
    let mut m0 = planted(&mut rng);
    // Every institution gets at least one current-quarter driver.
    for i in 0..spec.institutions {
        if m0.row(i).iter().all(|v| *v == 0.0) {
            let k = rng.random_range(0..spec.regions);
            m0[(i, k)] = rng.random_range(0.1..1.0);
        }
    }
    let m1 = if spec.lagged { planted(&mut rng) } else { DMatrix::zeros(spec.institutions, spec.regions) };
    let bias: Vec<f64> = (0..spec.institutions).map(|_| rng.random_range(1.0..5.0)).collect();

    let mut deposits = DMatrix::zeros(spec.quarters, spec.institutions);
    for t in 0..spec.quarters {
        let now = full.row(t + 1).transpose();
        let before = full.row(t).transpose();
        let clean = &m0 * now + &m1 * before;
        for i in 0..spec.institutions {
            let value = clean[i] + bias[i];
            deposits[(t, i)] = value + spec.noise_level * value.abs() * normal(&mut rng);
        }
    }
    let remittances = full.rows(1, spec.quarters).clone_owned();
    let labels = (0..spec.quarters)
        .map(|t| format!("{}Q{}", 2017 + t / 4, t % 4 + 1))
        .collect();
    let panel = RemittancePanel::new(remittances, deposits)?.with_period_labels(labels)?;
    Ok(SynthPanel { panel, m0, m1, bias })
}

//! Sparse averaging matrix that merges duplicated Kronecker monomials.
//!
//! Every row of the matrix averages one group of feature positions, and the
//! groups partition the feature vector, so the matrix has exactly `d` nonzero
//! entries and its pseudoinverse simply broadcasts each row value back over
//! its group.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedding::{eth_map, feature_dim};
use crate::error::{Result, RrcError};

/// Parameters of the randomized construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionParams {
    /// Scale applied to the random generating sample.
    pub nu: f64,
    /// Two features are merged when their sample values differ by at most this.
    pub eps: f64,
    pub seed: u64,
}

impl CompressionParams {
    /// `nu = 1` with `eps = 1e-9 * max(1, nu^p)`.
    pub fn with_seed(seed: u64, order: usize) -> Self {
        let nu = 1.0;
        CompressionParams { nu, eps: default_eps(nu, order), seed }
    }
}

pub fn default_eps(nu: f64, order: usize) -> f64 {
    1e-9 * nu.powi(order as i32).max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionMatrix {
    n: usize,
    lag: usize,
    order: usize,
    cols: usize,
    /// 0-based feature positions averaged by each row.
    groups: Vec<Vec<usize>>,
}

impl CompressionMatrix {
    /// Rebuild from a stored partition, checking that it covers `0..cols`
    /// exactly once.
    pub fn from_groups(n: usize, lag: usize, order: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let cols = feature_dim(n * lag, order)?;
        let mut seen = vec![false; cols];
        for group in &groups {
            if group.is_empty() {
                return Err(RrcError::Schema("empty compression group".into()));
            }
            for &c in group {
                if c >= cols || std::mem::replace(&mut seen[c], true) {
                    return Err(RrcError::Schema(format!(
                        "compression column {c} is out of range or covered twice"
                    )));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(RrcError::Schema(format!("compression column {missing} is not covered")));
        }
        Ok(CompressionMatrix { n, lag, order, cols, groups })
    }

    /// Row count rho.
    pub fn rows(&self) -> usize {
        self.groups.len()
    }

    /// Column count `d = d_p(nL)`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nnz(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Row means over each group.
    pub fn compress(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.cols {
            return Err(RrcError::DimensionMismatch {
                context: "compress input",
                expected: self.cols,
                found: z.len(),
            });
        }
        Ok(self.groups.iter().map(|g| group_mean(g, |c| z[c])).collect())
    }

    /// Pseudoinverse application: each group position receives its row value.
    pub fn decompress(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.rows() {
            return Err(RrcError::DimensionMismatch {
                context: "decompress input",
                expected: self.rows(),
                found: w.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (group, &value) in self.groups.iter().zip(w) {
            for &c in group {
                out[c] = value;
            }
        }
        Ok(out)
    }

    /// `R * H` for a `d x k` matrix.
    pub fn compress_columns(&self, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if h.nrows() != self.cols {
            return Err(RrcError::DimensionMismatch {
                context: "compress_columns rows",
                expected: self.cols,
                found: h.nrows(),
            });
        }
        Ok(DMatrix::from_fn(self.rows(), h.ncols(), |i, k| {
            group_mean(&self.groups[i], |c| h[(c, k)])
        }))
    }

    /// Dense `rho x d` form.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut r = DMatrix::zeros(self.rows(), self.cols);
        for (i, group) in self.groups.iter().enumerate() {
            let weight = 1.0 / group.len() as f64;
            for &c in group {
                r[(i, c)] = weight;
            }
        }
        r
    }
}

fn group_mean(group: &[usize], value: impl Fn(usize) -> f64) -> f64 {
    group.iter().map(|&c| value(c)).sum::<f64>() / group.len() as f64
}

/// Sorted factor indices of every position of `eth_p` on an m-vector; the
/// trailing constant gets the empty multiset.
pub fn monomial_keys(m: usize, order: usize) -> Result<Vec<Vec<usize>>> {
    let dim = feature_dim(m, order)?;
    let mut keys = Vec::with_capacity(dim);
    for degree in 1..=order {
        let count = m.pow(degree as u32);
        for mut pos in 0..count {
            let mut key = vec![0; degree];
            for slot in key.iter_mut().rev() {
                *slot = pos % m;
                pos /= m;
            }
            key.sort_unstable();
            keys.push(key);
        }
    }
    keys.push(Vec::new());
    Ok(keys)
}

/// Deterministic grouping by equality of index multisets.
pub fn compression_matrix_exact(n: usize, lag: usize, order: usize) -> Result<CompressionMatrix> {
    check_params(n, lag, order)?;
    let keys = monomial_keys(n * lag, order)?;
    let mut first_seen: std::collections::HashMap<&[usize], usize> = Default::default();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (c, key) in keys.iter().enumerate() {
        match first_seen.get(key.as_slice()) {
            Some(&row) => groups[row].push(c),
            None => {
                first_seen.insert(key, groups.len());
                groups.push(vec![c]);
            }
        }
    }
    Ok(CompressionMatrix { n, lag, order, cols: keys.len(), groups })
}

/// Randomized construction: evaluate `eth_p` on a scaled standard-normal
/// sample (constant slot replaced by a fresh draw) and merge positions whose
/// values agree within `eps`, scanning in index order with the first position
/// as a singleton row.
///
/// The resulting partition is checked against the index-multiset grouping and
/// rejected with [`RrcError::GroupingDegenerate`] if they disagree.
pub fn compression_matrix(n: usize, lag: usize, order: usize, params: &CompressionParams) -> Result<CompressionMatrix> {
    check_params(n, lag, order)?;
    if !(params.nu.is_finite() && params.nu > 0.0 && params.eps.is_finite() && params.eps > 0.0) {
        return Err(RrcError::InvalidInput(format!(
            "nu and eps must be positive, got nu = {}, eps = {}",
            params.nu, params.eps
        )));
    }
    let sample = generating_sample(n * lag, order, params)?;
    let groups = greedy_groups(&sample, params.eps);

    let keys = monomial_keys(n * lag, order)?;
    for group in &groups {
        let leader = &keys[group[0]];
        if let Some(&bad) = group.iter().find(|&&c| &keys[c] != leader) {
            return Err(RrcError::GroupingDegenerate { column: bad + 1 });
        }
    }
    Ok(CompressionMatrix { n, lag, order, cols: sample.len(), groups })
}

/// `eth_p(nu * xhat)` with the last entry overwritten by another N(0, 1) draw.
pub fn generating_sample(m: usize, order: usize, params: &CompressionParams) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let y: Vec<f64> = (0..m)
        .map(|_| params.nu * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect::<Vec<f64>>();
    let mut sample = eth_map(&y, order)?;
    let alpha: f64 = StandardNormal.sample(&mut rng);
    if let Some(last) = sample.last_mut() {
        *last = alpha;
    }
    Ok(sample)
}

fn greedy_groups(sample: &[f64], eps: f64) -> Vec<Vec<usize>> {
    let d = sample.len();
    let mut assigned = vec![false; d];
    let mut groups = vec![vec![0]];
    assigned[0] = true;
    for j in 1..d {
        if assigned[j] {
            continue;
        }
        let group: Vec<usize> = (j..d)
            .filter(|&k| !assigned[k] && (sample[j] - sample[k]).abs() <= eps)
            .collect();
        for &k in &group {
            assigned[k] = true;
        }
        groups.push(group);
    }
    groups
}

/// Largest within-group spread of `sample` under the partition of `r`.
pub fn max_group_spread(r: &CompressionMatrix, sample: &[f64]) -> f64 {
    r.groups()
        .iter()
        .map(|g| {
            let (lo, hi) = g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| {
                (lo.min(sample[c]), hi.max(sample[c]))
            });
            hi - lo
        })
        .fold(0.0, f64::max)
}

fn check_params(n: usize, lag: usize, order: usize) -> Result<()> {
    if n == 0 || lag == 0 || order == 0 {
        return Err(RrcError::InvalidInput(format!(
            "n, lag and order must be positive, got n = {n}, lag = {lag}, order = {order}"
        )));
    }
    Ok(())
}

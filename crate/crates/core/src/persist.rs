//! Versioned JSON model files.
//!
//! ```json
//! {
//!   "format": "sparse-rrc-model",
//!   "schema_version": 1,
//!   "n": 3, "L": 2, "p": 2, "selector_offset": 2,
//!   "compression": { "rho": 28, "d": 43, "groups": [[0], [1], ...] },
//!   "W_hat": { "rows": 6, "cols": 28, "triplets": [[0, 3, 0.99], ...] },
//!   "diagnostics": { ... }
//! }
//! ```
//!
//! Group indices and triplet positions are 0-based. Floats are written in
//! shortest round-trip form, so a load reproduces every bit.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::compression::CompressionMatrix;
use crate::embedding::EmbeddingConfig;
use crate::error::{Result, RrcError};
use crate::rrc::{RrcModel, TrainingDiagnostics};

pub const MODEL_FORMAT: &str = "sparse-rrc-model";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    schema_version: u32,
    n: usize,
    #[serde(rename = "L")]
    lag: usize,
    p: usize,
    selector_offset: usize,
    compression: CompressionSection,
    #[serde(rename = "W_hat")]
    w_hat: SparseSection,
    diagnostics: DiagnosticsSection,
}

#[derive(Serialize, Deserialize)]
struct CompressionSection {
    rho: usize,
    d: usize,
    groups: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct SparseSection {
    rows: usize,
    cols: usize,
    triplets: Vec<(usize, usize, f64)>,
}

#[derive(Serialize, Deserialize)]
struct DiagnosticsSection {
    rank: usize,
    nnz: usize,
    residual: f64,
    relative_residual: f64,
    row_residuals: Vec<f64>,
    row_bounds: Vec<f64>,
    unconverged_rows: usize,
    samples: usize,
    delta: f64,
    epsilon: f64,
    max_iter: usize,
    seed: u64,
    nu: f64,
    rng: String,
    data_min: Vec<f64>,
    data_max: Vec<f64>,
}

/// Only the schema-identifying fields, read before the full document.
#[derive(Deserialize)]
struct Header {
    format: Option<String>,
    schema_version: Option<u32>,
}

pub fn model_to_json(model: &RrcModel) -> Result<String> {
    let d = model.diagnostics();
    let w = model.w_hat();
    let triplets = (0..w.ncols())
        .flat_map(|j| (0..w.nrows()).map(move |i| (i, j)))
        .filter(|&(i, j)| w[(i, j)] != 0.0)
        .map(|(i, j)| (i, j, w[(i, j)]))
        .collect::<Vec<_>>();
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        schema_version: SCHEMA_VERSION,
        n: model.n(),
        lag: model.lag(),
        p: model.order(),
        selector_offset: model.selector_offset(),
        compression: CompressionSection {
            rho: model.compression().rows(),
            d: model.compression().cols(),
            groups: model.compression().groups().to_vec(),
        },
        w_hat: SparseSection { rows: w.nrows(), cols: w.ncols(), triplets },
        diagnostics: DiagnosticsSection {
            rank: d.rank,
            nnz: d.nnz,
            residual: d.residual,
            relative_residual: d.relative_residual,
            row_residuals: d.row_residuals.clone(),
            row_bounds: d.row_bounds.clone(),
            unconverged_rows: d.unconverged_rows,
            samples: d.samples,
            delta: d.delta,
            epsilon: d.epsilon,
            max_iter: d.max_iter,
            seed: d.seed,
            nu: d.nu,
            rng: d.rng.clone(),
            data_min: d.data_min.clone(),
            data_max: d.data_max.clone(),
        },
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    Ok(text)
}

pub fn model_from_json(text: &str) -> Result<RrcModel> {
    let header: Header = serde_json::from_str(text)?;
    if header.format.as_deref() != Some(MODEL_FORMAT) {
        return Err(RrcError::Schema(format!(
            "not a model file: format field is {:?}, expected {MODEL_FORMAT:?}",
            header.format
        )));
    }
    match header.schema_version {
        Some(SCHEMA_VERSION) => {}
        Some(found) => return Err(RrcError::UnsupportedVersion { found, expected: SCHEMA_VERSION }),
        None => return Err(RrcError::Schema("missing schema_version".into())),
    }
    let file: ModelFile = serde_json::from_str(text)?;

    let compression = CompressionMatrix::from_groups(file.n, file.lag, file.p, file.compression.groups)?;
    if compression.rows() != file.compression.rho || compression.cols() != file.compression.d {
        return Err(RrcError::Schema("compression rho/d disagree with the groups".into()));
    }
    let mut w_hat = DMatrix::zeros(file.w_hat.rows, file.w_hat.cols);
    for (i, j, v) in file.w_hat.triplets {
        if i >= file.w_hat.rows || j >= file.w_hat.cols {
            return Err(RrcError::Schema(format!("W_hat triplet ({i}, {j}) out of bounds")));
        }
        w_hat[(i, j)] = v;
    }
    let d = file.diagnostics;
    let diagnostics = TrainingDiagnostics {
        rank: d.rank,
        nnz: d.nnz,
        residual: d.residual,
        relative_residual: d.relative_residual,
        row_residuals: d.row_residuals,
        row_bounds: d.row_bounds,
        unconverged_rows: d.unconverged_rows,
        samples: d.samples,
        delta: d.delta,
        epsilon: d.epsilon,
        max_iter: d.max_iter,
        seed: d.seed,
        nu: d.nu,
        rng: d.rng,
        data_min: d.data_min,
        data_max: d.data_max,
    };
    let embedding = EmbeddingConfig::new(file.lag, file.p)?;
    RrcModel::from_parts(file.n, embedding, file.selector_offset, compression, w_hat, diagnostics)
}

pub fn save_model(model: &RrcModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RrcModel> {
    model_from_json(&fs::read_to_string(path)?)
}

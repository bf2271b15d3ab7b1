//! Sparse reduced reservoir computing.
//!
//! A delay-embedded state is lifted through polynomial (Kronecker power)
//! features, compressed by merging duplicate monomials, and mapped to the next
//! state by a sparse readout found with a rank-revealing least-squares solver.
//! The crate also carries the nonlinear financial model used to generate test
//! orbits and a remittance-to-deposit exposure analysis built on the same
//! solver.

pub mod compression;
pub mod embedding;
pub mod error;
pub mod finance;
pub mod io;
pub mod lag;
pub mod linalg;
pub mod ode;
pub mod persist;
pub mod remittance;
pub mod rrc;

pub use compression::{compression_matrix, CompressionMatrix, CompressionParams};
pub use embedding::{delay_embed, eth_map, feature_dim, EmbeddingConfig, TimeSeries};
pub use error::{Result, RrcError};
pub use finance::{FinancialParams, SimulationGrid};
pub use lag::{suggest_lag, LagSuggestion};
pub use linalg::{rank_delta, sparse_lstsq, truncated_projector, SolverConfig, SparseSolution};
pub use persist::{load_model, save_model};
pub use remittance::{exposure, rank_exposures, ExposureReport, ModelKind, RemittanceModel, RemittancePanel};
pub use rrc::{train_autoregressive, train_rrc, RrcModel, TrainOptions, TrainingDiagnostics};

pub use nalgebra::{DMatrix, DVector};

//! Synthetic orbits of the three-variable nonlinear financial model
//!
//! ```text
//! x1' = x3 + (x2 - s) x1
//! x2' = 1 - c x2 - x1^2
//! x3' = -x1 - e x3
//! ```

use nalgebra::DMatrix;

use crate::embedding::TimeSeries;
use crate::error::{Result, RrcError};
use crate::ode::{integrate_dense, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinancialParams {
    /// Savings amount.
    pub s: f64,
    /// Cost per investment.
    pub c: f64,
    /// Demand elasticity.
    pub e: f64,
    pub x0: f64,
    pub y0: f64,
    pub z0: f64,
}

impl FinancialParams {
    /// `s = 3, c = 0.1, e = 1` from `(2, 3, 2)`.
    pub fn chaotic() -> Self {
        FinancialParams { s: 3.0, c: 0.1, e: 1.0, x0: 2.0, y0: 3.0, z0: 2.0 }
    }

    /// `s = 0.5, c = 0.1, e = 0.1` from `(1, 1, 1)`; settles onto a cycle.
    pub fn periodic() -> Self {
        FinancialParams { s: 0.5, c: 0.1, e: 0.1, x0: 1.0, y0: 1.0, z0: 1.0 }
    }

    pub fn initial_state(&self) -> [f64; 3] {
        [self.x0, self.y0, self.z0]
    }

    fn validate(&self) -> Result<()> {
        let all = [self.s, self.c, self.e, self.x0, self.y0, self.z0];
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(RrcError::InvalidInput("financial model parameters must be finite".into()))
        }
    }
}

/// Uniform output grid on `[0, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationGrid {
    pub t_end: f64,
    pub samples: usize,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for SimulationGrid {
    fn default() -> Self {
        SimulationGrid { t_end: 120.0, samples: 12_000, rtol: 1e-9, atol: 1e-11 }
    }
}

impl SimulationGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(RrcError::InvalidInput(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.samples < 2 {
            return Err(RrcError::InvalidInput(format!("need at least 2 samples, got {}", self.samples)));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(RrcError::InvalidInput("tolerances must be positive".into()));
        }
        Ok(())
    }

    /// `t_k = k * t_end / (samples - 1)`.
    pub fn times(&self) -> Vec<f64> {
        let last = (self.samples - 1) as f64;
        (0..self.samples).map(|k| k as f64 * self.t_end / last).collect()
    }
}

pub fn financial_rhs(state: &[f64; 3], params: &FinancialParams) -> [f64; 3] {
    let [x1, x2, x3] = *state;
    [x3 + (x2 - params.s) * x1, 1.0 - params.c * x2 - x1 * x1, -x1 - params.e * x3]
}

/// Integrate the model and sample it on the uniform grid.
pub fn integrate(params: &FinancialParams, grid: &SimulationGrid) -> Result<TimeSeries> {
    params.validate()?;
    grid.validate()?;
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let d = financial_rhs(&[y[0], y[1], y[2]], params);
        dy.copy_from_slice(&d);
    };
    let times = grid.times();
    let tol = Tolerances { rtol: grid.rtol, atol: grid.atol, ..Default::default() };
    let states = integrate_dense(&rhs, &params.initial_state(), &times, &tol)?;
    let values = DMatrix::from_fn(states.len(), 3, |t, j| states[t][j]);
    TimeSeries::new(values)?
        .with_times(times)?
        .with_labels(vec!["x1".into(), "x2".into(), "x3".into()])
}

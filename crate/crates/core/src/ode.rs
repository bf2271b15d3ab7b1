//! Dormand-Prince 5(4) embedded Runge-Kutta integrator with step-size control
//! and continuous (dense) output.

use crate::error::{Result, RrcError};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];

// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFETY: f64 = 0.9;
const MIN_SCALE: f64 = 0.2;
const MAX_SCALE: f64 = 10.0;

/// Adaptive step control settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Hard cap on attempted steps.
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rtol: 1e-9, atol: 1e-11, max_steps: 10_000_000 }
    }
}

/// Right-hand side `f(t, y, dydt)`.
pub trait Rhs {
    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]);
}

impl<F: Fn(f64, &[f64], &mut [f64])> Rhs for F {
    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        self(t, y, dydt)
    }
}

struct Stepper<'a, F: Rhs> {
    f: &'a F,
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
}

impl<'a, F: Rhs> Stepper<'a, F> {
    fn new(f: &'a F, dim: usize) -> Self {
        Stepper { f, k: std::array::from_fn(|_| vec![0.0; dim]), stage: vec![0.0; dim] }
    }

    /// One trial step from `(t, y)`; `k[0]` must already hold `f(t, y)`.
    /// Writes the fifth-order solution into `y_new` and the embedded error
    /// estimate into `err`; `k[6]` ends up as `f(t + h, y_new)`.
    fn trial(&mut self, t: f64, y: &[f64], h: f64, y_new: &mut [f64], err: &mut [f64]) {
        for s in 1..7 {
            for i in 0..y.len() {
                let mut acc = 0.0;
                for (j, a) in A[s].iter().enumerate().take(s) {
                    acc += a * self.k[j][i];
                }
                self.stage[i] = y[i] + h * acc;
            }
            self.f.eval(t + C[s] * h, &self.stage, &mut self.k[s]);
        }
        // The seventh stage is evaluated at the fifth-order solution.
        y_new.copy_from_slice(&self.stage);
        for i in 0..y.len() {
            err[i] = h * E.iter().zip(&self.k).map(|(e, k)| e * k[i]).sum::<f64>();
        }
    }

    fn dense_coefficients(&self, y: &[f64], y_new: &[f64], h: f64) -> [Vec<f64>; 5] {
        let dim = y.len();
        let mut cont: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; dim]);
        for i in 0..dim {
            let diff = y_new[i] - y[i];
            let bspl = h * self.k[0][i] - diff;
            cont[0][i] = y[i];
            cont[1][i] = diff;
            cont[2][i] = bspl;
            cont[3][i] = diff - h * self.k[6][i] - bspl;
            cont[4][i] = h * D.iter().zip(&self.k).map(|(d, k)| d * k[i]).sum::<f64>();
        }
        cont
    }
}

fn interpolate(cont: &[Vec<f64>; 5], theta: f64, out: &mut [f64]) {
    let theta1 = 1.0 - theta;
    for (i, o) in out.iter_mut().enumerate() {
        *o = cont[0][i]
            + theta * (cont[1][i] + theta1 * (cont[2][i] + theta * (cont[3][i] + theta1 * cont[4][i])));
    }
}

fn error_norm(y: &[f64], y_new: &[f64], err: &[f64], tol: &Tolerances) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y.iter().zip(y_new))
        .map(|(e, (a, b))| {
            let scale = tol.atol + tol.rtol * a.abs().max(b.abs());
            (e / scale).powi(2)
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

/// Integrate from `times[0]` and return the solution at every requested time
/// (non-decreasing) by dense-output interpolation.
pub fn integrate_dense<F: Rhs>(f: &F, y0: &[f64], times: &[f64], tol: &Tolerances) -> Result<Vec<Vec<f64>>> {
    if !(tol.rtol > 0.0 && tol.atol > 0.0) {
        return Err(RrcError::InvalidInput("tolerances must be positive".into()));
    }
    let Some((&t0, _)) = times.split_first() else {
        return Ok(Vec::new());
    };
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(RrcError::InvalidInput("output times must be non-decreasing".into()));
    }
    let t_end = *times.last().unwrap_or(&t0);
    let dim = y0.len();
    let mut out = Vec::with_capacity(times.len());
    let mut next_out = 0;
    while next_out < times.len() && times[next_out] <= t0 {
        out.push(y0.to_vec());
        next_out += 1;
    }
    let span = t_end - t0;
    if next_out == times.len() {
        return Ok(out);
    }

    let mut stepper = Stepper::new(f, dim);
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut y_new = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    f.eval(t, &y, &mut stepper.k[0]);
    let mut h = initial_step(f, t, &y, &stepper.k[0], tol).min(span);
    let h_min = 1e-12 * span.abs().max(f64::MIN_POSITIVE);
    let mut steps = 0;

    while next_out < times.len() {
        if steps >= tol.max_steps {
            return Err(RrcError::InvalidInput(format!(
                "step limit {} reached at t = {t}",
                tol.max_steps
            )));
        }
        steps += 1;
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        stepper.trial(t, &y, h, &mut y_new, &mut err);
        let norm = error_norm(&y, &y_new, &err, tol);
        if !norm.is_finite() {
            h *= MIN_SCALE;
            if h < h_min {
                return Err(RrcError::StepUnderflow { t, h });
            }
            continue;
        }
        let scale = if norm == 0.0 {
            MAX_SCALE
        } else {
            (SAFETY * norm.powf(-0.2)).clamp(MIN_SCALE, MAX_SCALE)
        };
        if norm <= 1.0 {
            let t_new = if last { t_end } else { t + h };
            let cont = stepper.dense_coefficients(&y, &y_new, h);
            while next_out < times.len() && times[next_out] <= t_new {
                let theta = ((times[next_out] - t) / h).clamp(0.0, 1.0);
                let mut value = vec![0.0; dim];
                if times[next_out] == t_new {
                    value.copy_from_slice(&y_new);
                } else {
                    interpolate(&cont, theta, &mut value);
                }
                out.push(value);
                next_out += 1;
            }
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            // First-same-as-last: the final stage is f at the new point.
            let (first, rest) = stepper.k.split_at_mut(6);
            first[0].copy_from_slice(&rest[0]);
            h *= scale.min(if last { 1.0 } else { MAX_SCALE });
        } else {
            h *= scale.min(1.0);
        }
        if h < h_min && next_out < times.len() {
            return Err(RrcError::StepUnderflow { t, h });
        }
    }
    Ok(out)
}

/// Fixed-step integration with the fifth-order Dormand-Prince weights.
pub fn integrate_fixed<F: Rhs>(f: &F, y0: &[f64], t0: f64, t_end: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(RrcError::InvalidInput("need at least one step".into()));
    }
    let dim = y0.len();
    let h = (t_end - t0) / steps as f64;
    let mut stepper = Stepper::new(f, dim);
    let mut y = y0.to_vec();
    let mut y_new = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    for step in 0..steps {
        let t = t0 + step as f64 * h;
        f.eval(t, &y, &mut stepper.k[0]);
        stepper.trial(t, &y, h, &mut y_new, &mut err);
        std::mem::swap(&mut y, &mut y_new);
    }
    Ok(y)
}

/// Starting step heuristic from Hairer, Norsett and Wanner.
fn initial_step<F: Rhs>(f: &F, t: f64, y: &[f64], f0: &[f64], tol: &Tolerances) -> f64 {
    let scale: Vec<f64> = y.iter().map(|v| tol.atol + tol.rtol * v.abs()).collect();
    let rms = |v: &[f64]| {
        (v.iter().zip(&scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len().max(1) as f64).sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    f.eval(t + h0, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so each verdict is printed even when the
//! run succeeds. Exits non-zero if any criterion fails.

use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_rrc::compression::{compression_matrix_exact, default_eps};
use sparse_rrc::embedding::delay_embed;
use sparse_rrc::finance::integrate;
use sparse_rrc::io::{matrix_to_series, write_series};
use sparse_rrc::persist::{model_from_json, model_to_json};
use sparse_rrc::remittance::{analyze, synth_panel_with, train_rows, EvalRange, FitOptions, SynthSpec};
use sparse_rrc::rrc::{autoregressive_pairs, reduced_system, train_autoregressive_with, RrcModel};
use sparse_rrc::{
    compression_matrix, eth_map, exposure, feature_dim, rank_delta, sparse_lstsq, CompressionParams, DMatrix,
    EmbeddingConfig, FinancialParams, ModelKind, SimulationGrid, SolverConfig, TimeSeries, TrainOptions,
};

type Check = Result<String, String>;

/// Round-off allowance for inequalities that are tight in exact arithmetic.
const ROUNDOFF: f64 = 1e-9;

/// Frozen thresholds: 1.5x the NRMSE of the dense minimum-norm readout on the
/// same features (L = 1, p = 3, seed 7), measured once.
const PERIODIC_NRMSE_LIMIT: [f64; 3] = [9.588e-3, 8.434e-3, 1.027e-2];
const CHAOTIC_NRMSE20_LIMIT: [f64; 3] = [1.144e-5, 6.892e-6, 3.181e-7];

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let u: f64 = rng.random_range(-1.0..1.0);
        let v: f64 = rng.random_range(-1.0..1.0);
        u + v
    })
}

/// Random matrix of rank at most `k` plus a perturbation of size `noise`.
fn low_rank(rng: &mut ChaCha8Rng, rows: usize, cols: usize, k: usize, noise: f64) -> DMatrix<f64> {
    let b = gaussian_matrix(rng, rows, k);
    let c = gaussian_matrix(rng, k, cols);
    b * c + gaussian_matrix(rng, rows, cols) * noise
}

/// Dense Moore-Penrose pseudoinverse with the default `max(m, n) * eps * s_1`
/// cutoff.
fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]).thin_svd().expect("svd");
    let p = svd.pseudoinverse();
    DMatrix::from_fn(p.nrows(), p.ncols(), |i, j| p[(i, j)])
}

fn criterion_1() -> Check {
    let mut rng = rng(101);
    let deltas = [1e-6, 1e-2, 0.5];
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let m = rng.random_range(1..=50);
        let n = rng.random_range(1..=50);
        let p = rng.random_range(1..=5);
        let k = rng.random_range(1..=m.min(n));
        let noise = [0.0, 1e-4, 1e-1][case % 3];
        let a = low_rank(&mut rng, m, n, k, noise);
        let y = gaussian_matrix(&mut rng, m, p);
        let delta = deltas[case % 3];
        let cfg = SolverConfig::new(delta, 50, 1e-12).map_err(|e| e.to_string())?;
        let sol = match sparse_lstsq(&a, &y, &cfg) {
            Ok(s) => s,
            Err(sparse_rrc::RrcError::RankZero { .. }) => continue,
            Err(e) => return Err(format!("case {case}: {e}")),
        };
        for j in 0..p {
            let residual = (&a * sol.x.column(j) - y.column(j)).norm();
            let bound = sol.residual_bound(j, m.min(n), delta);
            let allowed = bound + ROUNDOFF * (y.column(j).norm() + 1.0);
            if residual > allowed {
                return Err(format!("case {case} column {j}: residual {residual:e} > bound {bound:e}"));
            }
            if sol.nnz_per_column[j] > sol.rank {
                return Err(format!("case {case} column {j}: nnz {} > rank {}", sol.nnz_per_column[j], sol.rank));
            }
            worst = worst.max(residual / allowed);
        }
    }
    Ok(format!("200 instances, max residual/bound = {worst:.3}"))
}

fn criterion_2() -> Check {
    let mut rng = rng(202);
    for case in 0..100 {
        let m = rng.random_range(1..=30);
        let n = rng.random_range(1..=30);
        let k = rng.random_range(0..=m.min(n));
        let a = if k == 0 { DMatrix::zeros(m, n) } else { low_rank(&mut rng, m, n, k, 0.0) };
        let delta = [1e-8, 1e-4, 0.1, 1.0][case % 4];
        let r = rank_delta(&a, delta).map_err(|e| e.to_string())?;
        let rt = rank_delta(&a.transpose(), delta).map_err(|e| e.to_string())?;
        if r != rt {
            return Err(format!("case {case}: rank {r} != transpose rank {rt}"));
        }
        if r > k {
            return Err(format!("case {case}: rank_delta {r} exceeds exact rank {k}"));
        }
    }
    Ok("100 matrices, transpose-invariant and bounded by the exact rank".into())
}

fn criterion_3() -> Check {
    let mut rng = rng(303);
    let shapes = [(2, 1, 2), (2, 1, 3), (3, 1, 2), (1, 3, 2), (3, 2, 2)];
    let mut worst_greedy: f64 = 0.0;
    let mut worst_exact: f64 = 0.0;
    for (n, lag, order) in shapes {
        let params = CompressionParams::with_seed(1, order);
        let eps_group = default_eps(params.nu, order);
        let greedy = compression_matrix(n, lag, order, &params).map_err(|e| e.to_string())?;
        let exact = compression_matrix_exact(n, lag, order).map_err(|e| e.to_string())?;
        let d = feature_dim(n * lag, order).map_err(|e| e.to_string())?;
        for _ in 0..200 {
            let x: Vec<f64> = (0..n * lag).map(|_| rng.random_range(-2.0..2.0)).collect();
            let z = eth_map(&x, order).map_err(|e| e.to_string())?;
            for (matrix, worst, limit) in [
                (&greedy, &mut worst_greedy, (d as f64).sqrt() * eps_group),
                (&exact, &mut worst_exact, 1e-12),
            ] {
                let back = matrix.decompress(&matrix.compress(&z).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
                let err = back.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                if err > limit {
                    return Err(format!("(n, L, p) = ({n}, {lag}, {order}): error {err:e} > {limit:e}"));
                }
                *worst = worst.max(err);
            }
        }
    }
    Ok(format!("1000 points, max error greedy {worst_greedy:.1e}, exact {worst_exact:.1e}"))
}

fn criterion_4() -> Check {
    let mut rng = rng(404);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let n = rng.random_range(1..=3);
        let lag = rng.random_range(1..=(8 / n).min(3));
        let order = rng.random_range(1..=2);
        let len = rng.random_range(15..60);
        let delta = [1e-8, 1e-4, 1e-2, 1e-1][case % 4];
        let mut state: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut rows = Vec::with_capacity(len);
        for _ in 0..len {
            rows.push(state.clone());
            state = state
                .iter()
                .enumerate()
                .map(|(j, v)| 0.8 * v - 0.3 * state[(j + 1) % n].powi(2) + 0.05 * rng.random_range(-1.0..1.0))
                .collect();
        }
        let series = TimeSeries::from_rows(&rows).map_err(|e| e.to_string())?;
        let embedding = EmbeddingConfig::new(lag, order).map_err(|e| e.to_string())?;
        // Keep every coefficient up to the rank so each row uses r terms.
        let solver = SolverConfig::new(delta, 50, 0.0).map_err(|e| e.to_string())?;
        let opts = TrainOptions::new(embedding, solver, case as u64);
        let model = train_autoregressive_with(&series, &opts).map_err(|e| format!("case {case}: {e}"))?;
        let (x, y) = autoregressive_pairs(&series).map_err(|e| e.to_string())?;
        let system = reduced_system(&x, &y, &opts).map_err(|e| e.to_string())?;
        let features = &system.features;
        let w_bar = &system.targets * pinv(features);

        let r = model.diagnostics().rank as f64;
        let min_dim = features.nrows().min(features.ncols()) as f64;
        let nl = (n * lag) as f64;
        let dense_fit = &w_bar * features;
        let bound = (nl * (min_dim - r)).sqrt() * (r.sqrt() * model.w_hat().norm() + w_bar.norm()) * delta
            + ROUNDOFF * (dense_fit.norm() + 1.0);
        let gap = (model.w_hat() * features - dense_fit).norm();
        if gap > bound {
            return Err(format!("case {case}: ||W R H0 - Wbar R H0|| = {gap:e} > {bound:e}"));
        }
        worst = worst.max(gap / bound);
    }
    Ok(format!("20 problems, max gap/bound = {worst:.3}"))
}

fn criterion_5() -> Check {
    let mut rng = rng(505);
    let mut worst_map: f64 = 0.0;
    let mut worst_orbit: f64 = 0.0;
    for case in 0..10 {
        let n = rng.random_range(1..=4);
        let raw = gaussian_matrix(&mut rng, n, n);
        let norm = raw.clone().svd(false, false).singular_values.max();
        let a = raw * (0.9 / norm);
        let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut rows = Vec::new();
        for _ in 0..40 {
            rows.push(x.clone());
            x = (&a * sparse_rrc::DVector::from_vec(x)).iter().copied().collect();
        }
        let series = TimeSeries::from_rows(&rows).map_err(|e| e.to_string())?;
        let opts = TrainOptions::new(
            EmbeddingConfig::new(1, 1).map_err(|e| e.to_string())?,
            SolverConfig::new(1e-12, 50, 0.0).map_err(|e| e.to_string())?,
            case,
        );
        let model = train_autoregressive_with(&series, &opts).map_err(|e| format!("case {case}: {e}"))?;
        let (xs, ys) = autoregressive_pairs(&series).map_err(|e| e.to_string())?;
        let system = reduced_system(&xs, &ys, &opts).map_err(|e| e.to_string())?;
        let w_bar = &system.targets * pinv(&system.features);
        let map_gap = (model.w_hat() - &w_bar).norm();
        if map_gap > 1e-8 {
            return Err(format!("case {case}: learned map differs from dense by {map_gap:e}"));
        }
        let start = rows.last().unwrap().clone();
        let predicted = model.forecast(&start, 50).map_err(|e| e.to_string())?;
        let mut state = sparse_rrc::DVector::from_vec(start);
        for step in 0..50 {
            state = &a * state;
            let err = (predicted.row(step).transpose() - &state).amax();
            if err > 1e-6 {
                return Err(format!("case {case} step {}: orbit error {err:e}", step + 1));
            }
            worst_orbit = worst_orbit.max(err);
        }
        worst_map = worst_map.max(map_gap);
    }
    Ok(format!("10 systems, map gap {worst_map:.1e}, orbit error {worst_orbit:.1e}"))
}

struct Reproduction {
    series: TimeSeries,
    train_rows: usize,
    sparse: RrcModel,
    dense: RrcModel,
    dense_relative_residual: f64,
    slack: f64,
}

fn reproduce(params: FinancialParams, fraction: f64) -> Result<Reproduction, String> {
    let series = integrate(&params, &SimulationGrid::default()).map_err(|e| e.to_string())?;
    let rows = train_rows(series.len(), fraction).map_err(|e| e.to_string())?;
    let train = series.slice(0, rows).map_err(|e| e.to_string())?;
    let delta = 1e-8;
    let opts = TrainOptions::new(
        EmbeddingConfig::new(1, 3).map_err(|e| e.to_string())?,
        SolverConfig::new(delta, 50, delta).map_err(|e| e.to_string())?,
        7,
    );
    let sparse = train_autoregressive_with(&train, &opts).map_err(|e| e.to_string())?;
    let (x, y) = autoregressive_pairs(&train).map_err(|e| e.to_string())?;
    let system = reduced_system(&x, &y, &opts).map_err(|e| e.to_string())?;
    let w_bar = &system.targets * pinv(&system.features);
    let targets = system.targets.norm();
    let dense_relative_residual = (&w_bar * &system.features - &system.targets).norm() / targets;

    let r = sparse.diagnostics().rank as f64;
    let min_dim = system.features.nrows().min(system.features.ncols()) as f64;
    let slack = ((3.0 * (min_dim - r)).sqrt() * (r.sqrt() * sparse.w_hat().norm() + w_bar.norm()) * delta
        + ROUNDOFF * targets)
        / targets;
    let dense = RrcModel::from_parts(
        sparse.n(),
        sparse.embedding(),
        sparse.selector_offset(),
        sparse.compression().clone(),
        w_bar,
        sparse.diagnostics().clone(),
    )
    .map_err(|e| e.to_string())?;
    Ok(Reproduction { series, train_rows: rows, sparse, dense, dense_relative_residual, slack })
}

fn validation(rep: &Reproduction, horizon: usize) -> DMatrix<f64> {
    rep.series.values().rows(rep.train_rows, horizon).clone_owned()
}

fn criterion_6() -> Check {
    let rep = reproduce(FinancialParams::periodic(), 0.0667)?;
    let horizon = rep.series.len() - rep.train_rows;
    let seed = delay_embed(&rep.series, 1, rep.train_rows).map_err(|e| e.to_string())?;
    let predicted = rep.sparse.forecast(&seed, horizon).map_err(|e| format!("rollout: {e}"))?;
    let scores = exposure(&validation(&rep, horizon), &predicted).map_err(|e| e.to_string())?;
    for (j, (e, limit)) in scores.iter().zip(PERIODIC_NRMSE_LIMIT).enumerate() {
        if *e > limit {
            return Err(format!("channel x{}: NRMSE {e:.4e} > {limit:.4e}", j + 1));
        }
    }
    Ok(format!(
        "train {} rows, forecast {horizon} steps, NRMSE [{:.2e}, {:.2e}, {:.2e}]",
        rep.train_rows, scores[0], scores[1], scores[2]
    ))
}

fn criterion_7() -> Check {
    let rep = reproduce(FinancialParams::chaotic(), 0.5)?;
    let d = rep.sparse.diagnostics();
    if d.relative_residual > rep.dense_relative_residual + rep.slack {
        return Err(format!(
            "(a) relative residual {:e} > dense {:e} + slack {:e}",
            d.relative_residual, rep.dense_relative_residual, rep.slack
        ));
    }

    let seed = delay_embed(&rep.series, 1, rep.train_rows).map_err(|e| e.to_string())?;
    let rollout = rep.sparse.forecast(&seed, 1000).map_err(|e| format!("(b) rollout: {e}"))?;
    for j in 0..3 {
        let (lo, hi) = (d.data_min[j], d.data_max[j]);
        let (mid, range) = ((lo + hi) / 2.0, hi - lo);
        let outside = rollout.column(j).iter().copied().find(|v| (v - mid).abs() > range);
        if let Some(v) = outside {
            return Err(format!("(b) channel x{}: {v} leaves twice the training range [{lo}, {hi}]", j + 1));
        }
    }

    let short = exposure(&validation(&rep, 20), &rollout.rows(0, 20).clone_owned()).map_err(|e| e.to_string())?;
    for (j, (e, limit)) in short.iter().zip(CHAOTIC_NRMSE20_LIMIT).enumerate() {
        if *e > limit {
            return Err(format!("(c) channel x{}: 20-step NRMSE {e:.4e} > {limit:.4e}", j + 1));
        }
    }
    // The frozen limits should keep tracking the dense readout they came from.
    let dense = rep.dense.forecast(&seed, 20).map_err(|e| e.to_string())?;
    let dense_short = exposure(&validation(&rep, 20), &dense).map_err(|e| e.to_string())?;
    Ok(format!(
        "residual {:.2e} (dense {:.2e}), 20-step NRMSE [{:.2e}, {:.2e}, {:.2e}] (dense [{:.2e}, {:.2e}, {:.2e}])",
        d.relative_residual,
        rep.dense_relative_residual,
        short[0],
        short[1],
        short[2],
        dense_short[0],
        dense_short[1],
        dense_short[2]
    ))
}

fn criterion_8() -> Check {
    let mut worst: f64 = 0.0;
    for (lagged, kind) in [(false, ModelKind::NonLagged), (true, ModelKind::Lagged)] {
        for seed in 0..5 {
            let spec = SynthSpec { lagged, ..SynthSpec::new(18, 15, 24, seed, 0.0) };
            let synth = synth_panel_with(&spec).map_err(|e| e.to_string())?;
            let (_, report) =
                analyze(&synth.panel, kind, &FitOptions::default(), EvalRange::All).map_err(|e| e.to_string())?;
            for (j, e) in report.exposures.iter().enumerate() {
                if *e > 1e-8 {
                    return Err(format!("{} seed {seed}: institution {} exposure {e:e}", kind.name(), j + 1));
                }
                worst = worst.max(*e);
            }
        }
    }

    let obs = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 3.0, 5.0, 2.0, 4.0]);
    if exposure(&obs, &obs).map_err(|e| e.to_string())? != vec![0.0, 0.0] {
        return Err("perfect fit must give zero exposure".into());
    }
    let peaks = [3.0, 5.0];
    let shifted = DMatrix::from_fn(3, 2, |t, j| obs[(t, j)] + peaks[j]);
    if exposure(&obs, &shifted).map_err(|e| e.to_string())? != vec![1.0, 1.0] {
        return Err("shift by the peak must give exposure 1".into());
    }
    let single = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
    let fit = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
    if exposure(&single, &fit).map_err(|e| e.to_string())?[0] != 0.5f64.sqrt() {
        return Err("[1, 2] vs [1, 0] must give 1/sqrt(2)".into());
    }
    Ok(format!("10 planted panels, max exposure {worst:.1e}; formula examples exact"))
}

fn run_cli(args: &[&str], dir: &Path) -> Result<Output, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sparse-rrc"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out)
}

fn pipeline(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let synth = synth_panel_with(&SynthSpec::new(18, 15, 24, 9, 0.01)).map_err(|e| e.to_string())?;
    let remittances = matrix_to_series(synth.panel.remittances(), "r").map_err(|e| e.to_string())?;
    let deposits = matrix_to_series(synth.panel.deposits(), "d").map_err(|e| e.to_string())?;
    write_series(&remittances, dir.join("r.csv")).map_err(|e| e.to_string())?;
    write_series(&deposits, dir.join("d.csv")).map_err(|e| e.to_string())?;

    let steps: [&[&str]; 5] = [
        &["simulate", "--regime", "chaotic", "--samples", "3000", "--t-end", "30", "--out", "orbit.csv"],
        &["train", "--input", "orbit.csv", "--lag", "1", "--order", "3", "--train-frac", "0.5", "--seed", "3", "--out", "model.json"],
        &["forecast", "--model", "model.json", "--seed-data", "orbit.csv", "--seed-end", "1500", "--horizon", "200", "--truth", "orbit.csv", "--truth-offset", "1500", "--out", "forecast.csv"],
        &["exposure", "--remittances", "r.csv", "--deposits", "d.csv", "--lagged", "--out", "exposure.csv", "--fitted", "fitted.csv"],
        &["suggest-lag", "--input", "orbit.csv"],
    ];
    let mut outputs = Vec::new();
    for step in steps {
        let out = run_cli(step, dir)?;
        outputs.push((format!("{} stdout", step[0]), out.stdout));
    }
    for file in ["orbit.csv", "model.json", "forecast.csv", "exposure.csv", "exposure.adjacency.csv", "fitted.csv"] {
        outputs.push((file.to_string(), std::fs::read(dir.join(file)).map_err(|e| format!("{file}: {e}"))?));
    }
    Ok(outputs)
}

fn criterion_9() -> Check {
    let first = tempfile::tempdir().map_err(|e| e.to_string())?;
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = pipeline(first.path())?;
    let b = pipeline(second.path())?;
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        if x != y {
            return Err(format!("{name} differs between identical runs"));
        }
    }

    let text = String::from_utf8(a.iter().find(|(n, _)| n == "model.json").unwrap().1.clone()).unwrap();
    let model = model_from_json(&text).map_err(|e| e.to_string())?;
    if model_to_json(&model).map_err(|e| e.to_string())? != text {
        return Err("model file does not re-serialize identically".into());
    }
    let series = sparse_rrc::io::read_series(first.path().join("orbit.csv")).map_err(|e| e.to_string())?;
    let reloaded = model_from_json(&model_to_json(&model).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    for t in [2, 100, 2999] {
        let window = delay_embed(&series, model.lag(), t).map_err(|e| e.to_string())?;
        let before = model.transform(&window).map_err(|e| e.to_string())?;
        let after = reloaded.transform(&window).map_err(|e| e.to_string())?;
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        if bits(&before.dilated) != bits(&after.dilated) {
            return Err(format!("transform at t = {t} changed after reload"));
        }
    }
    Ok(format!("{} outputs byte-identical across reruns; reload bit-exact", a.len()))
}

fn main() {
    let criteria: [(u32, &str, Duration, fn() -> Check); 9] = [
        (1, "sparse solver residual bound", Duration::from_secs(30), criterion_1),
        (2, "rank_delta transpose invariance", Duration::from_secs(5), criterion_2),
        (3, "compression reconstruction", Duration::from_secs(30), criterion_3),
        (4, "sparse vs dense readout gap", Duration::from_secs(60), criterion_4),
        (5, "linear system oracle", Duration::from_secs(10), criterion_5),
        (6, "periodic reproduction", Duration::from_secs(180), criterion_6),
        (7, "chaotic reproduction", Duration::from_secs(180), criterion_7),
        (8, "exposure pipeline", Duration::from_secs(10), criterion_8),
        (9, "determinism and persistence", Duration::from_secs(180), criterion_9),
    ];
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let verdict = match &result {
            Ok(_) if elapsed <= limit => "PASS",
            _ => "FAIL",
        };
        let detail = match result {
            Ok(msg) if elapsed <= limit => msg,
            Ok(msg) => format!("{msg}; took {elapsed:.1?}, limit {limit:?}"),
            Err(msg) => msg,
        };
        if verdict == "FAIL" {
            failed += 1;
        }
        println!("criterion {id} [{verdict}] {name} ({:.2} s): {detail}", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}

use sparse_rrc::finance::integrate;
use sparse_rrc::{FinancialParams, SimulationGrid};

fn local_maxima(values: &[f64], times: &[f64], after: f64) -> Vec<f64> {
    (1..values.len() - 1)
        .filter(|&i| times[i] > after && values[i] > values[i - 1] && values[i] >= values[i + 1])
        .map(|i| values[i])
        .collect()
}

#[test]
fn chaotic_orbit_stays_bounded() {
    let series = integrate(&FinancialParams::chaotic(), &SimulationGrid::default()).unwrap();
    assert_eq!(series.len(), 12000);
    let peak = series.values().amax();
    assert!(peak < 50.0, "{peak}");
    assert!(series.values().iter().all(|v| v.is_finite()));
}

#[test]
fn periodic_orbit_settles_onto_a_cycle() {
    let series = integrate(&FinancialParams::periodic(), &SimulationGrid::default()).unwrap();
    let x1: Vec<f64> = series.values().column(0).iter().copied().collect();
    let peaks = local_maxima(&x1, series.times().unwrap(), 60.0);
    assert!(peaks.len() >= 3, "only {} peaks", peaks.len());
    for pair in peaks.windows(2) {
        assert!((pair[1] - pair[0]).abs() <= 0.05 * pair[0].abs(), "{pair:?}");
    }
}

#[test]
fn grid_spacing_and_initial_state() {
    let grid = SimulationGrid::default();
    let params = FinancialParams::chaotic();
    let series = integrate(&params, &grid).unwrap();
    let times = series.times().unwrap();
    assert_eq!(times[0], 0.0);
    assert!((times[times.len() - 1] - 120.0).abs() < 1e-12);
    assert!((series.dt().unwrap() - 120.0 / 11999.0).abs() < 1e-15);
    let first: Vec<f64> = series.values().row(0).iter().copied().collect();
    assert_eq!(first, params.initial_state().to_vec());
}

#[test]
fn integration_is_deterministic() {
    let grid = SimulationGrid { t_end: 10.0, samples: 500, ..Default::default() };
    let a = integrate(&FinancialParams::chaotic(), &grid).unwrap();
    let b = integrate(&FinancialParams::chaotic(), &grid).unwrap();
    let bits = |s: &sparse_rrc::TimeSeries| s.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn rejects_bad_grids() {
    let params = FinancialParams::chaotic();
    assert!(integrate(&params, &SimulationGrid { samples: 1, ..Default::default() }).is_err());
    assert!(integrate(&params, &SimulationGrid { t_end: -1.0, ..Default::default() }).is_err());
    assert!(integrate(&FinancialParams { s: f64::NAN, ..params }, &SimulationGrid::default()).is_err());
}

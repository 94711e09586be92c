use std::f64::consts::FRAC_PI_2;

use flatpoint::estimators::{
    estimate_map_correlation, estimate_return_tail, fit_power_law, sample_liouville_counted,
    sample_mu, sample_rng, Component, ObservableSpec, SurvivalCurve, TailOptions,
};
use flatpoint::{build_table, Model, TableSpec};
use rand::Rng;

fn table() -> flatpoint::Table {
    build_table(TableSpec::new(4.0, Model::Symmetric)).unwrap()
}

fn chi_square(cells: &[usize]) -> f64 {
    let n: usize = cells.iter().sum();
    let expected = n as f64 / cells.len() as f64;
    cells.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

#[test]
fn invariant_sampler_has_cosine_density() {
    let t = table();
    let n = 100_000;
    let mut rng = sample_rng(3, 0);
    let mut angle_cells = vec![0; 20];
    let mut arc_cells = vec![0; 20];
    let mut sin_sum = 0.0;
    for _ in 0..n {
        let m = sample_mu(&t, &mut rng);
        assert!(m.phi.abs() <= FRAC_PI_2);
        let u = 0.5 * (1.0 + m.phi.sin());
        angle_cells[((u * 20.0) as usize).min(19)] += 1;
        let s = t.global_s(m.piece, m.r) / t.total_length;
        arc_cells[((s * 20.0) as usize).min(19)] += 1;
        sin_sum += m.phi.sin();
    }
    // 99.9% point of chi-square with 19 degrees of freedom.
    assert!(chi_square(&angle_cells) < 43.8, "{}", chi_square(&angle_cells));
    assert!(chi_square(&arc_cells) < 43.8, "{}", chi_square(&arc_cells));
    // sin(phi) is uniform on [-1, 1]: variance 1/3.
    let mean = sin_sum / n as f64;
    assert!(mean.abs() < 4.0 * (1.0 / 3.0 / n as f64).sqrt(), "{mean}");
}

#[test]
fn liouville_acceptance_matches_area_ratio() {
    let t = table();
    let (lo, hi) = t.bounding_box();
    let p = t.area() / ((hi.x - lo.x) * (hi.y - lo.y));
    let n = 50_000;
    let mut rng = sample_rng(5, 0);
    let proposals: usize = (0..n).map(|_| sample_liouville_counted(&t, &mut rng).1).sum();
    let rate = n as f64 / proposals as f64;
    let se = (p * (1.0 - p) / proposals as f64).sqrt();
    assert!((rate - p).abs() < 4.0 * se, "rate {rate} vs {p}");
}

#[test]
fn exact_power_law_is_fitted_exactly() {
    let n = 1u64 << 40;
    let thresholds: Vec<f64> = (0..=6).map(|j| 2f64.powi(j)).collect();
    let counts: Vec<u64> = (0..=6).map(|j| n >> (4 * j)).collect();
    let curve = SurvivalCurve::from_counts("X", thresholds, counts, n);
    let fit = fit_power_law(&curve, [1.0, 64.0], 1).unwrap();
    assert!((fit.slope + 4.0).abs() < 1e-12, "{}", fit.slope);
    assert!(fit.intercept.abs() < 1e-12);
}

fn pareto_curve(alpha: f64, n: usize, seed: u64, grid: &[f64]) -> SurvivalCurve {
    let mut rng = sample_rng(seed, 0);
    let xs: Vec<f64> = (0..n).map(|_| (1.0 - rng.gen::<f64>()).powf(-1.0 / alpha)).collect();
    SurvivalCurve::from_samples("X", &xs, grid.to_vec())
}

#[test]
fn sampled_power_law_slope() {
    let grid: Vec<f64> = (0..=20).map(|j| 2f64.powf(j as f64 / 4.0)).collect();
    let curve = pareto_curve(4.0, 10_000_000, 11, &grid);
    let fit = fit_power_law(&curve, [1.0, 16.0], 2).unwrap();
    assert!((fit.slope + 4.0).abs() < 0.2, "{}", fit.slope);
    assert!(fit.ci_low <= fit.slope && fit.slope <= fit.ci_high);
}

#[test]
fn bootstrap_interval_covers_the_true_slope() {
    let grid: Vec<f64> = (0..=8).map(|j| 2f64.powf(j as f64 / 2.0)).collect();
    let replicates = 40;
    let covered = (0..replicates)
        .filter(|&r| {
            let curve = pareto_curve(2.0, 20_000, 100 + r, &grid);
            let fit = fit_power_law(&curve, [1.0, 16.0], r).unwrap();
            fit.ci_low <= -2.0 && -2.0 <= fit.ci_high
        })
        .count();
    // Nominal 95%; allow for 40 replicates.
    assert!(covered >= 34, "coverage {covered}/{replicates}");
}

#[test]
fn fit_refuses_thin_tails() {
    let curve = SurvivalCurve::from_counts("X", vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![100, 90, 80, 70, 60, 10], 100);
    assert!(fit_power_law(&curve, [1.0, 6.0], 0).is_err());
}

#[test]
fn estimators_do_not_depend_on_worker_count() {
    let t = table();
    let opts = TailOptions::default();
    let a = estimate_return_tail(&t, 0.3, 20_000, 9, 1, &opts).unwrap();
    let b = estimate_return_tail(&t, 0.3, 20_000, 9, 4, &opts).unwrap();
    assert_eq!(a, b);

    let f = ObservableSpec::Coordinate { component: Component::Y };
    let lags = [0, 1, 2, 3];
    let c = estimate_map_correlation(&t, &f, &f, &lags, 10_000, 4, 1).unwrap();
    let d = estimate_map_correlation(&t, &f, &f, &lags, 10_000, 4, 3).unwrap();
    assert_eq!(c, d);
}

#[test]
fn constant_observables_have_zero_correlation() {
    let t = table();
    let k = ObservableSpec::Constant { value: 2.5 };
    let c = estimate_map_correlation(&t, &k, &k, &[0, 1, 5], 5_000, 1, 2).unwrap();
    assert!(c.signed_values.iter().all(|&v| v == 0.0));
}

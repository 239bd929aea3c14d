mod common;

use common::{ols, sse, trend_slope_t};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use sbc_core::fixtures::{self, country_panel};
use sbc_core::io::read_panel_csv;
use sbc_core::sim::{generate, run_monte_carlo, run_replication, Model, SimulationSpec};
use sbc_core::{
    fit_filter, placebo_run, sbc_estimate, sc_estimate, validate_panel, weight_comparison, EstimationWindow,
    FilterSpec, WeightRegime,
};

/// Builds `(y_t, [1, y_{t-h}, ..., y_{t-h-p+1}])` over 1-based periods `first..=last`.
fn lag_design(y: &[f64], h: usize, p: usize, first: usize, last: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let target = (first..=last).map(|t| y[t - 1]).collect();
    let mut cols = vec![vec![1.0; last - first + 1]];
    for j in 0..p {
        cols.push((first..=last).map(|t| y[t - h - j - 1]).collect());
    }
    (target, cols)
}

#[test]
fn model1_sbc_and_sc_match_recomputation() {
    let spec = SimulationSpec::new(Model::Model1, 80, WeightRegime::unrestricted(true))
        .with_seed(11)
        .with_replications(1);
    let sim = generate(&spec, 0).unwrap();
    let panel = &sim.panel;
    let (h, p, t0) = (2, 2, 80);
    let filter = FilterSpec::new(h, p).unwrap();
    let first = h + p;

    // Filter coefficients, trends and cycles per unit.
    let mut alphas = Vec::new();
    let mut cycles = Vec::new();
    for u in 0..panel.n_units() {
        let y = panel.series(u);
        let (target, cols) = lag_design(y, h, p, first, t0);
        let a = ols(&cols, &target);
        let fitted: Vec<f64> = (0..target.len())
            .map(|i| cols.iter().zip(&a).map(|(c, b)| c[i] * b).sum())
            .collect();
        cycles.push(target.iter().zip(&fitted).map(|(y, f)| y - f).collect::<Vec<f64>>());
        alphas.push(a);
    }
    let w = ols(&cycles[1..], &cycles[0]);
    let y1 = panel.treated();
    let expected: Vec<f64> = (t0 + 1..=t0 + h)
        .map(|t| {
            let trend = alphas[0][0] + (0..p).map(|j| alphas[0][j + 1] * y1[t - h - j - 1]).sum::<f64>();
            let synth: f64 = (1..panel.n_units())
                .map(|u| {
                    let y = panel.series(u);
                    let tau = alphas[u][0] + (0..p).map(|j| alphas[u][j + 1] * y[t - h - j - 1]).sum::<f64>();
                    w[u - 1] * (y[t - 1] - tau)
                })
                .sum();
            trend + synth
        })
        .collect();
    let sbc = sbc_estimate(panel, &filter, WeightRegime::unrestricted(true)).unwrap();
    for (a, b) in sbc.post_counterfactual.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
    }

    let mut cols = vec![vec![1.0; t0 - first + 1]];
    for u in 1..panel.n_units() {
        cols.push(panel.series(u)[first - 1..t0].to_vec());
    }
    let b = ols(&cols, &y1[first - 1..t0]);
    let window = validate_panel(panel, &filter).unwrap();
    let sc = sc_estimate(panel, WeightRegime::unrestricted(true), window, h).unwrap();
    for (k, t) in (t0 + 1..=t0 + h).enumerate() {
        let pred = b[0] + (1..panel.n_units()).map(|u| b[u] * panel.value(u, t)).sum::<f64>();
        assert!((sc.post_counterfactual[k] - pred).abs() < 1e-8 * (1.0 + pred.abs()));
    }
}

#[test]
fn model2_replication_matches_recomputation() {
    let spec = SimulationSpec::new(Model::Model2, 60, WeightRegime::non_negative()).with_seed(5);
    for index in [0, 7, 123] {
        let out = run_replication(&spec, index).unwrap();
        let sim = generate(&spec, index).unwrap();
        let filter = spec.filter_spec().unwrap();
        let window = validate_panel(&sim.panel, &filter).unwrap();
        let sc = sc_estimate(&sim.panel, spec.regime, window, spec.h).unwrap();
        let sbc = sbc_estimate(&sim.panel, &filter, spec.regime).unwrap();
        let truth = &sim.panel.treated()[spec.t0..];
        assert_eq!(truth, sim.untreated_post.as_slice());
        let pre_actual = &sim.panel.treated()[window.first_fit_period - 1..spec.t0];
        assert_eq!(out.pre_sbc_sse, sse(&sbc.pre_fitted, pre_actual));
        assert_eq!(out.pre_sc_sse, sse(&sc.pre_fitted, pre_actual));
        assert_eq!(out.post_sbc_sse, sse(&sbc.post_counterfactual, truth));
        assert_eq!(out.post_sc_sse, sse(&sc.post_counterfactual, truth));
    }
}

#[test]
fn sbc_beats_sc_post_treatment_in_model2() {
    let spec = SimulationSpec::new(Model::Model2, 100, WeightRegime::unrestricted(true))
        .with_phi(0.5)
        .with_replications(200)
        .with_seed(2024);
    let report = run_monte_carlo(&spec).unwrap();
    assert_eq!(report.failures, 0);
    assert!(report.post_ratio < 1.0, "post ratio {}", report.post_ratio);
}

#[test]
fn model1_placebo_favours_sbc() {
    let spec = SimulationSpec::new(Model::Model1, 100, WeightRegime::unrestricted(true)).with_seed(77);
    let filter = spec.filter_spec().unwrap();
    let (mut sbc_total, mut sc_total) = (0.0, 0.0);
    for index in 0..200 {
        let sim = generate(&spec, index).unwrap();
        let (sc, sbc) = placebo_run(&sim.panel, spec.t0 - 10, &filter, spec.regime).unwrap();
        sc_total += sc.post_sse();
        sbc_total += sbc.post_sse();
    }
    assert!(sbc_total < sc_total, "SBC {sbc_total} vs SC {sc_total}");
}

#[test]
fn country_fixture_loads_with_expected_shape() {
    let f = country_panel(1990).unwrap();
    let panel = read_panel_csv(f.csv.as_bytes(), fixtures::TREATED, fixtures::T0_PERIOD).unwrap();
    assert_eq!(panel.n_units(), 17);
    assert_eq!(panel.n_periods(), 44);
    assert_eq!(panel.t0(), 31);
    assert_eq!(panel.period_label(31), 1990);
    assert_eq!(panel.treated(), f.panel.treated());
}

#[test]
fn constructed_donors_attract_matching_weights() {
    let f = country_panel(1990).unwrap();
    let cmp = weight_comparison(&f.panel, &FilterSpec::new(4, 2).unwrap(), WeightRegime::non_negative()).unwrap();
    let argmax = |w: &[f64]| {
        let i = (0..w.len()).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
        cmp.donors[i].clone()
    };
    assert_eq!(argmax(cmp.trend.weights.as_slice()), fixtures::TREND_DONOR);
    assert_eq!(argmax(cmp.cycle.weights.as_slice()), fixtures::CYCLE_DONOR);
}

#[test]
fn random_walk_cycle_variance_has_no_trend() {
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let mut y = 0.0;
    let series: Vec<f64> = (0..5_000)
        .map(|_| {
            y += <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
            y
        })
        .collect();
    let spec = FilterSpec::new(2, 2).unwrap();
    let window = EstimationWindow::new(series.len(), &spec).unwrap();
    let fit = fit_filter(&series, &window, &spec).unwrap();
    let sq: Vec<f64> = fit.cycle.iter().map(|c| c * c).collect();
    let (_, t) = trend_slope_t(&sq, spec.h);
    assert!(t.abs() < 2.576, "t = {t}");
}

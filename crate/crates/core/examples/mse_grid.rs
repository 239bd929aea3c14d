//! Prints pre/post MSE ratios for a grid of simulation cells.
//!
//! cargo run --release -p sbc-core --example mse_grid -- [replications] [t0]

use std::time::Instant;

use sbc_core::sim::{run_monte_carlo, Drift, Model, SimulationSpec};
use sbc_core::WeightRegime;

fn main() {
    let reps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2_000);
    let regimes = [
        WeightRegime::unrestricted(true),
        WeightRegime::signed(),
        WeightRegime::non_negative(),
    ];
    let only_t0: Option<usize> = std::env::args().nth(2).and_then(|s| s.parse().ok());
    let mut cells = Vec::new();
    for t0 in [50, 100, 200].into_iter().filter(|t| only_t0.is_none_or(|o| o == *t)) {
        for regime in regimes {
            for drift in [Drift::Zero, Drift::Fixed { value: 0.5 }, Drift::Gaussian { sd: 0.5 }] {
                cells.push(SimulationSpec::new(Model::Model1, t0, regime).with_drift(drift));
            }
            for model in [Model::Model2, Model::Model3] {
                for phi in [0.2, 0.5, 0.8] {
                    cells.push(SimulationSpec::new(model, t0, regime).with_phi(phi));
                }
            }
        }
    }
    println!("model,regime,parameter,t0,pre,post,median_pre,median_post,seconds");
    for spec in cells {
        let spec = spec.with_replications(reps).with_seed(20_251_019);
        let start = Instant::now();
        let r = run_monte_carlo(&spec).expect("simulation failed");
        println!(
            "{},{},{},{},{:.3},{:.3},{:.3},{:.3},{:.1}",
            spec.model_label(),
            spec.regime,
            spec.parameter_label(),
            spec.t0,
            r.pre_ratio,
            r.post_ratio,
            r.median_pre_ratio,
            r.median_post_ratio,
            start.elapsed().as_secs_f64()
        );
    }
}

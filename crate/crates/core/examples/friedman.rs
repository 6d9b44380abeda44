//! Fit the default model on Friedman data and report holdout RMSE.
//!
//! cargo run --release -p bart-core --example friedman -- 500 10

use std::time::Instant;

use bart_core::dataset::generate_friedman;
use bart_core::diagnostics::model_summary;
use bart_core::inference::predict_point;
use bart_core::{BartModel, Hyperparameters};

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n = args.first().copied().unwrap_or(500);
    let p = args.get(1).copied().unwrap_or(10);
    let train = generate_friedman(n, p, 1.0, 1).unwrap();
    let test = generate_friedman(n, p, 1.0, 2).unwrap();

    let t = Instant::now();
    let model = BartModel::fit(&train, &Hyperparameters::default(), 7).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let pred = predict_point(&model, &test).unwrap();
    let rmse = (pred.iter().zip(&test.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64).sqrt();

    print!("{}", model_summary(&model).render());
    println!("holdout rmse {rmse:.3} ({secs:.2}s)");
}

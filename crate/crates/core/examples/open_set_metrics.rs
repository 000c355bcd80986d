//! Open-set scores for one prediction file, and the mean over seeds.
//!
//! cargo run --example open_set_metrics

use std::collections::BTreeSet;

use cgintent::openset::{aggregate_runs, compute_metrics, Metrics};

fn main() {
    let known: BTreeSet<String> = ["A".to_string(), "B".to_string()].into();
    let gold = ["A", "A", "B", "oos"];
    let pred = ["A", "B", "B", "oos"];
    let m = compute_metrics(&gold, &pred, &known).unwrap().rounded();
    println!("gold {gold:?}\npred {pred:?}");
    println!(
        "F1-IND {}  F1-OOD {}  F1-All {}  Acc-All {}",
        m.f1_ind, m.f1_ood, m.f1_all, m.acc_all
    );

    let f1_all = [55.66, 55.63, 55.24, 54.88, 60.84, 51.33, 50.39, 52.41, 53.76, 58.58];
    let acc = [71.10, 70.94, 71.10, 71.78, 73.31, 72.52, 68.88, 74.21, 75.11, 74.10];
    let runs: Vec<Metrics> = f1_all
        .iter()
        .zip(acc)
        .map(|(&f, a)| Metrics {
            f1_ind: 0.0,
            f1_ood: 0.0,
            f1_all: f,
            acc_all: a,
        })
        .collect();
    let agg = aggregate_runs(&runs).unwrap();
    println!("\nten seeds: F1-All {}  Acc-All {}", agg.mean.f1_all, agg.mean.acc_all);
}

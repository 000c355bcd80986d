//! Builds a compositionally-diverse split from a synthetic corpus where some
//! test utterances are near-copies of training ones.
//!
//! cargo run --example build_cg_split

use cgintent::corpus::{LabeledDataset, SplitTag, SplitTriple};
use cgintent::simgraph::{PruneConfig, StopRule};
use cgintent::splitgen::{construct_cg_split, CgJob};

fn main() {
    let intents = ["balance", "refund", "card_lost", "top_up"];
    let templates = [
        "how do i check my {}",
        "please help me with {} right now",
        "i have a question about {}",
        "{} is not working for me",
        "can you explain the {} process",
    ];
    let rows = |skip: usize| -> Vec<(String, String)> {
        let mut rows = Vec::new();
        for (i, intent) in intents.iter().enumerate() {
            for (j, t) in templates.iter().enumerate() {
                if (i + j) % 5 != skip {
                    rows.push((t.replace("{}", &intent.replace('_', " ")), intent.to_string()));
                }
            }
        }
        rows
    };
    let input = SplitTriple::new(
        LabeledDataset::from_rows(SplitTag::Train, rows(0)).unwrap(),
        LabeledDataset::from_rows(SplitTag::Dev, rows(1).into_iter().step_by(3)).unwrap(),
        LabeledDataset::from_rows(SplitTag::Test, rows(2).into_iter().step_by(2)).unwrap(),
    )
    .unwrap();

    for stop_rule in [StopRule::MaxEvalDegree { limit: 2 }, StopRule::AllEdgesRemoved] {
        let config = PruneConfig {
            stop_rule,
            ..PruneConfig::default()
        };
        let result = construct_cg_split(&CgJob::new(input.clone(), config)).unwrap();
        let r = &result.report;
        println!("{stop_rule:?}");
        println!(
            "  edges {} -> {} in {} removals",
            r.edges_initial, r.edges_final, r.iterations
        );
        println!(
            "  sizes {}/{}/{} -> {}/{}/{}",
            input.train.len(),
            input.dev.len(),
            input.test.len(),
            result.output.train.len(),
            result.output.dev.len(),
            result.output.test.len()
        );
        println!("  first removals {:?}", &r.sequence[..r.sequence.len().min(5)]);
        println!("  intents only in eval {:?}", result.stats.eval_only_intents);
    }
}

//! Samples known intents for several seeds and builds one open-set task.
//!
//! cargo run --example known_intents

use std::collections::BTreeSet;

use cgintent::corpus::{LabeledDataset, SplitTag, SplitTriple};
use cgintent::openset::{known_count, make_open_task, sample_known_intents, OpenTaskConfig, OPEN_LABEL};

fn main() {
    let labels: BTreeSet<String> = (0..77).map(|i| format!("intent_{i:02}")).collect();
    for ratio in [0.25, 0.5, 0.75] {
        println!(
            "{} labels at {ratio}: {} known",
            labels.len(),
            known_count(labels.len(), ratio)
        );
    }
    for seed in 0..3 {
        let known = sample_known_intents(&labels, &OpenTaskConfig::new(0.25, seed).unwrap()).unwrap();
        let head: Vec<_> = known.iter().take(6).collect();
        println!("seed {seed}: {head:?} ...");
    }

    let rows = |tag| {
        LabeledDataset::from_rows(
            tag,
            [
                ("check my balance", "balance"),
                ("block the card", "block"),
                ("where is my refund", "refund"),
                ("top me up", "top_up"),
            ],
        )
        .unwrap()
    };
    let split = SplitTriple::new(rows(SplitTag::Train), rows(SplitTag::Dev), rows(SplitTag::Test)).unwrap();
    let task = make_open_task(&split, &OpenTaskConfig::new(0.5, 7).unwrap()).unwrap();
    println!("\nknown {:?}", task.known_intents);
    println!("train {} rows, dev {} rows", task.train.len(), task.dev.len());
    for u in task.test.utterances() {
        let marker = if u.intent == OPEN_LABEL { "  (open)" } else { "" };
        println!("test {} {:?} -> {}{marker}", u.id, u.text, u.intent);
    }
}

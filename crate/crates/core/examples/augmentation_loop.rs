//! Runs the round-based augmentation loop with an in-process nearest-neighbour
//! trainer and paraphrases from a mock chat endpoint.
//!
//! cargo run --example augmentation_loop

use cgintent::augment::{AugStrategy, LlmClientConfig, LlmParaphraser, ParaphraseCache};
use cgintent::corpus::{LabeledDataset, SplitTag, SplitTriple};
use cgintent::mock_llm::MockChatServer;
use cgintent::openset::{make_open_task, OpenTaskConfig};
use cgintent::trainloop::{
    run_loop, HeuristicTrainer, LocalTrainer, LoopConfig, LoopOutcome, ScriptedTrainer, TrainerScript,
};

fn main() {
    let data: [(&str, [&str; 4]); 6] = [
        (
            "balance",
            [
                "how much money is left",
                "show my current balance",
                "what is my balance today",
                "how much money do i have left",
            ],
        ),
        (
            "card_lost",
            [
                "i lost my card",
                "my card was stolen yesterday",
                "someone stole my card",
                "i cannot find my card anywhere",
            ],
        ),
        (
            "refund",
            [
                "where is my refund",
                "the refund has not arrived",
                "when will the refund arrive",
                "my refund is still missing",
            ],
        ),
        (
            "top_up",
            [
                "add money by bank transfer",
                "top up my account",
                "the top up failed",
                "how do i top up by transfer",
            ],
        ),
        (
            "exchange_rate",
            [
                "what exchange rate do you use",
                "why was the rate so bad",
                "is the exchange rate fixed",
                "which rate applies abroad",
            ],
        ),
        (
            "pin_change",
            [
                "change my pin",
                "i forgot my pin number",
                "where can i reset the pin",
                "how do i change the pin number",
            ],
        ),
    ];
    let rows = |columns: &[usize]| -> Vec<(&str, &str)> {
        data.iter()
            .flat_map(|(intent, texts)| columns.iter().map(move |&c| (texts[c], *intent)))
            .collect()
    };
    let split = SplitTriple::new(
        LabeledDataset::from_rows(SplitTag::Train, rows(&[0, 1])).unwrap(),
        LabeledDataset::from_rows(SplitTag::Dev, rows(&[2])).unwrap(),
        LabeledDataset::from_rows(SplitTag::Test, rows(&[3])).unwrap(),
    )
    .unwrap();
    let task = make_open_task(&split, &OpenTaskConfig::new(0.5, 1).unwrap()).unwrap();

    let server = MockChatServer::paraphrasing().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let source = LlmParaphraser {
        config: LlmClientConfig {
            endpoint: server.url(),
            model: "mock".into(),
            auth_env: None,
            ..Default::default()
        },
        cache: ParaphraseCache::open(dir.path().join("cache")).unwrap(),
    };

    let report = |name: &str, out: &LoopOutcome| {
        println!("{name}");
        for r in &out.log.rounds {
            println!(
                "  round {} train {} augmented {} dev acc {:.2} wrong {:?}",
                r.round, r.train_size, r.augmented_sources, r.dev_acc_all, r.wrong_train_ids
            );
        }
        let t = out.test_metrics.rounded();
        println!("  stop {:?}, best round {}", out.log.stop_reason, out.log.best_round);
        println!(
            "  test F1-IND {} F1-OOD {} F1-All {} Acc-All {}",
            t.f1_ind, t.f1_ood, t.f1_all, t.acc_all
        );
    };

    // Full augmentation with a nearest-neighbour trainer.
    let mut trainer = LocalTrainer::new(HeuristicTrainer::new(0.3));
    let config = LoopConfig::new(AugStrategy::FullK { k: 2 }, 4).unwrap();
    let out = run_loop(&task, &config, &mut trainer, &source, &dir.path().join("full"), 1).unwrap();
    report("full_k, k=2, heuristic trainer", &out);

    // The heuristic never mispredicts its own training set, so a scripted
    // trainer stands in to exercise wrong-prediction rounds. Scripts name rows
    // by position in the round's train file.
    let row = |i: usize| format!("train:{i:05}");
    let mut trainer = LocalTrainer::new(ScriptedTrainer::new(TrainerScript {
        dev_acc: vec![40.0, 55.0, 60.0, 58.0],
        train_wrong: vec![vec![row(0), row(3)], vec![row(3), row(4)]],
    }));
    let config = LoopConfig::new(AugStrategy::WrongPredK { k: 2 }, 6).unwrap();
    let out = run_loop(&task, &config, &mut trainer, &source, &dir.path().join("wp"), 1).unwrap();
    report("wrong_pred_k, k=2, scripted trainer", &out);
    println!("\n{} requests to the mock endpoint", server.request_count());
}

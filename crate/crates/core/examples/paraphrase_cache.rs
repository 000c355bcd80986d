//! Fetches paraphrases from a local mock chat endpoint, then repeats the run
//! to show that the second pass is served from the on-disk cache.
//!
//! cargo run --example paraphrase_cache

use cgintent::augment::{augment_dataset, generate_paraphrases, LlmClientConfig, ParaphraseCache};
use cgintent::corpus::{write_tsv, LabeledDataset, SplitTag};
use cgintent::mock_llm::MockChatServer;

fn main() {
    let server = MockChatServer::paraphrasing().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = ParaphraseCache::open(dir.path()).unwrap();
    let config = LlmClientConfig {
        endpoint: server.url(),
        model: "mock".into(),
        auth_env: None,
        ..LlmClientConfig::default()
    };
    let train = LabeledDataset::from_rows(
        SplitTag::Train,
        [
            ("my card was stolen", "card_lost"),
            ("how long does a refund take", "refund"),
        ],
    )
    .unwrap();

    for pass in ["cold", "warm"] {
        let got = generate_paraphrases(train.utterances(), 3, &config, &cache).unwrap();
        println!(
            "{pass}: {} cached, {} fetched, {} requests so far",
            got.stats.cache_hits,
            got.stats.fetched,
            server.request_count()
        );
        if pass == "warm" {
            let augmented = augment_dataset(&train, &got.sets).unwrap();
            print!("\n{}", String::from_utf8(write_tsv(&augmented).unwrap()).unwrap());
        }
    }
    println!("\n{} cache files in {}", cache.len().unwrap(), cache.dir().display());
}

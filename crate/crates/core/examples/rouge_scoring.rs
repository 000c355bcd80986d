//! Rouge-L between a training utterance and a few test utterances, then the
//! thresholded cross-split pairs for a tiny corpus.
//!
//! cargo run --example rouge_scoring

use cgintent::corpus::{LabeledDataset, SplitTag};
use cgintent::rouge::{lcs_length, pairs_to_tsv, pairwise_scores, rouge_l_text, tokenize, RougeConfig, RougeVariant};

fn main() {
    let train = "Someone might be using my card that is not me.";
    let tests = [
        "What should I do if I think that someone else may be using my card.",
        "I think someone got my card details and used it because there are transactions i don't recognize.",
        "How do I top up by bank transfer?",
    ];
    println!("train: {:?}", tokenize(train).tokens());
    for test in tests {
        let lcs = lcs_length(tokenize(train).tokens(), tokenize(test).tokens());
        let over_max = rouge_l_text(train, test, RougeVariant::LcsOverMax).unwrap();
        let f1 = rouge_l_text(train, test, RougeVariant::LcsF1).unwrap();
        println!("lcs {lcs:2}  over-max {over_max:.3}  f1 {f1:.3}  {test}");
    }

    let train_set = LabeledDataset::from_rows(
        SplitTag::Train,
        [
            (train, "compromised_card"),
            ("I want to top up with a bank transfer", "top_up"),
        ],
    )
    .unwrap();
    let eval = LabeledDataset::from_rows(SplitTag::Test, tests.map(|t| (t, "x"))).unwrap();
    let pairs = pairwise_scores(&train_set, eval.utterances(), &RougeConfig::default());
    print!(
        "\npairs at threshold {}:\n{}",
        RougeConfig::default().threshold,
        pairs_to_tsv(&pairs)
    );
}

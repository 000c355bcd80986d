use cgintent::corpus::{intent_histogram, load_tsv, write_tsv, CorpusError, LabeledDataset, SplitTag};
use proptest::prelude::*;

fn cell() -> impl Strategy<Value = String> {
    // Any printable text without the TSV delimiters, and not blank.
    "[^\t\r\n]{0,30}[a-zA-Z0-9é’]".prop_map(|s| s.trim_start().to_string())
}

proptest! {
    #[test]
    fn write_then_load_is_identity(rows in prop::collection::vec((cell(), "[a-z_]{1,12}"), 0..25)) {
        let ds = LabeledDataset::from_rows(SplitTag::Dev, rows).unwrap();
        let bytes = write_tsv(&ds).unwrap();
        let back = load_tsv(bytes.as_slice(), SplitTag::Dev).unwrap();
        prop_assert_eq!(&back, &ds);
        prop_assert_eq!(intent_histogram(&back).values().sum::<usize>(), ds.len());
    }
}

#[test]
fn three_rows_round_trip() {
    let ds = LabeledDataset::from_rows(
        SplitTag::Train,
        [
            ("How do I top up?", "top_up"),
            ("card’s not working", "card_not_working"),
            ("what's the fee", "fee"),
        ],
    )
    .unwrap();
    let bytes = write_tsv(&ds).unwrap();
    assert!(bytes.starts_with(b"text\tlabel\n"));
    assert_eq!(load_tsv(bytes.as_slice(), SplitTag::Train).unwrap(), ds);
}

#[test]
fn crlf_and_bom_are_accepted() {
    let raw = "\u{feff}text\tlabel\r\nhello there\tgreet\r\n";
    let ds = load_tsv(raw.as_bytes(), SplitTag::Test).unwrap();
    assert_eq!(ds.len(), 1);
    assert_eq!(ds.utterances()[0].text, "hello there");
    assert_eq!(ds.utterances()[0].id, "test:00000");
}

#[test]
fn malformed_rows_are_rejected_with_line_numbers() {
    let err = load_tsv("text\tlabel\nok\tfine\nmissing label\n".as_bytes(), SplitTag::Train).unwrap_err();
    assert!(err.to_string().contains('3'), "{err}");
    assert!(matches!(
        load_tsv("label\ttext\n".as_bytes(), SplitTag::Train),
        Err(CorpusError::BadHeader { .. })
    ));
    assert!(load_tsv("text\tlabel\n \tx\n".as_bytes(), SplitTag::Train).is_err());
}

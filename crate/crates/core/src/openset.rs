//! Open intent tasks: known-intent sampling, open-set relabeling, and the
//! F1-IND / F1-OOD / F1-All / Acc-All scores with multi-seed averaging.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, LabeledDataset, LabeledUtterance, SplitTriple};

/// Label assigned to every utterance whose intent is not known.
pub const OPEN_LABEL: &str = "oos";

#[derive(Debug, Error, PartialEq)]
pub enum OpenSetError {
    #[error("known_ratio must lie in (0, 1], got {0}")]
    Ratio(f64),
    #[error("no intents to sample from")]
    NoIntents,
    #[error("gold has {gold} labels but pred has {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("cannot score an empty label list")]
    Empty,
    #[error("label {0:?} is neither known nor the open label")]
    UnknownLabel(String),
    #[error("cannot aggregate zero runs")]
    NoRuns,
    #[error("{0}")]
    Corpus(String),
}

impl From<CorpusError> for OpenSetError {
    fn from(e: CorpusError) -> Self {
        OpenSetError::Corpus(e.to_string())
    }
}

/// SplitMix64 with the standard constants.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenTaskConfig {
    pub known_ratio: f64,
    pub seed: u64,
}

impl OpenTaskConfig {
    pub fn new(known_ratio: f64, seed: u64) -> Result<Self, OpenSetError> {
        let cfg = OpenTaskConfig { known_ratio, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), OpenSetError> {
        if self.known_ratio > 0.0 && self.known_ratio <= 1.0 {
            Ok(())
        } else {
            Err(OpenSetError::Ratio(self.known_ratio))
        }
    }
}

/// `max(1, round_half_up(ratio × n))`, capped at `n`.
pub fn known_count(n: usize, ratio: f64) -> usize {
    // The small offset absorbs representation error such as 0.3 × 5 = 1.4999….
    let k = (ratio * n as f64 + 0.5 + 1e-9).floor() as usize;
    k.clamp(1, n.max(1))
}

/// Sorts labels by code point, Fisher–Yates shuffles them with SplitMix64
/// seeded by `config.seed`, and keeps the first `known_count` labels.
pub fn sample_known_intents(
    intents: &BTreeSet<String>,
    config: &OpenTaskConfig,
) -> Result<BTreeSet<String>, OpenSetError> {
    config.validate()?;
    if intents.is_empty() {
        return Err(OpenSetError::NoIntents);
    }
    // BTreeSet<String> iterates in byte order, which equals code point order for UTF-8.
    let mut labels: Vec<&String> = intents.iter().collect();
    let mut rng = SplitMix64::new(config.seed);
    for i in (1..labels.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        labels.swap(i, j);
    }
    let k = known_count(labels.len(), config.known_ratio);
    Ok(labels.into_iter().take(k).cloned().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpenTask {
    pub known_intents: BTreeSet<String>,
    pub open_label: String,
    pub train: LabeledDataset,
    pub dev: LabeledDataset,
    pub test: LabeledDataset,
}

/// Samples known intents from the training inventory (minus the open label)
/// and builds the open-set task. Train and dev keep only known intents; test
/// keeps every instance with unknown intents rewritten to [`OPEN_LABEL`].
pub fn make_open_task(split: &SplitTriple, config: &OpenTaskConfig) -> Result<OpenTask, OpenSetError> {
    let inventory: BTreeSet<String> = split
        .train
        .intents()
        .iter()
        .filter(|i| *i != OPEN_LABEL)
        .cloned()
        .collect();
    let known = sample_known_intents(&inventory, config)?;
    let is_known = |u: &LabeledUtterance| known.contains(&u.intent);
    let test_rows = split
        .test
        .utterances()
        .iter()
        .map(|u| {
            let mut u = u.clone();
            if !known.contains(&u.intent) {
                u.intent = OPEN_LABEL.to_string();
            }
            u
        })
        .collect();
    let test = LabeledDataset::new(split.test.name(), split.test.split_tag(), test_rows)?;
    Ok(OpenTask {
        train: split.train.filtered(is_known),
        dev: split.dev.filtered(is_known),
        test,
        known_intents: known,
        open_label: OPEN_LABEL.to_string(),
    })
}

/// Scores as percentages. Values are stored unrounded; [`Metrics::rounded`]
/// gives the 2-decimal reporting form.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub f1_ind: f64,
    pub f1_ood: f64,
    pub f1_all: f64,
    pub acc_all: f64,
}

/// Rounds half up to 2 decimals. Values are first snapped to 1e-6 of a
/// hundredth so that e.g. 72.305 stored as 72.30499… still rounds up.
pub fn round2(x: f64) -> f64 {
    let scaled = (x * 100.0 * 1e6).round() / 1e6;
    (scaled + 0.5).floor() / 100.0
}

impl Metrics {
    pub fn rounded(&self) -> Metrics {
        Metrics {
            f1_ind: round2(self.f1_ind),
            f1_ood: round2(self.f1_ood),
            f1_all: round2(self.f1_all),
            acc_all: round2(self.acc_all),
        }
    }

    fn fields(&self) -> [f64; 4] {
        [self.f1_ind, self.f1_ood, self.f1_all, self.acc_all]
    }

    fn from_fields(f: [f64; 4]) -> Metrics {
        Metrics {
            f1_ind: f[0],
            f1_ood: f[1],
            f1_all: f[2],
            acc_all: f[3],
        }
    }
}

/// One-vs-rest F1 per class over `known ∪ {oos}`. Classes that never occur
/// still count toward the macro means with F1 = 0.
pub fn compute_metrics<G, P>(gold: &[G], pred: &[P], known: &BTreeSet<String>) -> Result<Metrics, OpenSetError>
where
    G: AsRef<str>,
    P: AsRef<str>,
{
    if gold.len() != pred.len() {
        return Err(OpenSetError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(OpenSetError::Empty);
    }
    let mut classes: Vec<&str> = known.iter().map(String::as_str).filter(|k| *k != OPEN_LABEL).collect();
    classes.push(OPEN_LABEL);
    let index: HashMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let lookup = |label: &str| {
        index
            .get(label)
            .copied()
            .ok_or_else(|| OpenSetError::UnknownLabel(label.to_string()))
    };

    let n = classes.len();
    let (mut tp, mut fp, mut fn_) = (vec![0usize; n], vec![0usize; n], vec![0usize; n]);
    let mut correct = 0usize;
    for (g, p) in gold.iter().zip(pred) {
        let (g, p) = (lookup(g.as_ref())?, lookup(p.as_ref())?);
        if g == p {
            tp[g] += 1;
            correct += 1;
        } else {
            fn_[g] += 1;
            fp[p] += 1;
        }
    }
    let f1: Vec<f64> = (0..n)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if tp[c] == 0 || denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .collect();
    let open = n - 1;
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    Ok(Metrics {
        f1_ind: 100.0 * mean(&f1[..open]),
        f1_ood: 100.0 * f1[open],
        f1_all: 100.0 * mean(&f1),
        acc_all: 100.0 * correct as f64 / gold.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub per_seed: Vec<Metrics>,
    /// Per-field arithmetic mean, rounded half up to 2 decimals.
    pub mean: Metrics,
}

pub fn aggregate_runs(per_seed: &[Metrics]) -> Result<RunAggregate, OpenSetError> {
    if per_seed.is_empty() {
        return Err(OpenSetError::NoRuns);
    }
    let mut sums = [0.0f64; 4];
    for m in per_seed {
        for (s, v) in sums.iter_mut().zip(m.fields()) {
            *s += v;
        }
    }
    let mean = Metrics::from_fields(sums.map(|s| s / per_seed.len() as f64)).rounded();
    Ok(RunAggregate {
        per_seed: per_seed.to_vec(),
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SplitTag;

    fn set(labels: &[&str]) -> BTreeSet<String> {
        labels.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn splitmix_first_outputs() {
        let mut rng = SplitMix64::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn counts() {
        assert_eq!(known_count(77, 0.25), 19);
        assert_eq!(known_count(4, 0.25), 1);
        assert_eq!(known_count(5, 0.5), 3);
        assert_eq!(known_count(5, 0.3), 2);
        assert_eq!(known_count(3, 0.1), 1);
        assert_eq!(known_count(3, 1.0), 3);
    }

    #[test]
    fn full_ratio_keeps_all() {
        let labels = set(&["x", "y", "z"]);
        let got = sample_known_intents(&labels, &OpenTaskConfig::new(1.0, 4).unwrap()).unwrap();
        assert_eq!(got, labels);
    }

    #[test]
    fn bad_ratio_and_empty() {
        assert!(OpenTaskConfig::new(0.0, 0).is_err());
        assert!(OpenTaskConfig::new(1.5, 0).is_err());
        let cfg = OpenTaskConfig::new(0.5, 0).unwrap();
        assert_eq!(
            sample_known_intents(&BTreeSet::new(), &cfg),
            Err(OpenSetError::NoIntents)
        );
    }

    #[test]
    fn open_task_toy() {
        let split = SplitTriple::new(
            LabeledDataset::from_rows(SplitTag::Train, [("a1", "a"), ("b1", "b"), ("c1", "c"), ("a2", "a")]).unwrap(),
            LabeledDataset::from_rows(SplitTag::Dev, [("a3", "a"), ("b3", "b")]).unwrap(),
            LabeledDataset::from_rows(SplitTag::Test, [("a4", "a"), ("b4", "b"), ("c4", "c")]).unwrap(),
        )
        .unwrap();
        let cfg = OpenTaskConfig::new(0.34, 7).unwrap();
        let task = make_open_task(&split, &cfg).unwrap();
        assert_eq!(task.known_intents.len(), 1);
        let known = task.known_intents.iter().next().unwrap().clone();
        assert!(task.train.utterances().iter().all(|u| u.intent == known));
        assert!(task.dev.utterances().iter().all(|u| u.intent == known));
        assert_eq!(task.test.len(), 3);
        assert_eq!(task.test.intents(), &set(&[&known, OPEN_LABEL]));
        // ids survive relabeling
        assert_eq!(task.test.utterances()[2].id, "test:00002");
    }

    #[test]
    fn metrics_hand_case() {
        let m = compute_metrics(&["A", "A", "B", "oos"], &["A", "B", "B", "oos"], &set(&["A", "B"]))
            .unwrap()
            .rounded();
        assert_eq!(
            m,
            Metrics {
                f1_ind: 66.67,
                f1_ood: 100.0,
                f1_all: 77.78,
                acc_all: 75.0
            }
        );
    }

    #[test]
    fn metrics_all_oos_predictions() {
        let m = compute_metrics(&["A", "B"], &["oos", "oos"], &set(&["A", "B"])).unwrap();
        assert_eq!((m.f1_ind, m.f1_ood, m.f1_all, m.acc_all), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn absent_class_counts_as_zero() {
        // C never appears but still drags F1-IND down.
        let m = compute_metrics(&["A", "oos"], &["A", "oos"], &set(&["A", "C"])).unwrap();
        assert_eq!(m.f1_ind, 50.0);
        assert_eq!(m.acc_all, 100.0);
    }

    #[test]
    fn metrics_errors() {
        let known = set(&["A"]);
        assert_eq!(
            compute_metrics(&["A"], &["A", "A"], &known),
            Err(OpenSetError::LengthMismatch { gold: 1, pred: 2 })
        );
        assert_eq!(
            compute_metrics::<&str, &str>(&[], &[], &known),
            Err(OpenSetError::Empty)
        );
        assert_eq!(
            compute_metrics(&["A"], &["Z"], &known),
            Err(OpenSetError::UnknownLabel("Z".into()))
        );
    }

    #[test]
    fn rounding_half_up() {
        assert_eq!(round2(72.305), 72.31);
        assert_eq!(round2(54.872), 54.87);
        assert_eq!(round2(66.666_666), 66.67);
        assert_eq!(round2(0.005), 0.01);
        assert_eq!(round2(1.0049), 1.0);
    }

    #[test]
    fn aggregate_single_and_empty() {
        let m = Metrics {
            f1_ind: 1.0,
            f1_ood: 2.0,
            f1_all: 3.0,
            acc_all: 4.0,
        };
        assert_eq!(aggregate_runs(&[m]).unwrap().mean, m);
        assert_eq!(aggregate_runs(&[]), Err(OpenSetError::NoRuns));
    }
}

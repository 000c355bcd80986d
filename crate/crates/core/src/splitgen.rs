//! End-to-end construction of a compositionally-diverse split: score every
//! train × (dev ∪ test) pair, build the similarity graph, prune it, and drop
//! the pruned instances.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{intent_histogram, CorpusError, LabeledDataset, SplitTag, SplitTriple};
use crate::rouge::{pairwise_scores, PairScore, RougeError};
use crate::simgraph::{build_graph, prune, GraphError, PruneConfig, PruneReport, RemainingPools};

#[derive(Debug, Error)]
pub enum SplitGenError {
    #[error("training split is empty")]
    EmptyTrain,
    #[error("dev and test splits are both empty")]
    EmptyEval,
    #[error(transparent)]
    Rouge(#[from] RougeError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone)]
pub struct CgJob {
    pub input: SplitTriple,
    pub prune: PruneConfig,
    /// Keep the scored pairs in the result for auditing.
    pub keep_pairs: bool,
}

impl CgJob {
    pub fn new(input: SplitTriple, prune: PruneConfig) -> Self {
        CgJob {
            input,
            prune,
            keep_pairs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub train: BTreeMap<String, usize>,
    pub dev: BTreeMap<String, usize>,
    pub test: BTreeMap<String, usize>,
    /// Intents present in dev or test but absent from the pruned training set.
    pub eval_only_intents: Vec<String>,
}

impl SplitStats {
    pub fn of(split: &SplitTriple) -> Self {
        let train_intents = split.train.intents();
        let eval_only: BTreeSet<&String> = split
            .dev
            .intents()
            .iter()
            .chain(split.test.intents())
            .filter(|i| !train_intents.contains(*i))
            .collect();
        SplitStats {
            train: intent_histogram(&split.train),
            dev: intent_histogram(&split.dev),
            test: intent_histogram(&split.test),
            eval_only_intents: eval_only.into_iter().cloned().collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgResult {
    pub output: SplitTriple,
    pub report: PruneReport,
    pub stats: SplitStats,
    pub pairs: Option<Vec<PairScore>>,
}

pub fn construct_cg_split(job: &CgJob) -> Result<CgResult, SplitGenError> {
    let input = &job.input;
    if input.train.is_empty() {
        return Err(SplitGenError::EmptyTrain);
    }
    if input.dev.is_empty() && input.test.is_empty() {
        return Err(SplitGenError::EmptyEval);
    }
    job.prune.rouge.validate()?;

    let eval_pool: Vec<_> = input
        .dev
        .utterances()
        .iter()
        .chain(input.test.utterances())
        .cloned()
        .collect();
    let pairs = pairwise_scores(&input.train, &eval_pool, &job.prune.rouge);
    log::info!(
        "{} cross-split pairs at threshold {}",
        pairs.len(),
        job.prune.rouge.threshold
    );

    let mut split_of: BTreeMap<&str, SplitTag> = BTreeMap::new();
    for ds in input.iter() {
        for u in ds.utterances() {
            split_of.insert(u.id.as_str(), ds.split_tag());
        }
    }
    let graph = build_graph(&pairs, |id| split_of.get(id).copied())?;
    let pools = RemainingPools::new(input.train.len(), input.dev.len(), input.test.len());
    let report = prune(&graph, &job.prune, pools);

    let pruned: HashSet<&str> = report.sequence.iter().map(String::as_str).collect();
    let keep = |ds: &LabeledDataset| ds.filtered(|u| !pruned.contains(u.id.as_str()));
    let output = SplitTriple::new(keep(&input.train), keep(&input.dev), keep(&input.test))?;

    if report.train_emptied {
        log::warn!("pruning removed every training instance");
    }
    let stats = SplitStats::of(&output);
    if !stats.eval_only_intents.is_empty() {
        log::warn!(
            "{} intents have no training instances left: {}",
            stats.eval_only_intents.len(),
            stats.eval_only_intents.join(", ")
        );
    }

    Ok(CgResult {
        output,
        report,
        stats,
        pairs: job.keep_pairs.then_some(pairs),
    })
}

//! Building compositionally-diverse open intent benchmarks and running
//! paraphrase-augmentation experiments on them.
//!
//! The pipeline has two halves:
//!
//! - **Split construction.** [`rouge`] scores every training utterance against
//!   every dev/test utterance with Rouge-L, [`simgraph`] links pairs above a
//!   threshold into a bipartite graph and greedily prunes the nodes with the
//!   highest pool-weighted degree, and [`splitgen`] ties this together into a
//!   new train/dev/test triple.
//! - **Experiments.** [`openset`] samples known intents and scores open-set
//!   predictions, [`augment`] fetches and caches paraphrases from a
//!   chat-completion endpoint, and [`trainloop`] drives an external trainer
//!   over a JSON-lines protocol, augmenting the training set between rounds.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod augment;
pub mod config;
pub mod corpus;
pub mod mock_llm;
pub mod openset;
pub mod rouge;
pub mod simgraph;
pub mod splitgen;
pub mod trainloop;

pub use augment::{AugStrategy, LlmClientConfig, ParaphraseCache, ParaphraseSet, ParaphraseSource};
pub use corpus::{LabeledDataset, LabeledUtterance, SplitTag, SplitTriple};
pub use openset::{Metrics, OpenTask, OpenTaskConfig, OPEN_LABEL};
pub use rouge::{PairScore, RougeConfig, RougeVariant};
pub use simgraph::{PruneConfig, PruneReport, SimilarityGraph, StopRule};
pub use splitgen::{construct_cg_split, CgJob, CgResult};
pub use trainloop::{LoopConfig, LoopOutcome, TrainerMsg};

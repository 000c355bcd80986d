//! Trainer wire protocol, built-in trainers, and the iterative augmentation
//! training loop.
//!
//! The orchestrator talks to a trainer with newline-delimited JSON:
//!
//! ```text
//! → {"cmd":"init","config":{...}}        ← {"ok":true}
//! → {"cmd":"train","train_path":"..."}   ← {"ok":true}
//! → {"cmd":"eval","split":"dev"}         ← {"acc_all":64.25,"predictions":[["dev:00001","pending_top_up"],...]}
//!                                        ← {"fatal":"..."} on any failure
//! ```
//!
//! Prediction ids are positional within the evaluated file (`dev:00000` is
//! the first data row of `dev.tsv`). `split` may also be `train`, meaning the
//! un-augmented training file named in the init config; the loop uses it to
//! find mispredicted training instances.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::augment::{
    augment_dataset, select_wrong_predictions, AugStrategy, AugmentError, ParaphraseSet, ParaphraseSource,
};
use crate::corpus::{load_tsv_file, write_tsv_file, CorpusError, LabeledDataset, LabeledUtterance, SplitTag};
use crate::openset::{compute_metrics, Metrics, OpenSetError, OpenTask, OPEN_LABEL};
use crate::rouge::{rouge_l, tokenize, RougeVariant, TokenSeq};

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("unknown command tag {0:?}")]
    UnknownTag(String),
    #[error("malformed message: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Train,
    Dev,
    Test,
}

impl EvalSplit {
    pub fn tag(self) -> SplitTag {
        match self {
            EvalSplit::Train => SplitTag::Train,
            EvalSplit::Dev => SplitTag::Dev,
            EvalSplit::Test => SplitTag::Test,
        }
    }
}

impl fmt::Display for EvalSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag().as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainerMsg {
    Init {
        config: Value,
    },
    Train {
        train_path: String,
    },
    Eval {
        split: EvalSplit,
    },
    Ok,
    EvalResult {
        acc_all: f64,
        predictions: Vec<(String, String)>,
    },
    Fatal {
        message: String,
    },
}

impl TrainerMsg {
    /// One JSON object without the trailing newline.
    pub fn encode(&self) -> String {
        let v = match self {
            TrainerMsg::Init { config } => json!({"cmd": "init", "config": config}),
            TrainerMsg::Train { train_path } => json!({"cmd": "train", "train_path": train_path}),
            TrainerMsg::Eval { split } => json!({"cmd": "eval", "split": split}),
            TrainerMsg::Ok => json!({"ok": true}),
            TrainerMsg::EvalResult { acc_all, predictions } => json!({"acc_all": acc_all, "predictions": predictions}),
            TrainerMsg::Fatal { message } => json!({"fatal": message}),
        };
        v.to_string()
    }

    /// Parses one line. Unknown fields are ignored.
    pub fn decode(line: &str) -> Result<TrainerMsg, ProtocolError> {
        let v: Value = serde_json::from_str(line.trim_end()).map_err(|e| ProtocolError::Json(e.to_string()))?;
        let obj = v
            .as_object()
            .ok_or_else(|| ProtocolError::Malformed("expected a JSON object".into()))?;
        let string_field = |name: &str| {
            obj.get(name)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| ProtocolError::Malformed(format!("missing string field {name:?}")))
        };

        if let Some(cmd) = obj.get("cmd") {
            let cmd = cmd
                .as_str()
                .ok_or_else(|| ProtocolError::Malformed("cmd must be a string".into()))?;
            return match cmd {
                "init" => Ok(TrainerMsg::Init {
                    config: obj.get("config").cloned().unwrap_or_else(|| json!({})),
                }),
                "train" => Ok(TrainerMsg::Train {
                    train_path: string_field("train_path")?,
                }),
                "eval" => {
                    let split = serde_json::from_value(obj.get("split").cloned().unwrap_or(Value::Null))
                        .map_err(|_| ProtocolError::Malformed("split must be train, dev or test".into()))?;
                    Ok(TrainerMsg::Eval { split })
                }
                other => Err(ProtocolError::UnknownTag(other.to_string())),
            };
        }
        if obj.contains_key("fatal") {
            return Ok(TrainerMsg::Fatal {
                message: string_field("fatal")?,
            });
        }
        if let Some(acc) = obj.get("acc_all") {
            let acc_all = acc
                .as_f64()
                .ok_or_else(|| ProtocolError::Malformed("acc_all must be a number".into()))?;
            let predictions = serde_json::from_value(obj.get("predictions").cloned().unwrap_or(Value::Null))
                .map_err(|_| ProtocolError::Malformed("predictions must be a list of [id, label] pairs".into()))?;
            return Ok(TrainerMsg::EvalResult { acc_all, predictions });
        }
        if obj.get("ok") == Some(&Value::Bool(true)) {
            return Ok(TrainerMsg::Ok);
        }
        Err(ProtocolError::Malformed("no recognizable message tag".into()))
    }
}

/// Encodes and decodes `msg` through the wire format.
pub fn protocol_roundtrip(msg: &TrainerMsg) -> Result<TrainerMsg, ProtocolError> {
    TrainerMsg::decode(&msg.encode())
}

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("round {round}: trainer reported: {message}")]
    Fatal { round: usize, message: String },
    #[error("round {round}: trainer process exited ({detail})")]
    Exited { round: usize, detail: String },
    #[error("round {round}: protocol violation: {detail}")]
    Protocol { round: usize, detail: String },
    #[error("round {round}: {source}")]
    Augment { round: usize, source: AugmentError },
    #[error("round {round}: scoring test predictions: {source}")]
    Metrics { round: usize, source: OpenSetError },
    #[error("invalid loop config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Failure on the trainer side of a transport.
#[derive(Debug, Error)]
pub enum TransportError {
    #[error("trainer exited: {0}")]
    Exited(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Orchestrator-side connection to a trainer: one reply per request.
pub trait TrainerHandle {
    fn call(&mut self, request: &TrainerMsg) -> Result<TrainerMsg, TransportError>;
}

/// A trainer speaking the protocol over a child process's stdin/stdout.
pub struct ProcessTrainer {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl ProcessTrainer {
    pub fn spawn(mut command: Command) -> std::io::Result<Self> {
        let mut child = command.stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ProcessTrainer { child, stdin, stdout })
    }

    /// Runs `command_line` through `sh -c`.
    pub fn spawn_shell(command_line: &str) -> std::io::Result<Self> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c").arg(command_line);
        Self::spawn(cmd)
    }
}

impl TrainerHandle for ProcessTrainer {
    fn call(&mut self, request: &TrainerMsg) -> Result<TrainerMsg, TransportError> {
        let sent = writeln!(self.stdin, "{}", request.encode()).and_then(|_| self.stdin.flush());
        let mut line = String::new();
        let read = match sent {
            Ok(()) => self.stdout.read_line(&mut line),
            Err(e) => Err(e),
        };
        match read {
            Ok(n) if n > 0 => Ok(TrainerMsg::decode(&line)?),
            Ok(_) | Err(_) => {
                let status = self
                    .child
                    .wait()
                    .map(|s| s.to_string())
                    .unwrap_or_else(|e| e.to_string());
                Err(TransportError::Exited(status))
            }
        }
    }
}

impl Drop for ProcessTrainer {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}

/// Server side of the protocol.
pub trait Trainer {
    fn handle(&mut self, request: TrainerMsg) -> TrainerMsg;
}

/// In-process transport that still passes every message through the wire encoding.
pub struct LocalTrainer<T: Trainer> {
    pub trainer: T,
}

impl<T: Trainer> LocalTrainer<T> {
    pub fn new(trainer: T) -> Self {
        LocalTrainer { trainer }
    }
}

impl<T: Trainer> TrainerHandle for LocalTrainer<T> {
    fn call(&mut self, request: &TrainerMsg) -> Result<TrainerMsg, TransportError> {
        let reply = match TrainerMsg::decode(&request.encode()) {
            Ok(req) => self.trainer.handle(req),
            Err(e) => TrainerMsg::Fatal { message: e.to_string() },
        };
        Ok(TrainerMsg::decode(&reply.encode())?)
    }
}

/// Serves requests from `input` until EOF. A malformed request or a fatal
/// reply ends the session with an error after the reply is written.
pub fn serve<T: Trainer>(trainer: &mut T, input: impl BufRead, mut output: impl Write) -> Result<(), String> {
    for line in input.lines() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match TrainerMsg::decode(&line) {
            Ok(req) => trainer.handle(req),
            Err(e) => TrainerMsg::Fatal { message: e.to_string() },
        };
        writeln!(output, "{}", reply.encode()).map_err(|e| e.to_string())?;
        output.flush().map_err(|e| e.to_string())?;
        if let TrainerMsg::Fatal { message } = reply {
            return Err(message);
        }
    }
    Ok(())
}

/// Paths a trainer receives in the init config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFiles {
    pub train_path: String,
    pub dev_path: String,
    pub test_path: String,
    pub known_intents: Vec<String>,
    pub open_label: String,
    pub seed: u64,
}

impl TaskFiles {
    fn path(&self, split: EvalSplit) -> &str {
        match split {
            EvalSplit::Train => &self.train_path,
            EvalSplit::Dev => &self.dev_path,
            EvalSplit::Test => &self.test_path,
        }
    }
}

/// Positional prediction ids for a file with `n` rows.
pub fn positional_ids(split: EvalSplit, n: usize) -> Vec<String> {
    (0..n).map(|i| split.tag().instance_id(i)).collect()
}

fn accuracy(gold: &[LabeledUtterance], predicted: &[String]) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let correct = gold.iter().zip(predicted).filter(|(g, p)| g.intent == **p).count();
    100.0 * correct as f64 / gold.len() as f64
}

fn fatal(message: impl fmt::Display) -> TrainerMsg {
    TrainerMsg::Fatal {
        message: message.to_string(),
    }
}

/// Nearest-neighbour classifier over Rouge-L similarity with an `oos` cutoff.
#[derive(Debug, Clone)]
pub struct HeuristicPredictor {
    // Sorted by instance id so the first maximal score wins ties.
    examples: Vec<(String, TokenSeq, String)>,
    threshold: f64,
}

pub fn heuristic_trainer(train: &LabeledDataset, threshold: f64) -> HeuristicPredictor {
    let mut examples: Vec<_> = train
        .utterances()
        .iter()
        .map(|u| (u.id.clone(), tokenize(&u.text), u.intent.clone()))
        .collect();
    examples.sort_by(|a, b| a.0.cmp(&b.0));
    HeuristicPredictor { examples, threshold }
}

impl HeuristicPredictor {
    pub fn predict(&self, text: &str) -> String {
        let query = tokenize(text);
        let mut best: Option<(f64, &str)> = None;
        for (_, tokens, intent) in &self.examples {
            let score = rouge_l(&query, tokens, RougeVariant::LcsOverMax).unwrap_or(0.0);
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, intent));
            }
        }
        match best {
            Some((score, intent)) if score >= self.threshold => intent.to_string(),
            _ => OPEN_LABEL.to_string(),
        }
    }
}

/// Protocol trainer wrapping [`HeuristicPredictor`].
#[derive(Debug, Clone)]
pub struct HeuristicTrainer {
    threshold: f64,
    files: Option<TaskFiles>,
    model: Option<HeuristicPredictor>,
}

impl HeuristicTrainer {
    pub fn new(threshold: f64) -> Self {
        HeuristicTrainer {
            threshold,
            files: None,
            model: None,
        }
    }

    fn evaluate(&self, split: EvalSplit) -> Result<TrainerMsg, String> {
        let files = self.files.as_ref().ok_or("eval before init")?;
        let model = self.model.as_ref().ok_or("eval before train")?;
        let ds = load_tsv_file(files.path(split), split.tag()).map_err(|e| e.to_string())?;
        let predicted: Vec<String> = ds.utterances().iter().map(|u| model.predict(&u.text)).collect();
        let acc_all = accuracy(ds.utterances(), &predicted);
        Ok(TrainerMsg::EvalResult {
            acc_all,
            predictions: positional_ids(split, ds.len()).into_iter().zip(predicted).collect(),
        })
    }
}

impl Trainer for HeuristicTrainer {
    fn handle(&mut self, request: TrainerMsg) -> TrainerMsg {
        let result = match request {
            TrainerMsg::Init { config } => serde_json::from_value(config)
                .map(|files| {
                    self.files = Some(files);
                    self.model = None;
                    TrainerMsg::Ok
                })
                .map_err(|e| format!("bad init config: {e}")),
            TrainerMsg::Train { train_path } => load_tsv_file(&train_path, SplitTag::Train)
                .map(|ds| {
                    self.model = Some(heuristic_trainer(&ds, self.threshold));
                    TrainerMsg::Ok
                })
                .map_err(|e| e.to_string()),
            TrainerMsg::Eval { split } => self.evaluate(split),
            other => Err(format!("unexpected message {}", other.encode())),
        };
        result.unwrap_or_else(fatal)
    }
}

/// Script for [`ScriptedTrainer`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainerScript {
    /// Dev accuracy reported after each training round; the last value repeats.
    pub dev_acc: Vec<f64>,
    /// Positional train ids to mispredict after each round.
    #[serde(default)]
    pub train_wrong: Vec<Vec<String>>,
}

/// Deterministic trainer replaying a script: dev accuracy comes from the
/// script, dev and test predictions are the gold labels, and train
/// predictions are gold except for the scripted ids (predicted as `oos`, or
/// as another known intent when the gold label already is `oos`).
#[derive(Debug, Clone)]
pub struct ScriptedTrainer {
    script: TrainerScript,
    files: Option<TaskFiles>,
    rounds_trained: usize,
    /// Train file paths received, in order.
    pub trained_on: Vec<String>,
}

impl ScriptedTrainer {
    pub fn new(script: TrainerScript) -> Self {
        ScriptedTrainer {
            script,
            files: None,
            rounds_trained: 0,
            trained_on: Vec::new(),
        }
    }

    fn evaluate(&self, split: EvalSplit) -> Result<TrainerMsg, String> {
        let files = self.files.as_ref().ok_or("eval before init")?;
        if self.rounds_trained == 0 {
            return Err("eval before train".into());
        }
        let ds = load_tsv_file(files.path(split), split.tag()).map_err(|e| e.to_string())?;
        let ids = positional_ids(split, ds.len());
        let wrong: HashSet<&str> = match split {
            EvalSplit::Train => self
                .script
                .train_wrong
                .get(self.rounds_trained - 1)
                .map(|v| v.iter().map(String::as_str).collect())
                .unwrap_or_default(),
            _ => HashSet::new(),
        };
        let alternative = files.known_intents.first().cloned().unwrap_or_default();
        let predicted: Vec<String> = ids
            .iter()
            .zip(ds.utterances())
            .map(
                |(id, u)| match (wrong.contains(id.as_str()), u.intent == files.open_label) {
                    (false, _) => u.intent.clone(),
                    (true, false) => files.open_label.clone(),
                    (true, true) => alternative.clone(),
                },
            )
            .collect();
        let acc_all = match split {
            EvalSplit::Dev => {
                let i = (self.rounds_trained - 1).min(self.script.dev_acc.len().saturating_sub(1));
                *self.script.dev_acc.get(i).ok_or("script has no dev accuracies")?
            }
            _ => accuracy(ds.utterances(), &predicted),
        };
        Ok(TrainerMsg::EvalResult {
            acc_all,
            predictions: ids.into_iter().zip(predicted).collect(),
        })
    }
}

impl Trainer for ScriptedTrainer {
    fn handle(&mut self, request: TrainerMsg) -> TrainerMsg {
        let result = match request {
            TrainerMsg::Init { config } => serde_json::from_value(config)
                .map(|files| {
                    self.files = Some(files);
                    TrainerMsg::Ok
                })
                .map_err(|e| format!("bad init config: {e}")),
            TrainerMsg::Train { train_path } => {
                if self.files.is_none() {
                    Err("train before init".to_string())
                } else {
                    self.rounds_trained += 1;
                    self.trained_on.push(train_path);
                    Ok(TrainerMsg::Ok)
                }
            }
            TrainerMsg::Eval { split } => self.evaluate(split),
            other => Err(format!("unexpected message {}", other.encode())),
        };
        result.unwrap_or_else(fatal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub strategy: AugStrategy,
    pub max_rounds: usize,
}

impl LoopConfig {
    /// Rounds without strict dev improvement tolerated before stopping.
    pub const PATIENCE: usize = 1;

    pub fn new(strategy: AugStrategy, max_rounds: usize) -> Result<Self, LoopError> {
        if max_rounds == 0 {
            return Err(LoopError::Config("max_rounds must be at least 1".into()));
        }
        if strategy.k() == 0 {
            return Err(LoopError::Config("paraphrase count must be at least 1".into()));
        }
        Ok(LoopConfig { strategy, max_rounds })
    }
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            strategy: AugStrategy::F10,
            max_rounds: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundState {
    /// Rounds completed.
    pub round: usize,
    /// Train file of the latest round.
    pub train_snapshot: PathBuf,
    pub history: Vec<f64>,
    pub best_round: usize,
    pub best_acc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    NoImprovement,
    MaxRounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub train_size: usize,
    pub augmented_sources: usize,
    pub dev_acc_all: f64,
    pub improved: bool,
    /// Training instances mispredicted after this round (wrong-prediction strategies only).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub wrong_train_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopLog {
    pub strategy: AugStrategy,
    pub max_rounds: usize,
    pub seed: u64,
    pub known_intents: Vec<String>,
    pub rounds: Vec<RoundLog>,
    pub stop_reason: StopReason,
    pub best_round: usize,
    pub best_acc: f64,
    pub test_metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopOutcome {
    pub state: RoundState,
    /// Test scores of the best round's model.
    pub test_metrics: Metrics,
    pub log: LoopLog,
}

struct Session<'a> {
    trainer: &'a mut dyn TrainerHandle,
    round: usize,
}

impl Session<'_> {
    fn call(&mut self, request: TrainerMsg) -> Result<TrainerMsg, LoopError> {
        let round = self.round;
        match self.trainer.call(&request) {
            Ok(TrainerMsg::Fatal { message }) => Err(LoopError::Fatal { round, message }),
            Ok(reply) => Ok(reply),
            Err(TransportError::Exited(detail)) => Err(LoopError::Exited { round, detail }),
            Err(e) => Err(LoopError::Protocol {
                round,
                detail: e.to_string(),
            }),
        }
    }

    fn expect_ok(&mut self, request: TrainerMsg) -> Result<(), LoopError> {
        match self.call(request)? {
            TrainerMsg::Ok => Ok(()),
            other => Err(LoopError::Protocol {
                round: self.round,
                detail: format!("expected ok, got {}", other.encode()),
            }),
        }
    }

    /// Evaluates `split` and returns (acc_all, labels aligned with `dataset`).
    fn eval(&mut self, split: EvalSplit, dataset: &LabeledDataset) -> Result<(f64, Vec<String>), LoopError> {
        let round = self.round;
        let (acc_all, predictions) = match self.call(TrainerMsg::Eval { split })? {
            TrainerMsg::EvalResult { acc_all, predictions } => (acc_all, predictions),
            other => {
                return Err(LoopError::Protocol {
                    round,
                    detail: format!("expected eval_result, got {}", other.encode()),
                })
            }
        };
        let expected = positional_ids(split, dataset.len());
        let mut by_id: BTreeMap<String, String> = BTreeMap::new();
        for (id, label) in predictions {
            if by_id.insert(id.clone(), label).is_some() {
                return Err(LoopError::Protocol {
                    round,
                    detail: format!("{split} prediction for {id} repeated"),
                });
            }
        }
        let labels: Option<Vec<String>> = expected.iter().map(|id| by_id.remove(id)).collect();
        match labels {
            Some(labels) if by_id.is_empty() => Ok((acc_all, labels)),
            _ => Err(LoopError::Protocol {
                round,
                detail: format!(
                    "{split} predictions do not cover the {} {split} instances exactly",
                    dataset.len()
                ),
            }),
        }
    }
}

fn predictions_tsv(dataset: &LabeledDataset, labels: &[String]) -> String {
    let mut out = String::from("id\tlabel\n");
    for (u, label) in dataset.utterances().iter().zip(labels) {
        out.push_str(&format!("{}\t{label}\n", u.id));
    }
    out
}

fn fetch_sets(
    source: &dyn ParaphraseSource,
    instances: &[LabeledUtterance],
    k: usize,
    round: usize,
) -> Result<Vec<ParaphraseSet>, LoopError> {
    if instances.is_empty() {
        return Ok(Vec::new());
    }
    let sets = source
        .paraphrase(instances, k)
        .map_err(|source| LoopError::Augment { round, source })?;
    if sets.len() != instances.len() {
        return Err(LoopError::Augment {
            round,
            source: AugmentError::Config(format!(
                "paraphrase source returned {} sets for {} instances",
                sets.len(),
                instances.len()
            )),
        });
    }
    Ok(sets)
}

/// Runs the augmentation training loop for one task.
///
/// `full_k` paraphrases every training instance before round 1. `wrong_pred_k`
/// trains round 1 un-augmented and afterwards adds paraphrases for each
/// training instance the trainer mispredicted, accumulating across rounds.
/// After every round the dev accuracy is recorded; the loop stops at the
/// first round that does not strictly beat the best so far, or at
/// `max_rounds`. The test split is evaluated right after each new best round,
/// so the reported test metrics belong to the best model.
///
/// Writes `task/{train,dev,test}.tsv`, `round_<n>/train.tsv`,
/// `round_<n>/dev_predictions.tsv` and `loop_log.json` under `workdir`.
pub fn run_loop(
    task: &OpenTask,
    config: &LoopConfig,
    trainer: &mut dyn TrainerHandle,
    source: &dyn ParaphraseSource,
    workdir: &Path,
    seed: u64,
) -> Result<LoopOutcome, LoopError> {
    LoopConfig::new(config.strategy, config.max_rounds)?;
    let task_dir = workdir.join("task");
    std::fs::create_dir_all(&task_dir)?;
    let files = TaskFiles {
        train_path: task_dir.join("train.tsv").to_string_lossy().into_owned(),
        dev_path: task_dir.join("dev.tsv").to_string_lossy().into_owned(),
        test_path: task_dir.join("test.tsv").to_string_lossy().into_owned(),
        known_intents: task.known_intents.iter().cloned().collect(),
        open_label: task.open_label.clone(),
        seed,
    };
    write_tsv_file(&task.train, &files.train_path)?;
    write_tsv_file(&task.dev, &files.dev_path)?;
    write_tsv_file(&task.test, &files.test_path)?;

    let mut session = Session { trainer, round: 0 };
    session.expect_ok(TrainerMsg::Init {
        config: serde_json::to_value(&files).expect("task files serialize"),
    })?;

    let k = config.strategy.k();
    let mut sets: BTreeMap<String, ParaphraseSet> = BTreeMap::new();
    if let AugStrategy::FullK { .. } = config.strategy {
        for set in fetch_sets(source, task.train.utterances(), k, 1)? {
            sets.insert(set.source_id.clone(), set);
        }
    }

    let mut history = Vec::new();
    let mut rounds = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    let mut test_metrics = None;
    let mut snapshot = PathBuf::new();
    let mut stop_reason = StopReason::MaxRounds;

    for round in 1..=config.max_rounds {
        session.round = round;
        // Sets in training-file order keep round files deterministic.
        let ordered: Vec<ParaphraseSet> = task
            .train
            .utterances()
            .iter()
            .filter_map(|u| sets.get(&u.id).cloned())
            .collect();
        let train_round =
            augment_dataset(&task.train, &ordered).map_err(|source| LoopError::Augment { round, source })?;
        let round_dir = workdir.join(format!("round_{round}"));
        std::fs::create_dir_all(&round_dir)?;
        snapshot = round_dir.join("train.tsv");
        write_tsv_file(&train_round, &snapshot)?;

        session.expect_ok(TrainerMsg::Train {
            train_path: snapshot.to_string_lossy().into_owned(),
        })?;
        let (dev_acc, dev_labels) = session.eval(EvalSplit::Dev, &task.dev)?;
        std::fs::write(
            round_dir.join("dev_predictions.tsv"),
            predictions_tsv(&task.dev, &dev_labels),
        )?;
        history.push(dev_acc);

        let improved = best.is_none_or(|(_, b)| dev_acc > b);
        let mut log = RoundLog {
            round,
            train_size: train_round.len(),
            augmented_sources: ordered.len(),
            dev_acc_all: dev_acc,
            improved,
            wrong_train_ids: Vec::new(),
        };
        if !improved {
            rounds.push(log);
            stop_reason = StopReason::NoImprovement;
            break;
        }
        best = Some((round, dev_acc));
        let (_, test_labels) = session.eval(EvalSplit::Test, &task.test)?;
        let gold: Vec<&str> = task.test.utterances().iter().map(|u| u.intent.as_str()).collect();
        test_metrics = Some(
            compute_metrics(&gold, &test_labels, &task.known_intents)
                .map_err(|source| LoopError::Metrics { round, source })?,
        );

        if round == config.max_rounds {
            rounds.push(log);
            break;
        }
        if let AugStrategy::WrongPredK { .. } = config.strategy {
            let (_, train_labels) = session.eval(EvalSplit::Train, &task.train)?;
            let gold: Vec<&str> = task.train.utterances().iter().map(|u| u.intent.as_str()).collect();
            let ids: Vec<&str> = task.train.utterances().iter().map(|u| u.id.as_str()).collect();
            let wrong = select_wrong_predictions(&gold, &train_labels, &ids)
                .map_err(|source| LoopError::Augment { round, source })?;
            let fresh: Vec<LabeledUtterance> = {
                let wrong: BTreeSet<&str> = wrong.iter().map(String::as_str).collect();
                task.train
                    .utterances()
                    .iter()
                    .filter(|u| wrong.contains(u.id.as_str()) && !sets.contains_key(&u.id))
                    .cloned()
                    .collect()
            };
            for set in fetch_sets(source, &fresh, k, round)? {
                sets.insert(set.source_id.clone(), set);
            }
            log.wrong_train_ids = wrong;
        }
        rounds.push(log);
    }

    let (best_round, best_acc) = best.expect("at least one round runs");
    let test_metrics = test_metrics.expect("best round evaluated test");
    let log = LoopLog {
        strategy: config.strategy,
        max_rounds: config.max_rounds,
        seed,
        known_intents: files.known_intents.clone(),
        rounds,
        stop_reason,
        best_round,
        best_acc,
        test_metrics: test_metrics.rounded(),
    };
    let mut log_json = serde_json::to_string_pretty(&log).expect("loop log serializes");
    log_json.push('\n');
    std::fs::write(workdir.join("loop_log.json"), log_json)?;

    Ok(LoopOutcome {
        state: RoundState {
            round: history.len(),
            train_snapshot: snapshot,
            history,
            best_round,
            best_acc,
        },
        test_metrics,
        log,
    })
}

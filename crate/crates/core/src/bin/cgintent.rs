use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cgintent::augment::{augment_dataset, generate_paraphrases, LlmParaphraser, ParaphraseCache};
use cgintent::config::{parse_config, CliConfig, StopRuleName};
use cgintent::corpus::{load_tsv_file, write_tsv, write_tsv_file, SplitTag, SplitTriple};
use cgintent::openset::{
    aggregate_runs, compute_metrics, make_open_task, sample_known_intents, OpenTaskConfig, OPEN_LABEL,
};
use cgintent::rouge::{pairs_to_tsv, pairwise_scores, RougeVariant};
use cgintent::splitgen::{construct_cg_split, CgJob};
use cgintent::trainloop::{run_loop, serve, HeuristicTrainer, ProcessTrainer, ScriptedTrainer, TrainerScript};
use cgintent::AugStrategy;

#[derive(Parser)]
#[command(
    name = "cgintent",
    version,
    about = "Compositional-generalization splits and paraphrase-augmentation experiments"
)]
struct Cli {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Prune similar train/eval pairs and write the resulting splits.
    Split(SplitArgs),
    /// Dump every cross-split pair scoring at or above the threshold.
    Pairs(PairsArgs),
    /// Sample the known intents of a training set.
    SampleKnown(SampleArgs),
    /// Score predictions with F1-IND, F1-OOD, F1-All and Acc-All.
    Score(ScoreArgs),
    /// Paraphrase every training instance and write the augmented set.
    Augment(AugmentArgs),
    /// Run the augmentation training loop against an external trainer.
    Run(RunArgs),
    /// Serve a built-in trainer over stdin/stdout.
    #[command(hide = true)]
    MockTrainer(MockTrainerArgs),
}

#[derive(Args)]
struct SplitFiles {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    test: PathBuf,
}

#[derive(Args)]
struct ScoringFlags {
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    variant: Option<VariantArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    LcsOverMax,
    LcsF1,
}

#[derive(Clone, Copy, ValueEnum)]
enum StopArg {
    AllEdges,
    MaxEvalDegree,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    files: SplitFiles,
    #[command(flatten)]
    scoring: ScoringFlags,
    #[arg(long)]
    stop: Option<StopArg>,
    #[arg(long)]
    max_degree: Option<i64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write every scored pair to pairs.tsv.
    #[arg(long)]
    dump_pairs: bool,
}

#[derive(Args)]
struct PairsArgs {
    #[command(flatten)]
    files: SplitFiles,
    #[command(flatten)]
    scoring: ScoringFlags,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Training TSV whose labels form the intent inventory.
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ScoreArgs {
    /// TSV with header `id<TAB>label`.
    #[arg(long)]
    gold: PathBuf,
    /// TSV with header `id<TAB>label`.
    #[arg(long)]
    pred: PathBuf,
    /// Known labels: a JSON array or one label per line.
    #[arg(long)]
    known: PathBuf,
}

#[derive(Args)]
struct LlmFlags {
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    strategy: Option<AugStrategy>,
    #[command(flatten)]
    llm: LlmFlags,
    /// Augmented training TSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    files: SplitFiles,
    /// Shell command starting the trainer process.
    #[arg(long)]
    trainer_cmd: String,
    #[arg(long)]
    strategy: Option<AugStrategy>,
    #[arg(long)]
    ratio: Option<f64>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_rounds: Option<i64>,
    #[command(flatten)]
    llm: LlmFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MockKind {
    Heuristic,
    Scripted,
}

#[derive(Args)]
struct MockTrainerArgs {
    #[arg(long, value_enum)]
    kind: MockKind,
    /// Similarity cutoff below which the heuristic trainer predicts `oos`.
    #[arg(long, default_value_t = 0.3)]
    theta: f64,
    /// JSON trainer script (scripted kind).
    #[arg(long)]
    script: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> Result<CliConfig> {
    match path {
        Some(p) => {
            let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(parse_config(&bytes)?)
        }
        None => Ok(CliConfig::default()),
    }
}

fn apply_scoring(config: &mut CliConfig, flags: &ScoringFlags) {
    if let Some(t) = flags.threshold {
        config.rouge.threshold = t;
    }
    if let Some(v) = flags.variant {
        config.rouge.variant = match v {
            VariantArg::LcsOverMax => RougeVariant::LcsOverMax,
            VariantArg::LcsF1 => RougeVariant::LcsF1,
        };
    }
}

fn apply_llm(config: &mut CliConfig, flags: &LlmFlags) {
    if let Some(e) = &flags.endpoint {
        config.augment.endpoint = e.clone();
    }
    if let Some(m) = &flags.model {
        config.augment.model = m.clone();
    }
    if let Some(d) = &flags.cache_dir {
        config.augment.cache_dir = d.clone();
    }
}

fn set_strategy(config: &mut CliConfig, strategy: Option<AugStrategy>) {
    if let Some(s) = strategy {
        config.augment.strategy = s.to_string();
        config.augment.k = None;
    }
}

fn load_split(files: &SplitFiles) -> Result<SplitTriple> {
    Ok(SplitTriple::load_dir_files(&files.train, &files.dev, &files.test)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_split(mut config: CliConfig, args: SplitArgs) -> Result<()> {
    apply_scoring(&mut config, &args.scoring);
    if let Some(stop) = args.stop {
        config.prune.stop_rule = match stop {
            StopArg::AllEdges => StopRuleName::AllEdgesRemoved,
            StopArg::MaxEvalDegree => StopRuleName::MaxEvalDegree,
        };
    }
    if let Some(d) = args.max_degree {
        config.prune.max_degree = d;
    }
    config.validate()?;
    let mut job = CgJob::new(load_split(&args.files)?, config.prune_config());
    job.keep_pairs = args.dump_pairs;
    let result = construct_cg_split(&job)?;

    std::fs::create_dir_all(&args.out)?;
    for ds in result.output.iter() {
        write_tsv_file(ds, args.out.join(format!("{}.tsv", ds.split_tag())))?;
    }
    write_json(&args.out.join("prune_report.json"), &result.report)?;
    write_json(&args.out.join("stats.json"), &result.stats)?;
    if let Some(pairs) = &result.pairs {
        std::fs::write(args.out.join("pairs.tsv"), pairs_to_tsv(pairs))?;
    }
    eprintln!(
        "pruned {} train, {} dev, {} test instances in {} iterations ({} → {} edges)",
        result.report.pruned_train_ids.len(),
        result.report.pruned_dev_ids.len(),
        result.report.pruned_test_ids.len(),
        result.report.iterations,
        result.report.edges_initial,
        result.report.edges_final
    );
    Ok(())
}

fn cmd_pairs(mut config: CliConfig, args: PairsArgs) -> Result<()> {
    apply_scoring(&mut config, &args.scoring);
    config.validate()?;
    let split = load_split(&args.files)?;
    let eval: Vec<_> = split
        .dev
        .utterances()
        .iter()
        .chain(split.test.utterances())
        .cloned()
        .collect();
    let tsv = pairs_to_tsv(&pairwise_scores(&split.train, &eval, &config.rouge_config()));
    match args.out {
        Some(path) => std::fs::write(path, tsv)?,
        None => std::io::stdout().lock().write_all(tsv.as_bytes())?,
    }
    Ok(())
}

fn cmd_sample_known(mut config: CliConfig, args: SampleArgs) -> Result<()> {
    if let Some(r) = args.ratio {
        config.openset.known_ratio = r;
    }
    config.validate()?;
    let train = load_tsv_file(&args.train, SplitTag::Train)?;
    let cfg = OpenTaskConfig::new(config.openset.known_ratio, args.seed)?;
    let inventory: BTreeSet<String> = train.intents().iter().filter(|i| *i != OPEN_LABEL).cloned().collect();
    let known = sample_known_intents(&inventory, &cfg)?;
    print_json(&known)
}

fn read_label_tsv(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end_matches('\r') == "id\tlabel" => {}
        _ => bail!("{}: expected header `id<TAB>label`", path.display()),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let l = l.trim_end_matches('\r');
            l.split_once('\t')
                .filter(|(_, label)| !label.contains('\t'))
                .map(|(id, label)| (id.to_string(), label.to_string()))
                .ok_or_else(|| anyhow!("{}: line {}: expected `id<TAB>label`", path.display(), i + 2))
        })
        .collect()
}

fn read_known(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim_start().starts_with('[') {
        return Ok(serde_json::from_str(&text)?);
    }
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let gold = read_label_tsv(&args.gold)?;
    let pred: BTreeMap<String, String> = read_label_tsv(&args.pred)?.into_iter().collect();
    if pred.len() != gold.len() {
        bail!("{} gold rows but {} predictions", gold.len(), pred.len());
    }
    let mut gold_labels = Vec::with_capacity(gold.len());
    let mut pred_labels = Vec::with_capacity(gold.len());
    for (id, label) in gold {
        let p = pred.get(&id).ok_or_else(|| anyhow!("no prediction for {id}"))?;
        gold_labels.push(label);
        pred_labels.push(p.clone());
    }
    let metrics = compute_metrics(&gold_labels, &pred_labels, &read_known(&args.known)?)?;
    print_json(&metrics.rounded())
}

fn cmd_augment(mut config: CliConfig, args: AugmentArgs) -> Result<()> {
    set_strategy(&mut config, args.strategy);
    apply_llm(&mut config, &args.llm);
    config.validate()?;
    let k = match config.strategy()? {
        AugStrategy::FullK { k } => k,
        AugStrategy::WrongPredK { .. } => bail!("wrong-prediction strategies need the training loop; use `run`"),
    };
    let train = load_tsv_file(&args.train, SplitTag::Train)?;
    let cache = ParaphraseCache::open(&config.augment.cache_dir)?;
    let generation = generate_paraphrases(train.utterances(), k, &config.llm_config(), &cache)?;
    let augmented = augment_dataset(&train, &generation.sets)?;
    std::fs::write(&args.out, write_tsv(&augmented)?)?;
    print_json(&generation.stats)
}

fn cmd_run(mut config: CliConfig, args: RunArgs) -> Result<()> {
    set_strategy(&mut config, args.strategy);
    apply_llm(&mut config, &args.llm);
    if let Some(r) = args.ratio {
        config.openset.known_ratio = r;
    }
    if let Some(s) = args.seed {
        config.openset.seeds = vec![s];
    }
    if let Some(m) = args.max_rounds {
        config.train_loop.max_rounds = m;
    }
    config.validate()?;
    config.validate_for_run()?;

    let split = load_split(&args.files)?;
    let loop_config = config.loop_config()?;
    let source = LlmParaphraser {
        config: config.llm_config(),
        cache: ParaphraseCache::open(&config.augment.cache_dir)?,
    };
    std::fs::create_dir_all(&args.out)?;
    let mut per_seed = Vec::new();
    for &seed in &config.openset.seeds {
        let task = make_open_task(&split, &OpenTaskConfig::new(config.openset.known_ratio, seed)?)?;
        let mut trainer = ProcessTrainer::spawn_shell(&args.trainer_cmd)
            .with_context(|| format!("starting trainer {:?}", args.trainer_cmd))?;
        let workdir = args.out.join(format!("seed_{seed}"));
        let outcome = run_loop(&task, &loop_config, &mut trainer, &source, &workdir, seed)
            .with_context(|| format!("seed {seed}"))?;
        let m = outcome.test_metrics.rounded();
        eprintln!(
            "seed {seed}: best round {} (dev acc {:.2}); test F1-IND {:.2} F1-OOD {:.2} F1-All {:.2} Acc-All {:.2}",
            outcome.state.best_round, outcome.state.best_acc, m.f1_ind, m.f1_ood, m.f1_all, m.acc_all
        );
        per_seed.push(outcome.test_metrics);
    }
    let aggregate = aggregate_runs(&per_seed)?;
    write_json(&args.out.join("aggregate.json"), &aggregate)?;
    print_json(&aggregate.mean)
}

fn cmd_mock_trainer(args: MockTrainerArgs) -> Result<()> {
    let (stdin, stdout) = (std::io::stdin().lock(), std::io::stdout().lock());
    let served = match args.kind {
        MockKind::Heuristic => serve(&mut HeuristicTrainer::new(args.theta), stdin, stdout),
        MockKind::Scripted => {
            let path = args
                .script
                .ok_or_else(|| anyhow!("--script is required for the scripted trainer"))?;
            let script: TrainerScript = serde_json::from_slice(&std::fs::read(&path)?)?;
            serve(&mut ScriptedTrainer::new(script), stdin, stdout)
        }
    };
    served.map_err(|e| anyhow!(e))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = load_config(cli.config.as_deref()).and_then(|config| match cli.command {
        Cmd::Split(a) => cmd_split(config, a),
        Cmd::Pairs(a) => cmd_pairs(config, a),
        Cmd::SampleKnown(a) => cmd_sample_known(config, a),
        Cmd::Score(a) => cmd_score(a),
        Cmd::Augment(a) => cmd_augment(config, a),
        Cmd::Run(a) => cmd_run(config, a),
        Cmd::MockTrainer(a) => cmd_mock_trainer(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};

use promptgrad::diagnostics::{
    anchor_report, detect_repetition_tokens, lat_delta, lat_direction, save_report,
    trajectory_entropy, REPETITION_MAX_PERIOD, REPETITION_MIN_REPEATS,
};
use promptgrad::engine::{
    self, init_prompt, load_artifact, load_dataset, save_artifact, save_dataset,
    tokenize_records, TrainConfig, TrainingExample,
};
use promptgrad::inference::{evaluate, generate, load_trace, save_trace, Matcher};
use promptgrad::model::{
    load_checkpoint, pretrain_base, save_checkpoint, ModelConfig, Vocabulary,
};
use promptgrad::tape::{finite_diff_grad, max_relative_error};
use promptgrad::tasks::{arith_toy, sentiment_toy, TaskBundle, TaskSizes};
use promptgrad::{Checkpoint, Prompt, Real};

use crate::runs::{load_config_file, RunDir};
use crate::CliError;

/// Gradient-check pass threshold, fixed by contract.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

// ── pretrain ─────────────────────────────────────────────────────────

#[derive(Args)]
pub struct PretrainArgs {
    /// UTF-8 corpus, one document per line.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Adam steps over the corpus.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
    #[arg(long)]
    pub max_seq: Option<usize>,
}

#[derive(Default, Deserialize)]
struct PretrainFileConfig {
    seed: Option<u64>,
    steps: Option<usize>,
    lr: Option<f64>,
    d: Option<usize>,
    layers: Option<usize>,
    heads: Option<usize>,
    d_ff: Option<usize>,
    max_seq: Option<usize>,
}

#[derive(Serialize)]
struct PretrainResolved {
    corpus: PathBuf,
    seed: u64,
    steps: usize,
    lr: f64,
    config: ModelConfig,
}

pub fn pretrain(args: PretrainArgs) -> Result<(), CliError> {
    let file: PretrainFileConfig = load_config_file(args.config.as_deref())?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let steps = args.steps.or(file.steps).unwrap_or(4000);
    let lr = args.lr.or(file.lr).unwrap_or(1e-3);
    if !(lr > 0.0) {
        return Err(CliError::usage(format!("--lr must be > 0, got {lr}")));
    }

    let text = fs::read_to_string(&args.corpus)
        .map_err(|e| CliError::usage(format!("cannot read corpus {}: {e}", args.corpus.display())))?;
    let vocab = Vocabulary::from_corpus(&text);
    let config = ModelConfig {
        d: args.d.or(file.d).unwrap_or(64),
        layers: args.layers.or(file.layers).unwrap_or(4),
        heads: args.heads.or(file.heads).unwrap_or(4),
        d_ff: args.d_ff.or(file.d_ff).unwrap_or(256),
        max_seq: args.max_seq.or(file.max_seq).unwrap_or(256),
        vocab: vocab.len(),
    };
    config.validate().map_err(CliError::from)?;

    let run = RunDir::open(args.out.as_deref(), "pretrain", args.force)?;
    run.write_resolved_config(&PretrainResolved {
        corpus: args.corpus.clone(),
        seed,
        steps,
        lr,
        config: config.clone(),
    })?;
    run.log(&format!("pretrain start: {} steps, lr {lr}, seed {seed}", steps));

    let corpus: Vec<Vec<usize>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let mut ids = vocab.tokenize(line)?;
            ids.push(vocab.eos_id());
            Ok(ids)
        })
        .collect::<promptgrad::Result<_>>()
        .map_err(CliError::from)?;

    let (ckpt, report) =
        pretrain_base::<Real>(&corpus, config, vocab, seed, steps, lr).map_err(CliError::from)?;
    let path = run.file("checkpoint.bin");
    save_checkpoint(&ckpt, &path).map_err(CliError::from)?;

    println!(
        "per-token cross-entropy: {:.6} -> {:.6} over {} steps",
        report.initial_ce_per_token, report.final_ce_per_token, report.steps
    );
    println!("checkpoint hash: {}", ckpt.weights_hash_hex());
    println!("wrote {}", path.display());
    run.log("pretrain done");
    Ok(())
}

// ── optimize ─────────────────────────────────────────────────────────

#[derive(Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Prompt text to optimize.
    #[arg(long)]
    pub prompt: String,
    /// Training dataset (JSONL with input/target fields).
    #[arg(long)]
    pub train: PathBuf,
    /// Explicit validation dataset; defaults to a seeded split of train.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Early-stopping patience in epochs.
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub no_early_stop: bool,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Default, Deserialize)]
struct OptimizeFileConfig {
    lr: Option<f64>,
    epochs: Option<usize>,
    patience: Option<usize>,
    val_fraction: Option<f64>,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct OptimizeResolved {
    checkpoint: PathBuf,
    prompt: String,
    train: PathBuf,
    val: Option<PathBuf>,
    lr: f64,
    epochs: usize,
    patience: Option<usize>,
    val_fraction: f64,
    seed: u64,
}

fn resolve_train_config(
    args_lr: Option<f64>,
    args_epochs: Option<usize>,
    args_patience: Option<usize>,
    no_early_stop: bool,
    args_val_fraction: Option<f64>,
    args_seed: Option<u64>,
    file: &OptimizeFileConfig,
) -> Result<TrainConfig, CliError> {
    let defaults = TrainConfig::default();
    let lr = args_lr.or(file.lr).unwrap_or(defaults.learning_rate);
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(CliError::usage(format!("--lr must be > 0, got {lr}")));
    }
    let patience = if no_early_stop {
        None
    } else {
        Some(args_patience.or(file.patience).unwrap_or(2))
    };
    Ok(TrainConfig {
        learning_rate: lr,
        max_epochs: args_epochs.or(file.epochs).unwrap_or(defaults.max_epochs),
        patience,
        val_fraction: args_val_fraction
            .or(file.val_fraction)
            .unwrap_or(defaults.val_fraction),
        seed: args_seed.or(file.seed).unwrap_or(defaults.seed),
    })
}

/// Loads and tokenizes a dataset, then validates capacity against the
/// prompt length, naming the offending record.
fn load_examples(
    path: &Path,
    ckpt: &Checkpoint,
    prompt_len: usize,
) -> Result<Vec<TrainingExample>, CliError> {
    let records = load_dataset(path).map_err(CliError::from)?;
    let examples = tokenize_records(&records, ckpt.vocabulary(), true).map_err(CliError::from)?;
    let max_seq = ckpt.config().max_seq;
    for (i, ex) in examples.iter().enumerate() {
        let needed = ex.assembled_len(prompt_len);
        if needed > max_seq {
            return Err(CliError::usage(format!(
                "{} line {}: sequence length {} exceeds capacity {}",
                path.display(),
                i + 1,
                needed,
                max_seq
            )));
        }
    }
    Ok(examples)
}

pub fn optimize(args: OptimizeArgs) -> Result<(), CliError> {
    let file: OptimizeFileConfig = load_config_file(args.config.as_deref())?;
    let cfg = resolve_train_config(
        args.lr,
        args.epochs,
        args.patience,
        args.no_early_stop,
        args.val_fraction,
        args.seed,
        &file,
    )?;

    let ckpt: Checkpoint = load_checkpoint(&args.checkpoint).map_err(CliError::from)?;
    let p0 = init_prompt(&args.prompt, &ckpt).map_err(CliError::from)?;
    let train = load_examples(&args.train, &ckpt, p0.len())?;
    let val = match &args.val {
        Some(path) => Some(load_examples(path, &ckpt, p0.len())?),
        None => None,
    };

    let run = RunDir::open(args.out.as_deref(), "optimize", args.force)?;
    run.write_resolved_config(&OptimizeResolved {
        checkpoint: args.checkpoint.clone(),
        prompt: args.prompt.clone(),
        train: args.train.clone(),
        val: args.val.clone(),
        lr: cfg.learning_rate,
        epochs: cfg.max_epochs,
        patience: cfg.patience,
        val_fraction: cfg.val_fraction,
        seed: cfg.seed,
    })?;
    run.log("optimize start");

    let (optimized, report) =
        engine::optimize(&p0, &train, val.as_deref(), &ckpt, &cfg).map_err(CliError::from)?;
    for (i, loss) in report.train_losses.iter().enumerate() {
        match report.val_losses.as_ref().and_then(|v| v.get(i)) {
            Some(v) => println!("epoch {:>3}: train {loss:.6} val {v:.6}", i + 1),
            None => println!("epoch {:>3}: train {loss:.6}", i + 1),
        }
    }
    println!(
        "stopped: {:?} (best epoch {})",
        report.stop_reason, report.best_epoch
    );

    let artifact_path = run.file("artifact.bin");
    save_artifact(&optimized, &artifact_path).map_err(CliError::from)?;
    save_report(&report, &run.file("train_report.json")).map_err(CliError::from)?;
    println!("wrote {}", artifact_path.display());
    run.log(&format!("optimize done in {:.3?}", report.wall_time));
    Ok(())
}

// ── infer / eval ─────────────────────────────────────────────────────

/// Loads the prompt from an artifact file or initializes it from text;
/// exactly one source must be given.
fn load_prompt(
    ckpt: &Checkpoint,
    artifact: Option<&Path>,
    prompt: Option<&str>,
) -> Result<Prompt, CliError> {
    match (artifact, prompt) {
        (Some(path), None) => load_artifact(path, Some(ckpt)).map_err(CliError::from),
        (None, Some(text)) => init_prompt(text, ckpt).map_err(CliError::from),
        _ => Err(CliError::usage(
            "exactly one of --artifact or --prompt is required",
        )),
    }
}

fn parse_matcher(spec: &str) -> Result<Matcher, CliError> {
    if spec == "exact" {
        Ok(Matcher::Exact)
    } else if let Some(marker) = spec.strip_prefix("after:") {
        if marker.is_empty() {
            return Err(CliError::usage("after: matcher needs a marker"));
        }
        Ok(Matcher::AfterMarker(marker.to_string()))
    } else {
        Err(CliError::usage(format!(
            "unknown matcher {spec:?} (expected \"exact\" or \"after:<marker>\")"
        )))
    }
}

#[derive(Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub artifact: Option<PathBuf>,
    #[arg(long)]
    pub prompt: Option<String>,
    /// User input appended after the prompt.
    #[arg(long)]
    pub input: String,
    #[arg(long, default_value_t = 64)]
    pub max_tokens: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Serialize)]
struct InferResolved {
    checkpoint: PathBuf,
    artifact: Option<PathBuf>,
    prompt: Option<String>,
    input: String,
    max_tokens: usize,
}

pub fn infer(args: InferArgs) -> Result<(), CliError> {
    let ckpt: Checkpoint = load_checkpoint(&args.checkpoint).map_err(CliError::from)?;
    let prompt = load_prompt(&ckpt, args.artifact.as_deref(), args.prompt.as_deref())?;
    let run = RunDir::open(args.out.as_deref(), "infer", args.force)?;
    run.write_resolved_config(&InferResolved {
        checkpoint: args.checkpoint.clone(),
        artifact: args.artifact.clone(),
        prompt: args.prompt.clone(),
        input: args.input.clone(),
        max_tokens: args.max_tokens,
    })?;

    let trace = generate(&prompt, &args.input, &ckpt, args.max_tokens, None)
        .map_err(CliError::from)?;
    let text = trace.text(&ckpt).map_err(CliError::from)?;
    println!("{text}");
    println!("({} steps, stop: {:?})", trace.len(), trace.stop);
    save_trace(&trace, &run.file("trace.json")).map_err(CliError::from)?;
    run.log("infer done");
    Ok(())
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub artifact: Option<PathBuf>,
    #[arg(long)]
    pub prompt: Option<String>,
    /// Test dataset (JSONL).
    #[arg(long)]
    pub test: PathBuf,
    /// "exact" or "after:<marker>".
    #[arg(long, default_value = "exact")]
    pub matcher: String,
    #[arg(long, default_value_t = 64)]
    pub max_tokens: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Serialize)]
struct EvalResolved {
    checkpoint: PathBuf,
    artifact: Option<PathBuf>,
    prompt: Option<String>,
    test: PathBuf,
    matcher: String,
    max_tokens: usize,
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let matcher = parse_matcher(&args.matcher)?;
    let ckpt: Checkpoint = load_checkpoint(&args.checkpoint).map_err(CliError::from)?;
    let prompt = load_prompt(&ckpt, args.artifact.as_deref(), args.prompt.as_deref())?;
    let test = load_examples(&args.test, &ckpt, prompt.len())?;

    let run = RunDir::open(args.out.as_deref(), "eval", args.force)?;
    run.write_resolved_config(&EvalResolved {
        checkpoint: args.checkpoint.clone(),
        artifact: args.artifact.clone(),
        prompt: args.prompt.clone(),
        test: args.test.clone(),
        matcher: args.matcher.clone(),
        max_tokens: args.max_tokens,
    })?;

    let report =
        evaluate(&prompt, &test, &ckpt, &matcher, args.max_tokens).map_err(CliError::from)?;
    save_report(&report, &run.file("eval_report.json")).map_err(CliError::from)?;
    println!(
        "accuracy: {:.4} ({}/{})",
        report.accuracy, report.correct, report.total
    );
    run.log("eval done");
    Ok(())
}

// ── diag ─────────────────────────────────────────────────────────────

#[derive(Subcommand)]
pub enum DiagCommand {
    /// Per-step entropy of a saved trace, with repetition detection.
    Entropy(EntropyArgs),
    /// Nearest-token anchoring of an optimized prompt.
    Anchor(AnchorArgs),
    /// Linear activation probe contrasting original vs optimized prompt.
    Lat(LatArgs),
}

#[derive(Args)]
pub struct EntropyArgs {
    /// Trace JSON written by infer.
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value_t = REPETITION_MAX_PERIOD)]
    pub max_period: usize,
    #[arg(long, default_value_t = REPETITION_MIN_REPEATS)]
    pub min_repeats: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct AnchorArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub artifact: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct LatArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Optimized prompt artifact (condition B).
    #[arg(long)]
    pub artifact: PathBuf,
    /// Original prompt text (condition A).
    #[arg(long)]
    pub prompt: String,
    /// Stimulus file for the target behavior, one text per line.
    #[arg(long)]
    pub stimuli_a: PathBuf,
    /// Stimulus file for the contrast behavior, one text per line.
    #[arg(long)]
    pub stimuli_b: PathBuf,
    /// Query appended to both prompt conditions.
    #[arg(long)]
    pub query: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

fn read_lines(path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect())
}

pub fn diag(cmd: DiagCommand) -> Result<(), CliError> {
    match cmd {
        DiagCommand::Entropy(args) => {
            let mut trace = load_trace::<Real>(&args.trace).map_err(CliError::from)?;
            let mut report = trajectory_entropy(&trace).map_err(CliError::from)?;
            report.repetition =
                detect_repetition_tokens(&trace.tokens, args.max_period, args.min_repeats);
            trace.step_entropy_bits = Some(report.step_entropies.clone());
            print!("{}", report.render());
            let run = RunDir::open(args.out.as_deref(), "diag-entropy", args.force)?;
            save_report(&report, &run.file("entropy_report.json")).map_err(CliError::from)?;
            save_trace(&trace, &run.file("trace_annotated.json")).map_err(CliError::from)?;
        }
        DiagCommand::Anchor(args) => {
            let ckpt: Checkpoint = load_checkpoint(&args.checkpoint).map_err(CliError::from)?;
            let prompt = load_artifact(&args.artifact, Some(&ckpt)).map_err(CliError::from)?;
            let report = anchor_report(&prompt, &ckpt).map_err(CliError::from)?;
            print!("{}", report.render());
            let run = RunDir::open(args.out.as_deref(), "diag-anchor", args.force)?;
            save_report(&report, &run.file("anchor_report.json")).map_err(CliError::from)?;
        }
        DiagCommand::Lat(args) => {
            let ckpt: Checkpoint = load_checkpoint(&args.checkpoint).map_err(CliError::from)?;
            let optimized = load_artifact(&args.artifact, Some(&ckpt)).map_err(CliError::from)?;
            let original = init_prompt(&args.prompt, &ckpt).map_err(CliError::from)?;
            let stim_a = read_lines(&args.stimuli_a)?;
            let stim_b = read_lines(&args.stimuli_b)?;
            let probes = lat_direction(&stim_a, &stim_b, &ckpt).map_err(CliError::from)?;
            let report =
                lat_delta(&original, &optimized, &probes, &args.query, &ckpt)
                    .map_err(CliError::from)?;
            print!("{}", report.render());
            // Layer 0 is the embedding itself; the first transformer layer
            // is index 1.
            if report.delta.len() > 1 {
                let sign = if report.delta[1] > 0.0 { "+" } else { "-" };
                println!("first-layer delta sign: {sign}");
            }
            let run = RunDir::open(args.out.as_deref(), "diag-lat", args.force)?;
            save_report(&report, &run.file("lat_report.json")).map_err(CliError::from)?;
            fs::write(run.file("lat_profile.csv"), report.to_csv())
                .map_err(|e| CliError::usage(format!("cannot write csv: {e}")))?;
        }
    }
    Ok(())
}

// ── gradcheck ────────────────────────────────────────────────────────

#[derive(Args)]
pub struct GradcheckArgs {
    /// Checkpoint to check; defaults to a seeded random desk-scale model.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "ab:")]
    pub prompt: String,
    #[arg(long, default_value = " cd => ")]
    pub input: String,
    #[arg(long, default_value = "ef")]
    pub target: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub h: f64,
}

pub fn gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    let ckpt: Checkpoint = match &args.checkpoint {
        Some(path) => load_checkpoint(path).map_err(CliError::from)?,
        None => {
            let vocab = Vocabulary::from_corpus(promptgrad::tasks::TASK_CHARSET);
            let config = ModelConfig::desk_scale(vocab.len());
            Checkpoint::init_random(config, vocab, args.seed).map_err(CliError::from)?
        }
    };
    let p = init_prompt(&args.prompt, &ckpt).map_err(CliError::from)?;
    let vocab = ckpt.vocabulary();
    let ex = TrainingExample::new(
        vocab.tokenize(&args.input).map_err(CliError::from)?,
        vocab.tokenize(&args.target).map_err(CliError::from)?,
    )
    .map_err(CliError::from)?;

    let graph =
        engine::example_loss_graph(p.matrix(), p.len(), &ex, &ckpt).map_err(CliError::from)?;
    let grads = graph.tape.backward(graph.loss).map_err(CliError::from)?;
    let analytic = grads
        .get(graph.prompt_leaf)
        .expect("prompt leaf is registered");
    let numeric = finite_diff_grad(
        |m| {
            let g = engine::example_loss_graph(m, p.len(), &ex, &ckpt).expect("graph builds");
            g.tape.value(g.loss).expect("loss on tape").at(0, 0)
        },
        p.matrix(),
        args.h,
    );
    let err = max_relative_error(analytic, &numeric);
    println!(
        "max relative error: {err:.3e} over {} entries (h = {:.1e})",
        p.matrix().data().len(),
        args.h
    );
    if err < GRADCHECK_TOLERANCE {
        println!("PASS (< {GRADCHECK_TOLERANCE:.0e})");
        Ok(())
    } else {
        println!("FAIL (>= {GRADCHECK_TOLERANCE:.0e})");
        Err(CliError::numeric(format!(
            "gradient check failed: {err:.3e} >= {GRADCHECK_TOLERANCE:.0e}"
        )))
    }
}

// ── sweep ────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub prompt: String,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub test: PathBuf,
    /// Comma-separated learning-rate grid.
    #[arg(long, default_value = "0.001,0.01")]
    pub lrs: String,
    /// Comma-separated epoch-count grid.
    #[arg(long, default_value = "5,10")]
    pub epochs_grid: String,
    #[arg(long, default_value = "exact")]
    pub matcher: String,
    #[arg(long, default_value_t = 64)]
    pub max_tokens: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run grid points on threads (result order stays deterministic).
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Serialize)]
struct SweepResolved {
    checkpoint: PathBuf,
    prompt: String,
    train: PathBuf,
    val: Option<PathBuf>,
    test: PathBuf,
    lrs: Vec<f64>,
    epochs: Vec<usize>,
    matcher: String,
    max_tokens: usize,
    seed: u64,
    parallel: bool,
}

#[derive(Clone, Serialize)]
struct SweepRow {
    lr: f64,
    epochs: usize,
    val_loss: f64,
    test_accuracy: f64,
}

fn parse_grid<T: std::str::FromStr>(spec: &str, what: &str) -> Result<Vec<T>, CliError> {
    let items: Result<Vec<T>, _> = spec.split(',').map(|s| s.trim().parse::<T>()).collect();
    let items = items.map_err(|_| CliError::usage(format!("bad {what} grid: {spec:?}")))?;
    if items.is_empty() {
        return Err(CliError::usage(format!("{what} grid is empty")));
    }
    Ok(items)
}

pub fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let lrs: Vec<f64> = parse_grid(&args.lrs, "lr")?;
    let epochs: Vec<usize> = parse_grid(&args.epochs_grid, "epochs")?;
    for &lr in &lrs {
        if !(lr > 0.0) {
            return Err(CliError::usage(format!("lr grid entry must be > 0, got {lr}")));
        }
    }
    let matcher = parse_matcher(&args.matcher)?;

    let ckpt: Checkpoint = load_checkpoint(&args.checkpoint).map_err(CliError::from)?;
    let p0 = init_prompt(&args.prompt, &ckpt).map_err(CliError::from)?;
    let train = load_examples(&args.train, &ckpt, p0.len())?;
    let val = match &args.val {
        Some(path) => Some(load_examples(path, &ckpt, p0.len())?),
        None => None,
    };
    let test = load_examples(&args.test, &ckpt, p0.len())?;

    let run = RunDir::open(args.out.as_deref(), "sweep", args.force)?;
    run.write_resolved_config(&SweepResolved {
        checkpoint: args.checkpoint.clone(),
        prompt: args.prompt.clone(),
        train: args.train.clone(),
        val: args.val.clone(),
        test: args.test.clone(),
        lrs: lrs.clone(),
        epochs: epochs.clone(),
        matcher: args.matcher.clone(),
        max_tokens: args.max_tokens,
        seed: args.seed,
        parallel: args.parallel,
    })?;
    run.log("sweep start");

    // Cartesian product in declared order: lrs outer, epochs inner.
    let grid: Vec<(f64, usize)> = lrs
        .iter()
        .flat_map(|&lr| epochs.iter().map(move |&e| (lr, e)))
        .collect();

    let eval_point = |&(lr, max_epochs): &(f64, usize)| -> Result<SweepRow, CliError> {
        let cfg = TrainConfig {
            learning_rate: lr,
            max_epochs,
            patience: Some(2),
            val_fraction: 0.2,
            seed: args.seed,
        };
        let (optimized, report) =
            engine::optimize(&p0, &train, val.as_deref(), &ckpt, &cfg).map_err(CliError::from)?;
        let eval = evaluate(&optimized, &test, &ckpt, &matcher, args.max_tokens)
            .map_err(CliError::from)?;
        let val_loss = report
            .val_losses
            .as_ref()
            .and_then(|v| v.get(report.best_epoch.saturating_sub(1)).copied())
            .unwrap_or(f64::NAN);
        Ok(SweepRow {
            lr,
            epochs: max_epochs,
            val_loss,
            test_accuracy: eval.accuracy,
        })
    };

    let rows: Vec<SweepRow> = if args.parallel {
        // One thread per grid point, results collected back in grid order.
        std::thread::scope(|scope| {
            let handles: Vec<_> = grid.iter().map(|pt| scope.spawn(move || eval_point(pt))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sweep thread panicked"))
                .collect::<Result<Vec<_>, CliError>>()
        })?
    } else {
        grid.iter().map(|pt| eval_point(pt)).collect::<Result<_, _>>()?
    };

    let mut csv = String::from("lr,epochs,val_loss,test_accuracy\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row.lr, row.epochs, row.val_loss, row.test_accuracy
        ));
        println!(
            "lr {:<8} epochs {:<3} val_loss {:<12.6} test_accuracy {:.4}",
            row.lr, row.epochs, row.val_loss, row.test_accuracy
        );
    }
    fs::write(run.file("sweep.csv"), csv)
        .map_err(|e| CliError::usage(format!("cannot write sweep.csv: {e}")))?;
    run.log("sweep done");
    Ok(())
}

// ── gen-task ─────────────────────────────────────────────────────────

#[derive(Args)]
pub struct GenTaskArgs {
    /// "sentiment" or "arith".
    #[arg(long)]
    pub task: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1100)]
    pub corpus_docs: usize,
    #[arg(long, default_value_t = 64)]
    pub train_n: usize,
    #[arg(long, default_value_t = 16)]
    pub val_n: usize,
    #[arg(long, default_value_t = 100)]
    pub test_n: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Serialize)]
struct GenTaskResolved {
    task: String,
    seed: u64,
    sizes: (usize, usize, usize, usize),
    prompt: String,
    matcher: Matcher,
}

pub fn gen_task(args: GenTaskArgs) -> Result<(), CliError> {
    let sizes = TaskSizes {
        corpus_docs: args.corpus_docs,
        train: args.train_n,
        val: args.val_n,
        test: args.test_n,
    };
    let bundle: TaskBundle = match args.task.as_str() {
        "sentiment" => sentiment_toy(args.seed, sizes),
        "arith" => arith_toy(args.seed, sizes),
        other => {
            return Err(CliError::usage(format!(
                "unknown task {other:?} (expected \"sentiment\" or \"arith\")"
            )))
        }
    };

    let run = RunDir::open(args.out.as_deref(), &format!("task-{}", args.task), args.force)?;
    run.write_resolved_config(&GenTaskResolved {
        task: args.task.clone(),
        seed: args.seed,
        sizes: (sizes.corpus_docs, sizes.train, sizes.val, sizes.test),
        prompt: bundle.prompt.clone(),
        matcher: bundle.matcher.clone(),
    })?;

    fs::write(run.file("corpus.txt"), bundle.corpus.join("\n") + "\n")
        .map_err(|e| CliError::usage(format!("cannot write corpus: {e}")))?;
    save_dataset(&run.file("train.jsonl"), &bundle.train).map_err(CliError::from)?;
    save_dataset(&run.file("val.jsonl"), &bundle.val).map_err(CliError::from)?;
    save_dataset(&run.file("test.jsonl"), &bundle.test).map_err(CliError::from)?;
    fs::write(run.file("stimuli_a.txt"), bundle.stimuli_a.join("\n") + "\n")
        .map_err(|e| CliError::usage(format!("cannot write stimuli: {e}")))?;
    fs::write(run.file("stimuli_b.txt"), bundle.stimuli_b.join("\n") + "\n")
        .map_err(|e| CliError::usage(format!("cannot write stimuli: {e}")))?;
    fs::write(run.file("prompt.txt"), &bundle.prompt)
        .map_err(|e| CliError::usage(format!("cannot write prompt: {e}")))?;

    println!(
        "task {} (seed {}): {} corpus docs, {}/{}/{} train/val/test",
        args.task,
        args.seed,
        bundle.corpus.len(),
        bundle.train.len(),
        bundle.val.len(),
        bundle.test.len()
    );
    println!("prompt: {}", bundle.prompt);
    println!("wrote {}", run.path().display());
    Ok(())
}

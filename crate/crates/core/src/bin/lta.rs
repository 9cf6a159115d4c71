use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use lta_core::io::{read_json, read_jsonl, write_json, write_jsonl, Manifest};
use lta_core::metric::{evaluate_corpus, EvalFlags, EvalReport};
use lta_core::refine::{generate_patterns, raw_prediction_set, FirstStepPolicy, PredictionConfig, PredictionSet};
use lta_core::rng::derive_seed;
use lta_core::stats::{build_stats, CoocStats, EmptyRowPolicy, IndicatorMode, SmoothingConfig};
use lta_core::synth::{self, SynthConfig};
use lta_core::train::{train, MultiHeadDecoder, TrainConfig, TrainExample};
use lta_core::vocab::{Action, ActionSequence, Axis, Vocabulary};
use lta_core::{combine_logits, softmax_rows, EnsembleWeights, LogitsTensor};

#[derive(Parser)]
#[command(
    name = "lta",
    version,
    about = "Ensemble, refine and evaluate long-term action anticipation predictions"
)]
struct Cli {
    /// Seed for every randomized step (overrides config-file seeds).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress output on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    /// Write a run manifest (input digests, config, seed) to this path.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build co-occurrence statistics from label corpora.
    Stats(StatsArgs),
    /// Combine two models' logits, or sweep the ensemble weights.
    Ensemble(EnsembleArgs),
    /// Ensemble (optional), softmax and refine logits into K patterns.
    #[command(alias = "pipeline")]
    Refine(RefineArgs),
    /// Train a linear multi-head decoder.
    Train(TrainArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Synthetic data and experiments.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    verbs: PathBuf,
    #[arg(long)]
    nouns: PathBuf,
    #[arg(long)]
    train: PathBuf,
    /// Optional validation corpus, concatenated after the training corpus.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    add_k: f64,
    #[arg(long, default_value_t = 1e-6)]
    clamp_min: f64,
    #[arg(long, default_value_t = 1.0 - 1e-6)]
    clamp_max: f64,
    /// Fail on conditional rows with no observations instead of storing
    /// them as uniform (only matters with --add-k 0).
    #[arg(long)]
    strict_rows: bool,
}

#[derive(Args)]
struct EnsembleArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = 0.6)]
    alpha: f64,
    #[arg(long, default_value_t = 1.4)]
    beta: f64,
    #[arg(long)]
    out: PathBuf,
    /// Evaluate a grid of (alpha, beta) instead of writing combined logits.
    #[arg(long, requires = "truth")]
    sweep: bool,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Statistics for refinement during the sweep; without them each grid
    /// point is scored on the raw argmax pattern only.
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    grid_step: f64,
    #[arg(long, default_value_t = 2.0)]
    grid_max: f64,
    #[command(flatten)]
    decode: DecodeArgs,
}

#[derive(Args, Clone)]
struct DecodeArgs {
    #[arg(long, default_value_t = 20)]
    z: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::AsWritten)]
    mode: ModeArg,
    /// Action preceding the first predicted step, as "verb,noun".
    #[arg(long)]
    seed_action: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    AsWritten,
    StandardNpmi,
}

impl From<ModeArg> for IndicatorMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::AsWritten => IndicatorMode::AsWritten,
            ModeArg::StandardNpmi => IndicatorMode::StandardNpmi,
        }
    }
}

#[derive(Args)]
struct RefineArgs {
    /// Required when --k is at least 2.
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long)]
    logits: PathBuf,
    /// Second model's logits; enables the weighted ensemble.
    #[arg(long)]
    logits_b: Option<PathBuf>,
    #[arg(long, default_value_t = 0.6)]
    alpha: f64,
    #[arg(long, default_value_t = 1.4)]
    beta: f64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    decode: DecodeArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    z: usize,
    #[arg(long, value_enum, default_value_t = OnOff::Off)]
    smooth: OnOff,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch mean loss, one JSON number per line.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    /// Class counts; inferred from the data when omitted.
    #[arg(long)]
    c_verb: Option<usize>,
    #[arg(long)]
    c_noun: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    init_scale: f64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    preds: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Plain Levenshtein instead of Damerau-Levenshtein.
    #[arg(long)]
    no_transposition: bool,
    /// Include per-example scores in the report.
    #[arg(long)]
    per_example: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Write vocabularies, corpora, truths and noisy logits.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the refinement experiment and write its report.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Config file for `synth` commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SynthFile {
    synth: SynthConfig,
    #[serde(default)]
    prediction: PredictionConfig,
}

struct Ctx {
    seed: Option<u64>,
    quiet: bool,
    manifest: Option<PathBuf>,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn finish(&self, manifest: Manifest, default_path: Option<PathBuf>) -> Result<()> {
        if let Some(path) = self.manifest.clone().or(default_path) {
            write_json(&path, &manifest).with_context(|| format!("writing manifest {}", path.display()))?;
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx {
        seed: cli.seed,
        quiet: cli.quiet,
        manifest: cli.manifest,
    };
    let result = match cli.command {
        Command::Stats(a) => cmd_stats(&ctx, a),
        Command::Ensemble(a) => cmd_ensemble(&ctx, a),
        Command::Refine(a) => cmd_refine(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Synth(c) => cmd_synth(&ctx, c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_jsonl(path).with_context(|| format!("reading {}", path.display()))
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    read_json(path).with_context(|| format!("reading {}", path.display()))
}

fn cmd_stats(ctx: &Ctx, a: StatsArgs) -> Result<()> {
    let verbs: Vocabulary = load_json(&a.verbs)?;
    let nouns: Vocabulary = load_json(&a.nouns)?;
    if verbs.kind() != Axis::Verb || nouns.kind() != Axis::Noun {
        bail!("--verbs must be a verb vocabulary and --nouns a noun vocabulary");
    }
    let mut corpus: Vec<ActionSequence> = load_jsonl(&a.train)?;
    if let Some(val) = &a.val {
        corpus.extend(load_jsonl::<ActionSequence>(val)?);
    }
    let cfg = SmoothingConfig {
        add_k: a.add_k,
        prob_clamp_min: a.clamp_min,
        prob_clamp_max: a.clamp_max,
        empty_rows: if a.strict_rows {
            EmptyRowPolicy::Reject
        } else {
            EmptyRowPolicy::Uniform
        },
    };
    let stats = build_stats(&corpus, &verbs, &nouns, &cfg)?;
    write_json(&a.out, &stats)?;
    ctx.say(format!(
        "verbs: {}  nouns: {}  sequences: {}  actions: {}  bigrams: {}",
        stats.c_verb, stats.c_noun, stats.sequence_count, stats.action_count, stats.bigram_count
    ));

    let mut m = Manifest::new("stats", None, serde_json::to_value(cfg)?);
    m.input("verbs", &a.verbs)?;
    m.input("nouns", &a.nouns)?;
    m.input("train", &a.train)?;
    if let Some(val) = &a.val {
        m.input("val", val)?;
    }
    m.output("stats", &a.out)?;
    ctx.finish(m, None)
}

fn parse_seed_action(s: &str) -> Result<Action> {
    let (v, n) = s
        .split_once(',')
        .with_context(|| format!("--seed-action expects \"verb,noun\", got {s:?}"))?;
    Ok(Action::new(v.trim().parse()?, n.trim().parse()?))
}

fn prediction_config(ctx: &Ctx, d: &DecodeArgs) -> Result<PredictionConfig> {
    let first_step_policy = match &d.seed_action {
        Some(s) => FirstStepPolicy::SeedAction(parse_seed_action(s)?),
        None => FirstStepPolicy::Unrefined,
    };
    let cfg = PredictionConfig {
        z: d.z,
        k: d.k,
        rng_seed: ctx.seed.unwrap_or(0),
        mode: d.mode.into(),
        first_step_policy,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_logits(path: &Path) -> Result<Vec<LogitsTensor>> {
    let logits: Vec<LogitsTensor> = load_jsonl(path)?;
    for (i, l) in logits.iter().enumerate() {
        l.validate()
            .with_context(|| format!("{} line {}", path.display(), i + 1))?;
    }
    Ok(logits)
}

fn ensemble_all(a: &[LogitsTensor], b: &[LogitsTensor], w: EnsembleWeights) -> Result<Vec<LogitsTensor>> {
    if a.len() != b.len() {
        bail!("logits files hold {} and {} examples", a.len(), b.len());
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| combine_logits(x, y, w).with_context(|| format!("example {}", x.example_id)))
        .collect()
}

/// Softmax then pattern generation for every example. Example `i` samples
/// from the stream derived from `(seed, i)`.
fn decode_all(
    logits: &[LogitsTensor],
    stats: Option<&CoocStats>,
    cfg: &PredictionConfig,
) -> Result<Vec<PredictionSet>> {
    logits
        .iter()
        .enumerate()
        .map(|(i, l)| {
            if l.steps() != cfg.z {
                bail!(
                    "shape mismatch: example {} has logits {}, expected {} steps",
                    l.example_id,
                    l.shape(),
                    cfg.z
                );
            }
            let dists = softmax_rows(l);
            match stats {
                Some(stats) => {
                    let per = PredictionConfig {
                        rng_seed: derive_seed(cfg.rng_seed, i as u64),
                        ..*cfg
                    };
                    generate_patterns(&dists, stats, &per).with_context(|| format!("example {}", l.example_id))
                }
                None => Ok(raw_prediction_set(&dists)),
            }
        })
        .collect()
}

fn load_stats_for(k: usize, path: Option<&PathBuf>) -> Result<Option<CoocStats>> {
    match path {
        Some(p) => Ok(Some(load_json(p)?)),
        None if k >= 2 => bail!("refinement with --k {k} requires --stats"),
        None => Ok(None),
    }
}

fn cmd_refine(ctx: &Ctx, a: RefineArgs) -> Result<()> {
    let cfg = prediction_config(ctx, &a.decode)?;
    let stats = load_stats_for(cfg.k, a.stats.as_ref())?;
    let weights = EnsembleWeights::new(a.alpha, a.beta);
    let first = load_logits(&a.logits)?;
    let logits = match &a.logits_b {
        Some(b) => ensemble_all(&first, &load_logits(b)?, weights)?,
        None => first,
    };
    let preds = decode_all(&logits, stats.as_ref(), &cfg)?;
    write_jsonl(&a.out, &preds)?;
    ctx.say(format!("wrote {} prediction sets to {}", preds.len(), a.out.display()));

    let config = serde_json::json!({
        "prediction": cfg,
        "ensemble": a.logits_b.as_ref().map(|_| weights),
    });
    let mut m = Manifest::new("refine", Some(cfg.rng_seed), config);
    m.input("logits", &a.logits)?;
    if let Some(b) = &a.logits_b {
        m.input("logits_b", b)?;
    }
    if let Some(s) = &a.stats {
        m.input("stats", s)?;
    }
    m.output("predictions", &a.out)?;
    let mut default = a.out.clone().into_os_string();
    default.push(".manifest.json");
    ctx.finish(m, Some(default.into()))
}

#[derive(Serialize)]
struct SweepRow {
    alpha: f64,
    beta: f64,
    ed_verb: f64,
    ed_noun: f64,
    ed_action: f64,
}

fn cmd_ensemble(ctx: &Ctx, a: EnsembleArgs) -> Result<()> {
    let la = load_logits(&a.a)?;
    let lb = load_logits(&a.b)?;
    let mut m;
    if a.sweep {
        if !(a.grid_step > 0.0 && a.grid_max >= 0.0) {
            bail!("grid step must be positive and grid max nonnegative");
        }
        let truth_path = a.truth.as_ref().expect("clap enforces --truth");
        let truths: Vec<ActionSequence> = load_jsonl(truth_path)?;
        let cfg = prediction_config(ctx, &a.decode)?;
        let stats: Option<CoocStats> = a.stats.as_ref().map(|p| load_json(p)).transpose()?;
        let steps = (a.grid_max / a.grid_step + 1e-9).floor() as usize;
        let grid: Vec<f64> = (0..=steps).map(|i| i as f64 * a.grid_step).collect();
        let mut rows = Vec::with_capacity(grid.len() * grid.len());
        for &alpha in &grid {
            for &beta in &grid {
                let combined = ensemble_all(&la, &lb, EnsembleWeights::new(alpha, beta))?;
                let preds = decode_all(&combined, stats.as_ref(), &cfg)?;
                let r = evaluate_corpus(&preds, &truths, EvalFlags::default())?;
                rows.push(SweepRow {
                    alpha,
                    beta,
                    ed_verb: r.ed_verb,
                    ed_noun: r.ed_noun,
                    ed_action: r.ed_action,
                });
            }
        }
        write_jsonl(&a.out, &rows)?;
        let best = rows
            .iter()
            .min_by(|x, y| x.ed_action.total_cmp(&y.ed_action))
            .expect("grid is non-empty");
        ctx.say(format!(
            "best action ED {:.4} at alpha = {:.2}, beta = {:.2} ({} grid points)",
            best.ed_action,
            best.alpha,
            best.beta,
            rows.len()
        ));
        m = Manifest::new(
            "ensemble-sweep",
            Some(cfg.rng_seed),
            serde_json::json!({"grid_step": a.grid_step, "grid_max": a.grid_max, "prediction": cfg}),
        );
        m.input("truth", truth_path)?;
        if let Some(s) = &a.stats {
            m.input("stats", s)?;
        }
    } else {
        let w = EnsembleWeights::new(a.alpha, a.beta);
        let combined = ensemble_all(&la, &lb, w)?;
        write_jsonl(&a.out, &combined)?;
        ctx.say(format!(
            "wrote {} combined examples to {}",
            combined.len(),
            a.out.display()
        ));
        m = Manifest::new("ensemble", None, serde_json::to_value(w)?);
    }
    m.input("a", &a.a)?;
    m.input("b", &a.b)?;
    m.output("out", &a.out)?;
    ctx.finish(m, None)
}

fn cmd_train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let data: Vec<TrainExample> = load_jsonl(&a.data)?;
    let Some(first) = data.first() else {
        bail!("empty dataset");
    };
    let feature_dim = first.features.len();
    let max_id = |f: fn(&Action) -> usize| data.iter().flat_map(|e| e.actions.iter().map(f)).max().unwrap_or(0) + 1;
    let c_verb = a.c_verb.unwrap_or_else(|| max_id(|x| x.verb));
    let c_noun = a.c_noun.unwrap_or_else(|| max_id(|x| x.noun));
    let seed = ctx.seed.unwrap_or(0);
    let cfg = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        use_label_smoothing: matches!(a.smooth, OnOff::On),
        rng_seed: seed,
    };
    let init = MultiHeadDecoder::random(feature_dim, a.z, c_verb, c_noun, a.init_scale, derive_seed(seed, 1));
    let (model, history) = train(&init, &data, &cfg)?;
    write_json(&a.out, &model)?;
    if let Some(h) = &a.history {
        write_jsonl(h, &history)?;
    }
    ctx.say(format!(
        "trained {} heads x 2 axes on {} examples: loss {:.4} -> {:.4}",
        a.z,
        data.len(),
        history.first().copied().unwrap_or(f64::NAN),
        history.last().copied().unwrap_or(f64::NAN)
    ));
    let mut m = Manifest::new(
        "train",
        Some(seed),
        serde_json::json!({"train": cfg, "z": a.z, "c_verb": c_verb, "c_noun": c_noun, "feature_dim": feature_dim, "init_scale": a.init_scale}),
    );
    m.input("data", &a.data)?;
    m.output("checkpoint", &a.out)?;
    ctx.finish(m, None)
}

fn print_report(ctx: &Ctx, r: &EvalReport) {
    ctx.say(format!("{:>8} {:>8} {:>8}", "Verb", "Noun", "Action"));
    ctx.say(format!("{:>8.4} {:>8.4} {:>8.4}", r.ed_verb, r.ed_noun, r.ed_action));
    ctx.say(format!("examples: {}  unmatched: {}", r.n_examples, r.unmatched));
}

fn cmd_eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let preds: Vec<PredictionSet> = load_jsonl(&a.preds)?;
    let truths: Vec<ActionSequence> = load_jsonl(&a.truth)?;
    let flags = EvalFlags {
        allow_transposition: !a.no_transposition,
    };
    let mut report = evaluate_corpus(&preds, &truths, flags)?;
    if !a.per_example {
        report.per_example = None;
    }
    if report.unmatched > 0 {
        eprintln!("warning: {} prediction(s) without ground truth", report.unmatched);
    }
    print_report(ctx, &report);
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    let mut m = Manifest::new("eval", None, serde_json::to_value(flags)?);
    m.input("preds", &a.preds)?;
    m.input("truth", &a.truth)?;
    if let Some(out) = &a.out {
        m.output("report", out)?;
    }
    ctx.finish(m, None)
}

fn cmd_synth(ctx: &Ctx, c: SynthCommand) -> Result<()> {
    match c {
        SynthCommand::Gen { config, out_dir } => {
            let mut file: SynthFile = load_json(&config)?;
            if let Some(seed) = ctx.seed {
                file.synth.rng_seed = seed;
            }
            let cfg = file.synth;
            let (corpus, planted) = synth::gen_markov_corpus(&cfg)?;
            let (train_split, eval_split) = synth::split_by_parity(&corpus);
            let truths = synth::future_truths(&eval_split, file.prediction.z)?;
            let logits_a = synth::truths_to_logits(&truths, &cfg, 0)?;
            let logits_b = synth::truths_to_logits(&truths, &cfg, 1)?;

            std::fs::create_dir_all(&out_dir)?;
            let p = |name: &str| out_dir.join(name);
            write_json(&p("verbs.json"), &Vocabulary::numbered(Axis::Verb, cfg.c_verb)?)?;
            write_json(&p("nouns.json"), &Vocabulary::numbered(Axis::Noun, cfg.c_noun)?)?;
            write_jsonl(&p("corpus.jsonl"), &corpus)?;
            write_jsonl(&p("train.jsonl"), &train_split)?;
            write_jsonl(&p("truth.jsonl"), &truths)?;
            write_jsonl(&p("logits.jsonl"), &logits_a)?;
            write_jsonl(&p("logits_b.jsonl"), &logits_b)?;
            write_json(&p("planted.json"), &planted)?;
            ctx.say(format!(
                "wrote {} train / {} eval sequences to {}",
                train_split.len(),
                truths.len(),
                out_dir.display()
            ));
            let mut m = Manifest::new("synth-gen", Some(cfg.rng_seed), serde_json::to_value(&file)?);
            m.input("config", &config)?;
            for name in [
                "verbs.json",
                "nouns.json",
                "corpus.jsonl",
                "train.jsonl",
                "truth.jsonl",
                "logits.jsonl",
                "logits_b.jsonl",
                "planted.json",
            ] {
                m.output(name, &p(name))?;
            }
            ctx.finish(m, None)
        }
        SynthCommand::Experiment { config, out } => {
            let mut file: SynthFile = load_json(&config)?;
            if let Some(seed) = ctx.seed {
                file.synth.rng_seed = seed;
                file.prediction.rng_seed = seed;
            }
            let report = synth::run_refinement_experiment(&file.synth, &file.prediction)?;
            write_json(&out, &report)?;
            ctx.say(format!("{:<16} {:>8} {:>8} {:>8}", "", "Verb", "Noun", "Action"));
            let row = |name: &str, t: &synth::EdTriple| {
                ctx.say(format!("{name:<16} {:>8.4} {:>8.4} {:>8.4}", t.verb, t.noun, t.action))
            };
            row("raw argmax", &report.raw);
            if let Some(r) = &report.refined_argmax {
                row("refined argmax", r);
            }
            row(&format!("best of {}", file.prediction.k), &report.full);
            row("delta", &report.delta);
            let mut m = Manifest::new(
                "synth-experiment",
                Some(file.synth.rng_seed),
                serde_json::to_value(&file)?,
            );
            m.input("config", &config)?;
            m.output("report", &out)?;
            ctx.finish(m, None)
        }
    }
}

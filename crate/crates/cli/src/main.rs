use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qlabel::classify::TrainedModel;
use qlabel::eval::ReportFormat;
use qlabel::pipeline::{Pipeline, PipelineConfig, Stage};

/// Label issue-tracker exports as questions or not-questions.
#[derive(Parser)]
#[command(name = "qlabel", version)]
struct Cli {
    /// Master seed; every random stage derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Config file of `key = value` lines. Flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory for stage artifacts.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Set any config key, e.g. `--set hyper.k=3`. May be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Build label lexicons and select labeled issues.
    Prepare(PrepareArgs),
    /// Strip markdown structure and noise from labeled issues.
    Clean(CleanArgs),
    /// Drop non-English documents, tokenize and apply the token gate.
    Filter(FilterArgs),
    /// Produce document vectors.
    Embed(EmbedArgs),
    /// Balance, split and train a classifier.
    Train(TrainArgs),
    /// Evaluate the trained model on the held-out split.
    Eval(EvalArgs),
    /// Classify a single issue with a trained model.
    Predict(PredictArgs),
    /// Render the last evaluation report.
    Report(ReportArgs),
    /// Run prepare through eval in one go.
    Run(RunArgs),
}

type Overrides = Vec<(&'static str, String)>;

fn push<T: ToString>(o: &mut Overrides, key: &'static str, v: &Option<T>) {
    if let Some(v) = v {
        o.push((key, v.to_string()));
    }
}

#[derive(Args)]
struct PrepareArgs {
    /// Raw issue file, one JSON object per line.
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Minimum frequency for a label to join a lexicon.
    #[arg(long)]
    min_count: Option<u64>,
    /// Which categories must be closed: off, questions or all.
    #[arg(long)]
    closed_filter: Option<String>,
    #[arg(long)]
    max_records: Option<usize>,
}

impl PrepareArgs {
    fn overrides(&self, o: &mut Overrides) {
        push(o, "raw", &self.input.as_ref().map(|p| p.display()));
        push(o, "min_count", &self.min_count);
        push(o, "closed_filter", &self.closed_filter);
        push(o, "max_records", &self.max_records);
    }
}

#[derive(Args)]
struct CleanArgs {
    /// Pattern file replacing the bundled noise patterns.
    #[arg(long)]
    patterns: Option<PathBuf>,
    /// Where to write per-family removal counts (CSV).
    #[arg(long)]
    emit_stats: Option<PathBuf>,
}

impl CleanArgs {
    fn overrides(&self, o: &mut Overrides) {
        push(o, "patterns", &self.patterns.as_ref().map(|p| p.display()));
        push(o, "emit_stats", &self.emit_stats.as_ref().map(|p| p.display()));
    }
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    min_tokens: Option<usize>,
    #[arg(long)]
    max_tokens: Option<usize>,
    #[arg(long)]
    lang_threshold: Option<f64>,
}

impl FilterArgs {
    fn overrides(&self, o: &mut Overrides) {
        push(o, "min_tokens", &self.min_tokens);
        push(o, "max_tokens", &self.max_tokens);
        push(o, "lang_threshold", &self.lang_threshold);
    }
}

#[derive(Args)]
struct EmbedArgs {
    /// sbert, use or hashed.
    #[arg(long)]
    provider: Option<String>,
    /// Vector dimension (hashed provider only).
    #[arg(long)]
    dim: Option<usize>,
    /// Idf weighting for the hashed provider: on or off.
    #[arg(long)]
    idf: Option<String>,
    /// Precomputed vector CSV for the sbert and use providers.
    #[arg(long)]
    vectors_in: Option<PathBuf>,
    /// Warn about external vectors that are not unit length.
    #[arg(long)]
    verify_unit_norm: bool,
}

impl EmbedArgs {
    fn overrides(&self, o: &mut Overrides) {
        push(o, "provider", &self.provider);
        push(o, "dim", &self.dim);
        push(o, "idf", &self.idf);
        push(o, "external_vectors", &self.vectors_in.as_ref().map(|p| p.display()));
        if self.verify_unit_norm {
            o.push(("verify_unit_norm", "on".into()));
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// logreg, c45, random_forest, linear_svm or knn.
    #[arg(long)]
    algo: Option<String>,
    /// Hyperparameter override, e.g. `--hyper k=3`. May be repeated.
    #[arg(long, value_name = "NAME=VALUE")]
    hyper: Vec<String>,
    /// Downsample not-question records to this many before splitting.
    #[arg(long)]
    balance: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// stratified or uniform.
    #[arg(long)]
    split: Option<String>,
}

impl TrainArgs {
    fn overrides(&self, o: &mut Overrides) -> Result<()> {
        push(o, "algo", &self.algo);
        push(o, "balance_target", &self.balance);
        push(o, "train_fraction", &self.train_fraction);
        push(o, "split", &self.split);
        for h in &self.hyper {
            let (k, v) = h
                .split_once('=')
                .with_context(|| format!("--hyper expects NAME=VALUE, got `{h}`"))?;
            // Leaked once per flag; the process is short-lived.
            let key: &'static str = Box::leak(format!("hyper.{}", k.trim()).into_boxed_str());
            o.push((key, v.trim().to_string()));
        }
        Ok(())
    }
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Record the evaluation time in the report.
    #[arg(long)]
    timestamp: bool,
}

#[derive(Args)]
struct PredictArgs {
    /// Model file (default: <out>/model.json).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = "")]
    title: String,
    #[arg(long, default_value = "")]
    body: String,
    /// Read the body from a file instead.
    #[arg(long, conflicts_with = "body")]
    body_file: Option<PathBuf>,
    #[arg(long)]
    patterns: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// text, json or csv.
    #[arg(long, default_value = "text")]
    format: String,
    /// Write to a file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    prepare: PrepareArgs,
    #[command(flatten)]
    clean: CleanArgs,
    #[command(flatten)]
    filter: FilterArgs,
    #[command(flatten)]
    embed: EmbedArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    timestamp: bool,
}

fn build_config(cli: &Cli, extra: Overrides) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    let mut o: Overrides = Vec::new();
    push(&mut o, "seed", &cli.seed);
    push(&mut o, "threads", &cli.threads);
    push(&mut o, "out_dir", &cli.out.as_ref().map(|p| p.display()));
    o.extend(extra);
    for (k, v) in o {
        cfg.set(k, &v)?;
    }
    for s in &cli.set {
        let Some((k, v)) = s.split_once('=') else {
            bail!("--set expects KEY=VALUE, got `{s}`");
        };
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn stage_command(cli: &Cli, stage: Stage, o: Overrides) -> Result<()> {
    let pipeline = Pipeline::new(build_config(cli, o)?)?;
    let outcome = pipeline.run_stage(stage)?;
    println!("{}", outcome.summary.trim_end());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let mut o = Overrides::new();
    match &cli.command {
        Command::Prepare(a) => {
            a.overrides(&mut o);
            stage_command(cli, Stage::Prepare, o)
        }
        Command::Clean(a) => {
            a.overrides(&mut o);
            stage_command(cli, Stage::Clean, o)
        }
        Command::Filter(a) => {
            a.overrides(&mut o);
            stage_command(cli, Stage::Filter, o)
        }
        Command::Embed(a) => {
            a.overrides(&mut o);
            stage_command(cli, Stage::Embed, o)
        }
        Command::Train(a) => {
            a.overrides(&mut o)?;
            stage_command(cli, Stage::Train, o)
        }
        Command::Eval(a) => {
            a.train.overrides(&mut o)?;
            if a.timestamp {
                o.push(("timestamp", "on".into()));
            }
            stage_command(cli, Stage::Eval, o)
        }
        Command::Run(a) => {
            a.prepare.overrides(&mut o);
            a.clean.overrides(&mut o);
            a.filter.overrides(&mut o);
            a.embed.overrides(&mut o);
            a.train.overrides(&mut o)?;
            if a.timestamp {
                o.push(("timestamp", "on".into()));
            }
            let pipeline = Pipeline::new(build_config(cli, o)?)?;
            for outcome in pipeline.run_all()? {
                println!("[{}] {}", outcome.stage, outcome.summary.trim_end());
            }
            Ok(())
        }
        Command::Predict(a) => {
            push(&mut o, "patterns", &a.patterns.as_ref().map(|p| p.display()));
            let pipeline = Pipeline::new(build_config(cli, o)?)?;
            let model_path = a.model.clone().unwrap_or_else(|| pipeline.config().model_path());
            let model = TrainedModel::load(&model_path)?;
            let body = match &a.body_file {
                Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
                None => a.body.clone(),
            };
            let out = pipeline.predict(&model, &a.title, &body)?;
            println!("{}\t{:.4}", out.prediction.class, out.prediction.score);
            Ok(())
        }
        Command::Report(a) => {
            let format: ReportFormat = a.format.parse()?;
            let pipeline = Pipeline::new(build_config(cli, o)?)?;
            let text = pipeline.report(format)?;
            match &a.output {
                Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<qlabel::Error>())
        .map_or(3, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

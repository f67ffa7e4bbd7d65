use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use mindkb::pipeline::{
    parse_stages, split_override, EvaluationReport, Pipeline, PipelineError, Settings, REPORT_FILE, SEED_ENV,
};
use mindkb::synth::{synth_corpus, SyntheticSpec};
use mindkb::taxonomy::{load_taxonomy, EdgeKind, NodeId, Taxonomy, TaxonomyError};

const DEFAULT_CONFIG: &str = "config/pipeline.toml";

#[derive(Parser)]
#[command(name = "mindkb", version, about = "Knowledge-base driven depression screening pipeline")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Taxonomy utilities.
    Kb {
        #[command(subcommand)]
        command: KbCommand,
    },
    /// Lexicon utilities.
    Lexicon {
        #[command(subcommand)]
        command: LexiconCommand,
    },
    /// Run pipeline stages.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated subset of ingest,curate,score,train,evaluate,label, or `all`.
        #[arg(long, default_value = "all")]
        stages: String,
    },
    /// Write a synthetic corpus in the eRisk layout.
    Synth(SynthArgs),
    /// Print the evaluation report of an output directory.
    Report {
        #[command(flatten)]
        config: ConfigArgs,
        /// Report JSON to print instead of the configured output directory's.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum KbCommand {
    /// Check structural invariants; prints one violation per line.
    Validate(TaxonomyArgs),
    /// Print the taxonomy as an indented tree.
    Show {
        #[command(flatten)]
        taxonomy: TaxonomyArgs,
        /// Print the JSON document instead.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum LexiconCommand {
    /// Preprocess lexicons and resolve instance bindings.
    Build {
        #[command(flatten)]
        config: ConfigArgs,
        /// Write the resolved bindings as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long, default_value = DEFAULT_CONFIG)]
    config: PathBuf,
    /// Override a config value, e.g. `scoring.standardize_all=false` or
    /// `classifier.mode=weighted_boosting`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Settings, PipelineError> {
        let overrides = self
            .overrides
            .iter()
            .map(|s| split_override(s))
            .collect::<Result<Vec<_>, _>>()?;
        Settings::load(&self.config, &overrides)
    }
}

#[derive(Args)]
struct TaxonomyArgs {
    /// Taxonomy JSON; defaults to the one named in the pipeline config.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

impl TaxonomyArgs {
    fn path(&self) -> Result<PathBuf, PipelineError> {
        match &self.taxonomy {
            Some(p) => Ok(p.clone()),
            None => Ok(self.config.load()?.pipeline.taxonomy),
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for the corpus.
    #[arg(long)]
    out: PathBuf,
    /// Pipeline config naming the lexicons, bindings and phrase list.
    #[arg(long, default_value = DEFAULT_CONFIG)]
    config: PathBuf,
    #[arg(long)]
    n_users: Option<usize>,
    #[arg(long)]
    minority_fraction: Option<f64>,
    #[arg(long)]
    signal_strength: Option<f64>,
    #[arg(long)]
    posts_per_user: Option<usize>,
    #[arg(long)]
    vocabulary_size: Option<usize>,
    #[arg(long)]
    words_per_post: Option<usize>,
    /// Defaults to $MINDKB_SEED, then 42.
    #[arg(long)]
    seed: Option<u64>,
}

/// Error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure { code: e.exit_code() as u8, error: e.into() }
    }
}

fn io_failure(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: e.into() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", describe(&f.error));
            ExitCode::from(f.code)
        }
    }
}

/// The error and its causes, skipping causes whose text the message
/// already includes.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg.push_str(": ");
            msg.push_str(&c);
        }
    }
    msg
}

fn dispatch(cmd: Command) -> Result<u8, Failure> {
    match cmd {
        Command::Kb { command: KbCommand::Validate(args) } => kb_validate(&args.path()?),
        Command::Kb { command: KbCommand::Show { taxonomy, json } } => kb_show(&taxonomy.path()?, json),
        Command::Lexicon { command: LexiconCommand::Build { config, out } } => lexicon_build(&config.load()?, out.as_deref()),
        Command::Run { config, stages } => run(config.load()?, &stages),
        Command::Synth(args) => synth(&args),
        Command::Report { config, input } => show_report(&config, input.as_deref()),
    }
}

fn load_kb(path: &Path) -> Result<Taxonomy, Failure> {
    load_taxonomy(path).map_err(|e| match e {
        TaxonomyError::Io { .. } | TaxonomyError::Parse(_) => io_failure(e),
        other => Failure { code: 1, error: other.into() },
    })
}

fn kb_validate(path: &Path) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read taxonomy {}", path.display()))
        .map_err(io_failure)?;
    let kb = Taxonomy::from_json(&text).map_err(io_failure)?;
    let violations = kb.validate();
    if violations.is_empty() {
        println!("{}: {} nodes, {} edges, no violations", path.display(), kb.node_count(), kb.edges.len());
        return Ok(0);
    }
    for v in &violations {
        println!("{v}");
    }
    eprintln!("{} violation(s) in {}", violations.len(), path.display());
    Ok(1)
}

fn kb_show(path: &Path, json: bool) -> Result<u8, Failure> {
    let kb = load_kb(path)?;
    if json {
        println!("{}", kb.to_json());
        return Ok(0);
    }
    println!("{} {}", kb.name, kb.version);
    fn walk(kb: &Taxonomy, id: &NodeId) {
        if let Some(n) = kb.node(id) {
            let indent = "  ".repeat(n.level.saturating_sub(1) as usize);
            println!("{indent}{} [{}] L{}", n.label, n.id, n.level);
        }
        for c in kb.children(id) {
            walk(kb, c);
        }
    }
    match kb.root() {
        Some(r) => walk(&kb, &r.id),
        None => eprintln!("no root node"),
    }
    let cross: Vec<_> = kb.edges.iter().filter(|e| e.kind == EdgeKind::Cross).collect();
    if !cross.is_empty() {
        println!("\ncross edges:");
        for e in cross {
            let t = e.cross_type.as_ref().map(|t| t.to_string()).unwrap_or_default();
            println!("  {} -[{}]-> {}", e.from, t, e.to);
        }
    }
    Ok(0)
}

fn lexicon_build(settings: &Settings, out: Option<&Path>) -> Result<u8, Failure> {
    let (set, _) = settings.bindings(mindkb::pipeline::Stage::Score)?;
    for f in &set.features {
        match f {
            mindkb::lexicon::Feature::Lexical(b) => println!("{}: {} stems", b.instance, b.merged_stems.len()),
            mindkb::lexicon::Feature::Phrases { instance, list } => println!("{instance}: phrase list {list}"),
        }
    }
    if let Some(path) = out {
        let json = serde_json::to_string_pretty(&set).map_err(io_failure)?;
        std::fs::write(path, json)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(io_failure)?;
    }
    Ok(0)
}

fn run(settings: Settings, stages: &str) -> Result<u8, Failure> {
    let stages = parse_stages(stages).map_err(|e| io_failure(anyhow::anyhow!(e)))?;
    let pipeline = Pipeline::new(settings);
    let summary = pipeline.run(&stages)?;
    let m = &summary.manifest;
    for s in &m.stages {
        let ms = m.timings_ms.get(s.as_str()).copied().unwrap_or(0);
        println!("{:<9} {:>8} ms  {}", s.as_str(), ms, s.output());
    }
    for w in &m.warnings {
        println!("warning: {w}");
    }
    if let Some(ev) = &summary.evaluation {
        println!(
            "held-out accuracy {:.4}, class-1 f1 {:.4}",
            ev.holdout.report.accuracy, ev.holdout.report.classes[1].f1
        );
        if let Some(cv) = &ev.cross_validation {
            println!("{}-fold cv accuracy {:.4} ± {:.4}", cv.folds, cv.mean_accuracy, cv.std_accuracy);
        }
    }
    println!("content hash {}", m.content_hash);
    Ok(0)
}

fn synth(args: &SynthArgs) -> Result<u8, Failure> {
    let settings = Settings::load_with_seed(&args.config, &[], None)?;
    let (words, phrases) = settings.signal_vocabulary()?;
    let env_seed = match std::env::var(SEED_ENV) {
        Ok(s) => Some(
            s.trim()
                .parse::<u64>()
                .map_err(|_| io_failure(anyhow::anyhow!("{SEED_ENV}=`{s}` is not an integer")))?,
        ),
        Err(_) => None,
    };
    let d = SyntheticSpec::default();
    let spec = SyntheticSpec {
        n_users: args.n_users.unwrap_or(d.n_users),
        minority_fraction: args.minority_fraction.unwrap_or(d.minority_fraction),
        signal_strength: args.signal_strength.unwrap_or(d.signal_strength),
        posts_per_user: args.posts_per_user.unwrap_or(d.posts_per_user),
        vocabulary_size: args.vocabulary_size.unwrap_or(d.vocabulary_size),
        words_per_post: args.words_per_post.unwrap_or(d.words_per_post),
        seed: args.seed.or(env_seed).unwrap_or(d.seed),
        ..d
    };
    let manifest = synth_corpus(&spec, &words, &phrases, &args.out).map_err(|e| match e {
        mindkb::synth::SynthError::InvalidSpec(_) => Failure { code: 1, error: e.into() },
        other => io_failure(other),
    })?;
    let minority = manifest.users.iter().filter(|u| u.label == 1).count();
    println!(
        "wrote {} users ({} minority) to {}",
        manifest.users.len(),
        minority,
        args.out.display()
    );
    Ok(0)
}

fn show_report(config: &ConfigArgs, input: Option<&Path>) -> Result<u8, Failure> {
    let path = match input {
        Some(p) => p.to_path_buf(),
        None => config.load()?.pipeline.output_dir.join(REPORT_FILE),
    };
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(io_failure)?;
    let report: EvaluationReport = serde_json::from_str(&text)
        .with_context(|| format!("malformed report {}", path.display()))
        .map_err(io_failure)?;
    print!("{}", report.to_text());
    Ok(0)
}

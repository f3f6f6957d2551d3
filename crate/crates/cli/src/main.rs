//! `ten`: runs the distillation pipeline one stage at a time or end to end.
//!
//! Exit status: 0 on success, 2 for configuration or usage problems, 3 when
//! a stage fails (partial outputs are kept and the manifest says `failed`).

mod config;
mod manifest;
mod stages;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use ten_core::corpus::{self, Source, Split};
use ten_core::distill;
use ten_core::eval::Prediction;

use config::{ConfigErrors, Loaded};
use manifest::{OutputDir, StaleOutput};
use stages::Backends;

#[derive(Parser)]
#[command(name = "ten", version, about = "Numeral-aware rationale distillation pipeline")]
struct Cli {
    /// Pipeline config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Use the mock backend regardless of the config.
    #[arg(long, global = true)]
    mock: bool,
    /// Replace output from an earlier run.
    #[arg(long, global = true)]
    force: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus preparation.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Teacher supervision and SFT data.
    #[command(subcommand)]
    Distill(DistillCmd),
    /// Preference pairs.
    #[command(subcommand)]
    Prefs(PrefsCmd),
    /// Scoring generated headlines.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Operation inference report.
    #[command(subcommand)]
    Oracle(OracleCmd),
    /// All stages in sequence.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Deduplicate and filter a raw corpus.
    Prep {
        #[arg(long, default_value = "numhg")]
        source: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        min_words: Option<usize>,
        #[arg(long)]
        max_words: Option<usize>,
    },
}

#[derive(Subcommand)]
enum DistillCmd {
    /// Zero-shot teacher drafts for the demo samples.
    Demos,
    /// Validate the demo directory.
    CheckDemos {
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Five-shot teacher supervision over the training split.
    Supervise,
    /// SFT files from a supervision file.
    Emit {
        #[arg(long)]
        supervision: PathBuf,
    },
}

#[derive(Subcommand)]
enum PrefsCmd {
    /// Sample candidates and select one preference pair per article.
    Build {
        #[arg(long)]
        supervision: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        margin: Option<f64>,
    },
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Score a predictions file against a corpus.
    Run {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "numhg")]
        source: String,
    },
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Infer the operation behind each headline numeral.
    Infer {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Rationales whose listed figures join the article numerals.
        #[arg(long)]
        demos: Option<PathBuf>,
        #[arg(long)]
        supervision: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// Every stage from corpus prep to evaluation.
    All,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Config(String),
    Stage(anyhow::Error),
}

impl From<ConfigErrors> for Failure {
    fn from(e: ConfigErrors) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<StaleOutput> for Failure {
    fn from(e: StaleOutput) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Stage(e)
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("TEN_LOG").unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("{}", msg.trim_end());
            ExitCode::from(2)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let ctx = Ctx {
        config: cli.config,
        mock: cli.mock,
        force: cli.force,
        out: cli.out,
    };
    match cli.command {
        Command::Corpus(CorpusCmd::Prep {
            source,
            input,
            min_words,
            max_words,
        }) => corpus_prep(&ctx, &source, &input, min_words, max_words),
        Command::Distill(DistillCmd::Demos) => distill_demos(&ctx),
        Command::Distill(DistillCmd::CheckDemos { dir }) => check_demos(&ctx, dir),
        Command::Distill(DistillCmd::Supervise) => supervise(&ctx),
        Command::Distill(DistillCmd::Emit { supervision }) => emit(&ctx, &supervision),
        Command::Prefs(PrefsCmd::Build {
            supervision,
            k,
            temperature,
            margin,
        }) => prefs_build(&ctx, &supervision, k, temperature, margin),
        Command::Eval(EvalCmd::Run { pred, corpus, source }) => eval_run(&ctx, &pred, &corpus, &source),
        Command::Oracle(OracleCmd::Infer {
            corpus,
            demos,
            supervision,
        }) => oracle_infer(&ctx, corpus, demos, supervision),
        Command::Pipeline(PipelineCmd::All) => pipeline_all(&ctx),
    }
}

struct Ctx {
    config: Option<PathBuf>,
    mock: bool,
    force: bool,
    out: Option<PathBuf>,
}

impl Ctx {
    fn loaded(&self) -> Result<Loaded, Failure> {
        let path = self
            .config
            .as_deref()
            .ok_or_else(|| Failure::Config("this command needs --config".into()))?;
        Ok(config::load(path, self.mock)?)
    }

    /// `--out`, else `<run.out_dir>/<stage>` from the config.
    fn out_dir(&self, loaded: Option<&Loaded>, stage: &str) -> Result<PathBuf, Failure> {
        match (&self.out, loaded) {
            (Some(out), _) => Ok(out.clone()),
            (None, Some(l)) => Ok(l.out_dir().join(stage)),
            (None, None) => Err(Failure::Config("this command needs --out or --config".into())),
        }
    }

    fn claim(&self, loaded: Option<&Loaded>, stage: &str, command: &str) -> Result<OutputDir, Failure> {
        let dir = self.out_dir(loaded, stage)?;
        Ok(OutputDir::claim(&dir, command, self.force)?)
    }
}

/// Writes the manifest whatever the outcome, then maps the outcome to an exit class.
fn finish<T>(out: OutputDir, outcome: Result<T>) -> Result<T, Failure> {
    let path = out.finish(&outcome)?;
    match outcome {
        Ok(v) => {
            println!("wrote {}", path.display());
            Ok(v)
        }
        Err(e) => Err(Failure::Stage(e)),
    }
}

fn parse_source(s: &str) -> Result<Source, Failure> {
    Source::from_str(s).map_err(|e| Failure::Config(format!("--source: {e}")))
}

fn corpus_prep(ctx: &Ctx, source: &str, input: &Path, min: Option<usize>, max: Option<usize>) -> Result<(), Failure> {
    let source = parse_source(source)?;
    if !input.exists() {
        return Err(Failure::Config(format!("--in: not found: {}", input.display())));
    }
    let rules = stages::prep_rules(source, min, max);
    let mut out = ctx.claim(None, "corpus", "corpus prep")?;
    #[derive(Serialize)]
    struct Args {
        source: String,
        min_words: usize,
        max_words: usize,
    }
    out.set_config(Args {
        source: source.to_string(),
        min_words: rules.min_words,
        max_words: rules.max_words,
    });
    let outcome = (|| {
        out.input(file_label(input), input)?;
        stages::run_prep(input, rules, &mut out)
    })();
    let prepared = finish(out, outcome)?;
    println!("kept {} records", prepared.len());
    Ok(())
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn config_corpus(loaded: &Loaded) -> Result<corpus::Corpus> {
    let c = &loaded.config.corpus;
    let rules = stages::prep_rules(loaded.source, c.min_words, c.max_words);
    Ok(stages::prepared_corpus(&loaded.corpus_path(), rules)?.0)
}

fn check_demos(ctx: &Ctx, dir: Option<PathBuf>) -> Result<(), Failure> {
    let dir = match dir {
        Some(d) => d,
        None => ctx.loaded()?.demo_dir(),
    };
    let checks = distill::check_demos(&dir).map_err(|e| Failure::Config(e.to_string()))?;
    let mut failed = 0;
    for c in &checks {
        match &c.result {
            Ok(op) => println!("ok    {:<20} {op}", c.name),
            Err(e) => {
                failed += 1;
                println!("FAIL  {:<20} {e}", c.name);
            }
        }
    }
    if failed > 0 || checks.is_empty() {
        return Err(Failure::Stage(anyhow::anyhow!("{failed} of {} demos invalid", checks.len())));
    }
    Ok(())
}

fn distill_demos(ctx: &Ctx) -> Result<(), Failure> {
    let loaded = ctx.loaded()?;
    let mut out = ctx.claim(Some(&loaded), "demos", "distill demos")?;
    let outcome = (|| {
        stages::record_config_inputs(&mut out, &loaded)?;
        let backends = Backends::new(&loaded)?;
        let demos = stages::ordered_demos(&loaded)?;
        let samples: Vec<_> = demos.iter().map(|d| d.sample.clone()).collect();
        let gateway = backends.gateway(&loaded.config.teacher)?;
        let settings = loaded.config.teacher.settings(0.0);
        let drafts = distill::draft_demo_rationales(&samples, &gateway, &settings, loaded.parallelism())?;
        let mut report = Vec::new();
        for (demo, (text, check)) in demos.iter().zip(drafts) {
            out.write_text(&format!("{}.txt", demo.name), &text)?;
            report.push(serde_json::json!({"name": demo.name, "valid": check.is_ok(), "error": check.err()}));
        }
        out.write_json("drafts.json", &report)?;
        out.set_summary(&report);
        Ok(())
    })();
    finish(out, outcome)
}

fn supervise(ctx: &Ctx) -> Result<(), Failure> {
    let loaded = ctx.loaded()?;
    let mut out = ctx.claim(Some(&loaded), "distill", "distill supervise")?;
    let outcome = (|| {
        stages::record_config_inputs(&mut out, &loaded)?;
        let backends = Backends::new(&loaded)?;
        let train = config_corpus(&loaded)?.split(Split::Train);
        stages::run_supervise(&loaded, &backends, &train, &mut out).map(|_| ())
    })();
    finish(out, outcome)
}

fn emit(ctx: &Ctx, supervision: &Path) -> Result<(), Failure> {
    let loaded = ctx.loaded()?;
    let mut out = ctx.claim(Some(&loaded), "sft", "distill emit")?;
    let outcome = (|| {
        stages::record_config_inputs(&mut out, &loaded)?;
        out.input(file_label(supervision), supervision)?;
        let records = stages::read_supervision(supervision)?;
        let train = config_corpus(&loaded)?.split(Split::Train);
        stages::run_emit(&loaded, &records, &train, &mut out)
    })();
    finish(out, outcome)
}

fn prefs_build(
    ctx: &Ctx,
    supervision: &Path,
    k: Option<usize>,
    temperature: Option<f64>,
    margin: Option<f64>,
) -> Result<(), Failure> {
    let mut loaded = ctx.loaded()?;
    let p = &mut loaded.config.prefs;
    p.k = k.unwrap_or(p.k);
    p.temperature = temperature.unwrap_or(p.temperature);
    p.margin = margin.unwrap_or(p.margin);
    let loaded = config::validate(loaded.config, loaded.base)?;
    let mut out = ctx.claim(Some(&loaded), "prefs", "prefs build")?;
    let outcome = (|| {
        stages::record_config_inputs(&mut out, &loaded)?;
        out.input(file_label(supervision), supervision)?;
        let records = stages::read_supervision(supervision)?;
        let backends = Backends::new(&loaded)?;
        let train = config_corpus(&loaded)?.split(Split::Train);
        stages::run_prefs(&loaded, &backends, &stages::prefs_options(&loaded), &train, &records, &mut out).map(|_| ())
    })();
    finish(out, outcome)
}

fn eval_run(ctx: &Ctx, pred: &Path, corpus_path: &Path, source: &str) -> Result<(), Failure> {
    let source = parse_source(source)?;
    for (flag, p) in [("--pred", pred), ("--corpus", corpus_path)] {
        if !p.exists() {
            return Err(Failure::Config(format!("{flag}: not found: {}", p.display())));
        }
    }
    let mut out = ctx.claim(None, "eval", "eval run")?;
    out.set_config(serde_json::json!({ "source": source.to_string() }));
    let outcome = (|| {
        out.input(file_label(pred), pred)?;
        out.input(file_label(corpus_path), corpus_path)?;
        let predictions: Vec<Prediction> = distill::read_jsonl(pred)?;
        let corpus = corpus::load_corpus(corpus_path, source)?;
        let report = stages::write_eval(&predictions, &corpus, &mut out)?;
        print!("{}", ten_core::eval::render_table(&report));
        Ok(())
    })();
    finish(out, outcome)
}

fn oracle_infer(ctx: &Ctx, corpus_path: Option<PathBuf>, demos: Option<PathBuf>, supervision: Option<PathBuf>) -> Result<(), Failure> {
    let loaded = match (&corpus_path, &ctx.config) {
        (Some(_), None) => None,
        _ => Some(ctx.loaded()?),
    };
    let corpus_path = corpus_path.or_else(|| loaded.as_ref().map(Loaded::corpus_path)).expect("checked above");
    let demo_dir = demos.or_else(|| loaded.as_ref().map(Loaded::demo_dir));
    let source = loaded.as_ref().map(|l| l.source).unwrap_or(Source::Numhg);

    let corpus = corpus::load_corpus(&corpus_path, source).map_err(|e| Failure::Config(e.to_string()))?;
    let mut rationales = HashMap::new();
    if let Some(dir) = &demo_dir {
        let demos = distill::load_demos(dir).map_err(|e| Failure::Config(e.to_string()))?;
        rationales.extend(stages::demo_rationales(&demos));
    }
    if let Some(path) = &supervision {
        let records = stages::read_supervision(path)?;
        rationales.extend(records.into_iter().filter(|r| r.valid).map(|r| (r.sample_id, r.rationale_text)));
    }
    let rows = stages::oracle_rows(&corpus, &rationales);
    print!("{}", stages::render_oracle(&rows));
    let labelled = rows.iter().filter(|r| r.recovered.is_some()).count();
    let recovered = rows.iter().filter(|r| r.recovered == Some(true)).count();
    println!("annotated operation recovered: {recovered}/{labelled}");

    if ctx.out.is_some() || loaded.is_some() {
        let mut out = ctx.claim(loaded.as_ref(), "oracle", "oracle infer")?;
        let outcome = (|| {
            out.input(file_label(&corpus_path), &corpus_path)?;
            if let Some(dir) = &demo_dir {
                out.input_dir("demos", dir)?;
            }
            if let Some(path) = &supervision {
                out.input(file_label(path), path)?;
            }
            distill::write_jsonl(&out.file("oracle.jsonl"), &rows)?;
            out.record("oracle.jsonl")?;
            out.set_summary(serde_json::json!({ "labelled": labelled, "recovered": recovered }));
            Ok(())
        })();
        finish(out, outcome)?;
    }
    Ok(())
}

fn pipeline_all(ctx: &Ctx) -> Result<(), Failure> {
    let loaded = ctx.loaded()?;
    let root = ctx.out.clone().unwrap_or_else(|| loaded.out_dir());
    let mut top = OutputDir::claim(&root, "pipeline all", ctx.force)?;
    top.set_config(&loaded.config);
    let outcome = run_all(&loaded, &mut top);
    finish(top, outcome)
}

fn run_all(loaded: &Loaded, top: &mut OutputDir) -> Result<()> {
    stages::record_config_inputs(top, loaded)?;
    let backends = Backends::new(loaded)?;
    let c = &loaded.config.corpus;
    let rules = stages::prep_rules(loaded.source, c.min_words, c.max_words);

    let mut stage = |name: &str, command: &str, body: &mut dyn FnMut(&mut OutputDir) -> Result<()>| -> Result<()> {
        let mut out = top.child(name, command)?;
        stages::record_config_inputs(&mut out, loaded)?;
        let outcome = body(&mut out);
        out.finish(&outcome)?;
        top.record(&format!("{name}/{}", manifest::MANIFEST))?;
        outcome.with_context(|| format!("stage {name}"))
    };

    let mut prepared = None;
    stage("corpus", "corpus prep", &mut |out| {
        prepared = Some(stages::run_prep(&loaded.corpus_path(), rules, out)?);
        Ok(())
    })?;
    let prepared = prepared.expect("set by stage");
    let train = prepared.split(Split::Train);

    let mut records = Vec::new();
    stage("distill", "distill supervise", &mut |out| {
        records = stages::run_supervise(loaded, &backends, &train, out)?;
        stages::run_emit(loaded, &records, &train, out)
    })?;

    let options = stages::prefs_options(loaded);
    stage("prefs", "prefs build", &mut |out| {
        stages::run_prefs(loaded, &backends, &options, &train, &records, out).map(|_| ())
    })?;

    let (eval_corpus, split) = stages::eval_split(&prepared);
    if split == Split::Train {
        tracing::warn!("no test split; evaluating on the training split");
    }
    let mut report = None;
    stage("eval", "eval run", &mut |out| {
        report = Some(stages::run_predict_eval(loaded, &backends, &eval_corpus, out)?);
        Ok(())
    })?;
    let report = report.expect("set by stage");
    top.set_summary(serde_json::json!({
        "eval_split": split,
        "overall_acc": report.overall_acc,
        "rouge1": report.rouge1,
    }));
    Ok(())
}

//! Stage bodies shared by the single-stage commands and `pipeline all`.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use ten_core::corpus::{self, Corpus, PrepRules, Split};
use ten_core::distill::{self, DemoExample, SupervisionOptions, SupervisionRecord};
use ten_core::eval::{self, EvalReport, Prediction};
use ten_core::llm_gateway::{
    Backend, ChatMessage, Gateway, HttpBackend, HttpEndpoint, MockBackend,
};
use ten_core::numeral::{canonical, infer_operations, OperationType};
use ten_core::prefs::{self, Endpoint, PrefsOptions};
use ten_core::synthetic::SyntheticResponder;

use crate::config::{EndpointSection, Loaded};
use crate::manifest::OutputDir;

/// Teacher decoding defaults to greedy; the student samplers override per call.
const TEACHER_TEMPERATURE: f64 = 0.0;

pub fn prep_rules(source: corpus::Source, min: Option<usize>, max: Option<usize>) -> PrepRules {
    let mut rules = PrepRules::for_source(source);
    rules.min_words = min.unwrap_or(rules.min_words);
    rules.max_words = max.unwrap_or(rules.max_words);
    rules
}

/// Shared mock backend, built once per run so all roles see the same fixtures.
pub struct Backends {
    mock: Option<Arc<dyn Backend>>,
}

impl Backends {
    pub fn new(loaded: &Loaded) -> Result<Self> {
        if !loaded.config.run.mock {
            return Ok(Self { mock: None });
        }
        let dir = loaded.fixture_dir().context("mock mode needs run.fixture_dir")?;
        let mut mock = MockBackend::from_dir(&dir).with_context(|| format!("loading fixtures from {}", dir.display()))?;
        if !loaded.config.run.mock_strict {
            mock = mock.with_fallback(SyntheticResponder);
        }
        Ok(Self {
            mock: Some(Arc::new(mock)),
        })
    }

    pub fn gateway(&self, ep: &EndpointSection) -> Result<Gateway> {
        if let Some(mock) = &self.mock {
            return Ok(Gateway::from_arc(mock.clone()));
        }
        let url = ep.url.clone().context("endpoint url missing")?;
        let key = std::env::var(&ep.api_key_env).ok().filter(|k| !k.is_empty());
        let backend = HttpBackend::with_api_key(
            HttpEndpoint {
                url,
                timeout: ep.timeout(),
            },
            key,
        )
        .map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(Gateway::new(backend).with_retry(ep.retry()))
    }
}

pub fn record_config_inputs(out: &mut OutputDir, loaded: &Loaded) -> Result<()> {
    out.set_config(&loaded.config);
    out.input(loaded.config.corpus.path.clone(), &loaded.corpus_path())?;
    out.input_dir(&loaded.config.distill.demo_dir, &loaded.demo_dir())?;
    if let (true, Some(dir), Some(label)) = (
        loaded.config.run.mock,
        loaded.fixture_dir(),
        loaded.config.run.fixture_dir.as_deref(),
    ) {
        out.input_dir(label, &dir)?;
    }
    Ok(())
}

/// Loads a corpus and applies the prep rules in memory.
pub fn prepared_corpus(path: &Path, rules: PrepRules) -> Result<(Corpus, corpus::PrepReport)> {
    let raw = corpus::load_corpus(path, rules.source)?;
    Ok(corpus::prepare(&raw, rules))
}

pub fn run_prep(input: &Path, rules: PrepRules, out: &mut OutputDir) -> Result<Corpus> {
    let (prepared, report) = prepared_corpus(input, rules)?;
    corpus::write_corpus(&prepared, &out.file("prepared.jsonl")).context("writing prepared.jsonl")?;
    out.record("prepared.jsonl")?;
    out.write_json("prep_report.json", &report)?;
    out.set_summary(&report);
    tracing::info!(?report, "corpus prepared");
    Ok(prepared)
}

pub fn ordered_demos(loaded: &Loaded) -> Result<Vec<DemoExample>> {
    let demos = distill::load_demos(&loaded.demo_dir())?;
    Ok(distill::order_demos(&demos, &loaded.demo_order)?)
}

pub fn run_supervise(loaded: &Loaded, backends: &Backends, train: &Corpus, out: &mut OutputDir) -> Result<Vec<SupervisionRecord>> {
    let demos = ordered_demos(loaded)?;
    let gateway = backends.gateway(&loaded.config.teacher)?;
    let settings = loaded.config.teacher.settings(TEACHER_TEMPERATURE);
    let options = SupervisionOptions {
        parallelism: loaded.parallelism(),
        max_article_chars: loaded.config.distill.max_article_chars,
        retry_invalid: loaded.config.distill.retry_invalid,
    };
    let (records, summary) = distill::generate_supervision(train, &demos, &gateway, &settings, &options)?;
    distill::write_supervision(&out.file("supervision.jsonl"), &records)?;
    out.record("supervision.jsonl")?;
    out.write_json("supervision_summary.json", &summary)?;
    out.set_summary(&summary);
    tracing::info!(valid = summary.valid, total = summary.total, "teacher supervision done");
    Ok(records)
}

#[derive(Serialize)]
struct EmitSummary {
    sft_rationale: usize,
    sft_headline: usize,
}

pub fn run_emit(loaded: &Loaded, records: &[SupervisionRecord], train: &Corpus, out: &mut OutputDir) -> Result<()> {
    let cap = loaded.config.distill.max_article_chars;
    let a = distill::emit_sft_rationale_capped(records, &out.file("sft_rationale.jsonl"), cap)?;
    out.record("sft_rationale.jsonl")?;
    let b = distill::emit_sft_headline_capped(records, train, &out.file("sft_headline.jsonl"), cap)?;
    out.record("sft_headline.jsonl")?;
    let summary = EmitSummary {
        sft_rationale: a,
        sft_headline: b,
    };
    out.write_json("sft_summary.json", &summary)?;
    out.set_summary(&summary);
    Ok(())
}

#[derive(Serialize)]
struct CandidateRow<'a> {
    id: &'a str,
    drawn: usize,
    unique: usize,
    candidates: &'a [prefs::Candidate],
    errors: &'a [String],
}

pub fn prefs_options(loaded: &Loaded) -> PrefsOptions {
    let p = &loaded.config.prefs;
    PrefsOptions {
        k: p.k,
        temperature: p.temperature,
        margin: p.margin,
        rouge: p.rouge,
        parallelism: loaded.parallelism(),
        max_article_chars: loaded.config.distill.max_article_chars,
    }
}

pub fn run_prefs(
    loaded: &Loaded,
    backends: &Backends,
    options: &PrefsOptions,
    train: &Corpus,
    records: &[SupervisionRecord],
    out: &mut OutputDir,
) -> Result<prefs::PrefsSummary> {
    let references: HashMap<String, String> = records
        .iter()
        .filter(|r| r.valid)
        .map(|r| (r.sample_id.clone(), r.rationale_text.clone()))
        .collect();
    let rationale_gw = backends.gateway(&loaded.config.rationale_generator)?;
    let headline_gw = backends.gateway(&loaded.config.headline_generator)?;
    let r_settings = loaded.config.rationale_generator.settings(options.temperature);
    let h_settings = loaded.config.headline_generator.settings(0.0);
    let (pairs, summary, sets) = prefs::build_preference_dataset(
        train,
        &references,
        Endpoint {
            gateway: &rationale_gw,
            settings: &r_settings,
        },
        Endpoint {
            gateway: &headline_gw,
            settings: &h_settings,
        },
        options,
    )?;
    prefs::emit_dpo(&pairs, &out.file("dpo.jsonl"))?;
    out.record("dpo.jsonl")?;
    let rows: Vec<CandidateRow> = sets
        .iter()
        .map(|s| CandidateRow {
            id: &s.sample_id,
            drawn: s.drawn,
            unique: s.unique,
            candidates: &s.candidates,
            errors: &s.errors,
        })
        .collect();
    distill::write_jsonl(&out.file("candidates.jsonl"), &rows)?;
    out.record("candidates.jsonl")?;
    out.write_json("prefs_summary.json", &summary)?;
    out.set_summary(&summary);
    tracing::info!(pairs = summary.pairs, samples = summary.samples, "preference pairs built");
    Ok(summary)
}

#[derive(Serialize)]
struct PredictionRow<'a> {
    id: &'a str,
    generated_headline: &'a str,
    rationale: &'a str,
}

/// Generates a headline for every evaluation sample with greedy decoding,
/// then scores them.
pub fn run_predict_eval(loaded: &Loaded, backends: &Backends, eval_corpus: &Corpus, out: &mut OutputDir) -> Result<EvalReport> {
    let cap = loaded.config.distill.max_article_chars;
    let parallelism = loaded.parallelism();
    let rationale_gw = backends.gateway(&loaded.config.rationale_generator)?;
    let headline_gw = backends.gateway(&loaded.config.headline_generator)?;
    let r_settings = loaded.config.rationale_generator.settings(0.0);
    let h_settings = loaded.config.headline_generator.settings(0.0);

    let requests: Vec<_> = eval_corpus
        .samples
        .iter()
        .map(|s| {
            let prompt = distill::rationale_prompt(distill::truncate_chars(&s.article, cap));
            r_settings.request(vec![ChatMessage::user(prompt)], 1)
        })
        .collect();
    let rationales = rationale_gw.complete_batch(&requests, parallelism);
    let mut texts = Vec::with_capacity(requests.len());
    for (s, r) in eval_corpus.samples.iter().zip(rationales.results) {
        let out = r.with_context(|| format!("rationale for {}", s.id))?;
        texts.push(out.completions.into_iter().next().unwrap_or_default());
    }

    let requests: Vec<_> = eval_corpus
        .samples
        .iter()
        .zip(&texts)
        .map(|(s, r)| {
            let prompt = distill::headline_prompt(distill::truncate_chars(&s.article, cap), r);
            h_settings.request(vec![ChatMessage::user(prompt)], 1)
        })
        .collect();
    let headlines = headline_gw.complete_batch(&requests, parallelism);
    let mut predictions = Vec::with_capacity(requests.len());
    for (s, h) in eval_corpus.samples.iter().zip(headlines.results) {
        let out = h.with_context(|| format!("headline for {}", s.id))?;
        predictions.push(Prediction {
            id: s.id.clone(),
            generated_headline: out.completions.into_iter().next().unwrap_or_default(),
        });
    }

    let rows: Vec<PredictionRow> = predictions
        .iter()
        .zip(&texts)
        .map(|(p, r)| PredictionRow {
            id: &p.id,
            generated_headline: &p.generated_headline,
            rationale: r,
        })
        .collect();
    distill::write_jsonl(&out.file("predictions.jsonl"), &rows)?;
    out.record("predictions.jsonl")?;
    write_eval(&predictions, eval_corpus, out)
}

pub fn write_eval(predictions: &[Prediction], corpus: &Corpus, out: &mut OutputDir) -> Result<EvalReport> {
    let report = eval::evaluate(predictions, corpus);
    out.write_json("eval_report.json", &report)?;
    out.write_text("eval_report.txt", &eval::render_table(&report))?;
    out.set_summary(&report);
    Ok(report)
}

/// Test split when present, otherwise the training split.
pub fn eval_split(corpus: &Corpus) -> (Corpus, Split) {
    let test = corpus.split(Split::Test);
    if test.is_empty() {
        (corpus.split(Split::Train), Split::Train)
    } else {
        (test, Split::Test)
    }
}

#[derive(Debug, Serialize)]
pub struct OracleRow {
    pub id: String,
    pub correct_numeral: String,
    pub annotated: Option<OperationType>,
    pub inferred: BTreeSet<OperationType>,
    pub recovered: Option<bool>,
}

pub fn oracle_rows(corpus: &Corpus, rationales: &HashMap<String, String>) -> Vec<OracleRow> {
    corpus
        .samples
        .iter()
        .filter_map(|s| {
            let target = s.correct_numeral?;
            let values = distill::operand_values(&s.article, rationales.get(&s.id).map(String::as_str));
            let inferred = infer_operations(&values, target).unwrap_or_default();
            Some(OracleRow {
                id: s.id.clone(),
                correct_numeral: canonical(target),
                annotated: s.operation,
                recovered: s.operation.map(|op| inferred.contains(&op)),
                inferred,
            })
        })
        .collect()
}

pub fn render_oracle(rows: &[OracleRow]) -> String {
    let mut out = format!("{:<24} {:>10} {:<12} inferred\n", "id", "number", "annotated");
    for r in rows {
        let inferred: Vec<&str> = r.inferred.iter().map(|o| o.as_str()).collect();
        let mark = match r.recovered {
            Some(true) => "ok",
            Some(false) => "MISS",
            None => "-",
        };
        out.push_str(&format!(
            "{:<24} {:>10} {:<12} {} [{}]\n",
            r.id,
            r.correct_numeral,
            r.annotated.map(|o| o.as_str()).unwrap_or("-"),
            inferred.join(", "),
            mark
        ));
    }
    out
}

/// Demo rationales keyed by the sample id they annotate.
pub fn demo_rationales(demos: &[DemoExample]) -> HashMap<String, String> {
    demos
        .iter()
        .map(|d| (d.sample.id.clone(), d.rationale_text.clone()))
        .collect()
}

pub fn read_supervision(path: &Path) -> Result<Vec<SupervisionRecord>> {
    let records: Vec<SupervisionRecord> = distill::read_jsonl(path)?;
    if records.is_empty() {
        bail!("{} has no supervision records", path.display());
    }
    Ok(records)
}

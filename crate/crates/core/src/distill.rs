//! Teacher supervision over the training corpus and the SFT datasets built
//! from it.

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{read_corpus, Corpus, Sample, Source};
use crate::llm_gateway::{ChatMessage, GatewayError, GenRequest, GenSettings, Gateway};
use crate::numeral::{canonical, mask_numeral, NumeralError, OperationType};
use crate::rationale::{self, TenRationale};

/// System instruction given to the teacher, verbatim.
pub const TEACHER_INSTRUCTION: &str = "You will be given a piece of news after prefix \"News: \". You will be given a masked headline of the news after prefix \"Headline:\". You will be provided the correct missing numeral after prefix \"Correct Number:\". Please emphasise what Topic the headline should focus on, list all Entities and Numbers mentioned in the news, and elaborate on the Reasoning steps for how to calculate the correct number in the headline.";

/// Instruction for the rationale generator, which sees only the article.
pub const RATIONALE_INSTRUCTION: &str = "You will be given a piece of news after prefix \"News: \". Please emphasise what Topic the headline should focus on, list all Entities and Numbers mentioned in the news, and elaborate on the Reasoning steps for how to calculate the number in the headline.";

/// Instruction for the headline generator, which sees the article and a rationale.
pub const HEADLINE_INSTRUCTION: &str = "You will be given a piece of news after prefix \"News: \" and a rationale after prefix \"Rationale:\". Write a one-sentence headline for the news that focuses on the rationale's topic and uses the numeral it derives.";

/// Demo order used when none is configured.
pub const DEFAULT_DEMO_ORDER: [OperationType; 5] = [
    OperationType::Copy,
    OperationType::Add,
    OperationType::Subtract,
    OperationType::Paraphrase,
    OperationType::Round,
];

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("sample {0} has no correct_numeral")]
    MissingCorrectNumeral(String),
    #[error("sample {id}: {source}")]
    Masking {
        id: String,
        #[source]
        source: NumeralError,
    },
    #[error("demo {name}: {reason}")]
    InvalidDemo { name: String, reason: String },
    #[error("no demo for operation {0}")]
    MissingDemo(OperationType),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DistillError + '_ {
    move |source| DistillError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Cuts the article to at most `cap` characters.
pub fn truncate_chars(text: &str, cap: Option<usize>) -> &str {
    match cap.and_then(|c| text.char_indices().nth(c)) {
        Some((i, _)) => &text[..i],
        None => text,
    }
}

/// `News: … / Headline: <masked> / Correct Number: N`.
pub fn teacher_input(sample: &Sample, max_article_chars: Option<usize>) -> Result<String, DistillError> {
    let n = sample
        .correct_numeral
        .ok_or_else(|| DistillError::MissingCorrectNumeral(sample.id.clone()))?;
    let masked = mask_numeral(&sample.headline).map_err(|source| DistillError::Masking {
        id: sample.id.clone(),
        source,
    })?;
    Ok(format!(
        "News: {}\nHeadline: {}\nCorrect Number: {}",
        truncate_chars(&sample.article, max_article_chars),
        masked,
        canonical(n)
    ))
}

/// Zero-shot teacher prompt used to draft the demonstration rationales.
pub fn build_demo_prompt(sample: &Sample) -> Result<Vec<ChatMessage>, DistillError> {
    Ok(vec![
        ChatMessage::system(TEACHER_INSTRUCTION),
        ChatMessage::user(teacher_input(sample, None)?),
    ])
}

/// A worked example whose rationale parses and states the correct numeral.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoExample {
    pub name: String,
    pub sample: Sample,
    pub rationale_text: String,
    pub operation: OperationType,
}

impl DemoExample {
    pub fn new(name: impl Into<String>, sample: Sample, rationale_text: impl Into<String>) -> Result<Self, DistillError> {
        let name = name.into();
        let rationale_text = rationale_text.into();
        let invalid = |reason: String| DistillError::InvalidDemo {
            name: name.clone(),
            reason,
        };
        let operation = sample
            .operation
            .ok_or_else(|| invalid("sample has no operation label".into()))?;
        let correct = sample
            .correct_numeral
            .ok_or_else(|| invalid("sample has no correct_numeral".into()))?;
        validate_rationale(&rationale_text, correct).map_err(invalid)?;
        mask_numeral(&sample.headline).map_err(|e| invalid(e.to_string()))?;
        Ok(Self {
            name,
            sample,
            rationale_text,
            operation,
        })
    }

    pub fn check(&self) -> Result<(), DistillError> {
        Self::new(self.name.clone(), self.sample.clone(), self.rationale_text.clone()).map(|_| ())
    }
}

/// Parses `text` and checks its final numeral against `correct`.
pub fn validate_rationale(text: &str, correct: Decimal) -> Result<TenRationale, String> {
    let parsed = rationale::parse(text).map_err(|e| format!("parse error: {e}"))?;
    if parsed.final_numeral != correct {
        return Err(format!(
            "numeral mismatch: expected {}, got {}",
            canonical(correct),
            canonical(parsed.final_numeral)
        ));
    }
    Ok(parsed)
}

/// Five-shot teacher prompt: instruction, each demo as a user/assistant
/// pair in the given order, then the target sample.
pub fn build_fewshot_prompt(sample: &Sample, demos: &[DemoExample]) -> Result<Vec<ChatMessage>, DistillError> {
    build_fewshot_prompt_capped(sample, demos, None)
}

pub fn build_fewshot_prompt_capped(
    sample: &Sample,
    demos: &[DemoExample],
    max_article_chars: Option<usize>,
) -> Result<Vec<ChatMessage>, DistillError> {
    let mut messages = Vec::with_capacity(2 + 2 * demos.len());
    messages.push(ChatMessage::system(TEACHER_INSTRUCTION));
    for demo in demos {
        demo.check()?;
        messages.push(ChatMessage::user(teacher_input(&demo.sample, max_article_chars)?));
        messages.push(ChatMessage::assistant(demo.rationale_text.clone()));
    }
    messages.push(ChatMessage::user(teacher_input(sample, max_article_chars)?));
    Ok(messages)
}

/// Reads demos from `dir`: each `<name>.json` holds a corpus record and
/// `<name>.txt` its rationale. Returned sorted by name.
pub fn load_demos(dir: &Path) -> Result<Vec<DemoExample>, DistillError> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("json"))
        .filter_map(|p| p.file_stem().and_then(|s| s.to_str()).map(str::to_string))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let json_path = dir.join(format!("{name}.json"));
            let txt_path = dir.join(format!("{name}.txt"));
            let record = fs::read_to_string(&json_path).map_err(io_err(&json_path))?;
            let compact: serde_json::Value = serde_json::from_str(&record).map_err(|e| DistillError::InvalidDemo {
                name: name.clone(),
                reason: e.to_string(),
            })?;
            let sample = read_corpus(compact.to_string().as_bytes(), Source::Numhg)
                .map_err(|e| DistillError::InvalidDemo {
                    name: name.clone(),
                    reason: e.to_string(),
                })?
                .samples
                .remove(0);
            let text = fs::read_to_string(&txt_path).map_err(io_err(&txt_path))?;
            DemoExample::new(name, sample, text)
        })
        .collect()
}

/// Result of validating one demo file pair.
#[derive(Debug)]
pub struct DemoCheck {
    pub name: String,
    pub result: Result<OperationType, String>,
}

/// Validates every demo in `dir` without stopping at the first failure.
pub fn check_demos(dir: &Path) -> Result<Vec<DemoCheck>, DistillError> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "txt")))
        .filter_map(|p| p.file_stem().and_then(|s| s.to_str()).map(str::to_string))
        .collect();
    names.sort();
    names.dedup();
    Ok(names
        .into_iter()
        .map(|name| {
            let result = check_one(dir, &name);
            DemoCheck { name, result }
        })
        .collect())
}

fn check_one(dir: &Path, name: &str) -> Result<OperationType, String> {
    let json = fs::read_to_string(dir.join(format!("{name}.json"))).map_err(|e| format!("{name}.json: {e}"))?;
    let text = fs::read_to_string(dir.join(format!("{name}.txt"))).map_err(|e| format!("{name}.txt: {e}"))?;
    let compact: serde_json::Value = serde_json::from_str(&json).map_err(|e| e.to_string())?;
    let sample = read_corpus(compact.to_string().as_bytes(), Source::Numhg)
        .map_err(|e| e.to_string())?
        .samples
        .remove(0);
    DemoExample::new(name, sample, text)
        .map(|d| d.operation)
        .map_err(|e| e.to_string())
}

/// Picks one demo per operation, in `order`.
pub fn order_demos(demos: &[DemoExample], order: &[OperationType]) -> Result<Vec<DemoExample>, DistillError> {
    order
        .iter()
        .map(|op| {
            demos
                .iter()
                .find(|d| d.operation == *op)
                .cloned()
                .ok_or(DistillError::MissingDemo(*op))
        })
        .collect()
}

macro_rules! builtin {
    ($name:literal) => {
        (
            $name,
            include_str!(concat!("../fixtures/worked_examples/demos/", $name, ".json")),
            include_str!(concat!("../fixtures/worked_examples/demos/", $name, ".txt")),
        )
    };
}

const BUILTIN: [(&str, &str, &str); 5] = [
    builtin!("01_copy"),
    builtin!("02_add"),
    builtin!("03_subtract"),
    builtin!("04_paraphrase"),
    builtin!("05_round"),
];

/// The five shipped demonstrations in default order.
pub fn builtin_demos() -> Vec<DemoExample> {
    BUILTIN
        .iter()
        .map(|(name, json, text)| {
            let compact: serde_json::Value = serde_json::from_str(json).expect("builtin demo json");
            let sample = read_corpus(compact.to_string().as_bytes(), Source::Numhg)
                .expect("builtin demo record")
                .samples
                .remove(0);
            DemoExample::new(*name, sample, *text).expect("builtin demos are valid")
        })
        .collect()
}

/// Supervision audit row. `valid` holds iff the rationale parsed and its
/// final numeral equals the sample's correct numeral.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupervisionRecord {
    #[serde(rename = "id")]
    pub sample_id: String,
    pub article: String,
    pub masked_headline: String,
    #[serde(rename = "rationale")]
    pub rationale_text: String,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SupervisionSummary {
    pub total: usize,
    pub valid: usize,
    pub parse_failures: usize,
    pub numeral_mismatches: usize,
    pub transport_failures: usize,
    pub retried: usize,
    pub valid_rate: f64,
}

#[derive(Debug, Clone)]
pub struct SupervisionOptions {
    pub parallelism: usize,
    pub max_article_chars: Option<usize>,
    /// Re-query invalid samples once.
    pub retry_invalid: bool,
}

impl Default for SupervisionOptions {
    fn default() -> Self {
        Self {
            parallelism: 4,
            max_article_chars: None,
            retry_invalid: false,
        }
    }
}

/// Runs the five-shot teacher over every sample. Every sample yields exactly
/// one record; failures are flagged, never dropped.
pub fn generate_supervision(
    corpus: &Corpus,
    demos: &[DemoExample],
    gateway: &Gateway,
    settings: &GenSettings,
    options: &SupervisionOptions,
) -> Result<(Vec<SupervisionRecord>, SupervisionSummary), DistillError> {
    if let Some(s) = corpus.samples.iter().find(|s| s.correct_numeral.is_none()) {
        return Err(DistillError::MissingCorrectNumeral(s.id.clone()));
    }
    for demo in demos {
        demo.check()?;
    }

    let mut records: Vec<SupervisionRecord> = Vec::with_capacity(corpus.len());
    let mut pending: Vec<(usize, GenRequest)> = Vec::new();
    for sample in &corpus.samples {
        let masked = mask_numeral(&sample.headline).map_err(|e| e.to_string());
        let prompt = build_fewshot_prompt_capped(sample, demos, options.max_article_chars);
        let mut record = SupervisionRecord {
            sample_id: sample.id.clone(),
            article: sample.article.clone(),
            masked_headline: masked.clone().unwrap_or_default(),
            rationale_text: String::new(),
            valid: false,
            error: None,
        };
        match prompt {
            Ok(messages) => pending.push((records.len(), settings.request(messages, 1))),
            Err(e) => record.error = Some(e.to_string()),
        }
        records.push(record);
    }

    let mut summary = SupervisionSummary::default();
    run_teacher(corpus, &mut records, &pending, gateway, options.parallelism);
    if options.retry_invalid {
        let retry: Vec<(usize, GenRequest)> = pending
            .into_iter()
            .filter(|(i, _)| !records[*i].valid)
            .collect();
        summary.retried = retry.len();
        run_teacher(corpus, &mut records, &retry, gateway, options.parallelism);
    }

    summary.total = records.len();
    for r in &records {
        match r.error.as_deref() {
            None => summary.valid += 1,
            Some(e) if e.starts_with("parse error") => summary.parse_failures += 1,
            Some(e) if e.starts_with("numeral mismatch") => summary.numeral_mismatches += 1,
            Some(e) if e.starts_with("transport") => summary.transport_failures += 1,
            Some(_) => {}
        }
    }
    summary.valid_rate = if summary.total == 0 {
        0.0
    } else {
        summary.valid as f64 / summary.total as f64
    };
    Ok((records, summary))
}

fn run_teacher(
    corpus: &Corpus,
    records: &mut [SupervisionRecord],
    pending: &[(usize, GenRequest)],
    gateway: &Gateway,
    parallelism: usize,
) {
    let requests: Vec<GenRequest> = pending.iter().map(|(_, r)| r.clone()).collect();
    let report = gateway.complete_batch(&requests, parallelism);
    for ((index, _), result) in pending.iter().zip(report.results) {
        let record = &mut records[*index];
        let correct = corpus.samples[*index]
            .correct_numeral
            .expect("checked before prompting");
        match result {
            Ok(out) => {
                let text = out.completions.into_iter().next().unwrap_or_default();
                match validate_rationale(&text, correct) {
                    Ok(_) => {
                        record.valid = true;
                        record.error = None;
                    }
                    Err(e) => {
                        record.valid = false;
                        record.error = Some(e);
                    }
                }
                record.rationale_text = text;
            }
            Err(e) => {
                record.valid = false;
                record.error = Some(format!("transport: {e}"));
            }
        }
    }
}

/// Operands for operation inference: the article's numerals plus the figures
/// a rationale lists under Numbers Mentioned. Rationales surface implicit
/// quantities ("a trooper" is 1) that the article never writes as a numeral.
pub fn operand_values(article: &str, rationale_text: Option<&str>) -> Vec<Decimal> {
    let mut values: Vec<Decimal> = crate::numeral::extract_numerals(article).iter().map(|n| n.value()).collect();
    if let Some(parsed) = rationale_text.and_then(|t| rationale::parse(t).ok()) {
        for m in &parsed.numbers_mentioned {
            values.extend(m.values());
        }
    }
    values.sort();
    values.dedup();
    values
}

/// Prompt given to the rationale generator.
pub fn rationale_prompt(article: &str) -> String {
    format!("{RATIONALE_INSTRUCTION}\n\nNews: {article}")
}

/// Prompt given to the headline generator.
pub fn headline_prompt(article: &str, rationale: &str) -> String {
    format!("{HEADLINE_INSTRUCTION}\n\nNews: {article}\n\nRationale:\n{}", rationale.trim())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub id: String,
    pub prompt: String,
    pub completion: String,
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<usize, DistillError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = io::BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(row).expect("records serialize");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(rows.len())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, DistillError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DistillError::Format {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_supervision(path: &Path, records: &[SupervisionRecord]) -> Result<usize, DistillError> {
    write_jsonl(path, records)
}

pub fn sft_rationale_records(records: &[SupervisionRecord], max_article_chars: Option<usize>) -> Vec<SftRecord> {
    records
        .iter()
        .filter(|r| r.valid)
        .map(|r| SftRecord {
            id: r.sample_id.clone(),
            prompt: rationale_prompt(truncate_chars(&r.article, max_article_chars)),
            completion: r.rationale_text.clone(),
        })
        .collect()
}

/// Writes `{id, prompt, completion}` for valid records: article-only prompt,
/// rationale completion. Returns the number of lines.
pub fn emit_sft_rationale(records: &[SupervisionRecord], path: &Path) -> Result<usize, DistillError> {
    emit_sft_rationale_capped(records, path, None)
}

pub fn emit_sft_rationale_capped(
    records: &[SupervisionRecord],
    path: &Path,
    max_article_chars: Option<usize>,
) -> Result<usize, DistillError> {
    write_jsonl(path, &sft_rationale_records(records, max_article_chars))
}

pub fn sft_headline_records(
    records: &[SupervisionRecord],
    corpus: &Corpus,
    max_article_chars: Option<usize>,
) -> Result<Vec<SftRecord>, DistillError> {
    records
        .iter()
        .filter(|r| r.valid)
        .map(|r| {
            let sample = corpus
                .get(&r.sample_id)
                .ok_or_else(|| DistillError::MissingCorrectNumeral(r.sample_id.clone()))?;
            Ok(SftRecord {
                id: r.sample_id.clone(),
                prompt: headline_prompt(truncate_chars(&sample.article, max_article_chars), &r.rationale_text),
                completion: sample.headline.clone(),
            })
        })
        .collect()
}

/// Writes `{id, prompt, completion}` for valid records: article plus teacher
/// rationale as prompt, the unmasked reference headline as completion.
pub fn emit_sft_headline(records: &[SupervisionRecord], corpus: &Corpus, path: &Path) -> Result<usize, DistillError> {
    emit_sft_headline_capped(records, corpus, path, None)
}

pub fn emit_sft_headline_capped(
    records: &[SupervisionRecord],
    corpus: &Corpus,
    path: &Path,
    max_article_chars: Option<usize>,
) -> Result<usize, DistillError> {
    write_jsonl(path, &sft_headline_records(records, corpus, max_article_chars)?)
}

/// A drafted rationale and whether it validated.
pub type DemoDraft = (String, Result<(), String>);

/// Zero-shot drafts for the demo samples, each with its validation outcome.
pub fn draft_demo_rationales(
    samples: &[Sample],
    gateway: &Gateway,
    settings: &GenSettings,
    parallelism: usize,
) -> Result<Vec<DemoDraft>, DistillError> {
    let requests = samples
        .iter()
        .map(|s| build_demo_prompt(s).map(|m| settings.request(m, 1)))
        .collect::<Result<Vec<_>, _>>()?;
    let report = gateway.complete_batch(&requests, parallelism);
    Ok(samples
        .iter()
        .zip(report.results)
        .map(|(sample, result)| match result {
            Ok(out) => {
                let text = out.completions.into_iter().next().unwrap_or_default();
                let check = validate_rationale(&text, sample.correct_numeral.expect("masked above"))
                    .map(|_| ());
                (text, check)
            }
            Err(e) => (String::new(), Err(format!("transport: {e}"))),
        })
        .collect())
}

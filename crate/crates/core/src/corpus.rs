//! News/headline corpora and the filters that prepare them.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeral::{self, extract_numerals, OperationType};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("record {index}: invalid JSON: {message}")]
    Malformed { index: usize, message: String },
    #[error("record {index}: missing field \"{field}\"")]
    MissingField { index: usize, field: &'static str },
    #[error("record {index}: {message}")]
    Invalid { index: usize, message: String },
    #[error("record {index}: duplicate id {id:?}")]
    DuplicateId { index: usize, id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

impl Split {
    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Numhg,
    Xsum,
    Generic,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Numhg => "numhg",
            Source::Xsum => "xsum",
            Source::Generic => "generic",
        })
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "numhg" => Ok(Source::Numhg),
            "xsum" => Ok(Source::Xsum),
            "generic" => Ok(Source::Generic),
            other => Err(format!("unknown corpus source {other:?}")),
        }
    }
}

/// One article with its reference headline and optional annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub article: String,
    pub headline: String,
    pub operation: Option<OperationType>,
    pub correct_numeral: Option<Decimal>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub samples: Vec<Sample>,
    pub source: Source,
}

impl Corpus {
    pub fn new(samples: Vec<Sample>, source: Source) -> Self {
        Self { samples, source }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    pub fn split(&self, split: Split) -> Corpus {
        self.retain(|s| s.split == split)
    }

    fn retain(&self, mut keep: impl FnMut(&Sample) -> bool) -> Corpus {
        Corpus {
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
            source: self.source,
        }
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    article: Option<String>,
    headline: Option<String>,
    operation: Option<String>,
    correct_numeral: Option<serde_json::Number>,
    split: Option<Split>,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    id: &'a str,
    article: &'a str,
    headline: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    operation: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    correct_numeral: Option<serde_json::Number>,
    split: &'static str,
}

/// Reads a JSONL corpus in file order. Records are numbered from 1 in errors;
/// blank lines are skipped and not counted.
pub fn load_corpus(path: &Path, source: Source) -> Result<Corpus, CorpusError> {
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_corpus(BufReader::new(file), source).map_err(|e| match e {
        CorpusError::Io { source, .. } => CorpusError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn read_corpus(reader: impl BufRead, source: Source) -> Result<Corpus, CorpusError> {
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    let mut index = 0;
    for line in reader.lines() {
        let line = line.map_err(|source| CorpusError::Io {
            path: PathBuf::new(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        index += 1;
        let sample = parse_record(&line, index)?;
        if !seen.insert(sample.id.clone()) {
            return Err(CorpusError::DuplicateId {
                index,
                id: sample.id,
            });
        }
        samples.push(sample);
    }
    Ok(Corpus { samples, source })
}

fn parse_record(line: &str, index: usize) -> Result<Sample, CorpusError> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
        index,
        message: e.to_string(),
    })?;
    let missing = |field| CorpusError::MissingField { index, field };
    let invalid = |message: String| CorpusError::Invalid { index, message };

    let id = raw.id.ok_or_else(|| missing("id"))?;
    let article = raw.article.ok_or_else(|| missing("article"))?;
    let headline = raw.headline.ok_or_else(|| missing("headline"))?;
    if article.trim().is_empty() {
        return Err(invalid("empty article".into()));
    }
    if headline.trim().is_empty() {
        return Err(invalid("empty headline".into()));
    }
    let operation = raw
        .operation
        .map(|label| label.parse::<OperationType>())
        .transpose()
        .map_err(|e| invalid(e.to_string()))?;
    let correct_numeral = raw
        .correct_numeral
        .map(|n| Decimal::from_str(&n.to_string()).or_else(|_| Decimal::from_scientific(&n.to_string())))
        .transpose()
        .map_err(|e| invalid(format!("correct_numeral: {e}")))?;
    if let Some(value) = correct_numeral {
        if !headline_supports(&headline, value) {
            return Err(invalid(format!(
                "correct_numeral {} does not appear in headline {headline:?}",
                numeral::canonical(value)
            )));
        }
    }
    Ok(Sample {
        id,
        article,
        headline,
        operation,
        correct_numeral,
        split: raw.split.unwrap_or_default(),
    })
}

/// Some headline numeral carries `value`, either normalized or as its
/// unexpanded digits ("30K" carries 30).
fn headline_supports(headline: &str, value: Decimal) -> bool {
    extract_numerals(headline)
        .iter()
        .any(|n| n.value() == value || n.mantissa == value)
}

pub fn sample_to_json(sample: &Sample) -> String {
    let record = OutRecord {
        id: &sample.id,
        article: &sample.article,
        headline: &sample.headline,
        operation: sample.operation.map(OperationType::as_str),
        correct_numeral: sample.correct_numeral.map(decimal_number),
        split: sample.split.as_str(),
    };
    serde_json::to_string(&record).expect("corpus records always serialize")
}

/// JSON number carrying the exact decimal digits.
pub fn decimal_number(value: Decimal) -> serde_json::Number {
    serde_json::Number::from_str(&numeral::canonical(value))
        .expect("canonical decimals are valid JSON numbers")
}

pub fn write_corpus(corpus: &Corpus, path: &Path) -> std::io::Result<()> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    for sample in &corpus.samples {
        writeln!(file, "{}", sample_to_json(sample))?;
    }
    file.flush()
}

fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Collapses samples whose whitespace-normalized (article, headline) text is
/// identical, keeping the first occurrence.
pub fn dedupe(corpus: &Corpus) -> Corpus {
    let mut seen = HashSet::new();
    corpus.retain(|s| seen.insert((normalize_ws(&s.article), normalize_ws(&s.headline))))
}

/// Keeps samples whose headline has exactly one numeral.
pub fn filter_single_numeral(corpus: &Corpus) -> Corpus {
    corpus.retain(|s| extract_numerals(&s.headline).len() == 1)
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// XSum rules: article length within `[min_words, max_words]` (inclusive) and
/// a single headline numeral whose normalized value is whole.
pub fn filter_xsum(corpus: &Corpus, min_words: usize, max_words: usize) -> Corpus {
    corpus.retain(|s| {
        let words = word_count(&s.article);
        if words < min_words || words > max_words {
            return false;
        }
        match extract_numerals(&s.headline).as_slice() {
            [only] => only.value().fract().is_zero(),
            _ => false,
        }
    })
}

/// Fills a missing `correct_numeral` from the headline's single numeral,
/// using the written digits so it lines up with the masked headline.
pub fn fill_correct_numerals(corpus: &Corpus) -> Corpus {
    let mut out = corpus.clone();
    for sample in &mut out.samples {
        if sample.correct_numeral.is_none() {
            if let [only] = extract_numerals(&sample.headline).as_slice() {
                sample.correct_numeral = Some(only.mantissa);
            }
        }
    }
    out
}

pub const DEFAULT_MIN_WORDS: usize = 200;
pub const DEFAULT_MAX_WORDS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrepRules {
    pub source: Source,
    pub min_words: usize,
    pub max_words: usize,
}

impl PrepRules {
    pub fn for_source(source: Source) -> Self {
        Self {
            source,
            min_words: DEFAULT_MIN_WORDS,
            max_words: DEFAULT_MAX_WORDS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PrepReport {
    pub loaded: usize,
    pub after_dedupe: usize,
    pub after_single_numeral: usize,
    pub after_word_bounds: Option<usize>,
}

/// Deduplicate, keep single-numeral headlines, apply the XSum bounds when the
/// source is XSum, then fill missing correct numerals.
pub fn prepare(corpus: &Corpus, rules: PrepRules) -> (Corpus, PrepReport) {
    let mut report = PrepReport {
        loaded: corpus.len(),
        ..PrepReport::default()
    };
    let deduped = dedupe(corpus);
    report.after_dedupe = deduped.len();
    let mut kept = filter_single_numeral(&deduped);
    report.after_single_numeral = kept.len();
    if rules.source == Source::Xsum {
        kept = filter_xsum(&kept, rules.min_words, rules.max_words);
        report.after_word_bounds = Some(kept.len());
    }
    (fill_correct_numerals(&kept), report)
}

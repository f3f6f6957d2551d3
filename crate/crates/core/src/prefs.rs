//! Preference pairs for DPO. Each training article gets k sampled
//! rationales; each is completed into a headline and scored, then one
//! chosen/rejected pair is picked per article.
//!
//! Selection: split on headline numeral correctness when both sides exist,
//! otherwise fall back to ROUGE against the teacher rationale with a margin.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::Path;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Sample};
use crate::distill::{self, headline_prompt, rationale_prompt, truncate_chars, DistillError};
use crate::eval::RougeVariant;
use crate::llm_gateway::{ChatMessage, GenRequest, GenSettings, Gateway};
use crate::numeral::numerals_match;
use crate::rationale;

pub const DEFAULT_K: usize = 15;
pub const DEFAULT_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub rationale_text: String,
    pub headline_text: String,
    pub numeral_correct: bool,
    pub rouge_to_reference: f64,
    pub parse_ok: bool,
}

impl Candidate {
    pub fn score(
        rationale_text: impl Into<String>,
        headline_text: impl Into<String>,
        correct: Decimal,
        reference_rationale: &str,
        rouge: RougeVariant,
    ) -> Self {
        let rationale_text = rationale_text.into();
        let headline_text = headline_text.into();
        Self {
            numeral_correct: numerals_match(&headline_text, correct),
            rouge_to_reference: rouge.score(&rationale_text, reference_rationale).f1(),
            parse_ok: rationale::parse(&rationale_text).is_ok(),
            rationale_text,
            headline_text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairReason {
    NumeralSplit,
    RougeSplit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    #[serde(rename = "id")]
    pub sample_id: String,
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub reason: PairReason,
}

/// Higher score first; equal scores fall back to text so the order is total.
fn by_rouge(a: &&Candidate, b: &&Candidate) -> Ordering {
    a.rouge_to_reference
        .total_cmp(&b.rouge_to_reference)
        .then_with(|| a.rationale_text.cmp(&b.rationale_text))
}

/// Picks `(chosen, rejected, reason)` from scored candidates. Unparseable
/// rationales can only be rejected. Result depends only on the set of
/// candidates, not their order.
pub fn select_pair(candidates: &[Candidate], margin: f64) -> Option<(&Candidate, &Candidate, PairReason)> {
    let correct: Vec<&Candidate> = candidates.iter().filter(|c| c.numeral_correct && c.parse_ok).collect();
    let incorrect: Vec<&Candidate> = candidates.iter().filter(|c| !c.numeral_correct).collect();

    if !correct.is_empty() && !incorrect.is_empty() {
        let chosen = correct.iter().copied().max_by(by_rouge)?;
        let rejected = incorrect.iter().copied().min_by(by_rouge)?;
        return Some((chosen, rejected, PairReason::NumeralSplit));
    }

    let chosen = candidates.iter().filter(|c| c.parse_ok).max_by(by_rouge)?;
    let rejected = candidates
        .iter()
        .filter(|c| c.rationale_text != chosen.rationale_text)
        .min_by(by_rouge)?;
    (chosen.rouge_to_reference - rejected.rouge_to_reference >= margin)
        .then_some((chosen, rejected, PairReason::RougeSplit))
}

/// Keeps the first occurrence of each exact text.
pub fn dedupe_texts(texts: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    texts.into_iter().filter(|t| seen.insert(t.clone())).collect()
}

/// A model role: which gateway to call and how to decode.
#[derive(Clone, Copy)]
pub struct Endpoint<'a> {
    pub gateway: &'a Gateway,
    pub settings: &'a GenSettings,
}

#[derive(Debug, Clone)]
pub struct PrefsOptions {
    pub k: usize,
    pub temperature: f64,
    pub margin: f64,
    pub rouge: RougeVariant,
    pub parallelism: usize,
    pub max_article_chars: Option<usize>,
}

impl Default for PrefsOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            temperature: DEFAULT_TEMPERATURE,
            margin: DEFAULT_MARGIN,
            rouge: RougeVariant::Rouge1,
            parallelism: 4,
            max_article_chars: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PrefsError {
    #[error("k must be at least 2, got {0}")]
    KTooSmall(usize),
    #[error("margin must lie in [0, 1], got {0}")]
    BadMargin(f64),
}

/// Per-sample outcome of candidate sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub sample_id: String,
    pub prompt: String,
    pub drawn: usize,
    /// Distinct texts among the draws.
    pub unique: usize,
    pub candidates: Vec<Candidate>,
    pub errors: Vec<String>,
}

fn rationale_messages(sample: &Sample, cap: Option<usize>) -> (String, Vec<ChatMessage>) {
    let prompt = rationale_prompt(truncate_chars(&sample.article, cap));
    (prompt.clone(), vec![ChatMessage::user(prompt)])
}

/// Samples and scores candidates for several samples at once: one batched
/// round of rationale draws, then one of greedy headline completions.
pub fn sample_candidate_sets(
    items: &[(&Sample, &str)],
    rationale_ep: Endpoint<'_>,
    headline_ep: Endpoint<'_>,
    options: &PrefsOptions,
) -> Result<Vec<CandidateSet>, PrefsError> {
    if options.k < 2 {
        return Err(PrefsError::KTooSmall(options.k));
    }
    if !(0.0..=1.0).contains(&options.margin) {
        return Err(PrefsError::BadMargin(options.margin));
    }
    let cap = options.max_article_chars;
    let sampling = GenSettings {
        temperature: options.temperature,
        ..rationale_ep.settings.clone()
    };
    let greedy = GenSettings {
        temperature: 0.0,
        ..headline_ep.settings.clone()
    };

    let mut sets = Vec::with_capacity(items.len());
    let requests: Vec<GenRequest> = items
        .iter()
        .map(|(sample, _)| sampling.request(rationale_messages(sample, cap).1, options.k))
        .collect();
    let drawn = rationale_ep.gateway.complete_batch(&requests, options.parallelism);

    let mut texts_per_sample = Vec::with_capacity(items.len());
    for ((sample, _), result) in items.iter().zip(drawn.results) {
        let (prompt, _) = rationale_messages(sample, cap);
        let mut set = CandidateSet {
            sample_id: sample.id.clone(),
            prompt,
            drawn: 0,
            unique: 0,
            candidates: Vec::new(),
            errors: Vec::new(),
        };
        let texts = match result {
            Ok(out) => {
                set.drawn = out.completions.len();
                let texts = dedupe_texts(out.completions);
                set.unique = texts.len();
                texts
            }
            Err(e) => {
                set.errors.push(format!("rationale sampling: {e}"));
                Vec::new()
            }
        };
        texts_per_sample.push(texts);
        sets.push(set);
    }

    let mut owners = Vec::new();
    let mut headline_requests = Vec::new();
    for (i, texts) in texts_per_sample.iter().enumerate() {
        let article = truncate_chars(&items[i].0.article, cap);
        for (j, text) in texts.iter().enumerate() {
            owners.push((i, j));
            headline_requests.push(greedy.request(vec![ChatMessage::user(headline_prompt(article, text))], 1));
        }
    }
    let headlines = headline_ep.gateway.complete_batch(&headline_requests, options.parallelism);

    for ((i, j), result) in owners.into_iter().zip(headlines.results) {
        let (sample, reference) = items[i];
        let text = &texts_per_sample[i][j];
        match result.map(|o| o.completions.into_iter().next().unwrap_or_default()) {
            Ok(headline) => {
                let correct = sample.correct_numeral.unwrap_or_default();
                sets[i]
                    .candidates
                    .push(Candidate::score(text.clone(), headline, correct, reference, options.rouge));
            }
            Err(e) => sets[i].errors.push(format!("headline completion {j}: {e}")),
        }
    }
    Ok(sets)
}

/// Candidates for a single sample against its teacher rationale.
pub fn sample_candidates(
    sample: &Sample,
    reference_rationale: &str,
    rationale_ep: Endpoint<'_>,
    headline_ep: Endpoint<'_>,
    options: &PrefsOptions,
) -> Result<CandidateSet, PrefsError> {
    Ok(sample_candidate_sets(&[(sample, reference_rationale)], rationale_ep, headline_ep, options)?.remove(0))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrefsSummary {
    pub samples: usize,
    pub pairs: usize,
    pub numeral_split: usize,
    pub rouge_split: usize,
    pub no_pair: usize,
    pub candidates: usize,
    pub duplicates_removed: usize,
    pub correct_candidates: usize,
    pub mean_candidate_accuracy: f64,
    pub pair_yield: f64,
    /// `(sample id, message)` for every itemized failure.
    pub errors: Vec<(String, String)>,
}

/// Pairs for every sample that has a reference (teacher) rationale.
/// `references` maps sample id to that rationale; samples without one are
/// itemized as errors and skipped.
pub fn build_preference_dataset(
    corpus: &Corpus,
    references: &std::collections::HashMap<String, String>,
    rationale_ep: Endpoint<'_>,
    headline_ep: Endpoint<'_>,
    options: &PrefsOptions,
) -> Result<(Vec<PreferencePair>, PrefsSummary, Vec<CandidateSet>), PrefsError> {
    let mut summary = PrefsSummary {
        samples: corpus.len(),
        ..Default::default()
    };
    let mut items = Vec::new();
    for sample in &corpus.samples {
        match (references.get(&sample.id), sample.correct_numeral) {
            (Some(r), Some(_)) => items.push((sample, r.as_str())),
            (None, _) => summary
                .errors
                .push((sample.id.clone(), "no valid teacher rationale".into())),
            (_, None) => summary.errors.push((sample.id.clone(), "no correct_numeral".into())),
        }
    }

    let sets = sample_candidate_sets(&items, rationale_ep, headline_ep, options)?;
    let mut pairs = Vec::new();
    for set in &sets {
        summary.candidates += set.candidates.len();
        summary.correct_candidates += set.candidates.iter().filter(|c| c.numeral_correct).count();
        summary.duplicates_removed += set.drawn - set.unique;
        summary
            .errors
            .extend(set.errors.iter().map(|e| (set.sample_id.clone(), e.clone())));
        match select_pair(&set.candidates, options.margin) {
            Some((chosen, rejected, reason)) => {
                match reason {
                    PairReason::NumeralSplit => summary.numeral_split += 1,
                    PairReason::RougeSplit => summary.rouge_split += 1,
                }
                pairs.push(PreferencePair {
                    sample_id: set.sample_id.clone(),
                    prompt: set.prompt.clone(),
                    chosen: chosen.rationale_text.clone(),
                    rejected: rejected.rationale_text.clone(),
                    reason,
                });
            }
            None => summary.no_pair += 1,
        }
    }
    summary.no_pair += corpus.len() - items.len();
    summary.pairs = pairs.len();
    summary.mean_candidate_accuracy = ratio(summary.correct_candidates, summary.candidates);
    summary.pair_yield = ratio(summary.pairs, summary.samples);
    Ok((pairs, summary, sets))
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// One JSON object per line: `{id, prompt, chosen, rejected, reason}`.
pub fn emit_dpo(pairs: &[PreferencePair], path: &Path) -> Result<usize, DistillError> {
    distill::write_jsonl(path, pairs)
}

pub fn read_dpo(path: &Path) -> Result<Vec<PreferencePair>, DistillError> {
    distill::read_jsonl(path)
}

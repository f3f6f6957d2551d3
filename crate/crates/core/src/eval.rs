//! Headline evaluation: numeral accuracy split into copy and reasoning
//! buckets, ROUGE-1/2/L, and error rates per annotated operation.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Sample};
use crate::numeral::{numerals_match, OperationType};

/// Lowercases, turns every non-alphanumeric character into a space and
/// splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Overlap counts behind a ROUGE score. Ratios are exact; the `f64`
/// accessors are for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub overlap: usize,
    pub candidate_total: usize,
    pub reference_total: usize,
}

impl RougeScore {
    pub fn precision_ratio(&self) -> Ratio<u64> {
        ratio(self.overlap, self.candidate_total)
    }

    pub fn recall_ratio(&self) -> Ratio<u64> {
        ratio(self.overlap, self.reference_total)
    }

    /// 2PR/(P+R), which reduces to 2·overlap/(|cand|+|ref|).
    pub fn f1_ratio(&self) -> Ratio<u64> {
        if self.overlap == 0 {
            return Ratio::from_integer(0);
        }
        ratio(2 * self.overlap, self.candidate_total + self.reference_total)
    }

    pub fn precision(&self) -> f64 {
        to_f64(self.precision_ratio())
    }

    pub fn recall(&self) -> f64 {
        to_f64(self.recall_ratio())
    }

    pub fn f1(&self) -> f64 {
        to_f64(self.f1_ratio())
    }

    pub fn prf(&self) -> (f64, f64, f64) {
        (self.precision(), self.recall(), self.f1())
    }
}

fn ratio(num: usize, den: usize) -> Ratio<u64> {
    if den == 0 {
        Ratio::from_integer(0)
    } else {
        Ratio::new(num as u64, den as u64)
    }
}

fn to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap over pre-tokenized sequences.
pub fn rouge_n_tokens(candidate: &[String], reference: &[String], n: usize) -> RougeScore {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(gram, &c)| c.min(refs.get(gram).copied().unwrap_or(0)))
        .sum();
    RougeScore {
        overlap,
        candidate_total: cand.values().sum(),
        reference_total: refs.values().sum(),
    }
}

pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> RougeScore {
    rouge_n_tokens(&tokenize(candidate), &tokenize(reference), n)
}

/// Longest common subsequence over pre-tokenized sequences.
pub fn rouge_l_tokens(candidate: &[String], reference: &[String]) -> RougeScore {
    RougeScore {
        overlap: lcs_len(candidate, reference),
        candidate_total: candidate.len(),
        reference_total: reference.len(),
    }
}

pub fn rouge_l(candidate: &str, reference: &str) -> RougeScore {
    rouge_l_tokens(&tokenize(candidate), &tokenize(reference))
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { above.max(row[j]) };
            diag = above;
        }
    }
    row[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RougeVariant {
    #[default]
    #[serde(rename = "rouge1")]
    Rouge1,
    #[serde(rename = "rouge2")]
    Rouge2,
    #[serde(rename = "rougeL")]
    RougeL,
}

impl RougeVariant {
    pub fn score(self, candidate: &str, reference: &str) -> RougeScore {
        match self {
            RougeVariant::Rouge1 => rouge_n(candidate, reference, 1),
            RougeVariant::Rouge2 => rouge_n(candidate, reference, 2),
            RougeVariant::RougeL => rouge_l(candidate, reference),
        }
    }
}

/// Correct/total counts for one accuracy bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Bucket {
    pub correct: usize,
    pub total: usize,
}

impl Bucket {
    fn add(&mut self, correct: bool) {
        self.total += 1;
        if correct {
            self.correct += 1;
        }
    }

    /// `None` for an empty bucket, which is not the same as 0%.
    pub fn percent(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.correct as f64 / self.total as f64)
    }

    pub fn error_percent(&self) -> Option<f64> {
        self.percent().map(|p| 100.0 - p)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Accuracy {
    pub overall: Bucket,
    pub copy: Bucket,
    pub reasoning: Bucket,
    /// Ids skipped because the sample has no correct numeral.
    pub excluded: Vec<String>,
}

/// Copy-annotated samples go to the copy bucket, every other label to the
/// reasoning bucket; unannotated samples count toward overall only.
pub fn numerical_accuracy<S: AsRef<str>>(predictions: &[(S, &Sample)]) -> Accuracy {
    let mut acc = Accuracy::default();
    for (generated, sample) in predictions {
        let Some(reference) = sample.correct_numeral else {
            acc.excluded.push(sample.id.clone());
            continue;
        };
        let correct = numerals_match(generated.as_ref(), reference);
        acc.overall.add(correct);
        match sample.operation {
            Some(OperationType::Copy) => acc.copy.add(correct),
            Some(_) => acc.reasoning.add(correct),
            None => {}
        }
    }
    acc
}

/// Per-label counts for annotated samples, keyed in table order. Labels with
/// no samples are absent.
pub fn error_by_operation<S: AsRef<str>>(
    predictions: &[(S, &Sample)],
) -> BTreeMap<OperationType, Bucket> {
    let mut table: BTreeMap<OperationType, Bucket> = BTreeMap::new();
    for (generated, sample) in predictions {
        if let (Some(op), Some(reference)) = (sample.operation, sample.correct_numeral) {
            table
                .entry(op)
                .or_default()
                .add(numerals_match(generated.as_ref(), reference));
        }
    }
    table
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub generated_headline: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationRow {
    pub operation: OperationType,
    pub count: usize,
    pub wrong: usize,
    pub error_pct: f64,
}

/// Slots for model-based metrics computed outside this toolkit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExternalScores {
    pub bertscore: Option<f64>,
    pub moverscore: Option<f64>,
    pub geval: Option<f64>,
}

/// Percentages rounded to two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub predictions: usize,
    pub overall_acc: Option<f64>,
    pub copy_acc: Option<f64>,
    pub reasoning_acc: Option<f64>,
    pub overall_count: usize,
    pub copy_count: usize,
    pub reasoning_count: usize,
    pub rouge1: Option<f64>,
    pub rouge2: Option<f64>,
    #[serde(rename = "rougeL")]
    pub rouge_l: Option<f64>,
    pub per_operation_error: Vec<OperationRow>,
    /// Prediction ids with no matching sample or no correct numeral.
    pub excluded: Vec<String>,
    pub external: ExternalScores,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Scores predictions against the corpus by id.
pub fn evaluate(predictions: &[Prediction], corpus: &Corpus) -> EvalReport {
    let by_id: HashMap<&str, &Sample> = corpus.samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut matched: Vec<(&str, &Sample)> = Vec::new();
    let mut excluded = Vec::new();
    for p in predictions {
        match by_id.get(p.id.as_str()) {
            Some(sample) => matched.push((p.generated_headline.as_str(), sample)),
            None => excluded.push(p.id.clone()),
        }
    }
    let acc = numerical_accuracy(&matched);
    excluded.extend(acc.excluded.iter().cloned());

    let mean_f1 = |score: &dyn Fn(&str, &str) -> RougeScore| {
        (!matched.is_empty()).then(|| {
            let total: f64 = matched.iter().map(|(g, s)| score(g, &s.headline).f1()).sum();
            round2(100.0 * total / matched.len() as f64)
        })
    };

    let per_operation_error = error_by_operation(&matched)
        .into_iter()
        .map(|(operation, b)| OperationRow {
            operation,
            count: b.total,
            wrong: b.total - b.correct,
            error_pct: round2(b.error_percent().unwrap_or(0.0)),
        })
        .collect();

    EvalReport {
        predictions: predictions.len(),
        overall_acc: acc.overall.percent().map(round2),
        copy_acc: acc.copy.percent().map(round2),
        reasoning_acc: acc.reasoning.percent().map(round2),
        overall_count: acc.overall.total,
        copy_count: acc.copy.total,
        reasoning_count: acc.reasoning.total,
        rouge1: mean_f1(&|c, r| rouge_n(c, r, 1)),
        rouge2: mean_f1(&|c, r| rouge_n(c, r, 2)),
        rouge_l: mean_f1(&|c, r| rouge_l(c, r)),
        per_operation_error,
        excluded,
        external: ExternalScores::default(),
    }
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "n/a".into())
}

/// Plain-text rendering with aligned columns.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let rows = [
        ("Num Acc (Overall)", fmt_pct(report.overall_acc), report.overall_count.to_string()),
        ("Num Acc (Copy)", fmt_pct(report.copy_acc), report.copy_count.to_string()),
        ("Num Acc (Reasoning)", fmt_pct(report.reasoning_acc), report.reasoning_count.to_string()),
        ("ROUGE-1", fmt_pct(report.rouge1), String::new()),
        ("ROUGE-2", fmt_pct(report.rouge2), String::new()),
        ("ROUGE-L", fmt_pct(report.rouge_l), String::new()),
    ];
    let _ = writeln!(out, "{:<22}{:>10}{:>8}", "Metric", "Score", "N");
    for (name, score, n) in rows {
        let _ = writeln!(out, "{name:<22}{score:>10}{n:>8}");
    }
    if !report.per_operation_error.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<12}{:>8}{:>8}{:>10}", "Operation", "Count", "Wrong", "Err%");
        for row in &report.per_operation_error {
            let _ = writeln!(
                out,
                "{:<12}{:>8}{:>8}{:>10.2}",
                row.operation.as_str(),
                row.count,
                row.wrong,
                row.error_pct
            );
        }
    }
    if !report.excluded.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "excluded: {}", report.excluded.join(", "));
    }
    out
}

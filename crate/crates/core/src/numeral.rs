//! Finding numerals in text and reasoning about their values.
//!
//! All arithmetic is exact: values are carried as [`Decimal`] (a scaled
//! integer), so rounding and rescaling checks are reproducible.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Placeholder that replaces a masked numeral.
pub const MASK: &str = "____";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NumeralError {
    #[error("expected exactly one numeral in {text:?}, found {found}")]
    NotSingleNumeral { text: String, found: usize },
    #[error("no article numerals to derive from")]
    EmptyArticle,
    #[error("unknown operation label {0:?}")]
    UnknownOperation(String),
}

/// Magnitude suffix attached to a numeral ("6k", "$400m", "1.5 billion").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Multiplier {
    One,
    Thousand,
    Million,
    Billion,
}

impl Multiplier {
    pub fn factor(self) -> Decimal {
        match self {
            Multiplier::One => Decimal::ONE,
            Multiplier::Thousand => Decimal::from(1_000u32),
            Multiplier::Million => Decimal::from(1_000_000u32),
            Multiplier::Billion => Decimal::from(1_000_000_000u32),
        }
    }
}

/// A numeric mention found in text.
///
/// `span` and `mantissa_span` are byte ranges into the source text, so
/// `&text[n.span.clone()] == n.surface` always holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Numeral {
    pub surface: String,
    pub span: Range<usize>,
    /// The written number before any magnitude suffix, separators removed.
    pub mantissa: Decimal,
    pub mantissa_span: Range<usize>,
    pub multiplier: Multiplier,
    pub is_word: bool,
}

impl Numeral {
    /// Normalized scalar value.
    pub fn value(&self) -> Decimal {
        normalize(self)
    }

    /// Digit string with separators stripped and the suffix left unexpanded
    /// ("30K" gives "30", "6,000" gives "6000").
    pub fn digits(&self) -> String {
        canonical(self.mantissa)
    }
}

/// Mantissa times multiplier. Saturates to the mantissa when the product
/// would not fit, which cannot happen for inputs produced by the scanner.
pub fn normalize(n: &Numeral) -> Decimal {
    n.mantissa
        .checked_mul(n.multiplier.factor())
        .unwrap_or(n.mantissa)
}

/// Bare digit form with no separators and no trailing fractional zeros.
pub fn canonical(value: Decimal) -> String {
    value.normalize().to_string()
}

/// Finds numeric mentions left to right.
///
/// Recognized forms: digit strings with optional thousands separators and a
/// decimal part, an optional attached `k`/`m`/`bn`/`B` suffix or a following
/// `thousand`/`million`/`billion` word, and spelled-out cardinals from zero to
/// ninety-nine optionally followed by `hundred` and a magnitude word.
/// Currency and percent signs are never part of the surface.
pub fn extract_numerals(text: &str) -> Vec<Numeral> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let prev_alnum = i > 0 && prev_char(text, i).is_some_and(|c| c.is_alphanumeric());
        let b = bytes[i];
        if b.is_ascii_digit() {
            let run_end = scan_while(bytes, i, |c| c.is_ascii_alphanumeric());
            if prev_alnum {
                i = run_end;
                continue;
            }
            if let Some((numeral, end)) = scan_digits(text, i) {
                out.push(numeral);
                i = end;
            } else {
                i = scan_while(bytes, i, |c| c.is_ascii_digit() || c == b',' || c == b'.');
            }
            continue;
        }
        if b.is_ascii_alphabetic() {
            let word_end = scan_while(bytes, i, |c| c.is_ascii_alphabetic());
            if !prev_alnum {
                if let Some((numeral, end)) = scan_words(text, i) {
                    out.push(numeral);
                    i = end;
                    continue;
                }
            }
            i = word_end;
            continue;
        }
        i += utf8_len(b);
    }
    out
}

fn utf8_len(first: u8) -> usize {
    match first {
        0x00..=0x7f => 1,
        0xc0..=0xdf => 2,
        0xe0..=0xef => 3,
        _ => 4,
    }
}

fn prev_char(text: &str, i: usize) -> Option<char> {
    text[..i].chars().next_back()
}

fn scan_while(bytes: &[u8], mut i: usize, pred: impl Fn(u8) -> bool) -> usize {
    while i < bytes.len() && pred(bytes[i]) {
        i += 1;
    }
    i
}

fn is_letter_at(bytes: &[u8], i: usize) -> bool {
    i < bytes.len() && bytes[i].is_ascii_alphabetic()
}

fn scan_digits(text: &str, start: usize) -> Option<(Numeral, usize)> {
    let bytes = text.as_bytes();
    let int_end = scan_while(bytes, start, |c| c.is_ascii_digit());
    let mut end = int_end;
    let mut plain = String::from(&text[start..int_end]);

    // Thousands groups: only after a 1-3 digit head, each group exactly 3 digits.
    if int_end - start <= 3 {
        let mut j = int_end;
        let mut grouped = String::new();
        while j + 4 <= bytes.len()
            && bytes[j] == b','
            && bytes[j + 1..j + 4].iter().all(u8::is_ascii_digit)
            && !(j + 4 < bytes.len() && bytes[j + 4].is_ascii_digit())
        {
            grouped.push_str(&text[j + 1..j + 4]);
            j += 4;
        }
        if !grouped.is_empty() {
            plain.push_str(&grouped);
            end = j;
        }
    }

    if end + 1 < bytes.len() && bytes[end] == b'.' && bytes[end + 1].is_ascii_digit() {
        let frac_end = scan_while(bytes, end + 1, |c| c.is_ascii_digit());
        plain.push('.');
        plain.push_str(&text[end + 1..frac_end]);
        end = frac_end;
    }

    let mantissa = Decimal::from_str(&plain).ok()?;
    let mantissa_span = start..end;
    let (multiplier, suffix_end) = scan_suffix(text, end);
    if multiplier == Multiplier::One && is_letter_at(bytes, end) {
        // "27th", "1980s": keep the number, leave the letters alone.
        let word_end = scan_while(bytes, end, |c| c.is_ascii_alphanumeric());
        return Some((make(text, start..end, mantissa, mantissa_span, multiplier, false), word_end));
    }
    mantissa.checked_mul(multiplier.factor())?;
    Some((
        make(text, start..suffix_end, mantissa, mantissa_span, multiplier, false),
        suffix_end,
    ))
}

fn make(
    text: &str,
    span: Range<usize>,
    mantissa: Decimal,
    mantissa_span: Range<usize>,
    multiplier: Multiplier,
    is_word: bool,
) -> Numeral {
    Numeral {
        surface: text[span.clone()].to_string(),
        span,
        mantissa,
        mantissa_span,
        multiplier,
        is_word,
    }
}

/// Attached suffix letters or a following magnitude word.
fn scan_suffix(text: &str, at: usize) -> (Multiplier, usize) {
    let bytes = text.as_bytes();
    let letters_end = scan_while(bytes, at, |c| c.is_ascii_alphabetic());
    if letters_end > at {
        let attached = match &text[at..letters_end] {
            "k" | "K" => Some(Multiplier::Thousand),
            "m" | "M" => Some(Multiplier::Million),
            "bn" | "Bn" | "BN" | "B" => Some(Multiplier::Billion),
            _ => None,
        };
        return match attached {
            Some(m) => (m, letters_end),
            None => (Multiplier::One, at),
        };
    }
    let ws_end = scan_while(bytes, at, |c| c == b' ');
    if ws_end == at || ws_end - at > 1 {
        return (Multiplier::One, at);
    }
    match magnitude_word(text, ws_end) {
        Some((m, end)) => (m, end),
        None => (Multiplier::One, at),
    }
}

fn magnitude_word(text: &str, at: usize) -> Option<(Multiplier, usize)> {
    let end = scan_while(text.as_bytes(), at, |c| c.is_ascii_alphabetic());
    let m = match text[at..end].to_ascii_lowercase().as_str() {
        "thousand" => Multiplier::Thousand,
        "million" => Multiplier::Million,
        "billion" => Multiplier::Billion,
        _ => return None,
    };
    Some((m, end))
}

const UNITS: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen",
];
const TENS: [&str; 8] = [
    "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

fn unit_value(word: &str) -> Option<u32> {
    UNITS.iter().position(|u| *u == word).map(|p| p as u32)
}

fn tens_value(word: &str) -> Option<u32> {
    TENS.iter().position(|t| *t == word).map(|p| 20 + 10 * p as u32)
}

/// Reads the lowercase alphabetic word at `at`, returning it and its end.
fn word_at(text: &str, at: usize) -> (String, usize) {
    let end = scan_while(text.as_bytes(), at, |c| c.is_ascii_alphabetic());
    (text[at..end].to_ascii_lowercase(), end)
}

fn scan_words(text: &str, start: usize) -> Option<(Numeral, usize)> {
    let bytes = text.as_bytes();
    let (first, mut end) = word_at(text, start);
    let mut base = if let Some(u) = unit_value(&first) {
        u
    } else {
        tens_value(&first)?
    };
    if base >= 20 {
        // "twenty-five" or "twenty five"
        if end + 1 < bytes.len() && (bytes[end] == b'-' || bytes[end] == b' ') {
            let (next, next_end) = word_at(text, end + 1);
            if let Some(u) = unit_value(&next).filter(|u| (1..10).contains(u)) {
                base += u;
                end = next_end;
            }
        }
    }
    if is_letter_at(bytes, end) {
        return None;
    }
    let mut mantissa = Decimal::from(base);
    if end + 1 < bytes.len() && bytes[end] == b' ' {
        let (next, next_end) = word_at(text, end + 1);
        if next == "hundred" {
            mantissa *= Decimal::from(100u32);
            end = next_end;
        }
    }
    let mantissa_end = end;
    let (multiplier, suffix_end) = if end + 1 < bytes.len() && bytes[end] == b' ' {
        magnitude_word(text, end + 1).unwrap_or((Multiplier::One, end))
    } else {
        (Multiplier::One, end)
    };
    Some((
        make(text, start..suffix_end, mantissa, start..mantissa_end, multiplier, true),
        suffix_end,
    ))
}

/// True iff the first numeral of `generated` equals `reference` by value or by
/// its unexpanded digit string (so "30K" matches an annotated 30).
pub fn numerals_match(generated: &str, reference: Decimal) -> bool {
    match extract_numerals(generated).first() {
        Some(n) => n.value() == reference || n.mantissa == reference,
        None => false,
    }
}

/// Replaces the single numeral's written digits with [`MASK`], keeping
/// currency signs and magnitude suffixes in place.
pub fn mask_numeral(headline: &str) -> Result<String, NumeralError> {
    let found = extract_numerals(headline);
    if found.len() != 1 {
        return Err(NumeralError::NotSingleNumeral {
            text: headline.to_string(),
            found: found.len(),
        });
    }
    let span = found[0].mantissa_span.clone();
    let mut out = String::with_capacity(headline.len());
    out.push_str(&headline[..span.start]);
    out.push_str(MASK);
    out.push_str(&headline[span.end..]);
    Ok(out)
}

/// The nine operation labels used to annotate how a headline numeral is
/// derived from the article. Ordering follows the error-analysis table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OperationType {
    Copy,
    Trans,
    Paraphrase,
    Round,
    Subtract,
    Add,
    Span,
    Divide,
    Multiply,
}

impl OperationType {
    pub const ALL: [OperationType; 9] = [
        OperationType::Copy,
        OperationType::Trans,
        OperationType::Paraphrase,
        OperationType::Round,
        OperationType::Subtract,
        OperationType::Add,
        OperationType::Span,
        OperationType::Divide,
        OperationType::Multiply,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OperationType::Copy => "Copy",
            OperationType::Trans => "Trans",
            OperationType::Paraphrase => "Paraphrase",
            OperationType::Round => "Round",
            OperationType::Subtract => "Subtract",
            OperationType::Add => "Add",
            OperationType::Span => "Span",
            OperationType::Divide => "Divide",
            OperationType::Multiply => "Multiply",
        }
    }
}

impl fmt::Display for OperationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OperationType {
    type Err = NumeralError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OperationType::ALL
            .into_iter()
            .find(|op| op.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| NumeralError::UnknownOperation(s.to_string()))
    }
}

impl Serialize for OperationType {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for OperationType {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

const RESCALE_FACTORS: [u64; 3] = [1_000, 1_000_000, 1_000_000_000];

/// Searches for every operation that derives `target` from the article
/// numerals. `Trans` and `Span` are annotation-only and never returned.
pub fn infer_operations(
    article: &[Decimal],
    target: Decimal,
) -> Result<BTreeSet<OperationType>, NumeralError> {
    if article.is_empty() {
        return Err(NumeralError::EmptyArticle);
    }
    let mut ops = BTreeSet::new();
    if article.contains(&target) {
        ops.insert(OperationType::Copy);
    }

    for (i, &a) in article.iter().enumerate() {
        for (j, &b) in article.iter().enumerate() {
            if i == j {
                continue;
            }
            if a.checked_add(b) == Some(target) {
                ops.insert(OperationType::Add);
            }
            if a.checked_sub(b) == Some(target) {
                ops.insert(OperationType::Subtract);
            }
            if a.checked_mul(b) == Some(target) {
                ops.insert(OperationType::Multiply);
            }
            if !b.is_zero() && target.checked_mul(b) == Some(a) {
                ops.insert(OperationType::Divide);
            }
        }
    }

    let rescaled = |a: Decimal| {
        RESCALE_FACTORS
            .iter()
            .filter_map(move |&m| a.checked_div(Decimal::from(m)))
    };

    if article
        .iter()
        .any(|&a| rescaled(a).any(|scaled| scaled == target))
    {
        ops.insert(OperationType::Paraphrase);
    }

    let rounds_to_target = |v: Decimal| v != target && rounding_candidates(v).contains(&target);
    if article
        .iter()
        .any(|&a| rounds_to_target(a) || rescaled(a).any(rounds_to_target))
    {
        ops.insert(OperationType::Round);
    }

    Ok(ops)
}

/// Every value reachable by rounding `v` half away from zero to one, two or
/// three significant digits, or to any coarser number of decimal places.
pub fn rounding_candidates(v: Decimal) -> Vec<Decimal> {
    let mut out = Vec::new();
    for sig in 1..=3 {
        if let Some(r) = round_significant(v, sig) {
            out.push(r);
        }
    }
    for dp in 0..v.scale() {
        out.push(v.round_dp_with_strategy(dp, RoundingStrategy::MidpointAwayFromZero));
    }
    out
}

fn round_significant(v: Decimal, sig: i64) -> Option<Decimal> {
    if v.is_zero() {
        return None;
    }
    let places = sig - 1 - order_of_magnitude(v.abs());
    if places >= 0 {
        return Some(v.round_dp_with_strategy(places as u32, RoundingStrategy::MidpointAwayFromZero));
    }
    let factor = Decimal::from_i128_with_scale(10i128.checked_pow((-places) as u32)?, 0);
    let scaled = v
        .checked_div(factor)?
        .round_dp_with_strategy(0, RoundingStrategy::MidpointAwayFromZero);
    scaled.checked_mul(factor)
}

/// floor(log10(v)) for positive `v`.
fn order_of_magnitude(v: Decimal) -> i64 {
    let ten = Decimal::TEN;
    let mut e = 0i64;
    let mut x = v;
    while x >= ten {
        x /= ten;
        e += 1;
    }
    while x < Decimal::ONE {
        x *= ten;
        e -= 1;
    }
    e
}

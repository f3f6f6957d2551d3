//! The four-section rationale template: topic, entities, numbers and
//! reasoning steps, closed by a sentence stating the headline numeral.

use std::fmt;

use rust_decimal::Decimal;
use thiserror::Error;

use crate::numeral::{self, extract_numerals};

/// Phrase that introduces the predicted numeral in the closing sentence.
pub const CLOSING_PHRASE: &str = "the numeral in the headline should be";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RationaleError {
    #[error("missing section: {0}")]
    MissingSection(Section),
    #[error("section {found} appears after {after}")]
    OutOfOrder { found: Section, after: Section },
    #[error("duplicate section: {0}")]
    DuplicateSection(Section),
    #[error("missing closing numeral sentence")]
    MissingClosing,
    #[error("closing sentence names {0} numerals, expected one")]
    AmbiguousClosing(usize),
    #[error("invalid rationale: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Section {
    Topic,
    Entities,
    Numbers,
    Reasoning,
}

impl Section {
    const ORDER: [Section; 4] = [
        Section::Topic,
        Section::Entities,
        Section::Numbers,
        Section::Reasoning,
    ];

    /// Header text as rendered, without the bold markers.
    pub fn title(self) -> &'static str {
        match self {
            Section::Topic => "Topic the headline should focus on",
            Section::Entities => "Entities Mentioned",
            Section::Numbers => "Numbers Mentioned",
            Section::Reasoning => "Reasoning steps",
        }
    }

    pub fn header(self) -> String {
        format!("**{}**", self.title())
    }

    /// Recognizes a header line, tolerating case, a trailing colon, markdown
    /// `#` prefixes and the "Entitiess" misspelling.
    fn from_header_line(line: &str) -> Option<Section> {
        let t = line.trim();
        let (inner, marked) = if let Some(rest) = t.strip_prefix("**") {
            (rest.trim_end_matches(':').strip_suffix("**")?, true)
        } else if t.starts_with('#') {
            (t.trim_start_matches('#'), true)
        } else {
            (t, false)
        };
        if !marked {
            return None;
        }
        let key = inner
            .trim()
            .trim_end_matches(':')
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase();
        match key.as_str() {
            "topic the headline should focus on" | "topic" => Some(Section::Topic),
            "entities mentioned" | "entitiess mentioned" | "entities" => Some(Section::Entities),
            "numbers mentioned" | "numbers" => Some(Section::Numbers),
            "reasoning steps" | "reasoning" => Some(Section::Reasoning),
            _ => None,
        }
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

/// One entry of the numbers list, e.g. `$142 (cost of the wedding)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NumberMention {
    pub raw: String,
    pub description: String,
}

impl NumberMention {
    pub fn new(raw: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            raw: raw.into(),
            description: description.into(),
        }
    }

    /// Splits a trailing parenthesized description off a list item.
    fn parse(item: &str) -> Self {
        let item = item.trim();
        if let Some(body) = item.strip_suffix(')') {
            let mut depth = 0usize;
            for (i, c) in body.char_indices().rev() {
                match c {
                    ')' => depth += 1,
                    '(' if depth == 0 => {
                        let raw = body[..i].trim_end();
                        if !raw.is_empty() {
                            return Self::new(raw, &body[i + 1..]);
                        }
                        break;
                    }
                    '(' => depth -= 1,
                    _ => {}
                }
            }
        }
        Self::new(item, "")
    }

    /// Numerals in the written form; the value is never stored separately.
    pub fn values(&self) -> Vec<Decimal> {
        extract_numerals(&self.raw).iter().map(|n| n.value()).collect()
    }
}

impl fmt::Display for NumberMention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.description.is_empty() {
            f.write_str(&self.raw)
        } else {
            write!(f, "{} ({})", self.raw, self.description)
        }
    }
}

/// A parsed rationale. `reasoning` holds the steps without the closing
/// sentence; [`render`] appends it from `final_numeral`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TenRationale {
    pub topic: String,
    pub entities: Vec<String>,
    pub numbers_mentioned: Vec<NumberMention>,
    pub reasoning: String,
    pub final_numeral: Decimal,
}

impl TenRationale {
    pub fn validate(&self) -> Result<(), RationaleError> {
        let invalid = |m: &str| Err(RationaleError::Invalid(m.to_string()));
        if self.topic.trim().is_empty() {
            return invalid("empty topic");
        }
        if self.reasoning.trim().is_empty() {
            return invalid("empty reasoning");
        }
        if self.entities.is_empty() {
            return invalid("no entities");
        }
        if self.numbers_mentioned.is_empty() {
            return invalid("no numbers mentioned");
        }
        for block in [&self.topic, &self.reasoning] {
            if block.trim() != block.as_str() {
                return invalid("section body has surrounding whitespace");
            }
            if block.lines().any(|l| Section::from_header_line(l).is_some()) {
                return invalid("section header inside section body");
            }
            if block.to_lowercase().contains(CLOSING_PHRASE) {
                return invalid("closing sentence inside section body");
            }
        }
        for entity in &self.entities {
            if !is_single_item(entity) {
                return invalid("entity must be one non-empty trimmed line");
            }
        }
        for n in &self.numbers_mentioned {
            if !is_single_item(&n.raw) || n.description.contains('\n') {
                return invalid("number mention must be one non-empty trimmed line");
            }
            if NumberMention::parse(&n.to_string()) != *n {
                return invalid("number mention is not recoverable from its rendered form");
            }
        }
        if self.final_numeral.is_sign_negative() && !self.final_numeral.is_zero() {
            return invalid("negative final numeral");
        }
        Ok(())
    }
}

fn is_single_item(s: &str) -> bool {
    !s.is_empty() && s.trim() == s && !s.contains('\n') && strip_list_marker(s) == s
}

/// Renders the canonical template.
pub fn render(r: &TenRationale) -> Result<String, RationaleError> {
    r.validate()?;
    let mut out = String::new();
    out.push_str(&Section::Topic.header());
    out.push('\n');
    out.push_str(r.topic.trim());
    out.push_str("\n\n");
    out.push_str(&Section::Entities.header());
    out.push('\n');
    for (i, e) in r.entities.iter().enumerate() {
        out.push_str(&format!("{}. {}\n", i + 1, e));
    }
    out.push('\n');
    out.push_str(&Section::Numbers.header());
    out.push('\n');
    for (i, n) in r.numbers_mentioned.iter().enumerate() {
        out.push_str(&format!("{}. {}\n", i + 1, n));
    }
    out.push('\n');
    out.push_str(&Section::Reasoning.header());
    out.push('\n');
    out.push_str(r.reasoning.trim());
    out.push_str("\n\n");
    out.push_str(&closing_sentence(r.final_numeral));
    out.push('\n');
    Ok(out)
}

pub fn closing_sentence(n: Decimal) -> String {
    format!("Therefore, {} {}.", CLOSING_PHRASE, numeral::canonical(n))
}

/// Parses a rationale. Sections must appear in template order; text before
/// the first header is ignored.
pub fn parse(text: &str) -> Result<TenRationale, RationaleError> {
    let mut bodies: [Option<Vec<&str>>; 4] = Default::default();
    let mut current: Option<Section> = None;
    for line in text.lines() {
        if let Some(section) = Section::from_header_line(line) {
            if bodies[section as usize].is_some() {
                return Err(RationaleError::DuplicateSection(section));
            }
            if let Some(prev) = current {
                if section < prev {
                    return Err(RationaleError::OutOfOrder {
                        found: section,
                        after: prev,
                    });
                }
            }
            bodies[section as usize] = Some(Vec::new());
            current = Some(section);
        } else if let Some(section) = current {
            if let Some(body) = bodies[section as usize].as_mut() {
                body.push(line);
            }
        }
    }
    for section in Section::ORDER {
        if bodies[section as usize].is_none() {
            return Err(RationaleError::MissingSection(section));
        }
    }
    let [topic, entities, numbers, reasoning] = bodies.map(Option::unwrap_or_default);

    let reasoning_text = reasoning.join("\n");
    let (steps, final_numeral) = split_closing(&reasoning_text)?;
    let rationale = TenRationale {
        topic: topic.join("\n").trim().to_string(),
        entities: list_items(&entities),
        numbers_mentioned: list_items(&numbers)
            .iter()
            .map(|item| NumberMention::parse(item))
            .collect(),
        reasoning: steps.trim().to_string(),
        final_numeral,
    };
    if rationale.topic.is_empty() {
        return Err(RationaleError::Invalid("empty topic".into()));
    }
    if rationale.entities.is_empty() {
        return Err(RationaleError::Invalid("no entities".into()));
    }
    if rationale.numbers_mentioned.is_empty() {
        return Err(RationaleError::Invalid("no numbers mentioned".into()));
    }
    if rationale.reasoning.is_empty() {
        return Err(RationaleError::Invalid("empty reasoning".into()));
    }
    Ok(rationale)
}

fn strip_list_marker(line: &str) -> &str {
    let t = line.trim_start();
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(after) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return after;
        }
    }
    for bullet in ["- ", "* ", "• "] {
        if let Some(after) = t.strip_prefix(bullet) {
            return after;
        }
    }
    line
}

fn list_items(lines: &[&str]) -> Vec<String> {
    lines
        .iter()
        .map(|l| strip_list_marker(l.trim()).trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

/// Finds the last closing sentence, returning the text before it and the
/// stated numeral.
fn split_closing(text: &str) -> Result<(&str, Decimal), RationaleError> {
    // ASCII folding keeps byte offsets aligned with `text`.
    let folded = text.to_ascii_lowercase();
    let pos = folded.rfind(CLOSING_PHRASE).ok_or(RationaleError::MissingClosing)?;
    let after = &text[pos + CLOSING_PHRASE.len()..];
    let sentence = after.lines().next().unwrap_or("");
    let sentence = match sentence.find(". ") {
        Some(cut) => &sentence[..cut],
        None => sentence,
    };
    let found = extract_numerals(sentence);
    let value = match found.as_slice() {
        [only] => only.mantissa,
        [] => return Err(RationaleError::MissingClosing),
        many => return Err(RationaleError::AmbiguousClosing(many.len())),
    };
    let before = &text[..pos];
    let start = sentence_start(before);
    Ok((&text[..start], value))
}

/// Start of the sentence containing the end of `before`: just past the last
/// newline or sentence terminator.
fn sentence_start(before: &str) -> usize {
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    let line = &before[line_start..];
    match line.rfind(". ") {
        Some(i) => line_start + i + 2,
        None => line_start,
    }
}

/// The numeral stated by the last closing sentence in `text`.
pub fn final_numeral(text: &str) -> Result<Decimal, RationaleError> {
    split_closing(text).map(|(_, n)| n)
}

/// Whitespace-insensitive comparison key.
pub fn whitespace_normalized(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> TenRationale {
        TenRationale {
            topic: "The headline should focus on the cost of the wedding.".into(),
            entities: vec!["Dax Shepard".into(), "Kristen Bell".into()],
            numbers_mentioned: vec![NumberMention::new("$142", "cost of the wedding")],
            reasoning: "The news content directly states the cost was $142.".into(),
            final_numeral: Decimal::from(142),
        }
    }

    #[test]
    fn renders_four_sections_and_closing() {
        let text = render(&example()).unwrap();
        assert!(text.starts_with("**Topic the headline should focus on**\n"));
        assert!(text.contains("**Entities Mentioned**\n1. Dax Shepard\n2. Kristen Bell\n"));
        assert!(text.contains("**Numbers Mentioned**\n1. $142 (cost of the wedding)\n"));
        assert!(text.contains("**Reasoning steps**\n"));
        assert!(text
            .trim_end()
            .ends_with("Therefore, the numeral in the headline should be 142."));
    }

    #[test]
    fn canonical_numeral_has_no_separators() {
        let mut r = example();
        r.final_numeral = "64728.00".parse().unwrap();
        assert!(render(&r).unwrap().contains("should be 64728."));
    }

    #[test]
    fn parse_inverts_render() {
        let r = example();
        assert_eq!(parse(&render(&r).unwrap()).unwrap(), r);
    }

    #[test]
    fn render_rejects_invalid_fields() {
        let mut r = example();
        r.entities.clear();
        assert!(render(&r).is_err());
        let mut r = example();
        r.reasoning = "Therefore, the numeral in the headline should be 3.".into();
        assert!(render(&r).is_err());
        let mut r = example();
        r.entities = vec!["1. numbered".into()];
        assert!(render(&r).is_err());
    }

    #[test]
    fn missing_reasoning_section_is_named() {
        let text = "**Topic the headline should focus on**\nT\n\n**Entities Mentioned**\n1. A\n\n**Numbers Mentioned**\n1. 5 (x)\n";
        let err = parse(text).unwrap_err();
        assert_eq!(err.to_string(), "missing section: Reasoning steps");
    }

    #[test]
    fn sections_must_be_in_order() {
        let text = "**Entities Mentioned**\n1. A\n**Topic the headline should focus on**\nT\n";
        assert!(matches!(parse(text), Err(RationaleError::OutOfOrder { .. })));
    }

    #[test]
    fn header_variants_are_accepted() {
        for (line, section) in [
            ("**Entities Mentioned:**", Section::Entities),
            ("**Entitiess Mentioned**", Section::Entities),
            ("**Reasoning Steps**", Section::Reasoning),
            ("### Numbers Mentioned", Section::Numbers),
        ] {
            assert_eq!(Section::from_header_line(line), Some(section), "{line}");
        }
        assert_eq!(Section::from_header_line("Reasoning steps"), None);
    }

    #[test]
    fn final_numeral_uses_last_closing_sentence() {
        assert_eq!(
            final_numeral("…should be 5. Actually, the numeral in the headline should be 10.").unwrap(),
            Decimal::from(10)
        );
        assert_eq!(
            final_numeral("Therefore, the numeral in the headline should be 10.").unwrap(),
            Decimal::from(10)
        );
        assert_eq!(final_numeral("no closing here"), Err(RationaleError::MissingClosing));
        assert_eq!(
            final_numeral("Therefore, the numeral in the headline should be 10 or 11."),
            Err(RationaleError::AmbiguousClosing(2))
        );
    }

    #[test]
    fn number_mentions_split_trailing_description() {
        assert_eq!(
            NumberMention::parse("May 28, 1985 (date of escape)"),
            NumberMention::new("May 28, 1985", "date of escape")
        );
        assert_eq!(
            NumberMention::parse("5 (months (roughly) into sentence)"),
            NumberMention::new("5", "months (roughly) into sentence")
        );
        assert_eq!(NumberMention::parse("(odd)"), NumberMention::new("(odd)", ""));
        assert_eq!(
            NumberMention::new("$500 million", "surge").values(),
            vec![Decimal::from(500_000_000)]
        );
    }
}

//! Offline stand-in for the three model roles, used as the mock fallback
//! when no recorded fixture exists. Output is a pure function of the prompt
//! and the completion index, so mock runs are reproducible.
//!
//! The rationale-generator role deliberately produces a spread of quality:
//! different final numerals, duplicate draws and the odd unparseable text.

use rust_decimal::Decimal;
use sha2::{Digest, Sha256};

use crate::distill::{HEADLINE_INSTRUCTION, RATIONALE_INSTRUCTION, TEACHER_INSTRUCTION};
use crate::llm_gateway::{ChatMessage, Responder, Role};
use crate::numeral::{canonical, extract_numerals, infer_operations, rounding_candidates, OperationType};
use crate::rationale::{self, NumberMention, TenRationale};

const MAX_ENTITIES: usize = 6;
const MAX_NUMBERS: usize = 8;

#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticResponder;

impl Responder for SyntheticResponder {
    fn respond(&self, messages: &[ChatMessage], index: usize) -> String {
        let last = messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.content.as_str());
        let system = messages.first().filter(|m| m.role == Role::System).map(|m| m.content.as_str());
        match (system, last) {
            (Some(TEACHER_INSTRUCTION), Some(user)) => teacher(user),
            (_, Some(user)) if user.starts_with(RATIONALE_INSTRUCTION) => {
                student_rationale(after(user, "News: ").unwrap_or(user), index)
            }
            (_, Some(user)) if user.starts_with(HEADLINE_INSTRUCTION) => headline(user),
            _ => String::from("I can only help with news headlines."),
        }
    }
}

fn after<'a>(text: &'a str, marker: &str) -> Option<&'a str> {
    text.find(marker).map(|i| &text[i + marker.len()..])
}

fn seed(text: &str, index: usize, salt: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(salt.as_bytes())
        .chain_update(index.to_le_bytes())
        .chain_update(text.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Runs of capitalized words, skipping lone sentence-openers.
fn entities(article: &str) -> Vec<String> {
    const SKIP: [&str; 16] = [
        "The", "A", "An", "In", "On", "At", "He", "She", "It", "They", "But", "And", "Less", "Police", "Then", "After",
    ];
    let mut out: Vec<String> = Vec::new();
    let mut run: Vec<&str> = Vec::new();
    let flush = |run: &mut Vec<&str>, out: &mut Vec<String>| {
        if !(run.len() == 1 && SKIP.contains(&run[0])) && !run.is_empty() {
            let name = run.join(" ");
            if !out.contains(&name) {
                out.push(name);
            }
        }
        run.clear();
    };
    for raw in article.split_whitespace() {
        let word = raw.trim_matches(|c: char| !c.is_alphanumeric());
        let word = word.strip_suffix("'s").unwrap_or(word);
        let capital = word.chars().next().is_some_and(char::is_uppercase) && word.chars().all(char::is_alphabetic);
        if capital {
            run.push(word);
        } else {
            flush(&mut run, &mut out);
        }
        if raw.ends_with(['.', ',', ';', ':', ')']) {
            flush(&mut run, &mut out);
        }
    }
    flush(&mut run, &mut out);
    out.truncate(MAX_ENTITIES);
    out
}

fn mentions(article: &str) -> Vec<NumberMention> {
    let mut seen = Vec::new();
    let mut out = Vec::new();
    for n in extract_numerals(article) {
        if seen.contains(&n.value()) {
            continue;
        }
        seen.push(n.value());
        out.push(NumberMention::new(n.surface.trim(), "mentioned in the news"));
        if out.len() == MAX_NUMBERS {
            break;
        }
    }
    out
}

fn article_values(article: &str) -> Vec<Decimal> {
    let mut values: Vec<Decimal> = Vec::new();
    for n in extract_numerals(article) {
        for v in [n.value(), n.mantissa] {
            if !values.contains(&v) {
                values.push(v);
            }
        }
    }
    values
}

fn build(topic: String, article: &str, reasoning: String, target: Decimal) -> TenRationale {
    let mut entity_list = entities(article);
    if entity_list.is_empty() {
        entity_list.push("the people in the news".into());
    }
    let mut numbers = mentions(article);
    if numbers.is_empty() {
        numbers.push(NumberMention::new("none", "no figures are given"));
    }
    TenRationale {
        topic,
        entities: entity_list,
        numbers_mentioned: numbers,
        reasoning,
        final_numeral: target,
    }
}

fn explain(values: &[Decimal], target: Decimal) -> String {
    let ops = infer_operations(values, target).unwrap_or_default();
    let n = canonical(target);
    match ops.iter().next() {
        Some(OperationType::Copy) => format!("The news states {n} directly, so the headline copies it."),
        Some(OperationType::Paraphrase) => format!("The news gives this figure at a larger scale; written compactly it is {n}."),
        Some(OperationType::Round) => format!("The exact figure in the news rounds to {n} for a headline."),
        Some(op) => format!("Combining the figures in the news ({}) gives {n}.", op.as_str().to_lowercase()),
        None => format!("Reading the news as a whole, the figure the headline needs is {n}."),
    }
}

/// Teacher answer: a well-formed rationale ending in the supplied number.
fn teacher(user: &str) -> String {
    let article = after(user, "News: ")
        .and_then(|rest| rest.split("\nHeadline:").next())
        .unwrap_or("");
    let target = after(user, "Correct Number:")
        .and_then(|rest| extract_numerals(rest).into_iter().next())
        .map(|n| n.mantissa)
        .unwrap_or(Decimal::ZERO);
    let subject = entities(article).into_iter().next().unwrap_or_else(|| "the story".into());
    let topic = format!("The headline should focus on {subject} and the key figure in the news.");
    let r = build(topic, article, explain(&article_values(article), target), target);
    rationale::render(&r).expect("synthetic rationale is well formed")
}

const TOPICS: [&str; 2] = [
    "The headline should focus on {} and the key figure in the news.",
    "The headline should focus on the number reported about {}.",
];

/// Numbers a student might land on: the article's own figures plus their
/// compact and rounded forms.
fn student_options(article: &str) -> Vec<Decimal> {
    let mut options: Vec<Decimal> = Vec::new();
    let mut push = |v: Decimal| {
        let v = v.normalize();
        if !options.contains(&v) {
            options.push(v);
        }
    };
    for v in article_values(article) {
        let mut forms = vec![v];
        for scale in [Decimal::from(1_000), Decimal::from(1_000_000)] {
            if v >= scale {
                forms.push(v / scale);
            }
        }
        for f in forms {
            // two significant digits: 64,728 -> 65,000, 64.728 -> 65
            let rounded = rounding_candidates(f).get(1).copied().unwrap_or(f);
            push(if f.scale() > 0 { rounded } else { f });
            push(rounded);
        }
    }
    if options.is_empty() {
        options.push(Decimal::ONE);
    }
    options
}

/// One sampled draw from the rationale generator.
fn student_rationale(article: &str, index: usize) -> String {
    let h = seed(article, index, "rationale");
    let options = student_options(article);
    let pick = options[(h % options.len() as u64) as usize];
    let subject = entities(article).into_iter().next().unwrap_or_else(|| "the story".into());
    let topic = TOPICS[((h >> 16) % TOPICS.len() as u64) as usize].replace("{}", &subject);
    let r = build(topic, article, explain(&article_values(article), pick), pick);
    let text = rationale::render(&r).expect("synthetic rationale is well formed");
    if (h >> 24).is_multiple_of(11) {
        // truncated generation: no closing sentence
        return text.lines().take_while(|l| !l.starts_with("Therefore")).collect::<Vec<_>>().join("\n");
    }
    text
}

/// Greedy headline from article plus rationale.
fn headline(user: &str) -> String {
    let (news, rationale_text) = match user.split_once("\n\nRationale:\n") {
        Some((n, r)) => (after(n, "News: ").unwrap_or(n), r),
        None => (user, ""),
    };
    let number = rationale::final_numeral(rationale_text)
        .ok()
        .or_else(|| extract_numerals(news).first().map(|n| n.mantissa))
        .unwrap_or(Decimal::ONE);
    let subject = rationale::parse(rationale_text)
        .ok()
        .and_then(|r| r.entities.first().cloned())
        .or_else(|| entities(news).into_iter().next())
        .unwrap_or_else(|| "Officials".into());
    format!("{} Reported in {} Story.", canonical(number), subject)
}

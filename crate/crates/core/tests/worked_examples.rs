//! The five worked examples. Raw transcriptions keep their header variants
//! and must parse to the same content as the reviewed demos.

use std::path::PathBuf;
use std::time::Instant;

use ten_core::corpus::{load_corpus, Source};
use ten_core::distill::{builtin_demos, load_demos, operand_values, teacher_input};
use ten_core::numeral::{infer_operations, mask_numeral, numerals_match, OperationType};
use ten_core::rationale::{self, whitespace_normalized};
use ten_core::Decimal;

fn fixture(path: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/worked_examples").join(path)
}

// Annotated operation and correct number for each example, in order.
const EXPECTED: [(&str, OperationType, i64); 5] = [
    ("example-1", OperationType::Copy, 142),
    ("example-2", OperationType::Add, 10),
    ("example-3", OperationType::Subtract, 32),
    ("example-4", OperationType::Paraphrase, 30),
    ("example-5", OperationType::Round, 65),
];

// Masked headlines as printed in the worked examples.
const MASKED: [&str; 5] = [
    "Dax Shepard: Wedding to Kristen Bell Cost $____.",
    "____ Cops Injured in St. Louis Protests.",
    "He Spent ____ Years on the Run. Then Police Received a Tip.",
    "____K Walmart Part-Timers to Lose Health Insurance.",
    "Walker Demotes Donor's Kid— to Puny $____K Job.",
];

const VERBATIM: [&str; 5] = ["01_copy", "02_add", "03_subtract", "04_paraphrase", "05_round"];

#[test]
fn corpus_fixture_matches_annotations() {
    let corpus = load_corpus(&fixture("corpus.jsonl"), Source::Numhg).unwrap();
    assert_eq!(corpus.len(), 5);
    for (sample, (id, op, n)) in corpus.samples.iter().zip(EXPECTED) {
        assert_eq!(sample.id, id);
        assert_eq!(sample.operation, Some(op));
        assert_eq!(sample.correct_numeral, Some(Decimal::from(n)));
        assert!(numerals_match(&sample.headline, Decimal::from(n)), "{}", sample.headline);
    }
}

#[test]
fn annotated_operation_is_inferred() {
    let started = Instant::now();
    let corpus = load_corpus(&fixture("corpus.jsonl"), Source::Numhg).unwrap();
    let demos = builtin_demos();
    for ((sample, demo), (id, op, n)) in corpus.samples.iter().zip(&demos).zip(EXPECTED) {
        assert_eq!(demo.sample.id, id);
        let values = operand_values(&sample.article, Some(&demo.rationale_text));
        let ops = infer_operations(&values, Decimal::from(n)).unwrap();
        assert!(ops.contains(&op), "{id}: {op} not in {ops:?}");
    }
    assert!(started.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn implicit_operand_needs_the_rationale() {
    // "a Highway Patrol trooper" is never written as 1 in the article
    let demos = builtin_demos();
    let add = &demos[1];
    let bare = operand_values(&add.sample.article, None);
    assert!(!infer_operations(&bare, Decimal::from(10)).unwrap().contains(&OperationType::Add));
}

#[test]
fn masking_reproduces_printed_headlines() {
    let corpus = load_corpus(&fixture("corpus.jsonl"), Source::Numhg).unwrap();
    for (sample, expected) in corpus.samples.iter().zip(MASKED) {
        assert_eq!(mask_numeral(&sample.headline).unwrap(), expected);
        let prompt = teacher_input(sample, None).unwrap();
        assert!(prompt.contains(&format!("\nHeadline: {expected}\n")));
    }
}

#[test]
fn demo_rationales_are_render_fixed_points() {
    for demo in builtin_demos() {
        let parsed = rationale::parse(&demo.rationale_text).unwrap();
        let rendered = rationale::render(&parsed).unwrap();
        assert_eq!(
            whitespace_normalized(&rendered),
            whitespace_normalized(&demo.rationale_text),
            "{}",
            demo.name
        );
        assert_eq!(rationale::parse(&rendered).unwrap(), parsed);
    }
}

#[test]
fn transcriptions_parse_to_the_demo_content() {
    let demos = builtin_demos();
    for (name, demo) in VERBATIM.iter().zip(&demos) {
        let text = std::fs::read_to_string(fixture(&format!("verbatim/{name}.txt"))).unwrap();
        let raw = rationale::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let reviewed = rationale::parse(&demo.rationale_text).unwrap();
        assert_eq!(raw, reviewed, "{name}");
        assert_eq!(
            whitespace_normalized(&rationale::render(&raw).unwrap()),
            whitespace_normalized(&demo.rationale_text)
        );
    }
}

#[test]
fn section_counts() {
    let demos = builtin_demos();
    let counts: Vec<(usize, usize)> = demos
        .iter()
        .map(|d| {
            let r = rationale::parse(&d.rationale_text).unwrap();
            (r.entities.len(), r.numbers_mentioned.len())
        })
        .collect();
    assert_eq!(counts[1], (6, 9));
    assert_eq!(counts[3].1, 10);
    assert_eq!(counts[4], (5, 6));
}

#[test]
fn final_numerals_match_correct_numbers() {
    for (demo, (_, _, n)) in builtin_demos().iter().zip(EXPECTED) {
        assert_eq!(rationale::final_numeral(&demo.rationale_text).unwrap(), Decimal::from(n));
    }
}

#[test]
fn demo_directory_loads_like_builtins() {
    assert_eq!(load_demos(&fixture("demos")).unwrap(), builtin_demos());
}

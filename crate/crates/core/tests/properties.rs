mod support;

use std::collections::BTreeSet;

use num_rational::Ratio;
use proptest::prelude::*;
use ten_core::corpus::{Sample, Split};
use ten_core::eval::{numerical_accuracy, rouge_l_tokens, rouge_n_tokens, tokenize};
use ten_core::numeral::{extract_numerals, infer_operations, mask_numeral, OperationType, MASK};
use ten_core::rationale::{self, whitespace_normalized};
use ten_core::Decimal;

use support::*;

type Q = Ratio<i128>;

fn q(d: Decimal) -> Q {
    Q::new(d.mantissa(), 10i128.pow(d.scale()))
}

fn pow10(e: i32) -> Q {
    if e >= 0 {
        Q::from_integer(10i128.pow(e as u32))
    } else {
        Q::new(1, 10i128.pow((-e) as u32))
    }
}

/// floor(log10 x) for x > 0.
fn magnitude(x: Q) -> i32 {
    let mut e = 0;
    while x >= pow10(e + 1) {
        e += 1;
    }
    while x < pow10(e) {
        e -= 1;
    }
    e
}

/// Everything `x` can round to: 1-3 significant digits, or any decimal
/// place coarser than its exact expansion. Ratio::round is half away from zero.
fn roundings(x: Q) -> Vec<Q> {
    let mut out = Vec::new();
    if x == Q::from_integer(0) {
        return out;
    }
    let e = magnitude(if x < Q::from_integer(0) { -x } else { x });
    for sig in 1..=3 {
        let unit = pow10(e - sig + 1);
        out.push((x / unit).round() * unit);
    }
    for dp in 0..12 {
        let unit = pow10(-dp);
        if (x / unit).is_integer() {
            break;
        }
        out.push((x / unit).round() * unit);
    }
    out
}

fn oracle_ops(values: &[Decimal], target: Decimal) -> BTreeSet<OperationType> {
    let t = q(target);
    let vs: Vec<Q> = values.iter().map(|v| q(*v)).collect();
    let mut ops = BTreeSet::new();
    if vs.contains(&t) {
        ops.insert(OperationType::Copy);
    }
    for i in 0..vs.len() {
        for j in 0..vs.len() {
            if i == j {
                continue;
            }
            let (a, b) = (vs[i], vs[j]);
            if a + b == t {
                ops.insert(OperationType::Add);
            }
            if a - b == t {
                ops.insert(OperationType::Subtract);
            }
            if a * b == t {
                ops.insert(OperationType::Multiply);
            }
            if b != Q::from_integer(0) && a / b == t {
                ops.insert(OperationType::Divide);
            }
        }
    }
    let scales = [3, 6, 9].map(pow10);
    for &a in &vs {
        let mut sources = vec![a];
        for m in scales {
            if a / m == t {
                ops.insert(OperationType::Paraphrase);
            }
            sources.push(a / m);
        }
        if sources.iter().any(|&s| s != t && roundings(s).contains(&t)) {
            ops.insert(OperationType::Round);
        }
    }
    ops
}

fn article_value() -> impl Strategy<Value = Decimal> {
    prop_oneof![
        (0i64..120).prop_map(Decimal::from),
        (1_000i64..10_000_000).prop_map(Decimal::from),
        (1i64..100_000, 1u32..=2).prop_map(|(m, s)| Decimal::new(m, s)),
    ]
}

fn values_and_target() -> impl Strategy<Value = (Vec<Decimal>, Decimal)> {
    prop::collection::vec(article_value(), 1..6).prop_flat_map(|vs| {
        let n = vs.len();
        let pick = (0..n, 0..n);
        let vs2 = vs.clone();
        let target = prop_oneof![
            article_value(),
            pick.clone().prop_map({
                let vs = vs.clone();
                move |(i, j)| vs[i] + vs[j]
            }),
            pick.clone().prop_map({
                let vs = vs.clone();
                move |(i, j)| vs[i] - vs[j]
            }),
            (0..n).prop_map({
                let vs = vs.clone();
                move |i| vs[i] / Decimal::from(1000)
            }),
            (0..n, 1u32..3).prop_map({
                let vs = vs.clone();
                move |(i, dp)| (vs[i] / Decimal::from(1000)).round_dp(dp)
            }),
        ];
        (Just(vs2), target)
    })
}

fn numeral_surface() -> impl Strategy<Value = String> {
    prop_oneof![
        written_integer().prop_map(|(t, _)| t),
        written_integer().prop_map(|(t, _)| format!("${t}")),
        (1u32..999).prop_map(|n| format!("{n}K")),
        (1u32..99, 1u32..9).prop_map(|(a, b)| format!("{a}.{b} million")),
        (1u32..999).prop_map(|n| format!("${n}bn")),
        prop::sample::select(vec!["seven", "twelve", "forty-two", "ninety"]).prop_map(String::from),
    ]
}

fn plain_phrase(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(PLAIN_WORDS.to_vec()).prop_map(String::from), 0..=max)
}

fn headline() -> impl Strategy<Value = String> {
    (plain_phrase(5), numeral_surface(), plain_phrase(5)).prop_map(|(a, n, b)| {
        let mut words = a;
        words.push(n);
        words.extend(b);
        words.join(" ")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(600))]

    #[test]
    fn parse_inverts_render(r in rationale()) {
        let text = rationale::render(&r).unwrap();
        prop_assert_eq!(rationale::parse(&text).unwrap(), r.clone());
        // and render is a fixed point of parse modulo whitespace
        let again = rationale::render(&rationale::parse(&text).unwrap()).unwrap();
        prop_assert_eq!(whitespace_normalized(&again), whitespace_normalized(&text));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn masking_hides_exactly_the_mantissa(h in headline()) {
        let found = extract_numerals(&h);
        prop_assert_eq!(found.len(), 1, "{}", h);
        let n = &found[0];
        let masked = mask_numeral(&h).unwrap();
        prop_assert_eq!(masked.matches(MASK).count(), 1);
        prop_assert!(extract_numerals(&masked).is_empty(), "{}", masked);
        prop_assert_eq!(masked.replacen(MASK, &h[n.mantissa_span.clone()], 1), h.clone());
    }

    #[test]
    fn spans_index_the_surface(text in "[a-z0-9 ,.$kmbKMB-]{0,60}") {
        let mut last_end = 0;
        for n in extract_numerals(&text) {
            prop_assert_eq!(&text[n.span.clone()], n.surface.as_str());
            prop_assert!(n.span.start <= n.mantissa_span.start && n.mantissa_span.end <= n.span.end);
            prop_assert!(n.span.start >= last_end);
            last_end = n.span.end;
        }
    }

    #[test]
    fn inference_agrees_with_pair_oracle((values, target) in values_and_target()) {
        let got = infer_operations(&values, target).unwrap();
        prop_assert_eq!(got, oracle_ops(&values, target), "values {:?} target {}", values, target);
    }

    #[test]
    fn rouge_matches_brute_force(c in token_seq(12), r in token_seq(12)) {
        for n in 1..=2 {
            let got = rouge_n_tokens(&c, &r, n);
            let (o, cl, rl) = ngram_overlap(&c, &r, n);
            let (p, rc, f) = prf(o, cl, rl);
            prop_assert_eq!((got.precision_ratio(), got.recall_ratio(), got.f1_ratio()), (p, rc, f));
        }
        let got = rouge_l_tokens(&c, &r);
        let (p, rc, f) = prf(lcs_brute(&c, &r), c.len() as u64, r.len() as u64);
        prop_assert_eq!((got.precision_ratio(), got.recall_ratio(), got.f1_ratio()), (p, rc, f));
    }

    #[test]
    fn rouge_f1_is_symmetric(c in token_seq(15), r in token_seq(15)) {
        for n in 1..=3 {
            prop_assert_eq!(rouge_n_tokens(&c, &r, n).f1_ratio(), rouge_n_tokens(&r, &c, n).f1_ratio());
        }
        prop_assert_eq!(rouge_l_tokens(&c, &r).f1_ratio(), rouge_l_tokens(&r, &c).f1_ratio());
    }

    #[test]
    fn identical_text_scores_one(c in token_seq(15).prop_filter("non-empty", |c| !c.is_empty())) {
        prop_assert_eq!(rouge_n_tokens(&c, &c, 1).f1_ratio(), Ratio::from_integer(1));
        prop_assert_eq!(rouge_l_tokens(&c, &c).f1_ratio(), Ratio::from_integer(1));
    }

    #[test]
    fn trailing_plain_words_do_not_change_accuracy(
        rows in prop::collection::vec((headline(), headline(), any::<bool>()), 1..20),
        tail in plain_phrase(4),
    ) {
        let samples: Vec<Sample> = rows
            .iter()
            .enumerate()
            .map(|(i, (reference, _, copy))| Sample {
                id: format!("s{i}"),
                article: "body".into(),
                headline: reference.clone(),
                operation: Some(if *copy { OperationType::Copy } else { OperationType::Add }),
                correct_numeral: Some(extract_numerals(reference)[0].mantissa),
                split: Split::Test,
            })
            .collect();
        let plain: Vec<(String, &Sample)> = rows.iter().zip(&samples).map(|((_, g, _), s)| (g.clone(), s)).collect();
        let padded: Vec<(String, &Sample)> = plain
            .iter()
            .map(|(g, s)| (format!("{g} {}", tail.join(" ")), *s))
            .collect();
        let (a, b) = (numerical_accuracy(&plain), numerical_accuracy(&padded));
        prop_assert_eq!((a.overall, a.copy, a.reasoning), (b.overall, b.copy, b.reasoning));
    }
}

#[test]
fn tokenizer_splits_on_punctuation() {
    assert_eq!(tokenize("Dax Shepard: Wedding Cost $142."), ["dax", "shepard", "wedding", "cost", "142"]);
    assert_eq!(tokenize("Part-Timers"), ["part", "timers"]);
}

#[test]
fn brute_force_oracles_agree_on_a_hand_case() {
    let c = tokens(&["the", "cat", "sat", "on", "the", "mat"]);
    let r = tokens(&["the", "cat", "on", "the", "mat"]);
    assert_eq!(ngram_overlap(&c, &r, 1), (5, 6, 5));
    assert_eq!(ngram_overlap(&c, &r, 2), (3, 5, 4));
    assert_eq!(lcs_brute(&c, &r), 5);
}

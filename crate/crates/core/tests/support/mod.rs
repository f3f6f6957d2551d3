//! Independent oracles and generators shared by the property tests and the
//! acceptance suite. Nothing here calls the code under test.

#![allow(dead_code)]

use num_rational::Ratio;
use proptest::prelude::*;
use ten_core::rationale::{NumberMention, TenRationale};
use ten_core::Decimal;

/// Clipped n-gram overlap by linear scans, no maps.
pub fn ngram_overlap(c: &[String], r: &[String], n: usize) -> (u64, u64, u64) {
    let grams = |t: &[String]| -> Vec<Vec<String>> {
        if t.len() < n {
            Vec::new()
        } else {
            (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
        }
    };
    let (cg, rg) = (grams(c), grams(r));
    let mut overlap = 0u64;
    let mut seen: Vec<&Vec<String>> = Vec::new();
    for g in &cg {
        if seen.contains(&g) {
            continue;
        }
        seen.push(g);
        let in_c = cg.iter().filter(|x| *x == g).count() as u64;
        let in_r = rg.iter().filter(|x| *x == g).count() as u64;
        overlap += in_c.min(in_r);
    }
    (overlap, cg.len() as u64, rg.len() as u64)
}

fn is_subsequence(needle: &[&String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|x| it.any(|y| y == *x))
}

/// LCS length by enumerating every subsequence of the shorter side.
pub fn lcs_brute(a: &[String], b: &[String]) -> u64 {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    assert!(short.len() <= 16, "brute force LCS only for short inputs");
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let pick: Vec<&String> = (0..short.len()).filter(|i| mask & (1 << i) != 0).map(|i| &short[i]).collect();
        if pick.len() as u64 > best && is_subsequence(&pick, long) {
            best = pick.len() as u64;
        }
    }
    best
}

/// (precision, recall, F1) as exact fractions; empty sides score 0.
pub fn prf(overlap: u64, c: u64, r: u64) -> (Ratio<u64>, Ratio<u64>, Ratio<u64>) {
    let frac = |a: u64, b: u64| if b == 0 { Ratio::from_integer(0) } else { Ratio::new(a, b) };
    (frac(overlap, c), frac(overlap, r), frac(2 * overlap, c + r))
}

pub fn tokens(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

/// Lowercase tokens over a small vocabulary so overlaps are common.
pub fn token_seq(max_len: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 0..=max_len)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

/// Words that are never read as numerals.
pub const PLAIN_WORDS: [&str; 16] = [
    "police", "report", "mayor", "city", "rally", "budget", "storm", "court", "team", "vote", "bridge", "market",
    "school", "river", "council", "tower",
];

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(PLAIN_WORDS.to_vec()).prop_map(String::from)
}

fn phrase(min: usize, max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(word(), min..=max).prop_map(|w| w.join(" "))
}

fn sentence() -> impl Strategy<Value = String> {
    phrase(2, 8).prop_map(|p| {
        let mut c = p.chars();
        let first = c.next().unwrap().to_uppercase().collect::<String>();
        format!("{first}{}.", c.as_str())
    })
}

/// Integer with optional thousands separators, e.g. "64,728".
pub fn written_integer() -> impl Strategy<Value = (String, Decimal)> {
    (0u64..10_000_000, any::<bool>()).prop_map(|(n, group)| {
        let plain = n.to_string();
        let text = if group && plain.len() > 3 {
            let mut out = String::new();
            for (i, ch) in plain.chars().enumerate() {
                if i > 0 && (plain.len() - i) % 3 == 0 {
                    out.push(',');
                }
                out.push(ch);
            }
            out
        } else {
            plain
        };
        (text, Decimal::from(n))
    })
}

pub fn final_numeral() -> impl Strategy<Value = Decimal> {
    prop_oneof![
        (0u64..1_000_000_000).prop_map(Decimal::from),
        (0i64..1_000_000, 1u32..=3).prop_map(|(m, s)| Decimal::new(m, s)),
    ]
}

fn mention() -> impl Strategy<Value = NumberMention> {
    (written_integer(), prop::option::of(phrase(1, 5)), any::<bool>()).prop_map(|((raw, _), desc, dollar)| {
        let raw = if dollar { format!("${raw}") } else { raw };
        NumberMention::new(raw, desc.unwrap_or_default())
    })
}

fn reasoning() -> impl Strategy<Value = String> {
    let line = prop_oneof![
        sentence(),
        (written_integer(), written_integer()).prop_map(|((a, _), (b, _))| format!("- {a} + {b} gives the total")),
    ];
    prop::collection::vec(prop::collection::vec(line, 1..4).prop_map(|l| l.join("\n")), 1..4)
        .prop_map(|paras| paras.join("\n\n"))
}

pub fn rationale() -> impl Strategy<Value = TenRationale> {
    (
        sentence(),
        prop::collection::vec(phrase(1, 3).prop_map(|p| p.to_uppercase()), 1..7),
        prop::collection::vec(mention(), 1..10),
        reasoning(),
        final_numeral(),
    )
        .prop_map(|(topic, entities, numbers_mentioned, reasoning, final_numeral)| TenRationale {
            topic,
            entities,
            numbers_mentioned,
            reasoning,
            final_numeral,
        })
}

pub mod scripted {
    //! A student whose draws are scripted per sample so every selection
    //! regime shows up: mixed correctness, all correct, all wrong, a single
    //! repeated text, and mixed with unparseable drafts.

    use ten_core::corpus::{Corpus, Sample, Source, Split};
    use ten_core::distill::{HEADLINE_INSTRUCTION, RATIONALE_INSTRUCTION};
    use ten_core::llm_gateway::{ChatMessage, Responder};
    use ten_core::numeral::{canonical, OperationType};
    use ten_core::rationale::{self, NumberMention, TenRationale};
    use ten_core::Decimal;

    pub const FILLER: [&str; 6] = ["council", "budget", "river", "market", "tower", "school"];

    pub fn correct(i: usize) -> i64 {
        100 + i as i64
    }

    pub fn wrong(i: usize) -> i64 {
        7 + i as i64
    }

    pub fn corpus(n: usize) -> Corpus {
        let samples = (0..n)
            .map(|i| Sample {
                id: format!("s{i:02}"),
                article: format!(
                    "Sample {i}. The council counted {} votes while {} residents stayed home.",
                    correct(i),
                    wrong(i)
                ),
                headline: format!("{} Votes Counted", correct(i)),
                operation: Some(OperationType::Copy),
                correct_numeral: Some(Decimal::from(correct(i))),
                split: Split::Train,
            })
            .collect();
        Corpus::new(samples, Source::Numhg)
    }

    pub fn rationale_text(i: usize, numeral: i64, padding: usize) -> String {
        let mut reasoning = format!("The council counted {numeral} votes.");
        for w in FILLER.iter().cycle().take(padding) {
            reasoning.push(' ');
            reasoning.push_str(w);
        }
        rationale::render(&TenRationale {
            topic: format!("The headline should focus on the vote in sample {i}."),
            entities: vec!["Council".into()],
            numbers_mentioned: vec![
                NumberMention::new(correct(i).to_string(), "votes"),
                NumberMention::new(wrong(i).to_string(), "residents"),
            ],
            reasoning,
            final_numeral: Decimal::from(numeral),
        })
        .unwrap()
    }

    /// Teacher rationale used as the ROUGE reference.
    pub fn reference(i: usize) -> String {
        rationale_text(i, correct(i), 0)
    }

    fn sample_index(article: &str) -> usize {
        article
            .split_whitespace()
            .nth(1)
            .and_then(|w| w.trim_end_matches('.').parse().ok())
            .expect("scripted article")
    }

    /// Draw `k` for sample `i`, by regime `i % 5`.
    pub fn draw(i: usize, k: usize) -> String {
        let pad = k % 6 * 3;
        match i % 5 {
            0 => rationale_text(i, if k.is_multiple_of(3) { wrong(i) } else { correct(i) }, pad),
            1 => rationale_text(i, correct(i), pad),
            2 => rationale_text(i, wrong(i), pad),
            3 => rationale_text(i, correct(i), 0),
            _ => {
                let text = rationale_text(i, if k.is_multiple_of(2) { correct(i) } else { wrong(i) }, k % 12 * 2);
                if k % 4 == 2 {
                    // a correct draft that never states its final numeral
                    text[..text.find("Therefore,").unwrap()].to_string()
                } else {
                    text
                }
            }
        }
    }

    pub struct ScriptedStudent;

    impl Responder for ScriptedStudent {
        fn respond(&self, messages: &[ChatMessage], index: usize) -> String {
            let user = &messages.last().expect("a message").content;
            if let Some(rest) = user.strip_prefix(RATIONALE_INSTRUCTION) {
                let article = rest.trim_start().trim_start_matches("News: ");
                return draw(sample_index(article), index);
            }
            if let Some(rest) = user.strip_prefix(HEADLINE_INSTRUCTION) {
                let (_, r) = rest.split_once("\n\nRationale:\n").expect("headline prompt");
                let n = rationale::final_numeral(r).ok().or_else(|| {
                    let (_, tail) = r.split_once("counted ")?;
                    tail.split_whitespace().next()?.parse().ok()
                });
                return match n {
                    Some(n) => format!("{} Votes Counted", canonical(n)),
                    None => "Votes Counted".into(),
                };
            }
            panic!("unexpected prompt: {user}");
        }
    }
}

pub mod audit {
    //! Re-checks preference pairs without going through the selection code.

    use num_rational::Ratio;
    use ten_core::corpus::Corpus;
    use ten_core::eval::tokenize;
    use ten_core::numeral::extract_numerals;
    use ten_core::prefs::{select_pair, CandidateSet, PairReason, PreferencePair};
    use ten_core::rationale;

    use super::ngram_overlap;

    /// Unigram F1 by brute force.
    pub fn rouge1(candidate: &str, reference: &str) -> Ratio<u64> {
        let (c, r) = (tokenize(candidate), tokenize(reference));
        let (o, cl, rl) = ngram_overlap(&c, &r, 1);
        if cl + rl == 0 {
            Ratio::from_integer(0)
        } else {
            Ratio::new(2 * o, cl + rl)
        }
    }

    /// Every way a pair breaks the selection contract, as readable lines.
    pub fn violations(
        corpus: &Corpus,
        reference: impl Fn(&str) -> String,
        pairs: &[PreferencePair],
        sets: &[CandidateSet],
        margin: f64,
    ) -> Vec<String> {
        let mut out = Vec::new();
        for pair in pairs {
            let id = &pair.sample_id;
            let sample = corpus.get(id).expect("pair for a known sample");
            let set = sets.iter().find(|s| &s.sample_id == id).expect("candidate set");
            let headline = |text: &str| {
                set.candidates
                    .iter()
                    .find(|c| c.rationale_text == text)
                    .map(|c| c.headline_text.clone())
            };
            let (Some(chosen_h), Some(rejected_h)) = (headline(&pair.chosen), headline(&pair.rejected)) else {
                out.push(format!("{id}: pair texts are not candidates"));
                continue;
            };
            let target = sample.correct_numeral.expect("annotated");
            let hits = |h: &str| {
                extract_numerals(h)
                    .iter()
                    .any(|n| n.value() == target || n.mantissa == target)
            };
            if rationale::parse(&pair.chosen).is_err() {
                out.push(format!("{id}: chosen rationale does not parse"));
            }
            if pair.chosen == pair.rejected {
                out.push(format!("{id}: chosen equals rejected"));
            }
            match pair.reason {
                PairReason::NumeralSplit => {
                    if !hits(&chosen_h) {
                        out.push(format!("{id}: chosen headline {chosen_h:?} misses {target}"));
                    }
                    if hits(&rejected_h) {
                        out.push(format!("{id}: rejected headline {rejected_h:?} has {target}"));
                    }
                }
                PairReason::RougeSplit => {
                    let r = reference(id);
                    let gap = rouge1(&pair.chosen, &r) - rouge1(&pair.rejected, &r);
                    let (n, d) = (*gap.numer() as f64, *gap.denom() as f64);
                    if rouge1(&pair.chosen, &r) < rouge1(&pair.rejected, &r) || n / d < margin {
                        out.push(format!("{id}: rouge gap below {margin}"));
                    }
                }
            }
        }
        for set in sets {
            let base = select_pair(&set.candidates, margin).map(|(c, r, why)| (&c.rationale_text, &r.rationale_text, why));
            let mut shuffled = set.candidates.clone();
            for turn in 0..set.candidates.len().max(1) {
                shuffled.rotate_left(1);
                if turn % 2 == 1 {
                    shuffled.reverse();
                }
                let again = select_pair(&shuffled, margin).map(|(c, r, why)| (&c.rationale_text, &r.rationale_text, why));
                if again != base {
                    out.push(format!("{}: selection depends on candidate order", set.sample_id));
                    break;
                }
            }
        }
        out
    }
}

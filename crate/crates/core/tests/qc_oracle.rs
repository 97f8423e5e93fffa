mod common;

use std::collections::HashMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use common::{naive_contains, rng, triple};
use wikidelta::categorize::{CategorizedFact, Category, Reason};
use wikidelta::ingest::{EntityMapping, MappingEntry};
use wikidelta::qc::{
    build_probes, filter_frequency, filter_substring, sample_unchanged, AlignedKind, ArticleTexts, Categorized,
    FrequencyCaps, ProbeInstance, QcConfig,
};
use wikidelta::Fraction;

struct Item(Category, usize);

impl Categorized for Item {
    fn category(&self) -> Category {
        self.0
    }
}

#[test]
fn sampling_a_million_unchanged_at_one_in_a_thousand() {
    let items: Vec<Item> = (0..1_000_000).map(|i| Item(Category::Unchanged, i)).collect();
    let kept = sample_unchanged(items, Fraction::new(1, 1000).unwrap(), 42).unwrap();
    // binomial(10^6, 10^-3): mean 1000, sigma about 31.6
    let n = kept.len() as f64;
    assert!((n - 1000.0).abs() < 3.0 * 31.61, "kept {n}");
    assert!(kept.windows(2).all(|w| w[0].1 < w[1].1), "input order is kept");
}

#[test]
fn sampling_keeps_every_changed_fact_and_is_seeded() {
    let mut r = rng(41);
    let make = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<Item> {
        (0..50_000)
            .map(|i| Item(if r.gen_bool(0.1) { Category::Changed } else { Category::Unchanged }, i))
            .collect()
    };
    let items = make(&mut r);
    let changed = items.iter().filter(|i| i.0 == Category::Changed).count();
    let ids = |v: Vec<Item>| v.into_iter().map(|i| i.1).collect::<Vec<_>>();

    let rate = Fraction::new(1, 10).unwrap();
    let a = ids(sample_unchanged(items, rate, 9).unwrap());
    let b = ids(sample_unchanged(make(&mut rng(41)), rate, 9).unwrap());
    let c = ids(sample_unchanged(make(&mut rng(41)), rate, 10).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);

    let all = ids(sample_unchanged(make(&mut rng(41)), Fraction::new(1, 1).unwrap(), 9).unwrap());
    assert_eq!(all.len(), 50_000);
    let kept_changed = sample_unchanged(make(&mut rng(41)), rate, 9)
        .unwrap()
        .into_iter()
        .filter(|i| i.0 == Category::Changed)
        .count();
    assert_eq!(kept_changed, changed);

    assert!(sample_unchanged(make(&mut rng(1)), Fraction::new(0, 1).unwrap(), 1).is_err());
    assert!(sample_unchanged(make(&mut rng(1)), Fraction::new(3, 2).unwrap(), 1).is_err());
}

const PHRASES: &[&str] = &[
    "Rome", "Paris", "Lake Tahoe", "United States", "the Royal Navy", "Berlin", "Lisbon", "Oslo",
    "Charles Babbage", "Indios de Mayagüez", "New York City", "football", "painter", "jazz",
    "The Quick Brown Fox Jumps Over", "a very long object label of many words", "Kyoto", "Accra",
];

struct World {
    mapping: EntityMapping,
    diffset: Vec<(String, String)>,
    full: Vec<(String, String)>,
    facts: Vec<CategorizedFact>,
}

/// Articles built from random phrases; facts whose objects sometimes occur in them.
fn world(seed: u64, n_facts: usize) -> World {
    let mut r = rng(seed);
    let mut mapping = EntityMapping::new();
    for a in 0..150 {
        mapping
            .insert(MappingEntry {
                article_id: format!("{a}"),
                title: format!("Article {a}"),
                entity_id: format!("Q{a}"),
            })
            .unwrap();
    }
    let text = |r: &mut rand_chacha::ChaCha8Rng| -> String {
        let mut words: Vec<String> = (0..r.gen_range(2..8)).map(|_| PHRASES.choose(r).unwrap().to_string()).collect();
        if r.gen_bool(0.2) {
            words.push(PHRASES.choose(r).unwrap().to_lowercase());
        }
        words.join(" and ") + "."
    };
    // articles 0..140 exist in the recent snapshot, 0..100 in the diffset
    let full: Vec<(String, String)> = (0..140).map(|a| (a.to_string(), text(&mut r))).collect();
    let diffset: Vec<(String, String)> = (0..100).map(|a| (a.to_string(), text(&mut r))).collect();
    let facts = (0..n_facts)
        .map(|_| {
            let s = r.gen_range(0..170);
            let object = if r.gen_bool(0.05) {
                format!("Subject Q{s}")
            } else if r.gen_bool(0.9) {
                PHRASES.choose(&mut r).unwrap().to_string()
            } else {
                format!("missing {}", r.gen_range(0..100))
            };
            let mut t = triple(&format!("Q{s}"), &format!("P{}", r.gen_range(0..6)), "", &object);
            if r.gen_bool(0.05) {
                t.subject_label = format!("{object} family");
            }
            let changed = r.gen_bool(0.4);
            CategorizedFact {
                triple: t,
                category: if changed { Category::Changed } else { Category::Unchanged },
                reason: if changed { Reason::NewObject } else { Reason::Same },
            }
        })
        .collect();
    World {
        mapping,
        diffset,
        full,
        facts,
    }
}

fn texts(rows: &[(String, String)], fold: bool) -> ArticleTexts {
    let mut t = ArticleTexts::new(fold);
    for (id, text) in rows {
        t.insert_normalized(id.clone(), text.clone());
    }
    t
}

/// Alignment and the three rules, written out directly.
fn oracle(w: &World, caps: (u64, u64, u64, u64)) -> Vec<(Category, String, String, String, String)> {
    let lookup = |rows: &[(String, String)], id: &str| rows.iter().find(|(a, _)| a == id).map(|(_, t)| t.clone());
    let mut aligned = Vec::new();
    for f in &w.facts {
        let t = &f.triple;
        let Some(entry) = w.mapping.entries().iter().find(|e| e.entity_id == t.subject_id) else {
            continue;
        };
        let rows = if f.category == Category::Changed { &w.diffset } else { &w.full };
        let Some(text) = lookup(rows, &entry.article_id) else {
            continue;
        };
        if naive_contains(&text, &t.object_label) {
            aligned.push((f.category, t.clone(), entry.article_id.clone()));
        }
    }
    let rule1: Vec<_> = aligned
        .into_iter()
        .filter(|(_, t, _)| !naive_contains(&t.subject_label, &t.object_label) && !naive_contains(&t.object_label, &t.subject_label))
        .collect();
    let rule2: Vec<_> = rule1
        .into_iter()
        .filter(|(_, t, _)| t.object_label.split(' ').filter(|w| !w.is_empty()).count() <= 5)
        .collect();
    let n = rule2.len() as u64;
    let (den, s_num, o_num, r_num) = caps;
    let limit = |num: u64| std::cmp::max(1, n * num / den);
    let (ls, lo, lr) = (limit(s_num), limit(o_num), limit(r_num));
    let mut cs: HashMap<String, u64> = HashMap::new();
    let mut co: HashMap<String, u64> = HashMap::new();
    let mut cr: HashMap<String, u64> = HashMap::new();
    let mut out = Vec::new();
    for (c, t, article) in rule2 {
        let s = cs.entry(t.subject_label.clone()).or_default();
        let o = co.entry(t.object_label.clone()).or_default();
        let r = cr.entry(t.relation_label.clone()).or_default();
        if *s < ls && *o < lo && *r < lr {
            *s += 1;
            *o += 1;
            *r += 1;
            out.push((c, t.subject_label, t.relation_label, t.object_label, article));
        }
    }
    out
}

fn flatten(probes: &[ProbeInstance]) -> Vec<(Category, String, String, String, String)> {
    probes
        .iter()
        .map(|p| {
            let t = &p.triple;
            (p.category, t.subject_label.clone(), t.relation_label.clone(), t.object_label.clone(), p.aligned_article_id.clone())
        })
        .collect()
}

fn config(caps: FrequencyCaps, workers: usize) -> QcConfig {
    QcConfig {
        sample_rate: Fraction::new(1, 1).unwrap(),
        seed: 5,
        caps,
        case_insensitive: false,
        workers,
    }
}

#[test]
fn two_thousand_facts_match_the_oracle_funnel() {
    let w = world(43, 2000);
    let caps = FrequencyCaps {
        subject: Fraction::new(1, 100).unwrap(),
        object: Fraction::new(5, 100).unwrap(),
        relation: Fraction::new(30, 100).unwrap(),
    };
    let (probes, report) =
        build_probes(w.facts.clone(), &w.mapping, &texts(&w.diffset, false), &texts(&w.full, false), &config(caps, 3)).unwrap();
    assert_eq!(flatten(&probes), oracle(&w, (100, 1, 5, 30)));
    report.check_monotone().unwrap();
    assert!(report.aligned.total() > report.rule3.total());
    assert!(report.rule1.total() < report.aligned.total());
    assert!(report.rule2.total() < report.rule1.total());
    assert!(report.rule3.total() < report.rule2.total());
    for p in &probes {
        let want = if p.category == Category::Changed { AlignedKind::DiffsetText } else { AlignedKind::FullArticleText };
        assert_eq!(p.aligned_kind, want);
        let t = &p.triple;
        assert_eq!(p.serialized, format!("{} {} {}", t.subject_label, t.relation_label, t.object_label));
    }
}

#[test]
fn default_caps_match_the_oracle_funnel() {
    let w = world(44, 3000);
    let (probes, _) = build_probes(
        w.facts.clone(),
        &w.mapping,
        &texts(&w.diffset, false),
        &texts(&w.full, false),
        &config(FrequencyCaps::default(), 2),
    )
    .unwrap();
    assert_eq!(flatten(&probes), oracle(&w, (100, 1, 5, 5)));
}

#[test]
fn probes_satisfy_every_postcondition() {
    let w = world(45, 4000);
    let diffset = texts(&w.diffset, false);
    let full = texts(&w.full, false);
    let cfg = QcConfig {
        sample_rate: Fraction::new(1, 2).unwrap(),
        ..config(FrequencyCaps::default(), 2)
    };
    let (probes, report) = build_probes(w.facts.clone(), &w.mapping, &diffset, &full, &cfg).unwrap();
    assert!(!probes.is_empty());
    let n = report.rule2.total();
    let limits = FrequencyCaps::default().limits(n);
    let mut counts: [HashMap<&str, u64>; 3] = Default::default();
    for p in &probes {
        let t = &p.triple;
        let source = if p.category == Category::Changed { &diffset } else { &full };
        assert_eq!(w.mapping.article_for(&t.subject_id), Some(p.aligned_article_id.as_str()));
        assert!(naive_contains(source.get(&p.aligned_article_id).unwrap(), &t.object_label));
        assert!(!naive_contains(&t.subject_label, &t.object_label));
        assert!(!naive_contains(&t.object_label, &t.subject_label));
        assert!(t.object_label.split_whitespace().count() <= 5);
        for (map, key) in counts.iter_mut().zip([&t.subject_label, &t.object_label, &t.relation_label]) {
            *map.entry(key).or_default() += 1;
        }
    }
    for (map, limit) in counts.iter().zip([limits.subject, limits.object, limits.relation]) {
        assert!(map.values().all(|&c| c <= limit));
    }
}

#[test]
fn case_insensitive_matching_finds_more() {
    let w = world(46, 2000);
    let run = |fold| {
        let cfg = QcConfig {
            case_insensitive: fold,
            ..config(FrequencyCaps::default(), 1)
        };
        build_probes(w.facts.clone(), &w.mapping, &texts(&w.diffset, fold), &texts(&w.full, fold), &cfg)
            .unwrap()
            .1
    };
    assert!(run(true).aligned.total() > run(false).aligned.total());
}

#[test]
fn worker_count_does_not_change_probes() {
    let w = world(47, 5000);
    let run = |workers| {
        let cfg = QcConfig {
            sample_rate: Fraction::new(1, 3).unwrap(),
            ..config(FrequencyCaps::default(), workers)
        };
        flatten(&build_probes(w.facts.clone(), &w.mapping, &texts(&w.diffset, false), &texts(&w.full, false), &cfg).unwrap().0)
    };
    assert_eq!(run(1), run(4));
}

fn instance(s: u8, r: u8, o: u8) -> ProbeInstance {
    let t = triple(&format!("Q{s}"), &format!("P{r}"), "", &format!("o{o}"));
    ProbeInstance {
        serialized: format!("{} {} {}", t.subject_label, t.relation_label, t.object_label),
        triple: t,
        category: Category::Changed,
        aligned_article_id: s.to_string(),
        aligned_kind: AlignedKind::DiffsetText,
    }
}

proptest! {
    #[test]
    fn frequency_filter_matches_integer_greedy(
        raw in prop::collection::vec((0u8..6, 0u8..4, 0u8..8), 0..300),
        s in 1u64..40, o in 1u64..40, r in 1u64..40,
    ) {
        let input: Vec<ProbeInstance> = raw.iter().map(|&(a, b, c)| instance(a, b, c)).collect();
        let caps = FrequencyCaps {
            subject: Fraction::new(s, 100).unwrap(),
            object: Fraction::new(o, 100).unwrap(),
            relation: Fraction::new(r, 100).unwrap(),
        };
        let n = input.len() as u64;
        let lim = |x: u64| (n * x / 100).max(1);
        let mut counts: [HashMap<String, u64>; 3] = Default::default();
        let mut want = Vec::new();
        for p in &input {
            let keys = [&p.triple.subject_label, &p.triple.object_label, &p.triple.relation_label];
            let limits = [lim(s), lim(o), lim(r)];
            if (0..3).all(|k| counts[k].get(keys[k]).copied().unwrap_or(0) < limits[k]) {
                for k in 0..3 {
                    *counts[k].entry(keys[k].clone()).or_default() += 1;
                }
                want.push(p.clone());
            }
        }
        let got = filter_frequency(input.clone(), &caps);
        prop_assert_eq!(&got, &want);
        // kept items are an in-order subsequence of the input
        let mut it = input.iter();
        prop_assert!(got.iter().all(|g| it.any(|x| x == g)));
    }

    #[test]
    fn substring_filter_matches_containment(subject in "[ab ]{0,6}", object in "[ab ]{1,6}") {
        let mut p = instance(0, 0, 0);
        p.triple.subject_label = subject.clone();
        p.triple.object_label = object.clone();
        let norm = |x: &str| x.split_whitespace().collect::<Vec<_>>().join(" ");
        let (s, o) = (norm(&subject), norm(&object));
        let overlap = naive_contains(&s, &o) || naive_contains(&o, &s);
        prop_assert_eq!(filter_substring(vec![p], false).is_empty(), overlap);
    }
}

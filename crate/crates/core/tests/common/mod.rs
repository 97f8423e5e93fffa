//! Generators and reference implementations shared by the integration tests.
//!
//! Everything here is written independently of the library internals: the
//! diff oracle works on the generator's own sentence lists, the categorizer
//! oracle scans the previous snapshot linearly, and so on.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wikidelta::diff::{build_diffset, DiffOptions, DiffsetEntry};
use wikidelta::ingest::{ArticleSnapshot, FactTriple, SnapshotPair};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/monthly")
}

// Lowercase words of three letters or more, so no sentence ever ends in
// something the abbreviation guard would treat as an initial.
const WORDS: &[&str] = &[
    "river", "castle", "season", "album", "station", "county", "league", "novel", "bridge",
    "council", "museum", "harbor", "valley", "festival", "railway", "temple", "parish", "island",
    "tower", "garden", "army", "school", "market", "chapel", "forest", "mountain", "village",
    "empire", "theatre", "canal", "record", "single", "player", "coach", "mayor", "senate",
    "opera", "ballet", "painter", "poet", "saint", "king", "queen", "duke", "abbey", "fort",
];
const TERMINATORS: &[char] = &['.', '.', '.', '!', '?'];

/// A sentence the rule segmenter splits exactly at its end.
pub fn sentence<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(3..9);
    let mut words: Vec<String> = (0..n).map(|_| WORDS.choose(rng).unwrap().to_string()).collect();
    let first = &mut words[0];
    let mut chars = first.chars();
    let head = chars.next().unwrap().to_ascii_uppercase();
    *first = std::iter::once(head).chain(chars).collect();
    if rng.gen_bool(0.3) {
        words.push(rng.gen_range(1000..3000).to_string());
    }
    let mut s = words.join(" ");
    s.push(*TERMINATORS.choose(rng).unwrap());
    s
}

/// An article as the generator knows it: paragraphs of sentences.
#[derive(Debug, Clone, PartialEq)]
pub struct ArticleModel {
    pub paragraphs: Vec<Vec<String>>,
}

impl ArticleModel {
    /// Normalized text: sentences joined by a space, paragraphs by a blank line.
    pub fn text(&self) -> String {
        self.paragraphs
            .iter()
            .map(|p| p.join(" "))
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// The same text with line wraps, doubled spaces, CRLF and extra blank lines.
    pub fn raw_text<R: Rng>(&self, rng: &mut R) -> String {
        let mut out = String::new();
        if rng.gen_bool(0.1) {
            out.push_str("\n \n");
        }
        for (i, p) in self.paragraphs.iter().enumerate() {
            if i > 0 {
                out.push_str(["\n\n", "\n\n\n", "\r\n\r\n", "\n  \n\t\n"].choose(rng).unwrap());
            }
            for (j, s) in p.iter().enumerate() {
                if j > 0 {
                    out.push_str([" ", "  ", "\n", " \t", "\r\n"].choose(rng).unwrap());
                }
                out.push_str(s);
            }
            if rng.gen_bool(0.2) {
                out.push_str("  ");
            }
        }
        out
    }

    pub fn sentences(&self) -> impl Iterator<Item = &String> {
        self.paragraphs.iter().flatten()
    }
}

/// Sentences an article draws from; a small pool makes paragraphs share sentences.
pub fn sentence_pool<R: Rng>(rng: &mut R, size: usize) -> Vec<String> {
    (0..size).map(|_| sentence(rng)).collect()
}

pub fn article_model<R: Rng>(rng: &mut R, pool: &[String]) -> ArticleModel {
    let paragraphs = (0..rng.gen_range(1..6))
        .map(|_| (0..rng.gen_range(1..6)).map(|_| pool.choose(rng).unwrap().clone()).collect())
        .collect();
    ArticleModel { paragraphs }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    ReplaceSentence,
    InsertSentence,
    DeleteSentence,
    AddParagraph,
}

/// Applies `count` random mutations. New sentences come from `pool` or are fresh.
pub fn mutate<R: Rng>(model: &ArticleModel, rng: &mut R, pool: &[String], count: usize) -> ArticleModel {
    let mut m = model.clone();
    let new_sentence = |rng: &mut R| {
        if rng.gen_bool(0.3) {
            pool.choose(rng).unwrap().clone()
        } else {
            sentence(rng)
        }
    };
    for _ in 0..count {
        let op = *[
            Mutation::ReplaceSentence,
            Mutation::InsertSentence,
            Mutation::DeleteSentence,
            Mutation::AddParagraph,
        ]
        .choose(rng)
        .unwrap();
        let p = rng.gen_range(0..m.paragraphs.len());
        match op {
            Mutation::ReplaceSentence => {
                let s = rng.gen_range(0..m.paragraphs[p].len());
                m.paragraphs[p][s] = new_sentence(rng);
            }
            Mutation::InsertSentence => {
                let s = rng.gen_range(0..=m.paragraphs[p].len());
                let v = new_sentence(rng);
                m.paragraphs[p].insert(s, v);
            }
            Mutation::DeleteSentence => {
                if m.sentences().count() > 1 {
                    let s = rng.gen_range(0..m.paragraphs[p].len());
                    m.paragraphs[p].remove(s);
                    if m.paragraphs[p].is_empty() {
                        m.paragraphs.remove(p);
                    }
                }
            }
            Mutation::AddParagraph => {
                let at = rng.gen_range(0..=m.paragraphs.len());
                let para = (0..rng.gen_range(1..4)).map(|_| new_sentence(rng)).collect();
                m.paragraphs.insert(at, para);
            }
        }
    }
    m
}

/// Reference diff: per recent paragraph, the sentence-set difference against
/// the previous paragraph with the largest sentence-set intersection (lowest
/// index on ties); a paragraph with no intersection anywhere is taken whole.
pub fn oracle_diff(prev: &ArticleModel, recent: &ArticleModel) -> String {
    let prev_sets: Vec<HashSet<&str>> = prev
        .paragraphs
        .iter()
        .map(|p| p.iter().map(String::as_str).collect())
        .collect();
    let mut parts = Vec::new();
    for paragraph in &recent.paragraphs {
        let mine: HashSet<&str> = paragraph.iter().map(String::as_str).collect();
        let mut best: Option<(usize, usize)> = None;
        for (j, theirs) in prev_sets.iter().enumerate() {
            let shared = mine.intersection(theirs).count();
            if shared > 0 && best.is_none_or(|(_, b)| shared > b) {
                best = Some((j, shared));
            }
        }
        let emitted: Vec<&str> = match best {
            None => paragraph.iter().map(String::as_str).collect(),
            Some((j, _)) => paragraph
                .iter()
                .map(String::as_str)
                .filter(|s| !prev_sets[j].contains(s))
                .collect(),
        };
        if !emitted.is_empty() {
            parts.push(emitted.join(" "));
        }
    }
    parts.join("\n\n")
}

pub fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn xml_page(id: &str, title: &str, text: &str) -> String {
    format!(
        "  <page>\n    <title>{}</title>\n    <ns>0</ns>\n    <id>{id}</id>\n    <revision>\n      <id>9{id}</id>\n      <text xml:space=\"preserve\">{}</text>\n    </revision>\n  </page>\n",
        xml_escape(title),
        xml_escape(text)
    )
}

pub const XML_HEAD: &str = "<mediawiki xml:lang=\"en\">\n  <siteinfo>\n    <sitename>Test</sitename>\n  </siteinfo>\n";
pub const XML_TAIL: &str = "</mediawiki>\n";

pub fn xml_dump<'a>(pages: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>) -> String {
    let mut out = String::from(XML_HEAD);
    for (id, title, text) in pages {
        out.push_str(&xml_page(id, title, text));
    }
    out.push_str(XML_TAIL);
    out
}

/// A generated snapshot pair with its expected diff per article.
pub struct PairCorpus {
    pub prev: Vec<(String, String, String)>,
    pub recent: Vec<(String, String, String)>,
    /// article id -> (is new, expected text); only non-empty diffs are listed.
    pub expected: BTreeMap<String, (bool, String)>,
}

/// `n` shared articles of which `mutated` change, plus `added` new ones and
/// `deleted` that vanish. Raw texts carry whitespace noise.
pub fn pair_corpus(seed: u64, n: usize, mutated: usize, added: usize, deleted: usize) -> PairCorpus {
    pair_corpus_with(seed, n, mutated, added, deleted, false)
}

/// Like [`pair_corpus`]; with `mark` set, every mutated article also gains a
/// sentence no other article has, so its diff is never empty.
pub fn pair_corpus_with(
    seed: u64,
    n: usize,
    mutated: usize,
    added: usize,
    deleted: usize,
    mark: bool,
) -> PairCorpus {
    let mut r = rng(seed);
    let mut prev = Vec::new();
    let mut recent = Vec::new();
    let mut expected = BTreeMap::new();
    for i in 0..n + deleted {
        let id = format!("{}", 1000 + i);
        let pool = sentence_pool(&mut r, 20);
        let before = article_model(&mut r, &pool);
        prev.push((id.clone(), format!("Article {i}"), before.raw_text(&mut r)));
        if i >= n {
            continue;
        }
        let after = if i < mutated {
            let count = r.gen_range(1..4);
            let mut after = mutate(&before, &mut r, &pool, count);
            if mark {
                let p = r.gen_range(0..after.paragraphs.len());
                after.paragraphs[p].push(format!("Marker sentence for article {i}."));
            }
            after
        } else {
            before.clone()
        };
        recent.push((id.clone(), format!("Article {i}"), after.raw_text(&mut r)));
        let diff = oracle_diff(&before, &after);
        if !diff.is_empty() {
            expected.insert(id, (false, diff));
        }
    }
    for i in 0..added {
        let id = format!("n{i}");
        let pool = sentence_pool(&mut r, 10);
        let a = article_model(&mut r, &pool);
        recent.push((id.clone(), format!("New {i}"), a.raw_text(&mut r)));
        expected.insert(id, (true, a.text()));
    }
    prev.shuffle(&mut r);
    recent.shuffle(&mut r);
    PairCorpus {
        prev,
        recent,
        expected,
    }
}

pub fn triple(s: &str, r: &str, o_id: &str, o: &str) -> FactTriple {
    FactTriple {
        subject_id: s.into(),
        subject_label: format!("Subject {s}"),
        relation_id: r.into(),
        relation_label: format!("relation {r}"),
        object_id: o_id.into(),
        object_label: o.into(),
        snapshot_tag: String::new(),
    }
}

/// Random fact snapshots: `n` previous facts, and a recent snapshot that keeps
/// most of them, relabels or swaps objects, adds relations and subjects, and
/// repeats some rows verbatim.
pub fn fact_snapshots(seed: u64, n: usize) -> (Vec<FactTriple>, Vec<FactTriple>) {
    let mut r = rng(seed);
    let subjects = (n / 8).max(2);
    let object = |r: &mut ChaCha8Rng| -> (String, String) {
        let k = r.gen_range(0..500);
        if r.gen_bool(0.3) {
            (String::new(), format!("literal {k}"))
        } else {
            (format!("Q{}", 50_000 + k), format!("Object {k}"))
        }
    };
    let prev: Vec<FactTriple> = (0..n)
        .map(|_| {
            let s = format!("Q{}", r.gen_range(0..subjects));
            let rel = format!("P{}", r.gen_range(0..12));
            let (oid, ol) = object(&mut r);
            triple(&s, &rel, &oid, &ol)
        })
        .collect();
    let mut recent = Vec::with_capacity(n);
    for fact in &prev {
        match r.gen_range(0..100) {
            0..=59 => recent.push(fact.clone()),
            60..=64 => {
                let mut f = fact.clone();
                f.object_label.push_str(" (renamed)");
                recent.push(f);
            }
            65..=74 => {
                let mut f = fact.clone();
                let (oid, ol) = object(&mut r);
                f.object_id = oid;
                f.object_label = ol;
                recent.push(f);
            }
            75..=82 => {
                let mut f = fact.clone();
                f.relation_id = format!("P{}", r.gen_range(0..20));
                recent.push(f);
            }
            83..=89 => {
                let s = format!("Q{}", subjects + r.gen_range(0..subjects));
                let (oid, ol) = object(&mut r);
                recent.push(triple(&s, &fact.relation_id, &oid, &ol));
            }
            90..=94 => {
                recent.push(fact.clone());
                recent.push(fact.clone());
            }
            _ => {}
        }
    }
    recent.shuffle(&mut r);
    (prev, recent)
}

/// Naive substring test by window comparison.
pub fn naive_contains(haystack: &str, needle: &str) -> bool {
    let (h, n) = (haystack.as_bytes(), needle.as_bytes());
    if n.is_empty() {
        return true;
    }
    h.len() >= n.len() && (0..=h.len() - n.len()).any(|i| &h[i..i + n.len()] == n)
}

/// Writes `contents` to `dir/name` and returns the path.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

/// Peak resident set size of this process so far, in KiB.
pub fn vm_hwm_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse().ok())
}

pub fn snapshots(rows: &[(String, String, String)], tag: &str) -> Vec<ArticleSnapshot> {
    rows.iter()
        .map(|(id, title, text)| ArticleSnapshot {
            article_id: id.clone(),
            title: title.clone(),
            text: text.clone(),
            snapshot_tag: tag.into(),
        })
        .collect()
}

pub fn test_pair() -> SnapshotPair {
    SnapshotPair::new("2021-09", "2021-10").unwrap()
}

/// Runs the library diff over a generated corpus.
pub fn library_diff(corpus: &PairCorpus, workers: usize) -> Vec<DiffsetEntry> {
    let options = DiffOptions {
        workers,
        ..DiffOptions::default()
    };
    build_diffset(
        snapshots(&corpus.prev, "2021-09").into_iter().map(Ok),
        snapshots(&corpus.recent, "2021-10").into_iter().map(Ok),
        &test_pair(),
        &options,
    )
    .unwrap()
}

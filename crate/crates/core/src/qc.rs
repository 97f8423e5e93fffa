//! Probe quality control: Unchanged subsampling, alignment of facts with
//! article text, and the three heuristic filters.
//!
//! Stages run in a fixed order, each keeping a sub-multiset of its input in
//! input order:
//!
//! 1. `sample_unchanged` keeps each Unchanged fact with a seeded probability.
//! 2. `align` keeps a Changed fact when its subject maps to a diffset article
//!    whose text contains the object label, and an Unchanged fact when its
//!    subject maps to a recent article whose full text contains the label.
//! 3. `filter_substring` drops facts whose subject and object labels contain
//!    one another.
//! 4. `filter_object_length` drops objects longer than five words.
//! 5. `filter_frequency` caps how often one label may occur.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::categorize::{CategorizedFact, Category};
use crate::diff::{thread_pool, DiffOptions, DiffsetEntry};
use crate::error::{Error, Position, Result};
use crate::fraction::Fraction;
use crate::ingest::escape::{self, FieldLines};
use crate::ingest::{ArticleSnapshot, EntityMapping, FactTriple, Record};
use crate::textseg::normalize;

pub const MAX_OBJECT_WORDS: usize = 5;

/// Anything that carries an Unchanged/Changed category.
pub trait Categorized {
    fn category(&self) -> Category;
}

impl Categorized for CategorizedFact {
    fn category(&self) -> Category {
        self.category
    }
}

impl Categorized for ProbeInstance {
    fn category(&self) -> Category {
        self.category
    }
}

impl Categorized for ProbeRecord {
    fn category(&self) -> Category {
        self.category
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignedKind {
    DiffsetText,
    FullArticleText,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeInstance {
    pub triple: FactTriple,
    pub category: Category,
    pub aligned_article_id: String,
    pub aligned_kind: AlignedKind,
    pub serialized: String,
}

/// Probe sentence: subject, relation and object labels joined by single spaces.
pub fn serialize_probe(subject: &str, relation: &str, object: &str) -> String {
    format!("{subject} {relation} {object}")
}

impl Record for ProbeInstance {
    fn write_record(&self, sink: &mut dyn Write) -> io::Result<()> {
        escape::write_line(
            sink,
            &[
                self.category.as_str(),
                &self.triple.subject_label,
                &self.triple.relation_label,
                &self.triple.object_label,
                &self.aligned_article_id,
                &self.serialized,
            ],
        )
    }
}

/// One row of a probe file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeRecord {
    pub category: Category,
    pub subject_label: String,
    pub relation_label: String,
    pub object_label: String,
    pub aligned_article_id: String,
    pub serialized: String,
}

impl From<&ProbeInstance> for ProbeRecord {
    fn from(p: &ProbeInstance) -> Self {
        ProbeRecord {
            category: p.category,
            subject_label: p.triple.subject_label.clone(),
            relation_label: p.triple.relation_label.clone(),
            object_label: p.triple.object_label.clone(),
            aligned_article_id: p.aligned_article_id.clone(),
            serialized: p.serialized.clone(),
        }
    }
}

impl Record for ProbeRecord {
    fn write_record(&self, sink: &mut dyn Write) -> io::Result<()> {
        escape::write_line(
            sink,
            &[
                self.category.as_str(),
                &self.subject_label,
                &self.relation_label,
                &self.object_label,
                &self.aligned_article_id,
                &self.serialized,
            ],
        )
    }
}

pub fn read_probes<R: BufRead>(source: R) -> impl Iterator<Item = Result<ProbeRecord>> {
    FieldLines::new(source, 6).map(|record| {
        let (line, fields) = record?;
        let [category, subject_label, relation_label, object_label, aligned_article_id, serialized] =
            <[String; 6]>::try_from(fields).unwrap();
        let category = category
            .parse()
            .map_err(|m| Error::malformed(Position::Line(line), m))?;
        Ok(ProbeRecord {
            category,
            subject_label,
            relation_label,
            object_label,
            aligned_article_id,
            serialized,
        })
    })
}

/// Keeps each Unchanged item independently with probability `rate`; Changed
/// items always pass. The same seed selects the same subset.
pub fn sample_unchanged<T: Categorized>(items: Vec<T>, rate: Fraction, seed: u64) -> Result<Vec<T>> {
    if rate.is_zero() || rate.exceeds_one() {
        return Err(Error::InvalidRate(rate.to_f64()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (num, den) = (rate.numerator(), rate.denominator());
    Ok(items
        .into_iter()
        .filter(|item| item.category() == Category::Changed || rng.gen_range(0..den) < num)
        .collect())
}

/// Normalized (and optionally case-folded) article texts keyed by article id.
#[derive(Debug, Default)]
pub struct ArticleTexts {
    texts: HashMap<String, String>,
    fold_case: bool,
}

impl ArticleTexts {
    pub fn new(fold_case: bool) -> Self {
        ArticleTexts {
            texts: HashMap::new(),
            fold_case,
        }
    }

    /// Diffset entries are already normalized.
    pub fn from_diffset<'a, I>(entries: I, fold_case: bool) -> Self
    where
        I: IntoIterator<Item = &'a DiffsetEntry>,
    {
        let mut texts = ArticleTexts::new(fold_case);
        for e in entries {
            texts.insert_normalized(e.article_id.clone(), e.text.clone());
        }
        texts
    }

    /// Indexes the articles whose id is in `wanted` (all when `None`), prepared
    /// the same way the diff engine prepares text.
    pub fn from_articles<I>(
        articles: I,
        wanted: Option<&HashSet<String>>,
        options: &DiffOptions,
        fold_case: bool,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = Result<ArticleSnapshot>>,
    {
        let mut texts = ArticleTexts::new(fold_case);
        for article in articles {
            let article = article?;
            if wanted.is_some_and(|w| !w.contains(&article.article_id)) {
                continue;
            }
            let text = options.prepare(&article.text);
            texts.insert_normalized(article.article_id, text);
        }
        Ok(texts)
    }

    pub fn insert_normalized(&mut self, article_id: String, text: String) {
        let text = if self.fold_case { text.to_lowercase() } else { text };
        self.texts.insert(article_id, text);
    }

    pub fn get(&self, article_id: &str) -> Option<&str> {
        self.texts.get(article_id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }
}

/// Label form used for every containment test.
pub fn match_form(label: &str, case_insensitive: bool) -> String {
    let n = normalize(label);
    if case_insensitive {
        n.to_lowercase()
    } else {
        n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    /// Subject id has no mapping entry.
    Unmapped,
    /// Mapped article is absent from the diffset (Changed) or snapshot (Unchanged).
    MissingArticle,
    /// Object label does not occur in the article text.
    ObjectNotFound,
}

/// Article ids that Unchanged facts will need from the full recent snapshot.
pub fn unchanged_articles(facts: &[CategorizedFact], mapping: &EntityMapping) -> HashSet<String> {
    facts
        .iter()
        .filter(|f| f.category == Category::Unchanged)
        .filter_map(|f| mapping.article_for(&f.triple.subject_id))
        .map(str::to_owned)
        .collect()
}

/// Aligns one fact, or says why it cannot be aligned.
pub fn align_one(
    fact: &CategorizedFact,
    mapping: &EntityMapping,
    diffset: &ArticleTexts,
    full_recent: &ArticleTexts,
) -> Result<(String, AlignedKind), DropReason> {
    let article_id = mapping
        .article_for(&fact.triple.subject_id)
        .ok_or(DropReason::Unmapped)?;
    let (texts, kind) = match fact.category {
        Category::Changed => (diffset, AlignedKind::DiffsetText),
        Category::Unchanged => (full_recent, AlignedKind::FullArticleText),
    };
    let text = texts.get(article_id).ok_or(DropReason::MissingArticle)?;
    let needle = match_form(&fact.triple.object_label, texts.fold_case);
    if needle.is_empty() || !text.contains(&needle) {
        return Err(DropReason::ObjectNotFound);
    }
    Ok((article_id.to_owned(), kind))
}

/// Alignment drops per reason and category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AlignmentDrops {
    pub unmapped: StageCounts,
    pub missing_article: StageCounts,
    pub object_not_found: StageCounts,
}

impl AlignmentDrops {
    fn tally(&mut self, reason: DropReason, category: Category) {
        match reason {
            DropReason::Unmapped => self.unmapped.add(category),
            DropReason::MissingArticle => self.missing_article.add(category),
            DropReason::ObjectNotFound => self.object_not_found.add(category),
        }
    }
}

pub fn align(
    facts: Vec<CategorizedFact>,
    mapping: &EntityMapping,
    diffset: &ArticleTexts,
    full_recent: &ArticleTexts,
    workers: usize,
) -> Result<(Vec<ProbeInstance>, AlignmentDrops)> {
    let pool = thread_pool(workers)?;
    let outcomes: Vec<_> = pool.install(|| {
        facts
            .into_par_iter()
            .map(|fact| {
                let outcome = align_one(&fact, mapping, diffset, full_recent);
                (fact, outcome)
            })
            .collect()
    });

    let mut drops = AlignmentDrops::default();
    let mut kept = Vec::new();
    for (fact, outcome) in outcomes {
        match outcome {
            Ok((aligned_article_id, aligned_kind)) => {
                let t = &fact.triple;
                let serialized = serialize_probe(&t.subject_label, &t.relation_label, &t.object_label);
                kept.push(ProbeInstance {
                    triple: fact.triple,
                    category: fact.category,
                    aligned_article_id,
                    aligned_kind,
                    serialized,
                });
            }
            Err(reason) => drops.tally(reason, fact.category),
        }
    }
    Ok((kept, drops))
}

/// True when either label contains the other.
pub fn labels_overlap(subject: &str, object: &str, case_insensitive: bool) -> bool {
    let s = match_form(subject, case_insensitive);
    let o = match_form(object, case_insensitive);
    s.contains(&o) || o.contains(&s)
}

pub fn filter_substring(instances: Vec<ProbeInstance>, case_insensitive: bool) -> Vec<ProbeInstance> {
    instances
        .into_iter()
        .filter(|p| !labels_overlap(&p.triple.subject_label, &p.triple.object_label, case_insensitive))
        .collect()
}

pub fn word_count(label: &str) -> usize {
    label.split_whitespace().count()
}

pub fn filter_object_length(instances: Vec<ProbeInstance>) -> Vec<ProbeInstance> {
    instances
        .into_iter()
        .filter(|p| word_count(&p.triple.object_label) <= MAX_OBJECT_WORDS)
        .collect()
}

/// Per-label frequency caps, as fractions of the filter's input size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrequencyCaps {
    pub subject: Fraction,
    pub object: Fraction,
    pub relation: Fraction,
}

impl Default for FrequencyCaps {
    fn default() -> Self {
        FrequencyCaps {
            subject: Fraction::new(1, 100).unwrap(),
            object: Fraction::new(5, 100).unwrap(),
            relation: Fraction::new(5, 100).unwrap(),
        }
    }
}

/// Absolute caps for an input of `n` instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapLimits {
    pub subject: u64,
    pub object: u64,
    pub relation: u64,
}

impl FrequencyCaps {
    pub fn limits(&self, n: u64) -> CapLimits {
        let cap = |f: Fraction| f.floor_mul(n).max(1);
        CapLimits {
            subject: cap(self.subject),
            object: cap(self.object),
            relation: cap(self.relation),
        }
    }
}

/// Single greedy pass: an instance is kept only while its subject, object and
/// relation label counts are all below their caps.
pub fn filter_frequency(instances: Vec<ProbeInstance>, caps: &FrequencyCaps) -> Vec<ProbeInstance> {
    let limits = caps.limits(instances.len() as u64);
    let mut subjects: HashMap<String, u64> = HashMap::new();
    let mut objects: HashMap<String, u64> = HashMap::new();
    let mut relations: HashMap<String, u64> = HashMap::new();
    let mut kept = Vec::new();
    for p in instances {
        let t = &p.triple;
        let s = subjects.get(&t.subject_label).copied().unwrap_or(0);
        let o = objects.get(&t.object_label).copied().unwrap_or(0);
        let r = relations.get(&t.relation_label).copied().unwrap_or(0);
        if s < limits.subject && o < limits.object && r < limits.relation {
            *subjects.entry(t.subject_label.clone()).or_default() += 1;
            *objects.entry(t.object_label.clone()).or_default() += 1;
            *relations.entry(t.relation_label.clone()).or_default() += 1;
            kept.push(p);
        }
    }
    kept
}

/// Unchanged / Changed tallies at one point of the funnel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageCounts {
    pub unchanged: u64,
    pub changed: u64,
}

impl StageCounts {
    pub fn of<'a, T: Categorized + 'a>(items: impl IntoIterator<Item = &'a T>) -> Self {
        let mut counts = StageCounts::default();
        for item in items {
            counts.add(item.category());
        }
        counts
    }

    pub fn add(&mut self, category: Category) {
        match category {
            Category::Unchanged => self.unchanged += 1,
            Category::Changed => self.changed += 1,
        }
    }

    pub fn get(&self, category: Category) -> u64 {
        match category {
            Category::Unchanged => self.unchanged,
            Category::Changed => self.changed,
        }
    }

    pub fn total(&self) -> u64 {
        self.unchanged + self.changed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Categorized,
    Sampled,
    Aligned,
    Rule1,
    Rule2,
    Rule3,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Categorized,
        Stage::Sampled,
        Stage::Aligned,
        Stage::Rule1,
        Stage::Rule2,
        Stage::Rule3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Categorized => "categorized",
            Stage::Sampled => "sampled",
            Stage::Aligned => "aligned",
            Stage::Rule1 => "rule1_substring",
            Stage::Rule2 => "rule2_object_length",
            Stage::Rule3 => "rule3_frequency",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|stage| stage.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

/// Stage-by-stage counts through the probe funnel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterReport {
    pub categorized: StageCounts,
    pub sampled: StageCounts,
    pub aligned: StageCounts,
    pub rule1: StageCounts,
    pub rule2: StageCounts,
    pub rule3: StageCounts,
    pub alignment_drops: AlignmentDrops,
}

impl FilterReport {
    pub fn stage(&self, stage: Stage) -> StageCounts {
        match stage {
            Stage::Categorized => self.categorized,
            Stage::Sampled => self.sampled,
            Stage::Aligned => self.aligned,
            Stage::Rule1 => self.rule1,
            Stage::Rule2 => self.rule2,
            Stage::Rule3 => self.rule3,
        }
    }

    fn stage_mut(&mut self, stage: Stage) -> &mut StageCounts {
        match stage {
            Stage::Categorized => &mut self.categorized,
            Stage::Sampled => &mut self.sampled,
            Stage::Aligned => &mut self.aligned,
            Stage::Rule1 => &mut self.rule1,
            Stage::Rule2 => &mut self.rule2,
            Stage::Rule3 => &mut self.rule3,
        }
    }

    /// Fails when any category count grows from one stage to the next.
    pub fn check_monotone(&self) -> Result<()> {
        for pair in Stage::ALL.windows(2) {
            let (a, b) = (self.stage(pair[0]), self.stage(pair[1]));
            for category in [Category::Unchanged, Category::Changed] {
                if b.get(category) > a.get(category) {
                    return Err(Error::Render {
                        from: pair[0].as_str(),
                        to: pair[1].as_str(),
                        category: category.as_str(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Machine-readable form: `stage<TAB>category<TAB>count` rows, followed by
    /// `drop:<reason>` rows for alignment.
    pub fn write_tsv<W: Write>(&self, sink: &mut W) -> io::Result<()> {
        let drops = [
            ("drop:unmapped", self.alignment_drops.unmapped),
            ("drop:missing_article", self.alignment_drops.missing_article),
            ("drop:object_not_found", self.alignment_drops.object_not_found),
        ];
        let rows = Stage::ALL
            .iter()
            .map(|s| (s.as_str(), self.stage(*s)))
            .chain(drops);
        for (name, counts) in rows {
            for category in [Category::Unchanged, Category::Changed] {
                writeln!(sink, "{name}\t{category}\t{}", counts.get(category))?;
            }
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(source: R) -> Result<Self> {
        let mut report = FilterReport::default();
        for record in FieldLines::new(source, 3) {
            let (line, fields) = record?;
            let bad = |m: String| Error::malformed(Position::Line(line), m);
            let category: Category = fields[1].parse().map_err(bad)?;
            let count: u64 = fields[2]
                .parse()
                .map_err(|_| bad(format!("bad count {:?}", fields[2])))?;
            let slot = match fields[0].as_str() {
                "drop:unmapped" => &mut report.alignment_drops.unmapped,
                "drop:missing_article" => &mut report.alignment_drops.missing_article,
                "drop:object_not_found" => &mut report.alignment_drops.object_not_found,
                stage => report.stage_mut(stage.parse().map_err(bad)?),
            };
            match category {
                Category::Unchanged => slot.unchanged = count,
                Category::Changed => slot.changed = count,
            }
        }
        Ok(report)
    }
}

/// Settings for the whole QC funnel.
#[derive(Debug, Clone)]
pub struct QcConfig {
    pub sample_rate: Fraction,
    pub seed: u64,
    pub caps: FrequencyCaps,
    pub case_insensitive: bool,
    pub workers: usize,
}

impl Default for QcConfig {
    fn default() -> Self {
        QcConfig {
            sample_rate: Fraction::new(1, 1000).unwrap(),
            seed: 0,
            caps: FrequencyCaps::default(),
            case_insensitive: false,
            workers: 1,
        }
    }
}

/// Alignment and filtering for facts that have already been sampled.
/// Fills every report stage from `aligned` on.
pub fn align_and_filter(
    sampled: Vec<CategorizedFact>,
    mapping: &EntityMapping,
    diffset: &ArticleTexts,
    full_recent: &ArticleTexts,
    config: &QcConfig,
    report: &mut FilterReport,
) -> Result<Vec<ProbeInstance>> {
    let (aligned, drops) = align(sampled, mapping, diffset, full_recent, config.workers)?;
    report.alignment_drops = drops;
    report.aligned = StageCounts::of(&aligned);
    let rule1 = filter_substring(aligned, config.case_insensitive);
    report.rule1 = StageCounts::of(&rule1);
    let rule2 = filter_object_length(rule1);
    report.rule2 = StageCounts::of(&rule2);
    let rule3 = filter_frequency(rule2, &config.caps);
    report.rule3 = StageCounts::of(&rule3);
    Ok(rule3)
}

/// The full funnel over in-memory inputs: sample, align, filter.
pub fn build_probes(
    categorized: Vec<CategorizedFact>,
    mapping: &EntityMapping,
    diffset: &ArticleTexts,
    full_recent: &ArticleTexts,
    config: &QcConfig,
) -> Result<(Vec<ProbeInstance>, FilterReport)> {
    let mut report = FilterReport {
        categorized: StageCounts::of(&categorized),
        ..FilterReport::default()
    };
    let sampled = sample_unchanged(categorized, config.sample_rate, config.seed)?;
    report.sampled = StageCounts::of(&sampled);
    let probes = align_and_filter(sampled, mapping, diffset, full_recent, config, &mut report)?;
    Ok((probes, report))
}

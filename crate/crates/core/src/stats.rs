//! Corpus sizes, probe funnel tables and label distributions.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use crate::categorize::Category;
use crate::diff::DiffsetEntry;
use crate::error::{Error, Position, Result};
use crate::ingest::escape::FieldLines;
use crate::ingest::ArticleSnapshot;
use crate::qc::{Categorized, FilterReport, ProbeInstance, ProbeRecord, Stage};

pub const DEFAULT_TOP_K: usize = 30;

/// Anything with a body of text to count.
pub trait HasText {
    fn text(&self) -> &str;
}

impl HasText for ArticleSnapshot {
    fn text(&self) -> &str {
        &self.text
    }
}

impl HasText for DiffsetEntry {
    fn text(&self) -> &str {
        &self.text
    }
}

impl<T: HasText + ?Sized> HasText for &T {
    fn text(&self) -> &str {
        (**self).text()
    }
}

/// Article and whitespace-token counts for one snapshot or diffset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub label: String,
    pub article_count: u64,
    pub token_count: u64,
}

impl CorpusStats {
    pub fn new(label: impl Into<String>) -> Self {
        CorpusStats {
            label: label.into(),
            ..CorpusStats::default()
        }
    }

    pub fn add(&mut self, text: &str) {
        self.article_count += 1;
        self.token_count += text.split_whitespace().count() as u64;
    }

    /// Counts of two streams combined; the label of `self` is kept.
    pub fn merge(mut self, other: &CorpusStats) -> Self {
        self.article_count += other.article_count;
        self.token_count += other.token_count;
        self
    }
}

pub fn corpus_stats<I>(label: impl Into<String>, entries: I) -> CorpusStats
where
    I: IntoIterator,
    I::Item: HasText,
{
    let mut stats = CorpusStats::new(label);
    for entry in entries {
        stats.add(entry.text());
    }
    stats
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyKind {
    Relation,
    SubjectEntity,
    ObjectEntity,
}

impl KeyKind {
    pub const ALL: [KeyKind; 3] = [KeyKind::Relation, KeyKind::SubjectEntity, KeyKind::ObjectEntity];

    pub fn as_str(self) -> &'static str {
        match self {
            KeyKind::Relation => "relation",
            KeyKind::SubjectEntity => "subject",
            KeyKind::ObjectEntity => "object",
        }
    }
}

/// Access to the three labels of a probe.
pub trait ProbeLabels {
    fn label(&self, kind: KeyKind) -> &str;
}

impl ProbeLabels for ProbeInstance {
    fn label(&self, kind: KeyKind) -> &str {
        match kind {
            KeyKind::Relation => &self.triple.relation_label,
            KeyKind::SubjectEntity => &self.triple.subject_label,
            KeyKind::ObjectEntity => &self.triple.object_label,
        }
    }
}

impl ProbeLabels for ProbeRecord {
    fn label(&self, kind: KeyKind) -> &str {
        match kind {
            KeyKind::Relation => &self.relation_label,
            KeyKind::SubjectEntity => &self.subject_label,
            KeyKind::ObjectEntity => &self.object_label,
        }
    }
}

impl<T: ProbeLabels + ?Sized> ProbeLabels for &T {
    fn label(&self, kind: KeyKind) -> &str {
        (**self).label(kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionEntry {
    pub label: String,
    pub count: u64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionReport {
    pub kind: KeyKind,
    /// Number of instances counted, including those outside the top k.
    pub total: u64,
    pub entries: Vec<DistributionEntry>,
}

/// Top-`k` labels of one kind, by count descending and then label ascending.
pub fn distribution<I>(instances: I, kind: KeyKind, k: usize) -> DistributionReport
where
    I: IntoIterator,
    I::Item: ProbeLabels,
{
    distribution_by(instances, kind, k, |label| label.to_owned())
}

/// Like [`distribution`], with every label replaced by `key(label)` before
/// counting (for example an entity type from a lookup table).
pub fn distribution_by<I, F>(instances: I, kind: KeyKind, k: usize, key: F) -> DistributionReport
where
    I: IntoIterator,
    I::Item: ProbeLabels,
    F: Fn(&str) -> String,
{
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut total = 0;
    for instance in instances {
        *counts.entry(key(instance.label(kind))).or_default() += 1;
        total += 1;
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    let entries = ranked
        .into_iter()
        .map(|(label, count)| DistributionEntry {
            fraction: count as f64 / total as f64,
            label,
            count,
        })
        .collect();
    DistributionReport { kind, total, entries }
}

/// Fixed-width text table; the first column is left-aligned, the rest right-aligned.
struct Table {
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new() -> Self {
        Table { rows: Vec::new() }
    }

    fn row<S: ToString>(&mut self, cells: impl IntoIterator<Item = S>) {
        self.rows.push(cells.into_iter().map(|c| c.to_string()).collect());
    }

    fn render(&self) -> String {
        let columns = self.rows.iter().map(Vec::len).max().unwrap_or(0);
        let widths: Vec<usize> = (0..columns)
            .map(|c| {
                self.rows
                    .iter()
                    .filter_map(|r| r.get(c))
                    .map(|s| s.chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for row in &self.rows {
            let mut line = String::new();
            for (c, cell) in row.iter().enumerate() {
                if c == 0 {
                    let _ = write!(line, "{cell:<w$}", w = widths[0]);
                } else {
                    let _ = write!(line, "  {cell:>w$}", w = widths[c]);
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

/// Probe counts in the three-stage layout: counts after sampling, after
/// alignment, and after the heuristic filters, each split into Un and C.
///
/// A funnel whose counts grow between stages is rejected.
pub fn probe_funnel(pair_label: &str, report: &FilterReport) -> Result<String> {
    report.check_monotone()?;
    let mut table = Table::new();
    table.row(["", "Initial", "", "", "Alignment", "", "", "Heuristic", ""]);
    table.row(["Pair", "Un", "C", "", "Un", "C", "", "Un", "C"]);
    let (i, a, h) = (report.sampled, report.aligned, report.rule3);
    table.row([
        pair_label.to_owned(),
        i.unchanged.to_string(),
        i.changed.to_string(),
        "->".into(),
        a.unchanged.to_string(),
        a.changed.to_string(),
        "->".into(),
        h.unchanged.to_string(),
        h.changed.to_string(),
    ]);
    Ok(table.render())
}

/// Every stage of the funnel plus the alignment drops, one row each.
pub fn funnel_detail(report: &FilterReport) -> Result<String> {
    report.check_monotone()?;
    let mut table = Table::new();
    table.row(["Stage", "Un", "C"]);
    for stage in Stage::ALL {
        let c = report.stage(stage);
        table.row([stage.as_str().to_owned(), c.unchanged.to_string(), c.changed.to_string()]);
    }
    let drops = &report.alignment_drops;
    for (name, c) in [
        ("dropped: unmapped subject", drops.unmapped),
        ("dropped: article missing", drops.missing_article),
        ("dropped: object not in text", drops.object_not_found),
    ] {
        table.row([name.to_owned(), c.unchanged.to_string(), c.changed.to_string()]);
    }
    Ok(table.render())
}

pub fn render_corpus(stats: &[CorpusStats]) -> String {
    let mut table = Table::new();
    table.row(["", "Articles", "Tokens"]);
    for s in stats {
        table.row([s.label.clone(), s.article_count.to_string(), s.token_count.to_string()]);
    }
    table.render()
}

/// `label<TAB>articles<TAB>tokens` rows.
pub fn write_corpus_tsv<W: Write>(stats: &[CorpusStats], sink: &mut W) -> io::Result<()> {
    writeln!(sink, "label\tarticles\ttokens")?;
    for s in stats {
        writeln!(sink, "{}\t{}\t{}", s.label, s.article_count, s.token_count)?;
    }
    Ok(())
}

/// Reads rows written by [`write_corpus_tsv`].
pub fn read_corpus_tsv<R: BufRead>(source: R) -> Result<Vec<CorpusStats>> {
    let mut stats = Vec::new();
    for record in FieldLines::new(source, 3) {
        let (line, fields) = record?;
        if line == 1 && fields[0] == "label" {
            continue;
        }
        let count = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| Error::malformed(Position::Line(line), format!("bad count {s:?}")))
        };
        stats.push(CorpusStats {
            article_count: count(&fields[1])?,
            token_count: count(&fields[2])?,
            label: fields[0].clone(),
        });
    }
    Ok(stats)
}

/// A distribution restricted to one category, or over all probes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScopedDistribution {
    pub scope: &'static str,
    pub report: DistributionReport,
}

/// Distributions of every key kind for all probes and for each category.
pub fn probe_distributions<T>(probes: &[T], k: usize) -> Vec<ScopedDistribution>
where
    T: ProbeLabels + Categorized,
{
    let mut out = Vec::new();
    for kind in KeyKind::ALL {
        out.push(ScopedDistribution {
            scope: "all",
            report: distribution(probes, kind, k),
        });
        for category in [Category::Unchanged, Category::Changed] {
            let subset = probes.iter().filter(|p| p.category() == category);
            out.push(ScopedDistribution {
                scope: category.as_str(),
                report: distribution(subset, kind, k),
            });
        }
    }
    out
}

pub fn render_distributions(distributions: &[ScopedDistribution]) -> String {
    let mut out = String::new();
    for d in distributions {
        let r = &d.report;
        let _ = writeln!(out, "Top {} {} labels ({}, {} probes)", r.entries.len(), r.kind.as_str(), d.scope, r.total);
        let mut table = Table::new();
        table.row(["Label", "Count", "Fraction"]);
        for e in &r.entries {
            table.row([e.label.clone(), e.count.to_string(), format!("{:.4}", e.fraction)]);
        }
        out.push_str(&table.render());
        out.push('\n');
    }
    out
}

/// `kind<TAB>scope<TAB>rank<TAB>label<TAB>count<TAB>fraction` rows.
pub fn write_distributions_tsv<W: Write>(distributions: &[ScopedDistribution], sink: &mut W) -> io::Result<()> {
    writeln!(sink, "kind\tscope\trank\tlabel\tcount\tfraction")?;
    for d in distributions {
        for (rank, e) in d.report.entries.iter().enumerate() {
            writeln!(
                sink,
                "{}\t{}\t{}\t{}\t{}\t{:.6}",
                d.report.kind.as_str(),
                d.scope,
                rank + 1,
                e.label,
                e.count,
                e.fraction
            )?;
        }
    }
    Ok(())
}

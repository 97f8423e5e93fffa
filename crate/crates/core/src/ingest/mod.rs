//! Snapshot readers and record writers.
//!
//! Articles come from either an XML dump or an article-records file; facts from
//! a six-column TSV or JSON lines; the entity mapping from a three-column TSV.
//! Every reader is a lazy iterator over a [`BufRead`] and yields records in
//! source order.

pub mod escape;
pub mod markup;
pub mod xml;

use std::collections::HashMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Position, Result};
use escape::FieldLines;
pub use xml::XmlDumpReader;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArticleSnapshot {
    pub article_id: String,
    pub title: String,
    pub text: String,
    pub snapshot_tag: String,
}

/// A (subject, relation, object) fact. Literal objects carry an empty `object_id`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FactTriple {
    pub subject_id: String,
    pub subject_label: String,
    pub relation_id: String,
    pub relation_label: String,
    pub object_id: String,
    pub object_label: String,
    pub snapshot_tag: String,
}

impl FactTriple {
    /// Identity used for deduplication and canonical ordering.
    pub fn key(&self) -> (&str, &str, &str) {
        (&self.subject_id, &self.relation_id, &self.object_label)
    }
}

/// Two consecutive snapshot tags, each formatted `YYYY-MM`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotPair {
    prev_tag: String,
    recent_tag: String,
}

impl SnapshotPair {
    pub fn new(prev_tag: impl Into<String>, recent_tag: impl Into<String>) -> Result<Self> {
        let prev_tag = prev_tag.into();
        let recent_tag = recent_tag.into();
        let prev = parse_year_month(&prev_tag)?;
        let recent = parse_year_month(&recent_tag)?;
        if prev >= recent {
            return Err(Error::InvalidSnapshotPair(format!(
                "{prev_tag} does not precede {recent_tag}"
            )));
        }
        Ok(SnapshotPair {
            prev_tag,
            recent_tag,
        })
    }

    pub fn prev_tag(&self) -> &str {
        &self.prev_tag
    }

    pub fn recent_tag(&self) -> &str {
        &self.recent_tag
    }
}

impl fmt::Display for SnapshotPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.prev_tag, self.recent_tag)
    }
}

fn parse_year_month(tag: &str) -> Result<(u32, u32)> {
    let bad = || Error::InvalidSnapshotPair(format!("tag {tag:?} is not YYYY-MM"));
    let (year, month) = tag.split_once('-').ok_or_else(bad)?;
    if year.len() != 4 || month.len() != 2 {
        return Err(bad());
    }
    let year: u32 = year.parse().map_err(|_| bad())?;
    let month: u32 = month.parse().map_err(|_| bad())?;
    if !(1..=12).contains(&month) {
        return Err(bad());
    }
    Ok((year, month))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingEntry {
    pub article_id: String,
    pub title: String,
    pub entity_id: String,
}

/// Article ↔ knowledge-base entity table. Entity lookup is functional.
#[derive(Debug, Clone, Default)]
pub struct EntityMapping {
    entries: Vec<MappingEntry>,
    by_entity: HashMap<String, usize>,
    by_article: HashMap<String, usize>,
}

impl EntityMapping {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entry. Re-adding an identical entity → article pair is a no-op.
    pub fn insert(&mut self, entry: MappingEntry) -> Result<()> {
        if let Some(&i) = self.by_entity.get(&entry.entity_id) {
            let existing = &self.entries[i];
            if existing.article_id == entry.article_id {
                return Ok(());
            }
            return Err(Error::DuplicateEntity {
                entity_id: entry.entity_id,
                first: existing.article_id.clone(),
                second: entry.article_id,
            });
        }
        let i = self.entries.len();
        self.by_entity.insert(entry.entity_id.clone(), i);
        self.by_article.entry(entry.article_id.clone()).or_insert(i);
        self.entries.push(entry);
        Ok(())
    }

    pub fn article_for(&self, entity_id: &str) -> Option<&str> {
        self.by_entity
            .get(entity_id)
            .map(|&i| self.entries[i].article_id.as_str())
    }

    /// First entity recorded for an article.
    pub fn entity_for(&self, article_id: &str) -> Option<&str> {
        self.by_article
            .get(article_id)
            .map(|&i| self.entries[i].entity_id.as_str())
    }

    pub fn entries(&self) -> &[MappingEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArticleFormat {
    XmlDump,
    ArticleRecords,
}

impl FromStr for ArticleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xml-dump" => Ok(ArticleFormat::XmlDump),
            "article-records" => Ok(ArticleFormat::ArticleRecords),
            other => Err(Error::Config(format!("unknown article format {other:?}"))),
        }
    }
}

impl fmt::Display for ArticleFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArticleFormat::XmlDump => "xml-dump",
            ArticleFormat::ArticleRecords => "article-records",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripleFormat {
    Tsv,
    JsonRecords,
}

impl FromStr for TripleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(TripleFormat::Tsv),
            "json-records" => Ok(TripleFormat::JsonRecords),
            other => Err(Error::Config(format!("unknown triple format {other:?}"))),
        }
    }
}

impl fmt::Display for TripleFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TripleFormat::Tsv => "tsv",
            TripleFormat::JsonRecords => "json-records",
        })
    }
}

/// Lazily parsed article stream.
pub enum ArticleReader<R> {
    Xml(XmlDumpReader<R>),
    Records {
        lines: FieldLines<R>,
        snapshot_tag: String,
    },
}

pub fn read_articles<R: BufRead>(
    source: R,
    format: ArticleFormat,
    snapshot_tag: &str,
) -> ArticleReader<R> {
    match format {
        ArticleFormat::XmlDump => ArticleReader::Xml(XmlDumpReader::new(source, snapshot_tag)),
        ArticleFormat::ArticleRecords => ArticleReader::Records {
            lines: FieldLines::new(source, 3),
            snapshot_tag: snapshot_tag.to_owned(),
        },
    }
}

impl<R: BufRead> Iterator for ArticleReader<R> {
    type Item = Result<ArticleSnapshot>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            ArticleReader::Xml(reader) => reader.next(),
            ArticleReader::Records {
                lines,
                snapshot_tag,
            } => lines.next().map(|record| {
                let (line, fields) = record?;
                let [article_id, title, text] = <[String; 3]>::try_from(fields).unwrap();
                if article_id.is_empty() {
                    return Err(Error::malformed(Position::Line(line), "empty article id"));
                }
                Ok(ArticleSnapshot {
                    article_id,
                    title,
                    text,
                    snapshot_tag: snapshot_tag.clone(),
                })
            }),
        }
    }
}

#[derive(Deserialize)]
struct JsonTriple {
    subject_id: String,
    #[serde(default)]
    subject_label: String,
    relation_id: String,
    #[serde(default)]
    relation_label: String,
    #[serde(default)]
    object_id: String,
    object_label: String,
}

/// Lazily parsed fact stream.
pub enum TripleReader<R> {
    Tsv {
        lines: FieldLines<R>,
        snapshot_tag: String,
    },
    Json {
        source: R,
        line: u64,
        buf: String,
        snapshot_tag: String,
        done: bool,
    },
}

pub fn read_triples<R: BufRead>(
    source: R,
    format: TripleFormat,
    snapshot_tag: &str,
) -> TripleReader<R> {
    let snapshot_tag = snapshot_tag.to_owned();
    match format {
        TripleFormat::Tsv => TripleReader::Tsv {
            lines: FieldLines::new(source, 6),
            snapshot_tag,
        },
        TripleFormat::JsonRecords => TripleReader::Json {
            source,
            line: 0,
            buf: String::new(),
            snapshot_tag,
            done: false,
        },
    }
}

/// Labels never carry tabs or line breaks once ingested.
fn clean_label(label: String) -> String {
    if label.contains(['\t', '\n', '\r']) {
        label.replace(['\t', '\n', '\r'], " ")
    } else {
        label
    }
}

fn build_triple(fields: [String; 6], snapshot_tag: &str, line: u64) -> Result<FactTriple> {
    let [subject_id, subject_label, relation_id, relation_label, object_id, object_label] = fields;
    let missing = if subject_id.is_empty() {
        Some("subject_id")
    } else if relation_id.is_empty() {
        Some("relation_id")
    } else if object_label.is_empty() {
        Some("object_label")
    } else {
        None
    };
    if let Some(field) = missing {
        return Err(Error::malformed(Position::Line(line), format!("empty {field}")));
    }
    Ok(FactTriple {
        subject_id,
        subject_label: clean_label(subject_label),
        relation_id,
        relation_label: clean_label(relation_label),
        object_id,
        object_label: clean_label(object_label),
        snapshot_tag: snapshot_tag.to_owned(),
    })
}

impl<R: BufRead> Iterator for TripleReader<R> {
    type Item = Result<FactTriple>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            TripleReader::Tsv {
                lines,
                snapshot_tag,
            } => lines.next().map(|record| {
                let (line, fields) = record?;
                let fields = <[String; 6]>::try_from(fields).unwrap();
                build_triple(fields, snapshot_tag, line)
            }),
            TripleReader::Json {
                source,
                line,
                buf,
                snapshot_tag,
                done,
            } => loop {
                if *done {
                    return None;
                }
                buf.clear();
                let read = match source.read_line(buf) {
                    Ok(n) => n,
                    Err(e) => {
                        *done = true;
                        return Some(Err(if e.kind() == io::ErrorKind::InvalidData {
                            Error::Encoding {
                                position: Position::Line(*line + 1),
                            }
                        } else {
                            e.into()
                        }));
                    }
                };
                if read == 0 {
                    *done = true;
                    return None;
                }
                *line += 1;
                if buf.trim().is_empty() {
                    continue;
                }
                let parsed: JsonTriple = match serde_json::from_str(buf) {
                    Ok(t) => t,
                    Err(e) => {
                        *done = true;
                        return Some(Err(Error::malformed(Position::Line(*line), e.to_string())));
                    }
                };
                let fields = [
                    parsed.subject_id,
                    parsed.subject_label,
                    parsed.relation_id,
                    parsed.relation_label,
                    parsed.object_id,
                    parsed.object_label,
                ];
                let result = build_triple(fields, snapshot_tag, *line);
                if result.is_err() {
                    *done = true;
                }
                return Some(result);
            },
        }
    }
}

pub fn read_mapping<R: BufRead>(source: R) -> Result<EntityMapping> {
    let mut mapping = EntityMapping::new();
    for record in FieldLines::new(source, 3) {
        let (line, fields) = record?;
        let [article_id, title, entity_id] = <[String; 3]>::try_from(fields).unwrap();
        if article_id.is_empty() || entity_id.is_empty() {
            return Err(Error::malformed(
                Position::Line(line),
                "mapping entries need both article_id and entity_id",
            ));
        }
        mapping.insert(MappingEntry {
            article_id,
            title,
            entity_id,
        })?;
    }
    Ok(mapping)
}

/// A record with a fixed tab-separated line layout.
pub trait Record {
    fn write_record(&self, sink: &mut dyn Write) -> io::Result<()>;
}

impl<T: Record + ?Sized> Record for &T {
    fn write_record(&self, sink: &mut dyn Write) -> io::Result<()> {
        (**self).write_record(sink)
    }
}

impl Record for ArticleSnapshot {
    fn write_record(&self, sink: &mut dyn Write) -> io::Result<()> {
        escape::write_line(sink, &[&self.article_id, &self.title, &self.text])
    }
}

impl Record for FactTriple {
    fn write_record(&self, sink: &mut dyn Write) -> io::Result<()> {
        escape::write_line(
            sink,
            &[
                &self.subject_id,
                &self.subject_label,
                &self.relation_id,
                &self.relation_label,
                &self.object_id,
                &self.object_label,
            ],
        )
    }
}

impl Record for MappingEntry {
    fn write_record(&self, sink: &mut dyn Write) -> io::Result<()> {
        escape::write_line(sink, &[&self.article_id, &self.title, &self.entity_id])
    }
}

/// Writes one record per line and returns how many were written.
pub fn write_records<I, W>(records: I, sink: &mut W) -> Result<u64>
where
    I: IntoIterator,
    I::Item: Record,
    W: Write,
{
    let mut count = 0;
    for record in records {
        record.write_record(sink)?;
        count += 1;
    }
    Ok(count)
}

//! Snapshot-to-snapshot article diffing.
//!
//! Articles whose id is new to the recent snapshot are emitted whole. For
//! articles present in both, each recent paragraph is compared with the
//! previous version's paragraphs by exact sentence matching:
//!
//! * no sentence in common with any previous paragraph: the paragraph is new
//!   and is emitted whole;
//! * otherwise the previous paragraph sharing the most distinct sentences
//!   (lowest index on ties) is its counterpart, and the recent sentences
//!   missing from that counterpart are emitted in order.
//!
//! Deleted articles and deleted sentences produce nothing.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::sync::mpsc;

use rayon::prelude::*;

use crate::error::{Error, Position, Result};
use crate::ingest::escape::{self, FieldLines};
use crate::ingest::markup::strip_markup;
use crate::ingest::{ArticleSnapshot, Record, SnapshotPair};
use crate::textseg::{normalize, RuleSegmenter, SegmentedArticle, SentenceSegmenter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntryKind {
    NewArticle,
    Updated,
}

impl EntryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntryKind::NewArticle => "NewArticle",
            EntryKind::Updated => "Updated",
        }
    }
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "NewArticle" => Ok(EntryKind::NewArticle),
            "Updated" => Ok(EntryKind::Updated),
            other => Err(format!("unknown entry kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffsetEntry {
    pub article_id: String,
    pub title: String,
    pub kind: EntryKind,
    pub text: String,
    pub source_pair: SnapshotPair,
}

impl Record for DiffsetEntry {
    fn write_record(&self, sink: &mut dyn Write) -> io::Result<()> {
        escape::write_line(
            sink,
            &[&self.article_id, &self.title, self.kind.as_str(), &self.text],
        )
    }
}

/// Reads a diffset file back.
pub fn read_diffset<R: io::BufRead>(
    source: R,
    pair: &SnapshotPair,
) -> impl Iterator<Item = Result<DiffsetEntry>> {
    let pair = pair.clone();
    FieldLines::new(source, 4).map(move |record| {
        let (line, fields) = record?;
        let [article_id, title, kind, text] = <[String; 4]>::try_from(fields).unwrap();
        let kind = kind
            .parse()
            .map_err(|m| Error::malformed(Position::Line(line), m))?;
        Ok(DiffsetEntry {
            article_id,
            title,
            kind,
            text,
            source_pair: pair.clone(),
        })
    })
}

/// Text of `recent` that is new relative to `prev`.
///
/// Contributions from different paragraphs are separated by a blank line;
/// sentences within one contribution by a single space.
pub fn get_diff(prev: &SegmentedArticle, recent: &SegmentedArticle) -> String {
    // sentence -> ascending indices of previous paragraphs containing it
    let mut locations: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, paragraph) in prev.paragraphs.iter().enumerate() {
        for sentence in &paragraph.sentences {
            let slots = locations.entry(sentence.as_str()).or_default();
            if slots.last() != Some(&i) {
                slots.push(i);
            }
        }
    }

    let mut shared = vec![0usize; prev.paragraphs.len()];
    let mut touched = Vec::new();
    let mut seen = HashSet::new();
    let mut contributions = Vec::new();

    for paragraph in &recent.paragraphs {
        seen.clear();
        for sentence in &paragraph.sentences {
            if !seen.insert(sentence.as_str()) {
                continue;
            }
            for &i in locations.get(sentence.as_str()).into_iter().flatten() {
                if shared[i] == 0 {
                    touched.push(i);
                }
                shared[i] += 1;
            }
        }

        if touched.is_empty() {
            contributions.push(paragraph.text());
            continue;
        }

        let best = touched
            .iter()
            .copied()
            .max_by(|&a, &b| shared[a].cmp(&shared[b]).then(b.cmp(&a)))
            .unwrap();
        for &i in &touched {
            shared[i] = 0;
        }
        touched.clear();

        let missing: Vec<&str> = paragraph
            .sentences
            .iter()
            .map(String::as_str)
            .filter(|s| {
                locations
                    .get(s)
                    .is_none_or(|slots| slots.binary_search(&best).is_err())
            })
            .collect();
        if !missing.is_empty() {
            contributions.push(missing.join(" "));
        }
    }

    contributions.join("\n\n")
}

/// Settings shared by every article diff in one run.
pub struct DiffOptions {
    pub strip_markup: bool,
    pub workers: usize,
    pub segmenter: Box<dyn SentenceSegmenter>,
}

impl Default for DiffOptions {
    fn default() -> Self {
        DiffOptions {
            strip_markup: false,
            workers: 1,
            segmenter: Box::new(RuleSegmenter::default()),
        }
    }
}

impl DiffOptions {
    /// Article text as compared and emitted: optionally markup-stripped, then normalized.
    pub fn prepare(&self, raw: &str) -> String {
        if self.strip_markup {
            normalize(&strip_markup(raw))
        } else {
            normalize(raw)
        }
    }
}

/// Previous snapshot keyed by article id. Read-only once built.
pub struct PreviousSnapshot {
    tag: String,
    texts: HashMap<String, String>,
}

impl PreviousSnapshot {
    pub fn build<I>(articles: I, tag: &str) -> Result<Self>
    where
        I: IntoIterator<Item = Result<ArticleSnapshot>>,
    {
        let mut texts = HashMap::new();
        for article in articles {
            let article = article?;
            if texts.contains_key(&article.article_id) {
                return Err(Error::DuplicateArticle {
                    article_id: article.article_id,
                    snapshot_tag: tag.to_owned(),
                });
            }
            texts.insert(article.article_id, article.text);
        }
        Ok(PreviousSnapshot {
            tag: tag.to_owned(),
            texts,
        })
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn text(&self, article_id: &str) -> Option<&str> {
        self.texts.get(article_id).map(String::as_str)
    }
}

/// Diffs one recent article against the previous snapshot.
pub fn diff_article(
    prev: &PreviousSnapshot,
    recent: ArticleSnapshot,
    pair: &SnapshotPair,
    options: &DiffOptions,
) -> Option<DiffsetEntry> {
    let recent_text = options.prepare(&recent.text);
    let (kind, text) = match prev.text(&recent.article_id) {
        None => (EntryKind::NewArticle, recent_text),
        Some(prev_raw) => {
            let prev_text = options.prepare(prev_raw);
            if prev_text == recent_text {
                return None;
            }
            let segmenter = options.segmenter.as_ref();
            let before = SegmentedArticle::from_normalized("", &prev_text, segmenter);
            let after = SegmentedArticle::from_normalized("", &recent_text, segmenter);
            let diff = get_diff(&before, &after);
            if diff.is_empty() {
                return None;
            }
            (EntryKind::Updated, diff)
        }
    };
    Some(DiffsetEntry {
        article_id: recent.article_id,
        title: recent.title,
        kind,
        text,
        source_pair: pair.clone(),
    })
}

const CHUNK: usize = 2048;
const CHANNEL_DEPTH: usize = 4;

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Io(io::Error::other(e)))
}

/// Diffs a whole recent snapshot against an indexed previous one.
///
/// Recent articles are parsed on a separate thread and handed over in chunks
/// through a bounded channel; each chunk is diffed on the worker pool. The
/// result is sorted by article id, so it does not depend on worker count.
pub fn diff_snapshot<R>(
    prev: &PreviousSnapshot,
    recent: R,
    recent_tag: &str,
    pair: &SnapshotPair,
    options: &DiffOptions,
) -> Result<Vec<DiffsetEntry>>
where
    R: Iterator<Item = Result<ArticleSnapshot>> + Send,
{
    let pool = thread_pool(options.workers)?;
    let mut seen = HashSet::new();
    let mut entries = Vec::new();

    std::thread::scope(|scope| -> Result<()> {
        let (tx, rx) = mpsc::sync_channel::<Result<Vec<ArticleSnapshot>>>(CHANNEL_DEPTH);
        scope.spawn(move || {
            let mut chunk = Vec::with_capacity(CHUNK);
            for article in recent {
                match article {
                    Ok(a) => {
                        chunk.push(a);
                        if chunk.len() == CHUNK {
                            let full = std::mem::replace(&mut chunk, Vec::with_capacity(CHUNK));
                            if tx.send(Ok(full)).is_err() {
                                return;
                            }
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        return;
                    }
                }
            }
            if !chunk.is_empty() {
                let _ = tx.send(Ok(chunk));
            }
        });

        // dropping rx on an early return unblocks and stops the reader
        for chunk in rx {
            let chunk = chunk?;
            for article in &chunk {
                if !seen.insert(article.article_id.clone()) {
                    return Err(Error::DuplicateArticle {
                        article_id: article.article_id.clone(),
                        snapshot_tag: recent_tag.to_owned(),
                    });
                }
            }
            let diffed: Vec<DiffsetEntry> = pool.install(|| {
                chunk
                    .into_par_iter()
                    .filter_map(|a| diff_article(prev, a, pair, options))
                    .collect()
            });
            entries.extend(diffed);
        }
        Ok(())
    })?;

    entries.sort_unstable_by(|a, b| a.article_id.cmp(&b.article_id));
    Ok(entries)
}

/// Builds the diffset for a snapshot pair from two article streams.
pub fn build_diffset<P, R>(
    prev: P,
    recent: R,
    pair: &SnapshotPair,
    options: &DiffOptions,
) -> Result<Vec<DiffsetEntry>>
where
    P: IntoIterator<Item = Result<ArticleSnapshot>>,
    R: IntoIterator<Item = Result<ArticleSnapshot>>,
    R::IntoIter: Send,
{
    let prev = PreviousSnapshot::build(prev, pair.prev_tag())?;
    diff_snapshot(&prev, recent.into_iter(), pair.recent_tag(), pair, options)
}

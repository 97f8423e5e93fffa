//! Text normalization and paragraph/sentence segmentation.
//!
//! Normalized text has a fixed layout: paragraphs are single lines separated by
//! exactly one blank line, and the only whitespace inside a paragraph is a
//! single ASCII space. Segmentation of normalized text is therefore lossless:
//! joining each paragraph's sentences with `" "` and the paragraphs with
//! `"\n\n"` gives back the normalized text byte for byte.

use unicode_normalization::{is_nfc_quick, IsNormalized, UnicodeNormalization};

/// Canonical form used for every comparison in the pipeline.
///
/// Applies, in order: CRLF and lone CR become LF; every other whitespace run
/// inside a line becomes one space; lines are trimmed; consecutive non-blank
/// lines are joined into one paragraph line with a space; runs of blank lines
/// become a single blank line, with none at either end; finally NFC.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut paragraph_open = false;
    let mut pending_break = false;

    for line in lines(text) {
        let mut line_started = false;
        let mut pending_space = false;
        for c in line.chars() {
            if c.is_whitespace() {
                pending_space = line_started;
                continue;
            }
            if !line_started {
                if paragraph_open && pending_break {
                    out.push_str("\n\n");
                } else if paragraph_open {
                    out.push(' ');
                }
                paragraph_open = true;
                pending_break = false;
                line_started = true;
            } else if pending_space {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        }
        if !line_started {
            pending_break = true;
        }
    }

    if out.is_ascii() || is_nfc_quick(out.chars()) == IsNormalized::Yes {
        out
    } else {
        out.nfc().collect()
    }
}

/// Splits on LF, CRLF and lone CR.
fn lines(text: &str) -> impl Iterator<Item = &str> {
    text.split('\n').flat_map(|piece| {
        let piece = piece.strip_suffix('\r').unwrap_or(piece);
        piece.split('\r')
    })
}

/// Paragraphs are maximal runs of non-blank lines. Blank lines are dropped.
pub fn split_paragraphs(text: &str) -> Vec<&str> {
    let mut paragraphs = Vec::new();
    let mut start: Option<usize> = None;
    let mut end = 0;
    let mut offset = 0;
    for line in text.split('\n') {
        let line_end = offset + line.len();
        if line.trim().is_empty() {
            if let Some(s) = start.take() {
                paragraphs.push(text[s..end].trim_end_matches('\r'));
            }
        } else {
            if start.is_none() {
                start = Some(offset);
            }
            end = line_end;
        }
        offset = line_end + 1;
    }
    if let Some(s) = start {
        paragraphs.push(text[s..end].trim_end_matches('\r'));
    }
    paragraphs
}

/// Splits one paragraph into sentences. Implementations must return non-empty,
/// trimmed slices in paragraph order.
pub trait SentenceSegmenter: Send + Sync {
    fn split<'a>(&self, paragraph: &'a str) -> Vec<&'a str>;
}

const TERMINATORS: [char; 3] = ['.', '!', '?'];
const CLOSERS: [char; 7] = ['"', '\'', ')', ']', '”', '’', '»'];
const OPENERS: [char; 9] = ['"', '\'', '(', '[', '“', '‘', '«', '¿', '¡'];

pub const DEFAULT_ABBREVIATIONS: [&str; 8] =
    ["Mr.", "Dr.", "St.", "No.", "vs.", "etc.", "e.g.", "i.e."];

/// Punctuation-driven segmenter.
///
/// A boundary falls after a run of `.`, `!` or `?` (plus any closing quotes or
/// brackets) when it is followed by whitespace and then an uppercase letter or
/// an opening quote or bracket. A `.` ending a single-letter initial or one of
/// the listed abbreviations never ends a sentence.
#[derive(Debug, Clone)]
pub struct RuleSegmenter {
    abbreviations: Vec<String>,
}

impl Default for RuleSegmenter {
    fn default() -> Self {
        RuleSegmenter::with_abbreviations(DEFAULT_ABBREVIATIONS)
    }
}

impl RuleSegmenter {
    pub fn with_abbreviations<I, S>(abbreviations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        RuleSegmenter {
            abbreviations: abbreviations.into_iter().map(Into::into).collect(),
        }
    }

    fn is_guarded(&self, paragraph: &str, period: usize) -> bool {
        let token_start = paragraph[..period]
            .rfind(|c: char| c.is_ascii_whitespace())
            .map_or(0, |i| i + 1);
        let token = paragraph[token_start..=period].trim_start_matches(OPENERS);
        let mut chars = token.chars();
        if let (Some(first), Some('.'), None) = (chars.next(), chars.next(), chars.next()) {
            if first.is_alphabetic() {
                return true;
            }
        }
        self.abbreviations.iter().any(|a| a == token)
    }
}

impl SentenceSegmenter for RuleSegmenter {
    fn split<'a>(&self, paragraph: &'a str) -> Vec<&'a str> {
        let mut sentences = Vec::new();
        let mut start = 0;
        let mut i = 0;
        while let Some(found) = paragraph[i..].find(TERMINATORS) {
            let term = i + found;
            let mut end = term;
            for c in paragraph[term..].chars() {
                if TERMINATORS.contains(&c) || CLOSERS.contains(&c) {
                    end += c.len_utf8();
                } else {
                    break;
                }
            }
            i = end;
            let rest = &paragraph[end..];
            let gap = rest.len() - rest.trim_start_matches([' ', '\t', '\n']).len();
            if gap == 0 {
                continue;
            }
            let next_start = end + gap;
            let Some(next) = paragraph[next_start..].chars().next() else {
                break;
            };
            if !(next.is_uppercase() || OPENERS.contains(&next)) {
                continue;
            }
            if paragraph.as_bytes()[term] == b'.' && self.is_guarded(paragraph, term) {
                continue;
            }
            let sentence = paragraph[start..end].trim();
            if !sentence.is_empty() {
                sentences.push(sentence);
            }
            start = next_start;
        }
        let tail = paragraph[start..].trim();
        if !tail.is_empty() {
            sentences.push(tail);
        }
        sentences
    }
}

/// Convenience wrapper over the default [`RuleSegmenter`].
pub fn split_sentences(paragraph: &str) -> Vec<&str> {
    RuleSegmenter::default().split(paragraph)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Paragraph {
    pub index: usize,
    pub sentences: Vec<String>,
}

impl Paragraph {
    pub fn text(&self) -> String {
        self.sentences.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentedArticle {
    pub article_id: String,
    pub paragraphs: Vec<Paragraph>,
}

impl SegmentedArticle {
    /// Segments text that has already been through [`normalize`].
    pub fn from_normalized(
        article_id: impl Into<String>,
        normalized: &str,
        segmenter: &dyn SentenceSegmenter,
    ) -> Self {
        let paragraphs = split_paragraphs(normalized)
            .into_iter()
            .enumerate()
            .map(|(index, p)| Paragraph {
                index,
                sentences: segmenter.split(p).into_iter().map(str::to_owned).collect(),
            })
            .collect();
        SegmentedArticle {
            article_id: article_id.into(),
            paragraphs,
        }
    }

    /// Reassembles the normalized text.
    pub fn text(&self) -> String {
        self.paragraphs
            .iter()
            .map(Paragraph::text)
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

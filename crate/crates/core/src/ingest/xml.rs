//! Streaming reader for `pages-articles` style XML dumps.
//!
//! Only `page/title`, `page/ns`, `page/id` and the text of the last
//! `page/revision` are read. Everything else is skipped without being
//! buffered, so memory stays proportional to the largest single page.

use std::io::BufRead;

use quick_xml::events::Event;
use quick_xml::Reader;

use super::ArticleSnapshot;
use crate::error::{Error, Position, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Title,
    Ns,
    Id,
    Text,
}

#[derive(Default)]
struct PageBuilder {
    title: Option<String>,
    ns: Option<String>,
    id: Option<String>,
    text: String,
}

impl PageBuilder {
    fn reset(&mut self, field: Field) {
        match field {
            Field::Title => self.title = Some(String::new()),
            Field::Ns => self.ns = Some(String::new()),
            Field::Id => self.id = Some(String::new()),
            // each revision replaces the previous one's text
            Field::Text => self.text.clear(),
        }
    }
}

pub struct XmlDumpReader<R> {
    reader: Reader<R>,
    snapshot_tag: String,
    buf: Vec<u8>,
    /// Element names from the root down to the current element.
    stack: Vec<Vec<u8>>,
    page: Option<PageBuilder>,
    capture: Option<Field>,
    done: bool,
}

impl<R: BufRead> XmlDumpReader<R> {
    pub fn new(source: R, snapshot_tag: impl Into<String>) -> Self {
        let mut reader = Reader::from_reader(source);
        reader.config_mut().trim_text(false);
        XmlDumpReader {
            reader,
            snapshot_tag: snapshot_tag.into(),
            buf: Vec::with_capacity(64 * 1024),
            stack: Vec::new(),
            page: None,
            capture: None,
            done: false,
        }
    }

    fn byte_position(&self) -> Position {
        Position::Byte(self.reader.buffer_position())
    }

    fn field_for(&self, name: &[u8]) -> Option<Field> {
        // stack already contains `name` as its last element
        let parent = self.stack.len().checked_sub(2).map(|i| self.stack[i].as_slice());
        match (parent, name) {
            (Some(b"page"), b"title") => Some(Field::Title),
            (Some(b"page"), b"ns") => Some(Field::Ns),
            (Some(b"page"), b"id") => Some(Field::Id),
            (Some(b"revision"), b"text") => Some(Field::Text),
            _ => None,
        }
    }

    fn append(&mut self, s: &str) {
        let (Some(page), Some(field)) = (self.page.as_mut(), self.capture) else {
            return;
        };
        let target = match field {
            Field::Title => page.title.get_or_insert_with(String::new),
            Field::Ns => page.ns.get_or_insert_with(String::new),
            Field::Id => page.id.get_or_insert_with(String::new),
            Field::Text => &mut page.text,
        };
        target.push_str(s);
    }

    fn start(&mut self, name: Vec<u8>, empty: bool) -> Result<()> {
        if name == b"page" {
            if self.page.is_some() {
                return Err(Error::malformed(self.byte_position(), "nested <page>"));
            }
            self.page = Some(PageBuilder::default());
        }
        self.stack.push(name);
        if self.stack.len() > 1 {
            let field = self.field_for(self.stack.last().unwrap());
            if let (Some(page), Some(field)) = (self.page.as_mut(), field) {
                page.reset(field);
            }
            self.capture = if empty { None } else { field };
        }
        if empty {
            self.stack.pop();
        }
        Ok(())
    }

    fn finish_page(&mut self) -> Result<Option<ArticleSnapshot>> {
        let page = self.page.take().unwrap_or_default();
        let position = self.byte_position();
        let title = page
            .title
            .ok_or_else(|| Error::malformed(position, "<page> without <title>"))?;
        let id = page
            .id
            .map(|s| s.trim().to_owned())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::malformed(position, "<page> without <id>"))?;
        let ns = page.ns.as_deref().map(str::trim).unwrap_or("0");
        if ns != "0" || is_redirect(&page.text) {
            return Ok(None);
        }
        Ok(Some(ArticleSnapshot {
            article_id: id,
            title,
            text: page.text,
            snapshot_tag: self.snapshot_tag.clone(),
        }))
    }

    fn next_article(&mut self) -> Result<Option<ArticleSnapshot>> {
        loop {
            self.buf.clear();
            let event = self.reader.read_event_into(&mut self.buf);
            let event = match event {
                Ok(e) => e,
                Err(quick_xml::Error::Encoding(_)) => {
                    return Err(Error::Encoding {
                        position: self.byte_position(),
                    })
                }
                Err(e) => return Err(Error::malformed(self.byte_position(), e.to_string())),
            };
            match event {
                Event::Start(e) => {
                    let name = e.name().as_ref().to_vec();
                    self.start(name, false)?;
                }
                Event::Empty(e) => {
                    let name = e.name().as_ref().to_vec();
                    self.start(name, true)?;
                }
                Event::End(_) => {
                    let name = self.stack.pop().unwrap_or_default();
                    self.capture = None;
                    if name == b"page" {
                        if let Some(article) = self.finish_page()? {
                            return Ok(Some(article));
                        }
                    }
                }
                Event::Text(t) => {
                    if self.capture.is_some() {
                        let decoded = t.unescape().map_err(|e| match e {
                            quick_xml::Error::Encoding(_) => Error::Encoding {
                                position: Position::Byte(self.reader.buffer_position()),
                            },
                            other => Error::malformed(
                                Position::Byte(self.reader.buffer_position()),
                                other.to_string(),
                            ),
                        })?;
                        let decoded = decoded.into_owned();
                        self.append(&decoded);
                    }
                }
                Event::CData(c) => {
                    if self.capture.is_some() {
                        let raw = c.into_inner().into_owned();
                        let s = String::from_utf8(raw).map_err(|_| Error::Encoding {
                            position: self.byte_position(),
                        })?;
                        self.append(&s);
                    }
                }
                Event::Eof => {
                    if self.page.is_some() || !self.stack.is_empty() {
                        return Err(Error::malformed(self.byte_position(), "unexpected end of input"));
                    }
                    return Ok(None);
                }
                _ => {}
            }
        }
    }
}

impl<R: BufRead> Iterator for XmlDumpReader<R> {
    type Item = Result<ArticleSnapshot>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.next_article().transpose();
        if !matches!(item, Some(Ok(_))) {
            self.done = true;
        }
        item
    }
}

/// Redirect pages start with a `#REDIRECT` directive, in any case.
pub fn is_redirect(text: &str) -> bool {
    let head = text.trim_start();
    head.len() >= 9
        && head.is_char_boundary(9)
        && head[..9].eq_ignore_ascii_case("#redirect")
}

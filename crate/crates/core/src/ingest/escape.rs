//! Tab-separated line records with backslash escaping.
//!
//! Inside a field, tab, newline and backslash are written as `\t`, `\n` and
//! `\\`. Any other character (including `\r`) is written as is. Records are
//! separated by a single `\n`.

use std::io::{self, BufRead, Write};

use crate::error::{Error, Position, Result};

pub fn escape_into(field: &str, out: &mut String) {
    for c in field.chars() {
        match c {
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\\' => out.push_str("\\\\"),
            c => out.push(c),
        }
    }
}

pub fn escape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    escape_into(field, &mut out);
    out
}

pub fn unescape(field: &str, line: u64) -> Result<String> {
    if !field.contains('\\') {
        return Ok(field.to_owned());
    }
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                return Err(Error::malformed(
                    Position::Line(line),
                    format!("unknown escape sequence \\{other}"),
                ))
            }
            None => {
                return Err(Error::malformed(
                    Position::Line(line),
                    "dangling backslash at end of field",
                ))
            }
        }
    }
    Ok(out)
}

/// Writes one record: escaped fields joined by tabs, terminated by a newline.
pub fn write_line<W: Write + ?Sized>(sink: &mut W, fields: &[&str]) -> io::Result<()> {
    let mut line = String::new();
    for (i, field) in fields.iter().enumerate() {
        if i > 0 {
            line.push('\t');
        }
        escape_into(field, &mut line);
    }
    line.push('\n');
    sink.write_all(line.as_bytes())
}

/// Streams unescaped fields from a line-oriented source, enforcing a fixed arity.
///
/// Completely empty lines are skipped; no record serializes to one.
pub struct FieldLines<R> {
    source: R,
    arity: usize,
    line: u64,
    buf: Vec<u8>,
    done: bool,
}

impl<R: BufRead> FieldLines<R> {
    pub fn new(source: R, arity: usize) -> Self {
        FieldLines {
            source,
            arity,
            line: 0,
            buf: Vec::new(),
            done: false,
        }
    }

    /// Line number of the most recently yielded record (1-based).
    pub fn line(&self) -> u64 {
        self.line
    }

    fn next_record(&mut self) -> Result<Option<Vec<String>>> {
        loop {
            self.buf.clear();
            let n = self.source.read_until(b'\n', &mut self.buf)?;
            if n == 0 {
                return Ok(None);
            }
            self.line += 1;
            if self.buf.last() == Some(&b'\n') {
                self.buf.pop();
            }
            if self.buf.is_empty() {
                continue;
            }
            let text = std::str::from_utf8(&self.buf).map_err(|_| Error::Encoding {
                position: Position::Line(self.line),
            })?;
            let found = text.split('\t').count();
            if found != self.arity {
                return Err(Error::Arity {
                    line: self.line,
                    expected: self.arity,
                    found,
                });
            }
            let line = self.line;
            return text
                .split('\t')
                .map(|f| unescape(f, line))
                .collect::<Result<Vec<_>>>()
                .map(Some);
        }
    }
}

impl<R: BufRead> Iterator for FieldLines<R> {
    type Item = Result<(u64, Vec<String>)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_record() {
            Ok(Some(fields)) => Some(Ok((self.line, fields))),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

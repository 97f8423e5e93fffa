//! Optional wiki-markup stripping applied to article bodies before diffing.
//!
//! Handles only these constructs: `{{templates}}` are dropped (nesting aware),
//! `[[target|anchor]]` links keep their anchor text (or the target when there
//! is no anchor), `[http://url label]` links keep their label, and heading lines
//! such as `== History ==` become a paragraph holding just the heading text.

pub fn strip_markup(text: &str) -> String {
    let inline = strip_inline(text);
    let mut out = String::with_capacity(inline.len());
    for (i, line) in inline.split('\n').enumerate() {
        if i > 0 {
            out.push('\n');
        }
        match heading_text(line) {
            Some(heading) => {
                out.push('\n');
                out.push_str(heading);
                out.push('\n');
            }
            None => out.push_str(line),
        }
    }
    out
}

fn heading_text(line: &str) -> Option<&str> {
    let trimmed = line.trim();
    let lead = trimmed.bytes().take_while(|&b| b == b'=').count();
    let trail = trimmed.bytes().rev().take_while(|&b| b == b'=').count();
    if lead == 0 || trail == 0 || lead + trail >= trimmed.len() {
        return None;
    }
    Some(trimmed[lead..trimmed.len() - trail].trim())
}

fn strip_inline(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(idx) = rest.find(['{', '[']) {
        out.push_str(&rest[..idx]);
        rest = &rest[idx..];
        if rest.starts_with("{{") {
            rest = match matching_close(rest, "{{", "}}") {
                Some(end) => &rest[end..],
                // unbalanced: drop the remainder the template would have swallowed
                None => "",
            };
        } else if rest.starts_with("[[") {
            match matching_close(rest, "[[", "]]") {
                Some(end) => {
                    let inner = strip_inline(&rest[2..end - 2]);
                    out.push_str(link_label(&inner));
                    rest = &rest[end..];
                }
                None => {
                    out.push_str("[[");
                    rest = &rest[2..];
                }
            }
        } else if is_external_link(rest) {
            match rest.find(']') {
                Some(close) => {
                    let body = &rest[1..close];
                    if let Some((_, label)) = body.split_once(' ') {
                        out.push_str(label.trim());
                    }
                    rest = &rest[close + 1..];
                }
                None => {
                    out.push('[');
                    rest = &rest[1..];
                }
            }
        } else {
            let c = rest.chars().next().unwrap();
            out.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    out.push_str(rest);
    out
}

fn link_label(inner: &str) -> &str {
    match inner.rfind('|') {
        Some(bar) => inner[bar + 1..].trim(),
        None => inner.trim(),
    }
}

fn is_external_link(s: &str) -> bool {
    let body = &s[1..];
    body.starts_with("http://") || body.starts_with("https://") || body.starts_with("//")
}

/// Byte offset just past the delimiter closing the one `s` starts with.
fn matching_close(s: &str, open: &str, close: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut i = 0;
    let bytes = s.as_bytes();
    while i < bytes.len() {
        if s[i..].starts_with(open) {
            depth += 1;
            i += open.len();
        } else if s[i..].starts_with(close) {
            depth -= 1;
            i += close.len();
            if depth == 0 {
                return Some(i);
            }
        } else {
            i += 1;
            while i < bytes.len() && !s.is_char_boundary(i) {
                i += 1;
            }
        }
    }
    None
}

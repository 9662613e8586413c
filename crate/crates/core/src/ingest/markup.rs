//! Markdown and HTML to plain paragraphs plus a heading outline.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

pub(crate) enum Block {
    Para(String),
    Heading { level: u8, text: String },
}

/// Strips inline Markdown: images and links keep their text, emphasis,
/// strike-through and code markers are dropped.
pub(crate) fn strip_inline_markdown(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < line.len() {
        let rest = &line[i..];
        let image = rest.starts_with("![");
        if image || rest.starts_with('[') {
            let open = if image { i + 2 } else { i + 1 };
            if let Some(close) = line[open..].find("](").map(|c| open + c) {
                if let Some(paren) = line[close + 2..].find(')').map(|p| close + 2 + p) {
                    out.push_str(&strip_inline_markdown(&line[open..close]));
                    i = paren + 1;
                    continue;
                }
            }
        }
        match bytes[i] {
            b'*' | b'`' => i += 1,
            b'_' if rest.starts_with("__") => i += 2,
            b'~' if rest.starts_with("~~") => i += 2,
            _ => {
                let c = rest.chars().next().unwrap_or_default();
                out.push(c);
                i += c.len_utf8();
            }
        }
    }
    out
}

fn atx_heading(line: &str) -> Option<(u8, &str)> {
    let trimmed = line.trim_start();
    let hashes = trimmed.bytes().take_while(|&b| b == b'#').count();
    if hashes == 0 || hashes > 6 {
        return None;
    }
    let rest = &trimmed[hashes..];
    if !rest.is_empty() && !rest.starts_with([' ', '\t']) {
        return None;
    }
    let text = rest.trim().trim_end_matches('#').trim_end();
    Some((hashes as u8, text))
}

/// Returns the item text when `line` is a bullet or ordered list item.
pub(crate) fn list_item(line: &str) -> Option<&str> {
    let t = line.trim_start();
    for marker in ["- ", "* ", "+ ", "\u{2022} "] {
        if let Some(rest) = t.strip_prefix(marker) {
            return Some(rest.trim_start());
        }
    }
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 && digits <= 3 {
        let rest = &t[digits..];
        if let Some(rest) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return Some(rest.trim_start());
        }
    }
    None
}

fn is_rule(line: &str) -> bool {
    let t: String = line.chars().filter(|c| !c.is_whitespace()).collect();
    t.len() >= 3 && (t.chars().all(|c| c == '-') || t.chars().all(|c| c == '*') || t.chars().all(|c| c == '_'))
}

pub(crate) fn markdown_blocks(text: &str) -> Vec<Block> {
    let mut blocks = Vec::new();
    let mut para = String::new();
    let mut in_fence = false;

    fn flush(para: &mut String, blocks: &mut Vec<Block>) {
        if !para.trim().is_empty() {
            blocks.push(Block::Para(core::mem::take(para)));
        }
        para.clear();
    }

    for line in text.lines() {
        let trimmed = line.trim_start();
        if trimmed.starts_with("```") || trimmed.starts_with("~~~") {
            flush(&mut para, &mut blocks);
            in_fence = !in_fence;
            continue;
        }
        if in_fence {
            if !para.is_empty() {
                para.push('\n');
            }
            para.push_str(line);
            continue;
        }
        if trimmed.is_empty() || is_rule(trimmed) {
            flush(&mut para, &mut blocks);
            continue;
        }
        if let Some((level, heading)) = atx_heading(trimmed) {
            flush(&mut para, &mut blocks);
            blocks.push(Block::Heading { level, text: strip_inline_markdown(heading).trim().to_string() });
            continue;
        }
        let mut content = trimmed;
        while let Some(rest) = content.strip_prefix('>') {
            content = rest.trim_start();
        }
        if let Some(item) = list_item(content) {
            flush(&mut para, &mut blocks);
            para.push_str(&strip_inline_markdown(item));
            flush(&mut para, &mut blocks);
            continue;
        }
        if !para.is_empty() {
            para.push('\n');
        }
        para.push_str(&strip_inline_markdown(content));
    }
    flush(&mut para, &mut blocks);
    blocks
}

const BLOCK_TAGS: &[&str] = &[
    "address",
    "article",
    "aside",
    "blockquote",
    "body",
    "caption",
    "dd",
    "details",
    "div",
    "dl",
    "dt",
    "figcaption",
    "figure",
    "footer",
    "form",
    "header",
    "hr",
    "html",
    "li",
    "main",
    "nav",
    "ol",
    "p",
    "pre",
    "section",
    "summary",
    "table",
    "tbody",
    "td",
    "tfoot",
    "th",
    "thead",
    "tr",
    "ul",
];

fn decode_entity(name: &str) -> Option<char> {
    if let Some(num) = name.strip_prefix('#') {
        let code = match num.strip_prefix(['x', 'X']) {
            Some(hex) => u32::from_str_radix(hex, 16).ok()?,
            None => num.parse().ok()?,
        };
        return char::from_u32(code);
    }
    Some(match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" | "#39" => '\'',
        "nbsp" => ' ',
        "ndash" => '\u{2013}',
        "mdash" => '\u{2014}',
        "hellip" => '\u{2026}',
        "lsquo" => '\u{2018}',
        "rsquo" => '\u{2019}',
        "ldquo" => '\u{201c}',
        "rdquo" => '\u{201d}',
        "copy" => '\u{a9}',
        "reg" => '\u{ae}',
        "deg" => '\u{b0}',
        _ => return None,
    })
}

/// Decodes named and numeric character references; unknown ones are kept.
pub(crate) fn decode_entities(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let tail = &rest[amp..];
        let decoded = tail[1..]
            .find(';')
            .filter(|&semi| semi > 0 && semi <= 10)
            .and_then(|semi| decode_entity(&tail[1..1 + semi]).map(|c| (c, semi)));
        match decoded {
            Some((c, semi)) => {
                out.push(c);
                rest = &tail[semi + 2..];
            }
            None => {
                out.push('&');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

struct Tag<'a> {
    name: String,
    closing: bool,
    len: usize,
    _raw: &'a str,
}

fn parse_tag(s: &str) -> Option<Tag<'_>> {
    // s starts with '<'
    let mut quote: Option<char> = None;
    let mut end = None;
    for (i, c) in s.char_indices().skip(1) {
        match (quote, c) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), _) => {}
            (None, '"' | '\'') => quote = Some(c),
            (None, '>') => {
                end = Some(i);
                break;
            }
            _ => {}
        }
    }
    let end = end?;
    let inner = &s[1..end];
    let closing = inner.starts_with('/');
    let name: String = inner
        .trim_start_matches('/')
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric())
        .flat_map(|c| c.to_lowercase())
        .collect();
    if name.is_empty() {
        return None;
    }
    Some(Tag { name, closing, len: end + 1, _raw: inner })
}

#[derive(Default)]
pub(crate) struct HtmlOutline {
    pub title: Option<String>,
    pub blocks: Vec<Block>,
}

fn push_collapsed(buf: &mut String, text: &str, preformatted: bool) {
    if preformatted {
        buf.push_str(text);
        return;
    }
    for c in text.chars() {
        if c.is_whitespace() {
            if !buf.is_empty() && !buf.ends_with([' ', '\n']) {
                buf.push(' ');
            }
        } else {
            buf.push(c);
        }
    }
}

/// Tag-stripping HTML reader: block-level tags become paragraph breaks,
/// `<h1>`..`<h6>` become headings, script and style content is dropped.
pub(crate) fn html_outline(html: &str) -> HtmlOutline {
    let mut out = HtmlOutline::default();
    let mut para = String::new();
    let mut heading: Option<(u8, String)> = None;
    let mut in_title = false;
    let mut title_buf = String::new();
    let mut pre_depth = 0usize;
    let mut rest = html;

    fn flush(para: &mut String, blocks: &mut Vec<Block>) {
        let text = para.trim();
        if !text.is_empty() {
            blocks.push(Block::Para(text.to_string()));
        }
        para.clear();
    }

    while !rest.is_empty() {
        let Some(lt) = rest.find('<') else {
            let text = decode_entities(rest);
            match (&mut heading, in_title) {
                (_, true) => title_buf.push_str(&text),
                (Some((_, h)), _) => push_collapsed(h, &text, false),
                _ => push_collapsed(&mut para, &text, pre_depth > 0),
            }
            break;
        };
        if lt > 0 {
            let text = decode_entities(&rest[..lt]);
            match (&mut heading, in_title) {
                (_, true) => title_buf.push_str(&text),
                (Some((_, h)), _) => push_collapsed(h, &text, false),
                _ => push_collapsed(&mut para, &text, pre_depth > 0),
            }
        }
        let tail = &rest[lt..];
        if let Some(comment) = tail.strip_prefix("<!--") {
            rest = comment.find("-->").map_or("", |e| &comment[e + 3..]);
            continue;
        }
        if tail.starts_with("<!") || tail.starts_with("<?") {
            rest = tail.find('>').map_or("", |e| &tail[e + 1..]);
            continue;
        }
        let Some(tag) = parse_tag(tail) else {
            push_collapsed(&mut para, "<", pre_depth > 0);
            rest = &tail[1..];
            continue;
        };
        rest = &tail[tag.len..];
        let name = tag.name.as_str();
        if !tag.closing && matches!(name, "script" | "style" | "noscript" | "template") {
            let mut close = String::from("</");
            close.push_str(name);
            let lower = rest.to_ascii_lowercase();
            rest = match lower.find(&close) {
                Some(c) => {
                    let after = &rest[c..];
                    after.find('>').map_or("", |e| &after[e + 1..])
                }
                None => "",
            };
            continue;
        }
        match name {
            "title" => {
                in_title = !tag.closing;
                if tag.closing && out.title.is_none() {
                    let t = collapse(&title_buf);
                    if !t.is_empty() {
                        out.title = Some(t);
                    }
                }
            }
            "h1" | "h2" | "h3" | "h4" | "h5" | "h6" => {
                let level = name.as_bytes()[1] - b'0';
                if tag.closing {
                    if let Some((level, text)) = heading.take() {
                        let text = collapse(&text);
                        if !text.is_empty() {
                            out.blocks.push(Block::Heading { level, text });
                        }
                    }
                } else {
                    flush(&mut para, &mut out.blocks);
                    heading = Some((level, String::new()));
                }
            }
            "br" => {
                if let Some((_, h)) = &mut heading {
                    h.push(' ');
                } else {
                    para.push('\n');
                }
            }
            _ if BLOCK_TAGS.contains(&name) => {
                if name == "pre" {
                    pre_depth = if tag.closing { pre_depth.saturating_sub(1) } else { pre_depth + 1 };
                }
                flush(&mut para, &mut out.blocks);
            }
            _ => {}
        }
    }
    flush(&mut para, &mut out.blocks);
    out
}

fn collapse(s: &str) -> String {
    let mut out = String::new();
    for w in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(w);
    }
    out
}

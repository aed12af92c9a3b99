//! Block-level markdown parsing.
//!
//! Only block structure matters here: which spans of the body are prose and
//! which are headers, code, tables or images. Inline markup is handled by
//! [`strip_structural`] when prose blocks are flattened back to text.

use std::sync::LazyLock;

use regex::Regex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Paragraph,
    Header,
    Code,
    Pre,
    Table,
    Image,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub kind: BlockKind,
    pub text: String,
}

impl Block {
    fn new(kind: BlockKind, text: impl Into<String>) -> Self {
        Block { kind, text: text.into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StructuralDoc {
    pub blocks: Vec<Block>,
}

macro_rules! re {
    ($name:ident, $pat:expr) => {
        static $name: LazyLock<Regex> = LazyLock::new(|| Regex::new($pat).unwrap());
    };
}

re!(FENCE_OPEN, r"^( {0,3})(`{3,}|~{3,})(.*)$");
re!(ATX, r"^ {0,3}(#{1,6})(?:[ \t]+(.*?))?[ \t]*$");
re!(SETEXT_EQ, r"^ {0,3}=+[ \t]*$");
re!(SETEXT_DASH, r"^ {0,3}-+[ \t]*$");
re!(THEMATIC, r"^ {0,3}(?:(?:\*[ \t]*){3,}|(?:-[ \t]*){3,}|(?:_[ \t]*){3,})$");
re!(TABLE_DELIM, r"^[ \t]*\|?[ \t]*:?-+:?[ \t]*(?:\|[ \t]*:?-+:?[ \t]*)*\|?[ \t]*$");
re!(IMAGE_LINE, r#"^[ \t]*(?:(?:!\[[^\]]*\]\([^)]*\)|<img\b[^>]*>)[ \t]*)+$"#);
re!(LIST_ITEM, r"^ {0,3}(?:[-+*]|\d{1,9}[.)])(?:[ \t]+(.*))?$");
re!(QUOTE, r"^ {0,3}> ?(.*)$");
re!(PRE_OPEN, r"(?i)^[ \t]*<pre\b");
re!(PRE_CLOSE, r"(?i)</pre\s*>");

fn is_blank(line: &str) -> bool {
    line.trim().is_empty()
}

fn is_indented(line: &str) -> bool {
    line.starts_with("    ") || line.starts_with('\t')
}

fn dedent(line: &str) -> &str {
    line.strip_prefix('\t')
        .or_else(|| line.strip_prefix("    "))
        .unwrap_or(line.trim_start())
}

struct Parser {
    blocks: Vec<Block>,
    open: Option<(BlockKind, Vec<String>)>,
}

impl Parser {
    fn flush(&mut self) {
        if let Some((kind, lines)) = self.open.take() {
            let text = lines.join("\n");
            if !text.trim().is_empty() {
                self.blocks.push(Block::new(kind, text));
            }
        }
    }

    fn push(&mut self, block: Block) {
        self.flush();
        self.blocks.push(block);
    }

    fn continue_or_open(&mut self, kind: BlockKind, line: &str) {
        match &mut self.open {
            Some((_, lines)) => lines.push(line.to_string()),
            None => self.open = Some((kind, vec![line.to_string()])),
        }
    }
}

/// Parse a markdown body into an ordered list of blocks.
pub fn parse_markdown(body: &str) -> StructuralDoc {
    let normalized = body.replace("\r\n", "\n").replace('\r', "\n");
    let lines: Vec<&str> = normalized.split('\n').collect();
    StructuralDoc {
        blocks: parse_lines(&lines),
    }
}

fn parse_lines(lines: &[&str]) -> Vec<Block> {
    let mut p = Parser {
        blocks: Vec::new(),
        open: None,
    };
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i].trim_end();

        if is_blank(line) {
            p.flush();
            i += 1;
            continue;
        }

        if let Some(c) = FENCE_OPEN.captures(line) {
            let fence = &c[2];
            let info = &c[3];
            if !(fence.starts_with('`') && info.contains('`')) {
                let indent = c[1].len();
                let fch = fence.chars().next().unwrap();
                let mut body = Vec::new();
                i += 1;
                while i < lines.len() {
                    let l = lines[i].trim_end();
                    let t = l.trim_start();
                    if l.len() - t.len() <= 3
                        && t.starts_with(fence)
                        && t.chars().all(|ch| ch == fch)
                    {
                        i += 1;
                        break;
                    }
                    let strip = l.len() - l.trim_start_matches(' ').len();
                    body.push(&l[strip.min(indent)..]);
                    i += 1;
                }
                p.push(Block::new(BlockKind::Code, body.join("\n")));
                continue;
            }
        }

        if PRE_OPEN.is_match(line) {
            let mut body = vec![line];
            if !PRE_CLOSE.is_match(line) {
                i += 1;
                while i < lines.len() {
                    body.push(lines[i]);
                    if PRE_CLOSE.is_match(lines[i]) {
                        break;
                    }
                    i += 1;
                }
            }
            i += 1;
            let text = body.join("\n");
            static TAGS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)</?pre\b[^>]*>").unwrap());
            p.push(Block::new(BlockKind::Pre, TAGS.replace_all(&text, "").trim().to_string()));
            continue;
        }

        if let Some(c) = ATX.captures(line) {
            let text = c.get(2).map_or("", |m| m.as_str());
            let text = text.trim_end_matches('#').trim_end();
            p.push(Block::new(BlockKind::Header, text));
            i += 1;
            continue;
        }

        if matches!(p.open, Some((BlockKind::Paragraph, _))) && (SETEXT_EQ.is_match(line) || SETEXT_DASH.is_match(line)) {
            let (_, lines_) = p.open.take().unwrap();
            p.blocks.push(Block::new(BlockKind::Header, lines_.join("\n").trim()));
            i += 1;
            continue;
        }

        if THEMATIC.is_match(line) {
            p.flush();
            i += 1;
            continue;
        }

        if p.open.is_none() && is_indented(line) {
            let mut body = Vec::new();
            while i < lines.len() && (is_indented(lines[i]) || is_blank(lines[i])) {
                body.push(dedent(lines[i].trim_end()));
                i += 1;
            }
            while body.last().is_some_and(|l| l.is_empty()) {
                body.pop();
            }
            p.push(Block::new(BlockKind::Code, body.join("\n")));
            continue;
        }

        if line.contains('|') && i + 1 < lines.len() && TABLE_DELIM.is_match(lines[i + 1]) && lines[i + 1].contains('-') {
            let mut body = vec![line, lines[i + 1].trim_end()];
            i += 2;
            while i < lines.len() && !is_blank(lines[i]) && lines[i].contains('|') {
                body.push(lines[i].trim_end());
                i += 1;
            }
            p.push(Block::new(BlockKind::Table, body.join("\n")));
            continue;
        }

        if IMAGE_LINE.is_match(line) {
            p.push(Block::new(BlockKind::Image, line.trim()));
            i += 1;
            continue;
        }

        if QUOTE.is_match(line) {
            let mut inner = Vec::new();
            while i < lines.len() {
                match QUOTE.captures(lines[i]) {
                    Some(c) => inner.push(c.get(1).map_or("", |m| m.as_str())),
                    None => break,
                }
                i += 1;
            }
            p.flush();
            p.blocks.extend(parse_lines(&inner));
            continue;
        }

        if let Some(c) = LIST_ITEM.captures(line) {
            p.flush();
            let rest = c.get(1).map_or("", |m| m.as_str());
            p.open = Some((BlockKind::Other, vec![rest.to_string()]));
            i += 1;
            continue;
        }

        p.continue_or_open(BlockKind::Paragraph, line);
        i += 1;
    }
    p.flush();
    p.blocks
}

re!(INLINE_IMAGE, r"!\[[^\]\n]*\]\([^)\n]*\)");
re!(INLINE_LINK, r"\[([^\]\n]*)\]\([^)\n]*\)");
static INLINE_HTML_BLOCKS: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    ["code", "pre", "table", "h1", "h2", "h3", "h4", "h5", "h6"]
        .iter()
        .map(|t| Regex::new(&format!(r"(?is)<{t}\b[^>]*>.*?</\s*{t}\s*>")).unwrap())
        .collect()
});
re!(INLINE_IMG_TAG, r"(?i)<img\b[^>]*>");

/// Remove inline code spans: a run of N backticks up to the next run of exactly N.
fn strip_code_spans(text: &str) -> String {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let mut copied = 0;
    while i < bytes.len() {
        if bytes[i] != b'`' {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && bytes[i] == b'`' {
            i += 1;
        }
        let run = i - start;
        let mut j = i;
        let mut close = None;
        while j < bytes.len() {
            if bytes[j] == b'`' {
                let s = j;
                while j < bytes.len() && bytes[j] == b'`' {
                    j += 1;
                }
                if j - s == run {
                    close = Some(j);
                    break;
                }
            } else {
                j += 1;
            }
        }
        if let Some(end) = close {
            out.push_str(&text[copied..start]);
            out.push(' ');
            copied = end;
            i = end;
        }
    }
    out.push_str(&text[copied..]);
    out
}

/// Flatten prose blocks (paragraphs and other) back to text, one block per line
/// group; headers, code, pre, tables and images are dropped, as are inline code
/// spans, images and the link targets of inline links.
pub fn strip_structural(doc: &StructuralDoc) -> String {
    let mut parts = Vec::new();
    for b in &doc.blocks {
        if !matches!(b.kind, BlockKind::Paragraph | BlockKind::Other) {
            continue;
        }
        let mut t = b.text.clone();
        for re in INLINE_HTML_BLOCKS.iter() {
            t = re.replace_all(&t, " ").into_owned();
        }
        let t = INLINE_IMG_TAG.replace_all(&t, " ");
        let t = strip_code_spans(&t);
        let t = INLINE_IMAGE.replace_all(&t, " ");
        let t = INLINE_LINK.replace_all(&t, "$1");
        let t = t.trim();
        if !t.is_empty() {
            parts.push(t.to_string());
        }
    }
    parts.join("\n")
}

//! Python 3.11 surface-syntax lexer and parser.
//!
//! The lexer is lossless: concatenating the text of every [`LexToken`]
//! reproduces the input byte for byte, whitespace and comments included.
//! The parser produces a generic [`AstNode`] tree whose node kinds follow
//! the names of Python's `ast` module, with byte spans instead of
//! `(lineno, col_offset)` pairs. [`LineIndex`] converts between the two.
//!
//! A few structural choices differ from CPython's tree:
//!
//! * `elif` chains, `except` handlers, `with` items and `case` blocks are
//!   flattened into their enclosing `If`, `Try`, `With` and `Match` node,
//!   so every clause keyword is a terminal of the compound statement.
//! * Parameter names, `import` aliases and `except ... as` names are plain
//!   terminals of their statement; only defaults and annotations become
//!   child nodes.
//! * List/set/dict comprehensions and generator expressions share the
//!   `Comprehension` kind.
//! * Decorators are children of the decorated definition, whose span
//!   starts at the first `@`.

mod ast;
mod lexer;
mod parser;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use ast::{AstNode, NodeKind};
pub use lexer::{
    is_keyword, is_operator_lexeme, string_delimiters, tokenize, LexKind, LexToken, COMPARISON_OPERATORS, KEYWORDS,
    SOFT_KEYWORDS,
};

/// Half-open byte range `[start, start + len)` into a source string.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ByteSpan {
    pub start: usize,
    pub len: usize,
}

impl ByteSpan {
    pub const fn new(start: usize, len: usize) -> Self {
        ByteSpan { start, len }
    }

    pub fn from_bounds(start: usize, end: usize) -> Self {
        debug_assert!(start <= end, "inverted span {start}..{end}");
        ByteSpan {
            start,
            len: end - start,
        }
    }

    #[inline]
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// True when `other` lies entirely inside `self`.
    #[inline]
    pub fn contains(&self, other: &ByteSpan) -> bool {
        self.start <= other.start && other.end() <= self.end()
    }

    pub fn intersect(&self, other: &ByteSpan) -> Option<ByteSpan> {
        let start = self.start.max(other.start);
        let end = self.end().min(other.end());
        (start < end).then(|| ByteSpan::from_bounds(start, end))
    }

    pub fn slice<'a>(&self, source: &'a str) -> &'a str {
        &source[self.start..self.end()]
    }
}

impl fmt::Display for ByteSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("source is not valid UTF-8 (first invalid byte at offset {offset})")]
    Encoding { offset: usize },
    #[error("syntax error at line {line}, column {col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        offset: usize,
        message: String,
    },
}

impl ParseError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ParseError::Syntax { line, .. } => Some(*line),
            ParseError::Encoding { .. } => None,
        }
    }
}

/// Output of [`parse_source`]: the module tree plus the lossless token stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub root: AstNode,
    pub tokens: Vec<LexToken>,
}

/// Lex and parse a complete Python module.
pub fn parse_source(text: &str) -> Result<Parsed, ParseError> {
    let lexed = lexer::lex(text)?;
    let root = parser::parse_module(text, &lexed.sig)?;
    Ok(Parsed {
        root,
        tokens: lexed.tokens,
    })
}

/// Same as [`parse_source`] for raw bytes, rejecting invalid UTF-8.
pub fn parse_bytes(bytes: &[u8]) -> Result<Parsed, ParseError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ParseError::Encoding {
        offset: e.valid_up_to(),
    })?;
    parse_source(text)
}

/// Innermost node whose span contains `span`.
///
/// With `want`, returns the innermost ancestor-or-self of that kind instead.
/// `None` means no node (of the requested kind) contains the span.
pub fn node_at(root: &AstNode, span: ByteSpan, want: Option<NodeKind>) -> Option<&AstNode> {
    if !root.span.contains(&span) {
        return None;
    }
    let mut best = match want {
        Some(kind) if root.kind != kind => None,
        _ => Some(root),
    };
    let mut cur = root;
    while let Some(child) = cur.children.iter().find(|c| c.span.contains(&span)) {
        cur = child;
        if want.is_none_or(|k| k == cur.kind) {
            best = Some(cur);
        }
    }
    best
}

/// Byte offset <-> (1-based line, 0-based byte column) conversion.
#[derive(Debug, Clone)]
pub struct LineIndex {
    line_starts: Vec<usize>,
    len: usize,
}

impl LineIndex {
    pub fn new(source: &str) -> Self {
        let bytes = source.as_bytes();
        let mut line_starts = vec![0];
        let mut i = 0;
        while i < bytes.len() {
            match bytes[i] {
                b'\n' => line_starts.push(i + 1),
                b'\r' => {
                    if bytes.get(i + 1) == Some(&b'\n') {
                        i += 1;
                    }
                    line_starts.push(i + 1);
                }
                _ => {}
            }
            i += 1;
        }
        LineIndex {
            line_starts,
            len: source.len(),
        }
    }

    pub fn line_col(&self, offset: usize) -> (usize, usize) {
        let offset = offset.min(self.len);
        let line = self.line_starts.partition_point(|&s| s <= offset);
        (line, offset - self.line_starts[line - 1])
    }

    pub fn offset(&self, line: usize, col: usize) -> Option<usize> {
        let start = *self.line_starts.get(line.checked_sub(1)?)?;
        let off = start + col;
        (off <= self.len).then_some(off)
    }
}

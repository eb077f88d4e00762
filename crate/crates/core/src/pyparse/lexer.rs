use serde::{Deserialize, Serialize};

use super::{ByteSpan, LineIndex, ParseError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LexKind {
    Keyword,
    Identifier,
    Punct,
    Operator,
    StringLit,
    NumberLit,
    Space,
    LineBreak,
    Indent,
    Dedent,
    Comment,
}

impl LexKind {
    pub fn is_whitespace(self) -> bool {
        matches!(
            self,
            LexKind::Space | LexKind::LineBreak | LexKind::Indent | LexKind::Dedent
        )
    }

    /// Whitespace and comments: tokens that never carry syntax.
    pub fn is_trivia(self) -> bool {
        self.is_whitespace() || self == LexKind::Comment
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexToken {
    pub kind: LexKind,
    pub text: String,
    pub span: ByteSpan,
    /// 1-based line of the first byte.
    pub line: usize,
    /// 0-based byte column of the first byte.
    pub col: usize,
}

pub const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del",
    "elif", "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal",
    "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
];

pub const SOFT_KEYWORDS: &[&str] = &["match", "case", "_"];

pub fn is_keyword(text: &str) -> bool {
    KEYWORDS.contains(&text)
}

const OPERATORS_3: &[&str] = &["**=", "//=", ">>=", "<<=", "..."];
const OPERATORS_2: &[&str] = &[
    "->", ":=", "**", "//", ">>", "<<", "<=", ">=", "==", "!=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=",
];
const OPERATORS_1: &[u8] = b"+-*/%@&|^~<>()[]{},:.;=";

/// Lexemes of Python's comparison-operator class. `not in` and `is not`
/// are two lexemes each.
pub const COMPARISON_OPERATORS: &[&str] = &["<", ">", "==", ">=", "<=", "!=", "in", "not", "is"];

/// True when `text` is exactly one operator or delimiter lexeme.
pub fn is_operator_lexeme(text: &str) -> bool {
    OPERATORS_3.contains(&text)
        || OPERATORS_2.contains(&text)
        || (text.len() == 1 && OPERATORS_1.contains(&text.as_bytes()[0]))
}

fn classify_op(op: &str) -> LexKind {
    match op {
        "(" | ")" | "[" | "]" | "{" | "}" | "," | ":" | "." | ";" | "=" | "->" | "..." => LexKind::Punct,
        _ if op.len() >= 2 && op.ends_with('=') && !matches!(op, "==" | "!=" | "<=" | ">=") => LexKind::Punct,
        _ => LexKind::Operator,
    }
}

/// Lengths of the prefix (`rb`, `f`, ...) and of the quote run at each end
/// of a string literal token.
pub fn string_delimiters(text: &str) -> (usize, usize) {
    let prefix = text.find(['\'', '"']).unwrap_or(0);
    let rest = &text.as_bytes()[prefix..];
    let quote = if rest.len() >= 6 && rest[0] == rest[1] && rest[1] == rest[2] {
        3
    } else {
        1
    };
    (prefix, quote)
}

/// Token kinds the parser consumes; whitespace and comments are dropped and
/// indentation is made explicit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum SigKind {
    Name,
    Number,
    String,
    Op,
    Newline,
    Indent,
    Dedent,
    EndMarker,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Sig {
    pub kind: SigKind,
    pub start: usize,
    pub end: usize,
}

pub(crate) struct Lexed {
    pub tokens: Vec<LexToken>,
    pub sig: Vec<Sig>,
}

/// Lossless tokenization of Python source.
pub fn tokenize(source: &str) -> Result<Vec<LexToken>, ParseError> {
    lex(source).map(|l| l.tokens)
}

pub(crate) fn lex(source: &str) -> Result<Lexed, ParseError> {
    Lexer::new(source).run()
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    lines: LineIndex,
    tokens: Vec<LexToken>,
    sig: Vec<Sig>,
    indents: Vec<usize>,
    brackets: Vec<(u8, usize)>,
    at_line_start: bool,
    line_has_content: bool,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            lines: LineIndex::new(src),
            tokens: Vec::new(),
            sig: Vec::new(),
            indents: vec![0],
            brackets: Vec::new(),
            at_line_start: true,
            line_has_content: false,
        }
    }

    fn error(&self, offset: usize, message: impl Into<String>) -> ParseError {
        let (line, col) = self.lines.line_col(offset);
        ParseError::Syntax {
            line,
            col,
            offset,
            message: message.into(),
        }
    }

    fn push(&mut self, kind: LexKind, start: usize, end: usize) {
        let (line, col) = self.lines.line_col(start);
        self.tokens.push(LexToken {
            kind,
            text: self.src[start..end].to_string(),
            span: ByteSpan::from_bounds(start, end),
            line,
            col,
        });
    }

    fn push_sig(&mut self, kind: SigKind, start: usize, end: usize) {
        if !matches!(
            kind,
            SigKind::Newline | SigKind::Indent | SigKind::Dedent | SigKind::EndMarker
        ) {
            self.line_has_content = true;
        }
        self.sig.push(Sig { kind, start, end });
    }

    fn peek(&self, ahead: usize) -> Option<u8> {
        self.bytes.get(self.pos + ahead).copied()
    }

    fn linebreak_len(&self, at: usize) -> usize {
        match self.bytes.get(at) {
            Some(b'\n') => 1,
            Some(b'\r') if self.bytes.get(at + 1) == Some(&b'\n') => 2,
            Some(b'\r') => 1,
            _ => 0,
        }
    }

    fn run(mut self) -> Result<Lexed, ParseError> {
        while self.pos < self.bytes.len() {
            if self.at_line_start {
                self.at_line_start = false;
                if self.brackets.is_empty() {
                    self.line_start()?;
                    continue;
                }
            }
            self.next_token()?;
        }
        if let Some(&(_, at)) = self.brackets.last() {
            return Err(self.error(at, "unexpected EOF: bracket was never closed"));
        }
        let end = self.bytes.len();
        if self.line_has_content {
            self.push_sig(SigKind::Newline, end, end);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(LexKind::Dedent, end, end);
            self.push_sig(SigKind::Dedent, end, end);
        }
        self.push_sig(SigKind::EndMarker, end, end);
        Ok(Lexed {
            tokens: self.tokens,
            sig: self.sig,
        })
    }

    /// Handles leading whitespace of a physical line outside brackets.
    fn line_start(&mut self) -> Result<(), ParseError> {
        let start = self.pos;
        let mut col = 0usize;
        while let Some(b) = self.peek(0) {
            match b {
                b' ' => col += 1,
                b'\t' => col = (col / 8 + 1) * 8,
                b'\x0c' => col = 0,
                _ => break,
            }
            self.pos += 1;
        }
        let ws_end = self.pos;
        let blank = match self.peek(0) {
            None | Some(b'#') => true,
            Some(_) => self.linebreak_len(self.pos) > 0,
        };
        if blank {
            if ws_end > start {
                self.push(LexKind::Space, start, ws_end);
            }
            return Ok(());
        }
        let top = *self.indents.last().unwrap();
        if col > top {
            self.indents.push(col);
            self.push_sig(SigKind::Indent, start, ws_end);
        } else if col < top {
            while col < *self.indents.last().unwrap() {
                self.indents.pop();
                self.push(LexKind::Dedent, start, start);
                self.push_sig(SigKind::Dedent, start, start);
            }
            if col != *self.indents.last().unwrap() {
                return Err(self.error(ws_end, "unindent does not match any outer indentation level"));
            }
        }
        if ws_end > start {
            self.push(LexKind::Indent, start, ws_end);
        }
        Ok(())
    }

    fn next_token(&mut self) -> Result<(), ParseError> {
        let start = self.pos;
        let b = self.bytes[start];
        match b {
            b' ' | b'\t' | b'\x0c' => {
                while matches!(self.peek(0), Some(b' ' | b'\t' | b'\x0c')) {
                    self.pos += 1;
                }
                self.push(LexKind::Space, start, self.pos);
            }
            b'\\' => {
                let n = self.linebreak_len(start + 1);
                if n == 0 {
                    return Err(self.error(start, "unexpected character after line continuation character"));
                }
                self.pos += 1 + n;
                self.push(LexKind::Space, start, self.pos);
                if self.pos >= self.bytes.len() {
                    return Err(self.error(start, "unexpected EOF after line continuation"));
                }
            }
            b'\n' | b'\r' => {
                self.pos += self.linebreak_len(start);
                self.push(LexKind::LineBreak, start, self.pos);
                if self.brackets.is_empty() && self.line_has_content {
                    self.push_sig(SigKind::Newline, start, self.pos);
                    self.line_has_content = false;
                }
                self.at_line_start = true;
            }
            b'#' => {
                while let Some(c) = self.peek(0) {
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                    self.pos += 1;
                }
                self.push(LexKind::Comment, start, self.pos);
            }
            b'\'' | b'"' => self.string(start, start)?,
            b'0'..=b'9' => self.number(start)?,
            b'.' if matches!(self.peek(1), Some(b'0'..=b'9')) => self.number(start)?,
            _ if is_ident_start(self.src, start) => self.identifier(start)?,
            _ => self.operator(start)?,
        }
        Ok(())
    }

    fn identifier(&mut self, start: usize) -> Result<(), ParseError> {
        let mut end = start;
        for (i, c) in self.src[start..].char_indices() {
            if c == '_' || c.is_alphanumeric() {
                end = start + i + c.len_utf8();
            } else {
                break;
            }
        }
        let word = &self.src[start..end];
        if matches!(self.bytes.get(end), Some(b'\'' | b'"')) && is_string_prefix(word) {
            self.pos = end;
            return self.string(start, end);
        }
        self.pos = end;
        let kind = if is_keyword(word) {
            LexKind::Keyword
        } else {
            LexKind::Identifier
        };
        self.push(kind, start, end);
        self.push_sig(SigKind::Name, start, end);
        Ok(())
    }

    fn string(&mut self, start: usize, quote_at: usize) -> Result<(), ParseError> {
        let q = self.bytes[quote_at];
        let triple = self.bytes.get(quote_at + 1) == Some(&q) && self.bytes.get(quote_at + 2) == Some(&q);
        let mut i = quote_at + if triple { 3 } else { 1 };
        loop {
            let Some(&c) = self.bytes.get(i) else {
                let what = if triple {
                    "unterminated triple-quoted string literal"
                } else {
                    "unterminated string literal"
                };
                return Err(self.error(start, what));
            };
            match c {
                b'\\' => {
                    let n = self.linebreak_len(i + 1);
                    i += 1 + n.max(1);
                    // skip the whole escaped code point
                    while i < self.bytes.len() && !self.src.is_char_boundary(i) {
                        i += 1;
                    }
                }
                b'\n' | b'\r' if !triple => {
                    return Err(self.error(start, "unterminated string literal"));
                }
                _ if c == q => {
                    if !triple {
                        i += 1;
                        break;
                    }
                    if self.bytes.get(i + 1) == Some(&q) && self.bytes.get(i + 2) == Some(&q) {
                        i += 3;
                        break;
                    }
                    i += 1;
                }
                _ => i += 1,
            }
        }
        self.pos = i.min(self.bytes.len());
        self.push(LexKind::StringLit, start, self.pos);
        self.push_sig(SigKind::String, start, self.pos);
        Ok(())
    }

    fn number(&mut self, start: usize) -> Result<(), ParseError> {
        let bytes = self.bytes;
        let mut i = start;
        let digits = |i: &mut usize, ok: fn(u8) -> bool| {
            while let Some(&c) = bytes.get(*i) {
                if ok(c) || c == b'_' {
                    *i += 1;
                } else {
                    break;
                }
            }
        };
        if bytes[i] == b'0' && matches!(bytes.get(i + 1), Some(b'x' | b'X' | b'o' | b'O' | b'b' | b'B')) {
            let radix = bytes[i + 1].to_ascii_lowercase();
            i += 2;
            let before = i;
            match radix {
                b'x' => digits(&mut i, |c| c.is_ascii_hexdigit()),
                b'o' => digits(&mut i, |c| (b'0'..=b'7').contains(&c)),
                _ => digits(&mut i, |c| c == b'0' || c == b'1'),
            }
            if i == before {
                return Err(self.error(start, "invalid numeric literal"));
            }
        } else {
            digits(&mut i, |c| c.is_ascii_digit());
            if bytes.get(i) == Some(&b'.') && bytes.get(i + 1) != Some(&b'.') {
                i += 1;
                digits(&mut i, |c| c.is_ascii_digit());
            }
            if matches!(bytes.get(i), Some(b'e' | b'E')) {
                let mut j = i + 1;
                if matches!(bytes.get(j), Some(b'+' | b'-')) {
                    j += 1;
                }
                if matches!(bytes.get(j), Some(b'0'..=b'9')) {
                    i = j;
                    digits(&mut i, |c| c.is_ascii_digit());
                }
            }
            if matches!(bytes.get(i), Some(b'j' | b'J')) {
                i += 1;
            }
        }
        self.pos = i;
        self.push(LexKind::NumberLit, start, i);
        self.push_sig(SigKind::Number, start, i);
        Ok(())
    }

    fn operator(&mut self, start: usize) -> Result<(), ParseError> {
        let rest = &self.src[start..];
        let op = OPERATORS_3
            .iter()
            .chain(OPERATORS_2)
            .find(|op| rest.starts_with(**op))
            .map(|op| op.len())
            .or_else(|| OPERATORS_1.contains(&self.bytes[start]).then_some(1));
        let Some(len) = op else {
            let c = rest.chars().next().unwrap();
            return Err(self.error(start, format!("invalid character {c:?}")));
        };
        let b = self.bytes[start];
        match b {
            b'(' | b'[' | b'{' if len == 1 => self.brackets.push((b, start)),
            b')' | b']' | b'}' => {
                let open = match b {
                    b')' => b'(',
                    b']' => b'[',
                    _ => b'{',
                };
                match self.brackets.pop() {
                    Some((o, _)) if o == open => {}
                    _ => return Err(self.error(start, format!("unmatched '{}'", b as char))),
                }
            }
            _ => {}
        }
        self.pos = start + len;
        let kind = classify_op(&self.src[start..self.pos]);
        self.push(kind, start, self.pos);
        self.push_sig(SigKind::Op, start, self.pos);
        Ok(())
    }
}

fn is_ident_start(src: &str, at: usize) -> bool {
    src[at..].chars().next().is_some_and(|c| c == '_' || c.is_alphabetic())
}

fn is_string_prefix(word: &str) -> bool {
    matches!(
        word.to_ascii_lowercase().as_str(),
        "r" | "u" | "b" | "f" | "br" | "rb" | "fr" | "rf"
    )
}

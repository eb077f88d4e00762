//! Recursive-descent parser over the significant-token stream.

use super::ast::{AstNode, NodeKind};
use super::lexer::{is_keyword, string_delimiters, Sig, SigKind};
use super::{LineIndex, ParseError};

type PResult<T> = Result<T, ParseError>;

pub(crate) fn parse_module(src: &str, toks: &[Sig]) -> PResult<AstNode> {
    let mut p = Parser {
        src,
        toks,
        pos: 0,
        lines: LineIndex::new(src),
    };
    let mut body = Vec::new();
    while !p.at(SigKind::EndMarker) {
        p.statement(&mut body)?;
    }
    Ok(AstNode::new(NodeKind::Module, 0, src.len(), body))
}

/// An expression plus its syntactic extent. The extent includes redundant
/// parentheses around the expression, which the node span leaves out.
struct Ex {
    node: AstNode,
    start: usize,
    end: usize,
}

impl Ex {
    fn plain(node: AstNode) -> Ex {
        Ex {
            start: node.span.start,
            end: node.span.end(),
            node,
        }
    }
}

const AUGASSIGN: &[&str] = &[
    "+=", "-=", "*=", "/=", "//=", "%=", "**=", ">>=", "<<=", "&=", "|=", "^=", "@=",
];

struct Parser<'a> {
    src: &'a str,
    toks: &'a [Sig],
    pos: usize,
    lines: LineIndex,
}

impl<'a> Parser<'a> {
    // ---- token helpers -------------------------------------------------

    fn tok(&self) -> Sig {
        self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn nth(&self, n: usize) -> Sig {
        self.toks[(self.pos + n).min(self.toks.len() - 1)]
    }

    fn text_of(&self, t: Sig) -> &'a str {
        &self.src[t.start..t.end]
    }

    fn text(&self) -> &'a str {
        self.text_of(self.tok())
    }

    fn at(&self, kind: SigKind) -> bool {
        self.tok().kind == kind
    }

    fn at_op(&self, op: &str) -> bool {
        let t = self.tok();
        t.kind == SigKind::Op && self.text_of(t) == op
    }

    fn nth_is_op(&self, n: usize, op: &str) -> bool {
        let t = self.nth(n);
        t.kind == SigKind::Op && self.text_of(t) == op
    }

    fn at_kw(&self, kw: &str) -> bool {
        let t = self.tok();
        t.kind == SigKind::Name && self.text_of(t) == kw
    }

    fn nth_is_kw(&self, n: usize, kw: &str) -> bool {
        let t = self.nth(n);
        t.kind == SigKind::Name && self.text_of(t) == kw
    }

    fn at_name(&self) -> bool {
        self.at(SigKind::Name) && !is_keyword(self.text())
    }

    fn bump(&mut self) -> Sig {
        let t = self.tok();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn prev_end(&self) -> usize {
        self.toks[self.pos - 1].end
    }

    fn eat_op(&mut self, op: &str) -> Option<Sig> {
        self.at_op(op).then(|| self.bump())
    }

    fn eat_kw(&mut self, kw: &str) -> Option<Sig> {
        self.at_kw(kw).then(|| self.bump())
    }

    fn expect_op(&mut self, op: &str) -> PResult<Sig> {
        self.eat_op(op)
            .ok_or_else(|| self.error_here(&format!("expected '{op}'")))
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Sig> {
        self.eat_kw(kw)
            .ok_or_else(|| self.error_here(&format!("expected '{kw}'")))
    }

    fn expect_name(&mut self) -> PResult<Sig> {
        if self.at_name() {
            Ok(self.bump())
        } else {
            Err(self.error_here("expected a name"))
        }
    }

    fn expect(&mut self, kind: SigKind, what: &str) -> PResult<Sig> {
        if self.at(kind) {
            Ok(self.bump())
        } else {
            Err(self.error_here(what))
        }
    }

    fn error_here(&self, message: &str) -> ParseError {
        let t = self.tok();
        let detail = match t.kind {
            SigKind::EndMarker => format!("{message} (found end of input)"),
            SigKind::Newline => format!("{message} (found end of line)"),
            SigKind::Indent => "unexpected indent".to_string(),
            SigKind::Dedent => format!("{message} (found dedent)"),
            _ => format!("{message} (found {:?})", self.text_of(t)),
        };
        let (line, col) = self.lines.line_col(t.start);
        ParseError::Syntax {
            line,
            col,
            offset: t.start,
            message: detail,
        }
    }

    fn at_stmt_end(&self) -> bool {
        matches!(self.tok().kind, SigKind::Newline | SigKind::EndMarker) || self.at_op(";")
    }

    fn at_expr_start(&self) -> bool {
        let t = self.tok();
        let text = self.text_of(t);
        match t.kind {
            SigKind::Number | SigKind::String => true,
            SigKind::Name => {
                !is_keyword(text) || matches!(text, "True" | "False" | "None" | "lambda" | "not" | "await" | "yield")
            }
            SigKind::Op => matches!(text, "(" | "[" | "{" | "-" | "+" | "~" | "*" | "..."),
            _ => false,
        }
    }

    // ---- statements ----------------------------------------------------

    fn statement(&mut self, out: &mut Vec<AstNode>) -> PResult<()> {
        if self.at(SigKind::Indent) {
            return Err(self.error_here("unexpected indent"));
        }
        if let Some(stmt) = self.compound()? {
            out.push(stmt);
            return Ok(());
        }
        self.simple_stmts(out)
    }

    fn compound(&mut self) -> PResult<Option<AstNode>> {
        let t = self.tok();
        if t.kind == SigKind::Op && self.text_of(t) == "@" {
            return self.decorated().map(Some);
        }
        if t.kind != SigKind::Name {
            return Ok(None);
        }
        let start = t.start;
        let stmt = match self.text_of(t) {
            "def" => self.funcdef(start, Vec::new())?,
            "class" => self.classdef(start, Vec::new())?,
            "if" => self.if_stmt()?,
            "while" => self.while_stmt()?,
            "for" => self.for_stmt(start)?,
            "try" => self.try_stmt()?,
            "with" => self.with_stmt(start)?,
            "async" => {
                self.bump();
                match self.text() {
                    "def" => self.funcdef(start, Vec::new())?,
                    "for" => self.for_stmt(start)?,
                    "with" => self.with_stmt(start)?,
                    _ => return Err(self.error_here("expected 'def', 'for' or 'with' after 'async'")),
                }
            }
            "match" => return self.match_stmt(),
            _ => return Ok(None),
        };
        Ok(Some(stmt))
    }

    /// Parses `':' suite`, appending the suite's statements to `children`.
    /// Returns the end offset of the last statement.
    fn block(&mut self, children: &mut Vec<AstNode>) -> PResult<usize> {
        self.expect_op(":")?;
        if self.at(SigKind::Newline) {
            self.bump();
            self.expect(SigKind::Indent, "expected an indented block")?;
            while !self.at(SigKind::Dedent) && !self.at(SigKind::EndMarker) {
                self.statement(children)?;
            }
            self.expect(SigKind::Dedent, "expected dedent")?;
        } else {
            self.simple_stmts(children)?;
        }
        Ok(children.last().map(|c| c.span.end()).unwrap_or_else(|| self.prev_end()))
    }

    fn decorated(&mut self) -> PResult<AstNode> {
        let start = self.tok().start;
        let mut decorators = Vec::new();
        while self.eat_op("@").is_some() {
            decorators.push(self.named_expression()?.node);
            self.expect(SigKind::Newline, "expected newline after decorator")?;
        }
        let t = self.tok();
        match self.text_of(t) {
            "def" if t.kind == SigKind::Name => self.funcdef(start, decorators),
            "class" if t.kind == SigKind::Name => self.classdef(start, decorators),
            "async" if t.kind == SigKind::Name && self.nth_is_kw(1, "def") => {
                self.bump();
                self.funcdef(start, decorators)
            }
            _ => Err(self.error_here("expected a function or class definition after decorator")),
        }
    }

    fn funcdef(&mut self, start: usize, mut children: Vec<AstNode>) -> PResult<AstNode> {
        self.expect_kw("def")?;
        self.expect_name()?;
        self.expect_op("(")?;
        self.params(&mut children, ")", true)?;
        self.expect_op(")")?;
        if self.eat_op("->").is_some() {
            children.push(self.expression()?.node);
        }
        let end = self.block(&mut children)?;
        Ok(AstNode::new(NodeKind::FunctionDef, start, end, children))
    }

    /// Parameter list of a `def` (annotations allowed) or `lambda`.
    fn params(&mut self, children: &mut Vec<AstNode>, close: &str, annotations: bool) -> PResult<()> {
        loop {
            if self.at_op(close) {
                break;
            }
            if self.eat_op("/").is_some() {
                // positional-only marker
            } else if self.eat_op("*").is_some() {
                if self.at_name() {
                    self.bump();
                    if annotations && self.eat_op(":").is_some() {
                        children.push(self.star_expression()?.node);
                    }
                }
            } else if self.eat_op("**").is_some() {
                self.expect_name()?;
                if annotations && self.eat_op(":").is_some() {
                    children.push(self.expression()?.node);
                }
            } else {
                self.expect_name()?;
                if annotations && self.eat_op(":").is_some() {
                    children.push(self.expression()?.node);
                }
                if self.eat_op("=").is_some() {
                    children.push(self.expression()?.node);
                }
            }
            if self.eat_op(",").is_none() {
                break;
            }
        }
        Ok(())
    }

    fn classdef(&mut self, start: usize, mut children: Vec<AstNode>) -> PResult<AstNode> {
        self.expect_kw("class")?;
        self.expect_name()?;
        if self.eat_op("(").is_some() {
            self.call_args(&mut children)?;
            self.expect_op(")")?;
        }
        let end = self.block(&mut children)?;
        Ok(AstNode::new(NodeKind::ClassDef, start, end, children))
    }

    fn if_stmt(&mut self) -> PResult<AstNode> {
        let start = self.bump().start;
        let mut children = vec![self.named_expression()?.node];
        let mut end = self.block(&mut children)?;
        while self.eat_kw("elif").is_some() {
            children.push(self.named_expression()?.node);
            end = self.block(&mut children)?;
        }
        if self.eat_kw("else").is_some() {
            end = self.block(&mut children)?;
        }
        Ok(AstNode::new(NodeKind::If, start, end, children))
    }

    fn while_stmt(&mut self) -> PResult<AstNode> {
        let start = self.bump().start;
        let mut children = vec![self.named_expression()?.node];
        let mut end = self.block(&mut children)?;
        if self.eat_kw("else").is_some() {
            end = self.block(&mut children)?;
        }
        Ok(AstNode::new(NodeKind::While, start, end, children))
    }

    fn for_stmt(&mut self, start: usize) -> PResult<AstNode> {
        self.expect_kw("for")?;
        let mut children = vec![self.star_targets()?.node];
        self.expect_kw("in")?;
        children.push(self.star_expressions()?.node);
        let mut end = self.block(&mut children)?;
        if self.eat_kw("else").is_some() {
            end = self.block(&mut children)?;
        }
        Ok(AstNode::new(NodeKind::For, start, end, children))
    }

    fn try_stmt(&mut self) -> PResult<AstNode> {
        let start = self.bump().start;
        let mut children = Vec::new();
        let mut end = self.block(&mut children)?;
        let mut handlers = 0;
        while self.eat_kw("except").is_some() {
            handlers += 1;
            self.eat_op("*");
            if !self.at_op(":") {
                children.push(self.expression()?.node);
                if self.eat_kw("as").is_some() {
                    self.expect_name()?;
                }
            }
            end = self.block(&mut children)?;
        }
        if handlers > 0 && self.eat_kw("else").is_some() {
            end = self.block(&mut children)?;
        }
        if self.eat_kw("finally").is_some() {
            end = self.block(&mut children)?;
        } else if handlers == 0 {
            return Err(self.error_here("expected 'except' or 'finally' block"));
        }
        Ok(AstNode::new(NodeKind::Try, start, end, children))
    }

    fn with_stmt(&mut self, start: usize) -> PResult<AstNode> {
        self.expect_kw("with")?;
        let mut children = Vec::new();
        let save = self.pos;
        let parenthesized = if self.at_op("(") {
            self.bump();
            match self.with_items(&mut children, true) {
                Ok(()) if self.at_op(")") && self.nth_is_op(1, ":") => {
                    self.bump();
                    true
                }
                _ => false,
            }
        } else {
            false
        };
        if !parenthesized {
            self.pos = save;
            children.clear();
            self.with_items(&mut children, false)?;
        }
        let end = self.block(&mut children)?;
        Ok(AstNode::new(NodeKind::With, start, end, children))
    }

    fn with_items(&mut self, children: &mut Vec<AstNode>, trailing_comma: bool) -> PResult<()> {
        loop {
            children.push(self.expression()?.node);
            if self.eat_kw("as").is_some() {
                children.push(self.star_target()?.node);
            }
            if self.eat_op(",").is_none() {
                break;
            }
            if trailing_comma && self.at_op(")") {
                break;
            }
        }
        Ok(())
    }

    fn match_stmt(&mut self) -> PResult<Option<AstNode>> {
        let save = self.pos;
        let start = self.bump().start;
        let subject = match self.star_named_expressions() {
            Ok(s)
                if self.at_op(":")
                    && self.nth(1).kind == SigKind::Newline
                    && self.nth(2).kind == SigKind::Indent
                    && self.nth_is_kw(3, "case") =>
            {
                s
            }
            _ => {
                self.pos = save;
                return Ok(None);
            }
        };
        let mut children = vec![subject.node];
        self.bump();
        self.bump();
        self.bump();
        let mut end = self.prev_end();
        while self.eat_kw("case").is_some() {
            children.push(self.patterns()?);
            if self.eat_kw("if").is_some() {
                children.push(self.named_expression()?.node);
            }
            end = self.block(&mut children)?;
        }
        self.expect(SigKind::Dedent, "expected 'case' block")?;
        Ok(Some(AstNode::new(NodeKind::Match, start, end, children)))
    }

    fn simple_stmts(&mut self, out: &mut Vec<AstNode>) -> PResult<()> {
        loop {
            out.push(self.simple_stmt()?);
            if self.eat_op(";").is_some() && !matches!(self.tok().kind, SigKind::Newline | SigKind::EndMarker) {
                continue;
            }
            break;
        }
        match self.tok().kind {
            SigKind::Newline => {
                self.bump();
                Ok(())
            }
            SigKind::EndMarker => Ok(()),
            _ => Err(self.error_here("invalid syntax")),
        }
    }

    fn simple_stmt(&mut self) -> PResult<AstNode> {
        let t = self.tok();
        let start = t.start;
        if t.kind == SigKind::Name {
            match self.text_of(t) {
                "pass" | "break" | "continue" => {
                    self.bump();
                    let kind = match self.text_of(t) {
                        "pass" => NodeKind::Pass,
                        "break" => NodeKind::Break,
                        _ => NodeKind::Continue,
                    };
                    return Ok(AstNode::leaf(kind, start, t.end));
                }
                "return" => {
                    self.bump();
                    let mut children = Vec::new();
                    if !self.at_stmt_end() {
                        children.push(self.star_expressions()?.node);
                    }
                    return Ok(AstNode::new(NodeKind::Return, start, self.prev_end(), children));
                }
                "raise" => {
                    self.bump();
                    let mut children = Vec::new();
                    if !self.at_stmt_end() {
                        children.push(self.expression()?.node);
                        if self.eat_kw("from").is_some() {
                            children.push(self.expression()?.node);
                        }
                    }
                    return Ok(AstNode::new(NodeKind::Raise, start, self.prev_end(), children));
                }
                "global" | "nonlocal" => {
                    self.bump();
                    let kind = if self.text_of(t) == "global" {
                        NodeKind::Global
                    } else {
                        NodeKind::Nonlocal
                    };
                    loop {
                        self.expect_name()?;
                        if self.eat_op(",").is_none() {
                            break;
                        }
                    }
                    return Ok(AstNode::leaf(kind, start, self.prev_end()));
                }
                "del" => {
                    self.bump();
                    let mut children = Vec::new();
                    loop {
                        children.push(self.star_target()?.node);
                        if self.eat_op(",").is_none() || self.at_stmt_end() {
                            break;
                        }
                    }
                    return Ok(AstNode::new(NodeKind::Delete, start, self.prev_end(), children));
                }
                "assert" => {
                    self.bump();
                    let mut children = vec![self.expression()?.node];
                    if self.eat_op(",").is_some() {
                        children.push(self.expression()?.node);
                    }
                    return Ok(AstNode::new(NodeKind::Assert, start, self.prev_end(), children));
                }
                "import" => {
                    self.bump();
                    loop {
                        self.dotted_name()?;
                        if self.eat_kw("as").is_some() {
                            self.expect_name()?;
                        }
                        if self.eat_op(",").is_none() {
                            break;
                        }
                    }
                    return Ok(AstNode::leaf(NodeKind::Import, start, self.prev_end()));
                }
                "from" => return self.import_from(),
                _ => {}
            }
        }
        self.expression_stmt()
    }

    fn dotted_name(&mut self) -> PResult<()> {
        self.expect_name()?;
        while self.eat_op(".").is_some() {
            self.expect_name()?;
        }
        Ok(())
    }

    fn import_from(&mut self) -> PResult<AstNode> {
        let start = self.bump().start;
        let mut dots = 0;
        while self.eat_op(".").is_some() || self.eat_op("...").is_some() {
            dots += 1;
        }
        if self.at_name() {
            self.dotted_name()?;
        } else if dots == 0 {
            return Err(self.error_here("expected module name"));
        }
        self.expect_kw("import")?;
        if self.eat_op("*").is_none() {
            let paren = self.eat_op("(").is_some();
            loop {
                self.expect_name()?;
                if self.eat_kw("as").is_some() {
                    self.expect_name()?;
                }
                if self.eat_op(",").is_none() {
                    break;
                }
                if paren && self.at_op(")") {
                    break;
                }
            }
            if paren {
                self.expect_op(")")?;
            }
        }
        Ok(AstNode::leaf(NodeKind::ImportFrom, start, self.prev_end()))
    }

    fn assignment_rhs(&mut self) -> PResult<Ex> {
        if self.at_kw("yield") {
            self.yield_expr()
        } else {
            self.star_expressions()
        }
    }

    fn expression_stmt(&mut self) -> PResult<AstNode> {
        let first = self.assignment_rhs()?;
        let start = first.start;
        if self.eat_op(":").is_some() {
            let mut children = vec![first.node, self.expression()?.node];
            if self.eat_op("=").is_some() {
                children.push(self.assignment_rhs()?.node);
            }
            return Ok(AstNode::new(NodeKind::AnnAssign, start, self.prev_end(), children));
        }
        let t = self.tok();
        if t.kind == SigKind::Op && AUGASSIGN.contains(&self.text_of(t)) {
            self.bump();
            let value = self.assignment_rhs()?;
            let end = value.end;
            return Ok(AstNode::new(
                NodeKind::AugAssign,
                start,
                end,
                vec![first.node, value.node],
            ));
        }
        if self.at_op("=") {
            let mut children = vec![first.node];
            let mut end = first.end;
            while self.eat_op("=").is_some() {
                let next = self.assignment_rhs()?;
                end = next.end;
                children.push(next.node);
            }
            return Ok(AstNode::new(NodeKind::Assign, start, end, children));
        }
        Ok(AstNode::new(NodeKind::Expr, start, first.end, vec![first.node]))
    }

    // ---- match patterns ------------------------------------------------

    fn patterns(&mut self) -> PResult<AstNode> {
        let start = self.tok().start;
        let first = self.maybe_star_pattern()?;
        if !self.at_op(",") {
            if first.kind == NodeKind::MatchStar {
                return Err(self.error_here("star pattern outside a sequence"));
            }
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",").is_some() {
            if self.at_op(":") || self.at_kw("if") {
                break;
            }
            items.push(self.maybe_star_pattern()?);
        }
        Ok(AstNode::new(NodeKind::MatchSequence, start, self.prev_end(), items))
    }

    fn maybe_star_pattern(&mut self) -> PResult<AstNode> {
        if let Some(star) = self.eat_op("*") {
            let name = self.expect_name()?;
            return Ok(AstNode::leaf(NodeKind::MatchStar, star.start, name.end));
        }
        self.pattern()
    }

    fn pattern(&mut self) -> PResult<AstNode> {
        let start = self.tok().start;
        let first = self.closed_pattern()?;
        let or = if self.at_op("|") {
            let mut alts = vec![first];
            while self.eat_op("|").is_some() {
                alts.push(self.closed_pattern()?);
            }
            AstNode::new(NodeKind::MatchOr, start, self.prev_end(), alts)
        } else {
            first
        };
        if self.eat_kw("as").is_some() {
            let name = self.expect_name()?;
            return Ok(AstNode::new(NodeKind::MatchAs, start, name.end, vec![or]));
        }
        Ok(or)
    }

    fn closed_pattern(&mut self) -> PResult<AstNode> {
        let t = self.tok();
        let start = t.start;
        match t.kind {
            SigKind::Number | SigKind::String => {
                let v = self.sum()?;
                Ok(AstNode::new(NodeKind::MatchValue, v.start, v.end, vec![v.node]))
            }
            SigKind::Op if self.at_op("-") => {
                let v = self.sum()?;
                Ok(AstNode::new(NodeKind::MatchValue, v.start, v.end, vec![v.node]))
            }
            SigKind::Name => {
                let text = self.text_of(t);
                if matches!(text, "None" | "True" | "False") {
                    self.bump();
                    return Ok(AstNode::leaf(NodeKind::MatchSingleton, start, t.end));
                }
                if is_keyword(text) {
                    return Err(self.error_here("invalid pattern"));
                }
                if !self.nth_is_op(1, ".") && !self.nth_is_op(1, "(") {
                    self.bump();
                    return Ok(AstNode::leaf(NodeKind::MatchAs, start, t.end));
                }
                let mut value = self.name_leaf()?;
                while self.eat_op(".").is_some() {
                    let attr = self.expect_name()?;
                    value = AstNode::new(NodeKind::Attribute, start, attr.end, vec![value]);
                }
                if self.eat_op("(").is_some() {
                    let mut children = vec![value];
                    loop {
                        if self.at_op(")") {
                            break;
                        }
                        if self.at_name() && self.nth_is_op(1, "=") {
                            let kw = self.bump();
                            self.bump();
                            let pat = self.pattern()?;
                            let _ = kw;
                            children.push(pat);
                        } else {
                            children.push(self.pattern()?);
                        }
                        if self.eat_op(",").is_none() {
                            break;
                        }
                    }
                    let close = self.expect_op(")")?;
                    return Ok(AstNode::new(NodeKind::MatchClass, start, close.end, children));
                }
                Ok(AstNode::new(NodeKind::MatchValue, start, self.prev_end(), vec![value]))
            }
            SigKind::Op if self.at_op("(") || self.at_op("[") => {
                let close_tok = if self.at_op("(") { ")" } else { "]" };
                self.bump();
                let mut items = Vec::new();
                let mut tuple_like = close_tok == "]";
                loop {
                    if self.at_op(close_tok) {
                        tuple_like = true;
                        break;
                    }
                    items.push(self.maybe_star_pattern()?);
                    if self.eat_op(",").is_none() {
                        break;
                    }
                    tuple_like = true;
                }
                let close = self.expect_op(close_tok)?;
                if !tuple_like && items.len() == 1 && items[0].kind != NodeKind::MatchStar {
                    // parenthesized group
                    return Ok(items.pop().unwrap());
                }
                Ok(AstNode::new(NodeKind::MatchSequence, start, close.end, items))
            }
            SigKind::Op if self.at_op("{") => {
                self.bump();
                let mut children = Vec::new();
                loop {
                    if self.at_op("}") {
                        break;
                    }
                    if self.eat_op("**").is_some() {
                        self.expect_name()?;
                    } else {
                        children.push(self.sum()?.node);
                        self.expect_op(":")?;
                        children.push(self.pattern()?);
                    }
                    if self.eat_op(",").is_none() {
                        break;
                    }
                }
                let close = self.expect_op("}")?;
                Ok(AstNode::new(NodeKind::MatchMapping, start, close.end, children))
            }
            _ => Err(self.error_here("invalid pattern")),
        }
    }

    fn name_leaf(&mut self) -> PResult<AstNode> {
        let t = self.expect_name()?;
        Ok(AstNode::leaf(NodeKind::Name, t.start, t.end))
    }

    // ---- expressions ---------------------------------------------------

    fn star_expressions(&mut self) -> PResult<Ex> {
        let first = self.star_expression()?;
        self.maybe_tuple(first, Self::star_expression)
    }

    fn star_named_expressions(&mut self) -> PResult<Ex> {
        let first = self.star_named_expression()?;
        self.maybe_tuple(first, Self::star_named_expression)
    }

    fn maybe_tuple(&mut self, first: Ex, item: fn(&mut Self) -> PResult<Ex>) -> PResult<Ex> {
        if !self.at_op(",") {
            return Ok(first);
        }
        let start = first.start;
        let mut items = vec![first.node];
        while self.eat_op(",").is_some() {
            if !self.at_expr_start() {
                break;
            }
            items.push(item(self)?.node);
        }
        Ok(Ex::plain(AstNode::new(NodeKind::Tuple, start, self.prev_end(), items)))
    }

    fn star_expression(&mut self) -> PResult<Ex> {
        if let Some(star) = self.eat_op("*") {
            let value = self.bitwise_or()?;
            return Ok(Ex::plain(AstNode::new(
                NodeKind::Starred,
                star.start,
                value.end,
                vec![value.node],
            )));
        }
        self.expression()
    }

    fn star_named_expression(&mut self) -> PResult<Ex> {
        if let Some(star) = self.eat_op("*") {
            let value = self.bitwise_or()?;
            return Ok(Ex::plain(AstNode::new(
                NodeKind::Starred,
                star.start,
                value.end,
                vec![value.node],
            )));
        }
        self.named_expression()
    }

    /// Assignment targets in `for` loops and comprehensions: stops before `in`.
    fn star_targets(&mut self) -> PResult<Ex> {
        let first = self.star_target()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let start = first.start;
        let mut items = vec![first.node];
        while self.eat_op(",").is_some() {
            if self.at_kw("in") || !self.at_expr_start() {
                break;
            }
            items.push(self.star_target()?.node);
        }
        Ok(Ex::plain(AstNode::new(NodeKind::Tuple, start, self.prev_end(), items)))
    }

    fn star_target(&mut self) -> PResult<Ex> {
        if let Some(star) = self.eat_op("*") {
            let value = self.bitwise_or()?;
            return Ok(Ex::plain(AstNode::new(
                NodeKind::Starred,
                star.start,
                value.end,
                vec![value.node],
            )));
        }
        self.bitwise_or()
    }

    fn named_expression(&mut self) -> PResult<Ex> {
        if self.at_name() && self.nth_is_op(1, ":=") {
            let target = self.name_leaf()?;
            self.bump();
            let value = self.expression()?;
            let start = target.span.start;
            return Ok(Ex::plain(AstNode::new(
                NodeKind::NamedExpr,
                start,
                value.end,
                vec![target, value.node],
            )));
        }
        self.expression()
    }

    fn expression(&mut self) -> PResult<Ex> {
        if self.at_kw("lambda") {
            return self.lambda();
        }
        let body = self.disjunction()?;
        if self.eat_kw("if").is_none() {
            return Ok(body);
        }
        let test = self.disjunction()?;
        self.expect_kw("else")?;
        let orelse = self.expression()?;
        Ok(Ex::plain(AstNode::new(
            NodeKind::IfExp,
            body.start,
            orelse.end,
            vec![body.node, test.node, orelse.node],
        )))
    }

    fn lambda(&mut self) -> PResult<Ex> {
        let start = self.bump().start;
        let mut children = Vec::new();
        self.params(&mut children, ":", false)?;
        self.expect_op(":")?;
        let body = self.expression()?;
        children.push(body.node);
        Ok(Ex::plain(AstNode::new(NodeKind::Lambda, start, body.end, children)))
    }

    fn bool_chain(&mut self, kw: &str, next: fn(&mut Self) -> PResult<Ex>) -> PResult<Ex> {
        let first = next(self)?;
        if !self.at_kw(kw) {
            return Ok(first);
        }
        let start = first.start;
        let mut end = first.end;
        let mut items = vec![first.node];
        while self.eat_kw(kw).is_some() {
            let e = next(self)?;
            end = e.end;
            items.push(e.node);
        }
        Ok(Ex::plain(AstNode::new(NodeKind::BoolOp, start, end, items)))
    }

    fn disjunction(&mut self) -> PResult<Ex> {
        self.bool_chain("or", Self::conjunction)
    }

    fn conjunction(&mut self) -> PResult<Ex> {
        self.bool_chain("and", Self::inversion)
    }

    fn inversion(&mut self) -> PResult<Ex> {
        if let Some(not) = self.eat_kw("not") {
            let e = self.inversion()?;
            return Ok(Ex::plain(AstNode::new(
                NodeKind::UnaryOp,
                not.start,
                e.end,
                vec![e.node],
            )));
        }
        self.comparison()
    }

    /// Length in tokens of the comparison operator at the cursor, if any.
    fn comp_op_len(&self) -> usize {
        let t = self.tok();
        let text = self.text_of(t);
        match t.kind {
            SigKind::Op if matches!(text, "==" | "!=" | "<" | ">" | "<=" | ">=") => 1,
            SigKind::Name => match text {
                "in" => 1,
                "not" if self.nth_is_kw(1, "in") => 2,
                "is" if self.nth_is_kw(1, "not") => 2,
                "is" => 1,
                _ => 0,
            },
            _ => 0,
        }
    }

    fn comparison(&mut self) -> PResult<Ex> {
        let left = self.bitwise_or()?;
        let mut n = self.comp_op_len();
        if n == 0 {
            return Ok(left);
        }
        let start = left.start;
        let mut end = left.end;
        let mut children = vec![left.node];
        while n > 0 {
            for _ in 0..n {
                self.bump();
            }
            let right = self.bitwise_or()?;
            end = right.end;
            children.push(right.node);
            n = self.comp_op_len();
        }
        Ok(Ex::plain(AstNode::new(NodeKind::Compare, start, end, children)))
    }

    fn binary(&mut self, ops: &[&str], next: fn(&mut Self) -> PResult<Ex>) -> PResult<Ex> {
        let mut left = next(self)?;
        loop {
            let t = self.tok();
            if t.kind != SigKind::Op || !ops.contains(&self.text_of(t)) {
                return Ok(left);
            }
            self.bump();
            let right = next(self)?;
            let start = left.start;
            let end = right.end;
            left = Ex::plain(AstNode::new(NodeKind::BinOp, start, end, vec![left.node, right.node]));
        }
    }

    fn bitwise_or(&mut self) -> PResult<Ex> {
        self.binary(&["|"], Self::bitwise_xor)
    }

    fn bitwise_xor(&mut self) -> PResult<Ex> {
        self.binary(&["^"], Self::bitwise_and)
    }

    fn bitwise_and(&mut self) -> PResult<Ex> {
        self.binary(&["&"], Self::shift)
    }

    fn shift(&mut self) -> PResult<Ex> {
        self.binary(&["<<", ">>"], Self::sum)
    }

    fn sum(&mut self) -> PResult<Ex> {
        self.binary(&["+", "-"], Self::term)
    }

    fn term(&mut self) -> PResult<Ex> {
        self.binary(&["*", "/", "//", "%", "@"], Self::factor)
    }

    fn factor(&mut self) -> PResult<Ex> {
        let t = self.tok();
        if t.kind == SigKind::Op && matches!(self.text_of(t), "+" | "-" | "~") {
            self.bump();
            let e = self.factor()?;
            return Ok(Ex::plain(AstNode::new(NodeKind::UnaryOp, t.start, e.end, vec![e.node])));
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Ex> {
        let base = self.await_primary()?;
        if self.eat_op("**").is_none() {
            return Ok(base);
        }
        let exp = self.factor()?;
        let start = base.start;
        let end = exp.end;
        Ok(Ex::plain(AstNode::new(
            NodeKind::BinOp,
            start,
            end,
            vec![base.node, exp.node],
        )))
    }

    fn await_primary(&mut self) -> PResult<Ex> {
        if let Some(aw) = self.eat_kw("await") {
            let e = self.primary()?;
            return Ok(Ex::plain(AstNode::new(NodeKind::Await, aw.start, e.end, vec![e.node])));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Ex> {
        let mut e = self.atom()?;
        loop {
            let start = e.start;
            if self.eat_op(".").is_some() {
                let attr = self.expect_name()?;
                e = Ex::plain(AstNode::new(NodeKind::Attribute, start, attr.end, vec![e.node]));
            } else if self.eat_op("(").is_some() {
                let mut children = vec![e.node];
                self.call_args(&mut children)?;
                let close = self.expect_op(")")?;
                e = Ex::plain(AstNode::new(NodeKind::Call, start, close.end, children));
            } else if self.eat_op("[").is_some() {
                let slice = self.slices()?;
                let close = self.expect_op("]")?;
                e = Ex::plain(AstNode::new(NodeKind::Subscript, start, close.end, vec![e.node, slice]));
            } else {
                return Ok(e);
            }
        }
    }

    fn call_args(&mut self, children: &mut Vec<AstNode>) -> PResult<()> {
        loop {
            if self.at_op(")") {
                break;
            }
            let t = self.tok();
            if self.eat_op("*").is_some() {
                let v = self.expression()?;
                children.push(AstNode::new(NodeKind::Starred, t.start, v.end, vec![v.node]));
            } else if self.eat_op("**").is_some() {
                let v = self.expression()?;
                children.push(AstNode::new(NodeKind::Keyword, t.start, v.end, vec![v.node]));
            } else if self.at_name() && self.nth_is_op(1, "=") {
                self.bump();
                self.bump();
                let v = self.expression()?;
                children.push(AstNode::new(NodeKind::Keyword, t.start, v.end, vec![v.node]));
            } else {
                let e = self.named_expression()?;
                if self.at_comp_for() {
                    let start = e.start;
                    let mut comp = vec![e.node];
                    self.comp_for(&mut comp)?;
                    children.push(AstNode::new(NodeKind::Comprehension, start, self.prev_end(), comp));
                } else {
                    children.push(e.node);
                }
            }
            if self.eat_op(",").is_none() {
                break;
            }
        }
        Ok(())
    }

    fn slices(&mut self) -> PResult<AstNode> {
        let first = self.slice_item()?;
        if !self.at_op(",") {
            return Ok(first.node);
        }
        let start = first.start;
        let mut items = vec![first.node];
        while self.eat_op(",").is_some() {
            if self.at_op("]") {
                break;
            }
            items.push(self.slice_item()?.node);
        }
        Ok(AstNode::new(NodeKind::Tuple, start, self.prev_end(), items))
    }

    fn slice_item(&mut self) -> PResult<Ex> {
        let start = self.tok().start;
        let mut children = Vec::new();
        if !self.at_op(":") {
            let lower = self.star_named_expression()?;
            if !self.at_op(":") {
                return Ok(lower);
            }
            children.push(lower.node);
        }
        self.bump();
        let bound_end = |p: &Self| p.at_op(":") || p.at_op("]") || p.at_op(",");
        if !bound_end(self) {
            children.push(self.expression()?.node);
        }
        if self.eat_op(":").is_some() && !self.at_op("]") && !self.at_op(",") {
            children.push(self.expression()?.node);
        }
        Ok(Ex::plain(AstNode::new(
            NodeKind::Slice,
            start,
            self.prev_end(),
            children,
        )))
    }

    fn at_comp_for(&self) -> bool {
        self.at_kw("for") || (self.at_kw("async") && self.nth_is_kw(1, "for"))
    }

    fn comp_for(&mut self, children: &mut Vec<AstNode>) -> PResult<()> {
        while self.at_comp_for() {
            self.eat_kw("async");
            self.expect_kw("for")?;
            children.push(self.star_targets()?.node);
            self.expect_kw("in")?;
            children.push(self.disjunction()?.node);
            while self.eat_kw("if").is_some() {
                children.push(self.disjunction()?.node);
            }
        }
        Ok(())
    }

    fn yield_expr(&mut self) -> PResult<Ex> {
        let start = self.bump().start;
        if self.eat_kw("from").is_some() {
            let e = self.expression()?;
            return Ok(Ex::plain(AstNode::new(NodeKind::YieldFrom, start, e.end, vec![e.node])));
        }
        if self.at_expr_start() {
            let e = self.star_expressions()?;
            return Ok(Ex::plain(AstNode::new(NodeKind::Yield, start, e.end, vec![e.node])));
        }
        Ok(Ex::plain(AstNode::leaf(NodeKind::Yield, start, self.prev_end())))
    }

    fn atom(&mut self) -> PResult<Ex> {
        let t = self.tok();
        match t.kind {
            SigKind::Name => {
                let text = self.text_of(t);
                let kind = match text {
                    "True" | "False" | "None" => NodeKind::Constant,
                    _ if is_keyword(text) => return Err(self.error_here("invalid syntax")),
                    _ => NodeKind::Name,
                };
                self.bump();
                Ok(Ex::plain(AstNode::leaf(kind, t.start, t.end)))
            }
            SigKind::Number => {
                self.bump();
                Ok(Ex::plain(AstNode::leaf(NodeKind::Constant, t.start, t.end)))
            }
            SigKind::String => {
                let text = self.text_of(t);
                let (prefix, _) = string_delimiters(text);
                let kind = if text[..prefix].contains(['b', 'B']) {
                    NodeKind::Bytes
                } else {
                    NodeKind::String
                };
                while self.at(SigKind::String) {
                    self.bump();
                }
                Ok(Ex::plain(AstNode::leaf(kind, t.start, self.prev_end())))
            }
            SigKind::Op => match self.text_of(t) {
                "..." => {
                    self.bump();
                    Ok(Ex::plain(AstNode::leaf(NodeKind::Constant, t.start, t.end)))
                }
                "(" => self.paren_atom(),
                "[" => self.list_atom(),
                "{" => self.brace_atom(),
                _ => Err(self.error_here("invalid syntax")),
            },
            _ => Err(self.error_here("invalid syntax")),
        }
    }

    fn paren_atom(&mut self) -> PResult<Ex> {
        let start = self.bump().start;
        if let Some(close) = self.eat_op(")") {
            return Ok(Ex::plain(AstNode::leaf(NodeKind::Tuple, start, close.end)));
        }
        if self.at_kw("yield") {
            let y = self.yield_expr()?;
            let close = self.expect_op(")")?;
            return Ok(Ex {
                node: y.node,
                start,
                end: close.end,
            });
        }
        let first = self.star_named_expression()?;
        if self.at_comp_for() {
            let mut children = vec![first.node];
            self.comp_for(&mut children)?;
            let close = self.expect_op(")")?;
            return Ok(Ex::plain(AstNode::new(
                NodeKind::Comprehension,
                start,
                close.end,
                children,
            )));
        }
        if self.at_op(",") {
            let mut items = vec![first.node];
            while self.eat_op(",").is_some() {
                if self.at_op(")") {
                    break;
                }
                items.push(self.star_named_expression()?.node);
            }
            let close = self.expect_op(")")?;
            return Ok(Ex::plain(AstNode::new(NodeKind::Tuple, start, close.end, items)));
        }
        let close = self.expect_op(")")?;
        Ok(Ex {
            node: first.node,
            start,
            end: close.end,
        })
    }

    fn list_atom(&mut self) -> PResult<Ex> {
        let start = self.bump().start;
        if let Some(close) = self.eat_op("]") {
            return Ok(Ex::plain(AstNode::leaf(NodeKind::List, start, close.end)));
        }
        let first = self.star_named_expression()?;
        let mut children = vec![first.node];
        if self.at_comp_for() {
            self.comp_for(&mut children)?;
            let close = self.expect_op("]")?;
            return Ok(Ex::plain(AstNode::new(
                NodeKind::Comprehension,
                start,
                close.end,
                children,
            )));
        }
        while self.eat_op(",").is_some() {
            if self.at_op("]") {
                break;
            }
            children.push(self.star_named_expression()?.node);
        }
        let close = self.expect_op("]")?;
        Ok(Ex::plain(AstNode::new(NodeKind::List, start, close.end, children)))
    }

    fn brace_atom(&mut self) -> PResult<Ex> {
        let start = self.bump().start;
        if let Some(close) = self.eat_op("}") {
            return Ok(Ex::plain(AstNode::leaf(NodeKind::Dict, start, close.end)));
        }
        let mut children = Vec::new();
        let is_dict = if self.eat_op("**").is_some() {
            children.push(self.bitwise_or()?.node);
            true
        } else {
            let first = self.star_named_expression()?;
            children.push(first.node);
            if self.eat_op(":").is_some() {
                children.push(self.expression()?.node);
                true
            } else {
                false
            }
        };
        if self.at_comp_for() {
            self.comp_for(&mut children)?;
            let close = self.expect_op("}")?;
            return Ok(Ex::plain(AstNode::new(
                NodeKind::Comprehension,
                start,
                close.end,
                children,
            )));
        }
        while self.eat_op(",").is_some() {
            if self.at_op("}") {
                break;
            }
            if is_dict {
                if self.eat_op("**").is_some() {
                    children.push(self.bitwise_or()?.node);
                } else {
                    children.push(self.expression()?.node);
                    self.expect_op(":")?;
                    children.push(self.expression()?.node);
                }
            } else {
                children.push(self.star_named_expression()?.node);
            }
        }
        let close = self.expect_op("}")?;
        let kind = if is_dict { NodeKind::Dict } else { NodeKind::Set };
        Ok(Ex::plain(AstNode::new(kind, start, close.end, children)))
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_source;
    use super::*;

    fn kinds(src: &str) -> Vec<(NodeKind, usize, usize)> {
        let parsed = parse_source(src).unwrap_or_else(|e| panic!("{e}\n{src}"));
        parsed
            .root
            .walk()
            .map(|n| (n.kind, n.span.start, n.span.end()))
            .collect()
    }

    fn has(src: &str, kind: NodeKind, text: &str) -> bool {
        kinds(src).iter().any(|&(k, s, e)| k == kind && &src[s..e] == text)
    }

    #[test]
    fn spans_agree_with_cpython_on_samples() {
        // Spans below were read off `ast.parse` (CPython 3.10).
        let src = "x = 1,\nt = (1, 2)\nf((a))\n";
        assert!(has(src, NodeKind::Tuple, "1,"));
        assert!(has(src, NodeKind::Tuple, "(1, 2)"));
        assert!(has(src, NodeKind::Call, "f((a))"));
        assert!(has(src, NodeKind::Name, "a"));
        let src = "for x in (y for y in z): pass\n";
        assert!(has(src, NodeKind::Comprehension, "(y for y in z)"));
        assert!(has(src, NodeKind::For, "for x in (y for y in z): pass"));
    }

    #[test]
    fn flattened_if_chain() {
        let src = "if a:\n    b\nelif c:\n    d\nelse:\n    e\n";
        let ks = kinds(src);
        assert_eq!(ks.iter().filter(|k| k.0 == NodeKind::If).count(), 1);
        assert!(has(src, NodeKind::If, src.trim_end()));
    }

    #[test]
    fn parenthesized_expression_keeps_inner_span() {
        let src = "y = (a + b) * c\n";
        assert!(has(src, NodeKind::BinOp, "a + b"));
        assert!(has(src, NodeKind::BinOp, "(a + b) * c"));
    }

    #[test]
    fn statements_of_every_shape_parse() {
        let src = r#"
import os.path as p, sys
from . import (a, b as c,)
from ..pkg.mod import *
@dec(1)
@other
async def f(a, /, b: int = 2, *args: str, c, d=3, **kw) -> "R":
    global g
    nonlocal h
    x: list[int] = [i ** 2 for i in range(10) if i % 2]
    y += yield
    z = await q
    del x[0], y.attr
    assert x, "msg"
    async with open(p) as fh, lock:
        pass
    with (open(a) as b, open(c) as d,):
        pass
    with (a, b):
        pass
    try:
        raise ValueError("x") from None
    except (KeyError, IndexError) as err:
        pass
    except Exception:
        pass
    else:
        pass
    finally:
        pass
    while not done: break
    else: continue
    for i, (j, *k) in enumerate(z): i; j
    return lambda x, *y, z=1, **w: x if y else z
class K(Base, metaclass=Meta):
    """doc"""
    attr = {**d, 'k': v}
    s = {1, *t}
    g = {k: v for k, v in items}
    e = a[1:2, ::3, x:]
    m = f(x for x in y)
    c = 1 < a <= b is not None not in z
    w = (n := 10)
    b = b"raw" rb'x'
"#;
        let parsed = parse_source(src).unwrap_or_else(|e| panic!("{e}"));
        assert_eq!(parsed.root.children.len(), 5);
    }

    #[test]
    fn match_statement_and_soft_keywords() {
        let src = r#"match command.split():
    case [action]:
        pass
    case ["go", direction] | ["move", direction] if direction:
        pass
    case Point(x=0, y=0) as origin:
        pass
    case {"k": v, **rest}:
        pass
    case -1 | 1+2j | None | Color.RED | _:
        pass
    case (a, *others):
        pass
match = 1
match(x)
case = match
"#;
        let parsed = parse_source(src).unwrap_or_else(|e| panic!("{e}"));
        let kinds: Vec<_> = parsed.root.children.iter().map(|c| c.kind).collect();
        assert_eq!(
            kinds,
            vec![NodeKind::Match, NodeKind::Assign, NodeKind::Expr, NodeKind::Assign]
        );
        assert!(parsed.root.walk().any(|n| n.kind == NodeKind::MatchClass));
        assert!(parsed.root.walk().any(|n| n.kind == NodeKind::MatchMapping));
        assert!(parsed.root.walk().any(|n| n.kind == NodeKind::MatchOr));
        assert!(parsed.root.walk().any(|n| n.kind == NodeKind::MatchStar));
    }

    #[test]
    fn syntax_errors() {
        for bad in [
            "def f(:\n",
            "x = = 1\n",
            "if x\n    pass\n",
            "print 'hi'\n",
            "try:\n    pass\n",
            "def f():\nreturn 1\n",
            "  x = 1\n",
            "else:\n    pass\n",
            "class:\n    pass\n",
            "f(a for a in b\n",
        ] {
            assert!(parse_source(bad).is_err(), "accepted: {bad:?}");
        }
    }

    #[test]
    fn children_nest_inside_parents() {
        let src = "def f(x=(1, 2), *, y: 'T' = {}):\n    return [a.b[c](d) for a in x if a]\n";
        let parsed = parse_source(src).unwrap();
        for node in parsed.root.walk() {
            let mut prev_end = node.span.start;
            for child in &node.children {
                assert!(node.span.contains(&child.span), "{node:?}");
                assert!(child.span.start >= prev_end);
                prev_end = child.span.end();
            }
        }
    }
}

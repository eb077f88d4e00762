//! Token decomposition, convention matching and the pruning label.
//!
//! The source is cut into *pieces*: lexer tokens, with string literals
//! further cut into prefix, opening quote, body and closing quote. A model
//! token that touches a piece named by some convention terminal is split
//! along piece boundaries; the token is pruned (label 0) when every one of
//! its sub-tokens is matched by a convention.
//!
//! A piece is matched by a convention when its owner (the innermost AST node
//! containing it) has the convention's node kind and the condition pattern
//! embeds, in order, into the owner's items: its child nodes and its own
//! non-whitespace pieces. Required placeholders cover at least one item.
//!
//! * Consequent role: the piece equals a consequent and the whole condition
//!   embeds before it. `[SP]`, `[BR]` and `[IND]` are anchored on the `:`
//!   that ends the condition: the space right after it, the first line
//!   break after it and the indentation opening the suite.
//! * Condition role ([`PruneMode::Eq4`] only): the piece equals a condition
//!   terminal of a convention that fires on a later consequent of the same
//!   node, with the rest of the pattern fitting in between.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::conventions::{
    ConventionCategory, ConventionSet, PatternElem, SyntaxConvention, TerminalKind, TerminalSpec,
};
use crate::pyparse::{
    node_at, parse_source, string_delimiters, AstNode, ByteSpan, LexKind, LexToken, NodeKind, ParseError,
    COMPARISON_OPERATORS,
};
use crate::tokenprob::TokenizedSample;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneMode {
    /// Prune sub-tokens matching either a condition or a consequent.
    #[default]
    Eq4,
    /// Prune consequent matches only.
    ConsequentsOnly,
}

impl fmt::Display for PruneMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PruneMode::Eq4 => "eq4",
            PruneMode::ConsequentsOnly => "consequents-only",
        })
    }
}

impl FromStr for PruneMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eq4" => Ok(PruneMode::Eq4),
            "consequents-only" => Ok(PruneMode::ConsequentsOnly),
            _ => Err(format!("unknown prune mode `{s}` (expected eq4 or consequents-only)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatchRole {
    Condition,
    Consequence,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubToken {
    pub parent_index: usize,
    pub ordinal: usize,
    pub text: String,
    pub span: ByteSpan,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConventionMatch {
    pub convention_id: String,
    pub category: ConventionCategory,
    pub role: MatchRole,
    pub span: ByteSpan,
    pub node_kind: NodeKind,
    pub node_span: ByteSpan,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLabeling {
    /// 0 = pruned, 1 = retained.
    pub labels: Vec<u8>,
    pub matches: Vec<Vec<ConventionMatch>>,
}

impl TokenLabeling {
    pub fn is_pruned(&self, index: usize) -> bool {
        self.labels[index] == 0
    }

    pub fn pruned_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 0).count()
    }

    pub fn retained_count(&self) -> usize {
        self.labels.len() - self.pruned_count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PieceKind {
    Lex(LexKind),
    StringPrefix,
    OpenQuote,
    StringBody,
    CloseQuote,
}

#[derive(Clone, Copy, Debug)]
struct Piece {
    kind: PieceKind,
    span: ByteSpan,
}

impl Piece {
    /// Whitespace and quote runs may be cut by a model token and still
    /// count as the terminal they spell.
    fn splittable(&self) -> bool {
        matches!(
            self.kind,
            PieceKind::Lex(LexKind::Space | LexKind::LineBreak | LexKind::Indent)
                | PieceKind::OpenQuote
                | PieceKind::CloseQuote
        )
    }

    fn is_trivia(&self) -> bool {
        matches!(self.kind, PieceKind::Lex(k) if k.is_trivia())
    }
}

fn pieces_of(lex: &[LexToken]) -> Vec<Piece> {
    let mut out = Vec::with_capacity(lex.len());
    for tok in lex {
        if tok.span.is_empty() {
            continue;
        }
        if tok.kind != LexKind::StringLit {
            out.push(Piece {
                kind: PieceKind::Lex(tok.kind),
                span: tok.span,
            });
            continue;
        }
        let (prefix, quote) = string_delimiters(&tok.text);
        let start = tok.span.start;
        let end = tok.span.end();
        let mut push = |kind, from: usize, to: usize| {
            if from < to {
                out.push(Piece {
                    kind,
                    span: ByteSpan::from_bounds(from, to),
                });
            }
        };
        push(PieceKind::StringPrefix, start, start + prefix);
        push(PieceKind::OpenQuote, start + prefix, start + prefix + quote);
        push(PieceKind::StringBody, start + prefix + quote, end - quote);
        push(PieceKind::CloseQuote, end - quote, end);
    }
    out
}

fn terminal_matches(t: &TerminalSpec, piece: &Piece, source: &str) -> bool {
    let text = piece.span.slice(source);
    match t.kind {
        TerminalKind::Literal => match t.text.as_str() {
            q @ ("'" | "\"") => piece.kind == PieceKind::OpenQuote && text.bytes().all(|b| b == q.as_bytes()[0]),
            lit => {
                matches!(
                    piece.kind,
                    PieceKind::Lex(LexKind::Punct | LexKind::Operator | LexKind::Identifier | LexKind::Keyword)
                ) && text == lit
            }
        },
        TerminalKind::Keyword => {
            matches!(piece.kind, PieceKind::Lex(LexKind::Keyword | LexKind::Identifier)) && text == t.text
        }
        TerminalKind::Space => piece.kind == PieceKind::Lex(LexKind::Space),
        TerminalKind::LineBreak => piece.kind == PieceKind::Lex(LexKind::LineBreak),
        TerminalKind::Indent => piece.kind == PieceKind::Lex(LexKind::Indent),
        TerminalKind::ComparisonOp => {
            matches!(piece.kind, PieceKind::Lex(LexKind::Operator | LexKind::Keyword))
                && COMPARISON_OPERATORS.contains(&text)
        }
        TerminalKind::ClosingQuote => piece.kind == PieceKind::CloseQuote,
    }
}

/// The source cut into pieces, plus which pieces some terminal of the set
/// names.
struct Pieces<'s> {
    source: &'s str,
    list: Vec<Piece>,
    in_alphabet: Vec<bool>,
}

impl<'s> Pieces<'s> {
    fn new(source: &'s str, lex: &[LexToken], set: &ConventionSet) -> Self {
        let list = pieces_of(lex);
        let terminals: Vec<&TerminalSpec> = set.conventions().iter().flat_map(|c| c.terminals()).collect();
        let in_alphabet = list
            .iter()
            .map(|p| terminals.iter().any(|t| terminal_matches(t, p, source)))
            .collect();
        Pieces {
            source,
            list,
            in_alphabet,
        }
    }

    /// Indices of the pieces overlapping `span`.
    fn overlapping(&self, span: ByteSpan) -> std::ops::Range<usize> {
        let first = self.list.partition_point(|p| p.span.end() <= span.start);
        let mut last = first;
        while last < self.list.len() && self.list[last].span.start < span.end() {
            last += 1;
        }
        first..last
    }

    /// Whether a model token with this span belongs to dom(Split).
    fn in_domain(&self, span: ByteSpan) -> bool {
        !span.is_empty()
            && self.overlapping(span).any(|i| {
                let p = &self.list[i];
                self.in_alphabet[i] && (span.contains(&p.span) || p.splittable())
            })
    }

    /// Sub-tokens of one model token, each with the piece it was cut from
    /// (`None` for an undivided token outside the domain).
    fn split_one(&self, index: usize, span: ByteSpan) -> Vec<(SubToken, Option<usize>)> {
        if !self.in_domain(span) {
            let sub = SubToken {
                parent_index: index,
                ordinal: 0,
                text: span.slice(self.source).to_string(),
                span,
            };
            return vec![(sub, None)];
        }
        self.overlapping(span)
            .enumerate()
            .map(|(ordinal, i)| {
                let piece_span = self.list[i].span.intersect(&span).expect("overlapping piece");
                let sub = SubToken {
                    parent_index: index,
                    ordinal,
                    text: piece_span.slice(self.source).to_string(),
                    span: piece_span,
                };
                (sub, Some(i))
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug)]
enum Item {
    Node,
    Piece(usize),
}

/// Where a convention fired inside one node: at a consequent item, or on
/// whitespace anchored at the condition's closing `:` item.
#[derive(Clone, Copy)]
enum Fire {
    Item(usize),
    Anchor(usize),
}

/// Per-piece convention matches for one parsed source.
pub struct MatchIndex<'s> {
    pieces: Pieces<'s>,
    piece_matches: Vec<Vec<ConventionMatch>>,
}

impl<'s> MatchIndex<'s> {
    pub fn build(source: &'s str, root: &AstNode, lex: &[LexToken], set: &ConventionSet, mode: PruneMode) -> Self {
        let pieces = Pieces::new(source, lex, set);
        let mut piece_matches = vec![Vec::new(); pieces.list.len()];
        Matcher::new(&pieces, root, set, mode).run(&mut piece_matches);
        MatchIndex { pieces, piece_matches }
    }

    pub fn split(&self, spans: &[ByteSpan]) -> Vec<SubToken> {
        spans
            .iter()
            .enumerate()
            .flat_map(|(i, &s)| self.pieces.split_one(i, s).into_iter().map(|(sub, _)| sub))
            .collect()
    }

    /// Matches for an arbitrary sub-token: those of the piece it coincides
    /// with, or is a fragment of when the piece is a whitespace or quote run.
    pub fn matches_for(&self, sub: &SubToken) -> Vec<ConventionMatch> {
        let range = self.pieces.overlapping(sub.span);
        if range.len() != 1 || sub.span.is_empty() {
            return Vec::new();
        }
        let i = range.start;
        let piece = &self.pieces.list[i];
        if !piece.span.contains(&sub.span) || (piece.span != sub.span && !piece.splittable()) {
            return Vec::new();
        }
        self.piece_matches[i]
            .iter()
            .map(|m| ConventionMatch {
                span: sub.span,
                ..m.clone()
            })
            .collect()
    }

    pub fn label(&self, spans: &[ByteSpan]) -> TokenLabeling {
        let mut labels = Vec::with_capacity(spans.len());
        let mut matches = Vec::with_capacity(spans.len());
        for (i, &span) in spans.iter().enumerate() {
            let subs = self.pieces.split_one(i, span);
            let mut found = Vec::new();
            let mut all = !span.is_empty();
            for (sub, piece) in &subs {
                let m = match piece {
                    Some(_) => self.matches_for(sub),
                    None => Vec::new(),
                };
                if m.is_empty() {
                    all = false;
                    break;
                }
                found.extend(m);
            }
            if all {
                labels.push(0);
                matches.push(found);
            } else {
                labels.push(1);
                matches.push(Vec::new());
            }
        }
        TokenLabeling { labels, matches }
    }
}

struct Matcher<'a, 's> {
    pieces: &'a Pieces<'s>,
    nodes: Vec<&'a AstNode>,
    /// Own pieces of each node, whitespace included.
    own: Vec<Vec<usize>>,
    items: Vec<Vec<Item>>,
    /// Position of each non-trivia piece among its owner's items.
    item_pos: Vec<usize>,
    owner: Vec<usize>,
    by_kind: HashMap<NodeKind, Vec<&'a SyntaxConvention>>,
    mode: PruneMode,
}

impl<'a, 's> Matcher<'a, 's> {
    fn new(pieces: &'a Pieces<'s>, root: &'a AstNode, set: &'a ConventionSet, mode: PruneMode) -> Self {
        let nodes: Vec<&AstNode> = root.walk().collect();
        let index: HashMap<*const AstNode, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, &n)| (n as *const AstNode, i))
            .collect();
        let owner: Vec<usize> = pieces
            .list
            .iter()
            .map(|p| {
                let n = node_at(root, p.span, None).unwrap_or(root);
                index[&(n as *const AstNode)]
            })
            .collect();
        let mut own = vec![Vec::new(); nodes.len()];
        for (p, &o) in owner.iter().enumerate() {
            own[o].push(p);
        }
        let mut item_pos = vec![usize::MAX; pieces.list.len()];
        let items = nodes
            .iter()
            .enumerate()
            .map(|(n, node)| {
                let mut own_iter = own[n].iter().filter(|&&p| !pieces.list[p].is_trivia()).peekable();
                let mut children = node.children.iter().peekable();
                let mut items = Vec::new();
                loop {
                    let next_piece = own_iter.peek().map(|&&p| pieces.list[p].span.start);
                    let next_child = children.peek().map(|c| c.span.start);
                    match (next_piece, next_child) {
                        (Some(ps), Some(cs)) if ps < cs => {
                            let p = *own_iter.next().unwrap();
                            item_pos[p] = items.len();
                            items.push(Item::Piece(p));
                        }
                        (Some(_), None) => {
                            let p = *own_iter.next().unwrap();
                            item_pos[p] = items.len();
                            items.push(Item::Piece(p));
                        }
                        (_, Some(_)) => {
                            children.next();
                            items.push(Item::Node);
                        }
                        (None, None) => break,
                    }
                }
                items
            })
            .collect();
        let mut by_kind: HashMap<NodeKind, Vec<&SyntaxConvention>> = HashMap::new();
        for conv in set.conventions() {
            by_kind.entry(conv.node_kind).or_default().push(conv);
        }
        Matcher {
            pieces,
            nodes,
            own,
            items,
            item_pos,
            owner,
            by_kind,
            mode,
        }
    }

    fn item_matches(&self, items: &[Item], j: usize, t: &TerminalSpec) -> bool {
        match items[j] {
            Item::Piece(p) => terminal_matches(t, &self.pieces.list[p], self.pieces.source),
            Item::Node => false,
        }
    }

    /// Whether `elems` embeds into `items[lo..hi]`, with every required
    /// placeholder covering at least one item. Earliest placement of each
    /// terminal is optimal because the constraints are lower bounds on gaps.
    fn fits(&self, elems: &[PatternElem], items: &[Item], lo: usize, hi: usize) -> bool {
        let mut pos = lo;
        let mut gap = 0;
        for elem in elems {
            match elem {
                PatternElem::Nonterminal { optional, .. } => {
                    if !optional {
                        gap += 1;
                    }
                }
                PatternElem::Terminal(t) => {
                    let Some(j) = (pos + gap..hi).find(|&j| self.item_matches(items, j, t)) else {
                        return false;
                    };
                    pos = j + 1;
                    gap = 0;
                }
            }
        }
        hi >= pos + gap
    }

    /// The `:` piece a whitespace piece hangs from, if any.
    fn anchor(&self, w: usize, kind: TerminalKind) -> Option<usize> {
        let list = &self.pieces.list;
        let is = |i: usize, k: LexKind| list[i].kind == PieceKind::Lex(k);
        let mut j = w.checked_sub(1)?;
        match kind {
            TerminalKind::Space => {}
            TerminalKind::LineBreak => {
                while is(j, LexKind::Space) || is(j, LexKind::Comment) {
                    j = j.checked_sub(1)?;
                }
            }
            TerminalKind::Indent => {
                let mut saw_break = false;
                while is(j, LexKind::Space) || is(j, LexKind::Comment) || is(j, LexKind::LineBreak) {
                    saw_break |= is(j, LexKind::LineBreak);
                    j = j.checked_sub(1)?;
                }
                if !saw_break {
                    return None;
                }
            }
            _ => return None,
        }
        let p = &list[j];
        (p.kind == PieceKind::Lex(LexKind::Punct) && p.span.slice(self.pieces.source) == ":").then_some(j)
    }

    fn run(&self, out: &mut [Vec<ConventionMatch>]) {
        for (n, node) in self.nodes.iter().enumerate() {
            let Some(convs) = self.by_kind.get(&node.kind) else {
                continue;
            };
            if self.own[n].is_empty() {
                continue;
            }
            for conv in convs {
                self.run_convention(n, node, conv, out);
            }
        }
    }

    fn record(
        &self,
        out: &mut [Vec<ConventionMatch>],
        p: usize,
        node: &AstNode,
        conv: &SyntaxConvention,
        role: MatchRole,
    ) {
        let list = &mut out[p];
        if list.iter().any(|m| m.convention_id == conv.id && m.role == role) {
            return;
        }
        list.push(ConventionMatch {
            convention_id: conv.id.clone(),
            category: conv.category,
            role,
            span: self.pieces.list[p].span,
            node_kind: node.kind,
            node_span: node.span,
        });
    }

    fn run_convention(&self, n: usize, node: &AstNode, conv: &SyntaxConvention, out: &mut [Vec<ConventionMatch>]) {
        let items = &self.items[n];
        let cond = &conv.condition;
        let mut fires = Vec::new();

        for (q, item) in items.iter().enumerate() {
            let Item::Piece(p) = *item else { continue };
            let piece = &self.pieces.list[p];
            let hit = conv
                .consequents
                .iter()
                .any(|t| !t.is_whitespace() && terminal_matches(t, piece, self.pieces.source));
            if hit && self.fits(cond, items, 0, q) {
                self.record(out, p, node, conv, MatchRole::Consequence);
                fires.push(Fire::Item(q));
            }
        }

        let ws: Vec<&TerminalSpec> = conv.consequents.iter().filter(|t| t.is_whitespace()).collect();
        if !ws.is_empty() {
            let (last, head) = cond.split_last().expect("condition is non-empty");
            for &w in &self.own[n] {
                let piece = &self.pieces.list[w];
                for t in &ws {
                    if !terminal_matches(t, piece, self.pieces.source) {
                        continue;
                    }
                    let Some(a) = self.anchor(w, t.kind) else { continue };
                    if self.owner[a] != n {
                        continue;
                    }
                    let pos = self.item_pos[a];
                    let closes = last.terminal().is_some_and(|lt| self.item_matches(items, pos, lt));
                    if closes && self.fits(head, items, 0, pos) {
                        self.record(out, w, node, conv, MatchRole::Consequence);
                        fires.push(Fire::Anchor(pos));
                    }
                }
            }
        }

        if self.mode != PruneMode::Eq4 || fires.is_empty() {
            return;
        }
        let m = cond.len();
        for (q, item) in items.iter().enumerate() {
            let Item::Piece(p) = *item else { continue };
            let fired = cond.iter().enumerate().any(|(k, elem)| {
                let Some(t) = elem.terminal() else { return false };
                if !self.item_matches(items, q, t) || !self.fits(&cond[..k], items, 0, q) {
                    return false;
                }
                fires.iter().any(|f| match *f {
                    Fire::Item(r) => r > q && self.fits(&cond[k + 1..], items, q + 1, r),
                    Fire::Anchor(a) if k == m - 1 => a == q,
                    Fire::Anchor(a) => a > q && self.fits(&cond[k + 1..m - 1], items, q + 1, a),
                })
            });
            if fired {
                self.record(out, p, node, conv, MatchRole::Condition);
            }
        }
    }
}

/// Sub-token decomposition of a sample's model tokens.
pub fn split_tokens(sample: &TokenizedSample, lex: &[LexToken], set: &ConventionSet) -> Vec<SubToken> {
    let pieces = Pieces::new(&sample.source, lex, set);
    sample
        .tokens
        .iter()
        .flat_map(|t| pieces.split_one(t.index, t.span).into_iter().map(|(sub, _)| sub))
        .collect()
}

/// Every convention match for one sub-token.
pub fn match_subtoken(
    sub: &SubToken,
    source: &str,
    root: &AstNode,
    lex: &[LexToken],
    set: &ConventionSet,
    mode: PruneMode,
) -> Vec<ConventionMatch> {
    MatchIndex::build(source, root, lex, set, mode).matches_for(sub)
}

/// Labels for model tokens given by their byte spans into `source`.
pub fn label_tokens(
    source: &str,
    spans: &[ByteSpan],
    root: &AstNode,
    lex: &[LexToken],
    set: &ConventionSet,
    mode: PruneMode,
) -> TokenLabeling {
    MatchIndex::build(source, root, lex, set, mode).label(spans)
}

/// Parse `source` and label the given token spans.
pub fn label_source(
    source: &str,
    spans: &[ByteSpan],
    set: &ConventionSet,
    mode: PruneMode,
) -> Result<TokenLabeling, ParseError> {
    let parsed = parse_source(source)?;
    Ok(label_tokens(source, spans, &parsed.root, &parsed.tokens, set, mode))
}

/// One span per non-empty lexer token, for labeling without a model
/// tokenizer.
pub fn lexeme_spans(lex: &[LexToken]) -> Vec<ByteSpan> {
    lex.iter().filter(|t| !t.span.is_empty()).map(|t| t.span).collect()
}

//! The syntax-convention database.
//!
//! A convention pairs a condition (a pattern of terminals and nonterminal
//! placeholders) with the consequent terminals that the grammar forces, or
//! nearly forces, once the condition has been seen inside a node of a given
//! kind. The shipped set is embedded in the binary and can be replaced with
//! any file in the same format.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::pyparse::{is_keyword, is_operator_lexeme, NodeKind};

const SHIPPED: &str = include_str!("../data/conventions.txt");

/// Identifiers that may appear as consequents even though the language does
/// not reserve them.
const CONVENTIONAL_NAMES: &[&str] = &["self"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConventionCategory {
    DataModel,
    Expression,
    SingleStatement,
    CompoundStatement,
}

impl ConventionCategory {
    pub const ALL: [ConventionCategory; 4] = [
        ConventionCategory::DataModel,
        ConventionCategory::Expression,
        ConventionCategory::SingleStatement,
        ConventionCategory::CompoundStatement,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConventionCategory::DataModel => "DataModel",
            ConventionCategory::Expression => "Expression",
            ConventionCategory::SingleStatement => "SingleStatement",
            ConventionCategory::CompoundStatement => "CompoundStatement",
        }
    }

    /// Short tag used on the command line and in ablation labels.
    pub fn abbrev(self) -> &'static str {
        match self {
            ConventionCategory::DataModel => "dm",
            ConventionCategory::Expression => "expr",
            ConventionCategory::SingleStatement => "sstmt",
            ConventionCategory::CompoundStatement => "cstmt",
        }
    }
}

impl fmt::Display for ConventionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConventionCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConventionCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s || c.abbrev() == s)
            .ok_or_else(|| format!("unknown convention category `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminalKind {
    Literal,
    Keyword,
    Space,
    LineBreak,
    Indent,
    ComparisonOp,
    ClosingQuote,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TerminalSpec {
    pub kind: TerminalKind,
    /// Lexeme for `Literal` and `Keyword`, empty otherwise.
    pub text: String,
}

impl TerminalSpec {
    fn bare(kind: TerminalKind) -> Self {
        TerminalSpec {
            kind,
            text: String::new(),
        }
    }

    /// A bare word from a convention file: keyword if Python reserves it
    /// (soft keywords included), literal otherwise.
    pub fn word(text: &str) -> Self {
        let kind = if is_keyword(text) || matches!(text, "match" | "case") {
            TerminalKind::Keyword
        } else {
            TerminalKind::Literal
        };
        TerminalSpec {
            kind,
            text: text.to_string(),
        }
    }

    pub fn is_whitespace(&self) -> bool {
        matches!(
            self.kind,
            TerminalKind::Space | TerminalKind::LineBreak | TerminalKind::Indent
        )
    }

    fn parse(tok: &str) -> Result<Self, String> {
        Ok(match tok {
            "[SP]" => Self::bare(TerminalKind::Space),
            "[BR]" => Self::bare(TerminalKind::LineBreak),
            "[IND]" => Self::bare(TerminalKind::Indent),
            "[COMP_OP]" => Self::bare(TerminalKind::ComparisonOp),
            "[CLOSE_QUOTE]" => Self::bare(TerminalKind::ClosingQuote),
            _ if tok.starts_with('<') => return Err(format!("nonterminal `{tok}` is not allowed here")),
            _ if tok.starts_with('[') && tok.len() > 1 && tok.ends_with(']') => {
                return Err(format!("unknown terminal class `{tok}`"))
            }
            _ => Self::word(tok),
        })
    }

    /// Consequents are limited to keywords, single operator or delimiter
    /// lexemes, the terminal classes and a short list of conventional names.
    fn is_allowed_consequent(&self) -> bool {
        match self.kind {
            TerminalKind::Keyword => true,
            TerminalKind::Literal => is_operator_lexeme(&self.text) || CONVENTIONAL_NAMES.contains(&self.text.as_str()),
            _ => true,
        }
    }
}

impl fmt::Display for TerminalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            TerminalKind::Literal | TerminalKind::Keyword => f.write_str(&self.text),
            TerminalKind::Space => f.write_str("[SP]"),
            TerminalKind::LineBreak => f.write_str("[BR]"),
            TerminalKind::Indent => f.write_str("[IND]"),
            TerminalKind::ComparisonOp => f.write_str("[COMP_OP]"),
            TerminalKind::ClosingQuote => f.write_str("[CLOSE_QUOTE]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PatternElem {
    Terminal(TerminalSpec),
    /// Placeholder for a run of syntax. Required placeholders cover at least
    /// one child node or token; optional ones may be empty.
    Nonterminal {
        name: String,
        optional: bool,
    },
}

impl PatternElem {
    fn parse(tok: &str) -> Result<Self, String> {
        if let Some(inner) = tok.strip_prefix('<') {
            let (inner, optional) = match inner.strip_suffix('?') {
                Some(rest) => (rest, true),
                None => (inner, false),
            };
            let name = inner
                .strip_suffix('>')
                .filter(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'))
                .ok_or_else(|| format!("malformed nonterminal `{tok}`"))?;
            return Ok(PatternElem::Nonterminal {
                name: name.to_string(),
                optional,
            });
        }
        TerminalSpec::parse(tok).map(PatternElem::Terminal)
    }

    pub fn terminal(&self) -> Option<&TerminalSpec> {
        match self {
            PatternElem::Terminal(t) => Some(t),
            PatternElem::Nonterminal { .. } => None,
        }
    }
}

impl fmt::Display for PatternElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternElem::Terminal(t) => t.fmt(f),
            PatternElem::Nonterminal { name, optional } => {
                write!(f, "<{name}>{}", if *optional { "?" } else { "" })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxConvention {
    pub id: String,
    pub category: ConventionCategory,
    pub node_kind: NodeKind,
    pub condition: Vec<PatternElem>,
    pub consequents: Vec<TerminalSpec>,
}

impl SyntaxConvention {
    /// Every terminal named by the convention, condition first.
    pub fn terminals(&self) -> impl Iterator<Item = &TerminalSpec> {
        self.condition
            .iter()
            .filter_map(PatternElem::terminal)
            .chain(self.consequents.iter())
    }

    fn to_record(&self) -> String {
        let join = |items: Vec<String>| items.join(" ");
        format!(
            "{} | {} | {} | {} | {}",
            self.id,
            self.category,
            self.node_kind,
            join(self.condition.iter().map(ToString::to_string).collect()),
            join(self.consequents.iter().map(ToString::to_string).collect()),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConventionError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}: duplicate convention id `{id}`")]
    DuplicateId { id: String, line: usize },
    #[error("line {line}: unknown node kind `{kind}`")]
    UnknownNodeKind { kind: String, line: usize },
    #[error("invalid convention set: {0}")]
    Validation(String),
}

/// A validated, immutable set of conventions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConventionSet {
    version: String,
    conventions: Vec<SyntaxConvention>,
}

impl ConventionSet {
    /// The set compiled into the library.
    pub fn shipped() -> ConventionSet {
        load_conventions(SHIPPED.as_bytes()).expect("embedded convention file is valid")
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn conventions(&self) -> &[SyntaxConvention] {
        &self.conventions
    }

    pub fn len(&self) -> usize {
        self.conventions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conventions.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&SyntaxConvention> {
        self.conventions.iter().find(|c| c.id == id)
    }

    /// Number of conventions per category; all four categories are present
    /// as keys.
    pub fn category_counts(&self) -> BTreeMap<ConventionCategory, usize> {
        let mut counts: BTreeMap<_, _> = ConventionCategory::ALL.iter().map(|&c| (c, 0)).collect();
        for conv in &self.conventions {
            *counts.get_mut(&conv.category).unwrap() += 1;
        }
        counts
    }

    /// Serialize in the convention file format. Loading the output yields an
    /// equal set.
    pub fn to_text(&self) -> String {
        let mut out = format!("#! version: {}\n#! count: {}\n", self.version, self.len());
        for conv in &self.conventions {
            out.push_str(&conv.to_record());
            out.push('\n');
        }
        out
    }

    /// Copy of the set without the conventions of one category.
    pub fn without(&self, removed: ConventionCategory) -> ConventionSet {
        let tag = format!("+without-{}", removed.abbrev());
        let version = if self.version.contains(&tag) {
            self.version.clone()
        } else {
            format!("{}{tag}", self.version)
        };
        ConventionSet {
            version,
            conventions: self
                .conventions
                .iter()
                .filter(|c| c.category != removed)
                .cloned()
                .collect(),
        }
    }
}

/// Parse and validate a convention file.
pub fn load_conventions(source: &[u8]) -> Result<ConventionSet, ConventionError> {
    let text = std::str::from_utf8(source).map_err(|e| ConventionError::Format {
        line: source[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1,
        message: "file is not valid UTF-8".into(),
    })?;

    let mut version = None;
    let mut declared_count = None;
    let mut conventions: Vec<SyntaxConvention> = Vec::new();
    let mut seen = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        let format_err = |message: String| ConventionError::Format { line, message };
        if let Some(meta) = trimmed.strip_prefix("#!") {
            let (key, value) = meta
                .split_once(':')
                .ok_or_else(|| format_err(format!("malformed metadata `{trimmed}`")))?;
            let value = value.trim();
            match key.trim() {
                "version" => version = Some(value.to_string()),
                "count" => {
                    declared_count = Some(
                        value
                            .parse::<usize>()
                            .map_err(|_| format_err(format!("count `{value}` is not a number")))?,
                    )
                }
                other => return Err(format_err(format!("unknown metadata key `{other}`"))),
            }
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }

        let fields: Vec<&str> = trimmed.split('|').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(format_err(format!(
                "expected 5 `|`-separated fields, found {}",
                fields.len()
            )));
        }
        let id = fields[0];
        if id.is_empty() || id.contains(char::is_whitespace) {
            return Err(format_err(format!("invalid id `{id}`")));
        }
        let category: ConventionCategory = fields[1].parse().map_err(format_err)?;
        let node_kind: NodeKind = fields[2].parse().map_err(|_| ConventionError::UnknownNodeKind {
            kind: fields[2].to_string(),
            line,
        })?;
        let condition = fields[3]
            .split_whitespace()
            .map(PatternElem::parse)
            .collect::<Result<Vec<_>, _>>()
            .map_err(format_err)?;
        if condition.is_empty() {
            return Err(format_err("condition is empty".into()));
        }
        let consequents = fields[4]
            .split_whitespace()
            .map(TerminalSpec::parse)
            .collect::<Result<Vec<_>, _>>()
            .map_err(format_err)?;
        if consequents.is_empty() {
            return Err(format_err("consequent list is empty".into()));
        }
        if let Some(bad) = consequents.iter().find(|t| !t.is_allowed_consequent()) {
            return Err(format_err(format!("`{bad}` is not an allowed consequent terminal")));
        }
        if consequents.iter().any(TerminalSpec::is_whitespace)
            && condition
                .last()
                .and_then(PatternElem::terminal)
                .map(|t| t.text.as_str())
                != Some(":")
        {
            return Err(format_err(
                "whitespace consequents need a condition ending in `:`".into(),
            ));
        }
        if !seen.insert(id.to_string()) {
            return Err(ConventionError::DuplicateId {
                id: id.to_string(),
                line,
            });
        }
        conventions.push(SyntaxConvention {
            id: id.to_string(),
            category,
            node_kind,
            condition,
            consequents,
        });
    }

    let set = ConventionSet {
        version: version.unwrap_or_else(|| "0".to_string()),
        conventions,
    };
    if let Some(n) = declared_count {
        if n != set.len() {
            return Err(ConventionError::Validation(format!(
                "header declares {n} conventions, file has {}",
                set.len()
            )));
        }
    }
    let empty: Vec<_> = set
        .category_counts()
        .into_iter()
        .filter(|&(_, n)| n == 0)
        .map(|(c, _)| c.as_str())
        .collect();
    if !empty.is_empty() {
        return Err(ConventionError::Validation(format!(
            "no conventions in categor{} {}",
            if empty.len() == 1 { "y" } else { "ies" },
            empty.join(", ")
        )));
    }
    Ok(set)
}

/// The set minus one category, as used by the ablation runs.
pub fn filter_category(set: &ConventionSet, removed: ConventionCategory) -> ConventionSet {
    set.without(removed)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = "\
#! version: t
a | DataModel | List | [ | ]
b | Expression | Call | <identifier> ( | )
c | SingleStatement | Import | import <module> | as
d | CompoundStatement | If | if <test> : | [SP] [BR] [IND]
";

    #[test]
    fn shipped_set_has_four_categories() {
        let set = ConventionSet::shipped();
        assert_eq!(set.len(), 49);
        let counts = set.category_counts();
        assert_eq!(counts[&ConventionCategory::DataModel], 10);
        assert_eq!(counts[&ConventionCategory::Expression], 6);
        assert_eq!(counts[&ConventionCategory::SingleStatement], 2);
        assert_eq!(counts[&ConventionCategory::CompoundStatement], 31);
    }

    #[test]
    fn empty_file_fails_validation() {
        assert!(matches!(load_conventions(b""), Err(ConventionError::Validation(_))));
    }

    #[test]
    fn duplicate_id() {
        let text = format!("{MINI}a | DataModel | Dict | {{ | }}\n");
        let err = load_conventions(text.as_bytes()).unwrap_err();
        assert_eq!(
            err,
            ConventionError::DuplicateId {
                id: "a".into(),
                line: 6
            }
        );
    }

    #[test]
    fn unknown_node_kind() {
        let text = MINI.replace("| List |", "| Listing |");
        assert!(matches!(
            load_conventions(text.as_bytes()),
            Err(ConventionError::UnknownNodeKind { line: 2, .. })
        ));
    }

    #[test]
    fn format_errors_carry_line_numbers() {
        for (bad, line) in [
            ("x | DataModel | List | [\n", 6),
            ("x | Nope | List | [ | ]\n", 6),
            ("x | DataModel | List | [ | \n", 6),
            ("x | DataModel | List | [ | <expr>\n", 6),
            ("x | DataModel | List | [ | foo\n", 6),
            ("x | DataModel | List |  | ]\n", 6),
            ("x | DataModel | List | [ | [TAB]\n", 6),
            ("x | DataModel | List | [ | [SP]\n", 6),
        ] {
            let text = format!("{MINI}{bad}");
            match load_conventions(text.as_bytes()) {
                Err(ConventionError::Format { line: l, .. }) => assert_eq!(l, line, "{bad}"),
                other => panic!("{bad}: {other:?}"),
            }
        }
    }

    #[test]
    fn declared_count_must_match() {
        let text = format!("#! count: 5\n{MINI}");
        assert!(matches!(
            load_conventions(text.as_bytes()),
            Err(ConventionError::Validation(_))
        ));
    }

    #[test]
    fn words_are_classified() {
        let set = load_conventions(MINI.as_bytes()).unwrap();
        let c = set.get("c").unwrap();
        assert_eq!(c.consequents[0].kind, TerminalKind::Keyword);
        let b = set.get("b").unwrap();
        assert_eq!(
            b.condition[1],
            PatternElem::Terminal(TerminalSpec {
                kind: TerminalKind::Literal,
                text: "(".into()
            })
        );
        let shipped = ConventionSet::shipped();
        let def_self = shipped.get("cstmt.def.self").unwrap();
        assert_eq!(def_self.consequents[0].kind, TerminalKind::Literal);
        let match_suite = shipped.get("cstmt.match.suite").unwrap();
        assert_eq!(match_suite.consequents[3].kind, TerminalKind::Keyword);
    }

    #[test]
    fn round_trip() {
        let set = ConventionSet::shipped();
        let again = load_conventions(set.to_text().as_bytes()).unwrap();
        assert_eq!(set, again);
    }

    #[test]
    fn filter_removes_one_category_and_is_idempotent() {
        let set = ConventionSet::shipped();
        let no_c = filter_category(&set, ConventionCategory::CompoundStatement);
        let compound_kinds = [
            NodeKind::If,
            NodeKind::For,
            NodeKind::Try,
            NodeKind::With,
            NodeKind::ClassDef,
            NodeKind::FunctionDef,
            NodeKind::While,
            NodeKind::Match,
        ];
        assert!(no_c
            .conventions()
            .iter()
            .all(|c| !compound_kinds.contains(&c.node_kind)));
        let once = filter_category(&set, ConventionCategory::SingleStatement);
        let twice = filter_category(&once, ConventionCategory::SingleStatement);
        assert_eq!(once, twice);
        assert_eq!(once.version(), "1+without-sstmt");
    }

    #[test]
    fn category_names_and_abbreviations_parse() {
        for c in ConventionCategory::ALL {
            assert_eq!(c.as_str().parse::<ConventionCategory>().unwrap(), c);
            assert_eq!(c.abbrev().parse::<ConventionCategory>().unwrap(), c);
        }
    }
}

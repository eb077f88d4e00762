//! Hand-derived labels for lexer-token segmentations under the default
//! prune mode. Tokens are separated by `|`; a trailing `*` marks a pruned
//! token.

pub const CASES: &[(&str, &str)] = &[
    (
        "def add(self, row)",
        "def*| |add|(*|self*|,*| |row|)*|:*|\n*|    *|return| |row|\n",
    ),
    (
        "for loop over enumerate",
        "for*| |i|,| |x| |in*| |enumerate|(*|xs|)*|:*|\n*|    *|total| |+=| |x|\n",
    ),
    (
        "try/except as",
        "try*|:*|\n*|    *|v| |=| |int|(*|s|)*|\n|except*| |ValueError| |as*| |e|:*|\n*|    *|raise|\n",
    ),
    ("dict literal", "d| |=| |{*|\"a\"|:| |1|,| |'b'|:| |[*|2|,| |3|]*|}*|\n"),
    ("chained comparison", "ok| |=| |0| |<=*| |i| |<*| |n|\n"),
    (
        "if/elif/else",
        "if*| |x|:*|\n*|    *|y| |=| |x|\n|elif*| |z|:*|\n*|    *|pass|\n|else*|:*|\n*|    *|y| |=| |0|\n",
    ),
    (
        "with as and method call",
        "with*| |open|(*|p|)*| |as*| |f|:*|\n*|    *|data| |=| |f|.*|read|(*|)*|\n",
    ),
    (
        "class with bases",
        "class*| |Row|(*|Base|,*| |Mixin|)*|:*|\n*|    *|x| |=| |1|\n",
    ),
    (
        "lambda, comprehension, conditional",
        "f| |=| |lambda*| |a|:*| |[|v| |for*| |v| |in*| |a| |if| |v|]*| |if*| |a| |else*| |None|\n",
    ),
    (
        "imports",
        "import*| |numpy| |as*| |np|\n|from*| |os| |import*| |path|\n",
    ),
    (
        "while/else",
        "while*| |n| |>| |0|:*|\n*|    *|n| |-=| |1|\n|else*|:*|\n*|    *|s| |=| |'done'|\n",
    ),
    ("match", "match*| |cmd|:*|\n*|    *|case*| |1|:*|\n*|        *|pass|\n"),
];

/// Source text and `(token, pruned)` pairs of one case.
pub fn decode(encoded: &str) -> (String, Vec<(String, bool)>) {
    let tokens: Vec<(String, bool)> = encoded
        .split('|')
        .filter(|t| !t.is_empty())
        .map(|t| match t.strip_suffix('*') {
            Some(text) => (text.to_string(), true),
            None => (t.to_string(), false),
        })
        .collect();
    let source = tokens.iter().map(|(t, _)| t.as_str()).collect();
    (source, tokens)
}

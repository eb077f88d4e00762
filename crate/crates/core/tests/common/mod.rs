#![allow(dead_code)]

pub mod oracle;
pub mod stub;
pub mod synthetic;

use std::path::{Path, PathBuf};

use rand::Rng;
use synprune_core::tokenprob::TokenizedSample;

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/corpus")
}

/// `(file name, source)` for every corpus file, sorted by name.
pub fn load_corpus() -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "py"))
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read_to_string(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

/// Cut `source` into BPE-like pieces: runs of 1 to 6 characters, with
/// whitespace runs often kept whole.
pub fn segment(source: &str, rng: &mut impl Rng) -> Vec<String> {
    let chars: Vec<char> = source.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let mut len = rng.gen_range(1..=6).min(chars.len() - i);
        if chars[i].is_whitespace() && rng.gen_bool(0.5) {
            len = chars[i..].iter().take_while(|c| c.is_whitespace()).count();
        }
        out.push(chars[i..i + len].iter().collect());
        i += len;
    }
    out
}

/// Cut `source` roughly the way subword tokenizers do: mostly along lexer
/// tokens, sometimes merging short neighbours (`):`) and splitting long
/// words.
pub fn bpe_segment(source: &str, rng: &mut impl Rng) -> Vec<String> {
    let lex = synprune_core::pyparse::tokenize(source).expect("source lexes");
    let mut out: Vec<String> = Vec::new();
    let mut merge_next = false;
    for t in lex.iter().filter(|t| !t.span.is_empty()) {
        let text = t.text.as_str();
        let mut parts = vec![text.to_string()];
        let chars: Vec<char> = text.chars().collect();
        if chars.len() > 4 && rng.gen_bool(0.3) {
            let cut = rng.gen_range(1..chars.len());
            parts = vec![chars[..cut].iter().collect(), chars[cut..].iter().collect()];
        }
        for part in parts {
            match out.last_mut() {
                Some(last) if merge_next => last.push_str(&part),
                _ => out.push(part),
            }
            merge_next = false;
        }
        merge_next = chars.len() <= 2 && rng.gen_bool(0.3);
    }
    out
}

/// A sample over the given pieces with log-probabilities in `[-8, 0)`.
pub fn sample_from_pieces(id: &str, pieces: Vec<String>, rng: &mut impl Rng) -> TokenizedSample {
    let source: String = pieces.concat();
    let parts = pieces
        .into_iter()
        .enumerate()
        .map(|(i, t)| (t, (i > 0).then(|| -rng.gen_range(0.001..8.0))))
        .collect();
    TokenizedSample::from_parts(id, "synthetic", source, parts).unwrap()
}

//! Per-sample detection scores: SPP over retained tokens, and the Loss,
//! ZLib, Min-K% and DC-PDD baselines.
//!
//! Every score sums negative log-probabilities (NLL) of tokens at index 1
//! and later; the first token has no context and is never scored. Sums are
//! always taken over values sorted in descending order, so identical token
//! multisets give bit-identical results across methods.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write;

use flate2::write::ZlibEncoder;
use flate2::Compression;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pruner::TokenLabeling;
use crate::tokenprob::TokenizedSample;

pub const MINK_PERCENTS: [u32; 10] = [10, 20, 30, 40, 50, 60, 70, 80, 90, 100];
pub const DEFAULT_K: u32 = 20;
pub const ZLIB_LEVEL: u32 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Member,
    #[serde(alias = "non-member", alias = "nonmember")]
    NonMember,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Member => "member",
            Label::NonMember => "non_member",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error("sample {0}: every scored token was pruned")]
    EmptyRetainedSet(String),
    #[error("sample {0}: no token after the first carries a log-probability")]
    NoScoreableTokens(String),
    #[error("sample {0}: empty source")]
    EmptySource(String),
    #[error("K must be between 1 and 100, got {0}")]
    InvalidK(u32),
    #[error("sample {sample_id}: labeling covers {labels} tokens, sample has {tokens}")]
    LabelingMismatch {
        sample_id: String,
        labels: usize,
        tokens: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub sample_id: String,
    #[serde(default)]
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    /// `None` when every scoreable token was pruned.
    pub spp: Option<f64>,
    pub loss: f64,
    pub zlib: f64,
    pub mink: BTreeMap<u32, f64>,
    #[serde(default)]
    pub dcpdd: Option<f64>,
    pub retained_count: usize,
    pub pruned_count: usize,
    #[serde(default)]
    pub token_count: usize,
    #[serde(default)]
    pub compressed_len: usize,
}

impl ScoreRecord {
    pub fn method(&self, method: Method, k: u32) -> Option<f64> {
        match method {
            Method::Spp => self.spp,
            Method::Loss => Some(self.loss),
            Method::Zlib => Some(self.zlib),
            Method::MinK => self.mink.get(&k).copied(),
            Method::DcPdd => self.dcpdd,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "SPP")]
    Spp,
    Loss,
    #[serde(rename = "ZLib")]
    Zlib,
    #[serde(rename = "Min-K%")]
    MinK,
    #[serde(rename = "DC-PDD")]
    DcPdd,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Loss, Method::Zlib, Method::MinK, Method::DcPdd, Method::Spp];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Spp => "SPP",
            Method::Loss => "Loss",
            Method::Zlib => "ZLib",
            Method::MinK => "Min-K%",
            Method::DcPdd => "DC-PDD",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Token-text occurrence probabilities over a reference corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusFrequencyTable {
    counts: HashMap<String, u64>,
    total: u64,
    floor: f64,
}

#[derive(Serialize, Deserialize)]
struct FreqHeader {
    total: u64,
    floor: f64,
}

#[derive(Serialize, Deserialize)]
struct FreqEntry {
    token: String,
    count: u64,
}

impl CorpusFrequencyTable {
    /// Panics unless `floor` is in (0, 1] and counts sum to at most `total`.
    pub fn from_counts(counts: HashMap<String, u64>, total: u64, floor: f64) -> Self {
        assert!(floor > 0.0 && floor <= 1.0, "floor must be in (0, 1]");
        assert!(counts.values().sum::<u64>() <= total, "counts exceed total");
        CorpusFrequencyTable { counts, total, floor }
    }

    /// Counts every model token of the reference samples. The floor is
    /// `1 / (total + 1)`, below the probability of any seen token.
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a TokenizedSample>) -> Self {
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut total = 0u64;
        for s in samples {
            for t in &s.tokens {
                *counts.entry(t.text.clone()).or_default() += 1;
                total += 1;
            }
        }
        let floor = 1.0 / (total as f64 + 1.0);
        CorpusFrequencyTable { counts, total, floor }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Floored corpus probability, kept strictly below 1 so its log is
    /// never zero.
    pub fn probability(&self, token: &str) -> f64 {
        let count = self.counts.get(token).copied().unwrap_or(0);
        let q = if self.total == 0 {
            0.0
        } else {
            count as f64 / self.total as f64
        };
        q.max(self.floor).min(1.0 - f64::EPSILON)
    }

    pub fn load(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or("frequency table is empty")?;
        let header: FreqHeader = serde_json::from_str(first).map_err(|e| format!("line 1: bad header: {e}"))?;
        if !(header.floor > 0.0 && header.floor <= 1.0) {
            return Err(format!("line 1: floor {} outside (0, 1]", header.floor));
        }
        let mut counts = HashMap::new();
        let mut sum = 0u64;
        for (i, line) in lines {
            let e: FreqEntry = serde_json::from_str(line).map_err(|err| format!("line {}: {err}", i + 1))?;
            sum += e.count;
            if counts.insert(e.token.clone(), e.count).is_some() {
                return Err(format!("line {}: duplicate token {:?}", i + 1, e.token));
            }
        }
        if sum > header.total {
            return Err(format!("counts sum to {sum}, above total {}", header.total));
        }
        Ok(CorpusFrequencyTable {
            counts,
            total: header.total,
            floor: header.floor,
        })
    }

    pub fn to_text(&self) -> String {
        let mut entries: Vec<(&String, &u64)> = self.counts.iter().collect();
        entries.sort();
        let mut out = serde_json::to_string(&FreqHeader {
            total: self.total,
            floor: self.floor,
        })
        .expect("header serializes");
        out.push('\n');
        for (token, &count) in entries {
            let line = serde_json::to_string(&FreqEntry {
                token: token.clone(),
                count,
            })
            .expect("entry serializes");
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

/// NLL of every scoreable token, in token order.
fn nlls(sample: &TokenizedSample) -> impl Iterator<Item = (usize, f64)> + '_ {
    sample
        .tokens
        .iter()
        .skip(1)
        .filter_map(|t| t.logprob.map(|lp| (t.index, -lp)))
}

fn descending(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

fn mean_desc(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn spp_score(sample: &TokenizedSample, labeling: &TokenLabeling) -> Result<f64, ScoreError> {
    check_labeling(sample, labeling)?;
    let kept: Vec<f64> = nlls(sample)
        .filter(|&(i, _)| labeling.labels[i] == 1)
        .map(|(_, v)| v)
        .collect();
    if kept.is_empty() {
        return Err(ScoreError::EmptyRetainedSet(sample.sample_id.clone()));
    }
    Ok(mean_desc(&descending(kept)))
}

fn check_labeling(sample: &TokenizedSample, labeling: &TokenLabeling) -> Result<(), ScoreError> {
    if labeling.labels.len() != sample.tokens.len() {
        return Err(ScoreError::LabelingMismatch {
            sample_id: sample.sample_id.clone(),
            labels: labeling.labels.len(),
            tokens: sample.tokens.len(),
        });
    }
    Ok(())
}

fn scoreable(sample: &TokenizedSample) -> Result<Vec<f64>, ScoreError> {
    let all: Vec<f64> = nlls(sample).map(|(_, v)| v).collect();
    if all.is_empty() {
        return Err(ScoreError::NoScoreableTokens(sample.sample_id.clone()));
    }
    Ok(descending(all))
}

pub fn loss_score(sample: &TokenizedSample) -> Result<f64, ScoreError> {
    Ok(mean_desc(&scoreable(sample)?))
}

pub fn compressed_len(source: &str) -> usize {
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::new(ZLIB_LEVEL));
    enc.write_all(source.as_bytes()).expect("writing to a Vec cannot fail");
    enc.finish().expect("writing to a Vec cannot fail").len()
}

pub fn zlib_score(sample: &TokenizedSample) -> Result<f64, ScoreError> {
    if sample.source.is_empty() {
        return Err(ScoreError::EmptySource(sample.sample_id.clone()));
    }
    let total: f64 = scoreable(sample)?.iter().sum();
    Ok(total / compressed_len(&sample.source) as f64)
}

pub fn mink_score(sample: &TokenizedSample, k: u32) -> Result<f64, ScoreError> {
    if !(1..=100).contains(&k) {
        return Err(ScoreError::InvalidK(k));
    }
    let values = scoreable(sample)?;
    Ok(mink_of_desc(&values, k))
}

fn mink_of_desc(values: &[f64], k: u32) -> f64 {
    let n = values.len();
    let take = (k as usize * n).div_ceil(100).max(1);
    mean_desc(&values[..take])
}

pub fn dcpdd_score(sample: &TokenizedSample, freq: &CorpusFrequencyTable) -> Result<f64, ScoreError> {
    let mut seen = HashSet::new();
    let mut ratios = Vec::new();
    for t in sample.tokens.iter().skip(1) {
        let Some(lp) = t.logprob else { continue };
        if !seen.insert(t.text.as_str()) {
            continue;
        }
        let q = freq.probability(&t.text);
        ratios.push(-lp / -q.ln());
    }
    if ratios.is_empty() {
        return Err(ScoreError::NoScoreableTokens(sample.sample_id.clone()));
    }
    Ok(mean_desc(&descending(ratios)))
}

/// Member iff `score > epsilon`.
pub fn classify(score: f64, epsilon: f64) -> Label {
    if score > epsilon {
        Label::Member
    } else {
        Label::NonMember
    }
}

/// All scores for one sample. An empty retained set leaves `spp` unset;
/// other failures reject the sample.
pub fn score_sample(
    sample: &TokenizedSample,
    labeling: &TokenLabeling,
    freq: Option<&CorpusFrequencyTable>,
    label: Option<Label>,
) -> Result<ScoreRecord, ScoreError> {
    check_labeling(sample, labeling)?;
    let values = scoreable(sample)?;
    let spp = match spp_score(sample, labeling) {
        Ok(v) => Some(v),
        Err(ScoreError::EmptyRetainedSet(_)) => None,
        Err(e) => return Err(e),
    };
    let zlib = zlib_score(sample)?;
    let mink = MINK_PERCENTS.iter().map(|&k| (k, mink_of_desc(&values, k))).collect();
    let dcpdd = freq.map(|f| dcpdd_score(sample, f)).transpose()?;
    let retained_count = nlls(sample).filter(|&(i, _)| labeling.labels[i] == 1).count();
    Ok(ScoreRecord {
        sample_id: sample.sample_id.clone(),
        model_id: sample.model_id.clone(),
        label,
        spp,
        loss: mean_desc(&values),
        zlib,
        mink,
        dcpdd,
        retained_count,
        pruned_count: values.len() - retained_count,
        token_count: sample.tokens.len(),
        compressed_len: compressed_len(&sample.source),
    })
}

/// Score samples in parallel; results keep input order.
pub fn score_corpus(
    items: &[(&TokenizedSample, &TokenLabeling, Option<Label>)],
    freq: Option<&CorpusFrequencyTable>,
) -> Vec<Result<ScoreRecord, ScoreError>> {
    items
        .par_iter()
        .map(|(s, l, label)| score_sample(s, l, freq, *label))
        .collect()
}

//! Benchmark ingestion, ratio resampling, metrics, ablations, convention
//! statistics and report emission.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conventions::{filter_category, ConventionCategory, ConventionSet};
use crate::pruner::{label_tokens, PruneMode, TokenLabeling};
use crate::pyparse::{parse_source, ByteSpan, ParseError, Parsed};
use crate::scoring::{
    score_sample, spp_score, CorpusFrequencyTable, Label, Method, ScoreError, ScoreRecord, DEFAULT_K,
};
use crate::tokenprob::TokenizedSample;

pub const DCPDD_NOTE: &str =
    "DC-PDD is a replication: mean over first occurrences of -ln p(token) / -ln q(token), q the floored corpus frequency";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: duplicate sample_id `{id}`")]
    DuplicateId { id: String, line: usize },
    #[error("line {line}: sample `{id}` has an empty source")]
    EmptySource { id: String, line: usize },
    #[error("need samples of both labels ({members} members, {non_members} non-members)")]
    SingleClass { members: usize, non_members: usize },
    #[error("ratio {ratio} needs more samples ({members} members, {non_members} non-members available)")]
    InsufficientPool {
        ratio: Ratio,
        members: usize,
        non_members: usize,
    },
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("no member samples")]
    NoMembers,
    #[error("sample `{0}` has no label")]
    Unlabeled(String),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkSample {
    pub sample_id: String,
    pub source: String,
    pub label: Label,
    pub origin: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
}

#[derive(Deserialize)]
struct RawSample {
    sample_id: Option<String>,
    source: Option<String>,
    label: Option<Label>,
    origin: Option<String>,
    created_at: Option<String>,
}

pub fn ingest_benchmark(file: &[u8]) -> Result<Vec<BenchmarkSample>, HarnessError> {
    let text = std::str::from_utf8(file).map_err(|e| {
        let line = file[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        HarnessError::Format {
            line,
            message: "invalid UTF-8".into(),
        }
    })?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let raw: RawSample = serde_json::from_str(raw_line).map_err(|e| HarnessError::Format {
            line,
            message: e.to_string(),
        })?;
        let missing = |field| HarnessError::MissingField { line, field };
        let sample = BenchmarkSample {
            sample_id: raw.sample_id.ok_or_else(|| missing("sample_id"))?,
            source: raw.source.ok_or_else(|| missing("source"))?,
            label: raw.label.ok_or_else(|| missing("label"))?,
            origin: raw.origin.ok_or_else(|| missing("origin"))?,
            created_at: raw.created_at,
        };
        if sample.source.is_empty() {
            return Err(HarnessError::EmptySource {
                id: sample.sample_id,
                line,
            });
        }
        if !seen.insert(sample.sample_id.clone()) {
            return Err(HarnessError::DuplicateId {
                id: sample.sample_id,
                line,
            });
        }
        out.push(sample);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ratio {
    #[serde(rename = "1:1")]
    OneToOne,
    #[serde(rename = "1:5")]
    OneToFive,
    #[serde(rename = "5:1")]
    FiveToOne,
}

impl Ratio {
    pub const ALL: [Ratio; 3] = [Ratio::OneToOne, Ratio::OneToFive, Ratio::FiveToOne];

    /// Member and non-member counts drawn from pools of the given sizes.
    pub fn counts(self, members: usize, non_members: usize) -> (usize, usize) {
        match self {
            Ratio::OneToOne => {
                let m = members.min(non_members);
                (m, m)
            }
            Ratio::OneToFive => {
                let m = members.min(non_members / 5);
                (m, 5 * m)
            }
            Ratio::FiveToOne => {
                let n = non_members.min(members / 5);
                (5 * n, n)
            }
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ratio::OneToOne => "1:1",
            Ratio::OneToFive => "1:5",
            Ratio::FiveToOne => "5:1",
        })
    }
}

impl FromStr for Ratio {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1:1" => Ok(Ratio::OneToOne),
            "1:5" => Ok(Ratio::OneToFive),
            "5:1" => Ok(Ratio::FiveToOne),
            _ => Err(format!("unknown ratio `{s}` (expected 1:1, 1:5 or 5:1)")),
        }
    }
}

/// Indices of a seeded subset with the requested member to non-member
/// ratio, in corpus order.
pub fn sample_ratio_indices<T>(
    items: &[T],
    label_of: impl Fn(&T) -> Label,
    ratio: Ratio,
    seed: u64,
) -> Result<Vec<usize>, HarnessError> {
    let (members, non_members): (Vec<usize>, Vec<usize>) =
        (0..items.len()).partition(|&i| label_of(&items[i]) == Label::Member);
    let (m, n) = ratio.counts(members.len(), non_members.len());
    if m == 0 || n == 0 {
        return Err(HarnessError::InsufficientPool {
            ratio,
            members: members.len(),
            non_members: non_members.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |pool: &[usize], amount: usize| -> Vec<usize> {
        if amount == pool.len() {
            return pool.to_vec();
        }
        index::sample(&mut rng, pool.len(), amount)
            .into_iter()
            .map(|i| pool[i])
            .collect()
    };
    let mut picked = draw(&members, m);
    picked.extend(draw(&non_members, n));
    picked.sort_unstable();
    Ok(picked)
}

pub fn sample_ratio(corpus: &[BenchmarkSample], ratio: Ratio, seed: u64) -> Result<Vec<BenchmarkSample>, HarnessError> {
    let picked = sample_ratio_indices(corpus, |s| s.label, ratio, seed)?;
    Ok(picked.into_iter().map(|i| corpus[i].clone()).collect())
}

fn class_counts(scores: &[(f64, Label)]) -> (usize, usize) {
    let p = scores.iter().filter(|(_, l)| *l == Label::Member).count();
    (p, scores.len() - p)
}

fn require_both(scores: &[(f64, Label)]) -> Result<(usize, usize), HarnessError> {
    let (p, n) = class_counts(scores);
    if p == 0 || n == 0 {
        return Err(HarnessError::SingleClass {
            members: p,
            non_members: n,
        });
    }
    Ok((p, n))
}

/// Scores sorted ascending and grouped by equal value, as
/// `(score, members, non_members)`.
fn tie_groups(scores: &[(f64, Label)]) -> Vec<(f64, usize, usize)> {
    let mut sorted: Vec<(f64, Label)> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for (s, l) in sorted {
        if groups.last().is_none_or(|g| g.0 != s) {
            groups.push((s, 0, 0));
        }
        let g = groups.last_mut().unwrap();
        match l {
            Label::Member => g.1 += 1,
            Label::NonMember => g.2 += 1,
        }
    }
    groups
}

/// Probability that a random member outscores a random non-member, ties
/// counting one half. Members are the positive class.
pub fn auroc(scores: &[(f64, Label)]) -> Result<f64, HarnessError> {
    let (p, n) = require_both(scores)?;
    // twice the Mann-Whitney U, kept integral
    let mut u2: u128 = 0;
    let mut below = 0u128;
    for (_, gp, gn) in tie_groups(scores) {
        u2 += gp as u128 * (2 * below + gn as u128);
        below += gn as u128;
    }
    Ok(u2 as f64 / (2 * p as u128 * n as u128) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Samples scoring at or above the threshold count as members; `None`
    /// for the origin.
    pub threshold: Option<f64>,
    pub fpr: f64,
    pub tpr: f64,
}

pub fn roc_points(scores: &[(f64, Label)]) -> Result<Vec<RocPoint>, HarnessError> {
    let (p, n) = require_both(scores)?;
    let mut out = vec![RocPoint {
        threshold: None,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (s, gp, gn) in tie_groups(scores).into_iter().rev() {
        tp += gp;
        fp += gn;
        out.push(RocPoint {
            threshold: Some(s),
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / p as f64,
        });
    }
    Ok(out)
}

/// Trapezoidal area under ROC points.
pub fn roc_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// Confusion matrix for "member iff score > epsilon".
pub fn confusion_at(scores: &[(f64, Label)], epsilon: f64) -> Confusion {
    let mut c = Confusion::default();
    for &(s, l) in scores {
        match (s > epsilon, l) {
            (true, Label::Member) => c.tp += 1,
            (true, Label::NonMember) => c.fp += 1,
            (false, Label::Member) => c.fn_ += 1,
            (false, Label::NonMember) => c.tn += 1,
        }
    }
    c
}

/// Fraction of members scored at or below `epsilon`.
pub fn fnr_at(scores: &[(f64, Label)], epsilon: f64) -> Result<f64, HarnessError> {
    let c = confusion_at(scores, epsilon);
    if c.tp + c.fn_ == 0 {
        return Err(HarnessError::NoMembers);
    }
    Ok(c.fn_ as f64 / (c.tp + c.fn_) as f64)
}

/// F1 with members positive; 0 when nothing is correctly flagged.
pub fn f1_at(scores: &[(f64, Label)], epsilon: f64) -> f64 {
    let c = confusion_at(scores, epsilon);
    if c.tp == 0 {
        return 0.0;
    }
    2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.fn_) as f64
}

/// Ascending thresholds realizing every distinct confusion matrix: one
/// point below the lowest score, each unique score and each midpoint.
pub fn default_grid(scores: &[(f64, Label)]) -> Vec<f64> {
    let mut unique: Vec<f64> = scores.iter().map(|s| s.0).collect();
    unique.sort_by(f64::total_cmp);
    unique.dedup();
    let Some(&lowest) = unique.first() else {
        return Vec::new();
    };
    let mut grid = vec![lowest - 1.0];
    for (i, &s) in unique.iter().enumerate() {
        if i > 0 {
            grid.push(unique[i - 1] + (s - unique[i - 1]) / 2.0);
        }
        grid.push(s);
    }
    grid
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub best_epsilon: f64,
    pub best_f1: f64,
    pub curve: Vec<(f64, f64)>,
}

/// F1 at every grid threshold; the best is the first maximum in grid order.
pub fn f1_sweep(scores: &[(f64, Label)], grid: &[f64]) -> Result<Sweep, HarnessError> {
    require_both(scores)?;
    if grid.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    let curve: Vec<(f64, f64)> = grid.iter().map(|&e| (e, f1_at(scores, e))).collect();
    let mut best = curve[0];
    for &pt in &curve[1..] {
        if pt.1 > best.1 {
            best = pt;
        }
    }
    Ok(Sweep {
        best_epsilon: best.0,
        best_f1: best.1,
        curve,
    })
}

/// Lower median of the counts.
pub fn median_threshold(counts: &[usize]) -> Option<usize> {
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    sorted.get(sorted.len().saturating_sub(1) / 2).copied()
}

/// Partition into `count <= threshold` and the rest, keeping order.
pub fn length_split_by<T: Clone>(items: &[T], count: impl Fn(&T) -> usize, threshold: usize) -> (Vec<T>, Vec<T>) {
    items.iter().cloned().partition(|x| count(x) <= threshold)
}

/// Split by model-token count; a sample of exactly `threshold` tokens is
/// short.
pub fn length_split(members: &[TokenizedSample], threshold: usize) -> (Vec<TokenizedSample>, Vec<TokenizedSample>) {
    length_split_by(members, |s| s.tokens.len(), threshold)
}

/// A tokenized sample with its ground truth.
#[derive(Clone, Debug)]
pub struct LabeledSample {
    pub sample: TokenizedSample,
    pub label: Label,
}

/// A labeled sample parsed once for repeated labeling.
struct Prepared<'a> {
    item: &'a LabeledSample,
    parsed: Option<Parsed>,
    spans: Vec<ByteSpan>,
}

fn prepare(corpus: &[LabeledSample]) -> Vec<Prepared<'_>> {
    corpus
        .par_iter()
        .map(|item| Prepared {
            item,
            parsed: parse_source(&item.sample.source).ok(),
            spans: item.sample.spans(),
        })
        .collect()
}

fn labelings(prepared: &[Prepared<'_>], set: &ConventionSet, mode: PruneMode) -> Vec<Option<TokenLabeling>> {
    prepared
        .par_iter()
        .map(|p| {
            let parsed = p.parsed.as_ref()?;
            Some(label_tokens(
                &p.item.sample.source,
                &p.spans,
                &parsed.root,
                &parsed.tokens,
                set,
                mode,
            ))
        })
        .collect()
}

/// A score record, with the parse error when the source could not be
/// parsed and SPP was therefore left unset.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreOutcome {
    pub record: ScoreRecord,
    pub parse_error: Option<ParseError>,
}

/// Label and score every sample in parallel; results keep input order.
pub fn score_samples(
    samples: &[TokenizedSample],
    label_of: impl Fn(&str) -> Option<Label> + Sync,
    set: &ConventionSet,
    mode: PruneMode,
    freq: Option<&CorpusFrequencyTable>,
) -> Vec<Result<ScoreOutcome, ScoreError>> {
    samples
        .par_iter()
        .map(|s| {
            let label = label_of(&s.sample_id);
            match parse_source(&s.source) {
                Ok(parsed) => {
                    let lab = label_tokens(&s.source, &s.spans(), &parsed.root, &parsed.tokens, set, mode);
                    Ok(ScoreOutcome {
                        record: score_sample(s, &lab, freq, label)?,
                        parse_error: None,
                    })
                }
                Err(e) => {
                    let keep_all = TokenLabeling {
                        labels: vec![1; s.tokens.len()],
                        matches: vec![Vec::new(); s.tokens.len()],
                    };
                    let mut record = score_sample(s, &keep_all, freq, label)?;
                    record.spp = None;
                    Ok(ScoreOutcome {
                        record,
                        parse_error: Some(e),
                    })
                }
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// `None` for the full convention set.
    pub category: Option<ConventionCategory>,
    pub auroc: f64,
    /// Ablated minus full AUROC, in percentage points.
    pub delta: f64,
    pub pruned_tokens: usize,
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub full: AblationRow,
    pub ablated: Vec<AblationRow>,
}

fn spp_row(
    prepared: &[Prepared<'_>],
    set: &ConventionSet,
    mode: PruneMode,
    category: Option<ConventionCategory>,
) -> Result<AblationRow, HarnessError> {
    let mut scores = Vec::new();
    let mut pruned_tokens = 0;
    let mut skipped = 0;
    for (p, lab) in prepared.iter().zip(labelings(prepared, set, mode)) {
        let Some(lab) = lab else {
            skipped += 1;
            continue;
        };
        pruned_tokens += lab.pruned_count();
        match spp_score(&p.item.sample, &lab) {
            Ok(v) => scores.push((v, p.item.label)),
            Err(ScoreError::EmptyRetainedSet(_) | ScoreError::NoScoreableTokens(_)) => skipped += 1,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(AblationRow {
        category,
        auroc: 100.0 * auroc(&scores)?,
        delta: 0.0,
        pruned_tokens,
        skipped,
    })
}

/// SPP AUROC with the full set and with each category removed.
pub fn run_ablations(
    corpus: &[LabeledSample],
    set: &ConventionSet,
    mode: PruneMode,
) -> Result<AblationReport, HarnessError> {
    let prepared = prepare(corpus);
    let full = spp_row(&prepared, set, mode, None)?;
    let ablated = ConventionCategory::ALL
        .iter()
        .map(|&c| {
            let mut row = spp_row(&prepared, &filter_category(set, c), mode, Some(c))?;
            row.delta = row.auroc - full.auroc;
            Ok(row)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(AblationReport { full, ablated })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConventionStats {
    /// Pruned tokens per matched category; a token matched by several
    /// categories counts under each.
    pub per_category: BTreeMap<ConventionCategory, usize>,
    pub total_tokens: usize,
    pub pruned_tokens: usize,
    pub ratio: f64,
    pub skipped: usize,
}

/// Pruned-token counts over `(source, token spans)` pairs.
pub fn convention_stats(corpus: &[(&str, &[ByteSpan])], set: &ConventionSet, mode: PruneMode) -> ConventionStats {
    let per_sample: Vec<Option<(usize, TokenLabeling)>> = corpus
        .par_iter()
        .map(|&(source, spans)| {
            let parsed = parse_source(source).ok()?;
            Some((
                spans.len(),
                label_tokens(source, spans, &parsed.root, &parsed.tokens, set, mode),
            ))
        })
        .collect();
    let mut stats = ConventionStats {
        per_category: ConventionCategory::ALL.iter().map(|&c| (c, 0)).collect(),
        ..Default::default()
    };
    for entry in per_sample {
        let Some((n, lab)) = entry else {
            stats.skipped += 1;
            continue;
        };
        stats.total_tokens += n;
        stats.pruned_tokens += lab.pruned_count();
        for (label, matches) in lab.labels.iter().zip(&lab.matches) {
            if *label != 0 {
                continue;
            }
            let cats: HashSet<ConventionCategory> = matches.iter().map(|m| m.category).collect();
            for c in cats {
                *stats.per_category.entry(c).or_default() += 1;
            }
        }
    }
    if stats.total_tokens > 0 {
        stats.ratio = stats.pruned_tokens as f64 / stats.total_tokens as f64;
    }
    stats
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub ratio: Option<Ratio>,
    pub seed: u64,
    pub k: u32,
    /// Threshold for SPP; the best-F1 threshold when unset.
    pub epsilon: Option<f64>,
    /// Short/long boundary in tokens; the members' median when unset.
    pub length_threshold: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ratio: None,
            seed: 0,
            k: DEFAULT_K,
            epsilon: None,
            length_threshold: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub members: usize,
    pub non_members: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    /// Percent.
    pub auroc: f64,
    pub skipped: usize,
    pub epsilon: f64,
    pub fnr: f64,
    pub fnr_short: Option<f64>,
    pub fnr_long: Option<f64>,
    pub sweep: Sweep,
    pub roc: Vec<RocPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub ratio: String,
    pub seed: u64,
    pub k: u32,
    pub counts: Counts,
    pub length_threshold: usize,
    pub methods: Vec<MethodReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<ConventionStats>,
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn method(&self, method: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == method)
    }
}

fn method_report(
    method: Method,
    records: &[&ScoreRecord],
    config: &EvalConfig,
    threshold: usize,
) -> Result<Option<MethodReport>, HarnessError> {
    let mut scored = Vec::new();
    let mut skipped = 0;
    for r in records {
        match r.method(method, config.k) {
            Some(v) => scored.push((v, r.label.expect("labels checked"), r.token_count)),
            None => skipped += 1,
        }
    }
    if scored.is_empty() {
        return Ok(None);
    }
    let pairs: Vec<(f64, Label)> = scored.iter().map(|&(s, l, _)| (s, l)).collect();
    let sweep = f1_sweep(&pairs, &default_grid(&pairs))?;
    let epsilon = match (method, config.epsilon) {
        (Method::Spp, Some(e)) => e,
        _ => sweep.best_epsilon,
    };
    let members: Vec<(f64, Label, usize)> = scored.iter().copied().filter(|s| s.1 == Label::Member).collect();
    let (short, long) = length_split_by(&members, |s| s.2, threshold);
    let fnr_of = |group: &[(f64, Label, usize)]| {
        let pairs: Vec<(f64, Label)> = group.iter().map(|&(s, l, _)| (s, l)).collect();
        fnr_at(&pairs, epsilon).ok()
    };
    Ok(Some(MethodReport {
        method,
        auroc: 100.0 * auroc(&pairs)?,
        skipped,
        epsilon,
        fnr: fnr_at(&pairs, epsilon)?,
        fnr_short: fnr_of(&short),
        fnr_long: fnr_of(&long),
        sweep,
        roc: roc_points(&pairs)?,
    }))
}

/// Metrics for every method present in the score records.
pub fn evaluate(records: &[ScoreRecord], config: &EvalConfig) -> Result<EvalReport, HarnessError> {
    if let Some(r) = records.iter().find(|r| r.label.is_none()) {
        return Err(HarnessError::Unlabeled(r.sample_id.clone()));
    }
    let picked: Vec<&ScoreRecord> = match config.ratio {
        Some(ratio) => sample_ratio_indices(records, |r| r.label.unwrap(), ratio, config.seed)?
            .into_iter()
            .map(|i| &records[i])
            .collect(),
        None => records.iter().collect(),
    };
    let members = picked.iter().filter(|r| r.label == Some(Label::Member)).count();
    let counts = Counts {
        members,
        non_members: picked.len() - members,
    };
    if counts.members == 0 || counts.non_members == 0 {
        return Err(HarnessError::SingleClass {
            members: counts.members,
            non_members: counts.non_members,
        });
    }
    let member_lengths: Vec<usize> = picked
        .iter()
        .filter(|r| r.label == Some(Label::Member))
        .map(|r| r.token_count)
        .collect();
    let threshold = config
        .length_threshold
        .unwrap_or_else(|| median_threshold(&member_lengths).unwrap_or(0));
    let mut methods = Vec::new();
    for method in Method::ALL {
        if let Some(m) = method_report(method, &picked, config, threshold)? {
            methods.push(m);
        }
    }
    let mut models: Vec<&str> = picked.iter().map(|r| r.model_id.as_str()).collect();
    models.sort_unstable();
    models.dedup();
    let mut notes = vec![format!("Min-K% uses K = {}", config.k)];
    if methods.iter().any(|m| m.method == Method::DcPdd) {
        notes.push(DCPDD_NOTE.to_string());
    }
    Ok(EvalReport {
        model: models.join("+"),
        ratio: config.ratio.map_or_else(|| "all".to_string(), |r| r.to_string()),
        seed: config.seed,
        k: config.k,
        counts,
        length_threshold: threshold,
        methods,
        ablation: None,
        stats: None,
        notes,
    })
}

/// `ratio,method,model,auroc` rows, one per method and report.
pub fn table1_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("ratio,method,model,auroc\n");
    for r in reports {
        for m in &r.methods {
            out.push_str(&format!(
                "{},{},{},{:.1}\n",
                r.ratio,
                m.method,
                csv_field(&r.model),
                m.auroc
            ));
        }
    }
    out
}

/// `method,threshold,fpr,tpr` rows; the origin has an empty threshold.
pub fn roc_csv(report: &EvalReport) -> String {
    let mut out = String::from("method,threshold,fpr,tpr\n");
    for m in &report.methods {
        for p in &m.roc {
            let t = p.threshold.map_or_else(String::new, |t| t.to_string());
            out.push_str(&format!("{},{},{},{}\n", m.method, t, p.fpr, p.tpr));
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Member as M, NonMember as N};

    fn pairs(members: &[f64], non: &[f64]) -> Vec<(f64, Label)> {
        members
            .iter()
            .map(|&s| (s, M))
            .chain(non.iter().map(|&s| (s, N)))
            .collect()
    }

    #[test]
    fn ingest_examples() {
        let file = b"{\"sample_id\":\"a\",\"source\":\"x = 1\\n\",\"label\":\"member\",\"origin\":\"pile\"}\n\n\
{\"sample_id\":\"b\",\"source\":\"y = 2\\n\",\"label\":\"non_member\",\"origin\":\"github\",\"created_at\":\"2024-03-01\"}\n";
        let got = ingest_benchmark(file).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[1].label, N);
        assert_eq!(got[1].created_at.as_deref(), Some("2024-03-01"));

        let dup = b"{\"sample_id\":\"a\",\"source\":\"x\",\"label\":\"member\",\"origin\":\"\"}\n\
{\"sample_id\":\"a\",\"source\":\"y\",\"label\":\"member\",\"origin\":\"\"}\n";
        assert_eq!(
            ingest_benchmark(dup),
            Err(HarnessError::DuplicateId {
                id: "a".into(),
                line: 2
            })
        );
        let missing = b"{\"sample_id\":\"a\",\"source\":\"x\",\"origin\":\"\"}\n";
        assert_eq!(
            ingest_benchmark(missing),
            Err(HarnessError::MissingField {
                line: 1,
                field: "label"
            })
        );
        let empty = b"{\"sample_id\":\"a\",\"source\":\"\",\"label\":\"member\",\"origin\":\"\"}\n";
        assert!(matches!(ingest_benchmark(empty), Err(HarnessError::EmptySource { .. })));
        assert!(matches!(
            ingest_benchmark(b"{"),
            Err(HarnessError::Format { line: 1, .. })
        ));
    }

    #[test]
    fn ratio_counts() {
        assert_eq!(Ratio::OneToOne.counts(1000, 1000), (1000, 1000));
        assert_eq!(Ratio::OneToFive.counts(1000, 1000), (200, 1000));
        assert_eq!(Ratio::FiveToOne.counts(1000, 1000), (1000, 200));
        assert_eq!(Ratio::OneToFive.counts(3, 1000), (3, 15));
        assert_eq!(Ratio::OneToFive.counts(10, 4), (0, 0));
        for r in Ratio::ALL {
            assert_eq!(r.to_string().parse::<Ratio>().unwrap(), r);
        }
        assert!("2:1".parse::<Ratio>().is_err());
    }

    #[test]
    fn ratio_sampling_is_seeded_and_whole_pools_pass_through() {
        let labels: Vec<Label> = (0..20).map(|i| if i % 2 == 0 { M } else { N }).collect();
        let all = sample_ratio_indices(&labels, |l| *l, Ratio::OneToOne, 3).unwrap();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        let a = sample_ratio_indices(&labels, |l| *l, Ratio::FiveToOne, 9).unwrap();
        let b = sample_ratio_indices(&labels, |l| *l, Ratio::FiveToOne, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 12);
        assert_eq!(a.iter().filter(|&&i| labels[i] == N).count(), 2);
        assert_eq!(
            sample_ratio_indices(&labels, |l| *l, Ratio::OneToFive, 0)
                .unwrap()
                .len(),
            12
        );
        let few = [M, M, N, N, N];
        assert!(matches!(
            sample_ratio_indices(&few, |l| *l, Ratio::OneToFive, 0),
            Err(HarnessError::InsufficientPool { .. })
        ));
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&pairs(&[2.0, 3.0], &[0.0, 1.0])).unwrap(), 1.0);
        assert_eq!(auroc(&pairs(&[1.0, 1.0], &[1.0, 1.0])).unwrap(), 0.5);
        assert_eq!(auroc(&pairs(&[1.0, 3.0], &[2.0, 4.0])).unwrap(), 0.25);
        // one tie, one win, two losses
        assert_eq!(auroc(&pairs(&[2.0, 0.5], &[2.0, 1.0])).unwrap(), 0.375);
        assert!(matches!(
            auroc(&pairs(&[1.0], &[])),
            Err(HarnessError::SingleClass { .. })
        ));
    }

    #[test]
    fn roc_points_are_monotone_and_match_auroc() {
        let s = pairs(&[0.9, 0.4, 0.4, 0.7], &[0.4, 0.1, 0.8]);
        let pts = roc_points(&s).unwrap();
        assert_eq!(pts[0].threshold, None);
        assert_eq!((pts.last().unwrap().fpr, pts.last().unwrap().tpr), (1.0, 1.0));
        assert!(pts.windows(2).all(|w| w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr));
        assert!((roc_area(&pts) - auroc(&s).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn fnr_and_f1() {
        let s = pairs(&[0.01, 0.02, 0.03], &[0.0]);
        assert_eq!(fnr_at(&s, 0.015).unwrap(), 1.0 / 3.0);
        assert_eq!(fnr_at(&s, 0.0).unwrap(), 0.0);
        assert_eq!(fnr_at(&s, 0.03).unwrap(), 1.0);
        assert_eq!(fnr_at(&pairs(&[], &[1.0]), 0.5), Err(HarnessError::NoMembers));
        // tp 2, fp 1, fn 1
        let s = pairs(&[0.9, 0.6, 0.2], &[0.7, 0.1]);
        assert_eq!(f1_at(&s, 0.5), 4.0 / 6.0);
        assert_eq!(f1_at(&s, 1.0), 0.0);
    }

    #[test]
    fn sweep_recovers_planted_threshold() {
        let s = pairs(&[0.6, 0.7, 0.9], &[0.1, 0.3, 0.5]);
        let grid = default_grid(&s);
        assert_eq!(grid[0], -0.9);
        assert_eq!(grid.len(), 12);
        let sw = f1_sweep(&s, &grid).unwrap();
        assert_eq!((sw.best_epsilon, sw.best_f1), (0.5, 1.0));
        let best = sw.curve.iter().map(|p| p.1).fold(f64::MIN, f64::max);
        assert_eq!(best, sw.best_f1);
        let one = f1_sweep(&s, &[0.65]).unwrap();
        assert_eq!(one.best_epsilon, 0.65);
        assert_eq!(f1_sweep(&s, &[]), Err(HarnessError::EmptyGrid));
    }

    #[test]
    fn length_split_boundary() {
        let (short, long) = length_split_by(&[10usize, 55, 56], |&n| n, 55);
        assert_eq!((short, long), (vec![10, 55], vec![56]));
        let (short, long) = length_split_by(&[] as &[usize], |&n| n, 55);
        assert!(short.is_empty() && long.is_empty());
        let (short, long) = length_split_by(&[3usize, 9, 4], |&n| n, 9);
        assert_eq!((short.len(), long.len()), (3, 0));
        assert_eq!(median_threshold(&[5, 1, 9, 7]), Some(5));
        assert_eq!(median_threshold(&[5, 1, 9]), Some(5));
        assert_eq!(median_threshold(&[]), None);
    }

    #[test]
    fn stats_of_plain_assignment_are_zero() {
        let set = ConventionSet::shipped();
        let src = "x = 1";
        let parsed = parse_source(src).unwrap();
        let spans = crate::pruner::lexeme_spans(&parsed.tokens);
        let stats = convention_stats(&[(src, &spans)], &set, PruneMode::Eq4);
        assert_eq!(stats.pruned_tokens, 0);
        assert_eq!(stats.ratio, 0.0);
        assert_eq!(stats.total_tokens, 5);
        assert!(stats.per_category.values().all(|&c| c == 0));
        let bad = convention_stats(&[("def (", &[ByteSpan::new(0, 5)][..])], &set, PruneMode::Eq4);
        assert_eq!(bad.skipped, 1);
    }

    #[test]
    fn csv_layouts() {
        let rec = |id: &str, label, spp| ScoreRecord {
            sample_id: id.into(),
            model_id: "pythia".into(),
            label: Some(label),
            spp: Some(spp),
            loss: 1.0,
            zlib: 0.1,
            mink: [(20, 2.0)].into(),
            dcpdd: None,
            retained_count: 1,
            pruned_count: 0,
            token_count: 2,
            compressed_len: 10,
        };
        let records = vec![rec("a", M, 0.9), rec("b", N, 0.1)];
        let report = evaluate(&records, &EvalConfig::default()).unwrap();
        let t = table1_csv(std::slice::from_ref(&report));
        assert!(t.starts_with("ratio,method,model,auroc\nall,Loss,pythia,50.0\n"));
        assert!(t.contains("all,SPP,pythia,100.0\n"));
        assert!(!t.contains("DC-PDD"));
        let roc = roc_csv(&report);
        assert!(roc.contains("SPP,,0,0\n") && roc.contains("SPP,0.9,0,1\n"));
    }
}

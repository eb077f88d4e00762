use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use synprune_core::evalharness::{
    convention_stats, default_grid, evaluate, f1_sweep, ingest_benchmark, roc_csv, run_ablations, score_samples,
    table1_csv, BenchmarkSample, EvalConfig, LabeledSample,
};
use synprune_core::pruner::{label_tokens, lexeme_spans};
use synprune_core::pyparse::{parse_bytes, tokenize, ByteSpan};
use synprune_core::scoring::{CorpusFrequencyTable, Label, ScoreRecord};
use synprune_core::tokenprob::{fetch_logprobs, load_logprobs, save_logprobs, FetchConfig, TokenizedSample};

use crate::config::{FileConfig, Overrides, Settings};
use crate::{
    AblateArgs, AnnotateArgs, Cli, Command, EndpointArgs, EvalArgs, FetchArgs, MetricArgs, ScoreArgs, StatsArgs,
    SweepArgs,
};

struct Ctx {
    settings: Settings,
    output: Option<PathBuf>,
}

impl Ctx {
    fn emit(&self, data: &str) -> Result<()> {
        match &self.output {
            Some(path) => write_file(path, data),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(data.as_bytes())?;
                out.flush()?;
                Ok(())
            }
        }
    }

    fn emit_json(&self, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.emit(&text)
    }
}

fn write_file(path: &Path, data: &str) -> Result<()> {
    std::fs::write(path, data).with_context(|| format!("writing {}", path.display()))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn no_overrides() -> Overrides {
    Overrides {
        conventions: None,
        prune_mode: None,
        k: None,
        seed: None,
        ratio: None,
        epsilon: None,
        endpoint: None,
        model: None,
        parallelism: None,
        length_threshold: None,
    }
}

fn with_endpoint(o: Overrides, e: &EndpointArgs) -> Overrides {
    Overrides {
        endpoint: e.endpoint.clone(),
        model: e.model.clone(),
        parallelism: e.parallelism,
        ..o
    }
}

fn with_metrics(o: Overrides, m: &MetricArgs) -> Overrides {
    Overrides {
        ratio: m.ratio,
        seed: m.seed,
        epsilon: m.epsilon,
        length_threshold: m.length_threshold,
        ..o
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let base = Overrides {
        conventions: cli.conventions.clone(),
        prune_mode: cli.prune_mode,
        ..no_overrides()
    };
    let overrides = match &cli.command {
        Command::Annotate(_) | Command::Ablate(_) | Command::Stats(_) => base,
        Command::FetchLogprobs(a) => with_endpoint(base, &a.endpoint),
        Command::Score(a) => with_metrics(with_endpoint(Overrides { k: a.k, ..base }, &a.endpoint), &a.metrics),
        Command::Eval(a) => with_metrics(Overrides { k: a.k, ..base }, &a.metrics),
        Command::Sweep(a) => Overrides { k: a.k, ..base },
    };
    let mut settings = Settings::resolve(overrides, file)?;
    let sweep_flag = match &cli.command {
        Command::Score(a) => a.metrics.sweep,
        Command::Eval(a) => a.metrics.sweep,
        _ => false,
    };
    if sweep_flag {
        settings.epsilon = None;
    }
    let ctx = Ctx {
        settings,
        output: cli.output,
    };
    match &cli.command {
        Command::Annotate(a) => annotate(&ctx, a),
        Command::FetchLogprobs(a) => fetch(&ctx, a),
        Command::Score(a) => score(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Ablate(a) => ablate(&ctx, a),
        Command::Sweep(a) => sweep(&ctx, a),
        Command::Stats(a) => stats(&ctx, a),
    }
}

fn load_benchmark(path: &Path) -> Result<Vec<BenchmarkSample>> {
    ingest_benchmark(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_samples(path: &Path) -> Result<Vec<TokenizedSample>> {
    load_logprobs(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn label_map(path: Option<&Path>) -> Result<HashMap<String, Label>> {
    let Some(path) = path else {
        return Ok(HashMap::new());
    };
    Ok(load_benchmark(path)?
        .into_iter()
        .map(|s| (s.sample_id, s.label))
        .collect())
}

#[derive(Serialize)]
struct AnnotatedToken<'a> {
    index: usize,
    text: &'a str,
    label: u8,
    convention_ids: Vec<&'a str>,
    logprob: Option<f64>,
}

fn annotate(ctx: &Ctx, args: &AnnotateArgs) -> Result<()> {
    let bytes = read(&args.source)?;
    let parsed = parse_bytes(&bytes).with_context(|| format!("{}", args.source.display()))?;
    let source = std::str::from_utf8(&bytes).expect("parse_bytes checked the encoding");
    let (spans, logprobs): (Vec<ByteSpan>, Vec<Option<f64>>) = match &args.logprobs {
        Some(path) => {
            let id = args.sample_id.as_deref().expect("clap requires --sample-id");
            let sample = load_samples(path)?
                .into_iter()
                .find(|s| s.sample_id == id)
                .ok_or_else(|| anyhow!("sample `{id}` not found in {}", path.display()))?;
            if sample.source != source {
                bail!("sample `{id}` does not match the text of {}", args.source.display());
            }
            (sample.spans(), sample.tokens.iter().map(|t| t.logprob).collect())
        }
        None => {
            let spans = lexeme_spans(&parsed.tokens);
            let n = spans.len();
            (spans, vec![None; n])
        }
    };
    let s = &ctx.settings;
    let lab = label_tokens(
        source,
        &spans,
        &parsed.root,
        &parsed.tokens,
        &s.conventions,
        s.prune_mode,
    );
    let mut out = String::new();
    if args.human {
        for (span, &label) in spans.iter().zip(&lab.labels) {
            let text = span.slice(source);
            if label == 0 {
                out.push_str("[[");
                out.push_str(text);
                out.push_str("]]");
            } else {
                out.push_str(text);
            }
        }
        if !out.is_empty() && !out.ends_with('\n') {
            out.push('\n');
        }
    } else {
        for (i, span) in spans.iter().enumerate() {
            let mut ids: Vec<&str> = Vec::new();
            for m in &lab.matches[i] {
                if !ids.contains(&m.convention_id.as_str()) {
                    ids.push(&m.convention_id);
                }
            }
            let token = AnnotatedToken {
                index: i,
                text: span.slice(source),
                label: lab.labels[i],
                convention_ids: ids,
                logprob: logprobs[i],
            };
            out.push_str(&serde_json::to_string(&token)?);
            out.push('\n');
        }
    }
    ctx.emit(&out)
}

fn fetch_config(settings: &Settings) -> Result<FetchConfig> {
    let endpoint = settings
        .endpoint
        .clone()
        .ok_or_else(|| anyhow!("no endpoint configured (--endpoint, SYNPRUNE_ENDPOINT or config `endpoint`)"))?;
    let model = settings
        .model
        .clone()
        .ok_or_else(|| anyhow!("no model configured (--model, SYNPRUNE_MODEL or config `model`)"))?;
    let mut config = FetchConfig::new(endpoint, model);
    config.parallelism = settings.parallelism;
    Ok(config)
}

fn fetch_for(settings: &Settings, benchmark: &[BenchmarkSample]) -> Result<Vec<TokenizedSample>> {
    let config = fetch_config(settings)?;
    let sources: Vec<(String, String)> = benchmark
        .iter()
        .map(|s| (s.sample_id.clone(), s.source.clone()))
        .collect();
    Ok(fetch_logprobs(&config, &sources)?)
}

fn fetch(ctx: &Ctx, args: &FetchArgs) -> Result<()> {
    let benchmark = load_benchmark(&args.benchmark)?;
    let samples = fetch_for(&ctx.settings, &benchmark)?;
    ctx.emit(&save_logprobs(&samples))
}

fn eval_config(settings: &Settings) -> EvalConfig {
    EvalConfig {
        ratio: settings.ratio,
        seed: settings.seed,
        k: settings.k,
        epsilon: settings.epsilon,
        length_threshold: settings.length_threshold,
    }
}

fn emit_report(ctx: &Ctx, records: &[ScoreRecord], metrics: &MetricArgs) -> Result<()> {
    let report = evaluate(records, &eval_config(&ctx.settings))?;
    if let Some(path) = &metrics.table_csv {
        write_file(path, &table1_csv(std::slice::from_ref(&report)))?;
    }
    if let Some(path) = &metrics.roc_csv {
        write_file(path, &roc_csv(&report))?;
    }
    ctx.emit_json(&report)
}

fn score(ctx: &Ctx, args: &ScoreArgs) -> Result<()> {
    let s = &ctx.settings;
    let benchmark = args.benchmark.as_deref().map(load_benchmark).transpose()?;
    let samples = match (&args.logprobs, &benchmark) {
        (Some(path), _) => load_samples(path)?,
        (None, Some(bench)) if s.endpoint.is_some() => fetch_for(s, bench)?,
        _ => bail!("score needs --logprobs, or --benchmark with an endpoint to fetch from"),
    };
    let labels: HashMap<&str, Label> = benchmark
        .iter()
        .flatten()
        .map(|b| (b.sample_id.as_str(), b.label))
        .collect();
    let freq = match (&args.freq, &args.freq_from) {
        (Some(path), _) => {
            let text = String::from_utf8(read(path)?).context("frequency table is not UTF-8")?;
            Some(CorpusFrequencyTable::load(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?)
        }
        (None, Some(path)) => Some(CorpusFrequencyTable::from_samples(&load_samples(path)?)),
        (None, None) => None,
    };
    let set = match args.ablate {
        Some(c) => s.conventions.without(c),
        None => s.conventions.clone(),
    };
    let outcomes = score_samples(
        &samples,
        |id| labels.get(id).copied(),
        &set,
        s.prune_mode,
        freq.as_ref(),
    );
    let mut records = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        let outcome = outcome?;
        if let Some(e) = &outcome.parse_error {
            eprintln!("skipped SPP for {}: {e}", outcome.record.sample_id);
        } else if outcome.record.spp.is_none() {
            eprintln!(
                "skipped SPP for {}: every scored token was pruned",
                outcome.record.sample_id
            );
        }
        records.push(outcome.record);
    }
    if args.eval {
        return emit_report(ctx, &records, &args.metrics);
    }
    let mut out = String::new();
    for r in &records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    ctx.emit(&out)
}

fn load_records(path: &Path, benchmark: Option<&Path>) -> Result<Vec<ScoreRecord>> {
    let labels = label_map(benchmark)?;
    let text = String::from_utf8(read(path)?).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut r: ScoreRecord =
            serde_json::from_str(line).with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        if let Some(&l) = labels.get(&r.sample_id) {
            r.label = Some(l);
        }
        records.push(r);
    }
    Ok(records)
}

fn eval(ctx: &Ctx, args: &EvalArgs) -> Result<()> {
    let records = load_records(&args.scores, args.benchmark.as_deref())?;
    emit_report(ctx, &records, &args.metrics)
}

fn ablate(ctx: &Ctx, args: &AblateArgs) -> Result<()> {
    let labels = label_map(Some(&args.benchmark))?;
    let corpus = load_samples(&args.logprobs)?
        .into_iter()
        .map(|sample| {
            let label = *labels
                .get(&sample.sample_id)
                .ok_or_else(|| anyhow!("sample `{}` is not in the benchmark", sample.sample_id))?;
            Ok(LabeledSample { sample, label })
        })
        .collect::<Result<Vec<_>>>()?;
    let s = &ctx.settings;
    ctx.emit_json(&run_ablations(&corpus, &s.conventions, s.prune_mode)?)
}

#[derive(Serialize)]
struct SweepOutput {
    method: String,
    #[serde(flatten)]
    sweep: synprune_core::evalharness::Sweep,
}

fn sweep(ctx: &Ctx, args: &SweepArgs) -> Result<()> {
    let records = load_records(&args.scores, args.benchmark.as_deref())?;
    let mut pairs = Vec::new();
    for r in &records {
        let label = r
            .label
            .ok_or_else(|| anyhow!("sample `{}` has no label", r.sample_id))?;
        if let Some(v) = r.method(args.method, ctx.settings.k) {
            pairs.push((v, label));
        }
    }
    let grid = args.grid.clone().unwrap_or_else(|| default_grid(&pairs));
    let sweep = f1_sweep(&pairs, &grid)?;
    ctx.emit_json(&SweepOutput {
        method: args.method.to_string(),
        sweep,
    })
}

fn stats(ctx: &Ctx, args: &StatsArgs) -> Result<()> {
    let corpus: Vec<(String, Vec<ByteSpan>)> = match (&args.benchmark, &args.logprobs) {
        (Some(path), _) => load_benchmark(path)?
            .into_iter()
            .map(|b| {
                let spans = tokenize(&b.source).map(|t| lexeme_spans(&t)).unwrap_or_default();
                (b.source, spans)
            })
            .collect(),
        (None, Some(path)) => load_samples(path)?
            .into_iter()
            .map(|s| {
                let spans = s.spans();
                (s.source, spans)
            })
            .collect(),
        (None, None) => unreachable!("clap requires one input"),
    };
    let refs: Vec<(&str, &[ByteSpan])> = corpus.iter().map(|(s, sp)| (s.as_str(), sp.as_slice())).collect();
    let s = &ctx.settings;
    let stats = convention_stats(&refs, &s.conventions, s.prune_mode);
    if stats.skipped > 0 {
        eprintln!("{} samples failed to parse and were skipped", stats.skipped);
    }
    ctx.emit_json(&stats)
}

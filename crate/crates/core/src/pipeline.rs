//! The commands behind the `snet` binary, callable as a library.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_extractor, load_synthesis};
use crate::config::RunConfig;
use crate::encoder::load_pretrained;
use crate::error::{Error, Result};
use crate::extraction::{
    evaluate_ensemble, evaluate_extractor, predict_ensemble, train_extraction, train_rank_then_extract, EpochLog,
    ExtractionMode, ExtractionModel, Extractor, Ensemble,
};
use crate::metrics::{EvalReport, Scored};
use crate::parallel::parallel_map;
use crate::synthesis::{generate, train_synthesis, SynthesisModel};
use crate::text::{
    build_extraction_training_set, build_synthesis_training_set, concat_passages, generate_synthetic_corpus, gold_span_for,
    load_dataset, project_span, tokenize, write_dataset, RcExample, SpanExtractor, SpanSearch, Vocabulary,
};

/// One answered question in a run output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub query_id: u64,
    /// Extracted evidence text.
    pub span: String,
    /// Raw generated text; absent in extraction-only runs.
    pub generated: Option<String>,
    /// Final answer after post-processing.
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passage_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passage_scores: Option<Vec<f32>>,
}

/// Renders one epoch as a key=value log line.
pub fn epoch_line(stage: &str, e: &EpochLog) -> String {
    let mut s = format!("stage={stage} epoch={} loss={:.6}", e.epoch, e.loss);
    if let Some(r) = e.dev_rouge {
        s.push_str(&format!(" rouge={r:.6}"));
    }
    if let Some(p) = e.dev_p_at_1 {
        s.push_str(&format!(" p_at_1={p:.6}"));
    }
    if let Some(x) = e.dev_exact {
        s.push_str(&format!(" em={x:.6}"));
    }
    s
}

fn load_dev(cfg: &RunConfig) -> Result<Vec<RcExample>> {
    cfg.dev_data.as_ref().map_or(Ok(Vec::new()), load_dataset)
}

pub fn cmd_gen_corpus(cfg: &RunConfig, out: &Path) -> Result<usize> {
    let examples = generate_synthetic_corpus(&cfg.corpus(), cfg.seed)?;
    let file = std::fs::File::create(out).map_err(|e| Error::io(out, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_dataset(&examples, &mut w).map_err(|e| Error::io(out, e))?;
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(examples.len())
}

/// Vocabulary over the questions and passages of `examples`.
pub fn extraction_vocab(examples: &[RcExample], max: usize) -> Result<Vocabulary> {
    let streams = examples
        .iter()
        .flat_map(|ex| std::iter::once(ex.question.as_slice()).chain(ex.passages.iter().map(Vec::as_slice)));
    Vocabulary::build(streams, max)
}

/// Vocabulary over questions, passages and answers.
pub fn synthesis_vocab(examples: &[RcExample], max: usize) -> Result<Vocabulary> {
    let streams = examples.iter().flat_map(|ex| {
        std::iter::once(ex.question.as_slice())
            .chain(ex.passages.iter().map(Vec::as_slice))
            .chain(ex.answer_tokens.iter().map(Vec::as_slice))
    });
    Vocabulary::build(streams, max)
}

fn fresh_extractor(cfg: &RunConfig, vocab: Vocabulary, label: &str) -> Result<ExtractionModel> {
    let vectors = match &cfg.word_vectors {
        Some(p) => Some(load_pretrained(p, &vocab, cfg.word_dim)?),
        None => None,
    };
    let mut rng = snet_autodiff::rng::stream(cfg.seed, label);
    ExtractionModel::new(cfg.extraction_model(), vocab, vectors, &mut rng)
}

pub fn cmd_train_extract(cfg: &RunConfig, data: &Path, log: &mut dyn FnMut(&str)) -> Result<Extractor> {
    let examples = load_dataset(data)?;
    let dev = load_dev(cfg)?;
    let vocab = extraction_vocab(&examples, cfg.vocab_size)?;
    let train = cfg.extraction_training();
    let search = SpanSearch::exact();
    match cfg.extraction_mode {
        ExtractionMode::RankThenExtract => {
            let mut ranker = fresh_extractor(cfg, vocab.clone(), "init.ranker")?;
            let mut extractor = fresh_extractor(cfg, vocab, "init.extractor")?;
            let history = train_rank_then_extract(
                &mut ranker,
                &mut extractor,
                &examples,
                &dev,
                &train,
                cfg.extraction_threshold,
                &search,
                |stage, e| log(&epoch_line(stage, e)),
            )?;
            if let Some(last) = history.last().filter(|e| e.dev_rouge.is_some()) {
                log(&epoch_line("rank-then-extract", last));
            }
            Ok(Extractor::RankThenExtract { ranker, extractor })
        }
        mode => {
            let pairs = build_extraction_training_set(&examples, cfg.extraction_threshold, &search)?;
            if pairs.is_empty() {
                return Err(Error::Data(format!(
                    "no training example has a gold span with ROUGE-L above {}",
                    cfg.extraction_threshold
                )));
            }
            log(&format!("stage=extract pairs={} examples={}", pairs.len(), examples.len()));
            let mut model = fresh_extractor(cfg, vocab, "init")?;
            train_extraction(&mut model, &examples, &pairs, &dev, &train, mode, |e| log(&epoch_line("extract", e)))?;
            Ok(Extractor::Single(model))
        }
    }
}

fn load_extractors(ckpts: &[PathBuf]) -> Result<Vec<Extractor>> {
    let members = ckpts.iter().map(load_extractor).collect::<Result<Vec<_>>>()?;
    if let Some(first) = members.first() {
        for (m, path) in members.iter().zip(ckpts).skip(1) {
            if m.vocab() != first.vocab() {
                return Err(Error::Compatibility(format!(
                    "{} has a different vocabulary from {}",
                    path.display(),
                    ckpts[0].display()
                )));
            }
        }
    }
    Ok(members)
}

/// Trains the synthesis model on gold-span pairs, plus extracted-span pairs
/// when extraction checkpoints are given.
pub fn cmd_train_synth(
    cfg: &RunConfig,
    data: &Path,
    extraction_ckpts: &[PathBuf],
    part2: bool,
    log: &mut dyn FnMut(&str),
) -> Result<SynthesisModel> {
    if part2 && extraction_ckpts.is_empty() {
        return Err(Error::Config("extracted-span training pairs need an extraction checkpoint (--ckpt)".into()));
    }
    let members = load_extractors(extraction_ckpts)?;
    let examples = load_dataset(data)?;
    let dev = load_dev(cfg)?;
    let search = SpanSearch::exact();
    let ensemble = Ensemble(&members);
    let extractor: Option<&dyn SpanExtractor> = (!members.is_empty()).then_some(&ensemble as &dyn SpanExtractor);
    let pairs = build_synthesis_training_set(&examples, extractor, cfg.synthesis_threshold, &search)?;
    if pairs.is_empty() {
        return Err(Error::Data(format!(
            "no synthesis training pairs: no gold span has ROUGE-L above {} and no extraction checkpoint was given",
            cfg.synthesis_threshold
        )));
    }
    let dev_pairs = build_synthesis_training_set(&dev, extractor, cfg.synthesis_threshold, &search)?;
    log(&format!("stage=synth pairs={} examples={}", pairs.len(), examples.len()));
    let vocab = synthesis_vocab(&examples, cfg.synth_vocab_size)?;
    let mut model = SynthesisModel::new(cfg.synthesis_model(), vocab, &mut snet_autodiff::rng::stream(cfg.seed, "init.synth"))?;
    train_synthesis(&mut model, &pairs, &dev_pairs, &cfg.synthesis_training(), |e| log(&epoch_line("synth", e)))?;
    Ok(model)
}

/// Extraction (ensembled over `members`), then synthesis when a model is given.
pub fn run_examples(
    members: &[Extractor],
    synth: Option<&SynthesisModel>,
    examples: &[RcExample],
    beam: usize,
    max_len: usize,
) -> Result<Vec<RunRecord>> {
    parallel_map(examples, |ex| {
        let pred = predict_ensemble(members, ex)?;
        let (_, table) = concat_passages(ex);
        let (p, s, e) = project_span(&table, pred.span.0, pred.span.1);
        let passage = &ex.passages[p];
        let span = passage[s..=e].join(" ");
        let (generated, answer) = match synth {
            Some(model) => {
                let g = generate(model, &ex.question, passage, (s, e), beam, max_len)?;
                (Some(g.raw.join(" ")), g.answer.join(" "))
            }
            None => (None, span.clone()),
        };
        Ok(RunRecord {
            query_id: ex.query_id,
            span,
            generated,
            answer,
            passage_index: Some(p),
            passage_scores: Some(pred.passage_scores),
        })
    })
    .into_iter()
    .collect()
}

pub fn write_records(records: &[RunRecord], out: &Path) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).map_err(|e| Error::Data(e.to_string()))?);
        text.push('\n');
    }
    std::fs::write(out, text).map_err(|e| Error::io(out, e))
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Schema {
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn cmd_run(
    cfg: &RunConfig,
    data: &Path,
    extraction_ckpts: &[PathBuf],
    synth_ckpt: Option<&Path>,
) -> Result<Vec<RunRecord>> {
    if extraction_ckpts.is_empty() {
        return Err(Error::Usage("run needs at least one extraction checkpoint (--ckpt)".into()));
    }
    let members = load_extractors(extraction_ckpts)?;
    let synth = synth_ckpt.map(load_synthesis).transpose()?;
    let examples = load_dataset(data)?;
    run_examples(&members, synth.as_ref(), &examples, cfg.beam, cfg.max_len)
}

/// Scores run records against the dataset references.
pub fn evaluate_records(records: &[RunRecord], examples: &[RcExample]) -> Result<EvalReport> {
    let by_id: HashMap<u64, &RcExample> = examples.iter().map(|e| (e.query_id, e)).collect();
    let missing: Vec<String> = records
        .iter()
        .filter(|r| !by_id.contains_key(&r.query_id))
        .map(|r| r.query_id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Data(format!("answers for unknown query ids: {}", missing.join(", "))));
    }
    let mut items = Vec::new();
    let mut rankings = Vec::new();
    let mut ranked_all = true;
    for r in records {
        let ex = by_id[&r.query_id];
        let refs: Vec<Vec<String>> = ex.answer_tokens.iter().filter(|a| !a.is_empty()).cloned().collect();
        if refs.is_empty() {
            continue;
        }
        let oracle = gold_span_for(ex, &SpanSearch::exact())?.rouge;
        items.push(Scored {
            query_id: r.query_id,
            hypothesis: tokenize(&r.answer),
            references: refs,
            oracle,
        });
        match (&r.passage_scores, ex.selected_passage) {
            (Some(scores), Some(sel)) => rankings.push((scores.clone(), sel)),
            (None, Some(_)) => ranked_all = false,
            _ => {}
        }
    }
    let rankings = (ranked_all && !rankings.is_empty()).then_some(rankings.as_slice());
    EvalReport::compute(&items, rankings)
}

pub fn cmd_eval(answers: &Path, data: &Path) -> Result<EvalReport> {
    evaluate_records(&read_records(answers)?, &load_dataset(data)?)
}

/// Greedy ensemble selection: candidates ordered by their own dev ROUGE-L
/// (ties by file name), each kept only if it strictly improves the ensemble.
pub fn select_ensemble(candidates: &[(PathBuf, Extractor)], dev: &[RcExample], log: &mut dyn FnMut(&str)) -> Result<Vec<PathBuf>> {
    if candidates.is_empty() {
        return Err(Error::Usage("ensemble selection needs at least one candidate".into()));
    }
    let mut scored = Vec::with_capacity(candidates.len());
    for (i, (path, m)) in candidates.iter().enumerate() {
        let s = evaluate_extractor(m, dev)?.rouge_l;
        log(&format!("candidate={} rouge={s:.6}", path.display()));
        scored.push((s, i));
    }
    let name = |i: usize| candidates[i].0.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| name(a.1).cmp(&name(b.1)))
            .then_with(|| candidates[a.1].0.cmp(&candidates[b.1].0))
    });
    let mut kept = vec![scored[0].1];
    let mut best = scored[0].0;
    log(&format!("keep={} ensemble_rouge={best:.6}", candidates[kept[0]].0.display()));
    for &(_, i) in &scored[1..] {
        let mut trial: Vec<Extractor> = kept.iter().map(|&k| candidates[k].1.clone()).collect();
        trial.push(candidates[i].1.clone());
        let s = evaluate_ensemble(&trial, dev)?.rouge_l;
        if s > best {
            best = s;
            kept.push(i);
            log(&format!("keep={} ensemble_rouge={s:.6}", candidates[i].0.display()));
        } else {
            log(&format!("discard={} ensemble_rouge={s:.6}", candidates[i].0.display()));
        }
    }
    Ok(kept.into_iter().map(|i| candidates[i].0.clone()).collect())
}

pub fn cmd_ensemble_select(ckpts: &[PathBuf], data: &Path, log: &mut dyn FnMut(&str)) -> Result<Vec<PathBuf>> {
    let members = load_extractors(ckpts)?;
    let dev = load_dataset(data)?;
    let candidates: Vec<(PathBuf, Extractor)> = ckpts.iter().cloned().zip(members).collect();
    select_ensemble(&candidates, &dev, log)
}


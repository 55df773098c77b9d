//! The stages behind the `dlu` subcommands.
//!
//! Each stage validates its configuration and inputs before writing
//! anything; every output file is written to a temp file and renamed into
//! place. Rankings and reports depend only on the configuration and input
//! files, so reruns are byte-identical. Wall-clock timings go to a separate
//! sidecar file for that reason.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{self, RetrievalInstance};
use crate::dcca::{self, DccaModel, NetworkSpec};
use crate::discourse::{build_discourse, DiscourseConfig, DiscourseState};
use crate::embedding::{tokenize, EmbeddingProvider, UtteranceMatrix};
use crate::eval::{self, EvalReport};
use crate::io::{read_jsonl, write_atomic, write_jsonl};
use crate::retrieval::{rank_with, Aggregation, CandidateSet, RankingRecord};
use crate::{Error, Result};

pub const INSTANCES_FILE: &str = "instances.jsonl";
pub const TRIPLES_FILE: &str = "triples.jsonl";
pub const RANKINGS_FILE: &str = "rankings.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestSummary {
    pub dialogues: usize,
    pub triples: usize,
    pub instances: usize,
    pub instances_path: PathBuf,
}

/// Corpus → triples and retrieval instances (JSON lines).
pub fn ingest(cfg: &RunConfig) -> Result<IngestSummary> {
    cfg.validate()?;
    cfg.require_file(&cfg.corpus.path, "corpus")?;
    let dialogues = data::load_corpus(&cfg.corpus.path, cfg.corpus.format)?;
    let triples = data::make_triples(&dialogues, cfg.negatives, cfg.seed)?;
    let instances = data::make_instances(&dialogues, cfg.num_candidates, cfg.seed)?;
    let instances_path = cfg.output_dir.join(INSTANCES_FILE);
    write_jsonl(&cfg.output_dir.join(TRIPLES_FILE), &triples)?;
    write_jsonl(&instances_path, &instances)?;
    Ok(IngestSummary {
        dialogues: dialogues.len(),
        triples: triples.len(),
        instances: instances.len(),
        instances_path,
    })
}

fn embed_turns(provider: &EmbeddingProvider, turns: &[String]) -> Result<Vec<UtteranceMatrix>> {
    turns
        .iter()
        .map(|t| tokenize(t))
        .filter(|toks| !toks.is_empty())
        .map(|toks| provider.embed_utterance(&toks))
        .collect()
}

fn context_window(inst: &RetrievalInstance, max_turns: usize) -> &[String] {
    let n = inst.context.len();
    if max_turns == 0 || max_turns >= n {
        &inst.context
    } else {
        &inst.context[n - max_turns..]
    }
}

/// Discourse state for an instance's (possibly truncated) context.
pub fn instance_discourse(
    inst: &RetrievalInstance,
    provider: &EmbeddingProvider,
    dcfg: &DiscourseConfig,
    max_turns: usize,
) -> Result<DiscourseState> {
    let context = embed_turns(provider, context_window(inst, max_turns))?;
    build_discourse(&context, dcfg)
}

/// Builds the discourse for one instance and ranks its candidates.
/// Candidate ids are candidate indices.
pub fn rank_instance(
    inst: &RetrievalInstance,
    provider: &EmbeddingProvider,
    dcfg: &DiscourseConfig,
    agg: Aggregation,
    max_turns: usize,
) -> Result<RankingRecord> {
    let state = instance_discourse(inst, provider, dcfg, max_turns)?;
    let candidates = inst
        .candidates
        .iter()
        .enumerate()
        .map(|(i, c)| Ok((i as u32, provider.embed_text(c)?)))
        .collect::<Result<Vec<_>>>()?;
    let set = CandidateSet::new(candidates, Some(inst.truth_index as u32))?;
    Ok(RankingRecord::new(inst.id, rank_with(&state, &set, agg)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Timing {
    context_id: u32,
    elapsed_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankSummary {
    pub ranked: usize,
    pub failed: Vec<(u32, String)>,
    pub rankings_path: PathBuf,
}

/// Ranks every instance in `instances_path`. Failed instances are logged,
/// recorded in the timings file and skipped; an error is returned only if
/// nothing could be ranked.
pub fn rank(cfg: &RunConfig, instances_path: &Path) -> Result<RankSummary> {
    cfg.validate()?;
    cfg.require_file(instances_path, "instances file")?;
    let provider = cfg.provider()?;
    let instances: Vec<RetrievalInstance> = read_jsonl(instances_path)?;
    if instances.is_empty() {
        return Err(Error::InvalidConfig(format!("{} contains no instances", instances_path.display())));
    }
    let dcfg = cfg.discourse_config();
    let results: Vec<(Result<RankingRecord>, f64)> = instances
        .par_iter()
        .map(|inst| {
            let start = Instant::now();
            let r = rank_instance(inst, &provider, &dcfg, cfg.aggregation, cfg.max_turns);
            (r, start.elapsed().as_secs_f64() * 1e3)
        })
        .collect();

    let mut records = Vec::new();
    let mut timings = Vec::new();
    let mut failed = Vec::new();
    for (inst, (res, ms)) in instances.iter().zip(results) {
        match res {
            Ok(rec) => {
                records.push(rec);
                timings.push(Timing {
                    context_id: inst.id,
                    elapsed_ms: ms,
                    error: None,
                });
            }
            Err(e) => {
                log::warn!("instance {}: {e}", inst.id);
                timings.push(Timing {
                    context_id: inst.id,
                    elapsed_ms: ms,
                    error: Some(e.to_string()),
                });
                failed.push((inst.id, e.to_string()));
            }
        }
    }
    if records.is_empty() {
        return Err(Error::Misaligned(format!("all {} instances failed to rank", instances.len())));
    }
    let rankings_path = cfg.output_dir.join(RANKINGS_FILE);
    write_jsonl(&rankings_path, &records)?;
    write_jsonl(&cfg.output_dir.join(TIMINGS_FILE), &timings)?;
    Ok(RankSummary {
        ranked: records.len(),
        failed,
        rankings_path,
    })
}

/// Evaluates rankings against their instances and writes JSON + CSV reports.
/// Instances without a ranking (failed during `rank`) are dropped; any other
/// disagreement is an error naming the first mismatch.
pub fn evaluate(cfg: &RunConfig, rankings_path: &Path, instances_path: &Path) -> Result<EvalReport> {
    cfg.validate()?;
    cfg.require_file(rankings_path, "rankings file")?;
    cfg.require_file(instances_path, "instances file")?;
    let rankings: Vec<RankingRecord> = read_jsonl(rankings_path)?;
    let instances: Vec<RetrievalInstance> = read_jsonl(instances_path)?;

    let mut aligned = Vec::with_capacity(rankings.len());
    let mut it = instances.iter();
    for r in &rankings {
        match it.by_ref().find(|i| i.id == r.context_id) {
            Some(inst) => aligned.push(inst.clone()),
            None => {
                return Err(Error::Misaligned(format!(
                    "ranking for context {} has no matching instance",
                    r.context_id
                )))
            }
        }
    }
    let lm_refs: Vec<_> = instances.iter().map(|i| tokenize(i.truth())).collect();
    let report = eval::evaluate_run(&rankings, &aligned, &lm_refs, &cfg.eval_options(), cfg.echo())?;
    write_report(&report, &cfg.output_dir)?;
    Ok(report)
}

pub fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    write_atomic(&dir.join(REPORT_JSON), json.as_bytes())?;
    write_atomic(&dir.join(REPORT_CSV), report.to_csv().as_bytes())
}

/// Human-readable summary of a saved report.
pub fn format_report(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("instances: {}\n", report.num_instances));
    let mut ks: Vec<_> = report.recall_at.iter().collect();
    ks.sort_by(|a, b| b.0.cmp(a.0));
    for (k, r) in ks {
        out.push_str(&format!("Recall@{k:<3} {:>6.2}\n", r * 100.0));
    }
    out.push_str(&format!("BLEU       {:.4}\n", report.bleu));
    out.push_str(&format!("ROUGE-1 F  {:.4}\n", report.rouge1_f));
    out.push_str(&format!("ROUGE-L F  {:.4}\n", report.rouge_l_f));
    out.push_str(&format!("distinct-1 {:.4}\n", report.distinct1));
    out.push_str(&format!("distinct-2 {:.4}\n", report.distinct2));
    out.push_str(&format!("perplexity {:.4}\n", report.perplexity));
    out
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Trains a DCCA model on one utterance pair with the configured
/// architecture and saves it.
pub fn train_pair(cfg: &RunConfig, utt1: &str, utt2: &str, out: &Path) -> Result<DccaModel> {
    cfg.validate()?;
    let provider = cfg.provider()?;
    let u1 = provider.embed_text(utt1)?;
    let u2 = provider.embed_text(utt2)?;
    let k = u1.len().min(u2.len());
    let spec = |input_dim| NetworkSpec {
        input_dim,
        hidden_widths: cfg.train.hidden_widths.clone(),
        output_dim: k,
        activation: cfg.train.activation,
    };
    let mut tc = cfg.train_config();
    tc.cca = tc.cca.with_components(k);
    let model = dcca::train(&u1, &u2, spec(u1.len()), spec(u2.len()), &tc)?;
    model.save(out)?;
    Ok(model)
}

/// Discourse dump for the instance with `id` (or for an ad-hoc context).
pub fn extract_discourse(cfg: &RunConfig, context: &[String], out: &Path) -> Result<DiscourseState> {
    cfg.validate()?;
    let provider = cfg.provider()?;
    let turns = embed_turns(&provider, context)?;
    let state = build_discourse(&turns, &cfg.discourse_config())?;
    write_jsonl(out, &state.records())?;
    Ok(state)
}

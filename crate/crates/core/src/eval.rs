//! Ranking and response-quality metrics.
//!
//! Recall_n@k over ranked candidate lists, sentence-level BLEU and ROUGE
//! between the selected and true responses, distinct-n diversity, and
//! perplexity under a bigram add-one language model. The language model is
//! a local stand-in; its perplexities are only comparable within this tool.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::data::RetrievalInstance;
use crate::embedding::{tokenize, Token};
use crate::retrieval::RankingRecord;
use crate::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Fraction of `(order, truth_id)` pairs whose truth appears in the first
/// `k` entries of `order`.
pub fn recall_at_k<I: PartialEq>(rankings: &[(Vec<I>, I)], k: usize) -> f64 {
    if rankings.is_empty() {
        return 0.0;
    }
    let hits = rankings
        .iter()
        .filter(|(order, truth)| order.iter().take(k).any(|id| id == truth))
        .count();
    hits as f64 / rankings.len() as f64
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_overlap<T: Eq + Hash>(cand: &[T], reference: &[T], n: usize) -> usize {
    let r = ngram_counts(reference, n);
    ngram_counts(cand, n)
        .into_iter()
        .map(|(g, c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum()
}

/// Sentence BLEU, n = 1..4, add-one smoothed precisions, geometric mean,
/// brevity penalty. An exact match scores 1.0; an empty candidate 0.0.
pub fn bleu<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    if candidate == reference {
        return 1.0;
    }
    let log_p: f64 = (1..=4)
        .map(|n| {
            let total = (candidate.len() + 1).saturating_sub(n);
            let matched = clipped_overlap(candidate, reference, n);
            ((matched + 1) as f64 / (total + 1) as f64).ln()
        })
        .sum::<f64>()
        / 4.0;
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    bp * log_p.exp()
}

fn f1(overlap: usize, cand_len: usize, ref_len: usize) -> f64 {
    if overlap == 0 || cand_len == 0 || ref_len == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand_len as f64;
    let r = overlap as f64 / ref_len as f64;
    2.0 * p * r / (p + r)
}

/// Unigram-overlap F1 with clipped counts.
pub fn rouge1<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> f64 {
    f1(clipped_overlap(candidate, reference, 1), candidate.len(), reference.len())
}

fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Longest-common-subsequence F1.
#[allow(non_snake_case)]
pub fn rougeL<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> f64 {
    f1(lcs_len(candidate, reference), candidate.len(), reference.len())
}

/// Unique n-grams over total n-grams, pooled across responses.
pub fn distinct_n<T: Eq + Hash>(responses: &[Vec<T>], n: usize) -> f64 {
    let mut unique: HashMap<&[T], ()> = HashMap::new();
    let mut total = 0;
    for r in responses {
        if n == 0 || r.len() < n {
            continue;
        }
        for g in r.windows(n) {
            unique.insert(g, ());
            total += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        unique.len() as f64 / total as f64
    }
}

const BOS: &str = "<s>";
const EOS: &str = "</s>";
const UNK: &str = "<unk>";

/// Bigram language model with add-one smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramLm {
    pub order: usize,
    vocab: HashMap<String, u32>,
    unigrams: HashMap<u32, u64>,
    bigrams: HashMap<(u32, u32), u64>,
}

impl NgramLm {
    /// Number of predictable symbols: reference words plus `</s>` and `<unk>`.
    pub fn vocab_size(&self) -> usize {
        self.vocab.len() - 1
    }

    fn id(&self, w: &str) -> u32 {
        self.vocab.get(w).copied().unwrap_or(self.vocab[UNK])
    }

    fn sentence_ids(&self, tokens: &[Token]) -> Vec<u32> {
        let mut ids = Vec::with_capacity(tokens.len() + 2);
        ids.push(self.vocab[BOS]);
        ids.extend(tokens.iter().map(|t| self.id(t.as_str())));
        ids.push(self.vocab[EOS]);
        ids
    }

    /// `P(next | prev)` with add-one smoothing.
    pub fn prob(&self, prev: &str, next: &str) -> f64 {
        let (a, b) = (self.id(prev), self.id(next));
        let c_ab = self.bigrams.get(&(a, b)).copied().unwrap_or(0) as f64;
        let c_a = self.unigrams.get(&a).copied().unwrap_or(0) as f64;
        (c_ab + 1.0) / (c_a + self.vocab_size() as f64)
    }
}

/// Fits the bigram model on reference sentences.
pub fn train_lm(references: &[Vec<Token>]) -> Result<NgramLm> {
    if references.is_empty() {
        return Err(Error::EmptyResponses);
    }
    let mut vocab = HashMap::new();
    for sym in [BOS, EOS, UNK] {
        let next = vocab.len() as u32;
        vocab.insert(sym.to_string(), next);
    }
    for t in references.iter().flatten() {
        let next = vocab.len() as u32;
        vocab.entry(t.as_str().to_string()).or_insert(next);
    }
    let mut lm = NgramLm {
        order: 2,
        vocab,
        unigrams: HashMap::new(),
        bigrams: HashMap::new(),
    };
    for r in references {
        let ids = lm.sentence_ids(r);
        for w in ids.windows(2) {
            *lm.unigrams.entry(w[0]).or_insert(0) += 1;
            *lm.bigrams.entry((w[0], w[1])).or_insert(0) += 1;
        }
    }
    Ok(lm)
}

/// exp of the mean negative log-probability per predicted symbol
/// (every token plus the end-of-sentence marker).
pub fn perplexity(lm: &NgramLm, responses: &[Vec<Token>]) -> Result<f64> {
    if responses.is_empty() {
        return Err(Error::EmptyResponses);
    }
    let v = lm.vocab_size() as f64;
    let mut nll = 0.0;
    let mut count = 0usize;
    for r in responses {
        let ids = lm.sentence_ids(r);
        for w in ids.windows(2) {
            let c_ab = lm.bigrams.get(&(w[0], w[1])).copied().unwrap_or(0) as f64;
            let c_a = lm.unigrams.get(&w[0]).copied().unwrap_or(0) as f64;
            nll -= ((c_ab + 1.0) / (c_a + v)).ln();
            count += 1;
        }
    }
    Ok((nll / count as f64).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub recall_at: BTreeMap<usize, f64>,
    pub bleu: f64,
    pub rouge1_f: f64,
    #[serde(rename = "rougeL_f")]
    pub rouge_l_f: f64,
    pub distinct1: f64,
    pub distinct2: f64,
    pub perplexity: f64,
    pub num_instances: usize,
    pub config_echo: serde_json::Value,
}

impl EvalReport {
    /// Header plus one data row. Recall values are written as percentages.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["schema_version".to_string(), "num_instances".to_string()];
        let mut row = vec![self.schema_version.to_string(), self.num_instances.to_string()];
        for (k, r) in &self.recall_at {
            header.push(format!("recall_at_{k}_pct"));
            row.push(format!("{:.4}", r * 100.0));
        }
        for (name, v) in [
            ("bleu", self.bleu),
            ("rouge1_f", self.rouge1_f),
            ("rougeL_f", self.rouge_l_f),
            ("distinct1", self.distinct1),
            ("distinct2", self.distinct2),
            ("perplexity", self.perplexity),
        ] {
            header.push(name.to_string());
            row.push(format!("{v:.6}"));
        }
        format!("{}\n{}\n", header.join(","), row.join(","))
    }
}

/// Settings for [`evaluate_run`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    /// BLEU/ROUGE take the best of the top `best_of` selections
    /// (1 = top-1 only). Distinct-n and perplexity always use top-1.
    pub best_of: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            ks: vec![1, 3, 5, 10, 20],
            best_of: 1,
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Scores aligned rankings against their instances. `rankings[i]` must
/// describe `instances[i]`; candidate ids are candidate indices.
pub fn evaluate_run(
    rankings: &[RankingRecord],
    instances: &[RetrievalInstance],
    lm_refs: &[Vec<Token>],
    opts: &EvalOptions,
    config_echo: serde_json::Value,
) -> Result<EvalReport> {
    if rankings.len() != instances.len() {
        return Err(Error::Misaligned(format!(
            "{} rankings for {} instances",
            rankings.len(),
            instances.len()
        )));
    }
    if rankings.is_empty() {
        return Err(Error::EmptyResponses);
    }
    if opts.ks.is_empty() || opts.ks.contains(&0) || opts.best_of == 0 {
        return Err(Error::InvalidConfig("ks must be non-empty and positive; best_of >= 1".into()));
    }
    let mut pairs = Vec::with_capacity(rankings.len());
    let mut bleus = Vec::new();
    let mut r1s = Vec::new();
    let mut rls = Vec::new();
    let mut top1 = Vec::new();
    for (rk, inst) in rankings.iter().zip(instances) {
        if rk.context_id != inst.id {
            return Err(Error::Misaligned(format!(
                "ranking for context {} paired with instance {}",
                rk.context_id, inst.id
            )));
        }
        if rk.order.is_empty() || rk.order.iter().any(|&c| c as usize >= inst.candidates.len()) {
            return Err(Error::Misaligned(format!("ranking for context {} has invalid candidate ids", rk.context_id)));
        }
        pairs.push((rk.order.clone(), inst.truth_index as u32));
        let truth = tokenize(inst.truth());
        let picks: Vec<Vec<Token>> = rk
            .order
            .iter()
            .take(opts.best_of)
            .map(|&c| tokenize(&inst.candidates[c as usize]))
            .collect();
        let best = |f: fn(&[Token], &[Token]) -> f64| picks.iter().map(|p| f(p, &truth)).fold(0.0, f64::max);
        bleus.push(best(bleu));
        r1s.push(best(rouge1));
        rls.push(best(rougeL));
        top1.push(picks[0].clone());
    }
    let lm = train_lm(lm_refs)?;
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        recall_at: opts.ks.iter().map(|&k| (k, recall_at_k(&pairs, k))).collect(),
        bleu: mean(&bleus),
        rouge1_f: mean(&r1s),
        rouge_l_f: mean(&rls),
        distinct1: distinct_n(&top1, 1),
        distinct2: distinct_n(&top1, 2),
        perplexity: perplexity(&lm, &top1)?,
        num_instances: rankings.len(),
        config_echo,
    })
}

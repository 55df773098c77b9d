//! Candidate scoring against a discourse state.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discourse::DiscourseState;
use crate::embedding::{mean_pool, UtteranceMatrix};
use crate::{Error, Result, Vector};

/// How per-token cosines are reduced to one score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Aggregation::Max),
            "mean" => Ok(Aggregation::Mean),
            other => Err(Error::InvalidConfig(format!("unknown aggregation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub candidates: Vec<(u32, UtteranceMatrix)>,
    pub truth_id: Option<u32>,
}

impl CandidateSet {
    pub fn new(candidates: Vec<(u32, UtteranceMatrix)>, truth_id: Option<u32>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidCandidates("no candidates".into()));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = candidates.iter().find(|(id, _)| !seen.insert(*id)) {
            return Err(Error::InvalidCandidates(format!("duplicate id {}", dup.0)));
        }
        if let Some(t) = truth_id {
            if !seen.contains(&t) {
                return Err(Error::InvalidCandidates(format!("truth id {t} is not a candidate")));
            }
        }
        Ok(Self { candidates, truth_id })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidates {
    pub scores: BTreeMap<u32, f64>,
    /// Ids by descending score; ties go to the lower id.
    pub order: Vec<u32>,
}

/// One line of a rankings dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRecord {
    pub context_id: u32,
    pub order: Vec<u32>,
    pub scores: BTreeMap<u32, f64>,
}

impl RankingRecord {
    pub fn new(context_id: u32, ranked: RankedCandidates) -> Self {
        Self {
            context_id,
            order: ranked.order,
            scores: ranked.scores,
        }
    }
}

fn cosine(a: &Vector, b: &Vector) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (a.dot(b) / denom).clamp(-1.0, 1.0)
}

/// Cosine between the mean-pooled response and the discourse tokens,
/// reduced by `agg`. A zero pooled vector scores −1.
pub fn score_candidate_with(state: &DiscourseState, response: &UtteranceMatrix, agg: Aggregation) -> Result<f64> {
    if state.is_empty() {
        return Err(Error::EmptyDiscourse);
    }
    if response.dim_p() != state.dim_p {
        return Err(Error::DimensionMismatch(format!(
            "response has p = {}, state has p = {}",
            response.dim_p(),
            state.dim_p
        )));
    }
    let pooled = mean_pool(response);
    if pooled.norm() == 0.0 {
        return Ok(-1.0);
    }
    let cosines = state.tokens.iter().map(|t| cosine(&pooled, &t.vector));
    Ok(match agg {
        Aggregation::Max => cosines.fold(f64::NEG_INFINITY, f64::max),
        Aggregation::Mean => cosines.sum::<f64>() / state.len() as f64,
    })
}

pub fn score_candidate(state: &DiscourseState, response: &UtteranceMatrix) -> Result<f64> {
    score_candidate_with(state, response, Aggregation::Max)
}

pub fn rank_with(state: &DiscourseState, cands: &CandidateSet, agg: Aggregation) -> Result<RankedCandidates> {
    let scored = cands
        .candidates
        .par_iter()
        .map(|(id, m)| score_candidate_with(state, m, agg).map(|s| (*id, s)))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<(u32, f64)> = scored.clone();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(RankedCandidates {
        scores: scored.into_iter().collect(),
        order: order.into_iter().map(|(id, _)| id).collect(),
    })
}

/// Max-cosine ranking.
pub fn rank(state: &DiscourseState, cands: &CandidateSet) -> Result<RankedCandidates> {
    rank_with(state, cands, Aggregation::Max)
}

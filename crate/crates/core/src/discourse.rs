//! Discourse tokens.
//!
//! A conversation is folded left to right. The state starts as the first
//! utterance's token rows; each later utterance is correlated against the
//! state (stacked as a tokens × p matrix) and the resulting projection
//! columns are merged in, skipping any candidate whose direction is already
//! represented. Tokens are never removed, so the state only grows.
//!
//! The fold is order-sensitive: permuting the context can change the result.

use serde::{Deserialize, Serialize};

use crate::cca::{fit_cca, CcaConfig};
use crate::dcca::{self, Activation, NetworkSpec, TrainConfig};
use crate::embedding::UtteranceMatrix;
use crate::{Error, Matrix, Result, Vector};

pub const DEFAULT_DEDUP_TAU: f64 = 0.99;

/// One retained projection direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intention {
    /// Unit-length p-vector.
    pub vector: Vector,
    /// Canonical correlation of the component it came from; 1.0 for seeds.
    pub correlation: f64,
    /// (1-based utterance index, component or row index).
    pub origin: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscourseState {
    pub tokens: Vec<Intention>,
    pub dim_p: usize,
    pub dedup_tau: f64,
}

/// JSON-lines record for discourse dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscourseRecord {
    pub index: usize,
    pub vector: Vec<f64>,
    pub correlation: f64,
    pub origin: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    LinearCca,
    Dcca,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear-cca" => Ok(Mode::LinearCca),
            "dcca" => Ok(Mode::Dcca),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

/// Everything a merge step needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscourseConfig {
    pub mode: Mode,
    pub dedup_tau: f64,
    /// `reg_r` and `eig_floor` are used; the component count is set per pair.
    pub cca: CcaConfig,
    /// DCCA optimizer settings (`train.cca` is overridden by `cca`).
    pub train: TrainConfig,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
}

impl Default for DiscourseConfig {
    fn default() -> Self {
        Self {
            mode: Mode::LinearCca,
            dedup_tau: DEFAULT_DEDUP_TAU,
            cca: CcaConfig::default(),
            train: TrainConfig::default(),
            hidden_widths: vec![16],
            activation: Activation::Tanh,
        }
    }
}

fn abs_cosine(a: &Vector, b: &Vector) -> f64 {
    // both unit length
    a.dot(b).abs()
}

fn normalized(v: Vector) -> Option<Vector> {
    let n = v.norm();
    (n.is_finite() && n > 1e-12).then(|| v / n)
}

impl DiscourseState {
    pub fn empty(dim_p: usize, dedup_tau: f64) -> Result<Self> {
        if !(dedup_tau > 0.0 && dedup_tau <= 1.0) {
            return Err(Error::InvalidConfig(format!("dedup_tau must be in (0, 1], got {dedup_tau}")));
        }
        Ok(Self {
            tokens: Vec::new(),
            dim_p,
            dedup_tau,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Appends `vector` (normalized) unless it is within `dedup_tau` of a
    /// retained token. Returns whether it was added.
    fn offer(&mut self, vector: Vector, correlation: f64, origin: (usize, usize)) -> bool {
        let Some(v) = normalized(vector) else {
            return false;
        };
        if self.tokens.iter().any(|t| abs_cosine(&t.vector, &v) >= self.dedup_tau) {
            return false;
        }
        self.tokens.push(Intention {
            vector: v,
            correlation: correlation.clamp(0.0, 1.0),
            origin,
        });
        true
    }

    /// Tokens stacked as rows, mirroring an utterance matrix.
    pub fn as_matrix(&self) -> Result<UtteranceMatrix> {
        if self.tokens.is_empty() {
            return Err(Error::EmptyDiscourse);
        }
        let mut rows = Matrix::zeros(self.tokens.len(), self.dim_p);
        for (i, t) in self.tokens.iter().enumerate() {
            rows.set_row(i, &t.vector.transpose());
        }
        UtteranceMatrix::from_rows(rows)
    }

    /// Largest |cosine| over distinct retained pairs.
    pub fn max_pairwise_abs_cosine(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.tokens.iter().enumerate() {
            for b in &self.tokens[i + 1..] {
                worst = worst.max(abs_cosine(&a.vector, &b.vector));
            }
        }
        worst
    }

    pub fn records(&self) -> Vec<DiscourseRecord> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(index, t)| DiscourseRecord {
                index,
                vector: t.vector.iter().copied().collect(),
                correlation: t.correlation,
                origin: t.origin,
            })
            .collect()
    }
}

/// Initial state: the first utterance's rows, deduplicated.
pub fn seed_state(utt1: &UtteranceMatrix, dedup_tau: f64) -> Result<DiscourseState> {
    if utt1.is_empty() {
        return Err(Error::EmptyUtterance);
    }
    let mut state = DiscourseState::empty(utt1.dim_p(), dedup_tau)?;
    for (i, row) in utt1.rows().row_iter().enumerate() {
        state.offer(row.transpose(), 1.0, (1, i));
    }
    Ok(state)
}

/// Merges the 2k projection columns into `state`, visiting them as
/// Λ1[:,0], Λ2[:,0], Λ1[:,1], ... and keeping first-seen directions.
pub fn unique_merge(
    mut state: DiscourseState,
    lambda1: &Matrix,
    lambda2: &Matrix,
    correlations: &Vector,
    utterance_index: usize,
) -> Result<DiscourseState> {
    if lambda1.nrows() != state.dim_p || lambda2.nrows() != state.dim_p {
        return Err(Error::DimensionMismatch(format!(
            "projections have {} and {} rows, state has p = {}",
            lambda1.nrows(),
            lambda2.nrows(),
            state.dim_p
        )));
    }
    let k = lambda1.ncols();
    if lambda2.ncols() != k || correlations.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "component counts differ: {}, {}, {}",
            k,
            lambda2.ncols(),
            correlations.len()
        )));
    }
    for j in 0..k {
        for lambda in [lambda1, lambda2] {
            state.offer(lambda.column(j).into_owned(), correlations[j], (utterance_index, j));
        }
    }
    Ok(state)
}

/// One fold step: correlate the current state with `utt` (the
/// `utterance_index`-th utterance, 1-based) and merge the projections.
pub fn merge_next(
    state: DiscourseState,
    utt: &UtteranceMatrix,
    utterance_index: usize,
    cfg: &DiscourseConfig,
) -> Result<DiscourseState> {
    let dlu = state.as_matrix()?;
    let k = dlu.len().min(utt.len());
    let cca = cfg.cca.with_components(k);
    let (l1, l2, corr) = match cfg.mode {
        Mode::LinearCca => {
            let sol = fit_cca(&dlu, utt, &cca)?;
            (sol.proj_1, sol.proj_2, sol.correlations)
        }
        Mode::Dcca => {
            let spec = |input_dim| NetworkSpec {
                input_dim,
                hidden_widths: cfg.hidden_widths.clone(),
                output_dim: k,
                activation: cfg.activation,
            };
            let tc = TrainConfig { cca, ..cfg.train };
            let model = dcca::train(&dlu, utt, spec(dlu.len()), spec(utt.len()), &tc)?;
            dcca::transform(&model, &dlu, utt)?
        }
    };
    unique_merge(state, &l1, &l2, &corr, utterance_index)
}

/// Folds a whole context into a discourse state.
pub fn build_discourse(context: &[UtteranceMatrix], cfg: &DiscourseConfig) -> Result<DiscourseState> {
    let (first, rest) = context
        .split_first()
        .ok_or_else(|| Error::InvalidConfig("context has no utterances".into()))?;
    let mut state = seed_state(first, cfg.dedup_tau)?;
    for (i, utt) in rest.iter().enumerate() {
        state = merge_next(state, utt, i + 2, cfg)?;
    }
    Ok(state)
}

//! Dialogue corpora, (context, response, flag) triples and retrieval
//! instances.
//!
//! Two input formats are accepted:
//! - `csv`: header `context,response,flag`. Context turns are separated by
//!   `__eot__`; `__eou__` markers are dropped. Only rows with flag 1 form
//!   dialogues (their context turns followed by the response).
//! - `tsv`: one dialogue per line, turns separated by tabs.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const EOT: &str = "__eot__";
const EOU: &str = "__eou__";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: u32,
    pub turns: Vec<String>,
}

impl Dialogue {
    pub fn context(&self) -> &[String] {
        &self.turns[..self.turns.len() - 1]
    }

    pub fn response(&self) -> &str {
        &self.turns[self.turns.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub context: Vec<String>,
    pub response: String,
    pub flag: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalInstance {
    /// Id of the source dialogue.
    pub id: u32,
    pub context: Vec<String>,
    pub candidates: Vec<String>,
    pub truth_index: usize,
}

impl RetrievalInstance {
    pub fn truth(&self) -> &str {
        &self.candidates[self.truth_index]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Csv,
    Tsv,
}

impl std::str::FromStr for CorpusFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(CorpusFormat::Csv),
            "tsv" => Ok(CorpusFormat::Tsv),
            other => Err(Error::InvalidConfig(format!("unknown corpus format {other:?}"))),
        }
    }
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits a context cell on `__eot__`, strips `__eou__`, drops empty turns.
pub fn split_context_cell(cell: &str) -> Vec<String> {
    cell.split(EOT)
        .map(|turn| normalize_ws(&turn.replace(EOU, " ")))
        .filter(|t| !t.is_empty())
        .collect()
}

fn accept(dialogues: &mut Vec<Dialogue>, turns: Vec<String>, line: usize) {
    if turns.len() < 2 {
        log::warn!("line {line}: dialogue with {} turn(s) skipped", turns.len());
        return;
    }
    if turns.len() < 3 {
        log::warn!("line {line}: dialogue has only {} turns", turns.len());
    }
    let id = dialogues.len() as u32;
    dialogues.push(Dialogue { id, turns });
}

pub fn parse_tsv(text: &str) -> Result<Vec<Dialogue>> {
    let mut dialogues = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let turns = line.split('\t').map(normalize_ws).filter(|t| !t.is_empty()).collect();
        accept(&mut dialogues, turns, i + 1);
    }
    if dialogues.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(dialogues)
}

#[derive(Deserialize)]
struct CsvRow {
    context: String,
    response: String,
    flag: String,
}

pub fn parse_csv(reader: impl Read) -> Result<Vec<Dialogue>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
        .clone();
    let mut dialogues = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row: CsvRow = rec
            .deserialize(Some(&headers))
            .map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        let flag: f64 = row.flag.trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("flag {:?} is not a number", row.flag),
        })?;
        if flag != 1.0 {
            continue;
        }
        let mut turns = split_context_cell(&row.context);
        let resp = normalize_ws(&row.response.replace(EOU, " ").replace(EOT, " "));
        if !resp.is_empty() {
            turns.push(resp);
        }
        accept(&mut dialogues, turns, line);
    }
    if dialogues.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(dialogues)
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Vec<Dialogue>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        CorpusFormat::Csv => parse_csv(file),
        CorpusFormat::Tsv => {
            let mut text = String::new();
            std::io::BufReader::new(file)
                .read_to_string(&mut text)
                .map_err(|e| Error::io(path, e))?;
            parse_tsv(&text)
        }
    }
}

/// Plain-text form, one dialogue per line.
pub fn to_tsv(dialogues: &[Dialogue]) -> String {
    let mut out = String::new();
    for d in dialogues {
        out.push_str(&d.turns.join("\t"));
        out.push('\n');
    }
    out
}

/// One positive triple per dialogue plus `negatives` flag-0 triples whose
/// responses are final turns of other dialogues, drawn without replacement.
pub fn make_triples(dialogues: &[Dialogue], negatives: usize, seed: u64) -> Result<Vec<Triple>> {
    let n = dialogues.len();
    if n < 2 || negatives > n - 1 {
        return Err(Error::NotEnoughDialogues {
            needed: (negatives + 1).max(2),
            have: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n * (1 + negatives));
    for (i, d) in dialogues.iter().enumerate() {
        let context = d.context().to_vec();
        out.push(Triple {
            context: context.clone(),
            response: d.response().to_string(),
            flag: 1,
        });
        for j in index::sample(&mut rng, n - 1, negatives) {
            let other = if j >= i { j + 1 } else { j };
            out.push(Triple {
                context: context.clone(),
                response: dialogues[other].response().to_string(),
                flag: 0,
            });
        }
    }
    Ok(out)
}

/// One instance per dialogue: the true response plus `num_candidates - 1`
/// distinct distractors taken from other dialogues' final turns, with the
/// truth placed at a random slot.
pub fn make_instances(dialogues: &[Dialogue], num_candidates: usize, seed: u64) -> Result<Vec<RetrievalInstance>> {
    if num_candidates < 2 {
        return Err(Error::InvalidConfig("num_candidates must be at least 2".into()));
    }
    let mut seen = HashSet::new();
    let finals: Vec<&str> = dialogues
        .iter()
        .map(Dialogue::response)
        .filter(|r| seen.insert(*r))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(dialogues.len());
    for d in dialogues {
        let truth = d.response();
        let pool: Vec<&str> = finals.iter().copied().filter(|r| *r != truth).collect();
        if pool.len() < num_candidates - 1 {
            return Err(Error::NotEnoughDialogues {
                needed: num_candidates,
                have: pool.len() + 1,
            });
        }
        let mut candidates: Vec<String> = index::sample(&mut rng, pool.len(), num_candidates - 1)
            .into_iter()
            .map(|j| pool[j].to_string())
            .collect();
        let truth_index = rng.gen_range(0..num_candidates);
        candidates.insert(truth_index, truth.to_string());
        out.push(RetrievalInstance {
            id: d.id,
            context: d.context().to_vec(),
            candidates,
            truth_index,
        });
    }
    Ok(out)
}

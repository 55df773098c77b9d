//! Tokenization and token embeddings.
//!
//! Every downstream module consumes [`UtteranceMatrix`] values: one row per
//! token, `dim_p` columns. Two providers exist. `HashedRandom` derives a
//! unit vector from the token bytes and a seed, so tests need no embedding
//! files. `FileBacked` reads the usual word-vector text format and falls
//! back to the seed-0 hashed vector for out-of-vocabulary tokens.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result, Vector};

/// Default embedding width.
pub const DEFAULT_DIM: usize = 64;

/// A lowercase, whitespace-free, non-empty token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Token(String);

impl Token {
    pub fn new(surface: impl Into<String>) -> Result<Self> {
        let s: String = surface.into();
        if s.is_empty() {
            return Err(Error::InvalidConfig("empty token".into()));
        }
        if s.chars().any(char::is_whitespace) {
            return Err(Error::InvalidConfig(format!("token {s:?} contains whitespace")));
        }
        Ok(Token(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Token {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Token::new(s)
    }
}

impl From<Token> for String {
    fn from(t: Token) -> String {
        t.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lowercase, split on whitespace, and peel leading/trailing ASCII
/// punctuation into single-character tokens. Internal punctuation stays.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for frag in text.to_lowercase().split_whitespace() {
        let chars: Vec<char> = frag.chars().collect();
        let mut start = 0;
        while start < chars.len() && chars[start].is_ascii_punctuation() {
            out.push(Token(chars[start].to_string()));
            start += 1;
        }
        let mut end = chars.len();
        while end > start && chars[end - 1].is_ascii_punctuation() {
            end -= 1;
        }
        if end > start {
            out.push(Token(chars[start..end].iter().collect()));
        }
        for c in &chars[end.max(start)..] {
            out.push(Token(c.to_string()));
        }
    }
    out
}

/// g×p token-embedding matrix for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceMatrix {
    tokens: Vec<Token>,
    rows: Matrix,
}

impl UtteranceMatrix {
    /// Builds a matrix from explicit rows. Fails if the shapes disagree,
    /// there are no tokens, or an entry is not finite.
    pub fn new(tokens: Vec<Token>, rows: Matrix) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyUtterance);
        }
        if rows.nrows() != tokens.len() || rows.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} tokens but a {}x{} matrix",
                tokens.len(),
                rows.nrows(),
                rows.ncols()
            )));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("utterance matrix has non-finite entries".into()));
        }
        Ok(Self { tokens, rows })
    }

    /// Matrix with placeholder token names `t0, t1, ...`; handy for
    /// numerical code that only cares about the rows.
    pub fn from_rows(rows: Matrix) -> Result<Self> {
        let tokens = (0..rows.nrows()).map(|i| Token(format!("t{i}"))).collect();
        Self::new(tokens, rows)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn rows(&self) -> &Matrix {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim_p(&self) -> usize {
        self.rows.ncols()
    }

    /// Keeps only the first `n` rows (used to cap very long utterances).
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.clamp(1, self.len());
        Self {
            tokens: self.tokens[..n].to_vec(),
            rows: self.rows.rows(0, n).into_owned(),
        }
    }
}

/// Arithmetic mean of the rows.
pub fn mean_pool(m: &UtteranceMatrix) -> Vector {
    let rows = m.rows();
    let mut acc = Vector::zeros(rows.ncols());
    for r in rows.row_iter() {
        acc += r.transpose();
    }
    acc / rows.nrows() as f64
}

/// Source of unit-norm token vectors.
#[derive(Debug, Clone)]
pub enum EmbeddingProvider {
    HashedRandom { dim_p: usize, seed: u64 },
    FileBacked { dim_p: usize, vocabulary: HashMap<String, Vector> },
}

/// FNV-1a; stable across platforms and toolchains, unlike `DefaultHasher`.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Unit vector derived from `(token, seed, dim_p)` alone.
pub fn hashed_vector(token: &str, seed: u64, dim_p: usize) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(token.as_bytes()) ^ seed);
    loop {
        let v = Vector::from_fn(dim_p, |_, _| rng.gen_range(-1.0..=1.0));
        let n = v.norm();
        // all-zero draws are practically impossible; redraw rather than divide by 0
        if n > 1e-12 {
            return v / n;
        }
    }
}

impl EmbeddingProvider {
    pub fn hashed(dim_p: usize, seed: u64) -> Result<Self> {
        if dim_p == 0 {
            return Err(Error::InvalidConfig("dim_p must be positive".into()));
        }
        Ok(EmbeddingProvider::HashedRandom { dim_p, seed })
    }

    /// Reads `token v1 .. vp` lines. An optional `count dim` header line is
    /// skipped. Vectors are normalized to unit length on load.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut vocabulary = HashMap::new();
        let mut dim_p = None;
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if idx == 0
                && fields.len() == 2
                && fields[0].parse::<u64>().is_ok()
                && fields[1].parse::<u64>().is_ok()
            {
                continue;
            }
            let values = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
            let d = *dim_p.get_or_insert(values.len());
            if values.len() != d || d == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected {d} components, found {}", values.len()),
                });
            }
            let v = Vector::from_vec(values);
            let n = v.norm();
            if !(n.is_finite() && n > 0.0) {
                return Err(Error::Parse { line: lineno, msg: "zero or non-finite vector".into() });
            }
            vocabulary.insert(fields[0].to_lowercase(), v / n);
        }
        let dim_p = dim_p.ok_or(Error::Parse { line: 0, msg: "no vectors in file".into() })?;
        Ok(EmbeddingProvider::FileBacked { dim_p, vocabulary })
    }

    pub fn dim_p(&self) -> usize {
        match self {
            EmbeddingProvider::HashedRandom { dim_p, .. } => *dim_p,
            EmbeddingProvider::FileBacked { dim_p, .. } => *dim_p,
        }
    }

    pub fn vector(&self, token: &Token) -> Vector {
        match self {
            EmbeddingProvider::HashedRandom { dim_p, seed } => hashed_vector(token.as_str(), *seed, *dim_p),
            EmbeddingProvider::FileBacked { dim_p, vocabulary } => vocabulary
                .get(token.as_str())
                .cloned()
                .unwrap_or_else(|| hashed_vector(token.as_str(), 0, *dim_p)),
        }
    }

    pub fn embed_utterance(&self, tokens: &[Token]) -> Result<UtteranceMatrix> {
        if tokens.is_empty() {
            return Err(Error::EmptyUtterance);
        }
        let mut rows = Matrix::zeros(tokens.len(), self.dim_p());
        for (i, t) in tokens.iter().enumerate() {
            rows.set_row(i, &self.vector(t).transpose());
        }
        UtteranceMatrix::new(tokens.to_vec(), rows)
    }

    /// Tokenize then embed.
    pub fn embed_text(&self, text: &str) -> Result<UtteranceMatrix> {
        self.embed_utterance(&tokenize(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surfaces(text: &str) -> Vec<String> {
        tokenize(text).into_iter().map(String::from).collect()
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(surfaces("Hello, world"), ["hello", ",", "world"]);
        assert!(surfaces("").is_empty());
        assert_eq!(surfaces("sudo apt-get update"), ["sudo", "apt-get", "update"]);
        assert_eq!(surfaces("(ok)?"), ["(", "ok", ")", "?"]);
        assert_eq!(surfaces("..."), [".", ".", "."]);
        assert!(surfaces("  \t\n ").is_empty());
    }

    #[test]
    fn token_validation() {
        assert!(Token::new("").is_err());
        assert!(Token::new("a b").is_err());
        assert!(Token::new("ok").is_ok());
    }

    #[test]
    fn hashed_rows_are_unit_and_deterministic() {
        let p = EmbeddingProvider::hashed(64, 7).unwrap();
        let toks = tokenize("the cat the dog");
        let m = p.embed_utterance(&toks).unwrap();
        assert_eq!(m.len(), 4);
        assert_eq!(m.rows().row(0), m.rows().row(2));
        for r in m.rows().row_iter() {
            assert!((r.norm() - 1.0).abs() < 1e-9);
        }
        let t = Token::new("cat").unwrap();
        assert_eq!(p.vector(&t), p.vector(&t));
        let other_seed = EmbeddingProvider::hashed(64, 8).unwrap();
        assert_ne!(p.vector(&t), other_seed.vector(&t));
    }

    #[test]
    fn empty_utterance_rejected() {
        let p = EmbeddingProvider::hashed(8, 0).unwrap();
        assert!(matches!(p.embed_utterance(&[]), Err(Error::EmptyUtterance)));
    }

    #[test]
    fn distinct_tokens_are_nearly_orthogonal() {
        let dim = 32;
        let vecs: Vec<Vector> = (0..1000).map(|i| hashed_vector(&format!("w{i}"), 3, dim)).collect();
        // consecutive pairs: 999 comparisons
        let violations = vecs.windows(2).filter(|w| w[0].dot(&w[1]).abs() >= 0.9).count();
        assert!(violations <= 1, "{violations} pairs with |cos| >= 0.9");
    }

    #[test]
    fn mean_pool_cases() {
        let one = UtteranceMatrix::from_rows(Matrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(mean_pool(&one), Vector::from_vec(vec![1.0, 2.0, 3.0]));
        let sym = UtteranceMatrix::from_rows(Matrix::from_row_slice(2, 2, &[1.0, -2.0, -1.0, 2.0])).unwrap();
        assert_eq!(mean_pool(&sym), Vector::zeros(2));
        let basis = UtteranceMatrix::from_rows(Matrix::identity(2, 2)).unwrap();
        assert_eq!(mean_pool(&basis), Vector::from_vec(vec![0.5, 0.5]));
    }

    #[test]
    fn file_backed_with_header_and_oov() {
        let text = "2 3\nhello 3 0 4\nworld 0 2 0\n";
        let p = EmbeddingProvider::from_reader(text.as_bytes()).unwrap();
        assert_eq!(p.dim_p(), 3);
        let h = p.vector(&Token::new("hello").unwrap());
        assert!((h - Vector::from_vec(vec![0.6, 0.0, 0.8])).norm() < 1e-12);
        let oov = Token::new("zzz").unwrap();
        assert_eq!(p.vector(&oov), hashed_vector("zzz", 0, 3));
    }

    #[test]
    fn file_backed_without_header_and_bad_rows() {
        let p = EmbeddingProvider::from_reader("a 1 0\nb 0 1\n".as_bytes()).unwrap();
        assert_eq!(p.dim_p(), 2);
        let err = EmbeddingProvider::from_reader("a 1 0\nb 0 1 5\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = EmbeddingProvider::from_reader("a x y\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }
}

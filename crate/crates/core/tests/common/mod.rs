//! Independent reference implementations used as test oracles. None of
//! these call into the crate's numerical code paths.

#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Sample covariance between the rows of `x` and the rows of `y`
/// (variables × samples), written out with explicit loops.
fn cross_cov(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let m = x.ncols();
    let mx: Vec<f64> = (0..x.nrows()).map(|i| (0..m).map(|j| x[(i, j)]).sum::<f64>() / m as f64).collect();
    let my: Vec<f64> = (0..y.nrows()).map(|i| (0..m).map(|j| y[(i, j)]).sum::<f64>() / m as f64).collect();
    DMatrix::from_fn(x.nrows(), y.nrows(), |a, b| {
        (0..m).map(|j| (x[(a, j)] - mx[a]) * (y[(b, j)] - my[b])).sum::<f64>() / (m - 1) as f64
    })
}

/// Canonical correlations from the generalized eigenproblem
/// `Σ12 Σ22⁻¹ Σ21 a = ρ² Σ11 a`, reduced to a symmetric problem with a
/// Cholesky factor of Σ11. Returns (correlations desc, weights for view 1,
/// weights for view 2), top `k`.
pub fn gev_cca(x: &DMatrix<f64>, y: &DMatrix<f64>, reg: f64, k: usize) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let s11 = cross_cov(x, x) + DMatrix::identity(x.nrows(), x.nrows()) * reg;
    let s22 = cross_cov(y, y) + DMatrix::identity(y.nrows(), y.nrows()) * reg;
    let s12 = cross_cov(x, y);
    let l = Cholesky::new(s11.clone()).expect("s11 SPD").l();
    let l_inv = l.clone().try_inverse().unwrap();
    let s22_inv = s22.clone().try_inverse().unwrap();
    let c = &l_inv * &s12 * &s22_inv * s12.transpose() * l_inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut rhos = Vec::new();
    let mut wa = DMatrix::zeros(x.nrows(), k);
    let mut wb = DMatrix::zeros(y.nrows(), k);
    for (col, &i) in idx.iter().take(k).enumerate() {
        let rho = eig.eigenvalues[i].max(0.0).sqrt();
        rhos.push(rho);
        let a = l_inv.transpose() * eig.eigenvectors.column(i);
        let b: DVector<f64> = &s22_inv * s12.transpose() * &a / rho.max(1e-300);
        wa.set_column(col, &a);
        wb.set_column(col, &b);
    }
    (rhos, wa, wb)
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_diff(x: &DMatrix<f64>, eps: f64, mut f: impl FnMut(&DMatrix<f64>) -> f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let mut xp = x.clone();
            xp[(i, j)] += eps;
            let mut xm = x.clone();
            xm[(i, j)] -= eps;
            g[(i, j)] = (f(&xp) - f(&xm)) / (2.0 * eps);
        }
    }
    g
}

/// Relative error with an absolute floor so near-zero entries do not blow up.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

// ---- text metrics, textbook formulas on plain strings ----

fn grams(words: &[&str], n: usize) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    if words.len() >= n {
        for i in 0..=words.len() - n {
            *m.entry(words[i..i + n].join(" ")).or_insert(0) += 1;
        }
    }
    m
}

pub fn ref_bleu(cand: &str, reference: &str) -> f64 {
    let c: Vec<&str> = cand.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    if c.is_empty() {
        return 0.0;
    }
    if c == r {
        return 1.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cg = grams(&c, n);
        let rg = grams(&r, n);
        let mut matched = 0;
        let mut total = 0;
        for (g, cnt) in &cg {
            total += cnt;
            matched += (*cnt).min(*rg.get(g).unwrap_or(&0));
        }
        log_sum += ((matched as f64 + 1.0) / (total as f64 + 1.0)).ln();
    }
    let bp = if c.len() < r.len() {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    } else {
        1.0
    };
    bp * (log_sum / 4.0).exp()
}

fn f_measure(hits: f64, c: usize, r: usize) -> f64 {
    if hits == 0.0 {
        return 0.0;
    }
    let p = hits / c as f64;
    let rc = hits / r as f64;
    2.0 * p * rc / (p + rc)
}

pub fn ref_rouge1(cand: &str, reference: &str) -> f64 {
    let c: Vec<&str> = cand.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    let rg = grams(&r, 1);
    let hits: usize = grams(&c, 1).iter().map(|(g, n)| (*n).min(*rg.get(g).unwrap_or(&0))).sum();
    f_measure(hits as f64, c.len(), r.len())
}

pub fn ref_rouge_l(cand: &str, reference: &str) -> f64 {
    let c: Vec<&str> = cand.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    let mut t = vec![vec![0usize; r.len() + 1]; c.len() + 1];
    for i in 1..=c.len() {
        for j in 1..=r.len() {
            t[i][j] = if c[i - 1] == r[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    f_measure(t[c.len()][r.len()] as f64, c.len(), r.len())
}

/// Random lowercase sentence over a small vocabulary (so overlaps happen).
pub fn random_sentence(rng: &mut ChaCha8Rng, max_len: usize) -> String {
    const WORDS: &[&str] = &["the", "cat", "sat", "on", "mat", "dog", "ran", "to", "apt", "boot", "disk", "fix"];
    let n = rng.gen_range(1..=max_len);
    (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

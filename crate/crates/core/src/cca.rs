//! Closed-form linear CCA between two views.
//!
//! Views are handled as `variables × samples` matrices. For utterance
//! matrices that means the token rows are the variables and the `p`
//! embedding dimensions are the paired samples, so the number of canonical
//! components is bounded by the token counts.
//!
//! The fit whitens both covariances, takes the SVD of the coherence matrix
//! `T = Σ11^{-1/2} Σ12 Σ22^{-1/2}`, and reads the canonical correlations
//! off its singular values. [`corr_objective_grad`] gives the analytic
//! gradient of the summed top-k correlations with respect to both views;
//! deep CCA trains against it.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::embedding::UtteranceMatrix;
use crate::{Error, Matrix, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcaConfig {
    /// Ridge added to both view covariances.
    pub reg_r: f64,
    /// Eigenvalue clamp used by the inverse square root.
    pub eig_floor: f64,
    /// Number of canonical components kept.
    pub num_components_k: usize,
}

impl Default for CcaConfig {
    fn default() -> Self {
        Self {
            reg_r: 1e-4,
            eig_floor: 1e-10,
            num_components_k: 1,
        }
    }
}

impl CcaConfig {
    pub fn with_components(self, k: usize) -> Self {
        Self {
            num_components_k: k,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reg_r >= 0.0 && self.reg_r.is_finite()) {
            return Err(Error::InvalidConfig(format!("reg_r must be >= 0, got {}", self.reg_r)));
        }
        if !(self.eig_floor > 0.0 && self.eig_floor.is_finite()) {
            return Err(Error::InvalidConfig(format!("eig_floor must be > 0, got {}", self.eig_floor)));
        }
        if self.num_components_k == 0 {
            return Err(Error::InvalidConfig("num_components_k must be positive".into()));
        }
        Ok(())
    }
}

/// Top-k canonical solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcaSolution {
    /// g×k canonical weights for view 1 (one column per component).
    pub weights_a: Matrix,
    /// h×k canonical weights for view 2.
    pub weights_b: Matrix,
    /// Canonical correlations, non-increasing, clamped to [0, 1].
    pub correlations: Vector,
    /// p×k projections of view 1 (`view1ᵀ · weights_a`).
    pub proj_1: Matrix,
    /// p×k projections of view 2 (`view2ᵀ · weights_b`).
    pub proj_2: Matrix,
    /// Sum of the kept correlations.
    pub objective: f64,
}

impl CcaSolution {
    pub fn num_components(&self) -> usize {
        self.correlations.len()
    }
}

/// Subtracts each column's mean. Rows are samples.
pub fn center_columns(m: &Matrix) -> Result<Matrix> {
    if m.nrows() < 2 {
        return Err(Error::TooFewSamples(m.nrows()));
    }
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    Ok(out)
}

/// Row-centering for `variables × samples` matrices.
fn center_rows(m: &Matrix) -> Result<Matrix> {
    Ok(center_columns(&m.transpose())?.transpose())
}

/// `S^{-1/2}` by eigendecomposition, with eigenvalues clamped to at least
/// `eig_floor`.
pub fn inv_sqrt_sym(s: &Matrix, eig_floor: f64) -> Result<Matrix> {
    if !s.is_square() {
        return Err(Error::DimensionMismatch(format!("{}x{} is not square", s.nrows(), s.ncols())));
    }
    let scale = s.amax().max(1.0);
    let asym = (s - s.transpose()).amax();
    if asym > 1e-8 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.max(eig_floor).sqrt());
    let q = &eig.eigenvectors;
    let out = q * Matrix::from_diagonal(&inv_sqrt) * q.transpose();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficient);
    }
    Ok(out)
}

/// Intermediate quantities shared by the fit and the gradient.
struct Coherence {
    h1c: Matrix,
    h2c: Matrix,
    s11_isqrt: Matrix,
    s22_isqrt: Matrix,
    /// Left singular vectors of T, top-k, sorted.
    u: Matrix,
    /// Right singular vectors of T, top-k, sorted.
    v: Matrix,
    /// Raw singular values, top-k.
    d: Vector,
    samples: usize,
}

fn check_views(h1: &Matrix, h2: &Matrix, cfg: &CcaConfig) -> Result<()> {
    cfg.validate()?;
    if h1.ncols() != h2.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "views have {} and {} samples",
            h1.ncols(),
            h2.ncols()
        )));
    }
    if h1.ncols() < 2 {
        return Err(Error::TooFewSamples(h1.ncols()));
    }
    let max_k = h1.nrows().min(h2.nrows());
    if cfg.num_components_k > max_k {
        return Err(Error::InvalidConfig(format!(
            "num_components_k = {} exceeds min variable count {max_k}",
            cfg.num_components_k
        )));
    }
    if h1.iter().chain(h2.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("views contain non-finite entries".into()));
    }
    Ok(())
}

fn coherence(h1: &Matrix, h2: &Matrix, cfg: &CcaConfig) -> Result<Coherence> {
    check_views(h1, h2, cfg)?;
    let m = h1.ncols();
    let h1c = center_rows(h1)?;
    let h2c = center_rows(h2)?;
    let denom = (m - 1) as f64;
    let s11 = &h1c * h1c.transpose() / denom + Matrix::identity(h1.nrows(), h1.nrows()) * cfg.reg_r;
    let s22 = &h2c * h2c.transpose() / denom + Matrix::identity(h2.nrows(), h2.nrows()) * cfg.reg_r;
    let s12 = &h1c * h2c.transpose() / denom;
    let s11_isqrt = inv_sqrt_sym(&s11, cfg.eig_floor)?;
    let s22_isqrt = inv_sqrt_sym(&s22, cfg.eig_floor)?;
    let t = &s11_isqrt * s12 * &s22_isqrt;

    let svd = t.svd(true, true);
    let u_full = svd.u.ok_or(Error::RankDeficient)?;
    let v_full = svd.v_t.ok_or(Error::RankDeficient)?.transpose();
    let sv = svd.singular_values;
    if sv.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficient);
    }
    // stable: equal singular values keep the routine's order
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let k = cfg.num_components_k;
    let u = Matrix::from_columns(&order[..k].iter().map(|&i| u_full.column(i)).collect::<Vec<_>>());
    let v = Matrix::from_columns(&order[..k].iter().map(|&i| v_full.column(i)).collect::<Vec<_>>());
    let d = Vector::from_iterator(k, order[..k].iter().map(|&i| sv[i]));
    Ok(Coherence {
        h1c,
        h2c,
        s11_isqrt,
        s22_isqrt,
        u,
        v,
        d,
        samples: m,
    })
}

fn clamp_corr(d: &Vector) -> Vector {
    d.map(|c| c.clamp(0.0, 1.0))
}

/// CCA on two `variables × samples` matrices.
pub fn fit_views(h1: &Matrix, h2: &Matrix, cfg: &CcaConfig) -> Result<CcaSolution> {
    let c = coherence(h1, h2, cfg)?;
    let mut weights_a = &c.s11_isqrt * &c.u;
    let mut weights_b = &c.s22_isqrt * &c.v;
    for j in 0..weights_a.ncols() {
        let col = weights_a.column(j);
        let pivot = col.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
        if pivot < 0.0 {
            weights_a.column_mut(j).neg_mut();
            weights_b.column_mut(j).neg_mut();
        }
    }
    let correlations = clamp_corr(&c.d);
    let proj_1 = h1.transpose() * &weights_a;
    let proj_2 = h2.transpose() * &weights_b;
    Ok(CcaSolution {
        objective: correlations.sum(),
        weights_a,
        weights_b,
        correlations,
        proj_1,
        proj_2,
    })
}

/// CCA between two utterances: token rows are variables, embedding
/// dimensions are samples.
pub fn fit_cca(utt1: &UtteranceMatrix, utt2: &UtteranceMatrix, cfg: &CcaConfig) -> Result<CcaSolution> {
    if utt1.dim_p() != utt2.dim_p() {
        return Err(Error::DimensionMismatch(format!(
            "utterances have p = {} and p = {}",
            utt1.dim_p(),
            utt2.dim_p()
        )));
    }
    fit_views(utt1.rows(), utt2.rows(), cfg)
}

/// Summed top-k canonical correlation and its gradient with respect to
/// every entry of both `variables × samples` views.
pub fn corr_objective_grad(h1: &Matrix, h2: &Matrix, cfg: &CcaConfig) -> Result<(f64, Matrix, Matrix)> {
    let c = coherence(h1, h2, cfg)?;
    let objective = clamp_corr(&c.d).sum();
    let denom = (c.samples - 1) as f64;
    let d = Matrix::from_diagonal(&c.d);

    let nabla12 = &c.s11_isqrt * &c.u * c.v.transpose() * &c.s22_isqrt;
    let nabla11 = &c.s11_isqrt * &c.u * &d * c.u.transpose() * &c.s11_isqrt * -0.5;
    let nabla22 = &c.s22_isqrt * &c.v * &d * c.v.transpose() * &c.s22_isqrt * -0.5;

    let grad1 = (&nabla11 * &c.h1c * 2.0 + &nabla12 * &c.h2c) / denom;
    let grad2 = (&nabla22 * &c.h2c * 2.0 + nabla12.transpose() * &c.h1c) / denom;
    Ok((objective, grad1, grad2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn exact(k: usize) -> CcaConfig {
        CcaConfig {
            reg_r: 0.0,
            eig_floor: 1e-12,
            num_components_k: k,
        }
    }

    #[test]
    fn center_columns_cases() {
        let m = Matrix::from_row_slice(2, 1, &[1.0, 3.0]);
        assert_eq!(center_columns(&m).unwrap(), Matrix::from_row_slice(2, 1, &[-1.0, 1.0]));
        let c = Matrix::from_row_slice(3, 2, &[-1.0, 2.0, 0.0, 0.0, 1.0, -2.0]);
        assert_eq!(center_columns(&c).unwrap(), c);
        let k = Matrix::from_row_slice(3, 1, &[5.0, 5.0, 5.0]);
        assert_eq!(center_columns(&k).unwrap(), Matrix::zeros(3, 1));
        assert!(matches!(center_columns(&Matrix::zeros(1, 3)), Err(Error::TooFewSamples(1))));
    }

    #[test]
    fn inv_sqrt_cases() {
        let i = Matrix::identity(3, 3);
        assert!((inv_sqrt_sym(&i, 1e-10).unwrap() - &i).amax() < 1e-12);
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![4.0, 9.0]));
        let want = Matrix::from_diagonal(&Vector::from_vec(vec![0.5, 1.0 / 3.0]));
        assert!((inv_sqrt_sym(&d, 1e-10).unwrap() - want).amax() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(5, 5, &mut rng);
        let s = a.transpose() * &a + Matrix::identity(5, 5);
        let m = inv_sqrt_sym(&s, 1e-10).unwrap();
        assert!((&m * &s * &m - Matrix::identity(5, 5)).norm() < 1e-6);

        let ns = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(inv_sqrt_sym(&ns, 1e-10), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn self_correlation_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = UtteranceMatrix::from_rows(random(3, 20, &mut rng)).unwrap();
        let sol = fit_cca(&u, &u, &exact(3)).unwrap();
        for c in sol.correlations.iter() {
            assert!((c - 1.0).abs() < 1e-6, "{c}");
        }
        assert!((sol.objective - 3.0).abs() < 1e-6);
    }

    #[test]
    fn single_variable_is_abs_pearson() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| -0.7 * v + rng.gen_range(-0.5..0.5)).collect();
        // hand-rolled Pearson
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        let pearson = sxy / (sxx * syy).sqrt();

        let u = UtteranceMatrix::from_rows(Matrix::from_row_slice(1, 30, &x)).unwrap();
        let v = UtteranceMatrix::from_rows(Matrix::from_row_slice(1, 30, &y)).unwrap();
        let sol = fit_cca(&u, &v, &exact(1)).unwrap();
        assert!((sol.correlations[0] - pearson.abs()).abs() < 1e-10);
    }

    #[test]
    fn solution_shapes_and_projection_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = UtteranceMatrix::from_rows(random(3, 16, &mut rng)).unwrap();
        let v = UtteranceMatrix::from_rows(random(4, 16, &mut rng)).unwrap();
        let sol = fit_cca(&u, &v, &CcaConfig::default().with_components(3)).unwrap();
        assert_eq!(sol.weights_a.shape(), (3, 3));
        assert_eq!(sol.weights_b.shape(), (4, 3));
        assert_eq!(sol.proj_1.shape(), (16, 3));
        assert!((&sol.proj_1 - u.rows().transpose() * &sol.weights_a).amax() < 1e-12);
        assert!((&sol.proj_2 - v.rows().transpose() * &sol.weights_b).amax() < 1e-12);
        for w in sol.correlations.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
        for j in 0..3 {
            let col = sol.weights_a.column(j);
            let pivot = col.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn errors() {
        let a = UtteranceMatrix::from_rows(Matrix::zeros(2, 5)).unwrap();
        let b = UtteranceMatrix::from_rows(Matrix::zeros(2, 6)).unwrap();
        assert!(matches!(fit_cca(&a, &b, &exact(1)), Err(Error::DimensionMismatch(_))));
        let one = UtteranceMatrix::from_rows(Matrix::zeros(2, 1)).unwrap();
        assert!(matches!(fit_cca(&one, &one, &exact(1)), Err(Error::TooFewSamples(1))));
        assert!(matches!(fit_cca(&a, &a, &exact(3)), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn grad_objective_matches_fit_and_self_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h1 = random(3, 40, &mut rng);
        let h2 = random(3, 40, &mut rng);
        let cfg = CcaConfig::default().with_components(3);
        let (obj, g1, g2) = corr_objective_grad(&h1, &h2, &cfg).unwrap();
        let sol = fit_views(&h1, &h2, &cfg).unwrap();
        assert!((obj - sol.objective).abs() < 1e-10);
        assert_eq!(g1.shape(), h1.shape());
        assert_eq!(g2.shape(), h2.shape());

        let (obj, _, _) = corr_objective_grad(&h1, &h1, &exact(3)).unwrap();
        assert!((obj - 3.0).abs() < 1e-8);
    }

    #[test]
    fn objective_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h1 = random(3, 40, &mut rng);
        let h2 = random(3, 40, &mut rng);
        let (a, _, _) = corr_objective_grad(&h1, &h2, &exact(3)).unwrap();
        let (b, _, _) = corr_objective_grad(&(&h1 * 5.0), &h2, &exact(3)).unwrap();
        assert!((a - b).abs() < 1e-8);
    }
}

//! Deep CCA.
//!
//! Two small feed-forward networks map each view's variables into a shared
//! output width; training runs full-batch gradient ascent on the summed
//! canonical correlation of the two outputs, using the analytic gradient
//! from [`crate::cca::corr_objective_grad`] as the upstream signal for
//! backprop. With no hidden layers and identity activation a network is a
//! single affine map, and the model reduces to linear CCA.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cca::{corr_objective_grad, fit_views, CcaConfig, CcaSolution};
use crate::embedding::UtteranceMatrix;
use crate::{Error, Matrix, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: &Matrix) -> Matrix {
        match self {
            Activation::Tanh => z.map(f64::tanh),
            Activation::Identity => z.clone(),
        }
    }

    /// Derivative evaluated at the pre-activation.
    fn derivative(self, z: &Matrix) -> Matrix {
        match self {
            Activation::Tanh => z.map(|v| 1.0 - v.tanh().powi(2)),
            Activation::Identity => Matrix::from_element(z.nrows(), z.ncols(), 1.0),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::InvalidConfig(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl NetworkSpec {
    /// Single affine map with identity activation.
    pub fn linear(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_widths: Vec::new(),
            output_dim,
            activation: Activation::Identity,
        }
    }

    /// Default architecture: one tanh hidden layer of width 16.
    pub fn default_for(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_widths: vec![16],
            output_dim,
            activation: Activation::Tanh,
        }
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_widths.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden_widths);
        w.push(self.output_dim);
        w
    }

    fn validate(&self) -> Result<()> {
        if self.widths().contains(&0) {
            return Err(Error::InvalidConfig(format!("zero-width layer in {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// out × in
    pub weights: Matrix,
    pub bias: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetworkSpec,
    pub layers: Vec<Layer>,
}

/// Per-layer inputs and pre-activations retained by [`forward`].
#[derive(Debug, Clone)]
pub struct LayerCache {
    inputs: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
}

/// Gradient of the objective with respect to one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vector,
}

impl Network {
    fn init(spec: NetworkSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .widths()
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                Layer {
                    weights: Matrix::from_fn(fan_out, fan_in, |_, _| rng.gen_range(-bound..=bound)),
                    bias: Vector::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { spec, layers })
    }

    fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn step(&mut self, grads: &[LayerGrad], learning_rate: f64) {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            layer.weights += &g.weights * learning_rate;
            layer.bias += &g.bias * learning_rate;
        }
    }
}

/// Applies each layer's affine map followed by the activation. `x` is
/// `input_dim × samples`.
pub fn forward(net: &Network, x: &Matrix) -> Result<(Matrix, LayerCache)> {
    if x.nrows() != net.spec.input_dim {
        return Err(Error::DimensionMismatch(format!(
            "network expects {} input variables, got {}",
            net.spec.input_dim,
            x.nrows()
        )));
    }
    let mut cache = LayerCache {
        inputs: Vec::with_capacity(net.layers.len()),
        pre_activations: Vec::with_capacity(net.layers.len()),
    };
    let mut a = x.clone();
    for layer in &net.layers {
        let mut z = &layer.weights * &a;
        for mut col in z.column_iter_mut() {
            col += &layer.bias;
        }
        let next = net.spec.activation.apply(&z);
        cache.inputs.push(a);
        cache.pre_activations.push(z);
        a = next;
    }
    Ok((a, cache))
}

/// Backpropagates `grad_output` (same shape as the network output).
pub fn backward(net: &Network, cache: &LayerCache, grad_output: &Matrix) -> Vec<LayerGrad> {
    let mut grads = Vec::with_capacity(net.layers.len());
    let mut upstream = grad_output.clone();
    for (l, layer) in net.layers.iter().enumerate().rev() {
        let delta = upstream.component_mul(&net.spec.activation.derivative(&cache.pre_activations[l]));
        grads.push(LayerGrad {
            weights: &delta * cache.inputs[l].transpose(),
            bias: delta.column_sum(),
        });
        upstream = layer.weights.transpose() * &delta;
    }
    grads.reverse();
    grads
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub cca: CcaConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            max_iters: 500,
            tol: 1e-7,
            seed: 0,
            cca: CcaConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.cca.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DccaModel {
    pub net1: Network,
    pub net2: Network,
    pub cca_on_outputs: Option<CcaSolution>,
    /// `(iteration, objective)` for every evaluated iterate.
    pub train_log: Vec<(usize, f64)>,
}

/// Fresh model with weights uniform in `±1/√fan_in` and zero biases.
pub fn init_model(spec1: NetworkSpec, spec2: NetworkSpec, seed: u64) -> Result<DccaModel> {
    if spec1.output_dim != spec2.output_dim {
        return Err(Error::SpecMismatch(format!(
            "output dims {} and {}",
            spec1.output_dim, spec2.output_dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net1 = Network::init(spec1, &mut rng)?;
    let net2 = Network::init(spec2, &mut rng)?;
    Ok(DccaModel {
        net1,
        net2,
        cca_on_outputs: None,
        train_log: Vec::new(),
    })
}

/// Objective and parameter gradients for both networks on a view pair.
pub fn param_gradients(
    model: &DccaModel,
    x1: &Matrix,
    x2: &Matrix,
    cca: &CcaConfig,
) -> Result<(f64, Vec<LayerGrad>, Vec<LayerGrad>)> {
    let (o1, c1) = forward(&model.net1, x1)?;
    let (o2, c2) = forward(&model.net2, x2)?;
    if o1.iter().chain(o2.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLoss(0));
    }
    let (objective, g1, g2) = corr_objective_grad(&o1, &o2, cca)?;
    Ok((objective, backward(&model.net1, &c1, &g1), backward(&model.net2, &c2, &g2)))
}

fn check_inputs(utt1: &UtteranceMatrix, utt2: &UtteranceMatrix, spec1: &NetworkSpec, spec2: &NetworkSpec) -> Result<()> {
    if utt1.dim_p() != utt2.dim_p() {
        return Err(Error::DimensionMismatch(format!(
            "utterances have p = {} and p = {}",
            utt1.dim_p(),
            utt2.dim_p()
        )));
    }
    if utt1.dim_p() < 2 {
        return Err(Error::TooFewSamples(utt1.dim_p()));
    }
    if spec1.input_dim != utt1.len() || spec2.input_dim != utt2.len() {
        return Err(Error::SpecMismatch(format!(
            "input dims ({}, {}) do not match token counts ({}, {})",
            spec1.input_dim,
            spec2.input_dim,
            utt1.len(),
            utt2.len()
        )));
    }
    Ok(())
}

/// Trains a fresh model on one utterance pair by fixed-step gradient
/// ascent. Stops after `max_iters` updates or once successive objectives
/// differ by less than `tol`.
pub fn train(
    utt1: &UtteranceMatrix,
    utt2: &UtteranceMatrix,
    spec1: NetworkSpec,
    spec2: NetworkSpec,
    tc: &TrainConfig,
) -> Result<DccaModel> {
    tc.validate()?;
    check_inputs(utt1, utt2, &spec1, &spec2)?;
    let mut model = init_model(spec1, spec2, tc.seed)?;
    let (x1, x2) = (utt1.rows(), utt2.rows());

    let mut prev: Option<f64> = None;
    for it in 0..=tc.max_iters {
        let (objective, g1, g2) = match param_gradients(&model, x1, x2, &tc.cca) {
            Err(Error::NonFiniteLoss(_)) => return Err(Error::NonFiniteLoss(it)),
            other => other?,
        };
        if !objective.is_finite() {
            return Err(Error::NonFiniteLoss(it));
        }
        model.train_log.push((it, objective));
        let converged = prev.is_some_and(|p| (objective - p).abs() < tc.tol);
        if converged || it == tc.max_iters {
            break;
        }
        prev = Some(objective);
        model.net1.step(&g1, tc.learning_rate);
        model.net2.step(&g2, tc.learning_rate);
        if !(model.net1.is_finite() && model.net2.is_finite()) {
            return Err(Error::NonFiniteLoss(it));
        }
    }

    let (o1, _) = forward(&model.net1, x1)?;
    let (o2, _) = forward(&model.net2, x2)?;
    model.cca_on_outputs = Some(fit_views(&o1, &o2, &tc.cca)?);
    log::debug!(
        "dcca trained: {} iterates, objective {:.6}",
        model.train_log.len(),
        model.final_objective()
    );
    Ok(model)
}

impl DccaModel {
    pub fn final_objective(&self) -> f64 {
        self.cca_on_outputs.as_ref().map_or(f64::NAN, |s| s.objective)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(&SavedModel {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })?;
        crate::io::write_atomic(path, json.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let saved: SavedModel = serde_json::from_str(&text)?;
        if saved.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported model format version {}",
                saved.format_version
            )));
        }
        Ok(saved.model)
    }
}

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SavedModel {
    format_version: u32,
    model: DccaModel,
}

/// Projects both views through the trained networks and the output CCA.
/// Returns p×k projections plus the model's canonical correlations.
pub fn transform(model: &DccaModel, utt1: &UtteranceMatrix, utt2: &UtteranceMatrix) -> Result<(Matrix, Matrix, Vector)> {
    let sol = model
        .cca_on_outputs
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("model has not been trained".into()))?;
    if utt1.dim_p() != utt2.dim_p() {
        return Err(Error::DimensionMismatch("utterances differ in p".into()));
    }
    let (o1, _) = forward(&model.net1, utt1.rows())?;
    let (o2, _) = forward(&model.net2, utt2.rows())?;
    Ok((o1.transpose() * &sol.weights_a, o2.transpose() * &sol.weights_b, sol.correlations.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_utt(g: usize, p: usize, seed: u64) -> UtteranceMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        UtteranceMatrix::from_rows(Matrix::from_fn(g, p, |_, _| rng.gen_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_model(NetworkSpec::default_for(4, 2), NetworkSpec::default_for(3, 2), 9).unwrap();
        let b = init_model(NetworkSpec::default_for(4, 2), NetworkSpec::default_for(3, 2), 9).unwrap();
        assert_eq!(a, b);
        assert!(a.net1.layers[0].weights.iter().all(|w| w.abs() <= 0.5));
        assert!(a.net1.layers.iter().all(|l| l.bias.iter().all(|b| *b == 0.0)));

        let lin = init_model(NetworkSpec::linear(3, 2), NetworkSpec::linear(2, 2), 1).unwrap();
        assert_eq!(lin.net1.layers.len(), 1);
        assert_eq!(lin.net2.layers.len(), 1);
        assert_eq!(lin.net1.layers[0].weights.shape(), (2, 3));
    }

    #[test]
    fn mismatched_outputs_rejected() {
        let err = init_model(NetworkSpec::linear(3, 2), NetworkSpec::linear(3, 3), 0).unwrap_err();
        assert!(matches!(err, Error::SpecMismatch(_)));
    }

    #[test]
    fn forward_identity_and_tanh_zero() {
        let mut net = init_model(NetworkSpec::linear(3, 3), NetworkSpec::linear(3, 3), 0).unwrap().net1;
        net.layers[0].weights = Matrix::identity(3, 3);
        let x = Matrix::from_fn(3, 5, |i, j| (i * 5 + j) as f64);
        assert_eq!(forward(&net, &x).unwrap().0, x);

        let spec = NetworkSpec {
            activation: Activation::Tanh,
            ..NetworkSpec::linear(3, 2)
        };
        let tanh_net = init_model(spec.clone(), spec, 0).unwrap().net1;
        assert_eq!(forward(&tanh_net, &Matrix::zeros(3, 4)).unwrap().0, Matrix::zeros(2, 4));
        assert!(matches!(forward(&tanh_net, &Matrix::zeros(2, 4)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn zero_iterations_is_untrained_fit() {
        let u1 = random_utt(3, 20, 1);
        let u2 = random_utt(3, 20, 2);
        let tc = TrainConfig {
            max_iters: 0,
            cca: CcaConfig::default().with_components(3),
            ..TrainConfig::default()
        };
        let m = train(&u1, &u2, NetworkSpec::default_for(3, 3), NetworkSpec::default_for(3, 3), &tc).unwrap();
        let init = init_model(NetworkSpec::default_for(3, 3), NetworkSpec::default_for(3, 3), tc.seed).unwrap();
        assert_eq!(m.net1, init.net1);
        assert_eq!(m.net2, init.net2);
        let (o1, _) = forward(&init.net1, u1.rows()).unwrap();
        let (o2, _) = forward(&init.net2, u2.rows()).unwrap();
        assert_eq!(m.cca_on_outputs.unwrap(), fit_views(&o1, &o2, &tc.cca).unwrap());
    }

    #[test]
    fn transform_shapes_and_correlations() {
        let u1 = random_utt(3, 24, 3);
        let u2 = random_utt(4, 24, 4);
        let tc = TrainConfig {
            max_iters: 20,
            cca: CcaConfig::default().with_components(3),
            ..TrainConfig::default()
        };
        let m = train(&u1, &u2, NetworkSpec::default_for(3, 3), NetworkSpec::default_for(4, 3), &tc).unwrap();
        let (l1, l2, corr) = transform(&m, &u1, &u2).unwrap();
        assert_eq!(l1.shape(), (24, 3));
        assert_eq!(l2.shape(), (24, 3));
        let sol = m.cca_on_outputs.as_ref().unwrap();
        assert!((&l1 - &sol.proj_1).amax() < 1e-10);
        assert!((&corr - &sol.correlations).amax() < 1e-10);
        assert!(m.final_objective() <= 3.0 + 1e-6);
    }

    #[test]
    fn huge_learning_rate_is_reported() {
        let u1 = random_utt(3, 12, 5);
        let u2 = random_utt(3, 12, 6);
        let tc = TrainConfig {
            learning_rate: 1e300,
            max_iters: 50,
            cca: CcaConfig::default().with_components(3),
            ..TrainConfig::default()
        };
        let spec = NetworkSpec {
            activation: Activation::Identity,
            ..NetworkSpec::default_for(3, 3)
        };
        let err = train(&u1, &u2, spec.clone(), spec, &tc).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss(_)), "{err:?}");
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let u1 = random_utt(2, 10, 7);
        let u2 = random_utt(3, 10, 8);
        let tc = TrainConfig {
            max_iters: 5,
            cca: CcaConfig::default().with_components(2),
            ..TrainConfig::default()
        };
        let m = train(&u1, &u2, NetworkSpec::default_for(2, 2), NetworkSpec::default_for(3, 2), &tc).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        m.save(&path).unwrap();
        assert_eq!(DccaModel::load(&path).unwrap(), m);
    }
}

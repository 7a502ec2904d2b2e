use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("expected input width {expected}, got {got}")]
    InputShape { expected: usize, got: usize },
    #[error("architecture mismatch: {0}")]
    Architecture(String),
    #[error("non-finite parameter after update")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, x: &mut Array2<f64>) {
        if self == Activation::Relu {
            x.mapv_inplace(|v| v.max(0.0));
        }
    }

    /// Multiplies `grad` by the derivative evaluated at the activation output.
    fn backprop(self, grad: &mut Array2<f64>, output: &Array2<f64>) {
        if self == Activation::Relu {
            grad.zip_mut_with(output, |g, &o| {
                if o <= 0.0 {
                    *g = 0.0;
                }
            });
        }
    }
}

/// Enough to rebuild an empty network of the same shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: String,
    pub layer_sizes: Vec<usize>,
    pub hidden: Activation,
}

/// A differentiable map from states to one value per action.
///
/// Parameters and gradients are exposed as flat slices in a fixed order so the
/// optimizer and checkpoints need not know the layout.
pub trait QNetwork: Clone {
    type Cache;

    fn input_dim(&self) -> usize;

    fn num_actions(&self) -> usize;

    fn architecture(&self) -> Architecture;

    /// Rows of `input` are independent samples.
    fn forward(&self, input: &Array2<f64>) -> Array2<f64>;

    fn forward_cached(&self, input: &Array2<f64>) -> (Array2<f64>, Self::Cache);

    /// Parameter gradients given `dL/dQ`, aligned with [`QNetwork::params`].
    fn backward(&self, cache: &Self::Cache, grad_output: &Array2<f64>) -> Vec<Vec<f64>>;

    fn params(&self) -> Vec<&[f64]>;

    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn check_input(&self, input: &Array2<f64>) -> Result<(), NetworkError> {
        if input.ncols() != self.input_dim() {
            return Err(NetworkError::InputShape { expected: self.input_dim(), got: input.ncols() });
        }
        Ok(())
    }

    fn copy_params_from(&mut self, other: &Self) -> Result<(), NetworkError> {
        if self.architecture() != other.architecture() {
            return Err(NetworkError::Architecture(format!(
                "{:?} vs {:?}",
                self.architecture(),
                other.architecture()
            )));
        }
        for (dst, src) in self.params_mut().into_iter().zip(other.params()) {
            dst.copy_from_slice(src);
        }
        Ok(())
    }

    fn load_params(&mut self, values: &[Vec<f64>]) -> Result<(), NetworkError> {
        let mut slots = self.params_mut();
        if slots.len() != values.len() || slots.iter().zip(values).any(|(s, v)| s.len() != v.len()) {
            return Err(NetworkError::Architecture("parameter tensor shapes differ".into()));
        }
        for (dst, src) in slots.iter_mut().zip(values) {
            dst.copy_from_slice(src);
        }
        Ok(())
    }

    fn params_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// Fully connected layer computing `x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weights: Array2::zeros((fan_in, fan_out)), bias: Array1::zeros(fan_out) }
    }

    /// Xavier-uniform weights, zero bias.
    pub fn xavier<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..=limit));
        Self { weights, bias: Array1::zeros(fan_out) }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }

    pub fn forward(&self, input: &Array2<f64>) -> Array2<f64> {
        let mut out = input.dot(&self.weights);
        out += &self.bias;
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    hidden: Activation,
    output: Activation,
}

/// Activations kept from a forward pass: `outputs[0]` is the input, `outputs[l+1]`
/// the activated output of layer `l`.
#[derive(Debug, Clone)]
pub struct MlpCache {
    outputs: Vec<Array2<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().expect("cache holds at least the input")
    }
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, rng: &mut R) -> Self {
        Self::with_output(sizes, hidden, Activation::Linear, rng)
    }

    pub fn with_output<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let layers = sizes.windows(2).map(|w| Dense::xavier(w[0], w[1], rng)).collect();
        Self { layers, hidden, output }
    }

    pub fn from_layers(layers: Vec<Dense>, hidden: Activation, output: Activation) -> Self {
        assert!(!layers.is_empty());
        assert!(layers.windows(2).all(|w| w[0].fan_out() == w[1].fan_in()), "layer shapes do not chain");
        Self { layers, hidden, output }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].fan_in()];
        sizes.extend(self.layers.iter().map(Dense::fan_out));
        sizes
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    /// Parameter gradients plus the gradient with respect to the input.
    pub fn backward_full(&self, cache: &MlpCache, grad_output: &Array2<f64>) -> (Vec<Vec<f64>>, Array2<f64>) {
        let mut grads = vec![Vec::new(); 2 * self.layers.len()];
        let mut delta = grad_output.clone();
        for l in (0..self.layers.len()).rev() {
            self.activation(l).backprop(&mut delta, &cache.outputs[l + 1]);
            let input = &cache.outputs[l];
            grads[2 * l] = input.t().dot(&delta).iter().copied().collect();
            grads[2 * l + 1] = delta.sum_axis(Axis(0)).to_vec();
            delta = delta.dot(&self.layers[l].weights.t());
        }
        (grads, delta)
    }
}

impl QNetwork for Mlp {
    type Cache = MlpCache;

    fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    fn num_actions(&self) -> usize {
        self.layers.last().map_or(0, Dense::fan_out)
    }

    fn architecture(&self) -> Architecture {
        Architecture { kind: "mlp".into(), layer_sizes: self.layer_sizes(), hidden: self.hidden }
    }

    fn forward(&self, input: &Array2<f64>) -> Array2<f64> {
        let mut x = self.layers[0].forward(input);
        self.activation(0).apply(&mut x);
        for (l, layer) in self.layers.iter().enumerate().skip(1) {
            x = layer.forward(&x);
            self.activation(l).apply(&mut x);
        }
        x
    }

    fn forward_cached(&self, input: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(input.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut x = layer.forward(outputs.last().unwrap());
            self.activation(l).apply(&mut x);
            outputs.push(x);
        }
        let out = outputs.last().unwrap().clone();
        (out, MlpCache { outputs })
    }

    fn backward(&self, cache: &MlpCache, grad_output: &Array2<f64>) -> Vec<Vec<f64>> {
        self.backward_full(cache, grad_output).0
    }

    fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [l.weights.as_slice().expect("standard layout"), l.bias.as_slice().expect("contiguous")]
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weights.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("contiguous"),
                ]
            })
            .collect()
    }
}

/// Rebuilds an MLP with zeroed parameters from its description.
pub fn mlp_from_architecture(arch: &Architecture) -> Result<Mlp, NetworkError> {
    if arch.kind != "mlp" || arch.layer_sizes.len() < 2 {
        return Err(NetworkError::Architecture(format!("cannot build an mlp from {arch:?}")));
    }
    let layers = arch.layer_sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
    Ok(Mlp::from_layers(layers, arch.hidden, Activation::Linear))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use ndarray::array;

    #[test]
    fn zero_net_outputs_zero() {
        let net = mlp_from_architecture(&Architecture {
            kind: "mlp".into(),
            layer_sizes: vec![5, 4, 3],
            hidden: Activation::Relu,
        })
        .unwrap();
        let q = net.forward(&array![[1.0, -2.0, 3.0, 0.5, 9.0]]);
        assert_eq!(q, Array2::<f64>::zeros((1, 3)));
    }

    #[test]
    fn hand_computed_two_layer_output() {
        // h = relu(x W1 + b1), q = h W2 + b2
        let l1 = Dense { weights: array![[1.0, -1.0], [2.0, 0.0]], bias: array![0.5, 0.0] };
        let l2 = Dense { weights: array![[1.0, 0.0, 2.0], [3.0, 1.0, 0.0]], bias: array![0.0, 1.0, -1.0] };
        let net = Mlp::from_layers(vec![l1, l2], Activation::Relu, Activation::Linear);
        // x = (1, 1): pre = (3.5, -1) -> h = (3.5, 0) -> q = (3.5, 1, 6)
        let q = net.forward(&array![[1.0, 1.0]]);
        assert_eq!(q, array![[3.5, 1.0, 6.0]]);
        let linear = Mlp::from_layers(net.layers().to_vec(), Activation::Linear, Activation::Linear);
        // h = (3.5, -1) -> q = (0.5, 0, 6)
        assert_eq!(linear.forward(&array![[1.0, 1.0]]), array![[0.5, 0.0, 6.0]]);
    }

    #[test]
    fn batch_rows_are_independent() {
        let mut rng = SeedTree::new(1).stream("init", 0);
        let net = Mlp::new(&[5, 16, 8, 5], Activation::Relu, &mut rng);
        let batch = Array2::from_shape_fn((64, 5), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 11.0);
        let q = net.forward(&batch);
        assert_eq!(q.dim(), (64, 5));
        for i in [0, 17, 63] {
            let row = batch.row(i).to_owned().insert_axis(Axis(0));
            assert_eq!(net.forward(&row).row(0), q.row(i));
        }
        let (cached, cache) = net.forward_cached(&batch);
        assert_eq!(cached, q);
        assert_eq!(cache.output(), &q);
    }

    #[test]
    fn xavier_respects_limit() {
        let mut rng = SeedTree::new(2).stream("init", 0);
        let d = Dense::xavier(5, 128, &mut rng);
        let limit = (6.0f64 / 133.0).sqrt();
        assert!(d.weights.iter().all(|w| w.abs() <= limit));
        assert!(d.bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn input_shape_is_checked() {
        let mut rng = SeedTree::new(3).stream("init", 0);
        let net = Mlp::new(&[5, 4, 2], Activation::Relu, &mut rng);
        assert_eq!(net.check_input(&Array2::zeros((1, 4))), Err(NetworkError::InputShape { expected: 5, got: 4 }));
    }
}

//! Fully connected conditioner networks: ReLU hidden layers, linear output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{NodeId, Tape};
use super::tensor::{affine_forward, Tensor};

/// Weights and biases of one MLP. `weights[l]` has shape
/// `sizes[l+1] x sizes[l]` (row-major), `biases[l]` is `1 x sizes[l+1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpParams {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let weights = sizes.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = sizes[1..].iter().map(|s| vec![0.0; *s]).collect();
        MlpParams { sizes: sizes.to_vec(), weights, biases }
    }

    /// He-style uniform init for hidden layers with a zeroed output layer, so
    /// the downstream transform starts at identity.
    pub fn he_uniform_zero_output(sizes: &[usize], rng: &mut impl Rng) -> Self {
        let mut params = Self::zeros(sizes);
        let last = params.weights.len() - 1;
        for (l, w) in params.weights.iter_mut().enumerate() {
            if l == last {
                break;
            }
            let bound = (6.0 / sizes[l] as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.gen_range(-bound..=bound);
            }
        }
        params
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Plain forward pass for one input vector.
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), self.input_size(), "MLP input length mismatch");
        let x = Tensor::from_vec(1, input.len(), input.to_vec());
        self.forward_batch(&x).data
    }

    /// Plain forward pass over a batch (rows are independent inputs).
    pub fn forward_batch(&self, input: &Tensor) -> Tensor {
        assert_eq!(input.cols, self.input_size(), "MLP input width mismatch");
        let last = self.weights.len() - 1;
        let mut x = input.clone();
        for l in 0..self.weights.len() {
            let w = Tensor::from_vec(self.sizes[l + 1], self.sizes[l], self.weights[l].clone());
            let b = Tensor::from_vec(1, self.sizes[l + 1], self.biases[l].clone());
            x = affine_forward(&x, &w, &b);
            if l != last {
                for v in &mut x.data {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
        x
    }

    /// Register this MLP's parameters on a tape.
    pub fn wire(&self, tape: &mut Tape) -> MlpNodes {
        let mut weights = Vec::with_capacity(self.weights.len());
        let mut biases = Vec::with_capacity(self.biases.len());
        for l in 0..self.weights.len() {
            weights.push(tape.leaf(Tensor::from_vec(
                self.sizes[l + 1],
                self.sizes[l],
                self.weights[l].clone(),
            )));
            biases.push(tape.leaf(Tensor::from_vec(1, self.sizes[l + 1], self.biases[l].clone())));
        }
        MlpNodes { weights, biases }
    }
}

/// Tape node ids of one wired MLP, in layer order.
pub struct MlpNodes {
    pub weights: Vec<NodeId>,
    pub biases: Vec<NodeId>,
}

impl MlpNodes {
    /// Record the forward pass on the tape.
    pub fn forward(&self, tape: &mut Tape, input: NodeId) -> NodeId {
        let last = self.weights.len() - 1;
        let mut x = input;
        for l in 0..self.weights.len() {
            x = tape.affine(x, self.weights[l], self.biases[l]);
            if l != last {
                x = tape.relu(x);
            }
        }
        x
    }
}

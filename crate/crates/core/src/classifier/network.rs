use serde::{Deserialize, Serialize};

use crate::classifier::{Activation, ClassifierSpec};
use crate::error::{Error, Result};
use crate::numerics::{
    matmul, matmul_transpose_a, matmul_transpose_b, softmax_rows, weighted_cross_entropy, xavier_init, Prng, RealMatrix,
};

/// One affine layer, `out = input · weights + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `fan_in × fan_out`
    pub weights: RealMatrix,
    pub bias: Vec<f64>,
}

impl Layer {
    fn forward(&self, input: &RealMatrix) -> Result<RealMatrix> {
        let mut z = matmul(input, &self.weights)?;
        z.add_row_vector(&self.bias)?;
        Ok(z)
    }

    pub fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }
}

/// Gradient of the loss with respect to one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: RealMatrix,
    pub bias: Vec<f64>,
}

/// A multilayer perceptron with softmax output. No hidden layers is softmax regression.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub(crate) activation: Activation,
    pub(crate) layers: Vec<Layer>,
}

impl Network {
    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: &ClassifierSpec, rng: &mut Prng) -> Self {
        let dims = spec.layer_dims();
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                weights: xavier_init(w[0], w[1], rng),
                bias: vec![0.0; w[1]],
            })
            .collect();
        Self {
            activation: spec.activation,
            layers,
        }
    }

    pub fn from_layers(activation: Activation, layers: Vec<Layer>) -> Self {
        Self { activation, layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.rows()
    }

    fn check_input(&self, features: &RealMatrix) -> Result<()> {
        if features.cols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "features have {} columns, model expects {}",
                features.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn logits(&self, features: &RealMatrix) -> Result<RealMatrix> {
        self.check_input(features)?;
        let last = self.layers.len() - 1;
        let mut a = features.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            a = layer.forward(&a)?;
            if l < last {
                self.activation.apply(&mut a);
            }
        }
        Ok(a)
    }

    pub fn predict_proba(&self, features: &RealMatrix) -> Result<RealMatrix> {
        Ok(softmax_rows(&self.logits(features)?))
    }

    /// Weighted cross-entropy of a batch and its gradient with respect to every parameter.
    pub fn loss_and_gradients(
        &self,
        features: &RealMatrix,
        labels: &[usize],
        class_weights: &[f64],
    ) -> Result<(f64, Vec<LayerGrad>)> {
        self.check_input(features)?;
        let last = self.layers.len() - 1;
        // inputs[l] is the input to layer l; pre[l] its pre-activation
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut a = features.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&a)?;
            inputs.push(a);
            if l < last {
                let mut h = z.clone();
                self.activation.apply(&mut h);
                pre.push(z);
                a = h;
            } else {
                a = z;
            }
        }
        let probs = softmax_rows(&a);
        let (loss, mut delta) = weighted_cross_entropy(&probs, labels, class_weights)?;

        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let weights = matmul_transpose_a(&inputs[l], &delta)?;
            let bias = delta.column_sums();
            if l > 0 {
                let mut upstream = matmul_transpose_b(&delta, &self.layers[l].weights)?;
                self.activation.backprop(&pre[l - 1], &mut upstream);
                delta = upstream;
            }
            grads.push(LayerGrad { weights, bias });
        }
        grads.reverse();
        Ok((loss, grads))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Parameter by flat index: each layer's weights row-major, then its bias.
    pub fn param(&self, index: usize) -> f64 {
        let (l, off) = self.locate(index);
        let layer = &self.layers[l];
        let nw = layer.weights.as_slice().len();
        if off < nw {
            layer.weights.as_slice()[off]
        } else {
            layer.bias[off - nw]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (l, off) = self.locate(index);
        let layer = &mut self.layers[l];
        let nw = layer.weights.as_slice().len();
        if off < nw {
            layer.weights.as_mut_slice()[off] = value;
        } else {
            layer.bias[off - nw] = value;
        }
    }

    fn locate(&self, mut index: usize) -> (usize, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            let n = layer.param_count();
            if index < n {
                return (l, index);
            }
            index -= n;
        }
        panic!("parameter index out of range");
    }
}

/// Flattens gradients in the same order as [`Network::param`].
pub fn flatten_grads(grads: &[LayerGrad]) -> Vec<f64> {
    let mut out = Vec::new();
    for g in grads {
        out.extend_from_slice(g.weights.as_slice());
        out.extend_from_slice(&g.bias);
    }
    out
}

impl Activation {
    fn apply(self, m: &mut RealMatrix) {
        match self {
            Activation::Relu => m.map_inplace(|x| x.max(0.0)),
            Activation::Tanh => m.map_inplace(f64::tanh),
        }
    }

    /// Multiplies `upstream` by the activation derivative at `pre`.
    fn backprop(self, pre: &RealMatrix, upstream: &mut RealMatrix) {
        let g = upstream.as_mut_slice();
        match self {
            Activation::Relu => {
                for (u, &z) in g.iter_mut().zip(pre.as_slice()) {
                    if z <= 0.0 {
                        *u = 0.0;
                    }
                }
            }
            Activation::Tanh => {
                for (u, &z) in g.iter_mut().zip(pre.as_slice()) {
                    let t = z.tanh();
                    *u *= 1.0 - t * t;
                }
            }
        }
    }
}

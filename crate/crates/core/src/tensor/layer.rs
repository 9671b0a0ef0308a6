use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Bound, ParamId, ParamStore, Tape, Var};
use crate::rng::Rng;
use crate::{Error, Result};

/// Lower/upper clamp applied before the `exp` activation.
pub const EXP_CLAMP: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Softmax,
    /// `exp(clamp(a, -20, 20))`, used for variance heads.
    Exp,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, a: Var) -> Var {
        match self {
            Activation::Identity => a,
            Activation::Relu => tape.relu(a),
            Activation::Softmax => tape.softmax_rows(a),
            Activation::Exp => {
                let c = tape.clamp(a, -EXP_CLAMP, EXP_CLAMP);
                tape.exp(c)
            }
            Activation::Sigmoid => tape.sigmoid(a),
        }
    }
}

/// Fully connected layer whose weights `[out × in]` and bias `[out]` live in a
/// [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl DenseLayer {
    /// Glorot-uniform weights, zero bias.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let w = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        let weights = store.add(format!("{name}.weight"), vec![outputs, inputs], w);
        let bias = store.add(format!("{name}.bias"), vec![outputs], vec![0.0; outputs]);
        Self {
            weights,
            bias,
            inputs,
            outputs,
            activation,
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, input: Var) -> Result<Var> {
        dense_forward(tape, bound, self, input)
    }
}

/// `activation(input · Wᵀ + b)` row-wise.
pub fn dense_forward(tape: &mut Tape, bound: &Bound, layer: &DenseLayer, input: Var) -> Result<Var> {
    let (_, width) = tape.dims(input);
    if width != layer.inputs {
        return Err(Error::dim(
            "dense layer input",
            &[layer.outputs, layer.inputs],
            tape.shape(input),
        ));
    }
    let z = tape.matmul_t(input, bound[layer.weights])?;
    let z = tape.add_bias(z, bound[layer.bias])?;
    Ok(layer.activation.apply(tape, z))
}

/// ReLU multilayer perceptron with a configurable output activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        hidden: &[usize],
        outputs: usize,
        output_activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut width = inputs;
        for (i, h) in hidden.iter().enumerate() {
            layers.push(DenseLayer::new(
                store,
                &format!("{name}.{i}"),
                width,
                *h,
                Activation::Relu,
                rng,
            ));
            width = *h;
        }
        layers.push(DenseLayer::new(
            store,
            &format!("{name}.out"),
            width,
            outputs,
            output_activation,
            rng,
        ));
        Self { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn output_layer(&self) -> &DenseLayer {
        &self.layers[self.layers.len() - 1]
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, input: Var) -> Result<Var> {
        let mut x = input;
        for layer in &self.layers {
            x = layer.forward(tape, bound, x)?;
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn single(inputs: usize, outputs: usize, w: Vec<f64>, b: Vec<f64>, act: Activation) -> (ParamStore, DenseLayer) {
        let mut store = ParamStore::new("t");
        let weights = store.add("w", vec![outputs, inputs], w);
        let bias = store.add("b", vec![outputs], b);
        let layer = DenseLayer {
            weights,
            bias,
            inputs,
            outputs,
            activation: act,
        };
        (store, layer)
    }

    fn run(store: &ParamStore, layer: &DenseLayer, x: Vec<f64>) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let n = x.len();
        let input = tape.constant(Tensor::matrix(1, n, x)?);
        let y = dense_forward(&mut tape, &bound, layer, input)?;
        Ok(tape.value(y).to_vec())
    }

    #[test]
    fn identity_weights_pass_input() {
        let eye = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let (s, l) = single(3, 3, eye, vec![0.0; 3], Activation::Identity);
        assert_eq!(run(&s, &l, vec![1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_weights_give_bias() {
        let (s, l) = single(4, 1, vec![0.0; 4], vec![5.0], Activation::Identity);
        assert_eq!(run(&s, &l, vec![9.0, -3.0, 2.0, 7.0]).unwrap(), vec![5.0]);
    }

    #[test]
    fn scalar_affine() {
        let (s, l) = single(1, 1, vec![2.0], vec![1.0], Activation::Identity);
        assert_eq!(run(&s, &l, vec![3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn exp_activation_is_clamped() {
        let (s, l) = single(1, 1, vec![1.0], vec![0.0], Activation::Exp);
        assert_eq!(run(&s, &l, vec![1000.0]).unwrap(), vec![20f64.exp()]);
    }

    #[test]
    fn width_mismatch_reports_both_shapes() {
        let (s, l) = single(3, 2, vec![0.0; 6], vec![0.0; 2], Activation::Relu);
        match run(&s, &l, vec![1.0, 2.0]) {
            Err(Error::Dimension { expected, actual, .. }) => {
                assert_eq!(expected, vec![2, 3]);
                assert_eq!(actual, vec![1, 2]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

//! Fully connected network over a flat parameter vector.
//!
//! Layout: trunk `p → h → h`, then a cause head on `[trunk output, raw input]`
//! with one hidden layer `(h + p) → h` and an output layer `h → B`. Weights are
//! stored row-major as `(in, out)` blocks followed by their biases.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::SurvError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Elu,
    #[serde(alias = "leaky_relu")]
    LeakyRelu,
}

const LEAKY_SLOPE: f64 = 0.01;

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Relu => z.max(0.0),
            Self::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Self::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Self::Relu => f64::from(u8::from(z > 0.0)),
            Self::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    z.exp()
                }
            }
            Self::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = SurvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Self::Relu),
            "elu" => Ok(Self::Elu),
            "leakyrelu" | "leaky_relu" => Ok(Self::LeakyRelu),
            other => Err(SurvError::InvalidHyperparameter(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub inputs: usize,
    pub hidden: usize,
    pub bins: usize,
    pub activation: Activation,
}

/// Offsets of one dense layer inside the flat vector.
#[derive(Clone, Copy, Debug)]
struct Dense {
    weight: usize,
    bias: usize,
    fan_in: usize,
    fan_out: usize,
}

impl Dense {
    fn end(&self) -> usize {
        self.bias + self.fan_out
    }

    fn w<'a>(&self, params: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape(
            (self.fan_in, self.fan_out),
            &params[self.weight..self.bias],
        )
        .expect("layout is consistent")
    }

    fn b<'a>(&self, params: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&params[self.bias..self.end()])
    }

    fn forward(&self, params: &[f64], input: ArrayView2<'_, f64>) -> Array2<f64> {
        input.dot(&self.w(params)) + self.b(params)
    }

    /// Accumulate weight and bias gradients; return the input gradient.
    fn backward(
        &self,
        params: &[f64],
        input: ArrayView2<'_, f64>,
        d_out: ArrayView2<'_, f64>,
        grad: &mut [f64],
    ) -> Array2<f64> {
        let dw = input.t().dot(&d_out);
        grad[self.weight..self.bias]
            .iter_mut()
            .zip(dw.iter())
            .for_each(|(g, d)| *g += d);
        let db = d_out.sum_axis(Axis(0));
        grad[self.bias..self.end()]
            .iter_mut()
            .zip(db.iter())
            .for_each(|(g, d)| *g += d);
        d_out.dot(&self.w(params).t())
    }
}

/// Intermediate values kept for the backward pass.
pub struct Forward {
    x: Array2<f64>,
    z1: Array2<f64>,
    a1: Array2<f64>,
    z2: Array2<f64>,
    head_in: Array2<f64>,
    z3: Array2<f64>,
    a3: Array2<f64>,
    pub probs: Array2<f64>,
}

impl Mlp {
    fn layers(&self) -> [Dense; 4] {
        let shapes = [
            (self.inputs, self.hidden),
            (self.hidden, self.hidden),
            (self.hidden + self.inputs, self.hidden),
            (self.hidden, self.bins),
        ];
        let mut offset = 0;
        shapes.map(|(fan_in, fan_out)| {
            let layer = Dense {
                weight: offset,
                bias: offset + fan_in * fan_out,
                fan_in,
                fan_out,
            };
            offset = layer.end();
            layer
        })
    }

    pub fn n_params(&self) -> usize {
        self.layers()[3].end()
    }

    /// Uniform Glorot weights, zero biases.
    pub fn init<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = vec![0.0; self.n_params()];
        for layer in self.layers() {
            let limit = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
            for w in &mut params[layer.weight..layer.bias] {
                *w = rng.random_range(-limit..limit);
            }
        }
        params
    }

    fn activate(&self, z: &Array2<f64>) -> Array2<f64> {
        z.mapv(|v| self.activation.apply(v))
    }

    pub fn forward(&self, params: &[f64], x: ArrayView2<'_, f64>) -> Forward {
        debug_assert_eq!(params.len(), self.n_params());
        debug_assert_eq!(x.ncols(), self.inputs);
        let [l1, l2, l3, l4] = self.layers();
        let z1 = l1.forward(params, x);
        let a1 = self.activate(&z1);
        let z2 = l2.forward(params, a1.view());
        let a2 = self.activate(&z2);
        let head_in = concatenate![Axis(1), a2, x];
        let z3 = l3.forward(params, head_in.view());
        let a3 = self.activate(&z3);
        let mut probs = l4.forward(params, a3.view());
        for mut row in probs.rows_mut() {
            softmax_in_place(row.as_slice_mut().expect("standard layout"));
        }
        Forward {
            x: x.to_owned(),
            z1,
            a1,
            z2,
            head_in,
            z3,
            a3,
            probs,
        }
    }

    pub fn probabilities(&self, params: &[f64], x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.forward(params, x).probs
    }

    /// Parameter gradient given `dL/dq` for every softmax output.
    pub fn backward(&self, params: &[f64], fwd: &Forward, d_probs: ArrayView2<'_, f64>) -> Vec<f64> {
        let [l1, l2, l3, l4] = self.layers();
        let mut grad = vec![0.0; self.n_params()];
        // Softmax Jacobian: dz = q ⊙ (dq − ⟨dq, q⟩).
        let mut d_logits = Array2::zeros(fwd.probs.raw_dim());
        for ((q, dq), mut dz) in fwd
            .probs
            .rows()
            .into_iter()
            .zip(d_probs.rows())
            .zip(d_logits.rows_mut())
        {
            let inner = q.dot(&dq);
            dz.assign(&(&q * &(&dq - inner)));
        }
        let d_a3 = l4.backward(params, fwd.a3.view(), d_logits.view(), &mut grad);
        let d_z3 = d_a3 * fwd.z3.mapv(|v| self.activation.derivative(v));
        let d_head = l3.backward(params, fwd.head_in.view(), d_z3.view(), &mut grad);
        let d_a2 = d_head.slice(s![.., ..self.hidden]);
        let d_z2 = &d_a2 * &fwd.z2.mapv(|v| self.activation.derivative(v));
        let d_a1 = l2.backward(params, fwd.a1.view(), d_z2.view(), &mut grad);
        let d_z1 = d_a1 * fwd.z1.mapv(|v| self.activation.derivative(v));
        l1.backward(params, fwd.x.view(), d_z1.view(), &mut grad);
        grad
    }
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

/// Column means and standard deviations; zero spread maps to 1.
pub(crate) fn standardization(x: ArrayView2<'_, f64>) -> (Array1<f64>, Array1<f64>) {
    let n = x.nrows().max(1) as f64;
    let mean = x.sum_axis(Axis(0)) / n;
    let sd = x
        .axis_iter(Axis(1))
        .zip(mean.iter())
        .map(|(col, m)| {
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    (mean, sd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn parameter_count() {
        let mlp = Mlp {
            inputs: 3,
            hidden: 4,
            bins: 5,
            activation: Activation::Relu,
        };
        let expected = (3 * 4 + 4) + (4 * 4 + 4) + (7 * 4 + 4) + (4 * 5 + 5);
        assert_eq!(mlp.n_params(), expected);
        assert_eq!(mlp.init(&mut seed::rng(1)).len(), expected);
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let mut rng = seed::rng(2);
        let mlp = Mlp {
            inputs: 4,
            hidden: 8,
            bins: 6,
            activation: Activation::Elu,
        };
        let params = mlp.init(&mut rng);
        let x = Array2::from_shape_fn((200, 4), |_| rng.random_range(-50.0..50.0));
        for row in mlp.probabilities(&params, x.view()).rows() {
            assert!(row.iter().all(|&q| q >= 0.0));
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn activations() {
        assert_eq!(Activation::Relu.apply(-2.0), 0.0);
        assert_eq!(Activation::LeakyRelu.apply(-2.0), -0.02);
        assert!((Activation::Elu.apply(-1.0) - (-0.632_120_558_828_557_7)).abs() < 1e-15);
        assert_eq!("LeakyReLU".parse::<Activation>().unwrap(), Activation::LeakyRelu);
        assert!("tanh".parse::<Activation>().is_err());
    }

    #[test]
    fn constant_columns_do_not_divide_by_zero() {
        let x = ndarray::array![[1.0, 2.0], [1.0, 4.0]];
        let (mean, sd) = standardization(x.view());
        assert_eq!(mean.to_vec(), vec![1.0, 3.0]);
        assert_eq!(sd.to_vec(), vec![1.0, 1.0]);
    }
}

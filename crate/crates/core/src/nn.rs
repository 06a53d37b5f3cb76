//! Dense feed-forward networks with manual backpropagation and Adam.
//!
//! Weights are stored `in × out` so a batch `X (n × in)` maps to `X·W + b`.
//! Both the diffusion denoiser and the membership classifier are built on
//! [`Mlp`].

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Silu,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Silu => x * sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative in terms of the pre-activation `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }

    /// He-style uniform initialization, `U(-√(6/fan_in), √(6/fan_in))`, zero bias.
    pub fn he_uniform<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let limit = (6.0 / input.max(1) as f64).sqrt();
        let weight = Array2::from_shape_fn((input, output), |_| rng.gen_range(-limit..limit));
        Self {
            weight,
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub hidden: Activation,
    pub output: Activation,
}

/// Activations retained by [`Mlp::forward_cached`] for backprop.
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.post.last().expect("network has at least one layer")
    }
}

impl Mlp {
    /// `dims = [input, hidden.., output]`.
    pub fn new<R: Rng>(dims: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output dims");
        let layers = dims
            .windows(2)
            .map(|w| Dense::he_uniform(w[0], w[1], rng))
            .collect();
        Self {
            layers,
            hidden,
            output,
        }
    }

    pub fn zeros(dims: &[usize], hidden: Activation, output: Activation) -> Self {
        let layers = dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Self {
            layers,
            hidden,
            output,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].input_dim()];
        dims.extend(self.layers.iter().map(Dense::output_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Dense::output_dim).unwrap_or(0)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight);
            z += &layer.bias;
            let act = self.activation_of(i);
            if act != Activation::Identity {
                z.mapv_inplace(|v| act.apply(v));
            }
            h = z;
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> ForwardCache {
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut post = Vec::with_capacity(n);
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight);
            z += &layer.bias;
            let act = self.activation_of(i);
            let y = if act == Activation::Identity {
                z.clone()
            } else {
                z.mapv(|v| act.apply(v))
            };
            inputs.push(h);
            pre.push(z);
            h = y.clone();
            post.push(y);
        }
        ForwardCache { inputs, pre, post }
    }

    /// Backpropagates `grad_pre_out`, the loss gradient with respect to the
    /// final layer's pre-activation. Callers fold the output activation into
    /// it (e.g. `p - y` for sigmoid with cross-entropy).
    pub fn backward(&self, cache: &ForwardCache, grad_pre_out: Array2<f64>) -> Vec<Dense> {
        let n = self.layers.len();
        let mut grads: Vec<Dense> = Vec::with_capacity(n);
        let mut delta = grad_pre_out;
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            let gw = cache.inputs[i].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            grads.push(Dense {
                weight: gw,
                bias: gb,
            });
            if i > 0 {
                let mut upstream = delta.dot(&layer.weight.t());
                let act = self.activation_of(i - 1);
                if act != Activation::Identity {
                    Zip::from(&mut upstream)
                        .and(&cache.pre[i - 1])
                        .and(&cache.post[i - 1])
                        .for_each(|g, &z, &y| *g *= act.derivative(z, y));
                }
                delta = upstream;
            }
        }
        grads.reverse();
        grads
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub struct Adam {
    params: AdamParams,
    lr: f64,
    step: i32,
    m: Vec<Dense>,
    v: Vec<Dense>,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64, params: AdamParams) -> Self {
        let zeros = || {
            net.layers
                .iter()
                .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
                .collect::<Vec<_>>()
        };
        Self {
            params,
            lr,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn update(&mut self, net: &mut Mlp, grads: &[Dense]) {
        self.step += 1;
        let AdamParams { beta1, beta2, eps } = self.params;
        let bc1 = 1.0 - beta1.powi(self.step);
        let bc2 = 1.0 - beta2.powi(self.step);
        let lr = self.lr;
        for ((layer, g), (m, v)) in net
            .layers
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let step = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            };
            Zip::from(&mut layer.weight)
                .and(&g.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .for_each(step);
            Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(step);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    fn squared_error(net: &Mlp, x: &Array2<f64>, target: &Array2<f64>) -> f64 {
        let out = net.forward(x.view());
        (&out - target).mapv(|v| v * v).sum()
    }

    fn gradient_check(dims: &[usize], hidden: Activation) {
        let mut rng = seed::rng(11);
        let net = Mlp::new(dims, hidden, Activation::Identity, &mut rng);
        let n = 4;
        let x = Array2::from_shape_fn((n, dims[0]), |_| StandardNormal.sample(&mut rng));
        let target = Array2::from_shape_fn((n, *dims.last().unwrap()), |_| {
            StandardNormal.sample(&mut rng)
        });
        let cache = net.forward_cached(x.view());
        let grad_out = (cache.output() - &target) * 2.0;
        let grads = net.backward(&cache, grad_out);

        let h = 1e-4;
        for (li, g) in grads.iter().enumerate() {
            for idx in 0..g.weight.len() {
                let (r, c) = (idx / g.weight.ncols(), idx % g.weight.ncols());
                let mut plus = net.clone();
                plus.layers[li].weight[[r, c]] += h;
                let mut minus = net.clone();
                minus.layers[li].weight[[r, c]] -= h;
                let fd = (squared_error(&plus, &x, &target) - squared_error(&minus, &x, &target))
                    / (2.0 * h);
                let an = g.weight[[r, c]];
                let denom = an.abs().max(fd.abs()).max(1e-6);
                assert!((an - fd).abs() / denom < 1e-4, "layer {li} w[{r},{c}]: {an} vs {fd}");
            }
            for j in 0..g.bias.len() {
                let mut plus = net.clone();
                plus.layers[li].bias[j] += h;
                let mut minus = net.clone();
                minus.layers[li].bias[j] -= h;
                let fd = (squared_error(&plus, &x, &target) - squared_error(&minus, &x, &target))
                    / (2.0 * h);
                let an = g.bias[j];
                let denom = an.abs().max(fd.abs()).max(1e-6);
                assert!((an - fd).abs() / denom < 1e-4, "layer {li} b[{j}]: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn silu_backprop_matches_finite_differences() {
        gradient_check(&[3, 3, 3], Activation::Silu);
        gradient_check(&[5, 7, 6, 2], Activation::Silu);
    }

    #[test]
    fn tanh_backprop_matches_finite_differences() {
        gradient_check(&[4, 6, 6, 1], Activation::Tanh);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 5, 2], Activation::Silu, Activation::Identity);
        let out = net.forward(Array2::from_elem((2, 3), 1.5).view());
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adam_with_zero_lr_leaves_weights() {
        let mut rng = seed::rng(1);
        let mut net = Mlp::new(&[2, 4, 1], Activation::Tanh, Activation::Identity, &mut rng);
        let before = net.clone();
        let mut adam = Adam::new(&net, 0.0, AdamParams::default());
        let x = Array2::from_elem((3, 2), 0.5);
        let cache = net.forward_cached(x.view());
        let grads = net.backward(&cache, cache.output().clone());
        adam.update(&mut net, &grads);
        assert_eq!(net, before);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }
}

use serde::{Deserialize, Serialize};

use super::adam::ParamBlocks;
use super::matrix::Matrix;
use super::rng::RngKey;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Parameters of a fully connected network. `weights[i]` maps layer `i` to
/// layer `i + 1` and has shape `layer_sizes[i + 1] x layer_sizes[i]`.
///
/// The same type doubles as the gradient container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    hidden_activation: Activation,
    output_activation: Activation,
}

/// Post-activation values of every layer, `acts[0]` being the input.
#[derive(Clone, Debug)]
pub struct MlpTape {
    acts: Vec<Vec<f64>>,
}

impl MlpTape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape has at least the input")
    }
}

impl MlpParams {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(
        layer_sizes: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
        key: &RngKey,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "MLP needs at least two non-empty layers, got {layer_sizes:?}"
            )));
        }
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for (i, pair) in layer_sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = key
                .fold(i as u64)
                .uniform(fan_in * fan_out)
                .into_iter()
                .map(|u| (2.0 * u - 1.0) * limit)
                .collect();
            weights.push(Matrix::from_vec(fan_out, fan_in, data)?);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            hidden_activation,
            output_activation,
        })
    }

    pub fn from_parts(
        weights: Vec<Matrix>,
        biases: Vec<Vec<f64>>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::shape(
                "MlpParams::from_parts",
                "matching non-empty weight and bias lists",
                format!("{} weights, {} biases", weights.len(), biases.len()),
            ));
        }
        let mut layer_sizes = vec![weights[0].cols()];
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.cols() != *layer_sizes.last().unwrap() || b.len() != w.rows() {
                return Err(Error::shape(
                    format!("MlpParams::from_parts layer {i}"),
                    format!("{}x{} with bias {}", w.rows(), layer_sizes[i], w.rows()),
                    format!("{}x{} with bias {}", w.rows(), w.cols(), b.len()),
                ));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("bias of layer {i}")));
            }
            layer_sizes.push(w.rows());
        }
        Ok(Self {
            layer_sizes,
            weights,
            biases,
            hidden_activation,
            output_activation,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layer_sizes: self.layer_sizes.clone(),
            weights: self
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            hidden_activation: self.hidden_activation,
            output_activation: self.output_activation,
        }
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.weights.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::shape(
                format!("MLP input (layers {:?})", self.layer_sizes),
                self.input_dim(),
                input.len(),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            w.affine_into(&cur, b, &mut next);
            let act = self.activation(i);
            next.iter_mut().for_each(|v| *v = act.apply(*v));
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn forward_tape(&self, input: &[f64]) -> Result<MlpTape> {
        self.check_input(input)?;
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(input.to_vec());
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut out = Vec::with_capacity(w.rows());
            w.affine_into(acts.last().unwrap(), b, &mut out);
            let act = self.activation(i);
            out.iter_mut().for_each(|v| *v = act.apply(*v));
            acts.push(out);
        }
        Ok(MlpTape { acts })
    }

    /// Accumulates the gradient of `<upstream, output>` into `grads` and
    /// returns the gradient with respect to the input.
    pub fn backward_into(
        &self,
        tape: &MlpTape,
        upstream: &[f64],
        grads: &mut MlpParams,
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::shape(
                "MLP upstream gradient",
                self.output_dim(),
                upstream.len(),
            ));
        }
        if tape.acts.len() != self.weights.len() + 1 || grads.layer_sizes != self.layer_sizes {
            return Err(Error::shape(
                "MLP backward tape/gradient layout",
                format!("{:?}", self.layer_sizes),
                format!("{:?}", grads.layer_sizes),
            ));
        }
        let last = self.weights.len() - 1;
        let mut delta: Vec<f64> = upstream
            .iter()
            .zip(&tape.acts[last + 1])
            .map(|(g, &y)| g * self.output_activation.derivative_from_output(y))
            .collect();
        for i in (0..=last).rev() {
            grads.weights[i].add_outer(&delta, &tape.acts[i]);
            grads.biases[i]
                .iter_mut()
                .zip(&delta)
                .for_each(|(g, d)| *g += d);
            let mut prev = vec![0.0; self.layer_sizes[i]];
            self.weights[i].add_transpose_mul(&delta, &mut prev);
            if i > 0 {
                let act = self.hidden_activation;
                prev.iter_mut()
                    .zip(&tape.acts[i])
                    .for_each(|(p, &y)| *p *= act.derivative_from_output(y));
            }
            delta = prev;
        }
        Ok(delta)
    }

    pub fn scale(&mut self, factor: f64) {
        self.blocks_mut()
            .into_iter()
            .for_each(|b| b.iter_mut().for_each(|v| *v *= factor));
    }

    /// Linear interpolation `self <- (1 - rate) * self + rate * other`.
    pub fn soft_update_from(&mut self, other: &MlpParams, rate: f64) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = (1.0 - rate) * *d + rate * s;
            }
        }
    }
}

impl ParamBlocks for MlpParams {
    fn blocks(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }

    fn block_names(&self) -> Vec<String> {
        (0..self.weights.len())
            .flat_map(|i| [format!("weights[{i}]"), format!("biases[{i}]")])
            .collect()
    }
}

pub fn mlp_forward(params: &MlpParams, input: &[f64]) -> Result<Vec<f64>> {
    params.forward(input)
}

/// Exact gradients of `<upstream_grad, mlp_forward(params, input)>`.
pub fn mlp_backward(
    params: &MlpParams,
    input: &[f64],
    upstream_grad: &[f64],
) -> Result<(MlpParams, Vec<f64>)> {
    let tape = params.forward_tape(input)?;
    let mut grads = params.zeros_like();
    let input_grad = params.backward_into(&tape, upstream_grad, &mut grads)?;
    Ok((grads, input_grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_layer(w: Vec<f64>, rows: usize, cols: usize, b: Vec<f64>, act: Activation) -> MlpParams {
        MlpParams::from_parts(
            vec![Matrix::from_vec(rows, cols, w).unwrap()],
            vec![b],
            Activation::Relu,
            act,
        )
        .unwrap()
    }

    /// Straight-line reference forward pass written without the tape machinery.
    fn naive_forward(p: &MlpParams, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let n = p.weights().len();
        for l in 0..n {
            let w = &p.weights()[l];
            let mut out = vec![0.0; w.rows()];
            for r in 0..w.rows() {
                let mut s = p.biases()[l][r];
                for c in 0..w.cols() {
                    s += w.get(r, c) * h[c];
                }
                let act = if l + 1 == n { p.output_activation() } else { p.hidden_activation() };
                out[r] = match act {
                    Activation::Relu => if s > 0.0 { s } else { 0.0 },
                    Activation::Tanh => s.tanh(),
                    Activation::Identity => s,
                };
            }
            h = out;
        }
        h
    }

    fn random_net(seed: u64, sizes: &[usize], hidden: Activation, out: Activation) -> MlpParams {
        let key = RngKey::new(seed);
        let mut p = MlpParams::init(sizes, hidden, out, &key.split("w")).unwrap();
        let noise = key.split("b");
        for (i, b) in p.biases_mut().iter_mut().enumerate() {
            let draws = noise.fold(i as u64).gaussian(b.len());
            b.iter_mut().zip(draws).for_each(|(v, d)| *v = 0.3 * d);
        }
        p
    }

    #[test]
    fn identity_single_layer() {
        let p = single_layer(vec![1.0, 0.0, 0.0, 1.0], 2, 2, vec![0.0, 0.0], Activation::Identity);
        assert_eq!(mlp_forward(&p, &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn constant_relu_output() {
        let p = single_layer(vec![0.0, 0.0, 0.0], 1, 3, vec![0.5], Activation::Relu);
        for x in [[1.0, -2.0, 3.0], [0.0, 0.0, 0.0], [-9.0, 4.0, 1e6]] {
            assert_eq!(mlp_forward(&p, &x).unwrap(), vec![0.5]);
        }
    }

    #[test]
    fn forward_matches_naive_reimplementation() {
        for seed in 0..10 {
            let p = random_net(seed, &[5, 7, 6, 3], Activation::Relu, Activation::Tanh);
            let x = RngKey::new(100 + seed).gaussian(5);
            let fast = mlp_forward(&p, &x).unwrap();
            let slow = naive_forward(&p, &x);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn dimension_mismatch_names_both_shapes() {
        let p = random_net(0, &[3, 4, 2], Activation::Relu, Activation::Identity);
        let msg = mlp_forward(&p, &[1.0, 2.0]).unwrap_err().to_string();
        assert!(msg.contains('3') && msg.contains('2'), "{msg}");
        assert!(mlp_backward(&p, &[1.0, 2.0, 3.0], &[1.0]).is_err());
    }

    #[test]
    fn linear_gradient_is_outer_product() {
        let w = vec![0.3, -0.2, 0.7, 1.1, 0.5, -0.4];
        let p = single_layer(w, 2, 3, vec![0.0, 0.0], Activation::Identity);
        let x = [1.0, -2.0, 0.5];
        let up = [0.25, -1.5];
        let (g, gx) = mlp_backward(&p, &x, &up).unwrap();
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(g.weights()[0].get(r, c), up[r] * x[c]);
            }
        }
        assert_eq!(g.biases()[0], up.to_vec());
        for c in 0..3 {
            let expect = up[0] * p.weights()[0].get(0, c) + up[1] * p.weights()[0].get(1, c);
            assert!((gx[c] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn relu_blocks_gradient_at_negative_preactivation() {
        // hidden unit 0 has pre-activation -1, unit 1 has +1.
        let first = Matrix::from_vec(2, 1, vec![-1.0, 1.0]).unwrap();
        let second = Matrix::from_vec(1, 2, vec![2.0, 3.0]).unwrap();
        let p = MlpParams::from_parts(
            vec![first, second],
            vec![vec![0.0, 0.0], vec![0.0]],
            Activation::Relu,
            Activation::Identity,
        )
        .unwrap();
        let (g, gx) = mlp_backward(&p, &[1.0], &[1.0]).unwrap();
        assert_eq!(g.weights()[0].get(0, 0), 0.0);
        assert_eq!(g.biases()[0][0], 0.0);
        assert_eq!(g.weights()[1].get(0, 0), 0.0);
        assert_eq!(g.weights()[0].get(1, 0), 3.0);
        assert_eq!(gx, vec![3.0]);
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-2)
    }

    #[test]
    fn backward_matches_finite_differences() {
        let h = 1e-5;
        for seed in 0..20 {
            let p = random_net(seed, &[4, 6, 5, 3], Activation::Relu, Activation::Identity);
            let x = RngKey::new(7 + seed).gaussian(4);
            let up = RngKey::new(99 + seed).gaussian(3);
            let objective = |q: &MlpParams, x: &[f64]| -> f64 {
                q.forward(x).unwrap().iter().zip(&up).map(|(o, u)| o * u).sum()
            };
            let (g, gx) = mlp_backward(&p, &x, &up).unwrap();
            let mut q = p.clone();
            let n_blocks = q.blocks().len();
            for bi in 0..n_blocks {
                let len = q.blocks()[bi].len();
                for j in 0..len {
                    let orig = q.blocks()[bi][j];
                    q.blocks_mut()[bi][j] = orig + h;
                    let plus = objective(&q, &x);
                    q.blocks_mut()[bi][j] = orig - h;
                    let minus = objective(&q, &x);
                    q.blocks_mut()[bi][j] = orig;
                    let fd = (plus - minus) / (2.0 * h);
                    let an = g.blocks()[bi][j];
                    assert!(rel_err(an, fd) < 1e-5, "seed {seed} block {bi}[{j}]: {an} vs {fd}");
                }
            }
            for j in 0..x.len() {
                let mut xp = x.clone();
                xp[j] += h;
                let mut xm = x.clone();
                xm[j] -= h;
                let fd = (objective(&p, &xp) - objective(&p, &xm)) / (2.0 * h);
                assert!(rel_err(gx[j], fd) < 1e-5);
            }
        }
    }
}

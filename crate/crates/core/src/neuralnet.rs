//! Small fully connected networks with exact reverse-mode gradients.
//!
//! Layers are stored row-major (`weights[o * input + i]`). Hidden layers use
//! a leaky ReLU; at a pre-activation of exactly zero the negative-slope
//! branch is taken, both in the forward pass and in derivatives. The final
//! layer of a classifier is linear and its logits go through softmax inside
//! [`Mlp::loss_and_grad`]. A classifier head can be *pinned*: class 0 has its
//! weight row and bias fixed at zero, which removes the softmax's shift
//! redundancy.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::map::DifferentiableMap;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub input: usize,
    pub output: usize,
    /// Row-major `output × input`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self { input, output, weights: vec![0.0; input * output], bias: vec![0.0; output], activation }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot(input: usize, output: usize, activation: Activation, r: &mut rng::Rng) -> Self {
        let bound = (6.0 / (input + output) as f64).sqrt();
        let weights = (0..input * output).map(|_| r.random_range(-bound..bound)).collect();
        Self { input, output, weights, bias: vec![0.0; output], activation }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    /// Negative-side slope of every leaky-ReLU layer.
    pub slope: f64,
    /// Class-0 row and bias of the last layer are held at zero.
    pub pinned_head: bool,
}

/// Pre- and post-activation values of every layer for one input.
#[derive(Debug, Clone, Default)]
pub struct Forward {
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

impl Forward {
    pub fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Gradient with the same layout as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// The learning rate is halved this many times, evenly spaced over the
    /// run.
    pub decay_steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.1, momentum: 0.9, batch_size: 128, epochs: 300, decay_steps: 2, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss over each epoch's batches.
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
}

impl Mlp {
    pub fn new(layers: Vec<Layer>, slope: f64, pinned_head: bool) -> Result<Self> {
        if layers.is_empty() {
            return Err(param("network needs at least one layer"));
        }
        for (a, b) in layers.iter().zip(layers.iter().skip(1)) {
            if a.output != b.input {
                return Err(Error::Dimension { expected: a.output, got: b.input });
            }
        }
        for l in &layers {
            if l.weights.len() != l.input * l.output || l.bias.len() != l.output {
                return Err(param("layer parameter buffers do not match its shape"));
            }
        }
        let mut net = Self { layers, slope, pinned_head };
        net.enforce_pin();
        Ok(net)
    }

    /// Glorot-initialized network with the given widths and activations
    /// (`activations.len() == widths.len() - 1`).
    pub fn random(widths: &[usize], activations: &[Activation], slope: f64, pinned_head: bool, seed: u64) -> Result<Self> {
        if widths.len() < 2 || activations.len() != widths.len() - 1 {
            return Err(param("need one activation per layer"));
        }
        let mut r = rng::rng(seed);
        let layers = widths.windows(2).zip(activations).map(|(w, &a)| Layer::glorot(w[0], w[1], a, &mut r)).collect();
        Self::new(layers, slope, pinned_head)
    }

    fn enforce_pin(&mut self) {
        if self.pinned_head {
            let head = self.layers.last_mut().unwrap();
            let input = head.input;
            head.weights[..input].iter_mut().for_each(|w| *w = 0.0);
            head.bias[0] = 0.0;
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output
    }

    #[inline]
    fn act(&self, a: Activation, v: f64) -> f64 {
        match a {
            Activation::Identity => v,
            Activation::LeakyRelu if v > 0.0 => v,
            Activation::LeakyRelu => self.slope * v,
        }
    }

    #[inline]
    fn act_deriv(&self, a: Activation, v: f64) -> f64 {
        match a {
            Activation::Identity => 1.0,
            Activation::LeakyRelu if v > 0.0 => 1.0,
            Activation::LeakyRelu => self.slope,
        }
    }

    fn forward_into(&self, x: &[f64], f: &mut Forward) {
        f.pre.resize(self.layers.len(), Vec::new());
        f.post.resize(self.layers.len(), Vec::new());
        for (l, layer) in self.layers.iter().enumerate() {
            let (done, rest) = f.post.split_at_mut(l);
            let input: &[f64] = if l == 0 { x } else { &done[l - 1] };
            let pre = &mut f.pre[l];
            pre.clear();
            for o in 0..layer.output {
                let row = &layer.weights[o * layer.input..(o + 1) * layer.input];
                pre.push(layer.bias[o] + row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>());
            }
            let post = &mut rest[0];
            post.clear();
            post.extend(pre.iter().map(|&v| self.act(layer.activation, v)));
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension { expected: self.input_dim(), got: x.len() });
        }
        let mut f = Forward::default();
        self.forward_into(x, &mut f);
        Ok(f)
    }

    pub fn output(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.post.pop().unwrap())
    }

    fn zero_gradient(&self) -> Gradient {
        Gradient {
            weights: self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: self.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    /// Accumulate `∂(upstream · output)/∂params` for one forward pass.
    fn backprop(&self, x: &[f64], f: &Forward, upstream: &[f64], g: &mut Gradient, delta: &mut Vec<f64>, next: &mut Vec<f64>) {
        delta.clear();
        delta.extend_from_slice(upstream);
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            for (o, d) in delta.iter_mut().enumerate() {
                *d *= self.act_deriv(layer.activation, f.pre[l][o]);
            }
            let input: &[f64] = if l == 0 { x } else { &f.post[l - 1] };
            let gw = &mut g.weights[l];
            for (o, &d) in delta.iter().enumerate() {
                g.bias[l][o] += d;
                let row = &mut gw[o * layer.input..(o + 1) * layer.input];
                for (w, v) in row.iter_mut().zip(input) {
                    *w += d * v;
                }
            }
            if l > 0 {
                next.clear();
                next.resize(layer.input, 0.0);
                for (o, &d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.input..(o + 1) * layer.input];
                    for (n, w) in next.iter_mut().zip(row) {
                        *n += d * w;
                    }
                }
                std::mem::swap(delta, next);
            }
        }
    }

    /// Mean softmax cross-entropy over a batch and its exact gradient.
    pub fn loss_and_grad(&self, rows: &[&[f64]], labels: &[usize]) -> Result<(f64, Gradient)> {
        if rows.is_empty() {
            return Err(Error::Empty("training batch".into()));
        }
        if rows.len() != labels.len() {
            return Err(Error::Dimension { expected: rows.len(), got: labels.len() });
        }
        let classes = self.output_dim();
        if let Some(&bad) = labels.iter().find(|&&c| c >= classes) {
            return Err(param(format!("label {bad} out of range for {classes} classes")));
        }
        let mut g = self.zero_gradient();
        let mut f = Forward::default();
        let (mut delta, mut next, mut up) = (Vec::new(), Vec::new(), vec![0.0; classes]);
        let mut loss = 0.0;
        for (x, &c) in rows.iter().zip(labels) {
            if x.len() != self.input_dim() {
                return Err(Error::Dimension { expected: self.input_dim(), got: x.len() });
            }
            self.forward_into(x, &mut f);
            let logits = f.output();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|v| (v - max).exp()).sum();
            loss += z.ln() + max - logits[c];
            for (k, u) in up.iter_mut().enumerate() {
                *u = (logits[k] - max).exp() / z - (k == c) as u8 as f64;
            }
            self.backprop(x, &f, &up, &mut g, &mut delta, &mut next);
        }
        let scale = 1.0 / rows.len() as f64;
        for v in g.weights.iter_mut().chain(g.bias.iter_mut()).flatten() {
            *v *= scale;
        }
        if self.pinned_head {
            let last = g.weights.len() - 1;
            let input = self.layers[last].input;
            g.weights[last][..input].iter_mut().for_each(|w| *w = 0.0);
            g.bias[last][0] = 0.0;
        }
        Ok((loss * scale, g))
    }

    /// `∂ output_j / ∂ x` by reverse mode.
    pub fn input_jacobian(&self, x: &[f64], j: usize) -> Result<Vec<f64>> {
        let f = self.forward(x)?;
        if j >= self.output_dim() {
            return Err(param(format!("output index {j} out of range")));
        }
        let mut delta = vec![0.0; self.output_dim()];
        delta[j] = 1.0;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let mut next = vec![0.0; layer.input];
            for (o, d) in delta.iter().enumerate() {
                let d = d * self.act_deriv(layer.activation, f.pre[l][o]);
                let row = &layer.weights[o * layer.input..(o + 1) * layer.input];
                for (n, w) in next.iter_mut().zip(row) {
                    *n += d * w;
                }
            }
            delta = next;
        }
        Ok(delta)
    }

    /// Predicted class of every row.
    pub fn predict(&self, rows: &[&[f64]]) -> Result<Vec<usize>> {
        rows.iter()
            .map(|x| {
                let out = self.output(x)?;
                Ok(out.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best }).0)
            })
            .collect()
    }

    /// Minibatch SGD with momentum on the cross-entropy loss.
    pub fn train(&mut self, rows: &[&[f64]], labels: &[usize], config: &TrainConfig) -> Result<TrainReport> {
        if rows.is_empty() {
            return Err(Error::Empty("training set".into()));
        }
        if config.batch_size == 0 || config.epochs == 0 || !(config.learning_rate > 0.0) {
            return Err(param("batch size, epochs and learning rate must be positive"));
        }
        let mut r = rng::rng(config.seed);
        let mut order: Vec<usize> = (0..rows.len()).collect();
        let mut velocity = self.zero_gradient();
        let mut lr = config.learning_rate;
        let decay_every = (config.epochs / (config.decay_steps + 1)).max(1);
        let mut epoch_losses = Vec::with_capacity(config.epochs);
        let (mut brows, mut blabels) = (Vec::with_capacity(config.batch_size), Vec::with_capacity(config.batch_size));
        for epoch in 0..config.epochs {
            if epoch > 0 && epoch % decay_every == 0 && epoch / decay_every <= config.decay_steps {
                lr *= 0.5;
            }
            order.shuffle(&mut r);
            let (mut total, mut batches) = (0.0, 0);
            for chunk in order.chunks(config.batch_size) {
                brows.clear();
                blabels.clear();
                brows.extend(chunk.iter().map(|&i| rows[i]));
                blabels.extend(chunk.iter().map(|&i| labels[i]));
                let (loss, g) = self.loss_and_grad(&brows, &blabels)?;
                if !loss.is_finite() {
                    return Err(Error::Training(format!("non-finite loss in epoch {epoch}")));
                }
                total += loss;
                batches += 1;
                for (l, layer) in self.layers.iter_mut().enumerate() {
                    for ((w, v), gw) in layer.weights.iter_mut().zip(&mut velocity.weights[l]).zip(&g.weights[l]) {
                        *v = config.momentum * *v - lr * gw;
                        *w += *v;
                    }
                    for ((b, v), gb) in layer.bias.iter_mut().zip(&mut velocity.bias[l]).zip(&g.bias[l]) {
                        *v = config.momentum * *v - lr * gb;
                        *b += *v;
                    }
                }
            }
            let mean = total / batches as f64;
            if !mean.is_finite() || self.layers.iter().any(|l| l.weights.iter().any(|w| !w.is_finite())) {
                return Err(Error::Training(format!("parameters diverged in epoch {epoch}")));
            }
            epoch_losses.push(mean);
        }
        let final_loss = *epoch_losses.last().unwrap();
        Ok(TrainReport { epoch_losses, final_loss })
    }

    /// The network without its last `k` layers.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k >= self.layers.len() {
            return Err(param("cannot remove every layer"));
        }
        Ok(Self { layers: self.layers[..self.layers.len() - k].to_vec(), slope: self.slope, pinned_head: false })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn locate(&self, mut idx: usize) -> (usize, bool, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            if idx < layer.weights.len() {
                return (l, true, idx);
            }
            idx -= layer.weights.len();
            if idx < layer.bias.len() {
                return (l, false, idx);
            }
            idx -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameter by flat index (each layer's weights, then its bias).
    pub fn param(&self, idx: usize) -> f64 {
        match self.locate(idx) {
            (l, true, i) => self.layers[l].weights[i],
            (l, false, i) => self.layers[l].bias[i],
        }
    }

    /// Whether the flat index addresses a pinned head parameter.
    pub fn is_pinned(&self, idx: usize) -> bool {
        let last = self.layers.len() - 1;
        self.pinned_head
            && match self.locate(idx) {
                (l, true, i) => l == last && i < self.layers[last].input,
                (l, false, i) => l == last && i == 0,
            }
    }

    pub fn set_param(&mut self, idx: usize, v: f64) {
        match self.locate(idx) {
            (l, true, i) => self.layers[l].weights[i] = v,
            (l, false, i) => self.layers[l].bias[i] = v,
        }
    }
}

impl Gradient {
    pub fn flat(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.bias).flat_map(|(w, b)| w.iter().chain(b)).copied().collect()
    }
}

impl DifferentiableMap for Mlp {
    fn input_dim(&self) -> usize {
        Mlp::input_dim(self)
    }
    fn output_dim(&self) -> usize {
        Mlp::output_dim(self)
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.output(x).expect("input dimension checked by caller")
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        // forward mode: J = D_L W_L ⋯ D_1 W_1
        let f = self.forward(x).expect("input dimension checked by caller");
        let mut j = DMatrix::<f64>::identity(self.input_dim(), self.input_dim());
        for (l, layer) in self.layers.iter().enumerate() {
            let w = DMatrix::from_row_slice(layer.output, layer.input, &layer.weights);
            j = w * j;
            for o in 0..layer.output {
                let d = self.act_deriv(layer.activation, f.pre[l][o]);
                j.row_mut(o).scale_mut(d);
            }
        }
        j
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    /// Straight-line re-implementation used as the forward oracle.
    fn naive_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for layer in &net.layers {
            let mut out = vec![0.0; layer.output];
            for o in 0..layer.output {
                let mut s = layer.bias[o];
                for i in 0..layer.input {
                    s += layer.weights[o * layer.input + i] * h[i];
                }
                out[o] = match layer.activation {
                    Activation::Identity => s,
                    Activation::LeakyRelu => {
                        if s > 0.0 {
                            s
                        } else {
                            net.slope * s
                        }
                    }
                };
            }
            h = out;
        }
        h
    }

    fn gaussian_rows(seed: u64, n: usize, d: usize) -> Vec<Vec<f64>> {
        let mut r = rng::rng(seed);
        (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(&mut r)).collect()).collect()
    }

    fn classifier(seed: u64) -> Mlp {
        use Activation::*;
        let mut net = Mlp::random(&[2, 16, 16, 2, 5], &[LeakyRelu, LeakyRelu, Identity, Identity], 0.2, true, seed).unwrap();
        // random biases so kinks are not all at the origin
        let mut r = rng::rng(seed ^ 1);
        for l in &mut net.layers {
            l.bias.iter_mut().for_each(|b| *b = r.random_range(-0.5..0.5));
        }
        net.enforce_pin();
        net
    }

    #[test]
    fn identity_layer() {
        let mut l = Layer::zeros(2, 2, Activation::Identity);
        l.weights = vec![1.0, 0.0, 0.0, 1.0];
        let net = Mlp::new(vec![l], 0.2, false).unwrap();
        assert_eq!(net.output(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(net.input_jacobian(&[1.0, 2.0], 1).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn zero_weights_return_bias() {
        let mut l = Layer::zeros(3, 2, Activation::Identity);
        l.bias = vec![0.5, -1.5];
        let net = Mlp::new(vec![l], 0.2, false).unwrap();
        assert_eq!(net.output(&[1.0, 2.0, 3.0]).unwrap(), vec![0.5, -1.5]);
    }

    #[test]
    fn forward_matches_naive() {
        for seed in 0..10 {
            let net = classifier(seed);
            for x in gaussian_rows(seed + 100, 20, 2) {
                let a = net.output(&x).unwrap();
                let b = naive_forward(&net, &x);
                for (u, v) in a.iter().zip(&b) {
                    assert!((u - v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn uniform_logits_give_log_classes() {
        let net = Mlp::new(vec![Layer::zeros(2, 7, Activation::Identity)], 0.2, true).unwrap();
        let (loss, _) = net.loss_and_grad(&[&[0.3, -1.0]], &[4]).unwrap();
        assert!((loss - 7f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn dimension_and_empty_errors() {
        let net = classifier(0);
        assert!(net.forward(&[1.0]).is_err());
        assert!(net.loss_and_grad(&[], &[]).is_err());
        assert!(net.loss_and_grad(&[&[0.0, 0.0]], &[5]).is_err());
        assert!(Mlp::new(vec![Layer::zeros(2, 3, Activation::Identity), Layer::zeros(4, 1, Activation::Identity)], 0.2, false).is_err());
    }

    /// Distance of any hidden pre-activation from its kink.
    fn min_kink_distance(net: &Mlp, rows: &[&[f64]]) -> f64 {
        let mut m = f64::INFINITY;
        for x in rows {
            let f = net.forward(x).unwrap();
            for (l, layer) in net.layers.iter().enumerate() {
                if layer.activation == Activation::LeakyRelu {
                    m = f.pre[l].iter().fold(m, |m, v| m.min(v.abs()));
                }
            }
        }
        m
    }

    pub(crate) fn check_gradient(seed: u64) -> f64 {
        let mut net = classifier(seed);
        let data = gaussian_rows(seed + 7, 8, 2);
        let rows: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
        let mut r = rng::rng(seed + 3);
        let labels: Vec<usize> = (0..8).map(|_| r.random_range(0..5)).collect();
        let (_, g) = net.loss_and_grad(&rows, &labels).unwrap();
        let g = g.flat();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for idx in 0..net.param_count() {
            if net.is_pinned(idx) {
                assert_eq!(g[idx], 0.0);
                continue;
            }
            let orig = net.param(idx);
            net.set_param(idx, orig + h);
            let lp = net.loss_and_grad(&rows, &labels).unwrap().0;
            let kp = min_kink_distance(&net, &rows);
            net.set_param(idx, orig - h);
            let lm = net.loss_and_grad(&rows, &labels).unwrap().0;
            let km = min_kink_distance(&net, &rows);
            net.set_param(idx, orig);
            if kp.min(km) < 1e-6 {
                continue;
            }
            let fd = (lp - lm) / (2.0 * h);
            // relative error with an absolute floor for near-zero entries
            worst = worst.max((fd - g[idx]).abs() / (fd.abs() + g[idx].abs()).max(1e-6));
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let err = check_gradient(seed);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn pinned_head_stays_zero() {
        let mut net = classifier(3);
        let data = gaussian_rows(4, 64, 2);
        let rows: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
        let labels: Vec<usize> = (0..64).map(|i| i % 5).collect();
        let cfg = TrainConfig { epochs: 20, batch_size: 16, ..Default::default() };
        net.train(&rows, &labels, &cfg).unwrap();
        let head = net.layers.last().unwrap();
        assert!(head.weights[..head.input].iter().all(|&w| w == 0.0));
        assert_eq!(head.bias[0], 0.0);
    }

    #[test]
    fn separable_toy_set_is_learned() {
        use Activation::*;
        let data = gaussian_rows(5, 200, 2);
        let labels: Vec<usize> = data.iter().map(|x| (x[0] > 0.0) as usize + 2 * (x[1] > 0.0) as usize).collect();
        // push points away from the boundaries so the set is separable with margin
        let data: Vec<Vec<f64>> = data.iter().map(|x| x.iter().map(|v| v + 0.5 * v.signum()).collect()).collect();
        let rows: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
        let mut net = Mlp::random(&[2, 16, 4], &[LeakyRelu, Identity], 0.2, true, 1).unwrap();
        let cfg = TrainConfig { epochs: 400, batch_size: 32, learning_rate: 0.05, ..Default::default() };
        let rep = net.train(&rows, &labels, &cfg).unwrap();
        let (loss, _) = net.loss_and_grad(&rows, &labels).unwrap();
        assert!(loss < 0.01, "{loss} (training {})", rep.final_loss);
    }

    #[test]
    fn input_jacobian_matches_finite_differences() {
        for seed in 0..10 {
            let net = classifier(seed);
            for x in gaussian_rows(seed + 50, 10, 2) {
                if min_kink_distance(&net, &[&x]) < 1e-4 {
                    continue;
                }
                let full = DifferentiableMap::jacobian(&net, &x);
                for j in 0..5 {
                    let g = net.input_jacobian(&x, j).unwrap();
                    for k in 0..2 {
                        let h = 1e-6;
                        let (mut xp, mut xm) = (x.clone(), x.clone());
                        xp[k] += h;
                        xm[k] -= h;
                        let fd = (net.output(&xp).unwrap()[j] - net.output(&xm).unwrap()[j]) / (2.0 * h);
                        assert!((fd - g[k]).abs() <= 1e-4 * fd.abs().max(1e-3));
                        assert!((full[(j, k)] - g[k]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn kink_uses_negative_branch() {
        let mut l1 = Layer::zeros(1, 1, Activation::LeakyRelu);
        l1.weights = vec![1.0];
        let net = Mlp::new(vec![l1], 0.2, false).unwrap();
        assert_eq!(net.input_jacobian(&[0.0], 0).unwrap(), vec![0.2]);
    }

    /// Hand-built network `g(x) = (x1, p(x2))` where `p` interpolates `t³`
    /// linearly between knots `0.005, 0.015, …`. Each knot contributes
    /// `relu(t − t_k) = (lrelu(t − t_k) + s·lrelu(t_k − t)) / (1 − s²)`.
    #[test]
    fn hand_set_cubic_network() {
        let s = 0.2;
        let knots: Vec<f64> = (0..400).map(|k| 0.005 + 0.01 * k as f64).collect();
        let cube = |t: f64| t * t * t;
        let seg_slope = |k: usize| (cube(knots[k] + 0.01) - cube(knots[k])) / 0.01;
        let width = 2 + 2 * knots.len();
        let mut hidden = Layer::zeros(2, width, Activation::LeakyRelu);
        let mut out = Layer::zeros(width, 2, Activation::Identity);
        // x1 = (lrelu(x1) − lrelu(−x1)) / (1 + s)
        hidden.weights[0] = 1.0;
        hidden.weights[2] = -1.0;
        out.weights[0] = 1.0 / (1.0 + s);
        out.weights[1] = -1.0 / (1.0 + s);
        for (k, &t) in knots.iter().enumerate() {
            let (a, b) = (2 + 2 * k, 3 + 2 * k);
            hidden.weights[a * 2 + 1] = 1.0;
            hidden.bias[a] = -t;
            hidden.weights[b * 2 + 1] = -1.0;
            hidden.bias[b] = t;
            let c = seg_slope(k) - if k > 0 { seg_slope(k - 1) } else { 0.0 };
            out.weights[width + a] = c / (1.0 - s * s);
            out.weights[width + b] = c * s / (1.0 - s * s);
        }
        out.bias[1] = cube(knots[0]);
        let net = Mlp::new(vec![hidden, out], s, false).unwrap();
        let y = net.output(&[0.7, 2.0]).unwrap();
        assert!((y[0] - 0.7).abs() < 1e-12);
        assert!((y[1] - 8.0).abs() < 1e-3);
        let g = net.input_jacobian(&[0.7, 2.0], 1).unwrap();
        assert!(g[0].abs() < 1e-12);
        assert!((g[1] - 12.0).abs() < 1e-3, "{}", g[1]);
        assert!((net.input_jacobian(&[0.7, 2.0], 0).unwrap()[0] - 1.0).abs() < 1e-12);
    }
}

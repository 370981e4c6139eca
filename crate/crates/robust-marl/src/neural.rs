//! Minimal dense-network substrate: multi-layer perceptrons with explicit
//! forward/backward passes, Adam, binary checkpoints, and a finite-difference
//! gradient checker. Everything is `f64`; tolerances below 1e-4 on gradient
//! checks depend on it.
//!
//! Parameters live in one flat buffer, layer by layer: weights row-major
//! (`[out][in]`), then biases. Optimizer state, checkpoints, and the
//! finite-difference oracle all index that same order.

use rand::Rng;
use std::io::{Read, Write};
use thiserror::Error;

use crate::rng::derive_rng;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Tanh,
}

#[derive(Copy, Clone, Debug, PartialEq)]
struct LayerShape {
    inputs: usize,
    outputs: usize,
    /// Offset of the weight block in the flat parameter buffer.
    w_off: usize,
    /// Offset of the bias block.
    b_off: usize,
}

/// Fully-connected network with ReLU hidden layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    output_activation: OutputActivation,
    params: Vec<f64>,
    shapes: Vec<LayerShape>,
}

impl Mlp {
    /// All-zero parameters. `layer_sizes` is `[input, hidden.., output]`.
    pub fn zeros(layer_sizes: &[usize], output_activation: OutputActivation) -> Self {
        assert!(layer_sizes.len() >= 2, "need at least input and output sizes");
        assert!(layer_sizes.iter().all(|&n| n > 0), "layer sizes must be positive");
        let mut shapes = Vec::with_capacity(layer_sizes.len() - 1);
        let mut off = 0;
        for w in layer_sizes.windows(2) {
            let (inputs, outputs) = (w[0], w[1]);
            shapes.push(LayerShape {
                inputs,
                outputs,
                w_off: off,
                b_off: off + inputs * outputs,
            });
            off += inputs * outputs + outputs;
        }
        Mlp {
            layer_sizes: layer_sizes.to_vec(),
            output_activation,
            params: vec![0.0; off],
            shapes,
        }
    }

    /// Glorot-style uniform init: weights in +-sqrt(6 / (fan_in + fan_out)),
    /// biases zero. Reproducible from the seed.
    pub fn init_uniform(layer_sizes: &[usize], output_activation: OutputActivation, seed: u64) -> Self {
        let mut net = Self::zeros(layer_sizes, output_activation);
        let mut rng = derive_rng(seed, &[0x4e45_5552]);
        for shape in &net.shapes {
            let bound = (6.0 / (shape.inputs + shape.outputs) as f64).sqrt();
            for k in 0..shape.inputs * shape.outputs {
                net.params[shape.w_off + k] = rng.random_range(-bound..bound);
            }
        }
        net
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Weight matrix entry `W[out][in]` of one layer, for tests and tools.
    pub fn weight(&self, layer: usize, out: usize, inp: usize) -> f64 {
        let s = self.shapes[layer];
        self.params[s.w_off + out * s.inputs + inp]
    }

    pub fn set_weight(&mut self, layer: usize, out: usize, inp: usize, v: f64) {
        let s = self.shapes[layer];
        self.params[s.w_off + out * s.inputs + inp] = v;
    }

    pub fn set_bias(&mut self, layer: usize, out: usize, v: f64) {
        let s = self.shapes[layer];
        self.params[s.b_off + out] = v;
    }

    fn affine(&self, shape: LayerShape, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..shape.outputs {
            let row = &self.params[shape.w_off + o * shape.inputs..shape.w_off + (o + 1) * shape.inputs];
            let mut z = self.params[shape.b_off + o];
            for (w, x) in row.iter().zip(input) {
                z += w * x;
            }
            out.push(z);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cache(x).into_output()
    }

    /// Forward pass keeping every layer's post-activation, for [`Mlp::backward`].
    pub fn forward_cache(&self, x: &[f64]) -> ForwardCache {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.shapes.len() + 1);
        activations.push(x.to_vec());
        let mut z = Vec::new();
        for (l, &shape) in self.shapes.iter().enumerate() {
            self.affine(shape, activations.last().unwrap(), &mut z);
            let last = l + 1 == self.shapes.len();
            let a: Vec<f64> = if last {
                match self.output_activation {
                    OutputActivation::Identity => z.clone(),
                    OutputActivation::Tanh => z.iter().map(|v| v.tanh()).collect(),
                }
            } else {
                z.iter().map(|v| v.max(0.0)).collect()
            };
            activations.push(a);
        }
        ForwardCache { activations }
    }

    /// Reverse-mode gradients of `upstream . output` with respect to all
    /// parameters and the input. `cache` must come from `forward_cache` on
    /// this network. ReLU uses subgradient 0 at exactly zero.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Gradients {
        assert_eq!(upstream.len(), self.output_dim(), "upstream dimension mismatch");
        let mut grads = vec![0.0; self.params.len()];
        let out = cache.output();
        // Delta at the output layer.
        let mut delta: Vec<f64> = match self.output_activation {
            OutputActivation::Identity => upstream.to_vec(),
            OutputActivation::Tanh => upstream
                .iter()
                .zip(out)
                .map(|(u, y)| u * (1.0 - y * y))
                .collect(),
        };
        for (l, &shape) in self.shapes.iter().enumerate().rev() {
            let input = &cache.activations[l];
            for o in 0..shape.outputs {
                let d = delta[o];
                grads[shape.b_off + o] = d;
                let row = &mut grads[shape.w_off + o * shape.inputs..shape.w_off + (o + 1) * shape.inputs];
                for (g, x) in row.iter_mut().zip(input) {
                    *g = d * x;
                }
            }
            // Propagate to the previous layer's activations.
            let mut prev = vec![0.0; shape.inputs];
            for o in 0..shape.outputs {
                let d = delta[o];
                let row = &self.params[shape.w_off + o * shape.inputs..shape.w_off + (o + 1) * shape.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            if l > 0 {
                // Through the hidden ReLU: derivative is 1 where the
                // activation is strictly positive, else 0.
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Gradients {
            params: grads,
            input: delta,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// `activations[0]` is the input; `activations.last()` the output.
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }

    fn into_output(mut self) -> Vec<f64> {
        self.activations.pop().unwrap()
    }
}

#[derive(Clone, Debug)]
pub struct Gradients {
    /// Flat parameter gradients, same layout as [`Mlp::params`].
    pub params: Vec<f64>,
    /// Gradient with respect to the network input.
    pub input: Vec<f64>,
}

/// Adam with bias correction. Moment buffers mirror the flat parameter
/// buffer of the network they update.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "optimizer/parameter shape mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient shape mismatch");
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Convenience wrapper matching the operation name used across the crate.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) {
    state.step(params, grads);
}

/// Compares analytic gradients against central finite differences
/// (`h = 1e-5`) for an arbitrary scalar loss of the network output.
///
/// `loss` maps the output to a scalar; `dloss` is its analytic gradient with
/// respect to the output. Returns the worst per-parameter relative error
/// `|a - b| / (|a| + |b|)` (zero when both magnitudes are below 1e-8).
pub fn grad_check(
    net: &Mlp,
    x: &[f64],
    loss: &dyn Fn(&[f64]) -> f64,
    dloss: &dyn Fn(&[f64]) -> Vec<f64>,
) -> f64 {
    let cache = net.forward_cache(x);
    let analytic = net.backward(&cache, &dloss(cache.output())).params;

    let h = 1e-5;
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for k in 0..net.n_params() {
        let orig = probe.params[k];
        probe.params[k] = orig + h;
        let up = loss(&probe.forward(x));
        probe.params[k] = orig - h;
        let down = loss(&probe.forward(x));
        probe.params[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[k].abs() + numeric.abs();
        if denom > 1e-8 {
            worst = worst.max((analytic[k] - numeric).abs() / denom);
        }
    }
    worst
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"MLPCKPT\0";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

impl Mlp {
    /// Binary checkpoint: magic, format version, layer sizes, output
    /// activation tag, then all parameters as little-endian f64 in flat
    /// layer order. Round-trips bitwise.
    pub fn save<W: Write>(&self, out: &mut W) -> Result<(), CheckpointError> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(self.layer_sizes.len() as u32).to_le_bytes())?;
        for &n in &self.layer_sizes {
            out.write_all(&(n as u32).to_le_bytes())?;
        }
        let tag: u8 = match self.output_activation {
            OutputActivation::Identity => 0,
            OutputActivation::Tanh => 1,
        };
        out.write_all(&[tag])?;
        for &p in &self.params {
            out.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load<R: Read>(input: &mut R) -> Result<Mlp, CheckpointError> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut u32buf = [0u8; 4];
        input.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        input.read_exact(&mut u32buf)?;
        let n_sizes = u32::from_le_bytes(u32buf) as usize;
        if !(2..=64).contains(&n_sizes) {
            return Err(CheckpointError::Malformed(format!("{n_sizes} layer sizes")));
        }
        let mut sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            input.read_exact(&mut u32buf)?;
            let n = u32::from_le_bytes(u32buf) as usize;
            if n == 0 {
                return Err(CheckpointError::Malformed("zero layer size".into()));
            }
            sizes.push(n);
        }
        let mut tag = [0u8; 1];
        input.read_exact(&mut tag)?;
        let activation = match tag[0] {
            0 => OutputActivation::Identity,
            1 => OutputActivation::Tanh,
            t => return Err(CheckpointError::Malformed(format!("activation tag {t}"))),
        };
        let mut net = Mlp::zeros(&sizes, activation);
        let mut f64buf = [0u8; 8];
        for p in net.params.iter_mut() {
            input.read_exact(&mut f64buf)?;
            *p = f64::from_le_bytes(f64buf);
        }
        Ok(net)
    }

    pub fn save_to_path(&self, path: &std::path::Path) -> Result<(), CheckpointError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save(&mut file)
    }

    pub fn load_from_path(path: &std::path::Path) -> Result<Mlp, CheckpointError> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::load(&mut file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_net_outputs_zeros() {
        let net = Mlp::zeros(&[4, 8, 3], OutputActivation::Identity);
        assert_eq!(net.forward(&[1.0, -2.0, 0.5, 3.0]), vec![0.0; 3]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut net = Mlp::zeros(&[3, 3], OutputActivation::Identity);
        for i in 0..3 {
            net.set_weight(0, i, i, 1.0);
        }
        let x = [0.7, -1.3, 2.2];
        assert_eq!(net.forward(&x), x.to_vec());
    }

    /// Straight-line oracle evaluation of the same affine+ReLU chain,
    /// written with its own indexing.
    fn oracle_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let sizes = net.layer_sizes();
        let mut a: Vec<f64> = x.to_vec();
        for l in 0..sizes.len() - 1 {
            let mut z = vec![0.0; sizes[l + 1]];
            for (o, zo) in z.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (i, &ai) in a.iter().enumerate() {
                    acc += net.weight(l, o, i) * ai;
                }
                *zo = acc + bias_of(net, l, o);
            }
            let last = l == sizes.len() - 2;
            a = z
                .into_iter()
                .map(|v| {
                    if last {
                        match net.output_activation() {
                            OutputActivation::Identity => v,
                            OutputActivation::Tanh => v.tanh(),
                        }
                    } else if v > 0.0 {
                        v
                    } else {
                        0.0
                    }
                })
                .collect();
        }
        a
    }

    /// Recomputes flat offsets independently of Mlp's internals.
    fn bias_of(net: &Mlp, layer: usize, out: usize) -> f64 {
        let sizes = net.layer_sizes();
        let mut off = 0;
        for l in 0..layer {
            off += sizes[l] * sizes[l + 1] + sizes[l + 1];
        }
        off += sizes[layer] * sizes[layer + 1];
        net.params()[off + out]
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        for (seed, act) in [(1, OutputActivation::Identity), (2, OutputActivation::Tanh)] {
            let net = Mlp::init_uniform(&[5, 7, 4], act, seed);
            let mut rng = crate::rng::derive_rng(seed, &[99]);
            for _ in 0..20 {
                let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
                let got = net.forward(&x);
                let want = oracle_forward(&net, &x);
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn linear_net_weight_gradient_is_outer_product() {
        // loss = c . output for a single linear layer: dL/dW[o][i] = c[o] * x[i].
        let net = Mlp::init_uniform(&[3, 2], OutputActivation::Identity, 4);
        let x = [0.5, -1.0, 2.0];
        let c = [2.0, -0.5];
        let cache = net.forward_cache(&x);
        let grads = net.backward(&cache, &c);
        for o in 0..2 {
            for i in 0..3 {
                assert!((grads.params[o * 3 + i] - c[o] * x[i]).abs() < 1e-15);
            }
            // Bias gradient equals the upstream component.
            assert!((grads.params[6 + o] - c[o]).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_matches_finite_differences_on_random_nets() {
        let shapes: [&[usize]; 4] = [&[3, 8, 1], &[6, 16, 16, 4], &[2, 32, 2], &[5, 10, 3]];
        for (k, sizes) in shapes.iter().enumerate() {
            for act in [OutputActivation::Identity, OutputActivation::Tanh] {
                let net = Mlp::init_uniform(sizes, act, 100 + k as u64);
                let mut rng = crate::rng::derive_rng(7, &[k as u64]);
                let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
                // Mean-square loss against zero keeps every output in play.
                let loss = |y: &[f64]| y.iter().map(|v| v * v).sum::<f64>() / 2.0;
                let dloss = |y: &[f64]| y.to_vec();
                let err = grad_check(&net, &x, &loss, &dloss);
                assert!(err < 1e-4, "{sizes:?} {act:?}: rel err {err}");
            }
        }
    }

    #[test]
    fn relu_at_exactly_zero_uses_subgradient_zero() {
        // Zero weights and biases put every hidden pre-activation at exactly
        // 0; the documented convention sends no gradient through.
        let net = Mlp::zeros(&[2, 4, 1], OutputActivation::Identity);
        let cache = net.forward_cache(&[1.0, 1.0]);
        let grads = net.backward(&cache, &[1.0]);
        // First-layer weights receive zero gradient...
        for k in 0..8 {
            assert_eq!(grads.params[k], 0.0);
        }
        // ...and so does the input.
        assert_eq!(grads.input, vec![0.0, 0.0]);
        // Second-layer bias still learns.
        assert_eq!(grads.params[net.n_params() - 1], 1.0);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut net = Mlp::init_uniform(&[2, 3, 1], OutputActivation::Identity, 5);
        let before = net.params().to_vec();
        let mut opt = AdamState::new(net.n_params(), 1e-2);
        let zeros = vec![0.0; net.n_params()];
        for _ in 0..3 {
            adam_step(&mut opt, net.params_mut(), &zeros);
        }
        assert_eq!(net.params(), &before[..]);
    }

    #[test]
    fn adam_single_step_matches_hand_computation() {
        // After one step with constant gradient g: m_hat = g, v_hat = g^2,
        // update = -lr * g / (|g| + eps).
        let mut params = vec![1.0, -2.0];
        let grads = vec![3.0, -0.5];
        let mut opt = AdamState::new(2, 0.1);
        opt.step(&mut params, &grads);
        for i in 0..2 {
            let want = [1.0, -2.0][i] - 0.1 * grads[i] / (grads[i].abs() + 1e-8);
            assert!((params[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        // Brute-force oracle: grid-search the minimizer of (x - 3)^2 / 2.
        let f = |x: f64| 0.5 * (x - 3.0) * (x - 3.0);
        let mut best = (f64::INFINITY, 0.0);
        let mut g = -10.0;
        while g <= 10.0 {
            if f(g) < best.0 {
                best = (f(g), g);
            }
            g += 1e-4;
        }
        let minimizer = best.1;

        let mut x = vec![0.0];
        let mut opt = AdamState::new(1, 0.05);
        for _ in 0..500 {
            let grad = vec![x[0] - 3.0];
            opt.step(&mut x, &grad);
        }
        assert!(
            (x[0] - minimizer).abs() < 1e-3,
            "adam ended at {} vs minimizer {}",
            x[0],
            minimizer
        );
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let net = Mlp::init_uniform(&[6, 64, 64, 2], OutputActivation::Tanh, 9);
        let mut buf = Vec::new();
        net.save(&mut buf).unwrap();
        let loaded = Mlp::load(&mut &buf[..]).unwrap();
        assert_eq!(net, loaded);
        let x = vec![0.1; 6];
        let a = net.forward(&x);
        let b = loaded.forward(&x);
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let mut buf = b"NOTAMODL".to_vec();
        buf.extend_from_slice(&[0u8; 32]);
        assert!(matches!(Mlp::load(&mut &buf[..]), Err(CheckpointError::BadMagic)));
        let net = Mlp::zeros(&[2, 2], OutputActivation::Identity);
        let mut good = Vec::new();
        net.save(&mut good).unwrap();
        good.truncate(good.len() - 4); // chop the last parameter
        assert!(matches!(Mlp::load(&mut &good[..]), Err(CheckpointError::Io(_))));
    }

    #[test]
    fn initialization_is_reproducible_and_bounded() {
        let a = Mlp::init_uniform(&[4, 8, 2], OutputActivation::Identity, 42);
        let b = Mlp::init_uniform(&[4, 8, 2], OutputActivation::Identity, 42);
        assert_eq!(a, b);
        let bound0 = (6.0f64 / 12.0).sqrt();
        for o in 0..8 {
            for i in 0..4 {
                assert!(a.weight(0, o, i).abs() <= bound0);
            }
        }
    }

    #[test]
    #[should_panic(expected = "input dimension mismatch")]
    fn forward_rejects_wrong_input_size() {
        let net = Mlp::zeros(&[3, 2], OutputActivation::Identity);
        let _ = net.forward(&[1.0, 2.0]);
    }
}

//! Multilayer perceptron regressor: configurable hidden activation,
//! sigmoid output, squared-error loss, Adam optimizer.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ml::activation::{activation, activation_derivative, sigmoid, ActivationKind};
use crate::ml::Predictor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatchMode {
    FullBatch,
    Minibatch(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: ActivationKind,
    pub leaky_alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_mode: BatchMode,
    /// Decoupled L2 penalty on weights (not biases); 0 disables it.
    #[serde(default)]
    pub weight_decay: f64,
    pub seed: u64,
}

impl MlpConfig {
    pub fn defaults(activation: ActivationKind, seed: u64) -> Self {
        MlpConfig {
            layer_sizes: vec![15, 64, 32, 16, 1],
            hidden_activation: activation,
            leaky_alpha: 0.01,
            learning_rate: 0.01,
            epochs: 1000,
            // Shuffled minibatches plus a mild decoupled weight penalty:
            // the training keys over-represent high-probability feature
            // patterns, and an unregularized full-batch fit extrapolates
            // poorly to the rest of the population.
            batch_mode: BatchMode::Minibatch(128),
            weight_decay: 0.3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || *self.layer_sizes.last().unwrap() != 1 {
            return Err(Error::InvalidInput(
                "layer_sizes must end with an output size of 1".into(),
            ));
        }
        if self.epochs == 0 || self.learning_rate <= 0.0 {
            return Err(Error::InvalidInput(
                "epochs must be >= 1 and learning_rate > 0".into(),
            ));
        }
        Ok(())
    }
}

/// One dense layer; weights are row-major `fan_out x fan_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub config: MlpConfig,
}

/// Adam moment state for one parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update over a flat parameter tensor.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], lr: f64) {
    debug_assert_eq!(params.len(), grads.len());
    state.t += 1;
    let b1t = 1.0 - state.beta1.powi(state.t as i32);
    let b2t = 1.0 - state.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / b1t;
        let v_hat = state.v[i] / b2t;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
}

fn decay_weights(weights: &mut [f64], config: &MlpConfig) {
    if config.weight_decay > 0.0 {
        let f = 1.0 - config.learning_rate * config.weight_decay;
        weights.iter_mut().for_each(|w| *w *= f);
    }
}

/// Uniform init in +-sqrt(6 / fan_in) per layer, biases zero.
pub fn mlp_init(config: &MlpConfig) -> Result<MlpModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let layers = config
        .layer_sizes
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            Layer {
                fan_in,
                fan_out,
                weights: (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect(),
                biases: vec![0.0; fan_out],
            }
        })
        .collect();
    Ok(MlpModel {
        layers,
        config: config.clone(),
    })
}

struct ForwardTrace {
    /// Pre-activation per layer.
    pre: Vec<Vec<f64>>,
    /// Post-activation per layer (last entry is the sigmoid output).
    post: Vec<Vec<f64>>,
}

impl MlpModel {
    fn forward_trace(&self, input: &[f64]) -> ForwardTrace {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut cur = input.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = layer.biases.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                *zo += row.iter().zip(&cur).map(|(w, x)| w * x).sum::<f64>();
            }
            let a: Vec<f64> = if li == last {
                z.iter().map(|&s| sigmoid(s)).collect()
            } else {
                z.iter()
                    .map(|&s| activation(self.config.hidden_activation, self.config.leaky_alpha, s))
                    .collect()
            };
            pre.push(z);
            cur = a.clone();
            post.push(a);
        }
        ForwardTrace { pre, post }
    }

    /// Forward pass; the sigmoid output layer pins the range to [0,1].
    pub fn forward(&self, features: &[f64]) -> f64 {
        self.forward_trace(features).post.last().unwrap()[0]
    }

    /// Mean squared error over rows.
    pub fn mse(&self, rows: &[(Vec<f64>, f64)]) -> f64 {
        rows.iter()
            .map(|(x, y)| {
                let d = self.forward(x) - y;
                d * d
            })
            .sum::<f64>()
            / rows.len() as f64
    }

    /// Gradient of the mean squared error over `rows` with respect to
    /// every parameter, in (weights, biases) per layer.
    pub fn loss_gradient(&self, rows: &[(Vec<f64>, f64)]) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
            .collect();
        let n = rows.len() as f64;
        let last = self.layers.len() - 1;
        for (x, y) in rows {
            let trace = self.forward_trace(x);
            let pred = trace.post[last][0];
            // dL/ds at the output: 2 (pred - y) sigmoid'(s)
            let mut delta = vec![2.0 * (pred - y) / n * pred * (1.0 - pred)];
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let input: &[f64] = if li == 0 { x } else { &trace.post[li - 1] };
                let (gw, gb) = &mut grads[li];
                for o in 0..layer.fan_out {
                    gb[o] += delta[o];
                    let row = &mut gw[o * layer.fan_in..(o + 1) * layer.fan_in];
                    for (gwi, xi) in row.iter_mut().zip(input) {
                        *gwi += delta[o] * xi;
                    }
                }
                if li > 0 {
                    let mut prev = vec![0.0; layer.fan_in];
                    for o in 0..layer.fan_out {
                        let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                        for (pi, w) in prev.iter_mut().zip(row) {
                            *pi += delta[o] * w;
                        }
                    }
                    for (pi, &s) in prev.iter_mut().zip(&trace.pre[li - 1]) {
                        *pi *= activation_derivative(
                            self.config.hidden_activation,
                            self.config.leaky_alpha,
                            s,
                        );
                    }
                    delta = prev;
                }
            }
        }
        grads
    }
}

impl Predictor for MlpModel {
    fn predict(&self, features: &[f64]) -> f64 {
        self.forward(features)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub final_mse: f64,
    pub final_mae: f64,
    pub wall_time_s: f64,
    pub seed: u64,
}

/// Trains an MLP against the given rows by backpropagation + Adam.
///
/// Rows are canonicalized (sorted) before training, so full-batch results
/// do not depend on input order.
pub fn mlp_train(rows: &[(Vec<f64>, f64)], config: &MlpConfig) -> Result<(MlpModel, TrainReport)> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    config.validate()?;
    if rows[0].0.len() != config.layer_sizes[0] {
        return Err(Error::LengthMismatch {
            expected: config.layer_sizes[0],
            got: rows[0].0.len(),
        });
    }
    let start = std::time::Instant::now();
    let mut rows: Vec<(Vec<f64>, f64)> = rows.to_vec();
    rows.sort_by(|a, b| {
        a.0.iter()
            .map(|v| v.to_bits())
            .cmp(b.0.iter().map(|v| v.to_bits()))
            .then(a.1.to_bits().cmp(&b.1.to_bits()))
    });

    let mut model = mlp_init(config)?;
    let mut states: Vec<(AdamState, AdamState)> = model
        .layers
        .iter()
        .map(|l| (AdamState::new(l.weights.len()), AdamState::new(l.biases.len())))
        .collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5u64);
    let mut losses = Vec::with_capacity(config.epochs);
    for _epoch in 0..config.epochs {
        match config.batch_mode {
            BatchMode::FullBatch => {
                let grads = model.loss_gradient(&rows);
                for (li, (gw, gb)) in grads.iter().enumerate() {
                    let (sw, sb) = &mut states[li];
                    adam_step(sw, &mut model.layers[li].weights, gw, config.learning_rate);
                    adam_step(sb, &mut model.layers[li].biases, gb, config.learning_rate);
                    decay_weights(&mut model.layers[li].weights, config);
                }
            }
            BatchMode::Minibatch(size) => {
                let size = size.max(1);
                let mut order: Vec<usize> = (0..rows.len()).collect();
                // Fisher-Yates with the dedicated shuffle stream
                for i in (1..order.len()).rev() {
                    let j = rand::Rng::gen_range(&mut shuffle_rng, 0..=i);
                    order.swap(i, j);
                }
                for batch in order.chunks(size) {
                    let rows_b: Vec<(Vec<f64>, f64)> =
                        batch.iter().map(|&i| rows[i].clone()).collect();
                    let grads = model.loss_gradient(&rows_b);
                    for (li, (gw, gb)) in grads.iter().enumerate() {
                        let (sw, sb) = &mut states[li];
                        adam_step(sw, &mut model.layers[li].weights, gw, config.learning_rate);
                        adam_step(sb, &mut model.layers[li].biases, gb, config.learning_rate);
                        decay_weights(&mut model.layers[li].weights, config);
                    }
                }
            }
        }
        losses.push(model.mse(&rows));
    }
    let final_mse = *losses.last().unwrap();
    let final_mae = rows
        .iter()
        .map(|(x, y)| (model.forward(x) - y).abs())
        .sum::<f64>()
        / rows.len() as f64;
    let report = TrainReport {
        losses,
        final_mse,
        final_mae,
        wall_time_s: start.elapsed().as_secs_f64(),
        seed: config.seed,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_config(sizes: Vec<usize>, act: ActivationKind, seed: u64) -> MlpConfig {
        MlpConfig {
            layer_sizes: sizes,
            hidden_activation: act,
            leaky_alpha: 0.01,
            learning_rate: 0.01,
            epochs: 10,
            batch_mode: BatchMode::FullBatch,
            weight_decay: 0.0,
            seed,
        }
    }

    #[test]
    fn init_deterministic_and_bounded() {
        let cfg = toy_config(vec![4, 3, 1], ActivationKind::Relu, 9);
        let a = mlp_init(&cfg).unwrap();
        let b = mlp_init(&cfg).unwrap();
        assert_eq!(a, b);
        let cfg2 = toy_config(vec![4, 3, 1], ActivationKind::Relu, 10);
        assert_ne!(mlp_init(&cfg2).unwrap(), a);
        for layer in &a.layers {
            let bound = (6.0 / layer.fan_in as f64).sqrt();
            for &w in &layer.weights {
                assert!(w.abs() <= bound);
            }
            assert!(layer.biases.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn zero_params_predict_half() {
        let cfg = toy_config(vec![15, 4, 1], ActivationKind::Mish, 1);
        let mut m = mlp_init(&cfg).unwrap();
        for l in &mut m.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        assert_eq!(m.forward(&vec![1.0; 15]), 0.5);
    }

    #[test]
    fn single_weight_sigmoid() {
        let cfg = toy_config(vec![1, 1], ActivationKind::Relu, 1);
        let mut m = mlp_init(&cfg).unwrap();
        m.layers[0].weights[0] = 1.0;
        m.layers[0].biases[0] = 0.0;
        assert!((m.forward(&[1.0]) - 0.7310585786300049).abs() < 1e-12);
    }

    #[test]
    fn predictions_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for seed in 0..20 {
            let cfg = toy_config(vec![6, 5, 1], ActivationKind::Mish, seed);
            let m = mlp_init(&cfg).unwrap();
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let p = m.forward(&x);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn adam_zero_grad_no_move() {
        let mut st = AdamState::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        let orig = p.clone();
        adam_step(&mut st, &mut p, &[0.0; 3], 0.01);
        assert_eq!(p, orig);
    }

    #[test]
    fn adam_unit_gradient_step() {
        let mut st = AdamState::new(1);
        let mut p = vec![0.0];
        adam_step(&mut st, &mut p, &[1.0], 0.01);
        // m_hat = v_hat = 1, delta = -lr / (1 + eps)
        let expected = -0.01 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kind in [ActivationKind::Relu, ActivationKind::LeakyRelu, ActivationKind::Mish] {
            for trial in 0..20 {
                let cfg = toy_config(vec![4, 3, 1], kind, 100 + trial);
                let mut model = mlp_init(&cfg).unwrap();
                // move away from zero biases so all paths are exercised
                for l in &mut model.layers {
                    for b in &mut l.biases {
                        *b = rng.gen_range(-0.5..0.5);
                    }
                }
                let rows: Vec<(Vec<f64>, f64)> = (0..8)
                    .map(|_| {
                        (
                            (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                            rng.gen_range(0.0..1.0),
                        )
                    })
                    .collect();
                let grads = model.loss_gradient(&rows);
                let h = 1e-5;
                for li in 0..model.layers.len() {
                    for wi in 0..model.layers[li].weights.len() {
                        let orig = model.layers[li].weights[wi];
                        model.layers[li].weights[wi] = orig + h;
                        let up = model.mse(&rows);
                        model.layers[li].weights[wi] = orig - h;
                        let down = model.mse(&rows);
                        model.layers[li].weights[wi] = orig;
                        let fd = (up - down) / (2.0 * h);
                        let g = grads[li].0[wi];
                        let denom = fd.abs().max(g.abs()).max(1e-6);
                        assert!(
                            ((g - fd) / denom).abs() < 1e-4,
                            "{kind:?} trial {trial} layer {li} w{wi}: {g} vs {fd}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn constant_label_fit() {
        let rows: Vec<(Vec<f64>, f64)> = (0..16)
            .map(|i| ((0..4).map(|b| ((i >> b) & 1) as f64).collect(), 0.3))
            .collect();
        let mut cfg = toy_config(vec![4, 8, 1], ActivationKind::Mish, 3);
        cfg.epochs = 1000;
        let (_, report) = mlp_train(&rows, &cfg).unwrap();
        assert!(report.final_mse < 1e-4, "mse {}", report.final_mse);
        assert!(report.losses.len() == 1000);
        assert!(*report.losses.last().unwrap() <= report.losses[0]);
    }

    #[test]
    fn training_permutation_invariant() {
        let rows: Vec<(Vec<f64>, f64)> = (0..12)
            .map(|i| {
                (
                    (0..4).map(|b| ((i >> b) & 1) as f64).collect(),
                    (i as f64) / 12.0,
                )
            })
            .collect();
        let mut shuffled = rows.clone();
        shuffled.reverse();
        shuffled.swap(0, 5);
        let cfg = toy_config(vec![4, 3, 1], ActivationKind::LeakyRelu, 4);
        let (a, _) = mlp_train(&rows, &cfg).unwrap();
        let (b, _) = mlp_train(&shuffled, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_dataset_rejected() {
        let cfg = toy_config(vec![4, 3, 1], ActivationKind::Relu, 1);
        assert!(mlp_train(&[], &cfg).is_err());
    }

    #[test]
    fn model_json_roundtrip_bit_exact() {
        let rows: Vec<(Vec<f64>, f64)> = (0..8)
            .map(|i| ((0..3).map(|b| ((i >> b) & 1) as f64).collect(), 0.1 * i as f64))
            .collect();
        let cfg = toy_config(vec![3, 4, 1], ActivationKind::Mish, 5);
        let (model, _) = mlp_train(&rows, &cfg).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: MlpModel = serde_json::from_str(&json).unwrap();
        for (x, _) in &rows {
            assert_eq!(model.forward(x).to_bits(), back.forward(x).to_bits());
        }
    }
}

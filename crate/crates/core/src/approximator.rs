//! Feedforward Q-function approximator with online and target weight sets,
//! trained by SGD on the squared TD error, plus uniform experience replay.

use std::io::{Read, Write};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApproxError {
    #[error("input has {got} features, network expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("transition batch is empty")]
    EmptyBatch,
    #[error("non-finite value in transition batch")]
    NonFinite,
    #[error("choice {choice} out of range for {outputs} outputs")]
    Choice { choice: usize, outputs: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Dense {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs × inputs`.
    weights: Vec<f64>,
    bias: Option<Vec<f64>>,
}

impl Dense {
    fn init<R: Rng>(inputs: usize, outputs: usize, with_bias: bool, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.gen_range(-bound..=bound)).collect();
        let bias = with_bias.then(|| (0..outputs).map(|_| rng.gen_range(-bound..=bound)).collect());
        Self { inputs, outputs, weights, bias }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = self.bias.as_ref().map_or(0.0, |b| b[o]);
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            out.push(acc);
        }
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, Vec::len)
    }
}

/// ReLU multilayer perceptron with a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`.
    pub fn new<R: Rng>(sizes: &[usize], with_bias: bool, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes.windows(2).map(|w| Dense::init(w[0], w[1], with_bias, rng)).collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ApproxError> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Post-activation outputs of every layer, input first.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.apply(acts.last().expect("input pushed"), &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    /// Accumulates `scale · ∂out[choice]/∂θ` into `grad` (flat parameter order).
    fn backprop(&self, x: &[f64], choice: usize, scale: f64, grad: &mut [f64]) {
        let acts = self.activations(x);
        let mut delta = vec![0.0; self.output_dim()];
        delta[choice] = scale;
        let offsets = self.offsets();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let input = &acts[li];
            let (w_off, b_off) = offsets[li];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let g = &mut grad[w_off + o * layer.inputs..w_off + (o + 1) * layer.inputs];
                for (gi, xi) in g.iter_mut().zip(input) {
                    *gi += d * xi;
                }
                if layer.bias.is_some() {
                    grad[b_off + o] += d;
                }
            }
            if li == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            // ReLU derivative from the post-activation value.
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    /// `(weight offset, bias offset)` of each layer in flat parameter order.
    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.layers
            .iter()
            .map(|l| {
                let w = off;
                let b = off + l.weights.len();
                off += l.num_params();
                (w, b)
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            if let Some(b) = &l.bias {
                p.extend_from_slice(b);
            }
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_params(), "parameter count mismatch");
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.weights.len();
            l.weights.copy_from_slice(&p[off..off + n]);
            off += n;
            if let Some(b) = &mut l.bias {
                let n = b.len();
                b.copy_from_slice(&p[off..off + n]);
                off += n;
            }
        }
    }

    fn add_scaled(&mut self, delta: &[f64], scale: f64) {
        let mut off = 0;
        for l in &mut self.layers {
            for w in &mut l.weights {
                *w += scale * delta[off];
                off += 1;
            }
            if let Some(b) = &mut l.bias {
                for v in b {
                    *v += scale * delta[off];
                    off += 1;
                }
            }
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<(), ApproxError> {
        if x.len() != self.input_dim() {
            return Err(ApproxError::Dimension { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    /// Single linear layer without bias from explicit `outputs × inputs` weights.
    pub fn linear(inputs: usize, outputs: usize, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), inputs * outputs);
        Self { layers: vec![Dense { inputs, outputs, weights, bias: None }] }
    }
}

/// One stored experience. `choice` is the action or goal index.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub choice: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

impl Transition {
    fn is_finite(&self) -> bool {
        self.reward.is_finite()
            && self.state.iter().all(|v| v.is_finite())
            && self.next_state.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub hidden: [usize; 2],
    pub learning_rate: f64,
    pub discount: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub target_sync_every: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: [64, 64],
            learning_rate: 1e-3,
            discount: 0.9,
            replay_capacity: 10_000,
            batch_size: 32,
            target_sync_every: 200,
        }
    }
}

/// Q-network with main weights θ and target weights θ′.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    online: Mlp,
    target: Mlp,
    pub learning_rate: f64,
    pub discount: f64,
    updates: u64,
}

impl ValueNet {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, cfg: &NetConfig, rng: &mut R) -> Self {
        let mut sizes = vec![inputs];
        sizes.extend(cfg.hidden.iter().copied().filter(|&h| h > 0));
        sizes.push(outputs);
        Self::from_mlp(Mlp::new(&sizes, true, rng), cfg.learning_rate, cfg.discount)
    }

    /// Wraps `mlp` as both online and target weights.
    pub fn from_mlp(mlp: Mlp, learning_rate: f64, discount: f64) -> Self {
        Self { target: mlp.clone(), online: mlp, learning_rate, discount, updates: 0 }
    }

    pub fn input_dim(&self) -> usize {
        self.online.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.online.output_dim()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn online(&self) -> &Mlp {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut Mlp {
        &mut self.online
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn forward(&self, x: &[f64], use_target: bool) -> Result<Vec<f64>, ApproxError> {
        if use_target {
            self.target.forward(x)
        } else {
            self.online.forward(x)
        }
    }

    /// θ′ := θ.
    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    fn targets(&self, batch: &[Transition]) -> Result<Vec<f64>, ApproxError> {
        batch
            .iter()
            .map(|t| {
                if t.terminal {
                    return Ok(t.reward);
                }
                let next = self.target.forward(&t.next_state)?;
                let best = next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Ok(t.reward + self.discount * best)
            })
            .collect()
    }

    fn validate(&self, batch: &[Transition]) -> Result<(), ApproxError> {
        if batch.is_empty() {
            return Err(ApproxError::EmptyBatch);
        }
        for t in batch {
            if !t.is_finite() {
                return Err(ApproxError::NonFinite);
            }
            if t.choice >= self.output_dim() {
                return Err(ApproxError::Choice { choice: t.choice, outputs: self.output_dim() });
            }
            self.online.check_input(&t.state)?;
            self.online.check_input(&t.next_state)?;
        }
        Ok(())
    }

    /// `½·mean((y − Q(s)[choice])²)` with targets from θ′.
    pub fn td_loss(&self, batch: &[Transition]) -> Result<f64, ApproxError> {
        self.validate(batch)?;
        let ys = self.targets(batch)?;
        let mut loss = 0.0;
        for (t, y) in batch.iter().zip(&ys) {
            let q = self.online.forward(&t.state)?[t.choice];
            loss += 0.5 * (y - q).powi(2);
        }
        Ok(loss / batch.len() as f64)
    }

    /// Gradient of [`td_loss`](Self::td_loss) w.r.t. the online parameters,
    /// holding the targets fixed.
    pub fn td_gradient(&self, batch: &[Transition]) -> Result<(f64, Vec<f64>), ApproxError> {
        self.validate(batch)?;
        let ys = self.targets(batch)?;
        let n = batch.len() as f64;
        let mut grad = vec![0.0; self.online.num_params()];
        let mut loss = 0.0;
        for (t, y) in batch.iter().zip(&ys) {
            let q = self.online.forward(&t.state)?[t.choice];
            let err = q - y;
            loss += 0.5 * err * err;
            self.online.backprop(&t.state, t.choice, err / n, &mut grad);
        }
        Ok((loss / n, grad))
    }

    /// One SGD step on the TD loss. Returns the loss before the step.
    pub fn td_update(&mut self, batch: &[Transition]) -> Result<f64, ApproxError> {
        let (loss, grad) = self.td_gradient(batch)?;
        self.online.add_scaled(&grad, -self.learning_rate);
        self.updates += 1;
        Ok(loss)
    }

    pub fn save<W: Write>(&self, w: W) -> Result<(), ApproxError> {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            learning_rate: self.learning_rate,
            discount: self.discount,
            updates: self.updates,
            online: self.online.clone(),
            target: self.target.clone(),
        };
        serde_json::to_writer_pretty(w, &ckpt).map_err(|e| ApproxError::Checkpoint(e.to_string()))
    }

    pub fn load<R: Read>(r: R) -> Result<Self, ApproxError> {
        let ckpt: Checkpoint = serde_json::from_reader(r).map_err(|e| ApproxError::Checkpoint(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(ApproxError::Checkpoint(format!("unsupported checkpoint {} v{}", ckpt.format, ckpt.version)));
        }
        if ckpt.online.sizes() != ckpt.target.sizes() {
            return Err(ApproxError::Checkpoint("online and target shapes differ".into()));
        }
        Ok(Self {
            online: ckpt.online,
            target: ckpt.target,
            learning_rate: ckpt.learning_rate,
            discount: ckpt.discount,
            updates: ckpt.updates,
        })
    }
}

const CHECKPOINT_FORMAT: &str = "rat-steer/value-net";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    learning_rate: f64,
    discount: f64,
    updates: u64,
    online: Mlp,
    target: Mlp,
}

/// Fixed-capacity ring buffer of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { items: Vec::with_capacity(capacity.min(1 << 16)), capacity, next: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform sample of `n` distinct transitions (fewer if the buffer is smaller).
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Transition> {
        let n = n.min(self.items.len());
        index::sample(rng, self.items.len(), n).into_iter().map(|i| self.items[i].clone()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }
}

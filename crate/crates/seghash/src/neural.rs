//! Minimal differentiable sequence core: LSTM cell, prediction heads, exact
//! reverse-mode gradients, the Adam optimizer, and checkpoint I/O.
//!
//! Everything runs in f64 single-precision-free so analytic gradients can be
//! validated against central finite differences. Weight matrices are stored
//! input-major (`[in_dim, out_dim]`, index `w[k*out + r]`): inputs are sparse
//! 0/1 vectors, so forward accumulation, gradient outer products, and the
//! transposed products in backprop all stream contiguously.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{TimestepVector, FEATURE_DIM};

/// A timestep as the indices of its set bits.
pub type BitStep = Vec<u8>;

pub fn segment_bits(steps: &[TimestepVector]) -> Vec<BitStep> {
    steps
        .iter()
        .map(|s| {
            s.bits
                .iter()
                .enumerate()
                .filter_map(|(i, &b)| if b { Some(i as u8) } else { None })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Retrograde,
}

// --- primitive layers --------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `[in_dim, out_dim]`, index `w[k*out_dim + r]`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            in_dim,
            out_dim,
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
        }
    }

    pub fn init(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let scale = 1.0 / (in_dim as f64).sqrt();
        let mut l = Linear::zeros(in_dim, out_dim);
        for w in l.w.iter_mut() {
            *w = rng.gen_range(-scale..scale);
        }
        l
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.b.clone();
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            let row = &self.w[k * self.out_dim..(k + 1) * self.out_dim];
            for (r, &wkr) in row.iter().enumerate() {
                y[r] += wkr * xk;
            }
        }
        y
    }

    /// Accumulates parameter gradients and, when given, the input gradient.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear, mut dx: Option<&mut [f64]>) {
        for (r, &d) in dy.iter().enumerate() {
            grad.b[r] += d;
        }
        for (k, &xk) in x.iter().enumerate() {
            let row = &self.w[k * self.out_dim..(k + 1) * self.out_dim];
            let grow = &mut grad.w[k * self.out_dim..(k + 1) * self.out_dim];
            let mut acc = 0.0;
            for (r, &d) in dy.iter().enumerate() {
                if xk != 0.0 {
                    grow[r] += d * xk;
                }
                acc += row[r] * d;
            }
            if let Some(dx) = dx.as_deref_mut() {
                dx[k] += acc;
            }
        }
    }
}

// --- LSTM cell ---------------------------------------------------------------

/// Gate blocks are ordered input, forget, candidate, output.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub in_dim: usize,
    pub hidden: usize,
    /// `[in_dim, 4H]`
    pub w_x: Vec<f64>,
    /// `[H, 4H]`
    pub w_h: Vec<f64>,
    /// `[4H]`
    pub b: Vec<f64>,
}

impl LstmCell {
    pub fn zeros(in_dim: usize, hidden: usize) -> Self {
        LstmCell {
            in_dim,
            hidden,
            w_x: vec![0.0; in_dim * 4 * hidden],
            w_h: vec![0.0; hidden * 4 * hidden],
            b: vec![0.0; 4 * hidden],
        }
    }

    /// Uniform +-1/sqrt(H) weights; forget-gate bias 1, other biases 0.
    pub fn init(in_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let scale = 1.0 / (hidden as f64).sqrt();
        let mut cell = LstmCell::zeros(in_dim, hidden);
        for w in cell.w_x.iter_mut() {
            *w = rng.gen_range(-scale..scale);
        }
        for w in cell.w_h.iter_mut() {
            *w = rng.gen_range(-scale..scale);
        }
        for h in 0..hidden {
            cell.b[hidden + h] = 1.0;
        }
        cell
    }

    pub fn forward(&self, seq: &[BitStep], direction: Direction) -> LstmTrace {
        let hidden = self.hidden;
        let g4 = 4 * hidden;
        let mut h = vec![0.0; hidden];
        let mut c = vec![0.0; hidden];
        let mut steps = Vec::with_capacity(seq.len());

        let order: Vec<usize> = match direction {
            Direction::Forward => (0..seq.len()).collect(),
            Direction::Retrograde => (0..seq.len()).rev().collect(),
        };

        for &t in &order {
            let x = &seq[t];
            let mut pre = self.b.clone();
            for &ix in x {
                let row = &self.w_x[ix as usize * g4..(ix as usize + 1) * g4];
                for (r, &w) in row.iter().enumerate() {
                    pre[r] += w;
                }
            }
            for (k, &hk) in h.iter().enumerate() {
                if hk == 0.0 {
                    continue;
                }
                let row = &self.w_h[k * g4..(k + 1) * g4];
                for (r, &w) in row.iter().enumerate() {
                    pre[r] += w * hk;
                }
            }
            let mut gates = vec![0.0; g4];
            for r in 0..hidden {
                gates[r] = sigmoid(pre[r]); // input
                gates[hidden + r] = sigmoid(pre[hidden + r]); // forget
                gates[2 * hidden + r] = pre[2 * hidden + r].tanh(); // candidate
                gates[3 * hidden + r] = sigmoid(pre[3 * hidden + r]); // output
            }
            let mut c_new = vec![0.0; hidden];
            let mut tanh_c = vec![0.0; hidden];
            let mut h_new = vec![0.0; hidden];
            for r in 0..hidden {
                c_new[r] = gates[hidden + r] * c[r] + gates[r] * gates[2 * hidden + r];
                tanh_c[r] = c_new[r].tanh();
                h_new[r] = gates[3 * hidden + r] * tanh_c[r];
            }
            steps.push(StepCache {
                x: x.clone(),
                h_prev: h,
                c_prev: c,
                gates,
                tanh_c,
                h: h_new.clone(),
            });
            h = h_new;
            c = c_new;
        }
        LstmTrace { steps }
    }

    /// Backpropagation through time. `dh_steps[t]` is the loss gradient on
    /// the hidden state emitted at trace step `t` (fed order).
    pub fn backward(&self, trace: &LstmTrace, dh_steps: &[Vec<f64>], grad: &mut LstmCell) {
        let hidden = self.hidden;
        let g4 = 4 * hidden;
        let mut dh_next = vec![0.0; hidden];
        let mut dc_next = vec![0.0; hidden];
        let mut d_gates = vec![0.0; g4];

        for (t, step) in trace.steps.iter().enumerate().rev() {
            let i = &step.gates[0..hidden];
            let f = &step.gates[hidden..2 * hidden];
            let g = &step.gates[2 * hidden..3 * hidden];
            let o = &step.gates[3 * hidden..4 * hidden];

            for r in 0..hidden {
                let dh = dh_steps[t][r] + dh_next[r];
                let dc = dh * o[r] * (1.0 - step.tanh_c[r] * step.tanh_c[r]) + dc_next[r];
                d_gates[r] = dc * g[r] * i[r] * (1.0 - i[r]);
                d_gates[hidden + r] = dc * step.c_prev[r] * f[r] * (1.0 - f[r]);
                d_gates[2 * hidden + r] = dc * i[r] * (1.0 - g[r] * g[r]);
                d_gates[3 * hidden + r] = dh * step.tanh_c[r] * o[r] * (1.0 - o[r]);
                dc_next[r] = dc * f[r];
            }

            for r in 0..g4 {
                grad.b[r] += d_gates[r];
            }
            for &ix in &step.x {
                let grow = &mut grad.w_x[ix as usize * g4..(ix as usize + 1) * g4];
                for (r, &d) in d_gates.iter().enumerate() {
                    grow[r] += d;
                }
            }
            for (k, &hk) in step.h_prev.iter().enumerate() {
                let row = &self.w_h[k * g4..(k + 1) * g4];
                let grow = &mut grad.w_h[k * g4..(k + 1) * g4];
                let mut acc = 0.0;
                for (r, &d) in d_gates.iter().enumerate() {
                    if hk != 0.0 {
                        grow[r] += d * hk;
                    }
                    acc += row[r] * d;
                }
                dh_next[k] = acc;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepCache {
    pub x: BitStep,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Post-activation gate values `[i f g o]`.
    pub gates: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmTrace {
    pub steps: Vec<StepCache>,
}

impl LstmTrace {
    pub fn final_h(&self) -> &[f64] {
        &self.steps.last().expect("nonempty sequence").h
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

// --- prediction heads ---------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PredictionHeads {
    pub articulation: Linear,
    pub octave: Linear,
    pub pitch_class: Linear,
    pub chord: Linear,
}

impl PredictionHeads {
    pub fn zeros(hidden: usize) -> Self {
        PredictionHeads {
            articulation: Linear::zeros(hidden, 1),
            octave: Linear::zeros(hidden, 4),
            pitch_class: Linear::zeros(hidden, 12),
            chord: Linear::zeros(hidden, 12),
        }
    }

    pub fn init(hidden: usize, rng: &mut impl Rng) -> Self {
        PredictionHeads {
            articulation: Linear::init(hidden, 1, rng),
            octave: Linear::init(hidden, 4, rng),
            pitch_class: Linear::init(hidden, 12, rng),
            chord: Linear::init(hidden, 12, rng),
        }
    }
}

/// One-hot target classes of a timestep, derived from its set bits.
struct StepTargets {
    articulated: bool,
    octave: Option<usize>,
    pitch_class: Option<usize>,
    chord: Option<usize>,
}

fn targets(step: &BitStep) -> StepTargets {
    let mut t = StepTargets {
        articulated: false,
        octave: None,
        pitch_class: None,
        chord: None,
    };
    for &ix in step {
        match ix as usize {
            0 => t.articulated = true,
            1..=4 => t.octave = Some(ix as usize - 1),
            5..=16 => t.pitch_class = Some(ix as usize - 5),
            17..=28 => t.chord = Some(ix as usize - 17),
            _ => {}
        }
    }
    t
}

/// Teacher-forced next-step prediction loss over a batch, one direction.
///
/// The sequence is processed in fed order (retrograde feeds the reversed
/// segment) and each step predicts the next fed step. Cross-entropy terms for
/// one-hot groups are masked when the target group is all zero; the
/// articulation binary term always contributes. Returns the mean loss per
/// predicted step; gradients (scaled the same way) are accumulated into
/// `grads` when provided.
pub fn pretrain_loss(
    lstm: &LstmCell,
    heads: &PredictionHeads,
    batch: &[Vec<BitStep>],
    direction: Direction,
    mut grads: Option<(&mut LstmCell, &mut PredictionHeads)>,
) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let n_pred: usize = batch.iter().map(|s| s.len().saturating_sub(1)).sum();
    if n_pred == 0 {
        return 0.0;
    }
    let factor = 1.0 / n_pred as f64;
    let mut loss = 0.0;

    for seq in batch {
        let trace = lstm.forward(seq, direction);
        let fed: Vec<&BitStep> = match direction {
            Direction::Forward => seq.iter().collect(),
            Direction::Retrograde => seq.iter().rev().collect(),
        };
        let mut dh: Vec<Vec<f64>> = vec![vec![0.0; lstm.hidden]; seq.len()];
        for t in 0..seq.len() - 1 {
            let h = &trace.steps[t].h;
            let tgt = targets(fed[t + 1]);

            // Articulation: binary cross-entropy with logits.
            let a = heads.articulation.forward(h)[0];
            let y = if tgt.articulated { 1.0 } else { 0.0 };
            loss += softplus(a) - y * a;
            if let Some((_, gh)) = grads.as_mut() {
                let da = (sigmoid(a) - y) * factor;
                heads
                    .articulation
                    .backward(h, &[da], &mut gh.articulation, Some(&mut dh[t]));
            }

            // Masked categorical terms.
            let groups: [(&Linear, Option<usize>, fn(&mut PredictionHeads) -> &mut Linear); 3] = [
                (&heads.octave, tgt.octave, |g| &mut g.octave),
                (&heads.pitch_class, tgt.pitch_class, |g| &mut g.pitch_class),
                (&heads.chord, tgt.chord, |g| &mut g.chord),
            ];
            for (layer, target, pick) in groups {
                let Some(class) = target else { continue };
                let z = layer.forward(h);
                loss += log_sum_exp(&z) - z[class];
                if let Some((_, gh)) = grads.as_mut() {
                    let mut dz = softmax(&z);
                    dz[class] -= 1.0;
                    for d in dz.iter_mut() {
                        *d *= factor;
                    }
                    layer.backward(h, &dz, pick(gh), Some(&mut dh[t]));
                }
            }
        }
        if let Some((gl, _)) = grads.as_mut() {
            lstm.backward(&trace, &dh, gl);
        }
    }
    loss * factor
}

// --- full parameter set --------------------------------------------------------

/// Hash-head parameters: H -> 64 -> L*K.
#[derive(Debug, Clone)]
pub struct HashHead {
    pub fc1: Linear,
    pub fc2: Linear,
}

pub const HASH_HIDDEN: usize = 64;

impl HashHead {
    pub fn zeros(hidden: usize, code_len: usize, arity: usize) -> Self {
        HashHead {
            fc1: Linear::zeros(hidden, HASH_HIDDEN),
            fc2: Linear::zeros(HASH_HIDDEN, code_len * arity),
        }
    }

    pub fn init(hidden: usize, code_len: usize, arity: usize, rng: &mut impl Rng) -> Self {
        let mut fc1 = Linear::init(hidden, HASH_HIDDEN, rng);
        let mut fc2 = Linear::init(HASH_HIDDEN, code_len * arity, rng);
        // Slightly positive biases keep the ReLU-then-softmax groups out of
        // the all-dead state where no gradient can reach them.
        for b in fc1.b.iter_mut().chain(fc2.b.iter_mut()) {
            *b = 0.1;
        }
        HashHead { fc1, fc2 }
    }
}

/// All parameters of one direction (LSTM, prediction heads, hash head).
#[derive(Debug, Clone)]
pub struct DirectionNet {
    pub lstm: LstmCell,
    pub heads: PredictionHeads,
    pub hash: HashHead,
}

/// The two-direction model. `fwd` analyzes segments forward in time; `bwd`
/// analyzes the retrograde.
#[derive(Debug, Clone)]
pub struct Model {
    pub hidden: usize,
    pub code_len: usize,
    pub arity: usize,
    pub fwd: DirectionNet,
    pub bwd: DirectionNet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeDims {
    pub code_len: usize,
    pub arity: usize,
}

impl Model {
    pub fn code_dims(&self) -> CodeDims {
        CodeDims {
            code_len: self.code_len,
            arity: self.arity,
        }
    }

    pub fn init(hidden: usize, code_len: usize, arity: usize, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let direction = |rng: &mut ChaCha8Rng| DirectionNet {
            lstm: LstmCell::init(FEATURE_DIM, hidden, rng),
            heads: PredictionHeads::init(hidden, rng),
            hash: HashHead::init(hidden, code_len, arity, rng),
        };
        let fwd = direction(&mut rng);
        let bwd = direction(&mut rng);
        Model {
            hidden,
            code_len,
            arity,
            fwd,
            bwd,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let direction = || DirectionNet {
            lstm: LstmCell::zeros(FEATURE_DIM, self.hidden),
            heads: PredictionHeads::zeros(self.hidden),
            hash: HashHead::zeros(self.hidden, self.code_len, self.arity),
        };
        Model {
            hidden: self.hidden,
            code_len: self.code_len,
            arity: self.arity,
            fwd: direction(),
            bwd: direction(),
        }
    }

    /// Named tensors in a fixed traversal order shared by the optimizer,
    /// checkpoints, and gradient checks.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &Vec<f64>)> {
        let mut out = Vec::new();
        for (prefix, net) in [("fwd", &self.fwd), ("bwd", &self.bwd)] {
            let h = self.hidden;
            out.push((format!("{prefix}.lstm.w_x"), vec![FEATURE_DIM, 4 * h], &net.lstm.w_x));
            out.push((format!("{prefix}.lstm.w_h"), vec![h, 4 * h], &net.lstm.w_h));
            out.push((format!("{prefix}.lstm.b"), vec![4 * h], &net.lstm.b));
            for (name, lin) in [
                ("heads.articulation", &net.heads.articulation),
                ("heads.octave", &net.heads.octave),
                ("heads.pitch_class", &net.heads.pitch_class),
                ("heads.chord", &net.heads.chord),
                ("hash.fc1", &net.hash.fc1),
                ("hash.fc2", &net.hash.fc2),
            ] {
                out.push((
                    format!("{prefix}.{name}.w"),
                    vec![lin.in_dim, lin.out_dim],
                    &lin.w,
                ));
                out.push((format!("{prefix}.{name}.b"), vec![lin.out_dim], &lin.b));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut out: Vec<(String, &mut Vec<f64>)> = Vec::new();
        for (prefix, net) in [("fwd", &mut self.fwd), ("bwd", &mut self.bwd)] {
            out.push((format!("{prefix}.lstm.w_x"), &mut net.lstm.w_x));
            out.push((format!("{prefix}.lstm.w_h"), &mut net.lstm.w_h));
            out.push((format!("{prefix}.lstm.b"), &mut net.lstm.b));
            for (name, lin) in [
                ("heads.articulation", &mut net.heads.articulation),
                ("heads.octave", &mut net.heads.octave),
                ("heads.pitch_class", &mut net.heads.pitch_class),
                ("heads.chord", &mut net.heads.chord),
                ("hash.fc1", &mut net.hash.fc1),
                ("hash.fc2", &mut net.hash.fc2),
            ] {
                out.push((format!("{prefix}.{name}.w"), &mut lin.w));
                out.push((format!("{prefix}.{name}.b"), &mut lin.b));
            }
        }
        out
    }

    /// Element-wise add of another model's tensors (gradient accumulation).
    pub fn add_assign(&mut self, other: &Model) {
        let theirs = other.tensors();
        for ((_, mine), (_, _, theirs)) in self.tensors_mut().into_iter().zip(theirs) {
            for (a, b) in mine.iter_mut().zip(theirs.iter()) {
                *a += b;
            }
        }
    }
}

// --- optimizer -----------------------------------------------------------------

/// Adam with global-norm gradient clipping; moment buffers align with the
/// model's tensor traversal order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(model: &Model, lr: f64, clip: f64) -> Self {
        let sizes: Vec<usize> = model.tensors().iter().map(|(_, _, t)| t.len()).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut Model, grads: &Model) {
        self.t += 1;
        let gts = grads.tensors();
        let norm2: f64 = gts
            .iter()
            .map(|(_, _, g)| g.iter().map(|x| x * x).sum::<f64>())
            .sum();
        let norm = norm2.sqrt();
        let scale = if self.clip > 0.0 && norm > self.clip {
            self.clip / norm
        } else {
            1.0
        };
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (idx, (_, p)) in params.tensors_mut().into_iter().enumerate() {
            let g = gts[idx].2;
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for k in 0..p.len() {
                let gk = g[k] * scale;
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

// --- checkpoint I/O --------------------------------------------------------------

const CKPT_MAGIC: &[u8; 8] = b"SGCKPT01";
const CKPT_VERSION: u32 = 1;

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CKPT_MAGIC)?;
    w.write_all(&CKPT_VERSION.to_le_bytes())?;
    w.write_all(&(model.hidden as u32).to_le_bytes())?;
    w.write_all(&(model.code_len as u32).to_le_bytes())?;
    w.write_all(&(model.arity as u32).to_le_bytes())?;
    let tensors = model.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, shape, data) in tensors {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for d in &shape {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for x in data {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let bad = |detail: String| Error::Format {
        path: path.to_path_buf(),
        detail,
    };
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CKPT_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CKPT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let hidden = read_u32(&mut r)? as usize;
    let code_len = read_u32(&mut r)? as usize;
    let arity = read_u32(&mut r)? as usize;
    let count = read_u32(&mut r)? as usize;

    let mut model = Model::init(hidden, code_len, arity, 0).zeros_like();
    {
        let mut slots: std::collections::HashMap<String, &mut Vec<f64>> =
            model.tensors_mut().into_iter().collect();
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact(&mut name_bytes)?;
            let name = String::from_utf8_lossy(&name_bytes).to_string();
            let ndim = read_u32(&mut r)? as usize;
            let mut numel = 1usize;
            for _ in 0..ndim {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                numel *= u64::from_le_bytes(b) as usize;
            }
            let slot = slots
                .remove(&name)
                .ok_or_else(|| bad(format!("unknown tensor '{name}'")))?;
            if slot.len() != numel {
                return Err(bad(format!(
                    "tensor '{name}' has {numel} values, expected {}",
                    slot.len()
                )));
            }
            for x in slot.iter_mut() {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                *x = f64::from_le_bytes(b);
            }
        }
        if !slots.is_empty() {
            let missing: Vec<&String> = slots.keys().collect();
            return Err(bad(format!("missing tensors: {missing:?}")));
        }
    }
    Ok(model)
}

/// First 8 bytes of the file's SHA-256, used to tie an index to its model.
pub fn checkpoint_checksum(path: &Path) -> Result<u64> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(u64::from_le_bytes(digest[..8].try_into().unwrap()))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

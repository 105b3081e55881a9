//! Ranking-based hashing on top of the LSTM state, and pair-wise training.
//!
//! Each direction stacks ReLU(h_T) -> fc1(64) -> ReLU -> fc2(L*K) -> ReLU ->
//! per-group softmax, giving L stochastic K-vectors (the relaxed code). The
//! discrete code takes the argmax of each group. Training minimizes the mean
//! squared pair objective ((1/L) b_iF . b_jB - c)^2 over balanced batches of
//! composable and non-composable pairs, plus an alpha-weighted bit-balance
//! term pushing each group's batch-mean activation toward uniform.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::neural::{
    softmax, Adam, BitStep, CodeDims, DirectionNet, Direction, HashHead, LstmCell, LstmTrace,
    Model,
};
use crate::pairs::{sample_negatives, shuffle, Boundaries, SegmentPair, TransitionStats};

/// Fixed chunk count for deterministic parallel gradient accumulation.
const GRAD_CHUNKS: usize = 8;

/// L stochastic K-vectors; row `l` lives at `values[l*arity..(l+1)*arity]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousCode {
    pub code_len: usize,
    pub arity: usize,
    pub values: Vec<f64>,
}

impl ContinuousCode {
    pub fn row(&self, l: usize) -> &[f64] {
        &self.values[l * self.arity..(l + 1) * self.arity]
    }

    /// Row sums must be 1 within 1e-9.
    pub fn validate(&self) -> bool {
        (0..self.code_len).all(|l| {
            let sum: f64 = self.row(l).iter().sum();
            (sum - 1.0).abs() < 1e-9 && self.row(l).iter().all(|&v| (-1e-12..=1.0 + 1e-9).contains(&v))
        })
    }
}

/// L digits, each in 0..K.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DiscreteCode {
    pub arity: usize,
    pub digits: Vec<u8>,
}

/// Argmax per group; ties break to the lowest index.
pub fn discretize(code: &ContinuousCode) -> DiscreteCode {
    let digits = (0..code.code_len)
        .map(|l| {
            let row = code.row(l);
            let mut best = 0usize;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best as u8
        })
        .collect();
    DiscreteCode {
        arity: code.arity,
        digits,
    }
}

pub fn digit_hamming(a: &[u8], b: &[u8]) -> u32 {
    a.iter().zip(b.iter()).filter(|(x, y)| x != y).count() as u32
}

/// Forward activations kept for backprop.
pub struct CodeForward {
    pub trace: LstmTrace,
    pub m0: Vec<f64>,
    pub a1: Vec<f64>,
    pub m1: Vec<f64>,
    pub a2: Vec<f64>,
    pub m2: Vec<f64>,
    pub code: ContinuousCode,
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

pub fn code_forward(
    net: &DirectionNet,
    seq: &[BitStep],
    direction: Direction,
    dims: CodeDims,
) -> CodeForward {
    let trace = net.lstm.forward(seq, direction);
    let m0 = relu(trace.final_h());
    let a1 = net.hash.fc1.forward(&m0);
    let m1 = relu(&a1);
    let a2 = net.hash.fc2.forward(&m1);
    let m2 = relu(&a2);
    let mut values = Vec::with_capacity(dims.code_len * dims.arity);
    for l in 0..dims.code_len {
        values.extend(softmax(&m2[l * dims.arity..(l + 1) * dims.arity]));
    }
    CodeForward {
        trace,
        m0,
        a1,
        m1,
        a2,
        m2,
        code: ContinuousCode {
            code_len: dims.code_len,
            arity: dims.arity,
            values,
        },
    }
}

/// Relaxed code of one segment under one direction's parameters. The backward
/// direction expects the retrograde feed.
pub fn continuous_code(
    net: &DirectionNet,
    seq: &[BitStep],
    direction: Direction,
    dims: CodeDims,
) -> ContinuousCode {
    code_forward(net, seq, direction, dims).code
}

/// Backpropagates a gradient on the relaxed code through the hash head and
/// the LSTM.
pub fn code_backward(
    net: &DirectionNet,
    fwd: &CodeForward,
    dcode: &[f64],
    grad_lstm: &mut LstmCell,
    grad_hash: &mut HashHead,
) {
    let dims = (fwd.code.code_len, fwd.code.arity);
    // Softmax groups: dz = y .* (dy - (dy . y))
    let mut dm2 = vec![0.0; fwd.m2.len()];
    for l in 0..dims.0 {
        let y = fwd.code.row(l);
        let dy = &dcode[l * dims.1..(l + 1) * dims.1];
        let dot: f64 = dy.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        for k in 0..dims.1 {
            dm2[l * dims.1 + k] = y[k] * (dy[k] - dot);
        }
    }
    for (d, &a) in dm2.iter_mut().zip(fwd.a2.iter()) {
        if a <= 0.0 {
            *d = 0.0;
        }
    }
    let mut dm1 = vec![0.0; fwd.m1.len()];
    net.hash
        .fc2
        .backward(&fwd.m1, &dm2, &mut grad_hash.fc2, Some(&mut dm1));
    for (d, &a) in dm1.iter_mut().zip(fwd.a1.iter()) {
        if a <= 0.0 {
            *d = 0.0;
        }
    }
    let mut dm0 = vec![0.0; fwd.m0.len()];
    net.hash
        .fc1
        .backward(&fwd.m0, &dm1, &mut grad_hash.fc1, Some(&mut dm0));
    let h_final = fwd.trace.final_h();
    for (d, &h) in dm0.iter_mut().zip(h_final.iter()) {
        if h <= 0.0 {
            *d = 0.0;
        }
    }
    let mut dh_steps = vec![vec![0.0; dm0.len()]; fwd.trace.steps.len()];
    *dh_steps.last_mut().unwrap() = dm0;
    net.lstm.backward(&fwd.trace, &dh_steps, grad_lstm);
}

/// Squared pair objective on vectorized relaxed codes.
pub fn pair_loss(b_f: &ContinuousCode, b_b: &ContinuousCode, composable: bool) -> f64 {
    assert_eq!(b_f.code_len, b_b.code_len, "code length mismatch");
    assert_eq!(b_f.arity, b_b.arity, "code arity mismatch");
    let ip: f64 = b_f
        .values
        .iter()
        .zip(b_b.values.iter())
        .map(|(a, b)| a * b)
        .sum();
    let c = if composable { 1.0 } else { 0.0 };
    let diff = ip / b_f.code_len as f64 - c;
    diff * diff
}

/// Bit-balance term of one code batch: sum over groups of the squared
/// distance between the batch-mean activation and the uniform 1/K vector.
pub fn balance_term(batch: &[&ContinuousCode]) -> f64 {
    assert!(!batch.is_empty(), "balance term needs a nonempty batch");
    let (l_len, k) = (batch[0].code_len, batch[0].arity);
    let mut mean = vec![0.0; l_len * k];
    for code in batch {
        for (m, &v) in mean.iter_mut().zip(code.values.iter()) {
            *m += v;
        }
    }
    let n = batch.len() as f64;
    let u = 1.0 / k as f64;
    mean.iter().map(|&m| (m / n - u) * (m / n - u)).sum()
}

/// Training knobs for the pair-wise stage.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub code_len: usize,
    pub arity: usize,
    pub alpha: f64,
    pub epochs: usize,
    /// Pairs per class per minibatch (a batch holds up to 2x this).
    pub batch_pairs: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.code_len < 1 {
            return Err(Error::Config("code_len must be >= 1".into()));
        }
        if self.arity < 2 {
            return Err(Error::Config("arity must be >= 2".into()));
        }
        if self.alpha < 0.0 {
            return Err(Error::Config("alpha must be >= 0".into()));
        }
        if self.batch_pairs < 1 {
            return Err(Error::Config("batch_pairs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub ham_pos_train: f64,
    pub ham_neg_train: f64,
    pub ham_pos_val: f64,
    pub ham_neg_val: f64,
}

/// Discrete codes of every segment under both directions.
pub struct CodeTable {
    pub fwd: Vec<Vec<u8>>,
    pub bwd: Vec<Vec<u8>>,
}

pub fn compute_codes(model: &Model, bits: &[Vec<BitStep>]) -> CodeTable {
    let dims = model.code_dims();
    let fwd: Vec<Vec<u8>> = bits
        .par_iter()
        .map(|seq| discretize(&continuous_code(&model.fwd, seq, Direction::Forward, dims)).digits)
        .collect();
    let bwd: Vec<Vec<u8>> = bits
        .par_iter()
        .map(|seq| {
            discretize(&continuous_code(&model.bwd, seq, Direction::Retrograde, dims)).digits
        })
        .collect();
    CodeTable { fwd, bwd }
}

pub fn mean_pair_distance(table: &CodeTable, pairs: &[SegmentPair]) -> f64 {
    if pairs.is_empty() {
        return f64::NAN;
    }
    let total: u64 = pairs
        .iter()
        .map(|p| digit_hamming(&table.fwd[p.i as usize], &table.bwd[p.j as usize]) as u64)
        .sum();
    total as f64 / pairs.len() as f64
}

/// Where each epoch's negative pairs come from.
pub enum NegativePolicy<'a> {
    /// Fresh uniform negatives below the threshold, resampled every epoch.
    Resample {
        stats: &'a TransitionStats,
        bounds: &'a Boundaries,
        positive_keys: &'a HashSet<(u32, u32)>,
        exclude: &'a HashSet<(u32, u32)>,
        threshold: f64,
    },
    /// A fixed negative list (possibly empty) for every epoch.
    Fixed(&'a [SegmentPair]),
}

/// One optimizer pass over shuffled balanced minibatches. Returns the mean
/// batch loss.
pub fn run_epoch(
    model: &mut Model,
    opt: &mut Adam,
    bits: &[Vec<BitStep>],
    positives: &[SegmentPair],
    negatives: &[SegmentPair],
    alpha: f64,
    batch_pairs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut pos: Vec<SegmentPair> = positives.to_vec();
    let mut neg: Vec<SegmentPair> = negatives.to_vec();
    shuffle(&mut pos, rng);
    shuffle(&mut neg, rng);

    let n_batches = pos.len().div_ceil(batch_pairs).max(1);
    let mut total = 0.0;
    let mut counted = 0usize;
    for b in 0..n_batches {
        let lo = b * batch_pairs;
        if lo >= pos.len() && neg.is_empty() {
            break;
        }
        let pos_slice = &pos[lo.min(pos.len())..(lo + batch_pairs).min(pos.len())];
        let neg_lo = b * batch_pairs;
        let neg_slice = if neg.is_empty() {
            &[]
        } else {
            &neg[neg_lo.min(neg.len())..(neg_lo + batch_pairs).min(neg.len())]
        };
        let batch: Vec<SegmentPair> = pos_slice.iter().chain(neg_slice.iter()).copied().collect();
        if batch.is_empty() {
            continue;
        }
        let loss = batch_step(model, opt, &batch, bits, alpha)?;
        total += loss;
        counted += 1;
    }
    Ok(if counted > 0 { total / counted as f64 } else { 0.0 })
}

fn batch_step(
    model: &mut Model,
    opt: &mut Adam,
    batch: &[SegmentPair],
    bits: &[Vec<BitStep>],
    alpha: f64,
) -> Result<f64> {
    let (loss, grads) = batch_gradients(model, batch, bits, 1.0, alpha)?;
    opt.step(model, &grads);
    Ok(loss)
}

/// Loss and exact gradients of `pair_weight * mean pair loss + alpha *
/// (balance(forward batch) + balance(backward batch))` over one batch.
pub fn batch_gradients(
    model: &Model,
    batch: &[SegmentPair],
    bits: &[Vec<BitStep>],
    pair_weight: f64,
    alpha: f64,
) -> Result<(f64, Model)> {
    let dims = model.code_dims();
    let n = batch.len() as f64;
    let (l_len, k) = (dims.code_len, dims.arity);

    // Forward both sides of every pair, keeping traces for backprop.
    let forwards: Vec<(CodeForward, CodeForward)> = batch
        .par_iter()
        .map(|p| {
            (
                code_forward(&model.fwd, &bits[p.i as usize], Direction::Forward, dims),
                code_forward(&model.bwd, &bits[p.j as usize], Direction::Retrograde, dims),
            )
        })
        .collect();

    // Pair losses and the two batch means for the balance term.
    let lk = l_len * k;
    let mut mean_f = vec![0.0; lk];
    let mut mean_b = vec![0.0; lk];
    let mut diffs = Vec::with_capacity(forwards.len());
    let mut loss_pairs = 0.0;
    for (cf, cb) in &forwards {
        let ip: f64 = cf
            .code
            .values
            .iter()
            .zip(cb.code.values.iter())
            .map(|(a, b)| a * b)
            .sum();
        for (m, &v) in mean_f.iter_mut().zip(cf.code.values.iter()) {
            *m += v;
        }
        for (m, &v) in mean_b.iter_mut().zip(cb.code.values.iter()) {
            *m += v;
        }
        diffs.push(ip / l_len as f64);
    }
    let u = 1.0 / k as f64;
    for m in mean_f.iter_mut() {
        *m /= n;
    }
    for m in mean_b.iter_mut() {
        *m /= n;
    }
    let mut balance = 0.0;
    for i in 0..lk {
        balance += (mean_f[i] - u) * (mean_f[i] - u) + (mean_b[i] - u) * (mean_b[i] - u);
    }
    for (d, p) in diffs.iter_mut().zip(batch.iter()) {
        *d -= if p.label { 1.0 } else { 0.0 };
        loss_pairs += *d * *d;
    }
    let loss = pair_weight * loss_pairs / n + alpha * balance;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            context: "pair-wise batch".into(),
        });
    }

    // Per-item code gradients: pair term plus the shared balance term.
    let dcodes: Vec<(Vec<f64>, Vec<f64>)> = forwards
        .iter()
        .enumerate()
        .map(|(idx, (cf, cb))| {
            let scale = pair_weight * 2.0 * diffs[idx] / (l_len as f64 * n);
            let mut df = vec![0.0; lk];
            let mut db = vec![0.0; lk];
            for i in 0..lk {
                df[i] = scale * cb.code.values[i] + alpha * 2.0 * (mean_f[i] - u) / n;
                db[i] = scale * cf.code.values[i] + alpha * 2.0 * (mean_b[i] - u) / n;
            }
            (df, db)
        })
        .collect();

    // Deterministic parallel accumulation: fixed chunking, in-order reduce.
    let chunk_size = batch.len().div_ceil(GRAD_CHUNKS);
    let items: Vec<(usize, &(CodeForward, CodeForward))> = forwards.iter().enumerate().collect();
    let chunk_grads: Vec<Model> = items
        .par_chunks(chunk_size.max(1))
        .map(|chunk| {
            let mut grad = model.zeros_like();
            for (idx, (cf, cb)) in chunk {
                code_backward(
                    &model.fwd,
                    cf,
                    &dcodes[*idx].0,
                    &mut grad.fwd.lstm,
                    &mut grad.fwd.hash,
                );
                code_backward(
                    &model.bwd,
                    cb,
                    &dcodes[*idx].1,
                    &mut grad.bwd.lstm,
                    &mut grad.bwd.hash,
                );
            }
            grad
        })
        .collect();
    let mut grads = model.zeros_like();
    for g in &chunk_grads {
        grads.add_assign(g);
    }
    Ok((loss, grads))
}

/// The pair-wise training stage: per epoch, draw negatives, run balanced
/// minibatches, and record the four mean Hamming distances plus the loss.
#[allow(clippy::too_many_arguments)]
pub fn train_hash(
    model: &mut Model,
    bits: &[Vec<BitStep>],
    train_pos: &[SegmentPair],
    val_pos: &[SegmentPair],
    val_neg: &[SegmentPair],
    negatives: NegativePolicy,
    cfg: &TrainConfig,
    mut progress: Option<&mut dyn FnMut(&EpochMetrics)>,
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    let mut opt = Adam::new(model, cfg.learning_rate, cfg.grad_clip);
    let mut metrics = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = epoch_rng(cfg.seed, epoch);
        let epoch_negs: Vec<SegmentPair> = match &negatives {
            NegativePolicy::Fixed(list) => list.to_vec(),
            NegativePolicy::Resample {
                stats,
                bounds,
                positive_keys,
                exclude,
                threshold,
            } => sample_negatives(
                bits.len(),
                stats,
                bounds,
                positive_keys,
                exclude,
                *threshold,
                train_pos.len(),
                &mut rng,
            )?,
        };
        let loss = run_epoch(
            model,
            &mut opt,
            bits,
            train_pos,
            &epoch_negs,
            cfg.alpha,
            cfg.batch_pairs,
            &mut rng,
        )?;
        let table = compute_codes(model, bits);
        let row = EpochMetrics {
            epoch,
            train_loss: loss,
            ham_pos_train: mean_pair_distance(&table, train_pos),
            ham_neg_train: mean_pair_distance(&table, &epoch_negs),
            ham_pos_val: mean_pair_distance(&table, val_pos),
            ham_neg_val: mean_pair_distance(&table, val_neg),
        };
        if let Some(cb) = progress.as_mut() {
            cb(&row);
        }
        metrics.push(row);
    }
    Ok(metrics)
}

pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub fn save_metrics(metrics: &[EpochMetrics], path: &std::path::Path) -> Result<()> {
    let mut out = String::from("epoch,train_loss,ham_pos_train,ham_neg_train,ham_pos_val,ham_neg_val\n");
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.epoch, m.train_loss, m.ham_pos_train, m.ham_neg_train, m.ham_pos_val, m.ham_neg_val
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_metrics(path: &std::path::Path) -> Result<Vec<EpochMetrics>> {
    let text = std::fs::read_to_string(path).map_err(|_| Error::MissingMetrics(path.to_path_buf()))?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!("bad metrics line '{line}'"),
            });
        }
        rows.push(EpochMetrics {
            epoch: parts[0].parse().unwrap_or(0),
            train_loss: parts[1].parse().unwrap_or(f64::NAN),
            ham_pos_train: parts[2].parse().unwrap_or(f64::NAN),
            ham_neg_train: parts[3].parse().unwrap_or(f64::NAN),
            ham_pos_val: parts[4].parse().unwrap_or(f64::NAN),
            ham_neg_val: parts[5].parse().unwrap_or(f64::NAN),
        });
    }
    if rows.is_empty() {
        return Err(Error::MissingMetrics(path.to_path_buf()));
    }
    Ok(rows)
}

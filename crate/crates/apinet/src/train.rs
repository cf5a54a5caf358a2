//! End-to-end training: episode sampling, pair construction, tape
//! backward, and SGD with momentum, weight decay, cosine-annealed learning
//! rate, and an encoder freeze warmup. Also provides the matched baseline
//! (same encoder/classifier, cross entropy on single samples, no pairing)
//! used for direction-of-effect comparisons.

use crate::autodiff::tensor::Tensor;
use crate::autodiff::{GradMap, Tape};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::eval;
use crate::loss::{tape_pair_loss, LabelPair};
use crate::model::{bind_params, tape_forward_pair, GateMode, ModelDims, ModelParams, MutualStrategy};
use crate::pairing::{construct_pairs, sample_episode, EpisodeSpec, PairRule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;

/// Full training recipe: loss weights, episode shape, optimizer schedule,
/// and strategy selectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub eps: f64,
    pub n_cl: usize,
    pub n_im: usize,
    pub epochs: usize,
    pub freeze_epochs: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub strategy: MutualStrategy,
    pub gate_mode: GateMode,
    pub pair_rule: PairRule,
    pub episodes_per_epoch: usize,
    /// Feature dimension of the encoder output.
    pub d: usize,
    /// Bottleneck width of the learned mutual-vector networks.
    pub d_h: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1.0,
            eps: 0.05,
            n_cl: 8,
            n_im: 4,
            epochs: 60,
            freeze_epochs: 5,
            lr0: 0.003,
            momentum: 0.9,
            weight_decay: 5e-4,
            strategy: MutualStrategy::Mlp,
            gate_mode: GateMode::Pair,
            pair_rule: PairRule::ALL[8], // intra-s+inter-s
            episodes_per_epoch: 20,
            d: 32,
            d_h: 8,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn episode_spec(&self) -> EpisodeSpec {
        EpisodeSpec {
            n_cl: self.n_cl,
            n_im: self.n_im,
            pair_rule: self.pair_rule,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lr0.is_finite() || self.lr0 <= 0.0 {
            return Err(Error::config(format!("learning rate must be finite and positive, got {}", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::config(format!("weight decay must be finite and nonnegative, got {}", self.weight_decay)));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::config(format!("loss coefficient must be finite and nonnegative, got {}", self.lambda)));
        }
        if !self.eps.is_finite() || self.eps < 0.0 {
            return Err(Error::config(format!("margin must be finite and nonnegative, got {}", self.eps)));
        }
        if self.epochs == 0 {
            if self.freeze_epochs != 0 {
                return Err(Error::config("freeze epochs must be 0 when epochs is 0"));
            }
        } else if self.freeze_epochs >= self.epochs {
            return Err(Error::config(format!(
                "freeze epochs ({}) must be smaller than epochs ({})",
                self.freeze_epochs, self.epochs
            )));
        }
        if self.episodes_per_epoch == 0 {
            return Err(Error::config("episodes per epoch must be at least 1"));
        }
        if self.strategy == MutualStrategy::Individual && self.gate_mode == GateMode::Single {
            return Err(Error::config(
                "single gate mode cannot be combined with the individual strategy",
            ));
        }
        self.episode_spec().validate()
    }

    pub fn dims_for(&self, dataset: &Dataset) -> ModelDims {
        ModelDims {
            d_in: dataset.d_in,
            d: self.d,
            d_h: self.d_h,
            n_classes: dataset.n_classes,
        }
    }
}

/// Per-parameter velocity buffers, shaped exactly like the parameters.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub velocity: Vec<Tensor>,
}

impl OptimizerState {
    pub fn zeros_for(params: &ModelParams) -> Self {
        OptimizerState {
            velocity: params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }
}

/// One epoch's summary line.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub epoch: usize,
    pub loss: f64,
    pub l_ce: f64,
    pub l_rk: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub lr: f64,
}

/// Cosine-annealed learning rate: `0.5 * lr0 * (1 + cos(pi * t / total))`,
/// evaluated once per epoch.
pub fn cosine_lr(epoch: usize, total: usize, lr0: f64) -> Result<f64> {
    if total < 1 {
        return Err(Error::config("schedule length must be at least 1 epoch"));
    }
    if epoch > total {
        return Err(Error::contract(format!(
            "epoch {epoch} beyond schedule end {total}"
        )));
    }
    Ok(0.5 * lr0 * (1.0 + (std::f64::consts::PI * epoch as f64 / total as f64).cos()))
}

/// One SGD step: `v <- momentum * v + grad + weight_decay * param`,
/// `param <- param - lr * v`. Parameters whose id is marked frozen are
/// left untouched, velocities included.
pub fn sgd_step(
    params: &mut ModelParams,
    grads: &GradMap,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
    state: &mut OptimizerState,
    frozen: &[bool],
) -> Result<()> {
    let mut tensors = params.tensors_mut();
    if grads.len() != tensors.len() || state.velocity.len() != tensors.len() {
        return Err(Error::contract(format!(
            "parameter/gradient/velocity counts disagree: {} / {} / {}",
            tensors.len(),
            grads.len(),
            state.velocity.len()
        )));
    }
    for (pid, param) in tensors.iter_mut().enumerate() {
        if frozen.get(pid).copied().unwrap_or(false) {
            continue;
        }
        let g = grads.get(pid);
        if g.shape() != param.shape() {
            return Err(Error::contract(format!(
                "gradient shape {:?} does not match parameter {pid} shape {:?}",
                g.shape(),
                param.shape()
            )));
        }
        let v = &mut state.velocity[pid];
        for i in 0..param.numel() {
            let vi = momentum * v.data()[i] + g.data()[i] + weight_decay * param.data()[i];
            v.data_mut()[i] = vi;
            param.data_mut()[i] -= lr * vi;
        }
    }
    Ok(())
}

struct EpisodeBatch {
    inputs: Vec<Tensor>,
    labels: Vec<usize>,
}

fn draw_episode(
    class_index: &[Vec<usize>],
    dataset: &Dataset,
    spec: &EpisodeSpec,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeBatch> {
    let groups = sample_episode(class_index, spec, rng)?;
    let mut inputs = Vec::with_capacity(spec.batch_size());
    let mut labels = Vec::with_capacity(spec.batch_size());
    for group in &groups {
        for &idx in group {
            inputs.push(dataset.samples[idx].input());
            labels.push(dataset.samples[idx].label);
        }
    }
    Ok(EpisodeBatch { inputs, labels })
}

/// Encode every episode input with the current parameters into a
/// `[B x D]` feature matrix for distance-based pair selection. No
/// gradients flow through this computation.
fn episode_features(params: &ModelParams, batch: &EpisodeBatch) -> Result<Tensor> {
    let b = batch.inputs.len();
    let d = params.dims.d;
    let mut data = Vec::with_capacity(b * d);
    for input in &batch.inputs {
        data.extend_from_slice(params.encode(input)?.data());
    }
    Tensor::matrix(b, d, data)
}

struct EpisodeStep {
    grads: GradMap,
    loss: f64,
    l_ce: f64,
    l_rk: f64,
}

/// Mean pair loss and mean gradients over one episode's pairs; one tape
/// per pair.
fn episode_step(params: &ModelParams, cfg: &TrainConfig, batch: &EpisodeBatch, rng: &mut ChaCha8Rng) -> Result<EpisodeStep> {
    let features = episode_features(params, batch)?;
    let pairs = construct_pairs(&features, &batch.labels, &cfg.episode_spec(), rng)?;
    let n = pairs.len() as f64;
    let shapes = params.tensors();
    let mut grads = GradMap::zeros_like(&shapes);
    let (mut loss, mut l_ce, mut l_rk) = (0.0, 0.0, 0.0);
    for pair in &pairs {
        let mut tape = Tape::new();
        let bp = bind_params(&mut tape, params);
        let acts = tape_forward_pair(
            &mut tape,
            &bp,
            &batch.inputs[pair.anchor],
            &batch.inputs[pair.partner],
            cfg.gate_mode,
        )?;
        let labels = LabelPair::new(
            batch.labels[pair.anchor],
            batch.labels[pair.partner],
            params.dims.n_classes,
        )?;
        let nodes = tape_pair_loss(&mut tape, &acts, &labels, cfg.lambda, cfg.eps)?;
        let b = nodes.breakdown(&tape, cfg.lambda)?;
        loss += b.total / n;
        l_ce += b.l_ce / n;
        l_rk += b.l_rk / n;
        let pair_grads = tape.backward(nodes.total, params.n_params())?;
        grads.accumulate(1.0 / n, &pair_grads)?;
    }
    Ok(EpisodeStep { grads, loss, l_ce, l_rk })
}

/// Loss value and full gradient map for one explicit pair of inputs.
/// This is the probe the finite-difference gradient check drives.
pub fn pair_loss_and_grads(
    params: &ModelParams,
    input1: &Tensor,
    input2: &Tensor,
    labels: &LabelPair,
    gate_mode: GateMode,
    lambda: f64,
    eps: f64,
) -> Result<(f64, GradMap)> {
    let mut tape = Tape::new();
    let bp = bind_params(&mut tape, params);
    let acts = tape_forward_pair(&mut tape, &bp, input1, input2, gate_mode)?;
    let nodes = tape_pair_loss(&mut tape, &acts, labels, lambda, eps)?;
    let loss = tape.value(nodes.total).scalar_value()?;
    let grads = tape.backward(nodes.total, params.n_params())?;
    Ok((loss, grads))
}

fn frozen_mask(params: &ModelParams, encoder_frozen: bool, mutual_frozen: bool) -> Vec<bool> {
    let mut mask = vec![false; params.n_params()];
    if encoder_frozen {
        for pid in params.encoder_param_ids() {
            mask[pid] = true;
        }
    }
    if mutual_frozen {
        for pid in params.mutual_param_ids() {
            mask[pid] = true;
        }
    }
    mask
}

/// Train the pairwise model. Deterministic given `(config, dataset)`;
/// returns the final parameters and one metric record per epoch.
pub fn train(cfg: &TrainConfig, dataset: &Dataset) -> Result<(ModelParams, Vec<MetricRecord>)> {
    run_training(cfg, dataset, false)
}

/// Train the matched baseline: identical initialization (same seeded
/// draws, including the unused mutual net), identical episode budget, but
/// plain cross entropy on each sampled input alone — no pairs, no gates,
/// no ranking term. Mutual-net weights are excluded from updates.
pub fn train_baseline(cfg: &TrainConfig, dataset: &Dataset) -> Result<(ModelParams, Vec<MetricRecord>)> {
    run_training(cfg, dataset, true)
}

fn run_training(
    cfg: &TrainConfig,
    dataset: &Dataset,
    baseline: bool,
) -> Result<(ModelParams, Vec<MetricRecord>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(cfg.dims_for(dataset), cfg.strategy, &mut rng)?;
    let mut state = OptimizerState::zeros_for(&params);
    let class_index = dataset.class_index(Split::Train);
    let mut metrics = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.lr0)?;
        let frozen = frozen_mask(&params, epoch < cfg.freeze_epochs, baseline);
        let (mut loss_acc, mut ce_acc, mut rk_acc) = (0.0, 0.0, 0.0);

        for episode in 0..cfg.episodes_per_epoch {
            let batch = draw_episode(&class_index, dataset, &cfg.episode_spec(), &mut rng)?;
            let step = if baseline {
                baseline_step(&params, &batch)?
            } else {
                episode_step(&params, cfg, &batch, &mut rng)?
            };
            if !step.loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "batch loss {} at epoch {epoch}, episode {episode}",
                    step.loss
                )));
            }
            loss_acc += step.loss;
            ce_acc += step.l_ce;
            rk_acc += step.l_rk;
            sgd_step(
                &mut params,
                &step.grads,
                lr,
                cfg.momentum,
                cfg.weight_decay,
                &mut state,
                &frozen,
            )?;
        }

        let n = cfg.episodes_per_epoch as f64;
        metrics.push(MetricRecord {
            epoch,
            loss: loss_acc / n,
            l_ce: ce_acc / n,
            l_rk: rk_acc / n,
            train_acc: eval::evaluate(&params, dataset, Split::Train)?,
            test_acc: eval::evaluate(&params, dataset, Split::Test)?,
            lr,
        });
    }
    Ok((params, metrics))
}

/// Baseline update: mean single-sample cross entropy over the episode,
/// computed on one tape.
fn baseline_step(params: &ModelParams, batch: &EpisodeBatch) -> Result<EpisodeStep> {
    let mut tape = Tape::new();
    let bp = bind_params(&mut tape, params);
    let mut terms = Vec::with_capacity(batch.inputs.len());
    let (cls_w, cls_b) = bp.classifier_nodes();
    for (input, &label) in batch.inputs.iter().zip(&batch.labels) {
        let leaf = tape.leaf(input.clone());
        let x = crate::model::tape_encode(&mut tape, &bp, leaf)?;
        let zw = tape.matvec(cls_w, x)?;
        let z = tape.add(zw, cls_b)?;
        let lse = tape.log_sum_exp(z)?;
        let zc = tape.pick(z, label)?;
        terms.push(tape.sub(lse, zc)?);
    }
    let total = tape.add_n(&terms)?;
    let mean = tape.scale(total, 1.0 / terms.len() as f64);
    let loss = tape.value(mean).scalar_value()?;
    let grads = tape.backward(mean, params.n_params())?;
    Ok(EpisodeStep { grads, loss, l_ce: loss, l_rk: 0.0 })
}

/// Write the per-epoch metrics as CSV with 17-significant-digit floats.
pub fn write_metrics_csv(path: &Path, metrics: &[MetricRecord]) -> Result<()> {
    let mut out = String::from("epoch,loss,l_ce,l_rk,train_acc,test_acc,lr\n");
    for m in metrics {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            m.epoch, m.loss, m.l_ce, m.l_rk, m.train_acc, m.test_acc, m.lr
        ));
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

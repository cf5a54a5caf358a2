//! The pairwise-interaction model: encoder, mutual-vector strategies, gate
//! generation, residual interaction, and the shared linear classifier.
//!
//! Two forward paths exist over the same parameters: the plain path (used
//! for inference, inspection, and tests) and the tape path (used for
//! training). Both call the identical tensor routines in the identical
//! order, so their outputs agree bitwise.

use crate::autodiff::tensor::{self, Tensor};
use crate::autodiff::{NodeId, ParamId, Tape};
use crate::error::{Error, Result};
use rand::{Rng, RngExt};

/// How the mutual vector is produced from a pair of features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutualStrategy {
    Sum,
    Product,
    SubtractSquare,
    WeightAttention,
    Mlp,
    Individual,
}

impl MutualStrategy {
    pub const ALL: [MutualStrategy; 6] = [
        MutualStrategy::Sum,
        MutualStrategy::Product,
        MutualStrategy::SubtractSquare,
        MutualStrategy::WeightAttention,
        MutualStrategy::Mlp,
        MutualStrategy::Individual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MutualStrategy::Sum => "sum",
            MutualStrategy::Product => "product",
            MutualStrategy::SubtractSquare => "subtract-square",
            MutualStrategy::WeightAttention => "weight-attention",
            MutualStrategy::Mlp => "mlp",
            MutualStrategy::Individual => "individual",
        }
    }
}

impl std::str::FromStr for MutualStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(MutualStrategy::Sum),
            "product" => Ok(MutualStrategy::Product),
            "subtract-square" => Ok(MutualStrategy::SubtractSquare),
            "weight-attention" => Ok(MutualStrategy::WeightAttention),
            "mlp" => Ok(MutualStrategy::Mlp),
            "individual" => Ok(MutualStrategy::Individual),
            other => Err(Error::config(format!(
                "unknown mutual strategy '{other}' (expected sum, product, subtract-square, weight-attention, mlp, or individual)"
            ))),
        }
    }
}

impl std::fmt::Display for MutualStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Whether each image gets its own gate or both share one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateMode {
    Pair,
    Single,
}

impl GateMode {
    pub fn name(self) -> &'static str {
        match self {
            GateMode::Pair => "pair",
            GateMode::Single => "single",
        }
    }
}

impl std::str::FromStr for GateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pair" => Ok(GateMode::Pair),
            "single" => Ok(GateMode::Single),
            other => Err(Error::config(format!(
                "unknown gate mode '{other}' (expected pair or single)"
            ))),
        }
    }
}

impl std::fmt::Display for GateMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Model dimensions. `d_h` is the bottleneck width of the small networks
/// used by the mlp / weight-attention / individual strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub d_in: usize,
    pub d: usize,
    pub d_h: usize,
    pub n_classes: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d == 0 || self.d_h == 0 {
            return Err(Error::config(format!(
                "dimensions must be positive: d_in={}, d={}, d_h={}",
                self.d_in, self.d, self.d_h
            )));
        }
        if self.n_classes < 2 {
            return Err(Error::config(format!(
                "classifier needs at least 2 classes, got {}",
                self.n_classes
            )));
        }
        Ok(())
    }
}

/// Two dense layers with a ReLU between: input -> hidden -> output.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl TwoLayerParams {
    fn init<R: Rng>(n_in: usize, n_hidden: usize, n_out: usize, rng: &mut R) -> Self {
        TwoLayerParams {
            w1: init_weight(n_hidden, n_in, rng),
            b1: Tensor::zeros(&[n_hidden]),
            w2: init_weight(n_out, n_hidden, rng),
            b2: Tensor::zeros(&[n_out]),
        }
    }

    fn apply(&self, input: &Tensor) -> Result<Tensor> {
        let h = tensor::add(&tensor::matvec(&self.w1, input)?, &self.b1)?;
        let h = tensor::relu(&h);
        tensor::add(&tensor::matvec(&self.w2, &h)?, &self.b2)
    }

    fn tensors(&self) -> [&Tensor; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

/// Raw-input encoder: FC(d_in -> d) - ReLU - FC(d -> d).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub net: TwoLayerParams,
}

/// Weights behind the mutual-vector strategy. The elementwise strategies
/// carry no weights; the learned strategies carry one small two-layer net.
#[derive(Debug, Clone, PartialEq)]
pub enum MutualParams {
    Sum,
    Product,
    SubtractSquare,
    /// FC(2d -> d_h) - ReLU - FC(d_h -> 2), softmaxed into blend weights.
    WeightAttention(TwoLayerParams),
    /// FC(2d -> d_h) - ReLU - FC(d_h -> d).
    Mlp(TwoLayerParams),
    /// FC(d -> d_h) - ReLU - FC(d_h -> d), applied per image.
    Individual(TwoLayerParams),
}

impl MutualParams {
    pub fn strategy(&self) -> MutualStrategy {
        match self {
            MutualParams::Sum => MutualStrategy::Sum,
            MutualParams::Product => MutualStrategy::Product,
            MutualParams::SubtractSquare => MutualStrategy::SubtractSquare,
            MutualParams::WeightAttention(_) => MutualStrategy::WeightAttention,
            MutualParams::Mlp(_) => MutualStrategy::Mlp,
            MutualParams::Individual(_) => MutualStrategy::Individual,
        }
    }

    fn net(&self) -> Option<&TwoLayerParams> {
        match self {
            MutualParams::Sum | MutualParams::Product | MutualParams::SubtractSquare => None,
            MutualParams::WeightAttention(n) | MutualParams::Mlp(n) | MutualParams::Individual(n) => {
                Some(n)
            }
        }
    }

    fn net_mut(&mut self) -> Option<&mut TwoLayerParams> {
        match self {
            MutualParams::Sum | MutualParams::Product | MutualParams::SubtractSquare => None,
            MutualParams::WeightAttention(n) | MutualParams::Mlp(n) | MutualParams::Individual(n) => {
                Some(n)
            }
        }
    }
}

/// Linear classifier scoring a feature vector into class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub w: Tensor,
    pub b: Tensor,
}

/// Full trainable parameter set.
///
/// The flat parameter order is fixed by declaration: encoder (w1, b1, w2,
/// b2), then mutual-net tensors if the strategy has any (w1, b1, w2, b2),
/// then classifier (w, b). Optimizer state, gradient maps, and the
/// serialized form all use this order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub encoder: EncoderParams,
    pub mutual: MutualParams,
    pub classifier: ClassifierParams,
}

fn init_weight<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / (cols as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::matrix(rows, cols, data).expect("init dimensions are consistent")
}

impl ModelParams {
    /// Seeded initialization. Weights are uniform in
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in))` drawn in declaration order;
    /// biases start at zero and consume no draws.
    pub fn init<R: Rng>(dims: ModelDims, strategy: MutualStrategy, rng: &mut R) -> Result<Self> {
        dims.validate()?;
        let encoder = EncoderParams {
            net: TwoLayerParams::init(dims.d_in, dims.d, dims.d, rng),
        };
        let mutual = match strategy {
            MutualStrategy::Sum => MutualParams::Sum,
            MutualStrategy::Product => MutualParams::Product,
            MutualStrategy::SubtractSquare => MutualParams::SubtractSquare,
            MutualStrategy::WeightAttention => {
                MutualParams::WeightAttention(TwoLayerParams::init(2 * dims.d, dims.d_h, 2, rng))
            }
            MutualStrategy::Mlp => {
                MutualParams::Mlp(TwoLayerParams::init(2 * dims.d, dims.d_h, dims.d, rng))
            }
            MutualStrategy::Individual => {
                MutualParams::Individual(TwoLayerParams::init(dims.d, dims.d_h, dims.d, rng))
            }
        };
        let classifier = ClassifierParams {
            w: init_weight(dims.n_classes, dims.d, rng),
            b: Tensor::zeros(&[dims.n_classes]),
        };
        Ok(ModelParams {
            dims,
            encoder,
            mutual,
            classifier,
        })
    }

    /// All trainable tensors in flat declaration order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.encoder.net.tensors().to_vec();
        if let Some(net) = self.mutual.net() {
            out.extend(net.tensors());
        }
        out.push(&self.classifier.w);
        out.push(&self.classifier.b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.encoder.net.tensors_mut().into_iter().collect();
        if let Some(net) = self.mutual.net_mut() {
            out.extend(net.tensors_mut());
        }
        out.push(&mut self.classifier.w);
        out.push(&mut self.classifier.b);
        out
    }

    pub fn n_params(&self) -> usize {
        match self.mutual.net() {
            Some(_) => 10,
            None => 6,
        }
    }

    /// Clone with every tensor replaced, in the flat parameter order.
    pub fn with_tensors(&self, tensors: &[Tensor]) -> Result<ModelParams> {
        let mut params = self.clone();
        let slots = params.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(Error::contract(format!(
                "expected {} tensors, got {}",
                slots.len(),
                tensors.len()
            )));
        }
        for (pid, (dst, src)) in slots.into_iter().zip(tensors).enumerate() {
            if dst.shape() != src.shape() {
                return Err(Error::contract(format!(
                    "parameter {pid}: shape {:?} cannot replace {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            *dst = src.clone();
        }
        Ok(params)
    }

    /// Parameter ids belonging to the encoder (the freezable set).
    pub fn encoder_param_ids(&self) -> std::ops::Range<ParamId> {
        0..4
    }

    /// Parameter ids belonging to the mutual net (empty for elementwise
    /// strategies).
    pub fn mutual_param_ids(&self) -> std::ops::Range<ParamId> {
        match self.mutual.net() {
            Some(_) => 4..8,
            None => 4..4,
        }
    }

    pub fn classifier_param_ids(&self) -> std::ops::Range<ParamId> {
        let n = self.n_params();
        n - 2..n
    }

    /// Encoder forward: feature vector for one raw input.
    pub fn encode(&self, input: &Tensor) -> Result<Tensor> {
        if input.shape() != [self.dims.d_in] {
            return Err(Error::config(format!(
                "encoder layer 1 expects input of shape [{}], got {:?}",
                self.dims.d_in,
                input.shape()
            )));
        }
        self.encoder.net.apply(input)
    }

    /// Mutual vector for a pair of features. `None` signals the individual
    /// strategy, which has no pair-level mutual vector: gates come from a
    /// per-image map instead (see [`ModelParams::gate_vectors`]).
    pub fn mutual_vector(&self, x1: &Tensor, x2: &Tensor) -> Result<Option<Tensor>> {
        let xm = match &self.mutual {
            MutualParams::Sum => Some(tensor::add(x1, x2)?),
            MutualParams::Product => Some(tensor::hadamard(x1, x2)?),
            MutualParams::SubtractSquare => {
                let d = tensor::sub(x1, x2)?;
                Some(tensor::hadamard(&d, &d)?)
            }
            MutualParams::WeightAttention(net) => {
                let joint = tensor::concat(x1, x2)?;
                let logits = net.apply(&joint)?;
                let w = tensor::softmax(&logits)?;
                let a = tensor::scale(x1, w.data()[0]);
                let b = tensor::scale(x2, w.data()[1]);
                Some(tensor::add(&a, &b)?)
            }
            MutualParams::Mlp(net) => {
                let joint = tensor::concat(x1, x2)?;
                Some(net.apply(&joint)?)
            }
            MutualParams::Individual(_) => None,
        };
        Ok(xm)
    }

    /// Gate vectors for both images.
    ///
    /// Pair mode squashes the channel-wise product of the mutual vector
    /// with each feature; single mode squashes the mutual vector itself and
    /// shares it. The individual strategy ignores the mutual vector and
    /// gates each image through its own small net; combining it with single
    /// mode is rejected (there is no shared signal to squash).
    pub fn gate_vectors(
        &self,
        x_m: Option<&Tensor>,
        x1: &Tensor,
        x2: &Tensor,
        mode: GateMode,
    ) -> Result<(Tensor, Tensor)> {
        match (&self.mutual, mode) {
            (MutualParams::Individual(net), GateMode::Pair) => {
                let g1 = tensor::sigmoid(&net.apply(x1)?);
                let g2 = tensor::sigmoid(&net.apply(x2)?);
                Ok((g1, g2))
            }
            (MutualParams::Individual(_), GateMode::Single) => Err(Error::config(
                "single gate mode cannot be combined with the individual strategy",
            )),
            (_, GateMode::Pair) => {
                let xm = x_m.ok_or_else(|| Error::contract("pair gating requires a mutual vector"))?;
                let g1 = tensor::sigmoid(&tensor::hadamard(xm, x1)?);
                let g2 = tensor::sigmoid(&tensor::hadamard(xm, x2)?);
                Ok((g1, g2))
            }
            (_, GateMode::Single) => {
                let xm = x_m.ok_or_else(|| Error::contract("single gating requires a mutual vector"))?;
                let g = tensor::sigmoid(xm);
                Ok((g.clone(), g))
            }
        }
    }

    /// Residual interaction producing the four attentive features.
    pub fn interact(
        &self,
        x1: &Tensor,
        x2: &Tensor,
        g1: &Tensor,
        g2: &Tensor,
    ) -> Result<(Tensor, Tensor, Tensor, Tensor)> {
        let x1_self = tensor::add(x1, &tensor::hadamard(x1, g1)?)?;
        let x2_self = tensor::add(x2, &tensor::hadamard(x2, g2)?)?;
        let x1_other = tensor::add(x1, &tensor::hadamard(x1, g2)?)?;
        let x2_other = tensor::add(x2, &tensor::hadamard(x2, g1)?)?;
        Ok((x1_self, x2_self, x1_other, x2_other))
    }

    /// Classifier logits for one feature vector.
    pub fn classify_logits(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape() != [self.dims.d] {
            return Err(Error::config(format!(
                "classifier expects feature of shape [{}], got {:?}",
                self.dims.d,
                x.shape()
            )));
        }
        tensor::add(&tensor::matvec(&self.classifier.w, x)?, &self.classifier.b)
    }

    /// Classifier probabilities (softmax of logits).
    pub fn classify(&self, x: &Tensor) -> Result<Tensor> {
        tensor::softmax(&self.classify_logits(x)?)
    }

    /// Full pair forward. In single gate mode only the self views exist;
    /// the other-view fields stay `None`.
    pub fn forward_pair(&self, in1: &Tensor, in2: &Tensor, mode: GateMode) -> Result<PairActivations> {
        let x1 = self.encode(in1)?;
        let x2 = self.encode(in2)?;
        let x_m = self.mutual_vector(&x1, &x2)?;
        let (g1, g2) = self.gate_vectors(x_m.as_ref(), &x1, &x2, mode)?;
        let (x1_self, x2_self, x1_other, x2_other) = self.interact(&x1, &x2, &g1, &g2)?;

        let z1_self = self.classify_logits(&x1_self)?;
        let z2_self = self.classify_logits(&x2_self)?;
        let p1_self = tensor::softmax(&z1_self)?;
        let p2_self = tensor::softmax(&z2_self)?;

        let (views_other, z_other, p_other) = match mode {
            GateMode::Pair => {
                let z1o = self.classify_logits(&x1_other)?;
                let z2o = self.classify_logits(&x2_other)?;
                let p1o = tensor::softmax(&z1o)?;
                let p2o = tensor::softmax(&z2o)?;
                (
                    (Some(x1_other), Some(x2_other)),
                    (Some(z1o), Some(z2o)),
                    (Some(p1o), Some(p2o)),
                )
            }
            GateMode::Single => ((None, None), (None, None), (None, None)),
        };

        Ok(PairActivations {
            x1,
            x2,
            x_m,
            g1,
            g2,
            x1_self,
            x2_self,
            x1_other: views_other.0,
            x2_other: views_other.1,
            z1_self,
            z2_self,
            z1_other: z_other.0,
            z2_other: z_other.1,
            p1_self,
            p2_self,
            p1_other: p_other.0,
            p2_other: p_other.1,
        })
    }

    /// Unloaded inference: encoder and classifier only. Output depends on
    /// nothing but this input and the parameters.
    pub fn predict_single(&self, input: &Tensor) -> Result<Tensor> {
        self.classify(&self.encode(input)?)
    }
}

/// Every intermediate of one pair forward. `x_m` is `None` for the
/// individual strategy; the `*_other` fields are `None` in single gate
/// mode. `z_*` are pre-softmax logits, `p_*` the matching probabilities.
#[derive(Debug, Clone)]
pub struct PairActivations {
    pub x1: Tensor,
    pub x2: Tensor,
    pub x_m: Option<Tensor>,
    pub g1: Tensor,
    pub g2: Tensor,
    pub x1_self: Tensor,
    pub x2_self: Tensor,
    pub x1_other: Option<Tensor>,
    pub x2_other: Option<Tensor>,
    pub z1_self: Tensor,
    pub z2_self: Tensor,
    pub z1_other: Option<Tensor>,
    pub z2_other: Option<Tensor>,
    pub p1_self: Tensor,
    pub p2_self: Tensor,
    pub p1_other: Option<Tensor>,
    pub p2_other: Option<Tensor>,
}

/// Indices of the `k` largest gate values, descending, ties broken by the
/// lower channel index.
pub fn top_k_gate_channels(g: &Tensor, k: usize) -> Result<Vec<usize>> {
    let d = g.numel();
    if k == 0 || k > d {
        return Err(Error::config(format!(
            "top-k count must be in 1..={d}, got {k}"
        )));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        g.data()[b]
            .total_cmp(&g.data()[a])
            .then_with(|| a.cmp(&b))
    });
    order.truncate(k);
    Ok(order)
}

// ---------------------------------------------------------------------------
// Tape (training) path
// ---------------------------------------------------------------------------

/// Node ids of all parameters bound onto one tape, in flat order.
pub struct BoundParams {
    enc: [NodeId; 4],
    mutual: Option<[NodeId; 4]>,
    cls_w: NodeId,
    cls_b: NodeId,
    strategy: MutualStrategy,
}

impl BoundParams {
    /// Classifier weight and bias nodes, for callers composing their own
    /// heads on the shared encoder/classifier (e.g. the no-pair baseline).
    pub fn classifier_nodes(&self) -> (NodeId, NodeId) {
        (self.cls_w, self.cls_b)
    }
}

/// Bind every parameter tensor onto the tape under its flat parameter id.
pub fn bind_params(tape: &mut Tape, params: &ModelParams) -> BoundParams {
    let e = params.encoder.net.tensors();
    let enc = [
        tape.param(e[0].clone(), 0),
        tape.param(e[1].clone(), 1),
        tape.param(e[2].clone(), 2),
        tape.param(e[3].clone(), 3),
    ];
    let mutual = params.mutual.net().map(|net| {
        let t = net.tensors();
        [
            tape.param(t[0].clone(), 4),
            tape.param(t[1].clone(), 5),
            tape.param(t[2].clone(), 6),
            tape.param(t[3].clone(), 7),
        ]
    });
    let base = if mutual.is_some() { 8 } else { 4 };
    let cls_w = tape.param(params.classifier.w.clone(), base);
    let cls_b = tape.param(params.classifier.b.clone(), base + 1);
    BoundParams {
        enc,
        mutual,
        cls_w,
        cls_b,
        strategy: params.mutual.strategy(),
    }
}

fn tape_two_layer(tape: &mut Tape, net: &[NodeId; 4], input: NodeId) -> Result<NodeId> {
    let h = tape.matvec(net[0], input)?;
    let h = tape.add(h, net[1])?;
    let h = tape.relu(h);
    let out = tape.matvec(net[2], h)?;
    tape.add(out, net[3])
}

/// Encoder forward on the tape.
pub fn tape_encode(tape: &mut Tape, bp: &BoundParams, input: NodeId) -> Result<NodeId> {
    tape_two_layer(tape, &bp.enc, input)
}

/// Mutual vector on the tape; `None` for the individual strategy.
pub fn tape_mutual(tape: &mut Tape, bp: &BoundParams, x1: NodeId, x2: NodeId) -> Result<Option<NodeId>> {
    let xm = match bp.strategy {
        MutualStrategy::Sum => Some(tape.add(x1, x2)?),
        MutualStrategy::Product => Some(tape.hadamard(x1, x2)?),
        MutualStrategy::SubtractSquare => {
            let d = tape.sub(x1, x2)?;
            Some(tape.hadamard(d, d)?)
        }
        MutualStrategy::WeightAttention => {
            let net = bp.mutual.as_ref().expect("weight-attention carries a net");
            let joint = tape.concat(x1, x2)?;
            let logits = tape_two_layer(tape, net, joint)?;
            let w = tape.softmax(logits)?;
            let w1 = tape.pick(w, 0)?;
            let w2 = tape.pick(w, 1)?;
            let a = tape.scalar_mul(w1, x1)?;
            let b = tape.scalar_mul(w2, x2)?;
            Some(tape.add(a, b)?)
        }
        MutualStrategy::Mlp => {
            let net = bp.mutual.as_ref().expect("mlp carries a net");
            let joint = tape.concat(x1, x2)?;
            Some(tape_two_layer(tape, net, joint)?)
        }
        MutualStrategy::Individual => None,
    };
    Ok(xm)
}

/// Gate vectors on the tape (mirrors [`ModelParams::gate_vectors`]).
pub fn tape_gates(
    tape: &mut Tape,
    bp: &BoundParams,
    x_m: Option<NodeId>,
    x1: NodeId,
    x2: NodeId,
    mode: GateMode,
) -> Result<(NodeId, NodeId)> {
    match (bp.strategy, mode) {
        (MutualStrategy::Individual, GateMode::Pair) => {
            let net = bp.mutual.as_ref().expect("individual carries a net");
            let h1 = tape_two_layer(tape, net, x1)?;
            let h2 = tape_two_layer(tape, net, x2)?;
            Ok((tape.sigmoid(h1), tape.sigmoid(h2)))
        }
        (MutualStrategy::Individual, GateMode::Single) => Err(Error::config(
            "single gate mode cannot be combined with the individual strategy",
        )),
        (_, GateMode::Pair) => {
            let xm = x_m.ok_or_else(|| Error::contract("pair gating requires a mutual vector"))?;
            let h1 = tape.hadamard(xm, x1)?;
            let h2 = tape.hadamard(xm, x2)?;
            Ok((tape.sigmoid(h1), tape.sigmoid(h2)))
        }
        (_, GateMode::Single) => {
            let xm = x_m.ok_or_else(|| Error::contract("single gating requires a mutual vector"))?;
            let g = tape.sigmoid(xm);
            Ok((g, g))
        }
    }
}

fn tape_classify_logits(tape: &mut Tape, bp: &BoundParams, x: NodeId) -> Result<NodeId> {
    let z = tape.matvec(bp.cls_w, x)?;
    tape.add(z, bp.cls_b)
}

/// Node ids of one pair forward on the tape.
pub struct TapeActivations {
    pub g1: NodeId,
    pub g2: NodeId,
    pub z1_self: NodeId,
    pub z2_self: NodeId,
    pub z1_other: Option<NodeId>,
    pub z2_other: Option<NodeId>,
    pub p1_self: NodeId,
    pub p2_self: NodeId,
    pub p1_other: Option<NodeId>,
    pub p2_other: Option<NodeId>,
}

/// Full pair forward on the tape. Parameters must already be bound.
pub fn tape_forward_pair(
    tape: &mut Tape,
    bp: &BoundParams,
    in1: &Tensor,
    in2: &Tensor,
    mode: GateMode,
) -> Result<TapeActivations> {
    let i1 = tape.leaf(in1.clone());
    let i2 = tape.leaf(in2.clone());
    let x1 = tape_encode(tape, bp, i1)?;
    let x2 = tape_encode(tape, bp, i2)?;
    let x_m = tape_mutual(tape, bp, x1, x2)?;
    let (g1, g2) = tape_gates(tape, bp, x_m, x1, x2, mode)?;

    let h11 = tape.hadamard(x1, g1)?;
    let x1_self = tape.add(x1, h11)?;
    let h22 = tape.hadamard(x2, g2)?;
    let x2_self = tape.add(x2, h22)?;

    let z1_self = tape_classify_logits(tape, bp, x1_self)?;
    let z2_self = tape_classify_logits(tape, bp, x2_self)?;
    let p1_self = tape.softmax(z1_self)?;
    let p2_self = tape.softmax(z2_self)?;

    let (z1_other, z2_other, p1_other, p2_other) = match mode {
        GateMode::Pair => {
            let h12 = tape.hadamard(x1, g2)?;
            let x1_other = tape.add(x1, h12)?;
            let h21 = tape.hadamard(x2, g1)?;
            let x2_other = tape.add(x2, h21)?;
            let z1o = tape_classify_logits(tape, bp, x1_other)?;
            let z2o = tape_classify_logits(tape, bp, x2_other)?;
            let p1o = tape.softmax(z1o)?;
            let p2o = tape.softmax(z2o)?;
            (Some(z1o), Some(z2o), Some(p1o), Some(p2o))
        }
        GateMode::Single => (None, None, None, None),
    };

    Ok(TapeActivations {
        g1,
        g2,
        z1_self,
        z2_self,
        z1_other,
        z2_other,
        p1_self,
        p2_self,
        p1_other,
        p2_other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> ModelDims {
        ModelDims {
            d_in: 4,
            d: 4,
            d_h: 3,
            n_classes: 3,
        }
    }

    fn seeded(strategy: MutualStrategy, seed: u64) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ModelParams::init(dims(), strategy, &mut rng).unwrap()
    }

    #[test]
    fn zero_encoder_gives_zero_feature() {
        let mut p = seeded(MutualStrategy::Sum, 1);
        for t in p.encoder.net.tensors_mut() {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        let x = p.encode(&Tensor::vector(vec![1.0, -2.0, 3.0, 0.5])).unwrap();
        assert_eq!(x, Tensor::zeros(&[4]));
    }

    #[test]
    fn identity_encoder_is_relu() {
        let mut p = seeded(MutualStrategy::Sum, 1);
        let d = 4;
        for t in p.encoder.net.tensors_mut() {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        for i in 0..d {
            p.encoder.net.w1.data_mut()[i * d + i] = 1.0;
            p.encoder.net.w2.data_mut()[i * d + i] = 1.0;
        }
        let input = Tensor::vector(vec![1.0, -2.0, 3.0, -0.5]);
        let x = p.encode(&input).unwrap();
        assert_eq!(x.data(), &[1.0, 0.0, 3.0, 0.0]);
    }

    #[test]
    fn encode_rejects_wrong_input_dim() {
        let p = seeded(MutualStrategy::Sum, 1);
        let err = p.encode(&Tensor::vector(vec![1.0])).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
    }

    #[test]
    fn mutual_elementwise_cases() {
        let x1 = Tensor::vector(vec![1.0, 2.0, 0.0, 0.0]);
        let x2 = Tensor::vector(vec![3.0, 4.0, 0.0, 0.0]);

        let sum = seeded(MutualStrategy::Sum, 1).mutual_vector(&x1, &x2).unwrap().unwrap();
        assert_eq!(sum.data(), &[4.0, 6.0, 0.0, 0.0]);

        let prod = seeded(MutualStrategy::Product, 1).mutual_vector(&x1, &x2).unwrap().unwrap();
        assert_eq!(prod.data(), &[3.0, 8.0, 0.0, 0.0]);

        let ss = seeded(MutualStrategy::SubtractSquare, 1).mutual_vector(&x1, &x2).unwrap().unwrap();
        assert_eq!(ss.data(), &[4.0, 4.0, 0.0, 0.0]);
    }

    #[test]
    fn weight_attention_on_equal_inputs_returns_the_input() {
        let p = seeded(MutualStrategy::WeightAttention, 7);
        let v = Tensor::vector(vec![0.4, -1.3, 2.0, 0.1]);
        let xm = p.mutual_vector(&v, &v).unwrap().unwrap();
        for (a, b) in xm.data().iter().zip(v.data()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn symmetric_strategies_commute_exactly() {
        let x1 = Tensor::vector(vec![0.3, -1.0, 2.5, 0.0]);
        let x2 = Tensor::vector(vec![-0.7, 0.2, 1.1, 4.0]);
        for s in [MutualStrategy::Sum, MutualStrategy::Product, MutualStrategy::SubtractSquare] {
            let p = seeded(s, 3);
            let a = p.mutual_vector(&x1, &x2).unwrap().unwrap();
            let b = p.mutual_vector(&x2, &x1).unwrap().unwrap();
            assert_eq!(a, b, "strategy {s}");
        }
    }

    #[test]
    fn gates_at_zero_product_are_half() {
        let p = seeded(MutualStrategy::Sum, 1);
        let xm = Tensor::zeros(&[4]);
        let x = Tensor::vector(vec![1.0, 2.0, 3.0, 4.0]);
        let (g1, g2) = p.gate_vectors(Some(&xm), &x, &x, GateMode::Pair).unwrap();
        assert_eq!(g1.data(), &[0.5; 4]);
        assert_eq!(g2.data(), &[0.5; 4]);
    }

    #[test]
    fn pair_gate_hand_case() {
        let p = ModelParams::init(
            ModelDims { d_in: 2, d: 2, d_h: 2, n_classes: 2 },
            MutualStrategy::Sum,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let xm = Tensor::vector(vec![1.0, -1.0]);
        let x1 = Tensor::vector(vec![2.0, 2.0]);
        let (g1, _) = p.gate_vectors(Some(&xm), &x1, &x1, GateMode::Pair).unwrap();
        assert!((g1.data()[0] - 0.8807970779778823).abs() < 1e-12);
        assert!((g1.data()[1] - 0.11920292202211755).abs() < 1e-12);
    }

    #[test]
    fn single_gate_with_individual_is_rejected() {
        let p = seeded(MutualStrategy::Individual, 1);
        let x = Tensor::vector(vec![1.0; 4]);
        let err = p.gate_vectors(None, &x, &x, GateMode::Single).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn interact_limit_cases() {
        let p = seeded(MutualStrategy::Sum, 1);
        let x1 = Tensor::vector(vec![1.0, 2.0, 3.0, 4.0]);
        let x2 = Tensor::vector(vec![-1.0, -2.0, -3.0, -4.0]);

        let zeros = Tensor::zeros(&[4]);
        let (a, b, c, d) = p.interact(&x1, &x2, &zeros, &zeros).unwrap();
        assert_eq!(a, x1);
        assert_eq!(b, x2);
        assert_eq!(c, x1);
        assert_eq!(d, x2);

        let ones = Tensor::vector(vec![1.0; 4]);
        let (a, b, _, _) = p.interact(&x1, &x2, &ones, &ones).unwrap();
        assert_eq!(a, tensor::scale(&x1, 2.0));
        assert_eq!(b, tensor::scale(&x2, 2.0));

        let g = Tensor::vector(vec![0.3, 0.6, 0.2, 0.9]);
        let (s1, s2, o1, o2) = p.interact(&x1, &x2, &g, &g).unwrap();
        assert_eq!(s1, o1);
        assert_eq!(s2, o2);
    }

    #[test]
    fn zero_classifier_is_uniform() {
        let mut p = seeded(MutualStrategy::Sum, 1);
        for v in p.classifier.w.data_mut() {
            *v = 0.0;
        }
        let probs = p.classify(&Tensor::vector(vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(probs.data(), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn large_bias_dominates_classifier() {
        let mut p = seeded(MutualStrategy::Sum, 1);
        for v in p.classifier.w.data_mut() {
            *v = 0.0;
        }
        p.classifier.b.data_mut()[0] = 200.0;
        let probs = p.classify(&Tensor::vector(vec![1.0; 4])).unwrap();
        assert!(probs.data()[0] > 1.0 - 1e-12);
    }

    #[test]
    fn forward_pair_identical_inputs_collapse() {
        let p = seeded(MutualStrategy::Sum, 5);
        let input = Tensor::vector(vec![0.2, -0.4, 0.9, 1.5]);
        let acts = p.forward_pair(&input, &input, GateMode::Pair).unwrap();
        assert_eq!(acts.g1, acts.g2);
        assert_eq!(acts.p1_self, acts.p1_other.clone().unwrap());
        for probs in [&acts.p1_self, &acts.p2_self] {
            let total: f64 = probs.data().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_pair_single_mode_has_no_other_views() {
        let p = seeded(MutualStrategy::Sum, 5);
        let a = Tensor::vector(vec![0.2, -0.4, 0.9, 1.5]);
        let b = Tensor::vector(vec![1.0, 0.0, -1.0, 0.3]);
        let acts = p.forward_pair(&a, &b, GateMode::Single).unwrap();
        assert_eq!(acts.g1, acts.g2);
        assert!(acts.x1_other.is_none() && acts.p1_other.is_none() && acts.z2_other.is_none());
    }

    #[test]
    fn gates_stay_strictly_inside_unit_interval() {
        for s in MutualStrategy::ALL {
            let p = seeded(s, 11);
            let a = Tensor::vector(vec![5.0, -3.0, 0.0, 2.0]);
            let b = Tensor::vector(vec![-1.0, 4.0, 2.0, -2.0]);
            let acts = p.forward_pair(&a, &b, GateMode::Pair).unwrap();
            for g in [&acts.g1, &acts.g2] {
                assert!(g.data().iter().all(|&v| v > 0.0 && v < 1.0), "strategy {s}");
            }
        }
    }

    #[test]
    fn residual_exceeds_feature_for_positive_entries() {
        let p = seeded(MutualStrategy::Product, 13);
        let x = Tensor::vector(vec![0.5, 1.0, 2.0, 0.1]);
        let g = Tensor::vector(vec![0.2, 0.9, 0.5, 0.7]);
        let (s1, _, _, _) = p.interact(&x, &x, &g, &g).unwrap();
        for (a, b) in s1.data().iter().zip(x.data()) {
            assert!(a > b);
        }
    }

    #[test]
    fn predict_single_matches_definition_and_ignores_context() {
        let p = seeded(MutualStrategy::Mlp, 21);
        let input = Tensor::vector(vec![0.1, 0.2, 0.3, 0.4]);
        let direct = p.classify(&p.encode(&input).unwrap()).unwrap();
        let alone = p.predict_single(&input).unwrap();
        assert_eq!(direct, alone);

        // Run the same input through pair forwards with different partners;
        // the unloaded prediction must not move.
        for partner in [
            Tensor::vector(vec![9.0, -9.0, 3.0, 0.0]),
            Tensor::vector(vec![0.0, 0.0, 0.0, 0.0]),
        ] {
            let _ = p.forward_pair(&input, &partner, GateMode::Pair).unwrap();
            let again = p.predict_single(&input).unwrap();
            assert_eq!(alone, again);
        }
    }

    #[test]
    fn top_k_cases() {
        let g = Tensor::vector(vec![0.1, 0.9, 0.5]);
        assert_eq!(top_k_gate_channels(&g, 2).unwrap(), vec![1, 2]);

        let equal = Tensor::vector(vec![0.5; 3]);
        assert_eq!(top_k_gate_channels(&equal, 3).unwrap(), vec![0, 1, 2]);

        let g = Tensor::vector(vec![0.3, 0.7, 0.1, 0.5]);
        assert_eq!(top_k_gate_channels(&g, 4).unwrap(), vec![1, 3, 0, 2]);

        assert!(top_k_gate_channels(&g, 0).is_err());
        assert!(top_k_gate_channels(&g, 5).is_err());
    }

    #[test]
    fn init_is_deterministic_and_order_fixed() {
        let a = seeded(MutualStrategy::Mlp, 42);
        let b = seeded(MutualStrategy::Mlp, 42);
        assert_eq!(a, b);
        assert_eq!(a.n_params(), 10);
        assert_eq!(a.tensors().len(), 10);
        assert_eq!(a.encoder_param_ids(), 0..4);
        assert_eq!(a.mutual_param_ids(), 4..8);
        assert_eq!(a.classifier_param_ids(), 8..10);

        let c = seeded(MutualStrategy::Sum, 42);
        assert_eq!(c.n_params(), 6);
        assert_eq!(c.mutual_param_ids(), 4..4);
        assert_eq!(c.classifier_param_ids(), 4..6);
        // Encoder draws happen before mutual draws, so the encoder matches
        // across strategies under the same seed.
        assert_eq!(a.encoder, c.encoder);
    }

    #[test]
    fn biases_start_at_zero() {
        let p = seeded(MutualStrategy::Mlp, 9);
        assert_eq!(p.encoder.net.b1, Tensor::zeros(&[4]));
        assert_eq!(p.encoder.net.b2, Tensor::zeros(&[4]));
        assert_eq!(p.classifier.b, Tensor::zeros(&[3]));
    }

    #[test]
    fn tape_forward_matches_plain_forward_bitwise() {
        for s in MutualStrategy::ALL {
            let p = seeded(s, 31);
            let a = Tensor::vector(vec![0.3, -0.8, 1.2, 0.05]);
            let b = Tensor::vector(vec![-0.6, 0.4, 0.0, 2.0]);
            let plain = p.forward_pair(&a, &b, GateMode::Pair).unwrap();

            let mut tape = Tape::new();
            let bp = bind_params(&mut tape, &p);
            let acts = tape_forward_pair(&mut tape, &bp, &a, &b, GateMode::Pair).unwrap();

            assert_eq!(tape.value(acts.g1), &plain.g1, "strategy {s}");
            assert_eq!(tape.value(acts.p1_self), &plain.p1_self, "strategy {s}");
            assert_eq!(tape.value(acts.p2_self), &plain.p2_self, "strategy {s}");
            assert_eq!(
                tape.value(acts.p1_other.unwrap()),
                plain.p1_other.as_ref().unwrap(),
                "strategy {s}"
            );
            assert_eq!(
                tape.value(acts.z2_other.unwrap()),
                plain.z2_other.as_ref().unwrap(),
                "strategy {s}"
            );
        }
    }

    #[test]
    fn tape_forward_single_mode_matches_plain() {
        for s in [
            MutualStrategy::Sum,
            MutualStrategy::Product,
            MutualStrategy::SubtractSquare,
            MutualStrategy::WeightAttention,
            MutualStrategy::Mlp,
        ] {
            let p = seeded(s, 37);
            let a = Tensor::vector(vec![1.0, 0.5, -0.5, 0.2]);
            let b = Tensor::vector(vec![0.1, -0.1, 0.7, -0.9]);
            let plain = p.forward_pair(&a, &b, GateMode::Single).unwrap();

            let mut tape = Tape::new();
            let bp = bind_params(&mut tape, &p);
            let acts = tape_forward_pair(&mut tape, &bp, &a, &b, GateMode::Single).unwrap();
            assert_eq!(tape.value(acts.g1), &plain.g1);
            assert_eq!(tape.value(acts.p1_self), &plain.p1_self);
            assert!(acts.p1_other.is_none());
        }
    }
}

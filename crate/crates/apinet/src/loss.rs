//! Training objective: cross entropy over the attentive predictions plus a
//! score-ranking hinge, combined as `total = l_ce + lambda * l_rk` and
//! averaged over the pairs of a batch.
//!
//! Cross entropy is always computed from logits through log-sum-exp —
//! never as `log` of a stored probability — so underflowing scores cannot
//! produce `log(0)`. The hinge operates on post-softmax probabilities and
//! uses subgradient 0 at its kink.

use crate::autodiff::tensor::{self, Tensor};
use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::model::{PairActivations, TapeActivations};

/// Ground-truth labels of one pair, stored both as indices and one-hot
/// vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelPair {
    pub c1: usize,
    pub c2: usize,
    n_classes: usize,
}

impl LabelPair {
    pub fn new(c1: usize, c2: usize, n_classes: usize) -> Result<Self> {
        for c in [c1, c2] {
            if c >= n_classes {
                return Err(Error::config(format!(
                    "label index {c} out of range for {n_classes} classes"
                )));
            }
        }
        Ok(LabelPair { c1, c2, n_classes })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// One-hot vector for image `i` (1 or 2).
    pub fn one_hot(&self, i: usize) -> Tensor {
        let c = match i {
            1 => self.c1,
            2 => self.c2,
            _ => panic!("image index must be 1 or 2, got {i}"),
        };
        let mut y = Tensor::zeros(&[self.n_classes]);
        y.data_mut()[c] = 1.0;
        y
    }
}

/// One pair's loss with its diagnostic pieces. `ce_terms` holds the
/// per-view cross-entropy terms in view order (image 1 self, image 1
/// other, image 2 self, image 2 other; the other views are absent in
/// single gate mode); `rk_terms` the two per-image hinge terms.
#[derive(Debug, Clone)]
pub struct PairLossBreakdown {
    pub l_ce: f64,
    pub l_rk: f64,
    pub lambda: f64,
    pub total: f64,
    pub ce_terms: Vec<f64>,
    pub rk_terms: Vec<f64>,
}

fn ce_term(logits: &Tensor, label: usize) -> Result<f64> {
    if label >= logits.numel() {
        return Err(Error::config(format!(
            "label index {label} out of range for {} classes",
            logits.numel()
        )));
    }
    Ok(tensor::log_sum_exp(logits)? - logits.data()[label])
}

/// Cross entropy summed over every populated view: `-sum_i sum_j y_i^T
/// log p_i^j`, evaluated as `lse(z_i^j) - z_i^j[c_i]`.
pub fn cross_entropy(acts: &PairActivations, labels: &LabelPair) -> Result<f64> {
    Ok(ce_terms(acts, labels)?.iter().sum())
}

fn ce_terms(acts: &PairActivations, labels: &LabelPair) -> Result<Vec<f64>> {
    let mut terms = vec![ce_term(&acts.z1_self, labels.c1)?];
    if let Some(z) = &acts.z1_other {
        terms.push(ce_term(z, labels.c1)?);
    }
    terms.push(ce_term(&acts.z2_self, labels.c2)?);
    if let Some(z) = &acts.z2_other {
        terms.push(ce_term(z, labels.c2)?);
    }
    Ok(terms)
}

fn hinge(p_other: &Tensor, p_self: &Tensor, label: usize, eps: f64) -> f64 {
    f64::max(0.0, p_other.data()[label] - p_self.data()[label] + eps)
}

/// Score-ranking hinge: each image's self-view probability of its true
/// class must beat its other-view probability by at least `eps`.
pub fn score_rank(acts: &PairActivations, labels: &LabelPair, eps: f64) -> Result<f64> {
    Ok(rk_terms(acts, labels, eps)?.iter().sum())
}

fn rk_terms(acts: &PairActivations, labels: &LabelPair, eps: f64) -> Result<Vec<f64>> {
    let (Some(p1o), Some(p2o)) = (&acts.p1_other, &acts.p2_other) else {
        return Err(Error::contract(
            "score ranking needs other-view scores; single gate mode must disable it",
        ));
    };
    Ok(vec![
        hinge(p1o, &acts.p1_self, labels.c1, eps),
        hinge(p2o, &acts.p2_self, labels.c2, eps),
    ])
}

/// Combined loss for one pair. In single gate mode the ranking term does
/// not exist and contributes exactly zero.
pub fn pair_loss(
    acts: &PairActivations,
    labels: &LabelPair,
    lambda: f64,
    eps: f64,
) -> Result<PairLossBreakdown> {
    if lambda < 0.0 {
        return Err(Error::config(format!(
            "loss coefficient must be nonnegative, got {lambda}"
        )));
    }
    let ce_terms = ce_terms(acts, labels)?;
    let l_ce: f64 = ce_terms.iter().sum();
    let (rk_terms, l_rk) = if acts.p1_other.is_some() {
        let terms = rk_terms(acts, labels, eps)?;
        let sum = terms.iter().sum();
        (terms, sum)
    } else {
        (Vec::new(), 0.0)
    };
    let total = l_ce + lambda * l_rk;
    Ok(PairLossBreakdown {
        l_ce,
        l_rk,
        lambda,
        total,
        ce_terms,
        rk_terms,
    })
}

/// Mean of the per-pair totals.
pub fn batch_loss(breakdowns: &[PairLossBreakdown]) -> Result<f64> {
    if breakdowns.is_empty() {
        return Err(Error::contract("batch loss over an empty pair list"));
    }
    let sum: f64 = breakdowns.iter().map(|b| b.total).sum();
    Ok(sum / breakdowns.len() as f64)
}

/// Node ids of one pair's loss terms on the tape.
pub struct TapeLoss {
    pub l_ce: NodeId,
    /// Absent in single gate mode.
    pub l_rk: Option<NodeId>,
    pub total: NodeId,
}

impl TapeLoss {
    /// Read the numeric breakdown back off the tape.
    pub fn breakdown(&self, tape: &Tape, lambda: f64) -> Result<PairLossBreakdown> {
        let l_ce = tape.value(self.l_ce).scalar_value()?;
        let l_rk = match self.l_rk {
            Some(id) => tape.value(id).scalar_value()?,
            None => 0.0,
        };
        let total = tape.value(self.total).scalar_value()?;
        Ok(PairLossBreakdown {
            l_ce,
            l_rk,
            lambda,
            total,
            ce_terms: Vec::new(),
            rk_terms: Vec::new(),
        })
    }
}

fn tape_ce_term(tape: &mut Tape, logits: NodeId, label: usize) -> Result<NodeId> {
    let lse = tape.log_sum_exp(logits)?;
    let z_c = tape.pick(logits, label)?;
    tape.sub(lse, z_c)
}

fn tape_hinge(tape: &mut Tape, p_other: NodeId, p_self: NodeId, label: usize, eps: f64) -> Result<NodeId> {
    let po = tape.pick(p_other, label)?;
    let ps = tape.pick(p_self, label)?;
    let diff = tape.sub(po, ps)?;
    let shifted = tape.add_const(diff, eps);
    Ok(tape.relu(shifted))
}

/// Record the combined pair loss on the tape. View order matches the
/// plain-path [`pair_loss`] exactly, so values agree bitwise.
pub fn tape_pair_loss(
    tape: &mut Tape,
    acts: &TapeActivations,
    labels: &LabelPair,
    lambda: f64,
    eps: f64,
) -> Result<TapeLoss> {
    if lambda < 0.0 {
        return Err(Error::config(format!(
            "loss coefficient must be nonnegative, got {lambda}"
        )));
    }
    let mut terms = vec![tape_ce_term(tape, acts.z1_self, labels.c1)?];
    if let Some(z) = acts.z1_other {
        terms.push(tape_ce_term(tape, z, labels.c1)?);
    }
    terms.push(tape_ce_term(tape, acts.z2_self, labels.c2)?);
    if let Some(z) = acts.z2_other {
        terms.push(tape_ce_term(tape, z, labels.c2)?);
    }
    let l_ce = tape.add_n(&terms)?;

    let (l_rk, total) = match (acts.p1_other, acts.p2_other) {
        (Some(p1o), Some(p2o)) => {
            let h1 = tape_hinge(tape, p1o, acts.p1_self, labels.c1, eps)?;
            let h2 = tape_hinge(tape, p2o, acts.p2_self, labels.c2, eps)?;
            let l_rk = tape.add(h1, h2)?;
            let weighted = tape.scale(l_rk, lambda);
            let total = tape.add(l_ce, weighted)?;
            (Some(l_rk), total)
        }
        _ => {
            // lambda * 0 contributes nothing; keep the node count minimal.
            let zero = tape.leaf(Tensor::scalar(0.0));
            let total = tape.add(l_ce, zero)?;
            (None, total)
        }
    };
    Ok(TapeLoss { l_ce, l_rk, total })
}

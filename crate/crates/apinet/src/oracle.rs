//! Independent reference implementation of the full pair loss.
//!
//! Everything here is written as plain nested scalar loops over raw `f64`
//! slices, deliberately sharing no arithmetic code with the tensor
//! library, the model, or the loss module. Agreement between this path
//! and the pipeline is the main correctness oracle for the forward
//! computation.

use crate::error::{Error, Result};
use crate::model::{GateMode, ModelParams, MutualParams, TwoLayerParams};

fn mat_vec(w: &[f64], rows: usize, cols: usize, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows];
    for i in 0..rows {
        let mut acc = 0.0;
        for j in 0..cols {
            acc += w[i * cols + j] * x[j];
        }
        out[i] = acc + b[i];
    }
    out
}

fn two_layer(net: &TwoLayerParams, x: &[f64]) -> Vec<f64> {
    let h_rows = net.w1.shape()[0];
    let h_cols = net.w1.shape()[1];
    let mut h = mat_vec(net.w1.data(), h_rows, h_cols, x, net.b1.data());
    for v in h.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let o_rows = net.w2.shape()[0];
    let o_cols = net.w2.shape()[1];
    mat_vec(net.w2.data(), o_rows, o_cols, &h, net.b2.data())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    for &v in z {
        if v > m {
            m = v;
        }
    }
    let mut out: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
    let total: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= total;
    }
    out
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for &v in z {
        if v > m {
            m = v;
        }
    }
    let mut acc = 0.0;
    for &v in z {
        acc += (v - m).exp();
    }
    m + acc.ln()
}

/// Encoder forward as scalar loops.
pub fn oracle_encode(input: &[f64], params: &ModelParams) -> Result<Vec<f64>> {
    if input.len() != params.dims.d_in {
        return Err(Error::config(format!(
            "oracle expects input of length {}, got {}",
            params.dims.d_in,
            input.len()
        )));
    }
    Ok(two_layer(&params.encoder.net, input))
}

/// Mutual vector as scalar loops; `None` for the individual strategy.
pub fn oracle_mutual(x1: &[f64], x2: &[f64], params: &ModelParams) -> Result<Option<Vec<f64>>> {
    let d = x1.len();
    let xm = match &params.mutual {
        MutualParams::Sum => Some((0..d).map(|i| x1[i] + x2[i]).collect()),
        MutualParams::Product => Some((0..d).map(|i| x1[i] * x2[i]).collect()),
        MutualParams::SubtractSquare => {
            Some((0..d).map(|i| (x1[i] - x2[i]) * (x1[i] - x2[i])).collect())
        }
        MutualParams::WeightAttention(net) => {
            let mut joint = Vec::with_capacity(2 * d);
            joint.extend_from_slice(x1);
            joint.extend_from_slice(x2);
            let w = softmax(&two_layer(net, &joint));
            Some((0..d).map(|i| w[0] * x1[i] + w[1] * x2[i]).collect())
        }
        MutualParams::Mlp(net) => {
            let mut joint = Vec::with_capacity(2 * d);
            joint.extend_from_slice(x1);
            joint.extend_from_slice(x2);
            Some(two_layer(net, &joint))
        }
        MutualParams::Individual(_) => None,
    };
    Ok(xm)
}

/// Classifier probabilities as scalar loops.
pub fn oracle_classify(x: &[f64], params: &ModelParams) -> Result<Vec<f64>> {
    let c = params.dims.n_classes;
    let d = params.dims.d;
    if x.len() != d {
        return Err(Error::config(format!(
            "oracle classifier expects feature of length {d}, got {}",
            x.len()
        )));
    }
    Ok(softmax(&mat_vec(
        params.classifier.w.data(),
        c,
        d,
        x,
        params.classifier.b.data(),
    )))
}

/// Full pair loss (`l_ce + lambda * l_rk`) as scalar loops.
pub fn oracle_pair_loss(
    in1: &[f64],
    in2: &[f64],
    labels: (usize, usize),
    params: &ModelParams,
    mode: GateMode,
    lambda: f64,
    eps: f64,
) -> Result<f64> {
    if lambda < 0.0 {
        return Err(Error::config(format!(
            "loss coefficient must be nonnegative, got {lambda}"
        )));
    }
    let c = params.dims.n_classes;
    if labels.0 >= c || labels.1 >= c {
        return Err(Error::config(format!(
            "labels {:?} out of range for {c} classes",
            labels
        )));
    }
    let d = params.dims.d;
    let x1 = oracle_encode(in1, params)?;
    let x2 = oracle_encode(in2, params)?;
    let xm = oracle_mutual(&x1, &x2, params)?;

    let (g1, g2): (Vec<f64>, Vec<f64>) = match (&params.mutual, mode) {
        (MutualParams::Individual(net), GateMode::Pair) => {
            let h1 = two_layer(net, &x1);
            let h2 = two_layer(net, &x2);
            (
                h1.iter().map(|&v| sigmoid(v)).collect(),
                h2.iter().map(|&v| sigmoid(v)).collect(),
            )
        }
        (MutualParams::Individual(_), GateMode::Single) => {
            return Err(Error::config(
                "single gate mode cannot be combined with the individual strategy",
            ))
        }
        (_, GateMode::Pair) => {
            let xm = xm.as_ref().expect("non-individual strategies have a mutual vector");
            (
                (0..d).map(|i| sigmoid(xm[i] * x1[i])).collect(),
                (0..d).map(|i| sigmoid(xm[i] * x2[i])).collect(),
            )
        }
        (_, GateMode::Single) => {
            let xm = xm.as_ref().expect("non-individual strategies have a mutual vector");
            let g: Vec<f64> = xm.iter().map(|&v| sigmoid(v)).collect();
            (g.clone(), g)
        }
    };

    let x1_self: Vec<f64> = (0..d).map(|i| x1[i] + x1[i] * g1[i]).collect();
    let x2_self: Vec<f64> = (0..d).map(|i| x2[i] + x2[i] * g2[i]).collect();

    let logits = |x: &[f64]| mat_vec(params.classifier.w.data(), c, d, x, params.classifier.b.data());
    let z1s = logits(&x1_self);
    let z2s = logits(&x2_self);

    let ce = |z: &[f64], label: usize| log_sum_exp(z) - z[label];

    match mode {
        GateMode::Pair => {
            let x1_other: Vec<f64> = (0..d).map(|i| x1[i] + x1[i] * g2[i]).collect();
            let x2_other: Vec<f64> = (0..d).map(|i| x2[i] + x2[i] * g1[i]).collect();
            let z1o = logits(&x1_other);
            let z2o = logits(&x2_other);

            let l_ce = ce(&z1s, labels.0) + ce(&z1o, labels.0) + ce(&z2s, labels.1) + ce(&z2o, labels.1);

            let p1s = softmax(&z1s);
            let p1o = softmax(&z1o);
            let p2s = softmax(&z2s);
            let p2o = softmax(&z2o);
            let h1 = f64::max(0.0, p1o[labels.0] - p1s[labels.0] + eps);
            let h2 = f64::max(0.0, p2o[labels.1] - p2s[labels.1] + eps);
            Ok(l_ce + lambda * (h1 + h2))
        }
        GateMode::Single => Ok(ce(&z1s, labels.0) + ce(&z2s, labels.1)),
    }
}

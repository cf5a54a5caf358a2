//! Cross-check the tensor pipeline against the scalar-loop oracle.
//!
//! The oracle recomputes the entire pair loss — encoder, mutual vector,
//! gates, interaction, classifier, cross entropy, ranking hinge — with
//! plain nested loops over f64 slices, sharing no code with the tensor or
//! tape layers. Agreement to 1e-10 across strategies and gate modes is
//! the strongest evidence the pipeline computes what it claims.
//!
//!     cargo run --example oracle_agreement

use apinet::loss::{pair_loss, LabelPair};
use apinet::model::{GateMode, ModelDims, ModelParams, MutualStrategy};
use apinet::oracle::oracle_pair_loss;
use apinet::Tensor;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> apinet::Result<()> {
    let dims = ModelDims { d_in: 7, d: 9, d_h: 4, n_classes: 6 };
    let (lambda, eps) = (0.75, 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;

    for strategy in MutualStrategy::ALL {
        let modes: &[GateMode] = if strategy == MutualStrategy::Individual {
            &[GateMode::Pair]
        } else {
            &[GateMode::Pair, GateMode::Single]
        };
        for &mode in modes {
            let params = ModelParams::init(dims, strategy, &mut rng)?;
            let raw1: Vec<f64> = (0..dims.d_in).map(|_| rng.random_range(-1.0..1.0)).collect();
            let raw2: Vec<f64> = (0..dims.d_in).map(|_| rng.random_range(-1.0..1.0)).collect();
            let labels = LabelPair::new(2, 5, dims.n_classes)?;

            let acts = params.forward_pair(
                &Tensor::vector(raw1.clone()),
                &Tensor::vector(raw2.clone()),
                mode,
            )?;
            let pipeline = pair_loss(&acts, &labels, lambda, eps)?.total;
            let oracle = oracle_pair_loss(&raw1, &raw2, (2, 5), &params, mode, lambda, eps)?;

            let diff = (pipeline - oracle).abs();
            worst = worst.max(diff);
            println!(
                "{:>16} / {:<6} pipeline {pipeline:.12}  oracle {oracle:.12}  |diff| {diff:.3e}",
                strategy.name(),
                mode.name()
            );
            assert!(diff < 1e-10, "oracle disagreement");
        }
    }
    println!("\nworst absolute disagreement: {worst:.3e} (tolerance 1e-10)");
    Ok(())
}

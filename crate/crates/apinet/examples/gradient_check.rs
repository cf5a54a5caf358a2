//! Verify reverse-mode gradients of the full pair loss against central
//! finite differences, for each mutual strategy.
//!
//!     cargo run --example gradient_check

use apinet::autodiff::grad_check;
use apinet::loss::LabelPair;
use apinet::model::{GateMode, ModelDims, ModelParams, MutualStrategy};
use apinet::train::pair_loss_and_grads;
use apinet::Tensor;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> apinet::Result<()> {
    let dims = ModelDims { d_in: 6, d: 8, d_h: 4, n_classes: 5 };
    let (lambda, eps) = (1.0, 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(1729);

    for strategy in MutualStrategy::ALL {
        // The individual strategy produces per-image gates, so it has no
        // single-gate variant.
        let modes: &[GateMode] = if strategy == MutualStrategy::Individual {
            &[GateMode::Pair]
        } else {
            &[GateMode::Pair, GateMode::Single]
        };
        for &mode in modes {
            let template = ModelParams::init(dims, strategy, &mut rng)?;
            let input1 =
                Tensor::vector((0..dims.d_in).map(|_| rng.random_range(-1.0..1.0)).collect());
            let input2 =
                Tensor::vector((0..dims.d_in).map(|_| rng.random_range(-1.0..1.0)).collect());
            let labels = LabelPair::new(0, 3, dims.n_classes)?;

            let base: Vec<Tensor> = template.tensors().into_iter().cloned().collect();
            let report = grad_check(
                &base,
                |tensors| {
                    let probe = template.with_tensors(tensors)?;
                    pair_loss_and_grads(&probe, &input1, &input2, &labels, mode, lambda, eps)
                },
                1e-5,
            )?;
            println!(
                "{:>16} / {:<6} {}",
                strategy.name(),
                mode.name(),
                report
            );
            assert!(report.max_rel_err < 1e-4, "gradient mismatch: {report}");
        }
    }
    println!("\nall configurations pass at tolerance 1e-4");
    Ok(())
}

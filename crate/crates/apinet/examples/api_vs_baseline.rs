//! Direction-of-effect experiment: the pairwise-trained model against a
//! matched baseline (identical encoder/classifier and budget, plain
//! cross entropy on single samples, no pairing).
//!
//!     cargo run --release --example api_vs_baseline

use apinet::data::{generate, Split, SynthSpec};
use apinet::eval::{evaluate, median};
use apinet::train::{train, train_baseline, TrainConfig};

fn main() -> apinet::Result<()> {
    let dataset = generate(&SynthSpec::default())?;
    let seeds = [1u64, 2, 3, 4, 5];

    let mut api = Vec::new();
    let mut base = Vec::new();
    println!("seed   pairwise   baseline");
    for &seed in &seeds {
        let cfg = TrainConfig { seed, ..TrainConfig::default() };
        let (p_api, _) = train(&cfg, &dataset)?;
        let (p_base, _) = train_baseline(&cfg, &dataset)?;
        let a = evaluate(&p_api, &dataset, Split::Test)?;
        let b = evaluate(&p_base, &dataset, Split::Test)?;
        println!("{seed:>4} {a:>10.3} {b:>10.3}");
        api.push(a);
        base.push(b);
    }

    println!(
        "\nmedian test accuracy: pairwise {:.3}, baseline {:.3} (chance {:.3})",
        median(&api),
        median(&base),
        1.0 / dataset.n_classes as f64
    );
    Ok(())
}

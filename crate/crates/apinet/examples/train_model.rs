//! Train the pairwise model end to end on synthetic data and watch the
//! loss decompose into its cross-entropy and score-ranking parts.
//!
//!     cargo run --release --example train_model

use apinet::data::{generate, SynthSpec};
use apinet::train::{train, TrainConfig};

fn main() -> apinet::Result<()> {
    let data_spec = SynthSpec {
        n_super: 4,
        n_sub: 2,
        d_in: 12,
        train_per_class: 12,
        test_per_class: 12,
        ..SynthSpec::default()
    };
    let dataset = generate(&data_spec)?;

    let cfg = TrainConfig {
        n_cl: 4,
        n_im: 3,
        epochs: 30,
        freeze_epochs: 2,
        episodes_per_epoch: 10,
        // This 8-class problem is far smaller than the default setting,
        // so it tolerates a hotter schedule.
        lr0: 0.01,
        d: 16,
        d_h: 6,
        ..TrainConfig::default()
    };
    println!(
        "training: {} classes, strategy {}, gates {}, rule {}",
        dataset.n_classes, cfg.strategy, cfg.gate_mode, cfg.pair_rule
    );
    println!("epoch    loss     l_ce     l_rk   train    test      lr");

    let (_, metrics) = train(&cfg, &dataset)?;
    for m in &metrics {
        println!(
            "{:>5} {:>7.4} {:>8.4} {:>8.4} {:>7.3} {:>7.3} {:>7.4}",
            m.epoch, m.loss, m.l_ce, m.l_rk, m.train_acc, m.test_acc, m.lr
        );
    }

    let last = metrics.last().expect("epochs > 0");
    println!(
        "\nfinal: train {:.3}, test {:.3} (chance {:.3})",
        last.train_acc,
        last.test_acc,
        1.0 / dataset.n_classes as f64
    );
    Ok(())
}

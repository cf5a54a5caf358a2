//! After training, the pairwise machinery unloads: single inputs pass
//! through encoder + classifier alone. This example verifies that and
//! then re-attaches the machinery to inspect which gate channels a pair
//! of confusable samples attends to.
//!
//!     cargo run --release --example unload_and_inspect

use apinet::data::{generate, Split, SynthSpec};
use apinet::model::{top_k_gate_channels, GateMode};
use apinet::train::{train, TrainConfig};

fn main() -> apinet::Result<()> {
    let dataset = generate(&SynthSpec {
        n_super: 3,
        n_sub: 2,
        d_in: 10,
        train_per_class: 10,
        test_per_class: 6,
        ..SynthSpec::default()
    })?;
    let cfg = TrainConfig {
        n_cl: 3,
        n_im: 3,
        epochs: 12,
        freeze_epochs: 2,
        episodes_per_epoch: 8,
        d: 12,
        d_h: 4,
        ..TrainConfig::default()
    };
    let (params, _) = train(&cfg, &dataset)?;

    // Unloaded inference: no mutual vector, no gates. predict_single is
    // literally classify(encode(x)) — same calls, bitwise-identical result.
    let test_ids = dataset.split_indices(Split::Test);
    println!("unloaded predictions on the first few test samples:");
    for &id in test_ids.iter().take(5) {
        let sample = &dataset.samples[id];
        let probs = params.predict_single(&sample.input())?;
        let composed = params.classify(&params.encode(&sample.input())?)?;
        assert_eq!(probs, composed, "unloading is exact, not approximate");
        let (pred, p) = probs
            .data()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        println!("  sample {id}: label {}, predicted {pred} (p = {p:.3})", sample.label);
    }

    // Re-attach the pair machinery for inspection: gate a pair of samples
    // from sibling subclasses and show the strongest channels.
    let (a, b) = (test_ids[0], test_ids[1]);
    let acts = params.forward_pair(
        &dataset.samples[a].input(),
        &dataset.samples[b].input(),
        GateMode::Pair,
    )?;
    let k = 3;
    println!("\npair ({a}, {b}): labels {} / {}", dataset.samples[a].label, dataset.samples[b].label);
    println!("  g1 top-{k} channels: {:?}", top_k_gate_channels(&acts.g1, k)?);
    println!("  g2 top-{k} channels: {:?}", top_k_gate_channels(&acts.g2, k)?);
    println!("\nshared channels mark features the pair contests; disjoint ones");
    println!("mark features that separate it.");
    Ok(())
}

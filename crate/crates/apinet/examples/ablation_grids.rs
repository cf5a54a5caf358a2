//! Run one ablation grid end to end and print its CSV report.
//!
//! The full harness has four grids (mutual strategy, gate/loss, pair
//! rule, episode size); this example runs the gate/loss grid, the
//! smallest one, on a reduced budget.
//!
//!     cargo run --release --example ablation_grids

use apinet::data::{generate, SynthSpec};
use apinet::eval::{gate_and_loss_grid, run_ablation, write_ablation_csv};
use apinet::train::TrainConfig;

fn main() -> apinet::Result<()> {
    let dataset = generate(&SynthSpec {
        n_super: 4,
        n_sub: 2,
        d_in: 10,
        train_per_class: 8,
        test_per_class: 6,
        ..SynthSpec::default()
    })?;
    let base = TrainConfig {
        n_cl: 4,
        n_im: 2,
        epochs: 8,
        freeze_epochs: 1,
        episodes_per_epoch: 6,
        d: 12,
        d_h: 4,
        ..TrainConfig::default()
    };

    let grid = gate_and_loss_grid(&base);
    let seeds = [1, 2, 3];
    println!("running {} cells x {} seeds...", grid.cells.len(), seeds.len());
    let cells = run_ablation(&grid, &dataset, &seeds);

    let out = std::env::temp_dir().join("apinet-gate-and-loss.csv");
    write_ablation_csv(&out, &grid, &cells)?;
    println!("wrote {}\n", out.display());
    print!("{}", std::fs::read_to_string(&out)?);

    println!("\naccuracy orderings between rows are reported, never asserted:");
    println!("at this scale they are directional evidence, not guarantees.");
    Ok(())
}

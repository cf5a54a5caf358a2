//! Unloaded-path evaluation and the ablation harness.
//!
//! Evaluation always goes through `predict_single` — the pairwise
//! machinery plays no part at test time. The ablation harness trains one
//! model per (cell, seed) over four experiment grids (mutual-vector
//! strategy, gate/loss variants, pair rules, episode sizes) and reports
//! per-seed accuracies plus medians as CSV. Accuracy orderings between
//! cells are reported, never asserted.

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::model::{GateMode, ModelParams, MutualStrategy};
use crate::pairing::PairRule;
use crate::train::{train, TrainConfig};
use std::io::Write;
use std::path::Path;

/// Fraction of the split classified correctly by the unloaded path.
/// Argmax ties resolve to the lowest class index.
pub fn evaluate(params: &ModelParams, dataset: &Dataset, split: Split) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for sample in dataset.samples.iter().filter(|s| s.split == split) {
        let probs = params.predict_single(&sample.input())?;
        let mut best = 0usize;
        for (c, &p) in probs.data().iter().enumerate() {
            if p > probs.data()[best] {
                best = c;
            }
        }
        hits += (best == sample.label) as usize;
        total += 1;
    }
    if total == 0 {
        return Err(Error::contract("evaluation over an empty split"));
    }
    Ok(hits as f64 / total as f64)
}

/// One grid cell: a label, the axis it varies, and the full config to run.
#[derive(Debug, Clone)]
pub struct GridCell {
    pub axis: String,
    pub value: String,
    pub config: TrainConfig,
}

/// A named experiment grid; cells run in order.
#[derive(Debug, Clone)]
pub struct Grid {
    pub name: String,
    pub cells: Vec<GridCell>,
    /// Free-text observations written as `#` comment lines into the CSV
    /// (reference orderings from the source experiments, caveats).
    pub notes: Vec<String>,
}

/// Results of one cell across seeds. A failed run leaves `error` set and
/// no accuracies.
#[derive(Debug, Clone)]
pub struct AblationCell {
    pub table: String,
    pub axis: String,
    pub value: String,
    pub seeds: Vec<u64>,
    pub accs: Vec<f64>,
    pub median: f64,
    pub error: Option<String>,
}

/// Order-statistic median: middle element of the sorted values (mean of
/// the central two for even counts).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mutual-vector strategy grid (six rows, elementwise through learned,
/// weakest-to-strongest reference ordering). All rows use pair gating.
pub fn mutual_vector_grid(base: &TrainConfig) -> Grid {
    let rows = [
        MutualStrategy::Individual,
        MutualStrategy::SubtractSquare,
        MutualStrategy::Sum,
        MutualStrategy::Product,
        MutualStrategy::WeightAttention,
        MutualStrategy::Mlp,
    ];
    Grid {
        name: "mutual_vector".into(),
        cells: rows
            .iter()
            .map(|&strategy| GridCell {
                axis: "mutual".into(),
                value: strategy.name().into(),
                config: TrainConfig { strategy, gate_mode: GateMode::Pair, ..*base },
            })
            .collect(),
        notes: vec![
            "reference ordering (not asserted): learned mutual maps outperform elementwise ones".into(),
        ],
    }
}

/// Gate-mode rows plus loss-composition rows (two of each).
pub fn gate_and_loss_grid(base: &TrainConfig) -> Grid {
    let mut cells = Vec::new();
    for mode in [GateMode::Single, GateMode::Pair] {
        cells.push(GridCell {
            axis: "gate".into(),
            value: mode.name().into(),
            config: TrainConfig { gate_mode: mode, ..*base },
        });
    }
    for (value, lambda) in [("l_ce", 0.0), ("l_ce+l_rk", base.lambda.max(1.0))] {
        cells.push(GridCell {
            axis: "loss".into(),
            value: value.into(),
            config: TrainConfig { lambda, gate_mode: GateMode::Pair, ..*base },
        });
    }
    Grid {
        name: "gate_and_loss".into(),
        cells,
        notes: vec![
            "reference ordering (not asserted): pair gates and the ranking term each help".into(),
        ],
    }
}

/// All nine pair-construction rules, random first.
pub fn pair_rule_grid(base: &TrainConfig) -> Grid {
    Grid {
        name: "pair_rule".into(),
        cells: PairRule::ALL
            .iter()
            .map(|&rule| GridCell {
                axis: "rule".into(),
                value: rule.name(),
                config: TrainConfig { pair_rule: rule, ..*base },
            })
            .collect(),
        notes: vec![
            "reference ordering (not asserted): intra-s+inter-s beats random".into(),
        ],
    }
}

/// Episode-size grid: 3x3 over classes-per-episode and images-per-class.
pub fn episode_size_grid(base: &TrainConfig) -> Grid {
    let mut cells = Vec::new();
    for &n_cl in &[4usize, 6, 8] {
        for &n_im in &[2usize, 3, 4] {
            cells.push(GridCell {
                axis: "episode".into(),
                // Semicolon, not comma: the value sits in a CSV field.
                value: format!("n_cl={n_cl};n_im={n_im}"),
                config: TrainConfig { n_cl, n_im, ..*base },
            });
        }
    }
    Grid {
        name: "episode_size".into(),
        cells,
        notes: vec!["reference trend (not asserted): larger episodes help up to budget".into()],
    }
}

/// Train and evaluate every cell across the seeds. Failures are captured
/// per cell; later cells still run.
pub fn run_ablation(grid: &Grid, dataset: &Dataset, seeds: &[u64]) -> Vec<AblationCell> {
    grid.cells
        .iter()
        .map(|cell| {
            let mut accs = Vec::with_capacity(seeds.len());
            let mut error = None;
            for &seed in seeds {
                let cfg = TrainConfig { seed, ..cell.config };
                match train(&cfg, dataset).and_then(|(params, _)| evaluate(&params, dataset, Split::Test)) {
                    Ok(acc) => accs.push(acc),
                    Err(e) => {
                        error = Some(e.to_string());
                        accs.clear();
                        break;
                    }
                }
            }
            let median = if error.is_none() { median(&accs) } else { f64::NAN };
            AblationCell {
                table: grid.name.clone(),
                axis: cell.axis.clone(),
                value: cell.value.clone(),
                seeds: seeds.to_vec(),
                accs,
                median,
                error,
            }
        })
        .collect()
}

/// Write one grid's results: `#` note lines, a header, one row per
/// (cell, seed), and one `median` summary row per cell.
pub fn write_ablation_csv(path: &Path, grid: &Grid, cells: &[AblationCell]) -> Result<()> {
    let mut out = String::new();
    for note in &grid.notes {
        out.push_str(&format!("# {note}\n"));
    }
    out.push_str("table,axis,value,seed,test_acc\n");
    for cell in cells {
        if let Some(err) = &cell.error {
            out.push_str(&format!(
                "{},{},{},error,\"{}\"\n",
                cell.table,
                cell.axis,
                cell.value,
                err.replace('"', "'")
            ));
            continue;
        }
        for (&seed, &acc) in cell.seeds.iter().zip(&cell.accs) {
            out.push_str(&format!(
                "{},{},{},{},{:.16e}\n",
                cell.table, cell.axis, cell.value, seed, acc
            ));
        }
        out.push_str(&format!(
            "{},{},{},median,{:.16e}\n",
            cell.table, cell.axis, cell.value, cell.median
        ));
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

//! The operations behind the command-line interface, exposed as plain
//! functions so they can be driven from code and tests. Each command
//! writes human-readable progress to `log`; anything machine-readable
//! goes to files (or, for `eval`, a single bare number).

use crate::autodiff::{grad_check, GradCheckReport, Tensor};
use crate::config::{effective_config, load_config, RunConfig};
use crate::data::{generate, read_dataset, write_dataset, Split};
use crate::error::{Error, Result};
use crate::eval::{
    episode_size_grid, evaluate, gate_and_loss_grid, mutual_vector_grid, pair_rule_grid,
    run_ablation, write_ablation_csv, Grid,
};
use crate::loss::LabelPair;
use crate::model::{top_k_gate_channels, GateMode, ModelParams};
use crate::params_io::{load_params, save_params};
use crate::train::{pair_loss_and_grads, train, write_metrics_csv};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;

/// Relative-error threshold the gradient check must beat.
pub const GRADCHECK_TOL: f64 = 1e-4;
/// Central-difference step for the gradient check.
pub const GRADCHECK_STEP: f64 = 1e-5;

fn load_run_config(path: Option<&Path>) -> Result<RunConfig> {
    let cfg = match path {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Generate a synthetic dataset from the config's data section and write
/// it to `out`.
pub fn cmd_gen_data(config: Option<&Path>, out: &Path, log: &mut dyn Write) -> Result<()> {
    let cfg = load_run_config(config)?;
    let dataset = generate(&cfg.data)?;
    write_dataset(out, &dataset)?;
    writeln!(
        log,
        "wrote {}: {} classes x ({} train + {} test) samples, {} features",
        out.display(),
        dataset.n_classes,
        cfg.data.train_per_class,
        cfg.data.test_per_class,
        dataset.d_in
    )?;
    Ok(())
}

/// Train on a dataset file. Writes `model.params`, `metrics.csv`, and the
/// effective config (`run.cfg`) into `out_dir`.
pub fn cmd_train(
    config: Option<&Path>,
    data_path: &Path,
    out_dir: &Path,
    log: &mut dyn Write,
) -> Result<()> {
    let cfg = load_run_config(config)?;
    let dataset = read_dataset(data_path)?;
    let (params, metrics) = train(&cfg.train, &dataset)?;

    std::fs::create_dir_all(out_dir)?;
    save_params(&out_dir.join("model.params"), &params)?;
    write_metrics_csv(&out_dir.join("metrics.csv"), &metrics)?;
    std::fs::write(out_dir.join("run.cfg"), effective_config(&cfg))?;

    let final_acc = evaluate(&params, &dataset, Split::Test)?;
    writeln!(
        log,
        "trained {} epochs on {}; test accuracy {:.4}; outputs in {}",
        metrics.len(),
        data_path.display(),
        final_acc,
        out_dir.display()
    )?;
    Ok(())
}

/// Evaluate saved parameters on a dataset's test split. Prints exactly
/// one line: the accuracy in full precision.
pub fn cmd_eval(params_path: &Path, data_path: &Path, log: &mut dyn Write) -> Result<()> {
    let params = load_params(params_path)?;
    let dataset = read_dataset(data_path)?;
    let acc = evaluate(&params, &dataset, Split::Test)?;
    writeln!(log, "{acc:.16e}")?;
    Ok(())
}

/// Run all four ablation grids, one CSV per grid in `out_dir`.
pub fn cmd_ablate(
    config: Option<&Path>,
    data_path: &Path,
    out_dir: &Path,
    seeds: &[u64],
    log: &mut dyn Write,
) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::config("ablation needs at least one seed"));
    }
    let cfg = load_run_config(config)?;
    let dataset = read_dataset(data_path)?;
    std::fs::create_dir_all(out_dir)?;

    let grids: Vec<Grid> = vec![
        mutual_vector_grid(&cfg.train),
        gate_and_loss_grid(&cfg.train),
        pair_rule_grid(&cfg.train),
        episode_size_grid(&cfg.train),
    ];
    for grid in &grids {
        let cells = run_ablation(grid, &dataset, seeds);
        let path = out_dir.join(format!("{}.csv", grid.name));
        write_ablation_csv(&path, grid, &cells)?;
        let failures = cells.iter().filter(|c| c.error.is_some()).count();
        writeln!(
            log,
            "{}: {} cells x {} seeds -> {}{}",
            grid.name,
            cells.len(),
            seeds.len(),
            path.display(),
            if failures > 0 { format!(" ({failures} cells failed)") } else { String::new() }
        )?;
    }
    Ok(())
}

/// Outcome of the gradient-check command; `passed` decides the exit code.
#[derive(Debug, Clone)]
pub struct GradCheckOutcome {
    pub report: GradCheckReport,
    pub passed: bool,
}

/// Check reverse-mode gradients of the full pair loss against central
/// differences, on a freshly initialized model and random inputs drawn
/// from the config's seed.
pub fn cmd_gradcheck(config: Option<&Path>, log: &mut dyn Write) -> Result<GradCheckOutcome> {
    let cfg = load_run_config(config)?;
    let report = gradcheck_probe(&cfg)?;
    let passed = report.max_rel_err < GRADCHECK_TOL;
    writeln!(log, "{:.16e}", report.max_rel_err)?;
    writeln!(log, "{report}")?;
    writeln!(log, "{}", if passed { "PASS" } else { "FAIL" })?;
    Ok(GradCheckOutcome { report, passed })
}

fn gradcheck_probe(cfg: &RunConfig) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let dims = crate::model::ModelDims {
        d_in: cfg.data.d_in,
        d: cfg.train.d,
        d_h: cfg.train.d_h,
        n_classes: cfg.data.n_classes(),
    };
    let template = ModelParams::init(dims, cfg.train.strategy, &mut rng)?;
    let draw = |rng: &mut ChaCha8Rng| {
        Tensor::vector((0..dims.d_in).map(|_| rng.random_range(-1.0..1.0)).collect())
    };
    let input1 = draw(&mut rng);
    let input2 = draw(&mut rng);
    let labels = LabelPair::new(0, 1, dims.n_classes)?;

    let base: Vec<Tensor> = template.tensors().into_iter().cloned().collect();
    grad_check(
        &base,
        |tensors| {
            let probe = template.with_tensors(tensors)?;
            pair_loss_and_grads(
                &probe,
                &input1,
                &input2,
                &labels,
                cfg.train.gate_mode,
                cfg.train.lambda,
                cfg.train.eps,
            )
        },
        GRADCHECK_STEP,
    )
}

/// Forward consecutive sample pairs and print the strongest gate channels
/// for each side — which feature channels the pair attends to.
pub fn cmd_inspect_gates(
    params_path: &Path,
    data_path: &Path,
    sample_ids: &[usize],
    top_k: usize,
    log: &mut dyn Write,
) -> Result<()> {
    let params = load_params(params_path)?;
    let dataset = read_dataset(data_path)?;
    if sample_ids.is_empty() || !sample_ids.len().is_multiple_of(2) {
        return Err(Error::config(format!(
            "sample ids pair up consecutively; need a positive even count, got {}",
            sample_ids.len()
        )));
    }
    for &id in sample_ids {
        if id >= dataset.samples.len() {
            return Err(Error::config(format!(
                "sample id {id} out of range (dataset has {} samples)",
                dataset.samples.len()
            )));
        }
    }
    if params.dims.d_in != dataset.d_in {
        return Err(Error::config(format!(
            "params expect {} input features, dataset has {}",
            params.dims.d_in, dataset.d_in
        )));
    }

    for pair in sample_ids.chunks(2) {
        let (a, b) = (&dataset.samples[pair[0]], &dataset.samples[pair[1]]);
        let acts = params.forward_pair(&a.input(), &b.input(), GateMode::Pair)?;
        let channels1 = top_k_gate_channels(&acts.g1, top_k)?;
        let channels2 = top_k_gate_channels(&acts.g2, top_k)?;
        writeln!(log, "pair ({}, {}): labels {} / {}", pair[0], pair[1], a.label, b.label)?;
        writeln!(log, "  g1 top-{top_k} channels: {}", join(&channels1))?;
        writeln!(log, "  g2 top-{top_k} channels: {}", join(&channels2))?;
    }
    Ok(())
}

fn join(indices: &[usize]) -> String {
    indices.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
}

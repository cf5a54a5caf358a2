//! Flat `key = value` run configuration.
//!
//! One file drives data generation and training. `#` starts a comment,
//! blank lines are skipped, every key is optional (defaults apply), and
//! unknown or duplicate keys are rejected with their line number. The
//! serialized effective config parses back to the identical config.

use crate::data::SynthSpec;
use crate::error::{Error, Result};
use crate::train::TrainConfig;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

/// Everything a run needs: the synthetic-data recipe plus the training
/// recipe. Defaults are the desk-scale reference setting.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunConfig {
    pub data: SynthSpec,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()
    }
}

fn bad_line(line: usize, message: impl Into<String>) -> Error {
    Error::ConfigFile { line, message: message.into() }
}

fn parse_value<T>(line: usize, key: &str, raw: &str) -> Result<T>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    raw.parse()
        .map_err(|e| bad_line(line, format!("key '{key}': cannot parse '{raw}': {e}")))
}

/// Parse config text. Missing keys fall back to [`RunConfig::default`].
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen = HashSet::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(bad_line(line, format!("expected 'key = value', got '{content}'")));
        };
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return Err(bad_line(line, format!("key '{key}' has an empty value")));
        }
        if !seen.insert(key.to_string()) {
            return Err(bad_line(line, format!("duplicate key '{key}'")));
        }
        match key {
            "n_super" => cfg.data.n_super = parse_value(line, key, value)?,
            "n_sub" => cfg.data.n_sub = parse_value(line, key, value)?,
            "d_in" => cfg.data.d_in = parse_value(line, key, value)?,
            "train_per_class" => cfg.data.train_per_class = parse_value(line, key, value)?,
            "test_per_class" => cfg.data.test_per_class = parse_value(line, key, value)?,
            "super_scale" => cfg.data.super_scale = parse_value(line, key, value)?,
            "sub_scale" => cfg.data.sub_scale = parse_value(line, key, value)?,
            "noise_sigma" => cfg.data.noise_sigma = parse_value(line, key, value)?,
            "data_seed" => cfg.data.seed = parse_value(line, key, value)?,
            "lambda" => cfg.train.lambda = parse_value(line, key, value)?,
            "eps" => cfg.train.eps = parse_value(line, key, value)?,
            "n_cl" => cfg.train.n_cl = parse_value(line, key, value)?,
            "n_im" => cfg.train.n_im = parse_value(line, key, value)?,
            "epochs" => cfg.train.epochs = parse_value(line, key, value)?,
            "freeze_epochs" => cfg.train.freeze_epochs = parse_value(line, key, value)?,
            "lr0" => cfg.train.lr0 = parse_value(line, key, value)?,
            "momentum" => cfg.train.momentum = parse_value(line, key, value)?,
            "weight_decay" => cfg.train.weight_decay = parse_value(line, key, value)?,
            "strategy" => cfg.train.strategy = parse_value(line, key, value)?,
            "gate_mode" => cfg.train.gate_mode = parse_value(line, key, value)?,
            "pair_rule" => cfg.train.pair_rule = parse_value(line, key, value)?,
            "episodes_per_epoch" => cfg.train.episodes_per_epoch = parse_value(line, key, value)?,
            "d" => cfg.train.d = parse_value(line, key, value)?,
            "d_h" => cfg.train.d_h = parse_value(line, key, value)?,
            "seed" => cfg.train.seed = parse_value(line, key, value)?,
            other => {
                return Err(bad_line(line, format!("unknown key '{other}'")));
            }
        }
    }
    Ok(cfg)
}

/// Read and parse a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Serialize every setting with its effective value. Feeding the result
/// back through [`parse_config`] reproduces the config exactly, so a run
/// can always be rerun from the file it wrote.
pub fn effective_config(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# synthetic data");
    let _ = writeln!(s, "n_super = {}", cfg.data.n_super);
    let _ = writeln!(s, "n_sub = {}", cfg.data.n_sub);
    let _ = writeln!(s, "d_in = {}", cfg.data.d_in);
    let _ = writeln!(s, "train_per_class = {}", cfg.data.train_per_class);
    let _ = writeln!(s, "test_per_class = {}", cfg.data.test_per_class);
    let _ = writeln!(s, "super_scale = {}", cfg.data.super_scale);
    let _ = writeln!(s, "sub_scale = {}", cfg.data.sub_scale);
    let _ = writeln!(s, "noise_sigma = {}", cfg.data.noise_sigma);
    let _ = writeln!(s, "data_seed = {}", cfg.data.seed);
    let _ = writeln!(s, "\n# model and training");
    let _ = writeln!(s, "strategy = {}", cfg.train.strategy);
    let _ = writeln!(s, "gate_mode = {}", cfg.train.gate_mode);
    let _ = writeln!(s, "pair_rule = {}", cfg.train.pair_rule);
    let _ = writeln!(s, "d = {}", cfg.train.d);
    let _ = writeln!(s, "d_h = {}", cfg.train.d_h);
    let _ = writeln!(s, "lambda = {}", cfg.train.lambda);
    let _ = writeln!(s, "eps = {}", cfg.train.eps);
    let _ = writeln!(s, "n_cl = {}", cfg.train.n_cl);
    let _ = writeln!(s, "n_im = {}", cfg.train.n_im);
    let _ = writeln!(s, "epochs = {}", cfg.train.epochs);
    let _ = writeln!(s, "freeze_epochs = {}", cfg.train.freeze_epochs);
    let _ = writeln!(s, "episodes_per_epoch = {}", cfg.train.episodes_per_epoch);
    let _ = writeln!(s, "lr0 = {}", cfg.train.lr0);
    let _ = writeln!(s, "momentum = {}", cfg.train.momentum);
    let _ = writeln!(s, "weight_decay = {}", cfg.train.weight_decay);
    let _ = writeln!(s, "seed = {}", cfg.train.seed);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GateMode, MutualStrategy};
    use crate::pairing::PairRule;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn comments_blanks_and_spacing_are_tolerated() {
        let text = "
            # a full-line comment
            lambda = 2.5
            n_cl=4          # trailing comment
              strategy   =   sum
        ";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.train.lambda, 2.5);
        assert_eq!(cfg.train.n_cl, 4);
        assert_eq!(cfg.train.strategy, MutualStrategy::Sum);
        // Untouched keys keep their defaults.
        assert_eq!(cfg.train.epochs, RunConfig::default().train.epochs);
    }

    #[test]
    fn every_key_parses() {
        let text = "
            n_super = 4\n n_sub = 2\n d_in = 10\n train_per_class = 8
            test_per_class = 6\n super_scale = 2.0\n sub_scale = 0.3
            noise_sigma = 0.2\n data_seed = 77
            lambda = 0.5\n eps = 0.1\n n_cl = 3\n n_im = 2\n epochs = 7
            freeze_epochs = 2\n lr0 = 0.01\n momentum = 0.8
            weight_decay = 0.001\n strategy = weight-attention
            gate_mode = single\n pair_rule = random
            episodes_per_epoch = 5\n d = 16\n d_h = 4\n seed = 9
        ";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.data.n_super, 4);
        assert_eq!(cfg.data.seed, 77);
        assert_eq!(cfg.train.gate_mode, GateMode::Single);
        assert_eq!(cfg.train.pair_rule, PairRule::Random);
        assert_eq!(cfg.train.seed, 9);
        cfg.validate().unwrap();
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("lambda = 1\nbogus_key = 3\n", 2, "unknown key"),
            ("\n\nn_cl\n", 3, "expected 'key = value'"),
            ("epochs = soon\n", 1, "cannot parse"),
            ("seed = 1\nseed = 2\n", 2, "duplicate"),
            ("lr0 =\n", 1, "empty value"),
            ("strategy = cbp\n", 1, "unknown mutual strategy"),
        ];
        for (text, want_line, want_msg) in cases {
            let err = parse_config(text).unwrap_err();
            match &err {
                Error::ConfigFile { line, message } => {
                    assert_eq!(*line, want_line, "{text:?}");
                    assert!(message.contains(want_msg), "{text:?}: {message}");
                }
                other => panic!("{text:?}: expected a config-file error, got {other}"),
            }
        }
    }

    #[test]
    fn effective_config_round_trips_exactly() {
        let mut cfg = RunConfig::default();
        cfg.data.noise_sigma = 0.17;
        cfg.data.seed = 123;
        cfg.train.lambda = 0.25;
        cfg.train.weight_decay = 5e-4;
        cfg.train.strategy = MutualStrategy::Individual;
        cfg.train.pair_rule = PairRule::ALL[5];
        let text = effective_config(&cfg);
        let reparsed = parse_config(&text).unwrap();
        assert_eq!(reparsed, cfg);

        // And the round trip is a fixed point of serialization.
        assert_eq!(effective_config(&reparsed), text);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        let cfg = RunConfig::default();
        std::fs::write(&path, effective_config(&cfg)).unwrap();
        assert_eq!(load_config(&path).unwrap(), cfg);
    }
}

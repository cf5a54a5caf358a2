//! Binary model-parameter files.
//!
//! Layout: 7-byte magic `APIPM1\n`, then little-endian u32 fields —
//! version, mutual-strategy index, d_in, d, d_h, n_classes, tensor count —
//! followed by each tensor in the flat parameter order (u32 rank, u32
//! dims, f64-LE values). Save/load round-trips are bit-exact.

use crate::autodiff::tensor::Tensor;
use crate::data::ByteReader;
use crate::error::{Error, Result};
use crate::model::{
    ClassifierParams, EncoderParams, ModelDims, ModelParams, MutualParams, MutualStrategy,
    TwoLayerParams,
};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8] = b"APIPM1\n";
const VERSION: u32 = 1;

fn expected_shapes(dims: ModelDims, strategy: MutualStrategy) -> Vec<(&'static str, Vec<usize>)> {
    let ModelDims { d_in, d, d_h, n_classes } = dims;
    let mut shapes = vec![
        ("encoder.w1", vec![d, d_in]),
        ("encoder.b1", vec![d]),
        ("encoder.w2", vec![d, d]),
        ("encoder.b2", vec![d]),
    ];
    let mutual_net = match strategy {
        MutualStrategy::Sum | MutualStrategy::Product | MutualStrategy::SubtractSquare => None,
        MutualStrategy::WeightAttention => Some((2 * d, 2)),
        MutualStrategy::Mlp => Some((2 * d, d)),
        MutualStrategy::Individual => Some((d, d)),
    };
    if let Some((n_in, n_out)) = mutual_net {
        shapes.push(("mutual.w1", vec![d_h, n_in]));
        shapes.push(("mutual.b1", vec![d_h]));
        shapes.push(("mutual.w2", vec![n_out, d_h]));
        shapes.push(("mutual.b2", vec![n_out]));
    }
    shapes.push(("classifier.w", vec![n_classes, d]));
    shapes.push(("classifier.b", vec![n_classes]));
    shapes
}

/// Serialize the full parameter set. The byte stream is a pure function
/// of the parameters, so identical params produce identical files.
pub fn save_params(path: &Path, params: &ModelParams) -> Result<()> {
    let strategy_idx = MutualStrategy::ALL
        .iter()
        .position(|&s| s == params.mutual.strategy())
        .expect("every strategy is listed") as u32;
    let tensors = params.tensors();

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for field in [
        VERSION,
        strategy_idx,
        params.dims.d_in as u32,
        params.dims.d as u32,
        params.dims.d_h as u32,
        params.dims.n_classes as u32,
        tensors.len() as u32,
    ] {
        out.extend_from_slice(&field.to_le_bytes());
    }
    for t in tensors {
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &dim in t.shape() {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Load a parameter file, validating the header and every tensor shape
/// against what the declared dimensions and strategy require.
pub fn load_params(path: &Path) -> Result<ModelParams> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut r = ByteReader { buf, pos: 0 };

    let magic = r.take(MAGIC.len(), "magic")?;
    if magic != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad magic {:?}, expected {:?}", magic, MAGIC),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Parse {
            offset: MAGIC.len(),
            message: format!("unsupported version {version}, expected {VERSION}"),
        });
    }
    let strategy_idx = r.u32("strategy tag")? as usize;
    let strategy = *MutualStrategy::ALL.get(strategy_idx).ok_or(Error::Parse {
        offset: MAGIC.len() + 4,
        message: format!("strategy tag {strategy_idx} out of range"),
    })?;
    let dims = ModelDims {
        d_in: r.u32("d_in")? as usize,
        d: r.u32("d")? as usize,
        d_h: r.u32("d_h")? as usize,
        n_classes: r.u32("class count")? as usize,
    };
    dims.validate().map_err(|e| Error::Parse {
        offset: MAGIC.len() + 8,
        message: format!("invalid dimensions in header: {e}"),
    })?;

    let expected = expected_shapes(dims, strategy);
    let n_tensors = r.u32("tensor count")? as usize;
    if n_tensors != expected.len() {
        return Err(Error::Parse {
            offset: r.pos - 4,
            message: format!(
                "{} strategy requires {} tensors, file declares {n_tensors}",
                strategy.name(),
                expected.len()
            ),
        });
    }

    let mut tensors = Vec::with_capacity(n_tensors);
    for (name, want) in &expected {
        let tensor_offset = r.pos;
        let rank = r.u32("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("tensor dimension")? as usize);
        }
        if &shape != want {
            return Err(Error::Parse {
                offset: tensor_offset,
                message: format!("{name}: shape {shape:?} does not match required {want:?}"),
            });
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(r.f64("tensor value")?);
        }
        tensors.push(Tensor::new(shape, data)?);
    }
    if r.pos != r.buf.len() {
        return Err(Error::Parse {
            offset: r.pos,
            message: format!("{} trailing bytes after the declared tensors", r.buf.len() - r.pos),
        });
    }

    let mut it = tensors.into_iter();
    let mut next_net = || TwoLayerParams {
        w1: it.next().expect("count checked"),
        b1: it.next().expect("count checked"),
        w2: it.next().expect("count checked"),
        b2: it.next().expect("count checked"),
    };
    let encoder = EncoderParams { net: next_net() };
    let mutual = match strategy {
        MutualStrategy::Sum => MutualParams::Sum,
        MutualStrategy::Product => MutualParams::Product,
        MutualStrategy::SubtractSquare => MutualParams::SubtractSquare,
        MutualStrategy::WeightAttention => MutualParams::WeightAttention(next_net()),
        MutualStrategy::Mlp => MutualParams::Mlp(next_net()),
        MutualStrategy::Individual => MutualParams::Individual(next_net()),
    };
    let classifier = ClassifierParams {
        w: it.next().expect("count checked"),
        b: it.next().expect("count checked"),
    };
    Ok(ModelParams { dims, encoder, mutual, classifier })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_params(strategy: MutualStrategy, seed: u64) -> ModelParams {
        let dims = ModelDims { d_in: 5, d: 4, d_h: 3, n_classes: 6 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ModelParams::init(dims, strategy, &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact_for_every_strategy() {
        let dir = tempfile::tempdir().unwrap();
        for (i, &strategy) in MutualStrategy::ALL.iter().enumerate() {
            let params = sample_params(strategy, 40 + i as u64);
            let path = dir.path().join(format!("{}.params", strategy.name()));
            save_params(&path, &params).unwrap();
            let loaded = load_params(&path).unwrap();
            assert_eq!(loaded, params, "{strategy:?}");
        }
    }

    #[test]
    fn saving_twice_produces_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let params = sample_params(MutualStrategy::Mlp, 7);
        let p1 = dir.path().join("a.params");
        let p2 = dir.path().join("b.params");
        save_params(&p1, &params).unwrap();
        save_params(&p2, &params).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn special_values_survive_the_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut params = sample_params(MutualStrategy::Sum, 9);
        params.classifier.b.data_mut()[0] = -0.0;
        params.classifier.b.data_mut()[1] = f64::MIN_POSITIVE / 2.0; // subnormal
        let path = dir.path().join("edge.params");
        save_params(&path, &params).unwrap();
        let loaded = load_params(&path).unwrap();
        for (a, b) in loaded.tensors().iter().zip(params.tensors()) {
            assert_eq!(
                a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn corrupt_files_are_rejected_with_offsets() {
        let dir = tempfile::tempdir().unwrap();
        let params = sample_params(MutualStrategy::Mlp, 11);
        let path = dir.path().join("good.params");
        save_params(&path, &params).unwrap();
        let good = std::fs::read(&path).unwrap();

        type Corruption = Box<dyn Fn(&mut Vec<u8>)>;
        let cases: Vec<(&str, Corruption)> = vec![
            ("bad magic", Box::new(|b: &mut Vec<u8>| b[0] = b'X')),
            ("bad version", Box::new(|b: &mut Vec<u8>| b[7] = 99)),
            ("bad strategy tag", Box::new(|b: &mut Vec<u8>| b[11] = 200)),
            ("truncated", Box::new(|b: &mut Vec<u8>| b.truncate(b.len() - 3))),
            ("trailing bytes", Box::new(|b: &mut Vec<u8>| b.push(0))),
            // Flip one dimension of the first tensor's shape.
            ("wrong shape", Box::new(|b: &mut Vec<u8>| b[MAGIC.len() + 28 + 4] ^= 1)),
        ];
        for (what, mutate) in cases {
            let mut bytes = good.clone();
            mutate(&mut bytes);
            let bad = dir.path().join("bad.params");
            std::fs::write(&bad, &bytes).unwrap();
            let err = load_params(&bad).unwrap_err();
            assert!(matches!(err, Error::Parse { .. }), "{what}: {err}");
        }
    }

    #[test]
    fn strategy_and_tensor_count_must_agree() {
        // Rewrite an elementwise-strategy file to claim the mlp strategy;
        // the tensor count no longer matches and the load must fail.
        let dir = tempfile::tempdir().unwrap();
        let params = sample_params(MutualStrategy::Sum, 13);
        let path = dir.path().join("sum.params");
        save_params(&path, &params).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mlp_idx = MutualStrategy::ALL.iter().position(|&s| s == MutualStrategy::Mlp).unwrap();
        bytes[MAGIC.len() + 4..MAGIC.len() + 8].copy_from_slice(&(mlp_idx as u32).to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        let err = load_params(&path).unwrap_err();
        assert!(err.to_string().contains("tensors"), "{err}");
    }
}

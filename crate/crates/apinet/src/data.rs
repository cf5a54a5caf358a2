//! Synthetic fine-grained dataset: a two-level Gaussian mixture in which
//! the subclasses of one superclass sit close together (mutual hard
//! negatives) while superclasses are well separated — plus a bit-exact
//! binary file format.
//!
//! Features are quantized through `f32` at generation time, matching the
//! file precision, so write/read round-trips are bitwise lossless. All
//! computation upgrades to `f64`.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

/// Generation recipe. `C = n_super * n_sub` classes; class `s * n_sub + k`
/// is subclass `k` of superclass `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n_super: usize,
    pub n_sub: usize,
    pub d_in: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Scale of the isotropic Gaussian drawing superclass centroids.
    pub super_scale: f64,
    /// Exact norm of each subclass offset from its superclass centroid.
    pub sub_scale: f64,
    /// Per-coordinate sample noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_super: 8,
            n_sub: 3,
            d_in: 16,
            train_per_class: 20,
            test_per_class: 20,
            super_scale: 1.0,
            sub_scale: 0.1,
            noise_sigma: 0.1,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn n_classes(&self) -> usize {
        self.n_super * self.n_sub
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_super < 1 || self.n_sub < 1 || self.d_in < 1 {
            return Err(Error::config(format!(
                "counts must be at least 1: n_super={}, n_sub={}, d_in={}",
                self.n_super, self.n_sub, self.d_in
            )));
        }
        if self.train_per_class < 1 || self.test_per_class < 1 {
            return Err(Error::config(format!(
                "per-class sample counts must be at least 1: train={}, test={}",
                self.train_per_class, self.test_per_class
            )));
        }
        let scales_ok = self.sub_scale.is_finite()
            && self.super_scale.is_finite()
            && self.sub_scale > 0.0
            && self.super_scale > self.sub_scale;
        if !scales_ok {
            return Err(Error::config(format!(
                "fine-grained geometry needs 0 < sub_scale < super_scale, got sub={} super={}",
                self.sub_scale, self.super_scale
            )));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::config(format!(
                "noise sigma must be finite and nonnegative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// One input vector with its label and split tag. Features are stored in
/// file precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub label: usize,
    pub split: Split,
    pub features: Vec<f32>,
}

impl Sample {
    /// The input upgraded to the computation precision.
    pub fn input(&self) -> Tensor {
        Tensor::vector(self.features.iter().map(|&v| v as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Generated(SynthSpec),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub d_in: usize,
    pub n_classes: usize,
    pub samples: Vec<Sample>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn count(&self, split: Split) -> usize {
        self.samples.iter().filter(|s| s.split == split).count()
    }

    /// Sample indices of one split grouped by class label.
    pub fn class_index(&self, split: Split) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.n_classes];
        for (i, s) in self.samples.iter().enumerate() {
            if s.split == split {
                groups[s.label].push(i);
            }
        }
        groups
    }

    /// Indices of one split in sample order.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| self.samples[i].split == split).collect()
    }

    fn validate_coverage(&self) -> Result<()> {
        for (c, groups) in [
            (Split::Train, self.class_index(Split::Train)),
            (Split::Test, self.class_index(Split::Test)),
        ] {
            if let Some(missing) = groups.iter().position(|g| g.is_empty()) {
                return Err(Error::contract(format!(
                    "class {missing} has no {} samples",
                    match c {
                        Split::Train => "train",
                        Split::Test => "test",
                    }
                )));
            }
        }
        Ok(())
    }
}

fn quantize(v: f64) -> f32 {
    v as f32
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

/// Generate a dataset. Fully determined by the spec (including its seed):
/// superclass centroids are `super_scale * N(0, I)`, each subclass centroid
/// adds a random offset of norm exactly `sub_scale`, and each sample adds
/// `noise_sigma * N(0, I)`, quantized to file precision coordinatewise.
pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.d_in;

    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(spec.n_classes());
    for _ in 0..spec.n_super {
        let super_c: Vec<f64> = (0..d)
            .map(|_| spec.super_scale * normal(&mut rng))
            .collect();
        for _ in 0..spec.n_sub {
            // Direction drawn fresh until it has usable magnitude, then
            // scaled to the exact offset norm.
            let offset = loop {
                let raw: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
                let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm >= 1e-12 {
                    break raw.into_iter().map(|v| v * spec.sub_scale / norm).collect::<Vec<f64>>();
                }
            };
            centroids.push(super_c.iter().zip(&offset).map(|(a, b)| a + b).collect());
        }
    }

    let mut samples = Vec::with_capacity(spec.n_classes() * (spec.train_per_class + spec.test_per_class));
    for (label, centroid) in centroids.iter().enumerate() {
        for (split, count) in [(Split::Train, spec.train_per_class), (Split::Test, spec.test_per_class)] {
            for _ in 0..count {
                let features: Vec<f32> = centroid
                    .iter()
                    .map(|&c| quantize(c + spec.noise_sigma * normal(&mut rng)))
                    .collect();
                samples.push(Sample { label, split, features });
            }
        }
    }

    Ok(Dataset {
        d_in: d,
        n_classes: spec.n_classes(),
        samples,
        provenance: Provenance::Generated(*spec),
    })
}

/// Per-class mean of training features, used by the nearest-centroid
/// baseline that certifies the dataset is confusable but learnable.
pub fn train_centroids(ds: &Dataset) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; ds.d_in]; ds.n_classes];
    let mut counts = vec![0usize; ds.n_classes];
    for s in &ds.samples {
        if s.split == Split::Train {
            for (acc, &v) in sums[s.label].iter_mut().zip(&s.features) {
                *acc += v as f64;
            }
            counts[s.label] += 1;
        }
    }
    for (sum, n) in sums.iter_mut().zip(&counts) {
        if *n > 0 {
            for v in sum.iter_mut() {
                *v /= *n as f64;
            }
        }
    }
    sums
}

/// Fraction of test samples whose nearest train centroid matches their
/// label; ties go to the lower class index.
pub fn nearest_centroid_accuracy(ds: &Dataset) -> f64 {
    let centroids = train_centroids(ds);
    let mut hits = 0usize;
    let mut total = 0usize;
    for s in &ds.samples {
        if s.split != Split::Test {
            continue;
        }
        let mut best = (0usize, f64::INFINITY);
        for (c, centroid) in centroids.iter().enumerate() {
            let d2: f64 = centroid
                .iter()
                .zip(&s.features)
                .map(|(&m, &v)| (v as f64 - m) * (v as f64 - m))
                .sum();
            if d2 < best.1 {
                best = (c, d2);
            }
        }
        hits += (best.0 == s.label) as usize;
        total += 1;
    }
    hits as f64 / total as f64
}

// ---------------------------------------------------------------------------
// Binary file format
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 7] = b"APIDS1\n";
const VERSION: u32 = 1;

/// Write the dataset in the versioned little-endian format: magic,
/// version, d_in, class count, split totals, then one record per sample
/// (label u32, split u8, features f32 each).
pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let mut out = Vec::with_capacity(32 + ds.samples.len() * (5 + 4 * ds.d_in));
    out.extend_from_slice(MAGIC);
    for v in [
        VERSION,
        ds.d_in as u32,
        ds.n_classes as u32,
        ds.count(Split::Train) as u32,
        ds.count(Split::Test) as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for s in &ds.samples {
        out.extend_from_slice(&(s.label as u32).to_le_bytes());
        out.push(match s.split {
            Split::Train => 0,
            Split::Test => 1,
        });
        for &f in &s.features {
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

pub(crate) struct ByteReader {
    pub(crate) buf: Vec<u8>,
    pub(crate) pos: usize,
}

impl ByteReader {
    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Parse {
                offset: self.buf.len(),
                message: format!("file truncated while reading {what} ({n} bytes needed at offset {})", self.pos),
            });
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn f32(&mut self, what: &str) -> Result<f32> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]))
    }
}

/// Read a dataset file, validating structure, counts, label range, and
/// class coverage. The round-trip through [`write_dataset`] is bit-exact.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
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
    let d_in = r.u32("input dimension")? as usize;
    let n_classes = r.u32("class count")? as usize;
    let n_train = r.u32("train count")? as usize;
    let n_test = r.u32("test count")? as usize;
    if d_in == 0 || n_classes == 0 {
        return Err(Error::Parse {
            offset: MAGIC.len() + 4,
            message: format!("degenerate header: d_in={d_in}, classes={n_classes}"),
        });
    }

    let mut samples = Vec::with_capacity(n_train + n_test);
    let mut seen = [0usize; 2];
    for i in 0..n_train + n_test {
        let record_offset = r.pos;
        let label = r.u32("record label")? as usize;
        if label >= n_classes {
            return Err(Error::Parse {
                offset: record_offset,
                message: format!("record {i}: label {label} out of range for {n_classes} classes"),
            });
        }
        let split = match r.u8("record split tag")? {
            0 => Split::Train,
            1 => Split::Test,
            other => {
                return Err(Error::Parse {
                    offset: record_offset + 4,
                    message: format!("record {i}: invalid split tag {other}"),
                })
            }
        };
        seen[(split == Split::Test) as usize] += 1;
        let mut features = Vec::with_capacity(d_in);
        for _ in 0..d_in {
            features.push(r.f32("record feature")?);
        }
        samples.push(Sample { label, split, features });
    }
    if r.pos != r.buf.len() {
        return Err(Error::Parse {
            offset: r.pos,
            message: format!("{} trailing bytes after the declared records", r.buf.len() - r.pos),
        });
    }
    if seen[0] != n_train || seen[1] != n_test {
        return Err(Error::Parse {
            offset: r.pos,
            message: format!(
                "split counts disagree with header: found {} train / {} test, header says {n_train} / {n_test}",
                seen[0], seen[1]
            ),
        });
    }

    let ds = Dataset {
        d_in,
        n_classes,
        samples,
        provenance: Provenance::File(path.to_path_buf()),
    };
    ds.validate_coverage().map_err(|e| Error::Parse {
        offset: r.pos,
        message: format!("class coverage check failed: {e}"),
    })?;
    Ok(ds)
}

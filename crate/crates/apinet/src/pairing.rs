//! Episode sampling and pair construction.
//!
//! A training episode draws `n_cl` classes times `n_im` samples. Pairs are
//! then built over the episode's encoded features: each sample anchors one
//! pair per active rule, with its partner chosen as the most similar (S)
//! or most dissimilar (D) eligible sample by Euclidean distance — among
//! same-class samples for intra rules, other-class samples for inter
//! rules — or uniformly at random under the random rule. Distance
//! comparison uses squared distances (argmin/argmax-equivalent) and never
//! carries gradients.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use rand::seq::index::sample as index_sample;
use rand::{Rng, RngExt};

/// Partner choice within an eligible set: most similar or most dissimilar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    Similar,
    Dissimilar,
}

impl Selector {
    fn tag(self) -> &'static str {
        match self {
            Selector::Similar => "s",
            Selector::Dissimilar => "d",
        }
    }
}

/// One of the nine pair-construction rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairRule {
    /// Uniformly random distinct partners; two pairs per anchor so the
    /// batch size matches the dual-rule variants.
    Random,
    /// Distance-driven selection; at least one of the two must be active.
    ClassImage {
        intra: Option<Selector>,
        inter: Option<Selector>,
    },
}

impl PairRule {
    /// All nine rules, ordered random first, then single-rule variants,
    /// then dual-rule variants (inter selector varying fastest).
    pub const ALL: [PairRule; 9] = [
        PairRule::Random,
        PairRule::ClassImage { intra: None, inter: Some(Selector::Dissimilar) },
        PairRule::ClassImage { intra: None, inter: Some(Selector::Similar) },
        PairRule::ClassImage { intra: Some(Selector::Dissimilar), inter: None },
        PairRule::ClassImage { intra: Some(Selector::Similar), inter: None },
        PairRule::ClassImage { intra: Some(Selector::Dissimilar), inter: Some(Selector::Dissimilar) },
        PairRule::ClassImage { intra: Some(Selector::Similar), inter: Some(Selector::Dissimilar) },
        PairRule::ClassImage { intra: Some(Selector::Dissimilar), inter: Some(Selector::Similar) },
        PairRule::ClassImage { intra: Some(Selector::Similar), inter: Some(Selector::Similar) },
    ];

    pub fn validate(&self) -> Result<()> {
        if let PairRule::ClassImage { intra: None, inter: None } = self {
            return Err(Error::config(
                "pair rule needs at least one of intra/inter active",
            ));
        }
        Ok(())
    }

    fn has_intra(&self) -> bool {
        matches!(self, PairRule::ClassImage { intra: Some(_), .. })
    }

    /// Pairs produced per episode of `b` samples.
    pub fn pair_count(&self, b: usize) -> usize {
        match self {
            PairRule::Random => 2 * b,
            PairRule::ClassImage { intra, inter } => {
                (intra.is_some() as usize + inter.is_some() as usize) * b
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            PairRule::Random => "random".to_string(),
            PairRule::ClassImage { intra, inter } => {
                let mut parts = Vec::new();
                if let Some(s) = intra {
                    parts.push(format!("intra-{}", s.tag()));
                }
                if let Some(s) = inter {
                    parts.push(format!("inter-{}", s.tag()));
                }
                parts.join("+")
            }
        }
    }
}

impl std::str::FromStr for PairRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "random" {
            return Ok(PairRule::Random);
        }
        let mut intra = None;
        let mut inter = None;
        for part in s.split('+') {
            let sel = match part {
                "intra-s" | "inter-s" => Selector::Similar,
                "intra-d" | "inter-d" => Selector::Dissimilar,
                other => {
                    return Err(Error::config(format!(
                        "unknown pair rule part '{other}' (expected random, intra-s/d, inter-s/d, or a + combination)"
                    )))
                }
            };
            let slot = if part.starts_with("intra") { &mut intra } else { &mut inter };
            if slot.is_some() {
                return Err(Error::config(format!("pair rule repeats '{part}'")));
            }
            *slot = Some(sel);
        }
        let rule = PairRule::ClassImage { intra, inter };
        rule.validate()?;
        Ok(rule)
    }
}

impl std::fmt::Display for PairRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

/// Episode shape plus the rule used to pair its samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeSpec {
    pub n_cl: usize,
    pub n_im: usize,
    pub pair_rule: PairRule,
}

impl EpisodeSpec {
    pub fn validate(&self) -> Result<()> {
        self.pair_rule.validate()?;
        if self.n_cl < 2 {
            return Err(Error::config(format!(
                "episodes need at least 2 classes, got {}",
                self.n_cl
            )));
        }
        if self.n_im < 1 {
            return Err(Error::config("episodes need at least 1 image per class"));
        }
        if self.pair_rule.has_intra() && self.n_im < 2 {
            return Err(Error::config(
                "intra pair rules need at least 2 images per class",
            ));
        }
        Ok(())
    }

    pub fn batch_size(&self) -> usize {
        self.n_cl * self.n_im
    }
}

/// Whether a pair's members share a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    Intra,
    Inter,
}

/// One ordered pair of episode positions; the anchor is always image 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub anchor: usize,
    pub partner: usize,
    pub kind: PairKind,
}

/// Draw `n_cl` distinct classes and `n_im` distinct training samples per
/// class, uniformly without replacement. `class_index[c]` lists the
/// candidate sample indices of class `c`; the result keeps the same
/// grouping with dataset-level indices.
pub fn sample_episode<R: Rng>(
    class_index: &[Vec<usize>],
    spec: &EpisodeSpec,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    spec.validate()?;
    if class_index.len() < spec.n_cl {
        return Err(Error::config(format!(
            "dataset has {} classes but the episode needs {}",
            class_index.len(),
            spec.n_cl
        )));
    }
    let chosen = index_sample(rng, class_index.len(), spec.n_cl);
    let mut groups = Vec::with_capacity(spec.n_cl);
    for class in chosen {
        let pool = &class_index[class];
        if pool.len() < spec.n_im {
            return Err(Error::config(format!(
                "class {class} has {} training samples but the episode needs {}",
                pool.len(),
                spec.n_im
            )));
        }
        let picks = index_sample(rng, pool.len(), spec.n_im);
        groups.push(picks.iter().map(|i| pool[i]).collect());
    }
    Ok(groups)
}

/// Squared Euclidean distances between all rows of a `[B x D]` feature
/// matrix. Symmetric with a zero diagonal.
pub fn pairwise_distances(features: &Tensor) -> Result<Tensor> {
    if features.rank() != 2 {
        return Err(Error::contract(format!(
            "pairwise distances need a rank-2 feature matrix, got shape {:?}",
            features.shape()
        )));
    }
    let b = features.shape()[0];
    let d = features.shape()[1];
    let mut out = Tensor::zeros(&[b, b]);
    for i in 0..b {
        for j in (i + 1)..b {
            let mut acc = 0.0;
            for k in 0..d {
                let diff = features.data()[i * d + k] - features.data()[j * d + k];
                acc += diff * diff;
            }
            out.data_mut()[i * b + j] = acc;
            out.data_mut()[j * b + i] = acc;
        }
    }
    Ok(out)
}

/// Best eligible partner for one anchor: min (Similar) or max (Dissimilar)
/// distance, ties to the lowest index. `eligible` gates candidate rows.
fn select_partner<F: Fn(usize) -> bool>(
    dist: &Tensor,
    anchor: usize,
    sel: Selector,
    eligible: F,
) -> Option<usize> {
    let b = dist.shape()[0];
    let mut best: Option<(usize, f64)> = None;
    for j in 0..b {
        if j == anchor || !eligible(j) {
            continue;
        }
        let d = dist.data()[anchor * b + j];
        let better = match (&best, sel) {
            (None, _) => true,
            (Some((_, bd)), Selector::Similar) => d < *bd,
            (Some((_, bd)), Selector::Dissimilar) => d > *bd,
        };
        if better {
            best = Some((j, d));
        }
    }
    best.map(|(j, _)| j)
}

/// Build the episode's pair list.
///
/// Every sample anchors one pair per active rule; intra pairs come first,
/// then inter pairs, anchors ascending within each block. The random rule
/// instead draws two uniform distinct partners per anchor (kind inferred
/// from the labels), matching the dual-rule batch size. The rng is only
/// consumed by the random rule.
pub fn construct_pairs<R: Rng>(
    features: &Tensor,
    labels: &[usize],
    spec: &EpisodeSpec,
    rng: &mut R,
) -> Result<Vec<Pair>> {
    spec.validate()?;
    let b = labels.len();
    if features.rank() != 2 || features.shape()[0] != b {
        return Err(Error::contract(format!(
            "feature matrix shape {:?} does not match {} labels",
            features.shape(),
            b
        )));
    }
    if b < 2 {
        return Err(Error::config("pair construction needs at least 2 samples"));
    }

    if let PairRule::Random = spec.pair_rule {
        let mut pairs = Vec::with_capacity(2 * b);
        for anchor in 0..b {
            for _ in 0..2 {
                let r = rng.random_range(0..b - 1);
                let partner = if r >= anchor { r + 1 } else { r };
                let kind = if labels[partner] == labels[anchor] {
                    PairKind::Intra
                } else {
                    PairKind::Inter
                };
                pairs.push(Pair { anchor, partner, kind });
            }
        }
        return Ok(pairs);
    }

    let PairRule::ClassImage { intra, inter } = spec.pair_rule else {
        unreachable!()
    };
    let dist = pairwise_distances(features)?;
    let mut pairs = Vec::with_capacity(spec.pair_rule.pair_count(b));

    if let Some(sel) = intra {
        for anchor in 0..b {
            let partner = select_partner(&dist, anchor, sel, |j| labels[j] == labels[anchor])
                .ok_or_else(|| {
                    Error::config(format!(
                        "class {} has no second sample for an intra pair",
                        labels[anchor]
                    ))
                })?;
            pairs.push(Pair { anchor, partner, kind: PairKind::Intra });
        }
    }
    if let Some(sel) = inter {
        for anchor in 0..b {
            let partner = select_partner(&dist, anchor, sel, |j| labels[j] != labels[anchor])
                .ok_or_else(|| {
                    Error::config(format!(
                        "no sample outside class {} for an inter pair",
                        labels[anchor]
                    ))
                })?;
            pairs.push(Pair { anchor, partner, kind: PairKind::Inter });
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rule(s: &str) -> PairRule {
        s.parse().unwrap()
    }

    fn spec(n_cl: usize, n_im: usize, r: &str) -> EpisodeSpec {
        EpisodeSpec { n_cl, n_im, pair_rule: rule(r) }
    }

    #[test]
    fn rule_parsing_round_trips() {
        for r in PairRule::ALL {
            assert_eq!(rule(&r.name()), r);
        }
        assert!("".parse::<PairRule>().is_err());
        assert!("intra-x".parse::<PairRule>().is_err());
        assert!("intra-s+intra-d".parse::<PairRule>().is_err());
    }

    #[test]
    fn distances_zero_for_identical_rows() {
        let f = Tensor::matrix(3, 2, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        assert_eq!(pairwise_distances(&f).unwrap(), Tensor::zeros(&[3, 3]));
    }

    #[test]
    fn distances_hand_case() {
        let f = Tensor::matrix(2, 2, vec![0.0, 0.0, 3.0, 4.0]).unwrap();
        let d = pairwise_distances(&f).unwrap();
        assert_eq!(d.data(), &[0.0, 25.0, 25.0, 0.0]);
    }

    #[test]
    fn distances_match_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..18).map(|_| rng.random_range(-2.0..2.0)).collect();
        let f = Tensor::matrix(6, 3, data.clone()).unwrap();
        let d = pairwise_distances(&f).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let mut acc = 0.0;
                for k in 0..3 {
                    let diff = data[i * 3 + k] - data[j * 3 + k];
                    acc += diff * diff;
                }
                assert_eq!(d.data()[i * 6 + j], acc);
            }
        }
    }

    #[test]
    fn two_class_hand_episode() {
        // Class A rows 0-1, class B rows 2-3.
        let f = Tensor::matrix(4, 2, vec![0.0, 0.0, 0.0, 1.0, 10.0, 0.0, 10.0, 2.0]).unwrap();
        let labels = [0, 0, 1, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pairs = construct_pairs(&f, &labels, &spec(2, 2, "intra-s+inter-s"), &mut rng).unwrap();
        assert_eq!(pairs.len(), 8);
        // Anchor 0: intra partner 1, inter partner 2 (dist 100 vs 104).
        assert_eq!(pairs[0], Pair { anchor: 0, partner: 1, kind: PairKind::Intra });
        assert_eq!(pairs[4], Pair { anchor: 0, partner: 2, kind: PairKind::Inter });
    }

    #[test]
    fn paper_scale_batch_yields_240_pairs() {
        let n_cl = 30;
        let n_im = 4;
        let b = n_cl * n_im;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f64> = (0..b * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = Tensor::matrix(b, 2, data).unwrap();
        let labels: Vec<usize> = (0..b).map(|i| i / n_im).collect();
        let pairs =
            construct_pairs(&f, &labels, &spec(n_cl, n_im, "intra-s+inter-s"), &mut rng).unwrap();
        assert_eq!(pairs.len(), 240);
    }

    #[test]
    fn pair_counts_match_rule_formula() {
        let n_cl = 3;
        let n_im = 2;
        let b = n_cl * n_im;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<f64> = (0..b * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = Tensor::matrix(b, 3, data).unwrap();
        let labels: Vec<usize> = (0..b).map(|i| i / n_im).collect();
        for r in PairRule::ALL {
            let s = EpisodeSpec { n_cl, n_im, pair_rule: r };
            let pairs = construct_pairs(&f, &labels, &s, &mut rng).unwrap();
            assert_eq!(pairs.len(), r.pair_count(b), "rule {r}");
            for p in &pairs {
                assert_ne!(p.anchor, p.partner, "rule {r}");
                let same = labels[p.anchor] == labels[p.partner];
                match p.kind {
                    PairKind::Intra => assert!(same, "rule {r}"),
                    PairKind::Inter => assert!(!same, "rule {r}"),
                }
            }
        }
    }

    #[test]
    fn identical_features_tie_break_to_lowest_index() {
        let f = Tensor::matrix(4, 2, vec![1.0; 8]).unwrap();
        let labels = [0, 0, 1, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pairs = construct_pairs(&f, &labels, &spec(2, 2, "intra-d+inter-d"), &mut rng).unwrap();
        // Intra block: lowest same-class other; inter block: lowest other-class.
        assert_eq!(pairs[0].partner, 1);
        assert_eq!(pairs[1].partner, 0);
        assert_eq!(pairs[2].partner, 3);
        assert_eq!(pairs[3].partner, 2);
        assert_eq!(pairs[4].partner, 2);
        assert_eq!(pairs[5].partner, 2);
        assert_eq!(pairs[6].partner, 0);
        assert_eq!(pairs[7].partner, 0);
    }

    #[test]
    fn squared_and_true_distances_pick_the_same_partners() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = 8;
        let data: Vec<f64> = (0..b * 3).map(|_| rng.random_range(-3.0..3.0)).collect();
        let f = Tensor::matrix(b, 3, data).unwrap();
        let labels: Vec<usize> = (0..b).map(|i| i / 2).collect();

        let mut sqrt_f = pairwise_distances(&f).unwrap();
        for v in sqrt_f.data_mut() {
            *v = v.sqrt();
        }
        for r in PairRule::ALL.iter().filter(|r| !matches!(r, PairRule::Random)) {
            let s = EpisodeSpec { n_cl: 4, n_im: 2, pair_rule: *r };
            let pairs = construct_pairs(&f, &labels, &s, &mut rng).unwrap();
            let PairRule::ClassImage { intra, inter } = *r else { unreachable!() };
            let mut expect = Vec::new();
            if let Some(sel) = intra {
                for a in 0..b {
                    expect.push(select_partner(&sqrt_f, a, sel, |j| labels[j] == labels[a]).unwrap());
                }
            }
            if let Some(sel) = inter {
                for a in 0..b {
                    expect.push(select_partner(&sqrt_f, a, sel, |j| labels[j] != labels[a]).unwrap());
                }
            }
            let got: Vec<usize> = pairs.iter().map(|p| p.partner).collect();
            assert_eq!(got, expect, "rule {r}");
        }
    }

    #[test]
    fn random_rule_is_seeded() {
        let b = 6;
        let f = Tensor::matrix(b, 2, vec![0.5; b * 2]).unwrap();
        let labels: Vec<usize> = (0..b).map(|i| i / 2).collect();
        let s = spec(3, 2, "random");
        let p1 = construct_pairs(&f, &labels, &s, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let p2 = construct_pairs(&f, &labels, &s, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let p3 = construct_pairs(&f, &labels, &s, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(p1, p2);
        assert_ne!(p1, p3);
        // Every anchor appears exactly twice, in ascending blocks of two.
        for (i, p) in p1.iter().enumerate() {
            assert_eq!(p.anchor, i / 2);
        }
    }

    #[test]
    fn episode_sampling_covers_and_validates() {
        let class_index: Vec<Vec<usize>> = vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]];
        let s = spec(3, 3, "inter-s");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let groups = sample_episode(&class_index, &s, &mut rng).unwrap();
        // Exactly n_cl classes and all samples of each (n_im = class size).
        let mut all: Vec<usize> = groups.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..9).collect::<Vec<_>>());

        let a = sample_episode(&class_index, &s, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        let b = sample_episode(&class_index, &s, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        assert_eq!(a, b);

        let err = sample_episode(&class_index[..2], &spec(3, 2, "inter-s"), &mut rng).unwrap_err();
        assert!(err.to_string().contains("classes"), "{err}");
        let thin: Vec<Vec<usize>> = vec![vec![0], vec![1, 2], vec![3, 4]];
        let err = sample_episode(&thin, &spec(3, 2, "inter-s"), &mut rng).unwrap_err();
        assert!(err.to_string().contains("class 0"), "{err}");
    }

    #[test]
    fn spec_validation() {
        assert!(spec(2, 2, "intra-s").validate().is_ok());
        assert!(spec(1, 2, "inter-s").validate().is_err());
        assert!(spec(2, 1, "intra-s").validate().is_err());
        assert!(spec(2, 1, "inter-s").validate().is_ok());
        assert!(PairRule::ClassImage { intra: None, inter: None }.validate().is_err());
    }
}

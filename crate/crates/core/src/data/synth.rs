use serde::{Deserialize, Serialize};

use super::{normalize_in_place, LabeledDataset, Split, ViewPair, ViewSource};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Real, Rng};

/// Parameters of the synthetic instance-discrimination task.
///
/// Every instance is a class mean plus isotropic Gaussian spread and carries
/// a second latent component drawn from a different class. Views add
/// Gaussian noise of scale `aug_noise`; with probability `false_pos_rate`
/// the second view comes from the other component instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_classes: usize,
    /// Training instances.
    pub n_instances: usize,
    /// Held-out instances used as kNN queries and probe test set.
    pub n_eval: usize,
    pub input_dim: usize,
    /// Euclidean distance between class means.
    pub class_sep: f64,
    /// Standard deviation of instances around their class mean.
    pub instance_spread: f64,
    pub aug_noise: f64,
    /// Target probability that two distinct instances share a class.
    pub false_neg_rate: f64,
    pub false_pos_rate: f64,
    /// L2-normalize inputs and views before they reach the encoder.
    pub normalize: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_classes: 10,
            n_instances: 5000,
            n_eval: 1000,
            input_dim: 32,
            class_sep: 2.0,
            instance_spread: 0.5,
            aug_noise: 0.5,
            false_neg_rate: 0.2,
            false_pos_rate: 0.1,
            normalize: true,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("synthetic data: {msg}")));
        if self.n_classes < 2 || self.input_dim < 2 {
            return bad("n_classes and input_dim must be at least 2");
        }
        if self.n_instances == 0 {
            return bad("n_instances must be positive");
        }
        for (name, v) in [
            ("class_sep", self.class_sep),
            ("instance_spread", self.instance_spread),
            ("aug_noise", self.aug_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(&format!("{name} must be finite and non-negative"));
            }
        }
        for (name, v) in [
            ("false_neg_rate", self.false_neg_rate),
            ("false_pos_rate", self.false_pos_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Class prior whose pair-collision probability equals `rate`: class 0
/// takes mass `a`, the rest share `1 - a` evenly. Rates below `1/C` cannot
/// be reached and fall back to the uniform prior. Returns the prior and the
/// collision rate it achieves.
pub(crate) fn class_prior(n_classes: usize, rate: f64) -> (Vec<f64>, f64) {
    let c = n_classes as f64;
    if rate <= 1.0 / c {
        return (vec![1.0 / c; n_classes], 1.0 / c);
    }
    let disc = (1.0 - c + rate * c * (c - 1.0)).max(0.0);
    let a = ((1.0 + disc.sqrt()) / c).min(1.0);
    let rest = (1.0 - a) / (c - 1.0);
    let mut prior = vec![rest; n_classes];
    prior[0] = a;
    let achieved = prior.iter().map(|p| p * p).sum();
    (prior, achieved)
}

/// Largest-remainder rounding of `prior * n`.
pub(crate) fn class_counts(prior: &[f64], n: usize) -> Vec<usize> {
    let raw: Vec<f64> = prior.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..prior.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

fn class_means(config: &SynthConfig, rng: &mut Rng) -> Matrix<f64> {
    let (c, d) = (config.n_classes, config.input_dim);
    let scale = config.class_sep / std::f64::consts::SQRT_2;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(c);
    while rows.len() < c {
        let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        if d >= c {
            // Gram-Schmidt keeps the means exactly `class_sep` apart
            for r in &rows {
                let proj: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
                for (x, y) in v.iter_mut().zip(r) {
                    *x -= proj * y;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        rows.push(v.iter().map(|x| x / norm).collect());
    }
    let data = rows.into_iter().flatten().map(|x| x * scale).collect();
    Matrix::from_vec_unchecked(c, d, data)
}

/// Generated dataset: training rows first, then evaluation rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub data: LabeledDataset<f64>,
    /// Second latent component of every row.
    pub secondary: Matrix<f64>,
    pub secondary_class: Vec<usize>,
    pub class_means: Matrix<f64>,
    /// Pair-collision rate the class prior actually achieves.
    pub effective_false_neg_rate: f64,
}

pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<SynthDataset> {
    config.validate()?;
    let root = Rng::new(seed);
    let means = class_means(config, &mut root.fork(0));
    let (prior, effective) = class_prior(config.n_classes, config.false_neg_rate);
    let (c, d) = (config.n_classes, config.input_dim);

    let total = config.n_instances + config.n_eval;
    let mut inputs = Vec::with_capacity(total * d);
    let mut secondary = Vec::with_capacity(total * d);
    let mut labels = Vec::with_capacity(total);
    let mut splits = Vec::with_capacity(total);
    let mut secondary_class = Vec::with_capacity(total);

    for (stream, split, n) in [(1, Split::Train, config.n_instances), (2, Split::Eval, config.n_eval)] {
        let mut rng = root.fork(stream);
        let mut split_labels: Vec<usize> = class_counts(&prior, n)
            .iter()
            .enumerate()
            .flat_map(|(class, &count)| std::iter::repeat(class).take(count))
            .collect();
        rng.shuffle(&mut split_labels);
        for &label in &split_labels {
            let other = (label + 1 + rng.below(c as u64 - 1) as usize) % c;
            for (class, out) in [(label, &mut inputs), (other, &mut secondary)] {
                out.extend(
                    means
                        .row(class)
                        .iter()
                        .map(|&m| m + config.instance_spread * rng.normal()),
                );
            }
            labels.push(label);
            splits.push(split);
            secondary_class.push(other);
        }
    }

    Ok(SynthDataset {
        config: config.clone(),
        data: LabeledDataset::new(Matrix::from_vec_unchecked(total, d, inputs), labels, splits, c)?,
        secondary: Matrix::from_vec_unchecked(total, d, secondary),
        secondary_class,
        class_means: means,
        effective_false_neg_rate: effective,
    })
}

/// Two noisy views of `instance`. With probability `false_pos_rate` (and
/// only when `other` is given) the second view is built from `other`
/// instead. Draw order: one uniform for the swap decision, then the noise of
/// view a, then the noise of view b.
pub fn make_views(
    instance: &[f64],
    other: Option<&[f64]>,
    config: &SynthConfig,
    rng: &mut Rng,
) -> (Vec<f64>, Vec<f64>, bool) {
    let swap = rng.uniform() < config.false_pos_rate && other.is_some();
    let noise = config.aug_noise;
    let view_a: Vec<f64> = instance.iter().map(|&x| x + noise * rng.normal()).collect();
    let base_b = if swap { other.unwrap_or(instance) } else { instance };
    let view_b: Vec<f64> = base_b.iter().map(|&x| x + noise * rng.normal()).collect();
    (view_a, view_b, swap)
}

impl SynthDataset {
    fn split_offset(split: Split, config: &SynthConfig) -> usize {
        match split {
            Split::Train => 0,
            Split::Eval => config.n_instances,
        }
    }

    /// Raw (un-normalized) views of storage row `row`.
    pub fn raw_views(&self, row: usize, rng: &mut Rng) -> ViewPair {
        let (view_a, view_b, is_false_positive) = make_views(
            self.data.inputs.row(row),
            Some(self.secondary.row(row)),
            &self.config,
            rng,
        );
        ViewPair {
            view_a,
            view_b,
            instance_id: row,
            latent_class: self.data.labels[row],
            is_false_positive,
        }
    }
}

impl ViewSource for SynthDataset {
    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    fn len(&self, split: Split) -> usize {
        match split {
            Split::Train => self.config.n_instances,
            Split::Eval => self.config.n_eval,
        }
    }

    fn labels(&self, split: Split) -> Vec<usize> {
        let off = Self::split_offset(split, &self.config);
        self.data.labels[off..off + self.len(split)].to_vec()
    }

    fn inputs<T: Real>(&self, split: Split) -> Matrix<T> {
        let off = Self::split_offset(split, &self.config);
        let n = self.len(split);
        let d = self.config.input_dim;
        let mut data = Vec::with_capacity(n * d);
        let mut row = vec![0.0; d];
        for i in off..off + n {
            row.copy_from_slice(self.data.inputs.row(i));
            if self.config.normalize {
                normalize_in_place(&mut row);
            }
            data.extend(row.iter().map(|&x| T::from_f64(x)));
        }
        Matrix::from_vec_unchecked(n, d, data)
    }

    fn views(&self, index: usize, rng: &mut Rng) -> ViewPair {
        let mut pair = self.raw_views(index, rng);
        if self.config.normalize {
            normalize_in_place(&mut pair.view_a);
            normalize_in_place(&mut pair.view_b);
        }
        pair
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(fnr: f64, fpr: f64) -> SynthConfig {
        SynthConfig {
            n_classes: 10,
            n_instances: 2000,
            n_eval: 200,
            input_dim: 16,
            false_neg_rate: fnr,
            false_pos_rate: fpr,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn prior_hits_target_collision_rate() {
        let (prior, achieved) = class_prior(10, 0.2);
        assert!((prior[0] - 0.4).abs() < 1e-12);
        assert!((achieved - 0.2).abs() < 1e-12);
        assert!((prior.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let (uniform, floor) = class_prior(10, 0.05);
        assert_eq!(uniform, vec![0.1; 10]);
        assert!((floor - 0.1).abs() < 1e-15);
        let (all_one, r) = class_prior(4, 1.0);
        assert_eq!(all_one, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(r, 1.0);
    }

    #[test]
    fn counts_sum_to_n() {
        let (prior, _) = class_prior(10, 0.2);
        let counts = class_counts(&prior, 5000);
        assert_eq!(counts.iter().sum::<usize>(), 5000);
        assert_eq!(counts[0], 2000);
        assert_eq!(class_counts(&[0.5, 0.5], 3), vec![2, 1]);
    }

    #[test]
    fn degenerate_geometry_gives_identical_instances() {
        let cfg = SynthConfig {
            class_sep: 0.0,
            instance_spread: 0.0,
            aug_noise: 0.0,
            false_neg_rate: 0.0,
            ..small(0.0, 0.0)
        };
        let ds = synth_generate(&cfg, 1).unwrap();
        let first = ds.data.inputs.row(0).to_vec();
        assert!(ds.data.inputs.iter_rows().all(|r| r == first.as_slice()));
        // with no signal the best constant guess is a uniform class: 1/C
        let eval = ds.labels(Split::Eval);
        let hits = eval.iter().filter(|&&l| l == 0).count();
        assert_eq!(hits as f64 / eval.len() as f64, 0.1);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small(0.2, 0.1);
        assert_eq!(synth_generate(&cfg, 9).unwrap(), synth_generate(&cfg, 9).unwrap());
        assert_ne!(
            synth_generate(&cfg, 9).unwrap().data.inputs,
            synth_generate(&cfg, 10).unwrap().data.inputs
        );
    }

    #[test]
    fn class_means_are_class_sep_apart() {
        let cfg = small(0.0, 0.0);
        let ds = synth_generate(&cfg, 2).unwrap();
        for i in 0..10 {
            for j in 0..i {
                let d: f64 = ds
                    .class_means
                    .row(i)
                    .iter()
                    .zip(ds.class_means.row(j))
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!((d - cfg.class_sep).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn secondary_component_is_another_class() {
        let ds = synth_generate(&small(0.2, 0.1), 3).unwrap();
        for (l, s) in ds.data.labels.iter().zip(&ds.secondary_class) {
            assert_ne!(l, s);
        }
    }

    #[test]
    fn injected_false_negative_rate() {
        let ds = synth_generate(&small(0.2, 0.0), 4).unwrap();
        let labels = ds.labels(Split::Train);
        let mut rng = Rng::new(5);
        let n = labels.len() as u64;
        let mut shared = 0;
        let pairs = 10_000;
        let mut drawn = 0;
        while drawn < pairs {
            let i = rng.below(n) as usize;
            let j = rng.below(n) as usize;
            if i == j {
                continue;
            }
            drawn += 1;
            shared += (labels[i] == labels[j]) as usize;
        }
        let rate = shared as f64 / pairs as f64;
        assert!((rate - 0.2).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn noiseless_views_equal_instance() {
        let cfg = SynthConfig {
            aug_noise: 0.0,
            ..small(0.2, 0.0)
        };
        let ds = synth_generate(&cfg, 6).unwrap();
        let mut rng = Rng::new(0);
        for row in [0, 17, 1999] {
            let p = ds.raw_views(row, &mut rng);
            assert_eq!(p.view_a, ds.data.inputs.row(row));
            assert_eq!(p.view_b, ds.data.inputs.row(row));
            assert!(!p.is_false_positive);
        }
    }

    #[test]
    fn full_false_positive_rate_flags_everything() {
        let ds = synth_generate(&small(0.2, 1.0), 7).unwrap();
        let mut rng = Rng::new(1);
        for row in 0..200 {
            let p = ds.raw_views(row, &mut rng);
            assert!(p.is_false_positive);
        }
        let cfg = SynthConfig {
            aug_noise: 0.0,
            ..small(0.2, 1.0)
        };
        let ds = synth_generate(&cfg, 7).unwrap();
        let p = ds.raw_views(3, &mut rng);
        assert_eq!(p.view_b, ds.secondary.row(3));
    }

    #[test]
    fn false_positive_frequency() {
        let ds = synth_generate(&small(0.2, 0.2), 8).unwrap();
        let mut rng = Rng::new(2);
        let draws = 10_000;
        let flagged = (0..draws)
            .filter(|i| ds.raw_views(i % 2000, &mut rng).is_false_positive)
            .count();
        let freq = flagged as f64 / draws as f64;
        assert!((freq - 0.2).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn view_noise_is_isotropic() {
        let cfg = SynthConfig {
            input_dim: 6,
            aug_noise: 0.3,
            ..small(0.0, 0.0)
        };
        let ds = synth_generate(&cfg, 9).unwrap();
        let mut rng = Rng::new(3);
        let d = 6;
        let n = 10_000;
        let mut cov = vec![0.0; d * d];
        for i in 0..n {
            let row = i % cfg.n_instances;
            let p = ds.raw_views(row, &mut rng);
            let e: Vec<f64> = p
                .view_a
                .iter()
                .zip(ds.data.inputs.row(row))
                .map(|(v, x)| v - x)
                .collect();
            for a in 0..d {
                for b in 0..d {
                    cov[a * d + b] += e[a] * e[b] / n as f64;
                }
            }
        }
        let s2 = 0.3 * 0.3;
        for a in 0..d {
            for b in 0..d {
                let expected = if a == b { s2 } else { 0.0 };
                assert!(
                    (cov[a * d + b] - expected).abs() < 0.05 * s2,
                    "cov[{a},{b}] = {}",
                    cov[a * d + b]
                );
            }
        }
    }

    #[test]
    fn view_source_normalizes() {
        let ds = synth_generate(&small(0.2, 0.1), 10).unwrap();
        let x = ds.inputs::<f32>(Split::Eval);
        assert_eq!(x.rows(), 200);
        for r in x.iter_rows() {
            let n: f32 = r.iter().map(|v| v * v).sum::<f32>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
        let p = ds.views(5, &mut Rng::new(0));
        let n: f64 = p.view_b.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
        assert_eq!(ds.labels(Split::Train).len(), 2000);
    }

    #[test]
    fn rejects_invalid_config() {
        assert!(synth_generate(
            &SynthConfig {
                false_pos_rate: 1.5,
                ..small(0.2, 0.1)
            },
            0
        )
        .is_err());
        assert!(synth_generate(
            &SynthConfig {
                input_dim: 1,
                ..small(0.2, 0.1)
            },
            0
        )
        .is_err());
    }
}

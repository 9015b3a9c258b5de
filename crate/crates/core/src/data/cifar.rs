//! CIFAR-10 binary batches: records of one label byte followed by 3072
//! pixel bytes (1024 red, 1024 green, 1024 blue; each plane row-major 32x32).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LabeledDataset, Split, ViewPair, ViewSource};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Real, Rng};

pub const CIFAR_DIM: usize = 3072;
const RECORD: usize = CIFAR_DIM + 1;
const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;
const N_CLASSES: usize = 10;

/// Splits a batch file into raw pixel bytes and labels.
pub fn parse_cifar10(bytes: &[u8]) -> Result<(Vec<u8>, Vec<usize>)> {
    if bytes.is_empty() || bytes.len() % RECORD != 0 {
        return Err(Error::MalformedFile(format!(
            "{} bytes is not a positive multiple of the {RECORD}-byte record size",
            bytes.len()
        )));
    }
    let n = bytes.len() / RECORD;
    let mut pixels = Vec::with_capacity(n * CIFAR_DIM);
    let mut labels = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(RECORD) {
        let label = rec[0] as usize;
        if label >= N_CLASSES {
            return Err(Error::LabelOutOfRange {
                label,
                n_classes: N_CLASSES,
            });
        }
        labels.push(label);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok((pixels, labels))
}

/// Per-channel mean and standard deviation of `[0, 1]`-scaled pixels.
fn channel_stats(pixels: &[u8]) -> ([f64; 3], [f64; 3]) {
    let mut sum = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    let mut count = 0usize;
    for img in pixels.chunks_exact(CIFAR_DIM) {
        for c in 0..3 {
            for &p in &img[c * PLANE..(c + 1) * PLANE] {
                let v = p as f64 / 255.0;
                sum[c] += v;
                sq[c] += v * v;
            }
        }
        count += PLANE;
    }
    let mut mean = [0.0; 3];
    let mut std = [1.0; 3];
    for c in 0..3 {
        mean[c] = sum[c] / count as f64;
        let var = (sq[c] / count as f64 - mean[c] * mean[c]).max(0.0);
        // constant channels (e.g. a single flat image) keep unit scale
        if var.sqrt() > 1e-8 {
            std[c] = var.sqrt();
        }
    }
    (mean, std)
}

fn normalize(pixels: &[u8], mean: &[f64; 3], std: &[f64; 3]) -> Vec<f32> {
    let mut out = Vec::with_capacity(pixels.len());
    for img in pixels.chunks_exact(CIFAR_DIM) {
        for c in 0..3 {
            out.extend(
                img[c * PLANE..(c + 1) * PLANE]
                    .iter()
                    .map(|&p| ((p as f64 / 255.0 - mean[c]) / std[c]) as f32),
            );
        }
    }
    out
}

/// Reads one batch file as a training split, normalized with its own
/// channel statistics.
pub fn load_cifar10(path: impl AsRef<Path>) -> Result<LabeledDataset<f32>> {
    let bytes = std::fs::read(path)?;
    let (pixels, labels) = parse_cifar10(&bytes)?;
    let (mean, std) = channel_stats(&pixels);
    let n = labels.len();
    LabeledDataset::new(
        Matrix::from_vec_unchecked(n, CIFAR_DIM, normalize(&pixels, &mean, &std)),
        labels,
        vec![Split::Train; n],
        N_CLASSES,
    )
}

/// Crop-with-padding, horizontal flip and additive Gaussian noise on a
/// normalized 3x32x32 image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CifarAugment {
    pub pad: usize,
    pub flip: bool,
    pub noise: f64,
}

impl Default for CifarAugment {
    fn default() -> Self {
        Self {
            pad: 4,
            flip: true,
            noise: 0.1,
        }
    }
}

impl CifarAugment {
    /// Draw order: vertical offset, horizontal offset, flip, then noise.
    pub fn apply(&self, image: &[f32], rng: &mut Rng) -> Vec<f64> {
        let span = 2 * self.pad as u64 + 1;
        let dy = rng.below(span) as isize - self.pad as isize;
        let dx = rng.below(span) as isize - self.pad as isize;
        let flip = self.flip && rng.bernoulli(0.5);
        let mut out = vec![0.0f64; CIFAR_DIM];
        for c in 0..3 {
            for y in 0..SIDE {
                let sy = y as isize + dy;
                if !(0..SIDE as isize).contains(&sy) {
                    continue;
                }
                for x in 0..SIDE {
                    let tx = if flip { SIDE - 1 - x } else { x };
                    let sx = tx as isize + dx;
                    if !(0..SIDE as isize).contains(&sx) {
                        continue;
                    }
                    out[c * PLANE + y * SIDE + x] = image[c * PLANE + sy as usize * SIDE + sx as usize] as f64;
                }
            }
        }
        if self.noise > 0.0 {
            for v in &mut out {
                *v += self.noise * rng.normal();
            }
        }
        out
    }
}

/// Training and test batches normalized with training-split statistics.
#[derive(Debug, Clone)]
pub struct CifarDataset {
    pub data: LabeledDataset<f32>,
    pub mean: [f64; 3],
    pub std: [f64; 3],
    pub augment: CifarAugment,
    train_rows: Vec<usize>,
    eval_rows: Vec<usize>,
}

impl CifarDataset {
    pub fn from_batches(train: &[Vec<u8>], eval: &[Vec<u8>], augment: CifarAugment) -> Result<Self> {
        let mut train_px = Vec::new();
        let mut labels = Vec::new();
        let mut splits = Vec::new();
        for bytes in train {
            let (p, l) = parse_cifar10(bytes)?;
            splits.extend(std::iter::repeat(Split::Train).take(l.len()));
            train_px.extend(p);
            labels.extend(l);
        }
        if labels.is_empty() {
            return Err(Error::EmptyTrainSet);
        }
        let (mean, std) = channel_stats(&train_px);
        let mut inputs = normalize(&train_px, &mean, &std);
        drop(train_px);
        for bytes in eval {
            let (p, l) = parse_cifar10(bytes)?;
            splits.extend(std::iter::repeat(Split::Eval).take(l.len()));
            inputs.extend(normalize(&p, &mean, &std));
            labels.extend(l);
        }
        let n = labels.len();
        let data = LabeledDataset::new(
            Matrix::from_vec_unchecked(n, CIFAR_DIM, inputs),
            labels,
            splits,
            N_CLASSES,
        )?;
        Ok(Self {
            train_rows: data.indices(Split::Train),
            eval_rows: data.indices(Split::Eval),
            data,
            mean,
            std,
            augment,
        })
    }

    fn rows(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train_rows,
            Split::Eval => &self.eval_rows,
        }
    }
}

/// Reads `data_batch_1.bin` .. `data_batch_5.bin` and `test_batch.bin`
/// from `dir`; missing training batches are skipped, but at least one must
/// exist.
pub fn load_cifar10_dir(dir: impl AsRef<Path>, augment: CifarAugment) -> Result<CifarDataset> {
    let dir = dir.as_ref();
    let mut train = Vec::new();
    for i in 1..=5 {
        let p = dir.join(format!("data_batch_{i}.bin"));
        if p.exists() {
            train.push(std::fs::read(p)?);
        }
    }
    if train.is_empty() {
        return Err(Error::MalformedFile(format!(
            "no data_batch_*.bin files in {}",
            dir.display()
        )));
    }
    let test = dir.join("test_batch.bin");
    let eval = if test.exists() {
        vec![std::fs::read(test)?]
    } else {
        Vec::new()
    };
    CifarDataset::from_batches(&train, &eval, augment)
}

impl ViewSource for CifarDataset {
    fn input_dim(&self) -> usize {
        CIFAR_DIM
    }

    fn n_classes(&self) -> usize {
        N_CLASSES
    }

    fn len(&self, split: Split) -> usize {
        self.rows(split).len()
    }

    fn labels(&self, split: Split) -> Vec<usize> {
        self.rows(split).iter().map(|&i| self.data.labels[i]).collect()
    }

    fn inputs<T: Real>(&self, split: Split) -> Matrix<T> {
        let rows = self.rows(split);
        let mut data = Vec::with_capacity(rows.len() * CIFAR_DIM);
        for &i in rows {
            data.extend(self.data.inputs.row(i).iter().map(|&x| T::from_f64(x as f64)));
        }
        Matrix::from_vec_unchecked(rows.len(), CIFAR_DIM, data)
    }

    fn views(&self, index: usize, rng: &mut Rng) -> ViewPair {
        let row = self.train_rows[index];
        let image = self.data.inputs.row(row);
        ViewPair {
            view_a: self.augment.apply(image, rng),
            view_b: self.augment.apply(image, rng),
            instance_id: index,
            latent_class: self.data.labels[row],
            is_false_positive: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, fill: impl Fn(usize) -> u8) -> Vec<u8> {
        let mut r = vec![label];
        r.extend((0..CIFAR_DIM).map(fill));
        r
    }

    #[test]
    fn single_record() {
        let (px, labels) = parse_cifar10(&record(7, |i| (i % 256) as u8)).unwrap();
        assert_eq!(labels, vec![7]);
        assert_eq!(px.len(), CIFAR_DIM);
        assert_eq!(px[300], 44);
    }

    #[test]
    fn truncated_and_bad_label() {
        assert!(matches!(parse_cifar10(&[0u8; 3072]), Err(Error::MalformedFile(_))));
        assert!(matches!(parse_cifar10(&[]), Err(Error::MalformedFile(_))));
        let mut two = record(1, |_| 0);
        two.extend(record(10, |_| 0));
        assert!(matches!(
            parse_cifar10(&two),
            Err(Error::LabelOutOfRange { label: 10, .. })
        ));
    }

    #[test]
    fn label_histogram_matches_byte_count() {
        let mut bytes = Vec::new();
        for i in 0..200 {
            bytes.extend(record((i % 10) as u8, |j| ((i + j) % 256) as u8));
        }
        let (_, labels) = parse_cifar10(&bytes).unwrap();
        let mut hist = [0usize; 10];
        for l in labels {
            hist[l] += 1;
        }
        // oracle: count label bytes at record boundaries directly
        let mut oracle = [0usize; 10];
        for rec in bytes.chunks(RECORD) {
            oracle[rec[0] as usize] += 1;
        }
        assert_eq!(hist, oracle);
        assert_eq!(hist, [20; 10]);
    }

    #[test]
    fn normalization_uses_train_statistics() {
        let mut train = Vec::new();
        for i in 0..4u8 {
            train.extend(record(i, |j| if j < PLANE { i * 60 } else { 128 }));
        }
        let eval = record(0, |_| 255);
        let ds = CifarDataset::from_batches(&[train], &[eval], CifarAugment::default()).unwrap();
        let x = ds.inputs::<f64>(Split::Train);
        let red: Vec<f64> = (0..4).map(|i| x.get(i, 0)).collect();
        let mean = red.iter().sum::<f64>() / 4.0;
        let var = red.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-5);
        // green channel was constant: centered, unit scale kept
        assert!(x.get(0, PLANE).abs() < 1e-6);
        let e = ds.inputs::<f64>(Split::Eval);
        let expected = (1.0 - ds.mean[0]) / ds.std[0];
        assert!((e.get(0, 0) - expected).abs() < 1e-5);
        assert_eq!(ds.len(Split::Train), 4);
        assert_eq!(ds.labels(Split::Eval), vec![0]);
    }

    #[test]
    fn load_single_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        std::fs::write(&path, record(7, |i| (i % 7) as u8)).unwrap();
        let ds = load_cifar10(&path).unwrap();
        assert_eq!(ds.labels, vec![7]);
        assert_eq!(ds.inputs.cols(), CIFAR_DIM);
        assert!(ds.inputs.is_finite());
    }

    #[test]
    fn identity_augmentation() {
        let aug = CifarAugment {
            pad: 0,
            flip: false,
            noise: 0.0,
        };
        let img: Vec<f32> = (0..CIFAR_DIM).map(|i| i as f32).collect();
        let out = aug.apply(&img, &mut Rng::new(0));
        assert!(out.iter().zip(&img).all(|(a, &b)| *a == b as f64));
    }

    #[test]
    fn flip_mirrors_rows() {
        let aug = CifarAugment {
            pad: 0,
            flip: true,
            noise: 0.0,
        };
        let img: Vec<f32> = (0..CIFAR_DIM).map(|i| i as f32).collect();
        let mut rng = Rng::new(0);
        let mut saw_flip = false;
        for _ in 0..20 {
            let out = aug.apply(&img, &mut rng);
            if out[0] != 0.0 {
                saw_flip = true;
                assert_eq!(out[0], 31.0);
                assert_eq!(out[PLANE + SIDE], (PLANE + SIDE + 31) as f64);
            }
        }
        assert!(saw_flip);
    }

    #[test]
    fn crop_shifts_with_zero_fill() {
        let aug = CifarAugment {
            pad: 4,
            flip: false,
            noise: 0.0,
        };
        let img = vec![1.0f32; CIFAR_DIM];
        let mut rng = Rng::new(4);
        for _ in 0..20 {
            let out = aug.apply(&img, &mut rng);
            let ones = out.iter().filter(|&&v| v == 1.0).count();
            assert!(ones >= 3 * 28 * 28);
            assert!(out.iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }
}

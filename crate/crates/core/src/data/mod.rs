//! Training data: a synthetic generator with controllable false-positive and
//! false-negative views, and a CIFAR-10 binary reader.

mod cifar;
mod dump;
mod synth;

pub use cifar::{load_cifar10, load_cifar10_dir, parse_cifar10, CifarAugment, CifarDataset, CIFAR_DIM};
pub use dump::{read_synth_dump, write_synth_dump};
pub use synth::{make_views, synth_generate, SynthConfig, SynthDataset};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Real, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Eval => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Split::Train),
            1 => Some(Split::Eval),
            _ => None,
        }
    }
}

/// Two augmented views of one training instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair {
    pub view_a: Vec<f64>,
    pub view_b: Vec<f64>,
    pub instance_id: usize,
    pub latent_class: usize,
    pub is_false_positive: bool,
}

/// Inputs with class labels and a split tag per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T = f64> {
    pub inputs: Matrix<T>,
    pub labels: Vec<usize>,
    pub splits: Vec<Split>,
    pub n_classes: usize,
}

impl<T: Real> LabeledDataset<T> {
    pub fn new(inputs: Matrix<T>, labels: Vec<usize>, splits: Vec<Split>, n_classes: usize) -> Result<Self> {
        if labels.len() != inputs.rows() || splits.len() != inputs.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows, {} labels, {} split tags",
                inputs.rows(),
                labels.len(),
                splits.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::LabelOutOfRange { label, n_classes });
        }
        Ok(Self {
            inputs,
            labels,
            splits,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Rows and labels of one split, in storage order.
    pub fn subset(&self, split: Split) -> (Matrix<T>, Vec<usize>) {
        let idx = self.indices(split);
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        (self.inputs.select_rows(&idx), labels)
    }
}

/// Anything the pretraining loop can draw view pairs from.
pub trait ViewSource: Sync {
    fn input_dim(&self) -> usize;
    fn n_classes(&self) -> usize;
    fn len(&self, split: Split) -> usize;
    fn labels(&self, split: Split) -> Vec<usize>;
    /// Un-augmented inputs of a split, preprocessed the same way as views.
    fn inputs<T: Real>(&self, split: Split) -> Matrix<T>;
    /// Views of the `index`-th training sample.
    fn views(&self, index: usize, rng: &mut Rng) -> ViewPair;
}

/// Stacks the `a` and `b` views of a batch into two matrices.
pub fn stack_views<T: Real>(pairs: &[ViewPair]) -> (Matrix<T>, Matrix<T>) {
    let dim = pairs.first().map_or(0, |p| p.view_a.len());
    let mut a = Vec::with_capacity(pairs.len() * dim);
    let mut b = Vec::with_capacity(pairs.len() * dim);
    for p in pairs {
        a.extend(p.view_a.iter().map(|&x| T::from_f64(x)));
        b.extend(p.view_b.iter().map(|&x| T::from_f64(x)));
    }
    (
        Matrix::from_vec_unchecked(pairs.len(), dim, a),
        Matrix::from_vec_unchecked(pairs.len(), dim, b),
    )
}

pub(crate) fn normalize_in_place(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-12 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_labels_and_lengths() {
        let m = Matrix::<f64>::zeros(3, 2);
        assert!(matches!(
            LabeledDataset::new(m.clone(), vec![0, 1, 4], vec![Split::Train; 3], 4),
            Err(Error::LabelOutOfRange { label: 4, n_classes: 4 })
        ));
        assert!(matches!(
            LabeledDataset::new(m, vec![0, 1], vec![Split::Train; 3], 4),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn subsets_are_disjoint_and_ordered() {
        let m = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let splits = vec![Split::Eval, Split::Train, Split::Eval, Split::Train];
        let d = LabeledDataset::new(m, vec![0, 1, 2, 3], splits, 4).unwrap();
        let (tr, tl) = d.subset(Split::Train);
        let (ev, el) = d.subset(Split::Eval);
        assert_eq!(tl, vec![1, 3]);
        assert_eq!(el, vec![0, 2]);
        assert_eq!(tr.as_slice(), &[1.0, 3.0]);
        assert_eq!(ev.as_slice(), &[0.0, 2.0]);
    }
}

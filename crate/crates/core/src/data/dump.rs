//! Binary dump of a synthetic dataset, all values little-endian:
//!
//! ```text
//! magic        8 bytes  "LCSYNTH1"
//! rows, dim, n_classes, n_instances, n_eval           u32 each
//! class_sep, instance_spread, aug_noise,
//! false_neg_rate, false_pos_rate, effective_rate      f64 each
//! normalize                                           u8 (0 or 1)
//! inputs           rows x dim        f32, row-major
//! labels           rows              u32
//! splits           rows              u8 (0 train, 1 eval)
//! secondary        rows x dim        f32
//! secondary_class  rows              u32
//! class_means      n_classes x dim   f32
//! ```
//!
//! Matrices are stored in single precision, so a reloaded dataset equals the
//! original rounded to `f32`.

use std::path::Path;

use super::{LabeledDataset, Split, SynthConfig, SynthDataset};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

const MAGIC: &[u8; 8] = b"LCSYNTH1";

pub fn write_synth_dump(ds: &SynthDataset, path: impl AsRef<Path>) -> Result<()> {
    let c = &ds.config;
    let rows = ds.data.len();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for v in [rows, c.input_dim, c.n_classes, c.n_instances, c.n_eval] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in [
        c.class_sep,
        c.instance_spread,
        c.aug_noise,
        c.false_neg_rate,
        c.false_pos_rate,
        ds.effective_false_neg_rate,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.push(c.normalize as u8);
    let put_f32 = |out: &mut Vec<u8>, m: &Matrix<f64>| {
        for &v in m.as_slice() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    };
    put_f32(&mut out, &ds.data.inputs);
    for &l in &ds.data.labels {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    out.extend(ds.data.splits.iter().map(|s| s.tag()));
    put_f32(&mut out, &ds.secondary);
    for &l in &ds.secondary_class {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    put_f32(&mut out, &ds.class_means);
    std::fs::write(path, out)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::MalformedFile("synthetic dump is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32_matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix<f64>> {
        let raw = self.take(rows * cols * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect();
        Matrix::new(rows, cols, data)
    }
}

pub fn read_synth_dump(path: impl AsRef<Path>) -> Result<SynthDataset> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::MalformedFile("not a synthetic dataset dump".into()));
    }
    let rows = r.u32()?;
    let dim = r.u32()?;
    let n_classes = r.u32()?;
    let n_instances = r.u32()?;
    let n_eval = r.u32()?;
    if rows != n_instances + n_eval {
        return Err(Error::MalformedFile("row count does not match split sizes".into()));
    }
    let config = SynthConfig {
        n_classes,
        n_instances,
        n_eval,
        input_dim: dim,
        class_sep: r.f64()?,
        instance_spread: r.f64()?,
        aug_noise: r.f64()?,
        false_neg_rate: r.f64()?,
        false_pos_rate: r.f64()?,
        normalize: false,
    };
    let effective = r.f64()?;
    let normalize = r.take(1)?[0] != 0;
    let config = SynthConfig { normalize, ..config };
    config.validate().map_err(|e| Error::MalformedFile(e.to_string()))?;

    let inputs = r.f32_matrix(rows, dim)?;
    let labels = (0..rows).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let splits = r
        .take(rows)?
        .iter()
        .map(|&t| Split::from_tag(t).ok_or_else(|| Error::MalformedFile(format!("bad split tag {t}"))))
        .collect::<Result<Vec<_>>>()?;
    let secondary = r.f32_matrix(rows, dim)?;
    let secondary_class = (0..rows).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let class_means = r.f32_matrix(n_classes, dim)?;
    if r.pos != bytes.len() {
        return Err(Error::MalformedFile("trailing bytes after synthetic dump".into()));
    }
    if let Some(&label) = secondary_class.iter().find(|&&l| l >= n_classes) {
        return Err(Error::LabelOutOfRange { label, n_classes });
    }
    let expected_splits = (0..rows).map(|i| if i < n_instances { Split::Train } else { Split::Eval });
    if !splits.iter().copied().eq(expected_splits) {
        return Err(Error::MalformedFile("split tags out of order".into()));
    }
    Ok(SynthDataset {
        config,
        data: LabeledDataset::new(inputs, labels, splits, n_classes)?,
        secondary,
        secondary_class,
        class_means,
        effective_false_neg_rate: effective,
    })
}

use lightcon::data::{load_cifar10_dir, read_synth_dump, synth_generate, CifarDataset};
use lightcon::tensor::{Matrix, Real, Rng};
use lightcon::{Split, SynthDataset, ViewPair, ViewSource};

use crate::config::{DataConfig, DataSource};
use crate::error::CliError;

/// Dataset named by the `[data]` section.
pub enum Source {
    Synth(SynthDataset),
    Cifar(CifarDataset),
}

impl Source {
    pub fn load(cfg: &DataConfig) -> Result<Self, CliError> {
        Ok(match cfg.source {
            DataSource::Synth => Source::Synth(synth_generate(&cfg.synth, cfg.seed)?),
            DataSource::Dump => {
                let path = cfg
                    .dump_path
                    .as_ref()
                    .ok_or_else(|| CliError::Config("data.dump_path is not set".into()))?;
                Source::Synth(read_synth_dump(path)?)
            }
            DataSource::Cifar => {
                let dir = cfg
                    .cifar_dir
                    .as_ref()
                    .ok_or_else(|| CliError::Config("data.cifar_dir is not set".into()))?;
                Source::Cifar(load_cifar10_dir(dir, cfg.augment.clone())?)
            }
        })
    }
}

impl ViewSource for Source {
    fn input_dim(&self) -> usize {
        match self {
            Source::Synth(s) => s.input_dim(),
            Source::Cifar(c) => c.input_dim(),
        }
    }

    fn n_classes(&self) -> usize {
        match self {
            Source::Synth(s) => s.n_classes(),
            Source::Cifar(c) => c.n_classes(),
        }
    }

    fn len(&self, split: Split) -> usize {
        match self {
            Source::Synth(s) => s.len(split),
            Source::Cifar(c) => c.len(split),
        }
    }

    fn labels(&self, split: Split) -> Vec<usize> {
        match self {
            Source::Synth(s) => s.labels(split),
            Source::Cifar(c) => c.labels(split),
        }
    }

    fn inputs<T: Real>(&self, split: Split) -> Matrix<T> {
        match self {
            Source::Synth(s) => s.inputs(split),
            Source::Cifar(c) => c.inputs(split),
        }
    }

    fn views(&self, index: usize, rng: &mut Rng) -> ViewPair {
        match self {
            Source::Synth(s) => s.views(index, rng),
            Source::Cifar(c) => c.views(index, rng),
        }
    }
}

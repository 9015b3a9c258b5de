use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{dot, normalize_rows, Matrix, Real, Rng};

/// Layer widths of a backbone MLP followed by a two-layer projector.
///
/// The backbone maps `encoder[0]` inputs to `encoder.last()` features with a
/// ReLU after every layer. The projector maps features to
/// `projector_hidden` (ReLU) and then linearly to `embed_dim`; its output is
/// L2-normalized.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub encoder: Vec<usize>,
    pub projector_hidden: usize,
    pub embed_dim: usize,
}

impl NetworkSpec {
    pub fn new(encoder: Vec<usize>, projector_hidden: usize, embed_dim: usize) -> Result<Self> {
        let spec = Self {
            encoder,
            projector_hidden,
            embed_dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder.len() < 2 {
            return Err(Error::InvalidConfig(
                "encoder needs an input and at least one layer".into(),
            ));
        }
        if self.layer_dims().contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0]
    }

    pub fn feature_dim(&self) -> usize {
        *self.encoder.last().expect("validated encoder")
    }

    /// Full width chain: input, backbone widths, projector hidden, embedding.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = self.encoder.clone();
        dims.push(self.projector_hidden);
        dims.push(self.embed_dim);
        dims
    }

    pub fn encoder_layers(&self) -> usize {
        self.encoder.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    weight: usize,
    bias: usize,
    relu: bool,
}

fn layout(spec: &NetworkSpec) -> Vec<Layer> {
    let dims = spec.layer_dims();
    let n_layers = dims.len() - 1;
    let mut offset = 0;
    dims.windows(2)
        .enumerate()
        .map(|(l, w)| {
            let layer = Layer {
                fan_in: w[0],
                fan_out: w[1],
                weight: offset,
                bias: offset + w[0] * w[1],
                relu: l + 1 < n_layers,
            };
            offset += w[0] * w[1] + w[1];
            layer
        })
        .collect()
}

/// Query or key network. Parameters live in one flat buffer: for each layer
/// in order, the `fan_out × fan_in` row-major weight followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    params: Vec<T>,
}

/// Everything backward needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// `activations[0]` is the input; `activations[l + 1]` the output of layer `l`.
    activations: Vec<Matrix<T>>,
    embeddings: Matrix<T>,
    norms: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    pub features: Matrix<T>,
    pub embeddings: Matrix<T>,
    pub cache: ForwardCache<T>,
}

impl<T: Real> Network<T> {
    /// He-uniform weights (`± sqrt(6 / fan_in)`), zero biases.
    pub fn new(spec: NetworkSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let layers = layout(&spec);
        let mut params = vec![T::zero(); spec.param_count()];
        for layer in &layers {
            let bound = (6.0 / layer.fan_in as f64).sqrt();
            for w in &mut params[layer.weight..layer.bias] {
                *w = T::from_f64(rng.uniform_range(-bound, bound));
            }
        }
        Ok(Self { spec, layers, params })
    }

    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let params = vec![T::zero(); spec.param_count()];
        Ok(Self {
            layers: layout(&spec),
            spec,
            params,
        })
    }

    pub fn from_params(spec: NetworkSpec, params: Vec<T>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(Error::DimensionMismatch {
                context: "network parameter count",
                expected: spec.param_count(),
                found: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(Self {
            layers: layout(&spec),
            spec,
            params,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Weight (row-major `fan_out × fan_in`) and bias of layer `l`.
    pub fn layer(&self, l: usize) -> (&[T], &[T]) {
        let layer = self.layers[l];
        (
            &self.params[layer.weight..layer.bias],
            &self.params[layer.bias..layer.bias + layer.fan_out],
        )
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [T], &mut [T]) {
        let layer = self.layers[l];
        let (w, b) = self.params[layer.weight..layer.bias + layer.fan_out].split_at_mut(layer.bias - layer.weight);
        (w, b)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    fn check_input(&self, batch: &Matrix<T>) -> Result<()> {
        if batch.cols() != self.spec.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.spec.input_dim(),
                found: batch.cols(),
            });
        }
        Ok(())
    }

    fn apply_layer(&self, l: usize, input: &Matrix<T>) -> Matrix<T> {
        let layer = self.layers[l];
        let (w, b) = self.layer(l);
        let mut out = Vec::with_capacity(input.rows() * layer.fan_out);
        for x in input.iter_rows() {
            for o in 0..layer.fan_out {
                let v = b[o] + dot(x, &w[o * layer.fan_in..(o + 1) * layer.fan_in]);
                out.push(if layer.relu && v < T::zero() { T::zero() } else { v });
            }
        }
        Matrix::from_vec_unchecked(input.rows(), layer.fan_out, out)
    }

    /// Backbone features only.
    pub fn features(&self, batch: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for l in 0..self.spec.encoder_layers() {
            x = self.apply_layer(l, &x);
        }
        Ok(x)
    }

    /// Unit-norm embeddings without keeping a cache.
    pub fn embed(&self, batch: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for l in 0..self.layers.len() {
            x = self.apply_layer(l, &x);
        }
        Ok(normalize_rows(&x)?.0)
    }

    pub fn forward(&self, batch: &Matrix<T>) -> Result<ForwardOutput<T>> {
        self.check_input(batch)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(batch.clone());
        for l in 0..self.layers.len() {
            let next = self.apply_layer(l, &activations[l]);
            activations.push(next);
        }
        let (embeddings, norms) = normalize_rows(activations.last().expect("output layer"))?;
        let features = activations[self.spec.encoder_layers()].clone();
        Ok(ForwardOutput {
            features,
            embeddings: embeddings.clone(),
            cache: ForwardCache {
                activations,
                embeddings,
                norms,
            },
        })
    }

    /// Gradient of a scalar loss with respect to every parameter, given the
    /// loss gradient with respect to the normalized embeddings.
    pub fn backward(&self, cache: &ForwardCache<T>, d_embeddings: &Matrix<T>) -> Result<Vec<T>> {
        let dims = self.spec.layer_dims();
        let batch = cache.embeddings.rows();
        let shapes_ok = cache.activations.len() == dims.len()
            && cache
                .activations
                .iter()
                .zip(&dims)
                .all(|(a, &d)| a.cols() == d && a.rows() == batch)
            && d_embeddings.rows() == batch
            && d_embeddings.cols() == self.spec.embed_dim
            && cache.norms.len() == batch;
        if !shapes_ok {
            return Err(Error::StaleCache);
        }

        // through z = u / |u|: du = (dz - z (z·dz)) / |u|
        let mut upstream = Matrix::zeros(batch, self.spec.embed_dim);
        for i in 0..batch {
            let z = cache.embeddings.row(i);
            let dz = d_embeddings.row(i);
            let proj = dot(z, dz);
            let inv = T::one() / cache.norms[i];
            for ((u, &zj), &dzj) in upstream.row_mut(i).iter_mut().zip(z).zip(dz) {
                *u = (dzj - zj * proj) * inv;
            }
        }

        let mut grads = vec![T::zero(); self.params.len()];
        for l in (0..self.layers.len()).rev() {
            let layer = self.layers[l];
            let input = &cache.activations[l];
            let output = &cache.activations[l + 1];
            if layer.relu {
                for (g, &y) in upstream.as_mut_slice().iter_mut().zip(output.as_slice()) {
                    if y <= T::zero() {
                        *g = T::zero();
                    }
                }
            }
            let (gw, gb) = grads[layer.weight..layer.bias + layer.fan_out].split_at_mut(layer.bias - layer.weight);
            for i in 0..batch {
                let x = input.row(i);
                for (o, &g) in upstream.row(i).iter().enumerate() {
                    if g == T::zero() {
                        continue;
                    }
                    gb[o] += g;
                    for (w, &xv) in gw[o * layer.fan_in..(o + 1) * layer.fan_in].iter_mut().zip(x) {
                        *w += g * xv;
                    }
                }
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                let mut down = Matrix::zeros(batch, layer.fan_in);
                for i in 0..batch {
                    let d = down.row_mut(i);
                    for (o, &g) in upstream.row(i).iter().enumerate() {
                        if g == T::zero() {
                            continue;
                        }
                        for (dv, &wv) in d.iter_mut().zip(&w[o * layer.fan_in..(o + 1) * layer.fan_in]) {
                            *dv += g * wv;
                        }
                    }
                }
                upstream = down;
            }
        }
        Ok(grads)
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            layers: self.layers.clone(),
            params: self.params.iter().map(|p| U::from_f64(p.as_f64())).collect(),
        }
    }
}

/// Backward through row-wise L2 normalization alone: given `u` and `dL/dz`
/// for `z = u / |u|`, returns `dL/du`.
pub fn normalize_backward<T: Real>(u: &[T], dz: &[T]) -> Result<Vec<T>> {
    let norm = dot(u, u).sqrt();
    if norm.as_f64() < 1e-12 {
        return Err(Error::ZeroVector);
    }
    let z: Vec<T> = u.iter().map(|&x| x / norm).collect();
    let proj = dot(&z, dz);
    Ok(z.iter().zip(dz).map(|(&zj, &dzj)| (dzj - zj * proj) / norm).collect())
}

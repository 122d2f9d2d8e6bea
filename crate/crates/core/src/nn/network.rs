//! The encoder `E`, decoder `D` and latent generator `G`.
//!
//! `E` applies the same affine map to every point (a kernel-size-1
//! convolution), then max-pools over points, so it is exactly invariant to
//! point order. `D` and `G` are fully-connected stacks. Hidden layers are
//! affine, optional layer normalization, activation; final layers are linear.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::ParamStore;
use super::tape::{Activation, NodeId, StoreId, Tape};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::rng::rng_for;
use crate::scalar::Scalar;

/// Fixed-width latent vector (`x`, `y`, `ỹ` codes and noise `z`).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode<T>(pub Vec<T>);

impl<T: Scalar> LatentCode<T> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    /// Mean absolute difference.
    pub fn l1(&self, other: &Self) -> T {
        let total = self
            .0
            .iter()
            .zip(&other.0)
            .fold(T::zero(), |acc, (&a, &b)| acc + (a - b).abs());
        total / T::from_count(self.0.len().max(1))
    }

    fn to_matrix(&self) -> Matrix<T> {
        Matrix::row_vector(self.0.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    Layer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// Points per cloud (`n`).
    pub points: usize,
    /// Ambient dimension (`d`).
    pub dim: usize,
    pub latent_dim: usize,
    pub noise_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub generator_hidden: Vec<usize>,
    pub activation: Activation,
    pub normalization: Normalization,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self::for_clouds(128, 2)
    }
}

impl NetworkSpec {
    pub fn for_clouds(points: usize, dim: usize) -> Self {
        Self {
            points,
            dim,
            latent_dim: 128,
            noise_dim: 32,
            encoder_hidden: vec![64, 128],
            decoder_hidden: vec![256],
            generator_hidden: vec![256, 256],
            activation: Activation::Relu,
            normalization: Normalization::Layer,
        }
    }

    /// Per-point widths from `d` to `latent_dim`.
    pub fn encoder_widths(&self) -> Vec<usize> {
        widths(self.dim, &self.encoder_hidden, self.latent_dim)
    }

    /// Widths from `latent_dim` to `n * d`.
    pub fn decoder_widths(&self) -> Vec<usize> {
        widths(
            self.latent_dim,
            &self.decoder_hidden,
            self.points * self.dim,
        )
    }

    /// Widths from `latent_dim + noise_dim` to `latent_dim`.
    pub fn generator_widths(&self) -> Vec<usize> {
        widths(
            self.latent_dim + self.noise_dim,
            &self.generator_hidden,
            self.latent_dim,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::UnsupportedDimension(self.dim));
        }
        if self.points == 0 || self.latent_dim == 0 {
            return Err(Error::InvalidArgument(
                "points and latent_dim must be positive".into(),
            ));
        }
        let hidden = self
            .encoder_hidden
            .iter()
            .chain(&self.decoder_hidden)
            .chain(&self.generator_hidden);
        if hidden.clone().any(|&w| w == 0) {
            return Err(Error::InvalidArgument(
                "hidden widths must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Same network with a different noise width (the unimodal baseline uses 0).
    pub fn with_noise_dim(&self, noise_dim: usize) -> Self {
        Self {
            noise_dim,
            ..self.clone()
        }
    }
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(output))
        .collect()
}

#[derive(Debug, Clone)]
struct LayerIndices {
    weight: usize,
    bias: usize,
    norm: Option<(usize, usize)>,
}

/// Parameter indices of an MLP stored under a name prefix.
#[derive(Debug, Clone)]
struct Mlp {
    layers: Vec<LayerIndices>,
    activation: Activation,
}

impl Mlp {
    fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        widths: &[usize],
        normalization: Normalization,
        seed: u64,
        stream: u64,
    ) -> Result<()> {
        let layers = widths.len() - 1;
        for l in 0..layers {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut rng = rng_for(seed, &[stream, l as u64]);
            let mut uniform = |count: usize| -> Vec<T> {
                (0..count)
                    .map(|_| T::lit(rng.random_range(-bound..bound)))
                    .collect()
            };
            let w = uniform(fan_in * fan_out);
            let b = uniform(fan_out);
            store.insert(
                format!("{prefix}.{l}.weight"),
                Matrix::from_vec(fan_in, fan_out, w)?,
            )?;
            store.insert(format!("{prefix}.{l}.bias"), Matrix::row_vector(b))?;
            if l + 1 < layers && normalization == Normalization::Layer {
                store.insert(
                    format!("{prefix}.{l}.norm_gain"),
                    Matrix::row_vector(vec![T::one(); fan_out]),
                )?;
                store.insert(
                    format!("{prefix}.{l}.norm_shift"),
                    Matrix::row_vector(vec![T::zero(); fan_out]),
                )?;
            }
        }
        Ok(())
    }

    fn resolve<T: Scalar>(
        store: &ParamStore<T>,
        prefix: &str,
        widths: &[usize],
        normalization: Normalization,
        activation: Activation,
    ) -> Result<Self> {
        let count = widths.len() - 1;
        let mut layers = Vec::with_capacity(count);
        for l in 0..count {
            let weight = store.require(&format!("{prefix}.{l}.weight"))?;
            let bias = store.require(&format!("{prefix}.{l}.bias"))?;
            let expect = |idx: usize, shape: (usize, usize)| -> Result<()> {
                let p = store.get(idx);
                if p.value.shape() != shape {
                    return Err(Error::Shape(format!(
                        "parameter {:?} has shape {:?}, expected {:?}",
                        p.name,
                        p.value.shape(),
                        shape
                    )));
                }
                Ok(())
            };
            expect(weight, (widths[l], widths[l + 1]))?;
            expect(bias, (1, widths[l + 1]))?;
            let norm = if l + 1 < count && normalization == Normalization::Layer {
                let g = store.require(&format!("{prefix}.{l}.norm_gain"))?;
                let s = store.require(&format!("{prefix}.{l}.norm_shift"))?;
                expect(g, (1, widths[l + 1]))?;
                expect(s, (1, widths[l + 1]))?;
                Some((g, s))
            } else {
                None
            };
            layers.push(LayerIndices { weight, bias, norm });
        }
        Ok(Self { layers, activation })
    }

    fn record<'a, T: Scalar>(
        &self,
        tape: &mut Tape<'a, T>,
        store: StoreId,
        mut x: NodeId,
    ) -> Result<NodeId> {
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let w = tape.param(store, layer.weight);
            let b = tape.param(store, layer.bias);
            x = tape.affine(x, w, b)?;
            if l < last {
                if let Some((g, s)) = layer.norm {
                    let (g, s) = (tape.param(store, g), tape.param(store, s));
                    x = tape.layer_norm(x, g, s)?;
                }
                x = tape.activate(x, self.activation);
            }
        }
        Ok(x)
    }
}

/// Encoder and decoder sharing one parameter store (`encoder.*`, `decoder.*`).
#[derive(Debug, Clone)]
pub struct Autoencoder<T> {
    pub spec: NetworkSpec,
    pub params: ParamStore<T>,
    encoder: Mlp,
    decoder: Mlp,
}

impl<T: Scalar> Autoencoder<T> {
    /// Fan-in-scaled uniform initialization, seeded.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamStore::new();
        Mlp::init(
            &mut params,
            "encoder",
            &spec.encoder_widths(),
            spec.normalization,
            seed,
            1,
        )?;
        Mlp::init(
            &mut params,
            "decoder",
            &spec.decoder_widths(),
            spec.normalization,
            seed,
            2,
        )?;
        Self::from_params(spec.clone(), params)
    }

    pub fn from_params(spec: NetworkSpec, params: ParamStore<T>) -> Result<Self> {
        spec.validate()?;
        let encoder = Mlp::resolve(
            &params,
            "encoder",
            &spec.encoder_widths(),
            spec.normalization,
            spec.activation,
        )?;
        let decoder = Mlp::resolve(
            &params,
            "decoder",
            &spec.decoder_widths(),
            spec.normalization,
            spec.activation,
        )?;
        Ok(Self {
            spec,
            params,
            encoder,
            decoder,
        })
    }

    pub fn cloud_matrix(&self, cloud: &PointCloud<T>) -> Result<Matrix<T>> {
        if cloud.len() != self.spec.points || cloud.dim() != self.spec.dim {
            return Err(Error::Shape(format!(
                "encoder expects {} points of dimension {}, got {} of dimension {}",
                self.spec.points,
                self.spec.dim,
                cloud.len(),
                cloud.dim()
            )));
        }
        Matrix::from_vec(cloud.len(), cloud.dim(), cloud.coords().to_vec())
    }

    /// Records `E` on the tape: `n x d` cloud node to `1 x latent_dim` code node.
    pub fn record_encoder<'a>(
        &self,
        tape: &mut Tape<'a, T>,
        store: StoreId,
        cloud: NodeId,
    ) -> Result<NodeId> {
        let per_point = self.encoder.record(tape, store, cloud)?;
        Ok(tape.max_pool_rows(per_point))
    }

    /// Records `D` on the tape: `1 x latent_dim` code node to `n x d` cloud node.
    pub fn record_decoder<'a>(
        &self,
        tape: &mut Tape<'a, T>,
        store: StoreId,
        code: NodeId,
    ) -> Result<NodeId> {
        if tape.value(code).shape() != (1, self.spec.latent_dim) {
            return Err(Error::Shape(format!(
                "decoder expects a 1x{} code, got {:?}",
                self.spec.latent_dim,
                tape.value(code).shape()
            )));
        }
        let flat = self.decoder.record(tape, store, code)?;
        tape.reshape(flat, self.spec.points, self.spec.dim)
    }

    pub fn encode(&self, cloud: &PointCloud<T>) -> Result<LatentCode<T>> {
        let mut tape = Tape::new();
        let store = tape.bind(&self.params, false);
        let x = tape.input(self.cloud_matrix(cloud)?);
        let code = self.record_encoder(&mut tape, store, x)?;
        Ok(LatentCode(tape.value(code).data().to_vec()))
    }

    pub fn decode(&self, code: &LatentCode<T>) -> Result<PointCloud<T>> {
        let mut tape = Tape::new();
        let store = tape.bind(&self.params, false);
        let c = tape.input(code.to_matrix());
        let out = self.record_decoder(&mut tape, store, c)?;
        PointCloud::from_flat(self.spec.dim, tape.value(out).data().to_vec())
    }

    pub fn reconstruct(&self, cloud: &PointCloud<T>) -> Result<PointCloud<T>> {
        self.decode(&self.encode(cloud)?)
    }
}

/// Latent generator `G(x, z)` over its own store (`generator.*`).
#[derive(Debug, Clone)]
pub struct Generator<T> {
    pub spec: NetworkSpec,
    pub params: ParamStore<T>,
    mlp: Mlp,
}

impl<T: Scalar> Generator<T> {
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamStore::new();
        Mlp::init(
            &mut params,
            "generator",
            &spec.generator_widths(),
            spec.normalization,
            seed,
            3,
        )?;
        Self::from_params(spec.clone(), params)
    }

    pub fn from_params(spec: NetworkSpec, params: ParamStore<T>) -> Result<Self> {
        spec.validate()?;
        let mlp = Mlp::resolve(
            &params,
            "generator",
            &spec.generator_widths(),
            spec.normalization,
            spec.activation,
        )?;
        Ok(Self { spec, params, mlp })
    }

    /// Records `G` on the tape: concatenates the condition code with the noise
    /// (when `noise_dim > 0`) and applies the stack.
    pub fn record<'a>(
        &self,
        tape: &mut Tape<'a, T>,
        store: StoreId,
        x_code: NodeId,
        noise: Option<NodeId>,
    ) -> Result<NodeId> {
        let input = match noise {
            Some(z) => tape.concat_cols(x_code, z)?,
            None => x_code,
        };
        let width = tape.value(input).shape();
        if width != (1, self.spec.latent_dim + self.spec.noise_dim) {
            return Err(Error::Shape(format!(
                "generator expects a 1x{} input, got {:?}",
                self.spec.latent_dim + self.spec.noise_dim,
                width
            )));
        }
        self.mlp.record(tape, store, input)
    }

    pub fn check_inputs(&self, x_code: &LatentCode<T>, z: &LatentCode<T>) -> Result<()> {
        if x_code.len() != self.spec.latent_dim {
            return Err(Error::Shape(format!(
                "condition code has {} entries, expected {}",
                x_code.len(),
                self.spec.latent_dim
            )));
        }
        if z.len() != self.spec.noise_dim {
            return Err(Error::Shape(format!(
                "noise has {} entries, expected {}",
                z.len(),
                self.spec.noise_dim
            )));
        }
        Ok(())
    }

    pub fn generate(&self, x_code: &LatentCode<T>, z: &LatentCode<T>) -> Result<LatentCode<T>> {
        self.check_inputs(x_code, z)?;
        let mut tape = Tape::new();
        let store = tape.bind(&self.params, false);
        let x = tape.input(x_code.to_matrix());
        let noise = (!z.is_empty()).then(|| tape.input(z.to_matrix()));
        let out = self.record(&mut tape, store, x, noise)?;
        Ok(LatentCode(tape.value(out).data().to_vec()))
    }
}

impl<T: Scalar> From<&LatentCode<T>> for Matrix<T> {
    fn from(code: &LatentCode<T>) -> Self {
        code.to_matrix()
    }
}

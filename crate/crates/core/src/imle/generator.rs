//! Conditional IMLE training of the latent generator, and the unimodal
//! regression baseline that shares its loop.
//!
//! Each outer epoch draws a batch, samples `m` fresh noise codes per input,
//! and selects the sample whose generated code is nearest (L1) to the code of
//! the ground-truth completion. The selections are then frozen for `M` inner
//! minibatch steps that pull the selected samples toward their targets. The
//! encoder and decoder are never updated; the UHD term back-propagates through
//! the frozen decoder into the generator.

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::config::ImleConfig;
use crate::error::{Error, Result};
use crate::geometry::{DatasetEntry, PointCloud};
use crate::metrics::{uhd_gradient, uhd_witness};
use crate::nn::{Autoencoder, Generator, Gradients, LatentCode, Matrix, Optimizer, Tape};
use crate::rng::rng_for;
use crate::scalar::Scalar;

const BATCH_STREAM: u64 = 0xB1;
const NOISE_STREAM: u64 = 0x2013;
const COMPLETE_STREAM: u64 = 0xC0;

/// One nearest-sample selection made at the start of an outer epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub input: usize,
    /// Index of the chosen sample among the `m` candidates.
    pub selected: usize,
    pub distance: f64,
    pub candidates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImleEpochStats {
    pub epoch: usize,
    pub mean_selection_distance: f64,
    /// Mean L1 latent loss over the inner-step samples.
    pub mean_latent_loss: f64,
    /// Mean UHD between the partial input and the decoded selection over the inner-step samples.
    pub mean_uhd: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImleHistory {
    pub epochs: Vec<ImleEpochStats>,
    /// Selection records of every outer epoch's batch.
    pub selections: Vec<Vec<SelectionRecord>>,
    pub steps: usize,
}

/// Latent codes of the partial (`x`) and complete (`y`) shapes under a frozen encoder.
#[derive(Debug, Clone)]
pub struct EncodedDataset<T> {
    pub x: Vec<LatentCode<T>>,
    pub y: Vec<LatentCode<T>>,
}

impl<T: Scalar> EncodedDataset<T> {
    pub fn encode(ae: &Autoencoder<T>, dataset: &[DatasetEntry<T>]) -> Result<Self> {
        let pairs = dataset
            .par_iter()
            .map(|e| Ok((ae.encode(&e.partial)?, ae.encode(&e.complete)?)))
            .collect::<Result<Vec<_>>>()?;
        let (x, y) = pairs.into_iter().unzip();
        Ok(Self { x, y })
    }
}

/// Standard normal noise code; the stream is fixed by `(seed, path)`.
pub fn noise_code<T: Scalar>(dim: usize, seed: u64, path: &[u64]) -> LatentCode<T> {
    let mut rng = rng_for(seed, path);
    LatentCode(
        (0..dim)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                T::lit(v)
            })
            .collect(),
    )
}

fn training_noise<T: Scalar>(
    dim: usize,
    seed: u64,
    epoch: usize,
    input: usize,
    sample: usize,
) -> LatentCode<T> {
    noise_code(
        dim,
        seed,
        &[NOISE_STREAM, epoch as u64, input as u64, sample as u64],
    )
}

/// Noise for the `j`-th test-time completion drawn with `seed`.
pub fn completion_noise<T: Scalar>(dim: usize, seed: u64, j: usize) -> LatentCode<T> {
    noise_code(dim, seed, &[COMPLETE_STREAM, j as u64])
}

/// Index of the smallest value; the lowest index wins ties.
pub fn argmin_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = k;
        }
    }
    best
}

fn select<T: Scalar>(
    gen: &Generator<T>,
    codes: &EncodedDataset<T>,
    input: usize,
    m: usize,
    seed: u64,
    epoch: usize,
) -> Result<SelectionRecord> {
    let candidates = (0..m)
        .map(|k| {
            let z = training_noise(gen.spec.noise_dim, seed, epoch, input, k);
            Ok(gen
                .generate(&codes.x[input], &z)?
                .l1(&codes.y[input])
                .to_f64_lossy())
        })
        .collect::<Result<Vec<f64>>>()?;
    let selected = argmin_lowest(&candidates);
    Ok(SelectionRecord {
        input,
        selected,
        distance: candidates[selected],
        candidates,
    })
}

struct SampleGrad<T> {
    latent_loss: T,
    uhd: T,
    grads: Gradients<T>,
}

#[allow(clippy::too_many_arguments)]
fn sample_gradient<T: Scalar>(
    ae: &Autoencoder<T>,
    gen: &Generator<T>,
    partial: &PointCloud<T>,
    x: &LatentCode<T>,
    y: &LatentCode<T>,
    z: &LatentCode<T>,
    latent_weight: T,
    uhd_weight: T,
) -> Result<SampleGrad<T>> {
    let mut tape = Tape::new();
    let ae_store = tape.bind(&ae.params, false);
    let g_store = tape.bind(&gen.params, true);
    let x_node = tape.input(x.into());
    let z_node = (!z.is_empty()).then(|| tape.input(z.into()));
    let y_hat = gen.record(&mut tape, g_store, x_node, z_node)?;

    let pred = tape.value(y_hat).data();
    let width = T::from_count(pred.len());
    let mut latent_loss = T::zero();
    let mut latent_seed = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(y.as_slice()) {
        latent_loss = latent_loss + (p - t).abs();
        let sign = if p > t {
            T::one()
        } else if p < t {
            -T::one()
        } else {
            T::zero()
        };
        latent_seed.push(latent_weight * sign / width);
    }
    latent_loss = latent_loss / width;
    let latent_seed = Matrix::row_vector(latent_seed);

    let mut uhd = T::zero();
    let grads = if uhd_weight > T::zero() {
        let decoded_node = ae.record_decoder(&mut tape, ae_store, y_hat)?;
        let decoded = PointCloud::from_flat(ae.spec.dim, tape.value(decoded_node).data().to_vec())?;
        uhd = uhd_witness(partial, &decoded)?.distance;
        let mut g = uhd_gradient(partial, &decoded)?.b;
        g.iter_mut().for_each(|v| *v = *v * uhd_weight);
        let uhd_seed = Matrix::from_vec(ae.spec.points, ae.spec.dim, g)?;
        tape.backward(&[(y_hat, &latent_seed), (decoded_node, &uhd_seed)])?
    } else {
        tape.backward(&[(y_hat, &latent_seed)])?
    };
    Ok(SampleGrad {
        latent_loss,
        uhd,
        grads: grads.into_store(g_store),
    })
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Imle,
    Unimodal,
}

/// Trains `G` with conditional IMLE against a frozen autoencoder.
pub fn train_generator_imle<T: Scalar>(
    dataset: &[DatasetEntry<T>],
    ae: &Autoencoder<T>,
    config: &ImleConfig,
    progress: impl FnMut(&ImleEpochStats, &Generator<T>),
) -> Result<(Generator<T>, ImleHistory)> {
    config.validate_imle()?;
    let mut gen = Generator::init(&ae.spec.with_noise_dim(config.noise_dim), config.seed)?;
    let history = run(&mut gen, dataset, ae, config, Mode::Imle, 0, progress)?;
    Ok((gen, history))
}

/// Continues IMLE training of an existing generator. `first_epoch` offsets the
/// batch and noise streams so a resumed run draws fresh samples.
pub fn continue_generator_imle<T: Scalar>(
    gen: &mut Generator<T>,
    dataset: &[DatasetEntry<T>],
    ae: &Autoencoder<T>,
    config: &ImleConfig,
    first_epoch: usize,
    progress: impl FnMut(&ImleEpochStats, &Generator<T>),
) -> Result<ImleHistory> {
    config.validate_imle()?;
    run(gen, dataset, ae, config, Mode::Imle, first_epoch, progress)
}

/// Deterministic regression baseline: same loop and loss, no noise, no selection.
pub fn train_generator_unimodal<T: Scalar>(
    dataset: &[DatasetEntry<T>],
    ae: &Autoencoder<T>,
    config: &ImleConfig,
    progress: impl FnMut(&ImleEpochStats, &Generator<T>),
) -> Result<(Generator<T>, ImleHistory)> {
    config.validate_baseline()?;
    let mut gen = Generator::init(&ae.spec.with_noise_dim(0), config.seed)?;
    let history = run(&mut gen, dataset, ae, config, Mode::Unimodal, 0, progress)?;
    Ok((gen, history))
}

/// Continues baseline training of an existing generator; see [`continue_generator_imle`].
pub fn continue_generator_unimodal<T: Scalar>(
    gen: &mut Generator<T>,
    dataset: &[DatasetEntry<T>],
    ae: &Autoencoder<T>,
    config: &ImleConfig,
    first_epoch: usize,
    progress: impl FnMut(&ImleEpochStats, &Generator<T>),
) -> Result<ImleHistory> {
    config.validate_baseline()?;
    run(
        gen,
        dataset,
        ae,
        config,
        Mode::Unimodal,
        first_epoch,
        progress,
    )
}

fn run<T: Scalar>(
    gen: &mut Generator<T>,
    dataset: &[DatasetEntry<T>],
    ae: &Autoencoder<T>,
    config: &ImleConfig,
    mode: Mode,
    first_epoch: usize,
    mut progress: impl FnMut(&ImleEpochStats, &Generator<T>),
) -> Result<ImleHistory> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument(
            "generator training needs a non-empty dataset".into(),
        ));
    }
    if gen.spec.noise_dim != config.noise_dim || gen.spec.latent_dim != ae.spec.latent_dim {
        return Err(Error::Shape(format!(
            "generator expects latent {} + noise {}, config/autoencoder give {} + {}",
            gen.spec.latent_dim, gen.spec.noise_dim, ae.spec.latent_dim, config.noise_dim
        )));
    }
    let codes = EncodedDataset::encode(ae, dataset)?;
    let m = if mode == Mode::Imle { config.m } else { 1 };
    let batch_size = config.batch_size.min(dataset.len());
    let minibatch_size = config.minibatch_size.min(batch_size);
    let mut opt = Optimizer::new(
        config.optimizer.clone(),
        &gen.params,
        config.outer_epochs * config.inner_steps,
    );
    let latent_weight = T::lit(config.latent_loss_weight);
    let uhd_weight = T::lit(config.uhd_loss_weight);
    let mut history = ImleHistory::default();

    for epoch in first_epoch..first_epoch + config.outer_epochs {
        let mut batch = index::sample(
            &mut rng_for(config.seed, &[BATCH_STREAM, epoch as u64]),
            dataset.len(),
            batch_size,
        )
        .into_vec();
        batch.sort_unstable();

        let model = &*gen;
        let records = batch
            .par_iter()
            .map(|&i| select(model, &codes, i, m, config.seed, epoch))
            .collect::<Result<Vec<_>>>()?;
        if let Some(r) = records.iter().find(|r| !r.distance.is_finite()) {
            return Err(Error::Divergence {
                step: opt.steps_taken(),
                what: format!("selection distance for input {} is {}", r.input, r.distance),
            });
        }

        let (mut latent_sum, mut uhd_sum, mut count) = (0.0, 0.0, 0usize);
        for step in 0..config.inner_steps {
            let picks = index::sample(
                &mut rng_for(config.seed, &[BATCH_STREAM, epoch as u64, step as u64 + 1]),
                records.len(),
                minibatch_size,
            )
            .into_vec();
            let model = &*gen;
            let results = picks
                .par_iter()
                .map(|&k| {
                    let r = &records[k];
                    let z = training_noise(
                        model.spec.noise_dim,
                        config.seed,
                        epoch,
                        r.input,
                        r.selected,
                    );
                    sample_gradient(
                        ae,
                        model,
                        &dataset[r.input].partial,
                        &codes.x[r.input],
                        &codes.y[r.input],
                        &z,
                        latent_weight,
                        uhd_weight,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let mut total = gen.params.zero_gradients();
            for s in &results {
                let loss = s.latent_loss.to_f64_lossy() * config.latent_loss_weight
                    + s.uhd.to_f64_lossy() * config.uhd_loss_weight;
                if !loss.is_finite() {
                    return Err(Error::Divergence {
                        step: opt.steps_taken(),
                        what: format!("loss is {loss}"),
                    });
                }
                latent_sum += s.latent_loss.to_f64_lossy();
                uhd_sum += s.uhd.to_f64_lossy();
                count += 1;
                total.add_assign(&s.grads);
            }
            total.scale(T::one() / T::from_count(results.len()));
            opt.step(&mut gen.params, &total, config.eta)?;
            history.steps += 1;
        }

        let denom = count.max(1) as f64;
        let stats = ImleEpochStats {
            epoch,
            mean_selection_distance: records.iter().map(|r| r.distance).sum::<f64>()
                / records.len() as f64,
            mean_latent_loss: latent_sum / denom,
            mean_uhd: uhd_sum / denom,
        };
        progress(&stats, gen);
        history.epochs.push(stats);
        history.selections.push(records);
    }
    Ok(history)
}

/// For each input, the distance from its ground-truth code to the nearest of
/// `m` generated codes under fixed noise (the quantity IMLE drives down).
pub fn nearest_sample_distances<T: Scalar>(
    gen: &Generator<T>,
    codes: &EncodedDataset<T>,
    m: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..codes.x.len())
        .into_par_iter()
        .map(|i| {
            let mut best = f64::INFINITY;
            for j in 0..m.max(1) {
                let z = completion_noise(gen.spec.noise_dim, seed, j);
                best = best.min(
                    gen.generate(&codes.x[i], &z)?
                        .l1(&codes.y[i])
                        .to_f64_lossy(),
                );
            }
            Ok(best)
        })
        .collect()
}

/// Test-time completion: `D(G(E(partial), z_j))` for `j = 0..m`, noise drawn from `seed`.
pub fn complete<T: Scalar>(
    ae: &Autoencoder<T>,
    gen: &Generator<T>,
    partial: &PointCloud<T>,
    m: usize,
    seed: u64,
) -> Result<Vec<PointCloud<T>>> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "number of completions must be >= 1".into(),
        ));
    }
    if gen.spec.latent_dim != ae.spec.latent_dim {
        return Err(Error::Shape(format!(
            "generator latent width {} does not match autoencoder {}",
            gen.spec.latent_dim, ae.spec.latent_dim
        )));
    }
    let code = ae.encode(partial)?;
    (0..m)
        .into_par_iter()
        .map(|j| ae.decode(&gen.generate(&code, &completion_noise(gen.spec.noise_dim, seed, j))?))
        .collect()
}

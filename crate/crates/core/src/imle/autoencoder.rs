//! EMD reconstruction training of the autoencoder on partial and complete shapes.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::config::AeConfig;
use crate::error::{Error, Result};
use crate::geometry::{DatasetEntry, PointCloud};
use crate::metrics::emd_exact;
use crate::nn::{Autoencoder, Gradients, Matrix, NetworkSpec, Optimizer, Tape};
use crate::rng::rng_for;
use crate::scalar::Scalar;

const SHUFFLE_STREAM: u64 = 0xAE;

/// Per-epoch mean reconstruction EMD (mean over points, then over clouds).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AeHistory {
    pub epoch_mean_emd: Vec<f64>,
    /// Optimizer steps taken in this run.
    pub steps: usize,
}

/// Every partial and complete cloud of the dataset, in entry order.
pub fn training_clouds<T: Scalar>(dataset: &[DatasetEntry<T>]) -> Vec<&PointCloud<T>> {
    dataset
        .iter()
        .flat_map(|e| [&e.partial, &e.complete])
        .collect()
}

/// Loss (EMD divided by `n`) and autoencoder gradients for one cloud.
pub fn reconstruction_loss_and_grad<T: Scalar>(
    ae: &Autoencoder<T>,
    cloud: &PointCloud<T>,
) -> Result<(T, Gradients<T>)> {
    let mut tape = Tape::new();
    let store = tape.bind(&ae.params, true);
    let x = tape.input(ae.cloud_matrix(cloud)?);
    let code = ae.record_encoder(&mut tape, store, x)?;
    let out = ae.record_decoder(&mut tape, store, code)?;
    let decoded =
        PointCloud::from_flat(ae.spec.dim, tape.value(out).data().to_vec()).map_err(|e| {
            Error::Divergence {
                step: 0,
                what: format!("decoder output: {e}"),
            }
        })?;
    let matching = emd_exact(cloud, &decoded)?;
    let inv_n = T::one() / T::from_count(cloud.len());
    let mut seed = matching.gradient(cloud, &decoded).b;
    seed.iter_mut().for_each(|g| *g = *g * inv_n);
    let seed = Matrix::from_vec(ae.spec.points, ae.spec.dim, seed)?;
    let grads = tape.backward(&[(out, &seed)])?.into_store(store);
    Ok((matching.mean_cost(), grads))
}

/// Mean per-point EMD between each cloud and its reconstruction.
pub fn reconstruction_emd<T: Scalar>(
    ae: &Autoencoder<T>,
    clouds: &[&PointCloud<T>],
) -> Result<f64> {
    let losses = clouds
        .par_iter()
        .map(|c| {
            Ok(emd_exact(c, &ae.reconstruct(c)?)?
                .mean_cost()
                .to_f64_lossy())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Trains a freshly initialized autoencoder; see [`continue_autoencoder`].
pub fn train_autoencoder<T: Scalar>(
    dataset: &[DatasetEntry<T>],
    spec: &NetworkSpec,
    config: &AeConfig,
    progress: impl FnMut(usize, f64, &Autoencoder<T>),
) -> Result<(Autoencoder<T>, AeHistory)> {
    let mut ae = Autoencoder::init(spec, config.seed)?;
    let history = continue_autoencoder(&mut ae, dataset, config, 0, progress)?;
    Ok((ae, history))
}

/// Runs `config.epochs` epochs of minibatch EMD training over the union of all
/// partial and complete clouds. `first_epoch` offsets the shuffling streams so
/// a resumed run does not replay the batches of the run it continues.
pub fn continue_autoencoder<T: Scalar>(
    ae: &mut Autoencoder<T>,
    dataset: &[DatasetEntry<T>],
    config: &AeConfig,
    first_epoch: usize,
    mut progress: impl FnMut(usize, f64, &Autoencoder<T>),
) -> Result<AeHistory> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument(
            "autoencoder training needs a non-empty dataset".into(),
        ));
    }
    let clouds = training_clouds(dataset);
    for c in &clouds {
        ae.cloud_matrix(c)?;
    }
    let batches_per_epoch = clouds.len().div_ceil(config.batch_size);
    let mut opt = Optimizer::new(
        config.optimizer.clone(),
        &ae.params,
        config.epochs * batches_per_epoch,
    );
    let mut history = AeHistory::default();

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..clouds.len()).collect();
        order.shuffle(&mut rng_for(
            config.seed,
            &[SHUFFLE_STREAM, (first_epoch + epoch) as u64],
        ));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let model = &*ae;
            let results = batch
                .par_iter()
                .map(|&i| reconstruction_loss_and_grad(model, clouds[i]))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| match e {
                    Error::Divergence { what, .. } => Error::Divergence {
                        step: opt.steps_taken(),
                        what,
                    },
                    other => other,
                })?;
            let mut total = ae.params.zero_gradients();
            for (loss, g) in &results {
                if !loss.is_finite() {
                    return Err(Error::Divergence {
                        step: opt.steps_taken(),
                        what: format!("reconstruction loss is {loss}"),
                    });
                }
                epoch_loss += loss.to_f64_lossy();
                total.add_assign(g);
            }
            total.scale(T::one() / T::from_count(results.len()));
            opt.step(&mut ae.params, &total, config.eta)?;
            history.steps += 1;
        }
        let mean = epoch_loss / clouds.len() as f64;
        history.epoch_mean_emd.push(mean);
        progress(first_epoch + epoch, mean, ae);
    }
    Ok(history)
}

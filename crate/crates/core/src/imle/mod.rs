//! Autoencoder pretraining, conditional IMLE generator training, the unimodal
//! baseline, and test-time multimodal completion.

mod autoencoder;
mod config;
mod generator;

pub use autoencoder::{
    continue_autoencoder, reconstruction_emd, reconstruction_loss_and_grad, train_autoencoder,
    training_clouds, AeHistory,
};
pub use config::{AeConfig, ImleConfig};
pub use generator::{
    argmin_lowest, complete, completion_noise, continue_generator_imle,
    continue_generator_unimodal, nearest_sample_distances, noise_code, train_generator_imle,
    train_generator_unimodal, EncodedDataset, ImleEpochStats, ImleHistory, SelectionRecord,
};

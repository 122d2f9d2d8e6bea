//! Run configuration: defaults, a TOML file, then `key.path=value` overrides.

use std::path::{Path, PathBuf};

use imle_complete::eval::EvalConfig;
use imle_complete::geometry::SyntheticSpec;
use imle_complete::imle::{AeConfig, ImleConfig};
use imle_complete::nn::{Activation, NetworkSpec, Normalization, OptimizerConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root seed for every random stream of the command.
    pub seed: u64,
    pub paths: Paths,
    pub data: DataSection,
    pub network: NetworkSection,
    pub ae: AeSection,
    pub imle: ImleSection,
    pub complete: CompleteSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Dataset directory read by the training and eval commands.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ae_checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator_checkpoint: Option<PathBuf>,
    /// Checkpoint to continue training from.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resume: Option<PathBuf>,
    /// Partial cloud for `complete`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub count: usize,
    pub template: String,
    pub mode_count: usize,
    pub points_per_cloud: usize,
    pub noise_sigma: f64,
    pub partial_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        let s = SyntheticSpec::default();
        Self {
            count: 300,
            template: s.template,
            mode_count: s.mode_count,
            points_per_cloud: s.points_per_cloud,
            noise_sigma: s.noise_sigma,
            partial_fraction: s.partial_fraction,
        }
    }
}

impl DataSection {
    pub fn synthetic(&self) -> SyntheticSpec {
        SyntheticSpec {
            template: self.template.clone(),
            mode_count: self.mode_count,
            points_per_cloud: self.points_per_cloud,
            noise_sigma: self.noise_sigma,
            partial_fraction: self.partial_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub generator_hidden: Vec<usize>,
    pub activation: Activation,
    pub normalization: Normalization,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let s = NetworkSpec::default();
        Self {
            latent_dim: s.latent_dim,
            encoder_hidden: s.encoder_hidden,
            decoder_hidden: s.decoder_hidden,
            generator_hidden: s.generator_hidden,
            activation: s.activation,
            normalization: s.normalization,
        }
    }
}

impl NetworkSection {
    /// The full spec for clouds of `points` x `dim` with `noise_dim` noise inputs.
    pub fn spec(&self, points: usize, dim: usize, noise_dim: usize) -> NetworkSpec {
        NetworkSpec {
            points,
            dim,
            latent_dim: self.latent_dim,
            noise_dim,
            encoder_hidden: self.encoder_hidden.clone(),
            decoder_hidden: self.decoder_hidden.clone(),
            generator_hidden: self.generator_hidden.clone(),
            activation: self.activation,
            normalization: self.normalization,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeSection {
    pub epochs: usize,
    pub eta: f64,
    pub batch_size: usize,
    /// Rewrite the checkpoint every this many epochs (0: only at the end).
    pub checkpoint_every: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for AeSection {
    fn default() -> Self {
        let c = AeConfig::default();
        Self {
            epochs: c.epochs,
            eta: c.eta,
            batch_size: c.batch_size,
            checkpoint_every: 0,
            optimizer: c.optimizer,
        }
    }
}

impl AeSection {
    pub fn config(&self, seed: u64) -> AeConfig {
        AeConfig {
            epochs: self.epochs,
            eta: self.eta,
            batch_size: self.batch_size,
            seed,
            optimizer: self.optimizer.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImleSection {
    pub m: usize,
    pub outer_epochs: usize,
    pub inner_steps: usize,
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub eta: f64,
    pub latent_loss_weight: f64,
    pub uhd_loss_weight: f64,
    pub noise_dim: usize,
    pub checkpoint_every: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for ImleSection {
    fn default() -> Self {
        let c = ImleConfig::default();
        Self {
            m: c.m,
            outer_epochs: c.outer_epochs,
            inner_steps: c.inner_steps,
            batch_size: c.batch_size,
            minibatch_size: c.minibatch_size,
            eta: c.eta,
            latent_loss_weight: c.latent_loss_weight,
            uhd_loss_weight: c.uhd_loss_weight,
            noise_dim: c.noise_dim,
            checkpoint_every: 0,
            optimizer: c.optimizer,
        }
    }
}

impl ImleSection {
    pub fn config(&self, seed: u64) -> ImleConfig {
        ImleConfig {
            m: self.m,
            outer_epochs: self.outer_epochs,
            inner_steps: self.inner_steps,
            batch_size: self.batch_size,
            minibatch_size: self.minibatch_size,
            eta: self.eta,
            latent_loss_weight: self.latent_loss_weight,
            uhd_loss_weight: self.uhd_loss_weight,
            noise_dim: self.noise_dim,
            seed,
            optimizer: self.optimizer.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompleteSection {
    /// Completions written per input.
    pub m: usize,
}

impl Default for CompleteSection {
    fn default() -> Self {
        Self { m: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub m: usize,
    pub sigma: f64,
    pub mode_threshold: f64,
    /// Render completions of the first `svg_entries` test entries (2D data only).
    pub svg: bool,
    pub svg_entries: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        let c = EvalConfig::default();
        Self {
            m: c.m,
            sigma: c.sigma,
            mode_threshold: c.mode_threshold,
            svg: false,
            svg_entries: 4,
        }
    }
}

impl EvalSection {
    pub fn config(&self, seed: u64) -> EvalConfig {
        EvalConfig {
            m: self.m,
            seed,
            sigma: self.sigma,
            mode_threshold: self.mode_threshold,
        }
    }
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    let wrapped = format!("v = {value}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(value.to_string())),
        Err(_) => toml::Value::String(value.to_string()),
    }
}

/// Sets `key.path` in `table`, creating intermediate tables.
pub fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("malformed config key {key:?}")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| {
            CliError::Usage(format!("config key {key:?}: {part:?} is not a table"))
        })?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Splits a `key.path=value` override.
pub fn parse_override(text: &str) -> Result<(String, toml::Value), CliError> {
    let (key, value) = text.split_once('=').ok_or_else(|| {
        CliError::Usage(format!(
            "override {text:?} is not of the form key.path=value"
        ))
    })?;
    Ok((key.trim().to_string(), parse_value(value.trim())))
}

/// Resolves defaults, then the optional file, then overrides in order.
pub fn resolve(
    file: Option<&Path>,
    overrides: &[(String, toml::Value)],
) -> Result<RunConfig, CliError> {
    let mut table = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?
        }
        None => toml::Table::new(),
    };
    for (key, value) in overrides {
        set_key(&mut table, key, value.clone())?;
    }
    RunConfig::deserialize(table).map_err(|e| CliError::Usage(format!("config: {e}")))
}

impl RunConfig {
    /// The resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_in_order_and_unknown_keys_fail() {
        let o = vec![
            parse_override("imle.m=4").unwrap(),
            parse_override("data.template=chair").unwrap(),
        ];
        let c = resolve(None, &o).unwrap();
        assert_eq!(c.imle.m, 4);
        assert_eq!(c.data.template, "chair");
        let bad = resolve(None, &[parse_override("imle.mm=4").unwrap()]).unwrap_err();
        assert!(bad.to_string().contains("mm"), "{bad}");
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = resolve(None, &[parse_override("paths.data=\"d\"").unwrap()]).unwrap();
        let text = c.to_toml();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.paths.data, Some(PathBuf::from("d")));
    }
}

//! Evaluation protocol: diversity (TMD), containment (UHD), and mode coverage
//! against each entry's canonical mode shapes.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DatasetEntry, PointCloud};
use crate::imle::complete;
use crate::metrics::{chamfer, tmd, uhd};
use crate::nn::{Autoencoder, Generator};
use crate::rng::{derive_seed, rng_for};
use crate::scalar::Scalar;

const JITTER_STREAM: u64 = 0x7177;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Completions drawn per test entry.
    pub m: usize,
    pub seed: u64,
    /// Std of the Gaussian jitter added to each partial coordinate.
    pub sigma: f64,
    /// A sample counts toward its nearest mode only when its Chamfer distance to
    /// that mode is below `mode_threshold` times half the smallest Chamfer
    /// distance between two of the entry's modes.
    pub mode_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            m: 10,
            seed: 0,
            sigma: 0.0,
            mode_threshold: 2.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidArgument(format!(
                "eval.m must be >= 2, got {}",
                self.m
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eval.sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        if !(self.mode_threshold > 0.0 && self.mode_threshold.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eval.mode_threshold must be finite and > 0, got {}",
                self.mode_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub index: usize,
    pub tmd: f64,
    /// UHD from the (possibly jittered) partial input to each sample, averaged over samples.
    pub mean_uhd: f64,
    /// Assigned mode of each sample; `None` when no mode is close enough.
    pub sample_modes: Vec<Option<usize>>,
    /// Sorted distinct modes among the samples.
    pub covered_modes: Vec<usize>,
    pub coverage_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode_count: usize,
    pub m: usize,
    pub seed: u64,
    pub sigma: f64,
    /// Hash of the un-jittered test partials; reports are comparable only when equal.
    pub test_set_fingerprint: String,
    pub mean_tmd: f64,
    pub mean_uhd: f64,
    /// Fraction of entries whose samples touch all modes.
    pub coverage_rate: f64,
    pub per_mode_hit_rate: Vec<f64>,
    pub entries: Vec<EntryRecord>,
}

/// Order-sensitive FNV-1a over the partial clouds' coordinate bits.
pub fn test_set_fingerprint<T: Scalar>(test_set: &[DatasetEntry<T>]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    eat(&(test_set.len() as u64).to_le_bytes());
    for e in test_set {
        eat(&(e.partial.len() as u64).to_le_bytes());
        eat(&(e.partial.dim() as u64).to_le_bytes());
        for &c in e.partial.coords() {
            eat(&c.to_f64_lossy().to_bits().to_le_bytes());
        }
    }
    format!("{h:016x}")
}

/// Assigns `sample` to the nearest of `refs` under Chamfer distance, or `None`
/// when it is farther than the threshold. Lowest index wins ties.
pub fn assign_mode<T: Scalar>(
    sample: &PointCloud<T>,
    refs: &[PointCloud<T>],
    threshold: f64,
) -> Result<Option<usize>> {
    if refs.is_empty() {
        return Err(Error::MissingModeReferences(0));
    }
    let distances = refs
        .iter()
        .map(|r| Ok(chamfer(sample, r)?.value.to_f64_lossy()))
        .collect::<Result<Vec<f64>>>()?;
    let best = crate::imle::argmin_lowest(&distances);
    if refs.len() == 1 {
        return Ok(Some(0));
    }
    let mut separation = f64::INFINITY;
    for i in 0..refs.len() {
        for j in i + 1..refs.len() {
            separation = separation.min(chamfer(&refs[i], &refs[j])?.value.to_f64_lossy());
        }
    }
    Ok((distances[best] < threshold * separation / 2.0).then_some(best))
}

/// Adds i.i.d. Gaussian noise of std `sigma` to every coordinate.
pub fn jitter<T: Scalar>(cloud: &PointCloud<T>, sigma: f64, seed: u64) -> Result<PointCloud<T>> {
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidArgument(format!("jitter sigma: {e}")))?;
    let mut rng = rng_for(seed, &[JITTER_STREAM]);
    cloud.map_coords(|_, c| c + T::lit(normal.sample(&mut rng)))
}

fn evaluate_entry<T: Scalar>(
    ae: &Autoencoder<T>,
    gen: &Generator<T>,
    entry: &DatasetEntry<T>,
    index: usize,
    config: &EvalConfig,
) -> Result<EntryRecord> {
    if entry.mode_refs.is_empty() {
        return Err(Error::MissingModeReferences(index));
    }
    let entry_seed = derive_seed(config.seed, &[index as u64]);
    let input = if config.sigma > 0.0 {
        jitter(&entry.partial, config.sigma, entry_seed)?
    } else {
        entry.partial.clone()
    };
    let samples = complete(ae, gen, &input, config.m, entry_seed)?;
    let tmd = tmd(&samples)?.value.to_f64_lossy();
    let uhd_sum = samples
        .iter()
        .map(|s| Ok(uhd(&input, s)?.value.to_f64_lossy()))
        .sum::<Result<f64>>()?;
    let sample_modes = samples
        .iter()
        .map(|s| assign_mode(s, &entry.mode_refs, config.mode_threshold))
        .collect::<Result<Vec<_>>>()?;
    let mut covered_modes: Vec<usize> = sample_modes.iter().flatten().copied().collect();
    covered_modes.sort_unstable();
    covered_modes.dedup();
    Ok(EntryRecord {
        index,
        tmd,
        mean_uhd: uhd_sum / samples.len() as f64,
        sample_modes,
        coverage_count: covered_modes.len(),
        covered_modes,
    })
}

/// Evaluates the model on `test_set` with `config.sigma` input jitter (none when zero).
pub fn noise_robustness_eval<T: Scalar>(
    ae: &Autoencoder<T>,
    gen: &Generator<T>,
    test_set: &[DatasetEntry<T>],
    config: &EvalConfig,
) -> Result<EvalReport> {
    config.validate()?;
    if test_set.is_empty() {
        return Err(Error::InvalidArgument(
            "evaluation needs a non-empty test set".into(),
        ));
    }
    let mode_count = test_set[0].mode_refs.len();
    if let Some((i, _)) = test_set
        .iter()
        .enumerate()
        .find(|(_, e)| e.mode_refs.len() != mode_count || mode_count == 0)
    {
        return Err(Error::MissingModeReferences(i));
    }
    let entries = test_set
        .par_iter()
        .enumerate()
        .map(|(i, e)| evaluate_entry(ae, gen, e, i, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_entries(
        mode_count,
        config,
        test_set_fingerprint(test_set),
        entries,
    ))
}

/// Noise-free evaluation; equal to [`noise_robustness_eval`] with `sigma = 0`.
pub fn evaluate<T: Scalar>(
    ae: &Autoencoder<T>,
    gen: &Generator<T>,
    test_set: &[DatasetEntry<T>],
    m: usize,
    seed: u64,
) -> Result<EvalReport> {
    noise_robustness_eval(
        ae,
        gen,
        test_set,
        &EvalConfig {
            m,
            seed,
            sigma: 0.0,
            ..EvalConfig::default()
        },
    )
}

impl EvalReport {
    pub fn from_entries(
        mode_count: usize,
        config: &EvalConfig,
        fingerprint: String,
        entries: Vec<EntryRecord>,
    ) -> Self {
        let count = entries.len().max(1) as f64;
        let mean = |f: &dyn Fn(&EntryRecord) -> f64| entries.iter().map(f).sum::<f64>() / count;
        let mean_tmd = mean(&|e| e.tmd);
        let mean_uhd = mean(&|e| e.mean_uhd);
        let coverage_rate = mean(&|e| {
            if e.coverage_count == mode_count {
                1.0
            } else {
                0.0
            }
        });
        let per_mode_hit_rate = (0..mode_count)
            .map(|k| {
                mean(&|e| {
                    if e.covered_modes.contains(&k) {
                        1.0
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        Self {
            mode_count,
            m: config.m,
            seed: config.seed,
            sigma: config.sigma,
            test_set_fingerprint: fingerprint,
            mean_tmd,
            mean_uhd,
            coverage_rate,
            per_mode_hit_rate,
            entries,
        }
    }

    /// Per-entry table; sample modes use `-` for unassigned samples.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("index,tmd,mean_uhd,coverage_count,covered_modes,sample_modes\n");
        for e in &self.entries {
            let covered: Vec<String> = e.covered_modes.iter().map(|k| k.to_string()).collect();
            let samples: Vec<String> = e
                .sample_modes
                .iter()
                .map(|k| k.map_or_else(|| "-".to_string(), |k| k.to_string()))
                .collect();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.index,
                e.tmd,
                e.mean_uhd,
                e.coverage_count,
                covered.join(";"),
                samples.join(";")
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("malformed report: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub names: Vec<String>,
    /// `(metric, one value per report)` in fixed metric order.
    pub rows: Vec<(String, Vec<f64>)>,
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("metric,{}\n", self.names.join(","));
        for (metric, values) in &self.rows {
            let cells: Vec<String> = values.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("{metric},{}\n", cells.join(",")));
        }
        out
    }
}

/// Side-by-side aggregates of reports over the same test set, in input order.
pub fn compare(reports: &[(String, &EvalReport)]) -> Result<ComparisonTable> {
    if reports.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "compare needs at least 2 reports, got {}",
            reports.len()
        )));
    }
    let first = reports[0].1;
    for (name, r) in &reports[1..] {
        if r.test_set_fingerprint != first.test_set_fingerprint
            || r.entries.len() != first.entries.len()
        {
            return Err(Error::MismatchedTestSets(format!(
                "{name} was evaluated on test set {} ({} entries), {} on {} ({} entries)",
                r.test_set_fingerprint,
                r.entries.len(),
                reports[0].0,
                first.test_set_fingerprint,
                first.entries.len()
            )));
        }
    }
    let column = |f: fn(&EvalReport) -> f64| reports.iter().map(|(_, r)| f(r)).collect();
    Ok(ComparisonTable {
        names: reports.iter().map(|(n, _)| n.clone()).collect(),
        rows: vec![
            ("mean_tmd".to_string(), column(|r| r.mean_tmd)),
            ("mean_uhd".to_string(), column(|r| r.mean_uhd)),
            ("coverage_rate".to_string(), column(|r| r.coverage_rate)),
        ],
    })
}

//! Command implementations. Each validates its configuration and inputs before
//! writing anything to the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use imle_complete::eval::{compare as compare_reports, noise_robustness_eval, EvalReport};
use imle_complete::geometry::io::{read_dataset, read_pcd, write_dataset, write_pcd};
use imle_complete::geometry::{make_dataset, DatasetEntry, PointCloud};
use imle_complete::imle::{
    complete as complete_samples, continue_autoencoder, continue_generator_imle,
    continue_generator_unimodal, ImleHistory,
};
use imle_complete::metrics::uhd;
use imle_complete::nn::{Autoencoder, Checkpoint, Generator};
use imle_complete::rng::derive_seed;
use imle_complete::Error;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::svg;

pub const MANIFEST_VERSION: u32 = 1;
const RESAMPLE_STREAM: u64 = 0x5E;

pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Imle,
    Baseline,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    seed: u64,
    count: usize,
    spec: imle_complete::geometry::SyntheticSpec,
}

#[derive(Debug, Serialize)]
struct SampleRecord {
    file: String,
    uhd: f64,
}

#[derive(Debug, Serialize)]
struct CompletionSidecar {
    seed: u64,
    m: usize,
    input: String,
    ae_checkpoint_sha256: String,
    generator_checkpoint_sha256: String,
    samples: Vec<SampleRecord>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn required<'a>(value: &'a Option<PathBuf>, key: &str, flag: &str) -> Result<&'a Path, CliError> {
    let p = value
        .as_deref()
        .ok_or_else(|| usage(format!("missing {key} (set it or pass {flag})")))?;
    if !p.exists() {
        return Err(CliError::io(
            p,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not found"),
        ));
    }
    Ok(p)
}

/// Refuses a non-empty output directory unless forced.
fn check_out(ctx: &Context) -> Result<(), CliError> {
    if ctx.force || !ctx.out.exists() {
        return Ok(());
    }
    let mut entries = fs::read_dir(&ctx.out).map_err(|e| CliError::io(&ctx.out, e))?;
    if entries.next().is_some() {
        return Err(usage(format!(
            "output directory {} is not empty (pass --force to write into it)",
            ctx.out.display()
        )));
    }
    Ok(())
}

fn create_out(ctx: &Context) -> Result<(), CliError> {
    fs::create_dir_all(&ctx.out).map_err(|e| CliError::io(&ctx.out, e))?;
    write(
        &ctx.out.join("config.toml"),
        ctx.config.to_toml().as_bytes(),
    )
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

fn log(command: &str, start: Instant, msg: std::fmt::Arguments) {
    eprintln!(
        "[{command}] {msg} wall {:.1}s",
        start.elapsed().as_secs_f64()
    );
}

/// Whether entry `index` belongs to the test split (one in five, by seeded hash).
pub fn is_test_entry(split_seed: u64, index: usize) -> bool {
    derive_seed(split_seed, &[index as u64]).is_multiple_of(5)
}

struct LoadedData {
    train: Vec<DatasetEntry<f64>>,
    test: Vec<DatasetEntry<f64>>,
}

/// Reads a dataset and splits it by the seed recorded in its manifest
/// (the run seed when there is no manifest).
fn load_data(dir: &Path, fallback_seed: u64) -> Result<LoadedData, CliError> {
    let manifest_path = dir.join("manifest.json");
    let split_seed = if manifest_path.exists() {
        let text =
            fs::read_to_string(&manifest_path).map_err(|e| CliError::io(&manifest_path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| {
            CliError::Core(Error::Parse {
                line: e.line(),
                msg: format!("manifest.json: {e}"),
            })
        })?;
        m.seed
    } else {
        fallback_seed
    };
    let entries = read_dataset::<f64>(dir)?;
    if entries.is_empty() {
        return Err(usage(format!("dataset {} is empty", dir.display())));
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, e) in entries.into_iter().enumerate() {
        if is_test_entry(split_seed, i) {
            test.push(e);
        } else {
            train.push(e);
        }
    }
    Ok(LoadedData { train, test })
}

fn load_autoencoder(path: &Path) -> Result<(Autoencoder<f64>, u64), CliError> {
    let ckpt = Checkpoint::<f64>::load(path)?;
    let step = ckpt.step;
    Ok((ckpt.into_autoencoder()?, step))
}

fn load_generator(path: &Path) -> Result<(Generator<f64>, u64), CliError> {
    let ckpt = Checkpoint::<f64>::load(path)?;
    let step = ckpt.step;
    Ok((ckpt.into_generator()?, step))
}

pub fn gen_data(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let spec = c.data.synthetic();
    spec.validate().map_err(|e| match e {
        Error::UnknownTemplate(t) => usage(format!(
            "data.template: unknown template {t:?} (expected table, chair or table3d)"
        )),
        other => usage(format!("data: {other}")),
    })?;
    if c.data.count == 0 {
        return Err(usage("data.count must be positive"));
    }
    check_out(ctx)?;
    let entries = make_dataset::<f64>(&spec, c.data.count, c.seed)?;
    create_out(ctx)?;
    write_dataset(&ctx.out, &entries)?;
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        seed: c.seed,
        count: c.data.count,
        spec,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write(
        &ctx.out.join("manifest.json"),
        format!("{json}\n").as_bytes(),
    )?;
    eprintln!(
        "[gen-data] wrote {} entries to {}",
        c.data.count,
        ctx.out.display()
    );
    Ok(())
}

pub fn train_ae(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let config = c.ae.config(c.seed);
    config.validate().map_err(|e| usage(format!("ae: {e}")))?;
    let data_dir = required(&c.paths.data, "paths.data", "--data")?;
    let data = load_data(data_dir, c.seed)?;
    let (n, d) = (data.train[0].complete.len(), data.train[0].complete.dim());
    let (mut ae, base_step) = match &c.paths.resume {
        Some(p) => load_autoencoder(required(&Some(p.clone()), "paths.resume", "--resume")?)?,
        None => {
            let spec = c.network.spec(n, d, c.imle.noise_dim);
            spec.validate()
                .map_err(|e| usage(format!("network: {e}")))?;
            (Autoencoder::init(&spec, c.seed)?, 0)
        }
    };
    if ae.spec.points != n || ae.spec.dim != d {
        return Err(usage(format!(
            "autoencoder expects {}x{} clouds, dataset has {n}x{d}",
            ae.spec.points, ae.spec.dim
        )));
    }
    check_out(ctx)?;
    create_out(ctx)?;

    let batches = (2 * data.train.len()).div_ceil(config.batch_size) as u64;
    let first_epoch = (base_step / batches) as usize;
    let ckpt_path = ctx.out.join("ae.ckpt");
    let start = Instant::now();
    let mut save_error = None;
    let every = c.ae.checkpoint_every;
    let history = continue_autoencoder(
        &mut ae,
        &data.train,
        &config,
        first_epoch,
        |epoch, loss, model| {
            log(
                "train-ae",
                start,
                format_args!("epoch {epoch} mean_emd {loss:.6}"),
            );
            let done = (epoch + 1 - first_epoch) as u64;
            if every > 0 && done.is_multiple_of(every as u64) && save_error.is_none() {
                let ck = Checkpoint::from_autoencoder(model, c.seed, base_step + done * batches);
                save_error = ck.save(&ckpt_path).err();
            }
        },
    )?;
    if let Some(e) = save_error {
        return Err(e.into());
    }
    Checkpoint::from_autoencoder(&ae, c.seed, base_step + history.steps as u64).save(&ckpt_path)?;
    let mut csv = String::from("epoch,mean_emd\n");
    for (i, v) in history.epoch_mean_emd.iter().enumerate() {
        let _ = writeln!(csv, "{},{v}", first_epoch + i);
    }
    write(&ctx.out.join("ae_history.csv"), csv.as_bytes())
}

fn history_csv(history: &ImleHistory) -> (String, String) {
    let mut epochs = String::from("epoch,mean_selection_distance,mean_latent_loss,mean_uhd\n");
    for e in &history.epochs {
        let _ = writeln!(
            epochs,
            "{},{},{},{}",
            e.epoch, e.mean_selection_distance, e.mean_latent_loss, e.mean_uhd
        );
    }
    let mut selections = String::from("epoch,input,selected,distance\n");
    for (stats, batch) in history.epochs.iter().zip(&history.selections) {
        for r in batch {
            let _ = writeln!(
                selections,
                "{},{},{},{}",
                stats.epoch, r.input, r.selected, r.distance
            );
        }
    }
    (epochs, selections)
}

pub fn train_generator(ctx: &Context, stage: Stage) -> Result<(), CliError> {
    let c = &ctx.config;
    let name = match stage {
        Stage::Imle => "train-imle",
        Stage::Baseline => "train-baseline",
    };
    let config = match stage {
        Stage::Imle => {
            let config = c.imle.config(c.seed);
            config
                .validate_imle()
                .map_err(|e| usage(format!("imle: {e}")))?;
            config
        }
        Stage::Baseline => {
            let config = c.imle.config(c.seed).baseline();
            config
                .validate_baseline()
                .map_err(|e| usage(format!("imle: {e}")))?;
            config
        }
    };
    let data_dir = required(&c.paths.data, "paths.data", "--data")?;
    let ae_path = required(&c.paths.ae_checkpoint, "paths.ae_checkpoint", "--ae")?;
    let data = load_data(data_dir, c.seed)?;
    let (ae, _) = load_autoencoder(ae_path)?;
    let (mut gen, base_step) = match &c.paths.resume {
        Some(p) => load_generator(required(&Some(p.clone()), "paths.resume", "--resume")?)?,
        None => {
            let mut spec = ae.spec.with_noise_dim(config.noise_dim);
            spec.generator_hidden = c.network.generator_hidden.clone();
            spec.validate()
                .map_err(|e| usage(format!("network: {e}")))?;
            (Generator::init(&spec, c.seed)?, 0)
        }
    };
    if gen.spec.noise_dim != config.noise_dim {
        return Err(usage(format!(
            "generator checkpoint has noise_dim {}, configuration asks for {}",
            gen.spec.noise_dim, config.noise_dim
        )));
    }
    check_out(ctx)?;
    create_out(ctx)?;

    let per_epoch = config.inner_steps as u64;
    let first_epoch = base_step.checked_div(per_epoch).unwrap_or(0) as usize;
    let ckpt_path = ctx.out.join("generator.ckpt");
    let start = Instant::now();
    let every = c.imle.checkpoint_every;
    let mut save_error = None;
    let progress = |s: &imle_complete::imle::ImleEpochStats, model: &Generator<f64>| {
        log(
            name,
            start,
            format_args!(
                "epoch {} selection {:.6} latent {:.6} uhd {:.6}",
                s.epoch, s.mean_selection_distance, s.mean_latent_loss, s.mean_uhd
            ),
        );
        let done = (s.epoch + 1 - first_epoch) as u64;
        if every > 0 && done.is_multiple_of(every as u64) && save_error.is_none() {
            let ck = Checkpoint::from_generator(model, c.seed, base_step + done * per_epoch);
            save_error = ck.save(&ckpt_path).err();
        }
    };
    let history = match stage {
        Stage::Imle => {
            continue_generator_imle(&mut gen, &data.train, &ae, &config, first_epoch, progress)?
        }
        Stage::Baseline => {
            continue_generator_unimodal(&mut gen, &data.train, &ae, &config, first_epoch, progress)?
        }
    };
    if let Some(e) = save_error {
        return Err(e.into());
    }
    Checkpoint::from_generator(&gen, c.seed, base_step + history.steps as u64).save(&ckpt_path)?;
    let (epochs, selections) = history_csv(&history);
    write(&ctx.out.join("imle_history.csv"), epochs.as_bytes())?;
    write(&ctx.out.join("selections.csv"), selections.as_bytes())
}

pub fn complete(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    if c.complete.m == 0 {
        return Err(usage("complete.m must be >= 1"));
    }
    let input_path = required(&c.paths.input, "paths.input", "--input")?;
    let ae_path = required(&c.paths.ae_checkpoint, "paths.ae_checkpoint", "--ae")?;
    let gen_path = required(
        &c.paths.generator_checkpoint,
        "paths.generator_checkpoint",
        "--generator",
    )?;
    let mut input = read_pcd::<f64>(input_path)?;
    let (ae, _) = load_autoencoder(ae_path)?;
    let (gen, _) = load_generator(gen_path)?;
    if input.dim() != ae.spec.dim {
        return Err(CliError::Core(Error::DimensionMismatch(
            ae.spec.dim,
            input.dim(),
        )));
    }
    if input.len() != ae.spec.points {
        input = input.resample(ae.spec.points, derive_seed(c.seed, &[RESAMPLE_STREAM]))?;
    }
    check_out(ctx)?;
    let samples = complete_samples(&ae, &gen, &input, c.complete.m, c.seed)?;
    create_out(ctx)?;
    let mut records = Vec::with_capacity(samples.len());
    for (j, s) in samples.iter().enumerate() {
        let file = format!("sample_{j:02}.pcd");
        write_pcd(&ctx.out.join(&file), s)?;
        records.push(SampleRecord {
            file,
            uhd: uhd(&input, s)?.value,
        });
    }
    let sidecar = CompletionSidecar {
        seed: c.seed,
        m: c.complete.m,
        input: input_path.display().to_string(),
        ae_checkpoint_sha256: sha256_file(ae_path)?,
        generator_checkpoint_sha256: sha256_file(gen_path)?,
        samples: records,
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    write(
        &ctx.out.join("completions.json"),
        format!("{json}\n").as_bytes(),
    )?;
    eprintln!(
        "[complete] wrote {} completions to {}",
        samples.len(),
        ctx.out.display()
    );
    Ok(())
}

pub fn eval(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let config = c.eval.config(c.seed);
    config.validate().map_err(|e| usage(format!("eval: {e}")))?;
    let data_dir = required(&c.paths.data, "paths.data", "--data")?;
    let ae_path = required(&c.paths.ae_checkpoint, "paths.ae_checkpoint", "--ae")?;
    let gen_path = required(
        &c.paths.generator_checkpoint,
        "paths.generator_checkpoint",
        "--generator",
    )?;
    let data = load_data(data_dir, c.seed)?;
    if data.test.is_empty() {
        return Err(usage("the test split is empty; generate more entries"));
    }
    let (ae, _) = load_autoencoder(ae_path)?;
    let (gen, _) = load_generator(gen_path)?;
    if c.eval.svg && ae.spec.dim != 2 {
        return Err(usage("eval.svg needs 2D data"));
    }
    check_out(ctx)?;
    let start = Instant::now();
    let report = noise_robustness_eval(&ae, &gen, &data.test, &config)?;
    log(
        "eval",
        start,
        format_args!(
            "{} entries: mean_tmd {:.6} mean_uhd {:.6} coverage {:.3}",
            report.entries.len(),
            report.mean_tmd,
            report.mean_uhd,
            report.coverage_rate
        ),
    );
    create_out(ctx)?;
    write(&ctx.out.join("report.csv"), report.to_csv().as_bytes())?;
    write(
        &ctx.out.join("report.json"),
        format!("{}\n", report.to_json()).as_bytes(),
    )?;
    if c.eval.svg {
        let rows = data
            .test
            .iter()
            .take(c.eval.svg_entries)
            .enumerate()
            .map(|(i, e)| {
                let samples = complete_samples(
                    &ae,
                    &gen,
                    &e.partial,
                    config.m,
                    derive_seed(config.seed, &[i as u64]),
                )?;
                Ok((e.partial.clone(), samples))
            })
            .collect::<Result<Vec<(PointCloud<f64>, Vec<PointCloud<f64>>)>, Error>>()?;
        write(
            &ctx.out.join("completions.svg"),
            svg::render(&rows).as_bytes(),
        )?;
    }
    Ok(())
}

fn report_name(arg: &str) -> (String, PathBuf) {
    if let Some((name, path)) = arg.split_once('=') {
        return (name.to_string(), PathBuf::from(path));
    }
    let path = PathBuf::from(arg);
    let name = path
        .parent()
        .and_then(|p| p.file_name())
        .or_else(|| path.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| arg.to_string());
    (name, path)
}

pub fn compare(ctx: &Context, args: &[String]) -> Result<(), CliError> {
    let mut reports = Vec::with_capacity(args.len());
    for arg in args {
        let (name, path) = report_name(arg);
        if name.contains(',') {
            return Err(usage(format!(
                "report name {name:?} must not contain a comma"
            )));
        }
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        reports.push((name, EvalReport::from_json(&text)?));
    }
    let named: Vec<(String, &EvalReport)> = reports.iter().map(|(n, r)| (n.clone(), r)).collect();
    let table = compare_reports(&named)?;
    check_out(ctx)?;
    create_out(ctx)?;
    let csv = table.to_csv();
    print!("{csv}");
    write(&ctx.out.join("comparison.csv"), csv.as_bytes())
}

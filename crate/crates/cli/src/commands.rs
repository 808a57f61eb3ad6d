//! Subcommand implementations. Every output carries the config digest and
//! root seed; all randomness is derived from the root seed, so reruns with
//! the same pair are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use glcert::bounds::{compute_normed_bounds, BoundTable, ParameterGrid};
use glcert::io::{export_grid_csv_with_meta, load_idx, save_idx};
use glcert::model::{train_augmented, EpochStats};
use glcert::rng::derive_seed;
use glcert::smoothing::smoothed_top;
use glcert::{synth, Certifier, Image, LabeledDataset, Mlp, RegionResult, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const ARTIFACT_VERSION: u32 = 1;
pub const BOUNDS_FILE: &str = "bounds.json";
pub const CRA_FILE: &str = "cra.csv";
pub const HEATMAP_FILE: &str = "heatmap.csv";
pub const XI_FILE: &str = "xi.csv";

// Independent seed streams under the root seed.
const BOUNDS_STREAM: u64 = 0;
const PREDICT_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const SYNTH_STREAM: u64 = 3;

/// Bound table and certifier in one envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundArtifact {
    pub version: u32,
    pub config_digest: String,
    pub seed: u64,
    pub table: BoundTable,
    pub certifier: Certifier,
}

/// Result for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub index: usize,
    pub label: usize,
    pub predicted: usize,
    pub n: usize,
    pub n_max: usize,
    pub h_lower: f64,
    pub correct: bool,
    pub certified: bool,
    /// `abstain` (h_lower ≤ ½), `certified` or `not_certified`.
    pub reason: String,
    pub margin: f64,
    pub region_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CraSummary {
    pub images: usize,
    pub correct: usize,
    pub certified: usize,
    pub clean_accuracy: f64,
    pub cra: f64,
}

fn bounds_seed(cfg: &RunConfig) -> u64 {
    derive_seed(cfg.seed, BOUNDS_STREAM)
}

/// Seed of the prediction draws for image `index`.
pub fn predict_seed(cfg: &RunConfig, index: usize) -> u64 {
    derive_seed(derive_seed(cfg.seed, PREDICT_STREAM), index as u64)
}

fn require<'a>(path: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
    path.as_deref()
        .ok_or_else(|| CliError::Config(format!("`{key}` is required for this command")))
}

fn existing<'a>(path: &'a Option<PathBuf>, key: &str, hint: &str) -> CliResult<&'a Path> {
    let p = require(path, key)?;
    if !p.exists() {
        return Err(CliError::missing(p, hint));
    }
    Ok(p)
}

pub fn load_dataset(cfg: &RunConfig) -> CliResult<LabeledDataset> {
    let hint = "run `glcert synth` or point data.images/data.labels at IDX files";
    let images = existing(&cfg.data_images, "data.images", hint)?;
    let labels = existing(&cfg.data_labels, "data.labels", hint)?;
    let data = load_idx(images, labels)?;
    if data.is_empty() {
        return Err(CliError::Config("the dataset is empty".into()));
    }
    Ok(if cfg.data_limit > 0 {
        data.take(cfg.data_limit)
    } else {
        data
    })
}

pub fn load_model(cfg: &RunConfig) -> CliResult<Mlp> {
    let path = existing(&cfg.model_path, "model.path", "run `glcert train` first")?;
    Ok(Mlp::load(path)?)
}

pub fn bounds_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join(BOUNDS_FILE)
}

fn grid(cfg: &RunConfig) -> CliResult<ParameterGrid> {
    let (lo, hi) = cfg.attack()?;
    Ok(ParameterGrid::spanning(lo, hi, &cfg.grid_points, cfg.spec.beta0())?)
}

fn build_table(cfg: &RunConfig, x: &Image<f64>) -> CliResult<BoundTable> {
    compute_normed_bounds(x, &cfg.spec, &grid(cfg)?, bounds_seed(cfg)).map_err(|e| match e {
        e if e.is_numeric() => CliError::Numeric(e.to_string()),
        e => e.into(),
    })
}

fn write_output(cfg: &RunConfig, name: &str, contents: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

/// Build the bound table at the reference image and write it with its certifier.
pub fn cmd_bounds(cfg: &RunConfig) -> CliResult<PathBuf> {
    let grid = grid(cfg)?;
    let data = load_dataset(cfg)?;
    let x = data
        .images()
        .get(cfg.bounds_image)
        .ok_or_else(|| CliError::Config(format!("bounds.image {} is out of range", cfg.bounds_image)))?;
    log::info!(
        "computing bounds over {} grid points with {} draws",
        grid.len(),
        cfg.spec.n_samples
    );
    let table = build_table(cfg, x)?;
    let certifier = Certifier::from_table(&table)?;
    let artifact = BoundArtifact {
        version: ARTIFACT_VERSION,
        config_digest: cfg.digest.clone(),
        seed: cfg.seed,
        table,
        certifier,
    };
    write_output(cfg, BOUNDS_FILE, &serde_json::to_string_pretty(&artifact)?)
}

/// Load the bound artifact and check it was built for this configuration.
pub fn load_bounds(cfg: &RunConfig) -> CliResult<BoundArtifact> {
    let path = bounds_path(cfg);
    if !path.exists() {
        return Err(CliError::missing(&path, "run `glcert bounds` first"));
    }
    let artifact: BoundArtifact = serde_json::from_str(&fs::read_to_string(&path)?)?;
    if artifact.version != ARTIFACT_VERSION {
        return Err(CliError::MissingArtifact(format!(
            "{} has version {}",
            path.display(),
            artifact.version
        )));
    }
    if artifact.table.spec_digest != cfg.spec.digest()? || artifact.table.grid != grid(cfg)? {
        return Err(CliError::MissingArtifact(format!(
            "{} was built for a different smoothing or grid configuration; rerun `glcert bounds`",
            path.display()
        )));
    }
    Ok(artifact)
}

/// Certifier for each image: shared when the score does not depend on the
/// image (parameter path), rebuilt per image otherwise.
enum Certifiers {
    Shared(Box<Certifier>),
    PerImage,
}

impl Certifiers {
    fn new(cfg: &RunConfig) -> CliResult<Self> {
        if cfg.spec.uses_parameter_path() {
            Ok(Certifiers::Shared(Box::new(load_bounds(cfg)?.certifier)))
        } else {
            log::warn!("pixel-space density: bound tables are rebuilt for every image");
            Ok(Certifiers::PerImage)
        }
    }

    fn get(&self, cfg: &RunConfig, x: &Image<f64>) -> CliResult<Certifier> {
        match self {
            Certifiers::Shared(c) => Ok((**c).clone()),
            Certifiers::PerImage => Ok(Certifier::from_table(&build_table(cfg, x)?)?),
        }
    }
}

fn region(cfg: &RunConfig, certifier: &Certifier, h_lower: f64) -> CliResult<RegionResult> {
    let (lo, hi) = cfg.attack()?;
    Ok(certifier.certify_region(h_lower, lo, hi, cfg.resolution)?)
}

fn report(
    cfg: &RunConfig,
    certifiers: &Certifiers,
    model: &Mlp,
    data: &LabeledDataset,
    index: usize,
    beta: Option<&[f64]>,
) -> CliResult<ImageReport> {
    let x = &data.images()[index];
    let label = data.labels()[index];
    let est = smoothed_top(x, model, &cfg.spec, cfg.n_max, cfg.alpha_star, predict_seed(cfg, index))?;
    let (certified, margin, fraction) = if est.h_lower > 0.5 {
        let certifier = certifiers.get(cfg, x)?;
        match beta {
            Some(b) => {
                let r = certifier.certify_point(est.h_lower, b)?;
                (r.certified, r.margin, if r.certified { 1.0 } else { 0.0 })
            }
            None => {
                let r = region(cfg, &certifier, est.h_lower)?;
                (r.certified, r.worst_margin, r.fraction)
            }
        }
    } else {
        (false, f64::NEG_INFINITY, 0.0)
    };
    let reason = if est.h_lower <= 0.5 {
        "abstain"
    } else if certified {
        "certified"
    } else {
        "not_certified"
    };
    Ok(ImageReport {
        index,
        label,
        predicted: est.class_id,
        n: est.n,
        n_max: est.n_max,
        h_lower: est.h_lower,
        correct: est.h_lower > 0.5 && est.class_id == label,
        certified,
        reason: reason.into(),
        margin,
        region_fraction: fraction,
    })
}

/// Certify one image over the attack box, or at a single `beta`.
pub fn cmd_certify(cfg: &RunConfig, index: usize, beta: Option<&[f64]>) -> CliResult<serde_json::Value> {
    if let Some(b) = beta {
        if b.len() != cfg.spec.dim() {
            return Err(CliError::Config(format!("--beta needs {} values", cfg.spec.dim())));
        }
    }
    let data = load_dataset(cfg)?;
    if index >= data.len() {
        return Err(CliError::Config(format!(
            "image index {index} out of range (dataset has {})",
            data.len()
        )));
    }
    let model = load_model(cfg)?;
    let certifiers = Certifiers::new(cfg)?;
    let r = report(cfg, &certifiers, &model, &data, index, beta)?;
    let (lo, hi) = cfg.attack()?;
    let scope = match beta {
        Some(b) => serde_json::json!({ "beta": b }),
        None => {
            serde_json::json!({ "region": { "lo": lo, "hi": hi, "resolution": cfg.resolution, "fraction": r.region_fraction } })
        }
    };
    let mut out = serde_json::json!({
        "config_digest": cfg.digest,
        "seed": cfg.seed,
        "index": r.index,
        "label": r.label,
        "predicted": r.predicted,
        "certified": r.certified,
        "reason": r.reason,
        "margin": if r.margin.is_finite() { serde_json::json!(r.margin) } else { serde_json::Value::Null },
        "h_lower": r.h_lower,
        "n": r.n,
        "N_max": r.n_max,
    });
    out.as_object_mut()
        .expect("object")
        .extend(scope.as_object().expect("object").clone());
    write_output(
        cfg,
        &format!("certify_{index}.json"),
        &serde_json::to_string_pretty(&out)?,
    )?;
    Ok(out)
}

pub fn summarize(reports: &[ImageReport]) -> CraSummary {
    let images = reports.len();
    let correct = reports.iter().filter(|r| r.correct).count();
    let certified = reports.iter().filter(|r| r.correct && r.certified).count();
    let frac = |k: usize| if images == 0 { 0.0 } else { k as f64 / images as f64 };
    CraSummary {
        images,
        correct,
        certified,
        clean_accuracy: frac(correct),
        cra: frac(certified),
    }
}

pub fn summary_line(s: &CraSummary) -> String {
    format!(
        "images={} correct={} certified={} clean_accuracy={} cra={}",
        s.images, s.correct, s.certified, s.clean_accuracy, s.cra
    )
}

/// Per-image reports over the whole dataset, in index order.
pub fn evaluate(cfg: &RunConfig, beta: Option<&[f64]>) -> CliResult<Vec<ImageReport>> {
    let data = load_dataset(cfg)?;
    let model = load_model(cfg)?;
    let certifiers = Certifiers::new(cfg)?;
    (0..data.len())
        .into_par_iter()
        .map(|i| report(cfg, &certifiers, &model, &data, i, beta))
        .collect()
}

/// Certified robust accuracy over the attack box; per-image rows and a
/// trailing summary line go to `cra.csv`.
pub fn cmd_cra(cfg: &RunConfig) -> CliResult<(PathBuf, CraSummary)> {
    let reports = evaluate(cfg, None)?;
    let summary = summarize(&reports);
    let mut csv = String::new();
    for (k, v) in cfg.meta() {
        writeln!(csv, "# {k}={v}").expect("string write");
    }
    csv.push_str("index,label,predicted,n,h_lower,correct,certified,region_fraction,margin\n");
    for r in &reports {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.index, r.label, r.predicted, r.n, r.h_lower, r.correct, r.certified, r.region_fraction, r.margin
        )
        .expect("string write");
    }
    writeln!(csv, "# summary {}", summary_line(&summary)).expect("string write");
    Ok((write_output(cfg, CRA_FILE, &csv)?, summary))
}

/// CRA at each point of a `heatmap.points` grid over the attack box
/// (each image certified at that single point).
pub fn cmd_heatmap(cfg: &RunConfig) -> CliResult<PathBuf> {
    let d = cfg.spec.dim();
    if d > 2 {
        return Err(CliError::Config(format!(
            "heatmaps need one or two parameters, the chain has {d}"
        )));
    }
    let (lo, hi) = cfg.attack()?;
    let grid = ParameterGrid::uniform(lo, hi, &cfg.heatmap_points, cfg.spec.beta0())?;
    let data = load_dataset(cfg)?;
    let model = load_model(cfg)?;
    let certifiers = Certifiers::new(cfg)?;
    let points = grid.points();
    let hits: Vec<Vec<bool>> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let x = &data.images()[i];
            let est = smoothed_top(x, &model, &cfg.spec, cfg.n_max, cfg.alpha_star, predict_seed(cfg, i))?;
            if est.h_lower <= 0.5 || est.class_id != data.labels()[i] {
                return Ok(vec![false; points.len()]);
            }
            let certifier = certifiers.get(cfg, x)?;
            points
                .iter()
                .map(|b| Ok(certifier.certify_point(est.h_lower, b)?.certified))
                .collect()
        })
        .collect::<CliResult<_>>()?;
    let n = data.len() as f64;
    let rows: Vec<(Vec<f64>, f64)> = points
        .iter()
        .enumerate()
        .map(|(j, b)| (b.clone(), hits.iter().filter(|h| h[j]).count() as f64 / n))
        .collect();
    fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join(HEATMAP_FILE);
    export_grid_csv_with_meta(&rows, &cfg.meta(), &path)?;
    Ok(path)
}

/// Train the built-in classifier (with smoothing augmentation unless
/// disabled) and save it to `model.path`.
pub fn cmd_train(cfg: &RunConfig, mut on_epoch: impl FnMut(&EpochStats)) -> CliResult<PathBuf> {
    let path = require(&cfg.model_path, "model.path")?.to_path_buf();
    let data = load_dataset(cfg)?;
    let seed = derive_seed(cfg.seed, TRAIN_STREAM);
    let mut model = Mlp::new(data.image_shape(), &cfg.model_hidden, data.num_classes(), seed)?;
    let train = TrainConfig {
        epochs: cfg.train.epochs,
        learning_rate: cfg.train.learning_rate,
        momentum: cfg.train.momentum,
        batch_size: cfg.train.batch_size,
        augmentation: cfg.train.augment.then(|| cfg.spec.clone()),
        seed,
    };
    train_augmented(&mut model, &data, &train, &mut on_epoch).map_err(|e| match e {
        glcert::Error::Training(m) => CliError::Numeric(m),
        e => e.into(),
    })?;
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    model.save(&path)?;
    Ok(path)
}

/// Dump `h, p(h), ξ(h)` at the table's knots.
pub fn cmd_xi_export(cfg: &RunConfig) -> CliResult<PathBuf> {
    let artifact = load_bounds(cfg)?;
    let n = artifact.table.n_samples as f64;
    let mut csv = String::new();
    for (k, v) in cfg.meta() {
        writeln!(csv, "# {k}={v}").expect("string write");
    }
    csv.push_str("h,p,xi\n");
    for (i, p) in artifact.table.p.iter().enumerate() {
        let h = i as f64 / n;
        writeln!(csv, "{h},{p},{}", artifact.certifier.xi().eval(h)).expect("string write");
    }
    write_output(cfg, XI_FILE, &csv)
}

/// Write a synthetic 28×28 four-class dataset to the configured IDX paths.
pub fn cmd_synth(cfg: &RunConfig) -> CliResult<(PathBuf, PathBuf)> {
    let images = require(&cfg.data_images, "data.images")?.to_path_buf();
    let labels = require(&cfg.data_labels, "data.labels")?.to_path_buf();
    if cfg.synth_count == 0 {
        return Err(CliError::Config("synth.count must be positive".into()));
    }
    for p in [&images, &labels] {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
    }
    save_idx(
        &synth::shapes(cfg.synth_count, derive_seed(cfg.seed, SYNTH_STREAM)),
        &images,
        &labels,
    )?;
    Ok((images, labels))
}

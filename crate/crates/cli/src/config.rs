//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment; keys are dotted
//! (`smoothing.sigma`). Transform chains are numbered from 1:
//! `transform.1.name = contrast`, `transform.1.distribution = lognormal`,
//! `transform.1.sigma = 0.2`. Overrides given on the command line replace
//! file values before validation. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use glcert::digest::sha256_hex;
use glcert::transforms::Padding;
use glcert::{compose, DensityPath, ParamMap, SmoothingSpec, Transform};

use crate::error::{CliError, CliResult};

/// Defaults applied when a key is absent.
const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("output.dir", "out"),
    ("data.limit", "0"),
    ("model.hidden", "128"),
    ("smoothing.sigma", "0.05"),
    ("smoothing.n_samples", "10000"),
    ("smoothing.path", "parameter"),
    ("smoothing.laplace_iterations", "50"),
    ("predict.n_max", "1000"),
    ("predict.alpha", "0.001"),
    ("grid.points", "17"),
    ("bounds.image", "0"),
    ("certify.resolution", "17"),
    ("heatmap.points", "11"),
    ("train.epochs", "5"),
    ("train.learning_rate", "0.05"),
    ("train.momentum", "0.9"),
    ("train.batch_size", "64"),
    ("train.augment", "true"),
    ("synth.count", "500"),
];

#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub augment: bool,
}

/// A fully validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data_images: Option<PathBuf>,
    pub data_labels: Option<PathBuf>,
    /// 0 keeps every image.
    pub data_limit: usize,
    pub model_path: Option<PathBuf>,
    pub model_hidden: Vec<usize>,
    pub spec: SmoothingSpec,
    pub n_max: usize,
    pub alpha_star: f64,
    pub attack: Option<(Vec<f64>, Vec<f64>)>,
    pub grid_points: Vec<usize>,
    pub bounds_image: usize,
    pub resolution: usize,
    pub heatmap_points: Vec<usize>,
    pub train: TrainSettings,
    pub synth_count: usize,
    /// Sorted `key=value` lines after defaults and overrides.
    pub canonical: String,
    /// SHA-256 of `canonical`.
    pub digest: String,
}

/// Parse `key = value` lines into a map; duplicates are errors.
pub fn parse_pairs(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = split_pair(line).map_err(|e| CliError::Config(format!("line {}: {e}", no + 1)))?;
        if map.insert(k.clone(), v).is_some() {
            return Err(CliError::Config(format!("line {}: duplicate key `{k}`", no + 1)));
        }
    }
    Ok(map)
}

/// Split one `key=value` assignment.
pub fn split_pair(s: &str) -> Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected `key = value`, got `{s}`"))?;
    let k = k.trim();
    if k.is_empty()
        || !k
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.')
    {
        return Err(format!("invalid key `{k}`"));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

struct Keys {
    map: BTreeMap<String, String>,
    used: Vec<String>,
}

impl Keys {
    fn raw(&mut self, key: &str) -> Option<String> {
        let v = self.map.get(key).cloned();
        if v.is_some() {
            self.used.push(key.to_string());
        }
        v
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Config(format!("{key}: cannot parse `{v}`: {e}")))
            })
            .transpose()
    }

    fn req<T: FromStr>(&mut self, key: &str) -> CliResult<T>
    where
        T::Err: Display,
    {
        self.parse(key)?
            .ok_or_else(|| CliError::Config(format!("missing key `{key}`")))
    }

    fn list<T: FromStr>(&mut self, key: &str) -> CliResult<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<T>()
                            .map_err(|e| CliError::Config(format!("{key}: cannot parse `{s}`: {e}")))
                    })
                    .collect()
            })
            .transpose()
    }
}

fn config_err<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

fn param_map(keys: &mut Keys, i: usize) -> CliResult<ParamMap> {
    let p = |n: &str| format!("transform.{i}.{n}");
    let dist: String = keys.req(&p("distribution"))?;
    let map = match dist.as_str() {
        "normal" => ParamMap::Normal {
            mean: keys.parse(&p("mean"))?.unwrap_or(0.0),
            std: keys.req(&p("std"))?,
        },
        "lognormal" => ParamMap::LogNormal {
            mu: keys.parse(&p("mu"))?.unwrap_or(0.0),
            sigma: keys.req(&p("sigma"))?,
        },
        "rayleigh" => ParamMap::Rayleigh {
            loc: keys.parse(&p("loc"))?.unwrap_or(0.0),
            scale: keys.req(&p("scale"))?,
        },
        other => return config_err(format!("{}: unknown distribution `{other}`", p("distribution"))),
    };
    map.validate()
        .map_err(|e| CliError::Config(format!("transform.{i}: {e}")))?;
    Ok(map)
}

fn padding(keys: &mut Keys, i: usize, default: Padding) -> CliResult<Padding> {
    match keys.raw(&format!("transform.{i}.padding")).as_deref() {
        None => Ok(default),
        Some("wrap") => Ok(Padding::Wrap),
        Some("reflect") => Ok(Padding::Reflect),
        Some(other) => config_err(format!(
            "transform.{i}.padding: expected wrap or reflect, got `{other}`"
        )),
    }
}

fn chain(keys: &mut Keys) -> CliResult<(Vec<Transform>, Vec<ParamMap>)> {
    let names: Vec<(usize, String)> = (1..)
        .map_while(|i| keys.map.get(&format!("transform.{i}.name")).cloned().map(|n| (i, n)))
        .collect();
    if names.is_empty() {
        return config_err("no transforms declared (expected `transform.1.name`)");
    }
    // Blur and translate commute only with periodic padding on both.
    let spatial_default = if names.iter().any(|(_, n)| n == "translate") {
        Padding::Wrap
    } else {
        Padding::Reflect
    };
    let mut parts = Vec::new();
    let mut maps = Vec::new();
    for (i, name) in names {
        keys.used.push(format!("transform.{i}.name"));
        let (t, count) = match name.as_str() {
            "brightness" => (Transform::Brightness, 1),
            "contrast" => (Transform::Contrast, 1),
            "gamma" => (Transform::Gamma, 1),
            "translate" => (
                Transform::Translate {
                    padding: padding(keys, i, Padding::Wrap)?,
                },
                2,
            ),
            "blur" => (
                Transform::Blur {
                    padding: padding(keys, i, spatial_default)?,
                },
                1,
            ),
            other => return config_err(format!("transform.{i}.name: unknown transform `{other}`")),
        };
        let map = param_map(keys, i)?;
        parts.push(t);
        maps.extend(std::iter::repeat_n(map, count));
    }
    Ok((parts, maps))
}

fn per_dim(v: Vec<usize>, d: usize, key: &str) -> CliResult<Vec<usize>> {
    match v.len() {
        1 => Ok(vec![v[0]; d]),
        n if n == d => Ok(v),
        n => config_err(format!("{key}: {n} values for {d} parameters")),
    }
}

impl RunConfig {
    pub fn from_text(text: &str, overrides: &[(String, String)]) -> CliResult<Self> {
        let mut map = parse_pairs(text)?;
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        for (k, v) in DEFAULTS {
            map.entry(k.to_string()).or_insert_with(|| v.to_string());
        }
        let canonical: String = map.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        let digest = sha256_hex(canonical.as_bytes());
        let mut keys = Keys { map, used: Vec::new() };

        let (parts, maps) = chain(&mut keys)?;
        let transform = compose(parts).map_err(|e| CliError::Config(e.to_string()))?;
        let path = match keys.req::<String>("smoothing.path")?.as_str() {
            "auto" => DensityPath::Auto,
            "parameter" => DensityPath::Parameter,
            "laplace" => DensityPath::Laplace,
            other => {
                return config_err(format!(
                    "smoothing.path: expected auto, parameter or laplace, got `{other}`"
                ))
            }
        };
        let spec = SmoothingSpec {
            sigma: keys.req("smoothing.sigma")?,
            maps,
            transform,
            n_samples: keys.req("smoothing.n_samples")?,
            path,
            laplace_iterations: keys.req("smoothing.laplace_iterations")?,
        };
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if spec.n_samples < glcert::bounds::MIN_SAMPLES {
            return config_err(format!(
                "smoothing.n_samples must be at least {}",
                glcert::bounds::MIN_SAMPLES
            ));
        }
        let d = spec.dim();

        let attack = match (keys.list::<f64>("attack.lo")?, keys.list::<f64>("attack.hi")?) {
            (None, None) => None,
            (Some(lo), Some(hi)) => {
                if lo.len() != d || hi.len() != d {
                    return config_err(format!("attack.lo/attack.hi need {d} values each"));
                }
                if lo
                    .iter()
                    .zip(&hi)
                    .any(|(l, h)| !(l.is_finite() && h.is_finite() && l <= h))
                {
                    return config_err("attack.lo must not exceed attack.hi");
                }
                Some((lo, hi))
            }
            _ => return config_err("attack.lo and attack.hi must be given together"),
        };
        let grid_points = per_dim(keys.list("grid.points")?.unwrap_or_default(), d, "grid.points")?;
        let heatmap_points = per_dim(keys.list("heatmap.points")?.unwrap_or_default(), d, "heatmap.points")?;
        if grid_points.iter().chain(&heatmap_points).any(|&n| n < 2) {
            return config_err("grid.points and heatmap.points need at least 2 points per axis");
        }
        let n_max: usize = keys.req("predict.n_max")?;
        let alpha_star: f64 = keys.req("predict.alpha")?;
        if n_max == 0 || !(alpha_star > 0.0 && alpha_star < 1.0) {
            return config_err("predict.n_max must be positive and predict.alpha in (0, 1)");
        }
        let resolution: usize = keys.req("certify.resolution")?;
        if resolution < 2 {
            return config_err("certify.resolution must be at least 2");
        }
        let train = TrainSettings {
            epochs: keys.req("train.epochs")?,
            learning_rate: keys.req("train.learning_rate")?,
            momentum: keys.req("train.momentum")?,
            batch_size: keys.req("train.batch_size")?,
            augment: keys.req("train.augment")?,
        };
        if !(train.learning_rate > 0.0) || !(0.0..1.0).contains(&train.momentum) || train.batch_size == 0 {
            return config_err(
                "train.learning_rate must be positive, train.momentum in [0, 1), train.batch_size positive",
            );
        }
        let model_hidden: Vec<usize> = keys.list("model.hidden")?.unwrap_or_default();
        if model_hidden.contains(&0) {
            return config_err("model.hidden layer widths must be positive");
        }

        let cfg = RunConfig {
            seed: keys.req("seed")?,
            output_dir: keys.req::<String>("output.dir")?.into(),
            data_images: keys.parse::<String>("data.images")?.map(PathBuf::from),
            data_labels: keys.parse::<String>("data.labels")?.map(PathBuf::from),
            data_limit: keys.req("data.limit")?,
            model_path: keys.parse::<String>("model.path")?.map(PathBuf::from),
            model_hidden,
            spec,
            n_max,
            alpha_star,
            attack,
            grid_points,
            bounds_image: keys.req("bounds.image")?,
            resolution,
            heatmap_points,
            train,
            synth_count: keys.req("synth.count")?,
            canonical,
            digest,
        };
        let unknown: Vec<&String> = keys.map.keys().filter(|k| !keys.used.contains(k)).collect();
        if let Some(k) = unknown.first() {
            return config_err(format!("unknown key `{k}`"));
        }
        Ok(cfg)
    }

    pub fn attack(&self) -> CliResult<(&[f64], &[f64])> {
        self.attack
            .as_ref()
            .map(|(l, h)| (l.as_slice(), h.as_slice()))
            .ok_or_else(|| CliError::Config("attack.lo and attack.hi are required for this command".into()))
    }

    /// `# key=value` metadata stamped on every output.
    pub fn meta(&self) -> Vec<(&'static str, String)> {
        vec![("config_digest", self.digest.clone()), ("seed", self.seed.to_string())]
    }
}

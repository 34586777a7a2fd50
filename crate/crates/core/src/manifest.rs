//! Run manifests: a complete, reproducible description of one run.
//!
//! Manifests are flat `key = value` text, one key per line, `#` starting a
//! comment. Every key is optional; missing keys take their defaults. The
//! canonical rendering ([`RunManifest::to_text`]) lists every key in a fixed
//! order, and its SHA-256 (without the output directory) is the run's config
//! hash.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{generate, load_csv, normalize, Column, StatsFrom, SyntheticSpec};
use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::pool::RetrievalScore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        column: Column,
        has_header: bool,
    },
    /// Synthetic stream; `spec = None` is the default recurring stream. The
    /// manifest seed drives the noise.
    Synthetic {
        spec: Option<PathBuf>,
        noise: Option<f64>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            spec: None,
            noise: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Statistics from the warm-up prefix only.
    #[default]
    Warm,
    Whole,
    None,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub data: DataSource,
    pub normalize: Normalization,
    pub engine: EngineConfig,
    pub out: Option<PathBuf>,
}

/// The series a manifest resolves to, ready for [`crate::engine::run`].
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSeries {
    pub name: String,
    pub values: Vec<f64>,
    /// Concept label per point, for synthetic sources.
    pub labels: Option<Vec<usize>>,
    /// `(mean, std)` used for z-normalisation, if any.
    pub scaling: Option<(f64, f64)>,
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::config(key, format!("`{value}` is not a boolean"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("`{value}` is not a valid number")))
}

fn parse_opt<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value.eq_ignore_ascii_case("none") || value.is_empty() {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn opt_text<T: ToString>(v: &Option<T>) -> String {
    v.as_ref()
        .map_or_else(|| "none".to_string(), ToString::to_string)
}

impl RunManifest {
    pub fn parse(text: &str) -> Result<RunManifest> {
        let mut manifest = RunManifest::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Malformed(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                ))
            })?;
            manifest.set(key.trim(), value.trim())?;
        }
        Ok(manifest)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<RunManifest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        RunManifest::parse(&text)
    }

    /// Sets one key; shared by the file parser and command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let e = &mut self.engine;
        let c = &mut e.cep;
        match key {
            "data" => {
                let keep_noise = match &self.data {
                    DataSource::Synthetic { noise, .. } => *noise,
                    _ => None,
                };
                let (column, has_header) = match &self.data {
                    DataSource::Csv {
                        column, has_header, ..
                    } => (column.clone(), *has_header),
                    _ => (Column::Index(0), true),
                };
                self.data = if value == "synthetic" {
                    DataSource::Synthetic {
                        spec: None,
                        noise: keep_noise,
                    }
                } else if let Some(spec) = value.strip_prefix("synthetic:") {
                    DataSource::Synthetic {
                        spec: Some(PathBuf::from(spec)),
                        noise: keep_noise,
                    }
                } else {
                    DataSource::Csv {
                        path: PathBuf::from(value),
                        column,
                        has_header,
                    }
                };
            }
            "column" | "header" => match &mut self.data {
                DataSource::Csv {
                    column, has_header, ..
                } => {
                    if key == "column" {
                        *column = Column::parse(value);
                    } else {
                        *has_header = parse_bool(key, value)?;
                    }
                }
                DataSource::Synthetic { .. } => {
                    // meaningless for synthetic data; accepted so canonical text round-trips
                    if key == "column" && value != "none" || key == "header" && value != "none" {
                        return Err(Error::config(key, "only applies to `data = <csv path>`"));
                    }
                }
            },
            "noise" => match &mut self.data {
                DataSource::Synthetic { noise, .. } => *noise = parse_opt(key, value)?,
                DataSource::Csv { .. } if value == "none" => {}
                DataSource::Csv { .. } => {
                    return Err(Error::config(key, "only applies to synthetic data"))
                }
            },
            "normalize" => {
                self.normalize = match value {
                    "warm" => Normalization::Warm,
                    "whole" => Normalization::Whole,
                    "none" => Normalization::None,
                    _ => {
                        return Err(Error::config(
                            key,
                            format!("`{value}`; expected warm, whole or none"),
                        ))
                    }
                }
            }
            "lookback" => e.lookback = parse_num(key, value)?,
            "horizon" => e.horizon = parse_num(key, value)?,
            "forecaster" => e.forecaster = value.parse()?,
            "hidden" => e.hidden = parse_num(key, value)?,
            "lr" => e.lr = parse_opt(key, value)?,
            "warm_epochs" => e.warm_epochs = parse_num(key, value)?,
            "warm_fraction" => e.warm_fraction = parse_num(key, value)?,
            "seed" => e.seed = parse_num(key, value)?,
            "record_forecasts" => e.record_forecasts = parse_bool(key, value)?,
            "tau_mu" => c.tau_mu = parse_num(key, value)?,
            "tau_gene" => c.tau_gene = parse_num(key, value)?,
            "tau_l" => c.tau_l = parse_num(key, value)?,
            "tau_safe" => c.tau_safe = parse_num(key, value)?,
            "tau_e" => c.tau_e = parse_num(key, value)?,
            "tau_lr" => c.tau_lr = parse_num(key, value)?,
            "t_lr" => c.t_lr = parse_num(key, value)?,
            "scope" => c.scope = parse_opt(key, value)?,
            "score" => c.score = value.parse::<RetrievalScore>()?,
            "evolution" => c.evolution = parse_bool(key, value)?,
            "elimination" => c.elimination = parse_bool(key, value)?,
            "abandonment" => c.gradient_abandonment = parse_bool(key, value)?,
            "lr_adjust" => c.optimizer_adjustment = parse_bool(key, value)?,
            "local_gene" => c.use_local_gene = parse_bool(key, value)?,
            "global_gene" => c.use_global_gene = parse_bool(key, value)?,
            "max_pool" => c.max_pool_size = parse_opt(key, value)?,
            "out" => {
                self.out = if value == "none" {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            other => return Err(Error::config(other, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.engine.validate()?;
        if let DataSource::Synthetic { noise: Some(n), .. } = self.data {
            if !(n >= 0.0 && n.is_finite()) {
                return Err(Error::config(
                    "noise",
                    format!("{n} is outside the legal range [0, inf)"),
                ));
            }
        }
        Ok(())
    }

    fn body(&self, with_out: bool) -> String {
        let e = &self.engine;
        let c = &e.cep;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match &self.data {
            DataSource::Csv {
                path,
                column,
                has_header,
            } => {
                kv("data", path.display().to_string());
                kv("column", column.to_string());
                kv("header", has_header.to_string());
            }
            DataSource::Synthetic { spec, noise } => {
                kv(
                    "data",
                    spec.as_ref().map_or_else(
                        || "synthetic".into(),
                        |p| format!("synthetic:{}", p.display()),
                    ),
                );
                kv("noise", opt_text(noise));
            }
        }
        kv(
            "normalize",
            match self.normalize {
                Normalization::Warm => "warm",
                Normalization::Whole => "whole",
                Normalization::None => "none",
            }
            .into(),
        );
        kv("lookback", e.lookback.to_string());
        kv("horizon", e.horizon.to_string());
        kv("forecaster", e.forecaster.to_string());
        kv("hidden", e.hidden.to_string());
        kv("lr", opt_text(&e.lr));
        kv("warm_epochs", e.warm_epochs.to_string());
        kv("warm_fraction", e.warm_fraction.to_string());
        kv("seed", e.seed.to_string());
        kv("record_forecasts", e.record_forecasts.to_string());
        kv("tau_mu", c.tau_mu.to_string());
        kv("tau_gene", c.tau_gene.to_string());
        kv("tau_l", c.tau_l.to_string());
        kv("tau_safe", c.tau_safe.to_string());
        kv("tau_e", c.tau_e.to_string());
        kv("tau_lr", c.tau_lr.to_string());
        kv("t_lr", c.t_lr.to_string());
        kv("scope", opt_text(&c.scope));
        kv("score", c.score.to_string());
        kv("evolution", c.evolution.to_string());
        kv("elimination", c.elimination.to_string());
        kv("abandonment", c.gradient_abandonment.to_string());
        kv("lr_adjust", c.optimizer_adjustment.to_string());
        kv("local_gene", c.use_local_gene.to_string());
        kv("global_gene", c.use_global_gene.to_string());
        kv("max_pool", opt_text(&c.max_pool_size));
        if with_out {
            kv(
                "out",
                self.out
                    .as_ref()
                    .map_or_else(|| "none".into(), |p| p.display().to_string()),
            );
        }
        s
    }

    /// Canonical text form; parsing it yields an equal manifest.
    pub fn to_text(&self) -> String {
        self.body(true)
    }

    /// SHA-256 of the canonical text minus the output directory.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.body(false).as_bytes()))
    }

    /// Whether two manifests forecast the same series with the same window shape.
    pub fn same_task(&self, other: &RunManifest) -> bool {
        self.data == other.data
            && self.normalize == other.normalize
            && self.engine.lookback == other.engine.lookback
            && self.engine.horizon == other.engine.horizon
            && (matches!(self.data, DataSource::Csv { .. })
                || self.engine.seed == other.engine.seed)
    }

    pub fn load_series(&self) -> Result<PreparedSeries> {
        let (name, raw, labels) = match &self.data {
            DataSource::Csv {
                path,
                column,
                has_header,
            } => {
                let s = load_csv(path, column, *has_header)?;
                (s.name, s.values, None)
            }
            DataSource::Synthetic { spec, noise } => {
                let mut synth = match spec {
                    Some(p) => {
                        let text = std::fs::read_to_string(p).map_err(|e| match e.kind() {
                            std::io::ErrorKind::NotFound => Error::FileNotFound(p.clone()),
                            _ => Error::io(p, e),
                        })?;
                        let mut s: SyntheticSpec = serde_json::from_str(&text)
                            .map_err(|e| Error::Malformed(format!("{}: {e}", p.display())))?;
                        s.seed = self.engine.seed;
                        s
                    }
                    None => SyntheticSpec::recurring_default(self.engine.seed),
                };
                if let Some(n) = noise {
                    synth = synth.with_noise(*n);
                }
                let stream = generate(&synth)?;
                ("synthetic".to_string(), stream.values, Some(stream.labels))
            }
        };
        let (values, scaling) = match self.normalize {
            Normalization::None => (raw, None),
            Normalization::Whole => {
                let n = normalize(&raw, StatsFrom::Whole)?;
                (n.values, Some((n.mean, n.std)))
            }
            Normalization::Warm => {
                let n = normalize(&raw, StatsFrom::Prefix(self.engine.split_point(raw.len())))?;
                (n.values, Some((n.mean, n.std)))
            }
        };
        Ok(PreparedSeries {
            name,
            values,
            labels,
            scaling,
        })
    }
}

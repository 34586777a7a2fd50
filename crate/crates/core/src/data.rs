//! Series ingestion, normalisation and the synthetic recurring-concept generator.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which column of a delimited file to read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Column {
    Name(String),
    Index(usize),
}

impl Column {
    /// A bare non-negative integer selects by zero-based index; anything else by name.
    pub fn parse(s: &str) -> Column {
        match s.trim().parse::<usize>() {
            Ok(i) => Column::Index(i),
            Err(_) => Column::Name(s.trim().to_string()),
        }
    }
}

impl std::fmt::Display for Column {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Column::Name(n) => f.write_str(n),
            Column::Index(i) => write!(f, "{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Origin {
    File { path: PathBuf, column: Column },
    Synthetic { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSource {
    pub name: String,
    pub values: Vec<f64>,
    pub origin: Origin,
}

impl SeriesSource {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let row = err.position().map(|p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::Malformed(format!(
            "{}{}: {other:?}",
            path.display(),
            row.map(|r| format!(" row {r}")).unwrap_or_default()
        )),
    }
}

/// Reads one column of a comma-separated file as a series, in file order.
///
/// Rows are numbered by file line (the header, when present, is line 1).
pub fn load_csv(path: impl AsRef<Path>, column: &Column, has_header: bool) -> Result<SeriesSource> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);

    let headers: Vec<String> = if has_header {
        reader
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_string)
            .collect()
    } else {
        Vec::new()
    };
    let index = match column {
        Column::Index(i) => *i,
        Column::Name(name) => {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::ColumnNotFound {
                    column: name.clone(),
                    available: headers.clone(),
                })?
        }
    };
    if has_header && index >= headers.len() {
        return Err(Error::ColumnNotFound {
            column: column.to_string(),
            available: headers,
        });
    }

    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record.position().map_or(0, |p| p.line());
        let field = record
            .get(index)
            .ok_or_else(|| Error::Malformed(format!("row {row} has no column {column}")))?;
        let value: f64 = field.parse().map_err(|_| Error::Parse {
            row,
            value: field.to_string(),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                row,
                value: field.to_string(),
            });
        }
        values.push(value);
    }

    let name = match column {
        Column::Name(n) => n.clone(),
        Column::Index(i) => headers
            .get(*i)
            .cloned()
            .unwrap_or_else(|| format!("column{i}")),
    };
    Ok(SeriesSource {
        name,
        values,
        origin: Origin::File {
            path: path.to_path_buf(),
            column: column.clone(),
        },
    })
}

/// Writes `columns` (all of equal length) as a CSV with a header row.
///
/// Floats use the shortest representation that round-trips, so reloading
/// reproduces every value exactly.
pub fn write_csv(path: impl AsRef<Path>, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let path = path.as_ref();
    let rows = columns.first().map_or(0, |c| c.len());
    debug_assert!(columns.iter().all(|c| c.len() == rows));
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for i in 0..rows {
        let line: Vec<String> = columns.iter().map(|c| c[i].to_string()).collect();
        writeln!(out, "{}", line.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Concept {
    pub level: f64,
    pub amplitude: f64,
    pub period: usize,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub concept: usize,
    pub duration: usize,
}

/// Piecewise-stationary stream description: a set of concepts and the order
/// and length in which they appear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub concepts: Vec<Concept>,
    pub schedule: Vec<Segment>,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Three concepts at levels 0, 8 and -8 visited as A-B-A-C-B-A, 3000 points each.
    pub fn recurring_default(seed: u64) -> Self {
        let concept = |level| Concept {
            level,
            amplitude: 1.0,
            period: 24,
            noise_sigma: 0.25,
        };
        SyntheticSpec {
            concepts: vec![concept(0.0), concept(8.0), concept(-8.0)],
            schedule: [0, 1, 0, 2, 1, 0]
                .into_iter()
                .map(|concept| Segment {
                    concept,
                    duration: 3000,
                })
                .collect(),
            seed,
        }
    }

    /// Same stream with every concept's noise replaced by `noise_sigma`.
    pub fn with_noise(mut self, noise_sigma: f64) -> Self {
        for c in &mut self.concepts {
            c.noise_sigma = noise_sigma;
        }
        self
    }

    pub fn len(&self) -> usize {
        self.schedule.iter().map(|s| s.duration).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.concepts.is_empty() {
            return Err(Error::config(
                "concepts",
                "at least one concept is required",
            ));
        }
        if self.schedule.is_empty() {
            return Err(Error::config(
                "schedule",
                "at least one segment is required",
            ));
        }
        for (i, c) in self.concepts.iter().enumerate() {
            let field = |f: &str| format!("concepts[{i}].{f}");
            if c.period == 0 {
                return Err(Error::config(field("period"), "must be at least 1"));
            }
            if !(c.noise_sigma >= 0.0 && c.noise_sigma.is_finite()) {
                return Err(Error::config(
                    field("noise_sigma"),
                    "must be finite and >= 0",
                ));
            }
            if !c.level.is_finite() || !c.amplitude.is_finite() {
                return Err(Error::config(
                    field("level"),
                    "level and amplitude must be finite",
                ));
            }
        }
        for (i, s) in self.schedule.iter().enumerate() {
            if s.duration == 0 {
                return Err(Error::config(
                    format!("schedule[{i}].duration"),
                    "must be positive",
                ));
            }
            if s.concept >= self.concepts.len() {
                return Err(Error::config(
                    format!("schedule[{i}].concept"),
                    format!(
                        "{} is not a valid concept index (have {})",
                        s.concept,
                        self.concepts.len()
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Values with the concept index that produced each point.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStream {
    pub values: Vec<f64>,
    pub labels: Vec<usize>,
}

/// Standard normal draw by Box–Muller (cosine branch) from two uniforms.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = 1.0 - rng.random::<f64>(); // (0, 1]
    let u2 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Renders a [`SyntheticSpec`].
///
/// Point `i` (counted over the whole stream) of a segment with concept `c` is
/// `level + amplitude * sin(2π i / period) + noise_sigma * z`, where `z` comes
/// from a ChaCha8 generator seeded with `spec.seed`, two uniforms per point.
pub fn generate(spec: &SyntheticSpec) -> Result<LabeledStream> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = Vec::with_capacity(spec.len());
    let mut labels = Vec::with_capacity(spec.len());
    for seg in &spec.schedule {
        let c = &spec.concepts[seg.concept];
        for _ in 0..seg.duration {
            let i = values.len() as f64;
            let z = standard_normal(&mut rng);
            values.push(
                c.level + c.amplitude * (TAU * i / c.period as f64).sin() + c.noise_sigma * z,
            );
            labels.push(seg.concept);
        }
    }
    Ok(LabeledStream { values, labels })
}

/// Where normalisation statistics are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatsFrom {
    /// The first `n` points only, so later data never leaks into the scaling.
    Prefix(usize),
    Whole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl Normalized {
    pub fn denormalize(&self, value: f64) -> f64 {
        value * self.std + self.mean
    }
}

/// Z-normalises `values` with the population mean and std of the chosen segment.
pub fn normalize(values: &[f64], stats_from: StatsFrom) -> Result<Normalized> {
    let segment = match stats_from {
        StatsFrom::Prefix(n) => &values[..n.min(values.len())],
        StatsFrom::Whole => values,
    };
    if segment.is_empty() {
        return Err(Error::Numeric(
            "cannot normalise with an empty segment".into(),
        ));
    }
    let n = segment.len() as f64;
    let mean = segment.iter().sum::<f64>() / n;
    let std = (segment.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    if std.is_nan() || std <= 0.0 {
        return Err(Error::Numeric(
            "zero-variance segment cannot be normalised".into(),
        ));
    }
    Ok(Normalized {
        values: values.iter().map(|v| (v - mean) / std).collect(),
        mean,
        std,
    })
}

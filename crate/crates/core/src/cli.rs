//! The `driftpool` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{generate, SyntheticSpec};
use crate::error::{Error, ErrorClass, Result};
use crate::manifest::RunManifest;
use crate::results::{self, compare_text, write_compare_csv, ResultsBundle};

#[derive(Debug, Parser)]
#[command(
    name = "driftpool",
    version,
    about = "Online forecasting with an evolving forecaster pool"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute one run and write its results bundle.
    Run(RunArgs),
    /// Run several manifests over the same data and tabulate MSE deltas against the first.
    Compare(CompareArgs),
    /// Write a synthetic recurring-concept stream and its labels.
    Generate(GenerateArgs),
    /// Identification purity of a finished run against concept labels.
    Purity(PurityArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Naive,
    Linear,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoreArg {
    Euclidean,
    Mle,
}

/// Manifest file plus command-line overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct ManifestArgs {
    /// Manifest file (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV path, `synthetic`, or `synthetic:<spec.json>`.
    #[arg(long)]
    pub data: Option<String>,
    /// Column name or zero-based index.
    #[arg(long)]
    pub column: Option<String>,
    #[arg(long)]
    pub lookback: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, value_enum)]
    pub forecaster: Option<KindArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_evolution: bool,
    #[arg(long)]
    pub no_elimination: bool,
    #[arg(long)]
    pub no_abandonment: bool,
    #[arg(long)]
    pub no_lr_adjust: bool,
    #[arg(long, conflicts_with = "global_only")]
    pub local_only: bool,
    #[arg(long)]
    pub global_only: bool,
    #[arg(long)]
    pub max_pool: Option<usize>,
    #[arg(long, value_enum)]
    pub score: Option<ScoreArg>,
    /// Any other manifest key, as `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl ManifestArgs {
    pub fn resolve(&self) -> Result<RunManifest> {
        let mut m = match &self.config {
            Some(path) => RunManifest::from_file(path)?,
            None => RunManifest::default(),
        };
        let mut set = |k: &str, v: &str| m.set(k, v);
        if let Some(d) = &self.data {
            set("data", d)?;
        }
        if let Some(c) = &self.column {
            set("column", c)?;
        }
        if let Some(v) = self.lookback {
            set("lookback", &v.to_string())?;
        }
        if let Some(v) = self.horizon {
            set("horizon", &v.to_string())?;
        }
        if let Some(k) = self.forecaster {
            set(
                "forecaster",
                match k {
                    KindArg::Naive => "naive",
                    KindArg::Linear => "linear",
                    KindArg::Mlp => "mlp",
                },
            )?;
        }
        if let Some(v) = self.seed {
            set("seed", &v.to_string())?;
        }
        if self.no_evolution {
            set("evolution", "false")?;
        }
        if self.no_elimination {
            set("elimination", "false")?;
        }
        if self.no_abandonment {
            set("abandonment", "false")?;
        }
        if self.no_lr_adjust {
            set("lr_adjust", "false")?;
        }
        if self.local_only {
            set("global_gene", "false")?;
        }
        if self.global_only {
            set("local_gene", "false")?;
        }
        if let Some(v) = self.max_pool {
            set("max_pool", &v.to_string())?;
        }
        if let Some(s) = self.score {
            set(
                "score",
                if s == ScoreArg::Mle {
                    "mle"
                } else {
                    "euclidean"
                },
            )?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::config("set", format!("`{kv}` is not KEY=VALUE")))?;
            set(k.trim(), v.trim())?;
        }
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub manifest: ManifestArgs,
    /// Output directory; overrides the manifest's `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Manifest files; the first is the baseline.
    #[arg(required = true, num_args = 2..)]
    pub manifests: Vec<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// JSON stream description; defaults to the A-B-A-C-B-A stream.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Replace every concept's noise level.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Output directory for `series.csv` and `labels.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PurityArgs {
    /// Results directory or `results.json`.
    #[arg(long)]
    pub results: PathBuf,
    /// Labels CSV with a `label` column.
    #[arg(long)]
    pub labels: PathBuf,
    /// Skip each entry's first `tau_safe` online selections.
    #[arg(long)]
    pub exclude_safe: bool,
}

fn out_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<ResultsBundle> {
    let mut manifest = args.manifest.resolve()?;
    if let Some(dir) = &args.out {
        manifest.out = Some(dir.clone());
    }
    log::info!("running config {}", manifest.config_hash());
    let (bundle, series) = results::execute(&manifest)?;
    if let Some(dir) = &manifest.out {
        bundle.write(dir)?;
        if let Some(labels) = &series.labels {
            results::write_labels(dir.join("labels.csv"), labels)?;
        }
    }
    let a = &bundle.result.aggregate;
    writeln!(
        out,
        "config {}\nmean_mse {:.6}\ninstances {}\nevolutions {}\neliminations {}\nabandoned {}\nfinal_pool {}",
        bundle.config_hash, a.mean_mse, a.instances, a.evolutions, a.eliminations, a.abandoned, a.final_pool_size
    )
    .map_err(out_err)?;
    Ok(bundle)
}

pub fn cmd_compare(args: &CompareArgs, out: &mut dyn Write) -> Result<()> {
    let manifests = args
        .manifests
        .iter()
        .map(|p| Ok((p.display().to_string(), RunManifest::from_file(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let rows = results::compare(&manifests)?;
    write!(out, "{}", compare_text(&rows)).map_err(out_err)?;
    if let Some(path) = &args.out {
        write_compare_csv(path, &rows)?;
    }
    Ok(())
}

fn read_spec(path: &Path) -> Result<SyntheticSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))
}

pub fn cmd_generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let mut spec = match &args.spec {
        Some(p) => read_spec(p)?,
        None => SyntheticSpec::recurring_default(args.seed),
    };
    spec.seed = args.seed;
    if let Some(n) = args.noise {
        spec = spec.with_noise(n);
    }
    let stream = generate(&spec)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let t: Vec<f64> = (0..stream.values.len()).map(|i| i as f64).collect();
    crate::data::write_csv(
        args.out.join("series.csv"),
        &["t", "value"],
        &[&t, &stream.values],
    )?;
    results::write_labels(args.out.join("labels.csv"), &stream.labels)?;

    let w = |e| out_err(e);
    writeln!(
        out,
        "points {}\nsegments {}",
        stream.values.len(),
        spec.schedule.len()
    )
    .map_err(w)?;
    let mut start = 0;
    for (i, seg) in spec.schedule.iter().enumerate() {
        writeln!(
            out,
            "segment {i}: concept {} [{start}, {})",
            seg.concept,
            start + seg.duration
        )
        .map_err(w)?;
        start += seg.duration;
    }
    for c in 0..spec.concepts.len() {
        let vals: Vec<f64> = stream
            .values
            .iter()
            .zip(&stream.labels)
            .filter(|(_, &l)| l == c)
            .map(|(v, _)| *v)
            .collect();
        if vals.is_empty() {
            continue;
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        writeln!(
            out,
            "concept {c}: points {} mean {mean:.4} std {std:.4}",
            vals.len()
        )
        .map_err(w)?;
    }
    Ok(())
}

pub fn cmd_purity(args: &PurityArgs, out: &mut dyn Write) -> Result<results::PurityReport> {
    let bundle = ResultsBundle::read(&args.results)?;
    let labels = results::read_labels(&args.labels)?;
    let exclude = if args.exclude_safe {
        Some(RunManifest::parse(&bundle.manifest)?.engine.cep.tau_safe)
    } else {
        None
    };
    let report = results::purity(&bundle, &labels, exclude)?;
    let w = |e| out_err(e);
    writeln!(
        out,
        "purity {:.4}\ncounted {}\nmixed {}\nwarming {}",
        report.purity, report.counted, report.mixed, report.warming
    )
    .map_err(w)?;
    for e in &report.entries {
        writeln!(
            out,
            "entry {}: majority {} matching {}/{}",
            e.entry, e.majority, e.matching, e.served
        )
        .map_err(w)?;
    }
    Ok(report)
}

pub fn exit_code(err: &Error) -> i32 {
    match err.class() {
        ErrorClass::Validation => 2,
        ErrorClass::Runtime => 3,
        ErrorClass::Io => 4,
    }
}

/// Parses `args`, runs the subcommand and returns the process exit code:
/// 0 on success, 2 for invalid input, 3 for runtime failures, 4 for I/O.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ =
        env_logger::Builder::from_env(env_logger::Env::new().filter("DRIFTPOOL_LOG")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let outcome = match &cli.command {
        Command::Run(a) => cmd_run(a, &mut out).map(drop),
        Command::Compare(a) => cmd_compare(a, &mut out),
        Command::Generate(a) => cmd_generate(a, &mut out),
        Command::Purity(a) => cmd_purity(a, &mut out).map(drop),
    };
    match outcome {
        Ok(()) => 0,
        // reader went away, e.g. piped into `head`
        Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

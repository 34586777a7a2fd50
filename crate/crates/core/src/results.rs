//! Result bundles, identification purity and run comparisons.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, write_csv, Column};
use crate::engine::{run, EventKind, RunResult};
use crate::error::{Error, Result};
use crate::manifest::{PreparedSeries, RunManifest};
use crate::pool::EntryId;

/// Bumped on any breaking change to [`ResultsBundle`] or the CSV extracts.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataInfo {
    pub name: String,
    pub len: usize,
    /// First index of the online stage.
    pub split: usize,
    pub scaling: Option<(f64, f64)>,
}

/// Everything a run produced, plus enough context to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsBundle {
    pub schema_version: u32,
    pub config_hash: String,
    /// Canonical manifest text.
    pub manifest: String,
    pub data: DataInfo,
    #[serde(flatten)]
    pub result: RunResult,
}

impl ResultsBundle {
    pub fn new(manifest: &RunManifest, series: &PreparedSeries, result: RunResult) -> Self {
        ResultsBundle {
            schema_version: SCHEMA_VERSION,
            config_hash: manifest.config_hash(),
            manifest: manifest.to_text(),
            data: DataInfo {
                name: series.name.clone(),
                len: series.values.len(),
                split: manifest.engine.split_point(series.values.len()),
                scaling: series.scaling,
            },
            result,
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<ResultsBundle> {
        let path = path.as_ref();
        let path = if path.is_dir() {
            path.join("results.json")
        } else {
            path.to_path_buf()
        };
        let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.clone()),
            _ => Error::io(&path, e),
        })?;
        let bundle: ResultsBundle = serde_json::from_str(&text)
            .map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))?;
        if bundle.schema_version != SCHEMA_VERSION {
            return Err(Error::Mismatch(format!(
                "results schema version {} is not supported (expected {SCHEMA_VERSION})",
                bundle.schema_version
            )));
        }
        Ok(bundle)
    }

    /// Writes `results.json`, `records.csv`, `genes.csv` and `events.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Numeric(format!("cannot serialise results: {e}")))?;
        let path = dir.join("results.json");
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;

        let r = &self.result.records;
        let col =
            |f: &dyn Fn(&crate::engine::InstanceRecord) -> f64| r.iter().map(f).collect::<Vec<_>>();
        write_csv(
            dir.join("records.csv"),
            &["t", "entry_id", "mse", "evolved", "abandoned", "pool_size"],
            &[
                &col(&|r| r.t as f64),
                &col(&|r| r.selected as f64),
                &col(&|r| r.mse),
                &col(&|r| r.evolved as u8 as f64),
                &col(&|r| r.abandoned as u8 as f64),
                &col(&|r| r.pool_size as f64),
            ],
        )?;

        let g = &self.result.trajectory;
        write_csv(
            dir.join("genes.csv"),
            &["t", "entry_id", "mu", "sigma"],
            &[
                &g.iter().map(|p| p.t as f64).collect::<Vec<_>>(),
                &g.iter().map(|p| p.entry as f64).collect::<Vec<_>>(),
                &g.iter().map(|p| p.mu).collect::<Vec<_>>(),
                &g.iter().map(|p| p.sigma).collect::<Vec<_>>(),
            ],
        )?;

        let ev = &self.result.events;
        write_csv(
            dir.join("events.csv"),
            &["t", "entry_id", "event", "parent"],
            &[
                &ev.iter().map(|e| e.t as f64).collect::<Vec<_>>(),
                &ev.iter().map(|e| e.entry as f64).collect::<Vec<_>>(),
                &ev.iter().map(|e| event_code(e.kind)).collect::<Vec<_>>(),
                &ev.iter()
                    .map(|e| e.parent.map_or(-1.0, |p| p as f64))
                    .collect::<Vec<_>>(),
            ],
        )
    }
}

/// Numeric code used in `events.csv`: 0 created, 1 eliminated, 2 evicted.
pub fn event_code(kind: EventKind) -> f64 {
    match kind {
        EventKind::Created => 0.0,
        EventKind::Eliminated => 1.0,
        EventKind::Evicted => 2.0,
    }
}

/// Runs a manifest end to end.
pub fn execute(manifest: &RunManifest) -> Result<(ResultsBundle, PreparedSeries)> {
    manifest.validate()?;
    let series = manifest.load_series()?;
    let result = run(&series.values, &manifest.engine)?;
    Ok((ResultsBundle::new(manifest, &series, result), series))
}

/// Writes per-point concept labels as `t,label`.
pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let t: Vec<f64> = (0..labels.len()).map(|i| i as f64).collect();
    let l: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    write_csv(path, &["t", "label"], &[&t, &l])
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let source = load_csv(path, &Column::Name("label".into()), true)?;
    source
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Parse {
                    row: i as u64 + 2,
                    value: v.to_string(),
                })
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryPurity {
    pub entry: EntryId,
    pub majority: usize,
    pub served: usize,
    pub matching: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityReport {
    pub purity: f64,
    pub counted: usize,
    /// Instances whose input window spans more than one concept.
    pub mixed: usize,
    /// Instances skipped as part of an entry's safety period.
    pub warming: usize,
    pub entries: Vec<EntryPurity>,
}

/// Fraction of online instances served by an entry whose majority concept is
/// the instance's own concept.
///
/// An instance's concept is the label of its input window; instances whose
/// window straddles a change have no single concept and are left out. With
/// `exclude_first = Some(k)`, the first `k` online selections of every entry
/// are left out as well.
pub fn purity(
    bundle: &ResultsBundle,
    labels: &[usize],
    exclude_first: Option<u64>,
) -> Result<PurityReport> {
    if labels.len() != bundle.data.len {
        return Err(Error::Mismatch(format!(
            "{} labels for a series of {} points",
            labels.len(),
            bundle.data.len
        )));
    }
    let lookback = RunManifest::parse(&bundle.manifest)?.engine.lookback;
    let mut seen: BTreeMap<EntryId, u64> = BTreeMap::new();
    let mut served: Vec<(EntryId, usize)> = Vec::new();
    let (mut mixed, mut warming) = (0, 0);
    for r in &bundle.result.records {
        let window = labels.get(r.t..r.t + lookback).ok_or_else(|| {
            Error::Mismatch(format!(
                "record at t = {} lies outside the labelled series",
                r.t
            ))
        })?;
        let count = seen.entry(r.selected).or_insert(0);
        *count += 1;
        if exclude_first.is_some_and(|k| *count <= k) {
            warming += 1;
            continue;
        }
        if window.iter().any(|&l| l != window[0]) {
            mixed += 1;
            continue;
        }
        served.push((r.selected, window[0]));
    }

    let mut tallies: BTreeMap<EntryId, BTreeMap<usize, usize>> = BTreeMap::new();
    for &(entry, label) in &served {
        *tallies.entry(entry).or_default().entry(label).or_insert(0) += 1;
    }
    let entries: Vec<EntryPurity> = tallies
        .into_iter()
        .map(|(entry, counts)| {
            let (&majority, &matching) = counts
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .expect("tally is non-empty");
            EntryPurity {
                entry,
                majority,
                served: counts.values().sum(),
                matching,
            }
        })
        .collect();
    let counted = served.len();
    let matching: usize = entries.iter().map(|e| e.matching).sum();
    Ok(PurityReport {
        purity: if counted == 0 {
            1.0
        } else {
            matching as f64 / counted as f64
        },
        counted,
        mixed,
        warming,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub name: String,
    pub config_hash: String,
    pub mean_mse: f64,
    /// Percentage change against the first row; negative is an improvement.
    pub delta_pct: f64,
}

/// Percentage change of `value` against `baseline`.
pub fn delta_pct(baseline: f64, value: f64) -> f64 {
    if baseline == value {
        0.0
    } else {
        (value - baseline) / baseline * 100.0
    }
}

/// Two decimals with a trailing `%`; never prints a negative zero.
pub fn format_delta(delta: f64) -> String {
    let s = format!("{delta:.2}");
    if s == "-0.00" {
        "0.00%".into()
    } else {
        s + "%"
    }
}

/// Runs every manifest (in parallel) and tabulates mean MSE against the first.
pub fn compare(manifests: &[(String, RunManifest)]) -> Result<Vec<CompareRow>> {
    if manifests.len() < 2 {
        return Err(Error::config(
            "manifests",
            "at least two manifests are required",
        ));
    }
    let base = &manifests[0].1;
    for (name, m) in &manifests[1..] {
        if !base.same_task(m) {
            return Err(Error::Mismatch(format!(
                "`{name}` does not use the same data, lookback and horizon as `{}`",
                manifests[0].0
            )));
        }
    }
    let bundles: Vec<ResultsBundle> = manifests
        .par_iter()
        .map(|(_, m)| execute(m).map(|(b, _)| b))
        .collect::<Result<_>>()?;
    let baseline = bundles[0].result.aggregate.mean_mse;
    Ok(manifests
        .iter()
        .zip(&bundles)
        .map(|((name, _), b)| CompareRow {
            name: name.clone(),
            config_hash: b.config_hash.clone(),
            mean_mse: b.result.aggregate.mean_mse,
            delta_pct: delta_pct(baseline, b.result.aggregate.mean_mse),
        })
        .collect())
}

pub fn compare_text(rows: &[CompareRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(8);
    let mut out = format!(
        "{:<width$}  {:>12}  {:>9}\n",
        "manifest", "mean_mse", "delta"
    );
    for r in rows {
        out += &format!(
            "{:<width$}  {:>12.6}  {:>9}\n",
            r.name,
            r.mean_mse,
            format_delta(r.delta_pct)
        );
    }
    out
}

/// Writes `row,mean_mse,delta_pct,name` with the name last so the numeric
/// columns stay loadable.
pub fn write_compare_csv(path: impl AsRef<Path>, rows: &[CompareRow]) -> Result<()> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let mut text = String::from("row,mean_mse,delta_pct,name\n");
    for (i, r) in rows.iter().enumerate() {
        let name = if r.name.contains([',', '"', '\n']) {
            format!("\"{}\"", r.name.replace('"', "\"\""))
        } else {
            r.name.clone()
        };
        text += &format!("{i},{},{},{name}\n", r.mean_mse, r.delta_pct);
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_examples() {
        assert_eq!(format_delta(delta_pct(1.0, 0.8)), "-20.00%");
        assert_eq!(format_delta(delta_pct(0.5, 0.5)), "0.00%");
        assert_eq!(format_delta(delta_pct(2.0, 2.5)), "25.00%");
        assert_eq!(format_delta(-0.001), "0.00%");
    }

    fn bundle(records: &[(usize, EntryId)], len: usize, lookback: usize) -> ResultsBundle {
        let mut m = RunManifest::default();
        m.engine.lookback = lookback;
        let records = records
            .iter()
            .map(|&(t, selected)| crate::engine::InstanceRecord {
                t,
                selected,
                mse: 0.0,
                evolved: false,
                parent: None,
                abandoned: false,
                eliminated: vec![],
                evicted: None,
                pool_size: 1,
                forecast: None,
            })
            .collect();
        ResultsBundle {
            schema_version: SCHEMA_VERSION,
            config_hash: m.config_hash(),
            manifest: m.to_text(),
            data: DataInfo {
                name: "t".into(),
                len,
                split: 0,
                scaling: None,
            },
            result: RunResult {
                aggregate: crate::engine::Aggregate {
                    mean_mse: 0.0,
                    instances: 0,
                    final_pool_size: 1,
                    evolutions: 0,
                    eliminations: 0,
                    abandoned: 0,
                },
                warm_losses: vec![],
                records,
                events: vec![],
                trajectory: vec![],
            },
        }
    }

    #[test]
    fn purity_counts_majorities() {
        // labels: 0 on [0, 10), 1 on [10, 20)
        let labels: Vec<usize> = (0..20).map(|i| i / 10).collect();
        // lookback 2: t=0,2,4 -> label 0; t=9 mixed; t=10,12,14 -> label 1
        let b = bundle(
            &[(0, 0), (2, 0), (4, 1), (9, 1), (10, 1), (12, 1), (14, 0)],
            20,
            2,
        );
        let r = purity(&b, &labels, None).unwrap();
        assert_eq!(r.mixed, 1);
        assert_eq!(r.counted, 6);
        // entry 0 serves {0, 0, 1} -> majority 0, 2 match; entry 1 serves {0, 1, 1} -> majority 1, 2 match
        assert_eq!(r.purity, 4.0 / 6.0);
        assert_eq!(
            r.entries[0],
            EntryPurity {
                entry: 0,
                majority: 0,
                served: 3,
                matching: 2
            }
        );

        let r = purity(&b, &labels, Some(1)).unwrap();
        assert_eq!(r.warming, 2);
        assert_eq!(r.counted, 4);
    }

    #[test]
    fn purity_rejects_length_mismatch() {
        let b = bundle(&[(0, 0)], 20, 2);
        assert!(matches!(
            purity(&b, &[0; 19], None),
            Err(Error::Mismatch(_))
        ));
    }

    #[test]
    fn single_entry_single_concept_is_pure() {
        let b = bundle(&[(0, 0), (3, 0), (6, 0)], 10, 3);
        assert_eq!(purity(&b, &[2; 10], None).unwrap().purity, 1.0);
    }

    #[test]
    fn bundle_round_trips_through_disk() {
        let mut b = bundle(&[(0, 0), (3, 1)], 10, 3);
        b.result.records[0].mse = 0.011407527406922975;
        b.result.records[1].mse = 1.0 / 3.0;
        let dir = tempfile::tempdir().unwrap();
        b.write(dir.path()).unwrap();
        assert_eq!(ResultsBundle::read(dir.path()).unwrap(), b);
        let mse = load_csv(
            dir.path().join("records.csv"),
            &Column::Name("mse".into()),
            true,
        )
        .unwrap();
        assert_eq!(mse.values, vec![0.011407527406922975, 1.0 / 3.0]);
    }
}

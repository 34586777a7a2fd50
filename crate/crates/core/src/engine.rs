//! Warm-up and online stages of a pool run.
//!
//! A series is split by time into a warm-up prefix (a quarter of the points by
//! default) and an online suffix. Warm-up trains the single initial forecaster
//! on every stride-1 window of the prefix. The online stage walks the suffix
//! with stride `H`, so the ground truth of an instance is never visible to an
//! earlier instance: each window is forecast first and only then used for
//! training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecaster::{mse, ForecasterKind, ForecasterSpec};
use crate::gene::{compute_gene, GeneVector};
use crate::pool::{should_evolve, CepConfig, EntryId, Pool};

/// One `(input, ground truth)` pair; `y` starts right after `x` ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Instance<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    /// Series index of `x[0]`.
    pub t: usize,
}

impl<'a> Instance<'a> {
    /// The instance whose input window starts at `t`, if it fits inside `series`.
    pub fn at(series: &'a [f64], t: usize, lookback: usize, horizon: usize) -> Option<Self> {
        let end = t.checked_add(lookback + horizon)?;
        (end <= series.len()).then(|| Instance {
            x: &series[t..t + lookback],
            y: &series[t + lookback..end],
            t,
        })
    }
}

/// Every window of `series[start..end]` with the given stride; windows that
/// would overrun `end` are dropped.
pub fn instances(
    series: &[f64],
    start: usize,
    end: usize,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Vec<Instance<'_>> {
    let segment = &series[..end.min(series.len())];
    (start..)
        .step_by(stride.max(1))
        .map_while(|t| Instance::at(segment, t, lookback, horizon))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub lookback: usize,
    pub horizon: usize,
    pub forecaster: ForecasterKind,
    /// Hidden width of the MLP forecaster.
    pub hidden: usize,
    /// SGD step size; `None` uses the forecaster kind's default.
    pub lr: Option<f64>,
    pub warm_epochs: usize,
    /// Share of the series used for warm-up.
    pub warm_fraction: f64,
    pub seed: u64,
    /// Keep every online forecast in the run result.
    pub record_forecasts: bool,
    pub cep: CepConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            lookback: 60,
            horizon: 30,
            forecaster: ForecasterKind::Linear,
            hidden: 32,
            lr: None,
            warm_epochs: 5,
            warm_fraction: 0.25,
            seed: 0,
            record_forecasts: false,
            cep: CepConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn lr_raw(&self) -> f64 {
        self.lr.unwrap_or_else(|| self.forecaster.default_lr())
    }

    pub fn forecaster_spec(&self) -> ForecasterSpec {
        ForecasterSpec {
            kind: self.forecaster,
            lookback: self.lookback,
            horizon: self.horizon,
            hidden: self.hidden,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lookback == 0 {
            return Err(Error::config("lookback", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.forecaster == ForecasterKind::Mlp && self.hidden == 0 {
            return Err(Error::config("hidden", "must be at least 1"));
        }
        let lr = self.lr_raw();
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::config(
                "lr",
                format!("{lr} is outside the legal range (0, inf)"),
            ));
        }
        if !(self.warm_fraction > 0.0 && self.warm_fraction < 1.0) {
            return Err(Error::config(
                "warm_fraction",
                format!("{} is outside the legal range (0, 1)", self.warm_fraction),
            ));
        }
        self.cep.validate()
    }

    /// Index where the online stage begins.
    pub fn split_point(&self, len: usize) -> usize {
        (len as f64 * self.warm_fraction).floor() as usize
    }

    /// Shortest series that yields at least one warm-up and one online instance.
    pub fn min_series_len(&self) -> usize {
        let need = self.lookback + self.horizon;
        (need..)
            .find(|&n| {
                let split = self.split_point(n);
                split >= need && n - split >= need
            })
            .expect("some length always satisfies the split")
    }
}

/// What happened to one online instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub t: usize,
    pub selected: EntryId,
    pub mse: f64,
    pub evolved: bool,
    /// Entry that was split when `evolved` is set.
    pub parent: Option<EntryId>,
    pub abandoned: bool,
    pub eliminated: Vec<EntryId>,
    pub evicted: Option<EntryId>,
    /// Pool size after elimination.
    pub pool_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecast: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Created,
    Eliminated,
    Evicted,
}

/// Pool lifecycle event, stamped with the series index of the instance that caused it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEvent {
    pub t: usize,
    pub entry: EntryId,
    pub kind: EventKind,
    pub parent: Option<EntryId>,
}

/// Mixed gene of one entry after an online instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenePoint {
    pub t: usize,
    pub entry: EntryId,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_mse: f64,
    pub instances: usize,
    pub final_pool_size: usize,
    pub evolutions: usize,
    pub eliminations: usize,
    pub abandoned: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub aggregate: Aggregate,
    /// Mean training loss of each warm-up epoch.
    pub warm_losses: Vec<f64>,
    pub records: Vec<InstanceRecord>,
    pub events: Vec<PoolEvent>,
    pub trajectory: Vec<GenePoint>,
}

fn gene_of(window: &[f64], config: &CepConfig) -> Result<GeneVector> {
    compute_gene(window, config.scope_for(window.len()))
}

/// Trains the pool's single forecaster on `instances` for `epochs` passes,
/// absorbing each instance gene. Returns the mean loss of each epoch.
///
/// Each step counts as a prediction of the initial entry.
pub fn warm_up(pool: &mut Pool, instances: &[Instance<'_>], epochs: usize) -> Result<Vec<f64>> {
    if instances.is_empty() {
        return Err(Error::EmptyWarmSet);
    }
    if pool.len() != 1 {
        return Err(Error::State(format!(
            "warm-up needs a pool with exactly one entry, found {}",
            pool.len()
        )));
    }
    let config = pool.config().clone();
    let id = pool.entries()[0].id();
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut total = 0.0;
        for inst in instances {
            let gene = gene_of(inst.x, &config)?;
            let entry = pool.get_mut(id).expect("initial entry exists");
            let lr = entry.lr_current();
            total += entry.forecaster_mut().train_step(inst.x, inst.y, lr)?;
            entry.absorb_instance(gene, &config)?;
            entry.record_prediction();
        }
        losses.push(total / instances.len() as f64);
    }
    Ok(losses)
}

/// Runs one online instance through retrieval, optional evolution,
/// forecasting, training (unless abandoned) and elimination.
///
/// The returned record carries the forecast that was scored.
pub fn online_step(pool: &mut Pool, inst: &Instance<'_>) -> Result<InstanceRecord> {
    let config = pool.config().clone();

    let x_gene = gene_of(inst.x, &config)?;
    let nearest = pool.nearest(x_gene)?;
    let (current, parent, evicted) = if pool.should_evolve(nearest, x_gene)? {
        let ev = pool.evolve(nearest, x_gene)?;
        (ev.child, Some(ev.parent), ev.evicted)
    } else {
        (nearest, None, None)
    };

    let entry = pool.get(current).expect("current entry exists");
    let forecast = entry.forecaster().predict(inst.x)?;
    let error = mse(&forecast, inst.y);
    if !error.is_finite() {
        return Err(Error::Numeric(format!(
            "online MSE is {error} at t = {}",
            inst.t
        )));
    }

    let y_gene = gene_of(inst.y, &config)?;
    let abandoned = config.gradient_abandonment && should_evolve(entry, y_gene, &config)?;
    if !abandoned {
        let lr_raw = pool.lr_raw();
        let entry = pool.get_mut(current).expect("current entry exists");
        let lr = entry.lr_current();
        entry.forecaster_mut().train_step(inst.x, inst.y, lr)?;
        entry.lr_tick(lr_raw, &config)?;
        entry.absorb_instance(x_gene, &config)?;
    }

    pool.mark_selected(current)?;
    let eliminated = pool.eliminate_stale(Some(current));

    Ok(InstanceRecord {
        t: inst.t,
        selected: current,
        mse: error,
        evolved: parent.is_some(),
        parent,
        abandoned,
        eliminated,
        evicted,
        pool_size: pool.len(),
        forecast: Some(forecast),
    })
}

/// Full warm-up plus online run over `series`.
pub fn run(series: &[f64], config: &EngineConfig) -> Result<RunResult> {
    config.validate()?;
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::Malformed(format!(
            "series value at index {i} is not finite"
        )));
    }
    let min = config.min_series_len();
    if series.len() < min {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            min,
        });
    }
    let (l, h) = (config.lookback, config.horizon);
    let split = config.split_point(series.len());
    let warm = instances(series, 0, split, l, h, 1);
    let online = instances(series, split, series.len(), l, h, h);

    let seed_gene = gene_of(warm[0].x, &config.cep)?;
    let mut pool = Pool::new(
        config.forecaster_spec().build()?,
        seed_gene,
        config.lr_raw(),
        config.cep.clone(),
    )?;
    let mut events = vec![PoolEvent {
        t: 0,
        entry: pool.entries()[0].id(),
        kind: EventKind::Created,
        parent: None,
    }];
    let warm_losses = warm_up(&mut pool, &warm, config.warm_epochs)?;

    let mut records = Vec::with_capacity(online.len());
    let mut trajectory = Vec::new();
    for inst in &online {
        let mut record = online_step(&mut pool, inst)?;
        if !config.record_forecasts {
            record.forecast = None;
        }
        if let Some(parent) = record.parent {
            events.push(PoolEvent {
                t: inst.t,
                entry: record.selected,
                kind: EventKind::Created,
                parent: Some(parent),
            });
        }
        if let Some(id) = record.evicted {
            events.push(PoolEvent {
                t: inst.t,
                entry: id,
                kind: EventKind::Evicted,
                parent: None,
            });
        }
        for &id in &record.eliminated {
            events.push(PoolEvent {
                t: inst.t,
                entry: id,
                kind: EventKind::Eliminated,
                parent: None,
            });
        }
        for entry in pool.entries() {
            let g = entry.gene(pool.config())?;
            trajectory.push(GenePoint {
                t: inst.t,
                entry: entry.id(),
                mu: g.mu,
                sigma: g.sigma,
            });
        }
        records.push(record);
    }

    let aggregate = Aggregate {
        mean_mse: records.iter().map(|r| r.mse).sum::<f64>() / records.len() as f64,
        instances: records.len(),
        final_pool_size: pool.len(),
        evolutions: records.iter().filter(|r| r.evolved).count(),
        eliminations: records
            .iter()
            .map(|r| r.eliminated.len() + r.evicted.is_some() as usize)
            .sum(),
        abandoned: records.iter().filter(|r| r.abandoned).count(),
    };
    Ok(RunResult {
        aggregate,
        warm_losses,
        records,
        events,
        trajectory,
    })
}

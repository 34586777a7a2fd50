//! The forecaster pool and its lifecycle rules.
//!
//! Each incoming sample is routed to the entry whose mixed gene is closest.
//! When the sample's mean sits more than `tau_mu` standard deviations away
//! from that entry's gene (and the entry has finished its safety period), the
//! entry is cloned into a new specialist seeded with the sample's gene.
//! Entries that stay idle for more than `tau_e` times the number of
//! predictions they have made are dropped.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecaster::Forecaster;
use crate::gene::{gene_distance, mix_gene, mle_cost, GeneState, GeneVector};

pub type EntryId = u64;

/// How the nearest entry is scored against a sample gene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalScore {
    #[default]
    Euclidean,
    /// Gaussian negative log-likelihood of the sample under the entry's gene.
    Mle,
}

impl fmt::Display for RetrievalScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RetrievalScore::Euclidean => "euclidean",
            RetrievalScore::Mle => "mle",
        })
    }
}

impl FromStr for RetrievalScore {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euclidean" => Ok(RetrievalScore::Euclidean),
            "mle" => Ok(RetrievalScore::Mle),
            other => Err(Error::config(
                "score",
                format!("unknown score `{other}`; expected euclidean or mle"),
            )),
        }
    }
}

/// Pool hyperparameters and mechanism switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CepConfig {
    /// Mean-shift threshold, in gene standard deviations.
    pub tau_mu: f64,
    /// Weight of the local gene in the mixed gene.
    pub tau_gene: f64,
    /// EMA rate of the local gene.
    pub tau_l: f64,
    /// Predictions an entry must make before it may split.
    pub tau_safe: u64,
    /// Idle-to-prediction ratio above which an entry is eliminated.
    pub tau_e: f64,
    /// Initial learning-rate factor for a freshly evolved entry.
    pub tau_lr: f64,
    /// Training steps over which that factor is restored to 1.
    pub t_lr: u32,
    /// Number of most recent values a gene is computed from. `None` = whole window.
    pub scope: Option<usize>,
    pub score: RetrievalScore,
    pub evolution: bool,
    pub elimination: bool,
    pub gradient_abandonment: bool,
    pub optimizer_adjustment: bool,
    pub use_local_gene: bool,
    pub use_global_gene: bool,
    pub max_pool_size: Option<usize>,
}

impl Default for CepConfig {
    fn default() -> Self {
        CepConfig {
            tau_mu: 3.0,
            tau_gene: 0.8,
            tau_l: 0.2,
            tau_safe: 15,
            tau_e: 1.5,
            tau_lr: 0.5,
            t_lr: 15,
            scope: None,
            score: RetrievalScore::Euclidean,
            evolution: true,
            elimination: true,
            gradient_abandonment: true,
            optimizer_adjustment: true,
            use_local_gene: true,
            use_global_gene: true,
            max_pool_size: None,
        }
    }
}

impl CepConfig {
    pub fn validate(&self) -> Result<()> {
        fn range(field: &str, ok: bool, value: impl fmt::Display, legal: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::config(
                    field,
                    format!("{value} is outside the legal range {legal}"),
                ))
            }
        }
        range(
            "tau_mu",
            self.tau_mu > 0.0 && self.tau_mu.is_finite(),
            self.tau_mu,
            "(0, inf)",
        )?;
        range(
            "tau_gene",
            (0.0..=1.0).contains(&self.tau_gene),
            self.tau_gene,
            "[0, 1]",
        )?;
        range(
            "tau_l",
            self.tau_l > 0.0 && self.tau_l <= 1.0,
            self.tau_l,
            "(0, 1]",
        )?;
        range(
            "tau_e",
            self.tau_e > 0.0 && self.tau_e.is_finite(),
            self.tau_e,
            "(0, inf)",
        )?;
        range(
            "tau_lr",
            self.tau_lr > 0.0 && self.tau_lr <= 1.0,
            self.tau_lr,
            "(0, 1]",
        )?;
        range("t_lr", self.t_lr >= 1, self.t_lr, "[1, inf)")?;
        if let Some(s) = self.scope {
            range("scope", s >= 1, s, "[1, inf)")?;
        }
        if let Some(m) = self.max_pool_size {
            range("max_pool", m >= 1, m, "[1, inf)")?;
        }
        if !self.use_local_gene && !self.use_global_gene {
            return Err(Error::config(
                "use_local_gene",
                "at least one of the local and global genes must be enabled",
            ));
        }
        Ok(())
    }

    /// Local-gene weight after the ablation switches are applied.
    pub fn effective_tau_gene(&self) -> f64 {
        match (self.use_local_gene, self.use_global_gene) {
            (true, true) => self.tau_gene,
            (true, false) => 1.0,
            (false, _) => 0.0,
        }
    }

    pub fn scope_for(&self, window_len: usize) -> usize {
        self.scope.unwrap_or(window_len)
    }
}

/// One forecaster with its genes and lifecycle counters.
#[derive(Debug)]
pub struct PoolEntry {
    id: EntryId,
    parent: Option<EntryId>,
    forecaster: Box<dyn Forecaster>,
    genes: GeneState,
    n_pred: u64,
    n_wait: u64,
    lr_current: f64,
    lr_warm_steps_remaining: u32,
}

impl PoolEntry {
    pub fn id(&self) -> EntryId {
        self.id
    }
    pub fn parent(&self) -> Option<EntryId> {
        self.parent
    }
    pub fn forecaster(&self) -> &dyn Forecaster {
        self.forecaster.as_ref()
    }
    pub fn forecaster_mut(&mut self) -> &mut dyn Forecaster {
        self.forecaster.as_mut()
    }
    pub fn genes(&self) -> &GeneState {
        &self.genes
    }
    pub fn n_pred(&self) -> u64 {
        self.n_pred
    }
    pub fn n_wait(&self) -> u64 {
        self.n_wait
    }
    pub fn lr_current(&self) -> f64 {
        self.lr_current
    }
    pub fn lr_warm_steps_remaining(&self) -> u32 {
        self.lr_warm_steps_remaining
    }

    /// Mixed gene as seen by retrieval and drift tests.
    pub fn gene(&self, config: &CepConfig) -> Result<GeneVector> {
        mix_gene(&self.genes, config.effective_tau_gene())
    }

    /// Folds an instance gene into the local and global genes.
    pub fn absorb_instance(&mut self, instance: GeneVector, config: &CepConfig) -> Result<()> {
        self.genes.absorb(instance, config.tau_l)
    }

    /// Advances the learning-rate warm-up by one training step and returns the new rate.
    ///
    /// The rate grows by `tau_lr^(-1/t_lr)` per step and snaps to exactly `lr_raw`
    /// once `t_lr` steps have passed.
    pub fn lr_tick(&mut self, lr_raw: f64, config: &CepConfig) -> Result<f64> {
        if config.tau_lr.is_nan() || config.tau_lr <= 0.0 {
            return Err(Error::config(
                "tau_lr",
                format!("{} must be > 0", config.tau_lr),
            ));
        }
        if self.lr_warm_steps_remaining == 0 {
            self.lr_current = lr_raw;
            return Ok(self.lr_current);
        }
        self.lr_warm_steps_remaining -= 1;
        self.lr_current = if self.lr_warm_steps_remaining == 0 {
            lr_raw
        } else {
            let growth = config.tau_lr.powf(-1.0 / config.t_lr as f64);
            (growth * self.lr_current).min(lr_raw)
        };
        Ok(self.lr_current)
    }

    /// Counters that only the engine's warm-up phase may set directly.
    pub(crate) fn record_prediction(&mut self) {
        self.n_pred += 1;
        self.n_wait = 0;
    }
}

/// Mean-threshold drift test of `sample` against `entry`, gated by the safety period.
pub fn should_evolve(entry: &PoolEntry, sample: GeneVector, config: &CepConfig) -> Result<bool> {
    if !config.evolution || entry.n_pred < config.tau_safe {
        return Ok(false);
    }
    let g = entry.gene(config)?;
    Ok((sample.mu - g.mu).abs() > config.tau_mu * g.floored_sigma())
}

/// Result of [`Pool::evolve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Evolution {
    pub child: EntryId,
    pub parent: EntryId,
    /// Entry dropped to respect `max_pool_size`, if any.
    pub evicted: Option<EntryId>,
}

#[derive(Debug)]
pub struct Pool {
    entries: Vec<PoolEntry>,
    lr_raw: f64,
    config: CepConfig,
    next_id: EntryId,
}

impl Pool {
    /// A pool holding a single forecaster whose genes are seeded from `seed_gene`.
    pub fn new(
        forecaster: Box<dyn Forecaster>,
        seed_gene: GeneVector,
        lr_raw: f64,
        config: CepConfig,
    ) -> Result<Pool> {
        config.validate()?;
        if !(lr_raw > 0.0 && lr_raw.is_finite()) {
            return Err(Error::config(
                "lr",
                format!("{lr_raw} must be finite and > 0"),
            ));
        }
        if !seed_gene.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        let first = PoolEntry {
            id: 0,
            parent: None,
            forecaster,
            genes: GeneState::new(seed_gene),
            n_pred: 0,
            n_wait: 0,
            lr_current: lr_raw,
            lr_warm_steps_remaining: 0,
        };
        Ok(Pool {
            entries: vec![first],
            lr_raw,
            config,
            next_id: 1,
        })
    }

    pub fn config(&self) -> &CepConfig {
        &self.config
    }
    pub fn lr_raw(&self) -> f64 {
        self.lr_raw
    }
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    /// Entries in creation order.
    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn get(&self, id: EntryId) -> Option<&PoolEntry> {
        self.position(id).map(|i| &self.entries[i])
    }

    pub fn get_mut(&mut self, id: EntryId) -> Option<&mut PoolEntry> {
        self.position(id).map(move |i| &mut self.entries[i])
    }

    fn position(&self, id: EntryId) -> Option<usize> {
        // ids are strictly increasing along `entries`
        self.entries.binary_search_by_key(&id, |e| e.id).ok()
    }

    fn entry(&self, id: EntryId) -> Result<&PoolEntry> {
        self.get(id)
            .ok_or_else(|| Error::State(format!("no pool entry with id {id}")))
    }

    fn entry_mut(&mut self, id: EntryId) -> Result<&mut PoolEntry> {
        self.get_mut(id)
            .ok_or_else(|| Error::State(format!("no pool entry with id {id}")))
    }

    /// Retrieval score of `entry` for `sample`; lower is better.
    pub fn score(&self, entry: &PoolEntry, sample: GeneVector) -> Result<f64> {
        let g = entry.gene(&self.config)?;
        match self.config.score {
            RetrievalScore::Euclidean => Ok(gene_distance(sample, g)),
            RetrievalScore::Mle => mle_cost(g, sample),
        }
    }

    /// Entry with the lowest score; ties go to the oldest entry.
    pub fn nearest(&self, sample: GeneVector) -> Result<EntryId> {
        let mut best: Option<(f64, EntryId)> = None;
        for entry in &self.entries {
            let s = self.score(entry, sample)?;
            if best.is_none_or(|(b, _)| s < b) {
                best = Some((s, entry.id));
            }
        }
        best.map(|(_, id)| id)
            .ok_or_else(|| Error::State("pool is empty".into()))
    }

    pub fn should_evolve(&self, id: EntryId, sample: GeneVector) -> Result<bool> {
        should_evolve(self.entry(id)?, sample, &self.config)
    }

    /// Splits `parent` into a new entry that starts from a copy of its
    /// parameters and from `sample` as both of its genes.
    pub fn evolve(&mut self, parent: EntryId, sample: GeneVector) -> Result<Evolution> {
        let forecaster = self.entry(parent)?.forecaster.deep_clone();
        let (lr_current, warm) = if self.config.optimizer_adjustment {
            (self.config.tau_lr * self.lr_raw, self.config.t_lr)
        } else {
            (self.lr_raw, 0)
        };
        let child = self.next_id;
        self.next_id += 1;
        self.entries.push(PoolEntry {
            id: child,
            parent: Some(parent),
            forecaster,
            genes: GeneState::new(sample),
            n_pred: 0,
            n_wait: 0,
            lr_current,
            lr_warm_steps_remaining: warm,
        });

        let mut evicted = None;
        if let Some(cap) = self.config.max_pool_size {
            if self.entries.len() > cap {
                // oldest entry that is not the newcomer
                evicted = Some(self.entries.remove(0).id);
            }
        }
        Ok(Evolution {
            child,
            parent,
            evicted,
        })
    }

    /// Bumps the prediction count of `selected` and the idle count of everyone else.
    pub fn mark_selected(&mut self, selected: EntryId) -> Result<()> {
        self.entry(selected)?;
        for entry in &mut self.entries {
            if entry.id == selected {
                entry.n_pred += 1;
                entry.n_wait = 0;
            } else {
                entry.n_wait += 1;
            }
        }
        Ok(())
    }

    /// Drops every entry with `n_wait > tau_e * n_pred`, except `protected`.
    ///
    /// The pool is never emptied: if every entry qualifies and nothing is
    /// protected, the most recently selected one is kept.
    pub fn eliminate_stale(&mut self, protected: Option<EntryId>) -> Vec<EntryId> {
        if !self.config.elimination {
            return Vec::new();
        }
        let tau_e = self.config.tau_e;
        let stale =
            |e: &PoolEntry| Some(e.id) != protected && e.n_wait as f64 > tau_e * e.n_pred as f64;

        let mut keep_anyway = None;
        if self.entries.iter().all(stale) {
            keep_anyway = self
                .entries
                .iter()
                .min_by_key(|e| (e.n_wait, std::cmp::Reverse(e.id)))
                .map(|e| e.id);
        }

        let mut removed = Vec::new();
        self.entries.retain(|e| {
            let drop = stale(e) && Some(e.id) != keep_anyway;
            if drop {
                removed.push(e.id);
            }
            !drop
        });
        removed
    }

    pub fn absorb_instance(&mut self, id: EntryId, instance: GeneVector) -> Result<()> {
        let config = self.config.clone();
        self.entry_mut(id)?.absorb_instance(instance, &config)
    }

    pub fn lr_tick(&mut self, id: EntryId) -> Result<f64> {
        let (lr_raw, config) = (self.lr_raw, self.config.clone());
        self.entry_mut(id)?.lr_tick(lr_raw, &config)
    }
}

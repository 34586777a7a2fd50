//! Statistical signatures ("genes") of data windows.
//!
//! A gene is the `(mean, std)` pair of a window. Every pool entry carries a
//! [`GeneState`] made of two genes:
//!
//! * a **local** gene, an exponential moving average of the instance genes the
//!   entry has absorbed, which follows short-term movement;
//! * a **global** gene, the running mean and population standard deviation of
//!   the *means* of every absorbed instance gene.
//!
//! The gene used for retrieval and drift tests is a convex mix of the two, see
//! [`mix_gene`]. All standard deviations use the population convention
//! (divisor `n`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to every sigma used as a divisor or as a threshold scale.
pub const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneVector {
    pub mu: f64,
    pub sigma: f64,
}

impl GeneVector {
    pub const ZERO: GeneVector = GeneVector {
        mu: 0.0,
        sigma: 0.0,
    };

    pub fn new(mu: f64, sigma: f64) -> Self {
        debug_assert!(sigma >= 0.0, "negative sigma {sigma}");
        GeneVector { mu, sigma }
    }

    pub fn is_finite(&self) -> bool {
        self.mu.is_finite() && self.sigma.is_finite()
    }

    /// Sigma clamped from below by [`SIGMA_FLOOR`].
    pub fn floored_sigma(&self) -> f64 {
        self.sigma.max(SIGMA_FLOOR)
    }

    fn lerp(weight: f64, a: GeneVector, b: GeneVector) -> GeneVector {
        // weight * a + (1 - weight) * b, in the form b + weight * (a - b) so that
        // a == b is an exact fixed point; the endpoints return an input verbatim.
        if weight == 1.0 {
            return a;
        }
        if weight == 0.0 {
            return b;
        }
        GeneVector {
            mu: b.mu + weight * (a.mu - b.mu),
            sigma: (b.sigma + weight * (a.sigma - b.sigma)).max(0.0),
        }
    }
}

/// Gene of the most recent `scope` values of `window`.
///
/// When `scope` exceeds the window length the whole window is used.
pub fn compute_gene(window: &[f64], scope: usize) -> Result<GeneVector> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    if scope == 0 {
        return Err(Error::config("scope", "must be at least 1"));
    }
    let tail = &window[window.len() - scope.min(window.len())..];
    if tail.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let n = tail.len() as f64;
    let mu = tail.iter().sum::<f64>() / n;
    let var = tail.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    let gene = GeneVector::new(mu, var.sqrt());
    if !gene.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    Ok(gene)
}

/// One exponential-moving-average step of a local gene towards an instance gene.
pub fn ema_update(local: GeneVector, instance: GeneVector, tau_l: f64) -> Result<GeneVector> {
    if !(tau_l > 0.0 && tau_l <= 1.0) {
        return Err(Error::config("tau_l", format!("{tau_l} is outside (0, 1]")));
    }
    Ok(GeneVector::lerp(tau_l, instance, local))
}

/// Absorbs one more instance mean into running population moments.
///
/// `global` summarises `n` instance means; the result summarises `n + 1`.
/// Only `instance.mu` takes part: the global sigma measures the dispersion of
/// instance means, not the spread inside each window.
pub fn global_update(
    global: GeneVector,
    n: u64,
    instance: GeneVector,
) -> Result<(GeneVector, u64)> {
    if n < 1 {
        return Err(Error::State(format!(
            "global gene count must be >= 1, got {n}"
        )));
    }
    let nf = n as f64;
    let next = nf + 1.0;
    let mu = (nf * global.mu + instance.mu) / next;
    let diff = global.mu - instance.mu;
    let var = (nf / next) * global.sigma * global.sigma + (nf / (next * next)) * diff * diff;
    let gene = GeneVector::new(mu, var.max(0.0).sqrt());
    if !gene.is_finite() {
        return Err(Error::Numeric("global gene update overflowed".into()));
    }
    Ok((gene, n + 1))
}

/// Local and global gene of one forecaster plus the number of instance genes
/// folded into the global part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneState {
    pub local: GeneVector,
    pub global: GeneVector,
    pub n: u64,
}

impl GeneState {
    /// State seeded from a single instance gene: both parts equal it and `n = 1`.
    pub fn new(seed: GeneVector) -> Self {
        GeneState {
            local: seed,
            global: GeneVector::new(seed.mu, seed.sigma),
            n: 1,
        }
    }

    /// Folds an instance gene into both parts.
    pub fn absorb(&mut self, instance: GeneVector, tau_l: f64) -> Result<()> {
        let local = ema_update(self.local, instance, tau_l)?;
        let (global, n) = global_update(self.global, self.n, instance)?;
        self.local = local;
        self.global = global;
        self.n = n;
        Ok(())
    }
}

/// `tau_gene * local + (1 - tau_gene) * global`.
pub fn mix_gene(state: &GeneState, tau_gene: f64) -> Result<GeneVector> {
    if !(0.0..=1.0).contains(&tau_gene) {
        return Err(Error::config(
            "tau_gene",
            format!("{tau_gene} is outside [0, 1]"),
        ));
    }
    Ok(GeneVector::lerp(tau_gene, state.local, state.global))
}

/// Euclidean distance in `(mu, sigma)` space.
pub fn gene_distance(a: GeneVector, b: GeneVector) -> f64 {
    (a.mu - b.mu).hypot(a.sigma - b.sigma)
}

/// Gaussian negative log-likelihood cost of explaining `sample` with `candidate`
/// (constants dropped): `2 ln s + (ŝ² + (m̂ - m)²) / s²`.
pub fn mle_cost(candidate: GeneVector, sample: GeneVector) -> Result<f64> {
    let sigma = candidate.floored_sigma();
    if sigma.is_nan() || sigma <= 0.0 || sigma.is_infinite() {
        return Err(Error::Numeric(format!(
            "candidate sigma {sigma} is not positive"
        )));
    }
    let var = sigma * sigma;
    let dm = sample.mu - candidate.mu;
    Ok(2.0 * sigma.ln() + sample.sigma * sample.sigma / var + dm * dm / var)
}

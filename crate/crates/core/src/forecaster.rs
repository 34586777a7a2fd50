//! Forecaster contract and the built-in models.
//!
//! Every model maps a look-back window of `L` values to `H` forecasts and
//! learns with plain SGD on the mean squared error, one instance per step.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Behaviour shared by every forecaster a pool can hold.
pub trait Forecaster: fmt::Debug + Send + Sync {
    fn kind(&self) -> ForecasterKind;
    fn lookback(&self) -> usize;
    fn horizon(&self) -> usize;

    fn predict(&self, window: &[f64]) -> Result<Vec<f64>>;

    /// Returns the MSE of the pre-update forecast, then takes one SGD step on it.
    fn train_step(&mut self, window: &[f64], truth: &[f64], lr: f64) -> Result<f64>;

    /// An independent copy; training either side leaves the other untouched.
    fn deep_clone(&self) -> Box<dyn Forecaster>;

    /// All trainable parameters, flattened in a fixed order.
    fn parameters(&self) -> Vec<f64>;

    fn parameter_checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.kind().as_str().as_bytes());
        hasher.update((self.lookback() as u64).to_le_bytes());
        hasher.update((self.horizon() as u64).to_le_bytes());
        for p in self.parameters() {
            hasher.update(p.to_bits().to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// Models whose MSE gradient is available in closed form.
pub trait Differentiable: Forecaster {
    fn set_parameters(&mut self, params: &[f64]) -> Result<()>;

    /// MSE of the current forecast and its gradient with respect to [`Forecaster::parameters`].
    fn loss_and_gradient(&self, window: &[f64], truth: &[f64]) -> Result<(f64, Vec<f64>)>;
}

pub fn mse(forecast: &[f64], truth: &[f64]) -> f64 {
    debug_assert_eq!(forecast.len(), truth.len());
    forecast
        .iter()
        .zip(truth)
        .map(|(f, t)| (f - t) * (f - t))
        .sum::<f64>()
        / truth.len() as f64
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Shape {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}

fn check_lr(lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::config("lr", format!("{lr} must be finite and >= 0")));
    }
    Ok(())
}

fn check_forecast(forecast: Vec<f64>) -> Result<Vec<f64>> {
    if forecast.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("forecast is not finite".into()));
    }
    Ok(forecast)
}

fn sgd_step<F: Differentiable + ?Sized>(
    model: &mut F,
    window: &[f64],
    truth: &[f64],
    lr: f64,
) -> Result<f64> {
    check_lr(lr)?;
    let (loss, grad) = model.loss_and_gradient(window, truth)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("training loss is {loss}")));
    }
    if lr > 0.0 {
        let mut params = model.parameters();
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= lr * g;
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("parameters diverged".into()));
        }
        model.set_parameters(&params)?;
    }
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForecasterKind {
    Naive,
    Linear,
    Mlp,
}

impl ForecasterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ForecasterKind::Naive => "naive",
            ForecasterKind::Linear => "linear",
            ForecasterKind::Mlp => "mlp",
        }
    }

    /// SGD step size used when none is configured.
    pub fn default_lr(self) -> f64 {
        match self {
            ForecasterKind::Naive | ForecasterKind::Linear => 0.01,
            ForecasterKind::Mlp => 0.003,
        }
    }
}

impl fmt::Display for ForecasterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ForecasterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "naive" => Ok(ForecasterKind::Naive),
            "linear" => Ok(ForecasterKind::Linear),
            "mlp" => Ok(ForecasterKind::Mlp),
            other => Err(Error::config(
                "forecaster",
                format!("unknown kind `{other}`; expected naive, linear or mlp"),
            )),
        }
    }
}

/// Everything needed to build a fresh forecaster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForecasterSpec {
    pub kind: ForecasterKind,
    pub lookback: usize,
    pub horizon: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl ForecasterSpec {
    pub fn build(&self) -> Result<Box<dyn Forecaster>> {
        if self.lookback == 0 {
            return Err(Error::config("lookback", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        Ok(match self.kind {
            ForecasterKind::Naive => Box::new(NaiveForecaster::new(self.lookback, self.horizon)),
            ForecasterKind::Linear => {
                Box::new(LinearForecaster::zeros(self.lookback, self.horizon))
            }
            ForecasterKind::Mlp => {
                if self.hidden == 0 {
                    return Err(Error::config("hidden", "must be at least 1"));
                }
                Box::new(MlpForecaster::seeded(
                    self.lookback,
                    self.horizon,
                    self.hidden,
                    self.seed,
                ))
            }
        })
    }
}

/// Repeats the last observed value.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveForecaster {
    lookback: usize,
    horizon: usize,
}

impl NaiveForecaster {
    pub fn new(lookback: usize, horizon: usize) -> Self {
        NaiveForecaster { lookback, horizon }
    }
}

impl Forecaster for NaiveForecaster {
    fn kind(&self) -> ForecasterKind {
        ForecasterKind::Naive
    }
    fn lookback(&self) -> usize {
        self.lookback
    }
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict(&self, window: &[f64]) -> Result<Vec<f64>> {
        check_len("window", self.lookback, window.len())?;
        check_forecast(vec![window[window.len() - 1]; self.horizon])
    }

    fn train_step(&mut self, window: &[f64], truth: &[f64], lr: f64) -> Result<f64> {
        check_lr(lr)?;
        check_len("truth", self.horizon, truth.len())?;
        let loss = mse(&self.predict(window)?, truth);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("training loss is {loss}")));
        }
        Ok(loss)
    }

    fn deep_clone(&self) -> Box<dyn Forecaster> {
        Box::new(self.clone())
    }

    fn parameters(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// `forecast = weights · window + bias` with an `H × L` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearForecaster {
    lookback: usize,
    horizon: usize,
    /// Row-major, one row per output step.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearForecaster {
    pub fn zeros(lookback: usize, horizon: usize) -> Self {
        LinearForecaster {
            lookback,
            horizon,
            weights: vec![0.0; lookback * horizon],
            bias: vec![0.0; horizon],
        }
    }

    pub fn from_parts(
        lookback: usize,
        horizon: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        check_len("weights", lookback * horizon, weights.len())?;
        check_len("bias", horizon, bias.len())?;
        Ok(LinearForecaster {
            lookback,
            horizon,
            weights,
            bias,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn forward(&self, window: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.lookback)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(window).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }
}

impl Forecaster for LinearForecaster {
    fn kind(&self) -> ForecasterKind {
        ForecasterKind::Linear
    }
    fn lookback(&self) -> usize {
        self.lookback
    }
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict(&self, window: &[f64]) -> Result<Vec<f64>> {
        check_len("window", self.lookback, window.len())?;
        check_forecast(self.forward(window))
    }

    fn train_step(&mut self, window: &[f64], truth: &[f64], lr: f64) -> Result<f64> {
        sgd_step(self, window, truth, lr)
    }

    fn deep_clone(&self) -> Box<dyn Forecaster> {
        Box::new(self.clone())
    }

    fn parameters(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend_from_slice(&self.bias);
        p
    }
}

impl Differentiable for LinearForecaster {
    fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        let nw = self.weights.len();
        check_len("parameters", nw + self.bias.len(), params.len())?;
        self.weights.copy_from_slice(&params[..nw]);
        self.bias.copy_from_slice(&params[nw..]);
        Ok(())
    }

    fn loss_and_gradient(&self, window: &[f64], truth: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_len("window", self.lookback, window.len())?;
        check_len("truth", self.horizon, truth.len())?;
        let forecast = self.forward(window);
        let loss = mse(&forecast, truth);
        let scale = 2.0 / self.horizon as f64;
        let mut grad = vec![0.0; self.weights.len() + self.bias.len()];
        let (gw, gb) = grad.split_at_mut(self.weights.len());
        for (h, (f, t)) in forecast.iter().zip(truth).enumerate() {
            let e = scale * (f - t);
            for (g, x) in gw[h * self.lookback..(h + 1) * self.lookback]
                .iter_mut()
                .zip(window)
            {
                *g = e * x;
            }
            gb[h] = e;
        }
        Ok((loss, grad))
    }
}

/// One hidden tanh layer followed by a linear read-out.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpForecaster {
    lookback: usize,
    horizon: usize,
    hidden: usize,
    w1: Vec<f64>, // hidden × lookback
    b1: Vec<f64>,
    w2: Vec<f64>, // horizon × hidden
    b2: Vec<f64>,
}

impl MlpForecaster {
    /// Uniform initialisation in `±1/sqrt(fan_in)` from a seeded ChaCha8 stream.
    pub fn seeded(lookback: usize, horizon: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize, fan_in: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let w1 = draw(hidden * lookback, lookback);
        let b1 = draw(hidden, lookback);
        let w2 = draw(horizon * hidden, hidden);
        let b2 = draw(horizon, hidden);
        MlpForecaster {
            lookback,
            horizon,
            hidden,
            w1,
            b1,
            w2,
            b2,
        }
    }

    fn hidden_layer(&self, window: &[f64]) -> Vec<f64> {
        self.w1
            .chunks_exact(self.lookback)
            .zip(&self.b1)
            .map(|(row, b)| (row.iter().zip(window).map(|(w, x)| w * x).sum::<f64>() + b).tanh())
            .collect()
    }

    fn output_layer(&self, hidden: &[f64]) -> Vec<f64> {
        self.w2
            .chunks_exact(self.hidden)
            .zip(&self.b2)
            .map(|(row, b)| row.iter().zip(hidden).map(|(w, h)| w * h).sum::<f64>() + b)
            .collect()
    }
}

impl Forecaster for MlpForecaster {
    fn kind(&self) -> ForecasterKind {
        ForecasterKind::Mlp
    }
    fn lookback(&self) -> usize {
        self.lookback
    }
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict(&self, window: &[f64]) -> Result<Vec<f64>> {
        check_len("window", self.lookback, window.len())?;
        check_forecast(self.output_layer(&self.hidden_layer(window)))
    }

    fn train_step(&mut self, window: &[f64], truth: &[f64], lr: f64) -> Result<f64> {
        sgd_step(self, window, truth, lr)
    }

    fn deep_clone(&self) -> Box<dyn Forecaster> {
        Box::new(self.clone())
    }

    fn parameters(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }
}

impl Differentiable for MlpForecaster {
    fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        let sizes = [self.w1.len(), self.b1.len(), self.w2.len(), self.b2.len()];
        check_len("parameters", sizes.iter().sum(), params.len())?;
        let mut rest = params;
        for (dst, n) in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
            .into_iter()
            .zip(sizes)
        {
            let (head, tail) = rest.split_at(n);
            dst.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn loss_and_gradient(&self, window: &[f64], truth: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_len("window", self.lookback, window.len())?;
        check_len("truth", self.horizon, truth.len())?;
        let hidden = self.hidden_layer(window);
        let forecast = self.output_layer(&hidden);
        let loss = mse(&forecast, truth);

        let scale = 2.0 / self.horizon as f64;
        let d_out: Vec<f64> = forecast
            .iter()
            .zip(truth)
            .map(|(f, t)| scale * (f - t))
            .collect();

        let mut g_w2 = vec![0.0; self.w2.len()];
        let mut d_hidden = vec![0.0; self.hidden];
        for (h, &d) in d_out.iter().enumerate() {
            let row = &self.w2[h * self.hidden..(h + 1) * self.hidden];
            let g_row = &mut g_w2[h * self.hidden..(h + 1) * self.hidden];
            for k in 0..self.hidden {
                g_row[k] = d * hidden[k];
                d_hidden[k] += d * row[k];
            }
        }
        // tanh' = 1 - tanh²
        let d_pre: Vec<f64> = d_hidden
            .iter()
            .zip(&hidden)
            .map(|(d, a)| d * (1.0 - a * a))
            .collect();
        let mut g_w1 = vec![0.0; self.w1.len()];
        for (k, &d) in d_pre.iter().enumerate() {
            for (g, x) in g_w1[k * self.lookback..(k + 1) * self.lookback]
                .iter_mut()
                .zip(window)
            {
                *g = d * x;
            }
        }

        let grad = [g_w1, d_pre, g_w2, d_out].concat();
        Ok((loss, grad))
    }
}

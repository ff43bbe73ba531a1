//! Over-the-air computation of the weighted model average.
//!
//! Devices standardize their updates with shared statistics, pack real pairs
//! into complex symbols, scale by a zero-forcing transmit scalar
//! `b_k = sqrt(eta) * conj(m^H h_k) / |m^H h_k|^2` and transmit
//! simultaneously. The server combines with `m`, divides by `sqrt(eta)` and
//! undoes the standardization. With `eta = P * min_k |m^H h_k|^2` the
//! per-symbol error of the decoded sum has variance
//! `sigma^2 * ||m||^2 / eta`.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::channel::{effective_channel_subset, ChannelError, ChannelSet, PhaseShiftVector};
use crate::model::{sample_weights, LocalUpdate};
use crate::seed::{self, purpose};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AirCompError {
    #[error("beamformer is orthogonal to the channel of selected device at position {position}")]
    OrthogonalChannel { position: usize },
    #[error("no devices selected")]
    EmptySelection,
    #[error("power scaling {eta:e} exceeds the feasible limit {limit:e}")]
    Infeasible { eta: f64, limit: f64 },
    #[error("beamformer must be nonzero with finite entries")]
    InvalidBeamformer,
    #[error("invalid normalization statistics: {0}")]
    InvalidStats(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Transmit power budget and receiver noise power, both in watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub tx_power: f64,
    pub noise_power: f64,
}

/// Receive combining vector `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer(DVector<C64>);

impl Beamformer {
    pub fn new(m: DVector<C64>) -> Result<Self, AirCompError> {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) || m.norm_squared() == 0.0 {
            return Err(AirCompError::InvalidBeamformer);
        }
        Ok(Self(m))
    }

    pub fn vector(&self) -> &DVector<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<C64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.norm_squared()
    }

    /// `m^H h`.
    pub fn project(&self, h: &DVector<C64>) -> C64 {
        self.0.dotc(h)
    }

    /// `|m^H h_k|^2` for every channel.
    pub fn gains(&self, channels: &[DVector<C64>]) -> Vec<f64> {
        channels.iter().map(|h| self.project(h).norm_sqr()).collect()
    }

    pub fn scaled(&self, c: C64) -> Beamformer {
        Beamformer(&self.0 * c)
    }
}

/// Everything the server and devices need to run one aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationDesign {
    pub beamformer: Beamformer,
    pub phases: PhaseShiftVector,
    /// Common arrival gain `eta` (W).
    pub eta: f64,
    /// Participating device indices, in transmission order.
    pub selected: Vec<usize>,
    pub mse: f64,
}

impl AggregationDesign {
    /// Fill `eta` and `mse` for a given beamformer and phase configuration.
    pub fn new(
        beamformer: Beamformer,
        phases: PhaseShiftVector,
        selected: Vec<usize>,
        ch: &ChannelSet,
        budget: LinkBudget,
    ) -> Result<Self, AirCompError> {
        if selected.is_empty() {
            return Err(AirCompError::EmptySelection);
        }
        let eff = effective_channel_subset(ch, &phases, &selected)?;
        let min_gain = min_gain(&beamformer, &eff)?;
        let eta = budget.tx_power * min_gain;
        let mse = budget.noise_power * beamformer.norm_squared() / eta;
        Ok(Self {
            beamformer,
            phases,
            eta,
            selected,
            mse,
        })
    }
}

fn min_gain(m: &Beamformer, h: &[DVector<C64>]) -> Result<f64, AirCompError> {
    if h.is_empty() {
        return Err(AirCompError::EmptySelection);
    }
    let mut best = f64::INFINITY;
    for (position, g) in m.gains(h).into_iter().enumerate() {
        if !(g > 0.0) {
            return Err(AirCompError::OrthogonalChannel { position });
        }
        best = best.min(g);
    }
    Ok(best)
}

/// `sigma^2 ||m||^2 / (P min_k |m^H h_k|^2)` over the given (selected) channels.
pub fn aggregation_mse(
    m: &Beamformer,
    h: &[DVector<C64>],
    budget: LinkBudget,
) -> Result<f64, AirCompError> {
    let g = min_gain(m, h)?;
    Ok(budget.noise_power * m.norm_squared() / (budget.tx_power * g))
}

/// Shared standardization statistics and aggregation weights for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub mean: f64,
    pub scale: f64,
    pub weights: Vec<f64>,
}

impl NormalizationStats {
    pub fn new(mean: f64, scale: f64, weights: Vec<f64>) -> Result<Self, AirCompError> {
        let s = Self {
            mean,
            scale,
            weights,
        };
        s.validate()?;
        Ok(s)
    }

    /// Pooled weighted mean and standard deviation over all entries of the
    /// given updates, with sample-count weights. Falls back to unit scale
    /// when every entry is identical.
    pub fn from_updates(updates: &[LocalUpdate]) -> Result<Self, AirCompError> {
        if updates.is_empty() {
            return Err(AirCompError::EmptySelection);
        }
        let weights = sample_weights(updates);
        let mean: f64 = updates
            .iter()
            .zip(&weights)
            .map(|(u, w)| w * u.delta.iter().sum::<f64>() / u.delta.len().max(1) as f64)
            .sum();
        let var: f64 = updates
            .iter()
            .zip(&weights)
            .map(|(u, w)| {
                w * u.delta.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
                    / u.delta.len().max(1) as f64
            })
            .sum();
        let scale = if var > 0.0 && var.is_finite() { var.sqrt() } else { 1.0 };
        Self::new(mean, scale, weights)
    }

    pub fn validate(&self) -> Result<(), AirCompError> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(AirCompError::InvalidStats(format!("scale must be positive, got {}", self.scale)));
        }
        if !self.mean.is_finite() {
            return Err(AirCompError::InvalidStats("mean must be finite".into()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(AirCompError::InvalidStats("weights must be nonnegative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(AirCompError::InvalidStats(format!("weights sum to {total}, expected 1")));
        }
        Ok(())
    }
}

/// Standardize and pack two reals per complex symbol (odd length pads a
/// zero imaginary part).
pub fn preprocess(update: &[f64], stats: &NormalizationStats) -> Vec<C64> {
    let s = |x: f64| (x - stats.mean) / stats.scale;
    update
        .chunks(2)
        .map(|pair| C64::new(s(pair[0]), pair.get(1).map_or(0.0, |&x| s(x))))
        .collect()
}

/// Unpack `dim` reals from the decoded weighted-average symbols and undo the
/// standardization.
pub fn postprocess(
    symbols: &[C64],
    dim: usize,
    stats: &NormalizationStats,
) -> Result<Vec<f64>, AirCompError> {
    if symbols.len() != dim.div_ceil(2) {
        return Err(AirCompError::LengthMismatch(format!(
            "{} symbols cannot carry {dim} entries",
            symbols.len()
        )));
    }
    Ok(symbols
        .iter()
        .flat_map(|z| [z.re, z.im])
        .take(dim)
        .map(|x| stats.scale * x + stats.mean)
        .collect())
}

/// Simulate simultaneous analog transmission of per-device symbol streams
/// and return the receiver's estimate `m^H y_t / sqrt(eta)` of their sum for
/// every slot. `channels` are the effective channels of `design.selected`.
///
/// Noise for slot `t` comes from a stream keyed by `(seed, t)`.
pub fn over_the_air_sum(
    symbols: &[Vec<C64>],
    design: &AggregationDesign,
    channels: &[DVector<C64>],
    budget: LinkBudget,
    seed: u64,
) -> Result<Vec<C64>, AirCompError> {
    if symbols.len() != channels.len() || channels.len() != design.selected.len() {
        return Err(AirCompError::LengthMismatch(format!(
            "{} symbol streams, {} channels, {} selected devices",
            symbols.len(),
            channels.len(),
            design.selected.len()
        )));
    }
    let slots = symbols.first().map_or(0, |s| s.len());
    if symbols.iter().any(|s| s.len() != slots) {
        return Err(AirCompError::LengthMismatch("symbol streams differ in length".into()));
    }
    let m = &design.beamformer;
    let limit = budget.tx_power * min_gain(m, channels)?;
    if !(design.eta > 0.0) || design.eta > limit * (1.0 + 1e-9) {
        return Err(AirCompError::Infeasible {
            eta: design.eta,
            limit,
        });
    }
    let sqrt_eta = design.eta.sqrt();
    let tx_scalars: Vec<C64> = channels
        .iter()
        .map(|h| {
            let g = m.project(h);
            g.conj() * (sqrt_eta / g.norm_sqr())
        })
        .collect();
    let n = m.len();
    let noise_std = (budget.noise_power / 2.0).sqrt();

    let mut out = Vec::with_capacity(slots);
    let mut y = DVector::<C64>::zeros(n);
    for t in 0..slots {
        y.fill(C64::new(0.0, 0.0));
        for ((h, b), s) in channels.iter().zip(&tx_scalars).zip(symbols) {
            y.axpy(b * s[t], h, C64::new(1.0, 0.0));
        }
        if budget.noise_power > 0.0 {
            let mut rng = seed::rng_for(seed, &[purpose::NOISE_SLOT, t as u64]);
            for yi in y.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *yi += C64::new(noise_std * re, noise_std * im);
            }
        }
        out.push(m.project(&y) / sqrt_eta);
    }
    Ok(out)
}

/// One aggregation round over the air: returns the noisy estimate of the
/// weighted average of `updates`, which must follow `design.selected` order.
///
/// Each transmitter scales its standardized symbols by `K * w_k` (K the
/// number of selected devices), so the server decodes `K` times the weighted
/// average and divides by `K` before post-processing.
pub fn simulate_round_transmission(
    updates: &[LocalUpdate],
    design: &AggregationDesign,
    ch: &ChannelSet,
    stats: &NormalizationStats,
    budget: LinkBudget,
    seed: u64,
) -> Result<Vec<f64>, AirCompError> {
    stats.validate()?;
    if updates.len() != design.selected.len() || stats.weights.len() != updates.len() {
        return Err(AirCompError::LengthMismatch(format!(
            "{} updates, {} weights, {} selected devices",
            updates.len(),
            stats.weights.len(),
            design.selected.len()
        )));
    }
    let dim = updates[0].delta.len();
    if updates.iter().any(|u| u.delta.len() != dim) {
        return Err(AirCompError::LengthMismatch("updates differ in length".into()));
    }
    let k = updates.len() as f64;
    let symbols: Vec<Vec<C64>> = updates
        .iter()
        .zip(&stats.weights)
        .map(|(u, &w)| {
            preprocess(&u.delta, stats)
                .into_iter()
                .map(|s| s * (k * w))
                .collect()
        })
        .collect();
    let channels = effective_channel_subset(ch, &design.phases, &design.selected)?;
    let decoded = over_the_air_sum(&symbols, design, &channels, budget, seed)?;
    let averaged: Vec<C64> = decoded.into_iter().map(|z| z / k).collect();
    postprocess(&averaged, dim, stats)
}

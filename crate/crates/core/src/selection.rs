//! Greedy device selection under an aggregation-MSE target.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::aircomp::{AggregationDesign, LinkBudget};
use crate::channel::{effective_channel_subset, ChannelSet, PhaseShiftVector};
use crate::solvers::{dc_beamformer, SolverError, SolverOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("MSE target must be positive, got {0}")]
    InvalidTarget(f64),
    #[error("no device subset meets the MSE target {target:e} (best single device reaches {best_single:e})")]
    EmptySelection { target: f64, best_single: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub selected: Vec<usize>,
    pub design: AggregationDesign,
    /// `|m^H h_k|^2` for every selected device under the returned beamformer.
    pub per_device_bottleneck: BTreeMap<usize, f64>,
    /// Candidate sets in the order they were solved; each drops one device.
    pub visited: Vec<Vec<usize>>,
}

/// Start from all devices and repeatedly drop the one with the weakest
/// projected gain until the DC-designed MSE is at most `target`.
pub fn select_devices(
    ch: &ChannelSet,
    theta: &PhaseShiftVector,
    target: f64,
    budget: LinkBudget,
    opts: &SolverOptions,
) -> Result<SelectionResult, SelectionError> {
    if !(target > 0.0) {
        return Err(SelectionError::InvalidTarget(target));
    }
    let mut set: Vec<usize> = (0..ch.num_devices()).collect();
    if set.is_empty() {
        return Err(SelectionError::EmptySelection {
            target,
            best_single: f64::INFINITY,
        });
    }
    let mut visited = Vec::new();
    loop {
        visited.push(set.clone());
        let eff = effective_channel_subset(ch, theta, &set).map_err(SolverError::from)?;
        let m = dc_beamformer(&eff, opts)?.beamformer;
        let gains = m.gains(&eff);
        let design = AggregationDesign::new(m, theta.clone(), set.clone(), ch, budget).map_err(SolverError::from)?;
        if design.mse <= target {
            return Ok(SelectionResult {
                per_device_bottleneck: set.iter().copied().zip(gains).collect(),
                selected: set,
                design,
                visited,
            });
        }
        if set.len() == 1 {
            return Err(SelectionError::EmptySelection {
                target,
                best_single: design.mse,
            });
        }
        let weakest = gains
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        set.remove(weakest);
    }
}

//! Federated training of a linear SVM with ideal or over-the-air aggregation.

pub mod dataset;
pub mod svm;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aircomp::{simulate_round_transmission, AirCompError, LinkBudget, NormalizationStats};
use crate::channel::{sample_channels, ChannelError, PhaseShiftVector, SystemConfig};
use crate::model::{sample_weights, weighted_average, LocalUpdate, ModelVector};
use crate::seed::{derive_seed, purpose};
use crate::selection::{select_devices, SelectionError};
use crate::solvers::{alternating_optimize, BeamformingMethod, SolverError, SolverOptions};

pub use dataset::{partition, synthetic_blobs, Dataset, FederatedData, LabelKind, SyntheticSpec};
pub use svm::{evaluate, hinge_loss_and_subgradient, local_update, predict, LocalSchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainerError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("device holds no training samples")]
    EmptyLocalData,
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("aggregated model has non-finite entries")]
    NonFiniteModel,
    #[error("aggregation design failed: {source}")]
    Design {
        source: SolverError,
        /// MSE values recorded by the alternating loop before the failure.
        trace: Vec<f64>,
    },
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    AirComp(#[from] AirCompError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Aggregation setting compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Exact weighted average, no channel.
    Perfect,
    /// Alternating DC beamformer and DC phase design.
    DcRis,
    /// Alternating with the SDR beamformer step.
    SdrRis,
    /// DC beamformer with the RIS removed.
    DcNoris,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Perfect, Scenario::DcRis, Scenario::SdrRis, Scenario::DcNoris];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Perfect => "perfect",
            Scenario::DcRis => "dc_ris",
            Scenario::SdrRis => "sdr_ris",
            Scenario::DcNoris => "dc_noris",
        }
    }

    /// Tag mixed into scenario-specific random streams.
    pub fn stream_id(&self) -> u64 {
        match self {
            Scenario::Perfect => 0,
            Scenario::DcRis => 1,
            Scenario::SdrRis => 2,
            Scenario::DcNoris => 3,
        }
    }

    pub fn uses_ris(&self) -> bool {
        matches!(self, Scenario::DcRis | Scenario::SdrRis)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| format!("unknown scenario `{s}` (expected perfect, dc_ris, sdr_ris or dc_noris)"))
    }
}

/// Learning hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningParams {
    pub rounds: usize,
    /// Base step size; round `r` (1-based) uses `lr / sqrt(r)`.
    pub lr: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for LearningParams {
    fn default() -> Self {
        Self {
            rounds: 100,
            lr: 0.05,
            lambda: 1e-3,
            epochs: 1,
            batch_size: 32,
        }
    }
}

/// Everything one training run needs besides data and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedSetup {
    /// Network instance; device positions are taken as given.
    pub system: SystemConfig,
    pub solver: SolverOptions,
    pub learning: LearningParams,
    /// MSE target for device selection; `None` keeps every device.
    pub selection_target: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
    /// Design MSE of the round (0 for perfect aggregation).
    pub agg_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub scenario: Scenario,
    pub seed: u64,
    pub records: Vec<RoundRecord>,
    pub model: ModelVector,
}

/// A run that stopped early; `trace` holds the completed rounds.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{} seed {} failed in round {round}: {source}", .trace.scenario, .trace.seed)]
pub struct TrainingFailure {
    pub trace: TrainingTrace,
    pub round: usize,
    #[source]
    pub source: TrainerError,
}

fn budget(system: &SystemConfig) -> LinkBudget {
    LinkBudget {
        tx_power: system.tx_power,
        noise_power: system.noise_power,
    }
}

/// Objective over the union of all device data.
pub fn training_loss(w: &ModelVector, data: &FederatedData, lambda: f64) -> Result<f64, TrainerError> {
    Ok(hinge_loss_and_subgradient(w, &data.train, &data.union(), lambda)?.0)
}

/// One aggregation step: the updated model and the round's design MSE.
fn run_round(
    setup: &FederatedSetup,
    data: &FederatedData,
    scenario: Scenario,
    seed: u64,
    round: usize,
    w: &ModelVector,
) -> Result<(Vec<f64>, f64), TrainerError> {
    let r = round as u64;
    let system = &setup.system;
    let budget = budget(system);
    let schedule = LocalSchedule {
        lr: setup.learning.lr / (round as f64).sqrt(),
        epochs: setup.learning.epochs,
        batch_size: setup.learning.batch_size,
        lambda: setup.learning.lambda,
    };

    let channels = if scenario == Scenario::Perfect {
        None
    } else {
        let ch = sample_channels(system, derive_seed(seed, &[purpose::ROUND_CHANNELS, r]))?;
        Some(if scenario.uses_ris() { ch } else { ch.without_ris() })
    };

    let selected: Vec<usize> = match (setup.selection_target, &channels) {
        (Some(target), Some(ch)) => {
            let theta = PhaseShiftVector::zeros(ch.num_ris_elements());
            select_devices(ch, &theta, target, budget, &setup.solver)?.selected
        }
        _ => (0..data.partition.len()).collect(),
    };

    let updates: Vec<LocalUpdate> = selected
        .par_iter()
        .map(|&k| {
            let s = derive_seed(seed, &[purpose::LOCAL_SGD, r, k as u64]);
            local_update(w, &data.train, &data.partition[k], &schedule, s)
        })
        .collect::<Result<_, _>>()?;

    let Some(ch) = channels else {
        return Ok((weighted_average(&updates, &sample_weights(&updates)), 0.0));
    };
    let method = match scenario {
        Scenario::SdrRis => BeamformingMethod::Sdr,
        _ => BeamformingMethod::Dc,
    };
    let sid = scenario.stream_id();
    let outcome = alternating_optimize(
        &ch,
        &selected,
        budget,
        &setup.solver,
        method,
        derive_seed(seed, &[purpose::RANDOMIZATION, sid, r]),
    )
    .map_err(|e| TrainerError::Design {
        source: e.source,
        trace: e.trace,
    })?;
    let stats = NormalizationStats::from_updates(&updates)?;
    let delta = simulate_round_transmission(
        &updates,
        &outcome.design,
        &ch,
        &stats,
        budget,
        derive_seed(seed, &[purpose::AIRCOMP_NOISE, sid, r]),
    )?;
    Ok((delta, outcome.design.mse))
}

/// Train from the zero model for `setup.learning.rounds` rounds.
pub fn train_federated(
    setup: &FederatedSetup,
    data: &FederatedData,
    scenario: Scenario,
    seed: u64,
) -> Result<TrainingTrace, TrainingFailure> {
    let heads = data.train.kind().heads();
    let mut trace = TrainingTrace {
        scenario,
        seed,
        records: Vec::with_capacity(setup.learning.rounds),
        model: ModelVector::zeros(heads, data.train.dim()),
    };
    if data.partition.len() != setup.system.num_devices {
        return Err(TrainingFailure {
            trace,
            round: 0,
            source: TrainerError::InvalidDataset(format!(
                "data is split over {} devices, system has {}",
                data.partition.len(),
                setup.system.num_devices
            )),
        });
    }
    for round in 1..=setup.learning.rounds {
        let step = run_round(setup, data, scenario, seed, round, &trace.model).and_then(|(delta, mse)| {
            let mut next = trace.model.clone();
            next.add_assign(&delta);
            if !next.is_finite() {
                return Err(TrainerError::NonFiniteModel);
            }
            let loss = training_loss(&next, data, setup.learning.lambda)?;
            let acc = evaluate(&next, &data.test)?;
            Ok((next, loss, acc, mse))
        });
        match step {
            Ok((next, train_loss, test_accuracy, agg_mse)) => {
                trace.model = next;
                trace.records.push(RoundRecord {
                    round,
                    train_loss,
                    test_accuracy,
                    agg_mse,
                });
            }
            Err(source) => return Err(TrainingFailure { trace, round, source }),
        }
    }
    Ok(trace)
}

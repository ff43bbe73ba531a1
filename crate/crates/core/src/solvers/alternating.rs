//! Alternating beamformer / phase-shift refinement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::beamforming::{dc_beamformer, dc_beamformer_from, sdr_beamformer, BeamformerSolution};
use super::phase::dc_phase_shifts;
use super::{SolverError, SolverOptions};
use crate::aircomp::{aggregation_mse, AggregationDesign, Beamformer, LinkBudget};
use crate::channel::{effective_channel_subset, ChannelSet, PhaseShiftVector};
use crate::seed::derive_seed;

/// Solver used for the beamformer half-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamformingMethod {
    Dc,
    Sdr,
}

#[derive(Debug, Clone)]
pub struct AlternatingOutcome {
    pub design: AggregationDesign,
    /// MSE after the initial beamformer (theta = 0), then after every half-step.
    pub mse_trace: Vec<f64>,
    pub beamformer_calls: usize,
    pub phase_calls: usize,
}

#[derive(Debug, Error, Clone)]
#[error("alternating optimization failed after {} recorded half-steps: {source}", .trace.len())]
pub struct AlternatingError {
    #[source]
    pub source: SolverError,
    pub trace: Vec<f64>,
}

struct Loop<'a> {
    ch: &'a ChannelSet,
    selected: &'a [usize],
    budget: LinkBudget,
    opts: &'a SolverOptions,
    method: BeamformingMethod,
    seed: u64,
    trace: Vec<f64>,
    beamformer_calls: usize,
    phase_calls: usize,
}

impl Loop<'_> {
    fn mse(&self, m: &Beamformer, theta: &PhaseShiftVector) -> Result<f64, SolverError> {
        let eff = effective_channel_subset(self.ch, theta, self.selected)?;
        Ok(aggregation_mse(m, &eff, self.budget)?)
    }

    fn beamformer(
        &mut self,
        theta: &PhaseShiftVector,
        current: Option<&Beamformer>,
    ) -> Result<BeamformerSolution, SolverError> {
        let eff = effective_channel_subset(self.ch, theta, self.selected)?;
        let call = self.beamformer_calls as u64;
        self.beamformer_calls += 1;
        match self.method {
            BeamformingMethod::Dc => match current {
                Some(m) => dc_beamformer_from(&eff, self.opts, Some(m)),
                None => dc_beamformer(&eff, self.opts),
            },
            BeamformingMethod::Sdr => sdr_beamformer(&eff, self.opts, derive_seed(self.seed, &[call])),
        }
    }
}

/// Joint design of the receive beamformer and RIS phases for `selected`.
///
/// Starts from `theta = 0`, then alternates a phase half-step (beamformer
/// fixed) and a beamformer half-step (phases fixed). A half-step whose result
/// would raise the MSE keeps the previous value, so `mse_trace` never
/// increases. Stops when the relative MSE decrease of a full iteration falls
/// below `alt_tol`, or after `alt_max_iters` iterations.
pub fn alternating_optimize(
    ch: &ChannelSet,
    selected: &[usize],
    budget: LinkBudget,
    opts: &SolverOptions,
    method: BeamformingMethod,
    seed: u64,
) -> Result<AlternatingOutcome, AlternatingError> {
    let mut lp = Loop {
        ch,
        selected,
        budget,
        opts,
        method,
        seed,
        trace: Vec::new(),
        beamformer_calls: 0,
        phase_calls: 0,
    };
    match run(&mut lp) {
        Ok((m, theta)) => {
            let design = AggregationDesign::new(m, theta, selected.to_vec(), ch, budget)
                .map_err(|e| AlternatingError {
                    source: e.into(),
                    trace: lp.trace.clone(),
                })?;
            Ok(AlternatingOutcome {
                design,
                mse_trace: lp.trace,
                beamformer_calls: lp.beamformer_calls,
                phase_calls: lp.phase_calls,
            })
        }
        Err(source) => Err(AlternatingError {
            source,
            trace: lp.trace,
        }),
    }
}

fn run(lp: &mut Loop<'_>) -> Result<(Beamformer, PhaseShiftVector), SolverError> {
    lp.opts.validate()?;
    if lp.selected.is_empty() {
        return Err(SolverError::InvalidChannels("no devices selected".into()));
    }
    let mut theta = PhaseShiftVector::zeros(lp.ch.num_ris_elements());
    let mut m = lp.beamformer(&theta, None)?.beamformer;
    let mut mse = lp.mse(&m, &theta)?;
    lp.trace.push(mse);
    if lp.ch.num_ris_elements() == 0 {
        return Ok((m, theta));
    }

    for _ in 0..lp.opts.alt_max_iters {
        let start = mse;

        lp.phase_calls += 1;
        let phase = dc_phase_shifts(lp.ch, lp.selected, &m, &theta, lp.opts)?;
        let candidate = lp.mse(&m, &phase.phases)?;
        if candidate <= mse {
            theta = phase.phases;
            mse = candidate;
        }
        lp.trace.push(mse);

        let next = lp.beamformer(&theta, Some(&m))?.beamformer;
        let candidate = lp.mse(&next, &theta)?;
        if candidate <= mse {
            m = next;
            mse = candidate;
        }
        lp.trace.push(mse);

        if start - mse <= lp.opts.alt_tol * start {
            break;
        }
    }
    Ok((m, theta))
}

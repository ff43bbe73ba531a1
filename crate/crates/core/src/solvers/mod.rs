//! Receive-beamforming and RIS phase-shift design.
//!
//! Both halves of the joint design are nonconvex quadratically constrained
//! problems. Each is lifted to a Hermitian matrix variable, the rank-one
//! constraint is replaced by the exact penalty `tr(X) - ||X||_2`, and the
//! concave part is linearized at the current principal eigenvector (DC
//! programming). The convex subproblems go to [`sdp`].

pub mod alternating;
pub mod beamforming;
pub mod phase;
pub mod sdp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aircomp::AirCompError;
use crate::channel::ChannelError;

pub use alternating::{alternating_optimize, AlternatingError, AlternatingOutcome, BeamformingMethod};
pub use beamforming::{dc_beamformer, dc_beamformer_from, sdr_beamformer, BeamformerSolution};
pub use phase::{dc_phase_shifts, phase_objective, PhaseSolution};
pub use sdp::{psd_project, LiftedMatrix, SdpBackend};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("matrix is not Hermitian (defect {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("constraint rows are linearly dependent")]
    DependentConstraints,
    #[error(
        "SDP did not converge in {iterations} iterations \
         (primal residual {primal_residual:e}, dual residual {dual_residual:e})"
    )]
    NotConverged {
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
    },
    #[error("DC iterations stalled without a rank-one certificate (rank residual {rank_residual:e} after {iterations} iterations)")]
    DcStagnation { rank_residual: f64, iterations: usize },
    #[error("invalid channels: {0}")]
    InvalidChannels(String),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    AirComp(#[from] AirCompError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Iteration limits and tolerances shared by all design solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Initial weight of the rank-one penalty; doubled every 10 DC iterations.
    pub dc_penalty: f64,
    pub dc_max_iters: usize,
    pub sdp_max_iters: usize,
    pub alt_max_iters: usize,
    pub sdp_tol: f64,
    pub dc_rank_tol: f64,
    /// Relative MSE improvement below which the alternating loop stops.
    pub alt_tol: f64,
    pub randomization_count: usize,
    #[serde(default)]
    pub sdp_backend: SdpBackend,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            dc_penalty: 1.0,
            dc_max_iters: 100,
            sdp_max_iters: 100,
            alt_max_iters: 10,
            sdp_tol: 1e-5,
            dc_rank_tol: 1e-6,
            alt_tol: 1e-3,
            randomization_count: 100,
            sdp_backend: SdpBackend::InteriorPoint,
        }
    }
}

/// DC iterations between penalty doublings.
pub const PENALTY_DOUBLING_PERIOD: usize = 10;

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |s: &str| Err(SolverError::InvalidOptions(s.to_string()));
        if !(self.dc_penalty.is_finite() && self.dc_penalty > 0.0) {
            return bad("dc_penalty must be positive");
        }
        for (name, v) in [
            ("sdp_tol", self.sdp_tol),
            ("dc_rank_tol", self.dc_rank_tol),
            ("alt_tol", self.alt_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SolverError::InvalidOptions(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("dc_max_iters", self.dc_max_iters),
            ("sdp_max_iters", self.sdp_max_iters),
            ("alt_max_iters", self.alt_max_iters),
            ("randomization_count", self.randomization_count),
        ] {
            if v == 0 {
                return Err(SolverError::InvalidOptions(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    pub(crate) fn sdp_settings(&self) -> sdp::SdpSettings {
        sdp::SdpSettings {
            max_iters: self.sdp_max_iters,
            tol: self.sdp_tol,
        }
    }

    /// Penalty weight used at 0-based DC iteration `it`.
    pub fn penalty_at(&self, it: usize) -> f64 {
        self.dc_penalty * 2f64.powi((it / PENALTY_DOUBLING_PERIOD) as i32)
    }
}

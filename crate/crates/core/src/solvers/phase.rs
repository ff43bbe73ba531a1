//! RIS phase design for a fixed receive beamformer.
//!
//! With `c_k = m^H h_d[k]` and `a_k[i] = (m^H G[:, i]) h_r[k][i]` the gain of
//! device `k` is `|c_k + sum_i a_k[i] v_i|^2` for unit-modulus `v`. Appending
//! a unit-modulus auxiliary entry `t` makes the gain a Hermitian form
//! `w^H R_k w` of `w = [v; t]`, lifted to `W = w w^H` with unit diagonal:
//!
//! ```text
//! maximize s   subject to   tr(R_k W) >= s,  diag(W) = 1,  W >= 0,  rank(W) = 1
//! ```
//!
//! The rank constraint is handled with the same DC penalty as the beamformer.

use nalgebra::{DMatrix, DVector};

use super::sdp::{ConstraintMatrix, LiftedMatrix, Sense, SdpProblem, SdpSolver};
use super::{SolverError, SolverOptions};
use crate::aircomp::Beamformer;
use crate::channel::{effective_channel_subset, ChannelSet, PhaseShiftVector};
use crate::C64;

#[derive(Debug, Clone)]
pub struct PhaseSolution {
    pub phases: PhaseShiftVector,
    /// `min_k |m^H h_k(theta)|^2` over the selected devices.
    pub min_gain: f64,
    pub rank_residual: f64,
    pub dc_iterations: usize,
    pub sdp_iterations: usize,
    /// False when the starting phases were kept because the DC result was
    /// not better.
    pub improved: bool,
}

/// `min_k |m^H h_k(theta)|^2` over `selected`.
pub fn phase_objective(
    ch: &ChannelSet,
    selected: &[usize],
    m: &Beamformer,
    theta: &PhaseShiftVector,
) -> Result<f64, SolverError> {
    let eff = effective_channel_subset(ch, theta, selected)?;
    Ok(m.gains(&eff).into_iter().fold(f64::INFINITY, f64::min))
}

/// Homogenized gain vectors `q_k` with `gain_k = |q_k^H [v; 1]|^2`.
fn gain_vectors(ch: &ChannelSet, selected: &[usize], m: &Beamformer) -> Vec<DVector<C64>> {
    let n_ris = ch.num_ris_elements();
    let mg = m.vector().adjoint() * &ch.ris_to_server; // 1 x M row m^H G
    selected
        .iter()
        .map(|&k| {
            let c = m.project(&ch.direct[k]);
            DVector::from_fn(n_ris + 1, |i, _| {
                if i < n_ris {
                    (mg[(0, i)] * ch.device_to_ris[k][i]).conj()
                } else {
                    c.conj()
                }
            })
        })
        .collect()
}

fn extract_phases(w: &LiftedMatrix) -> PhaseShiftVector {
    let (_, u) = w.principal();
    let last = u.len() - 1;
    let reference = u[last];
    PhaseShiftVector::new((0..last).map(|i| (u[i] * reference.conj()).arg()).collect())
}

/// DC phase design for beamformer `m`, starting the comparison from
/// `current`. Never returns phases with a lower objective than `current`.
pub fn dc_phase_shifts(
    ch: &ChannelSet,
    selected: &[usize],
    m: &Beamformer,
    current: &PhaseShiftVector,
    opts: &SolverOptions,
) -> Result<PhaseSolution, SolverError> {
    opts.validate()?;
    ch.check_dimensions()?;
    if selected.is_empty() {
        return Err(SolverError::InvalidChannels("no devices selected".into()));
    }
    if m.len() != ch.num_antennas() {
        return Err(SolverError::Dimension(format!(
            "beamformer has length {}, expected {}",
            m.len(),
            ch.num_antennas()
        )));
    }
    let n_ris = ch.num_ris_elements();
    let baseline = phase_objective(ch, selected, m, current)?;
    if n_ris == 0 {
        return Ok(PhaseSolution {
            phases: current.clone(),
            min_gain: baseline,
            rank_residual: 0.0,
            dc_iterations: 0,
            sdp_iterations: 0,
            improved: false,
        });
    }

    let q = gain_vectors(ch, selected, m);
    let scale = q.iter().map(|v| v.norm_squared()).fold(0.0f64, f64::max);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(SolverError::InvalidChannels("all projected gains vanish".into()));
    }
    let inv = C64::new(1.0 / scale.sqrt(), 0.0);

    let dim = n_ris + 1;
    let mut problem = SdpProblem::new(dim);
    let level = problem.add_scalar();
    for qk in &q {
        let qn = qk * inv;
        problem.add_constraint(ConstraintMatrix::rank_one(qn), &[(level, -1.0)], Sense::Ge, 0.0)?;
    }
    for i in 0..dim {
        problem.add_constraint(ConstraintMatrix::diagonal_entry(dim, i), &[], Sense::Eq, 1.0)?;
    }
    let solver = SdpSolver::new(&problem, opts.sdp_backend)?;
    let settings = opts.sdp_settings();
    let mut scalar_cost = vec![0.0; problem.num_scalars()];
    scalar_cost[level] = -1.0;
    let identity = DMatrix::<C64>::identity(dim, dim);

    let relaxed = solver.solve(&DMatrix::zeros(dim, dim), &scalar_cost, None, settings)?;
    let mut sdp_iterations = relaxed.iterations;
    let mut state = relaxed.state;
    let mut current_w = relaxed.matrix;
    let mut rank_residual = current_w.rank_residual();
    let mut dc_iterations = 0;

    if rank_residual > opts.dc_rank_tol {
        let mut certified = false;
        for it in 0..opts.dc_max_iters {
            let rho = opts.penalty_at(it);
            let (_, u) = current_w.principal();
            let cost = (&identity - &u * u.adjoint()) * C64::new(rho, 0.0);
            let sol = solver.solve(&cost, &scalar_cost, state.as_ref(), settings)?;
            sdp_iterations += sol.iterations;
            dc_iterations = it + 1;
            state = sol.state;
            current_w = sol.matrix;
            rank_residual = current_w.rank_residual();
            if rank_residual <= opts.dc_rank_tol {
                certified = true;
                break;
            }
        }
        if !certified {
            return Err(SolverError::DcStagnation {
                rank_residual,
                iterations: dc_iterations,
            });
        }
    }

    let candidate = extract_phases(&current_w);
    let value = phase_objective(ch, selected, m, &candidate)?;
    let improved = value >= baseline;
    Ok(PhaseSolution {
        phases: if improved { candidate } else { current.clone() },
        min_gain: if improved { value } else { baseline },
        rank_residual,
        dc_iterations,
        sdp_iterations,
        improved,
    })
}

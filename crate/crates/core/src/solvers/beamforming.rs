//! Max-min receive beamforming.
//!
//! ```text
//! minimize ||m||^2   subject to   |m^H h_k|^2 >= 1  for every k
//! ```
//!
//! is lifted to `M = m m^H`: minimize `tr(M)` with `tr(h_k h_k^H M) >= 1`,
//! `M >= 0` and `rank(M) = 1`. The DC route keeps the rank constraint through
//! the penalty `rho (tr(M) - ||M||_2)`; the SDR route drops it and recovers a
//! vector by Gaussian randomization.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::sdp::{ConstraintMatrix, LiftedMatrix, Sense, SdpProblem, SdpSolver};
use super::{SolverError, SolverOptions};
use crate::aircomp::Beamformer;
use crate::seed::{self, purpose};
use crate::C64;

#[derive(Debug, Clone)]
pub struct BeamformerSolution {
    /// Scaled so that `min_k |m^H h_k|^2 = 1` exactly.
    pub beamformer: Beamformer,
    /// `min_k |m^H h_k|^2 / ||m||^2`, the max-min objective.
    pub min_gain: f64,
    /// Rank residual of the final lifted matrix (zero for randomized SDR picks).
    pub rank_residual: f64,
    pub dc_iterations: usize,
    pub sdp_iterations: usize,
    /// `tr(M)` of the rank-relaxed optimum in the caller's channel units, a
    /// lower bound on `||m||^2` when it is available.
    pub relaxation_bound: Option<f64>,
}

struct Normalized {
    channels: Vec<DVector<C64>>,
    scale: f64,
}

fn normalize(h: &[DVector<C64>]) -> Result<Normalized, SolverError> {
    let first = h
        .first()
        .ok_or_else(|| SolverError::InvalidChannels("no channels given".into()))?;
    let n = first.len();
    if n == 0 {
        return Err(SolverError::InvalidChannels("zero-length channel".into()));
    }
    let mut scale = 0.0f64;
    for (k, hk) in h.iter().enumerate() {
        if hk.len() != n {
            return Err(SolverError::InvalidChannels(format!(
                "channel {k} has length {}, expected {n}",
                hk.len()
            )));
        }
        let norm = hk.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(SolverError::InvalidChannels(format!("channel {k} is zero or not finite")));
        }
        scale = scale.max(norm);
    }
    Ok(Normalized {
        channels: h.iter().map(|hk| hk / C64::new(scale, 0.0)).collect(),
        scale,
    })
}

fn outer(v: &DVector<C64>) -> DMatrix<C64> {
    v * v.adjoint()
}

fn lifted_problem(h: &[DVector<C64>], opts: &SolverOptions) -> Result<SdpSolver, SolverError> {
    let n = h[0].len();
    let mut p = SdpProblem::new(n);
    for hk in h {
        p.add_constraint(ConstraintMatrix::rank_one(hk.clone()), &[], Sense::Ge, 1.0)?;
    }
    SdpSolver::new(&p, opts.sdp_backend)
}

/// Rescale `m` so the weakest projected gain is exactly one.
fn to_feasible(m: DVector<C64>, h: &[DVector<C64>]) -> Result<DVector<C64>, SolverError> {
    let g = h
        .iter()
        .map(|hk| m.dotc(hk).norm_sqr())
        .fold(f64::INFINITY, f64::min);
    if !(g > 0.0 && g.is_finite()) {
        return Err(SolverError::InvalidChannels(
            "recovered beamformer is orthogonal to a channel".into(),
        ));
    }
    Ok(m / C64::new(g.sqrt(), 0.0))
}

fn finish(
    m_normalized: DVector<C64>,
    norm: &Normalized,
    original: &[DVector<C64>],
    rank_residual: f64,
    dc_iterations: usize,
    sdp_iterations: usize,
    relaxation_bound: Option<f64>,
) -> Result<BeamformerSolution, SolverError> {
    let m = to_feasible(m_normalized / C64::new(norm.scale, 0.0), original)?;
    let beamformer = Beamformer::new(m)?;
    let min_gain = 1.0 / beamformer.norm_squared();
    Ok(BeamformerSolution {
        beamformer,
        min_gain,
        rank_residual,
        dc_iterations,
        sdp_iterations,
        relaxation_bound: relaxation_bound.map(|b| b / (norm.scale * norm.scale)),
    })
}

fn leading_vector(x: &LiftedMatrix) -> DVector<C64> {
    let (l1, u1) = x.principal();
    u1 * C64::new(l1.max(0.0).sqrt(), 0.0)
}

/// DC beamformer started from the rank-relaxed optimum.
pub fn dc_beamformer(
    h: &[DVector<C64>],
    opts: &SolverOptions,
) -> Result<BeamformerSolution, SolverError> {
    dc_beamformer_from(h, opts, None)
}

/// DC beamformer; with `init` the iterations start from `init init^H`
/// (rescaled to feasibility) instead of the relaxation.
pub fn dc_beamformer_from(
    h: &[DVector<C64>],
    opts: &SolverOptions,
    init: Option<&Beamformer>,
) -> Result<BeamformerSolution, SolverError> {
    opts.validate()?;
    let norm = normalize(h)?;
    let hn = &norm.channels;
    let n = hn[0].len();
    let solver = lifted_problem(hn, opts)?;
    let settings = opts.sdp_settings();
    let identity = DMatrix::<C64>::identity(n, n);
    let zeros = vec![0.0; hn.len()];

    let mut sdp_iterations = 0;
    let (mut current, mut state, relaxation_bound) = match init {
        Some(m0) if m0.len() == n => {
            let m0 = to_feasible(m0.vector().clone(), hn)?;
            let x0 = outer(&m0);
            let state = solver.warm_point(&x0, &[]);
            (LiftedMatrix::from_trusted(x0), state, None)
        }
        Some(m0) => {
            return Err(SolverError::Dimension(format!(
                "initial beamformer has length {}, expected {n}",
                m0.len()
            )))
        }
        None => {
            let relaxed = solver.solve(&identity, &zeros, None, settings)?;
            sdp_iterations += relaxed.iterations;
            let bound = relaxed.matrix.trace();
            if relaxed.matrix.rank_residual() <= opts.dc_rank_tol {
                let r = relaxed.matrix.rank_residual();
                return finish(leading_vector(&relaxed.matrix), &norm, h, r, 0, sdp_iterations, Some(bound));
            }
            (relaxed.matrix, relaxed.state, Some(bound))
        }
    };

    let mut rank_residual = current.rank_residual();
    for it in 0..opts.dc_max_iters {
        let rho = opts.penalty_at(it);
        let (_, u) = current.principal();
        let cost = &identity * C64::new(1.0 + rho, 0.0) - outer(&u) * C64::new(rho, 0.0);
        let sol = solver.solve(&cost, &zeros, state.as_ref(), settings)?;
        sdp_iterations += sol.iterations;
        state = sol.state;
        current = sol.matrix;
        rank_residual = current.rank_residual();
        if rank_residual <= opts.dc_rank_tol {
            return finish(
                leading_vector(&current),
                &norm,
                h,
                rank_residual,
                it + 1,
                sdp_iterations,
                relaxation_bound,
            );
        }
    }
    Err(SolverError::DcStagnation {
        rank_residual,
        iterations: opts.dc_max_iters,
    })
}

/// Semidefinite relaxation with Gaussian randomization.
pub fn sdr_beamformer(
    h: &[DVector<C64>],
    opts: &SolverOptions,
    seed: u64,
) -> Result<BeamformerSolution, SolverError> {
    opts.validate()?;
    let norm = normalize(h)?;
    let hn = &norm.channels;
    let n = hn[0].len();
    let solver = lifted_problem(hn, opts)?;
    let relaxed = solver.solve(
        &DMatrix::identity(n, n),
        &vec![0.0; hn.len()],
        None,
        opts.sdp_settings(),
    )?;
    let bound = relaxed.matrix.trace();
    let residual = relaxed.matrix.rank_residual();
    if residual <= opts.dc_rank_tol {
        return finish(
            leading_vector(&relaxed.matrix),
            &norm,
            h,
            residual,
            0,
            relaxed.iterations,
            Some(bound),
        );
    }

    let eig = relaxed.matrix.eigen();
    let factor = DMatrix::from_fn(n, n, |i, j| {
        eig.vectors[(i, j)] * C64::new(eig.values[j].max(0.0).sqrt(), 0.0)
    });
    let mut rng = seed::rng_for(seed, &[purpose::RANDOMIZATION]);
    let mut best: Option<(f64, DVector<C64>)> = None;
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for _ in 0..opts.randomization_count {
        let r = DVector::from_fn(n, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re * inv_sqrt2, im * inv_sqrt2)
        });
        let xi = &factor * r;
        let g = hn
            .iter()
            .map(|hk| xi.dotc(hk).norm_sqr())
            .fold(f64::INFINITY, f64::min);
        if !(g > 0.0) {
            continue;
        }
        let cost = xi.norm_squared() / g;
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, xi));
        }
    }
    let (_, xi) = best.ok_or_else(|| {
        SolverError::InvalidChannels("every randomized candidate was orthogonal to a channel".into())
    })?;
    finish(xi, &norm, h, 0.0, 0, relaxed.iterations, Some(bound))
}

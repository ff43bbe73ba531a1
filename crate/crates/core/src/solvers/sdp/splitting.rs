//! Operator-splitting (ADMM) backend: alternates a projection onto the affine
//! constraint set with a projection onto the PSD x nonnegative cone.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{independent_gram, project_psd_in_place, smat, svec, svec_len, symmetrize, LiftedMatrix, SdpProblem, SdpSettings, SdpSolution};
use crate::solvers::SolverError;
use crate::C64;

const OVER_RELAXATION: f64 = 1.6;
const RHO_ADAPT_EVERY: usize = 20;

/// ADMM iterate carried between related solves.
#[derive(Debug, Clone)]
pub struct AdmmState {
    z: Vec<f64>,
    u: Vec<f64>,
    rho: f64,
}

/// Factored constraint system, reusable for any cost.
#[derive(Debug, Clone)]
pub struct SplittingSolver {
    n: usize,
    scalars: usize,
    a: DMatrix<f64>,
    b: DVector<f64>,
    gram: Cholesky<f64, Dyn>,
}

impl SplittingSolver {
    pub fn new(problem: &SdpProblem) -> Result<Self, SolverError> {
        let n = problem.n;
        let ms = svec_len(n);
        let p = problem.rows.len();
        let mut a = DMatrix::zeros(p, ms + problem.scalars);
        let bs = problem.scalar_matrix();
        let mut buf = vec![0.0; ms];
        for (r, row) in problem.rows.iter().enumerate() {
            svec(&row.matrix.to_dense(), &mut buf);
            for (c, &v) in buf.iter().enumerate() {
                a[(r, c)] = v;
            }
            for j in 0..problem.scalars {
                a[(r, ms + j)] = bs[(r, j)];
            }
        }
        let gram = independent_gram(&a * a.transpose()).ok_or(SolverError::DependentConstraints)?;
        Ok(Self {
            n,
            scalars: problem.scalars,
            a,
            b: problem.rhs(),
            gram,
        })
    }

    fn dim(&self) -> usize {
        svec_len(self.n) + self.scalars
    }

    fn project_affine(&self, v: &mut DVector<f64>) {
        if self.a.nrows() == 0 {
            return;
        }
        let r = &self.a * &*v - &self.b;
        let y = self.gram.solve(&r);
        v.gemv_tr(-1.0, &self.a, &y, 1.0);
    }

    fn project_cone(&self, v: &mut DVector<f64>) {
        let ms = svec_len(self.n);
        let mut x = smat(&v.as_slice()[..ms], self.n);
        project_psd_in_place(&mut x);
        svec(&x, &mut v.as_mut_slice()[..ms]);
        for s in v.as_mut_slice()[ms..].iter_mut() {
            *s = s.max(0.0);
        }
    }

    /// State whose next iterate starts at `x` with the given scalar values;
    /// unlisted scalars are set to their projected least-squares values.
    pub fn warm_point(&self, x: &DMatrix<C64>, scalars: &[(usize, f64)]) -> AdmmState {
        let ms = svec_len(self.n);
        let mut z = DVector::zeros(self.dim());
        let mut sym = x.clone();
        symmetrize(&mut sym);
        svec(&sym, &mut z.as_mut_slice()[..ms]);
        for &(j, v) in scalars {
            z[ms + j] = v;
        }
        // fill slacks from the row residuals
        let r = &self.b - &self.a * &z;
        for row in 0..self.a.nrows() {
            for j in 0..self.scalars {
                let coef = self.a[(row, ms + j)];
                if coef.abs() == 1.0 && scalars.iter().all(|&(k, _)| k != j) {
                    z[ms + j] = (r[row] / coef).max(0.0);
                }
            }
        }
        AdmmState {
            z: z.as_slice().to_vec(),
            u: vec![0.0; self.dim()],
            rho: 1.0,
        }
    }

    /// Minimize `<cost, X> + scalar_cost . s` over the stored constraints.
    pub fn solve(
        &self,
        cost: &DMatrix<C64>,
        scalar_cost: &[f64],
        warm: Option<&AdmmState>,
        settings: SdpSettings,
    ) -> Result<SdpSolution, SolverError> {
        if cost.nrows() != self.n || cost.ncols() != self.n || scalar_cost.len() != self.scalars {
            return Err(SolverError::Dimension("cost does not match the problem".into()));
        }
        let dim = self.dim();
        let ms = svec_len(self.n);
        let mut c = DVector::zeros(dim);
        let mut csym = cost.clone();
        symmetrize(&mut csym);
        svec(&csym, &mut c.as_mut_slice()[..ms]);
        c.as_mut_slice()[ms..].copy_from_slice(scalar_cost);
        let c_norm = c.norm();

        let (mut z, mut u, mut rho) = match warm {
            Some(s) if s.z.len() == dim => (
                DVector::from_column_slice(&s.z),
                DVector::from_column_slice(&s.u),
                s.rho,
            ),
            _ => (DVector::zeros(dim), DVector::zeros(dim), 1.0),
        };

        let mut x = DVector::zeros(dim);
        let mut primal = f64::INFINITY;
        let mut dual = f64::INFINITY;
        for it in 1..=settings.max_iters {
            x.copy_from(&z);
            x -= &u;
            x.axpy(-1.0 / rho, &c, 1.0);
            self.project_affine(&mut x);

            let mut w = &x * OVER_RELAXATION;
            w.axpy(1.0 - OVER_RELAXATION, &z, 1.0);
            let x_hat = w.clone();
            w += &u;
            self.project_cone(&mut w);

            u += &x_hat;
            u -= &w;
            primal = (&x - &w).norm();
            dual = rho * (&w - &z).norm();
            z = w;

            let eps_primal = settings.tol * (1.0 + x.norm().max(z.norm()));
            let eps_dual = settings.tol * (1.0 + c_norm.max(rho * u.norm()));
            if primal <= eps_primal && dual <= eps_dual {
                return Ok(self.finish(z, u, rho, &c, it, primal, dual));
            }
            if it % RHO_ADAPT_EVERY == 0 {
                let ratio = (primal / eps_primal) / (dual / eps_dual).max(1e-300);
                if ratio > 10.0 {
                    rho *= 2.0;
                    u /= 2.0;
                } else if ratio < 0.1 {
                    rho /= 2.0;
                    u *= 2.0;
                }
            }
        }
        Err(SolverError::NotConverged {
            iterations: settings.max_iters,
            primal_residual: primal,
            dual_residual: dual,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        z: DVector<f64>,
        u: DVector<f64>,
        rho: f64,
        c: &DVector<f64>,
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
    ) -> SdpSolution {
        let ms = svec_len(self.n);
        let violation = if self.a.nrows() == 0 {
            0.0
        } else {
            (&self.a * &z - &self.b).amax()
        };
        SdpSolution {
            matrix: LiftedMatrix::from_trusted(smat(&z.as_slice()[..ms], self.n)),
            scalars: z.as_slice()[ms..].to_vec(),
            objective: c.dot(&z),
            iterations,
            primal_residual,
            dual_residual,
            constraint_violation: violation,
            state: Some(AdmmState {
                z: z.as_slice().to_vec(),
                u: u.as_slice().to_vec(),
                rho,
            }),
        }
    }
}

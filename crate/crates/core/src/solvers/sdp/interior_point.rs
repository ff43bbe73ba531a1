//! Primal-dual interior-point backend (infeasible start, HKM search
//! direction, Mehrotra predictor-corrector).
//!
//! Dual problem: maximize `b^T y` subject to `Z = C - sum y_i A_i >= 0` and
//! `w = c_s - B^T y >= 0`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{independent_gram, inner, symmetrize, LiftedMatrix, SdpProblem, SdpSettings, SdpSolution};
use crate::solvers::SolverError;
use crate::C64;

/// Gap target relative to the infeasibility tolerance.
const GAP_FACTOR: f64 = 1e-3;
/// Iterations without a better merit value before giving up.
const STALL_LIMIT: usize = 5;

/// Position of one rank-one term: a coordinate vector `e_i` or a column of
/// the dense term matrix.
#[derive(Debug, Clone, Copy)]
enum Slot {
    Unit(usize),
    Dense(usize),
}

#[derive(Debug, Clone, Copy)]
struct Term {
    beta: f64,
    owner: usize,
    slot: Slot,
}

/// Prepared constraint operator.
#[derive(Debug, Clone)]
pub struct InteriorPointSolver {
    n: usize,
    q: usize,
    p: usize,
    terms: Vec<Term>,
    /// Dense term vectors as columns.
    vd: DMatrix<C64>,
    bmat: DMatrix<f64>,
    b: DVector<f64>,
    a_norms: Vec<f64>,
}

struct Best {
    it: Iterate,
    merit: f64,
    primal: f64,
    dual: f64,
    gap: f64,
    iter: usize,
}

#[derive(Clone)]
struct Iterate {
    x: DMatrix<C64>,
    z: DMatrix<C64>,
    y: DVector<f64>,
    s: DVector<f64>,
    w: DVector<f64>,
}

struct Direction {
    dx: DMatrix<C64>,
    dz: DMatrix<C64>,
    dy: DVector<f64>,
    ds: DVector<f64>,
    dw: DVector<f64>,
}

struct Residuals {
    rp: DVector<f64>,
    rd: DMatrix<C64>,
    rds: DVector<f64>,
}

struct Factored<'a> {
    it: &'a Iterate,
    res: &'a Residuals,
    zinv: DMatrix<C64>,
    schur: Cholesky<f64, Dyn>,
}

fn unit_index(v: &DVector<C64>) -> Option<(usize, f64)> {
    let mut found = None;
    for (i, z) in v.iter().enumerate() {
        if z.norm_sqr() != 0.0 {
            if found.is_some() {
                return None;
            }
            found = Some((i, z.norm_sqr()));
        }
    }
    found
}

impl InteriorPointSolver {
    pub fn new(problem: &SdpProblem) -> Result<Self, SolverError> {
        let n = problem.n;
        let p = problem.rows.len();
        let mut terms = Vec::new();
        let mut dense = Vec::new();
        for (owner, row) in problem.rows.iter().enumerate() {
            for (beta, v) in row.matrix.terms() {
                let (beta, slot) = match unit_index(v) {
                    Some((i, w)) => (beta * w, Slot::Unit(i)),
                    None => {
                        dense.push(v.clone());
                        (*beta, Slot::Dense(dense.len() - 1))
                    }
                };
                terms.push(Term { beta, owner, slot });
            }
        }
        let vd = if dense.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&dense)
        };
        let mut solver = Self {
            n,
            q: problem.scalars,
            p,
            terms,
            vd,
            bmat: problem.scalar_matrix(),
            b: problem.rhs(),
            a_norms: Vec::new(),
        };
        // Gram matrix of the stacked constraint operator
        let g = solver.term_gram(&DMatrix::identity(n, n));
        let gram = solver.aggregate(&g, &g) + &solver.bmat * solver.bmat.transpose();
        solver.a_norms = (0..p).map(|i| gram[(i, i)].max(0.0).sqrt()).collect();
        if p > 0 && independent_gram(gram).is_none() {
            return Err(SolverError::DependentConstraints);
        }
        Ok(solver)
    }

    /// `G[r, s] = v_r^H H v_s` for Hermitian `H`.
    fn term_gram(&self, h: &DMatrix<C64>) -> DMatrix<C64> {
        let hv = h * &self.vd;
        let gdd = self.vd.adjoint() * &hv;
        let r = self.terms.len();
        DMatrix::from_fn(r, r, |a, b| match (self.terms[a].slot, self.terms[b].slot) {
            (Slot::Unit(i), Slot::Unit(j)) => h[(i, j)],
            (Slot::Unit(i), Slot::Dense(j)) => hv[(i, j)],
            (Slot::Dense(i), Slot::Unit(j)) => hv[(j, i)].conj(),
            (Slot::Dense(i), Slot::Dense(j)) => gdd[(i, j)],
        })
    }

    /// `M_ij = Re sum_{r in i, s in j} beta_r beta_s Gx[r,s] Gz[s,r]`.
    fn aggregate(&self, gx: &DMatrix<C64>, gz: &DMatrix<C64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.p, self.p);
        for (s, ts) in self.terms.iter().enumerate() {
            for (t, tt) in self.terms.iter().enumerate() {
                let val = ts.beta * tt.beta * (gx[(s, t)] * gz[(t, s)]).re;
                m[(ts.owner, tt.owner)] += val;
            }
        }
        m
    }

    /// `A(X)`, one entry per row; only the Hermitian part of `X` contributes.
    fn apply(&self, x: &DMatrix<C64>) -> DVector<f64> {
        let xv = x * &self.vd;
        let mut out = DVector::zeros(self.p);
        for t in &self.terms {
            let val = match t.slot {
                Slot::Unit(i) => x[(i, i)].re,
                Slot::Dense(j) => self.vd.column(j).dotc(&xv.column(j)).re,
            };
            out[t.owner] += t.beta * val;
        }
        out
    }

    /// `A*(y) = sum_i y_i A_i`.
    fn adjoint(&self, y: &DVector<f64>) -> DMatrix<C64> {
        let mut scaled = self.vd.clone();
        let mut out = DMatrix::zeros(self.n, self.n);
        let mut diag = vec![0.0; self.n];
        for t in &self.terms {
            let f = t.beta * y[t.owner];
            match t.slot {
                Slot::Unit(i) => diag[i] += f,
                Slot::Dense(j) => scaled.column_mut(j).scale_mut(f),
            }
        }
        if self.vd.ncols() > 0 {
            out = scaled * self.vd.adjoint();
            symmetrize(&mut out);
        }
        for (i, d) in diag.into_iter().enumerate() {
            out[(i, i)] += C64::new(d, 0.0);
        }
        out
    }

    fn residuals(&self, it: &Iterate, cost: &DMatrix<C64>, scalar_cost: &DVector<f64>) -> Residuals {
        let rp = &self.b - self.apply(&it.x) - &self.bmat * &it.s;
        let rd = cost - self.adjoint(&it.y) - &it.z;
        let rds = scalar_cost - self.bmat.transpose() * &it.y - &it.w;
        Residuals { rp, rd, rds }
    }

    fn factor<'a>(&self, it: &'a Iterate, res: &'a Residuals) -> Option<Factored<'a>> {
        let zinv = Cholesky::new(it.z.clone())?.inverse();
        let gx = self.term_gram(&it.x);
        let gz = self.term_gram(&zinv);
        let mut m = self.aggregate(&gx, &gz);
        let mut bd = self.bmat.clone();
        for k in 0..self.q {
            bd.column_mut(k).scale_mut(it.s[k] / it.w[k]);
        }
        m += bd * self.bmat.transpose();
        let mut schur = Cholesky::new(m.clone());
        if schur.is_none() {
            let bump = 1e-13 * m.diagonal().amax().max(1e-300);
            for i in 0..self.p {
                m[(i, i)] += bump;
            }
            schur = Cholesky::new(m);
        }
        Some(Factored {
            it,
            res,
            zinv,
            schur: schur?,
        })
    }

    /// Newton direction for the centring target `target * I`, with optional
    /// second-order corrections.
    fn direction(
        &self,
        f: &Factored<'_>,
        target: f64,
        corr: Option<(&DMatrix<C64>, &DVector<f64>)>,
    ) -> Direction {
        let it = f.it;
        let res = f.res;
        let mut xr = &it.x * &res.rd;
        let mut comp_s = DVector::from_fn(self.q, |k, _| target - it.s[k] * it.w[k]);
        if let Some((cm, cs)) = corr {
            xr += cm;
            comp_s -= cs;
        }
        let y_mat = &f.zinv * C64::new(target, 0.0) - &it.x - xr * &f.zinv;
        let g = DVector::from_fn(self.q, |k, _| (comp_s[k] - it.s[k] * res.rds[k]) / it.w[k]);
        let rhs = &res.rp - self.apply(&y_mat) - &self.bmat * &g;
        let dy = f.schur.solve(&rhs);
        let dz = &res.rd - self.adjoint(&dy);
        let mut xdz = &it.x * &dz;
        if let Some((cm, _)) = corr {
            xdz += cm;
        }
        let mut dx = &f.zinv * C64::new(target, 0.0) - &it.x - xdz * &f.zinv;
        symmetrize(&mut dx);
        let dw = &res.rds - self.bmat.transpose() * &dy;
        let ds = DVector::from_fn(self.q, |k, _| (comp_s[k] - it.s[k] * dw[k]) / it.w[k]);
        Direction { dx, dz, dy, ds, dw }
    }

    fn solve_inner(
        &self,
        cost: &DMatrix<C64>,
        scalar_cost: &[f64],
        settings: SdpSettings,
    ) -> Result<SdpSolution, SolverError> {
        let n = self.n;
        let q = self.q;
        let cs = DVector::from_column_slice(scalar_cost);
        let c_norm = (cost.norm_squared() + cs.norm_squared()).sqrt();
        let b_norm = self.b.norm();
        let nf = n as f64;

        let a_max = self.a_norms.iter().cloned().fold(0.0, f64::max);
        let mut xi = 10f64.max(nf.sqrt());
        for i in 0..self.p {
            xi = xi.max(nf * (1.0 + self.b[i].abs()) / (1.0 + self.a_norms[i]));
        }
        let eta = 10f64.max(nf.sqrt()).max(a_max).max(c_norm);
        let mut it = Iterate {
            x: DMatrix::identity(n, n) * C64::new(xi, 0.0),
            z: DMatrix::identity(n, n) * C64::new(eta, 0.0),
            y: DVector::zeros(self.p),
            s: DVector::from_element(q, xi),
            w: DVector::from_element(q, eta),
        };
        let dof = (n + q) as f64;
        let mut primal = f64::INFINITY;
        let mut dual = f64::INFINITY;
        let mut best: Option<Best> = None;
        let mut stalled = 0;

        for iter in 0..settings.max_iters {
            let res = self.residuals(&it, cost, &cs);
            let mu = (inner(&it.x, &it.z) + it.s.dot(&it.w)) / dof;
            primal = res.rp.norm() / (1.0 + b_norm);
            dual = (res.rd.norm_squared() + res.rds.norm_squared()).sqrt() / (1.0 + c_norm);
            let pobj = inner(cost, &it.x) + cs.dot(&it.s);
            let dobj = self.b.dot(&it.y);
            let gap = (pobj - dobj).abs().max(mu * dof) / (1.0 + pobj.abs() + dobj.abs());
            let feasible = primal <= settings.tol && dual <= settings.tol;
            if feasible && gap <= settings.tol * GAP_FACTOR {
                return Ok(self.finish(it, cost, &cs, iter, primal, dual));
            }
            let merit = primal.max(dual).max(gap);
            if best.as_ref().is_none_or(|b| merit < b.merit) {
                best = Some(Best {
                    it: it.clone(),
                    merit,
                    primal,
                    dual,
                    gap,
                    iter,
                });
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= STALL_LIMIT {
                    break;
                }
            }

            let Some(f) = self.factor(&it, &res) else {
                break;
            };
            let aff = self.direction(&f, 0.0, None);
            let ap = step_length(&it.x, &aff.dx, &it.s, &aff.ds, 1.0);
            let ad = step_length(&it.z, &aff.dz, &it.w, &aff.dw, 1.0);
            let x_aff = &it.x + &aff.dx * C64::new(ap, 0.0);
            let z_aff = &it.z + &aff.dz * C64::new(ad, 0.0);
            let s_aff = &it.s + &aff.ds * ap;
            let w_aff = &it.w + &aff.dw * ad;
            let mu_aff = (inner(&x_aff, &z_aff) + s_aff.dot(&w_aff)) / dof;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            let corr_m = &aff.dx * &aff.dz;
            let corr_s = aff.ds.component_mul(&aff.dw);
            let d = self.direction(&f, sigma * mu, Some((&corr_m, &corr_s)));
            let tau = 0.9 + 0.09 * ap.min(ad);
            let ap = step_length(&it.x, &d.dx, &it.s, &d.ds, tau);
            let ad = step_length(&it.z, &d.dz, &it.w, &d.dw, tau);
            if !(ap > 0.0 && ad > 0.0) {
                break;
            }
            it.x += &d.dx * C64::new(ap, 0.0);
            symmetrize(&mut it.x);
            it.s += &d.ds * ap;
            it.z += &d.dz * C64::new(ad, 0.0);
            symmetrize(&mut it.z);
            it.y += &d.dy * ad;
            it.w += &d.dw * ad;
        }
        // accept the best iterate if it meets the contract tolerance
        if let Some(b) = best {
            if b.primal <= settings.tol && b.dual <= settings.tol && b.gap <= settings.tol {
                return Ok(self.finish(b.it, cost, &cs, b.iter, b.primal, b.dual));
            }
            primal = b.primal;
            dual = b.dual;
        }
        Err(SolverError::NotConverged {
            iterations: settings.max_iters,
            primal_residual: primal,
            dual_residual: dual,
        })
    }

    /// Minimize `<cost, X> + scalar_cost . s` over the stored constraints.
    pub fn solve(
        &self,
        cost: &DMatrix<C64>,
        scalar_cost: &[f64],
        settings: SdpSettings,
    ) -> Result<SdpSolution, SolverError> {
        if cost.nrows() != self.n || cost.ncols() != self.n || scalar_cost.len() != self.q {
            return Err(SolverError::Dimension("cost does not match the problem".into()));
        }
        let mut c = cost.clone();
        symmetrize(&mut c);
        self.solve_inner(&c, scalar_cost, settings)
    }

    fn finish(
        &self,
        it: Iterate,
        cost: &DMatrix<C64>,
        cs: &DVector<f64>,
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
    ) -> SdpSolution {
        let violation = (&self.b - self.apply(&it.x) - &self.bmat * &it.s).amax();
        SdpSolution {
            objective: inner(cost, &it.x) + cs.dot(&it.s),
            matrix: LiftedMatrix::from_trusted(it.x),
            scalars: it.s.as_slice().to_vec(),
            iterations,
            primal_residual,
            dual_residual,
            constraint_violation: violation,
            state: None,
        }
    }
}

/// Largest `alpha <= 1` with `X + (alpha / tau) dX` PSD and `s + (alpha / tau) ds >= 0`,
/// scaled by `tau`.
fn step_length(x: &DMatrix<C64>, dx: &DMatrix<C64>, s: &DVector<f64>, ds: &DVector<f64>, tau: f64) -> f64 {
    let mut limit = f64::INFINITY;
    for k in 0..s.len() {
        if ds[k] < 0.0 {
            limit = limit.min(-s[k] / ds[k]);
        }
    }
    if let Some(chol) = Cholesky::new(x.clone()) {
        let l = chol.l();
        // L^{-1} dX L^{-H}
        let mut t = dx.clone();
        if l.solve_lower_triangular_mut(&mut t) {
            let mut th = t.adjoint();
            if l.solve_lower_triangular_mut(&mut th) {
                symmetrize(&mut th);
                let lmin = th.symmetric_eigenvalues().min();
                if lmin < 0.0 {
                    limit = limit.min(-1.0 / lmin);
                }
            }
        }
    } else {
        return 0.0;
    }
    (tau * limit).min(1.0)
}

//! Complex Hermitian semidefinite programs.
//!
//! Problems have the form
//!
//! ```text
//! minimize    <C, X> + c_s^T s
//! subject to  <A_i, X> + sum_j B_ij s_j = b_i,   X >= 0 (PSD),  s >= 0
//! ```
//!
//! where `X` is an `n x n` Hermitian matrix and `s` a vector of nonnegative
//! scalars (slacks for inequality rows plus any auxiliary variables).
//! Constraint matrices are stored as sums of weighted rank-one terms
//! `sum_r beta_r v_r v_r^H`, which is how every lifted design problem in this
//! crate is naturally expressed.
//!
//! Two backends are available: a primal-dual interior-point method
//! ([`interior_point`]) and an operator-splitting method ([`splitting`]) that
//! alternates an affine projection with [`psd_project`].

pub mod interior_point;
pub mod splitting;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::C64;

pub use interior_point::InteriorPointSolver;
pub use splitting::{AdmmState, SplittingSolver};

const SQRT2: f64 = std::f64::consts::SQRT_2;
const HERMITIAN_TOL: f64 = 1e-8;

/// Eigendecomposition with eigenvalues sorted in descending order. Equal
/// eigenvalues keep the solver's native order; each eigenvector is rotated so
/// its first largest-modulus entry is real and positive.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

pub fn hermitian_eigen(a: &DMatrix<C64>) -> HermitianEigen {
    let n = a.nrows();
    let eig = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let mut pivot = C64::new(0.0, 0.0);
        let mut best = -1.0;
        for z in col.iter() {
            if z.norm_sqr() > best * (1.0 + 1e-12) {
                best = z.norm_sqr();
                pivot = *z;
            }
        }
        let rot = if best > 0.0 { pivot.conj() / pivot.norm() } else { C64::new(1.0, 0.0) };
        vectors.set_column(dst, &(col * rot));
    }
    HermitianEigen {
        values: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        vectors,
    }
}

/// Largest |A - A^H| entry.
pub fn hermitian_defect(a: &DMatrix<C64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..=j.min(a.nrows().saturating_sub(1)) {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub(crate) fn symmetrize(a: &mut DMatrix<C64>) {
    let n = a.nrows();
    for j in 0..n {
        a[(j, j)] = C64::new(a[(j, j)].re, 0.0);
        for i in 0..j {
            let v = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = v;
            a[(j, i)] = v.conj();
        }
    }
}

fn check_hermitian(a: &DMatrix<C64>) -> Result<(), SolverError> {
    if a.nrows() != a.ncols() {
        return Err(SolverError::Dimension(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = a.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
    let defect = hermitian_defect(a);
    if defect > HERMITIAN_TOL * scale {
        return Err(SolverError::NotHermitian { defect });
    }
    Ok(())
}

/// Hermitian PSD matrix produced by the lifting solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedMatrix(DMatrix<C64>);

impl LiftedMatrix {
    /// Wrap a matrix the caller knows to be Hermitian PSD.
    pub(crate) fn from_trusted(m: DMatrix<C64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.0.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn eigen(&self) -> HermitianEigen {
        hermitian_eigen(&self.0)
    }

    /// Largest eigenvalue and its unit eigenvector.
    pub fn principal(&self) -> (f64, DVector<C64>) {
        let e = self.eigen();
        (e.values[0], e.vectors.column(0).into_owned())
    }

    /// `(tr X - lambda_max) / tr X`; zero for a rank-one matrix.
    pub fn rank_residual(&self) -> f64 {
        let tr = self.trace();
        if tr <= 0.0 {
            return 0.0;
        }
        let (l1, _) = self.principal();
        ((tr - l1) / tr).max(0.0)
    }
}

/// Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped).
/// Inputs within `1e-8` (relative) of Hermitian are symmetrized first.
pub fn psd_project(a: &DMatrix<C64>) -> Result<LiftedMatrix, SolverError> {
    check_hermitian(a)?;
    let mut m = a.clone();
    symmetrize(&mut m);
    project_psd_in_place(&mut m);
    Ok(LiftedMatrix(m))
}

/// Clip negative eigenvalues of an already-Hermitian matrix, in place.
pub(crate) fn project_psd_in_place(m: &mut DMatrix<C64>) {
    let n = m.nrows();
    if n == 0 {
        return;
    }
    let eig = m.clone().symmetric_eigen();
    let positives = eig.eigenvalues.iter().filter(|&&l| l > 0.0).count();
    if positives == n {
        return;
    }
    let take_positive = positives <= n / 2;
    let mut out = if take_positive { DMatrix::zeros(n, n) } else { m.clone() };
    for (idx, &l) in eig.eigenvalues.iter().enumerate() {
        let keep = if take_positive { l > 0.0 } else { l <= 0.0 };
        if !keep {
            continue;
        }
        let v = eig.eigenvectors.column(idx);
        let coef = if take_positive { l } else { -l };
        // out += coef * v v^H
        for j in 0..n {
            let vj = v[j].conj() * coef;
            for i in 0..n {
                out[(i, j)] += v[i] * vj;
            }
        }
    }
    symmetrize(&mut out);
    *m = out;
}

/// Length of the real parameterization of an `n x n` Hermitian matrix.
pub fn svec_len(n: usize) -> usize {
    n * n
}

/// Real coordinates with `<A, X> = svec(A) . svec(X)`: the diagonal, then
/// `sqrt(2) Re` and `sqrt(2) Im` of each strictly upper entry.
pub fn svec(a: &DMatrix<C64>, out: &mut [f64]) {
    let n = a.nrows();
    for i in 0..n {
        out[i] = a[(i, i)].re;
    }
    let mut k = n;
    for j in 0..n {
        for i in 0..j {
            let z = a[(i, j)];
            out[k] = SQRT2 * z.re;
            out[k + 1] = SQRT2 * z.im;
            k += 2;
        }
    }
}

pub fn smat(v: &[f64], n: usize) -> DMatrix<C64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = C64::new(v[i], 0.0);
    }
    let mut k = n;
    for j in 0..n {
        for i in 0..j {
            let z = C64::new(v[k], v[k + 1]) / SQRT2;
            a[(i, j)] = z;
            a[(j, i)] = z.conj();
            k += 2;
        }
    }
    a
}

/// `<A, B> = Re tr(A^H B)`.
pub fn inner(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Cholesky factor of a constraint Gram matrix, or `None` when some row is
/// (numerically) a combination of the others.
pub(crate) fn independent_gram(gram: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let diag: Vec<f64> = gram.diagonal().iter().copied().collect();
    let chol = nalgebra::Cholesky::new(gram)?;
    let l = chol.l_dirty();
    let ok = diag
        .iter()
        .enumerate()
        .all(|(i, &d)| d > 0.0 && l[(i, i)] * l[(i, i)] > 1e-10 * d);
    ok.then_some(chol)
}

/// Hermitian constraint matrix `sum_r beta_r v_r v_r^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    n: usize,
    terms: Vec<(f64, DVector<C64>)>,
}

impl ConstraintMatrix {
    pub fn rank_one(v: DVector<C64>) -> Self {
        Self::scaled_rank_one(1.0, v)
    }

    pub fn scaled_rank_one(beta: f64, v: DVector<C64>) -> Self {
        Self {
            n: v.len(),
            terms: vec![(beta, v)],
        }
    }

    /// `E_ii`, selecting the `i`-th diagonal entry.
    pub fn diagonal_entry(n: usize, i: usize) -> Self {
        let mut e = DVector::zeros(n);
        e[i] = C64::new(1.0, 0.0);
        Self::rank_one(e)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            terms: (0..n)
                .map(|i| {
                    let mut e = DVector::zeros(n);
                    e[i] = C64::new(1.0, 0.0);
                    (1.0, e)
                })
                .collect(),
        }
    }

    /// Factor a dense Hermitian matrix into its nonzero eigen-terms.
    pub fn from_hermitian(a: &DMatrix<C64>) -> Result<Self, SolverError> {
        check_hermitian(a)?;
        let mut m = a.clone();
        symmetrize(&mut m);
        let e = hermitian_eigen(&m);
        let cutoff = 1e-14 * e.values.iter().fold(0.0f64, |acc, l| acc.max(l.abs()));
        Ok(Self {
            n: a.nrows(),
            terms: e
                .values
                .iter()
                .enumerate()
                .filter(|(_, l)| l.abs() > cutoff)
                .map(|(i, &l)| (l, e.vectors.column(i).into_owned()))
                .collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[(f64, DVector<C64>)] {
        &self.terms
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for (beta, v) in &self.terms {
            out += v * v.adjoint() * C64::new(*beta, 0.0);
        }
        out
    }

    /// `<A, X>` for Hermitian `X`.
    pub fn apply(&self, x: &DMatrix<C64>) -> f64 {
        self.terms
            .iter()
            .map(|(beta, v)| beta * v.dotc(&(x * v)).re)
            .sum()
    }
}

/// Row sense of a linear constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Ge,
    Le,
}

#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub(crate) matrix: ConstraintMatrix,
    pub(crate) scalars: Vec<(usize, f64)>,
    pub(crate) slack: Option<(usize, f64)>,
    pub(crate) rhs: f64,
}

impl Row {
    fn scalar_terms(&self) -> impl Iterator<Item = &(usize, f64)> {
        self.scalars.iter().chain(&self.slack)
    }
}

/// Constraint set of an SDP over one `n x n` Hermitian block plus
/// nonnegative scalars.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    n: usize,
    scalars: usize,
    rows: Vec<Row>,
}

impl SdpProblem {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            scalars: 0,
            rows: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn num_scalars(&self) -> usize {
        self.scalars
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    /// New nonnegative scalar variable; returns its index.
    pub fn add_scalar(&mut self) -> usize {
        self.scalars += 1;
        self.scalars - 1
    }

    /// `<A, X> + sum coef * s_j (sense) rhs`. Inequalities get their own slack.
    pub fn add_constraint(
        &mut self,
        a: ConstraintMatrix,
        scalar_terms: &[(usize, f64)],
        sense: Sense,
        rhs: f64,
    ) -> Result<(), SolverError> {
        if a.dim() != self.n {
            return Err(SolverError::Dimension(format!(
                "constraint matrix has dimension {}, expected {}",
                a.dim(),
                self.n
            )));
        }
        if let Some(&(j, _)) = scalar_terms.iter().find(|(j, _)| *j >= self.scalars) {
            return Err(SolverError::Dimension(format!("scalar variable {j} does not exist")));
        }
        let slack = match sense {
            Sense::Eq => None,
            Sense::Ge => Some((self.add_scalar(), -1.0)),
            Sense::Le => Some((self.add_scalar(), 1.0)),
        };
        self.rows.push(Row {
            matrix: a,
            scalars: scalar_terms.to_vec(),
            slack,
            rhs,
        });
        Ok(())
    }

    /// Same as [`SdpProblem::add_constraint`] with a dense Hermitian matrix.
    pub fn add_dense_constraint(
        &mut self,
        a: &DMatrix<C64>,
        scalar_terms: &[(usize, f64)],
        sense: Sense,
        rhs: f64,
    ) -> Result<(), SolverError> {
        self.add_constraint(ConstraintMatrix::from_hermitian(a)?, scalar_terms, sense, rhs)
    }

    /// Dense `p x q` matrix of scalar coefficients.
    pub(crate) fn scalar_matrix(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.rows.len(), self.scalars);
        for (r, row) in self.rows.iter().enumerate() {
            for &(j, coef) in row.scalar_terms() {
                b[(r, j)] += coef;
            }
        }
        b
    }

    pub(crate) fn rhs(&self) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| r.rhs))
    }

    /// Largest `|<A_i, X> + B_i s - b_i|`.
    pub fn violation(&self, x: &DMatrix<C64>, s: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|row| {
                let lhs = row.matrix.apply(x)
                    + row.scalar_terms().map(|&(j, c)| c * s[j]).sum::<f64>();
                (lhs - row.rhs).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Iteration limit and tolerance for one subproblem solve.
#[derive(Debug, Clone, Copy)]
pub struct SdpSettings {
    pub max_iters: usize,
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub matrix: LiftedMatrix,
    pub scalars: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Largest absolute equality residual at the returned point.
    pub constraint_violation: f64,
    /// Iterate to resume from (splitting backend only).
    pub state: Option<AdmmState>,
}

/// Subproblem algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpBackend {
    #[default]
    InteriorPoint,
    Splitting,
}

/// Prepared problem for either backend.
#[derive(Debug, Clone)]
pub enum SdpSolver {
    InteriorPoint(InteriorPointSolver),
    Splitting(SplittingSolver),
}

impl SdpSolver {
    pub fn new(problem: &SdpProblem, backend: SdpBackend) -> Result<Self, SolverError> {
        Ok(match backend {
            SdpBackend::InteriorPoint => Self::InteriorPoint(InteriorPointSolver::new(problem)?),
            SdpBackend::Splitting => Self::Splitting(SplittingSolver::new(problem)?),
        })
    }

    /// Minimize `<cost, X> + scalar_cost . s`. `warm` is used by the
    /// splitting backend and ignored otherwise.
    pub fn solve(
        &self,
        cost: &DMatrix<C64>,
        scalar_cost: &[f64],
        warm: Option<&AdmmState>,
        settings: SdpSettings,
    ) -> Result<SdpSolution, SolverError> {
        match self {
            Self::InteriorPoint(s) => s.solve(cost, scalar_cost, settings),
            Self::Splitting(s) => s.solve(cost, scalar_cost, warm, settings),
        }
    }

    /// Warm-start state at a known point (splitting backend only).
    pub fn warm_point(&self, x: &DMatrix<C64>, scalars: &[(usize, f64)]) -> Option<AdmmState> {
        match self {
            Self::InteriorPoint(_) => None,
            Self::Splitting(s) => Some(s.warm_point(x, scalars)),
        }
    }
}

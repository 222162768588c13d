//! Smooth constrained nonlinear programs and their interior-point solver.
//!
//! A problem is assembled from *terms*: small functions of a few named
//! variables, implementing [`DiffFn`] once and evaluated on `f64`, dual
//! or second-order dual scalars as needed. Multiple-shooting problems
//! are naturally term-separable, which keeps Jacobians sparse and lets
//! the Lagrangian Hessian be built from small exact per-term blocks.
//!
//! The solver ([`solve`]) is a primal-dual interior-point method with a
//! monotone barrier schedule, inertia-corrected symmetric-indefinite
//! factorization of the condensed KKT system (banded after reverse
//! Cuthill-McKee reordering), a fraction-to-boundary step rule and a
//! backtracking line search on an l1 exact-penalty merit function.

mod band;
mod ipm;

pub use ipm::{restore, solve, RestorationOutcome};

use crate::autodiff::{self, AdError, DiffFn, Dual1, Dual2, SparsityPattern, TANGENT_WIDTH};
use std::path::PathBuf;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NlpError {
    #[error("variable index {index} out of range for problem with {n} variables")]
    VarOutOfRange { index: usize, n: usize },
    #[error("term declares duplicate variable index {index}")]
    DuplicateVar { index: usize },
    #[error("objective terms must have one output, got {got}")]
    ObjectiveArity { got: usize },
    #[error("bounds crossed at variable {index}: lower {lower} > upper {upper}")]
    BoundsCrossed { index: usize, lower: f64, upper: f64 },
    #[error(transparent)]
    Ad(#[from] AdError),
}

/// Object-safe evaluation facade over a [`DiffFn`].
pub trait TermEval: Send + Sync {
    fn n_in(&self) -> usize;
    fn n_out(&self) -> usize;
    fn eval_f64(&self, x: &[f64], out: &mut [f64]);
    fn eval_dual(&self, x: &[Dual1], out: &mut [Dual1]);
    fn eval_dual2(&self, x: &[Dual2], out: &mut [Dual2]);
}

impl<F: DiffFn> TermEval for F {
    fn n_in(&self) -> usize {
        DiffFn::n_in(self)
    }
    fn n_out(&self) -> usize {
        DiffFn::n_out(self)
    }
    fn eval_f64(&self, x: &[f64], out: &mut [f64]) {
        self.eval(x, out)
    }
    fn eval_dual(&self, x: &[Dual1], out: &mut [Dual1]) {
        self.eval(x, out)
    }
    fn eval_dual2(&self, x: &[Dual2], out: &mut [Dual2]) {
        self.eval(x, out)
    }
}

struct Term {
    /// Global indices of this term's variables, in local order.
    vars: Vec<usize>,
    /// First output row (constraint terms; unused for objective terms).
    row0: usize,
    n_out: usize,
    /// Affine terms are skipped when accumulating the Hessian.
    linear: bool,
    f: Box<dyn TermEval>,
}

#[derive(Clone, Copy, PartialEq)]
enum TermKind {
    Objective,
    Eq,
    Ineq,
}

/// How the Lagrangian Hessian is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HessianMode {
    /// Exact forward-over-forward per term.
    #[default]
    Exact,
    /// Damped BFGS approximation (dense; for small or unstructured problems).
    QuasiNewton,
}

/// Interior-point solver options.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Scaled KKT tolerance for convergence.
    pub kkt_tol: f64,
    pub max_iter: usize,
    /// Initial barrier parameter.
    pub mu0: f64,
    /// Barrier reduction factor per Fiacco-McCormick stage.
    pub mu_shrink: f64,
    /// Fraction-to-boundary factor.
    pub ftb_tau: f64,
    /// Inertia-correction regularization bounds: delta doubles from
    /// `reg_min` until the factorization reports correct inertia.
    pub reg_min: f64,
    pub reg_max: f64,
    pub hessian_mode: HessianMode,
    /// Optional iteration log (CSV: iter, mu, merit, step, residuals).
    pub iter_log_csv: Option<PathBuf>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-6,
            max_iter: 500,
            mu0: 0.1,
            mu_shrink: 0.2,
            ftb_tau: 0.995,
            reg_min: 1e-8,
            reg_max: 1e8,
            hessian_mode: HessianMode::Exact,
            iter_log_csv: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    InfeasibleDetected,
    NumericalFailure,
}

/// Multipliers under the convention `L = f + lam_eq . c_E - lam_ineq . c_I
/// - z_lower . (w - lb) - z_upper . (ub - w)`, so stationarity reads
/// `grad f + J_E' lam_eq - J_I' lam_ineq - z_lower + z_upper = 0`.
/// For `min w1^2 + w2^2 s.t. w1 + w2 = 1` the equality multiplier is -1.
#[derive(Debug, Clone)]
pub struct Multipliers {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub w_star: Vec<f64>,
    pub multipliers: Multipliers,
    pub status: SolveStatus,
    pub iterations: usize,
    pub residuals: KktResiduals,
    pub objective: f64,
    pub wall_s: f64,
}

/// Precomputed Hessian bookkeeping: deduplicated lower-triangle entries
/// and, per nonlinear term, the slot of every local pair.
struct HessianIndex {
    entries: Vec<(usize, usize)>,
    /// Slot lists per term, ordered objective, eq, ineq; linear terms
    /// hold an empty list. `slots[t][i * k + j]` is the destination of
    /// local Hessian entry `(i, j)` for `j <= i`.
    slots: Vec<Vec<usize>>,
}

/// A smooth NLP: `min f(w) s.t. c_E(w) = 0, c_I(w) >= 0, lb <= w <= ub`.
pub struct NlpProblem {
    n: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    obj: Vec<Term>,
    eq: Vec<Term>,
    ineq: Vec<Term>,
    m_eq: usize,
    m_ineq: usize,
    eq_jac: Vec<(usize, usize)>,
    ineq_jac: Vec<(usize, usize)>,
    hess: OnceLock<HessianIndex>,
}

impl NlpProblem {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            obj: Vec::new(),
            eq: Vec::new(),
            ineq: Vec::new(),
            m_eq: 0,
            m_ineq: 0,
            eq_jac: Vec::new(),
            ineq_jac: Vec::new(),
            hess: OnceLock::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn m_eq(&self) -> usize {
        self.m_eq
    }
    pub fn m_ineq(&self) -> usize {
        self.m_ineq
    }
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn set_bounds(&mut self, index: usize, lower: f64, upper: f64) -> Result<(), NlpError> {
        if index >= self.n {
            return Err(NlpError::VarOutOfRange { index, n: self.n });
        }
        if lower > upper {
            return Err(NlpError::BoundsCrossed { index, lower, upper });
        }
        self.lower[index] = lower;
        self.upper[index] = upper;
        Ok(())
    }

    fn check_term(&self, vars: &[usize], f: &dyn TermEval) -> Result<(), NlpError> {
        if vars.len() != f.n_in() {
            return Err(NlpError::Ad(AdError::Dimension { expected: f.n_in(), got: vars.len() }));
        }
        for (i, &v) in vars.iter().enumerate() {
            if v >= self.n {
                return Err(NlpError::VarOutOfRange { index: v, n: self.n });
            }
            if vars[..i].contains(&v) {
                return Err(NlpError::DuplicateVar { index: v });
            }
        }
        Ok(())
    }

    /// Add a scalar objective term; the full objective is the sum of all
    /// such terms.
    pub fn add_objective<F>(&mut self, vars: Vec<usize>, f: F) -> Result<(), NlpError>
    where
        F: DiffFn + 'static,
    {
        if DiffFn::n_out(&f) != 1 {
            return Err(NlpError::ObjectiveArity { got: DiffFn::n_out(&f) });
        }
        self.check_term(&vars, &f)?;
        self.obj.push(Term { vars, row0: 0, n_out: 1, linear: false, f: Box::new(f) });
        self.hess = OnceLock::new();
        Ok(())
    }

    fn add_constraint<F>(&mut self, vars: Vec<usize>, f: F, kind: TermKind, linear: bool) -> Result<usize, NlpError>
    where
        F: DiffFn + 'static,
    {
        self.check_term(&vars, &f)?;
        let n_out = DiffFn::n_out(&f);
        let (row0, jac, terms) = match kind {
            TermKind::Eq => (self.m_eq, &mut self.eq_jac, &mut self.eq),
            TermKind::Ineq => (self.m_ineq, &mut self.ineq_jac, &mut self.ineq),
            TermKind::Objective => unreachable!(),
        };
        for r in 0..n_out {
            for &v in &vars {
                jac.push((row0 + r, v));
            }
        }
        terms.push(Term { vars, row0, n_out, linear, f: Box::new(f) });
        match kind {
            TermKind::Eq => self.m_eq += n_out,
            TermKind::Ineq => self.m_ineq += n_out,
            TermKind::Objective => unreachable!(),
        }
        self.hess = OnceLock::new();
        Ok(row0)
    }

    /// Add equality rows `f(w_vars) = 0`; returns the first row index.
    pub fn add_eq<F: DiffFn + 'static>(&mut self, vars: Vec<usize>, f: F) -> Result<usize, NlpError> {
        self.add_constraint(vars, f, TermKind::Eq, false)
    }

    /// Equality rows known to be affine (no Hessian contribution).
    pub fn add_eq_linear<F: DiffFn + 'static>(&mut self, vars: Vec<usize>, f: F) -> Result<usize, NlpError> {
        self.add_constraint(vars, f, TermKind::Eq, true)
    }

    /// Add inequality rows `f(w_vars) >= 0`; returns the first row index.
    pub fn add_ineq<F: DiffFn + 'static>(&mut self, vars: Vec<usize>, f: F) -> Result<usize, NlpError> {
        self.add_constraint(vars, f, TermKind::Ineq, false)
    }

    pub fn add_ineq_linear<F: DiffFn + 'static>(&mut self, vars: Vec<usize>, f: F) -> Result<usize, NlpError> {
        self.add_constraint(vars, f, TermKind::Ineq, true)
    }

    /// Jacobian sparsity of the equality constraints, in evaluation order.
    pub fn eq_jac_pattern(&self) -> &[(usize, usize)] {
        &self.eq_jac
    }
    pub fn ineq_jac_pattern(&self) -> &[(usize, usize)] {
        &self.ineq_jac
    }

    /// Equality Jacobian as a [`SparsityPattern`] (deduplicated by
    /// construction: every row belongs to exactly one term).
    pub fn eq_sparsity(&self) -> SparsityPattern {
        SparsityPattern::new(self.m_eq, self.n, self.eq_jac.clone())
            .expect("constraint rows are term-owned, so patterns cannot collide")
    }
    pub fn ineq_sparsity(&self) -> SparsityPattern {
        SparsityPattern::new(self.m_ineq, self.n, self.ineq_jac.clone())
            .expect("constraint rows are term-owned, so patterns cannot collide")
    }

    fn gather(&self, term: &Term, x: &[f64], buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend(term.vars.iter().map(|&v| x[v]));
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut local = Vec::new();
        let mut total = 0.0;
        let mut out = [0.0];
        for t in &self.obj {
            self.gather(t, x, &mut local);
            t.f.eval_f64(&local, &mut out);
            total += out[0];
        }
        total
    }

    /// Gradient of the objective, accumulated into `grad` (zeroed here).
    pub fn objective_grad(&self, x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        let mut local = Vec::new();
        for t in &self.obj {
            self.gather(t, x, &mut local);
            let k = t.vars.len();
            let mut xd: Vec<Dual1> = local.iter().map(|&v| Dual1::constant(v)).collect();
            let mut out = [Dual1::constant(0.0)];
            for base in (0..k).step_by(TANGENT_WIDTH) {
                let width = TANGENT_WIDTH.min(k - base);
                for i in 0..width {
                    xd[base + i] = Dual1::seeded(local[base + i], i);
                }
                out[0] = Dual1::constant(0.0);
                t.f.eval_dual(&xd, &mut out);
                for i in 0..width {
                    grad[t.vars[base + i]] += out[0].dt[i];
                    xd[base + i] = Dual1::constant(local[base + i]);
                }
            }
        }
    }

    fn eval_terms(&self, terms: &[Term], x: &[f64], out: &mut [f64]) {
        let mut local = Vec::new();
        let mut res = Vec::new();
        for t in terms {
            self.gather(t, x, &mut local);
            res.resize(t.n_out, 0.0);
            t.f.eval_f64(&local, &mut res);
            out[t.row0..t.row0 + t.n_out].copy_from_slice(&res);
        }
    }

    pub fn eval_eq(&self, x: &[f64], out: &mut [f64]) {
        self.eval_terms(&self.eq, x, out)
    }
    pub fn eval_ineq(&self, x: &[f64], out: &mut [f64]) {
        self.eval_terms(&self.ineq, x, out)
    }

    fn jac_values(&self, terms: &[Term], x: &[f64], vals: &mut [f64]) {
        let mut local = Vec::new();
        let mut cursor = 0;
        for t in terms {
            self.gather(t, x, &mut local);
            let k = t.vars.len();
            let m = t.n_out;
            let mut xd: Vec<Dual1> = local.iter().map(|&v| Dual1::constant(v)).collect();
            let mut out = vec![Dual1::constant(0.0); m];
            for base in (0..k).step_by(TANGENT_WIDTH) {
                let width = TANGENT_WIDTH.min(k - base);
                for i in 0..width {
                    xd[base + i] = Dual1::seeded(local[base + i], i);
                }
                for o in out.iter_mut() {
                    *o = Dual1::constant(0.0);
                }
                t.f.eval_dual(&xd, &mut out);
                for r in 0..m {
                    for i in 0..width {
                        vals[cursor + r * k + base + i] = out[r].dt[i];
                    }
                }
                for i in 0..width {
                    xd[base + i] = Dual1::constant(local[base + i]);
                }
            }
            cursor += m * k;
        }
        debug_assert_eq!(cursor, vals.len());
    }

    /// Equality Jacobian values in the order of [`eq_jac_pattern`].
    pub fn eq_jac_values(&self, x: &[f64], vals: &mut [f64]) {
        self.jac_values(&self.eq, x, vals)
    }
    pub fn ineq_jac_values(&self, x: &[f64], vals: &mut [f64]) {
        self.jac_values(&self.ineq, x, vals)
    }

    fn hessian_index(&self) -> &HessianIndex {
        self.hess.get_or_init(|| {
            let mut entries: Vec<(usize, usize)> = Vec::new();
            let all = self.obj.iter().chain(&self.eq).chain(&self.ineq);
            for t in all.clone() {
                if t.linear {
                    continue;
                }
                for (i, &vi) in t.vars.iter().enumerate() {
                    for &vj in &t.vars[..=i] {
                        entries.push((vi.max(vj), vi.min(vj)));
                    }
                }
            }
            entries.sort_unstable();
            entries.dedup();
            let slot_of = |key: (usize, usize)| entries.binary_search(&key).unwrap();
            let mut slots = Vec::new();
            for t in all {
                if t.linear {
                    slots.push(Vec::new());
                    continue;
                }
                let k = t.vars.len();
                let mut s = vec![usize::MAX; k * k];
                for i in 0..k {
                    for j in 0..=i {
                        let vi = t.vars[i];
                        let vj = t.vars[j];
                        s[i * k + j] = slot_of((vi.max(vj), vi.min(vj)));
                    }
                }
                slots.push(s);
            }
            HessianIndex { entries, slots }
        })
    }

    /// Deduplicated lower-triangle sparsity of the Lagrangian Hessian.
    pub fn hess_pattern(&self) -> &[(usize, usize)] {
        &self.hessian_index().entries
    }

    /// Values of `sigma grad^2 f + sum lam_eq_r grad^2 c_E,r - sum
    /// lam_ineq_r grad^2 c_I,r`, accumulated into `vals` (zeroed here)
    /// in the order of [`hess_pattern`]. Exact, forward-over-forward.
    pub fn lag_hessian_values(
        &self,
        x: &[f64],
        sigma: f64,
        lam_eq: &[f64],
        lam_ineq: &[f64],
        vals: &mut [f64],
    ) -> Result<(), NlpError> {
        let index = self.hessian_index();
        vals.fill(0.0);
        let mut local = Vec::new();
        let mut weights = Vec::new();
        let groups: [(&[Term], f64, Option<&[f64]>); 3] = [
            (&self.obj, sigma, None),
            (&self.eq, 1.0, Some(lam_eq)),
            (&self.ineq, -1.0, Some(lam_ineq)),
        ];
        let mut term_idx = 0;
        for (terms, scale, mults) in groups {
            for t in terms.iter() {
                let slots = &index.slots[term_idx];
                term_idx += 1;
                if t.linear {
                    continue;
                }
                weights.clear();
                match mults {
                    None => weights.push(scale),
                    Some(m) => {
                        weights.extend(m[t.row0..t.row0 + t.n_out].iter().map(|&w| scale * w))
                    }
                }
                if weights.iter().all(|&w| w == 0.0) {
                    continue;
                }
                self.gather(t, x, &mut local);
                let k = t.vars.len();
                let dense = autodiff::hessian_weighted_with(&local, &weights, &mut |xd, out| {
                    t.f.eval_dual2(xd, out)
                })?;
                for i in 0..k {
                    for j in 0..=i {
                        vals[slots[i * k + j]] += dense[i * k + j];
                    }
                }
            }
        }
        Ok(())
    }

    /// Recompute the scaled KKT residuals at an arbitrary primal-dual
    /// point; this is the same quantity the solver reports and uses for
    /// termination.
    ///
    /// Scaling follows the usual interior-point practice: stationarity
    /// and complementarity are divided by `s_d = max(100, avg multiplier
    /// magnitude) / 100`, primal feasibility is unscaled.
    pub fn kkt_residuals(&self, w: &[f64], m: &Multipliers) -> KktResiduals {
        let n = self.n;
        let mut grad = vec![0.0; n];
        self.objective_grad(w, &mut grad);
        let mut stat = grad;

        let mut jac = vec![0.0; self.eq_jac.len()];
        self.eq_jac_values(w, &mut jac);
        for (&(r, c), &v) in self.eq_jac.iter().zip(&jac) {
            stat[c] += m.eq[r] * v;
        }
        let mut jac_i = vec![0.0; self.ineq_jac.len()];
        self.ineq_jac_values(w, &mut jac_i);
        for (&(r, c), &v) in self.ineq_jac.iter().zip(&jac_i) {
            stat[c] -= m.ineq[r] * v;
        }
        let mut mult_sum = 0.0;
        let mut mult_count = 0usize;
        for i in 0..n {
            stat[i] -= m.z_lower[i];
            stat[i] += m.z_upper[i];
        }
        for v in m.eq.iter().chain(&m.ineq).chain(&m.z_lower).chain(&m.z_upper) {
            mult_sum += v.abs();
            mult_count += 1;
        }
        let s_d = if mult_count == 0 {
            1.0
        } else {
            (mult_sum / mult_count as f64).max(100.0) / 100.0
        };
        let stationarity = stat.iter().fold(0.0f64, |a, &v| a.max(v.abs())) / s_d;

        let mut c_eq = vec![0.0; self.m_eq];
        self.eval_eq(w, &mut c_eq);
        let mut c_ineq = vec![0.0; self.m_ineq];
        self.eval_ineq(w, &mut c_ineq);
        let mut primal = c_eq.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        for &v in &c_ineq {
            primal = primal.max((-v).max(0.0));
        }
        for i in 0..n {
            primal = primal.max(self.lower[i] - w[i]).max(w[i] - self.upper[i]);
        }

        let mut comp = 0.0f64;
        for (r, &v) in c_ineq.iter().enumerate() {
            comp = comp.max((m.ineq[r] * v).abs());
        }
        for i in 0..n {
            if self.lower[i].is_finite() {
                comp = comp.max((m.z_lower[i] * (w[i] - self.lower[i])).abs());
            }
            if self.upper[i].is_finite() {
                comp = comp.max((m.z_upper[i] * (w[i] - self.upper[i])).abs());
            }
        }
        KktResiduals { stationarity, primal, complementarity: comp / s_d }
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{DiffFn, Scalar};

    struct Quadratic;
    impl DiffFn for Quadratic {
        fn n_in(&self) -> usize {
            2
        }
        fn n_out(&self) -> usize {
            1
        }
        fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
            out[0] = x[0] * x[0] + x[1] * x[1];
        }
    }

    struct SumMinusOne;
    impl DiffFn for SumMinusOne {
        fn n_in(&self) -> usize {
            2
        }
        fn n_out(&self) -> usize {
            1
        }
        fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
            out[0] = x[0] + x[1] - 1.0;
        }
    }

    struct Rosenbrock;
    impl DiffFn for Rosenbrock {
        fn n_in(&self) -> usize {
            2
        }
        fn n_out(&self) -> usize {
            1
        }
        fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
            let a = -x[0] + 1.0;
            let b = x[1] - x[0] * x[0];
            out[0] = a * a + b * b * 100.0;
        }
    }

    struct ShiftedSquare {
        center: f64,
    }
    impl DiffFn for ShiftedSquare {
        fn n_in(&self) -> usize {
            1
        }
        fn n_out(&self) -> usize {
            1
        }
        fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
            let d = x[0] - self.center;
            out[0] = d * d;
        }
    }

    fn constrained_quadratic() -> NlpProblem {
        let mut p = NlpProblem::new(2);
        p.add_objective(vec![0, 1], Quadratic).unwrap();
        p.add_eq_linear(vec![0, 1], SumMinusOne).unwrap();
        p
    }

    #[test]
    fn unconstrained_scalar_minimum() {
        let mut p = NlpProblem::new(1);
        p.add_objective(vec![0], ShiftedSquare { center: 3.0 }).unwrap();
        let r = solve(&p, &[0.0], &SolverOptions::default());
        assert_eq!(r.status, SolveStatus::Converged);
        assert!((r.w_star[0] - 3.0).abs() < 1e-6, "w = {}", r.w_star[0]);
    }

    #[test]
    fn equality_constrained_quadratic_with_multiplier() {
        let p = constrained_quadratic();
        let r = solve(&p, &[5.0, -3.0], &SolverOptions::default());
        assert_eq!(r.status, SolveStatus::Converged);
        assert!((r.w_star[0] - 0.5).abs() < 1e-7);
        assert!((r.w_star[1] - 0.5).abs() < 1e-7);
        // grad f + lam J' = 0 at (0.5, 0.5): (1, 1) + lam (1, 1) => lam = -1.
        assert!((r.multipliers.eq[0] + 1.0).abs() < 1e-6, "lam = {}", r.multipliers.eq[0]);
        assert!(r.residuals.max() <= 1e-6);
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        let mut p = NlpProblem::new(2);
        p.add_objective(vec![0, 1], Rosenbrock).unwrap();
        let r = solve(&p, &[-1.2, 1.0], &SolverOptions::default());
        assert_eq!(r.status, SolveStatus::Converged);
        assert!((r.w_star[0] - 1.0).abs() < 1e-6);
        assert!((r.w_star[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock_quasi_newton() {
        let mut p = NlpProblem::new(2);
        p.add_objective(vec![0, 1], Rosenbrock).unwrap();
        let opts = SolverOptions { hessian_mode: HessianMode::QuasiNewton, ..Default::default() };
        let r = solve(&p, &[-1.2, 1.0], &opts);
        assert_eq!(r.status, SolveStatus::Converged);
        assert!((r.w_star[0] - 1.0).abs() < 1e-5);
        assert!((r.w_star[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn bounds_and_inequalities() {
        // min (x-3)^2 s.t. 1 - x >= 0, x in [-5, 5].
        struct OneMinus;
        impl DiffFn for OneMinus {
            fn n_in(&self) -> usize {
                1
            }
            fn n_out(&self) -> usize {
                1
            }
            fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
                out[0] = -x[0] + 1.0;
            }
        }
        let mut p = NlpProblem::new(1);
        p.add_objective(vec![0], ShiftedSquare { center: 3.0 }).unwrap();
        p.add_ineq_linear(vec![0], OneMinus).unwrap();
        p.set_bounds(0, -5.0, 5.0).unwrap();
        let r = solve(&p, &[-4.0], &SolverOptions::default());
        assert_eq!(r.status, SolveStatus::Converged);
        assert!((r.w_star[0] - 1.0).abs() < 1e-6, "w = {}", r.w_star[0]);
        // Stationarity at x = 1: 2(x - 3) - nu (-1) = 0 => nu = 4.
        assert!((r.multipliers.ineq[0] - 4.0).abs() < 1e-4, "nu = {}", r.multipliers.ineq[0]);
    }

    #[test]
    fn kkt_residuals_at_known_points() {
        let p = constrained_quadratic();
        let m = Multipliers {
            eq: vec![-1.0],
            ineq: vec![],
            z_lower: vec![0.0, 0.0],
            z_upper: vec![0.0, 0.0],
        };
        let r = p.kkt_residuals(&[0.5, 0.5], &m);
        assert!(r.stationarity <= 1e-10);
        assert!(r.primal <= 1e-10);
        assert!(r.complementarity <= 1e-10);

        // Feasible but non-stationary point.
        let r2 = p.kkt_residuals(&[1.0, 0.0], &m);
        assert!(r2.primal <= 1e-12);
        assert!(r2.stationarity > 0.1);
    }

    #[test]
    fn kkt_residuals_match_hand_assembly_on_rosenbrock() {
        let mut p = NlpProblem::new(2);
        p.add_objective(vec![0, 1], Rosenbrock).unwrap();
        let w = [0.7, -0.4];
        let m =
            Multipliers { eq: vec![], ineq: vec![], z_lower: vec![0.0; 2], z_upper: vec![0.0; 2] };
        let r = p.kkt_residuals(&w, &m);
        let g0 = -2.0 * (1.0 - w[0]) - 400.0 * w[0] * (w[1] - w[0] * w[0]);
        let g1 = 200.0 * (w[1] - w[0] * w[0]);
        let expected = g0.abs().max(g1.abs());
        assert!((r.stationarity - expected).abs() <= 1e-12 * expected);
        assert_eq!(r.primal, 0.0);
        assert_eq!(r.complementarity, 0.0);
    }

    #[test]
    fn reported_residuals_match_recomputation() {
        let p = constrained_quadratic();
        let r = solve(&p, &[5.0, -3.0], &SolverOptions::default());
        let again = p.kkt_residuals(&r.w_star, &r.multipliers);
        assert!((again.stationarity - r.residuals.stationarity).abs() <= 1e-10);
        assert!((again.primal - r.residuals.primal).abs() <= 1e-10);
        assert!((again.complementarity - r.residuals.complementarity).abs() <= 1e-10);
    }

    #[test]
    fn warm_start_converges_in_few_iterations() {
        let cases: Vec<(NlpProblem, Vec<f64>)> = vec![
            (constrained_quadratic(), vec![5.0, -3.0]),
            (
                {
                    let mut p = NlpProblem::new(2);
                    p.add_objective(vec![0, 1], Rosenbrock).unwrap();
                    p
                },
                vec![-1.2, 1.0],
            ),
            (
                {
                    let mut p = NlpProblem::new(1);
                    p.add_objective(vec![0], ShiftedSquare { center: 0.3 }).unwrap();
                    p.set_bounds(0, 0.0, 1.0).unwrap();
                    p
                },
                vec![0.9],
            ),
        ];
        for (p, w0) in cases {
            let first = solve(&p, &w0, &SolverOptions::default());
            assert_eq!(first.status, SolveStatus::Converged);
            let second = solve(&p, &first.w_star, &SolverOptions::default());
            assert_eq!(second.status, SolveStatus::Converged);
            assert!(second.iterations <= 3, "warm re-solve took {} iterations", second.iterations);
        }
    }

    #[test]
    fn infeasible_problem_is_detected() {
        // x >= 1 and x <= -1 simultaneously.
        struct Low;
        impl DiffFn for Low {
            fn n_in(&self) -> usize {
                1
            }
            fn n_out(&self) -> usize {
                1
            }
            fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
                out[0] = x[0] - 1.0;
            }
        }
        struct High;
        impl DiffFn for High {
            fn n_in(&self) -> usize {
                1
            }
            fn n_out(&self) -> usize {
                1
            }
            fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
                out[0] = -x[0] - 1.0;
            }
        }
        let mut p = NlpProblem::new(1);
        p.add_objective(vec![0], ShiftedSquare { center: 0.0 }).unwrap();
        p.add_ineq_linear(vec![0], Low).unwrap();
        p.add_ineq_linear(vec![0], High).unwrap();
        let r = solve(&p, &[0.0], &SolverOptions::default());
        assert_eq!(r.status, SolveStatus::InfeasibleDetected);
    }

    #[test]
    fn iteration_log_is_written_and_merit_monotone_within_mu() {
        let dir = std::env::temp_dir().join("ccmpc_nlp_log_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("iters.csv");
        let mut p = NlpProblem::new(2);
        p.add_objective(vec![0, 1], Quadratic).unwrap();
        p.add_eq_linear(vec![0, 1], SumMinusOne).unwrap();
        p.set_bounds(0, -2.0, 2.0).unwrap();
        p.set_bounds(1, -2.0, 2.0).unwrap();
        let opts = SolverOptions { iter_log_csv: Some(path.clone()), ..Default::default() };
        let r = solve(&p, &[1.8, -1.8], &opts);
        assert_eq!(r.status, SolveStatus::Converged);

        let text = std::fs::read_to_string(&path).unwrap();
        let mut rows: Vec<(f64, f64, f64)> = Vec::new(); // (mu, pi, merit)
        for line in text.lines().skip(1) {
            let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
            rows.push((f[1], f[2], f[3]));
        }
        assert!(rows.len() >= 2);
        for w in rows.windows(2) {
            let ((mu0, pi0, m0), (mu1, pi1, m1)) = (w[0], w[1]);
            if mu0 == mu1 && pi0 == pi1 {
                assert!(m1 <= m0 + 1e-8 * (1.0 + m0.abs()), "merit rose within one barrier stage: {m0} -> {m1}");
            }
        }
    }

    #[test]
    fn objective_scaling_leaves_argmin_unchanged() {
        struct Scaled;
        impl DiffFn for Scaled {
            fn n_in(&self) -> usize {
                2
            }
            fn n_out(&self) -> usize {
                1
            }
            fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
                out[0] = (x[0] * x[0] + x[1] * x[1]) * 1e6;
            }
        }
        let mut p = NlpProblem::new(2);
        p.add_objective(vec![0, 1], Scaled).unwrap();
        p.add_eq_linear(vec![0, 1], SumMinusOne).unwrap();
        let r = solve(&p, &[4.0, 4.0], &SolverOptions::default());
        assert_eq!(r.status, SolveStatus::Converged);
        assert!((r.w_star[0] - 0.5).abs() < 1e-6);
        assert!((r.w_star[1] - 0.5).abs() < 1e-6);
        // Multipliers scale with the objective.
        assert!((r.multipliers.eq[0] + 1e6).abs() < 1.0);
    }
}

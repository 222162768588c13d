//! Primal-dual interior-point method.
//!
//! Inequalities get slacks (`c_I(w) - s = 0`, `s > 0`) and bounds get
//! their own dual pair; both are folded into the condensed symmetric
//! system on `(dw, dlam)`:
//!
//! ```text
//! [ H + Sigma + J_I' (V/S) J_I   J_E' ] [ dw   ]   [ b_w ]
//! [ J_E                          -d_c ] [ dlam ] = [ -c_E ]
//! ```
//!
//! factored banded after RCM reordering, with the regularization `d_w I`
//! doubled from `reg_min` until the inertia is `(n, m_E, 0)`. Steps obey
//! a fraction-to-boundary rule and a backtracking Armijo search on the
//! l1 exact-penalty merit function; the barrier parameter follows a
//! monotone Fiacco-McCormick schedule. When the search stalls, a
//! feasibility-restoration heuristic (iteratively reweighted smoothed-l1
//! Gauss-Newton on the constraint violation) either re-centers the
//! iterate or declares the problem locally infeasible.

use super::band::{BandSystem, FactorError, Inertia};
use super::{
    HessianMode, KktResiduals, Multipliers, NlpProblem, SolveStatus, SolverOptions, SolverResult,
};
use std::time::Instant;

const KAPPA_EPS: f64 = 10.0;
const ARMIJO_C1: f64 = 1e-4;
const STALL_STEP: f64 = 1e-14;
const LAMBDA_INIT_MAX: f64 = 1e3;

struct IneqRow {
    /// (variable, slot into the Jacobian value vector) pairs of this row.
    support: Vec<(usize, usize)>,
}

pub(super) struct Workspace<'p> {
    p: &'p NlpProblem,
    n: usize,
    m_e: usize,
    m_i: usize,
    lb: Vec<f64>,
    ub: Vec<f64>,
    fin_lb: Vec<usize>,
    fin_ub: Vec<usize>,
    ineq_rows: Vec<IneqRow>,
    band: BandSystem,
    /// Objective scaling applied internally (IPOPT-style gradient cap).
    s_f: f64,
    // Iterates.
    w: Vec<f64>,
    s: Vec<f64>,
    lam: Vec<f64>,
    nu: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
    // Current evaluations (raw, unscaled objective).
    f: f64,
    grad: Vec<f64>,
    c_e: Vec<f64>,
    c_i: Vec<f64>,
    je: Vec<f64>,
    ji: Vec<f64>,
    hess: Vec<f64>,
    /// Dense quasi-Newton approximation (QN mode only).
    bfgs: Vec<f64>,
}

pub(super) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}

impl<'p> Workspace<'p> {
    fn new(p: &'p NlpProblem, hessian_mode: HessianMode) -> Self {
        let n = p.n();
        let m_e = p.m_eq();
        let m_i = p.m_ineq();
        // Zero-width bounds are widened a hair so the barrier stays defined;
        // genuinely fixed variables belong in equality constraints.
        let mut lb = p.lower().to_vec();
        let mut ub = p.upper().to_vec();
        for i in 0..n {
            if lb[i] == ub[i] {
                let eps = 1e-9 * lb[i].abs().max(1.0);
                lb[i] -= eps;
                ub[i] += eps;
            }
        }
        let fin_lb = (0..n).filter(|&i| lb[i].is_finite()).collect();
        let fin_ub = (0..n).filter(|&i| ub[i].is_finite()).collect();

        let mut ineq_rows: Vec<IneqRow> = (0..m_i).map(|_| IneqRow { support: Vec::new() }).collect();
        for (slot, &(r, c)) in p.ineq_jac_pattern().iter().enumerate() {
            ineq_rows[r].support.push((c, slot));
        }

        let dim = n + m_e;
        let mut edges: Vec<(usize, usize)> = Vec::new();
        match hessian_mode {
            HessianMode::Exact => edges.extend(p.hess_pattern().iter().copied()),
            HessianMode::QuasiNewton => {
                for i in 0..n {
                    for j in 0..i {
                        edges.push((i, j));
                    }
                }
            }
        }
        for row in &ineq_rows {
            for (a, &(va, _)) in row.support.iter().enumerate() {
                for &(vb, _) in &row.support[..=a] {
                    edges.push((va.max(vb), va.min(vb)));
                }
            }
        }
        for &(r, c) in p.eq_jac_pattern() {
            edges.push((n + r, c));
        }
        let band = BandSystem::new(dim, edges.into_iter());

        Self {
            p,
            n,
            m_e,
            m_i,
            lb,
            ub,
            fin_lb,
            fin_ub,
            ineq_rows,
            band,
            s_f: 1.0,
            w: vec![0.0; n],
            s: vec![0.0; m_i],
            lam: vec![0.0; m_e],
            nu: vec![0.0; m_i],
            zl: vec![0.0; n],
            zu: vec![0.0; n],
            f: 0.0,
            grad: vec![0.0; n],
            c_e: vec![0.0; m_e],
            c_i: vec![0.0; m_i],
            je: vec![0.0; p.eq_jac_pattern().len()],
            ji: vec![0.0; p.ineq_jac_pattern().len()],
            hess: match hessian_mode {
                HessianMode::Exact => vec![0.0; p.hess_pattern().len()],
                HessianMode::QuasiNewton => Vec::new(),
            },
            bfgs: match hessian_mode {
                HessianMode::Exact => Vec::new(),
                HessianMode::QuasiNewton => {
                    let mut b = vec![0.0; n * n];
                    for i in 0..n {
                        b[i * n + i] = 1.0;
                    }
                    b
                }
            },
        }
    }

    fn evaluate(&mut self) {
        self.f = self.p.objective(&self.w);
        self.p.objective_grad(&self.w, &mut self.grad);
        self.p.eval_eq(&self.w, &mut self.c_e);
        self.p.eval_ineq(&self.w, &mut self.c_i);
        self.p.eq_jac_values(&self.w, &mut self.je);
        self.p.ineq_jac_values(&self.w, &mut self.ji);
    }

    /// Reported-form multipliers (original, unscaled objective).
    fn reported_multipliers(&self) -> Multipliers {
        let inv = 1.0 / self.s_f;
        Multipliers {
            eq: self.lam.iter().map(|v| v * inv).collect(),
            ineq: self.nu.iter().map(|v| v * inv).collect(),
            z_lower: self.zl.iter().map(|v| v * inv).collect(),
            z_upper: self.zu.iter().map(|v| v * inv).collect(),
        }
    }

    /// Gradient of the (internally scaled) Lagrangian w.r.t. `w`,
    /// excluding bound duals.
    fn lagrangian_grad(&self, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.grad.iter().map(|g| g * self.s_f));
        for (&(r, c), &v) in self.p.eq_jac_pattern().iter().zip(&self.je) {
            out[c] += self.lam[r] * v;
        }
        for (&(r, c), &v) in self.p.ineq_jac_pattern().iter().zip(&self.ji) {
            out[c] -= self.nu[r] * v;
        }
    }

    /// Barrier-KKT error at the current iterate for barrier `mu`,
    /// in the internally scaled problem.
    fn barrier_error(&self, mu: f64) -> f64 {
        let mut r_d = Vec::new();
        self.lagrangian_grad(&mut r_d);
        for &i in &self.fin_lb {
            r_d[i] -= self.zl[i];
        }
        for &i in &self.fin_ub {
            r_d[i] += self.zu[i];
        }
        let mut err = inf_norm(&r_d).max(inf_norm(&self.c_e));
        for r in 0..self.m_i {
            err = err.max((self.c_i[r] - self.s[r]).abs());
            err = err.max((self.s[r] * self.nu[r] - mu).abs());
        }
        for &i in &self.fin_lb {
            err = err.max(((self.w[i] - self.lb[i]) * self.zl[i] - mu).abs());
        }
        for &i in &self.fin_ub {
            err = err.max(((self.ub[i] - self.w[i]) * self.zu[i] - mu).abs());
        }
        err
    }

    /// Merit function of the barrier problem with l1 penalty `pi`.
    fn merit(&self, w: &[f64], s: &[f64], f: f64, c_e: &[f64], c_i: &[f64], mu: f64, pi: f64) -> f64 {
        let mut phi = self.s_f * f;
        for (r, &sv) in s.iter().enumerate() {
            phi -= mu * sv.ln();
            phi += pi * (c_i[r] - sv).abs();
        }
        for &i in &self.fin_lb {
            phi -= mu * (w[i] - self.lb[i]).ln();
        }
        for &i in &self.fin_ub {
            phi -= mu * (self.ub[i] - w[i]).ln();
        }
        for &v in c_e {
            phi += pi * v.abs();
        }
        phi
    }

    fn assemble_and_factor(
        &mut self,
        mu: f64,
        opts: &SolverOptions,
    ) -> Result<(f64, f64), SolveStatus> {
        let n = self.n;
        self.band.clear();
        match opts.hessian_mode {
            HessianMode::Exact => {
                if self.p.lag_hessian_values(&self.w, self.s_f, &self.lam, &self.nu, &mut self.hess).is_err() {
                    return Err(SolveStatus::NumericalFailure);
                }
                for (&(i, j), &v) in self.p.hess_pattern().iter().zip(&self.hess) {
                    self.band.add(i, j, v);
                }
            }
            HessianMode::QuasiNewton => {
                for i in 0..n {
                    for j in 0..=i {
                        let v = self.bfgs[i * n + j];
                        if v != 0.0 {
                            self.band.add(i, j, v);
                        }
                    }
                }
            }
        }
        for &i in &self.fin_lb {
            self.band.add(i, i, self.zl[i] / (self.w[i] - self.lb[i]));
        }
        for &i in &self.fin_ub {
            self.band.add(i, i, self.zu[i] / (self.ub[i] - self.w[i]));
        }
        for (r, row) in self.ineq_rows.iter().enumerate() {
            let coef = self.nu[r] / self.s[r];
            for (a, &(va, sa)) in row.support.iter().enumerate() {
                for &(vb, sb) in &row.support[..=a] {
                    self.band.add(va, vb, coef * self.ji[sa] * self.ji[sb]);
                }
            }
        }
        for (&(r, c), &v) in self.p.eq_jac_pattern().iter().zip(&self.je) {
            self.band.add(n + r, c, v);
        }

        // Inertia correction: the primal shift doubles from reg_min until
        // the inertia is right; the dual shift makes the system strictly
        // quasidefinite, which the pivot-free factorization needs when
        // the reordering interleaves constraint rows early. It grows
        // alongside, and refinement absorbs the perturbation.
        let want = Inertia { pos: n, neg: self.m_e, zero: 0 };
        let mut delta_w = 0.0;
        let mut delta_c = 1e-9 * mu.sqrt().max(1e-4);
        let mut attempt = 0usize;
        loop {
            let shift = |p: usize| if p < n { delta_w } else { -delta_c };
            match self.band.factor_shifted(&shift) {
                Ok(inertia) if inertia == want => return Ok((delta_w, delta_c)),
                outcome => {
                    attempt += 1;
                    delta_w = if delta_w == 0.0 { opts.reg_min } else { delta_w * 10.0 };
                    delta_c = (delta_c * 10.0).min(1e-8);
                    if delta_w > opts.reg_max || attempt > 60 {
                        if std::env::var("CCMPC_IPM_TRACE").is_ok() {
                            eprintln!(
                                "inertia correction exhausted: want ({}, {}, 0), last outcome {outcome:?}",
                                n, self.m_e
                            );
                        }
                        return Err(SolveStatus::NumericalFailure);
                    }
                }
            }
        }
    }

    /// Assemble the right-hand side and solve for `(dw, dlam)`.
    fn newton_rhs_and_solve(&mut self, mu: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut b = vec![0.0; n + self.m_e];
        let mut r_d = Vec::new();
        self.lagrangian_grad(&mut r_d);
        for &i in &self.fin_lb {
            r_d[i] -= self.zl[i];
        }
        for &i in &self.fin_ub {
            r_d[i] += self.zu[i];
        }
        for i in 0..n {
            b[i] = -r_d[i];
        }
        for (r, row) in self.ineq_rows.iter().enumerate() {
            let r_snu = self.s[r] * self.nu[r] - mu;
            let r_i = self.c_i[r] - self.s[r];
            let coef = (r_snu + self.nu[r] * r_i) / self.s[r];
            for &(c, slot) in &row.support {
                b[c] -= self.ji[slot] * coef;
            }
        }
        for &i in &self.fin_lb {
            let d = self.w[i] - self.lb[i];
            b[i] -= (d * self.zl[i] - mu) / d;
        }
        for &i in &self.fin_ub {
            let d = self.ub[i] - self.w[i];
            b[i] += (d * self.zu[i] - mu) / d;
        }
        for r in 0..self.m_e {
            b[n + r] = -self.c_e[r];
        }
        let sol = self.band.solve(&b, true);
        (sol[..n].to_vec(), sol[n..].to_vec())
    }
}

struct LogRow {
    iter: usize,
    mu: f64,
    pi: f64,
    merit: f64,
    step: f64,
    res: KktResiduals,
}

fn write_log(path: &std::path::Path, rows: &[LogRow]) {
    let mut text = String::from("iter,mu,penalty,merit,step,stationarity,primal,complementarity\n");
    for r in rows {
        text.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
            r.iter, r.mu, r.pi, r.merit, r.step, r.res.stationarity, r.res.primal,
            r.res.complementarity
        ));
    }
    let _ = std::fs::write(path, text);
}

/// Solve the problem from the primal start `w0`.
pub fn solve(problem: &NlpProblem, w0: &[f64], options: &SolverOptions) -> SolverResult {
    let t0 = Instant::now();
    let mut ws = Workspace::new(problem, options.hessian_mode);
    let n = ws.n;
    assert_eq!(w0.len(), n, "w0 dimension mismatch");

    // Feasibility of the raw start decides how far to push it inside
    // the bounds: nearly feasible starts are treated as warm and barely
    // perturbed, cold starts get the usual centering push.
    let theta_raw = {
        let mut w_raw = vec![0.0; n];
        for i in 0..n {
            let v = if w0[i].is_finite() { w0[i] } else { 0.0 };
            w_raw[i] = v.clamp(ws.lb[i], ws.ub[i]);
        }
        let mut c_e = vec![0.0; ws.m_e];
        problem.eval_eq(&w_raw, &mut c_e);
        let mut c_i = vec![0.0; ws.m_i];
        problem.eval_ineq(&w_raw, &mut c_i);
        inf_norm(&c_e).max(c_i.iter().fold(0.0f64, |m, &v| m.max(-v)))
    };
    let warm = theta_raw <= 1e-5 * (1.0 + inf_norm(w0));
    let push = if warm { 1e-8 } else { 1e-2 };
    for i in 0..n {
        let (lo, hi) = (ws.lb[i], ws.ub[i]);
        let mut v = if w0[i].is_finite() { w0[i] } else { 0.0 };
        if lo.is_finite() {
            let m = if hi.is_finite() { push * (hi - lo).min(lo.abs().max(1.0)) } else { push * lo.abs().max(1.0) };
            v = v.max(lo + m);
        }
        if hi.is_finite() {
            let m = if lo.is_finite() { push * (hi - lo).min(hi.abs().max(1.0)) } else { push * hi.abs().max(1.0) };
            v = v.min(hi - m);
        }
        ws.w[i] = v;
    }

    ws.evaluate();
    let gnorm = inf_norm(&ws.grad);
    ws.s_f = if gnorm > 100.0 { 100.0 / gnorm } else { 1.0 };

    // Slacks from the initial constraint values: satisfied rows keep
    // their value (floored just off zero), violated rows start at a
    // small fraction of the violation. Flooring against an absolute
    // scale would fake infeasibility on small-magnitude rows.
    let slack_floor = if warm { 1e-9 } else { 1e-2 };
    for r in 0..ws.m_i {
        ws.s[r] = ws.c_i[r].max(slack_floor * ws.c_i[r].abs()).max(1e-8);
    }

    // Adaptive initial barrier: a nearly feasible start may begin close
    // to the end of the barrier trajectory. The floor is expressed in
    // the internal objective scale so that the reported (unscaled)
    // complementarity can actually reach the tolerance.
    let mu_min = options.kkt_tol * ws.s_f / 10.0;
    let theta0 = inf_norm(&ws.c_e)
        .max(ws.c_i.iter().zip(&ws.s).fold(0.0f64, |m, (&c, &s)| m.max((s - c).abs())));
    let mut mu = options.mu0.min((0.1 * theta0).max(10.0 * mu_min));
    if ws.m_i == 0 && ws.fin_lb.is_empty() && ws.fin_ub.is_empty() {
        mu = mu_min;
    }

    for r in 0..ws.m_i {
        ws.nu[r] = mu / ws.s[r];
    }
    for &i in &ws.fin_lb.clone() {
        ws.zl[i] = mu / (ws.w[i] - ws.lb[i]);
    }
    for &i in &ws.fin_ub.clone() {
        ws.zu[i] = mu / (ws.ub[i] - ws.w[i]);
    }

    // Least-squares equality multipliers via one KKT solve with H = I.
    if ws.m_e > 0 {
        ws.band.clear();
        for i in 0..n {
            ws.band.add(i, i, 1.0);
        }
        for (&(r, c), &v) in problem.eq_jac_pattern().iter().zip(&ws.je) {
            ws.band.add(n + r, c, v);
        }
        if ws.band.factor_shifted(&|p| if p < n { 0.0 } else { -1e-10 }).is_ok() {
            let mut b = vec![0.0; n + ws.m_e];
            let mut r_d = vec![0.0; n];
            for i in 0..n {
                r_d[i] = ws.s_f * ws.grad[i];
            }
            for (&(r, c), &v) in problem.ineq_jac_pattern().iter().zip(&ws.ji) {
                r_d[c] -= ws.nu[r] * v;
            }
            for &i in &ws.fin_lb.clone() {
                r_d[i] -= ws.zl[i];
            }
            for &i in &ws.fin_ub.clone() {
                r_d[i] += ws.zu[i];
            }
            for i in 0..n {
                b[i] = -r_d[i];
            }
            let sol = ws.band.solve(&b, false);
            let lam = &sol[n..];
            if inf_norm(lam) <= LAMBDA_INIT_MAX {
                ws.lam.copy_from_slice(lam);
            }
        }
    }

    let mut pi = 1.0;
    let mut log: Vec<LogRow> = Vec::new();
    let mut restorations = 0usize;
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    let mut small_steps = 0usize;

    // Quasi-Newton memory of the previous accepted point.
    let mut prev_lag_grad: Option<Vec<f64>> = None;
    let mut prev_w: Vec<f64> = Vec::new();

    'outer: for iter in 0..options.max_iter {
        iterations = iter;
        let reported = ws.reported_multipliers();
        let res = problem.kkt_residuals(&ws.w, &reported);
        if res.max() <= options.kkt_tol {
            status = SolveStatus::Converged;
            let merit = ws.merit(&ws.w, &ws.s, ws.f, &ws.c_e, &ws.c_i, mu, pi);
            log.push(LogRow { iter, mu, pi, merit, step: 0.0, res });
            break;
        }

        // Monotone barrier reduction once the current subproblem is solved.
        let mu_before = mu;
        while mu > mu_min && ws.barrier_error(mu) <= KAPPA_EPS * mu {
            mu = mu_min.max(mu * options.mu_shrink);
        }
        if mu < mu_before {
            // New barrier stage: the penalty parameter may relax back to
            // what the current duals justify.
            let dual_now = inf_norm(&ws.lam).max(inf_norm(&ws.nu));
            pi = pi.min((1.1 * dual_now).max(1.0));
        }

        let delta_w = match ws.assemble_and_factor(mu, options) {
            Ok((d, _)) => d,
            Err(_) => {
                // A factorization that cannot be regularized usually means
                // the multipliers have blown up chasing an infeasibility.
                match attempt_restoration(&mut ws, problem, &mut mu, options, &mut restorations) {
                    Ok(()) => {
                        prev_lag_grad = None;
                        pi = 1.0;
                        continue 'outer;
                    }
                    Err(st) => {
                        status = st;
                        break;
                    }
                }
            }
        };
        let (dw, dlam) = ws.newton_rhs_and_solve(mu);

        // Recover the eliminated directions.
        let mut ds = vec![0.0; ws.m_i];
        for (r, row) in ws.ineq_rows.iter().enumerate() {
            let mut jdw = 0.0;
            for &(c, slot) in &row.support {
                jdw += ws.ji[slot] * dw[c];
            }
            ds[r] = jdw + (ws.c_i[r] - ws.s[r]);
        }
        let mut dnu = vec![0.0; ws.m_i];
        for r in 0..ws.m_i {
            dnu[r] = -((ws.s[r] * ws.nu[r] - mu) + ws.nu[r] * ds[r]) / ws.s[r];
        }
        let mut dzl = vec![0.0; n];
        for &i in &ws.fin_lb {
            let d = ws.w[i] - ws.lb[i];
            dzl[i] = -((d * ws.zl[i] - mu) + ws.zl[i] * dw[i]) / d;
        }
        let mut dzu = vec![0.0; n];
        for &i in &ws.fin_ub {
            let d = ws.ub[i] - ws.w[i];
            dzu[i] = -((d * ws.zu[i] - mu) - ws.zu[i] * dw[i]) / d;
        }

        // Fraction-to-boundary limits.
        let tau = options.ftb_tau;
        let mut alpha_p: f64 = 1.0;
        for r in 0..ws.m_i {
            if ds[r] < 0.0 {
                alpha_p = alpha_p.min(tau * ws.s[r] / -ds[r]);
            }
        }
        for &i in &ws.fin_lb {
            if dw[i] < 0.0 {
                alpha_p = alpha_p.min(tau * (ws.w[i] - ws.lb[i]) / -dw[i]);
            }
        }
        for &i in &ws.fin_ub {
            if dw[i] > 0.0 {
                alpha_p = alpha_p.min(tau * (ws.ub[i] - ws.w[i]) / dw[i]);
            }
        }
        let mut alpha_d: f64 = 1.0;
        for r in 0..ws.m_i {
            if dnu[r] < 0.0 {
                alpha_d = alpha_d.min(tau * ws.nu[r] / -dnu[r]);
            }
        }
        for &i in &ws.fin_lb {
            if dzl[i] < 0.0 {
                alpha_d = alpha_d.min(tau * ws.zl[i] / -dzl[i]);
            }
        }
        for &i in &ws.fin_ub {
            if dzu[i] < 0.0 {
                alpha_d = alpha_d.min(tau * ws.zu[i] / -dzu[i]);
            }
        }

        // Exact-penalty parameter kept 10% above the dual estimate. The
        // step's multiplier estimate is clipped relative to the current
        // duals: a transient spike must not ratchet the penalty into a
        // merit function that sees nothing but constraint noise.
        let dual_now = inf_norm(&ws.lam).max(inf_norm(&ws.nu));
        let dual_step =
            dlam.iter().zip(&ws.lam).fold(0.0f64, |m, (&d, &l)| m.max((l + d).abs()));
        let dual_est = dual_now.max(dual_step.min(10.0 * dual_now + 100.0));
        pi = pi.max(1.1 * dual_est);

        let phi0 = ws.merit(&ws.w, &ws.s, ws.f, &ws.c_e, &ws.c_i, mu, pi);
        let mut dphi = ws.s_f * dot(&ws.grad, &dw);
        for r in 0..ws.m_i {
            dphi -= mu * ds[r] / ws.s[r];
        }
        for &i in &ws.fin_lb {
            dphi -= mu * dw[i] / (ws.w[i] - ws.lb[i]);
        }
        for &i in &ws.fin_ub {
            dphi += mu * dw[i] / (ws.ub[i] - ws.w[i]);
        }
        // Penalty slope from the linearized constraint change. The dual
        // regularization perturbs J_E dw away from -c_E, so the residual
        // after a full step is computed rather than assumed zero.
        let mut lin_eq = ws.c_e.clone();
        for (&(r, c), &v) in problem.eq_jac_pattern().iter().zip(&ws.je) {
            lin_eq[r] += v * dw[c];
        }
        for (r, &v) in ws.c_e.iter().enumerate() {
            dphi += pi * (lin_eq[r].abs() - v.abs());
        }
        for r in 0..ws.m_i {
            // c_I + J_I dw - s - ds = 0 holds by construction of ds.
            dphi -= pi * (ws.c_i[r] - ws.s[r]).abs();
        }
        let dphi_used = dphi.min(0.0);

        // Backtracking Armijo on the primal step. Directions at roundoff
        // scale cannot show a merit decrease and are accepted as is.
        let mut alpha = alpha_p;
        let mut accepted = false;
        let mut w_t = vec![0.0; n];
        let mut s_t = vec![0.0; ws.m_i];
        let mut f_t = 0.0;
        let mut ce_t = vec![0.0; ws.m_e];
        let mut ci_t = vec![0.0; ws.m_i];
        let step_scale = inf_norm(&dw).max(1e-30);
        let feas_now = inf_norm(&ws.c_e)
            .max(ws.c_i.iter().zip(&ws.s).fold(0.0f64, |m, (&c, &s)| m.max((c - s).abs())));
        // The search direction is "tiny" when the decrease it promises is
        // at merit roundoff scale, so Armijo cannot certify it.
        let tiny_direction = (step_scale <= 1e-11 * (1.0 + inf_norm(&ws.w))
            || ARMIJO_C1 * alpha_p * dphi_used.abs() <= 1e-13 * (1.0 + phi0.abs()))
            && feas_now <= 1e-4 * (1.0 + inf_norm(&ws.w));
        if tiny_direction {
            for i in 0..n {
                w_t[i] = ws.w[i] + alpha * dw[i];
            }
            for r in 0..ws.m_i {
                s_t[r] = ws.s[r] + alpha * ds[r];
            }
            f_t = problem.objective(&w_t);
            problem.eval_eq(&w_t, &mut ce_t);
            problem.eval_ineq(&w_t, &mut ci_t);
            let phi_t = ws.merit(&w_t, &s_t, f_t, &ce_t, &ci_t, mu, pi);
            // Descent is below roundoff here; a tolerant non-increase
            // keeps the merit discipline without rejecting the polish.
            accepted = phi_t.is_finite() && phi_t <= phi0 + 1e-10 * (1.0 + phi0.abs());
        }
        while !accepted && alpha * step_scale >= STALL_STEP {
            for i in 0..n {
                w_t[i] = ws.w[i] + alpha * dw[i];
            }
            for r in 0..ws.m_i {
                s_t[r] = ws.s[r] + alpha * ds[r];
            }
            f_t = problem.objective(&w_t);
            problem.eval_eq(&w_t, &mut ce_t);
            problem.eval_ineq(&w_t, &mut ci_t);
            let phi_t = ws.merit(&w_t, &s_t, f_t, &ce_t, &ci_t, mu, pi);
            if phi_t.is_finite() && phi_t <= phi0 + ARMIJO_C1 * alpha * dphi_used {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }

        if accepted && alpha < 1e-6 && !tiny_direction {
            small_steps += 1;
        } else if accepted {
            small_steps = 0;
        }
        if accepted && small_steps >= 8 {
            small_steps = 0;
            accepted = false; // grinding; re-center via restoration
        }
        if !accepted {
            if std::env::var("CCMPC_IPM_TRACE").is_ok() {
                eprintln!(
                    "stall at iter {iter}: mu={mu:.3e} pi={pi:.3e} phi0={phi0:.6e} dphi={dphi:.3e} alpha_p={alpha_p:.3e} |dw|={:.3e} delta_w={delta_w:.3e}",
                    inf_norm(&dw)
                );
                let mut r_d = Vec::new();
                ws.lagrangian_grad(&mut r_d);
                for &i in &ws.fin_lb {
                    r_d[i] -= ws.zl[i];
                }
                for &i in &ws.fin_ub {
                    r_d[i] += ws.zu[i];
                }
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| r_d[b].abs().partial_cmp(&r_d[a].abs()).unwrap());
                for &i in idx.iter().take(4) {
                    eprintln!(
                        "  var {i}: rd={:.3e} w={:.6e} lb={:.1e} ub={:.1e} zl={:.3e} zu={:.3e} dw={:.3e}",
                        r_d[i], ws.w[i], ws.lb[i], ws.ub[i], ws.zl[i], ws.zu[i], dw[i]
                    );
                }
            }
            match attempt_restoration(&mut ws, problem, &mut mu, options, &mut restorations) {
                Ok(()) => {
                    prev_lag_grad = None;
                    pi = 1.0;
                    continue 'outer;
                }
                Err(st) => {
                    status = st;
                    break;
                }
            }
        }

        // Quasi-Newton curvature pairs need the Lagrangian gradient at the
        // old point with the new multipliers; take it before the update.
        if options.hessian_mode == HessianMode::QuasiNewton {
            prev_w = ws.w.clone();
            let mut g_old = Vec::new();
            ws.lagrangian_grad(&mut g_old);
            // New multipliers applied to old Jacobians.
            for (&(r, c), &v) in problem.eq_jac_pattern().iter().zip(&ws.je) {
                g_old[c] += alpha * dlam[r] * v;
            }
            for (&(r, c), &v) in problem.ineq_jac_pattern().iter().zip(&ws.ji) {
                g_old[c] -= alpha_d * dnu[r] * v;
            }
            prev_lag_grad = Some(g_old);
        }

        // Accept.
        ws.w.copy_from_slice(&w_t);
        ws.s.copy_from_slice(&s_t);
        ws.f = f_t;
        ws.c_e.copy_from_slice(&ce_t);
        ws.c_i.copy_from_slice(&ci_t);
        // Equality multipliers advance with the dual step length: at a
        // rejected-primal grind, the multiplier estimate must still be
        // allowed to catch up or every subsequent direction stays stale.
        for r in 0..ws.m_e {
            ws.lam[r] += alpha_d * dlam[r];
        }
        for r in 0..ws.m_i {
            ws.nu[r] = (ws.nu[r] + alpha_d * dnu[r]).max(f64::MIN_POSITIVE);
        }
        for &i in &ws.fin_lb {
            ws.zl[i] += alpha_d * dzl[i];
        }
        for &i in &ws.fin_ub {
            ws.zu[i] += alpha_d * dzu[i];
        }
        // Keep the inequality and bound duals inside a wide envelope of
        // the barrier trajectory so they cannot run away from it.
        const KAPPA_SIGMA: f64 = 1e10;
        for r in 0..ws.m_i {
            let center = mu / ws.s[r];
            ws.nu[r] = ws.nu[r].clamp(center / KAPPA_SIGMA, center * KAPPA_SIGMA);
        }
        for &i in &ws.fin_lb {
            let center = mu / (ws.w[i] - ws.lb[i]);
            ws.zl[i] = ws.zl[i].clamp(center / KAPPA_SIGMA, center * KAPPA_SIGMA);
        }
        for &i in &ws.fin_ub {
            let center = mu / (ws.ub[i] - ws.w[i]);
            ws.zu[i] = ws.zu[i].clamp(center / KAPPA_SIGMA, center * KAPPA_SIGMA);
        }
        ws.p.objective_grad(&ws.w, &mut ws.grad);
        ws.p.eq_jac_values(&ws.w, &mut ws.je);
        ws.p.ineq_jac_values(&ws.w, &mut ws.ji);

        debug_assert!(ws.s.iter().all(|&v| v > 0.0), "slack left the interior");
        debug_assert!(ws.fin_lb.iter().all(|&i| ws.w[i] > ws.lb[i]), "iterate hit a lower bound");
        debug_assert!(ws.fin_ub.iter().all(|&i| ws.w[i] < ws.ub[i]), "iterate hit an upper bound");

        if options.hessian_mode == HessianMode::QuasiNewton {
            if let Some(g_old) = prev_lag_grad.take() {
                let mut g_new = Vec::new();
                ws.lagrangian_grad(&mut g_new);
                let sv: Vec<f64> = ws.w.iter().zip(&prev_w).map(|(a, b)| a - b).collect();
                let yv: Vec<f64> = g_new.iter().zip(&g_old).map(|(a, b)| a - b).collect();
                bfgs_update(&mut ws.bfgs, &sv, &yv);
            }
        }

        log.push(LogRow { iter, mu, pi, merit: phi0, step: alpha, res });
    }

    if status == SolveStatus::MaxIter {
        iterations = options.max_iter;
    }
    let reported = ws.reported_multipliers();
    let residuals = problem.kkt_residuals(&ws.w, &reported);
    if let Some(path) = &options.iter_log_csv {
        write_log(path, &log);
    }
    SolverResult {
        objective: problem.objective(&ws.w),
        w_star: ws.w,
        multipliers: reported,
        status,
        iterations,
        residuals,
        wall_s: t0.elapsed().as_secs_f64(),
    }
}

/// One-shot feasibility restoration: returns `Ok(())` when the iterate
/// was re-centered on a (nearly) feasible point and the main loop should
/// continue, or the terminal status otherwise.
fn attempt_restoration(
    ws: &mut Workspace,
    problem: &NlpProblem,
    mu: &mut f64,
    options: &SolverOptions,
    restorations: &mut usize,
) -> Result<(), SolveStatus> {
    if *restorations >= 2 {
        return Err(SolveStatus::NumericalFailure);
    }
    *restorations += 1;
    let (w_r, theta_l1) = restore_feasibility(problem, &ws.w, &ws.lb, &ws.ub);
    ws.w = w_r;
    let feas_tol = options.kkt_tol.max(1e-8);
    if theta_l1 > feas_tol * (1.0 + inf_norm(&ws.w)) {
        ws.evaluate();
        return Err(SolveStatus::InfeasibleDetected);
    }
    // Resume on a moderately centered barrier stage; continuing at a
    // nearly-final mu from a re-centered point stalls immediately again.
    *mu = mu.max(options.mu0 / 100.0);
    ws.evaluate();
    ws.lam.fill(0.0);
    for r in 0..ws.m_i {
        ws.s[r] = ws.c_i[r].max(1e-4);
        ws.nu[r] = *mu / ws.s[r];
    }
    for &i in &ws.fin_lb.clone() {
        ws.w[i] = ws.w[i].max(ws.lb[i] + 1e-8 * (ws.lb[i].abs().max(1.0)));
        ws.zl[i] = *mu / (ws.w[i] - ws.lb[i]);
    }
    for &i in &ws.fin_ub.clone() {
        ws.w[i] = ws.w[i].min(ws.ub[i] - 1e-8 * (ws.ub[i].abs().max(1.0)));
        ws.zu[i] = *mu / (ws.ub[i] - ws.w[i]);
    }
    ws.evaluate();
    Ok(())
}

/// Damped BFGS update (Powell damping) of the dense approximation `b`.
fn bfgs_update(b: &mut [f64], s: &[f64], y: &[f64]) {
    let n = s.len();
    let ss = dot(s, s);
    if ss < 1e-30 {
        return;
    }
    let mut bs = vec![0.0; n];
    for i in 0..n {
        bs[i] = (0..n).map(|j| b[i * n + j] * s[j]).sum();
    }
    let sbs = dot(s, &bs);
    let sy = dot(s, y);
    let y_eff: Vec<f64> = if sy < 0.2 * sbs {
        let theta = 0.8 * sbs / (sbs - sy);
        y.iter().zip(&bs).map(|(&yi, &bsi)| theta * yi + (1.0 - theta) * bsi).collect()
    } else {
        y.to_vec()
    };
    let sy_eff = dot(s, &y_eff);
    if sy_eff <= 1e-30 || sbs <= 1e-30 {
        return;
    }
    for i in 0..n {
        for j in 0..n {
            b[i * n + j] += y_eff[i] * y_eff[j] / sy_eff - bs[i] * bs[j] / sbs;
        }
    }
}

/// Outcome carried back from the feasibility-restoration heuristic.
pub type RestorationOutcome = (Vec<f64>, f64);

/// Public entry to the feasibility-restoration heuristic: minimize the
/// l1 constraint violation from `w0` within the variable box. Returns
/// the restored point and its remaining violation. Useful for polishing
/// structured but infeasible starting guesses before a solve.
pub fn restore(problem: &NlpProblem, w0: &[f64]) -> RestorationOutcome {
    restore_feasibility(problem, w0, problem.lower(), problem.upper())
}

/// Minimize the l1 constraint violation by iteratively reweighted
/// Gauss-Newton on the smoothed absolute value, staying inside the
/// variable box. Returns the final point and its true l1 violation.
fn restore_feasibility(p: &NlpProblem, w0: &[f64], lb: &[f64], ub: &[f64]) -> RestorationOutcome {
    let n = p.n();
    let m_e = p.m_eq();
    let m_i = p.m_ineq();
    let mut w = w0.to_vec();

    let mut rows: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m_e + m_i];
    for (slot, &(r, c)) in p.eq_jac_pattern().iter().enumerate() {
        rows[r].push((c, slot));
    }
    for (slot, &(r, c)) in p.ineq_jac_pattern().iter().enumerate() {
        rows[m_e + r].push((c, slot));
    }
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    for row in &rows {
        for (a, &(va, _)) in row.iter().enumerate() {
            for &(vb, _) in &row[..=a] {
                edges.push((va.max(vb), va.min(vb)));
            }
        }
    }
    let mut sys = BandSystem::new(n, edges.into_iter());

    let mut c_e = vec![0.0; m_e];
    let mut c_i = vec![0.0; m_i];
    let mut je = vec![0.0; p.eq_jac_pattern().len()];
    let mut ji = vec![0.0; p.ineq_jac_pattern().len()];

    let violation = |c_e: &[f64], c_i: &[f64]| -> Vec<f64> {
        let mut v = Vec::with_capacity(m_e + m_i);
        v.extend_from_slice(c_e);
        v.extend(c_i.iter().map(|&x| x.min(0.0)));
        v
    };
    let theta_smooth = |r: &[f64], eps: f64| -> f64 {
        r.iter().map(|&x| (x * x + eps * eps).sqrt() - eps).sum()
    };

    let mut gamma = 1e-4;
    for &eps in &[1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
        for _ in 0..20 {
            p.eval_eq(&w, &mut c_e);
            p.eval_ineq(&w, &mut c_i);
            p.eq_jac_values(&w, &mut je);
            p.ineq_jac_values(&w, &mut ji);
            let r = violation(&c_e, &c_i);
            let theta = theta_smooth(&r, eps);
            if theta < 1e-14 {
                break;
            }

            sys.clear();
            let mut rhs = vec![0.0; n];
            for i in 0..n {
                sys.add(i, i, gamma);
            }
            for (k, row) in rows.iter().enumerate() {
                // Inactive inequality rows carry no weight.
                if k >= m_e && c_i[k - m_e] > 0.0 {
                    continue;
                }
                let weight = 1.0 / (r[k] * r[k] + eps * eps).sqrt();
                let vals = if k < m_e { &je } else { &ji };
                for (a, &(va, sa)) in row.iter().enumerate() {
                    for &(vb, sb) in &row[..=a] {
                        sys.add(va, vb, weight * vals[sa] * vals[sb]);
                    }
                    rhs[va] -= weight * vals[sa] * r[k];
                }
            }
            if sys.factor_shifted(&|_| 0.0).is_err() {
                gamma *= 10.0;
                continue;
            }
            let step = sys.solve(&rhs, false);

            // Backtrack on the smoothed objective, staying in the box.
            let mut alpha = 1.0f64;
            let mut improved = false;
            while alpha > 1e-12 {
                let mut w_t = vec![0.0; n];
                for i in 0..n {
                    let margin = 1e-10 * (ub[i] - lb[i]).abs().min(1.0).max(1e-6);
                    w_t[i] = (w[i] + alpha * step[i])
                        .max(if lb[i].is_finite() { lb[i] + margin } else { f64::NEG_INFINITY })
                        .min(if ub[i].is_finite() { ub[i] - margin } else { f64::INFINITY });
                }
                let mut ce_t = vec![0.0; m_e];
                let mut ci_t = vec![0.0; m_i];
                p.eval_eq(&w_t, &mut ce_t);
                p.eval_ineq(&w_t, &mut ci_t);
                let theta_t = theta_smooth(&violation(&ce_t, &ci_t), eps);
                if theta_t < theta {
                    w = w_t;
                    improved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if improved {
                gamma = (gamma * 0.3).max(1e-10);
            } else {
                gamma *= 10.0;
                if gamma > 1e8 {
                    break;
                }
            }
        }
    }

    p.eval_eq(&w, &mut c_e);
    p.eval_ineq(&w, &mut c_i);
    let theta_l1: f64 =
        c_e.iter().map(|v| v.abs()).sum::<f64>() + c_i.iter().map(|v| (-v).max(0.0)).sum::<f64>();
    (w, theta_l1)
}

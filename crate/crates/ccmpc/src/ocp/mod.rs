//! Direct multiple-shooting transcription of the four controller
//! formulations into [`NlpProblem`] instances.
//!
//! Method identifiers:
//!
//! 1. baseline with input effort only (no efficiency term),
//! 2. baseline with the efficiency term, load confined to
//!    `[p_min, p_max]`,
//! 3. direct complementarity: per-GTG commitment variables `y` relax the
//!    load band to `[y p_min, y p_max]`, with the product `y (1 - y)`
//!    penalized in the cost,
//! 4. indirect (bang-bang): the equality `P = y p_max` ties power to the
//!    commitment, and the efficiency term is dropped entirely.
//!
//! All powers are nondimensionalized by 1e7 W and currents by 100 A
//! inside the NLP to condition the KKT system. States live on nodes
//! `0..=N`; node 0 is pinned to the measured state by an equality and
//! carries no bounds. Path constraints (power balance, load bands,
//! commitment coupling) attach to nodes `1..=N`: with the valve cascade,
//! node 1 is already determined by the measured state, and imposing the
//! balance there lets the turbines ramp within the first interval
//! instead of demanding an instantaneous match.

mod brute;
mod build;
mod commit;
mod warm;

pub use brute::{brute_force_commitment, schedule_completion_cost, Schedule};
pub use build::{build_ocp, default_start, OcpSpec};
pub use commit::{mean_complementarity, solve_ocp};
pub use warm::{applied_commitment, carry_commitment, extract_policy, warm_start_shift};

use crate::nlp::NlpError;
use crate::plant::ControlInput;
use thiserror::Error;

/// Watts per internal power unit.
pub const POWER_SCALE_W: f64 = 1e7;
/// Amperes per internal current unit.
pub const CURRENT_SCALE_A: f64 = 100.0;

#[derive(Debug, Error)]
pub enum OcpError {
    #[error("forecast length {got} != horizon steps {expected}")]
    ForecastLength { expected: usize, got: usize },
    #[error("initial state dimension {got} != 2J+1 = {expected}")]
    StateDim { expected: usize, got: usize },
    #[error(
        "infeasible by construction: cluster minimum load {sum_pmin_w:.3e} W exceeds the \
         maximum forecast demand {max_demand_w:.3e} W and this formulation cannot shut turbines down"
    )]
    InfeasibleDemand { sum_pmin_w: f64, max_demand_w: f64 },
    #[error("commitment enumeration limited to J <= 2 and n_steps <= 4, got J = {n_gtg}, n = {n_steps}")]
    ToyTooLarge { n_gtg: usize, n_steps: usize },
    #[error("solver did not converge (status {status:?}); best-iterate input attached")]
    SolverFailed { status: crate::nlp::SolveStatus, best: ControlInput },
    #[error(transparent)]
    Nlp(#[from] NlpError),
}

/// Prediction grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonGrid {
    pub dt_s: f64,
    pub n_steps: usize,
}

impl Default for HorizonGrid {
    fn default() -> Self {
        Self { dt_s: 150.0, n_steps: 120 }
    }
}

impl HorizonGrid {
    pub fn horizon_s(&self) -> f64 {
        self.dt_s * self.n_steps as f64
    }
}

/// The four controller formulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodId {
    /// 1: effort-only baseline.
    BaselineEffort,
    /// 2: efficiency-aware baseline.
    BaselineEfficiency,
    /// 3: direct complementarity commitment.
    DirectComplementarity,
    /// 4: indirect bang-bang commitment.
    IndirectBangBang,
}

impl MethodId {
    pub const ALL: [MethodId; 4] = [
        MethodId::BaselineEffort,
        MethodId::BaselineEfficiency,
        MethodId::DirectComplementarity,
        MethodId::IndirectBangBang,
    ];

    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            1 => Some(Self::BaselineEffort),
            2 => Some(Self::BaselineEfficiency),
            3 => Some(Self::DirectComplementarity),
            4 => Some(Self::IndirectBangBang),
            _ => None,
        }
    }

    pub fn index(&self) -> u8 {
        match self {
            Self::BaselineEffort => 1,
            Self::BaselineEfficiency => 2,
            Self::DirectComplementarity => 3,
            Self::IndirectBangBang => 4,
        }
    }

    /// Methods with per-GTG commitment variables.
    pub fn has_commitment(&self) -> bool {
        matches!(self, Self::DirectComplementarity | Self::IndirectBangBang)
    }

    /// Methods whose cost carries the efficiency term.
    pub fn uses_efficiency(&self) -> bool {
        matches!(self, Self::BaselineEfficiency | Self::DirectComplementarity)
    }
}

/// Controller tuning weights. All nonnegative; method 1 zeroes `k_gtg`
/// and methods 1-2 ignore `k_y`/`k_dy`.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpWeights {
    /// Per-GTG efficiency reward, largest turbine first.
    pub k_gtg: Vec<f64>,
    /// Input effort on each throttle.
    pub k_u_throttle: f64,
    /// Input effort on battery current (normalized by its range).
    pub k_u_current: f64,
    /// Complementarity penalty on `y (1 - y)`, per step.
    pub k_y: f64,
    /// Switching regularization on successive commitment differences.
    pub k_dy: f64,
    /// Penalty on the power-balance slack (soft-balance mode only).
    pub k_slack: f64,
    /// Optional terminal SOC reward; zero matches the printed costs.
    pub k_soc_terminal: f64,
}

impl OcpWeights {
    pub fn defaults(n_gtg: usize) -> Self {
        let k_gtg = if n_gtg == 3 {
            vec![100.0, 60.0, 30.0]
        } else {
            (0..n_gtg).map(|j| 100.0 * 0.6f64.powi(j as i32)).collect()
        };
        Self {
            k_gtg,
            k_u_throttle: 5.0,
            k_u_current: 8.0,
            k_y: 1.0e4,
            k_dy: 1.0e2,
            k_slack: 1.0e4,
            k_soc_terminal: 0.0,
        }
    }
}

/// Known exogenous signals over one horizon: wind speed, wind power and
/// demand per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub v_wind_mps: Vec<f64>,
    pub p_wtg_w: Vec<f64>,
    pub p_demand_w: Vec<f64>,
}

impl Forecast {
    pub fn len(&self) -> usize {
        self.p_demand_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_demand_w.is_empty()
    }
}

/// Commitment boundary data carried between receding-horizon solves:
/// the currently applied commitment anchors the first `y`, and the carry
/// value closes the final switching difference (zero on cold starts).
#[derive(Debug, Clone, PartialEq)]
pub struct CommitmentContext {
    pub applied_y: Vec<f64>,
    pub carry_y: Vec<f64>,
}

impl CommitmentContext {
    pub fn cold(n_gtg: usize) -> Self {
        Self { applied_y: vec![0.0; n_gtg], carry_y: vec![0.0; n_gtg] }
    }

    pub fn all_on(n_gtg: usize) -> Self {
        Self { applied_y: vec![1.0; n_gtg], carry_y: vec![1.0; n_gtg] }
    }
}

/// Variable orderings. Interleaved groups each stage's states, inputs
/// and commitments together, which is what keeps the KKT system banded;
/// blocked is the naive grouping, useful for layout-independence tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LayoutOrder {
    #[default]
    Interleaved,
    Blocked,
}

/// Index map of one transcription's decision vector.
#[derive(Debug, Clone)]
pub struct DecisionLayout {
    pub method: MethodId,
    pub order: LayoutOrder,
    pub n_gtg: usize,
    pub n_steps: usize,
    pub soft_balance: bool,
    /// State block width `2 J + 1`.
    pub nx: usize,
    /// Input block width `J + 1`.
    pub nu: usize,
    /// Commitment block width (`J` for methods 3-4, else 0).
    pub ny: usize,
    /// Slack block width (1 in soft-balance mode).
    pub ns: usize,
    pub n_var: usize,
}

impl DecisionLayout {
    pub fn new(
        method: MethodId,
        order: LayoutOrder,
        n_gtg: usize,
        n_steps: usize,
        soft_balance: bool,
    ) -> Self {
        let nx = 2 * n_gtg + 1;
        let nu = n_gtg + 1;
        let ny = if method.has_commitment() { n_gtg } else { 0 };
        let ns = usize::from(soft_balance);
        let n_var = (n_steps + 1) * nx + n_steps * (nu + ny + ns);
        Self { method, order, n_gtg, n_steps, soft_balance, nx, nu, ny, ns, n_var }
    }

    fn stage_stride(&self) -> usize {
        self.nx + self.nu + self.ny + self.ns
    }

    /// Offset of the state block at `node` (0..=n_steps).
    pub fn x(&self, node: usize) -> usize {
        debug_assert!(node <= self.n_steps);
        match self.order {
            LayoutOrder::Interleaved => node * self.stage_stride(),
            LayoutOrder::Blocked => node * self.nx,
        }
    }

    pub fn valve(&self, node: usize, j: usize) -> usize {
        self.x(node) + j
    }

    pub fn power(&self, node: usize, j: usize) -> usize {
        self.x(node) + self.n_gtg + j
    }

    pub fn soc(&self, node: usize) -> usize {
        self.x(node) + 2 * self.n_gtg
    }

    /// Offset of the input block at `step` (0..n_steps).
    pub fn u(&self, step: usize) -> usize {
        debug_assert!(step < self.n_steps);
        match self.order {
            LayoutOrder::Interleaved => step * self.stage_stride() + self.nx,
            LayoutOrder::Blocked => (self.n_steps + 1) * self.nx + step * self.nu,
        }
    }

    pub fn throttle(&self, step: usize, j: usize) -> usize {
        self.u(step) + j
    }

    pub fn current(&self, step: usize) -> usize {
        self.u(step) + self.n_gtg
    }

    /// Commitment variable for GTG `j`, associated with node `step + 1`.
    pub fn y(&self, step: usize, j: usize) -> Option<usize> {
        if self.ny == 0 {
            return None;
        }
        debug_assert!(step < self.n_steps && j < self.n_gtg);
        Some(match self.order {
            LayoutOrder::Interleaved => step * self.stage_stride() + self.nx + self.nu + j,
            LayoutOrder::Blocked => {
                (self.n_steps + 1) * self.nx + self.n_steps * self.nu + step * self.ny + j
            }
        })
    }

    pub fn slack(&self, step: usize) -> Option<usize> {
        if self.ns == 0 {
            return None;
        }
        Some(match self.order {
            LayoutOrder::Interleaved => {
                step * self.stage_stride() + self.nx + self.nu + self.ny
            }
            LayoutOrder::Blocked => {
                (self.n_steps + 1) * self.nx + self.n_steps * (self.nu + self.ny) + step
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variable_counts_match_layout_arithmetic() {
        // J = 3, N = 120: method 2 has 121*7 + 120*4 variables; method 4
        // adds 120*3 commitment variables.
        let m2 = DecisionLayout::new(MethodId::BaselineEfficiency, LayoutOrder::Interleaved, 3, 120, false);
        assert_eq!(m2.n_var, 121 * 7 + 120 * 4);
        assert_eq!(m2.n_var, 1327);
        let m4 = DecisionLayout::new(MethodId::IndirectBangBang, LayoutOrder::Interleaved, 3, 120, false);
        assert_eq!(m4.n_var, 1327 + 120 * 3);
        assert_eq!(m4.n_var, 1687);
    }

    #[test]
    fn blocks_are_disjoint_and_cover_everything() {
        for order in [LayoutOrder::Interleaved, LayoutOrder::Blocked] {
            for method in [MethodId::BaselineEffort, MethodId::IndirectBangBang] {
                let l = DecisionLayout::new(method, order, 2, 5, true);
                let mut seen = vec![false; l.n_var];
                let mut mark = |i: usize| {
                    assert!(!seen[i], "index {i} assigned twice");
                    seen[i] = true;
                };
                for node in 0..=l.n_steps {
                    for j in 0..l.n_gtg {
                        mark(l.valve(node, j));
                        mark(l.power(node, j));
                    }
                    mark(l.soc(node));
                }
                for step in 0..l.n_steps {
                    for j in 0..l.n_gtg {
                        mark(l.throttle(step, j));
                        if let Some(y) = l.y(step, j) {
                            mark(y);
                        }
                    }
                    mark(l.current(step));
                    if let Some(s) = l.slack(step) {
                        mark(s);
                    }
                }
                assert!(seen.iter().all(|&s| s), "layout left holes");
            }
        }
    }

    #[test]
    fn commitment_indices_exist_only_for_methods_3_and_4() {
        for (method, expect) in [
            (MethodId::BaselineEffort, false),
            (MethodId::BaselineEfficiency, false),
            (MethodId::DirectComplementarity, true),
            (MethodId::IndirectBangBang, true),
        ] {
            let l = DecisionLayout::new(method, LayoutOrder::Interleaved, 3, 4, false);
            assert_eq!(l.y(0, 0).is_some(), expect);
        }
    }

    #[test]
    fn method_ids_round_trip() {
        for m in MethodId::ALL {
            assert_eq!(MethodId::from_index(m.index()), Some(m));
        }
        assert_eq!(MethodId::from_index(0), None);
        assert_eq!(MethodId::from_index(5), None);
    }
}

#[cfg(test)]
mod solve_tests {
    use super::*;
    use crate::nlp::{solve, SolveStatus, SolverOptions};
    use crate::plant::{euler_step, BatteryParams, ControlInput, Exogenous, SystemParams, SystemState};

    fn single_gtg_tiny_battery() -> SystemParams {
        let mut params = SystemParams::appendix_small();
        params.battery = BatteryParams {
            i_min_a: -1e-3,
            i_max_a: 1e-3,
            p_min_w: -10.0,
            p_max_w: 10.0,
            ..params.battery
        };
        params
    }

    fn two_gtg_small() -> SystemParams {
        let mut params = SystemParams::appendix_small();
        params.gtgs = vec![params.gtgs[0], params.gtgs[0]];
        params
    }

    fn flat_forecast(n: usize, demand_w: f64) -> Forecast {
        Forecast {
            v_wind_mps: vec![0.0; n],
            p_wtg_w: vec![0.0; n],
            p_demand_w: vec![demand_w; n],
        }
    }

    /// Shooting-defect residual of a solution, via the plant integrator.
    fn max_defect(w: &[f64], layout: &DecisionLayout, params: &SystemParams, dt: f64) -> f64 {
        let mut worst = 0.0f64;
        for step in 0..layout.n_steps {
            let state = SystemState {
                gtg_valve: (0..layout.n_gtg).map(|j| w[layout.valve(step, j)]).collect(),
                gtg_power_w: (0..layout.n_gtg)
                    .map(|j| w[layout.power(step, j)] * POWER_SCALE_W)
                    .collect(),
                soc_pct: w[layout.soc(step)],
            };
            let input = ControlInput {
                throttle: (0..layout.n_gtg).map(|j| w[layout.throttle(step, j)]).collect(),
                current_a: w[layout.current(step)] * CURRENT_SCALE_A,
            };
            let exo = Exogenous { v_wind_mps: 0.0, p_wtg_w: 0.0 };
            let next = euler_step(&state, &input, &exo, dt, params).state;
            for j in 0..layout.n_gtg {
                worst = worst.max((w[layout.valve(step + 1, j)] - next.gtg_valve[j]).abs());
                worst = worst.max(
                    (w[layout.power(step + 1, j)] - next.gtg_power_w[j] / POWER_SCALE_W).abs(),
                );
            }
            worst = worst.max((w[layout.soc(step + 1)] - next.soc_pct).abs());
        }
        worst
    }

    #[test]
    fn method2_toy_matches_throttle_grid_search() {
        // Single GTG, two steps, demand at p_max, battery negligible:
        // soft balance makes every throttle pair admissible, and the
        // transcription must agree with brute-force search over
        // (T0, T1) in {0, 0.05, ..., 1}^2 on the same objective.
        let params = single_gtg_tiny_battery();
        let grid = HorizonGrid { dt_s: 150.0, n_steps: 2 };
        let weights = OcpWeights::defaults(1);
        let forecast = flat_forecast(2, params.gtgs[0].p_max_w);
        let x0 = SystemState::hot_start(&params, 70.0);
        let ctx = CommitmentContext::all_on(1);
        let spec = OcpSpec {
            method: MethodId::BaselineEfficiency,
            grid,
            weights: &weights,
            forecast: &forecast,
            x0: &x0,
            params: &params,
            ctx: &ctx,
            soft_balance: true,
            order: LayoutOrder::Interleaved,
        };
        let (nlp, layout) = build_ocp(&spec).unwrap();
        let w0 = default_start(&layout, &x0, &params, &ctx);
        let result = solve(&nlp, &w0, &SolverOptions::default());
        assert_eq!(result.status, SolveStatus::Converged, "residuals {:?}", result.residuals);
        let u0 = extract_policy(&result, &layout).unwrap();

        // Independent grid search: simulate the cascade for each pair,
        // evaluate effort - efficiency + slack penalty.
        let g = &params.gtgs[0];
        let dt = grid.dt_s;
        let mut best = (f64::INFINITY, 0.0f64);
        let mut t0 = 0.0;
        while t0 <= 1.0 + 1e-9 {
            let mut t1 = 0.0;
            while t1 <= 1.0 + 1e-9 {
                let mut cost = 0.0;
                let mut v = x0.gtg_valve[0];
                let mut p = x0.gtg_power_w[0];
                for &t in &[t0, t1] {
                    let v_next = v + dt / g.tau_v_s * (t - v);
                    let p_next = p + dt / g.tau_p_s * (v * g.p_max_w - p);
                    let pbar = p_next / g.p_max_w;
                    let eta = g.alpha1 * pbar * pbar + g.alpha2 * pbar;
                    let slack = (forecast.p_demand_w[0] - p_next) / POWER_SCALE_W;
                    cost += dt * (-weights.k_gtg[0] * eta + weights.k_u_throttle * t * t);
                    cost += weights.k_slack * slack * slack;
                    v = v_next;
                    p = p_next;
                }
                if cost < best.0 {
                    best = (cost, t0);
                }
                t1 += 0.05;
            }
            t0 += 0.05;
        }
        assert!(
            (u0.throttle[0] - best.1).abs() <= 0.051,
            "nlp throttle {} vs grid-search {}",
            u0.throttle[0],
            best.1
        );
        assert!(u0.throttle[0] > 0.9, "throttle should drive load toward p_max");
    }

    #[test]
    fn method1_and_method2_share_constraints() {
        let params = SystemParams::paper_large();
        let grid = HorizonGrid { dt_s: 150.0, n_steps: 3 };
        let weights = OcpWeights::defaults(3);
        let forecast = flat_forecast(3, 65.0e6);
        let x0 = SystemState::hot_start(&params, 70.0);
        let ctx = CommitmentContext::all_on(3);
        let mut problems = Vec::new();
        for method in [MethodId::BaselineEffort, MethodId::BaselineEfficiency] {
            let spec = OcpSpec {
                method,
                grid,
                weights: &weights,
                forecast: &forecast,
                x0: &x0,
                params: &params,
                ctx: &ctx,
                soft_balance: false,
                order: LayoutOrder::Interleaved,
            };
            problems.push(build_ocp(&spec).unwrap());
        }
        let (p1, l1) = &problems[0];
        let (p2, l2) = &problems[1];
        assert_eq!(l1.n_var, l2.n_var);
        assert_eq!(p1.m_eq(), p2.m_eq());
        assert_eq!(p1.m_ineq(), p2.m_ineq());
        // Same constraints at a random point, different objectives.
        let mut rng = crate::rng::Pcg64::seeded(31);
        let w: Vec<f64> = (0..l1.n_var).map(|_| rng.uniform_in(0.1, 0.9)).collect();
        let mut c1 = vec![0.0; p1.m_eq()];
        let mut c2 = vec![0.0; p2.m_eq()];
        p1.eval_eq(&w, &mut c1);
        p2.eval_eq(&w, &mut c2);
        assert_eq!(c1, c2);
        assert!(p1.objective(&w) != p2.objective(&w));
    }

    #[test]
    fn converged_solutions_have_tight_defects_and_balance() {
        let params = single_gtg_tiny_battery();
        let grid = HorizonGrid { dt_s: 150.0, n_steps: 4 };
        let weights = OcpWeights::defaults(1);
        // Demand inside the reachable band so the hard balance is feasible.
        let forecast = flat_forecast(4, 0.985 * params.gtgs[0].p_max_w);
        let x0 = SystemState::hot_start(&params, 70.0);
        let ctx = CommitmentContext::all_on(1);
        let spec = OcpSpec {
            method: MethodId::BaselineEfficiency,
            grid,
            weights: &weights,
            forecast: &forecast,
            x0: &x0,
            params: &params,
            ctx: &ctx,
            soft_balance: false,
            order: LayoutOrder::Interleaved,
        };
        let (nlp, layout) = build_ocp(&spec).unwrap();
        let w0 = default_start(&layout, &x0, &params, &ctx);
        let result = solve(&nlp, &w0, &SolverOptions::default());
        assert_eq!(result.status, SolveStatus::Converged);
        assert!(max_defect(&result.w_star, &layout, &params, grid.dt_s) <= 1e-6);

        // Warm start on the unchanged problem: a handful of iterations.
        let again = solve(&nlp, &result.w_star, &SolverOptions::default());
        assert_eq!(again.status, SolveStatus::Converged);
        assert!(again.iterations <= 3, "warm re-solve took {}", again.iterations);
    }

    #[test]
    fn method4_toy_matches_exhaustive_commitment() {
        let params = two_gtg_small();
        let grid = HorizonGrid { dt_s: 150.0, n_steps: 3 };
        let weights = OcpWeights::defaults(2);
        let x0 = SystemState {
            gtg_valve: vec![0.0, 0.0],
            gtg_power_w: vec![0.0, 0.0],
            soc_pct: 70.0,
        };
        let ctx = CommitmentContext::cold(2);
        let mut rng = crate::rng::Pcg64::seeded(77);
        for _ in 0..3 {
            // The turbines start off and node 1 is predetermined, so the
            // first step must be coverable by the battery alone.
            let mut demand: Vec<f64> = (0..3).map(|_| rng.uniform_in(2.0e6, 8.5e6)).collect();
            demand[0] = rng.uniform_in(0.5e6, 4.0e6);
            let forecast = Forecast {
                v_wind_mps: vec![0.0; 3],
                p_wtg_w: vec![0.0; 3],
                p_demand_w: demand,
            };
            let spec = OcpSpec {
                method: MethodId::IndirectBangBang,
                grid,
                weights: &weights,
                forecast: &forecast,
                x0: &x0,
                params: &params,
                ctx: &ctx,
                soft_balance: false,
                order: LayoutOrder::Interleaved,
            };
            let (best_schedule, best_cost) = brute_force_commitment(&spec).unwrap();
            let (result, _nlp, layout) = solve_ocp(&spec, None, &SolverOptions::default()).unwrap();
            assert_eq!(result.status, SolveStatus::Converged);
            let nlp_schedule: Schedule = (0..3)
                .map(|k| {
                    (0..2).map(|j| result.w_star[layout.y(k, j).unwrap()] >= 0.5).collect()
                })
                .collect();
            let y_raw: Vec<Vec<f64>> = (0..3)
                .map(|k| (0..2).map(|j| result.w_star[layout.y(k, j).unwrap()]).collect())
                .collect();
            let nlp_cost = schedule_completion_cost(&spec, &nlp_schedule)
                .unwrap_or_else(|| panic!("unrealizable schedule {nlp_schedule:?}, raw y {y_raw:?}, demand {:?}", forecast.p_demand_w));
            assert!(
                nlp_cost <= best_cost * 1.02 + 1e-9,
                "nlp schedule {nlp_schedule:?} cost {nlp_cost} vs optimum {best_schedule:?} cost {best_cost}"
            );
        }
    }

    #[test]
    fn brute_force_degenerate_cases() {
        let params = two_gtg_small();
        let grid = HorizonGrid { dt_s: 150.0, n_steps: 3 };
        let weights = OcpWeights::defaults(2);
        let off = SystemState { gtg_valve: vec![0.0; 2], gtg_power_w: vec![0.0; 2], soc_pct: 70.0 };
        let ctx = CommitmentContext::cold(2);

        // Zero demand, positive switching cost: stay off.
        let forecast = flat_forecast(3, 0.0);
        let spec = OcpSpec {
            method: MethodId::IndirectBangBang,
            grid,
            weights: &weights,
            forecast: &forecast,
            x0: &off,
            params: &params,
            ctx: &ctx,
            soft_balance: false,
            order: LayoutOrder::Interleaved,
        };
        let (schedule, cost) = brute_force_commitment(&spec).unwrap();
        assert!(schedule.iter().all(|step| step.iter().all(|&on| !on)));
        assert!(cost.abs() < 1e-9);

        // Constant demand at p_max, one GTG, battery effectively absent:
        // the only feasible schedules keep the turbine on.
        let params1 = single_gtg_tiny_battery();
        let hot = SystemState {
            gtg_valve: vec![1.0],
            gtg_power_w: vec![params1.gtgs[0].p_max_w],
            soc_pct: 70.0,
        };
        let ctx1 = CommitmentContext::all_on(1);
        let forecast1 = flat_forecast(3, params1.gtgs[0].p_max_w);
        let spec1 = OcpSpec {
            method: MethodId::IndirectBangBang,
            grid,
            weights: &weights,
            forecast: &forecast1,
            x0: &hot,
            params: &params1,
            ctx: &ctx1,
            soft_balance: false,
            order: LayoutOrder::Interleaved,
        };
        let (schedule1, _) = brute_force_commitment(&spec1).unwrap();
        assert!(schedule1.iter().all(|step| step[0]), "all-on expected, got {schedule1:?}");
    }

    #[test]
    fn toy_size_guard() {
        let params = SystemParams::paper_large();
        let grid = HorizonGrid { dt_s: 150.0, n_steps: 3 };
        let weights = OcpWeights::defaults(3);
        let forecast = flat_forecast(3, 65.0e6);
        let x0 = SystemState::hot_start(&params, 70.0);
        let ctx = CommitmentContext::all_on(3);
        let spec = OcpSpec {
            method: MethodId::IndirectBangBang,
            grid,
            weights: &weights,
            forecast: &forecast,
            x0: &x0,
            params: &params,
            ctx: &ctx,
            soft_balance: false,
            order: LayoutOrder::Interleaved,
        };
        assert!(matches!(brute_force_commitment(&spec), Err(OcpError::ToyTooLarge { .. })));
    }

    #[test]
    fn infeasible_demand_guard_for_non_switching_methods() {
        let params = SystemParams::paper_large();
        let grid = HorizonGrid { dt_s: 150.0, n_steps: 3 };
        let weights = OcpWeights::defaults(3);
        // Demand below the cluster minimum everywhere.
        let forecast = flat_forecast(3, 10.0e6);
        let x0 = SystemState::hot_start(&params, 70.0);
        let ctx = CommitmentContext::all_on(3);
        for (method, should_fail) in [
            (MethodId::BaselineEffort, true),
            (MethodId::BaselineEfficiency, true),
            (MethodId::IndirectBangBang, false),
        ] {
            let spec = OcpSpec {
                method,
                grid,
                weights: &weights,
                forecast: &forecast,
                x0: &x0,
                params: &params,
                ctx: &ctx,
                soft_balance: false,
                order: LayoutOrder::Interleaved,
            };
            let built = build_ocp(&spec);
            assert_eq!(
                matches!(built, Err(OcpError::InfeasibleDemand { .. })),
                should_fail,
                "method {method:?}"
            );
        }
    }
}


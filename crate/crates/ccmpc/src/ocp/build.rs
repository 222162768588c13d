//! Assembly of the four formulations into term-structured NLPs.

use super::{
    CommitmentContext, DecisionLayout, Forecast, HorizonGrid, LayoutOrder, MethodId, OcpError,
    OcpWeights, CURRENT_SCALE_A, POWER_SCALE_W,
};
use crate::autodiff::{DiffFn, Scalar};
use crate::nlp::NlpProblem;
use crate::plant::{battery_power, BatteryParams, SystemParams, SystemState};

/// Everything needed to transcribe one horizon.
pub struct OcpSpec<'a> {
    pub method: MethodId,
    pub grid: HorizonGrid,
    pub weights: &'a OcpWeights,
    pub forecast: &'a Forecast,
    pub x0: &'a SystemState,
    pub params: &'a SystemParams,
    pub ctx: &'a CommitmentContext,
    pub soft_balance: bool,
    pub order: LayoutOrder,
}

/// Pin the initial node to the measured state.
struct InitCondition {
    target: Vec<f64>,
}

impl DiffFn for InitCondition {
    fn n_in(&self) -> usize {
        self.target.len()
    }
    fn n_out(&self) -> usize {
        self.target.len()
    }
    fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
        for (i, &t) in self.target.iter().enumerate() {
            out[i] = x[i] - t;
        }
    }
}

/// Shooting defect `x_{k+1} - (x_k + dt f(x_k, u_k))` for one interval.
/// Locals: `[x_k (nx) | T_1..T_J, I | x_{k+1} (nx)]`.
struct ShootingDefect {
    n_gtg: usize,
    /// dt / tau_v and dt / tau_p per GTG.
    a_v: Vec<f64>,
    a_p: Vec<f64>,
    pmax_scaled: Vec<f64>,
    /// SOC change per unit of (scaled) current over one step.
    soc_per_current: f64,
}

impl DiffFn for ShootingDefect {
    fn n_in(&self) -> usize {
        2 * (2 * self.n_gtg + 1) + self.n_gtg + 1
    }
    fn n_out(&self) -> usize {
        2 * self.n_gtg + 1
    }
    fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
        let j = self.n_gtg;
        let nx = 2 * j + 1;
        let (x1, rest) = x.split_at(nx);
        let (u, x2) = rest.split_at(j + 1);
        for g in 0..j {
            let (v1, p1) = (x1[g], x1[j + g]);
            let (v2, p2) = (x2[g], x2[j + g]);
            out[g] = v2 - v1 - (u[g] - v1) * self.a_v[g];
            out[j + g] = p2 - p1 - (v1 * self.pmax_scaled[g] - p1) * self.a_p[g];
        }
        out[2 * j] = x2[2 * j] - x1[2 * j] + u[j] * self.soc_per_current;
    }
}

/// Scaled grid-side battery power as a function of SOC and scaled current.
fn battery_power_scaled<T: Scalar>(soc: T, current_scaled: T, bat: &BatteryParams) -> T {
    battery_power(soc, current_scaled * CURRENT_SCALE_A, bat) / POWER_SCALE_W
}

/// Power balance at one node, in scaled units. Locals:
/// `[P_1..P_J | soc | I | (slack)]`.
struct PowerBalance {
    n_gtg: usize,
    bat: BatteryParams,
    wtg_scaled: f64,
    demand_scaled: f64,
    with_slack: bool,
}

impl DiffFn for PowerBalance {
    fn n_in(&self) -> usize {
        self.n_gtg + 2 + usize::from(self.with_slack)
    }
    fn n_out(&self) -> usize {
        1
    }
    fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
        let mut acc = T::from_f64(self.wtg_scaled - self.demand_scaled);
        for g in 0..self.n_gtg {
            acc = acc + x[g];
        }
        acc = acc + battery_power_scaled(x[self.n_gtg], x[self.n_gtg + 1], &self.bat);
        if self.with_slack {
            acc = acc + x[self.n_gtg + 2];
        }
        out[0] = acc;
    }
}

/// Battery power box `p_min <= P_bat <= p_max`. Locals: `[soc | I]`.
struct BatteryPowerBox {
    bat: BatteryParams,
    pmin_scaled: f64,
    pmax_scaled: f64,
}

impl DiffFn for BatteryPowerBox {
    fn n_in(&self) -> usize {
        2
    }
    fn n_out(&self) -> usize {
        2
    }
    fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
        let p = battery_power_scaled(x[0], x[1], &self.bat);
        out[0] = p - self.pmin_scaled;
        out[1] = -p + self.pmax_scaled;
    }
}

/// Commitment-scaled load band `y p_min <= P <= y p_max`. Locals: `[P, y]`.
struct CommitmentLoadBand {
    pmin_scaled: f64,
    pmax_scaled: f64,
}

impl DiffFn for CommitmentLoadBand {
    fn n_in(&self) -> usize {
        2
    }
    fn n_out(&self) -> usize {
        2
    }
    fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
        out[0] = x[0] - x[1] * self.pmin_scaled;
        out[1] = x[1] * self.pmax_scaled - x[0];
    }
}

/// Bang-bang coupling `P - y p_max = 0`. Locals: `[P, y]`.
struct CommitmentEquality {
    pmax_scaled: f64,
}

impl DiffFn for CommitmentEquality {
    fn n_in(&self) -> usize {
        2
    }
    fn n_out(&self) -> usize {
        1
    }
    fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
        out[0] = x[0] - x[1] * self.pmax_scaled;
    }
}

/// Economic stage cost, integrated over one step:
/// `dt (-sum_j K_j eta_j(P_j / p_max_j) + u' K_u u)`.
/// Locals: `[P_1..P_J (efficiency methods only) | T_1..T_J | I]`.
struct StageCost {
    n_gtg: usize,
    dt_s: f64,
    with_efficiency: bool,
    k_gtg: Vec<f64>,
    alpha1: Vec<f64>,
    alpha2: Vec<f64>,
    /// Converts scaled power to load fraction per GTG.
    pbar_per_unit: Vec<f64>,
    k_throttle: f64,
    /// Effort coefficient on the scaled current.
    k_current_scaled: f64,
}

impl DiffFn for StageCost {
    fn n_in(&self) -> usize {
        (if self.with_efficiency { self.n_gtg } else { 0 }) + self.n_gtg + 1
    }
    fn n_out(&self) -> usize {
        1
    }
    fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
        let mut acc = T::from_f64(0.0);
        let u0 = if self.with_efficiency {
            for g in 0..self.n_gtg {
                let pbar = x[g] * self.pbar_per_unit[g];
                let eta = pbar * pbar * self.alpha1[g] + pbar * self.alpha2[g];
                acc = acc - eta * self.k_gtg[g];
            }
            self.n_gtg
        } else {
            0
        };
        for g in 0..self.n_gtg {
            let t = x[u0 + g];
            acc = acc + t * t * self.k_throttle;
        }
        let cur = x[u0 + self.n_gtg];
        acc = acc + cur * cur * self.k_current_scaled;
        out[0] = acc * self.dt_s;
    }
}

/// Switching regularization and complementarity penalty for one GTG and
/// one step: `k_dy (y_k - y_next)^2 + k_y y_k (1 - y_k)`, where `y_next`
/// is the following variable, the carried tail value, or (for the anchor
/// copy) the currently applied commitment.
struct CommitmentCost {
    k_dy: f64,
    k_y: f64,
    /// Fixed comparison value when there is no second variable.
    fixed_next: Option<f64>,
}

impl DiffFn for CommitmentCost {
    fn n_in(&self) -> usize {
        if self.fixed_next.is_some() {
            1
        } else {
            2
        }
    }
    fn n_out(&self) -> usize {
        1
    }
    fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
        let y = x[0];
        let dy = match self.fixed_next {
            Some(v) => y - v,
            None => y - x[1],
        };
        let one_minus = -y + 1.0;
        out[0] = dy * dy * self.k_dy + y * one_minus * self.k_y;
    }
}

/// Anchor of the first commitment to the applied one (regularization only).
struct CommitmentAnchor {
    k_dy: f64,
    applied: f64,
}

impl DiffFn for CommitmentAnchor {
    fn n_in(&self) -> usize {
        1
    }
    fn n_out(&self) -> usize {
        1
    }
    fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
        let d = x[0] - self.applied;
        out[0] = d * d * self.k_dy;
    }
}

/// Quadratic penalty on the balance slack.
struct SlackCost {
    k: f64,
}

impl DiffFn for SlackCost {
    fn n_in(&self) -> usize {
        1
    }
    fn n_out(&self) -> usize {
        1
    }
    fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
        out[0] = x[0] * x[0] * self.k;
    }
}

/// Optional terminal SOC reward.
struct TerminalSoc {
    weight: f64,
}

impl DiffFn for TerminalSoc {
    fn n_in(&self) -> usize {
        1
    }
    fn n_out(&self) -> usize {
        1
    }
    fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
        out[0] = x[0] * (-self.weight);
    }
}

fn scaled_state(x0: &SystemState) -> Vec<f64> {
    let j = x0.gtg_valve.len();
    let mut v = Vec::with_capacity(2 * j + 1);
    v.extend_from_slice(&x0.gtg_valve);
    v.extend(x0.gtg_power_w.iter().map(|p| p / POWER_SCALE_W));
    v.push(x0.soc_pct);
    v
}

/// Transcribe one horizon. Returns the NLP and its decision layout.
pub fn build_ocp(spec: &OcpSpec) -> Result<(NlpProblem, DecisionLayout), OcpError> {
    let params = spec.params;
    let n_gtg = params.n_gtg();
    let n = spec.grid.n_steps;
    if spec.forecast.len() != n {
        return Err(OcpError::ForecastLength { expected: n, got: spec.forecast.len() });
    }
    if spec.x0.dim() != 2 * n_gtg + 1 {
        return Err(OcpError::StateDim { expected: 2 * n_gtg + 1, got: spec.x0.dim() });
    }
    if !spec.method.has_commitment() {
        let sum_pmin: f64 = params.total_gtg_pmin_w();
        let max_demand =
            spec.forecast.p_demand_w.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        if sum_pmin > max_demand {
            return Err(OcpError::InfeasibleDemand { sum_pmin_w: sum_pmin, max_demand_w: max_demand });
        }
    }

    let layout =
        DecisionLayout::new(spec.method, spec.order, n_gtg, n, spec.soft_balance);
    let mut nlp = NlpProblem::new(layout.n_var);
    let bat = params.battery;

    // Bounds on nodes 1..=N and all inputs; node 0 is pinned by the
    // initial-condition equality and stays unbounded.
    for node in 1..=n {
        for j in 0..n_gtg {
            nlp.set_bounds(layout.valve(node, j), 0.0, 1.0)?;
            let g = &params.gtgs[j];
            let (lo, hi) = if spec.method.has_commitment() {
                (0.0, g.p_max_w / POWER_SCALE_W)
            } else {
                (g.p_min_w() / POWER_SCALE_W, g.p_max_w / POWER_SCALE_W)
            };
            nlp.set_bounds(layout.power(node, j), lo, hi)?;
        }
        nlp.set_bounds(layout.soc(node), bat.soc_min_pct, bat.soc_max_pct)?;
    }
    for step in 0..n {
        for j in 0..n_gtg {
            nlp.set_bounds(layout.throttle(step, j), 0.0, 1.0)?;
            if let Some(y) = layout.y(step, j) {
                nlp.set_bounds(y, 0.0, 1.0)?;
            }
        }
        nlp.set_bounds(
            layout.current(step),
            bat.i_min_a / CURRENT_SCALE_A,
            bat.i_max_a / CURRENT_SCALE_A,
        )?;
    }

    // Initial condition.
    let dt = spec.grid.dt_s;
    let x0_block: Vec<usize> = (0..layout.nx).map(|i| layout.x(0) + i).collect();
    nlp.add_eq_linear(x0_block, InitCondition { target: scaled_state(spec.x0) })?;

    // Shooting defects.
    for step in 0..n {
        let mut vars: Vec<usize> = Vec::with_capacity(2 * layout.nx + layout.nu);
        vars.extend((0..layout.nx).map(|i| layout.x(step) + i));
        vars.extend((0..layout.nu).map(|i| layout.u(step) + i));
        vars.extend((0..layout.nx).map(|i| layout.x(step + 1) + i));
        nlp.add_eq_linear(
            vars,
            ShootingDefect {
                n_gtg,
                a_v: params.gtgs.iter().map(|g| dt / g.tau_v_s).collect(),
                a_p: params.gtgs.iter().map(|g| dt / g.tau_p_s).collect(),
                pmax_scaled: params.gtgs.iter().map(|g| g.p_max_w / POWER_SCALE_W).collect(),
                soc_per_current: 100.0 * CURRENT_SCALE_A * dt / (3600.0 * bat.capacity_q_ah),
            },
        )?;
    }

    // Power balance and battery power box at each landing node.
    for step in 0..n {
        let node = step + 1;
        let mut vars: Vec<usize> = (0..n_gtg).map(|j| layout.power(node, j)).collect();
        vars.push(layout.soc(node));
        vars.push(layout.current(step));
        if let Some(s) = layout.slack(step) {
            vars.push(s);
        }
        nlp.add_eq(
            vars,
            PowerBalance {
                n_gtg,
                bat,
                wtg_scaled: spec.forecast.p_wtg_w[step] / POWER_SCALE_W,
                demand_scaled: spec.forecast.p_demand_w[step] / POWER_SCALE_W,
                with_slack: spec.soft_balance,
            },
        )?;
        nlp.add_ineq(
            vec![layout.soc(node), layout.current(step)],
            BatteryPowerBox {
                bat,
                pmin_scaled: bat.p_min_w / POWER_SCALE_W,
                pmax_scaled: bat.p_max_w / POWER_SCALE_W,
            },
        )?;
    }

    // Commitment coupling.
    match spec.method {
        MethodId::DirectComplementarity => {
            for step in 0..n {
                for j in 0..n_gtg {
                    let g = &params.gtgs[j];
                    nlp.add_ineq_linear(
                        vec![layout.power(step + 1, j), layout.y(step, j).unwrap()],
                        CommitmentLoadBand {
                            pmin_scaled: g.p_min_w() / POWER_SCALE_W,
                            pmax_scaled: g.p_max_w / POWER_SCALE_W,
                        },
                    )?;
                }
            }
        }
        MethodId::IndirectBangBang => {
            for step in 0..n {
                for j in 0..n_gtg {
                    nlp.add_eq_linear(
                        vec![layout.power(step + 1, j), layout.y(step, j).unwrap()],
                        CommitmentEquality {
                            pmax_scaled: params.gtgs[j].p_max_w / POWER_SCALE_W,
                        },
                    )?;
                }
            }
        }
        _ => {}
    }

    // Stage costs.
    let w = spec.weights;
    let with_efficiency = spec.method.uses_efficiency();
    let k_gtg: Vec<f64> = if spec.method == MethodId::BaselineEffort {
        vec![0.0; n_gtg]
    } else {
        w.k_gtg.clone()
    };
    let k_current_scaled =
        w.k_u_current * (CURRENT_SCALE_A / bat.i_max_a) * (CURRENT_SCALE_A / bat.i_max_a);
    for step in 0..n {
        let mut vars = Vec::new();
        if with_efficiency {
            vars.extend((0..n_gtg).map(|j| layout.power(step + 1, j)));
        }
        vars.extend((0..n_gtg).map(|j| layout.throttle(step, j)));
        vars.push(layout.current(step));
        nlp.add_objective(
            vars,
            StageCost {
                n_gtg,
                dt_s: dt,
                with_efficiency,
                k_gtg: k_gtg.clone(),
                alpha1: params.gtgs.iter().map(|g| g.alpha1).collect(),
                alpha2: params.gtgs.iter().map(|g| g.alpha2).collect(),
                pbar_per_unit: params.gtgs.iter().map(|g| POWER_SCALE_W / g.p_max_w).collect(),
                k_throttle: w.k_u_throttle,
                k_current_scaled,
            },
        )?;
    }

    // Commitment switching and complementarity costs.
    if spec.method.has_commitment() {
        for j in 0..n_gtg {
            nlp.add_objective(
                vec![layout.y(0, j).unwrap()],
                CommitmentAnchor { k_dy: w.k_dy, applied: spec.ctx.applied_y[j] },
            )?;
            for step in 0..n - 1 {
                nlp.add_objective(
                    vec![layout.y(step, j).unwrap(), layout.y(step + 1, j).unwrap()],
                    CommitmentCost { k_dy: w.k_dy, k_y: w.k_y, fixed_next: None },
                )?;
            }
            nlp.add_objective(
                vec![layout.y(n - 1, j).unwrap()],
                CommitmentCost {
                    k_dy: w.k_dy,
                    k_y: w.k_y,
                    fixed_next: Some(spec.ctx.carry_y[j]),
                },
            )?;
        }
    }

    if spec.soft_balance {
        for step in 0..n {
            nlp.add_objective(vec![layout.slack(step).unwrap()], SlackCost { k: w.k_slack })?;
        }
    }
    if w.k_soc_terminal > 0.0 {
        nlp.add_objective(vec![layout.soc(n)], TerminalSoc { weight: w.k_soc_terminal })?;
    }

    Ok((nlp, layout))
}

/// A nominal starting vector: every node at the measured state, steady
/// throttles, idle battery, commitments at the applied values.
pub fn default_start(
    layout: &DecisionLayout,
    x0: &SystemState,
    params: &SystemParams,
    ctx: &CommitmentContext,
) -> Vec<f64> {
    let mut w0 = vec![0.0; layout.n_var];
    let xs = scaled_state(x0);
    for node in 0..=layout.n_steps {
        for (i, &v) in xs.iter().enumerate() {
            w0[layout.x(node) + i] = v;
        }
    }
    for step in 0..layout.n_steps {
        for j in 0..layout.n_gtg {
            let pbar = (x0.gtg_power_w[j] / params.gtgs[j].p_max_w).clamp(0.0, 1.0);
            w0[layout.throttle(step, j)] = pbar;
            if let Some(y) = layout.y(step, j) {
                w0[y] = ctx.applied_y[j];
            }
        }
        w0[layout.current(step)] = 0.0;
    }
    w0
}

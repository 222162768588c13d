//! Receding-horizon closed loop.
//!
//! Every `dt` the controller model is re-transcribed from the current
//! plant state, solved (warm-started from the shifted previous solution)
//! and the first input is applied to the plant for one Euler step. Plant
//! and controller share the same component models, so there is no
//! plant-model mismatch. Each record holds the state at the end of its
//! interval, which is also where the transcription imposes the power
//! balance.

pub mod csv;
pub mod kpi;

pub use kpi::{
    count_switches, kpi_energy_ratio, kpi_ghg_ratio, kpi_mean_efficiency,
    kpi_mean_efficiency_literal, KpiError, KpiReport,
};

/// Solver settings for closed-loop runs. The applied state is the
/// cascade gain `dt/tau` more sensitive to the solution than the KKT
/// residuals are, so simulation solves run two decades tighter than the
/// general-purpose default.
pub fn sim_solver_defaults() -> SolverOptions {
    SolverOptions { kkt_tol: 1e-8, ..Default::default() }
}

use crate::nlp::SolverOptions;
use crate::ocp::{
    applied_commitment, carry_commitment, extract_policy, solve_ocp, warm_start_shift,
    CommitmentContext, DecisionLayout, HorizonGrid, MethodId, OcpError, OcpSpec, OcpWeights,
};
use crate::plant::{
    battery_power, co2_rate, euler_step, gtg_efficiency_semicontinuous, ControlInput, Exogenous,
    SystemParams, SystemState,
};
use crate::scenario::{check_span, forecast_window, DemandSeries, ScenarioError, WindSeries};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Ocp(#[from] OcpError),
    #[error("duration {duration_s} s is not a multiple of dt {dt_s} s")]
    GridMismatch { duration_s: f64, dt_s: f64 },
}

/// Everything one closed-loop run needs.
#[derive(Debug, Clone)]
pub struct SimInputs {
    pub method: MethodId,
    pub params: SystemParams,
    pub grid: HorizonGrid,
    pub weights: OcpWeights,
    pub solver: SolverOptions,
    pub wind: WindSeries,
    pub demand: DemandSeries,
    pub duration_s: f64,
    pub x0: SystemState,
    pub warm_start: bool,
    pub soft_balance: bool,
}

/// One applied step. The state is the one reached at the end of the
/// interval `[t, t + dt)`.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t_s: f64,
    pub state: SystemState,
    pub input: ControlInput,
    pub exo: Exogenous,
    pub demand_w: f64,
    /// Per-GTG load fraction at the end of the step.
    pub pbar: Vec<f64>,
    /// Per-GTG semi-continuous efficiency.
    pub eta: Vec<f64>,
    /// Total CO2 mass flow [kg/s].
    pub co2_kgps: f64,
    pub p_bat_w: f64,
    pub balance_residual_w: f64,
    /// Raw first-step commitments (empty for methods without them).
    pub y: Vec<f64>,
    pub solver_iters: usize,
    pub solve_s: f64,
    /// True when the solver failed and the previous input was held.
    pub flagged: bool,
}

/// Diagnostics counters accumulated over one run.
#[derive(Debug, Clone, Default)]
pub struct SimDiagnostics {
    pub soc_clamps: usize,
    /// Steps where some turbine ran in the gap between zero and minimum
    /// load, where the controller's smooth efficiency disagrees with the
    /// semi-continuous plant accounting.
    pub efficiency_divergence_steps: usize,
    pub failed_steps: usize,
    /// True when the failure budget (5% of steps) was exhausted and the
    /// run stopped early.
    pub aborted: bool,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub method: MethodId,
    pub dt_s: f64,
    pub records: Vec<StepRecord>,
    pub diagnostics: SimDiagnostics,
}

impl Trajectory {
    pub fn n_gtg(&self) -> usize {
        self.records.first().map_or(0, |r| r.state.gtg_valve.len())
    }
}

/// Run the closed loop over `duration / dt` steps.
pub fn run_closed_loop(inputs: &SimInputs) -> Result<Trajectory, SimError> {
    let dt = inputs.grid.dt_s;
    let n_sim = (inputs.duration_s / dt).round() as usize;
    if (n_sim as f64 * dt - inputs.duration_s).abs() > 1e-6 {
        return Err(SimError::GridMismatch { duration_s: inputs.duration_s, dt_s: dt });
    }
    check_span(&inputs.wind, inputs.duration_s, &inputs.grid)?;
    let n_gtg = inputs.params.n_gtg();
    let failure_budget = ((n_sim as f64) * 0.05).floor() as usize;

    let mut x = inputs.x0.clone();
    let mut ctx = CommitmentContext {
        applied_y: (0..n_gtg)
            .map(|j| {
                let pbar = x.gtg_power_w[j] / inputs.params.gtgs[j].p_max_w;
                if pbar >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect(),
        carry_y: vec![0.0; n_gtg],
    };
    let mut prev_solution: Option<Vec<f64>> = None;
    let mut prev_input = ControlInput {
        throttle: (0..n_gtg)
            .map(|j| (x.gtg_power_w[j] / inputs.params.gtgs[j].p_max_w).clamp(0.0, 1.0))
            .collect(),
        current_a: 0.0,
    };

    let mut records = Vec::with_capacity(n_sim);
    let mut diag = SimDiagnostics::default();

    for k in 0..n_sim {
        let t = k as f64 * dt;
        let forecast =
            forecast_window(&inputs.wind, &inputs.demand, &inputs.params, t, &inputs.grid)?;
        let spec = OcpSpec {
            method: inputs.method,
            grid: inputs.grid,
            weights: &inputs.weights,
            forecast: &forecast,
            x0: &x,
            params: &inputs.params,
            ctx: &ctx,
            soft_balance: inputs.soft_balance,
            order: Default::default(),
        };
        let shifted;
        let warm = if inputs.warm_start {
            match &prev_solution {
                Some(prev) => {
                    let layout = DecisionLayout::new(
                        inputs.method,
                        Default::default(),
                        n_gtg,
                        inputs.grid.n_steps,
                        inputs.soft_balance,
                    );
                    shifted = warm_start_shift(prev, &layout);
                    Some(shifted.as_slice())
                }
                None => None,
            }
        } else {
            None
        };

        let (result, _nlp, layout) = solve_ocp(&spec, warm, &inputs.solver)?;
        let (input, flagged) = match extract_policy(&result, &layout) {
            Ok(u) => (u, false),
            Err(OcpError::SolverFailed { .. }) => {
                // Hold the previous operating point for one step. Under
                // the single-step integrator a literally held throttle
                // away from the valve equilibrium diverges, so the hold
                // pins each throttle at its valve position.
                let held = ControlInput {
                    throttle: x.gtg_valve.clone(),
                    current_a: prev_input.current_a,
                };
                (held, true)
            }
            Err(other) => return Err(other.into()),
        };
        let y_raw = if flagged {
            // Hold the previous commitment along with the previous input.
            ctx.applied_y.clone()
        } else {
            applied_commitment(&result.w_star, &layout).unwrap_or_default()
        };
        if flagged {
            // A stale solution shifted further would be misaligned in time.
            prev_solution = None;
        } else {
            ctx.applied_y = y_raw.iter().map(|&y| if y >= 0.5 { 1.0 } else { 0.0 }).collect();
            if let Some(carry) = carry_commitment(&result.w_star, &layout) {
                ctx.carry_y = carry;
            }
            prev_solution = Some(result.w_star.clone());
        }

        let exo = Exogenous {
            v_wind_mps: forecast.v_wind_mps[0],
            p_wtg_w: forecast.p_wtg_w[0],
        };
        let step = euler_step(&x, &input, &exo, dt, &inputs.params);
        if step.soc_clamped {
            diag.soc_clamps += 1;
        }
        let next = step.state;

        let pbar: Vec<f64> = (0..n_gtg)
            .map(|j| next.gtg_power_w[j] / inputs.params.gtgs[j].p_max_w)
            .collect();
        let eta: Vec<f64> = pbar
            .iter()
            .zip(&inputs.params.gtgs)
            .map(|(&pb, g)| gtg_efficiency_semicontinuous(pb, g))
            .collect();
        for (j, &pb) in pbar.iter().enumerate() {
            if pb > 1e-6 && pb < inputs.params.gtgs[j].pbar_min - 1e-6 {
                diag.efficiency_divergence_steps += 1;
                break;
            }
        }
        let co2: f64 = (0..n_gtg)
            .map(|j| co2_rate(next.gtg_power_w[j], eta[j], &inputs.params.emissions))
            .sum();
        let p_bat = battery_power(next.soc_pct, input.current_a, &inputs.params.battery);
        let demand_w = forecast.p_demand_w[0];
        let balance_residual_w =
            next.gtg_power_w.iter().sum::<f64>() + exo.p_wtg_w + p_bat - demand_w;

        records.push(StepRecord {
            t_s: t,
            state: next.clone(),
            input: input.clone(),
            exo,
            demand_w,
            pbar,
            eta,
            co2_kgps: co2,
            p_bat_w: p_bat,
            balance_residual_w,
            y: y_raw,
            solver_iters: result.iterations,
            solve_s: result.wall_s,
            flagged,
        });

        if flagged {
            diag.failed_steps += 1;
            if diag.failed_steps > failure_budget {
                diag.aborted = true;
                break;
            }
        }
        prev_input = input;
        x = next;
    }

    Ok(Trajectory { method: inputs.method, dt_s: dt, records, diagnostics: diag })
}

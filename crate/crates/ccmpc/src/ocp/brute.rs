//! Exhaustive commitment enumeration for toy-sized bang-bang problems.
//!
//! For every binary on/off schedule the continuous completion is fully
//! determined: the power chain follows the commitments, the valve and
//! throttle chains invert the cascade, and the battery current solves
//! the per-step power balance by one-dimensional root finding. That
//! makes the enumerated minimum an independent optimality oracle for the
//! bang-bang formulation on small instances.

use super::build::OcpSpec;
use super::{MethodId, OcpError};
use crate::plant::battery_power;

/// `schedule[step][gtg]`, step `k` committing node `k + 1`.
pub type Schedule = Vec<Vec<bool>>;

const MAX_ENUM_BITS: usize = 8;

/// A binary schedule completed to a full consistent trajectory.
#[derive(Debug, Clone)]
pub struct ScheduleCompletion {
    /// Objective value of the completion under the bang-bang stage cost
    /// (the complementarity penalty vanishes on binary schedules).
    pub cost: f64,
    /// `power[node][gtg]`, nodes `0..=n` [W].
    pub power_w: Vec<Vec<f64>>,
    /// `valve[node][gtg]`, nodes `0..n` (the terminal valve is free and
    /// reported as implied by the least-effort terminal throttle).
    pub valve: Vec<Vec<f64>>,
    /// `throttle[step][gtg]`.
    pub throttle: Vec<Vec<f64>>,
    /// Battery string current per step [A].
    pub current_a: Vec<f64>,
    /// SOC per node [%].
    pub soc_pct: Vec<f64>,
}

/// Cost of one binary schedule after completing the continuous
/// variables, or `None` when the schedule cannot meet the balance,
/// bounds or battery limits.
pub fn schedule_completion_cost(spec: &OcpSpec, schedule: &Schedule) -> Option<f64> {
    complete_schedule(spec, schedule).map(|c| c.cost)
}

/// Complete a binary schedule into a feasible trajectory (see
/// [`ScheduleCompletion`]), or `None` when it is unrealizable.
pub fn complete_schedule(spec: &OcpSpec, schedule: &Schedule) -> Option<ScheduleCompletion> {
    let params = spec.params;
    let n_gtg = params.n_gtg();
    let n = spec.grid.n_steps;
    let dt = spec.grid.dt_s;
    let bat = &params.battery;
    debug_assert_eq!(schedule.len(), n);

    let tol_rel = 1e-9;

    // Committed power chain, node 0 from the initial state.
    let mut power = vec![vec![0.0; n_gtg]; n + 1];
    power[0].clone_from_slice(&spec.x0.gtg_power_w);
    for k in 0..n {
        for j in 0..n_gtg {
            power[k + 1][j] = if schedule[k][j] { params.gtgs[j].p_max_w } else { 0.0 };
        }
    }
    // Node 1 is predetermined by the initial state; the schedule must agree.
    for j in 0..n_gtg {
        let g = &params.gtgs[j];
        let a_p = dt / g.tau_p_s;
        let predetermined =
            spec.x0.gtg_power_w[j] + a_p * (spec.x0.gtg_valve[j] * g.p_max_w - spec.x0.gtg_power_w[j]);
        if (predetermined - power[1][j]).abs() > 1e-6 * g.p_max_w {
            return None;
        }
    }

    // Valve chain from the power chain, then throttles from the valves.
    let mut cost = 0.0;
    let mut valves = vec![vec![0.0; n_gtg]; n];
    let mut throttles = vec![vec![0.0; n_gtg]; n];
    for j in 0..n_gtg {
        let g = &params.gtgs[j];
        let a_p = dt / g.tau_p_s;
        let a_v = dt / g.tau_v_s;
        let mut valve = vec![0.0; n];
        valve[0] = spec.x0.gtg_valve[j];
        for k in 1..n {
            let v = (power[k + 1][j] - (1.0 - a_p) * power[k][j]) / (a_p * g.p_max_w);
            if !(-tol_rel..=1.0 + tol_rel).contains(&v) {
                return None;
            }
            valve[k] = v.clamp(0.0, 1.0);
        }
        for k in 0..n {
            let t = if k + 1 < n {
                valve[k] + (valve[k + 1] - valve[k]) / a_v
            } else {
                // The final node's valve is free in [0, 1]; take the
                // feasible throttle of least effort.
                let t_lo = valve[k] * (1.0 - 1.0 / a_v);
                let t_hi = t_lo + 1.0 / a_v;
                if t_lo <= 0.0 && 0.0 <= t_hi {
                    0.0
                } else if t_lo > 0.0 {
                    t_lo
                } else {
                    t_hi
                }
            };
            if !(-tol_rel..=1.0 + tol_rel).contains(&t) {
                return None;
            }
            throttles[k][j] = t.clamp(0.0, 1.0);
            valves[k][j] = valve[k];
            cost += dt * spec.weights.k_u_throttle * t * t;
        }
    }

    // Battery current per step from the balance at the landing node.
    let soc_per_amp = 100.0 * dt / (3600.0 * bat.capacity_q_ah);
    let mut soc = spec.x0.soc_pct;
    let mut currents = vec![0.0; n];
    let mut socs = vec![spec.x0.soc_pct];
    for k in 0..n {
        let committed: f64 = power[k + 1].iter().sum();
        let target = spec.forecast.p_demand_w[k] - spec.forecast.p_wtg_w[k] - committed;
        if target < bat.p_min_w - 1.0 || target > bat.p_max_w + 1.0 {
            return None;
        }
        let eval = |i: f64| -> (f64, f64) {
            let soc_next = soc - soc_per_amp * i;
            (battery_power(soc_next, i, bat), soc_next)
        };
        // Search only currents that keep the SOC inside its band: there
        // the power is monotone in current, away from the depletion
        // singularity where it collapses.
        let (mut lo, mut hi) = (
            bat.i_min_a.max((soc - bat.soc_max_pct) / soc_per_amp),
            bat.i_max_a.min((soc - bat.soc_min_pct) / soc_per_amp),
        );
        if lo > hi {
            return None;
        }
        let (p_lo, _) = eval(lo);
        let (p_hi, _) = eval(hi);
        let tol = tol_rel * target.abs().max(1.0);
        if p_lo > target + tol || p_hi < target - tol {
            return None;
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if eval(mid).0 < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let current = 0.5 * (lo + hi);
        let (_, soc_next) = eval(current);
        soc = soc_next.clamp(bat.soc_min_pct, bat.soc_max_pct);
        currents[k] = current;
        socs.push(soc);
        let ratio = current / bat.i_max_a;
        cost += dt * spec.weights.k_u_current * ratio * ratio;
    }

    // Switching regularization with the anchor and carried tail.
    for j in 0..n_gtg {
        let y: Vec<f64> = (0..n).map(|k| f64::from(u8::from(schedule[k][j]))).collect();
        let mut switch_cost = spec.weights.k_dy * (y[0] - spec.ctx.applied_y[j]).powi(2);
        for k in 0..n - 1 {
            switch_cost += spec.weights.k_dy * (y[k] - y[k + 1]).powi(2);
        }
        switch_cost += spec.weights.k_dy * (y[n - 1] - spec.ctx.carry_y[j]).powi(2);
        cost += switch_cost;
    }

    Some(ScheduleCompletion {
        cost,
        power_w: power,
        valve: valves,
        throttle: throttles,
        current_a: currents,
        soc_pct: socs,
    })
}

/// Enumerate all `2^(J n)` schedules and return the cheapest feasible
/// one with its cost. Restricted to toy sizes.
pub fn brute_force_commitment(spec: &OcpSpec) -> Result<(Schedule, f64), OcpError> {
    debug_assert_eq!(spec.method, MethodId::IndirectBangBang);
    let n_gtg = spec.params.n_gtg();
    let n = spec.grid.n_steps;
    let bits = n_gtg * n;
    if n_gtg > 2 || n > 4 || bits > MAX_ENUM_BITS {
        return Err(OcpError::ToyTooLarge { n_gtg, n_steps: n });
    }

    let mut best: Option<(Schedule, f64)> = None;
    for mask in 0u32..(1 << bits) {
        let schedule: Schedule = (0..n)
            .map(|k| (0..n_gtg).map(|j| mask >> (k * n_gtg + j) & 1 == 1).collect())
            .collect();
        if let Some(cost) = schedule_completion_cost(spec, &schedule) {
            let better = best.as_ref().map_or(true, |(_, c)| cost < *c);
            if better {
                best = Some((schedule, cost));
            }
        }
    }
    best.ok_or(OcpError::InfeasibleDemand {
        sum_pmin_w: 0.0,
        max_demand_w: spec.forecast.p_demand_w.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)),
    })
}

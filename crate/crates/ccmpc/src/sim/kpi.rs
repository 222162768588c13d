//! Key performance indicators over closed-loop trajectories, reported
//! relative to a baseline run on the same scenario.

use super::Trajectory;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KpiError {
    #[error("baseline trajectory has zero integrated {quantity}")]
    ZeroBaseline { quantity: &'static str },
    #[error("trajectories have different grids ({a} vs {b} records)")]
    GridMismatch { a: usize, b: usize },
}

/// Table-style summary of one run.
#[derive(Debug, Clone)]
pub struct KpiReport {
    pub method: u8,
    /// Relative GTG energy vs the baseline [%] (0 for the baseline).
    pub e_pct: f64,
    /// Power-weighted mean semi-continuous efficiency [%].
    pub eta_bar_pct: f64,
    /// True when every step had all turbines off and the mean efficiency
    /// is reported as zero by convention.
    pub eta_flagged: bool,
    /// Relative GHG emissions vs the baseline [%].
    pub ghg_pct: f64,
    /// Commitment threshold crossings per GTG (zero for methods without
    /// commitment variables).
    pub switch_counts: Vec<usize>,
    pub mean_solve_s: f64,
    pub max_solve_s: f64,
    pub end_soc_pct: f64,
    pub failed_steps: usize,
}

fn total_gtg_energy(traj: &Trajectory) -> f64 {
    traj.records
        .iter()
        .map(|r| r.state.gtg_power_w.iter().sum::<f64>() * traj.dt_s)
        .sum()
}

fn total_co2(traj: &Trajectory) -> f64 {
    traj.records.iter().map(|r| r.co2_kgps * traj.dt_s).sum()
}

fn check_grids(a: &Trajectory, b: &Trajectory) -> Result<(), KpiError> {
    if a.records.len() != b.records.len() || a.dt_s != b.dt_s {
        return Err(KpiError::GridMismatch { a: a.records.len(), b: b.records.len() });
    }
    Ok(())
}

/// Relative GTG energy: `100 (E_i / E_base) - 100`, the ratio of the
/// integrated cluster outputs.
pub fn kpi_energy_ratio(traj: &Trajectory, base: &Trajectory) -> Result<f64, KpiError> {
    check_grids(traj, base)?;
    let e_base = total_gtg_energy(base);
    if e_base <= 0.0 {
        return Err(KpiError::ZeroBaseline { quantity: "GTG energy" });
    }
    Ok(100.0 * (total_gtg_energy(traj) / e_base) - 100.0)
}

/// Relative GHG mass: `100 (CO2_i / CO2_base) - 100`, with CO2 from the
/// semi-continuous efficiency accounting.
pub fn kpi_ghg_ratio(traj: &Trajectory, base: &Trajectory) -> Result<f64, KpiError> {
    check_grids(traj, base)?;
    let g_base = total_co2(base);
    if g_base <= 0.0 {
        return Err(KpiError::ZeroBaseline { quantity: "CO2 mass" });
    }
    Ok(100.0 * (total_co2(traj) / g_base) - 100.0)
}

/// Power-weighted mean efficiency [%]: the cluster efficiency weighted
/// by each turbine's share of the cluster output, averaged over all
/// steps with any turbine running. Returns `(value, flagged)`; an
/// all-off trajectory is flagged and reported as zero.
pub fn kpi_mean_efficiency(traj: &Trajectory) -> (f64, bool) {
    let mut weighted = 0.0;
    let mut active_time = 0.0;
    for r in &traj.records {
        let total: f64 = r.state.gtg_power_w.iter().sum();
        if total <= 0.0 {
            continue;
        }
        let step_eta: f64 = r
            .state
            .gtg_power_w
            .iter()
            .zip(&r.eta)
            .map(|(&p, &eta)| (p / total) * eta)
            .sum();
        weighted += step_eta * traj.dt_s;
        active_time += traj.dt_s;
    }
    if active_time == 0.0 {
        return (0.0, true);
    }
    (100.0 * weighted / active_time, false)
}

/// The printed-formula variant: weights each turbine by the inverse of
/// its power share and subtracts 100. Exposed for comparison; its
/// magnitudes are not commensurate with the power-weighted mean.
pub fn kpi_mean_efficiency_literal(traj: &Trajectory) -> f64 {
    let mut acc = 0.0;
    let mut active_time = 0.0;
    for r in &traj.records {
        let total: f64 = r.state.gtg_power_w.iter().sum();
        if total <= 0.0 {
            continue;
        }
        let mut step = 0.0;
        for (&p, &eta) in r.state.gtg_power_w.iter().zip(&r.eta) {
            let share = p / total;
            if share > 1e-12 {
                step += eta / share;
            }
        }
        acc += step * traj.dt_s;
        active_time += traj.dt_s;
    }
    if active_time == 0.0 {
        return 0.0;
    }
    100.0 * acc / active_time - 100.0
}

/// Commitment threshold crossings between consecutive applied steps.
pub fn count_switches(traj: &Trajectory, threshold: f64) -> Vec<usize> {
    let n_gtg = traj.n_gtg();
    let mut counts = vec![0usize; n_gtg];
    for pair in traj.records.windows(2) {
        if pair[0].y.len() != n_gtg || pair[1].y.len() != n_gtg {
            continue;
        }
        for j in 0..n_gtg {
            let before = pair[0].y[j] >= threshold;
            let after = pair[1].y[j] >= threshold;
            if before != after {
                counts[j] += 1;
            }
        }
    }
    counts
}

/// Assemble the report for one run, relative to `base` when given (the
/// run itself is its own baseline otherwise, making the ratios zero).
pub fn report(traj: &Trajectory, base: Option<&Trajectory>) -> Result<KpiReport, KpiError> {
    let base = base.unwrap_or(traj);
    let (eta_bar, eta_flagged) = kpi_mean_efficiency(traj);
    let solve_times: Vec<f64> = traj.records.iter().map(|r| r.solve_s).collect();
    let mean_solve = if solve_times.is_empty() {
        0.0
    } else {
        solve_times.iter().sum::<f64>() / solve_times.len() as f64
    };
    Ok(KpiReport {
        method: traj.method.index(),
        e_pct: kpi_energy_ratio(traj, base)?,
        eta_bar_pct: eta_bar,
        eta_flagged,
        ghg_pct: kpi_ghg_ratio(traj, base)?,
        switch_counts: count_switches(traj, 0.5),
        mean_solve_s: mean_solve,
        max_solve_s: solve_times.iter().fold(0.0f64, |a, &b| a.max(b)),
        end_soc_pct: traj.records.last().map_or(0.0, |r| r.state.soc_pct),
        failed_steps: traj.diagnostics.failed_steps,
    })
}

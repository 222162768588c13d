//! Component models of the offshore hybrid power system.
//!
//! Everything here is a pure function of its arguments; the same code
//! serves as the simulation plant and as the controller's internal model
//! (the closed loop assumes no plant-model mismatch). Functions that
//! appear inside the optimal control problem are generic over
//! [`Scalar`](crate::autodiff::Scalar) so the transcription can evaluate
//! them on dual numbers.
//!
//! Sign conventions: battery current is positive when discharging, and
//! positive battery power supplies the grid.

mod battery;
mod gtg;
mod wtg;

pub use battery::{battery_power, battery_voltage, soc_derivative, BatteryParams};
pub use gtg::{
    co2_rate, gtg_derivatives, gtg_efficiency_semicontinuous, gtg_efficiency_smooth,
    normalized_power, GtgParams,
};
pub use wtg::{
    aerodynamic_power, cp_polynomial, generator_torque_sigmoid, load_power_curve_csv,
    tip_speed_ratio, wind_power, DetailedWtgParams, WtgParams,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("battery fully depleted: extracted charge {extracted:.3} Ah >= capacity {capacity:.3} Ah")]
    DegenerateCharge { extracted: f64, capacity: f64 },
    #[error("power curve CSV, line {line}: {message}")]
    CurveCsv { line: usize, message: String },
}

/// Per-step exogenous signals: rotor-average wind speed and the wind
/// power it maps to through the static power curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exogenous {
    pub v_wind_mps: f64,
    pub p_wtg_w: f64,
}

/// Plant state: per-GTG fuel-valve position and power, battery SOC.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub gtg_valve: Vec<f64>,
    pub gtg_power_w: Vec<f64>,
    pub soc_pct: f64,
}

impl SystemState {
    pub fn dim(&self) -> usize {
        2 * self.gtg_valve.len() + 1
    }

    /// All gas turbines near full load. The invariants of the
    /// non-switching controller formulations (load never below minimum)
    /// and of the bang-bang formulation (load at 0 or 100%) both hold
    /// from here, which is not true of any partially loaded start. The
    /// 98.5% level keeps the initial node strictly inside the load
    /// bounds, away from the barrier boundary.
    pub fn hot_start(params: &SystemParams, soc_pct: f64) -> Self {
        Self {
            gtg_valve: vec![0.985; params.gtgs.len()],
            gtg_power_w: params.gtgs.iter().map(|g| 0.985 * g.p_max_w).collect(),
            soc_pct,
        }
    }

    /// Near-zero GTG states, as used by the reference simulation study.
    pub fn cold_start(params: &SystemParams, soc_pct: f64) -> Self {
        Self {
            gtg_valve: vec![1e-3; params.gtgs.len()],
            gtg_power_w: vec![1e-3; params.gtgs.len()],
            soc_pct,
        }
    }
}

/// Control input: per-GTG throttle and battery string current.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlInput {
    pub throttle: Vec<f64>,
    pub current_a: f64,
}

impl ControlInput {
    pub fn zeros(n_gtg: usize) -> Self {
        Self { throttle: vec![0.0; n_gtg], current_a: 0.0 }
    }
}

/// Molecular weights and fuel heating value for the CO2 bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct EmissionParams {
    pub m_co2_g_mol: f64,
    pub m_ch4_g_mol: f64,
    pub lhv_ch4_j_kg: f64,
}

impl Default for EmissionParams {
    fn default() -> Self {
        Self { m_co2_g_mol: 44.01, m_ch4_g_mol: 16.04, lhv_ch4_j_kg: 50.0e6 }
    }
}

impl EmissionParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        if self.m_co2_g_mol <= 0.0 || self.m_ch4_g_mol <= 0.0 || self.lhv_ch4_j_kg <= 0.0 {
            return Err(PlantError::InvalidParams("emission parameters must be positive".into()));
        }
        Ok(())
    }
}

/// The full parameter set of one plant instance.
#[derive(Debug, Clone)]
pub struct SystemParams {
    pub gtgs: Vec<GtgParams>,
    pub wtg: WtgParams,
    pub battery: BatteryParams,
    pub emissions: EmissionParams,
}

impl SystemParams {
    /// Three-GTG cluster (55/30/15 MW), 88 MW wind turbine, +-80 MW
    /// battery. This is the default study system.
    pub fn paper_large() -> Self {
        Self {
            gtgs: vec![
                GtgParams::lm2500_like(55.0e6),
                GtgParams::lm2500_like(30.0e6),
                GtgParams::lm2500_like(15.0e6),
            ],
            wtg: WtgParams::default_88mw(),
            battery: BatteryParams::paper_large(),
            emissions: EmissionParams::default(),
        }
    }

    /// Single 4.5 MW GTG, 4.5 MW wind turbine and +-4.5 MW battery with
    /// the component parameter tables carried verbatim. Useful as a small
    /// reference configuration for unit-scale studies.
    pub fn appendix_small() -> Self {
        Self {
            gtgs: vec![GtgParams::lm2500_like(4.5e6)],
            wtg: WtgParams::scaled_cubic(4.5e6),
            battery: BatteryParams::appendix_small(),
            emissions: EmissionParams::default(),
        }
    }

    pub fn n_gtg(&self) -> usize {
        self.gtgs.len()
    }

    pub fn total_gtg_pmax_w(&self) -> f64 {
        self.gtgs.iter().map(|g| g.p_max_w).sum()
    }

    /// Sum of minimum stable loads over the cluster.
    pub fn total_gtg_pmin_w(&self) -> f64 {
        self.gtgs.iter().map(|g| g.pbar_min * g.p_max_w).sum()
    }

    /// Maximum simultaneous output of all subsystems; the upper demand clip.
    pub fn ohps_max_w(&self) -> f64 {
        self.total_gtg_pmax_w() + self.wtg.p_max_w + self.battery.p_max_w
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if self.gtgs.is_empty() {
            return Err(PlantError::InvalidParams("at least one GTG required".into()));
        }
        for g in &self.gtgs {
            g.validate()?;
        }
        self.wtg.validate()?;
        self.battery.validate()?;
        self.emissions.validate()
    }
}

/// Time derivative of the full state vector `[V_j, P_j, ..., soc]`,
/// dimension `2 J + 1`.
pub fn system_derivatives(
    x: &SystemState,
    u: &ControlInput,
    _p: &Exogenous,
    params: &SystemParams,
) -> Vec<f64> {
    let j = params.gtgs.len();
    let mut dx = Vec::with_capacity(2 * j + 1);
    for (i, g) in params.gtgs.iter().enumerate() {
        let (dv, dp) = gtg_derivatives(x.gtg_valve[i], x.gtg_power_w[i], u.throttle[i], g);
        dx.push(dv);
        dx.push(dp);
    }
    dx.push(soc_derivative(u.current_a, &params.battery));
    dx
}

/// Outcome of one explicit Euler step of the plant.
#[derive(Debug, Clone)]
pub struct EulerStep {
    pub state: SystemState,
    /// True when the SOC had to be clamped back into its admissible band.
    pub soc_clamped: bool,
}

/// One explicit Euler step `x + dt f(x, u, p)`. The plant-side SOC is
/// clamped to its band and the clamp is flagged rather than treated as
/// an error, so long runs survive aggressive tuning while violations
/// stay visible.
pub fn euler_step(
    x: &SystemState,
    u: &ControlInput,
    p: &Exogenous,
    dt_s: f64,
    params: &SystemParams,
) -> EulerStep {
    debug_assert!(dt_s > 0.0);
    let dx = system_derivatives(x, u, p, params);
    let j = params.gtgs.len();
    let mut valve = Vec::with_capacity(j);
    let mut power = Vec::with_capacity(j);
    for i in 0..j {
        valve.push(x.gtg_valve[i] + dt_s * dx[2 * i]);
        power.push(x.gtg_power_w[i] + dt_s * dx[2 * i + 1]);
    }
    let soc_raw = x.soc_pct + dt_s * dx[2 * j];
    let soc = soc_raw.clamp(params.battery.soc_min_pct, params.battery.soc_max_pct);
    EulerStep {
        state: SystemState { gtg_valve: valve, gtg_power_w: power, soc_pct: soc },
        soc_clamped: soc != soc_raw,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_gtg() -> SystemParams {
        SystemParams::paper_large()
    }

    #[test]
    fn origin_is_an_equilibrium() {
        let params = three_gtg();
        let x = SystemState { gtg_valve: vec![0.0; 3], gtg_power_w: vec![0.0; 3], soc_pct: 50.0 };
        let u = ControlInput::zeros(3);
        let p = Exogenous { v_wind_mps: 0.0, p_wtg_w: 0.0 };
        let dx = system_derivatives(&x, &u, &p, &params);
        assert!(dx.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn derivative_dimension_matches_state() {
        let params = three_gtg();
        let x = SystemState::hot_start(&params, 70.0);
        let u = ControlInput::zeros(3);
        let p = Exogenous { v_wind_mps: 8.0, p_wtg_w: 1e6 };
        assert_eq!(system_derivatives(&x, &u, &p, &params).len(), 7);
        assert_eq!(x.dim(), 7);
    }

    #[test]
    fn single_gtg_composition_reduces_to_parts() {
        let params = SystemParams::appendix_small();
        let x = SystemState {
            gtg_valve: vec![0.4],
            gtg_power_w: vec![1.0e6],
            soc_pct: 60.0,
        };
        let u = ControlInput { throttle: vec![0.9], current_a: 12.0 };
        let p = Exogenous { v_wind_mps: 5.0, p_wtg_w: 0.5e6 };
        let dx = system_derivatives(&x, &u, &p, &params);
        let (dv, dp) = gtg_derivatives(0.4, 1.0e6, 0.9, &params.gtgs[0]);
        assert_eq!(dx[0], dv);
        assert_eq!(dx[1], dp);
        assert_eq!(dx[2], soc_derivative(12.0, &params.battery));
    }

    #[test]
    fn equilibrium_input_leaves_state_unchanged() {
        let params = three_gtg();
        let x = SystemState {
            gtg_valve: vec![0.5, 0.5, 0.5],
            gtg_power_w: params.gtgs.iter().map(|g| 0.5 * g.p_max_w).collect(),
            soc_pct: 70.0,
        };
        let u = ControlInput { throttle: vec![0.5, 0.5, 0.5], current_a: 0.0 };
        let p = Exogenous { v_wind_mps: 0.0, p_wtg_w: 0.0 };
        let step = euler_step(&x, &u, &p, 150.0, &params);
        assert!(!step.soc_clamped);
        assert_eq!(step.state, x);
    }

    #[test]
    fn euler_convergence_is_first_order() {
        // Constant-throttle step response vs a very fine reference run;
        // halving dt should roughly halve the error.
        let params = SystemParams::appendix_small();
        let u = ControlInput { throttle: vec![1.0], current_a: 0.0 };
        let p = Exogenous { v_wind_mps: 0.0, p_wtg_w: 0.0 };
        let t_end = 2.0;

        let run = |dt: f64| -> f64 {
            let mut x = SystemState {
                gtg_valve: vec![0.0],
                gtg_power_w: vec![0.0],
                soc_pct: 50.0,
            };
            let steps = (t_end / dt).round() as usize;
            for _ in 0..steps {
                x = euler_step(&x, &u, &p, dt, &params).state;
            }
            x.gtg_valve[0]
        };

        let reference = run(1e-4);
        let e1 = (run(0.02) - reference).abs();
        let e2 = (run(0.01) - reference).abs();
        let ratio = e1 / e2;
        assert!((1.6..2.4).contains(&ratio), "convergence ratio {ratio}");
    }

    #[test]
    fn soc_clamp_is_flagged() {
        let params = three_gtg();
        let x = SystemState {
            gtg_valve: vec![0.0; 3],
            gtg_power_w: vec![0.0; 3],
            soc_pct: params.battery.soc_min_pct + 0.01,
        };
        // Large sustained discharge drives SOC through the floor.
        let u = ControlInput { throttle: vec![0.0; 3], current_a: params.battery.i_max_a };
        let p = Exogenous { v_wind_mps: 0.0, p_wtg_w: 0.0 };
        let step = euler_step(&x, &u, &p, 150.0, &params);
        assert!(step.soc_clamped);
        assert_eq!(step.state.soc_pct, params.battery.soc_min_pct);
    }

    #[test]
    fn presets_validate() {
        SystemParams::paper_large().validate().unwrap();
        SystemParams::appendix_small().validate().unwrap();
    }
}

//! Battery: Tremblay-style cell voltage, pack aggregation and coulomb
//! counting. One discharge-form voltage expression is used for both
//! current directions; positive current discharges the battery and
//! produces positive grid power.

use super::PlantError;
use crate::autodiff::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct BatteryParams {
    /// Cell capacity [Ah].
    pub capacity_q_ah: f64,
    /// Constant cell potential [V].
    pub e0_v: f64,
    /// Internal resistance [Ohm].
    pub r_internal_ohm: f64,
    /// Polarisation constant [V/Ah].
    pub polarization_k: f64,
    /// Exponential-zone amplitude [V].
    pub exp_amplitude_a_v: f64,
    /// Exponential-zone time-constant inverse [1/Ah].
    pub exp_time_inv_b: f64,
    /// Parallel packs per battery.
    pub n_packs: f64,
    /// Series cells per pack.
    pub n_cells: f64,
    /// Grid-side power limits [W] (charge negative).
    pub p_min_w: f64,
    pub p_max_w: f64,
    /// Admissible SOC band [%].
    pub soc_min_pct: f64,
    pub soc_max_pct: f64,
    /// String current limits [A] (charge negative).
    pub i_min_a: f64,
    pub i_max_a: f64,
}

impl BatteryParams {
    /// The 4.5 MW reference battery: 421 packs x 626 cells of a 6.5 Ah
    /// cell (E0 1.28 V, R 2 mOhm, K 9.1 mV/Ah, A 111 mV, B 2.31 /Ah).
    pub fn appendix_small() -> Self {
        Self {
            capacity_q_ah: 6.5,
            e0_v: 1.28,
            r_internal_ohm: 2.0e-3,
            polarization_k: 9.1e-3,
            exp_amplitude_a_v: 111.0e-3,
            exp_time_inv_b: 2.31,
            n_packs: 421.0,
            n_cells: 626.0,
            p_min_w: -4.5e6,
            p_max_w: 4.5e6,
            soc_min_pct: 10.0,
            soc_max_pct: 100.0,
            i_min_a: -200.0,
            i_max_a: 200.0,
        }
    }

    /// The +-80 MW study battery. The cell is the reference cell scaled
    /// 25x in capacity (Q x25, K and B /25), which leaves the voltage-
    /// vs-SOC curve unchanged, and the pack count is chosen so that
    /// discharge power at the 200 A current limit is about 80 MW, giving
    /// roughly 97 MWh of storage.
    pub fn paper_large() -> Self {
        Self {
            capacity_q_ah: 162.5,
            e0_v: 1.28,
            r_internal_ohm: 2.0e-3,
            polarization_k: 9.1e-3 / 25.0,
            exp_amplitude_a_v: 111.0e-3,
            exp_time_inv_b: 2.31 / 25.0,
            n_packs: 747.0,
            n_cells: 626.0,
            p_min_w: -80.0e6,
            p_max_w: 80.0e6,
            soc_min_pct: 10.0,
            soc_max_pct: 100.0,
            i_min_a: -200.0,
            i_max_a: 200.0,
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if self.capacity_q_ah <= 0.0 {
            return Err(PlantError::InvalidParams("battery capacity must be positive".into()));
        }
        if self.soc_min_pct >= self.soc_max_pct {
            return Err(PlantError::InvalidParams("battery SOC band is empty".into()));
        }
        if !(self.p_min_w < 0.0 && self.p_max_w > 0.0) {
            return Err(PlantError::InvalidParams(
                "battery power limits must straddle zero".into(),
            ));
        }
        if !(self.i_min_a < 0.0 && self.i_max_a > 0.0) {
            return Err(PlantError::InvalidParams(
                "battery current limits must straddle zero".into(),
            ));
        }
        Ok(())
    }
}

/// Extracted charge [Ah] at a given SOC.
fn extracted_charge(soc_pct: f64, p: &BatteryParams) -> f64 {
    p.capacity_q_ah * (1.0 - soc_pct / 100.0)
}

/// Per-cell terminal voltage at the given SOC and string current.
///
/// Errors with [`PlantError::DegenerateCharge`] at or beyond full
/// depletion, where the polarisation term is singular.
pub fn battery_voltage(soc_pct: f64, current_a: f64, p: &BatteryParams) -> Result<f64, PlantError> {
    let it = extracted_charge(soc_pct, p);
    if it >= p.capacity_q_ah {
        return Err(PlantError::DegenerateCharge { extracted: it, capacity: p.capacity_q_ah });
    }
    Ok(battery_voltage_smooth(soc_pct, current_a, p))
}

/// The same voltage expression without the depletion guard, generic over
/// the scalar type for use inside the optimal control problem, where the
/// SOC bounds keep the evaluation away from the singularity.
pub fn battery_voltage_smooth<T: Scalar>(soc_pct: T, current_a: T, p: &BatteryParams) -> T {
    let q = p.capacity_q_ah;
    let it = (-soc_pct / 100.0 + 1.0) * q;
    let polarization = it / (-it + q) * (p.polarization_k * q);
    let exponential = (-it * p.exp_time_inv_b).exp() * p.exp_amplitude_a_v;
    -polarization + exponential - current_a * p.r_internal_ohm + p.e0_v
}

/// Grid-side battery power [W]: packs x cells x cell voltage x current.
/// Positive when discharging.
pub fn battery_power<T: Scalar>(soc_pct: T, current_a: T, p: &BatteryParams) -> T {
    battery_voltage_smooth(soc_pct, current_a, p) * current_a * (p.n_packs * p.n_cells)
}

/// Coulomb counting: `d(soc)/dt = -100 I / (3600 Q)` [%/s].
pub fn soc_derivative<T: Scalar>(current_a: T, p: &BatteryParams) -> T {
    current_a * (-100.0 / (3600.0 * p.capacity_q_ah))
}

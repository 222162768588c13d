//! Gas-turbine generator: two-stage first-order cascade (throttle ->
//! fuel valve -> power), quadratic fuel-efficiency curve with a
//! semi-continuous cutoff at the minimum stable load, and stoichiometric
//! CO2 accounting.

use super::PlantError;
use crate::autodiff::Scalar;

/// Parameters of one gas-turbine generator.
#[derive(Debug, Clone, Copy)]
pub struct GtgParams {
    /// Fuel-valve lag time constant [s].
    pub tau_v_s: f64,
    /// Power lag time constant [s].
    pub tau_p_s: f64,
    /// Maximum power output [W].
    pub p_max_w: f64,
    /// Minimum stable load as a fraction of `p_max_w`.
    pub pbar_min: f64,
    /// Efficiency curve coefficients: eta = alpha1 pbar^2 + alpha2 pbar.
    pub alpha1: f64,
    pub alpha2: f64,
}

impl GtgParams {
    /// An aeroderivative-class turbine scaled to the requested rating:
    /// 0.5 s valve and power lags, 35% minimum stable load, and an
    /// efficiency curve anchored to 50.54% at full load.
    pub fn lm2500_like(p_max_w: f64) -> Self {
        Self {
            tau_v_s: 0.5,
            tau_p_s: 0.5,
            p_max_w,
            pbar_min: 0.35,
            alpha1: -0.1606,
            alpha2: 0.6660,
        }
    }

    pub fn p_min_w(&self) -> f64 {
        self.pbar_min * self.p_max_w
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if self.tau_v_s <= 0.0 || self.tau_p_s <= 0.0 {
            return Err(PlantError::InvalidParams("GTG time constants must be positive".into()));
        }
        if self.p_max_w <= 0.0 {
            return Err(PlantError::InvalidParams("GTG p_max must be positive".into()));
        }
        if !(self.pbar_min > 0.0 && self.pbar_min < 1.0) {
            return Err(PlantError::InvalidParams(format!(
                "GTG pbar_min {} must lie strictly between 0 and 1",
                self.pbar_min
            )));
        }
        // The quadratic must stay nonnegative and nondecreasing on the
        // admissible load band; its slope 2 a1 x + a2 is linear in x, so
        // checking the band endpoints suffices.
        let slope_lo = 2.0 * self.alpha1 * self.pbar_min + self.alpha2;
        let slope_hi = 2.0 * self.alpha1 + self.alpha2;
        let eta_min = self.alpha1 * self.pbar_min * self.pbar_min + self.alpha2 * self.pbar_min;
        if slope_lo < 0.0 || slope_hi < 0.0 || eta_min < 0.0 {
            return Err(PlantError::InvalidParams(
                "efficiency curve must be nonnegative and nondecreasing on [pbar_min, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Valve and power derivatives of the two-stage cascade:
/// `dV/dt = (T - V)/tau_v`, `dP/dt = (V p_max - P)/tau_p`.
pub fn gtg_derivatives<T: Scalar>(valve: T, power_w: T, throttle: T, p: &GtgParams) -> (T, T) {
    let dv = (throttle - valve) / p.tau_v_s;
    let dp = (valve * p.p_max_w - power_w) / p.tau_p_s;
    (dv, dp)
}

/// Load fraction `P / p_max`.
pub fn normalized_power(power_w: f64, p: &GtgParams) -> f64 {
    power_w / p.p_max_w
}

/// Efficiency with the semi-continuous cutoff: zero below the minimum
/// stable load. This is the plant/KPI-side truth.
pub fn gtg_efficiency_semicontinuous(pbar: f64, p: &GtgParams) -> f64 {
    if pbar >= p.pbar_min {
        gtg_efficiency_smooth(pbar, p)
    } else {
        0.0
    }
}

/// Smooth efficiency surrogate used inside the controllers: the same
/// polynomial with no cutoff. Coincides with the semi-continuous version
/// on `[pbar_min, 1]` and at zero; each formulation's constraints keep
/// the optimizer out of the gap in between.
pub fn gtg_efficiency_smooth<T: Scalar>(pbar: T, p: &GtgParams) -> T {
    pbar * pbar * p.alpha1 + pbar * p.alpha2
}

/// CO2 mass flow [kg/s] of a turbine producing `power_w` at efficiency
/// `eta`, assuming stoichiometric combustion of methane.
///
/// A turbine that is off (zero power or zero efficiency) emits nothing.
/// The `eta = 0, P > 0` corner cannot arise from the plant because
/// efficiency only vanishes below minimum load, where the accounting
/// treats the turbine as off; if a caller produces it anyway the rate is
/// reported as zero and the caller-visible diagnostics counter should be
/// bumped (see the trajectory diagnostics).
pub fn co2_rate(power_w: f64, eta: f64, e: &super::EmissionParams) -> f64 {
    if power_w <= 0.0 || eta <= 0.0 {
        return 0.0;
    }
    (e.m_co2_g_mol / e.m_ch4_g_mol) * power_w / (eta * e.lhv_ch4_j_kg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::EmissionParams;

    fn gtg() -> GtgParams {
        GtgParams::lm2500_like(55.0e6)
    }

    #[test]
    fn steady_state_has_zero_derivatives() {
        let p = gtg();
        let (dv, dp) = gtg_derivatives(0.5, 0.5 * p.p_max_w, 0.5, &p);
        assert_eq!(dv, 0.0);
        assert_eq!(dp, 0.0);
    }

    #[test]
    fn first_order_lag_at_origin() {
        let p = GtgParams { tau_v_s: 0.5, ..gtg() };
        let (dv, _) = gtg_derivatives(0.0, 0.0, 1.0, &p);
        assert_eq!(dv, 2.0);
    }

    #[test]
    fn cascade_step_response_matches_closed_form() {
        // tau_v = tau_p = 0.5, T = 1 held: V(t) = 1 - exp(-t/tau).
        let p = gtg();
        let dt = 1e-4;
        let mut v = 0.0;
        let mut t = 0.0;
        while t < 2.0 - 0.5 * dt {
            v += dt * (1.0 - v) / p.tau_v_s;
            t += dt;
        }
        let expected = 1.0 - (-4.0f64).exp();
        assert!((v - expected).abs() < 1e-3 * expected, "v={v} vs {expected}");
    }

    #[test]
    fn gtg_dynamics_are_lipschitz() {
        // |f(a) - f(b)| <= L |a - b| with L = 1/tau_v for the valve row
        // and max(p_max, 1)/tau_p for the power row, on random pairs.
        let p = gtg();
        let mut rng = crate::rng::Pcg64::seeded(11);
        let l_v = 1.0 / p.tau_v_s;
        let l_p = (p.p_max_w / p.tau_p_s).max(1.0 / p.tau_p_s);
        for _ in 0..200 {
            let a = (rng.uniform(), rng.uniform() * p.p_max_w, rng.uniform());
            let b = (rng.uniform(), rng.uniform() * p.p_max_w, rng.uniform());
            let (dva, dpa) = gtg_derivatives(a.0, a.1, a.2, &p);
            let (dvb, dpb) = gtg_derivatives(b.0, b.1, b.2, &p);
            let dist = ((a.0 - b.0).abs()).max((a.1 - b.1).abs()).max((a.2 - b.2).abs());
            assert!((dva - dvb).abs() <= 2.0 * l_v * dist + 1e-9);
            assert!((dpa - dpb).abs() <= 2.0 * l_p * dist + 1e-9);
        }
    }

    #[test]
    fn normalized_power_examples() {
        let p = gtg();
        assert_eq!(normalized_power(0.0, &p), 0.0);
        assert_eq!(normalized_power(p.p_max_w, &p), 1.0);
        assert!((normalized_power(19.25e6, &p) - 0.35).abs() < 1e-12);
    }

    #[test]
    fn semicontinuous_efficiency_cutoff() {
        let p = gtg();
        assert_eq!(gtg_efficiency_semicontinuous(0.2, &p), 0.0);
        assert_eq!(gtg_efficiency_semicontinuous(0.0, &p), 0.0);
        assert!((gtg_efficiency_semicontinuous(1.0, &p) - 0.5054).abs() < 1e-12);
    }

    #[test]
    fn smooth_efficiency_examples() {
        let p = gtg();
        assert_eq!(gtg_efficiency_smooth(0.0, &p), 0.0);
        let eta_min = -0.1606 * 0.35 * 0.35 + 0.6660 * 0.35;
        assert!((gtg_efficiency_smooth(0.35, &p) - eta_min).abs() < 1e-15);
        assert!((eta_min - 0.2134).abs() < 5e-5);
        assert!((gtg_efficiency_smooth(1.0, &p) - 0.5054).abs() < 1e-12);
    }

    #[test]
    fn smooth_equals_semicontinuous_above_cutoff() {
        let p = gtg();
        for i in 0..=100 {
            let pbar = p.pbar_min + (1.0 - p.pbar_min) * i as f64 / 100.0;
            // Same polynomial evaluation on both paths, so bitwise equal.
            assert_eq!(gtg_efficiency_smooth(pbar, &p), gtg_efficiency_semicontinuous(pbar, &p));
        }
    }

    #[test]
    fn co2_rate_examples() {
        let e = EmissionParams::default();
        assert_eq!(co2_rate(0.0, 0.5, &e), 0.0);
        let expected = (44.01 / 16.04) * 55.0e6 / (0.5054 * 50.0e6);
        let got = co2_rate(55.0e6, 0.5054, &e);
        assert!((got - expected).abs() <= 1e-9 * expected);
        assert!((got - 5.973).abs() < 2e-3);
    }

    #[test]
    fn co2_rate_is_homogeneous_in_power() {
        let e = EmissionParams::default();
        let mut rng = crate::rng::Pcg64::seeded(5);
        for _ in 0..50 {
            let p = rng.uniform_in(1.0, 60.0e6);
            let eta = rng.uniform_in(0.1, 0.6);
            let one = co2_rate(p, eta, &e);
            let two = co2_rate(2.0 * p, eta, &e);
            assert!((two - 2.0 * one).abs() <= 1e-12 * two.abs());
            // Halving eta doubles the rate at fixed power.
            let half_eta = co2_rate(p, 0.5 * eta, &e);
            assert!((half_eta - 2.0 * one).abs() <= 1e-12 * half_eta.abs());
        }
    }

    #[test]
    fn degenerate_eta_with_positive_power_is_flagged_zero() {
        let e = EmissionParams::default();
        assert_eq!(co2_rate(1.0e6, 0.0, &e), 0.0);
    }
}

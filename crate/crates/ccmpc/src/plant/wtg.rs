//! Wind turbine generator: a static power curve for the system studies,
//! plus the detailed aerodynamic lookup approximations (power coefficient
//! polynomial and generator-torque sigmoid) for offline fidelity checks.
//! The detailed model is never used inside the optimal control problem.

use super::PlantError;
use std::path::Path;

/// Static power curve parameters.
#[derive(Debug, Clone)]
pub struct WtgParams {
    /// Monotone-in-speed breakpoints `(wind speed [m/s], power [W])`.
    /// Power is zero below the first and above the last breakpoint.
    pub power_curve: Vec<(f64, f64)>,
    /// Curve maximum [W].
    pub p_max_w: f64,
    pub detailed: Option<DetailedWtgParams>,
}

impl WtgParams {
    /// Default 88 MW curve: cut-in 3 m/s, rated 12 m/s, cut-out 25 m/s,
    /// cubic rise between cut-in and rated.
    pub fn default_88mw() -> Self {
        Self::scaled_cubic(88.0e6)
    }

    /// Cubic curve between cut-in (3 m/s) and rated (12 m/s) scaled to
    /// `p_max_w`, flat to cut-out at 25 m/s, sampled at 0.5 m/s.
    pub fn scaled_cubic(p_max_w: f64) -> Self {
        let cut_in: f64 = 3.0;
        let rated: f64 = 12.0;
        let cut_out: f64 = 25.0;
        let denom = rated.powi(3) - cut_in.powi(3);
        let mut curve = Vec::new();
        let mut v = cut_in;
        while v < rated - 1e-9 {
            curve.push((v, p_max_w * (v.powi(3) - cut_in.powi(3)) / denom));
            v += 0.5;
        }
        curve.push((rated, p_max_w));
        curve.push((cut_out, p_max_w));
        Self { power_curve: curve, p_max_w, detailed: None }
    }

    pub fn from_breakpoints(curve: Vec<(f64, f64)>) -> Result<Self, PlantError> {
        let p_max_w = curve.iter().map(|&(_, p)| p).fold(0.0, f64::max);
        let wtg = Self { power_curve: curve, p_max_w, detailed: None };
        wtg.validate()?;
        Ok(wtg)
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if self.power_curve.len() < 2 {
            return Err(PlantError::InvalidParams("power curve needs at least 2 points".into()));
        }
        for w in self.power_curve.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(PlantError::InvalidParams(
                    "power curve speeds must be strictly increasing".into(),
                ));
            }
        }
        for &(_, p) in &self.power_curve {
            if p < 0.0 || p > self.p_max_w + 1e-9 {
                return Err(PlantError::InvalidParams(
                    "power curve values must lie in [0, p_max]".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Piecewise-linear power curve evaluation; zero below cut-in and above
/// cut-out.
pub fn wind_power(v_mps: f64, params: &WtgParams) -> f64 {
    let curve = &params.power_curve;
    let (first, last) = (curve[0], curve[curve.len() - 1]);
    if v_mps < first.0 || v_mps > last.0 {
        return 0.0;
    }
    for w in curve.windows(2) {
        let ((v0, p0), (v1, p1)) = (w[0], w[1]);
        if v_mps <= v1 {
            return p0 + (p1 - p0) * (v_mps - v0) / (v1 - v0);
        }
    }
    last.1
}

/// Load a power curve from a CSV file with header
/// `wind_speed_mps,power_w` and strictly increasing speeds.
pub fn load_power_curve_csv(path: &Path) -> Result<WtgParams, PlantError> {
    let text = std::fs::read_to_string(path).map_err(|e| PlantError::CurveCsv {
        line: 0,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "wind_speed_mps,power_w" => {}
        _ => {
            return Err(PlantError::CurveCsv {
                line: 1,
                message: "expected header `wind_speed_mps,power_w`".into(),
            })
        }
    }
    let mut curve = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let parse = |s: Option<&str>, what: &str| -> Result<f64, PlantError> {
            s.map(str::trim)
                .and_then(|t| t.parse::<f64>().ok())
                .ok_or_else(|| PlantError::CurveCsv {
                    line: line_no,
                    message: format!("bad {what} value"),
                })
        };
        let v = parse(fields.next(), "wind_speed_mps")?;
        let p = parse(fields.next(), "power_w")?;
        if fields.next().is_some() {
            return Err(PlantError::CurveCsv { line: line_no, message: "too many columns".into() });
        }
        if let Some(&(prev, _)) = curve.last() {
            if v <= prev {
                return Err(PlantError::CurveCsv {
                    line: line_no,
                    message: "speeds must be strictly increasing".into(),
                });
            }
        }
        if p < 0.0 {
            return Err(PlantError::CurveCsv { line: line_no, message: "negative power".into() });
        }
        curve.push((v, p));
    }
    WtgParams::from_breakpoints(curve)
}

/// Detailed aerodynamic model parameters (lookup-table approximations).
#[derive(Debug, Clone, Copy)]
pub struct DetailedWtgParams {
    /// Power-coefficient polynomial coefficients, in the order
    /// p00, p10, p01, p20, p11, p02, p21, p12, p03.
    pub cp_coeffs: [f64; 9],
    pub rotor_area_m2: f64,
    pub blade_radius_m: f64,
    pub gear_ratio: f64,
    pub turbine_inertia_kgm2: f64,
    pub generator_inertia_kgm2: f64,
    pub generator_time_constant_s: f64,
    pub torque_max_nm: f64,
    pub sigmoid_steepness: f64,
    pub sigmoid_midpoint_rad_s: f64,
    pub air_density_kg_m3: f64,
}

impl DetailedWtgParams {
    pub fn reference() -> Self {
        Self {
            cp_coeffs: [
                -0.118_600_000,
                0.128_900_000,
                0.009_222_000,
                -0.006_314_000,
                -0.005_206_000,
                -0.000_159_800,
                -0.000_102_600,
                0.000_040_100,
                0.000_000_806,
            ],
            rotor_area_m2: 12_468.98,
            blade_radius_m: 63.0,
            gear_ratio: 97.0,
            turbine_inertia_kgm2: 35_444_067.0,
            generator_inertia_kgm2: 534.116,
            generator_time_constant_s: 0.5,
            torque_max_nm: 45_700.0,
            sigmoid_steepness: 0.099,
            sigmoid_midpoint_rad_s: 97.0,
            air_density_kg_m3: 1.225,
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let positives = [
            self.rotor_area_m2,
            self.blade_radius_m,
            self.gear_ratio,
            self.turbine_inertia_kgm2,
            self.generator_inertia_kgm2,
            self.generator_time_constant_s,
            self.torque_max_nm,
            self.sigmoid_steepness,
            self.sigmoid_midpoint_rad_s,
            self.air_density_kg_m3,
        ];
        if positives.iter().any(|&v| v <= 0.0) {
            return Err(PlantError::InvalidParams(
                "detailed WTG physical quantities must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Power coefficient as a function of tip-speed ratio and blade pitch
/// [deg], per the regression
/// `p00 + p10 l + p01 b + p20 l^2 + p11 l b + p02 b^2 + p21 l^2 + p12 l b^2 + p03 b^3`.
pub fn cp_polynomial(lambda: f64, beta_deg: f64, p: &DetailedWtgParams) -> f64 {
    let [p00, p10, p01, p20, p11, p02, p21, p12, p03] = p.cp_coeffs;
    p00 + p10 * lambda
        + p01 * beta_deg
        + p20 * lambda * lambda
        + p11 * lambda * beta_deg
        + p02 * beta_deg * beta_deg
        + p21 * lambda * lambda
        + p12 * lambda * beta_deg * beta_deg
        + p03 * beta_deg * beta_deg * beta_deg
}

/// Tip-speed ratio `omega R / v`.
pub fn tip_speed_ratio(omega_rad_s: f64, v_mps: f64, p: &DetailedWtgParams) -> f64 {
    omega_rad_s * p.blade_radius_m / v_mps
}

/// Generator torque demand as a sigmoid in generator speed.
pub fn generator_torque_sigmoid(omega_gen_rad_s: f64, p: &DetailedWtgParams) -> f64 {
    p.torque_max_nm
        / (1.0 + (-p.sigmoid_steepness * (omega_gen_rad_s - p.sigmoid_midpoint_rad_s)).exp())
}

/// Aerodynamic rotor power `0.5 rho A Cp(lambda, beta) v^3` [W].
pub fn aerodynamic_power(v_mps: f64, omega_rad_s: f64, beta_deg: f64, p: &DetailedWtgParams) -> f64 {
    let lambda = tip_speed_ratio(omega_rad_s, v_mps, p);
    0.5 * p.air_density_kg_m3 * p.rotor_area_m2 * cp_polynomial(lambda, beta_deg, p) * v_mps.powi(3)
}

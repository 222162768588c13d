//! Exogenous signals: hourly wind series (from CSV or bundled synthetic
//! walks), stochastic demand generation with clipping, and forecast
//! windows for the receding horizon.
//!
//! Demand follows the wind: once per hour a Gaussian draw around
//! `P_wtg + sum_j 0.65 p_max_j` with standard deviation
//! `0.85 P_wtg` is taken, held constant within the hour on the
//! simulation grid, and clipped to what the plant can actually deliver:
//! `sum_j p_min_j <= demand <= p_gtg,max + p_wtg,max + p_bat,max`.

use crate::ocp::{Forecast, HorizonGrid};
use crate::plant::{wind_power, SystemParams};
use crate::rng::Pcg64;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("wind CSV, line {line}: {message}")]
    WindCsv { line: usize, message: String },
    #[error("unknown bundled wind series `{0}`")]
    UnknownBundled(String),
    #[error("window [{t0_s}, {t_end_s}) s exceeds the scenario span of {available_s} s")]
    WindowOutOfRange { t0_s: f64, t_end_s: f64, available_s: f64 },
    #[error("scenario needs {needed_s} s of wind data (duration + horizon), series has {available_s} s")]
    SeriesTooShort { needed_s: f64, available_s: f64 },
}

/// Hourly wind speeds, zero-order held onto the simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WindSeries {
    pub start_epoch_s: i64,
    pub speeds_mps: Vec<f64>,
}

impl WindSeries {
    /// Series span in seconds under zero-order hold.
    pub fn span_s(&self) -> f64 {
        self.speeds_mps.len() as f64 * 3600.0
    }

    /// Held speed at simulation time `t` (relative to the series start).
    pub fn speed_at(&self, t_s: f64) -> Result<f64, ScenarioError> {
        if t_s < 0.0 || t_s >= self.span_s() {
            return Err(ScenarioError::WindowOutOfRange {
                t0_s: t_s,
                t_end_s: t_s,
                available_s: self.span_s(),
            });
        }
        Ok(self.speeds_mps[(t_s / 3600.0) as usize])
    }
}

/// Days from civil date (proleptic Gregorian), for the ISO-8601 parser.
fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = (y - era * 400) as u64;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + u64::from(doy);
    era * 146_097 + doe as i64 - 719_468
}

/// Parse `YYYY-MM-DDTHH:MM:SS` with an optional trailing `Z`.
fn parse_iso8601(text: &str) -> Option<i64> {
    let t = text.trim().trim_end_matches('Z');
    let bytes = t.as_bytes();
    if bytes.len() != 19
        || bytes[4] != b'-'
        || bytes[7] != b'-'
        || bytes[10] != b'T'
        || bytes[13] != b':'
        || bytes[16] != b':'
    {
        return None;
    }
    let num = |s: &str| s.parse::<i64>().ok();
    let (y, mo, d) = (num(&t[0..4])?, num(&t[5..7])?, num(&t[8..10])?);
    let (h, mi, se) = (num(&t[11..13])?, num(&t[14..16])?, num(&t[17..19])?);
    if !(1..=12).contains(&mo) || !(1..=31).contains(&d) || h > 23 || mi > 59 || se > 59 {
        return None;
    }
    Some(days_from_civil(y, mo as u32, d as u32) * 86_400 + h * 3600 + mi * 60 + se)
}

/// Load an hourly wind series from a CSV with header
/// `timestamp_iso8601,wind_speed_mps`. Timestamps must advance in exact
/// one-hour steps; speeds must be nonnegative.
pub fn load_wind_csv(path: &Path) -> Result<WindSeries, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::WindCsv {
        line: 0,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "timestamp_iso8601,wind_speed_mps" => {}
        _ => {
            return Err(ScenarioError::WindCsv {
                line: 1,
                message: "expected header `timestamp_iso8601,wind_speed_mps`".into(),
            })
        }
    }
    let mut start = None;
    let mut last: Option<i64> = None;
    let mut speeds = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let stamp = fields.next().and_then(parse_iso8601).ok_or_else(|| ScenarioError::WindCsv {
            line: line_no,
            message: "bad ISO-8601 timestamp".into(),
        })?;
        let speed: f64 = fields
            .next()
            .map(str::trim)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| ScenarioError::WindCsv {
                line: line_no,
                message: "bad wind_speed_mps value".into(),
            })?;
        if fields.next().is_some() {
            return Err(ScenarioError::WindCsv { line: line_no, message: "too many columns".into() });
        }
        if speed < 0.0 {
            return Err(ScenarioError::WindCsv {
                line: line_no,
                message: format!("negative wind speed {speed}"),
            });
        }
        if let Some(prev) = last {
            if stamp <= prev {
                return Err(ScenarioError::WindCsv {
                    line: line_no,
                    message: "timestamps must be strictly increasing".into(),
                });
            }
            if stamp - prev != 3600 {
                return Err(ScenarioError::WindCsv {
                    line: line_no,
                    message: format!("expected hourly spacing, got {} s", stamp - prev),
                });
            }
        } else {
            start = Some(stamp);
        }
        last = Some(stamp);
        speeds.push(speed);
    }
    if speeds.is_empty() {
        return Err(ScenarioError::WindCsv { line: 1, message: "no data rows".into() });
    }
    Ok(WindSeries { start_epoch_s: start.unwrap(), speeds_mps: speeds })
}

/// Deterministic smooth random walk in `[lo, hi]` m/s; the bundled
/// series below are fixed (seed, length) instances of this generator.
pub fn synthetic_wind_walk(seed: u64, hours: usize, lo: f64, hi: f64) -> WindSeries {
    let mut rng = Pcg64::stream(seed, "synthetic-wind");
    let mut v = 0.5 * (lo + hi) * 0.9;
    let mut drift = 0.0;
    let mut speeds = Vec::with_capacity(hours);
    for _ in 0..hours {
        speeds.push(v);
        drift = 0.75 * drift + 0.9 * rng.gaussian();
        v += drift;
        // Reflect at the band edges to stay inside without flat-lining.
        if v < lo {
            v = lo + (lo - v).min(hi - lo);
            drift = -0.5 * drift;
        }
        if v > hi {
            v = hi - (v - hi).min(hi - lo);
            drift = -0.5 * drift;
        }
    }
    WindSeries { start_epoch_s: 0, speeds_mps: speeds }
}

/// A bundled synthetic series by identifier. `tampen-like-24h` covers a
/// day plus one hour; `tampen-like-48h` covers the day-long study with a
/// five-hour horizon tail to spare.
pub fn bundled_wind(id: &str) -> Result<WindSeries, ScenarioError> {
    match id {
        "tampen-like-24h" => Ok(synthetic_wind_walk(1907, 25, 4.0, 18.0)),
        "tampen-like-48h" => Ok(synthetic_wind_walk(1907, 49, 4.0, 18.0)),
        other => Err(ScenarioError::UnknownBundled(other.to_string())),
    }
}

/// Per-step demand on the simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandSeries {
    pub dt_s: f64,
    pub demand_w: Vec<f64>,
}

impl DemandSeries {
    pub fn len(&self) -> usize {
        self.demand_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demand_w.is_empty()
    }
}

/// Demand generation knobs. `noise_frac` scales the hourly standard
/// deviation relative to the wind power; zero gives the noiseless case.
#[derive(Debug, Clone, Copy)]
pub struct DemandConfig {
    pub seed: u64,
    pub dt_s: f64,
    pub mean_frac: f64,
    pub noise_frac: f64,
    pub clip: bool,
}

impl Default for DemandConfig {
    fn default() -> Self {
        Self { seed: 42, dt_s: 150.0, mean_frac: 0.65, noise_frac: 0.85, clip: true }
    }
}

/// One Gaussian draw per hour around `P_wtg + mean_frac sum p_max`,
/// held within the hour on the `dt` grid and clipped to the deliverable
/// band. Deterministic for a fixed seed.
pub fn generate_demand(wind: &WindSeries, params: &SystemParams, cfg: &DemandConfig) -> DemandSeries {
    let mut rng = Pcg64::stream(cfg.seed, "demand");
    let steps_per_hour = (3600.0 / cfg.dt_s).round() as usize;
    let base: f64 = cfg.mean_frac * params.total_gtg_pmax_w();
    let lo = params.total_gtg_pmin_w();
    let hi = params.ohps_max_w();
    let mut demand = Vec::with_capacity(wind.speeds_mps.len() * steps_per_hour);
    for &v in &wind.speeds_mps {
        let p_wtg = wind_power(v, &params.wtg);
        let draw = rng.gaussian();
        let mut d = p_wtg + base + draw * (cfg.noise_frac * p_wtg);
        if cfg.clip {
            d = d.clamp(lo, hi);
        }
        for _ in 0..steps_per_hour {
            demand.push(d);
        }
    }
    DemandSeries { dt_s: cfg.dt_s, demand_w: demand }
}

/// Check that the series cover `duration + horizon`.
pub fn check_span(wind: &WindSeries, duration_s: f64, grid: &HorizonGrid) -> Result<(), ScenarioError> {
    let needed = duration_s + grid.horizon_s();
    if needed > wind.span_s() {
        return Err(ScenarioError::SeriesTooShort { needed_s: needed, available_s: wind.span_s() });
    }
    Ok(())
}

/// Slice the exogenous signals for the horizon starting at `t0`:
/// held wind speeds mapped through the power curve, plus demand.
pub fn forecast_window(
    wind: &WindSeries,
    demand: &DemandSeries,
    params: &SystemParams,
    t0_s: f64,
    grid: &HorizonGrid,
) -> Result<Forecast, ScenarioError> {
    let n = grid.n_steps;
    let t_end = t0_s + n as f64 * grid.dt_s;
    if t0_s < 0.0 || t_end > wind.span_s() + 1e-9 {
        return Err(ScenarioError::WindowOutOfRange {
            t0_s,
            t_end_s: t_end,
            available_s: wind.span_s(),
        });
    }
    let mut v_wind = Vec::with_capacity(n);
    let mut p_wtg = Vec::with_capacity(n);
    let mut p_demand = Vec::with_capacity(n);
    for k in 0..n {
        let t = t0_s + k as f64 * grid.dt_s;
        let step = (t / demand.dt_s).round() as usize;
        if step >= demand.len() {
            return Err(ScenarioError::WindowOutOfRange {
                t0_s,
                t_end_s: t_end,
                available_s: demand.len() as f64 * demand.dt_s,
            });
        }
        let v = wind.speed_at(t)?;
        v_wind.push(v);
        p_wtg.push(wind_power(v, &params.wtg));
        p_demand.push(demand.demand_w[step]);
    }
    Ok(Forecast { v_wind_mps: v_wind, p_wtg_w: p_wtg, p_demand_w: p_demand })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::SystemParams;

    fn write_csv(name: &str, body: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("ccmpc_scenario_tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        std::fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn loads_valid_hourly_csv() {
        let mut body = String::from("timestamp_iso8601,wind_speed_mps\n");
        for h in 0..25 {
            let (day, hour) = (7 + h / 24, h % 24);
            body.push_str(&format!("2019-06-{day:02}T{hour:02}:00:00Z,{}\n", 5.0 + 0.1 * h as f64));
        }
        let series = load_wind_csv(&write_csv("valid.csv", &body)).unwrap();
        assert_eq!(series.speeds_mps.len(), 25);
        assert_eq!(series.speed_at(0.0).unwrap(), 5.0);
        assert_eq!(series.speed_at(3.0 * 3600.0 + 10.0).unwrap(), 5.3);
    }

    #[test]
    fn rejects_negative_speed_naming_the_row() {
        let body = "timestamp_iso8601,wind_speed_mps\n\
                    2019-06-07T00:00:00Z,5.0\n\
                    2019-06-07T01:00:00Z,-1.0\n";
        let err = load_wind_csv(&write_csv("neg.csv", body)).unwrap_err();
        match err {
            ScenarioError::WindCsv { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_non_monotone_timestamps() {
        let body = "timestamp_iso8601,wind_speed_mps\n\
                    2019-06-07T01:00:00Z,5.0\n\
                    2019-06-07T00:00:00Z,6.0\n";
        let err = load_wind_csv(&write_csv("mono.csv", body)).unwrap_err();
        assert!(matches!(err, ScenarioError::WindCsv { line: 3, .. }), "{err}");
    }

    #[test]
    fn bundled_series_properties() {
        let day = bundled_wind("tampen-like-24h").unwrap();
        assert_eq!(day.speeds_mps.len(), 25);
        assert!(day.speeds_mps.iter().all(|&v| (4.0..=18.0).contains(&v)));
        let two_days = bundled_wind("tampen-like-48h").unwrap();
        assert_eq!(two_days.speeds_mps.len(), 49);
        assert!(two_days.speeds_mps.iter().all(|&v| (4.0..=18.0).contains(&v)));
        assert!(bundled_wind("nope").is_err());
        // Same generator, same prefix.
        assert_eq!(day.speeds_mps[..25], two_days.speeds_mps[..25]);
    }

    #[test]
    fn demand_is_deterministic_and_clipped() {
        let params = SystemParams::paper_large();
        let wind = bundled_wind("tampen-like-24h").unwrap();
        let cfg = DemandConfig::default();
        let a = generate_demand(&wind, &params, &cfg);
        let b = generate_demand(&wind, &params, &cfg);
        assert_eq!(a, b);
        assert_eq!(a.len(), 25 * 24);
        let lo = params.total_gtg_pmin_w();
        let hi = params.ohps_max_w();
        assert!((lo - 35.0e6).abs() < 1.0);
        assert!((hi - 268.0e6).abs() < 1.0);
        assert!(a.demand_w.iter().all(|&d| d >= lo - 1e-6 && d <= hi + 1e-6));
    }

    #[test]
    fn demand_is_hourly_piecewise_constant() {
        let params = SystemParams::paper_large();
        let wind = bundled_wind("tampen-like-24h").unwrap();
        let demand = generate_demand(&wind, &params, &DemandConfig::default());
        for (i, chunk) in demand.demand_w.chunks(24).enumerate() {
            assert!(chunk.iter().all(|&d| d == chunk[0]), "hour {i} not constant");
        }
    }

    #[test]
    fn zero_variance_demand_is_wind_plus_base() {
        let params = SystemParams::paper_large();
        let wind = bundled_wind("tampen-like-24h").unwrap();
        let cfg = DemandConfig { noise_frac: 0.0, clip: false, ..Default::default() };
        let demand = generate_demand(&wind, &params, &cfg);
        for h in 0..25 {
            let p_wtg = wind_power(wind.speeds_mps[h], &params.wtg);
            let expected = p_wtg + 0.65 * params.total_gtg_pmax_w();
            assert!((demand.demand_w[h * 24] - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn clipping_saturates_at_system_bounds() {
        let params = SystemParams::paper_large();
        // A huge noise fraction forces draws beyond the deliverable band.
        let wind = bundled_wind("tampen-like-24h").unwrap();
        let cfg = DemandConfig { noise_frac: 50.0, ..Default::default() };
        let demand = generate_demand(&wind, &params, &cfg);
        let hi = params.ohps_max_w();
        let lo = params.total_gtg_pmin_w();
        assert!(demand.demand_w.iter().any(|&d| d == hi || d == lo));
        assert!(demand.demand_w.iter().all(|&d| d >= lo && d <= hi));
    }

    #[test]
    fn forecast_windows_share_overlap() {
        let params = SystemParams::paper_large();
        let wind = bundled_wind("tampen-like-24h").unwrap();
        let demand = generate_demand(&wind, &params, &DemandConfig::default());
        let grid = HorizonGrid { dt_s: 150.0, n_steps: 24 };
        let a = forecast_window(&wind, &demand, &params, 0.0, &grid).unwrap();
        assert_eq!(a.len(), 24);
        let b = forecast_window(&wind, &demand, &params, 150.0, &grid).unwrap();
        assert_eq!(a.p_demand_w[1..], b.p_demand_w[..23]);
        assert_eq!(a.v_wind_mps[1..], b.v_wind_mps[..23]);
        // Power values are the curve applied to the held speeds.
        for k in 0..24 {
            assert_eq!(a.p_wtg_w[k], wind_power(a.v_wind_mps[k], &params.wtg));
        }
    }

    #[test]
    fn out_of_range_window_errors() {
        let params = SystemParams::paper_large();
        let wind = bundled_wind("tampen-like-24h").unwrap();
        let demand = generate_demand(&wind, &params, &DemandConfig::default());
        let grid = HorizonGrid { dt_s: 150.0, n_steps: 120 };
        let t0 = 24.0 * 3600.0;
        assert!(matches!(
            forecast_window(&wind, &demand, &params, t0, &grid),
            Err(ScenarioError::WindowOutOfRange { .. })
        ));
        assert!(check_span(&wind, 24.0 * 3600.0, &grid).is_err());
        assert!(check_span(&wind, 6.0 * 3600.0, &HorizonGrid { dt_s: 150.0, n_steps: 24 }).is_ok());
    }
}

//! CSV emission for trajectories and KPI tables.
//!
//! Trajectory columns for a 3-GTG system:
//! `t_s,V1,V2,V3,P1_w,P2_w,P3_w,soc_pct,T1,T2,T3,I_a,v_wind_mps,p_wtg_w,
//! p_bat_w,p_demand_w,eta1,eta2,eta3,co2_kgps,y1,y2,y3,solver_iters,
//! solve_s,flag`. Commitment columns stay empty for the methods without
//! commitment variables. Other cluster sizes get the same pattern with
//! the per-GTG groups repeated to their count.

use super::kpi::KpiReport;
use super::Trajectory;
use std::fmt::Write;

pub fn trajectory_header(n_gtg: usize) -> String {
    let mut h = String::from("t_s");
    let group = |h: &mut String, prefix: &str, suffix: &str| {
        for j in 1..=n_gtg {
            h.push(',');
            h.push_str(prefix);
            let _ = write!(h, "{j}");
            h.push_str(suffix);
        }
    };
    group(&mut h, "V", "");
    group(&mut h, "P", "_w");
    h.push_str(",soc_pct");
    group(&mut h, "T", "");
    h.push_str(",I_a,v_wind_mps,p_wtg_w,p_bat_w,p_demand_w");
    group(&mut h, "eta", "");
    h.push_str(",co2_kgps");
    group(&mut h, "y", "");
    h.push_str(",solver_iters,solve_s,flag");
    h
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n_gtg = traj.n_gtg();
    let mut out = trajectory_header(n_gtg);
    out.push('\n');
    for r in &traj.records {
        let _ = write!(out, "{}", r.t_s);
        for v in &r.state.gtg_valve {
            let _ = write!(out, ",{v}");
        }
        for p in &r.state.gtg_power_w {
            let _ = write!(out, ",{p}");
        }
        let _ = write!(out, ",{}", r.state.soc_pct);
        for t in &r.input.throttle {
            let _ = write!(out, ",{t}");
        }
        let _ = write!(
            out,
            ",{},{},{},{},{}",
            r.input.current_a, r.exo.v_wind_mps, r.exo.p_wtg_w, r.p_bat_w, r.demand_w
        );
        for eta in &r.eta {
            let _ = write!(out, ",{eta}");
        }
        let _ = write!(out, ",{}", r.co2_kgps);
        if r.y.is_empty() {
            for _ in 0..n_gtg {
                out.push(',');
            }
        } else {
            for y in &r.y {
                let _ = write!(out, ",{y}");
            }
        }
        let _ = writeln!(out, ",{},{},{}", r.solver_iters, r.solve_s, u8::from(r.flagged));
    }
    out
}

pub fn kpi_header(n_gtg: usize) -> String {
    let mut h = String::from("method,e_pct,eta_bar_pct,ghg_pct");
    for j in 1..=n_gtg {
        let _ = write!(h, ",switches_{j}");
    }
    h.push_str(",mean_solve_s,max_solve_s,end_soc_pct,failed_steps");
    h
}

pub fn kpi_csv(reports: &[KpiReport], n_gtg: usize) -> String {
    let mut out = kpi_header(n_gtg);
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{},{},{},{}", r.method, r.e_pct, r.eta_bar_pct, r.ghg_pct);
        for j in 0..n_gtg {
            let _ = write!(out, ",{}", r.switch_counts.get(j).copied().unwrap_or(0));
        }
        let _ = writeln!(
            out,
            ",{},{},{},{}",
            r.mean_solve_s, r.max_solve_s, r.end_soc_pct, r.failed_steps
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_matches_three_gtg_layout() {
        assert_eq!(
            trajectory_header(3),
            "t_s,V1,V2,V3,P1_w,P2_w,P3_w,soc_pct,T1,T2,T3,I_a,v_wind_mps,p_wtg_w,p_bat_w,\
             p_demand_w,eta1,eta2,eta3,co2_kgps,y1,y2,y3,solver_iters,solve_s,flag"
        );
    }
}

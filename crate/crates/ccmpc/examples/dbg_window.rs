use ccmpc::ocp::HorizonGrid;
use ccmpc::plant::SystemParams;
use ccmpc::scenario::{bundled_wind, forecast_window, generate_demand, DemandConfig};

fn main() {
    let params = SystemParams::paper_large();
    let wind = bundled_wind("tampen-like-24h").unwrap();
    let demand = generate_demand(&wind, &params, &DemandConfig::default());
    let grid = HorizonGrid { dt_s: 150.0, n_steps: 24 };
    for t0 in [750.0, 900.0] {
        let f = forecast_window(&wind, &demand, &params, t0, &grid).unwrap();
        println!("t0 = {t0}");
        let mut soc = 76.72f64;
        let cap_wh = 747.0 * 626.0 * 1.28 * 162.5; // packs*cells*V*Q
        for k in 0..24 {
            // Surplus the battery must absorb when all GTGs ride min load.
            let surplus = params.total_gtg_pmin_w() + f.p_wtg_w[k] - f.p_demand_w[k];
            let dsoc = 100.0 * surplus * 150.0 / 3600.0 / cap_wh;
            soc += dsoc;
            print!(" k={k:2} dem={:6.1}MW wtg={:5.1}MW surplus={:6.1}MW soc_min_path={soc:6.2}\n",
                f.p_demand_w[k] / 1e6, f.p_wtg_w[k] / 1e6, surplus / 1e6);
        }
    }
}

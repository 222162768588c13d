use ccmpc::nlp::SolverOptions;
use ccmpc::ocp::{HorizonGrid, MethodId, OcpWeights};
use ccmpc::plant::{SystemParams, SystemState};
use ccmpc::scenario::{bundled_wind, generate_demand, DemandConfig};
use ccmpc::sim::{run_closed_loop, SimInputs};

fn main() {
    let params = SystemParams::paper_large();
    let wind = bundled_wind("tampen-like-24h").unwrap();
    let demand = generate_demand(&wind, &params, &DemandConfig::default());
    let inputs = SimInputs {
        method: MethodId::BaselineEffort,
        x0: SystemState::hot_start(&params, 70.0),
        params,
        grid: HorizonGrid { dt_s: 150.0, n_steps: 24 },
        weights: OcpWeights::defaults(3),
        solver: ccmpc::sim::sim_solver_defaults(),
        wind,
        demand,
        duration_s: 3600.0,
        warm_start: true,
        soft_balance: false,
    };
    let traj = run_closed_loop(&inputs).unwrap();
    for r in &traj.records {
        println!(
            "t={:5} flagged={} iters={:3} pbar={:?} resid={:9.1} soc={:.2}",
            r.t_s, u8::from(r.flagged), r.solver_iters,
            r.pbar.iter().map(|p| (p * 1e5).round() / 1e5).collect::<Vec<_>>(),
            r.balance_residual_w, r.state.soc_pct
        );
    }
}

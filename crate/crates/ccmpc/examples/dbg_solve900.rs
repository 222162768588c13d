use ccmpc::nlp::SolverOptions;
use ccmpc::ocp::{solve_ocp, CommitmentContext, HorizonGrid, LayoutOrder, MethodId, OcpSpec, OcpWeights};
use ccmpc::plant::{SystemParams, SystemState};
use ccmpc::scenario::{bundled_wind, forecast_window, generate_demand, DemandConfig};
use ccmpc::sim::{run_closed_loop, sim_solver_defaults, SimInputs};

fn main() {
    let params = SystemParams::paper_large();
    let wind = bundled_wind("tampen-like-24h").unwrap();
    let demand = generate_demand(&wind, &params, &DemandConfig::default());
    let grid = HorizonGrid { dt_s: 150.0, n_steps: 24 };
    let inputs = SimInputs {
        method: MethodId::BaselineEffort,
        x0: SystemState::hot_start(&params, 70.0),
        params: params.clone(),
        grid,
        weights: OcpWeights::defaults(3),
        solver: sim_solver_defaults(),
        wind: wind.clone(),
        demand: demand.clone(),
        duration_s: 900.0,
        warm_start: true,
        soft_balance: false,
    };
    let traj = run_closed_loop(&inputs).unwrap();
    let x = traj.records.last().unwrap().state.clone();
    println!("state at t=900: {x:?}");

    let forecast = forecast_window(&wind, &demand, &params, 900.0, &grid).unwrap();
    let weights = OcpWeights::defaults(3);
    let ctx = CommitmentContext::all_on(3);
    let spec = OcpSpec {
        method: MethodId::BaselineEffort,
        grid,
        weights: &weights,
        forecast: &forecast,
        x0: &x,
        params: &params,
        ctx: &ctx,
        soft_balance: false,
        order: LayoutOrder::Interleaved,
    };
    let opts = SolverOptions {
        kkt_tol: 1e-8,
        iter_log_csv: Some("/tmp/dbg900.csv".into()),
        ..Default::default()
    };
    let (result, _nlp, _layout) = solve_ocp(&spec, None, &opts).unwrap();
    println!("status {:?} iters {} residuals {:?}", result.status, result.iterations, result.residuals);
}

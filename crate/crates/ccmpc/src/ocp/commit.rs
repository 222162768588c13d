//! Solve driver for the commitment formulations.
//!
//! The complementarity penalty `k_y y (1 - y)` is concave in `y`, so a
//! single interior-point solve can settle on a fractional commitment on
//! the wrong side of the penalty hump. The driver first tries the plain
//! solve; if commitments come back fractional it re-solves the penalty
//! problem from candidate binary patterns seeded by the `k_y = 0`
//! relaxation, each completed to a consistent trajectory first, and
//! keeps the best converged result. The non-switching formulations pass
//! straight through.

use super::brute::complete_schedule;
use super::build::OcpSpec;
use super::{build_ocp, default_start, DecisionLayout, MethodId, OcpError, OcpWeights, Schedule};
use crate::nlp::{solve, NlpProblem, SolveStatus, SolverOptions, SolverResult};

/// Mean complementarity residual `y (1 - y)` over all commitments.
pub fn mean_complementarity(w: &[f64], layout: &DecisionLayout) -> f64 {
    if layout.ny == 0 {
        return 0.0;
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for step in 0..layout.n_steps {
        for j in 0..layout.n_gtg {
            let y = w[layout.y(step, j).unwrap()];
            acc += y * (1.0 - y);
            count += 1;
        }
    }
    acc / count as f64
}

const BINARY_TOL: f64 = 5e-3;

/// A consistent starting vector realizing one binary pattern. For the
/// bang-bang method the completion fixes every chain exactly; for the
/// direct method the seed is kept and only commitments and loads are
/// snapped into the pattern's band.
fn candidate_start(
    spec: &OcpSpec,
    layout: &DecisionLayout,
    seed: &[f64],
    pattern: &Schedule,
) -> Option<Vec<f64>> {
    let mut w = seed.to_vec();
    match spec.method {
        MethodId::IndirectBangBang => {
            let completion = complete_schedule(spec, pattern)?;
            for step in 0..layout.n_steps {
                for j in 0..layout.n_gtg {
                    w[layout.y(step, j).unwrap()] = if pattern[step][j] { 1.0 } else { 0.0 };
                    w[layout.valve(step, j)] = completion.valve[step][j];
                    w[layout.throttle(step, j)] = completion.throttle[step][j];
                    w[layout.power(step + 1, j)] =
                        completion.power_w[step + 1][j] / super::POWER_SCALE_W;
                }
                w[layout.current(step)] = completion.current_a[step] / super::CURRENT_SCALE_A;
                w[layout.soc(step + 1)] = completion.soc_pct[step + 1];
            }
            Some(w)
        }
        MethodId::DirectComplementarity => {
            for step in 0..layout.n_steps {
                for j in 0..layout.n_gtg {
                    let on = pattern[step][j];
                    w[layout.y(step, j).unwrap()] = if on { 1.0 } else { 0.0 };
                    let g = &spec.params.gtgs[j];
                    let p = layout.power(step + 1, j);
                    let (lo, hi) = if on {
                        (g.p_min_w() / super::POWER_SCALE_W, g.p_max_w / super::POWER_SCALE_W)
                    } else {
                        (0.0, 0.0)
                    };
                    w[p] = w[p].clamp(lo, hi);
                }
            }
            Some(w)
        }
        _ => None,
    }
}

fn pattern_from(w: &[f64], layout: &DecisionLayout, rule: impl Fn(f64) -> bool) -> Schedule {
    (0..layout.n_steps)
        .map(|step| (0..layout.n_gtg).map(|j| rule(w[layout.y(step, j).unwrap()])).collect())
        .collect()
}

/// Per-step greedy quantizations of the relaxed committed power: among
/// the on/off combinations whose balance residual the battery can carry,
/// pick (a) the one closest to the relaxed commitment, (b) the one
/// leaning least on the battery, and (c) the one closest to the previous
/// step's pick. The bang-bang method's first step is pinned to the
/// power level already determined by the initial state.
fn greedy_patterns(spec: &OcpSpec, layout: &DecisionLayout, seed: &[f64]) -> Vec<Schedule> {
    let n_gtg = layout.n_gtg;
    let combos: Vec<Vec<bool>> = (0..1usize << n_gtg)
        .map(|mask| (0..n_gtg).map(|j| mask >> j & 1 == 1).collect())
        .collect();
    let committed = |combo: &Vec<bool>| -> f64 {
        combo
            .iter()
            .zip(&spec.params.gtgs)
            .map(|(&on, g)| if on { g.p_max_w } else { 0.0 })
            .sum()
    };
    let bat = &spec.params.battery;

    let forced_first: Option<Vec<bool>> = if spec.method == MethodId::IndirectBangBang {
        Some(
            (0..n_gtg)
                .map(|j| {
                    let g = &spec.params.gtgs[j];
                    let a_p = spec.grid.dt_s / g.tau_p_s;
                    let p1 = spec.x0.gtg_power_w[j]
                        + a_p * (spec.x0.gtg_valve[j] * g.p_max_w - spec.x0.gtg_power_w[j]);
                    p1 >= 0.5 * g.p_max_w
                })
                .collect(),
        )
    } else {
        None
    };

    let mut variants: Vec<Schedule> = vec![Vec::new(), Vec::new(), Vec::new()];
    for step in 0..layout.n_steps {
        let relaxed_committed: f64 = (0..n_gtg)
            .map(|j| {
                seed[layout.y(step, j).unwrap()] * spec.params.gtgs[j].p_max_w
            })
            .sum();
        let gap = spec.forecast.p_demand_w[step] - spec.forecast.p_wtg_w[step];
        let feasible: Vec<&Vec<bool>> = combos
            .iter()
            .filter(|combo| {
                if step == 0 {
                    if let Some(f) = &forced_first {
                        return *combo == f;
                    }
                }
                let target = gap - committed(combo);
                target >= bat.p_min_w && target <= bat.p_max_w
            })
            .collect();
        if feasible.is_empty() {
            return Vec::new();
        }
        let closest = |goal: f64| -> Vec<bool> {
            feasible
                .iter()
                .min_by(|a, b| {
                    let da = (committed(a) - goal).abs();
                    let db = (committed(b) - goal).abs();
                    da.partial_cmp(&db).unwrap()
                })
                .map(|c| (*c).clone())
                .unwrap()
        };
        variants[0].push(closest(relaxed_committed));
        variants[1].push(closest(gap));
        let prev_committed = if step == 0 {
            spec.ctx
                .applied_y
                .iter()
                .zip(&spec.params.gtgs)
                .map(|(&y, g)| if y >= 0.5 { g.p_max_w } else { 0.0 })
                .sum()
        } else {
            committed(&variants[2][step - 1])
        };
        variants[2].push(closest(prev_committed));
    }
    variants
}

/// Build and solve one horizon. For the commitment methods this runs the
/// continuation described in the module docs.
pub fn solve_ocp(
    spec: &OcpSpec,
    warm: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<(SolverResult, NlpProblem, DecisionLayout), OcpError> {
    let (nlp, layout) = build_ocp(spec)?;
    let w0 = match warm {
        Some(w) => w.to_vec(),
        None => default_start(&layout, spec.x0, spec.params, spec.ctx),
    };
    let mut first = solve(&nlp, &w0, opts);
    // A poisoned warm start occasionally sinks an otherwise solvable
    // horizon; retry once from the nominal start before giving up.
    if first.status != SolveStatus::Converged && warm.is_some() {
        let cold = default_start(&layout, spec.x0, spec.params, spec.ctx);
        let retry = solve(&nlp, &cold, opts);
        if retry.status == SolveStatus::Converged {
            first = retry;
        }
    }

    if !spec.method.has_commitment() {
        return Ok((first, nlp, layout));
    }
    let first_ok = first.status == SolveStatus::Converged
        && mean_complementarity(&first.w_star, &layout) <= BINARY_TOL;
    if first_ok {
        return Ok((first, nlp, layout));
    }

    // Relaxation: drop the complementarity penalty to find the economic
    // dispatch, then seed binary candidates from it.
    let relaxed_weights = OcpWeights { k_y: 0.0, ..spec.weights.clone() };
    let relaxed_spec = OcpSpec { weights: &relaxed_weights, ..*spec };
    let (relaxed_nlp, _) = build_ocp(&relaxed_spec)?;
    let relaxed = solve(&relaxed_nlp, &w0, opts);
    let seed: &[f64] =
        if relaxed.status == SolveStatus::Converged { &relaxed.w_star } else { &w0 };

    let mut candidates = vec![
        pattern_from(seed, &layout, |y| y >= 0.5),
        pattern_from(seed, &layout, |y| y > 0.05),
        pattern_from(seed, &layout, |y| y > 0.95),
        pattern_from(&first.w_star, &layout, |y| y >= 0.5),
    ];
    candidates.extend(greedy_patterns(spec, &layout, seed));
    // The no-switch pattern: hold the applied commitment everywhere.
    candidates.push(vec![
        spec.ctx.applied_y.iter().map(|&y| y >= 0.5).collect();
        layout.n_steps
    ]);
    candidates.sort();
    candidates.dedup();

    let trace = std::env::var("CCMPC_IPM_TRACE").is_ok();
    if trace {
        eprintln!("== commitment driver candidates ==");
    }
    let mut best: Option<SolverResult> = None;
    for pattern in &candidates {
        let Some(start) = candidate_start(spec, &layout, seed, pattern) else {
            if trace {
                eprintln!("  candidate {pattern:?}: unrealizable");
            }
            continue;
        };
        let result = solve(&nlp, &start, opts);
        if trace {
            eprintln!(
                "  candidate {pattern:?}: {:?} obj {:.4e} yq {:.4}",
                result.status,
                result.objective,
                mean_complementarity(&result.w_star, &layout)
            );
        }
        if result.status != SolveStatus::Converged
            || mean_complementarity(&result.w_star, &layout) > BINARY_TOL
        {
            continue;
        }
        if best.as_ref().map_or(true, |b| result.objective < b.objective) {
            best = Some(result);
        }
    }
    Ok((best.unwrap_or(first), nlp, layout))
}

//! Policy extraction and receding-horizon warm starting.

use super::{DecisionLayout, OcpError, CURRENT_SCALE_A};
use crate::nlp::{SolveStatus, SolverResult};
use crate::plant::ControlInput;

fn input_at(w: &[f64], layout: &DecisionLayout, step: usize) -> ControlInput {
    ControlInput {
        throttle: (0..layout.n_gtg).map(|j| w[layout.throttle(step, j)]).collect(),
        current_a: w[layout.current(step)] * CURRENT_SCALE_A,
    }
}

/// The receding-horizon policy: the first input block of the solution.
/// A failed solve propagates its status with the best-iterate input
/// attached so the caller can fall back deliberately.
pub fn extract_policy(result: &SolverResult, layout: &DecisionLayout) -> Result<ControlInput, OcpError> {
    let u0 = input_at(&result.w_star, layout, 0);
    if result.status != SolveStatus::Converged {
        return Err(OcpError::SolverFailed { status: result.status, best: u0 });
    }
    Ok(u0)
}

/// Raw first-step commitment values (methods 3-4), to be thresholded by
/// the caller when an on/off decision is needed.
pub fn applied_commitment(w: &[f64], layout: &DecisionLayout) -> Option<Vec<f64>> {
    if layout.ny == 0 {
        return None;
    }
    Some((0..layout.n_gtg).map(|j| w[layout.y(0, j).unwrap()]).collect())
}

/// Shift a solved decision vector one step earlier and duplicate the
/// final state/input/commitment blocks into the vacated tail.
pub fn warm_start_shift(prev: &[f64], layout: &DecisionLayout) -> Vec<f64> {
    assert_eq!(prev.len(), layout.n_var, "warm start dimension mismatch");
    let mut w = prev.to_vec();
    let n = layout.n_steps;
    for node in 0..n {
        for i in 0..layout.nx {
            w[layout.x(node) + i] = prev[layout.x(node + 1) + i];
        }
    }
    for step in 0..n {
        let src = if step + 1 < n { step + 1 } else { n - 1 };
        for i in 0..layout.nu {
            w[layout.u(step) + i] = prev[layout.u(src) + i];
        }
        for j in 0..layout.n_gtg {
            if let Some(dst) = layout.y(step, j) {
                w[dst] = prev[layout.y(src, j).unwrap()];
            }
        }
        if let Some(dst) = layout.slack(step) {
            w[dst] = prev[layout.slack(src).unwrap()];
        }
    }
    w
}

/// The commitment values carried past the horizon end for the next
/// solve's terminal switching term: the final block of this solution.
pub fn carry_commitment(w: &[f64], layout: &DecisionLayout) -> Option<Vec<f64>> {
    if layout.ny == 0 {
        return None;
    }
    let last = layout.n_steps - 1;
    Some((0..layout.n_gtg).map(|j| w[layout.y(last, j).unwrap()]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::{LayoutOrder, MethodId};

    fn layout() -> DecisionLayout {
        DecisionLayout::new(MethodId::IndirectBangBang, LayoutOrder::Interleaved, 2, 4, false)
    }

    #[test]
    fn constant_solution_shifts_to_itself() {
        let l = layout();
        let mut w = vec![0.0; l.n_var];
        // A node-constant state, input and commitment fill.
        for node in 0..=l.n_steps {
            for i in 0..l.nx {
                w[l.x(node) + i] = 1.0 + i as f64;
            }
        }
        for step in 0..l.n_steps {
            for i in 0..l.nu {
                w[l.u(step) + i] = 10.0 + i as f64;
            }
            for j in 0..l.n_gtg {
                w[l.y(step, j).unwrap()] = 0.25 * (j + 1) as f64;
            }
        }
        let shifted = warm_start_shift(&w, &l);
        assert_eq!(shifted, w);
    }

    #[test]
    fn linear_ramp_shifts_and_duplicates_tail() {
        let l = layout();
        let mut w = vec![0.0; l.n_var];
        for node in 0..=l.n_steps {
            w[l.soc(node)] = node as f64;
        }
        let shifted = warm_start_shift(&w, &l);
        for node in 0..l.n_steps {
            assert_eq!(shifted[l.soc(node)], (node + 1) as f64);
        }
        assert_eq!(shifted[l.soc(l.n_steps)], l.n_steps as f64);
    }

    #[test]
    fn policy_extraction_is_layout_independent() {
        for order in [LayoutOrder::Interleaved, LayoutOrder::Blocked] {
            let l = DecisionLayout::new(MethodId::BaselineEffort, order, 2, 3, false);
            let mut w = vec![0.0; l.n_var];
            w[l.throttle(0, 0)] = 0.4;
            w[l.throttle(0, 1)] = 0.7;
            w[l.current(0)] = -0.5;
            let u = input_at(&w, &l, 0);
            assert_eq!(u.throttle, vec![0.4, 0.7]);
            assert_eq!(u.current_a, -0.5 * CURRENT_SCALE_A);
        }
    }
}

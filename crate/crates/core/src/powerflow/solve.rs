use super::{jacobian, residual, VoltageState};
use crate::{Error, Network, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Convergence threshold on the infinity norm of the power mismatch.
    pub tol: f64,
    pub max_iter: usize,
    /// Maximum number of step halvings per iteration.
    pub max_halvings: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: 50,
            max_halvings: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub state: VoltageState,
    pub iterations: usize,
    /// Infinity norm of the final mismatch.
    pub residual: f64,
}

/// Damped Newton iteration on the rectangular power flow equations, driving
/// the PQ-bus consumptions to the network's targets. `init = None` starts
/// from the flat profile.
pub fn solve_power_flow(
    net: &Network,
    init: Option<&VoltageState>,
    opts: SolveOptions,
) -> Result<PowerFlowSolution> {
    let mut v = init.cloned().unwrap_or_else(|| VoltageState::flat(net));
    let mut f = residual(net, &v, net.targets());
    let mut fnorm = f.norm();
    for it in 0..=opts.max_iter {
        let inf = f.amax();
        if !inf.is_finite() {
            break;
        }
        if inf <= opts.tol {
            return Ok(PowerFlowSolution {
                state: v,
                iterations: it,
                residual: inf,
            });
        }
        if it == opts.max_iter {
            break;
        }
        let j = jacobian(net, &v);
        let Some(dx) = j.matrix().clone().lu().solve(&(-&f)) else {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: inf,
            });
        };
        let x = v.state_vector();
        let mut step = 1.0;
        let mut halvings = 0;
        loop {
            let trial = VoltageState::from_state_vector(net, &(&x + &dx * step));
            let ft = residual(net, &trial, net.targets());
            let ftn = ft.norm();
            if (ftn.is_finite() && ftn < fnorm) || halvings == opts.max_halvings {
                v = trial;
                f = ft;
                fnorm = ftn;
                break;
            }
            step *= 0.5;
            halvings += 1;
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: f.amax(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::PowerTarget;
    use crate::powerflow::tests::triangle;

    #[test]
    fn high_voltage_solution_from_flat_start() {
        let mut net = triangle(1.0, 0.0);
        for d in 1..3 {
            net.set_target(d, PowerTarget { p: 0.1875, q: 0.0 });
        }
        let sol = solve_power_flow(&net, None, SolveOptions::default()).unwrap();
        for d in 1..3 {
            assert!((sol.state.voltage(d).re - 0.75).abs() < 1e-10);
            assert!(sol.state.voltage(d).im.abs() < 1e-10);
        }
        assert!(sol.residual <= 1e-10);
    }

    #[test]
    fn zero_targets_return_flat_immediately() {
        let net = triangle(1.0, -0.5);
        let sol = solve_power_flow(&net, None, SolveOptions::default()).unwrap();
        assert_eq!(sol.state, VoltageState::flat(&net));
        assert!(sol.iterations <= 1);
    }

    #[test]
    fn infeasible_loading_does_not_converge() {
        let mut net = triangle(1.0, 0.0);
        for d in 1..3 {
            net.set_target(d, PowerTarget { p: 0.5, q: 0.0 });
        }
        let err = solve_power_flow(&net, None, SolveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }
}

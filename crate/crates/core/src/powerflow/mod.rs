//! Power flow in rectangular coordinates.
//!
//! With `v_d = v_{d,r} + j v_{d,i}` the consumption at bus `d` is
//!
//! ```text
//! p_d = t1 (v_r² + v_i²) + t2 v_r + t3 v_i
//! q_d = t4 (v_r² + v_i²) − t3 v_r + t2 v_i
//! ```
//!
//! where `t1 = −Σg`, `t4 = Σb` are network constants and `t2`, `t3` are
//! linear in the neighbor voltages. Everything downstream builds on these
//! two quadratics.

mod jacobian;
mod solve;
mod state;

pub use jacobian::{jacobian, JacobianMatrix};
pub use solve::{solve_power_flow, PowerFlowSolution, SolveOptions};
pub use state::VoltageState;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::case_io::PowerTarget;
use crate::Network;

/// Per-bus coefficients of the quadratic power expressions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TCoefficients {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
}

impl TCoefficients {
    pub fn p(&self, v: Complex64) -> f64 {
        self.t1 * v.norm_sqr() + self.t2 * v.re + self.t3 * v.im
    }

    pub fn q(&self, v: Complex64) -> f64 {
        self.t4 * v.norm_sqr() - self.t3 * v.re + self.t2 * v.im
    }
}

/// Coefficients of bus `d` given the neighbor voltages in `v`.
pub fn t_coefficients(net: &Network, v: &VoltageState, d: usize) -> TCoefficients {
    net.neighbors(d)
        .iter()
        .fold(TCoefficients::default(), |mut t, n| {
            let vk = v.voltage(n.bus);
            t.t1 -= n.g;
            t.t2 += vk.re * n.g - vk.im * n.b;
            t.t3 += vk.re * n.b + vk.im * n.g;
            t.t4 += n.b;
            t
        })
}

/// Complex consumption `p + jq` at any bus, slack included.
pub fn bus_power(net: &Network, v: &VoltageState, d: usize) -> Complex64 {
    let t = t_coefficients(net, v, d);
    let vd = v.voltage(d);
    Complex64::new(t.p(vd), t.q(vd))
}

/// Active and reactive consumption at the PQ buses, in state order.
pub fn injections(net: &Network, v: &VoltageState) -> (DVector<f64>, DVector<f64>) {
    let n = net.pq_count();
    let mut p = DVector::zeros(n);
    let mut q = DVector::zeros(n);
    for (i, d) in net.pq_buses().enumerate() {
        let s = bus_power(net, v, d);
        p[i] = s.re;
        q[i] = s.im;
    }
    (p, q)
}

/// Stacked `[p(v) − p*; q(v) − q*]` over the PQ buses.
pub fn residual(net: &Network, v: &VoltageState, targets: &[PowerTarget]) -> DVector<f64> {
    let n = net.pq_count();
    let (p, q) = injections(net, v);
    DVector::from_fn(2 * n, |i, _| {
        if i < n {
            p[i] - targets[i + 1].p
        } else {
            q[i - n] - targets[i - n + 1].q
        }
    })
}

/// Replaces every PQ target with the modeled consumption at `v`.
pub fn set_targets_from_state(net: &mut Network, v: &VoltageState) {
    for d in net.pq_buses() {
        let s = bus_power(net, v, d);
        net.set_target(d, PowerTarget { p: s.re, q: s.im });
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::case_io::parse_network_json;

    pub(crate) fn triangle(g: f64, b: f64) -> Network {
        parse_network_json(&format!(
            r#"{{"base_power": 1, "slack": {{"id": 1, "v_re": 1, "v_im": 0}},
               "buses": [{{"id": 2, "p": 0, "q": 0}}, {{"id": 3, "p": 0, "q": 0}}],
               "lines": [{{"from": 1, "to": 2, "g": {g}, "b": {b}}},
                         {{"from": 2, "to": 3, "g": {g}, "b": {b}}},
                         {{"from": 1, "to": 3, "g": {g}, "b": {b}}}]}}"#
        ))
        .unwrap()
    }

    pub(crate) fn real_state(net: &Network, v2: f64, v3: f64) -> VoltageState {
        VoltageState::from_state_vector(net, &DVector::from_vec(vec![v2, v3, 0.0, 0.0]))
    }

    #[test]
    fn resistive_triangle_coefficients() {
        let net = triangle(1.0, 0.0);
        let v = VoltageState::from_state_vector(&net, &DVector::from_vec(vec![0.6, 0.3, 0.1, -0.2]));
        let t = t_coefficients(&net, &v, 1);
        assert_eq!(t, TCoefficients { t1: -2.0, t2: 1.3, t3: -0.2, t4: 0.0 });
    }

    #[test]
    fn lossy_triangle_flat_coefficients() {
        let net = triangle(1.0, -0.5);
        let t = t_coefficients(&net, &VoltageState::flat(&net), 1);
        assert_eq!(t, TCoefficients { t1: -2.0, t2: 2.0, t3: -1.0, t4: -1.0 });
        let (p, q) = injections(&net, &VoltageState::flat(&net));
        assert!(p.iter().chain(q.iter()).all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn isolated_bus_has_zero_coefficients() {
        let net = parse_network_json(
            r#"{"base_power": 1, "slack": {"id": 1, "v_re": 1, "v_im": 0},
                "buses": [{"id": 2, "p": 0, "q": 0}], "lines": []}"#,
        )
        .unwrap();
        assert_eq!(t_coefficients(&net, &VoltageState::flat(&net), 1), TCoefficients::default());
    }

    #[test]
    fn resistive_triangle_powers() {
        let net = triangle(1.0, 0.0);
        let (p, _) = injections(&net, &real_state(&net, 0.5, 0.5));
        assert_eq!(p.as_slice(), &[0.25, 0.25]);
        let (p, _) = injections(&net, &real_state(&net, 0.25, 0.25));
        assert_eq!(p.as_slice(), &[0.1875, 0.1875]);
    }

    #[test]
    fn residual_is_minus_targets_at_flat_start() {
        let mut net = triangle(1.0, -0.5);
        net.set_target(1, PowerTarget { p: 0.7, q: 0.2 });
        net.set_target(2, PowerTarget { p: 0.9, q: 0.3 });
        let r = residual(&net, &VoltageState::flat(&net), net.targets());
        assert_eq!(r.as_slice(), &[-0.7, -0.9, -0.2, -0.3]);
    }
}

use nalgebra::{DMatrix, DVector};

use super::{t_coefficients, VoltageState};
use crate::Network;

/// Partial derivatives of the PQ-bus powers with respect to the PQ-bus
/// voltages.
///
/// Columns are `[v_re(1..n), v_im(1..n)]`, rows `[p(1..n), q(1..n)]`. The
/// slack's own power gradients are kept alongside since reactive limits at
/// the slack constrain directions too.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianMatrix {
    n: usize,
    m: DMatrix<f64>,
    slack_p: DVector<f64>,
    slack_q: DVector<f64>,
}

impl JacobianMatrix {
    /// Wraps a bare `2n × 2n` matrix (no slack gradients).
    pub fn from_matrix(m: DMatrix<f64>) -> Self {
        assert!(m.is_square() && m.nrows().is_multiple_of(2), "jacobian must be 2n x 2n");
        let n = m.nrows() / 2;
        JacobianMatrix {
            n,
            m,
            slack_p: DVector::zeros(2 * n),
            slack_q: DVector::zeros(2 * n),
        }
    }

    /// Number of PQ buses.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// `h_d`: gradient of `p_d` for the PQ bus at state position `i`.
    pub fn h_row(&self, i: usize) -> DVector<f64> {
        self.m.row(i).transpose()
    }

    /// `g_d`: gradient of `q_d` for the PQ bus at state position `i`.
    pub fn g_row(&self, i: usize) -> DVector<f64> {
        self.m.row(self.n + i).transpose()
    }

    /// The `n × 2n` active-power block.
    pub fn p_block(&self) -> DMatrix<f64> {
        self.m.rows(0, self.n).into_owned()
    }

    pub fn slack_h_row(&self) -> &DVector<f64> {
        &self.slack_p
    }

    pub fn slack_g_row(&self) -> &DVector<f64> {
        &self.slack_q
    }

    /// Gradient of `p` at network bus `bus` (slack allowed).
    pub fn p_gradient(&self, bus: usize) -> DVector<f64> {
        if bus == 0 {
            self.slack_p.clone()
        } else {
            self.h_row(bus - 1)
        }
    }

    /// Gradient of `q` at network bus `bus` (slack allowed).
    pub fn q_gradient(&self, bus: usize) -> DVector<f64> {
        if bus == 0 {
            self.slack_q.clone()
        } else {
            self.g_row(bus - 1)
        }
    }

    pub fn determinant(&self) -> f64 {
        self.m.clone().lu().determinant()
    }

    /// Determinant of the `∂p/∂v_re` block alone — the full Jacobian of a
    /// purely resistive network restricted to real voltages.
    pub fn real_block_determinant(&self) -> f64 {
        self.m.view((0, 0), (self.n, self.n)).into_owned().lu().determinant()
    }
}

/// Analytic Jacobian at `v`. Every entry is affine in the PQ voltages.
pub fn jacobian(net: &Network, v: &VoltageState) -> JacobianMatrix {
    let n = net.pq_count();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for d in net.pq_buses() {
        let i = d - 1;
        let t = t_coefficients(net, v, d);
        let vd = v.voltage(d);
        m[(i, i)] = 2.0 * t.t1 * vd.re + t.t2;
        m[(i, n + i)] = 2.0 * t.t1 * vd.im + t.t3;
        m[(n + i, i)] = 2.0 * t.t4 * vd.re - t.t3;
        m[(n + i, n + i)] = 2.0 * t.t4 * vd.im + t.t2;
        for nb in net.neighbors(d) {
            if nb.bus == 0 {
                continue;
            }
            let j = nb.bus - 1;
            let (g, b) = (nb.g, nb.b);
            m[(i, j)] += g * vd.re + b * vd.im;
            m[(i, n + j)] += -b * vd.re + g * vd.im;
            m[(n + i, j)] += -b * vd.re + g * vd.im;
            m[(n + i, n + j)] += -g * vd.re - b * vd.im;
        }
    }

    let mut slack_p = DVector::zeros(2 * n);
    let mut slack_q = DVector::zeros(2 * n);
    let vs = v.voltage(0);
    for nb in net.neighbors(0) {
        let j = nb.bus - 1;
        let (g, b) = (nb.g, nb.b);
        slack_p[j] += g * vs.re + b * vs.im;
        slack_p[n + j] += -b * vs.re + g * vs.im;
        slack_q[j] += -b * vs.re + g * vs.im;
        slack_q[n + j] += -g * vs.re - b * vs.im;
    }

    JacobianMatrix {
        n,
        m,
        slack_p,
        slack_q,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powerflow::tests::{real_state, triangle};
    use crate::powerflow::bus_power;

    #[test]
    fn resistive_triangle_matches_closed_form() {
        let net = triangle(1.0, 0.0);
        for &(v2, v3) in &[(0.3, 0.8), (0.5, 0.5), (0.25, 0.25), (1.1, 0.05)] {
            let j = jacobian(&net, &real_state(&net, v2, v3));
            let m = j.matrix();
            assert_eq!(m[(0, 0)], 1.0 - 4.0 * v2 + v3);
            assert_eq!(m[(0, 1)], v2);
            assert_eq!(m[(1, 0)], v3);
            assert_eq!(m[(1, 1)], 1.0 - 4.0 * v3 + v2);
        }
    }

    #[test]
    fn gradient_rows_at_points_a_and_b() {
        let net = triangle(1.0, 0.0);
        let a = jacobian(&net, &real_state(&net, 0.5, 0.5));
        assert_eq!(a.h_row(0).rows(0, 2).as_slice(), &[-0.5, 0.5]);
        assert_eq!(a.h_row(1).rows(0, 2).as_slice(), &[0.5, -0.5]);
        let b = jacobian(&net, &real_state(&net, 0.25, 0.25));
        assert_eq!(b.h_row(0).rows(0, 2).as_slice(), &[0.25, 0.25]);
        assert_eq!(b.h_row(1).rows(0, 2).as_slice(), &[0.25, 0.25]);
    }

    #[test]
    fn slack_rows_match_finite_differences() {
        let net = triangle(1.0, -0.5);
        let x = DVector::from_vec(vec![0.9, 0.8, -0.1, -0.15]);
        let v = VoltageState::from_state_vector(&net, &x);
        let j = jacobian(&net, &v);
        let h = 1e-6;
        for c in 0..4 {
            let mut xp = x.clone();
            xp[c] += h;
            let mut xm = x.clone();
            xm[c] -= h;
            let sp = bus_power(&net, &VoltageState::from_state_vector(&net, &xp), 0);
            let sm = bus_power(&net, &VoltageState::from_state_vector(&net, &xm), 0);
            assert!(((sp.re - sm.re) / (2.0 * h) - j.slack_h_row()[c]).abs() < 1e-8);
            assert!(((sp.im - sm.im) / (2.0 * h) - j.slack_g_row()[c]).abs() < 1e-8);
        }
    }
}

//! Loadability-boundary membership and margin.
//!
//! At an operating point with active-power gradients `h_d`, the point is on
//! the boundary exactly when no direction `y` satisfies `y·h_d ≥ 0` for all
//! `d` with `Σ y·h_d = 1`. Extra linear rows (reactive limits, bounds on
//! active power, voltage or current) restrict the admissible directions.

mod lp;
mod nnls;

pub use lp::{lp_feasibility, violation, Certificate, LpOutcome};
pub use nnls::{project_onto_cone, ConeProjection};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::{JacobianMatrix, Network, Result, VoltageState};

/// Feasibility tolerance used by default.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Rows with a smaller gradient norm are dropped.
pub const DEGENERATE_ROW_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitSense {
    Min,
    Max,
}

/// A reactive limit that is active at the operating point. At `Max` the
/// bus's reactive consumption may not grow (`y·g ≤ 0`), at `Min` it may not
/// shrink (`y·g ≥ 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QBinding {
    /// Network bus index (the slack, index 0, is allowed).
    pub bus: usize,
    pub sense: LimitSense,
}

/// An extra admissible-direction row `normal·y ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub normal: DVector<f64>,
    pub label: String,
}

impl HalfSpace {
    /// Bound on the real (`imag = false`) or imaginary part of a PQ bus
    /// voltage. At an upper bound the component may only decrease.
    pub fn voltage_bound(net: &Network, bus: usize, imag: bool, sense: LimitSense) -> HalfSpace {
        let pos = net.state_position(bus).expect("voltage bounds apply to PQ buses");
        let n = net.pq_count();
        let mut normal = DVector::zeros(2 * n);
        normal[if imag { n + pos } else { pos }] = match sense {
            LimitSense::Max => -1.0,
            LimitSense::Min => 1.0,
        };
        let part = if imag { "v_im" } else { "v_re" };
        HalfSpace {
            normal,
            label: format!("{part}_{sense:?}:{}", net.bus_id(bus)).to_lowercase(),
        }
    }

    /// Current-magnitude limit on the line between network buses `k` and
    /// `d`, binding at `v`: `|I|²` may not grow to first order.
    pub fn current_limit(net: &Network, v: &VoltageState, k: usize, d: usize) -> HalfSpace {
        let y = net
            .neighbors(k)
            .iter()
            .find(|nb| nb.bus == d)
            .map(|nb| Complex64::new(nb.g, nb.b))
            .expect("current limits apply to existing lines");
        let n = net.pq_count();
        let i = y * (v.voltage(k) - v.voltage(d));
        // d|I|² = 2 Re(conj(I) · y · (dv_k − dv_d))
        let w = i.conj() * y;
        let mut normal = DVector::zeros(2 * n);
        for (bus, sign) in [(k, 1.0), (d, -1.0)] {
            if let Some(p) = net.state_position(bus) {
                normal[p] -= 2.0 * sign * w.re;
                normal[n + p] -= 2.0 * sign * -w.im;
            }
        }
        HalfSpace {
            normal,
            label: format!("current:{}-{}", net.bus_id(k), net.bus_id(d)),
        }
    }
}

/// Additional restrictions on admissible load-growth directions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    pub q_bindings: Vec<QBinding>,
    /// PQ buses whose active power sits at an upper bound (`y·h_d ≤ 0`).
    pub p_upper: Vec<usize>,
    pub half_spaces: Vec<HalfSpace>,
}

impl ConstraintSet {
    pub fn is_empty(&self) -> bool {
        self.q_bindings.is_empty() && self.p_upper.is_empty() && self.half_spaces.is_empty()
    }

    /// Rows `r` meaning `r·y ≥ 0`, with labels.
    fn rows(&self, j: &JacobianMatrix, ids: &dyn Fn(usize) -> usize) -> Vec<(DVector<f64>, String)> {
        let mut out = Vec::new();
        for qb in &self.q_bindings {
            let g = j.q_gradient(qb.bus);
            match qb.sense {
                LimitSense::Max => out.push((-g, format!("q_max:{}", ids(qb.bus)))),
                LimitSense::Min => out.push((g, format!("q_min:{}", ids(qb.bus)))),
            }
        }
        for &d in &self.p_upper {
            out.push((-j.p_gradient(d), format!("p_max:{}", ids(d))));
        }
        for hs in &self.half_spaces {
            out.push((hs.normal.clone(), hs.label.clone()));
        }
        out
    }
}

/// Marks reactive limits as binding where the given consumption (network
/// index order) is at or beyond a bound, within `tol`.
pub fn detect_q_bindings(net: &Network, q_consumption: &[f64], tol: f64) -> Vec<QBinding> {
    (0..net.bus_count())
        .filter_map(|bus| {
            let lim = net.q_limit(bus)?;
            let q = q_consumption[bus];
            if q >= lim.max - tol {
                Some(QBinding { bus, sense: LimitSense::Max })
            } else if q <= lim.min + tol {
                Some(QBinding { bus, sense: LimitSense::Min })
            } else {
                None
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    /// Nonnegative multiplier per row, in `rows` order.
    pub lambda: Vec<f64>,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryVerdict {
    pub on_boundary: bool,
    /// An admissible improving direction when not on the boundary.
    pub direction: Option<Vec<f64>>,
    /// Rows that hold with equality at the direction, or carry a positive
    /// multiplier in the certificate.
    pub binding: Vec<String>,
    pub certificate: Option<CertificateReport>,
    /// Labels of all rows of the system, in order.
    pub rows: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginResult {
    pub m: f64,
    /// Unit-norm optimal direction (zero at the boundary).
    pub direction: Vec<f64>,
    /// Rows active at the projection.
    pub binding: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Clone)]
struct System {
    g: DMatrix<f64>,
    rhs: DVector<f64>,
    c: DVector<f64>,
    labels: Vec<String>,
    warnings: Vec<String>,
}

fn assemble(j: &JacobianMatrix, cs: &ConstraintSet, epsilon: f64, ids: &dyn Fn(usize) -> usize) -> System {
    let n = j.n();
    let mut rows: Vec<(DVector<f64>, f64, String)> = Vec::new();
    let mut warnings = Vec::new();
    let mut c = DVector::zeros(2 * n);
    for i in 0..n {
        let h = j.h_row(i);
        c += &h;
        if h.norm() < DEGENERATE_ROW_NORM {
            warnings.push(format!(
                "dropped degenerate gradient row at bus {} (its active power is stationary in every voltage at this state)",
                ids(i + 1)
            ));
            continue;
        }
        rows.push((h, epsilon, format!("p:{}", ids(i + 1))));
    }
    for (r, label) in cs.rows(j, ids) {
        if r.norm() < DEGENERATE_ROW_NORM {
            warnings.push(format!("dropped degenerate constraint row {label}"));
            continue;
        }
        rows.push((r, 0.0, label));
    }
    let g = DMatrix::from_fn(rows.len(), 2 * n, |i, k| rows[i].0[k]);
    let rhs = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let labels = rows.into_iter().map(|r| r.2).collect();
    System { g, rhs, c, labels, warnings }
}

/// LP directions longer than this are cross-checked with the margin: the
/// shortest admissible direction has length `1/m`, so a huge one means the
/// point is on the boundary up to rounding.
const SUSPECT_DIRECTION_NORM: f64 = 1e6;

fn feasible_verdict(sys: System, y: &DVector<f64>) -> BoundaryVerdict {
    let gy = &sys.g * y;
    let binding = sys
        .labels
        .iter()
        .zip(gy.iter().zip(sys.rhs.iter()))
        .filter(|(_, (v, lo))| (*v - *lo).abs() <= 1e-9)
        .map(|(l, _)| l.clone())
        .collect();
    BoundaryVerdict {
        on_boundary: false,
        direction: Some(y.iter().copied().collect()),
        binding,
        certificate: None,
        rows: sys.labels,
        warnings: sys.warnings,
    }
}

fn verdict(sys: System, tol: f64) -> Result<BoundaryVerdict> {
    match lp_feasibility(&sys.g, &sys.rhs, &sys.c, 1.0, tol)? {
        LpOutcome::Feasible(y) if y.norm() > SUSPECT_DIRECTION_NORM => {
            let scale = sys.g.row_iter().map(|r| r.norm()).fold(1.0, f64::max);
            let m = margin_with(sys.clone())?.m;
            if m > tol * scale {
                return Ok(feasible_verdict(sys, &y));
            }
            let mut warnings = sys.warnings;
            warnings.push(format!(
                "numerically on the boundary: the best admissible unit direction gains only {m:.3e} \
                 (no exact infeasibility certificate at this precision)"
            ));
            Ok(BoundaryVerdict {
                on_boundary: true,
                direction: None,
                binding: Vec::new(),
                certificate: None,
                rows: sys.labels,
                warnings,
            })
        }
        LpOutcome::Feasible(y) => Ok(feasible_verdict(sys, &y)),
        LpOutcome::Infeasible(cert) => {
            let binding = sys
                .labels
                .iter()
                .zip(cert.lambda.iter())
                .filter(|(_, &l)| l > 1e-12)
                .map(|(l, _)| l.clone())
                .collect();
            Ok(BoundaryVerdict {
                on_boundary: true,
                direction: None,
                binding,
                certificate: Some(CertificateReport {
                    lambda: cert.lambda.iter().copied().collect(),
                    mu: cert.mu,
                }),
                rows: sys.labels,
                warnings: sys.warnings,
            })
        }
    }
}

fn positional(i: usize) -> usize {
    i
}

/// Boundary test at the point where `j` was assembled. Bus labels in the
/// result are network indices; see [`check_on_boundary_in`] for ids.
pub fn check_on_boundary(j: &JacobianMatrix, cs: &ConstraintSet, tol: f64) -> Result<BoundaryVerdict> {
    verdict(assemble(j, cs, 0.0, &positional), tol)
}

/// Early-warning variant: every `y·h_d ≥ ε`. The alarm fires (the verdict
/// reports `on_boundary = true`) when that system is infeasible.
pub fn check_alarm(j: &JacobianMatrix, cs: &ConstraintSet, epsilon: f64, tol: f64) -> Result<BoundaryVerdict> {
    verdict(assemble(j, cs, epsilon, &positional), tol)
}

/// Margin `max Σ y·h_d` over unit-norm admissible directions, computed as
/// the norm of the projection of `Σ h_d` onto the admissible cone.
pub fn margin(j: &JacobianMatrix, cs: &ConstraintSet) -> Result<MarginResult> {
    margin_with(assemble(j, cs, 0.0, &positional))
}

/// [`check_on_boundary`] / [`check_alarm`] with bus ids in the labels.
pub fn check_on_boundary_in(
    net: &Network,
    j: &JacobianMatrix,
    cs: &ConstraintSet,
    epsilon: f64,
    tol: f64,
) -> Result<BoundaryVerdict> {
    verdict(assemble(j, cs, epsilon, &|b| net.bus_id(b)), tol)
}

/// [`margin`] with bus ids in the labels.
pub fn margin_in(net: &Network, j: &JacobianMatrix, cs: &ConstraintSet) -> Result<MarginResult> {
    margin_with(assemble(j, cs, 0.0, &|b| net.bus_id(b)))
}

fn margin_with(sys: System) -> Result<MarginResult> {
    // unit rows: the cone is unchanged and the Gram matrix better scaled
    let mut a = sys.g.clone();
    for mut row in a.row_iter_mut() {
        let nrm = row.norm();
        row /= nrm;
    }
    let proj = project_onto_cone(&a, &sys.c)?;
    let m = proj.projection.norm();
    let direction = if m > 0.0 { &proj.projection / m } else { DVector::zeros(sys.c.len()) };
    let binding = sys
        .labels
        .iter()
        .zip(proj.lambda.iter())
        .filter(|(_, &l)| l > 0.0)
        .map(|(l, _)| l.clone())
        .collect();
    Ok(MarginResult {
        m,
        direction: direction.iter().copied().collect(),
        binding,
        warnings: sys.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powerflow::jacobian;
    use crate::powerflow::tests::{real_state, triangle};

    #[test]
    fn points_a_and_b() {
        let net = triangle(1.0, 0.0);
        let cs = ConstraintSet::default();
        let ja = jacobian(&net, &real_state(&net, 0.5, 0.5));
        let a = check_on_boundary(&ja, &cs, FEASIBILITY_TOL).unwrap();
        assert!(a.on_boundary);
        assert_eq!(margin(&ja, &cs).unwrap().m, 0.0);

        let jb = jacobian(&net, &real_state(&net, 0.25, 0.25));
        let b = check_on_boundary(&jb, &cs, FEASIBILITY_TOL).unwrap();
        assert!(!b.on_boundary);
        let y = DVector::from_vec(b.direction.unwrap());
        assert!(jb.h_row(0).dot(&y) >= -1e-9 && jb.h_row(1).dot(&y) >= -1e-9);
        assert!(((jb.h_row(0) + jb.h_row(1)).dot(&y) - 1.0).abs() < 1e-9);
        let m = margin(&jb, &cs).unwrap();
        assert!((m.m - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn alarm_threshold_at_point_b() {
        let net = triangle(1.0, 0.0);
        let jb = jacobian(&net, &real_state(&net, 0.25, 0.25));
        let cs = ConstraintSet::default();
        assert!(!check_alarm(&jb, &cs, 0.4, FEASIBILITY_TOL).unwrap().on_boundary);
        assert!(check_alarm(&jb, &cs, 0.6, FEASIBILITY_TOL).unwrap().on_boundary);
        let ja = jacobian(&net, &real_state(&net, 0.5, 0.5));
        assert!(check_alarm(&ja, &cs, 1e-3, FEASIBILITY_TOL).unwrap().on_boundary);
    }

    #[test]
    fn q_binding_rows_shrink_margin() {
        let net = triangle(1.0, -0.5);
        let x = DVector::from_vec(vec![0.85, 0.8, -0.12, -0.15]);
        let v = VoltageState::from_state_vector(&net, &x);
        let j = jacobian(&net, &v);
        let free = margin(&j, &ConstraintSet::default()).unwrap().m;
        let cs = ConstraintSet {
            q_bindings: vec![QBinding { bus: 2, sense: LimitSense::Max }],
            ..Default::default()
        };
        let tight = margin(&j, &cs).unwrap().m;
        assert!(tight <= free + 1e-12);
    }

    #[test]
    fn current_limit_row_matches_finite_difference() {
        let net = triangle(1.0, -0.5);
        let x = DVector::from_vec(vec![0.85, 0.8, -0.12, -0.15]);
        let v = VoltageState::from_state_vector(&net, &x);
        let hs = HalfSpace::current_limit(&net, &v, 1, 2);
        let cur = |x: &DVector<f64>| {
            let s = VoltageState::from_state_vector(&net, x);
            ((s.voltage(1) - s.voltage(2)) * Complex64::new(1.0, -0.5)).norm_sqr()
        };
        for c in 0..4 {
            let mut xp = x.clone();
            xp[c] += 1e-6;
            let mut xm = x.clone();
            xm[c] -= 1e-6;
            let fd = (cur(&xp) - cur(&xm)) / 2e-6;
            assert!((fd + hs.normal[c]).abs() < 1e-8, "component {c}");
        }
    }
}

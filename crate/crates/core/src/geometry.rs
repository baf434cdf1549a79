//! The per-bus circle picture: with its neighbors' voltages frozen, the set
//! of voltages giving bus `d` a fixed active (or reactive) consumption is a
//! circle in the `(v_re, v_im)` plane. An operating voltage is an
//! intersection of the two circles; as loading grows the two intersection
//! points close in.

use serde::Serialize;

use crate::powerflow::{t_coefficients, TCoefficients};
use crate::{Error, Network, Result, VoltageState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CircleKind {
    Active,
    Reactive,
}

impl CircleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CircleKind::Active => "active",
            CircleKind::Reactive => "reactive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CircleDescriptor {
    /// Bus id.
    pub bus: usize,
    pub kind: CircleKind,
    pub center: (f64, f64),
    /// Squared radius; negative means the circle is empty.
    pub radius_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircleIntersection {
    pub points: Vec<(f64, f64)>,
    /// Distance between the intersection points (0 when tangent).
    pub gap: f64,
}

/// Circle of voltages at which bus `d` consumes `p` actively, given the
/// coefficients from frozen neighbor voltages.
pub fn active_circle(bus: usize, t: &TCoefficients, p: f64) -> Result<CircleDescriptor> {
    if t.t1 == 0.0 {
        return Err(Error::DegenerateCircle { bus, kind: "active" });
    }
    Ok(CircleDescriptor {
        bus,
        kind: CircleKind::Active,
        center: (-t.t2 / (2.0 * t.t1), -t.t3 / (2.0 * t.t1)),
        radius_sq: p / t.t1 + (t.t2 * t.t2 + t.t3 * t.t3) / (4.0 * t.t1 * t.t1),
    })
}

pub fn reactive_circle(bus: usize, t: &TCoefficients, q: f64) -> Result<CircleDescriptor> {
    if t.t4 == 0.0 {
        return Err(Error::DegenerateCircle { bus, kind: "reactive" });
    }
    Ok(CircleDescriptor {
        bus,
        kind: CircleKind::Reactive,
        center: (t.t3 / (2.0 * t.t4), -t.t2 / (2.0 * t.t4)),
        radius_sq: q / t.t4 + (t.t2 * t.t2 + t.t3 * t.t3) / (4.0 * t.t4 * t.t4),
    })
}

/// Active and reactive circles of network bus `d` for the consumption
/// `(p, q)`, with neighbor voltages taken from `v`.
pub fn power_circles(
    net: &Network,
    v: &VoltageState,
    d: usize,
    p: f64,
    q: f64,
) -> Result<(CircleDescriptor, CircleDescriptor)> {
    let t = t_coefficients(net, v, d);
    let id = net.bus_id(d);
    Ok((active_circle(id, &t, p)?, reactive_circle(id, &t, q)?))
}

/// Largest active consumption bus `d` can reach with its neighbors frozen:
/// the load at which the active circle shrinks to a point.
pub fn max_active_power(t: &TCoefficients) -> f64 {
    -(t.t2 * t.t2 + t.t3 * t.t3) / (4.0 * t.t1)
}

/// Intersection of two circles.
pub fn intersect(c1: &CircleDescriptor, c2: &CircleDescriptor) -> Result<CircleIntersection> {
    if c1.radius_sq < 0.0 || c2.radius_sq < 0.0 {
        return Err(Error::Disjoint);
    }
    let (r1, r2) = (c1.radius_sq.sqrt(), c2.radius_sq.sqrt());
    let (dx, dy) = (c2.center.0 - c1.center.0, c2.center.1 - c1.center.1);
    let d = dx.hypot(dy);
    let scale = 1e-12 * (1.0 + r1 + r2 + d);
    if d <= scale {
        return Err(Error::Disjoint);
    }
    if d > r1 + r2 + scale || d < (r1 - r2).abs() - scale {
        return Err(Error::Disjoint);
    }
    // foot of the chord along the center line, measured from c1
    let a = (d * d + c1.radius_sq - c2.radius_sq) / (2.0 * d);
    let h_sq = c1.radius_sq - a * a;
    let (ux, uy) = (dx / d, dy / d);
    let foot = (c1.center.0 + a * ux, c1.center.1 + a * uy);
    if h_sq <= scale * (r1 + r2 + scale) {
        return Ok(CircleIntersection { points: vec![foot], gap: 0.0 });
    }
    let h = h_sq.sqrt();
    Ok(CircleIntersection {
        points: vec![
            (foot.0 - h * uy, foot.1 + h * ux),
            (foot.0 + h * uy, foot.1 - h * ux),
        ],
        gap: 2.0 * h,
    })
}

/// `samples` evenly spaced points `(theta, x, y)` on the circle. Empty for
/// circles with negative squared radius.
pub fn sample_circle(c: &CircleDescriptor, samples: usize) -> Vec<(f64, f64, f64)> {
    if c.radius_sq < 0.0 {
        return Vec::new();
    }
    let r = c.radius_sq.sqrt();
    (0..samples)
        .map(|i| {
            let theta = std::f64::consts::TAU * i as f64 / samples as f64;
            (theta, c.center.0 + r * theta.cos(), c.center.1 + r * theta.sin())
        })
        .collect()
}

/// Distance from `point` to the circle's rim.
pub fn distance_to_circle(c: &CircleDescriptor, point: (f64, f64)) -> f64 {
    let d = (point.0 - c.center.0).hypot(point.1 - c.center.1);
    (d - c.radius_sq.max(0.0).sqrt()).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::PowerTarget;
    use crate::powerflow::tests::triangle;
    use crate::powerflow::{solve_power_flow, SolveOptions};
    use num_complex::Complex64;

    fn circle(x: f64, y: f64, r: f64) -> CircleDescriptor {
        CircleDescriptor { bus: 0, kind: CircleKind::Active, center: (x, y), radius_sq: r * r }
    }

    #[test]
    fn concentric_circles_are_disjoint() {
        assert!(matches!(intersect(&circle(0.0, 0.0, 1.0), &circle(0.0, 0.0, 2.0)), Err(Error::Disjoint)));
    }

    #[test]
    fn tangent_circles_meet_once() {
        let i = intersect(&circle(0.0, 0.0, 1.0), &circle(3.0, 0.0, 2.0)).unwrap();
        assert_eq!(i.points.len(), 1);
        assert_eq!(i.gap, 0.0);
        assert!((i.points[0].0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn radius_shrinks_as_load_grows() {
        let t = TCoefficients { t1: -2.0, t2: 1.5, t3: 0.1, t4: -1.0 };
        let mut last = f64::INFINITY;
        for k in 0..10 {
            let r = active_circle(2, &t, 0.03 * k as f64).unwrap().radius_sq;
            assert!(r < last);
            last = r;
        }
        let pmax = max_active_power(&t);
        assert!(active_circle(2, &t, pmax).unwrap().radius_sq.abs() < 1e-15);
    }

    #[test]
    fn resistive_network_has_degenerate_reactive_circle() {
        let net = triangle(1.0, 0.0);
        let err = power_circles(&net, &VoltageState::flat(&net), 1, 0.1, 0.0).unwrap_err();
        assert!(matches!(err, Error::DegenerateCircle { kind: "reactive", .. }));
    }

    #[test]
    fn solved_voltage_lies_on_both_circles() {
        let mut net = triangle(1.0, -0.5);
        let tan = (0.95f64.acos()).tan();
        // the (0.7, 0.9) loading direction, scaled into the feasible region
        net.set_target(1, PowerTarget { p: 0.21, q: 0.21 * tan });
        net.set_target(2, PowerTarget { p: 0.27, q: 0.27 * tan });
        let v = solve_power_flow(&net, None, SolveOptions::default()).unwrap().state;
        let mut gaps = Vec::new();
        for d in 1..3 {
            let t = net.target(d);
            let (a, r) = power_circles(&net, &v, d, t.p, t.q).unwrap();
            let x: Complex64 = v.voltage(d);
            assert!(distance_to_circle(&a, (x.re, x.im)) < 1e-9);
            assert!(distance_to_circle(&r, (x.re, x.im)) < 1e-9);
            let i = intersect(&a, &r).unwrap();
            assert!(i
                .points
                .iter()
                .any(|p| (p.0 - x.re).hypot(p.1 - x.im) < 1e-9));
            gaps.push(i.gap);
        }
        assert!(gaps[1] < gaps[0], "bus 3 gap {} should be below bus 2 gap {}", gaps[1], gaps[0]);
    }
}

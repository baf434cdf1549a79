//! Thevenin-equivalent voltage-stability baseline.
//!
//! The grid seen from one load bus is reduced to a source `e_thev` behind an
//! impedance `z_thev`; the load is stable while its apparent impedance
//! `|v|²/s*` stays larger than `|z_thev|`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::boundary::{margin, ConstraintSet};
use crate::pareto::{locate_boundary_point, GrowthDirection};
use crate::powerflow::{bus_power, jacobian};
use crate::{Error, Network, Result, VoltageState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheveninEquivalent {
    /// Bus id.
    pub bus: usize,
    pub z_thev: Complex64,
    pub e_thev: Complex64,
}

fn pq_index(net: &Network, bus: usize) -> Result<usize> {
    net.state_position(bus)
        .ok_or_else(|| Error::InvalidInput(format!("bus index {bus} is not a PQ bus")))
}

/// Reduction at PQ bus `d` (network index) with every other load frozen as
/// the constant admittance `s*/|v|²` it presents at `v`.
pub fn thevenin_at(net: &Network, v: &VoltageState, d: usize) -> Result<TheveninEquivalent> {
    let i = pq_index(net, d)?;
    if !net.is_connected() {
        return Err(Error::InvalidInput("network is not connected to the slack bus".into()));
    }
    let n = net.pq_count();
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    let mut source = DVector::<Complex64>::zeros(n);
    for line in net.lines() {
        let yl = Complex64::new(line.g, line.b);
        match (net.state_position(line.from), net.state_position(line.to)) {
            (Some(a), Some(b)) => {
                y[(a, a)] += yl;
                y[(b, b)] += yl;
                y[(a, b)] -= yl;
                y[(b, a)] -= yl;
            }
            (None, Some(a)) | (Some(a), None) => {
                y[(a, a)] += yl;
                source[a] += yl * net.slack_voltage();
            }
            (None, None) => unreachable!("lines join distinct buses"),
        }
    }
    for k in net.pq_buses() {
        let j = k - 1;
        if j == i {
            continue;
        }
        let vk = v.voltage(k);
        if vk.norm_sqr() > 0.0 {
            y[(j, j)] += bus_power(net, v, k).conj() / vk.norm_sqr();
        }
    }
    let lu = y.lu();
    let singular = || Error::SingularNetwork(format!("reduced admittance matrix at bus {} is singular", net.bus_id(d)));
    let open = lu.solve(&source).ok_or_else(singular)?;
    let mut e_d = DVector::zeros(n);
    e_d[i] = Complex64::new(1.0, 0.0);
    let col = lu.solve(&e_d).ok_or_else(singular)?;
    if !(col[i].re.is_finite() && col[i].im.is_finite()) {
        return Err(singular());
    }
    Ok(TheveninEquivalent {
        bus: net.bus_id(d),
        z_thev: col[i],
        e_thev: open[i],
    })
}

/// Load current `(s/v)*` drawn at bus `d`.
fn load_current(net: &Network, v: &VoltageState, d: usize) -> Complex64 {
    (bus_power(net, v, d) / v.voltage(d)).conj()
}

/// Tangent estimate `z = −dV/dI` at PQ bus `d` for the state moving along
/// `dv` (a full state-vector direction). Exact for the sensitivity of the
/// grid to load growth in that direction.
pub fn thevenin_tracking(net: &Network, v: &VoltageState, dv: &DVector<f64>, d: usize) -> Result<TheveninEquivalent> {
    let i = pq_index(net, d)?;
    let n = net.pq_count();
    let j = jacobian(net, v);
    let ds = Complex64::new(j.h_row(i).dot(dv), j.g_row(i).dot(dv));
    let vd = v.voltage(d);
    let dvd = Complex64::new(dv[i], dv[n + i]);
    let s = bus_power(net, v, d);
    // I = s*/v*  ⇒  dI = ds*/v* − s*·dv*/v*²
    let di = ds.conj() / vd.conj() - s.conj() * dvd.conj() / (vd.conj() * vd.conj());
    if di.norm() == 0.0 {
        return Err(Error::SingularNetwork(format!(
            "load current at bus {} does not change along the direction",
            net.bus_id(d)
        )));
    }
    let z = -dvd / di;
    Ok(TheveninEquivalent {
        bus: net.bus_id(d),
        z_thev: z,
        e_thev: vd + z * load_current(net, v, d),
    })
}

/// `1 − |z_thev|/|z_app|` with `z_app = |v|²/s*`, clamped to `[0, 1]`; 1 at
/// zero load.
pub fn thevenin_margin(eq: &TheveninEquivalent, v_d: Complex64, s_d: Complex64) -> f64 {
    if s_d.norm() == 0.0 {
        return 1.0;
    }
    let z_app = v_d.norm_sqr() / s_d.norm();
    (1.0 - eq.z_thev.norm() / z_app).clamp(0.0, 1.0)
}

/// Largest apparent power the equivalent can deliver at the load's power
/// factor: `|e|²/(2|z|(1 + cos(β − φ)))`, `β = arg z`, `φ = arg s`.
pub fn max_transfer(eq: &TheveninEquivalent, s_d: Complex64) -> f64 {
    let z = eq.z_thev;
    eq.e_thev.norm_sqr() / (2.0 * z.norm() * (1.0 + (z.arg() - s_d.arg()).cos()))
}

/// `1 − |s|/S_max`, clamped to `[0, 1]`.
pub fn power_transfer_margin(eq: &TheveninEquivalent, s_d: Complex64) -> f64 {
    if s_d.norm() == 0.0 {
        return 1.0;
    }
    (1.0 - s_d.norm() / max_transfer(eq, s_d)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginMetric {
    /// [`power_transfer_margin`].
    #[default]
    PowerTransfer,
    /// [`thevenin_margin`].
    ImpedanceRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    /// Active load at the observed bus.
    pub load: f64,
    pub thevenin_margin: f64,
    /// Proposed-method margin relative to its zero-load value.
    pub proposed_margin: f64,
    /// Unnormalized proposed margin.
    pub proposed_raw: f64,
    pub z_thev: f64,
}

/// Walks from the no-load (flat) state to the boundary point of growth
/// direction `z` along a straight voltage path, recording both margins at
/// bus `d` at `steps` evenly spaced states. The Thevenin impedance is the
/// tangent estimate along the path.
pub fn margin_sweep(
    net: &Network,
    d: usize,
    z: &GrowthDirection,
    steps: usize,
    metric: MarginMetric,
) -> Result<Vec<SweepRow>> {
    if steps < 2 {
        return Err(Error::InvalidInput("a sweep needs at least 2 steps".into()));
    }
    pq_index(net, d)?;
    let start = VoltageState::flat(net);
    let end = locate_boundary_point(net, z)?.v;
    let dv = end.state_vector() - start.state_vector();
    let free = ConstraintSet::default();
    let m0 = margin(&jacobian(net, &start), &free)?.m;
    (0..steps)
        .map(|k| {
            let t = k as f64 / (steps - 1) as f64;
            let v = start.lerp(&end, t);
            let s = bus_power(net, &v, d);
            let eq = thevenin_tracking(net, &v, &dv, d)?;
            let th = match metric {
                MarginMetric::PowerTransfer => power_transfer_margin(&eq, s),
                MarginMetric::ImpedanceRatio => thevenin_margin(&eq, v.voltage(d), s),
            };
            let m = margin(&jacobian(net, &v), &free)?.m;
            Ok(SweepRow {
                load: s.re,
                thevenin_margin: th,
                proposed_margin: if m0 > 0.0 { m / m0 } else { 0.0 },
                proposed_raw: m,
                z_thev: eq.z_thev.norm(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::parse_network_json;
    use crate::powerflow::tests::{real_state, triangle};
    use approx::assert_relative_eq;

    fn two_bus(g: f64, b: f64) -> Network {
        parse_network_json(&format!(
            r#"{{"base_power": 1, "slack": {{"id": 1, "v_re": 1, "v_im": 0}},
               "buses": [{{"id": 2, "p": 0, "q": 0}}],
               "lines": [{{"from": 1, "to": 2, "g": {g}, "b": {b}}}]}}"#
        ))
        .unwrap()
    }

    #[test]
    fn two_bus_reduces_to_the_line() {
        let net = two_bus(0.5, -0.5);
        let v = VoltageState::flat(&net);
        let eq = thevenin_at(&net, &v, 1).unwrap();
        assert!((eq.z_thev - Complex64::new(1.0, 1.0)).norm() < 1e-14);
        assert!((eq.e_thev - Complex64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn series_parallel_reduction() {
        let net = triangle(1.0, 0.0);
        // bus 3 unloaded at v3 = 1: p3 = v3(1 + v2 − 2v3) = 0 with v2 = 1
        let v = real_state(&net, 1.0, 1.0);
        let eq = thevenin_at(&net, &v, 1).unwrap();
        assert_relative_eq!(eq.z_thev.re, 2.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(eq.z_thev.im, 0.0, epsilon = 1e-14);
        let sym = real_state(&net, 0.7, 0.7);
        let (a, b) = (thevenin_at(&net, &sym, 1).unwrap(), thevenin_at(&net, &sym, 2).unwrap());
        assert!((a.z_thev - b.z_thev).norm() < 1e-14);
    }

    #[test]
    fn margins_at_the_extremes() {
        let net = two_bus(1.0, 0.0);
        let v = real_state_1(&net, 0.5);
        let eq = thevenin_at(&net, &v, 1).unwrap();
        let s = bus_power(&net, &v, 1);
        assert_relative_eq!(s.re, 0.25, epsilon = 1e-15);
        assert!(thevenin_margin(&eq, v.voltage(1), s) < 1e-14);
        assert!(power_transfer_margin(&eq, s) < 1e-14);
        assert_eq!(thevenin_margin(&eq, v.voltage(1), Complex64::new(0.0, 0.0)), 1.0);
    }

    fn real_state_1(net: &Network, v2: f64) -> VoltageState {
        VoltageState::from_state_vector(net, &DVector::from_vec(vec![v2, 0.0]))
    }

    #[test]
    fn tracking_matches_the_line_on_two_buses() {
        let net = two_bus(0.5, -0.5);
        let v = VoltageState::from_state_vector(&net, &DVector::from_vec(vec![0.8, -0.15]));
        let dv = DVector::from_vec(vec![-0.3, -0.1]);
        let eq = thevenin_tracking(&net, &v, &dv, 1).unwrap();
        assert!((eq.z_thev - Complex64::new(1.0, 1.0)).norm() < 1e-12);
        assert!((eq.e_thev - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn symmetric_sweep_closed_form() {
        let net = triangle(1.0, 0.0);
        let z = GrowthDirection::new(vec![1.0, 1.0]).unwrap();
        let rows = margin_sweep(&net, 1, &z, 11, MarginMetric::PowerTransfer).unwrap();
        for r in &rows {
            let s = (1.0 - 4.0 * r.load).max(0.0);
            assert_relative_eq!(r.thevenin_margin, s, epsilon = 1e-9);
            assert_relative_eq!(r.proposed_margin, s.sqrt(), epsilon = 1e-9);
        }
        assert_relative_eq!(rows.last().unwrap().load, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn rejects_the_slack_bus() {
        let net = triangle(1.0, 0.0);
        assert!(thevenin_at(&net, &VoltageState::flat(&net), 0).is_err());
    }
}

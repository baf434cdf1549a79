use std::collections::BTreeMap;

use num_complex::Complex64;

use super::{BusKind, BusSpec, LineSpec, Network, NetworkCase, PowerTarget, QLimit};
use crate::powerflow::{set_targets_from_state, VoltageState};
use crate::{Error, Result};

/// Where the PQ targets of former PV buses (and the operating state) come
/// from.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum StateSource {
    /// The voltages stored in the case (`Vm`, `Va`). Targets are set to the
    /// modeled consumption at that state, so it is an exact solution of the
    /// modeled network.
    #[default]
    CaseStored,
    /// Net loads from the bus and generator tables (`p_load − Σpg`,
    /// `q_load − Σqg`); the operating state must then be solved for.
    GenTable,
    /// An externally solved state, keyed by bus id. Treated like
    /// `CaseStored`.
    Supplied(BTreeMap<usize, Complex64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureHandling {
    #[default]
    DropWithWarning,
    Reject,
}

/// Modeling choices for features the series-admittance model cannot carry.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelPolicy {
    pub state_source: StateSource,
    pub shunts: FeatureHandling,
    pub charging: FeatureHandling,
    pub taps: FeatureHandling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeledCase {
    pub network: Network,
    /// Known operating state, when the state source provides one.
    pub operating_state: Option<VoltageState>,
    pub warnings: Vec<String>,
}

fn polar(vm: f64, va_deg: f64) -> Complex64 {
    Complex64::from_polar(vm, va_deg.to_radians())
}

fn handle(
    what: &str,
    count: usize,
    policy: FeatureHandling,
    warnings: &mut Vec<String>,
) -> Result<()> {
    if count == 0 {
        return Ok(());
    }
    match policy {
        FeatureHandling::Reject => Err(Error::UnsupportedFeature(format!(
            "{count} {what} present and the policy rejects them"
        ))),
        FeatureHandling::DropWithWarning => {
            warnings.push(format!("dropped {count} {what}"));
            Ok(())
        }
    }
}

/// Turns a parsed case into the slack + PQ series-admittance network.
pub fn model_network(case: &NetworkCase, policy: &ModelPolicy) -> Result<ModeledCase> {
    let mut warnings = Vec::new();

    let shunts = case
        .buses
        .iter()
        .filter(|b| b.shunt_g != 0.0 || b.shunt_b != 0.0)
        .count();
    let charging = case
        .branches
        .iter()
        .filter(|b| b.total_charging_b != 0.0)
        .count();
    let taps = case
        .branches
        .iter()
        .filter(|b| b.tap_ratio.is_some_and(|t| t != 1.0) || b.phase_shift != 0.0)
        .count();
    handle("bus shunts", shunts, policy.shunts, &mut warnings)?;
    handle("branch charging susceptances", charging, policy.charging, &mut warnings)?;
    handle("transformer taps/phase shifts", taps, policy.taps, &mut warnings)?;

    let slack = case.slack();
    let mut gen_p: BTreeMap<usize, f64> = BTreeMap::new();
    let mut gen_q: BTreeMap<usize, f64> = BTreeMap::new();
    let mut gen_qmin: BTreeMap<usize, f64> = BTreeMap::new();
    let mut gen_qmax: BTreeMap<usize, f64> = BTreeMap::new();
    for g in &case.gens {
        *gen_p.entry(g.bus).or_default() += g.pg;
        *gen_q.entry(g.bus).or_default() += g.qg;
        *gen_qmin.entry(g.bus).or_default() += g.qmin;
        *gen_qmax.entry(g.bus).or_default() += g.qmax;
    }
    // generation limits [qmin, qmax] become consumption limits
    // [q_load − qmax, q_load − qmin]
    let limit = |id: usize, q_load: f64| -> Option<QLimit> {
        let (lo, hi) = (gen_qmin.get(&id)?, gen_qmax.get(&id)?);
        Some(QLimit {
            min: q_load - hi,
            max: q_load - lo,
        })
    };

    let pv = case.buses.iter().filter(|b| b.kind == BusKind::Pv).count();
    if pv > 0 {
        warnings.push(format!("converted {pv} PV buses to PQ"));
    }

    let buses = case
        .buses
        .iter()
        .filter(|b| b.kind != BusKind::Slack)
        .map(|b| BusSpec {
            id: b.id,
            target: PowerTarget {
                p: b.p_load - gen_p.get(&b.id).copied().unwrap_or(0.0),
                q: b.q_load - gen_q.get(&b.id).copied().unwrap_or(0.0),
            },
            q_limit: limit(b.id, b.q_load),
        })
        .collect();
    let lines = case
        .branches
        .iter()
        .map(|br| {
            let y = Complex64::new(br.r, br.x).inv();
            LineSpec {
                from: br.from,
                to: br.to,
                g: y.re,
                b: y.im,
            }
        })
        .collect();

    let stored: Option<BTreeMap<usize, Complex64>> = match &policy.state_source {
        StateSource::GenTable => None,
        StateSource::CaseStored => {
            Some(case.buses.iter().map(|b| (b.id, polar(b.vm, b.va))).collect())
        }
        StateSource::Supplied(map) => Some(map.clone()),
    };
    let slack_voltage = match &stored {
        Some(map) => *map.get(&slack.id).unwrap_or(&polar(slack.vm, slack.va)),
        None => polar(slack.vm, slack.va),
    };

    let mut network = Network::new(
        case.base_power,
        slack.id,
        slack_voltage,
        limit(slack.id, slack.q_load),
        buses,
        lines,
    )?;

    let operating_state = match stored {
        None => None,
        Some(map) => {
            let v = network
                .bus_ids()
                .iter()
                .map(|id| {
                    map.get(id)
                        .copied()
                        .ok_or_else(|| Error::InvalidInput(format!("state is missing bus {id}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let state = VoltageState::from_voltages(&network, v)?;
            set_targets_from_state(&mut network, &state);
            Some(state)
        }
    };

    warnings.extend(network.warnings());
    Ok(ModeledCase {
        network,
        operating_state,
        warnings,
    })
}

/// Consumption `p + jq` at every network bus under the complete branch
/// model (line charging, bus shunts, off-nominal taps and phase shifts), in
/// network index order. The slack's value is its net consumption, i.e. the
/// negative of what its generators supply beyond the local load.
pub fn full_model_consumption(
    case: &NetworkCase,
    net: &Network,
    state: &VoltageState,
) -> Vec<Complex64> {
    let idx = |id: usize| net.index_of(id).expect("case and network share bus ids");
    let v = state.voltages();
    let mut current = vec![Complex64::new(0.0, 0.0); net.bus_count()];
    for br in &case.branches {
        let (f, t) = (idx(br.from), idx(br.to));
        let ys = Complex64::new(br.r, br.x).inv();
        let half = Complex64::new(0.0, br.total_charging_b / 2.0);
        let tap = Complex64::from_polar(br.tap_ratio.unwrap_or(1.0), br.phase_shift.to_radians());
        let ytt = ys + half;
        let yff = ytt / (tap * tap.conj());
        let yft = -ys / tap.conj();
        let ytf = -ys / tap;
        current[f] += yff * v[f] + yft * v[t];
        current[t] += ytf * v[f] + ytt * v[t];
    }
    for b in &case.buses {
        if let Some(i) = net.index_of(b.id) {
            current[i] += Complex64::new(b.shunt_g, b.shunt_b) * v[i];
        }
    }
    // current[i] is the current leaving bus i into the grid; consumption is
    // the negative of the injected power
    v.iter().zip(&current).map(|(vi, ii)| -(vi * ii.conj())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::{CaseBranch, CaseBus, CaseGen};
    use crate::powerflow::bus_power;

    fn bus(id: usize, kind: BusKind, p: f64, q: f64) -> CaseBus {
        CaseBus {
            id,
            kind,
            p_load: p,
            q_load: q,
            shunt_g: 0.0,
            shunt_b: 0.0,
            vm: 1.0,
            va: 0.0,
        }
    }

    fn branch(from: usize, to: usize) -> CaseBranch {
        CaseBranch {
            from,
            to,
            r: 0.02,
            x: 0.2,
            total_charging_b: 0.0,
            tap_ratio: None,
            phase_shift: 0.0,
        }
    }

    fn small_case() -> NetworkCase {
        NetworkCase {
            base_power: 100.0,
            buses: vec![
                bus(1, BusKind::Slack, 0.0, 0.0),
                bus(2, BusKind::Pv, 0.3, 0.1),
                bus(3, BusKind::Pq, 0.4, 0.2),
            ],
            branches: vec![branch(1, 2), branch(2, 3), branch(1, 3), branch(2, 3)],
            gens: vec![
                CaseGen { bus: 1, pg: 0.5, qg: 0.1, qmax: 1.0, qmin: -1.0 },
                CaseGen { bus: 2, pg: 0.5, qg: 0.2, qmax: 0.5, qmin: -0.5 },
            ],
        }
    }

    #[test]
    fn gen_table_targets_and_limits() {
        let policy = ModelPolicy {
            state_source: StateSource::GenTable,
            ..Default::default()
        };
        let m = model_network(&small_case(), &policy).unwrap();
        let net = &m.network;
        assert!(m.operating_state.is_none());
        assert_eq!(net.lines().len(), 3, "parallel 2-3 branches merge");
        let t2 = net.target(net.index_of(2).unwrap());
        assert!((t2.p + 0.2).abs() < 1e-15 && (t2.q + 0.1).abs() < 1e-15);
        let t3 = net.target(net.index_of(3).unwrap());
        assert_eq!((t3.p, t3.q), (0.4, 0.2));
        let lim = net.q_limit(net.index_of(2).unwrap()).unwrap();
        assert!((lim.min + 0.4).abs() < 1e-15 && (lim.max - 0.6).abs() < 1e-15);
        assert!(net.q_limit(net.index_of(3).unwrap()).is_none());
        for l in net.lines() {
            let z = Complex64::new(0.02, 0.2);
            let k = if (l.from, l.to) == (1, 2) { 2.0 } else { 1.0 };
            let err = (Complex64::new(l.g, l.b) / k * z - 1.0).norm();
            assert!(err < 1e-12);
        }
    }

    #[test]
    fn stored_state_is_an_exact_solution() {
        let mut case = small_case();
        case.buses[1].vm = 0.98;
        case.buses[1].va = -2.0;
        case.buses[2].vm = 0.95;
        case.buses[2].va = -4.0;
        let m = model_network(&case, &ModelPolicy::default()).unwrap();
        let v = m.operating_state.unwrap();
        for d in m.network.pq_buses() {
            let s = bus_power(&m.network, &v, d);
            assert_eq!(s.re, m.network.target(d).p);
        }
    }

    #[test]
    fn strict_policy_rejects_taps() {
        let mut case = small_case();
        case.branches[0].tap_ratio = Some(0.97);
        let policy = ModelPolicy {
            taps: FeatureHandling::Reject,
            ..Default::default()
        };
        assert!(matches!(model_network(&case, &policy), Err(Error::UnsupportedFeature(_))));
        let m = model_network(&case, &ModelPolicy::default()).unwrap();
        assert!(m.warnings.iter().any(|w| w.contains("taps")));
    }

    #[test]
    fn full_model_reduces_to_series_model_without_extras() {
        let mut case = small_case();
        case.buses[2].va = -3.0;
        let m = model_network(&case, &ModelPolicy::default()).unwrap();
        let v = m.operating_state.unwrap();
        let full = full_model_consumption(&case, &m.network, &v);
        for (d, s) in full.iter().enumerate() {
            assert!((s - bus_power(&m.network, &v, d)).norm() < 1e-12);
        }
    }
}

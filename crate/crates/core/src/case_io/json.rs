use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{BusSpec, LineSpec, Network, PowerTarget, QLimit};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    base_power: f64,
    slack: SlackDoc,
    buses: Vec<BusDoc>,
    lines: Vec<LineDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SlackDoc {
    id: usize,
    v_re: f64,
    v_im: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    qmin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    qmax: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusDoc {
    id: usize,
    p: f64,
    q: f64,
    #[serde(default)]
    qmin: Option<f64>,
    #[serde(default)]
    qmax: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineDoc {
    from: usize,
    to: usize,
    g: f64,
    b: f64,
}

fn limit(id: usize, qmin: Option<f64>, qmax: Option<f64>) -> Result<Option<QLimit>> {
    match (qmin, qmax) {
        (None, None) => Ok(None),
        (min, max) => {
            let l = QLimit {
                min: min.unwrap_or(f64::NEG_INFINITY),
                max: max.unwrap_or(f64::INFINITY),
            };
            if l.min > l.max {
                return Err(Error::InvariantViolation(format!("bus {id} has qmin > qmax")));
            }
            Ok(Some(l))
        }
    }
}

fn bound(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Reads a network from the native JSON schema.
///
/// Powers are per-unit and consumption-positive; line admittances are given
/// directly as series conductance `g` and susceptance `b`.
pub fn parse_network_json(text: &str) -> Result<Network> {
    let doc: Doc = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let buses = doc
        .buses
        .into_iter()
        .map(|b| {
            Ok(BusSpec {
                id: b.id,
                target: PowerTarget { p: b.p, q: b.q },
                q_limit: limit(b.id, b.qmin, b.qmax)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lines = doc
        .lines
        .into_iter()
        .map(|l| LineSpec {
            from: l.from,
            to: l.to,
            g: l.g,
            b: l.b,
        })
        .collect();
    Network::new(
        doc.base_power,
        doc.slack.id,
        Complex64::new(doc.slack.v_re, doc.slack.v_im),
        limit(doc.slack.id, doc.slack.qmin, doc.slack.qmax)?,
        buses,
        lines,
    )
}

/// Serializes a network to the native JSON schema. Parallel lines appear
/// merged, so the output parses back to an identical network.
pub fn to_network_json(net: &Network) -> String {
    let slack_limit = net.q_limit(0);
    let doc = Doc {
        base_power: net.base_power(),
        slack: SlackDoc {
            id: net.bus_id(0),
            v_re: net.slack_voltage().re,
            v_im: net.slack_voltage().im,
            qmin: slack_limit.and_then(|l| bound(l.min)),
            qmax: slack_limit.and_then(|l| bound(l.max)),
        },
        buses: net
            .pq_buses()
            .map(|d| {
                let t = net.target(d);
                let lim = net.q_limit(d);
                BusDoc {
                    id: net.bus_id(d),
                    p: t.p,
                    q: t.q,
                    qmin: lim.and_then(|l| bound(l.min)),
                    qmax: lim.and_then(|l| bound(l.max)),
                }
            })
            .collect(),
        lines: net
            .lines()
            .iter()
            .map(|l| LineDoc {
                from: net.bus_id(l.from),
                to: net.bus_id(l.to),
                g: l.g,
                b: l.b,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("network documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TRIANGLE: &str = r#"{
      "base_power": 100,
      "slack": {"id": 1, "v_re": 1.0, "v_im": 0.0},
      "buses": [
        {"id": 2, "p": 0.7, "q": 0.23, "qmin": null, "qmax": null},
        {"id": 3, "p": 0.9, "q": 0.29, "qmin": -0.5, "qmax": 0.5}
      ],
      "lines": [
        {"from": 1, "to": 2, "g": 1.0, "b": -0.5},
        {"from": 2, "to": 3, "g": 1.0, "b": -0.5},
        {"from": 1, "to": 3, "g": 1.0, "b": -0.5}
      ]
    }"#;

    #[test]
    fn reads_triangle() {
        let net = parse_network_json(TRIANGLE).unwrap();
        assert_eq!(net.pq_count(), 2);
        assert_eq!(net.lines().len(), 3);
        assert!(net.lines().iter().all(|l| l.g == 1.0 && l.b == -0.5));
        assert_eq!(net.q_limit(2), Some(QLimit { min: -0.5, max: 0.5 }));
        assert!(net.warnings().is_empty());
    }

    #[test]
    fn round_trip_is_exact() {
        let mut net = parse_network_json(TRIANGLE).unwrap();
        net.set_target(1, PowerTarget { p: 0.1 + 0.2, q: 1.0 / 3.0 });
        let back = parse_network_json(&to_network_json(&net)).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.target(1).p.to_bits(), (0.1f64 + 0.2).to_bits());
    }

    #[test]
    fn schema_and_invariant_errors() {
        assert!(matches!(parse_network_json("{}"), Err(Error::Schema(_))));
        let two_slacks = TRIANGLE.replace(r#""id": 2"#, r#""id": 1"#);
        assert!(matches!(parse_network_json(&two_slacks), Err(Error::InvariantViolation(_))));
    }
}

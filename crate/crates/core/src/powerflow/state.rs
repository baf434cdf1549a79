use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Network, Result};

/// Complex bus voltages for every bus of a [`Network`], slack included, in
/// network index order (slack first).
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageState {
    v: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDoc {
    buses: Vec<BusVoltage>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusVoltage {
    id: usize,
    v_re: f64,
    v_im: f64,
}

impl VoltageState {
    /// Slack voltage replicated to every bus.
    pub fn flat(net: &Network) -> Self {
        VoltageState {
            v: vec![net.slack_voltage(); net.bus_count()],
        }
    }

    /// Builds a state from per-bus voltages in network index order. The
    /// slack entry must equal the network's slack voltage.
    pub fn from_voltages(net: &Network, v: Vec<Complex64>) -> Result<Self> {
        if v.len() != net.bus_count() {
            return Err(Error::InvalidInput(format!(
                "state has {} buses, network has {}",
                v.len(),
                net.bus_count()
            )));
        }
        if v.iter().any(|x| !(x.re.is_finite() && x.im.is_finite())) {
            return Err(Error::InvalidInput("state has non-finite voltages".into()));
        }
        if (v[0] - net.slack_voltage()).norm() > 1e-9 {
            return Err(Error::InvariantViolation(format!(
                "state slack voltage {} differs from the network's {}",
                v[0],
                net.slack_voltage()
            )));
        }
        Ok(VoltageState { v })
    }

    /// Rebuilds a state from a `[v_re; v_im]` vector over the PQ buses.
    pub fn from_state_vector(net: &Network, x: &DVector<f64>) -> Self {
        let n = net.pq_count();
        assert_eq!(x.len(), 2 * n, "state vector length");
        let mut v = Vec::with_capacity(n + 1);
        v.push(net.slack_voltage());
        v.extend((0..n).map(|i| Complex64::new(x[i], x[n + i])));
        VoltageState { v }
    }

    /// The `[v_re; v_im]` vector over the PQ buses.
    pub fn state_vector(&self) -> DVector<f64> {
        let n = self.v.len() - 1;
        DVector::from_fn(2 * n, |i, _| {
            if i < n {
                self.v[i + 1].re
            } else {
                self.v[i - n + 1].im
            }
        })
    }

    pub fn voltage(&self, bus: usize) -> Complex64 {
        self.v[bus]
    }

    pub fn voltages(&self) -> &[Complex64] {
        &self.v
    }

    /// Convex combination `(1 − t)·self + t·other`.
    pub fn lerp(&self, other: &VoltageState, t: f64) -> VoltageState {
        VoltageState {
            v: self
                .v
                .iter()
                .zip(&other.v)
                .map(|(a, b)| a * (1.0 - t) + b * t)
                .collect(),
        }
    }

    pub fn to_json(&self, net: &Network) -> String {
        let doc = StateDoc {
            buses: self
                .v
                .iter()
                .enumerate()
                .map(|(i, x)| BusVoltage {
                    id: net.bus_id(i),
                    v_re: x.re,
                    v_im: x.im,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("states always serialize")
    }

    /// Reads `{"buses": [{"id", "v_re", "v_im"}]}`. The slack entry may be
    /// omitted; every PQ bus must be present.
    pub fn from_json(net: &Network, text: &str) -> Result<Self> {
        let doc: StateDoc = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let mut v: Vec<Option<Complex64>> = vec![None; net.bus_count()];
        v[0] = Some(net.slack_voltage());
        for b in doc.buses {
            let idx = net
                .index_of(b.id)
                .ok_or_else(|| Error::InvalidInput(format!("state references unknown bus {}", b.id)))?;
            v[idx] = Some(Complex64::new(b.v_re, b.v_im));
        }
        let v = v
            .into_iter()
            .enumerate()
            .map(|(i, x)| {
                x.ok_or_else(|| Error::InvalidInput(format!("state is missing bus {}", net.bus_id(i))))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_voltages(net, v)
    }
}

//! Case ingestion: MATPOWER files, the native JSON network schema, and the
//! modeling policy that turns a raw case into a [`Network`].

mod json;
mod matpower;
mod model;
mod network;

pub use json::{parse_network_json, to_network_json};
pub use matpower::parse_matpower;
pub use model::{
    full_model_consumption, model_network, FeatureHandling, ModelPolicy, ModeledCase, StateSource,
};
pub use network::{BusSpec, Line, LineSpec, Neighbor, Network, PowerTarget, QLimit};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pq,
    Pv,
}

/// One bus row of a case, in per-unit on the case base (angles in degrees).
#[derive(Debug, Clone, PartialEq)]
pub struct CaseBus {
    pub id: usize,
    pub kind: BusKind,
    pub p_load: f64,
    pub q_load: f64,
    pub shunt_g: f64,
    pub shunt_b: f64,
    pub vm: f64,
    pub va: f64,
}

/// An in-service branch. `tap_ratio` is `None` for plain lines.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseBranch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub total_charging_b: f64,
    pub tap_ratio: Option<f64>,
    pub phase_shift: f64,
}

/// An in-service generator, per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseGen {
    pub bus: usize,
    pub pg: f64,
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
}

/// A parsed case before any modeling decisions are applied.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCase {
    pub base_power: f64,
    pub buses: Vec<CaseBus>,
    pub branches: Vec<CaseBranch>,
    pub gens: Vec<CaseGen>,
}

impl NetworkCase {
    pub fn slack(&self) -> &CaseBus {
        self.buses
            .iter()
            .find(|b| b.kind == BusKind::Slack)
            .expect("a parsed case always has a slack bus")
    }

    pub fn bus(&self, id: usize) -> Option<&CaseBus> {
        self.buses.iter().find(|b| b.id == id)
    }
}

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;

use crate::{Error, Result};

/// Reactive power limits in the network's consumption-positive convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QLimit {
    pub min: f64,
    pub max: f64,
}

/// Consumption-positive power target of a PQ bus, per-unit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerTarget {
    pub p: f64,
    pub q: f64,
}

/// A series line between two buses (network indices, `from < to`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub g: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub bus: usize,
    pub g: f64,
    pub b: f64,
}

/// Input description of a non-slack bus.
#[derive(Debug, Clone, PartialEq)]
pub struct BusSpec {
    pub id: usize,
    pub target: PowerTarget,
    pub q_limit: Option<QLimit>,
}

/// Input description of a line, by bus id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSpec {
    pub from: usize,
    pub to: usize,
    pub g: f64,
    pub b: f64,
}

/// The modeled grid: one slack bus plus PQ buses joined by series lines.
///
/// The slack bus always sits at index 0. State vectors cover the remaining
/// buses in index order, real parts first, then imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    base_power: f64,
    bus_ids: Vec<usize>,
    slack_voltage: Complex64,
    lines: Vec<Line>,
    targets: Vec<PowerTarget>,
    q_limits: Vec<Option<QLimit>>,
    adjacency: Vec<Vec<Neighbor>>,
}

impl Network {
    /// Builds a network, merging parallel lines by admittance addition.
    pub fn new(
        base_power: f64,
        slack_id: usize,
        slack_voltage: Complex64,
        slack_q_limit: Option<QLimit>,
        buses: Vec<BusSpec>,
        lines: Vec<LineSpec>,
    ) -> Result<Network> {
        if !(base_power.is_finite() && base_power > 0.0) {
            return Err(Error::InvariantViolation(format!(
                "base power must be positive, got {base_power}"
            )));
        }
        if !(slack_voltage.re.is_finite() && slack_voltage.im.is_finite()) {
            return Err(Error::InvariantViolation("slack voltage is not finite".into()));
        }

        let mut bus_ids = Vec::with_capacity(buses.len() + 1);
        let mut targets = Vec::with_capacity(buses.len() + 1);
        let mut q_limits = Vec::with_capacity(buses.len() + 1);
        bus_ids.push(slack_id);
        targets.push(PowerTarget::default());
        q_limits.push(slack_q_limit);

        let mut index = HashMap::new();
        index.insert(slack_id, 0usize);
        for bus in buses {
            if bus.id == slack_id {
                return Err(Error::InvariantViolation(format!(
                    "bus {} is listed both as slack and as a PQ bus (two slack buses)",
                    bus.id
                )));
            }
            if index.insert(bus.id, bus_ids.len()).is_some() {
                return Err(Error::InvariantViolation(format!("duplicate bus id {}", bus.id)));
            }
            if !(bus.target.p.is_finite() && bus.target.q.is_finite()) {
                return Err(Error::InvariantViolation(format!(
                    "bus {} has a non-finite power target",
                    bus.id
                )));
            }
            bus_ids.push(bus.id);
            targets.push(bus.target);
            q_limits.push(bus.q_limit);
        }
        for (i, lim) in q_limits.iter().enumerate() {
            if let Some(l) = lim {
                if l.min.is_nan() || l.max.is_nan() || l.min > l.max {
                    return Err(Error::InvariantViolation(format!(
                        "bus {} has qmin > qmax",
                        bus_ids[i]
                    )));
                }
            }
        }

        let mut parallel: BTreeMap<(usize, usize), Vec<(f64, f64)>> = BTreeMap::new();
        for l in &lines {
            let from = *index.get(&l.from).ok_or_else(|| {
                Error::InvariantViolation(format!("line references unknown bus {}", l.from))
            })?;
            let to = *index.get(&l.to).ok_or_else(|| {
                Error::InvariantViolation(format!("line references unknown bus {}", l.to))
            })?;
            if from == to {
                return Err(Error::InvariantViolation(format!(
                    "line {} -> {} is a self loop",
                    l.from, l.to
                )));
            }
            if !(l.g.is_finite() && l.b.is_finite()) {
                return Err(Error::InvariantViolation(format!(
                    "line {} -> {} has a non-finite admittance",
                    l.from, l.to
                )));
            }
            if l.g < 0.0 {
                return Err(Error::InvariantViolation(format!(
                    "line {} -> {} has negative conductance",
                    l.from, l.to
                )));
            }
            parallel
                .entry((from.min(to), from.max(to)))
                .or_default()
                .push((l.g, l.b));
        }

        let mut merged = Vec::with_capacity(parallel.len());
        let mut adjacency = vec![Vec::new(); bus_ids.len()];
        for ((from, to), mut ys) in parallel {
            // sorted so the floating-point sum does not depend on input order
            ys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let (g, b) = ys.iter().fold((0.0, 0.0), |acc, y| (acc.0 + y.0, acc.1 + y.1));
            merged.push(Line { from, to, g, b });
            adjacency[from].push(Neighbor { bus: to, g, b });
            adjacency[to].push(Neighbor { bus: from, g, b });
        }

        Ok(Network {
            base_power,
            bus_ids,
            slack_voltage,
            lines: merged,
            targets,
            q_limits,
            adjacency,
        })
    }

    pub fn base_power(&self) -> f64 {
        self.base_power
    }

    /// Total number of buses, slack included.
    pub fn bus_count(&self) -> usize {
        self.bus_ids.len()
    }

    /// Number of non-slack (PQ) buses, `n`.
    pub fn pq_count(&self) -> usize {
        self.bus_ids.len() - 1
    }

    /// Length of the state vector, `2n`.
    pub fn state_dim(&self) -> usize {
        2 * self.pq_count()
    }

    pub fn slack_index(&self) -> usize {
        0
    }

    pub fn slack_voltage(&self) -> Complex64 {
        self.slack_voltage
    }

    pub fn bus_ids(&self) -> &[usize] {
        &self.bus_ids
    }

    pub fn bus_id(&self, bus: usize) -> usize {
        self.bus_ids[bus]
    }

    pub fn index_of(&self, id: usize) -> Option<usize> {
        self.bus_ids.iter().position(|&b| b == id)
    }

    /// Network indices of the PQ buses, in state order.
    pub fn pq_buses(&self) -> std::ops::Range<usize> {
        1..self.bus_ids.len()
    }

    /// Position of a PQ bus within the real (or imaginary) half of the state.
    pub fn state_position(&self, bus: usize) -> Option<usize> {
        (bus != 0 && bus < self.bus_ids.len()).then(|| bus - 1)
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn neighbors(&self, bus: usize) -> &[Neighbor] {
        &self.adjacency[bus]
    }

    pub fn target(&self, bus: usize) -> PowerTarget {
        self.targets[bus]
    }

    pub fn targets(&self) -> &[PowerTarget] {
        &self.targets
    }

    pub fn set_target(&mut self, bus: usize, target: PowerTarget) {
        assert!(bus != 0, "the slack bus has no power target");
        self.targets[bus] = target;
    }

    pub fn q_limit(&self, bus: usize) -> Option<QLimit> {
        self.q_limits[bus]
    }

    pub fn set_q_limit(&mut self, bus: usize, limit: Option<QLimit>) {
        self.q_limits[bus] = limit;
    }

    /// Sum of line susceptances at a bus, `t_{d,4}`.
    pub fn susceptance_sum(&self, bus: usize) -> f64 {
        self.adjacency[bus].iter().map(|n| n.b).sum()
    }

    /// Sum of line conductances at a bus, `-t_{d,1}`.
    pub fn conductance_sum(&self, bus: usize) -> f64 {
        self.adjacency[bus].iter().map(|n| n.g).sum()
    }

    /// True when every bus is reachable from the slack.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.bus_count()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(b) = stack.pop() {
            for n in &self.adjacency[b] {
                if !seen[n.bus] {
                    seen[n.bus] = true;
                    stack.push(n.bus);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Modeling warnings that do not prevent analysis.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.pq_buses().any(|d| self.susceptance_sum(d) > 0.0) {
            out.push(
                "non-inductive network: reactive circle monotonicity assumption violated".into(),
            );
        }
        if !self.is_connected() {
            out.push("network is not connected to the slack bus".into());
        }
        out
    }
}

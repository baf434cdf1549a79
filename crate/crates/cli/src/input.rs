//! Case, state and flag parsing shared by the subcommands.

use std::path::Path;
use std::str::FromStr;

use loadkit::boundary::{detect_q_bindings, QBinding};
use loadkit::case_io::{
    full_model_consumption, model_network, parse_matpower, parse_network_json, ModelPolicy, QLimit,
};
use loadkit::oracle::{Axis, GridSpec};
use loadkit::powerflow::{bus_power, solve_power_flow, SolveOptions};
use loadkit::{Error, Network, NetworkCase, Result, VoltageState};
use sha2::{Digest, Sha256};

/// Reactive consumption within this many per-unit of a limit counts as
/// binding.
const Q_BINDING_TOL: f64 = 1e-6;

pub struct LoadedCase {
    pub sha256: String,
    /// Present for MATPOWER input; needed for the full branch model.
    pub case: Option<NetworkCase>,
    pub network: Network,
    pub stored_state: Option<VoltageState>,
    pub warnings: Vec<String>,
}

pub fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `.json` files are network documents; anything else is read as MATPOWER.
pub fn load_case(path: &Path) -> Result<LoadedCase> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Error::InvalidInput(format!("{} is not UTF-8 text", path.display())))?;
    let sha256 = digest(&bytes);
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let network = parse_network_json(&text)?;
        let warnings = network.warnings();
        return Ok(LoadedCase {
            sha256,
            case: None,
            network,
            stored_state: None,
            warnings,
        });
    }
    let case = parse_matpower(&text)?;
    let modeled = model_network(&case, &ModelPolicy::default())?;
    let mut warnings = modeled.warnings;
    warnings.extend(modeled.network.warnings());
    Ok(LoadedCase {
        sha256,
        case: Some(case),
        network: modeled.network,
        stored_state: modeled.operating_state,
        warnings,
    })
}

impl LoadedCase {
    /// The `--state` file if given, else the state stored in the case, else
    /// a power flow solved from flat start.
    pub fn operating_state(&mut self, state: Option<&Path>) -> Result<VoltageState> {
        if let Some(p) = state {
            let text = std::fs::read_to_string(p)?;
            return VoltageState::from_json(&self.network, &text);
        }
        if let Some(v) = &self.stored_state {
            return Ok(v.clone());
        }
        let sol = solve_power_flow(&self.network, None, SolveOptions::default())?;
        self.warnings
            .push(format!("operating state solved in {} Newton iterations", sol.iterations));
        Ok(sol.state)
    }

    /// Reactive consumption at every bus, network order. MATPOWER cases use
    /// the full branch model, so charging and shunts count.
    pub fn q_consumption(&self, v: &VoltageState) -> Vec<f64> {
        match &self.case {
            Some(case) => full_model_consumption(case, &self.network, v).iter().map(|s| s.im).collect(),
            None => (0..self.network.bus_count()).map(|d| bus_power(&self.network, v, d).im).collect(),
        }
    }

    /// Reactive load at bus `id` in per-unit (0 for JSON networks, which
    /// carry net targets only).
    fn q_load(&self, id: usize) -> f64 {
        self.case.as_ref().and_then(|c| c.bus(id)).map_or(0.0, |b| b.q_load)
    }

    /// Installs the reactive limits to enforce and returns those binding at
    /// `v`. Without `use_case_limits` only the explicit ones apply.
    pub fn q_bindings(&mut self, v: &VoltageState, use_case_limits: bool, explicit: &[QLimitArg]) -> Result<Vec<QBinding>> {
        if !use_case_limits {
            for bus in 0..self.network.bus_count() {
                self.network.set_q_limit(bus, None);
            }
        }
        let base = self.network.base_power();
        for lim in explicit {
            let bus = self
                .network
                .index_of(lim.bus)
                .ok_or_else(|| Error::InvalidInput(format!("--q-limit names unknown bus {}", lim.bus)))?;
            // generation limits in MVAr → consumption limits in pu
            let q_load = self.q_load(lim.bus);
            self.network.set_q_limit(
                bus,
                Some(QLimit {
                    min: q_load - lim.max / base,
                    max: q_load - lim.min / base,
                }),
            );
        }
        if !use_case_limits && explicit.is_empty() {
            return Ok(Vec::new());
        }
        Ok(detect_q_bindings(&self.network, &self.q_consumption(v), Q_BINDING_TOL))
    }
}

/// `bus=<id>,min=<MVAr>,max=<MVAr>`: generation limits at one bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QLimitArg {
    pub bus: usize,
    pub min: f64,
    pub max: f64,
}

impl FromStr for QLimitArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (mut bus, mut min, mut max) = (None, None, None);
        for part in s.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got {part:?}"))?;
            let bad = |_| format!("{k}: {v:?} is not a number");
            match k.trim() {
                "bus" => bus = Some(v.trim().parse::<usize>().map_err(|_| format!("bus: {v:?} is not a bus id"))?),
                "min" => min = Some(v.trim().parse::<f64>().map_err(bad)?),
                "max" => max = Some(v.trim().parse::<f64>().map_err(bad)?),
                other => return Err(format!("unknown key {other:?} (expected bus, min, max)")),
            }
        }
        let lim = QLimitArg {
            bus: bus.ok_or("missing bus=")?,
            min: min.unwrap_or(f64::NEG_INFINITY),
            max: max.unwrap_or(f64::INFINITY),
        };
        if lim.min.is_nan() || lim.max.is_nan() || lim.min > lim.max {
            return Err(format!("min {} exceeds max {}", lim.min, lim.max));
        }
        Ok(lim)
    }
}

/// Comma-separated non-negative weights.
pub fn parse_weights(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|w| w.trim().parse::<f64>().map_err(|_| format!("{w:?} is not a number")))
        .collect()
}

/// `lo:hi:step`, either one triple for every axis or one per axis separated
/// by commas.
pub fn parse_grid(spec: &str, axes: usize, real_only: bool) -> Result<GridSpec> {
    let triples: Vec<Axis> = spec
        .split(',')
        .map(|t| {
            let parts: Vec<f64> = t
                .split(':')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::InvalidInput(format!("grid axis {t:?} is not lo:hi:step")))?;
            match parts[..] {
                [lo, hi, step] => Axis::new(lo, hi, step),
                _ => Err(Error::InvalidInput(format!("grid axis {t:?} is not lo:hi:step"))),
            }
        })
        .collect::<Result<_>>()?;
    let axes = match triples.len() {
        1 => vec![triples[0]; axes],
        k if k == axes => triples,
        k => {
            return Err(Error::InvalidInput(format!(
                "grid has {k} axes but the network needs {axes}"
            )))
        }
    };
    Ok(GridSpec { axes, real_only })
}

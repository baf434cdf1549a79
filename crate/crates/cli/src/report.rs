use serde::Serialize;
use serde_json::Value;

use loadkit::{Network, VoltageState};

#[derive(Debug, Serialize)]
pub struct CommandEcho {
    pub name: String,
    pub args: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub elapsed_s: f64,
}

/// Everything a run prints. Apart from `timing`, identical inputs and flags
/// give identical JSON.
#[derive(Debug, Serialize)]
pub struct AnalysisReport {
    pub command: CommandEcho,
    pub input: Option<InputDigest>,
    pub results: Value,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    pub timing: Timing,
}

#[derive(Serialize)]
struct BusVoltage {
    id: usize,
    v_re: f64,
    v_im: f64,
}

/// Voltages keyed by bus id.
pub fn state_json(net: &Network, v: &VoltageState) -> Value {
    let buses: Vec<BusVoltage> = v
        .voltages()
        .iter()
        .enumerate()
        .map(|(i, x)| BusVoltage {
            id: net.bus_id(i),
            v_re: x.re,
            v_im: x.im,
        })
        .collect();
    serde_json::to_value(buses).expect("plain data serializes")
}

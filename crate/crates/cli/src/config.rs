//! Run configuration: built-in defaults, overlaid by an optional JSON file,
//! overlaid by `--set` pairs and dedicated flags.

use std::path::{Path, PathBuf};

use qtransistor::experiment::ResonanceMode;
use qtransistor::tomography::ReadoutMatrix;
use qtransistor::CircuitParams;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub circuit: CircuitParams,
    pub experiment: ExperimentConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlipErrors {
    /// [P(read 1 | 0), P(read 0 | 1)] for Q1.
    pub q1: [f64; 2],
    pub q2: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Coupler state for chevron and qpt: "0" or "1".
    pub coupler_state: String,
    pub noisy: bool,
    pub seed: u64,
    pub resonance: ResonanceMode,

    pub omegac_grid_ghz: Vec<f64>,
    pub t_grid_ns: Vec<f64>,

    pub delta_grid_ghz: Vec<f64>,
    pub coupling_curve_states: Vec<u8>,
    pub coupling_samples: usize,
    pub max_noisy_window_ns: f64,

    /// Interaction point; `null` picks the default for the coupler state.
    pub interaction_omegac_ghz: Option<f64>,
    pub idle_omegac_ghz: Option<f64>,
    pub idle_detuning_ghz: f64,
    pub transistor_window_ns: f64,
    pub transistor_samples: usize,

    /// `null` uses the half-period of the open-gate exchange.
    pub gate_duration_ns: Option<f64>,
    /// `null` gives exact (infinite-shot) tomography.
    pub shots: Option<u64>,
    pub readout_errors: Option<FlipErrors>,
    /// Row-major assignment matrix in (p00, p10, p01, p11) order; takes
    /// precedence over `readout_errors`.
    pub readout_matrix: Option<[[f64; 4]; 4]>,
    pub correct_readout: bool,
    pub bootstrap_resamples: usize,
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            coupler_state: "0".into(),
            noisy: false,
            seed: 0,
            resonance: ResonanceMode::Dressed,
            omegac_grid_ghz: linspace(5.7, 6.5, 33),
            t_grid_ns: linspace(0.0, 300.0, 121),
            delta_grid_ghz: linspace(-2.6, -1.1, 25),
            coupling_curve_states: vec![0, 1],
            coupling_samples: 256,
            max_noisy_window_ns: 1000.0,
            interaction_omegac_ghz: None,
            idle_omegac_ghz: None,
            idle_detuning_ghz: 0.05,
            transistor_window_ns: 150.0,
            transistor_samples: 601,
            gate_duration_ns: None,
            shots: None,
            readout_errors: None,
            readout_matrix: None,
            correct_readout: true,
            bootstrap_resamples: 200,
        }
    }
}

impl ExperimentConfig {
    /// The configured assignment matrix, if any.
    pub fn readout(&self) -> Result<Option<ReadoutMatrix>, CliError> {
        if let Some(m) = self.readout_matrix {
            return Ok(Some(ReadoutMatrix::new(m)?));
        }
        match &self.readout_errors {
            Some(e) => Ok(Some(ReadoutMatrix::from_flip_errors(
                (e.q1[0], e.q1[1]),
                (e.q2[0], e.q2[1]),
            )?)),
            None => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub chevron_csv: String,
    pub coupling_csv: String,
    pub transistor_open_csv: String,
    pub transistor_closed_csv: String,
    pub transistor_json: String,
    pub qpt_json: String,
    pub qpt_records_jsonl: String,
    pub readout_json: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            chevron_csv: "chevron.csv".into(),
            coupling_csv: "coupling_curve.csv".into(),
            transistor_open_csv: "transistor_open.csv".into(),
            transistor_closed_csv: "transistor_closed.csv".into(),
            transistor_json: "transistor_summary.json".into(),
            qpt_json: "qpt.json".into(),
            qpt_records_jsonl: "qpt_records.jsonl".into(),
            readout_json: "readout_cal.json".into(),
        }
    }
}

impl OutputConfig {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

/// Command-line overrides, applied after the file and `--set` pairs.
#[derive(Debug, Default)]
pub struct Overrides {
    pub sets: Vec<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub noisy: Option<bool>,
}

fn merge(base: &mut Value, layer: Value) {
    match (base, layer) {
        (Value::Object(b), Value::Object(l)) => {
            for (k, v) in l {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn parse_value(raw: &str, current: Option<&Value>) -> Value {
    // keep string-typed keys as strings even when the text looks numeric
    if let Some(Value::String(_)) = current {
        return Value::String(raw.to_string());
    }
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn apply_set(tree: &mut Value, pair: &str) -> Result<(), CliError> {
    let (key, raw) = pair
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{pair}`")))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed key `{key}`")));
    }
    let mut node = tree;
    for part in &parts[..parts.len() - 1] {
        node = node
            .as_object_mut()
            .and_then(|m| m.get_mut(*part))
            .ok_or_else(|| CliError::Config(format!("unknown key `{key}`")))?;
    }
    let map: &mut Map<String, Value> = node
        .as_object_mut()
        .ok_or_else(|| CliError::Config(format!("unknown key `{key}`")))?;
    let leaf = parts[parts.len() - 1];
    let current = map
        .get(leaf)
        .ok_or_else(|| CliError::Config(format!("unknown key `{key}`")))?;
    let value = parse_value(raw, Some(current));
    map.insert(leaf.to_string(), value);
    Ok(())
}

fn read_file(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("config {} is not valid JSON: {e}", path.display())))
}

pub fn load(file: Option<&Path>, ov: &Overrides) -> Result<RunConfig, CliError> {
    let mut tree = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    if let Some(path) = file {
        let layer = read_file(path)?;
        if !layer.is_object() {
            return Err(CliError::Config("config file must hold a JSON object".into()));
        }
        merge(&mut tree, layer);
    }
    // unknown keys from the file are reported by the typed pass below
    let mut cfg = typed(tree.clone())?;
    if !ov.sets.is_empty() {
        let mut tree = serde_json::to_value(&cfg).expect("config serializes");
        for pair in &ov.sets {
            apply_set(&mut tree, pair)?;
        }
        cfg = typed(tree)?;
    }
    if let Some(out) = &ov.out {
        cfg.output.dir = out.clone();
    }
    if let Some(seed) = ov.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(noisy) = ov.noisy {
        cfg.experiment.noisy = noisy;
    }
    cfg.circuit.validate()?;
    Ok(cfg)
}

fn typed(tree: Value) -> Result<RunConfig, CliError> {
    serde_path_to_error::deserialize(tree).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("invalid config at `{path}`: {}", e.inner()))
    })
}

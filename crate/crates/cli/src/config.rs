//! Flat JSON settings file: every key mirrors a CLI flag or a solver or
//! simulator knob, explicit flags always win, and unknown keys are rejected
//! so typos cannot silently fall back to defaults.

use std::fs;
use std::path::Path;

use decloud::Error;
use serde::Deserialize;

/// Optional defaults loadable via `--config <file.json>`.
///
/// All fields are optional; a missing key means "use the flag or the built-in
/// default". Keys mirror the solver configuration, the cloud simulator knobs,
/// and the sweep shape parameters.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    // Solver knobs.
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
    pub rho: Option<f64>,
    pub mu0_scale: Option<f64>,
    pub mu_max_factor: Option<f64>,
    pub max_outer_iters: Option<usize>,
    pub inner_kmax: Option<usize>,
    pub inner_ftol: Option<f64>,
    // Cloud simulator knobs.
    pub cell: Option<f64>,
    pub octaves: Option<u32>,
    pub persistence: Option<f64>,
    pub lacunarity: Option<f64>,
    pub coverage: Option<f64>,
    pub gamma: Option<f64>,
    pub equalize: Option<bool>,
    pub seed: Option<u64>,
    // Stack and sweep shape.
    pub width: Option<usize>,
    pub n: Option<usize>,
    pub methods: Option<String>,
    pub grid_count: Option<usize>,
    pub repeats: Option<usize>,
}

/// Loads a config file, or returns all-defaults when no path was given.
/// Read failures and malformed or unknown keys surface as errors.
pub fn load_config(path: Option<&Path>) -> Result<CliConfig, Error> {
    let Some(path) = path else {
        return Ok(CliConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.into(),
        reason: e.to_string(),
    })
}

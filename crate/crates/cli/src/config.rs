//! Run configuration: a TOML file with a top-level model path, a grid section
//! and one section per subcommand. Relative paths resolve against the config
//! file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nkg_core::io::sha256_hex;
use nkg_core::minimize::SolverConfig;
use nkg_core::nonlinearity::NonlinearityModel;
use nkg_core::radial::{RadialGrid, DEFAULT_CELLS, DEFAULT_DIMENSION, DEFAULT_R_MAX};
use nkg_core::thresholds::ThresholdOptions;

use crate::Failure;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: PathBuf,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub thresholds: ThresholdOptions,
    #[serde(default)]
    pub multiplicity: MultiplicityConfig,
    #[serde(default)]
    pub evolve: EvolveConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dimension: u32,
    pub r_max: f64,
    pub cells: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { dimension: DEFAULT_DIMENSION, r_max: DEFAULT_R_MAX, cells: DEFAULT_CELLS }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub s_scan_max: Option<f64>,
    pub samples: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { s_scan_max: None, samples: 4000 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub sigma: Option<f64>,
    pub sigmas: Vec<f64>,
    pub basin: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self { sigma: None, sigmas: Vec::new(), basin: true }
    }
}

impl SolveConfig {
    pub fn charges(&self) -> Vec<f64> {
        if self.sigmas.is_empty() {
            self.sigma.into_iter().collect()
        } else {
            self.sigmas.clone()
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiplicityConfig {
    pub sigmas: Vec<f64>,
}

/// Where evolve and stability get their wave: a solve result JSON, a profile CSV plus σ,
/// or a fresh ground-state solve at σ.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveSource {
    pub wave: Option<PathBuf>,
    pub profile: Option<PathBuf>,
    pub sigma: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub source: WaveSource,
    pub dt: Option<f64>,
    pub dt_over_h: Option<f64>,
    pub steps: usize,
    pub stride: usize,
    pub energy_tol: f64,
    pub charge_tol: f64,
    /// Steps between trajectory snapshots; 0 writes none.
    pub snapshot_stride: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            source: WaveSource::default(),
            dt: None,
            dt_over_h: None,
            steps: 10_000,
            stride: 100,
            energy_tol: 1e-6,
            charge_tol: 1e-6,
            snapshot_stride: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub source: WaveSource,
    pub delta: f64,
    pub t_final: Option<f64>,
    pub n_trials: usize,
    pub dt: Option<f64>,
    pub dt_over_h: Option<f64>,
    pub stride: usize,
    pub bumps: usize,
    /// Run trials around waves without a local-minimum certificate (saddles).
    pub allow_uncertified: bool,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        let d = nkg_core::dynamics::StabilityOptions::default();
        Self {
            source: WaveSource::default(),
            delta: d.delta,
            t_final: d.t_final,
            n_trials: d.n_trials,
            dt: None,
            dt_over_h: None,
            stride: d.stride,
            bumps: d.bumps,
            allow_uncertified: false,
        }
    }
}

pub struct Loaded {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub model: NonlinearityModel,
    pub grid: RadialGrid,
    pub config_hash: String,
    pub model_hash: String,
}

impl Loaded {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

/// Set a dotted key in a TOML table; the value is parsed as TOML, falling back to a string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), Failure> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Failure::config(format!("override {spec:?} is not KEY=VALUE")))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Failure::config(format!("override key {key:?} is malformed")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Failure::config(format!("override key {key:?}: {p} is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn load(path: &Path, overrides: &[String], seed: Option<u64>, workers: Option<usize>) -> Result<Loaded, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
    let mut table: toml::Table =
        text.parse().map_err(|e| Failure::config(format!("config {}: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let mut config: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| Failure::config(format!("config {}: {e}", path.display())))?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(w) = workers {
        config.workers = w;
    }
    config.solver.seed = config.seed;
    config.solver.validate().map_err(|e| Failure::config(e.to_string()))?;
    config.thresholds.validate().map_err(|e| Failure::config(e.to_string()))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let model_path = if config.model.is_absolute() { config.model.clone() } else { base_dir.join(&config.model) };
    let model = load_model(&model_path)?;
    let g = &config.grid;
    let grid = RadialGrid::new(g.dimension, g.r_max, g.cells).map_err(|e| Failure::config(e.to_string()))?;
    if model.dimension != g.dimension {
        return Err(Failure::config(format!(
            "model dimension {} differs from grid dimension {}",
            model.dimension, g.dimension
        )));
    }
    let mut hashed = config.clone();
    hashed.workers = 0;
    hashed.out = None;
    let config_hash = sha256_hex(serde_json::to_string(&hashed).expect("config serializes").as_bytes());
    let model_hash = nkg_core::io::model_hash(&model);
    Ok(Loaded { config, base_dir, model, grid, config_hash, model_hash })
}

pub fn load_model(path: &Path) -> Result<NonlinearityModel, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read model {}: {e}", path.display())))?;
    let model: NonlinearityModel =
        toml::from_str(&text).map_err(|e| Failure::config(format!("model {}: {e}", path.display())))?;
    model.validate().map_err(|e| Failure::config(format!("model {}: {e}", path.display())))?;
    Ok(model)
}

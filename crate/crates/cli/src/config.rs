//! Experiment configuration file.

use std::path::{Path, PathBuf};

use particle_path::io::read_columns_file;
use particle_path::{FluxModel, InitialData, IntegratorControls, Placement, SnapshotSchedule};
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    Convergence,
    Audit,
    FtlCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum FluxSpec {
    Burgers,
    Lwr { v_max: f64, u_max: f64 },
    Linear { speed: f64 },
    Polynomial { coeffs: Vec<f64> },
    /// Two-column CSV `(u, f)`.
    Tabulated { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    PaperExample,
    Riemann { u_l: f64, u_r: f64, x0: f64 },
    Box { height: f64, a: f64, b: f64 },
    PiecewiseConstant { breakpoints: Vec<f64>, values: Vec<f64> },
    /// Two-column CSV `(x, u0)`.
    Sampled { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Uniform,
    MassEquidistributed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementSpec {
    pub strategy: Strategy,
    /// Particle count for single runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Particle counts for convergence studies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    pub dt_max: f64,
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_coll: Option<f64>,
    /// Number of output intervals; `0` records every step.
    pub snapshots: usize,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        let c = IntegratorControls::default();
        IntegratorSpec {
            dt_max: c.dt_max,
            theta: c.theta,
            eps_coll: None,
            snapshots: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FtlSpec {
    pub pairs: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for FtlSpec {
    fn default() -> Self {
        FtlSpec {
            pairs: 10_000,
            seed: 1,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub out: PathBuf,
    pub t_final: f64,
    /// Spatial window for error measurement; defaults to the data's support hint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
    /// Points per exported reconstruction CSV; none when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    pub flux: FluxSpec,
    pub data: DataSpec,
    pub placement: PlacementSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub ftl: FtlSpec,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Sets `dotted.key = value` in a TOML table; `value` is read as a TOML
/// value when it parses as one and as a string otherwise.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("--set expects key=value, got '{assignment}'")))?;
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(format!("--set: malformed key '{key}'")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("--set: '{p}' in '{key}' is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let table: toml::Table = text.parse().map_err(|e| config_err(format!("{e}")))?;
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> CliResult<Self> {
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(config_err(format!("t_final: must be positive, got {}", self.t_final)));
        }
        if let Some(n) = self.placement.n {
            if n < 2 {
                return Err(config_err(format!("placement.n: need at least 2 particles, got {n}")));
            }
        }
        if let Some(list) = &self.placement.n_list {
            if list.len() < 3 || list.iter().any(|n| *n < 2) || list.windows(2).any(|w| w[1] <= w[0]) {
                return Err(config_err(
                    "placement.n_list: need at least three increasing counts, each at least 2",
                ));
            }
        }
        match self.mode {
            Mode::Simulate | Mode::Audit if self.placement.n.is_none() => {
                return Err(config_err("placement.n: required for simulate and audit modes"));
            }
            Mode::Convergence if self.placement.n_list.is_none() => {
                return Err(config_err("placement.n_list: required for convergence mode"));
            }
            _ => {}
        }
        if let Some((lo, hi)) = self.window {
            if !(lo < hi) {
                return Err(config_err(format!("window: need lo < hi, got [{lo}, {hi}]")));
            }
        }
        if self.samples.is_some_and(|s| s < 2) {
            return Err(config_err("samples: need at least 2 points"));
        }
        if self.ftl.pairs == 0 {
            return Err(config_err("ftl.pairs: must be positive"));
        }
        let i = &self.integrator;
        if !(i.dt_max.is_finite() && i.dt_max > 0.0) {
            return Err(config_err(format!("integrator.dt_max: must be positive, got {}", i.dt_max)));
        }
        if !(i.theta > 0.0 && i.theta < 1.0) {
            return Err(config_err(format!("integrator.theta: must lie in (0, 1), got {}", i.theta)));
        }
        if i.eps_coll.is_some_and(|e| !(e.is_finite() && e > 0.0)) {
            return Err(config_err("integrator.eps_coll: must be positive"));
        }
        Ok(())
    }

    /// Relative paths in the config resolve against `base`.
    pub fn flux_model(&self, base: &Path) -> CliResult<FluxModel> {
        let m = match &self.flux {
            FluxSpec::Burgers => Ok(FluxModel::burgers()),
            FluxSpec::Lwr { v_max, u_max } => FluxModel::lwr(*v_max, *u_max),
            FluxSpec::Linear { speed } => FluxModel::linear(*speed),
            FluxSpec::Polynomial { coeffs } => FluxModel::polynomial(coeffs.clone()),
            FluxSpec::Tabulated { path } => {
                let (u, f) = read_columns_file(&base.join(path)).map_err(|e| config_err(format!("flux.params.path: {e}")))?;
                FluxModel::tabulated(u, f)
            }
        };
        m.map_err(|e| config_err(format!("flux: {e}")))
    }

    pub fn initial_data(&self, base: &Path) -> CliResult<InitialData> {
        let d = match &self.data {
            DataSpec::PaperExample => Ok(InitialData::paper_example()),
            DataSpec::Riemann { u_l, u_r, x0 } => InitialData::riemann(*u_l, *u_r, *x0),
            DataSpec::Box { height, a, b } => InitialData::box_data(*height, *a, *b),
            DataSpec::PiecewiseConstant { breakpoints, values } => {
                InitialData::piecewise_constant(breakpoints.clone(), values.clone())
            }
            DataSpec::Sampled { path } => {
                let (x, u) = read_columns_file(&base.join(path)).map_err(|e| config_err(format!("data.params.path: {e}")))?;
                InitialData::sampled(x, u)
            }
        };
        d.map_err(|e| config_err(format!("data: {e}")))
    }

    pub fn placement(&self) -> Placement {
        match self.placement.strategy {
            Strategy::Uniform => Placement::Uniform,
            Strategy::MassEquidistributed => Placement::MassEquidistributed,
        }
    }

    pub fn controls(&self) -> IntegratorControls {
        let i = &self.integrator;
        let schedule = match i.snapshots {
            0 => SnapshotSchedule::EveryStep,
            n => SnapshotSchedule::Count(n),
        };
        IntegratorControls {
            dt_max: i.dt_max,
            theta: i.theta,
            eps_coll: i.eps_coll,
            schedule,
            ..IntegratorControls::default()
        }
    }
}

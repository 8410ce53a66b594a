//! Run configuration: a JSON schema with rejected unknown keys.
//!
//! A config names a bundled model (which brings a default specification and
//! grid), optionally overrides the spec and grid explicitly, and sets the
//! PDE, Monte Carlo, verification and simulation knobs. The resolved config
//! is echoed verbatim into every run manifest, so a manifest can be fed back
//! as a config and reproduces the run byte for byte.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::hjb::HjbOptions;
use crate::models::{
    bio_switch_scenario, controlled_1d_problem, driftless_exit_problem, two_phase_1d_problem,
    BioSwitchGeometry, BioSwitchParams, Equilibrium,
};
use crate::motion::MotionSpec;
use crate::sde::SdeModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum ModelConfig {
    BioSwitch {
        #[serde(default)]
        params: BioSwitchParams,
        #[serde(default)]
        geometry: BioSwitchGeometry,
    },
    DriftlessExit {
        #[serde(default = "default_horizon_1")]
        horizon: f64,
    },
    Controlled1d {
        #[serde(default = "default_u_max")]
        u_max: f64,
        #[serde(default = "default_horizon_4")]
        horizon: f64,
    },
    TwoPhase1d {
        #[serde(default = "default_horizon_6")]
        horizon: f64,
    },
}

fn default_horizon_1() -> f64 {
    1.0
}
fn default_horizon_4() -> f64 {
    4.0
}
fn default_horizon_6() -> f64 {
    6.0
}
fn default_u_max() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub nodes: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            lo: vec![],
            hi: vec![],
            nodes: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeConfig {
    /// PDE step; omit for the largest stable step.
    pub dt: Option<f64>,
    /// In-memory slice cadence (1 stores every step).
    pub store_every: usize,
    /// Lattice density for non-affine control maximization.
    pub control_lattice: usize,
    /// Probability levels whose superlevel sets are exported.
    pub superlevels: Vec<f64>,
    /// Cap on exported slices per phase (endpoints always included).
    pub export_max_slices: usize,
}

impl Default for PdeConfig {
    fn default() -> Self {
        PdeConfig {
            dt: None,
            store_every: 1,
            control_lattice: 9,
            superlevels: vec![0.8],
            export_max_slices: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_paths: 10_000,
            dt: 0.01,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Number of sampled nodes compared against the PDE field.
    pub n_nodes: usize,
    /// Allowed shortfall of closed-loop Monte Carlo below the PDE value.
    pub tolerance: f64,
    /// Only nodes with PDE values inside this band are sampled.
    pub value_band: (f64, f64),
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            n_nodes: 15,
            tolerance: 0.07,
            value_band: (0.05, 0.995),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum PolicyConfig {
    /// Midpoint of the control box.
    BoxMidpoint,
    Constant { u: Vec<f64> },
    /// Load the policy exported by a previous solve.
    FromArtifacts { dir: PathBuf },
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig::BoxMidpoint
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub n_paths: usize,
    pub policy: PolicyConfig,
    /// Start states; defaults to the grid box center.
    pub x0: Option<Vec<f64>>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            n_paths: 10,
            policy: PolicyConfig::default(),
            x0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// Explicit specification; omitted means the model's bundled one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<MotionSpec>,
    /// Explicit grid; omitted means the model's bundled one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub pde: PdeConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

/// Everything the commands need, resolved from a config.
pub struct Resolved {
    pub model: Arc<SdeModel>,
    pub spec: MotionSpec,
    pub grid: Arc<Grid>,
    pub hjb_options: HjbOptions,
    pub geometry_note: String,
    pub equilibria: Option<Vec<Equilibrium>>,
    pub dt_mc: f64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(spec) = &self.spec {
            spec.kind()?;
        }
        if let Some(g) = &self.grid {
            if g.lo.len() != g.hi.len() || g.lo.len() != g.nodes.len() {
                return Err(Error::Config(
                    "grid lo/hi/nodes must have matching lengths".into(),
                ));
            }
        }
        if self.pde.store_every == 0 {
            return Err(Error::Config("pde.store_every must be at least 1".into()));
        }
        if self.mc.n_paths == 0 {
            return Err(Error::Config("mc.n_paths must be at least 1".into()));
        }
        Ok(())
    }

    /// Builds the model, specification and grid this config describes.
    pub fn resolve(&self) -> Result<Resolved> {
        let (model, default_spec, default_grid, note, equilibria, dt_mc) = match &self.model {
            ModelConfig::BioSwitch { params, geometry } => {
                let scenario = bio_switch_scenario(params.clone(), geometry.clone());
                let note = format!(
                    "avoid/target/margin sets are reconstructions: balls of radii {}/{}/{} \
                     around numerically located equilibria plus strips below {}",
                    scenario.geometry.avoid_radius,
                    scenario.geometry.target_radius,
                    scenario.geometry.margin_radius,
                    scenario.geometry.strip_width
                );
                (
                    scenario.model.clone(),
                    scenario.spec.clone(),
                    scenario.grid.clone(),
                    note,
                    Some(scenario.equilibria.clone()),
                    0.05,
                )
            }
            ModelConfig::DriftlessExit { horizon } => {
                let cal = driftless_exit_problem(*horizon);
                (
                    cal.model,
                    cal.spec,
                    cal.grid,
                    "primitive interval geometry".into(),
                    None,
                    cal.dt_mc,
                )
            }
            ModelConfig::Controlled1d { u_max, horizon } => {
                let cal = controlled_1d_problem(*u_max, *horizon);
                (
                    cal.model,
                    cal.spec,
                    cal.grid,
                    "primitive interval geometry".into(),
                    None,
                    cal.dt_mc,
                )
            }
            ModelConfig::TwoPhase1d { horizon } => {
                let cal = two_phase_1d_problem(*horizon);
                (
                    cal.model,
                    cal.spec,
                    cal.grid,
                    "primitive interval geometry".into(),
                    None,
                    cal.dt_mc,
                )
            }
        };

        let spec = self.spec.clone().unwrap_or(default_spec);
        let grid = match &self.grid {
            Some(g) if !g.nodes.is_empty() => {
                Grid::new(g.lo.clone(), g.hi.clone(), g.nodes.clone())
            }
            _ => default_grid,
        };
        if grid.dim() != model.state_dim {
            return Err(Error::Config(format!(
                "grid dimension {} does not match model state dimension {}",
                grid.dim(),
                model.state_dim
            )));
        }

        Ok(Resolved {
            model,
            spec,
            grid: Arc::new(grid),
            hjb_options: HjbOptions {
                dt: self.pde.dt,
                store_every: self.pde.store_every,
                control_lattice: self.pde.control_lattice,
                cfl_safety: 0.9,
            },
            geometry_note: note,
            equilibria,
            dt_mc,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let text = r#"{ "model": {"driftless_exit": {}}, "grdi": {} }"#;
        match RunConfig::from_json(text) {
            Err(Error::Config(msg)) => assert!(msg.contains("grdi"), "message was: {msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_resolves_with_bundled_defaults() {
        let text = r#"{ "model": {"driftless_exit": {}} }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        let resolved = cfg.resolve().unwrap();
        assert_eq!(resolved.grid.nodes, vec![201]);
        assert_eq!(resolved.spec.phases.len(), 1);
    }

    #[test]
    fn config_round_trips_through_json() {
        let text = r#"{
            "model": {"bio_switch": {}},
            "mc": {"n_paths": 500, "dt": 0.05, "seed": 7}
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        let echoed = serde_json::to_string(&cfg).unwrap();
        let back = RunConfig::from_json(&echoed).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn mismatched_grid_dimension_is_an_error() {
        let text = r#"{
            "model": {"bio_switch": {}},
            "grid": {"lo": [0.0], "hi": [1.0], "nodes": [11]}
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        assert!(cfg.resolve().is_err());
    }
}

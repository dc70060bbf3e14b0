use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use hardyheat::grid::{gaussian_field, power_law_field, smoothed_power_field};
use hardyheat::io::read_field_csv;
use hardyheat::solver::SolveConfig;
use hardyheat::{make_grid, Parameters, RadialField, RadialGrid};
use serde::{Deserialize, Serialize};

use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamSpec {
    pub d: u32,
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub mu: f64,
}

impl Default for ParamSpec {
    fn default() -> Self {
        ParamSpec {
            d: 3,
            a: 0.0,
            b: 1.0,
            alpha: 2.0,
            mu: -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub r_min: f64,
    pub r_max: f64,
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        // ln 2 spans exactly 16 cells, so dyadic dilations are node shifts.
        GridSpec {
            r_min: 2f64.powi(-14),
            r_max: 2f64.powi(14),
            n: 449,
        }
    }
}

/// Initial data. `cutoff_power` is `c max(r, 1)^{-γ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Gaussian {
        c: f64,
        #[serde(default = "one")]
        s: f64,
    },
    Power {
        c: f64,
        gamma: f64,
        #[serde(default)]
        inner: Option<f64>,
        #[serde(default)]
        outer: Option<f64>,
    },
    CutoffPower {
        c: f64,
        gamma: f64,
    },
    SmoothedPower {
        c: f64,
        gamma: f64,
    },
    Csv {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec::Gaussian { c: 0.1, s: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParamSpec,
    pub grid: GridSpec,
    pub solve: SolveConfig,
    pub data: DataSpec,
    /// Restart horizons for `global` and `asym`.
    pub horizons: Vec<f64>,
    /// Amplitude of the homogeneous data in `selfsim` and `asym`.
    pub omega: f64,
    /// Decay of the `asym` data; the scaling exponent when absent.
    pub sigma: Option<f64>,
    pub asym_mode: String,
    pub q_list: Vec<f64>,
    pub window: (f64, f64),
    pub min_margin: f64,
    pub max_sandwich: f64,
    pub probes: Vec<f64>,
    pub residual_tol: f64,
    /// Norm tracked by `focusing`.
    pub q: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: ParamSpec::default(),
            grid: GridSpec::default(),
            solve: SolveConfig::default(),
            data: DataSpec::default(),
            horizons: (-2..=7).map(|k| 2f64.powi(k)).collect(),
            omega: 0.05,
            sigma: None,
            asym_mode: "nonlinear".into(),
            q_list: vec![12.0],
            window: (1.0, 100.0),
            min_margin: 0.005,
            max_sandwich: 1.1,
            probes: vec![0.25, 1.0, 4.0],
            residual_tol: 1e-3,
            q: 8.0,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        // Relative data paths are taken from the config's directory.
        if let DataSpec::Csv { path: p } = &mut cfg.data {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn parameters(&self) -> hardyheat::Result<Parameters> {
        let s = &self.params;
        Parameters::new(s.d, s.a, s.b, s.alpha, s.mu)
    }

    pub fn make_grid(&self) -> hardyheat::Result<Arc<RadialGrid>> {
        make_grid(self.params.d, self.grid.r_min, self.grid.r_max, self.grid.n)
    }

    /// Initial data; a CSV snapshot brings its own grid.
    pub fn initial_data(&self) -> anyhow::Result<RadialField> {
        if let DataSpec::Csv { path } = &self.data {
            let f = read_field_csv(path).with_context(|| format!("reading {}", path.display()))?;
            if f.grid().d != self.params.d {
                return Err(ConfigError(format!(
                    "snapshot dimension {} differs from d = {}",
                    f.grid().d,
                    self.params.d
                ))
                .into());
            }
            return Ok(f);
        }
        let g = self.make_grid()?;
        let f = match self.data {
            DataSpec::Gaussian { c, s } => gaussian_field(&g, c, s)?,
            DataSpec::Power { c, gamma, inner, outer } => power_law_field(&g, c, gamma, inner, outer)?,
            DataSpec::CutoffPower { c, gamma } => {
                RadialField::from_fn(&g, |r| c * r.max(1.0).powf(-gamma), Some(gamma))?
            }
            DataSpec::SmoothedPower { c, gamma } => smoothed_power_field(&g, c, gamma)?,
            DataSpec::Csv { .. } => unreachable!(),
        };
        Ok(f)
    }
}

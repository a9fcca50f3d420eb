//! Declarative experiment description, read from TOML.
//!
//! ```toml
//! horizons = [2.0, 4.0, 6.0]
//! replicas = 1000
//! master_seed = 7
//!
//! [model]
//! kind = "galton_watson"
//! offspring = [0.1, 0.3, 0.6]
//!
//! [characteristic]
//! kind = "fringe"
//! pattern = "()"
//! ```

use crate::characteristics::{FringeCharacteristic, FringePattern, Indicator, Nerman, SharedCharacteristic};
use crate::error::{Error, Result};
use crate::genealogy::StopRule;
use crate::models::BirthLaw;
use crate::spectral::{ScanConfig, ROOT_TOL};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    GaltonWatson {
        offspring: Vec<f64>,
    },
    /// Either a fixed `dislocation` or a uniform split into `parts` pieces.
    Fragmentation {
        #[serde(default)]
        dislocation: Option<Vec<f64>>,
        #[serde(default)]
        parts: Option<usize>,
    },
    PoissonIntensity {
        a: f64,
        b_exp: i32,
    },
}

impl ModelSpec {
    pub fn build(&self) -> Result<BirthLaw> {
        match self {
            ModelSpec::GaltonWatson { offspring } => BirthLaw::galton_watson(offspring.clone()),
            ModelSpec::Fragmentation { dislocation: Some(v), parts: None } => BirthLaw::fragmentation_fixed(v.clone()),
            ModelSpec::Fragmentation { dislocation: None, parts: Some(b) } => BirthLaw::fragmentation_uniform(*b),
            ModelSpec::Fragmentation { .. } => {
                Err(Error::Config("fragmentation needs exactly one of `dislocation` or `parts`".into()))
            }
            ModelSpec::PoissonIntensity { a, b_exp } => BirthLaw::poisson(*a, *b_exp),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CharacteristicSpec {
    #[default]
    Indicator,
    Nerman,
    /// `N_T` for a pattern written in bracket notation, `"()"` being a leaf.
    Fringe { pattern: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub root_tol: f64,
    /// Quadrature step of the variance integral (non-lattice laws).
    pub grid_step: Option<f64>,
    /// Truncation point of the variance integral.
    pub s_max: Option<f64>,
    pub nested_mc_m: usize,
    /// Extension `t_big - t` used for the proxy of the martingale limit;
    /// defaults to `ceil(4.6 / alpha)`.
    pub delta_w: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { root_tol: ROOT_TOL, grid_step: None, s_max: None, nested_mc_m: 200, delta_w: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSettings {
    pub strip_resolution: f64,
    pub im_max: f64,
}

impl Default for ScanSettings {
    fn default() -> Self {
        let d = ScanConfig::default();
        Self { strip_resolution: d.strip_resolution, im_max: d.im_max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaSettings {
    /// Monte Carlo samples per grid point.
    pub samples: usize,
    pub pad: Option<f64>,
}

impl Default for SigmaSettings {
    fn default() -> Self {
        Self { samples: 20_000, pad: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CltSettings {
    /// Minimum p-value for the normality tests to pass.
    pub p_threshold: f64,
}

impl Default for CltSettings {
    fn default() -> Self {
        Self { p_threshold: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FringeSettings {
    /// Explicit patterns; when empty every pattern up to `h_max` with at
    /// most `max_degree` children per node is used.
    pub patterns: Vec<String>,
    pub h_max: u32,
    pub max_degree: usize,
    /// Grid step of the tabulated subtree probabilities (Poisson laws).
    pub table_step: f64,
}

impl Default for FringeSettings {
    fn default() -> Self {
        Self { patterns: Vec::new(), h_max: 1, max_degree: 2, table_step: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MartingaleSettings {
    /// Generations traced for the Biggins martingale.
    pub generations: u32,
    /// Biggins parameters; defaults to `alpha` and `alpha - 0.1`.
    pub thetas: Option<Vec<f64>>,
    /// Flag threshold in standard errors.
    pub z_flag: f64,
}

impl Default for MartingaleSettings {
    fn default() -> Self {
        Self { generations: 6, thetas: None, z_flag: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub characteristic: CharacteristicSpec,
    pub horizons: Vec<f64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Stop rule of `simulate`; the last horizon when absent.
    #[serde(default)]
    pub stop: Option<StopRule>,
    #[serde(default)]
    pub scan: ScanSettings,
    #[serde(default)]
    pub sigma: SigmaSettings,
    #[serde(default)]
    pub clt: CltSettings,
    #[serde(default)]
    pub fringe: FringeSettings,
    #[serde(default)]
    pub martingales: MartingaleSettings,
}

fn default_replicas() -> usize {
    1000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// A config with defaults everywhere except the model and horizons.
    pub fn new(model: ModelSpec, horizons: Vec<f64>) -> Self {
        Self {
            model,
            characteristic: CharacteristicSpec::default(),
            horizons,
            replicas: default_replicas(),
            master_seed: 0,
            tolerances: Tolerances::default(),
            output_dir: default_output_dir(),
            stop: None,
            scan: ScanSettings::default(),
            sigma: SigmaSettings::default(),
            clt: CltSettings::default(),
            fringe: FringeSettings::default(),
            martingales: MartingaleSettings::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas < 1 {
            return Err(Error::Config("replicas must be at least 1".into()));
        }
        if self.horizons.is_empty() {
            return Err(Error::Config("horizons must not be empty".into()));
        }
        if self.horizons.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Config("horizons must be finite and non-negative".into()));
        }
        if self.horizons.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("horizons must be sorted in increasing order".into()));
        }
        let tol = &self.tolerances;
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x.is_finite() && x > 0.0) => Err(Error::Config(format!("tolerance {name} must be positive, got {x}"))),
            _ => Ok(()),
        };
        positive("root_tol", Some(tol.root_tol))?;
        positive("grid_step", tol.grid_step)?;
        positive("s_max", tol.s_max)?;
        positive("delta_w", tol.delta_w)?;
        if tol.nested_mc_m == 0 {
            return Err(Error::Config("tolerance nested_mc_m must be positive".into()));
        }
        positive("scan.strip_resolution", Some(self.scan.strip_resolution))?;
        positive("scan.im_max", Some(self.scan.im_max))?;
        positive("fringe.table_step", Some(self.fringe.table_step))?;
        positive("sigma.pad", self.sigma.pad)?;
        if self.sigma.samples < 2 {
            return Err(Error::Config("sigma.samples must be at least 2".into()));
        }
        if !(self.clt.p_threshold > 0.0 && self.clt.p_threshold < 1.0) {
            return Err(Error::Config("clt.p_threshold must lie in (0, 1)".into()));
        }
        if let CharacteristicSpec::Fringe { pattern } = &self.characteristic {
            FringePattern::parse(pattern)?;
        }
        for p in &self.fringe.patterns {
            FringePattern::parse(p)?;
        }
        Ok(())
    }

    pub fn scan_config(&self) -> ScanConfig {
        ScanConfig { strip_resolution: self.scan.strip_resolution, im_max: self.scan.im_max, ..ScanConfig::default() }
    }

    pub fn max_horizon(&self) -> f64 {
        *self.horizons.last().expect("validated horizons are non-empty")
    }
}

impl CharacteristicSpec {
    /// Builds the characteristic. Fringe tables cover local times up to
    /// `t_max`.
    pub fn build(&self, law: &BirthLaw, alpha: f64, t_max: f64, table_step: f64) -> Result<SharedCharacteristic> {
        Ok(match self {
            CharacteristicSpec::Indicator => Arc::new(Indicator),
            CharacteristicSpec::Nerman => Arc::new(Nerman::new(law, alpha)),
            CharacteristicSpec::Fringe { pattern } => {
                Arc::new(FringeCharacteristic::new(FringePattern::parse(pattern)?, law, t_max, table_step)?)
            }
        })
    }
}

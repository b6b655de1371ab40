//! Run configuration file: one TOML document with a section per stage.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constfit::FitConfig;
use crate::constraints::ConstraintConfig;
use crate::dataio::{Dataset, TargetTransform, Units};
use crate::policy::{DEFAULT_HIDDEN, INIT_SCALE};
use crate::symlib::{BinaryOp, Features, Library, UnaryOp, FATIGUE_VARIABLES};
use crate::trainer::{SearchConfig, SearchSetup};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(String),
    #[error("config field {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("config: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LibraryConfig {
    pub binary: Vec<BinaryOp>,
    pub unary: Vec<UnaryOp>,
    /// Input variables, a subset of the four fatigue features.
    pub variables: Vec<String>,
    pub constant: bool,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        LibraryConfig {
            binary: BinaryOp::ALL.to_vec(),
            unary: UnaryOp::ALL.to_vec(),
            variables: FATIGUE_VARIABLES.iter().map(|s| s.to_string()).collect(),
            constant: true,
        }
    }
}

impl LibraryConfig {
    pub fn build(&self) -> Result<Library, ConfigError> {
        for v in &self.variables {
            if !FATIGUE_VARIABLES.contains(&v.as_str()) {
                return Err(ConfigError::Invalid {
                    field: "library.variables".into(),
                    message: format!("unknown variable {v:?}; expected a subset of {}", FATIGUE_VARIABLES.join(", ")),
                });
            }
        }
        let vars: Vec<&str> = self.variables.iter().map(String::as_str).collect();
        Library::new(&self.binary, &self.unary, &vars, self.constant)
            .map_err(|e| ConfigError::Invalid { field: "library".into(), message: e.to_string() })
    }

    /// Keep the feature columns named by `variables`, in that order.
    pub fn project(&self, data: &Dataset) -> Dataset {
        if self.variables.iter().map(String::as_str).eq(FATIGUE_VARIABLES) {
            return data.clone();
        }
        let cols = self
            .variables
            .iter()
            .map(|v| {
                let i = FATIGUE_VARIABLES.iter().position(|f| f == v).expect("validated by build");
                data.features.column(i).to_vec()
            })
            .collect();
        Dataset { features: Features::from_columns(cols).expect("equal column lengths"), observed: data.observed.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub hidden: usize,
    pub init_scale: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { hidden: DEFAULT_HIDDEN, init_scale: INIT_SCALE }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnitsConfig {
    pub features: Units,
    pub target_transform: TargetTransform,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub library: LibraryConfig,
    pub constraints: ConstraintConfig,
    pub policy: PolicyConfig,
    pub trainer: SearchConfig,
    pub constfit: FitConfig,
    pub units: UnitsConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.library.build()?;
        self.constraints
            .validate()
            .map_err(|e| ConfigError::Invalid { field: "constraints".into(), message: e.to_string() })?;
        self.trainer.validate().map_err(|e| ConfigError::Invalid { field: "trainer".into(), message: e.to_string() })?;
        if self.policy.hidden == 0 {
            return Err(ConfigError::Invalid { field: "policy.hidden".into(), message: "must be positive".into() });
        }
        let f = &self.constfit;
        if f.restarts == 0 {
            return Err(ConfigError::Invalid { field: "constfit.restarts".into(), message: "must be positive".into() });
        }
        if !(f.start_low < f.start_high) {
            return Err(ConfigError::Invalid {
                field: "constfit.start_low".into(),
                message: format!("must be below start_high ({} >= {})", f.start_low, f.start_high),
            });
        }
        Ok(())
    }

    /// Constant fitting settings with the configured target transform.
    pub fn fit_config(&self) -> FitConfig {
        FitConfig { target: self.units.target_transform, ..self.constfit.clone() }
    }

    pub fn search_setup(&self) -> Result<SearchSetup, ConfigError> {
        Ok(SearchSetup {
            library: self.library.build()?,
            constraints: self.constraints.clone(),
            hidden: self.policy.hidden,
            init_scale: self.policy.init_scale,
            search: self.trainer.clone(),
            fit: self.fit_config(),
        })
    }
}

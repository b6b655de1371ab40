//! Reinforcement-learning symbolic regression for multiaxial fatigue life.
//!
//! A recurrent policy samples prefix expressions under grammar constraints,
//! constants are fitted by quasi-Newton least squares, and a risk-seeking
//! policy gradient steers sampling toward the best-fitting formulas.
//! Empirical critical-plane criteria are provided for comparison.

pub mod catalog;
pub mod config;
pub mod constfit;
pub mod constraints;
pub mod dataio;
pub mod fatigue_baselines;
pub mod policy;
pub mod symlib;
pub mod trainer;

pub use config::{ConfigError, RunConfig};
pub use constfit::{fit_constants, FitConfig, FitError, FitResult};
pub use constraints::{check_sequence, ConstraintConfig, Violation};
pub use dataio::{compute_metrics, load_dataset, DataError, Dataset, FatigueRecord, Metrics, Units};
pub use fatigue_baselines::{predict_dataset, BaselineError, Criterion, MaterialProperties};
pub use policy::{PolicyError, PolicyParams};
pub use symlib::{Expression, Library, SymError, TokenId};
pub use trainer::{refit_structure, run_search, HallOfFame, SearchConfig, SearchSetup, TrainError};

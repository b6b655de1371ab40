use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DataError, FatigueRecord};
use crate::fatigue_baselines::MaterialProperties;
use crate::symlib::Features;

/// Scale of the four dimensionless inputs.
///
/// `Mixed` keeps strains in percent and forms the stress ratios from MPa
/// over GPa, which is the scale the published fitted constants assume.
/// `Percent` expresses all four in percent; `Fraction` as plain ratios.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Mixed,
    Percent,
    Fraction,
}

impl Units {
    pub fn name(self) -> &'static str {
        match self {
            Units::Mixed => "mixed",
            Units::Percent => "percent",
            Units::Fraction => "fraction",
        }
    }

    /// (strain factor applied to percent strains, stress ratio factor
    /// applied to MPa / GPa)
    fn factors(self) -> (f64, f64) {
        match self {
            Units::Mixed => (1.0, 1.0),
            Units::Percent => (1.0, 0.1),
            Units::Fraction => (0.01, 0.001),
        }
    }
}

impl fmt::Display for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Units {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mixed" => Ok(Units::Mixed),
            "percent" => Ok(Units::Percent),
            "fraction" => Ok(Units::Fraction),
            _ => Err(DataError::Config(format!("unknown units {s:?}; expected mixed, percent or fraction"))),
        }
    }
}

/// How a model output maps to a predicted life.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetTransform {
    /// The model predicts `ln(N_f)`.
    #[default]
    LogLife,
    /// The model predicts `N_f` directly.
    Raw,
}

impl TargetTransform {
    #[inline]
    pub fn to_cycles(self, output: f64) -> f64 {
        match self {
            TargetTransform::LogLife => output.exp(),
            TargetTransform::Raw => output,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionlessSample {
    /// `[eps_a, gamma_a, sigma_over_E, tau_over_G]`
    pub features: [f64; 4],
    pub nf_cycles: f64,
    pub target_log: f64,
}

/// The four model inputs of one record.
pub fn dr_features(eps_a_pct: f64, gamma_a_pct: f64, sigma_mpa: f64, tau_mpa: f64, mat: &MaterialProperties, units: Units) -> [f64; 4] {
    let (ks, kr) = units.factors();
    [eps_a_pct * ks, gamma_a_pct * ks, kr * sigma_mpa / mat.e_gpa, kr * tau_mpa / mat.g_gpa]
}

pub fn preprocess_dr(records: &[FatigueRecord], mat: &MaterialProperties, units: Units) -> Vec<DimensionlessSample> {
    records
        .iter()
        .map(|r| {
            let nf = r.nf_cycles as f64;
            DimensionlessSample {
                features: dr_features(r.eps_a_pct, r.gamma_a_pct, r.sigma_a_mpa, r.tau_a_mpa, mat, units),
                nf_cycles: nf,
                target_log: nf.ln(),
            }
        })
        .collect()
}

/// Preprocessed records ready for fitting: a feature matrix and observed
/// lives in cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Features,
    pub observed: Vec<f64>,
}

impl Dataset {
    pub fn from_samples(samples: &[DimensionlessSample]) -> Self {
        let rows: Vec<[f64; 4]> = samples.iter().map(|s| s.features).collect();
        let features = Features::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), 4)
            .expect("rows have four columns");
        Dataset { features, observed: samples.iter().map(|s| s.nf_cycles).collect() }
    }

    pub fn from_records(records: &[FatigueRecord], mat: &MaterialProperties, units: Units) -> Self {
        Self::from_samples(&preprocess_dr(records, mat, units))
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Dataset { features: self.features.select(indices), observed: indices.iter().map(|&i| self.observed[i]).collect() }
    }
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{critical_plane, BaselineError, CriticalPlaneResult, LoadState, MaterialProperties, PlaneResolution};

/// Bisection bracket on `log10(2N_f)`.
pub const LOG_REVERSALS_MIN: f64 = 0.0;
pub const LOG_REVERSALS_MAX: f64 = 9.301029995663981; // log10(2e9)
pub const BISECTION_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    CmAxial,
    CmShear,
    Bm,
    Kbm,
    Fs,
    Whs,
    Mwhs,
}

impl Criterion {
    pub const ALL: [Criterion; 7] = [
        Criterion::CmAxial,
        Criterion::CmShear,
        Criterion::Bm,
        Criterion::Kbm,
        Criterion::Fs,
        Criterion::Whs,
        Criterion::Mwhs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::CmAxial => "cm_axial",
            Criterion::CmShear => "cm_shear",
            Criterion::Bm => "bm",
            Criterion::Kbm => "kbm",
            Criterion::Fs => "fs",
            Criterion::Whs => "whs",
            Criterion::Mwhs => "mwhs",
        }
    }

    pub fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|c| c.name()).collect()
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = BaselineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| BaselineError::UnknownCriterion { name: s.to_string(), valid: Self::names().join(", ") })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineOptions {
    /// Fixed `s0` used by BM.
    pub bm_s0: f64,
    /// WHS `k`; `None` calibrates it on the dataset being predicted.
    pub whs_k: Option<f64>,
    pub plane_step_deg: f64,
    pub tol: f64,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        BaselineOptions { bm_s0: 1.0, whs_k: None, plane_step_deg: 0.5, tol: 1e-10 }
    }
}

/// Everything a criterion needs from the load, computed once per record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drivers {
    pub load: LoadState,
    pub plane: CriticalPlaneResult,
}

impl Drivers {
    pub fn new(load: LoadState, mat: &MaterialProperties, res: PlaneResolution) -> Self {
        Drivers { load, plane: critical_plane(&load, mat, res) }
    }
}

/// A criterion with its free parameter resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionSpec {
    pub criterion: Criterion,
    pub bm_s0: f64,
    pub whs_k: f64,
}

impl CriterionSpec {
    pub fn new(criterion: Criterion, opts: &BaselineOptions) -> Self {
        CriterionSpec { criterion, bm_s0: opts.bm_s0, whs_k: opts.whs_k.unwrap_or(0.0) }
    }

    /// Life-dependent `s0` of the self-consistent BM variant at `x = 2N_f`.
    pub fn kbm_s0(mat: &MaterialProperties, x: f64) -> f64 {
        let (el, pl) = mat.axial_terms(x);
        let num = mat.shear_curve(x) - (1.0 + mat.nu_e) * el - (1.0 + mat.nu_p) * pl;
        let den = (1.0 - mat.nu_e) * el + (1.0 - mat.nu_p) * pl;
        num / den
    }

    /// Life-dependent `k` of the FS criterion at `x = 2N_f`.
    pub fn fs_k(mat: &MaterialProperties, x: f64) -> f64 {
        let (el, pl) = mat.axial_terms(x);
        let ratio = mat.shear_curve(x) / ((1.0 + mat.nu_e) * el + (1.0 + mat.nu_p) * pl);
        (ratio - 1.0) * 2.0 * mat.sigma_y / (mat.sigma_f_prime * x.powf(mat.b))
    }

    /// Damage parameter (left-hand side) at `x = 2N_f`. Only KBM and FS
    /// depend on `x`.
    pub fn damage(&self, d: &Drivers, mat: &MaterialProperties, x: f64) -> f64 {
        let p = &d.plane;
        let whs_term = || (p.max_normal_stress * p.normal_strain_range / mat.e_mpa()).sqrt();
        match self.criterion {
            Criterion::CmAxial => (d.load.eps_a.powi(2) + d.load.gamma_a.powi(2) / 3.0).sqrt(),
            Criterion::CmShear => p.max_shear_amp,
            Criterion::Bm => p.max_shear_amp + self.bm_s0 * p.normal_strain_range,
            Criterion::Kbm => p.max_shear_amp + Self::kbm_s0(mat, x) * p.normal_strain_range,
            Criterion::Fs => p.max_shear_amp * (1.0 + Self::fs_k(mat, x) * p.max_normal_stress / mat.sigma_y),
            Criterion::Whs => p.max_shear_amp + self.whs_k * whs_term(),
            Criterion::Mwhs => p.max_shear_amp + 0.5 * (1.0 + p.max_normal_stress / mat.sigma_y) * whs_term(),
        }
    }

    /// Life curve (right-hand side) at `x = 2N_f`.
    pub fn life_curve(&self, mat: &MaterialProperties, x: f64) -> f64 {
        let (el, pl) = mat.axial_terms(x);
        let bm = |s0: f64| (1.0 + mat.nu_e + s0 * (1.0 - mat.nu_e)) * el + (1.0 + mat.nu_p + s0 * (1.0 - mat.nu_p)) * pl;
        match self.criterion {
            Criterion::CmAxial => el + pl,
            Criterion::Bm => bm(self.bm_s0),
            Criterion::Kbm => bm(Self::kbm_s0(mat, x)),
            Criterion::CmShear | Criterion::Fs | Criterion::Whs | Criterion::Mwhs => mat.shear_curve(x),
        }
    }

    /// `damage - life_curve` at `x = 2N_f`.
    pub fn residual(&self, d: &Drivers, mat: &MaterialProperties, x: f64) -> f64 {
        self.damage(d, mat, x) - self.life_curve(mat, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifeSolution {
    pub nf_cycles: f64,
    pub reversals: f64,
    pub residual: f64,
}

/// Solve `damage(2N_f) = life_curve(2N_f)` by bisection on `log10(2N_f)`.
pub fn solve_life(spec: &CriterionSpec, d: &Drivers, mat: &MaterialProperties) -> Result<LifeSolution, BaselineError> {
    let x_lo = 10f64.powf(LOG_REVERSALS_MIN);
    let x_hi = 10f64.powf(LOG_REVERSALS_MAX);
    let lhs = spec.damage(d, mat, x_lo);
    if !(lhs.is_finite() && lhs > 0.0) {
        return Err(BaselineError::InvalidDamage(lhs));
    }
    let f_lo = spec.residual(d, mat, x_lo);
    let f_hi = spec.residual(d, mat, x_hi);
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo > 0.0 || f_hi < 0.0 {
        return Err(BaselineError::NoRootInBracket { damage: lhs, residual_low: f_lo, residual_high: f_hi });
    }
    let (mut lo, mut hi) = (LOG_REVERSALS_MIN, LOG_REVERSALS_MAX);
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if spec.residual(d, mat, 10f64.powf(mid)) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // both ends bracket the root to the last bit; report the smaller residual
    let (r_lo, r_hi) = (spec.residual(d, mat, 10f64.powf(lo)), spec.residual(d, mat, 10f64.powf(hi)));
    let log_x = if r_lo.abs() <= r_hi.abs() { lo } else { hi };
    let x = 10f64.powf(log_x);
    Ok(LifeSolution { nf_cycles: x / 2.0, reversals: x, residual: r_lo.abs().min(r_hi.abs()) })
}

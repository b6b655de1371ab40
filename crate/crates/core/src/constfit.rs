//! Constant fitting for a fixed expression structure.
//!
//! Multi-start L-BFGS on the RMSE between observed and predicted lives, with
//! central-difference gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{compute_metrics, Dataset, TargetTransform};
use crate::symlib::{CompiledExpr, EvalScratch, Expression, Features, Library, SymError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("no start point gave a finite objective")]
    NoFiniteStart,
    #[error("cannot fit constants to an empty dataset")]
    EmptyData,
    #[error(transparent)]
    Sym(#[from] SymError),
}

/// Space in which the RMSE objective is minimized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Cycles,
    LogCycles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Total starts: all-ones plus `restarts - 1` random draws.
    pub restarts: usize,
    pub start_low: f64,
    pub start_high: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Relative objective decrease below which a run stops.
    pub f_tol: f64,
    pub history: usize,
    pub objective: Objective,
    /// Set from the run's units section, not from the fit section itself.
    #[serde(skip)]
    pub target: TargetTransform,
    /// Fit each random start in log-life space before polishing in the
    /// objective space. Only applies to log-life targets.
    pub log_prefit: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            restarts: 8,
            start_low: -10.0,
            start_high: 10.0,
            max_iter: 200,
            grad_tol: 1e-8,
            f_tol: 1e-13,
            history: 10,
            objective: Objective::Cycles,
            target: TargetTransform::LogLife,
            log_prefit: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub constants: Vec<f64>,
    /// RMSE in cycles.
    pub rmse: f64,
    pub r2: f64,
    pub converged: bool,
    /// Starts whose initial objective was finite.
    pub n_restarts_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    ObjectiveTolerance,
    LineSearch,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub stop: StopReason,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        self.stop != StopReason::MaxIterations
    }
}

fn central_gradient(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], g: &mut [f64]) {
    let mut p = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        p[i] = x[i] + h;
        let up = f(&p);
        p[i] = x[i] - h;
        let down = f(&p);
        p[i] = x[i];
        g[i] = (up - down) / (2.0 * h);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Limited-memory BFGS with Armijo backtracking and numeric gradients.
/// `x0` must give a finite objective.
pub fn minimize_lbfgs(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], cfg: &FitConfig) -> Minimum {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut g = vec![0.0; n];
    central_gradient(&mut f, &x, &mut g);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho: Vec<f64> = Vec::new();
    let mut alpha = vec![0.0; cfg.history.max(1)];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    for iter in 0..cfg.max_iter {
        let gn = norm(&g);
        if !gn.is_finite() {
            return Minimum { x, f: fx, iterations: iter, stop: StopReason::LineSearch };
        }
        if gn < cfg.grad_tol {
            return Minimum { x, f: fx, iterations: iter, stop: StopReason::GradientTolerance };
        }
        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let m = s_hist.len();
        for i in (0..m).rev() {
            alpha[i] = rho[i] * dot(&s_hist[i], &d);
            for (dj, yj) in d.iter_mut().zip(&y_hist[i]) {
                *dj -= alpha[i] * yj;
            }
        }
        let gamma = if m > 0 { dot(&s_hist[m - 1], &y_hist[m - 1]) / dot(&y_hist[m - 1], &y_hist[m - 1]) } else { 1.0 };
        for dj in &mut d {
            *dj *= gamma;
        }
        for i in 0..m {
            let beta = rho[i] * dot(&y_hist[i], &d);
            for (dj, sj) in d.iter_mut().zip(&s_hist[i]) {
                *dj += (alpha[i] - beta) * sj;
            }
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            // not a descent direction: fall back to steepest descent
            s_hist.clear();
            y_hist.clear();
            rho.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -gn * gn;
        }
        let mut step = if s_hist.is_empty() { (1.0 / gn).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            for j in 0..n {
                x_new[j] = x[j] + step * d[j];
            }
            let f_new = f(&x_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                accepted = Some(f_new);
                break;
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else {
            return Minimum { x, f: fx, iterations: iter, stop: StopReason::LineSearch };
        };
        central_gradient(&mut f, &x_new, &mut g_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy.is_finite() {
            if s_hist.len() == cfg.history.max(1) {
                s_hist.remove(0);
                y_hist.remove(0);
                rho.remove(0);
            }
            rho.push(1.0 / sy);
            s_hist.push(s);
            y_hist.push(y);
        }
        let decrease = fx - f_new;
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;
        if decrease <= cfg.f_tol * fx.abs().max(f64::MIN_POSITIVE) {
            return Minimum { x, f: fx, iterations: iter + 1, stop: StopReason::ObjectiveTolerance };
        }
    }
    Minimum { x, f: fx, iterations: cfg.max_iter, stop: StopReason::MaxIterations }
}

/// Dataset rows in a canonical order so fits do not depend on input order.
fn canonical(data: &Dataset) -> Dataset {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    let rows: Vec<Vec<f64>> = (0..data.len()).map(|i| data.features.row(i)).collect();
    idx.sort_by(|&a, &b| {
        data.observed[a].total_cmp(&data.observed[b]).then_with(|| {
            rows[a].iter().zip(&rows[b]).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    data.subset(&idx)
}

/// RMSE objectives for one compiled structure on one dataset.
struct Problem<'a> {
    compiled: &'a CompiledExpr,
    features: &'a Features,
    observed: &'a [f64],
    log_observed: Vec<f64>,
    target: TargetTransform,
    scratch: EvalScratch,
    out: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(compiled: &'a CompiledExpr, data: &'a Dataset, target: TargetTransform) -> Self {
        Problem {
            compiled,
            features: &data.features,
            observed: &data.observed,
            log_observed: data.observed.iter().map(|v| v.ln()).collect(),
            target,
            scratch: EvalScratch::default(),
            out: vec![0.0; data.len()],
        }
    }

    fn outputs(&mut self, c: &[f64]) -> &[f64] {
        self.compiled.eval_into(c, self.features, &mut self.scratch, &mut self.out);
        &self.out
    }

    fn rmse(&mut self, c: &[f64], objective: Objective) -> f64 {
        let target = self.target;
        self.compiled.eval_into(c, self.features, &mut self.scratch, &mut self.out);
        let mut sq = 0.0;
        for (i, &o) in self.out.iter().enumerate() {
            let r = match objective {
                Objective::Cycles => target.to_cycles(o) - self.observed[i],
                Objective::LogCycles => match target {
                    TargetTransform::LogLife => o - self.log_observed[i],
                    TargetTransform::Raw => o.ln() - self.log_observed[i],
                },
            };
            sq += r * r;
        }
        let v = (sq / self.out.len() as f64).sqrt();
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }
}

/// Random start points for a structure with `n` constants.
pub fn start_points(n: usize, cfg: &FitConfig, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![vec![1.0; n]];
    for _ in 1..cfg.restarts.max(1) {
        starts.push((0..n).map(|_| rng.random_range(cfg.start_low..cfg.start_high)).collect());
    }
    starts
}

/// Fit the constants of `structure` to `data`.
pub fn fit_constants(
    structure: &Expression,
    lib: &Library,
    data: &Dataset,
    cfg: &FitConfig,
    seed: u64,
) -> Result<FitResult, FitError> {
    fit_from(structure, lib, data, cfg, seed, &[])
}

/// As [`fit_constants`], with extra start points polished directly in the
/// objective space before the seeded restarts.
pub fn fit_from(
    structure: &Expression,
    lib: &Library,
    data: &Dataset,
    cfg: &FitConfig,
    seed: u64,
    extra_starts: &[Vec<f64>],
) -> Result<FitResult, FitError> {
    let compiled = CompiledExpr::compile(structure, lib)?;
    fit_compiled(&compiled, data, cfg, seed, extra_starts)
}

pub fn fit_compiled(
    compiled: &CompiledExpr,
    data: &Dataset,
    cfg: &FitConfig,
    seed: u64,
    extra_starts: &[Vec<f64>],
) -> Result<FitResult, FitError> {
    if data.is_empty() {
        return Err(FitError::EmptyData);
    }
    let data = canonical(data);
    let mut p = Problem::new(compiled, &data, cfg.target);
    let n = compiled.n_constants();
    let obj = cfg.objective;
    let prefit = cfg.log_prefit && cfg.target == TargetTransform::LogLife && obj == Objective::Cycles;

    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    let mut used = 0usize;
    let consider = |x: Vec<f64>, f: f64, conv: bool, best: &mut Option<(Vec<f64>, f64, bool)>| {
        if f.is_finite() && best.as_ref().is_none_or(|b| f < b.1) {
            *best = Some((x, f, conv));
        }
    };

    if n == 0 {
        let f = p.rmse(&[], obj);
        consider(Vec::new(), f, true, &mut best);
        used = usize::from(f.is_finite());
    } else {
        for s in extra_starts.iter().filter(|s| s.len() == n) {
            let f0 = p.rmse(s, obj);
            if !f0.is_finite() {
                continue;
            }
            used += 1;
            let m = minimize_lbfgs(|c| p.rmse(c, obj), s, cfg);
            consider(m.x.clone(), m.f, m.converged(), &mut best);
        }
        for s in start_points(n, cfg, seed) {
            let f0 = p.rmse(&s, obj);
            let mut polish_from = Vec::new();
            if prefit {
                let g0 = p.rmse(&s, Objective::LogCycles);
                if g0.is_finite() {
                    let pre = minimize_lbfgs(|c| p.rmse(c, Objective::LogCycles), &s, cfg);
                    let fp = p.rmse(&pre.x, obj);
                    if fp.is_finite() {
                        polish_from.push(pre.x);
                    }
                    if !(fp <= f0) && f0.is_finite() {
                        polish_from.push(s.clone());
                    }
                } else if f0.is_finite() {
                    polish_from.push(s.clone());
                }
            } else if f0.is_finite() {
                polish_from.push(s.clone());
            }
            if polish_from.is_empty() {
                continue;
            }
            used += 1;
            for x0 in polish_from {
                let m = minimize_lbfgs(|c| p.rmse(c, obj), &x0, cfg);
                consider(m.x.clone(), m.f, m.converged(), &mut best);
            }
        }
    }

    let (constants, _, converged) = best.ok_or(FitError::NoFiniteStart)?;
    let target = cfg.target;
    let predicted: Vec<f64> = p.outputs(&constants).iter().map(|&o| target.to_cycles(o)).collect();
    let metrics = compute_metrics(&data.observed, &predicted).expect("lengths match");
    Ok(FitResult { constants, rmse: metrics.rmse_cycles, r2: metrics.r2, converged, n_restarts_used: used })
}

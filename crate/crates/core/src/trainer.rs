//! Risk-seeking policy-gradient search over expression structures.
//!
//! Each epoch samples a batch from the policy, fits the constants of every
//! distinct structure, scores candidates by negative RMSE, keeps the top
//! fraction as elites and pushes the policy toward them.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::Write;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constfit::{fit_from, FitConfig, FitError, FitResult};
use crate::constraints::ConstraintConfig;
use crate::dataio::Dataset;
use crate::policy::{
    accumulate_gradient, sample_sequence, update_first_token_dist, FirstTokenDist, PolicyError, PolicyParams,
    DEFAULT_HIDDEN, INIT_SCALE,
};
use crate::symlib::{render, Expression, Library, TokenId};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub n_size: usize,
    pub n_epoch: usize,
    /// Leading epochs that use the enlarged batch.
    pub n_group: usize,
    pub augment_factor: usize,
    /// Elite fraction in enlarged epochs.
    pub p1: f64,
    /// Elite fraction in the remaining epochs.
    pub p2: f64,
    pub learning_rate: f64,
    pub entropy_coeff: f64,
    pub grad_clip: f64,
    pub hall_of_fame: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            n_size: 1300,
            n_epoch: 32,
            n_group: 2,
            augment_factor: 13,
            p1: 0.025,
            p2: 0.04,
            learning_rate: 5e-4,
            entropy_coeff: 0.005,
            grad_clip: 5.0,
            hall_of_fame: 20,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.p1 > 0.0 && self.p1 < 1.0) || !(self.p2 > 0.0 && self.p2 < 1.0) {
            return bad(format!("p1 and p2 must lie in (0, 1), got {} and {}", self.p1, self.p2));
        }
        if self.n_group > self.n_epoch {
            return bad(format!("n_group {} exceeds n_epoch {}", self.n_group, self.n_epoch));
        }
        if self.n_size == 0 || self.augment_factor == 0 {
            return bad("n_size and augment_factor must be positive".into());
        }
        if !(self.learning_rate >= 0.0) || !(self.entropy_coeff >= 0.0) || !(self.grad_clip > 0.0) {
            return bad("learning_rate and entropy_coeff must be non-negative, grad_clip positive".into());
        }
        Ok(())
    }

    pub fn batch_size(&self, epoch: usize) -> usize {
        if epoch < self.n_group {
            self.n_size * self.augment_factor
        } else {
            self.n_size
        }
    }

    pub fn elite_fraction(&self, epoch: usize) -> f64 {
        if epoch < self.n_group {
            self.p1
        } else {
            self.p2
        }
    }

    pub fn elite_count(&self, epoch: usize) -> usize {
        elite_count(self.elite_fraction(epoch), self.batch_size(epoch))
    }
}

/// `ceil(p * n)`, robust to `p * n` landing a rounding error above an
/// integer.
pub fn elite_count(p: f64, n: usize) -> usize {
    ((p * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Everything a search needs besides the data.
#[derive(Debug, Clone)]
pub struct SearchSetup {
    pub library: Library,
    pub constraints: ConstraintConfig,
    pub hidden: usize,
    pub init_scale: f64,
    pub search: SearchConfig,
    pub fit: FitConfig,
}

impl SearchSetup {
    pub fn new(search: SearchConfig) -> Self {
        SearchSetup {
            library: Library::fatigue_default(),
            constraints: ConstraintConfig::default(),
            hidden: DEFAULT_HIDDEN,
            init_scale: INIT_SCALE,
            search,
            fit: FitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub expression: Expression,
    pub rendered: String,
    pub rmse: f64,
    pub r2: f64,
    /// `-rmse`, or negative infinity when the fit failed.
    pub reward: f64,
    pub log_prob: f64,
}

impl Candidate {
    /// Descending reward, then fewer tokens, then rendered string.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .reward
            .total_cmp(&self.reward)
            .then(self.expression.len().cmp(&other.expression.len()))
            .then_with(|| self.rendered.cmp(&other.rendered))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HallOfFame {
    capacity: usize,
    entries: Vec<Candidate>,
}

impl HallOfFame {
    pub fn new(capacity: usize) -> Self {
        HallOfFame { capacity, entries: Vec::new() }
    }

    pub fn entries(&self) -> &[Candidate] {
        &self.entries
    }

    pub fn best(&self) -> Option<&Candidate> {
        self.entries.first()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn offer(&mut self, c: &Candidate) {
        if !c.reward.is_finite() {
            return;
        }
        if let Some(i) = self.entries.iter().position(|e| e.rendered == c.rendered) {
            if c.rank_cmp(&self.entries[i]) == Ordering::Less {
                self.entries[i] = c.clone();
            } else {
                return;
            }
        } else {
            self.entries.push(c.clone());
        }
        self.entries.sort_by(Candidate::rank_cmp);
        self.entries.truncate(self.capacity);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub batch_size: usize,
    pub n_elite: usize,
    pub best_rmse: f64,
    pub mean_elite_rmse: f64,
    pub best_r2: f64,
    pub best_expression: String,
}

/// Adam state for the policy parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOptimizer {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl PolicyOptimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(n_params: usize) -> Self {
        PolicyOptimizer { m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    /// One ascent step along `grad`.
    fn ascend(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let b1t = 1.0 - Self::BETA1.powi(self.t as i32);
        let b2t = 1.0 - Self::BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            if lr != 0.0 {
                params[i] += lr * (self.m[i] / b1t) / ((self.v[i] / b2t).sqrt() + Self::EPS);
            }
        }
    }
}

/// Risk-seeking update from the elite set: ascend
/// `mean_i (R_i - baseline) log pi(seq_i) + entropy_coeff * mean_i H(seq_i)`.
pub fn policy_update(
    params: &mut PolicyParams,
    opt: &mut PolicyOptimizer,
    lib: &Library,
    constraints: &ConstraintConfig,
    elites: &[(&[TokenId], f64)],
    quantile_reward: f64,
    cfg: &SearchConfig,
) -> Result<(), TrainError> {
    if elites.is_empty() {
        return Ok(());
    }
    let n = elites.len() as f64;
    let mut grad = vec![0.0; params.len()];
    for (seq, reward) in elites {
        accumulate_gradient(params, lib, constraints, seq, (reward - quantile_reward) / n, cfg.entropy_coeff / n, &mut grad)?;
    }
    let gn = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if !gn.is_finite() {
        return Ok(());
    }
    if gn > cfg.grad_clip {
        let s = cfg.grad_clip / gn;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    opt.ascend(params.as_mut_slice(), &grad, cfg.learning_rate);
    Ok(())
}

/// Fit seed for a structure: a stable hash of its tokens mixed with the
/// search seed.
pub fn structure_seed(seed: u64, sequence: &[TokenId]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for t in sequence {
        h ^= t.0 as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn candidate_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng
}

#[derive(Debug, Clone)]
struct Scored {
    expression: Expression,
    rendered: String,
    rmse: f64,
    r2: f64,
}

type FitCache = HashMap<Vec<TokenId>, Scored>;

fn score(setup: &SearchSetup, data: &Dataset, sequence: &[TokenId]) -> Scored {
    let lib = &setup.library;
    let structure = Expression::structure(lib, sequence.to_vec()).expect("sampled sequences are complete");
    let seed = structure_seed(setup.search.seed, sequence);
    match fit_from(&structure, lib, data, &setup.fit, seed, &[]) {
        Ok(FitResult { constants, rmse, r2, .. }) if rmse.is_finite() => {
            let expression = structure.with_constants(constants);
            let rendered = render(&expression, lib).expect("valid expression");
            Scored { expression, rendered, rmse, r2 }
        }
        _ => {
            let rendered = render(&structure, lib).expect("valid expression");
            Scored { expression: structure, rendered, rmse: f64::INFINITY, r2: f64::NEG_INFINITY }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochResult {
    /// Elites ordered best first.
    pub elites: Vec<Candidate>,
    pub best: Option<Candidate>,
    pub stats: EpochStats,
}

fn run_epoch_cached(
    params: &PolicyParams,
    first: &FirstTokenDist,
    epoch: usize,
    setup: &SearchSetup,
    data: &Dataset,
    cache: &mut FitCache,
) -> Result<EpochResult, TrainError> {
    let cfg = &setup.search;
    let lib = &setup.library;
    let batch = cfg.batch_size(epoch);
    let samples = (0..batch)
        .into_par_iter()
        .map(|i| sample_sequence(params, lib, &setup.constraints, first, &mut candidate_rng(cfg.seed, epoch, i)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut todo: Vec<&[TokenId]> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for s in &samples {
        if !cache.contains_key(&s.sequence) && seen.insert(s.sequence.as_slice()) {
            todo.push(&s.sequence);
        }
    }
    let fitted: Vec<Scored> = todo.par_iter().map(|seq| score(setup, data, seq)).collect();
    for (seq, sc) in todo.into_iter().zip(fitted) {
        cache.insert(seq.to_vec(), sc);
    }

    let mut candidates: Vec<Candidate> = samples
        .iter()
        .map(|s| {
            let sc = &cache[&s.sequence];
            Candidate {
                expression: sc.expression.clone(),
                rendered: sc.rendered.clone(),
                rmse: sc.rmse,
                r2: sc.r2,
                reward: if sc.rmse.is_finite() { -sc.rmse } else { f64::NEG_INFINITY },
                log_prob: s.log_prob,
            }
        })
        .collect();
    candidates.sort_by(Candidate::rank_cmp);
    let n_elite = cfg.elite_count(epoch).min(candidates.iter().filter(|c| c.reward.is_finite()).count());
    let best = candidates.first().filter(|c| c.reward.is_finite()).cloned();
    candidates.truncate(n_elite);
    let elites = candidates;
    let mean_elite_rmse =
        if elites.is_empty() { f64::NAN } else { elites.iter().map(|c| c.rmse).sum::<f64>() / elites.len() as f64 };
    let stats = EpochStats {
        epoch,
        batch_size: batch,
        n_elite: elites.len(),
        best_rmse: best.as_ref().map_or(f64::INFINITY, |c| c.rmse),
        mean_elite_rmse,
        best_r2: best.as_ref().map_or(f64::NEG_INFINITY, |c| c.r2),
        best_expression: best.as_ref().map_or_else(String::new, |c| c.rendered.clone()),
    };
    Ok(EpochResult { elites, best, stats })
}

/// Sample, fit and rank one batch.
pub fn run_epoch(
    params: &PolicyParams,
    first: &FirstTokenDist,
    epoch: usize,
    setup: &SearchSetup,
    data: &Dataset,
) -> Result<EpochResult, TrainError> {
    run_epoch_cached(params, first, epoch, setup, data, &mut FitCache::new())
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub hall_of_fame: HallOfFame,
    pub stats: Vec<EpochStats>,
    pub params: PolicyParams,
    pub first_token: FirstTokenDist,
}

pub fn run_search(setup: &SearchSetup, data: &Dataset) -> Result<SearchOutcome, TrainError> {
    run_search_with(setup, data, |_| {})
}

/// [`run_search`] with a callback after every epoch.
pub fn run_search_with(
    setup: &SearchSetup,
    data: &Dataset,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<SearchOutcome, TrainError> {
    setup.search.validate()?;
    setup.constraints.validate().map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
    if data.is_empty() {
        return Err(FitError::EmptyData.into());
    }
    let cfg = &setup.search;
    let lib = &setup.library;
    let mut params = PolicyParams::init(lib.len(), setup.hidden, setup.init_scale, cfg.seed);
    let mut opt = PolicyOptimizer::new(params.len());
    let mut first = FirstTokenDist::uniform(lib);
    let mut hof = HallOfFame::new(cfg.hall_of_fame);
    let mut stats = Vec::with_capacity(cfg.n_epoch);
    let mut cache = FitCache::new();
    for epoch in 0..cfg.n_epoch {
        let r = run_epoch_cached(&params, &first, epoch, setup, data, &mut cache)?;
        for c in &r.elites {
            hof.offer(c);
        }
        if let Some(b) = &r.best {
            hof.offer(b);
        }
        if !r.elites.is_empty() {
            first = update_first_token_dist(r.elites.iter().map(|c| c.expression.sequence[0]), lib, &setup.constraints)?;
            let baseline = r.elites.last().map_or(0.0, |c| c.reward);
            let replay: Vec<(&[TokenId], f64)> =
                r.elites.iter().map(|c| (c.expression.sequence.as_slice(), c.reward)).collect();
            policy_update(&mut params, &mut opt, lib, &setup.constraints, &replay, baseline, cfg)?;
        }
        on_epoch(&r.stats);
        stats.push(r.stats);
    }
    Ok(SearchOutcome { hall_of_fame: hof, stats, params, first_token: first })
}

/// Keep a structure and fit its constants to new data. `start` is polished
/// directly in addition to the seeded restarts.
pub fn refit_structure(
    structure: &Expression,
    lib: &Library,
    data: &Dataset,
    fit: &FitConfig,
    seed: u64,
    start: Option<&[f64]>,
) -> Result<FitResult, FitError> {
    let extra: Vec<Vec<f64>> = start.map(|s| vec![s.to_vec()]).unwrap_or_default();
    fit_from(structure, lib, data, fit, seed, &extra)
}

pub fn write_stats_csv<W: Write>(w: W, stats: &[EpochStats]) -> Result<(), TrainError> {
    let mut wtr = csv::Writer::from_writer(w);
    if stats.is_empty() {
        wtr.write_record(["epoch", "batch_size", "n_elite", "best_rmse", "mean_elite_rmse", "best_r2", "best_expression"])
            .map_err(|e| TrainError::Io(e.to_string()))?;
    }
    for s in stats {
        wtr.serialize(s).map_err(|e| TrainError::Io(e.to_string()))?;
    }
    wtr.flush().map_err(|e| TrainError::Io(e.to_string()))
}

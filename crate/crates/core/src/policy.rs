//! Recurrent sampling policy over library tokens.
//!
//! A single gated recurrent cell reads, at each step, the previous token
//! (one-hot) and three constraint signals: the remaining function budget,
//! the top of the arity stack and the remaining constant budget. Logits are
//! combined with the prior mask before the softmax. The first token is not
//! produced by the network; it is drawn from [`FirstTokenDist`].

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::{check_sequence, fill_prior_mask, ConstraintConfig, ConstraintError, GenContext};
use crate::symlib::{Expression, Library, SymError, TokenId};

/// Extra input features beyond the previous-token one-hot.
pub const CONTEXT_FEATURES: usize = 5;
pub const DEFAULT_HIDDEN: usize = 64;
pub const INIT_SCALE: f64 = 0.08;
pub const MAX_RESAMPLE: usize = 100;
pub const FIRST_TOKEN_SMOOTHING: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Sym(#[from] SymError),
    #[error("no valid sequence after {0} consecutive rejections")]
    ResampleExhausted(usize),
    #[error("token at position {position} is forbidden by the prior mask")]
    MaskedToken { position: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Flat parameter vector of the recurrent cell and output projection.
///
/// Layout: `W_z, U_z, b_z, W_r, U_r, b_r, W_n, U_n, b_n, W_o, b_o`, with
/// `W_* : H x D`, `U_* : H x H`, `W_o : K x H`, all row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    n_tokens: usize,
    input_dim: usize,
    hidden: usize,
    theta: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Gate {
    w: usize,
    u: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    z: Gate,
    r: Gate,
    n: Gate,
    wo: usize,
    bo: usize,
    len: usize,
}

impl PolicyParams {
    pub fn zeros(n_tokens: usize, hidden: usize) -> Self {
        let input_dim = n_tokens + CONTEXT_FEATURES;
        let len = Self::layout_for(n_tokens, input_dim, hidden).len;
        PolicyParams { n_tokens, input_dim, hidden, theta: vec![0.0; len] }
    }

    /// Uniform `[-scale, scale]` initialization from a seed.
    pub fn init(n_tokens: usize, hidden: usize, scale: f64, seed: u64) -> Self {
        let mut p = Self::zeros(n_tokens, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut p.theta {
            *v = rng.random_range(-scale..=scale);
        }
        p
    }

    pub fn for_library(lib: &Library, hidden: usize, seed: u64) -> Self {
        Self::init(lib.len(), hidden, INIT_SCALE, seed)
    }

    fn layout_for(k: usize, d: usize, h: usize) -> Layout {
        let gate = |start: usize| Gate { w: start, u: start + h * d, b: start + h * d + h * h };
        let g = h * d + h * h + h;
        let wo = 3 * g;
        Layout { z: gate(0), r: gate(g), n: gate(2 * g), wo, bo: wo + k * h, len: wo + k * h + k }
    }

    fn layout(&self) -> Layout {
        Self::layout_for(self.n_tokens, self.input_dim, self.hidden)
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }

    /// Text checkpoint: one header line, then one value per line.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<(), PolicyError> {
        writeln!(
            w,
            "rsl-policy v1 tokens={} input={} hidden={} count={}",
            self.n_tokens,
            self.input_dim,
            self.hidden,
            self.theta.len()
        )?;
        for v in &self.theta {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(r: R) -> Result<Self, PolicyError> {
        let bad = |m: &str| PolicyError::Checkpoint(m.to_string());
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad("empty file"))??;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("rsl-policy") || fields.next() != Some("v1") {
            return Err(bad("unrecognized header"));
        }
        let mut get = |key: &str| -> Result<usize, PolicyError> {
            let f = fields.next().ok_or_else(|| bad("truncated header"))?;
            f.strip_prefix(key)
                .and_then(|v| v.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| PolicyError::Checkpoint(format!("expected {key}=<n>, got {f:?}")))
        };
        let (k, d, h, count) = (get("tokens")?, get("input")?, get("hidden")?, get("count")?);
        let mut p = Self::zeros(k, h);
        if p.input_dim != d || p.theta.len() != count {
            return Err(bad("shape header does not match the parameter layout"));
        }
        for (i, slot) in p.theta.iter_mut().enumerate() {
            let line = lines.next().ok_or_else(|| PolicyError::Checkpoint(format!("missing value {i}")))??;
            *slot = line
                .trim()
                .parse()
                .map_err(|_| PolicyError::Checkpoint(format!("bad value on line {}", i + 2)))?;
        }
        if !p.is_finite() {
            return Err(bad("non-finite parameter"));
        }
        Ok(p)
    }
}

/// Write the network input for the step that chooses the token after
/// `prev`, given the context after `prev` was placed.
pub fn encode_input(ctx: &GenContext, cfg: &ConstraintConfig, n_tokens: usize, out: &mut [f64]) {
    out.fill(0.0);
    if let Some(prev) = ctx.last_token() {
        out[prev.index()] = 1.0;
    }
    let st = ctx.arity();
    out[n_tokens] = (cfg.l.saturating_sub(st.function_count())) as f64 / cfg.l.max(1) as f64;
    if let Some(&top) = st.stack().last() {
        out[n_tokens + top.min(3) as usize] = 1.0;
    }
    if cfg.n_const > 0 {
        out[n_tokens + 4] = cfg.n_const.saturating_sub(st.constant_count()) as f64 / cfg.n_const as f64;
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out = W x + U h + b` for one gate.
#[inline]
fn affine(theta: &[f64], g: Gate, d: usize, hdim: usize, x: &[f64], h: &[f64], out: &mut [f64]) {
    for i in 0..hdim {
        let w = &theta[g.w + i * d..g.w + (i + 1) * d];
        let u = &theta[g.u + i * hdim..g.u + (i + 1) * hdim];
        let mut s = theta[g.b + i];
        for j in 0..d {
            s += w[j] * x[j];
        }
        for j in 0..hdim {
            s += u[j] * h[j];
        }
        out[i] = s;
    }
}

/// Intermediate values of one cell step, kept for backpropagation.
#[derive(Debug, Clone, Default)]
struct CellCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    rh: Vec<f64>,
    n: Vec<f64>,
    h: Vec<f64>,
}

fn cell_forward(p: &PolicyParams, x: &[f64], h_prev: &[f64], c: &mut CellCache) {
    let (d, hd, lay, th) = (p.input_dim, p.hidden, p.layout(), &p.theta);
    c.x.clear();
    c.x.extend_from_slice(x);
    c.h_prev.clear();
    c.h_prev.extend_from_slice(h_prev);
    for v in [&mut c.z, &mut c.r, &mut c.rh, &mut c.n, &mut c.h] {
        v.resize(hd, 0.0);
    }
    affine(th, lay.z, d, hd, x, h_prev, &mut c.z);
    affine(th, lay.r, d, hd, x, h_prev, &mut c.r);
    for i in 0..hd {
        c.z[i] = sigmoid(c.z[i]);
        c.r[i] = sigmoid(c.r[i]);
        c.rh[i] = c.r[i] * h_prev[i];
    }
    affine(th, lay.n, d, hd, x, &c.rh, &mut c.n);
    for i in 0..hd {
        c.n[i] = c.n[i].tanh();
        c.h[i] = (1.0 - c.z[i]) * c.n[i] + c.z[i] * h_prev[i];
    }
}

fn output_logits(p: &PolicyParams, h: &[f64], logits: &mut [f64]) {
    let lay = p.layout();
    let hd = p.hidden;
    for (k, out) in logits.iter_mut().enumerate() {
        let w = &p.theta[lay.wo + k * hd..lay.wo + (k + 1) * hd];
        let mut s = p.theta[lay.bo + k];
        for j in 0..hd {
            s += w[j] * h[j];
        }
        *out = s;
    }
}

/// Recurrent state between sampling steps.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState {
    pub hidden: Vec<f64>,
    pub ctx: GenContext,
}

impl StepState {
    pub fn initial(hidden: usize) -> Self {
        StepState { hidden: vec![0.0; hidden], ctx: GenContext::new() }
    }

    pub fn prev_token(&self) -> Option<TokenId> {
        self.ctx.last_token()
    }
}

/// One forward step: logits for the next token and the next hidden vector.
pub fn step(params: &PolicyParams, cfg: &ConstraintConfig, state: &StepState) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; params.input_dim];
    encode_input(&state.ctx, cfg, params.n_tokens, &mut x);
    let mut cache = CellCache::default();
    cell_forward(params, &x, &state.hidden, &mut cache);
    let mut logits = vec![0.0; params.n_tokens];
    output_logits(params, &cache.h, &mut logits);
    (logits, cache.h)
}

/// Log-softmax of `logits + mask`. Masked entries get `-inf`.
pub fn masked_log_softmax(logits: &[f64], mask: &[f64], out: &mut [f64]) {
    let mut m = f64::NEG_INFINITY;
    for (l, k) in logits.iter().zip(mask) {
        if *k == 0.0 {
            m = m.max(*l);
        }
    }
    let mut s = 0.0;
    for ((o, l), k) in out.iter_mut().zip(logits).zip(mask) {
        if *k == 0.0 {
            *o = l - m;
            s += o.exp();
        } else {
            *o = f64::NEG_INFINITY;
        }
    }
    let ls = s.ln();
    for (o, k) in out.iter_mut().zip(mask) {
        if *k == 0.0 {
            *o -= ls;
        }
    }
}

/// Distribution over the first token, estimated from elite sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstTokenDist {
    pub probs: Vec<f64>,
}

impl FirstTokenDist {
    pub fn uniform(lib: &Library) -> Self {
        FirstTokenDist { probs: vec![1.0 / lib.len() as f64; lib.len()] }
    }

    /// Probabilities restricted to tokens allowed by `mask`, renormalized.
    /// Falls back to uniform over allowed tokens if none carry mass.
    pub fn restricted(&self, mask: &[f64]) -> Vec<f64> {
        let mut p: Vec<f64> = self.probs.iter().zip(mask).map(|(p, m)| if *m == 0.0 { *p } else { 0.0 }).collect();
        let s: f64 = p.iter().sum();
        if s > 0.0 {
            p.iter_mut().for_each(|v| *v /= s);
        } else {
            let n = mask.iter().filter(|m| **m == 0.0).count() as f64;
            for (v, m) in p.iter_mut().zip(mask) {
                *v = if *m == 0.0 { 1.0 / n } else { 0.0 };
            }
        }
        p
    }
}

/// Smoothed empirical first-token frequencies over the tokens legal as a
/// first token under `cfg`. An empty input gives the uniform distribution.
pub fn update_first_token_dist<I>(first_tokens: I, lib: &Library, cfg: &ConstraintConfig) -> Result<FirstTokenDist, PolicyError>
where
    I: IntoIterator<Item = TokenId>,
{
    let mut counts = vec![0.0; lib.len()];
    let mut n = 0usize;
    for t in first_tokens {
        counts[t.index()] += 1.0;
        n += 1;
    }
    if n == 0 {
        return Ok(FirstTokenDist::uniform(lib));
    }
    let mut mask = vec![0.0; lib.len()];
    fill_prior_mask(&GenContext::new(), cfg, lib, &mut mask)?;
    let legal = mask.iter().filter(|m| **m == 0.0).count() as f64;
    let denom = n as f64 + FIRST_TOKEN_SMOOTHING * legal;
    let probs = counts
        .iter()
        .zip(&mask)
        .map(|(c, m)| if *m == 0.0 { (c + FIRST_TOKEN_SMOOTHING) / denom } else { 0.0 })
        .collect();
    Ok(FirstTokenDist { probs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSequence {
    pub sequence: Vec<TokenId>,
    /// Sum of chosen-token log probabilities, first token included.
    pub log_prob: f64,
    pub step_log_probs: Vec<f64>,
}

impl SampledSequence {
    pub fn structure(&self, lib: &Library) -> Result<Expression, SymError> {
        Expression::structure(lib, self.sequence.clone())
    }
}

fn draw(log_probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, lp) in log_probs.iter().enumerate() {
        if lp.is_finite() {
            acc += lp.exp();
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Sample one complete sequence under the prior mask. Sequences that the
/// post-hoc checker rejects are redrawn, at most [`MAX_RESAMPLE`] times.
pub fn sample_sequence<R: Rng>(
    params: &PolicyParams,
    lib: &Library,
    cfg: &ConstraintConfig,
    first: &FirstTokenDist,
    rng: &mut R,
) -> Result<SampledSequence, PolicyError> {
    for _ in 0..MAX_RESAMPLE {
        let s = sample_masked(params, lib, cfg, first, rng)?;
        let e = Expression::structure(lib, s.sequence.clone())?;
        if check_sequence(&e, lib, cfg).is_empty() {
            return Ok(s);
        }
    }
    Err(PolicyError::ResampleExhausted(MAX_RESAMPLE))
}

/// One draw under the prior mask alone, without the post-hoc check.
pub fn sample_masked<R: Rng>(
    params: &PolicyParams,
    lib: &Library,
    cfg: &ConstraintConfig,
    first: &FirstTokenDist,
    rng: &mut R,
) -> Result<SampledSequence, PolicyError> {
    let k = lib.len();
    let mut ctx = GenContext::new();
    let mut mask = vec![0.0; k];
    fill_prior_mask(&ctx, cfg, lib, &mut mask)?;
    let p0 = first.restricted(&mask);
    let lp0: Vec<f64> = p0.iter().map(|p| p.ln()).collect();
    let t0 = draw(&lp0, rng);
    let mut seq = vec![TokenId(t0 as u8)];
    let mut steps = vec![lp0[t0]];
    ctx.push(lib, seq[0])?;

    let mut x = vec![0.0; params.input_dim];
    let mut h = vec![0.0; params.hidden];
    let mut cache = CellCache::default();
    let mut logits = vec![0.0; k];
    let mut lp = vec![0.0; k];
    while !ctx.is_complete() {
        encode_input(&ctx, cfg, k, &mut x);
        cell_forward(params, &x, &h, &mut cache);
        std::mem::swap(&mut h, &mut cache.h);
        output_logits(params, &h, &mut logits);
        fill_prior_mask(&ctx, cfg, lib, &mut mask)?;
        masked_log_softmax(&logits, &mask, &mut lp);
        let t = draw(&lp, rng);
        let id = TokenId(t as u8);
        steps.push(lp[t]);
        seq.push(id);
        ctx.push(lib, id)?;
    }
    Ok(SampledSequence { log_prob: steps.iter().sum(), sequence: seq, step_log_probs: steps })
}

/// Result of [`accumulate_gradient`] for one sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceTerms {
    /// Policy log-likelihood of tokens 2..T (the first token is not
    /// parameterized).
    pub log_prob: f64,
    /// Sum of per-step entropies of the masked policy distribution.
    pub entropy: f64,
}

/// Add `w_logp * grad(log_prob) + w_entropy * grad(entropy)` of `sequence`
/// into `grad` by backpropagation through every recurrent step.
pub fn accumulate_gradient(
    params: &PolicyParams,
    lib: &Library,
    cfg: &ConstraintConfig,
    sequence: &[TokenId],
    w_logp: f64,
    w_entropy: f64,
    grad: &mut [f64],
) -> Result<SequenceTerms, PolicyError> {
    assert_eq!(grad.len(), params.len());
    let (k, d, hd) = (params.n_tokens, params.input_dim, params.hidden);
    let lay = params.layout();
    let th = &params.theta;

    // forward, caching every step
    let mut ctx = GenContext::new();
    let Some((&first, rest)) = sequence.split_first() else {
        return Err(SymError::IncompleteExpression.into());
    };
    ctx.push(lib, first)?;
    let mut caches: Vec<CellCache> = Vec::with_capacity(rest.len());
    let mut dlogits_all: Vec<Vec<f64>> = Vec::with_capacity(rest.len());
    let mut x = vec![0.0; d];
    let mut h = vec![0.0; hd];
    let mut logits = vec![0.0; k];
    let mut mask = vec![0.0; k];
    let mut lp = vec![0.0; k];
    let mut terms = SequenceTerms { log_prob: 0.0, entropy: 0.0 };
    for (pos, &tok) in rest.iter().enumerate() {
        encode_input(&ctx, cfg, k, &mut x);
        let mut c = CellCache::default();
        cell_forward(params, &x, &h, &mut c);
        h.copy_from_slice(&c.h);
        output_logits(params, &h, &mut logits);
        fill_prior_mask(&ctx, cfg, lib, &mut mask)?;
        masked_log_softmax(&logits, &mask, &mut lp);
        let chosen = lp[tok.index()];
        if !chosen.is_finite() {
            return Err(PolicyError::MaskedToken { position: pos + 1 });
        }
        terms.log_prob += chosen;
        let mut ent = 0.0;
        for &l in &lp {
            if l.is_finite() {
                ent -= l.exp() * l;
            }
        }
        terms.entropy += ent;
        let mut dl = vec![0.0; k];
        for j in 0..k {
            if lp[j].is_finite() {
                let p = lp[j].exp();
                dl[j] = -w_logp * p - w_entropy * p * (lp[j] + ent);
            }
        }
        dl[tok.index()] += w_logp;
        dlogits_all.push(dl);
        caches.push(c);
        ctx.push(lib, tok)?;
    }

    // backward
    let mut dh = vec![0.0; hd];
    let mut dh_prev = vec![0.0; hd];
    let (mut da_z, mut da_r, mut da_n, mut d_rh) = (vec![0.0; hd], vec![0.0; hd], vec![0.0; hd], vec![0.0; hd]);
    for (c, dl) in caches.iter().zip(&dlogits_all).rev() {
        for (kk, &g) in dl.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[lay.bo + kk] += g;
            let row = lay.wo + kk * hd;
            for j in 0..hd {
                grad[row + j] += g * c.h[j];
                dh[j] += g * th[row + j];
            }
        }
        for i in 0..hd {
            let dn = dh[i] * (1.0 - c.z[i]);
            let dz = dh[i] * (c.h_prev[i] - c.n[i]);
            dh_prev[i] = dh[i] * c.z[i];
            da_n[i] = dn * (1.0 - c.n[i] * c.n[i]);
            da_z[i] = dz * c.z[i] * (1.0 - c.z[i]);
        }
        d_rh.fill(0.0);
        for i in 0..hd {
            let a = da_n[i];
            if a == 0.0 {
                continue;
            }
            grad[lay.n.b + i] += a;
            let (w, u) = (lay.n.w + i * d, lay.n.u + i * hd);
            for j in 0..d {
                grad[w + j] += a * c.x[j];
            }
            for j in 0..hd {
                grad[u + j] += a * c.rh[j];
                d_rh[j] += a * th[u + j];
            }
        }
        for i in 0..hd {
            dh_prev[i] += d_rh[i] * c.r[i];
            let dr = d_rh[i] * c.h_prev[i];
            da_r[i] = dr * c.r[i] * (1.0 - c.r[i]);
        }
        for (g, da) in [(lay.z, &da_z), (lay.r, &da_r)] {
            for i in 0..hd {
                let a = da[i];
                if a == 0.0 {
                    continue;
                }
                grad[g.b + i] += a;
                let (w, u) = (g.w + i * d, g.u + i * hd);
                for j in 0..d {
                    grad[w + j] += a * c.x[j];
                }
                for j in 0..hd {
                    grad[u + j] += a * c.h_prev[j];
                    dh_prev[j] += a * th[u + j];
                }
            }
        }
        std::mem::swap(&mut dh, &mut dh_prev);
    }
    Ok(terms)
}

/// Policy log-likelihood of `sequence` (first token excluded) and its exact
/// gradient with respect to every parameter.
pub fn sequence_logprob_and_grad(
    params: &PolicyParams,
    lib: &Library,
    cfg: &ConstraintConfig,
    sequence: &[TokenId],
) -> Result<(f64, Vec<f64>), PolicyError> {
    let mut grad = vec![0.0; params.len()];
    let t = accumulate_gradient(params, lib, cfg, sequence, 1.0, 0.0, &mut grad)?;
    Ok((t.log_prob, grad))
}

/// Forward-only policy terms of a sequence.
pub fn sequence_terms(
    params: &PolicyParams,
    lib: &Library,
    cfg: &ConstraintConfig,
    sequence: &[TokenId],
) -> Result<SequenceTerms, PolicyError> {
    let mut grad = vec![0.0; params.len()];
    accumulate_gradient(params, lib, cfg, sequence, 0.0, 0.0, &mut grad)
}

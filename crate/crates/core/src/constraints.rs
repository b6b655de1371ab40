//! Prior masks applied while sampling a prefix sequence, and a post-hoc
//! checker that re-derives every rule from the finished tree.
//!
//! Rules, in the order [`prior_mask`] applies them:
//! - function budget: no function once `l` functions were placed;
//! - FELC: a function is forced while every open slot count is 1 and the
//!   budget is not spent;
//! - constant cap: at most `n_const` placeholders;
//! - INSS: no unary anywhere below another unary;
//! - COSM: a placeholder may not fill the last slot of a function whose
//!   other children are all placeholders;
//! - closure: the sequence must be closable within `max_tokens`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::symlib::{decode, ArityState, Expression, Library, SymError, TokenId, TokenKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConstraintError {
    #[error("invalid constraint config: {0}")]
    InvalidConfig(String),
    #[error("every token is masked after {emitted} tokens")]
    Unsatisfiable { emitted: usize },
    #[error(transparent)]
    Sym(#[from] SymError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintConfig {
    /// Function-node budget.
    pub l: usize,
    pub n_const: usize,
    pub max_tokens: usize,
    pub inss_enabled: bool,
    pub cosm_enabled: bool,
    pub felc_enabled: bool,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self::with_budget(10, 5)
    }
}

impl ConstraintConfig {
    /// All rules enabled and `max_tokens = 4l + 1`.
    pub fn with_budget(l: usize, n_const: usize) -> Self {
        ConstraintConfig {
            l,
            n_const,
            max_tokens: 4 * l + 1,
            inss_enabled: true,
            cosm_enabled: true,
            felc_enabled: true,
        }
    }

    pub fn validate(&self) -> Result<(), ConstraintError> {
        if self.l < 1 {
            return Err(ConstraintError::InvalidConfig("l must be at least 1".into()));
        }
        if self.max_tokens < 2 * self.l + 1 {
            return Err(ConstraintError::InvalidConfig(format!(
                "max_tokens must be at least 2*l+1 = {}, got {}",
                2 * self.l + 1,
                self.max_tokens
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Frame {
    remaining: u8,
    is_unary: bool,
    /// Every child placed so far is a constant leaf.
    all_const: bool,
}

/// Generation state for a partial prefix sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GenContext {
    arity: ArityState,
    frames: Vec<Frame>,
    open_unary: usize,
    last: Option<TokenId>,
}

impl GenContext {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replay a prefix from scratch.
    pub fn from_prefix(lib: &Library, prefix: &[TokenId]) -> Result<Self, SymError> {
        let mut ctx = Self::new();
        for &id in prefix {
            ctx.push(lib, id)?;
        }
        Ok(ctx)
    }

    pub fn push(&mut self, lib: &Library, id: TokenId) -> Result<(), SymError> {
        let tok = lib.get(id).ok_or(SymError::InvalidTokenId(id.0))?;
        self.arity.push_token(lib, id)?;
        self.last = Some(id);
        if tok.is_function() {
            self.frames.push(Frame { remaining: tok.arity(), is_unary: tok.is_unary(), all_const: true });
            if tok.is_unary() {
                self.open_unary += 1;
            }
            return Ok(());
        }
        let mut child_const = tok.is_constant();
        while let Some(frame) = self.frames.last_mut() {
            frame.all_const &= child_const;
            frame.remaining -= 1;
            if frame.remaining > 0 {
                break;
            }
            if frame.is_unary {
                self.open_unary -= 1;
            }
            self.frames.pop();
            child_const = false;
        }
        Ok(())
    }

    pub fn arity(&self) -> &ArityState {
        &self.arity
    }

    pub fn is_complete(&self) -> bool {
        self.arity.is_complete()
    }

    pub fn last_token(&self) -> Option<TokenId> {
        self.last
    }

    /// The next token lands somewhere below an open unary node.
    pub fn in_unary_scope(&self) -> bool {
        self.open_unary > 0
    }

    /// Placing a constant now would close a function whose children are
    /// all constants.
    pub fn constant_would_close_const_only(&self) -> bool {
        self.frames.last().is_some_and(|f| f.remaining == 1 && f.all_const)
    }

    /// FELC trigger: every open slot count is 1 (vacuously true before the
    /// first token).
    pub fn stack_all_ones(&self) -> bool {
        self.arity.stack().iter().all(|&v| v == 1)
    }
}

/// Additive mask over the library: `0.0` for allowed tokens and
/// `f64::NEG_INFINITY` for forbidden ones.
pub fn prior_mask(ctx: &GenContext, cfg: &ConstraintConfig, lib: &Library) -> Result<Vec<f64>, ConstraintError> {
    let mut mask = vec![0.0; lib.len()];
    fill_prior_mask(ctx, cfg, lib, &mut mask)?;
    Ok(mask)
}

/// Allocation-free form of [`prior_mask`].
pub fn fill_prior_mask(
    ctx: &GenContext,
    cfg: &ConstraintConfig,
    lib: &Library,
    mask: &mut [f64],
) -> Result<(), ConstraintError> {
    let st = &ctx.arity;
    if st.is_complete() {
        return Err(SymError::AppendAfterComplete.into());
    }
    let fc = st.function_count();
    let need = st.min_terminals_to_close();
    let emitted = st.tokens_emitted();
    let force_function = cfg.felc_enabled && fc < cfg.l && ctx.stack_all_ones();
    let mut any = false;
    for (m, tok) in mask.iter_mut().zip(lib.tokens()) {
        let allowed = if tok.is_function() {
            let a = tok.arity() as usize;
            fc < cfg.l
                && !(cfg.inss_enabled && tok.is_unary() && ctx.in_unary_scope())
                && emitted + 1 + need + a - 1 <= cfg.max_tokens
        } else {
            !force_function
                && !(tok.is_constant()
                    && (st.constant_count() >= cfg.n_const
                        || (cfg.cosm_enabled && ctx.constant_would_close_const_only())))
        };
        *m = if allowed { 0.0 } else { f64::NEG_INFINITY };
        any |= allowed;
    }
    if !any {
        return Err(ConstraintError::Unsatisfiable { emitted });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// The sequence does not decode to a complete tree.
    Malformed(SymError),
    FunctionBudget { count: usize, l: usize },
    ConstantBudget { count: usize, n_const: usize },
    TokenBudget { len: usize, max_tokens: usize },
    /// The sequence closed before spending the function budget.
    Felc { function_count: usize, l: usize },
    /// Unary at `position` has a unary descendant.
    Inss { position: usize },
    /// Function at `position` has only constant leaves as children.
    Cosm { position: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Malformed(e) => write!(f, "malformed: {e}"),
            Violation::FunctionBudget { count, l } => write!(f, "{count} function nodes exceed l = {l}"),
            Violation::ConstantBudget { count, n_const } => {
                write!(f, "{count} constants exceed N_const = {n_const}")
            }
            Violation::TokenBudget { len, max_tokens } => write!(f, "{len} tokens exceed max_tokens = {max_tokens}"),
            Violation::Felc { function_count, l } => {
                write!(f, "FELC: closed with {function_count} of {l} function nodes")
            }
            Violation::Inss { position } => write!(f, "INSS: nested unary under position {position}"),
            Violation::Cosm { position } => write!(f, "COSM: constant-only children at position {position}"),
        }
    }
}

impl Violation {
    pub fn rule(&self) -> &'static str {
        match self {
            Violation::Malformed(_) => "AT",
            Violation::FunctionBudget { .. } => "l",
            Violation::ConstantBudget { .. } => "N_const",
            Violation::TokenBudget { .. } => "max_tokens",
            Violation::Felc { .. } => "FELC",
            Violation::Inss { .. } => "INSS",
            Violation::Cosm { .. } => "COSM",
        }
    }
}

/// Every rule a sampler under `cfg` would have enforced, checked on the
/// decoded tree. An empty result means the sequence is reachable.
pub fn check_sequence(expr: &Expression, lib: &Library, cfg: &ConstraintConfig) -> Vec<Violation> {
    check(expr, lib, cfg, cfg.felc_enabled)
}

/// [`check_sequence`] without FELC, for structures supplied from outside
/// the sampler (which need not spend the whole function budget).
pub fn validate_structure(expr: &Expression, lib: &Library, cfg: &ConstraintConfig) -> Result<(), Vec<Violation>> {
    let v = check(expr, lib, cfg, false);
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

fn check(expr: &Expression, lib: &Library, cfg: &ConstraintConfig, felc: bool) -> Vec<Violation> {
    let tree = match decode(&expr.sequence, lib) {
        Ok(t) => t,
        Err(e) => return vec![Violation::Malformed(e)],
    };
    let mut out = Vec::new();
    let fc = expr.function_count(lib);
    let cc = expr.constant_slots(lib);
    if fc > cfg.l {
        out.push(Violation::FunctionBudget { count: fc, l: cfg.l });
    }
    if cc > cfg.n_const {
        out.push(Violation::ConstantBudget { count: cc, n_const: cfg.n_const });
    }
    if expr.len() > cfg.max_tokens {
        out.push(Violation::TokenBudget { len: expr.len(), max_tokens: cfg.max_tokens });
    }
    if felc && fc < cfg.l {
        out.push(Violation::Felc { function_count: fc, l: cfg.l });
    }
    for (i, node) in tree.nodes.iter().enumerate() {
        let tok = lib.token(node.token);
        if cfg.inss_enabled
            && tok.is_unary()
            && tree.descendants(i).iter().any(|&d| lib.token(tree.node(d).token).is_unary())
        {
            out.push(Violation::Inss { position: i });
        }
        if cfg.cosm_enabled
            && tok.is_function()
            && node.children.iter().all(|&c| matches!(lib.token(tree.node(c).token).kind, TokenKind::Constant))
        {
            out.push(Violation::Cosm { position: i });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lib() -> Library {
        Library::fatigue_default()
    }

    fn ctx(lib: &Library, prefix: &str) -> GenContext {
        GenContext::from_prefix(lib, &lib.parse_symbols(prefix).unwrap()).unwrap()
    }

    fn allowed(mask: &[f64], lib: &Library, sym: &str) -> bool {
        mask[lib.id_of(sym).unwrap().index()] == 0.0
    }

    const TABLE4_STRUCTURE: &str =
        "add C div C add add eps_a gamma_a div C add mul tau_over_G add eps_a C C";

    #[test]
    fn default_config() {
        let cfg = ConstraintConfig::default();
        assert_eq!((cfg.l, cfg.n_const, cfg.max_tokens), (10, 5, 41));
        assert!(cfg.validate().is_ok());
        let bad = ConstraintConfig { max_tokens: 20, ..cfg.clone() };
        assert!(bad.validate().is_err());
        let bad = ConstraintConfig { l: 0, ..cfg };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn after_unary_masks_unary_and_constant() {
        let lib = lib();
        let cfg = ConstraintConfig::default();
        let m = prior_mask(&ctx(&lib, "ln"), &cfg, &lib).unwrap();
        for u in ["ln", "exp", "sqrt", "square", "C"] {
            assert!(!allowed(&m, &lib, u), "{u} should be masked");
        }
        for b in ["add", "sub", "mul", "div"] {
            assert!(allowed(&m, &lib, b));
        }
        // with the budget spent FELC no longer forces a function
        let cfg1 = ConstraintConfig::with_budget(1, 5);
        let m = prior_mask(&ctx(&lib, "ln"), &cfg1, &lib).unwrap();
        for v in ["eps_a", "gamma_a", "sigma_over_E", "tau_over_G"] {
            assert!(allowed(&m, &lib, v));
        }
        assert!(!allowed(&m, &lib, "C"));
    }

    #[test]
    fn variables_allowed_when_not_forced() {
        let lib = lib();
        let cfg = ConstraintConfig::default();
        let m = prior_mask(&ctx(&lib, "ln"), &ConstraintConfig { felc_enabled: false, ..cfg }, &lib).unwrap();
        assert!(allowed(&m, &lib, "eps_a"));
        assert!(!allowed(&m, &lib, "C"));
    }

    #[test]
    fn constant_cap() {
        let lib = lib();
        let cfg = ConstraintConfig { felc_enabled: false, ..ConstraintConfig::default() };
        // five constants placed, one slot still open
        let c = ctx(&lib, "add add add add add add eps_a C C C C C");
        assert_eq!(c.arity().constant_count(), 5);
        let m = prior_mask(&c, &cfg, &lib).unwrap();
        assert!(!allowed(&m, &lib, "C"));
        assert!(allowed(&m, &lib, "eps_a"));
    }

    #[test]
    fn cosm_masks_last_constant_sibling() {
        let lib = lib();
        let cfg = ConstraintConfig::default();
        let m = prior_mask(&ctx(&lib, "add C"), &cfg, &lib).unwrap();
        assert!(!allowed(&m, &lib, "C"));
        // FELC forces a function here, so check the unforced case too
        let relaxed = ConstraintConfig { felc_enabled: false, ..cfg.clone() };
        let m = prior_mask(&ctx(&lib, "add C"), &relaxed, &lib).unwrap();
        assert!(!allowed(&m, &lib, "C"));
        assert!(allowed(&m, &lib, "eps_a"));
        // first child of a binary may be a constant
        let m = prior_mask(&ctx(&lib, "add"), &relaxed, &lib).unwrap();
        assert!(allowed(&m, &lib, "C"));
        let m = prior_mask(&ctx(&lib, "add eps_a"), &relaxed, &lib).unwrap();
        assert!(allowed(&m, &lib, "C"));
    }

    #[test]
    fn felc_forces_function_on_all_ones() {
        let lib = lib();
        let cfg = ConstraintConfig::default();
        for prefix in ["add eps_a", "ln", "add eps_a ln"] {
            let m = prior_mask(&ctx(&lib, prefix), &cfg, &lib).unwrap();
            assert!(lib.tokens().iter().all(|t| t.is_function() || m[t.id.index()].is_infinite()), "{prefix}");
        }
        // a 2 on the stack lifts the trigger
        let m = prior_mask(&ctx(&lib, "add"), &cfg, &lib).unwrap();
        assert!(allowed(&m, &lib, "eps_a"));
        // the first token is always a function
        let m = prior_mask(&GenContext::new(), &cfg, &lib).unwrap();
        assert!(!allowed(&m, &lib, "eps_a"));
    }

    #[test]
    fn function_budget() {
        let lib = lib();
        let cfg = ConstraintConfig::with_budget(2, 5);
        let m = prior_mask(&ctx(&lib, "add add"), &cfg, &lib).unwrap();
        assert!(lib.tokens().iter().all(|t| !t.is_function() || m[t.id.index()].is_infinite()));
    }

    #[test]
    fn check_flags_inss_and_cosm() {
        let lib = lib();
        let cfg = ConstraintConfig::with_budget(2, 5);
        let e = Expression::from_symbols(&lib, "ln exp eps_a", vec![]).unwrap();
        let v = check_sequence(&e, &lib, &cfg);
        assert_eq!(v, vec![Violation::Inss { position: 0 }]);
        // deeper nesting through a binary also counts
        let e = Expression::from_symbols(&lib, "ln add eps_a sqrt gamma_a", vec![]).unwrap();
        assert!(check_sequence(&e, &lib, &ConstraintConfig::with_budget(3, 5)).contains(&Violation::Inss { position: 0 }));

        let cfg = ConstraintConfig::with_budget(1, 5);
        let e = Expression::from_symbols(&lib, "add C C", vec![1.0, 2.0]).unwrap();
        assert_eq!(check_sequence(&e, &lib, &cfg), vec![Violation::Cosm { position: 0 }]);
    }

    #[test]
    fn table4_structure_counts() {
        let lib = lib();
        let e = Expression::from_symbols(&lib, TABLE4_STRUCTURE, vec![1.0; 5]).unwrap();
        let fc = e.function_count(&lib);
        assert_eq!(fc, 8);
        assert!(check_sequence(&e, &lib, &ConstraintConfig::with_budget(fc, 5)).is_empty());
        // a larger budget is only a FELC shortfall
        let v = check_sequence(&e, &lib, &ConstraintConfig::default());
        assert_eq!(v, vec![Violation::Felc { function_count: 8, l: 10 }]);
        assert!(validate_structure(&e, &lib, &ConstraintConfig::default()).is_ok());
        let v = validate_structure(&e, &lib, &ConstraintConfig::with_budget(10, 4)).unwrap_err();
        assert_eq!(v, vec![Violation::ConstantBudget { count: 5, n_const: 4 }]);
    }

    #[test]
    fn check_reports_malformed() {
        let lib = lib();
        let e = Expression { sequence: lib.parse_symbols("add eps_a").unwrap(), constants: vec![] };
        assert!(matches!(check_sequence(&e, &lib, &ConstraintConfig::default())[..], [Violation::Malformed(_)]));
    }

    fn sample_uniform(lib: &Library, cfg: &ConstraintConfig, rng: &mut ChaCha8Rng) -> Vec<TokenId> {
        let mut ctx = GenContext::new();
        let mut seq = Vec::new();
        while !ctx.is_complete() {
            let m = prior_mask(&ctx, cfg, lib).expect("mask satisfiable");
            let allowed: Vec<usize> = (0..m.len()).filter(|&i| m[i] == 0.0).collect();
            let id = TokenId(allowed[rng.random_range(0..allowed.len())] as u8);
            ctx.push(lib, id).unwrap();
            seq.push(id);
        }
        seq
    }

    fn random_config(rng: &mut ChaCha8Rng) -> ConstraintConfig {
        let l = rng.random_range(1..12);
        ConstraintConfig {
            l,
            n_const: rng.random_range(0..6),
            max_tokens: 2 * l + 1 + rng.random_range(0..2 * l + 1),
            inss_enabled: rng.random(),
            cosm_enabled: rng.random(),
            felc_enabled: rng.random(),
        }
    }

    #[test]
    fn sampled_sequences_are_sound() {
        let lib = lib();
        let cfg = ConstraintConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let seq = sample_uniform(&lib, &cfg, &mut rng);
            let e = Expression::structure(&lib, seq).unwrap();
            assert!(check_sequence(&e, &lib, &cfg).is_empty());
            assert_eq!(e.function_count(&lib), cfg.l);
            assert!(e.constant_slots(&lib) <= cfg.n_const);
            assert!(e.len() <= cfg.max_tokens);
        }
    }

    #[test]
    fn sound_and_satisfiable_under_random_configs() {
        let lib = lib();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2_000 {
            let cfg = random_config(&mut rng);
            let seq = sample_uniform(&lib, &cfg, &mut rng);
            let e = Expression::structure(&lib, seq).unwrap();
            assert!(check_sequence(&e, &lib, &cfg).is_empty(), "{cfg:?} {:?}", e.symbols(&lib));
        }
    }

    #[test]
    fn progress_on_random_states() {
        // random walks over arbitrary (unmasked) prefixes: whenever the mask
        // is asked for a reachable state it leaves something allowed
        let lib = lib();
        let cfg = ConstraintConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut states = 0;
        while states < 10_000 {
            let mut ctx = GenContext::new();
            loop {
                let m = prior_mask(&ctx, &cfg, &lib).unwrap();
                states += 1;
                let allowed: Vec<usize> = (0..m.len()).filter(|&i| m[i] == 0.0).collect();
                assert!(!allowed.is_empty());
                let id = TokenId(allowed[rng.random_range(0..allowed.len())] as u8);
                ctx.push(&lib, id).unwrap();
                if ctx.is_complete() {
                    break;
                }
            }
        }
    }

    /// Token-by-token replay: the first position whose token the mask forbids.
    fn first_masked(lib: &Library, cfg: &ConstraintConfig, seq: &[TokenId]) -> Option<usize> {
        let mut ctx = GenContext::new();
        for (i, &id) in seq.iter().enumerate() {
            let m = prior_mask(&ctx, cfg, lib).unwrap();
            if m[id.index()] != 0.0 {
                return Some(i);
            }
            ctx.push(lib, id).unwrap();
        }
        None
    }

    fn arbitrary_sequence(lib: &Library, picks: &[u8], max_functions: usize) -> Vec<TokenId> {
        let mut st = ArityState::new();
        let mut seq = Vec::new();
        let mut fc = 0;
        let mut i = 0;
        while !st.is_complete() {
            let mut id = TokenId(picks[i % picks.len()] % lib.len() as u8);
            if lib.token(id).is_function() && (fc >= max_functions || i >= picks.len()) {
                id = TokenId(8 + picks[i % picks.len()] % 5);
            }
            if lib.token(id).is_function() {
                fc += 1;
            }
            st.push_token(lib, id).unwrap();
            seq.push(id);
            i += 1;
        }
        seq
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        // The tree-level checker and the mask agree on arbitrary sequences.
        #[test]
        fn checker_matches_mask_replay(picks in proptest::collection::vec(0u8..255, 1..30), l in 1usize..8, n_const in 0usize..5) {
            let lib = lib();
            let cfg = ConstraintConfig::with_budget(l, n_const);
            let seq = arbitrary_sequence(&lib, &picks, l + 2);
            let e = Expression::structure(&lib, seq.clone()).unwrap();
            let violations = check_sequence(&e, &lib, &cfg);
            prop_assert_eq!(violations.is_empty(), first_masked(&lib, &cfg, &seq).is_none(), "{:?}", violations);
        }

        #[test]
        fn mask_is_pure_and_recomputable(picks in proptest::collection::vec(0u8..255, 1..30)) {
            let lib = lib();
            let cfg = ConstraintConfig::default();
            let seq = arbitrary_sequence(&lib, &picks, 10);
            let mut ctx = GenContext::new();
            for &id in &seq[..seq.len() - 1] {
                ctx.push(&lib, id).unwrap();
            }
            let replayed = GenContext::from_prefix(&lib, &seq[..seq.len() - 1]).unwrap();
            prop_assert_eq!(&ctx, &replayed);
            let a = prior_mask(&ctx, &cfg, &lib);
            let b = prior_mask(&replayed, &cfg, &lib);
            prop_assert_eq!(a, b);
        }
    }
}

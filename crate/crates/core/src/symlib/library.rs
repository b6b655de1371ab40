use std::fmt;

use serde::{Deserialize, Serialize};

use super::SymError;

/// Index of a token inside its [`Library`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenId(pub u8);

impl TokenId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 4] = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div];

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
        }
    }

    /// Infix operator used when rendering.
    pub fn infix(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
        }
    }

    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnaryOp {
    Ln,
    Exp,
    Sqrt,
    Square,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 4] = [UnaryOp::Ln, UnaryOp::Exp, UnaryOp::Sqrt, UnaryOp::Square];

    pub fn symbol(self) -> &'static str {
        match self {
            UnaryOp::Ln => "ln",
            UnaryOp::Exp => "exp",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Square => "square",
        }
    }

    /// Unprotected: ln of a non-positive value or sqrt of a negative one
    /// yields NaN/-inf, which callers treat as a non-finite sample.
    #[inline]
    pub fn apply(self, a: f64) -> f64 {
        match self {
            UnaryOp::Ln => a.ln(),
            UnaryOp::Exp => a.exp(),
            UnaryOp::Sqrt => a.sqrt(),
            UnaryOp::Square => a * a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Binary(BinaryOp),
    Unary(UnaryOp),
    /// Input variable reading the given feature column.
    Variable(usize),
    Constant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub id: TokenId,
    pub kind: TokenKind,
    pub symbol: String,
}

impl Token {
    #[inline]
    pub fn arity(&self) -> u8 {
        self.kind.arity()
    }

    #[inline]
    pub fn is_function(&self) -> bool {
        self.arity() > 0
    }

    #[inline]
    pub fn is_unary(&self) -> bool {
        matches!(self.kind, TokenKind::Unary(_))
    }

    #[inline]
    pub fn is_constant(&self) -> bool {
        matches!(self.kind, TokenKind::Constant)
    }
}

impl TokenKind {
    #[inline]
    pub fn arity(self) -> u8 {
        match self {
            TokenKind::Binary(_) => 2,
            TokenKind::Unary(_) => 1,
            TokenKind::Variable(_) | TokenKind::Constant => 0,
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.symbol)
    }
}

/// Symbol used for the constant placeholder in serialized sequences.
pub const CONSTANT_SYMBOL: &str = "C";

/// Input variables of the fatigue model, in feature-column order.
pub const FATIGUE_VARIABLES: [&str; 4] = ["eps_a", "gamma_a", "sigma_over_E", "tau_over_G"];

/// The ordered token alphabet expressions are built from.
///
/// Tokens are laid out as binary operators, unary operators, variables and
/// finally the constant placeholder (if enabled).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Library {
    tokens: Vec<Token>,
    variable_count: usize,
    has_constant: bool,
}

impl Library {
    pub fn new(
        binary: &[BinaryOp],
        unary: &[UnaryOp],
        variables: &[&str],
        has_constant: bool,
    ) -> Result<Self, SymError> {
        if binary.is_empty() {
            return Err(SymError::InvalidLibrary("at least one binary operator is required".into()));
        }
        if variables.is_empty() {
            return Err(SymError::InvalidLibrary("at least one input variable is required".into()));
        }
        let mut kinds: Vec<(TokenKind, String)> = Vec::new();
        kinds.extend(binary.iter().map(|op| (TokenKind::Binary(*op), op.symbol().to_string())));
        kinds.extend(unary.iter().map(|op| (TokenKind::Unary(*op), op.symbol().to_string())));
        kinds.extend(
            variables
                .iter()
                .enumerate()
                .map(|(col, name)| (TokenKind::Variable(col), name.to_string())),
        );
        if has_constant {
            kinds.push((TokenKind::Constant, CONSTANT_SYMBOL.to_string()));
        }
        if kinds.len() > u8::MAX as usize {
            return Err(SymError::InvalidLibrary("too many tokens".into()));
        }

        let mut tokens = Vec::with_capacity(kinds.len());
        for (i, (kind, symbol)) in kinds.into_iter().enumerate() {
            if symbol.is_empty() || symbol.contains(char::is_whitespace) {
                return Err(SymError::InvalidLibrary(format!("invalid symbol {symbol:?}")));
            }
            if tokens.iter().any(|t: &Token| t.symbol == symbol) {
                return Err(SymError::InvalidLibrary(format!("duplicate symbol {symbol:?}")));
            }
            tokens.push(Token { id: TokenId(i as u8), kind, symbol });
        }
        Ok(Library { tokens, variable_count: variables.len(), has_constant })
    }

    /// Binary {add, sub, mul, div}, unary {ln, exp, sqrt, square}, the four
    /// dimensionless fatigue inputs and one constant placeholder.
    pub fn fatigue_default() -> Self {
        Self::new(&BinaryOp::ALL, &UnaryOp::ALL, &FATIGUE_VARIABLES, true)
            .expect("default library is valid")
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn variable_count(&self) -> usize {
        self.variable_count
    }

    pub fn has_constant(&self) -> bool {
        self.has_constant
    }

    #[inline]
    pub fn token(&self, id: TokenId) -> &Token {
        &self.tokens[id.index()]
    }

    pub fn get(&self, id: TokenId) -> Option<&Token> {
        self.tokens.get(id.index())
    }

    pub fn by_symbol(&self, symbol: &str) -> Option<&Token> {
        self.tokens.iter().find(|t| t.symbol == symbol)
    }

    pub fn id_of(&self, symbol: &str) -> Result<TokenId, SymError> {
        self.by_symbol(symbol)
            .map(|t| t.id)
            .ok_or_else(|| SymError::UnknownSymbol(symbol.to_string()))
    }

    pub fn constant_id(&self) -> Option<TokenId> {
        self.tokens.iter().find(|t| t.is_constant()).map(|t| t.id)
    }

    /// Parse a whitespace-separated list of symbols into token ids.
    pub fn parse_symbols(&self, text: &str) -> Result<Vec<TokenId>, SymError> {
        text.split_whitespace().map(|s| self.id_of(s)).collect()
    }

    pub fn variable_names(&self) -> Vec<&str> {
        let mut vars: Vec<(usize, &str)> = self
            .tokens
            .iter()
            .filter_map(|t| match t.kind {
                TokenKind::Variable(col) => Some((col, t.symbol.as_str())),
                _ => None,
            })
            .collect();
        vars.sort_by_key(|(col, _)| *col);
        vars.into_iter().map(|(_, s)| s).collect()
    }
}

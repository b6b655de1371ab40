//! Token alphabet and expression representation: prefix sequences,
//! arity-tracked decoding, evaluation and text forms.

mod eval;
mod expr;
mod library;
mod text;

pub use eval::{evaluate, is_non_finite, CompiledExpr, EvalScratch, Features};
pub use expr::{decode, ArityState, Expression, Node, Tree};
pub use library::{
    BinaryOp, Library, Token, TokenId, TokenKind, UnaryOp, CONSTANT_SYMBOL, FATIGUE_VARIABLES,
};
pub use text::{
    format_constant, format_significant, parse_infix, parse_line, render, render_structure,
    render_with, to_line, ConstantFormat, ParsedLine,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SymError {
    #[error("invalid library: {0}")]
    InvalidLibrary(String),
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),
    #[error("token id {0} is not in the library")]
    InvalidTokenId(u8),
    #[error("cannot append a token to a complete expression")]
    AppendAfterComplete,
    #[error("incomplete expression: child slots left open")]
    IncompleteExpression,
    #[error("trailing tokens after the expression closed at position {position}")]
    TrailingTokens { position: usize },
    #[error("expression has {placeholders} constant placeholders but {values} values")]
    ConstantCountMismatch { placeholders: usize, values: usize },
    #[error("feature columns have different lengths")]
    RaggedFeatures,
    #[error("expected {expected} feature columns, found {found}")]
    FeatureWidth { expected: usize, found: usize },
    #[error("parse error: {0}")]
    Parse(String),
}

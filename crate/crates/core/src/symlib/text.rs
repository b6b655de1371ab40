//! Text forms of an [`Expression`]: parenthesized infix rendering, the
//! one-line `tokens=...; constants=...` serialization and an infix parser
//! that inverts [`render`].

use std::fmt::Write as _;

use super::{decode, Expression, Library, SymError, TokenId, TokenKind, Tree, CONSTANT_SYMBOL};

/// How constants are printed by [`render_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstantFormat {
    /// Shortest representation that round-trips to the same `f64`.
    Full,
    /// Fixed number of significant digits, for human-facing reports.
    Significant(usize),
    /// Constants shown as the placeholder symbol `C`.
    Placeholder,
}

/// Full-precision infix rendering, e.g. `(2.5 * eps_a)`.
pub fn render(expr: &Expression, lib: &Library) -> Result<String, SymError> {
    render_with(expr, lib, ConstantFormat::Full)
}

/// Infix rendering with constants shown as `C`; identifies a structure.
pub fn render_structure(expr: &Expression, lib: &Library) -> Result<String, SymError> {
    render_with(expr, lib, ConstantFormat::Placeholder)
}

pub fn render_with(expr: &Expression, lib: &Library, fmt: ConstantFormat) -> Result<String, SymError> {
    let tree = decode(&expr.sequence, lib)?;
    let mut out = String::new();
    let mut k = 0;
    write_node(&tree, 0, expr, lib, fmt, &mut k, &mut out);
    Ok(out)
}

fn write_node(
    tree: &Tree,
    idx: usize,
    expr: &Expression,
    lib: &Library,
    fmt: ConstantFormat,
    k: &mut usize,
    out: &mut String,
) {
    let node = tree.node(idx);
    let tok = lib.token(node.token);
    match tok.kind {
        TokenKind::Variable(_) => out.push_str(&tok.symbol),
        TokenKind::Constant => {
            let v = expr.constants.get(*k).copied().unwrap_or(f64::NAN);
            *k += 1;
            out.push_str(&format_constant(v, fmt));
        }
        TokenKind::Unary(_) => {
            out.push_str(&tok.symbol);
            out.push('(');
            write_node(tree, node.children[0], expr, lib, fmt, k, out);
            out.push(')');
        }
        TokenKind::Binary(op) => {
            out.push('(');
            write_node(tree, node.children[0], expr, lib, fmt, k, out);
            let _ = write!(out, " {} ", op.infix());
            write_node(tree, node.children[1], expr, lib, fmt, k, out);
            out.push(')');
        }
    }
}

pub fn format_constant(v: f64, fmt: ConstantFormat) -> String {
    match fmt {
        ConstantFormat::Full => format!("{v}"),
        ConstantFormat::Significant(digits) => format_significant(v, digits),
        ConstantFormat::Placeholder => CONSTANT_SYMBOL.to_string(),
    }
}

/// `v` rounded to `digits` significant digits, without exponent for
/// moderate magnitudes.
pub fn format_significant(v: f64, digits: usize) -> String {
    if !v.is_finite() || v == 0.0 {
        return format!("{v}");
    }
    let digits = digits.max(1);
    let mag = v.abs().log10().floor() as i32;
    if !(-4..15).contains(&mag) {
        return format!("{:.*e}", digits - 1, v);
    }
    let decimals = (digits as i32 - 1 - mag).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // a value that rounds up to the next power of ten gains a digit
    let rounded: f64 = s.parse().unwrap_or(v);
    if rounded.abs().log10().floor() as i32 > mag && decimals > 0 {
        let decimals = decimals - 1;
        return format!("{v:.decimals$}");
    }
    s
}

/// One-line serialization: `tokens=<symbols>; constants=<reals>`.
pub fn to_line(expr: &Expression, lib: &Library) -> String {
    let tokens = expr.symbols(lib).join(" ");
    let constants: Vec<String> = expr.constants.iter().map(|c| format!("{c}")).collect();
    format!("tokens={tokens}; constants={}", constants.join(","))
}

/// Parsed serialized form. `constants` is `None` when the line gives no
/// values, i.e. the line describes a structure awaiting a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLine {
    pub sequence: Vec<TokenId>,
    pub constants: Option<Vec<f64>>,
}

impl ParsedLine {
    /// The expression, with placeholders set to 1 when no constants were
    /// given.
    pub fn into_expression(self, lib: &Library) -> Result<Expression, SymError> {
        match self.constants {
            Some(c) => Expression::new(lib, self.sequence, c),
            None => Expression::structure(lib, self.sequence),
        }
    }
}

pub fn parse_line(line: &str, lib: &Library) -> Result<ParsedLine, SymError> {
    let mut tokens = None;
    let mut constants = None;
    for part in line.trim().split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| SymError::Parse(format!("expected key=value, got {part:?}")))?;
        match key.trim() {
            "tokens" => tokens = Some(lib.parse_symbols(value)?),
            "constants" => {
                let value = value.trim();
                if !value.is_empty() {
                    let parsed: Result<Vec<f64>, _> = value
                        .split(',')
                        .map(|s| {
                            s.trim().parse::<f64>().map_err(|_| SymError::Parse(format!("bad constant {s:?}")))
                        })
                        .collect();
                    constants = Some(parsed?);
                }
            }
            other => return Err(SymError::Parse(format!("unknown field {other:?}"))),
        }
    }
    let sequence = tokens.ok_or_else(|| SymError::Parse("missing tokens= field".into()))?;
    decode(&sequence, lib)?;
    if let Some(c) = &constants {
        let slots = sequence.iter().filter(|id| lib.token(**id).is_constant()).count();
        if slots != c.len() {
            return Err(SymError::ConstantCountMismatch { placeholders: slots, values: c.len() });
        }
    }
    Ok(ParsedLine { sequence, constants })
}

#[derive(Debug, Clone, PartialEq)]
enum Lex {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn lex(s: &str) -> Result<Vec<Lex>, SymError> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '(' {
            out.push(Lex::LParen);
            i += 1;
        } else if c == ')' {
            out.push(Lex::RParen);
            i += 1;
        } else if "+-*/".contains(c) {
            // a '-' directly followed by a digit where an operand is expected is a sign
            let operand_expected = matches!(out.last(), None | Some(Lex::Op(_)) | Some(Lex::LParen));
            if c == '-' && operand_expected && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit() || *d == '.') {
                let (v, next) = lex_number(&chars, i)?;
                out.push(Lex::Num(v));
                i = next;
            } else {
                out.push(Lex::Op(c));
                i += 1;
            }
        } else if c.is_ascii_digit() || c == '.' {
            let (v, next) = lex_number(&chars, i)?;
            out.push(Lex::Num(v));
            i = next;
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Lex::Ident(chars[start..i].iter().collect()));
        } else {
            return Err(SymError::Parse(format!("unexpected character {c:?}")));
        }
    }
    Ok(out)
}

fn lex_number(chars: &[char], start: usize) -> Result<(f64, usize), SymError> {
    let mut i = start;
    if chars[i] == '-' {
        i += 1;
    }
    while i < chars.len() {
        let c = chars[i];
        let exp_sign = (c == '-' || c == '+') && i > start && matches!(chars[i - 1], 'e' | 'E');
        if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
            i += 1;
        } else {
            break;
        }
    }
    let text: String = chars[start..i].iter().collect();
    text.parse::<f64>().map(|v| (v, i)).map_err(|_| SymError::Parse(format!("bad number {text:?}")))
}

struct InfixParser<'a> {
    toks: Vec<Lex>,
    pos: usize,
    lib: &'a Library,
    seq: Vec<TokenId>,
    constants: Vec<f64>,
}

// Builds the prefix sequence directly. Binary nodes are emitted before their
// operands are known, so each sub-expression is parsed into its own buffer.
#[derive(Default)]
struct Fragment {
    seq: Vec<TokenId>,
    constants: Vec<f64>,
}

impl<'a> InfixParser<'a> {
    fn peek(&self) -> Option<&Lex> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Lex> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn binary(&self, op: char, left: Fragment, right: Fragment) -> Result<Fragment, SymError> {
        let sym = match op {
            '+' => "add",
            '-' => "sub",
            '*' => "mul",
            '/' => "div",
            _ => unreachable!(),
        };
        let mut f = Fragment { seq: vec![self.lib.id_of(sym)?], constants: left.constants };
        f.seq.extend(left.seq);
        f.seq.extend(right.seq);
        f.constants.extend(right.constants);
        Ok(f)
    }

    fn expr(&mut self) -> Result<Fragment, SymError> {
        let mut left = self.term()?;
        while let Some(Lex::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let right = self.term()?;
            left = self.binary(op, left, right)?;
        }
        Ok(left)
    }

    fn term(&mut self) -> Result<Fragment, SymError> {
        let mut left = self.factor()?;
        while let Some(Lex::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let right = self.factor()?;
            left = self.binary(op, left, right)?;
        }
        Ok(left)
    }

    fn factor(&mut self) -> Result<Fragment, SymError> {
        match self.next() {
            Some(Lex::Num(v)) => {
                let c = self.lib.constant_id().ok_or_else(|| SymError::Parse("library has no constant".into()))?;
                Ok(Fragment { seq: vec![c], constants: vec![v] })
            }
            Some(Lex::Ident(name)) => {
                let tok = self.lib.by_symbol(&name).ok_or_else(|| SymError::UnknownSymbol(name.clone()))?;
                match tok.kind {
                    TokenKind::Unary(_) => {
                        let id = tok.id;
                        if self.next() != Some(Lex::LParen) {
                            return Err(SymError::Parse(format!("expected '(' after {name}")));
                        }
                        let inner = self.expr()?;
                        if self.next() != Some(Lex::RParen) {
                            return Err(SymError::Parse("expected ')'".into()));
                        }
                        let mut f = Fragment { seq: vec![id], constants: inner.constants };
                        f.seq.extend(inner.seq);
                        Ok(f)
                    }
                    TokenKind::Variable(_) => Ok(Fragment { seq: vec![tok.id], constants: vec![] }),
                    TokenKind::Constant => Ok(Fragment { seq: vec![tok.id], constants: vec![1.0] }),
                    TokenKind::Binary(_) => Err(SymError::Parse(format!("binary operator {name} used as a name"))),
                }
            }
            Some(Lex::LParen) => {
                let inner = self.expr()?;
                if self.next() != Some(Lex::RParen) {
                    return Err(SymError::Parse("expected ')'".into()));
                }
                Ok(inner)
            }
            other => Err(SymError::Parse(format!("unexpected token {other:?}"))),
        }
    }
}

/// Parse the infix form produced by [`render`] back into an expression.
pub fn parse_infix(text: &str, lib: &Library) -> Result<Expression, SymError> {
    let mut p = InfixParser { toks: lex(text)?, pos: 0, lib, seq: Vec::new(), constants: Vec::new() };
    let f = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(SymError::Parse("trailing input".into()));
    }
    p.seq = f.seq;
    p.constants = f.constants;
    Expression::new(lib, p.seq, p.constants)
}

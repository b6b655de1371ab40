use super::{decode, BinaryOp, Expression, Library, SymError, TokenKind, UnaryOp};

/// Column-major feature matrix: one column per library variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl Features {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self, SymError> {
        let n_rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(SymError::RaggedFeatures);
        }
        Ok(Features { columns, n_rows })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], n_cols: usize) -> Result<Self, SymError> {
        let mut columns = vec![Vec::with_capacity(rows.len()); n_cols];
        for row in rows {
            let row = row.as_ref();
            if row.len() != n_cols {
                return Err(SymError::RaggedFeatures);
            }
            for (col, v) in columns.iter_mut().zip(row) {
                col.push(*v);
            }
        }
        Ok(Features { columns, n_rows: rows.len() })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, col: usize) -> &[f64] {
        &self.columns[col]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, rows: &[usize]) -> Features {
        Features {
            columns: self.columns.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
            n_rows: rows.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Var(usize),
    Const(usize),
    Unary(UnaryOp),
    Binary(BinaryOp),
}

/// Postfix program for fast repeated evaluation of one structure with
/// varying constants.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    ops: Vec<Op>,
    max_depth: usize,
    n_constants: usize,
}

/// Reusable value stack for [`CompiledExpr::eval_into`].
#[derive(Debug, Default, Clone)]
pub struct EvalScratch {
    buf: Vec<f64>,
}

impl CompiledExpr {
    pub fn compile(expr: &Expression, lib: &Library) -> Result<Self, SymError> {
        let tree = decode(&expr.sequence, lib)?;
        // constant index of each placeholder = its rank in the prefix order
        let mut const_rank = vec![usize::MAX; expr.sequence.len()];
        let mut k = 0;
        for (pos, id) in expr.sequence.iter().enumerate() {
            if lib.token(*id).is_constant() {
                const_rank[pos] = k;
                k += 1;
            }
        }
        let mut ops = Vec::with_capacity(expr.sequence.len());
        // iterative post-order walk
        let mut stack: Vec<(usize, bool)> = vec![(0, false)];
        while let Some((idx, expanded)) = stack.pop() {
            let node = tree.node(idx);
            if expanded || node.children.is_empty() {
                let op = match lib.token(node.token).kind {
                    TokenKind::Variable(col) => Op::Var(col),
                    TokenKind::Constant => Op::Const(const_rank[idx]),
                    TokenKind::Unary(u) => Op::Unary(u),
                    TokenKind::Binary(b) => Op::Binary(b),
                };
                ops.push(op);
            } else {
                stack.push((idx, true));
                for &c in node.children.iter().rev() {
                    stack.push((c, false));
                }
            }
        }
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for op in &ops {
            match op {
                Op::Var(_) | Op::Const(_) => depth += 1,
                Op::Unary(_) => {}
                Op::Binary(_) => depth -= 1,
            }
            max_depth = max_depth.max(depth);
        }
        Ok(CompiledExpr { ops, max_depth, n_constants: k })
    }

    pub fn n_constants(&self) -> usize {
        self.n_constants
    }

    /// Evaluate every row of `features` into `out`. Non-finite results are
    /// left in place as NaN/inf.
    pub fn eval_into(&self, constants: &[f64], features: &Features, scratch: &mut EvalScratch, out: &mut [f64]) {
        let n = features.n_rows();
        debug_assert_eq!(out.len(), n);
        debug_assert_eq!(constants.len(), self.n_constants);
        let need = self.max_depth * n;
        if scratch.buf.len() < need {
            scratch.buf.resize(need, 0.0);
        }
        let buf = &mut scratch.buf[..need];
        let mut sp = 0usize;
        for op in &self.ops {
            match *op {
                Op::Var(col) => {
                    buf[sp * n..(sp + 1) * n].copy_from_slice(features.column(col));
                    sp += 1;
                }
                Op::Const(k) => {
                    buf[sp * n..(sp + 1) * n].fill(constants[k]);
                    sp += 1;
                }
                Op::Unary(u) => {
                    for v in &mut buf[(sp - 1) * n..sp * n] {
                        *v = u.apply(*v);
                    }
                }
                Op::Binary(b) => {
                    let (left, right) = buf[(sp - 2) * n..sp * n].split_at_mut(n);
                    for (l, r) in left.iter_mut().zip(right.iter()) {
                        *l = b.apply(*l, *r);
                    }
                    sp -= 1;
                }
            }
        }
        debug_assert_eq!(sp, 1);
        out.copy_from_slice(&buf[..n]);
    }

    pub fn eval(&self, constants: &[f64], features: &Features) -> Vec<f64> {
        let mut out = vec![0.0; features.n_rows()];
        self.eval_into(constants, features, &mut EvalScratch::default(), &mut out);
        out
    }
}

/// Evaluate an expression on every sample.
///
/// Non-finite results (division by zero, ln of a non-positive value, sqrt of
/// a negative value, exp overflow) stay in the output as NaN or infinity so a
/// single bad sample never aborts the batch; see [`is_non_finite`].
pub fn evaluate(expr: &Expression, lib: &Library, features: &Features) -> Result<Vec<f64>, SymError> {
    if features.n_cols() < lib.variable_count() {
        return Err(SymError::FeatureWidth { expected: lib.variable_count(), found: features.n_cols() });
    }
    let compiled = CompiledExpr::compile(expr, lib)?;
    if compiled.n_constants() != expr.constants.len() {
        return Err(SymError::ConstantCountMismatch {
            placeholders: compiled.n_constants(),
            values: expr.constants.len(),
        });
    }
    Ok(compiled.eval(&expr.constants, features))
}

/// The per-sample non-finite marker.
#[inline]
pub fn is_non_finite(v: f64) -> bool {
    !v.is_finite()
}

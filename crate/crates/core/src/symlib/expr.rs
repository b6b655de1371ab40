use super::{Library, SymError, TokenId};

/// Pending-children bookkeeping while a prefix sequence is being built.
///
/// Each stack entry is the number of child slots still open on a function
/// node; the most recent function is last.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ArityState {
    stack: Vec<u8>,
    tokens_emitted: usize,
    function_count: usize,
    constant_count: usize,
}

impl ArityState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stack(&self) -> &[u8] {
        &self.stack
    }

    pub fn tokens_emitted(&self) -> usize {
        self.tokens_emitted
    }

    pub fn function_count(&self) -> usize {
        self.function_count
    }

    pub fn constant_count(&self) -> usize {
        self.constant_count
    }

    /// True once at least one token was placed and no child slot is open.
    pub fn is_complete(&self) -> bool {
        self.tokens_emitted > 0 && self.stack.is_empty()
    }

    /// Number of terminals still needed to close the tree.
    pub fn min_terminals_to_close(&self) -> usize {
        if self.tokens_emitted == 0 {
            return 1;
        }
        if self.stack.is_empty() {
            return 0;
        }
        let open: usize = self.stack.iter().map(|&v| v as usize).sum();
        open - self.stack.len() + 1
    }

    /// Append one token. Functions push their arity; terminals fill the most
    /// recent open slot, popping exhausted entries and filling the parent slot
    /// in turn.
    pub fn push(&mut self, arity: u8, is_constant: bool) -> Result<(), SymError> {
        if self.is_complete() {
            return Err(SymError::AppendAfterComplete);
        }
        self.tokens_emitted += 1;
        if arity > 0 {
            self.function_count += 1;
            self.stack.push(arity);
            return Ok(());
        }
        if is_constant {
            self.constant_count += 1;
        }
        while let Some(last) = self.stack.last_mut() {
            *last -= 1;
            if *last > 0 {
                break;
            }
            self.stack.pop();
        }
        Ok(())
    }

    pub fn push_token(&mut self, lib: &Library, id: TokenId) -> Result<(), SymError> {
        let tok = lib.get(id).ok_or(SymError::InvalidTokenId(id.0))?;
        self.push(tok.arity(), tok.is_constant())
    }
}

/// A prefix token sequence plus one value per constant placeholder, in
/// sequence order.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    pub sequence: Vec<TokenId>,
    pub constants: Vec<f64>,
}

impl Expression {
    /// Build an expression, checking that the sequence is a complete tree and
    /// that constants match the placeholders.
    pub fn new(lib: &Library, sequence: Vec<TokenId>, constants: Vec<f64>) -> Result<Self, SymError> {
        decode(&sequence, lib)?;
        let expr = Expression { sequence, constants };
        let n = expr.constant_slots(lib);
        if n != expr.constants.len() {
            return Err(SymError::ConstantCountMismatch { placeholders: n, values: expr.constants.len() });
        }
        Ok(expr)
    }

    /// A structure whose placeholders are not yet fitted (all set to 1).
    pub fn structure(lib: &Library, sequence: Vec<TokenId>) -> Result<Self, SymError> {
        decode(&sequence, lib)?;
        let n = sequence.iter().filter(|id| lib.token(**id).is_constant()).count();
        Ok(Expression { sequence, constants: vec![1.0; n] })
    }

    pub fn from_symbols(lib: &Library, symbols: &str, constants: Vec<f64>) -> Result<Self, SymError> {
        Self::new(lib, lib.parse_symbols(symbols)?, constants)
    }

    pub fn constant_slots(&self, lib: &Library) -> usize {
        self.sequence.iter().filter(|id| lib.token(**id).is_constant()).count()
    }

    pub fn function_count(&self, lib: &Library) -> usize {
        self.sequence.iter().filter(|id| lib.token(**id).is_function()).count()
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    pub fn with_constants(&self, constants: Vec<f64>) -> Self {
        Expression { sequence: self.sequence.clone(), constants }
    }

    pub fn symbols<'a>(&self, lib: &'a Library) -> Vec<&'a str> {
        self.sequence.iter().map(|id| lib.token(*id).symbol.as_str()).collect()
    }
}

/// One node of a decoded tree. Children index into [`Tree::nodes`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub token: TokenId,
    pub children: Vec<usize>,
    /// Position of the node in the prefix sequence (equal to its index).
    pub position: usize,
}

/// Navigable tree decoded from a prefix sequence; node 0 is the root and
/// nodes are stored in pre-order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    /// Pre-order token listing; the inverse of [`decode`].
    pub fn encode(&self) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            out.push(node.token);
            stack.extend(node.children.iter().rev());
        }
        out
    }

    /// Strict descendants of `idx`.
    pub fn descendants(&self, idx: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack: Vec<usize> = self.nodes[idx].children.clone();
        while let Some(i) = stack.pop() {
            out.push(i);
            stack.extend(self.nodes[i].children.iter().copied());
        }
        out
    }
}

/// Decode a prefix sequence into a tree using arity tracking.
pub fn decode(seq: &[TokenId], lib: &Library) -> Result<Tree, SymError> {
    if seq.is_empty() {
        return Err(SymError::IncompleteExpression);
    }
    let mut nodes: Vec<Node> = Vec::with_capacity(seq.len());
    // (node index, open child slots)
    let mut open: Vec<(usize, u8)> = Vec::new();
    for (pos, &id) in seq.iter().enumerate() {
        let tok = lib.get(id).ok_or(SymError::InvalidTokenId(id.0))?;
        if pos > 0 && open.is_empty() {
            return Err(SymError::TrailingTokens { position: pos });
        }
        nodes.push(Node { token: id, children: Vec::with_capacity(tok.arity() as usize), position: pos });
        if let Some((parent, slots)) = open.last_mut() {
            nodes[*parent].children.push(pos);
            *slots -= 1;
            if *slots == 0 {
                open.pop();
            }
        }
        if tok.arity() > 0 {
            open.push((pos, tok.arity()));
        }
    }
    if !open.is_empty() {
        return Err(SymError::IncompleteExpression);
    }
    Ok(Tree { nodes })
}

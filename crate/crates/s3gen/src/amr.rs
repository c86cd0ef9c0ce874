//! Sentence-level semantic graphs in PENMAN notation.
//!
//! Each elementary discourse unit (EDU) carries one rooted, directed,
//! labeled graph. Concepts may carry a `~N` suffix aligning the node to
//! the N-th token of the owning EDU; aligned nodes are word nodes,
//! unaligned ones are dummy nodes. Inverse roles (`:R-of`) are
//! normalized to the forward role with reversed direction at parse
//! time; the canonical serializer re-introduces `-of` whenever its
//! spanning tree walks an edge against the stored direction.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AmrError {
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("duplicate concept definition for variable `{variable}` at byte {offset}")]
    DuplicateDefinition { variable: String, offset: usize },
    #[error("tokens {token_index} aligned to both `{first}` and `{second}`")]
    AlignmentConflict {
        token_index: usize,
        first: String,
        second: String,
    },
    #[error("node `{variable}` unreachable from root")]
    Unreachable { variable: String },
    #[error("{path}: line {line}: {source}")]
    InFile {
        path: String,
        line: usize,
        #[source]
        source: Box<AmrError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    WordAligned,
    Dummy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmrNode {
    pub variable: String,
    pub concept: String,
    /// Index into the owning EDU's token list, when aligned.
    pub token_index: Option<usize>,
    /// True for string/number constants; serialized inline as literals.
    pub constant: bool,
    /// True when the constant was written with double quotes.
    pub quoted: bool,
}

impl AmrNode {
    pub fn kind(&self) -> NodeKind {
        if self.token_index.is_some() {
            NodeKind::WordAligned
        } else {
            NodeKind::Dummy
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmrEdge {
    pub source: String,
    pub target: String,
    /// Always starts with ':' and never ends in "-of" (normalized).
    pub role: String,
}

#[derive(Debug, Clone)]
pub struct AmrGraph {
    pub root: String,
    pub nodes: Vec<AmrNode>,
    pub edges: Vec<AmrEdge>,
    pub edu_id: usize,
}

impl AmrGraph {
    pub fn node_index(&self, variable: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.variable == variable)
    }

    pub fn node(&self, variable: &str) -> Option<&AmrNode> {
        self.nodes.iter().find(|n| n.variable == variable)
    }

    /// Aligned nodes as token_index → variable; errors if two nodes
    /// claim the same token.
    pub fn word_nodes(&self) -> Result<BTreeMap<usize, &str>, AmrError> {
        let mut map: BTreeMap<usize, &str> = BTreeMap::new();
        for n in &self.nodes {
            if let Some(t) = n.token_index {
                if let Some(prev) = map.insert(t, n.variable.as_str()) {
                    return Err(AmrError::AlignmentConflict {
                        token_index: t,
                        first: prev.to_string(),
                        second: n.variable.clone(),
                    });
                }
            }
        }
        Ok(map)
    }

    /// Node indices in the order the canonical serializer visits them.
    pub fn canonical_order(&self) -> Result<Vec<usize>, AmrError> {
        let (order, _) = self.walk()?;
        Ok(order)
    }

    /// Order-independent form for graph equality in tests. Synthetic
    /// variables of constant nodes carry no identity, so they are
    /// renamed by content before comparison.
    pub fn signature(&self) -> (String, Vec<(String, String, Option<usize>, bool, bool)>, Vec<(String, String, String)>) {
        let canon = |var: &str| -> String {
            match self.node(var) {
                Some(n) if n.constant => {
                    format!("_const({},{},{:?})", n.concept, n.quoted, n.token_index)
                }
                _ => var.to_string(),
            }
        };
        let mut nodes: Vec<_> = self
            .nodes
            .iter()
            .map(|n| {
                (
                    canon(&n.variable),
                    n.concept.clone(),
                    n.token_index,
                    n.constant,
                    n.quoted,
                )
            })
            .collect();
        nodes.sort();
        let mut edges: Vec<_> = self
            .edges
            .iter()
            .map(|e| (canon(&e.source), e.role.clone(), canon(&e.target)))
            .collect();
        edges.sort();
        (self.root.clone(), nodes, edges)
    }

    /// Neighbor lists with the role string each direction would emit,
    /// sorted by (role, target variable) for canonical traversal.
    fn sorted_adjacency(&self) -> Vec<Vec<(String, usize, usize)>> {
        let mut adj: Vec<Vec<(String, usize, usize)>> = vec![Vec::new(); self.nodes.len()];
        for (ei, e) in self.edges.iter().enumerate() {
            let s = self.node_index(&e.source).expect("edge source exists");
            let t = self.node_index(&e.target).expect("edge target exists");
            adj[s].push((e.role.clone(), t, ei));
            adj[t].push((format!("{}-of", e.role), s, ei));
        }
        for list in &mut adj {
            list.sort_by(|a, b| {
                (a.0.as_str(), self.nodes[a.1].variable.as_str())
                    .cmp(&(b.0.as_str(), self.nodes[b.1].variable.as_str()))
            });
        }
        adj
    }

    /// DFS over the undirected graph from the root, consuming edges in
    /// the same order the serializer does, so the returned node order
    /// equals emission order.
    fn walk(&self) -> Result<(Vec<usize>, Vec<bool>), AmrError> {
        let adj = self.sorted_adjacency();
        let root = self.node_index(&self.root).ok_or_else(|| AmrError::Unreachable {
            variable: self.root.clone(),
        })?;
        let mut visited = vec![false; self.nodes.len()];
        let mut edge_used = vec![false; self.edges.len()];
        let mut order = Vec::with_capacity(self.nodes.len());
        fn dfs(
            adj: &[Vec<(String, usize, usize)>],
            i: usize,
            visited: &mut [bool],
            edge_used: &mut [bool],
            order: &mut Vec<usize>,
        ) {
            visited[i] = true;
            order.push(i);
            for (_, t, ei) in &adj[i] {
                if edge_used[*ei] {
                    continue;
                }
                edge_used[*ei] = true;
                if !visited[*t] {
                    dfs(adj, *t, visited, edge_used, order);
                }
            }
        }
        dfs(&adj, root, &mut visited, &mut edge_used, &mut order);
        if let Some(i) = visited.iter().position(|v| !v) {
            return Err(AmrError::Unreachable {
                variable: self.nodes[i].variable.clone(),
            });
        }
        Ok((order, edge_used))
    }
}

fn fmt_alignment(t: Option<usize>) -> String {
    t.map(|i| format!("~{i}")).unwrap_or_default()
}

/// Canonical PENMAN form: spanning-tree DFS from the root with children
/// sorted by (role, target variable); re-entrant edges emitted as bare
/// variable references; constants emitted inline.
pub fn serialize_penman(g: &AmrGraph) -> Result<String, AmrError> {
    // Validate connectivity up front so emission cannot drop nodes.
    g.walk()?;
    let adj = g.sorted_adjacency();
    let root = g.node_index(&g.root).expect("root exists after walk");
    let mut visited = vec![false; g.nodes.len()];
    let mut edge_used = vec![false; g.edges.len()];
    let mut out = String::new();
    emit(g, &adj, root, &mut visited, &mut edge_used, &mut out);
    Ok(out)
}

fn emit(
    g: &AmrGraph,
    adj: &[Vec<(String, usize, usize)>],
    i: usize,
    visited: &mut [bool],
    edge_used: &mut [bool],
    out: &mut String,
) {
    visited[i] = true;
    let n = &g.nodes[i];
    out.push('(');
    out.push_str(&n.variable);
    out.push_str(" / ");
    out.push_str(&n.concept);
    out.push_str(&fmt_alignment(n.token_index));
    for (role, t, ei) in &adj[i] {
        if edge_used[*ei] {
            continue;
        }
        edge_used[*ei] = true;
        out.push(' ');
        out.push_str(role);
        out.push(' ');
        let tn = &g.nodes[*t];
        if visited[*t] {
            out.push_str(&tn.variable);
        } else if tn.constant {
            visited[*t] = true;
            if tn.quoted {
                out.push('"');
                out.push_str(&tn.concept);
                out.push('"');
            } else {
                out.push_str(&tn.concept);
            }
            out.push_str(&fmt_alignment(tn.token_index));
        } else {
            emit(g, adj, *t, visited, edge_used, out);
        }
    }
    out.push(')');
}

struct Scanner<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn new(text: &'a str) -> Self {
        Self { text, pos: 0 }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, AmrError> {
        Err(AmrError::Parse {
            offset: self.pos,
            msg: msg.into(),
        })
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.bump();
        }
    }

    fn expect(&mut self, c: char) -> Result<(), AmrError> {
        self.skip_ws();
        match self.peek() {
            Some(got) if got == c => {
                self.bump();
                Ok(())
            }
            Some(got) => self.err(format!("expected `{c}`, found `{got}`")),
            None => self.err(format!("expected `{c}`, found end of input")),
        }
    }

    fn atom(&mut self) -> Result<&'a str, AmrError> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_whitespace() || matches!(c, '(' | ')' | '/' | '~' | '"') {
                break;
            }
            self.bump();
        }
        if self.pos == start {
            return self.err("expected atom");
        }
        Ok(&self.text[start..self.pos])
    }

    fn alignment(&mut self) -> Result<Option<usize>, AmrError> {
        if self.peek() != Some('~') {
            return Ok(None);
        }
        self.bump();
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        if self.pos == start {
            return self.err("expected token index after `~`");
        }
        let n: usize = self.text[start..self.pos]
            .parse()
            .map_err(|_| AmrError::Parse {
                offset: start,
                msg: "token index out of range".into(),
            })?;
        Ok(Some(n))
    }

    fn quoted_string(&mut self) -> Result<&'a str, AmrError> {
        debug_assert_eq!(self.peek(), Some('"'));
        self.bump();
        let start = self.pos;
        loop {
            match self.peek() {
                Some('"') => {
                    let s = &self.text[start..self.pos];
                    self.bump();
                    return Ok(s);
                }
                Some(_) => {
                    self.bump();
                }
                None => return self.err("unterminated string literal"),
            }
        }
    }
}

/// A relation target seen during the tree walk whose meaning (re-entrant
/// variable reference vs constant) is only known once all variables are
/// defined.
struct PendingAtom {
    text: String,
    quoted: bool,
    align: Option<usize>,
    offset: usize,
}

enum RawTarget {
    Var(String),
    Atom(PendingAtom),
}

struct RawEdge {
    source: String,
    role: String,
    inverted: bool,
    target: RawTarget,
}

struct Parser<'a> {
    sc: Scanner<'a>,
    nodes: Vec<AmrNode>,
    raw_edges: Vec<RawEdge>,
}

impl<'a> Parser<'a> {
    fn defined(&self, var: &str) -> bool {
        self.nodes.iter().any(|n| n.variable == var)
    }

    fn parse_node(&mut self) -> Result<String, AmrError> {
        self.sc.expect('(')?;
        self.sc.skip_ws();
        let var_offset = self.sc.pos;
        let variable = self.sc.atom()?.to_string();
        self.sc.expect('/')?;
        self.sc.skip_ws();
        if self.sc.peek().is_none() {
            return self.sc.err("expected concept, found end of input");
        }
        let concept = self.sc.atom()?.to_string();
        let align = self.sc.alignment()?;
        if self.defined(&variable) {
            return Err(AmrError::DuplicateDefinition {
                variable,
                offset: var_offset,
            });
        }
        self.nodes.push(AmrNode {
            variable: variable.clone(),
            concept,
            token_index: align,
            constant: false,
            quoted: false,
        });
        loop {
            self.sc.skip_ws();
            match self.sc.peek() {
                Some(')') => {
                    self.sc.bump();
                    return Ok(variable);
                }
                Some(':') => {
                    let role = self.sc.atom()?.to_string();
                    if role.len() < 2 {
                        return self.sc.err("empty role name");
                    }
                    self.parse_target(&variable, role)?;
                }
                Some(c) => return self.sc.err(format!("expected `:role` or `)`, found `{c}`")),
                None => return self.sc.err("expected `:role` or `)`, found end of input"),
            }
        }
    }

    fn parse_target(&mut self, source: &str, role: String) -> Result<(), AmrError> {
        // ":R-of X" denotes the R edge from X to the current node.
        let (role, inverted) = match role.strip_suffix("-of") {
            Some(base) if base.len() > 1 => (base.to_string(), true),
            _ => (role, false),
        };
        self.sc.skip_ws();
        let offset = self.sc.pos;
        match self.sc.peek() {
            Some('(') => {
                let child = self.parse_node()?;
                self.raw_edges.push(RawEdge {
                    source: source.to_string(),
                    role,
                    inverted,
                    target: RawTarget::Var(child),
                });
            }
            Some('"') => {
                let text = self.sc.quoted_string()?.to_string();
                let align = self.sc.alignment()?;
                self.raw_edges.push(RawEdge {
                    source: source.to_string(),
                    role,
                    inverted,
                    target: RawTarget::Atom(PendingAtom {
                        text,
                        quoted: true,
                        align,
                        offset,
                    }),
                });
            }
            Some(c) if c != ')' && c != ':' => {
                let text = self.sc.atom()?.to_string();
                let align = self.sc.alignment()?;
                self.raw_edges.push(RawEdge {
                    source: source.to_string(),
                    role,
                    inverted,
                    target: RawTarget::Atom(PendingAtom {
                        text,
                        quoted: false,
                        align,
                        offset,
                    }),
                });
            }
            _ => return self.sc.err(format!("role `{role}` has no target")),
        }
        Ok(())
    }
}

/// Parses one PENMAN expression into a rooted graph.
pub fn parse_penman(text: &str, edu_id: usize) -> Result<AmrGraph, AmrError> {
    let mut p = Parser {
        sc: Scanner::new(text),
        nodes: Vec::new(),
        raw_edges: Vec::new(),
    };
    p.sc.skip_ws();
    let root = p.parse_node()?;
    p.sc.skip_ws();
    if p.sc.peek().is_some() {
        return p.sc.err("trailing content after graph");
    }

    // Resolve bare atoms: a defined variable is a re-entrant reference,
    // anything else becomes a fresh constant node.
    let mut nodes = p.nodes;
    let mut edges = Vec::with_capacity(p.raw_edges.len());
    let mut const_counter = 0usize;
    for re in p.raw_edges {
        let target_var = match re.target {
            RawTarget::Var(v) => v,
            RawTarget::Atom(a) => {
                if !a.quoted && nodes.iter().any(|n| n.variable == a.text) {
                    if a.align.is_some() {
                        return Err(AmrError::Parse {
                            offset: a.offset,
                            msg: format!(
                                "alignment on reference to variable `{}`",
                                a.text
                            ),
                        });
                    }
                    a.text
                } else {
                    let mut var = format!("_k{const_counter}");
                    const_counter += 1;
                    while nodes.iter().any(|n| n.variable == var) {
                        var = format!("_k{const_counter}");
                        const_counter += 1;
                    }
                    nodes.push(AmrNode {
                        variable: var.clone(),
                        concept: a.text,
                        token_index: a.align,
                        constant: true,
                        quoted: a.quoted,
                    });
                    var
                }
            }
        };
        let (source, target) = if re.inverted {
            (target_var, re.source)
        } else {
            (re.source, target_var)
        };
        edges.push(AmrEdge {
            source,
            target,
            role: re.role,
        });
    }

    let g = AmrGraph {
        root,
        nodes,
        edges,
        edu_id,
    };
    g.walk()?;
    Ok(g)
}

/// One graph per non-comment line, EDU ids assigned in file order.
/// Lines starting with '#' are comments; blank lines are skipped.
pub fn read_amr_file(path: &Path) -> Result<Vec<AmrGraph>, AmrError> {
    let text = std::fs::read_to_string(path)?;
    let mut graphs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let edu_id = graphs.len();
        let g = parse_penman(trimmed, edu_id).map_err(|e| AmrError::InFile {
            path: path.display().to_string(),
            line: lineno + 1,
            source: Box::new(e),
        })?;
        graphs.push(g);
    }
    Ok(graphs)
}

pub fn write_amr_file(path: &Path, graphs: &[AmrGraph]) -> Result<(), AmrError> {
    let mut out = String::new();
    for g in graphs {
        out.push_str(&serialize_penman(g)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

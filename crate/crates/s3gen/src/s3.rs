//! Unified semantic discourse graphs.
//!
//! One graph per document, assembled from the discourse tree and the
//! per-EDU semantic graphs. Three node tiers: text spans (internal
//! discourse nodes), EDUs (leaves), and word-level nodes (aligned
//! semantic nodes, dummy concept nodes, and "rest words" for tokens no
//! semantic node claims). EDU nodes link to their word nodes with the
//! dedicated "RST-AMR" label; dummy nodes hang off the semantic edges
//! alone, so a single-node dummy-only graph stays isolated (tolerated,
//! and cleaned up by pruning's reachability cascade).

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amr::{AmrError, AmrGraph};
use crate::rst::{enumerate_spans, validate_against, Document, RstError, RstTree};

/// Label on every EDU-to-word link.
pub const RST_AMR_LABEL: &str = "RST-AMR";
/// Label on diagonal (self-join) adjacency entries.
pub const SELF_LABEL: &str = "self";
/// Prefix for labels of mirrored edges in the adjacency view.
pub const REV_PREFIX: &str = "rev:";

#[derive(Debug, Error)]
pub enum S3Error {
    #[error("document has {n_edus} EDUs but {n_amrs} semantic graphs")]
    AmrCount { n_edus: usize, n_amrs: usize },
    #[error("EDU {edu}: alignment to token {token} outside 0..{len}")]
    AlignmentOutOfRange { edu: usize, token: usize, len: usize },
    #[error("node {node} (non-dummy) is disconnected from the root")]
    Disconnected { node: usize },
    #[error("graph record is missing its root node {root}")]
    RootMissing { root: usize },
    #[error("duplicate node id {0} in graph record")]
    DuplicateNodeId(usize),
    #[error("edge references unknown node id {0}")]
    UnknownNodeId(usize),
    #[error(transparent)]
    Rst(#[from] RstError),
    #[error(transparent)]
    Amr(#[from] AmrError),
    #[error("malformed record: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeType {
    #[serde(rename = "A_TextSpan")]
    TextSpan,
    #[serde(rename = "B_Edu")]
    Edu,
    #[serde(rename = "C_Word")]
    Word,
    #[serde(rename = "C_Dummy")]
    Dummy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct S3Node {
    pub id: usize,
    pub ntype: NodeType,
    pub label: String,
    pub edu_id: Option<usize>,
    /// Global token position in the document (word nodes only).
    pub token_index: Option<usize>,
    /// Word nodes: true when claimed by a semantic-graph alignment,
    /// false for rest words.
    pub amr_word: bool,
    /// Inclusive EDU range (span and EDU nodes); fixed at build time so
    /// pruned graphs keep well-defined ranges.
    pub edu_range: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeOrigin {
    #[serde(rename = "RST")]
    Rst,
    #[serde(rename = "AMR")]
    Amr,
    #[serde(rename = "RST_AMR")]
    RstAmr,
    #[serde(rename = "REVERSE")]
    Reverse,
    #[serde(rename = "SELF")]
    SelfLoop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct S3Edge {
    pub src: usize,
    pub dst: usize,
    pub label: String,
    pub origin: EdgeOrigin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct S3Graph {
    pub doc_id: String,
    pub nodes: Vec<S3Node>,
    /// Base edges only; mirrored and self-join entries are synthesized
    /// by [`S3Graph::to_adjacency`].
    pub edges: Vec<S3Edge>,
    pub root: usize,
}

impl S3Graph {
    pub fn id_to_row(&self) -> HashMap<usize, usize> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(row, n)| (n.id, row))
            .collect()
    }

    pub fn node_by_id(&self, id: usize) -> Option<&S3Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Row-indexed symmetric adjacency with labels. Diagonal entries are
    /// always set. Off-diagonal label resolution: the smallest base
    /// label among parallel edges wins; a pair covered only in the other
    /// direction gets the mirrored label `rev:` + base.
    pub fn to_adjacency(&self) -> AdjacencyView {
        let n = self.nodes.len();
        let row_of = self.id_to_row();
        let mut m = vec![0u8; n * n];
        // Base labels per ordered pair, then resolve.
        let mut base: HashMap<(usize, usize), String> = HashMap::new();
        for e in &self.edges {
            let i = row_of[&e.src];
            let j = row_of[&e.dst];
            m[i * n + j] = 1;
            m[j * n + i] = 1;
            base.entry((i, j))
                .and_modify(|l| {
                    if e.label < *l {
                        *l = e.label.clone();
                    }
                })
                .or_insert_with(|| e.label.clone());
        }
        for i in 0..n {
            m[i * n + i] = 1;
        }
        let mut labels: Vec<String> = Vec::new();
        let mut label_id: HashMap<String, usize> = HashMap::new();
        let mut edge_label_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut neighbors: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        let intern = |labels: &mut Vec<String>,
                      label_id: &mut HashMap<String, usize>,
                      s: String| {
            *label_id.entry(s.clone()).or_insert_with(|| {
                labels.push(s);
                labels.len() - 1
            })
        };
        for i in 0..n {
            for j in 0..n {
                if m[i * n + j] == 0 {
                    continue;
                }
                let label = if i == j {
                    SELF_LABEL.to_string()
                } else if let Some(l) = base.get(&(i, j)) {
                    l.clone()
                } else {
                    let l = base
                        .get(&(j, i))
                        .expect("symmetric entry implies a base edge in one direction");
                    format!("{REV_PREFIX}{l}")
                };
                let id = intern(&mut labels, &mut label_id, label);
                edge_label_index.insert((i, j), id);
                neighbors[i].push((j, id));
            }
        }
        AdjacencyView {
            n,
            m,
            labels,
            edge_label_index,
            neighbors,
        }
    }

    /// Fractions of the five node categories; they sum to 1.
    pub fn node_stats(&self) -> NodeStats {
        let mut c = NodeStats::default();
        for node in &self.nodes {
            match node.ntype {
                NodeType::TextSpan => c.text_span += 1.0,
                NodeType::Edu => c.edu += 1.0,
                NodeType::Word if node.amr_word => c.amr_word += 1.0,
                NodeType::Word => c.rest_word += 1.0,
                NodeType::Dummy => c.dummy += 1.0,
            }
        }
        let total = self.nodes.len() as f64;
        c.text_span /= total;
        c.edu /= total;
        c.amr_word /= total;
        c.rest_word /= total;
        c.dummy /= total;
        c
    }

    /// Node ids reachable from the root, ignoring edge direction.
    pub fn reachable_from_root(&self) -> HashSet<usize> {
        let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
        for e in &self.edges {
            adj.entry(e.src).or_default().push(e.dst);
            adj.entry(e.dst).or_default().push(e.src);
        }
        let mut seen = HashSet::new();
        let mut stack = vec![self.root];
        seen.insert(self.root);
        while let Some(i) = stack.pop() {
            for &j in adj.get(&i).into_iter().flatten() {
                if seen.insert(j) {
                    stack.push(j);
                }
            }
        }
        seen
    }

    /// Keeps the given node ids (which must include the root), drops
    /// edges touching removed nodes, then cascades: nodes that lost
    /// their connection to the root are removed too. Nodes that never
    /// had one (isolated dummies) are exempt from the cascade. Original
    /// ids and relative order are preserved.
    pub fn retain_nodes(&self, keep: &HashSet<usize>) -> S3Graph {
        assert!(keep.contains(&self.root), "root must be kept");
        let originally_reachable = self.reachable_from_root();
        let mut g = S3Graph {
            doc_id: self.doc_id.clone(),
            nodes: self
                .nodes
                .iter()
                .filter(|n| keep.contains(&n.id))
                .cloned()
                .collect(),
            edges: self
                .edges
                .iter()
                .filter(|e| keep.contains(&e.src) && keep.contains(&e.dst))
                .cloned()
                .collect(),
            root: self.root,
        };
        let reach = g.reachable_from_root();
        g.nodes
            .retain(|n| reach.contains(&n.id) || !originally_reachable.contains(&n.id));
        let alive: HashSet<usize> = g.nodes.iter().map(|n| n.id).collect();
        g.edges
            .retain(|e| alive.contains(&e.src) && alive.contains(&e.dst));
        g
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NodeStats {
    pub text_span: f64,
    pub edu: f64,
    pub amr_word: f64,
    pub rest_word: f64,
    pub dummy: f64,
}

impl NodeStats {
    pub fn sum(&self) -> f64 {
        self.text_span + self.edu + self.amr_word + self.rest_word + self.dummy
    }
}

/// Symmetric 0/1 adjacency over node rows with interned edge labels.
#[derive(Debug, Clone)]
pub struct AdjacencyView {
    pub n: usize,
    /// Row-major n*n entries in {0,1}; diagonal all ones.
    pub m: Vec<u8>,
    /// Interned label strings; ids index this list.
    pub labels: Vec<String>,
    /// (row i, row j) → label id, for every set entry.
    pub edge_label_index: HashMap<(usize, usize), usize>,
    /// Per row: ascending (neighbor row, label id), self included.
    pub neighbors: Vec<Vec<(usize, usize)>>,
}

impl AdjacencyView {
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.m[i * self.n + j]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn off_diagonal_ones(&self) -> usize {
        let mut c = 0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j && self.get(i, j) == 1 {
                    c += 1;
                }
            }
        }
        c
    }
}

/// Single-node graphs with this concept mark EDUs whose semantic parse
/// failed; they contribute no nodes, and every token becomes a rest word.
pub const EMPTY_AMR_CONCEPT: &str = "amr-empty";

fn is_empty_amr(g: &AmrGraph) -> bool {
    g.nodes.len() == 1 && g.nodes[0].concept == EMPTY_AMR_CONCEPT
}

/// Assembles the document graph. Node ids: span nodes in post-order,
/// then EDU nodes by id, then each EDU's semantic nodes in canonical
/// serialization order, then rest words by global token position.
pub fn build_s3(d: &Document, t: &RstTree, amrs: &[AmrGraph]) -> Result<S3Graph, S3Error> {
    validate_against(t, d)?;
    if amrs.len() != d.edus.len() {
        return Err(S3Error::AmrCount {
            n_edus: d.edus.len(),
            n_amrs: amrs.len(),
        });
    }
    for (edu, g) in d.edus.iter().zip(amrs.iter()) {
        for node in &g.nodes {
            if let Some(t) = node.token_index {
                if t >= edu.tokens.len() {
                    return Err(S3Error::AlignmentOutOfRange {
                        edu: edu.id,
                        token: t,
                        len: edu.tokens.len(),
                    });
                }
            }
        }
        // Surfaces duplicate token coverage within one EDU.
        g.word_nodes()?;
    }

    let spans = enumerate_spans(t);
    let n_spans = spans.len();
    let mut nodes: Vec<S3Node> = Vec::new();
    let mut edges: Vec<S3Edge> = Vec::new();

    for s in &spans {
        nodes.push(S3Node {
            id: s.span_id,
            ntype: NodeType::TextSpan,
            label: s.relation.clone(),
            edu_id: None,
            token_index: None,
            amr_word: false,
            edu_range: Some(s.edu_range),
        });
    }
    for edu in &d.edus {
        nodes.push(S3Node {
            id: n_spans + edu.id,
            ntype: NodeType::Edu,
            label: format!("e{}", edu.id),
            edu_id: Some(edu.id),
            token_index: None,
            amr_word: false,
            edu_range: Some((edu.id, edu.id)),
        });
    }

    // Discourse edges, parents in post-order, left child before right.
    // Labels carry the parent's relation and the child's nuclearity.
    let mut span_counter = 0usize;
    emit_rst_edges(t, n_spans, &mut span_counter, &mut edges);

    // Semantic nodes and edges per EDU, plus EDU→word links.
    let mut next_id = n_spans + d.edus.len();
    let mut covered: Vec<Vec<bool>> = d.edus.iter().map(|e| vec![false; e.tokens.len()]).collect();
    for (edu, g) in d.edus.iter().zip(amrs.iter()) {
        if is_empty_amr(g) {
            continue;
        }
        let b_id = n_spans + edu.id;
        let offset = d.edu_token_offset(edu.id);
        let mut var_to_id: HashMap<&str, usize> = HashMap::new();
        let order = g.canonical_order()?;
        for &ni in &order {
            let an = &g.nodes[ni];
            let id = next_id;
            next_id += 1;
            var_to_id.insert(an.variable.as_str(), id);
            match an.token_index {
                Some(local) => {
                    covered[edu.id][local] = true;
                    nodes.push(S3Node {
                        id,
                        ntype: NodeType::Word,
                        label: edu.tokens[local].clone(),
                        edu_id: Some(edu.id),
                        token_index: Some(offset + local),
                        amr_word: true,
                        edu_range: None,
                    });
                }
                None => {
                    nodes.push(S3Node {
                        id,
                        ntype: NodeType::Dummy,
                        label: an.concept.clone(),
                        edu_id: Some(edu.id),
                        token_index: None,
                        amr_word: false,
                        edu_range: None,
                    });
                }
            }
        }
        for e in &g.edges {
            edges.push(S3Edge {
                src: var_to_id[e.source.as_str()],
                dst: var_to_id[e.target.as_str()],
                label: e.role.clone(),
                origin: EdgeOrigin::Amr,
            });
        }
        // EDU→word links in token order.
        for (local, var) in g.word_nodes()? {
            let _ = local;
            edges.push(S3Edge {
                src: b_id,
                dst: var_to_id[var],
                label: RST_AMR_LABEL.to_string(),
                origin: EdgeOrigin::RstAmr,
            });
        }
    }

    // Rest words: tokens no semantic node claimed, by global position.
    for edu in &d.edus {
        let b_id = n_spans + edu.id;
        let offset = d.edu_token_offset(edu.id);
        for (local, tok) in edu.tokens.iter().enumerate() {
            if covered[edu.id][local] {
                continue;
            }
            let id = next_id;
            next_id += 1;
            nodes.push(S3Node {
                id,
                ntype: NodeType::Word,
                label: tok.clone(),
                edu_id: Some(edu.id),
                token_index: Some(offset + local),
                amr_word: false,
                edu_range: None,
            });
            edges.push(S3Edge {
                src: b_id,
                dst: id,
                label: RST_AMR_LABEL.to_string(),
                origin: EdgeOrigin::RstAmr,
            });
        }
    }

    let root = if n_spans > 0 { n_spans - 1 } else { n_spans };
    let g = S3Graph {
        doc_id: d.id.clone(),
        nodes,
        edges,
        root,
    };

    // Everything except dummy-only semantic clusters must reach the root.
    let reach = g.reachable_from_root();
    for n in &g.nodes {
        if !reach.contains(&n.id) && n.ntype != NodeType::Dummy {
            return Err(S3Error::Disconnected { node: n.id });
        }
    }
    Ok(g)
}

/// Post-order edge emission returning each subtree's node id.
fn emit_rst_edges(
    t: &RstTree,
    n_spans: usize,
    counter: &mut usize,
    edges: &mut Vec<S3Edge>,
) -> usize {
    match t {
        RstTree::Leaf { edu_id } => n_spans + edu_id,
        RstTree::Internal {
            relation,
            nuclearity,
            left,
            right,
        } => {
            let left_id = emit_rst_edges(left, n_spans, counter, edges);
            let right_id = emit_rst_edges(right, n_spans, counter, edges);
            let my_id = *counter;
            *counter += 1;
            edges.push(S3Edge {
                src: my_id,
                dst: left_id,
                label: format!("{relation}/{}", nuclearity.0.letter()),
                origin: EdgeOrigin::Rst,
            });
            edges.push(S3Edge {
                src: my_id,
                dst: right_id,
                label: format!("{relation}/{}", nuclearity.1.letter()),
                origin: EdgeOrigin::Rst,
            });
            my_id
        }
    }
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: usize,
    ntype: NodeType,
    label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    edu: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    token: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    amr: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    range: Option<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    src: usize,
    dst: usize,
    label: String,
    origin: EdgeOrigin,
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    doc_id: String,
    root: usize,
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
}

fn graph_to_record(g: &S3Graph) -> GraphRecord {
    GraphRecord {
        doc_id: g.doc_id.clone(),
        root: g.root,
        nodes: g
            .nodes
            .iter()
            .map(|n| NodeRecord {
                id: n.id,
                ntype: n.ntype,
                label: n.label.clone(),
                edu: n.edu_id,
                token: n.token_index,
                amr: (n.ntype == NodeType::Word).then_some(n.amr_word),
                range: n.edu_range,
            })
            .collect(),
        edges: g
            .edges
            .iter()
            .map(|e| EdgeRecord {
                src: e.src,
                dst: e.dst,
                label: e.label.clone(),
                origin: e.origin,
            })
            .collect(),
    }
}

fn record_to_graph(rec: GraphRecord) -> Result<S3Graph, S3Error> {
    let mut seen = HashSet::new();
    for n in &rec.nodes {
        if !seen.insert(n.id) {
            return Err(S3Error::DuplicateNodeId(n.id));
        }
    }
    if !seen.contains(&rec.root) {
        return Err(S3Error::RootMissing { root: rec.root });
    }
    for e in &rec.edges {
        if !seen.contains(&e.src) {
            return Err(S3Error::UnknownNodeId(e.src));
        }
        if !seen.contains(&e.dst) {
            return Err(S3Error::UnknownNodeId(e.dst));
        }
    }
    Ok(S3Graph {
        doc_id: rec.doc_id,
        root: rec.root,
        nodes: rec
            .nodes
            .into_iter()
            .map(|n| S3Node {
                id: n.id,
                ntype: n.ntype,
                label: n.label,
                edu_id: n.edu,
                token_index: n.token,
                amr_word: n.amr.unwrap_or(false),
                edu_range: n.range,
            })
            .collect(),
        edges: rec
            .edges
            .into_iter()
            .map(|e| S3Edge {
                src: e.src,
                dst: e.dst,
                label: e.label,
                origin: e.origin,
            })
            .collect(),
    })
}

/// One graph record per line.
pub fn write_s3_file(path: &Path, graphs: &[S3Graph]) -> Result<(), S3Error> {
    let mut out = String::new();
    for g in graphs {
        out.push_str(&serde_json::to_string(&graph_to_record(g))?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_s3_file(path: &Path) -> Result<Vec<S3Graph>, S3Error> {
    let text = std::fs::read_to_string(path)?;
    let mut graphs = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: GraphRecord = serde_json::from_str(line)?;
        graphs.push(record_to_graph(rec)?);
    }
    Ok(graphs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amr::parse_penman;
    use crate::rst::{parse_rst, Edu};

    const BOY: &str = "(d / desire-01~0 :ARG0 (b / boy~1) :ARG1 (b2 / believe-01~3 :ARG0 (g / girl~2) :ARG1 b))";

    /// Two EDUs: a fully aligned 4-token EDU and a 3-token EDU whose
    /// semantic graph is a lone dummy node.
    fn oracle_inputs() -> (Document, RstTree, Vec<AmrGraph>) {
        let d = Document {
            id: "doc0".into(),
            edus: vec![
                Edu {
                    id: 0,
                    text: "desires boy girl believes".into(),
                    tokens: ["desires", "boy", "girl", "believes"]
                        .iter()
                        .map(|s| s.to_string())
                        .collect(),
                },
                Edu {
                    id: 1,
                    text: "with no parse".into(),
                    tokens: ["with", "no", "parse"].iter().map(|s| s.to_string()).collect(),
                },
            ],
            headline: "boy desires".into(),
            headline_tokens: vec!["boy".into(), "desires".into()],
        };
        let t = parse_rst(
            r#"{"relation":"Elaborate","nuclearity":["N","S"],"children":[{"edu":0},{"edu":1}]}"#,
        )
        .unwrap();
        let amrs = vec![
            parse_penman(BOY, 0).unwrap(),
            parse_penman("(z / thing)", 1).unwrap(),
        ];
        (d, t, amrs)
    }

    #[test]
    fn oracle_node_and_edge_counts() {
        let (d, t, amrs) = oracle_inputs();
        let g = build_s3(&d, &t, &amrs).unwrap();
        assert_eq!(g.nodes.len(), 11);
        assert_eq!(g.edges.len(), 13);
        let count = |nt: NodeType| g.nodes.iter().filter(|n| n.ntype == nt).count();
        assert_eq!(count(NodeType::TextSpan), 1);
        assert_eq!(count(NodeType::Edu), 2);
        assert_eq!(count(NodeType::Word), 7);
        assert_eq!(count(NodeType::Dummy), 1);
        let amr_words = g.nodes.iter().filter(|n| n.ntype == NodeType::Word && n.amr_word).count();
        assert_eq!(amr_words, 4);
        let by_origin = |o: EdgeOrigin| g.edges.iter().filter(|e| e.origin == o).count();
        assert_eq!(by_origin(EdgeOrigin::Rst), 2);
        assert_eq!(by_origin(EdgeOrigin::Amr), 4);
        assert_eq!(by_origin(EdgeOrigin::RstAmr), 7);
        assert_eq!(g.root, 0);
    }

    #[test]
    fn oracle_node_id_layout() {
        let (d, t, amrs) = oracle_inputs();
        let g = build_s3(&d, &t, &amrs).unwrap();
        // Span 0, EDUs 1-2, EDU0 semantic nodes 3-6 in canonical order
        // (d, b, b2, g), dummy 7, rest words 8-10.
        assert_eq!(g.nodes[0].ntype, NodeType::TextSpan);
        assert_eq!(g.nodes[0].label, "Elaborate");
        assert_eq!(g.nodes[0].edu_range, Some((0, 1)));
        assert_eq!(g.nodes[1].label, "e0");
        assert_eq!(g.nodes[2].label, "e1");
        let labels: Vec<&str> = g.nodes[3..7].iter().map(|n| n.label.as_str()).collect();
        assert_eq!(labels, vec!["desires", "boy", "believes", "girl"]);
        let globals: Vec<usize> = g.nodes[3..7].iter().map(|n| n.token_index.unwrap()).collect();
        assert_eq!(globals, vec![0, 1, 3, 2]);
        assert_eq!(g.nodes[7].ntype, NodeType::Dummy);
        assert_eq!(g.nodes[7].label, "thing");
        let rest: Vec<usize> = g.nodes[8..].iter().map(|n| n.token_index.unwrap()).collect();
        assert_eq!(rest, vec![4, 5, 6]);
    }

    #[test]
    fn oracle_rst_edge_labels() {
        let (d, t, amrs) = oracle_inputs();
        let g = build_s3(&d, &t, &amrs).unwrap();
        let rst: Vec<&S3Edge> = g.edges.iter().filter(|e| e.origin == EdgeOrigin::Rst).collect();
        assert_eq!(rst[0].label, "Elaborate/N");
        assert_eq!((rst[0].src, rst[0].dst), (0, 1));
        assert_eq!(rst[1].label, "Elaborate/S");
        assert_eq!((rst[1].src, rst[1].dst), (0, 2));
    }

    #[test]
    fn oracle_adjacency_counts_and_symmetry() {
        let (d, t, amrs) = oracle_inputs();
        let g = build_s3(&d, &t, &amrs).unwrap();
        let adj = g.to_adjacency();
        assert_eq!(adj.n, 11);
        assert!(adj.is_symmetric());
        let diag: usize = (0..11).map(|i| adj.get(i, i) as usize).sum();
        assert_eq!(diag, 11);
        assert_eq!(adj.off_diagonal_ones(), 26);
        assert_eq!(adj.labels.iter().filter(|l| l.as_str() == "self").count(), 1);
        // Every set pair has a label.
        for i in 0..11 {
            for j in 0..11 {
                assert_eq!(adj.get(i, j) == 1, adj.edge_label_index.contains_key(&(i, j)));
            }
        }
    }

    #[test]
    fn oracle_reverse_labels() {
        let (d, t, amrs) = oracle_inputs();
        let g = build_s3(&d, &t, &amrs).unwrap();
        let adj = g.to_adjacency();
        // Base edge 0→1 "Elaborate/N"; mirrored 1→0 must be rev-prefixed.
        let fwd = adj.edge_label_index[&(0, 1)];
        let bwd = adj.edge_label_index[&(1, 0)];
        assert_eq!(adj.labels[fwd], "Elaborate/N");
        assert_eq!(adj.labels[bwd], "rev:Elaborate/N");
    }

    #[test]
    fn oracle_node_stats() {
        let (d, t, amrs) = oracle_inputs();
        let g = build_s3(&d, &t, &amrs).unwrap();
        let s = g.node_stats();
        assert!((s.text_span - 1.0 / 11.0).abs() < 1e-12);
        assert!((s.edu - 2.0 / 11.0).abs() < 1e-12);
        assert!((s.amr_word - 4.0 / 11.0).abs() < 1e-12);
        assert!((s.rest_word - 3.0 / 11.0).abs() < 1e-12);
        assert!((s.dummy - 1.0 / 11.0).abs() < 1e-12);
        assert!((s.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_edu_full_coverage_has_no_rest_words() {
        let d = Document {
            id: "doc1".into(),
            edus: vec![Edu {
                id: 0,
                text: "a b".into(),
                tokens: vec!["a".into(), "b".into()],
            }],
            headline: "h".into(),
            headline_tokens: vec!["h".into()],
        };
        let t = parse_rst(r#"{"edu":0}"#).unwrap();
        let amrs = vec![parse_penman("(x / alpha~0 :ARG0 (y / beta~1))", 0).unwrap()];
        let g = build_s3(&d, &t, &amrs).unwrap();
        assert_eq!(g.nodes.len(), 1 + 2);
        assert!(g.nodes.iter().all(|n| n.ntype != NodeType::Dummy));
        assert!(!g.nodes.iter().any(|n| n.ntype == NodeType::Word && !n.amr_word));
        assert_eq!(g.root, 0);
        assert_eq!(g.nodes[0].ntype, NodeType::Edu);
    }

    #[test]
    fn empty_amr_placeholder_yields_all_rest_words() {
        let d = Document {
            id: "doc2".into(),
            edus: vec![Edu {
                id: 0,
                text: "a b c".into(),
                tokens: vec!["a".into(), "b".into(), "c".into()],
            }],
            headline: "h".into(),
            headline_tokens: vec!["h".into()],
        };
        let t = parse_rst(r#"{"edu":0}"#).unwrap();
        let amrs = vec![parse_penman("(x / amr-empty)", 0).unwrap()];
        let g = build_s3(&d, &t, &amrs).unwrap();
        assert_eq!(g.nodes.len(), 4);
        assert!(g.nodes.iter().all(|n| n.ntype != NodeType::Dummy));
        let rest = g.nodes.iter().filter(|n| n.ntype == NodeType::Word && !n.amr_word).count();
        assert_eq!(rest, 3);
    }

    #[test]
    fn alignment_out_of_range_rejected() {
        let d = Document {
            id: "doc3".into(),
            edus: vec![Edu {
                id: 0,
                text: "a".into(),
                tokens: vec!["a".into()],
            }],
            headline: "h".into(),
            headline_tokens: vec!["h".into()],
        };
        let t = parse_rst(r#"{"edu":0}"#).unwrap();
        let amrs = vec![parse_penman("(x / alpha~5)", 0).unwrap()];
        assert!(matches!(
            build_s3(&d, &t, &amrs),
            Err(S3Error::AlignmentOutOfRange { token: 5, .. })
        ));
    }

    #[test]
    fn amr_count_mismatch_rejected() {
        let (d, t, mut amrs) = oracle_inputs();
        amrs.pop();
        assert!(matches!(
            build_s3(&d, &t, &amrs),
            Err(S3Error::AmrCount { n_edus: 2, n_amrs: 1 })
        ));
    }

    #[test]
    fn retain_nodes_cascades_unreachable() {
        let (d, t, amrs) = oracle_inputs();
        let g = build_s3(&d, &t, &amrs).unwrap();
        // Dropping EDU node 2 strands rest words 8..10, which cascade
        // away. Dummy 7 was never root-reachable, so it is exempt.
        let keep: HashSet<usize> = g.nodes.iter().map(|n| n.id).filter(|&id| id != 2).collect();
        let pruned = g.retain_nodes(&keep);
        let ids: Vec<usize> = pruned.nodes.iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![0, 1, 3, 4, 5, 6, 7]);
        assert!(pruned.edges.iter().all(|e| e.src != 2 && e.dst != 2));
    }

    #[test]
    fn s3_file_round_trip() {
        let (d, t, amrs) = oracle_inputs();
        let g = build_s3(&d, &t, &amrs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("graphs.s3");
        write_s3_file(&path, &[g.clone()]).unwrap();
        let back = read_s3_file(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0], g);
    }

    #[test]
    fn synthetic_graphs_satisfy_structural_invariants() {
        let docs = crate::synth::generate_docs(&crate::synth::SynthSpec {
            n_docs: 40,
            seed: 99,
            ..crate::synth::SynthSpec::default()
        })
        .unwrap();
        for (d, t, amrs) in &docs {
            let g = build_s3(d, t, amrs).unwrap();
            let n_edus = d.edus.len();
            let a = g.nodes.iter().filter(|n| n.ntype == NodeType::TextSpan).count();
            let b = g.nodes.iter().filter(|n| n.ntype == NodeType::Edu).count();
            assert_eq!(a, n_edus - 1);
            assert_eq!(b, n_edus);
            // Token conservation: every document token owned by exactly
            // one word node.
            let owned: Vec<usize> = g.nodes.iter().filter_map(|n| n.token_index).collect();
            let unique: HashSet<usize> = owned.iter().copied().collect();
            assert_eq!(owned.len(), unique.len());
            assert_eq!(owned.len(), d.total_tokens());
            let adj = g.to_adjacency();
            assert!(adj.is_symmetric());
            for i in 0..adj.n {
                assert_eq!(adj.get(i, i), 1);
            }
            assert_eq!(adj.off_diagonal_ones() % 2, 0);
            // Determinism of construction.
            let g2 = build_s3(d, t, amrs).unwrap();
            assert_eq!(g, g2);
        }
    }

    #[test]
    fn token_conservation() {
        let (d, t, amrs) = oracle_inputs();
        let g = build_s3(&d, &t, &amrs).unwrap();
        let word_tokens: HashSet<usize> =
            g.nodes.iter().filter_map(|n| n.token_index).collect();
        assert_eq!(word_tokens.len(), d.total_tokens());
        assert_eq!(
            g.nodes.iter().filter(|n| n.token_index.is_some()).count(),
            d.total_tokens()
        );
    }
}

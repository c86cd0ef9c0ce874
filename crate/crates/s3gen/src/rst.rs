//! Discourse trees over pre-segmented documents.
//!
//! A document is a sequence of elementary discourse units (EDUs); its
//! discourse tree is strictly binary with leaves covering EDUs 0..n-1
//! left to right. Internal nodes carry a rhetorical relation and a
//! nuclearity pair; (S,S) is not a valid pair. Multinuclear relations
//! must be pre-binarized by the producer.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RstError {
    #[error("invalid tree node at {path}: {msg}")]
    Validation { path: String, msg: String },
    #[error("tree has {tree_leaves} leaves but document has {doc_edus} EDUs")]
    LeafCount { tree_leaves: usize, doc_edus: usize },
    #[error("{path}: line {line}: {msg}")]
    Doc {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nuclearity {
    Nucleus,
    Satellite,
}

impl Nuclearity {
    pub fn letter(self) -> &'static str {
        match self {
            Nuclearity::Nucleus => "N",
            Nuclearity::Satellite => "S",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RstTree {
    Leaf {
        edu_id: usize,
    },
    Internal {
        relation: String,
        nuclearity: (Nuclearity, Nuclearity),
        left: Box<RstTree>,
        right: Box<RstTree>,
    },
}

impl RstTree {
    pub fn leaf_count(&self) -> usize {
        match self {
            RstTree::Leaf { .. } => 1,
            RstTree::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    /// Leaf EDU ids in left-to-right order.
    pub fn leaf_ids(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            RstTree::Leaf { edu_id } => out.push(*edu_id),
            RstTree::Internal { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    /// Inclusive EDU range covered by this subtree.
    pub fn edu_range(&self) -> (usize, usize) {
        match self {
            RstTree::Leaf { edu_id } => (*edu_id, *edu_id),
            RstTree::Internal { left, right, .. } => {
                (left.edu_range().0, right.edu_range().1)
            }
        }
    }
}

/// One internal node of the tree, listed post-order.
#[derive(Debug, Clone, PartialEq)]
pub struct Span {
    /// Post-order index among internal nodes.
    pub span_id: usize,
    /// Inclusive range of EDU ids under this node.
    pub edu_range: (usize, usize),
    pub relation: String,
    pub nuclearity: (Nuclearity, Nuclearity),
}

/// Internal nodes in post-order (children before parents, left before
/// right); the root span is last. A leaf tree yields no spans.
pub fn enumerate_spans(t: &RstTree) -> Vec<Span> {
    let mut out = Vec::new();
    walk_spans(t, &mut out);
    out
}

fn walk_spans(t: &RstTree, out: &mut Vec<Span>) -> (usize, usize) {
    match t {
        RstTree::Leaf { edu_id } => (*edu_id, *edu_id),
        RstTree::Internal {
            relation,
            nuclearity,
            left,
            right,
        } => {
            let lr = walk_spans(left, out);
            let rr = walk_spans(right, out);
            let range = (lr.0, rr.1);
            out.push(Span {
                span_id: out.len(),
                edu_range: range,
                relation: relation.clone(),
                nuclearity: *nuclearity,
            });
            range
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edu {
    pub id: usize,
    pub text: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub edus: Vec<Edu>,
    pub headline: String,
    pub headline_tokens: Vec<String>,
}

impl Document {
    pub fn total_tokens(&self) -> usize {
        self.edus.iter().map(|e| e.tokens.len()).sum()
    }

    /// Global token position of the first token of the given EDU.
    pub fn edu_token_offset(&self, edu_id: usize) -> usize {
        self.edus[..edu_id].iter().map(|e| e.tokens.len()).sum()
    }
}

/// Parses the recursive record format: internal nodes are
/// {"relation", "nuclearity": ["N"|"S", "N"|"S"], "children": [a, b]},
/// leaves are {"edu": id}. Leaf ids must be exactly 0..n-1 in order.
pub fn parse_rst(text: &str) -> Result<RstTree, RstError> {
    let value: Value = serde_json::from_str(text)?;
    let tree = parse_node(&value, "root")?;
    let leaves = tree.leaf_ids();
    let mut seen = BTreeSet::new();
    for (pos, &id) in leaves.iter().enumerate() {
        if !seen.insert(id) {
            return Err(RstError::Validation {
                path: "root".into(),
                msg: format!("duplicate EDU id {id} among leaves"),
            });
        }
        if id != pos {
            return Err(RstError::Validation {
                path: "root".into(),
                msg: format!(
                    "leaf EDU ids must be 0..{} in left-to-right order, found {id} at position {pos}",
                    leaves.len() - 1
                ),
            });
        }
    }
    Ok(tree)
}

fn parse_node(v: &Value, path: &str) -> Result<RstTree, RstError> {
    let obj = v.as_object().ok_or_else(|| RstError::Validation {
        path: path.to_string(),
        msg: "expected an object".into(),
    })?;
    if let Some(edu) = obj.get("edu") {
        let edu_id = edu.as_u64().ok_or_else(|| RstError::Validation {
            path: path.to_string(),
            msg: "\"edu\" must be a nonnegative integer".into(),
        })? as usize;
        return Ok(RstTree::Leaf { edu_id });
    }
    let relation = obj
        .get("relation")
        .and_then(Value::as_str)
        .ok_or_else(|| RstError::Validation {
            path: path.to_string(),
            msg: "internal node needs a string \"relation\"".into(),
        })?;
    if relation.is_empty() {
        return Err(RstError::Validation {
            path: path.to_string(),
            msg: "relation label must be nonempty".into(),
        });
    }
    let nuc = obj
        .get("nuclearity")
        .and_then(Value::as_array)
        .ok_or_else(|| RstError::Validation {
            path: path.to_string(),
            msg: "internal node needs \"nuclearity\": [\"N\"|\"S\", \"N\"|\"S\"]".into(),
        })?;
    if nuc.len() != 2 {
        return Err(RstError::Validation {
            path: path.to_string(),
            msg: format!("nuclearity must have exactly 2 entries, got {}", nuc.len()),
        });
    }
    let parse_nuc = |v: &Value| match v.as_str() {
        Some("N") => Ok(Nuclearity::Nucleus),
        Some("S") => Ok(Nuclearity::Satellite),
        _ => Err(RstError::Validation {
            path: path.to_string(),
            msg: format!("nuclearity entries must be \"N\" or \"S\", got {v}"),
        }),
    };
    let nuclearity = (parse_nuc(&nuc[0])?, parse_nuc(&nuc[1])?);
    if nuclearity == (Nuclearity::Satellite, Nuclearity::Satellite) {
        return Err(RstError::Validation {
            path: path.to_string(),
            msg: "nuclearity (S,S) is not a valid pair".into(),
        });
    }
    let children = obj
        .get("children")
        .and_then(Value::as_array)
        .ok_or_else(|| RstError::Validation {
            path: path.to_string(),
            msg: "internal node needs \"children\"".into(),
        })?;
    if children.len() != 2 {
        return Err(RstError::Validation {
            path: path.to_string(),
            msg: format!(
                "tree must be binary; node has {} children (pre-binarize multinuclear relations)",
                children.len()
            ),
        });
    }
    let left = parse_node(&children[0], &format!("{path}.children[0]"))?;
    let right = parse_node(&children[1], &format!("{path}.children[1]"))?;
    Ok(RstTree::Internal {
        relation: relation.to_string(),
        nuclearity,
        left: Box::new(left),
        right: Box::new(right),
    })
}

/// Inverse of [`parse_rst`]; emits the recursive record format.
pub fn serialize_rst(t: &RstTree) -> String {
    tree_to_value(t).to_string()
}

fn tree_to_value(t: &RstTree) -> Value {
    match t {
        RstTree::Leaf { edu_id } => serde_json::json!({ "edu": edu_id }),
        RstTree::Internal {
            relation,
            nuclearity,
            left,
            right,
        } => serde_json::json!({
            "relation": relation,
            "nuclearity": [nuclearity.0.letter(), nuclearity.1.letter()],
            "children": [tree_to_value(left), tree_to_value(right)],
        }),
    }
}

/// Succeeds iff the tree's leaf count matches the document's EDU count.
pub fn validate_against(t: &RstTree, d: &Document) -> Result<(), RstError> {
    let tree_leaves = t.leaf_count();
    let doc_edus = d.edus.len();
    if tree_leaves != doc_edus {
        return Err(RstError::LeafCount {
            tree_leaves,
            doc_edus,
        });
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct EduRecord {
    text: String,
    tokens: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct DocRecord {
    id: String,
    edus: Vec<EduRecord>,
    headline: String,
    headline_tokens: Vec<String>,
}

/// One JSON document record per line. EDU ids are positional.
pub fn read_docs_file(path: &Path) -> Result<Vec<Document>, RstError> {
    let text = std::fs::read_to_string(path)?;
    let mut docs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_doc_line(line).map_err(|msg| RstError::Doc {
            path: path.display().to_string(),
            line: lineno + 1,
            msg,
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

fn parse_doc_line(line: &str) -> Result<Document, String> {
    let rec: DocRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if rec.edus.is_empty() {
        return Err(format!("document `{}` has no EDUs", rec.id));
    }
    if rec.headline_tokens.is_empty() {
        return Err(format!("document `{}` has empty headline_tokens", rec.id));
    }
    let mut edus = Vec::with_capacity(rec.edus.len());
    for (id, e) in rec.edus.into_iter().enumerate() {
        if e.tokens.is_empty() {
            return Err(format!("document `{}` EDU {id} has no tokens", rec.id));
        }
        edus.push(Edu {
            id,
            text: e.text,
            tokens: e.tokens,
        });
    }
    Ok(Document {
        id: rec.id,
        edus,
        headline: rec.headline,
        headline_tokens: rec.headline_tokens,
    })
}

pub fn write_docs_file(path: &Path, docs: &[Document]) -> Result<(), RstError> {
    let mut out = String::new();
    for d in docs {
        let rec = DocRecord {
            id: d.id.clone(),
            edus: d
                .edus
                .iter()
                .map(|e| EduRecord {
                    text: e.text.clone(),
                    tokens: e.tokens.clone(),
                })
                .collect(),
            headline: d.headline.clone(),
            headline_tokens: d.headline_tokens.clone(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("plain data serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_rst_file(path: &Path) -> Result<RstTree, RstError> {
    let text = std::fs::read_to_string(path)?;
    parse_rst(&text)
}

pub fn write_rst_file(path: &Path, t: &RstTree) -> Result<(), RstError> {
    std::fs::write(path, serialize_rst(t) + "\n")?;
    Ok(())
}

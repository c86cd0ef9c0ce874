//! Synthetic corpus generation.
//!
//! Produces documents with a planted, learnable signal: a subset of
//! EDUs are "key" EDUs whose first token is drawn from a reserved
//! sub-vocabulary, and the headline is exactly those first tokens in
//! EDU order. A model can only solve the task by finding the key EDUs.
//! Every generated file satisfies the input contracts of the discourse,
//! semantic-graph, and document-graph readers.

use std::path::Path;

use thiserror::Error;

use crate::amr::{parse_penman, write_amr_file, AmrGraph};
use crate::numerics::Rng;
use crate::rst::{write_docs_file, write_rst_file, Document, Edu, Nuclearity, RstTree};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("internal generation bug: {0}")]
    Internal(String),
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_docs: usize,
    pub edus_per_doc: (usize, usize),
    pub tokens_per_edu: (usize, usize),
    pub vocab_size: usize,
    /// Fraction of EDUs feeding the headline; at least one per doc.
    pub key_edu_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_docs: 20,
            edus_per_doc: (2, 5),
            tokens_per_edu: (3, 8),
            vocab_size: 50,
            key_edu_rate: 0.3,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_docs == 0 {
            return Err(SynthError::InvalidSpec("n_docs must be positive".into()));
        }
        let (el, eh) = self.edus_per_doc;
        if el == 0 || el > eh {
            return Err(SynthError::InvalidSpec(format!(
                "edus_per_doc range {el}..={eh} is empty or starts at 0"
            )));
        }
        let (tl, th) = self.tokens_per_edu;
        if tl == 0 || tl > th {
            return Err(SynthError::InvalidSpec(format!(
                "tokens_per_edu range {tl}..={th} is empty or starts at 0"
            )));
        }
        if self.vocab_size < 5 {
            return Err(SynthError::InvalidSpec(
                "vocab_size must be at least 5".into(),
            ));
        }
        if !(self.key_edu_rate > 0.0 && self.key_edu_rate <= 1.0) {
            return Err(SynthError::InvalidSpec(format!(
                "key_edu_rate {} outside (0,1]",
                self.key_edu_rate
            )));
        }
        Ok(())
    }

    /// Reserved headline sub-vocabulary size; the remainder is filler.
    fn key_vocab_size(&self) -> usize {
        (self.vocab_size / 5).max(2)
    }

    fn filler_vocab_size(&self) -> usize {
        (self.vocab_size - self.key_vocab_size()).max(2)
    }
}

fn in_range(rng: &mut Rng, (lo, hi): (usize, usize)) -> usize {
    lo + rng.below(hi - lo + 1)
}

const RELATIONS: [&str; 3] = ["Elaborate", "Joint", "Background"];
const NUCLEARITIES: [(Nuclearity, Nuclearity); 3] = [
    (Nuclearity::Nucleus, Nuclearity::Satellite),
    (Nuclearity::Satellite, Nuclearity::Nucleus),
    (Nuclearity::Nucleus, Nuclearity::Nucleus),
];
const DUMMY_CONCEPTS: [&str; 3] = ["multi-sentence", "and", "cause-01"];

/// Random binary tree over leaves lo..hi (exclusive hi).
pub fn random_rst_tree(rng: &mut Rng, n_leaves: usize) -> RstTree {
    build_tree(rng, 0, n_leaves)
}

fn build_tree(rng: &mut Rng, lo: usize, hi: usize) -> RstTree {
    debug_assert!(hi > lo);
    if hi - lo == 1 {
        return RstTree::Leaf { edu_id: lo };
    }
    let split = lo + 1 + rng.below(hi - lo - 1);
    let relation = rng.choose(&RELATIONS).to_string();
    let nuclearity = *rng.choose(&NUCLEARITIES);
    RstTree::Internal {
        relation,
        nuclearity,
        left: Box::new(build_tree(rng, lo, split)),
        right: Box::new(build_tree(rng, split, hi)),
    }
}

/// Chain-shaped semantic graph aligning a random token subset; roughly
/// one in ten EDUs gets the unparsed placeholder, and a third of the
/// rest get an extra dummy root.
fn random_chain_amr(rng: &mut Rng, tokens: &[String], edu_id: usize) -> Result<AmrGraph, SynthError> {
    let text = if rng.next_f64() < 0.1 {
        "(x / amr-empty)".to_string()
    } else {
        let n = tokens.len();
        let k = 1 + rng.below(n);
        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        idx.truncate(k);
        idx.sort_unstable();
        let mut parts: Vec<String> = Vec::new();
        for (pos, &ti) in idx.iter().enumerate() {
            let concept = sanitize_concept(&tokens[ti]);
            parts.push(if pos == 0 {
                format!("(n{pos} / {concept}~{ti}")
            } else {
                format!(":ARG{} (n{pos} / {concept}~{ti}", (pos - 1) % 3)
            });
        }
        let mut s = parts.join(" ");
        s.push_str(&")".repeat(idx.len()));
        if rng.next_f64() < 0.3 {
            let dummy = rng.choose(&DUMMY_CONCEPTS);
            s = format!("(r / {dummy} :ARG0 {s})");
        }
        s
    };
    parse_penman(&text, edu_id).map_err(|e| SynthError::Internal(e.to_string()))
}

fn sanitize_concept(token: &str) -> String {
    token
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' { c } else { '-' })
        .collect()
}

/// One generated document with its tree and per-EDU graphs.
pub type SynthDoc = (Document, RstTree, Vec<AmrGraph>);

pub fn generate_docs(spec: &SynthSpec) -> Result<Vec<SynthDoc>, SynthError> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let key_vocab = spec.key_vocab_size();
    let filler_vocab = spec.filler_vocab_size();
    let mut out = Vec::with_capacity(spec.n_docs);
    for di in 0..spec.n_docs {
        let n_edus = in_range(&mut rng, spec.edus_per_doc);
        let n_keys = ((spec.key_edu_rate * n_edus as f64).round() as usize).clamp(1, n_edus);
        let mut order: Vec<usize> = (0..n_edus).collect();
        rng.shuffle(&mut order);
        let key_set: std::collections::BTreeSet<usize> =
            order.into_iter().take(n_keys).collect();

        let mut edus = Vec::with_capacity(n_edus);
        let mut headline_tokens = Vec::new();
        for ei in 0..n_edus {
            let n_tok = in_range(&mut rng, spec.tokens_per_edu);
            let mut tokens = Vec::with_capacity(n_tok);
            for ti in 0..n_tok {
                if ti == 0 && key_set.contains(&ei) {
                    tokens.push(format!("k{}", rng.below(key_vocab)));
                } else {
                    tokens.push(format!("w{}", rng.below(filler_vocab)));
                }
            }
            if key_set.contains(&ei) {
                headline_tokens.push(tokens[0].clone());
            }
            edus.push(Edu {
                id: ei,
                text: tokens.join(" "),
                tokens,
            });
        }

        let tree = random_rst_tree(&mut rng, n_edus);
        let mut amrs = Vec::with_capacity(n_edus);
        for edu in &edus {
            amrs.push(random_chain_amr(&mut rng, &edu.tokens, edu.id)?);
        }

        let doc = Document {
            id: format!("synth-{di:04}"),
            headline: headline_tokens.join(" "),
            headline_tokens,
            edus,
        };
        out.push((doc, tree, amrs));
    }
    Ok(out)
}

/// Writes `<dir>/corpus.docs`, `<dir>/rst/<id>.rst`, `<dir>/amr/<id>.amr`.
pub fn generate_corpus(spec: &SynthSpec, dir: &Path) -> Result<Vec<SynthDoc>, SynthError> {
    let docs = generate_docs(spec)?;
    std::fs::create_dir_all(dir.join("rst"))?;
    std::fs::create_dir_all(dir.join("amr"))?;
    let all_docs: Vec<Document> = docs.iter().map(|(d, _, _)| d.clone()).collect();
    write_docs_file(&dir.join("corpus.docs"), &all_docs)
        .map_err(|e| SynthError::Internal(e.to_string()))?;
    for (d, t, amrs) in &docs {
        write_rst_file(&dir.join("rst").join(format!("{}.rst", d.id)), t)
            .map_err(|e| SynthError::Internal(e.to_string()))?;
        write_amr_file(&dir.join("amr").join(format!("{}.amr", d.id)), amrs)
            .map_err(|e| SynthError::Internal(e.to_string()))?;
    }
    Ok(docs)
}

/// Random general graph in PENMAN form (tree plus occasional
/// re-entrancies and constants); exercises the parser/serializer far
/// beyond the chain shape used in corpora.
pub fn random_penman_graph(rng: &mut Rng) -> AmrGraph {
    let n = 1 + rng.below(8);
    let concepts = ["want-01", "go-02", "boy", "girl", "city", "see-01", "and", "possible"];
    let roles = [":ARG0", ":ARG1", ":ARG2", ":mod", ":time", ":location"];
    let mut nodes = Vec::with_capacity(n);
    let mut aligned = std::collections::BTreeSet::new();
    for i in 0..n {
        let concept = rng.choose(&concepts).to_string();
        let token_index = if rng.next_f64() < 0.5 {
            // Distinct alignments only.
            let t = rng.below(16);
            if aligned.insert(t) {
                Some(t)
            } else {
                None
            }
        } else {
            None
        };
        nodes.push(crate::amr::AmrNode {
            variable: format!("v{i}"),
            concept,
            token_index,
            constant: false,
            quoted: false,
        });
    }
    let mut edges = Vec::new();
    for i in 1..n {
        let parent = rng.below(i);
        edges.push(crate::amr::AmrEdge {
            source: format!("v{parent}"),
            target: format!("v{i}"),
            role: rng.choose(&roles).to_string(),
        });
    }
    // Re-entrancies: a few extra edges between existing nodes.
    if n > 2 {
        for _ in 0..rng.below(3) {
            let a = rng.below(n);
            let b = rng.below(n);
            if a != b {
                edges.push(crate::amr::AmrEdge {
                    source: format!("v{a}"),
                    target: format!("v{b}"),
                    role: rng.choose(&roles).to_string(),
                });
            }
        }
    }
    // Constants hanging off random nodes.
    let mut next_const = 0usize;
    for _ in 0..rng.below(3) {
        let host = rng.below(n);
        let quoted = rng.next_f64() < 0.5;
        let concept = if quoted {
            format!("name{next_const}")
        } else {
            format!("{}", rng.below(100))
        };
        let var = format!("_k{next_const}");
        next_const += 1;
        nodes.push(crate::amr::AmrNode {
            variable: var.clone(),
            concept,
            token_index: None,
            constant: true,
            quoted,
        });
        edges.push(crate::amr::AmrEdge {
            source: format!("v{host}"),
            target: var,
            role: rng.choose(&roles).to_string(),
        });
    }
    AmrGraph {
        root: "v0".into(),
        nodes,
        edges,
        edu_id: 0,
    }
}

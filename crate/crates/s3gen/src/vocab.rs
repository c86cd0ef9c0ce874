//! String vocabularies with reserved specials.
//!
//! Three vocabularies drive the model: surface tokens (with padding,
//! unknown, and sequence-control specials), edge labels (adjacency
//! labels including mirrored and self forms), and dummy-node concepts.
//! Items are sorted before numbering so ids do not depend on corpus
//! file order.

use std::collections::{BTreeSet, HashMap};

use crate::rst::Document;
use crate::s3::S3Graph;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;
pub const BOS: usize = 4;
pub const EOS: usize = 5;

pub const TOKEN_SPECIALS: [&str; 6] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[BOS]", "[EOS]"];
pub const LABEL_SPECIALS: [&str; 1] = ["[UNK]"];

#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    items: Vec<String>,
    index: HashMap<String, usize>,
    unk: usize,
}

impl Vocab {
    fn assemble(specials: &[&str], items: BTreeSet<String>, unk: usize) -> Vocab {
        let mut all: Vec<String> = specials.iter().map(|s| s.to_string()).collect();
        for it in items {
            if !specials.contains(&it.as_str()) {
                all.push(it);
            }
        }
        let index = all
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Vocab {
            items: all,
            index,
            unk,
        }
    }

    /// Surface-token vocabulary over EDU tokens and headline tokens.
    pub fn tokens_from_docs(docs: &[Document]) -> Vocab {
        let mut set = BTreeSet::new();
        for d in docs {
            for e in &d.edus {
                set.extend(e.tokens.iter().cloned());
            }
            set.extend(d.headline_tokens.iter().cloned());
        }
        Self::assemble(&TOKEN_SPECIALS, set, UNK)
    }

    /// Edge-label vocabulary over adjacency labels (base, mirrored, and
    /// self forms) of the given graphs.
    pub fn edge_labels_from_graphs(graphs: &[S3Graph]) -> Vocab {
        let mut set = BTreeSet::new();
        set.insert(crate::s3::SELF_LABEL.to_string());
        for g in graphs {
            set.extend(g.to_adjacency().labels);
        }
        Self::assemble(&LABEL_SPECIALS, set, 0)
    }

    /// Concept vocabulary over dummy-node labels.
    pub fn concepts_from_graphs(graphs: &[S3Graph]) -> Vocab {
        let mut set = BTreeSet::new();
        for g in graphs {
            for n in &g.nodes {
                if n.ntype == crate::s3::NodeType::Dummy {
                    set.insert(n.label.clone());
                }
            }
        }
        Self::assemble(&LABEL_SPECIALS, set, 0)
    }

    pub fn from_items(items: Vec<String>, unk: usize) -> Vocab {
        let index = items
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Vocab { items, index, unk }
    }

    pub fn id(&self, s: &str) -> usize {
        self.index.get(s).copied().unwrap_or(self.unk)
    }

    pub fn get(&self, id: usize) -> &str {
        &self.items[id]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn unk_id(&self) -> usize {
        self.unk
    }

    pub fn contains(&self, s: &str) -> bool {
        self.index.contains_key(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rst::Edu;

    fn doc(tokens: &[&str]) -> Document {
        Document {
            id: "d".into(),
            edus: vec![Edu {
                id: 0,
                text: tokens.join(" "),
                tokens: tokens.iter().map(|s| s.to_string()).collect(),
            }],
            headline: "h".into(),
            headline_tokens: vec!["h".into()],
        }
    }

    #[test]
    fn specials_occupy_fixed_ids() {
        let v = Vocab::tokens_from_docs(&[doc(&["b", "a"])]);
        assert_eq!(v.get(PAD), "[PAD]");
        assert_eq!(v.get(UNK), "[UNK]");
        assert_eq!(v.get(CLS), "[CLS]");
        assert_eq!(v.get(SEP), "[SEP]");
        assert_eq!(v.get(BOS), "[BOS]");
        assert_eq!(v.get(EOS), "[EOS]");
        // Sorted items after specials.
        assert_eq!(v.get(6), "a");
        assert_eq!(v.get(7), "b");
        assert!(v.contains("h"));
    }

    #[test]
    fn unknown_maps_to_unk() {
        let v = Vocab::tokens_from_docs(&[doc(&["a"])]);
        assert_eq!(v.id("zzz"), UNK);
        assert_eq!(v.id("a"), v.index["a"]);
    }

    #[test]
    fn vocab_is_order_independent() {
        let a = Vocab::tokens_from_docs(&[doc(&["x", "y"]), doc(&["z"])]);
        let b = Vocab::tokens_from_docs(&[doc(&["z"]), doc(&["y", "x"])]);
        assert_eq!(a, b);
    }

    #[test]
    fn items_round_trip() {
        let v = Vocab::tokens_from_docs(&[doc(&["a", "b"])]);
        let back = Vocab::from_items(v.items().to_vec(), UNK);
        assert_eq!(v, back);
    }
}

//! Whole-pipeline composition: embed a document, encode its graph,
//! run pruning rounds with the policy, decode with fusion, and score
//! rewards for the policy gradient.

use thiserror::Error;

use crate::decoder::{
    ce_backward, ce_forward, decoder_backward, decoder_forward, generate, init_decoder_params,
    sequence_norm_logprob, teacher_forcing_pair, CeCache, DecodeCache, GenerationConfig,
};
use crate::encoder::{
    embed_backward, embed_document, gat_backward, gat_forward, init_backward,
    init_encoder_params, init_graph_params, init_node_embeddings, DropoutMode, EmbedCache,
    EncoderConfig, EncoderError, GatCache, InitCache, NodeReps,
};
use crate::metrics::rouge_l;
use crate::numerics::{ParamStore, Rng, Tensor};
use crate::pruner::{
    apply_thresholds, init_policy_params, policy_forward, prune_graph, PolicyCache, PolicyOutput,
    PruneThresholds,
};
use crate::rst::Document;
use crate::s3::{AdjacencyView, NodeType, S3Graph};
use crate::vocab::Vocab;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// What the decoder's fusion attends to. `NoGraph` is the ablation
/// that bypasses graph encoding and attends to raw token rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphMode {
    S3,
    NoGraph,
}

/// The three vocabularies a trained model depends on.
#[derive(Debug, Clone)]
pub struct Vocabs {
    pub tokens: Vocab,
    pub concepts: Vocab,
    pub edge_labels: Vocab,
}

impl Vocabs {
    pub fn build(docs: &[Document], graphs: &[S3Graph]) -> Vocabs {
        Vocabs {
            tokens: Vocab::tokens_from_docs(docs),
            concepts: Vocab::concepts_from_graphs(graphs),
            edge_labels: Vocab::edge_labels_from_graphs(graphs),
        }
    }
}

/// Rows the decoder attends to, plus which rows are real word nodes.
/// In `NoGraph` mode every token row counts as a word row.
pub struct Encoded {
    pub z: Tensor,
    pub word_mask: Vec<bool>,
}

/// Graph-path activations kept for the backward pass.
pub struct GraphCaches {
    adj: AdjacencyView,
    reps: NodeReps,
    init: InitCache,
    gat: GatCache,
}

/// Everything the end-to-end backward pass needs.
pub struct ForwardCache {
    embed: EmbedCache,
    graph: Option<GraphCaches>,
    decode: DecodeCache,
    ce: CeCache,
    pub loss: f64,
}

impl ForwardCache {
    /// Fusion attention rows from this pass (decoder steps × rows).
    pub fn fusion_attention(&self) -> &Tensor {
        self.decode.fusion().attention()
    }
}

/// One pruning round: the policy evaluation, the sampled actions, the
/// per-node decisions, and the node counts before and after.
pub struct PruneRound {
    pub cache: PolicyCache,
    pub out: PolicyOutput,
    /// Node ids of the graph this round scored, in row order.
    pub node_ids: Vec<usize>,
    /// Threshold-and-guard decisions aligned with `node_ids`.
    pub kept: Vec<bool>,
    pub nodes_before: usize,
    pub nodes_after: usize,
}

/// A full multi-round pruning trajectory ending in `graph`.
pub struct PruneTrace {
    pub graph: S3Graph,
    pub rounds: Vec<PruneRound>,
}

impl PruneTrace {
    pub fn logprob(&self) -> f64 {
        self.rounds.iter().map(|r| r.out.logprob).sum()
    }
}

/// Reward for a pruning trajectory: reference log-likelihood under the
/// pruned graph plus the greedy-headline overlap gain over the
/// unpruned graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reward {
    pub total: f64,
    pub confidence: f64,
    pub rouge_gain: f64,
}

pub struct Model {
    pub cfg: EncoderConfig,
    pub vocabs: Vocabs,
    pub mode: GraphMode,
}

impl Model {
    pub fn new(cfg: EncoderConfig, vocabs: Vocabs, mode: GraphMode) -> Model {
        Model { cfg, vocabs, mode }
    }

    /// Builds vocabularies from a corpus and sizes the config to them.
    pub fn from_corpus(docs: &[Document], graphs: &[S3Graph], mode: GraphMode) -> Model {
        let vocabs = Vocabs::build(docs, graphs);
        let cfg = EncoderConfig::new(vocabs.tokens.len());
        Model { cfg, vocabs, mode }
    }

    /// Seeds every parameter group; unused groups stay at their
    /// initial values and receive zero gradients.
    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut ps = ParamStore::new(seed);
        let mut rng = Rng::new(seed);
        init_encoder_params(&mut ps, &self.cfg, &mut rng);
        init_graph_params(
            &mut ps,
            &self.cfg,
            self.vocabs.concepts.len(),
            self.vocabs.edge_labels.len(),
            &mut rng,
        );
        init_decoder_params(&mut ps, &self.cfg, &mut rng);
        init_policy_params(&mut ps, self.cfg.d_model, &mut rng);
        ps
    }

    pub fn headline_ids(&self, d: &Document) -> Vec<usize> {
        d.headline_tokens
            .iter()
            .map(|t| self.vocabs.tokens.id(t))
            .collect()
    }

    pub fn tokens_from_ids(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&id| self.vocabs.tokens.get(id).to_string())
            .collect()
    }

    fn encode_with(
        &self,
        g: &S3Graph,
        d: &Document,
        params: &ParamStore,
        drop: &mut crate::encoder::DropoutState,
    ) -> Result<(Encoded, EmbedCache, Option<GraphCaches>), ModelError> {
        let (token_reps, embed) = embed_document(d, params, &self.cfg, &self.vocabs.tokens, drop)?;
        match self.mode {
            GraphMode::NoGraph => {
                let n = token_reps.h.rows();
                let enc = Encoded {
                    z: token_reps.h,
                    word_mask: vec![true; n],
                };
                Ok((enc, embed, None))
            }
            GraphMode::S3 => {
                let adj = g.to_adjacency();
                let (reps, init) = init_node_embeddings(
                    g,
                    &token_reps,
                    &adj,
                    params,
                    &self.vocabs.concepts,
                    &self.vocabs.edge_labels,
                )?;
                let (u, gat) = gat_forward(&adj, &reps, params, &self.cfg, drop);
                let word_mask = g
                    .nodes
                    .iter()
                    .map(|n| n.ntype == NodeType::Word)
                    .collect();
                let caches = GraphCaches {
                    adj,
                    reps,
                    init,
                    gat,
                };
                Ok((
                    Encoded { z: u, word_mask },
                    embed,
                    Some(caches),
                ))
            }
        }
    }

    /// Dropout-free encoding for evaluation, generation, and rewards.
    pub fn encode_eval(
        &self,
        g: &S3Graph,
        d: &Document,
        params: &ParamStore,
    ) -> Result<Encoded, ModelError> {
        let mut drop = DropoutMode::Disabled.start();
        let (enc, _, _) = self.encode_with(g, d, params, &mut drop)?;
        Ok(enc)
    }

    /// Teacher-forced loss of the reference headline given the graph.
    pub fn forward_ce(
        &self,
        g: &S3Graph,
        d: &Document,
        params: &ParamStore,
        drop_mode: &DropoutMode,
    ) -> Result<(f64, ForwardCache), ModelError> {
        let mut drop = drop_mode.start();
        let (enc, embed, graph) = self.encode_with(g, d, params, &mut drop)?;
        let (inputs, targets) = teacher_forcing_pair(&self.headline_ids(d));
        let (logits, decode) =
            decoder_forward(&inputs, &enc.z, &enc.word_mask, params, &self.cfg, &mut drop);
        let (loss, ce) = ce_forward(&logits, &targets);
        Ok((
            loss,
            ForwardCache {
                embed,
                graph,
                decode,
                ce,
                loss,
            },
        ))
    }

    /// Backpropagates the loss through decoder, graph encoder, and
    /// token encoder, accumulating into `grads` (zeros-shaped like
    /// `params`). Policy parameters are untouched by this path.
    pub fn backward(&self, cache: &ForwardCache, params: &ParamStore, grads: &mut ParamStore) {
        let dlogits = ce_backward(&cache.ce);
        let dz = decoder_backward(&cache.decode, &dlogits, params, &self.cfg, grads);
        match &cache.graph {
            Some(gc) => {
                let dr = gat_backward(&gc.adj, &gc.reps, &gc.gat, &dz, params, &self.cfg, grads);
                let dh = init_backward(&gc.init, &dr, grads);
                embed_backward(&cache.embed, &dh, params, &self.cfg, grads);
            }
            None => embed_backward(&cache.embed, &dz, params, &self.cfg, grads),
        }
    }

    /// Samples `rounds` pruning passes, re-encoding the shrinking
    /// graph before each one. States are computed dropout-free so a
    /// trajectory is reproducible from (params, seed).
    pub fn prune_rounds(
        &self,
        g0: &S3Graph,
        d: &Document,
        params: &ParamStore,
        rounds: usize,
        th: &PruneThresholds,
        std: f64,
        rng: &mut Rng,
    ) -> Result<PruneTrace, ModelError> {
        let mut drop = DropoutMode::Disabled.start();
        let (token_reps, _) = embed_document(d, params, &self.cfg, &self.vocabs.tokens, &mut drop)?;
        let mut g = g0.clone();
        let mut trace = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let adj = g.to_adjacency();
            let (reps, _) = init_node_embeddings(
                &g,
                &token_reps,
                &adj,
                params,
                &self.vocabs.concepts,
                &self.vocabs.edge_labels,
            )?;
            let (u, _) = gat_forward(&adj, &reps, params, &self.cfg, &mut drop);
            let (out, cache) = policy_forward(&u, params, std, rng);
            let keep = apply_thresholds(&g, &out.actions, th);
            let pruned = prune_graph(&g, &keep);
            trace.push(PruneRound {
                cache,
                out,
                node_ids: g.nodes.iter().map(|n| n.id).collect(),
                kept: keep,
                nodes_before: g.nodes.len(),
                nodes_after: pruned.nodes.len(),
            });
            g = pruned;
        }
        Ok(PruneTrace {
            graph: g,
            rounds: trace,
        })
    }

    /// Beam-decodes a headline for the graph and maps ids to tokens.
    pub fn generate_headline(
        &self,
        g: &S3Graph,
        d: &Document,
        params: &ParamStore,
        gen: &GenerationConfig,
    ) -> Result<Vec<String>, ModelError> {
        let enc = self.encode_eval(g, d, params)?;
        let ids = generate(&enc.z, &enc.word_mask, params, &self.cfg, gen.beam, gen.max_len);
        Ok(self.tokens_from_ids(&ids))
    }

    /// Trajectory reward: mean per-token reference log-likelihood
    /// under the pruned graph, plus the greedy-headline LCS-F1 gain of
    /// the pruned graph over the original.
    pub fn compute_reward(
        &self,
        g_pruned: &S3Graph,
        g_orig: &S3Graph,
        d: &Document,
        params: &ParamStore,
        max_steps: usize,
    ) -> Result<Reward, ModelError> {
        let enc_p = self.encode_eval(g_pruned, d, params)?;
        let enc_o = self.encode_eval(g_orig, d, params)?;
        let ref_ids = self.headline_ids(d);
        let confidence =
            sequence_norm_logprob(&ref_ids, &enc_p.z, &enc_p.word_mask, params, &self.cfg);
        let hyp_p = self.tokens_from_ids(&generate(
            &enc_p.z,
            &enc_p.word_mask,
            params,
            &self.cfg,
            1,
            max_steps,
        ));
        let hyp_o = self.tokens_from_ids(&generate(
            &enc_o.z,
            &enc_o.word_mask,
            params,
            &self.cfg,
            1,
            max_steps,
        ));
        let rouge_gain =
            rouge_l(&hyp_p, &d.headline_tokens).f1 - rouge_l(&hyp_o, &d.headline_tokens).f1;
        Ok(Reward {
            total: confidence + rouge_gain,
            confidence,
            rouge_gain,
        })
    }
}

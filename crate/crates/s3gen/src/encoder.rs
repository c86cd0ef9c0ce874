//! Token encoding and graph attention.
//!
//! The token encoder is a deliberately small stand-in for a pretrained
//! language model: learned token embeddings plus sinusoidal positions,
//! one multi-head self-attention block and one tanh feed-forward block,
//! both residual, no normalization layers. Node representations are
//! initialized from token rows (word nodes), a trainable concept table
//! (dummy nodes), or token-row means (EDU and span nodes), then refined
//! by a K-head graph attention network over the adjacency view.
//!
//! Every forward returns a cache consumed by the matching hand-written
//! backward; gradients are verified against central differences in the
//! test suite.

use thiserror::Error;

use crate::numerics::tensor::{sigmoid_scalar, softmax_backward_slice, softmax_slice};
use crate::numerics::{ParamStore, Rng, Tensor};
use crate::rst::Document;
use crate::s3::{AdjacencyView, NodeType, S3Graph};
use crate::vocab::{Vocab, CLS, SEP};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("sequence length {len} exceeds configured maximum {max}; refusing to truncate")]
    SequenceTooLong { len: usize, max: usize },
    #[error("node {node} references token {token} outside the document's token map")]
    TokenMapMiss { node: usize, token: usize },
    #[error("node {node} lacks the EDU range required for pooling")]
    MissingRange { node: usize },
}

#[derive(Debug, Clone)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub k_heads: usize,
    pub vocab_size: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub gat_layers: usize,
}

impl EncoderConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            d_model: 32,
            k_heads: 4,
            vocab_size,
            dropout: 0.1,
            max_len: 512,
            gat_layers: 1,
        }
    }

    pub fn head_dim(&self) -> usize {
        assert!(
            self.d_model % self.k_heads == 0,
            "d_model {} not divisible by k_heads {}",
            self.d_model,
            self.k_heads
        );
        self.d_model / self.k_heads
    }
}

/// Dropout policy for one forward pass. `Seeded` recreates the same
/// mask stream every time, so repeated evaluation (and therefore
/// finite-difference checking) stays deterministic.
#[derive(Debug, Clone)]
pub enum DropoutMode {
    Disabled,
    Seeded { seed: u64, p: f64 },
}

impl DropoutMode {
    pub fn start(&self) -> DropoutState {
        match self {
            DropoutMode::Disabled => DropoutState { rng: None, p: 0.0 },
            DropoutMode::Seeded { seed, p } => DropoutState {
                rng: if *p > 0.0 { Some(Rng::new(*seed)) } else { None },
                p: *p,
            },
        }
    }
}

pub struct DropoutState {
    rng: Option<Rng>,
    p: f64,
}

impl DropoutState {
    /// Inverted-dropout mask of the given length, or None when inactive.
    pub fn mask(&mut self, n: usize) -> Option<Vec<f64>> {
        let rng = self.rng.as_mut()?;
        let keep = 1.0 / (1.0 - self.p);
        Some(
            (0..n)
                .map(|_| if rng.next_f64() < self.p { 0.0 } else { keep })
                .collect(),
        )
    }
}

fn apply_mask(data: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        for (v, &k) in data.iter_mut().zip(m.iter()) {
            *v *= k;
        }
    }
}

/// Sinusoidal position encodings, rows 0..n.
pub fn positional_encoding(n: usize, d: usize) -> Tensor {
    let mut pe = Tensor::zeros(&[n, d]);
    for pos in 0..n {
        for i in 0..d {
            let exponent = (2 * (i / 2)) as f64 / d as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            let v = if i % 2 == 0 { angle.sin() } else { angle.cos() };
            pe.set2(pos, i, v);
        }
    }
    pe
}

/// Registers the token-encoder parameters.
pub fn init_encoder_params(ps: &mut ParamStore, cfg: &EncoderConfig, rng: &mut Rng) {
    let d = cfg.d_model;
    ps.add_uniform("enc.tok_emb", &[cfg.vocab_size, d], d, rng);
    for w in ["wq", "wk", "wv", "wo"] {
        ps.add_uniform(&format!("enc.attn.{w}"), &[d, d], d, rng);
    }
    ps.add_uniform("enc.ff.w1", &[d, 2 * d], d, rng);
    ps.add_zeros("enc.ff.b1", &[2 * d]);
    ps.add_uniform("enc.ff.w2", &[2 * d, d], 2 * d, rng);
    ps.add_zeros("enc.ff.b2", &[d]);
}

/// Registers node-init and graph-attention parameters.
pub fn init_graph_params(
    ps: &mut ParamStore,
    cfg: &EncoderConfig,
    n_concepts: usize,
    n_edge_labels: usize,
    rng: &mut Rng,
) {
    let d = cfg.d_model;
    ps.add_uniform("node.dummy_emb", &[n_concepts, d], d, rng);
    ps.add_uniform("gat.edge_emb", &[n_edge_labels, d], d, rng);
    for l in 0..cfg.gat_layers {
        for k in 0..cfg.k_heads {
            ps.add_uniform(&format!("gat.l{l}.w{k}"), &[d, d], d, rng);
            ps.add_uniform(&format!("gat.l{l}.a{k}"), &[d], d, rng);
        }
    }
}

fn col_block(t: &Tensor, start: usize, width: usize) -> Tensor {
    let (n, d) = (t.rows(), t.cols());
    let mut out = Tensor::zeros(&[n, width]);
    for i in 0..n {
        for j in 0..width {
            out.set2(i, j, t.get2(i, start + j));
        }
    }
    let _ = d;
    out
}

fn add_col_block(dst: &mut Tensor, start: usize, src: &Tensor) {
    for i in 0..src.rows() {
        for j in 0..src.cols() {
            dst.add2(i, start + j, src.get2(i, j));
        }
    }
}

fn add_bias(t: &mut Tensor, b: &Tensor) {
    let (n, d) = (t.rows(), t.cols());
    for i in 0..n {
        for j in 0..d {
            t.add2(i, j, b.data()[j]);
        }
    }
}

fn col_sums(t: &Tensor) -> Tensor {
    let (n, d) = (t.rows(), t.cols());
    let mut out = Tensor::zeros(&[d]);
    for i in 0..n {
        for j in 0..d {
            out.data_mut()[j] += t.get2(i, j);
        }
    }
    out
}

pub(crate) struct AttnCache {
    x: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    /// Pre-dropout attention per head.
    a_raw: Vec<Tensor>,
    a_mask: Vec<Option<Vec<f64>>>,
    ctx: Tensor,
}

/// Multi-head (optionally causal) self-attention over `x`, reading
/// wq/wk/wv/wo under `prefix`. Shared by the token encoder and decoder.
pub(crate) fn mha_forward(
    x: &Tensor,
    params: &ParamStore,
    prefix: &str,
    k_heads: usize,
    causal: bool,
    drop: &mut DropoutState,
) -> (Tensor, AttnCache) {
    let n = x.rows();
    let d = x.cols();
    let dk = d / k_heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let q = x.matmul(params.get(&format!("{prefix}.wq")));
    let k = x.matmul(params.get(&format!("{prefix}.wk")));
    let v = x.matmul(params.get(&format!("{prefix}.wv")));
    let mut ctx = Tensor::zeros(&[n, d]);
    let mut a_raw = Vec::with_capacity(k_heads);
    let mut a_mask = Vec::with_capacity(k_heads);
    for h in 0..k_heads {
        let qh = col_block(&q, h * dk, dk);
        let kh = col_block(&k, h * dk, dk);
        let vh = col_block(&v, h * dk, dk);
        let mut scores = qh.matmul_nt(&kh);
        scores.scale(scale);
        if causal {
            for i in 0..n {
                for j in (i + 1)..n {
                    scores.set2(i, j, f64::NEG_INFINITY);
                }
            }
        }
        let mut a = scores;
        for i in 0..n {
            softmax_slice(a.row_mut(i));
        }
        let mask = drop.mask(n * n);
        let mut a_used = a.clone();
        apply_mask(a_used.data_mut(), &mask);
        let ctx_h = a_used.matmul(&vh);
        add_col_block(&mut ctx, h * dk, &ctx_h);
        a_raw.push(a);
        a_mask.push(mask);
    }
    let out = ctx.matmul(params.get(&format!("{prefix}.wo")));
    (
        out,
        AttnCache {
            x: x.clone(),
            q,
            k,
            v,
            a_raw,
            a_mask,
            ctx,
        },
    )
}

/// Backward of [`mha_forward`]; accumulates parameter gradients and
/// returns the gradient with respect to `x`.
pub(crate) fn mha_backward(
    cache: &AttnCache,
    dout: &Tensor,
    params: &ParamStore,
    prefix: &str,
    k_heads: usize,
    grads: &mut ParamStore,
) -> Tensor {
    let n = cache.x.rows();
    let d = cache.x.cols();
    let dk = d / k_heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let wo = params.get(&format!("{prefix}.wo"));
    grads.accum(&format!("{prefix}.wo"), &cache.ctx.matmul_tn(dout));
    let dctx = dout.matmul_nt(wo);
    let mut dq = Tensor::zeros(&[n, d]);
    let mut dkt = Tensor::zeros(&[n, d]);
    let mut dv = Tensor::zeros(&[n, d]);
    for h in 0..k_heads {
        let qh = col_block(&cache.q, h * dk, dk);
        let kh = col_block(&cache.k, h * dk, dk);
        let vh = col_block(&cache.v, h * dk, dk);
        let dctx_h = col_block(&dctx, h * dk, dk);
        let a = &cache.a_raw[h];
        let mut a_used = a.clone();
        apply_mask(a_used.data_mut(), &cache.a_mask[h]);
        // ctx_h = a_used · vh
        let mut da = dctx_h.matmul_nt(&vh);
        let dvh = a_used.matmul_tn(&dctx_h);
        apply_mask(da.data_mut(), &cache.a_mask[h]);
        for i in 0..n {
            let yrow: Vec<f64> = a.row(i).to_vec();
            softmax_backward_slice(&yrow, da.row_mut(i));
        }
        let mut dscores = da;
        dscores.scale(scale);
        let dqh = dscores.matmul(&kh);
        let dkh = dscores.matmul_tn(&qh);
        add_col_block(&mut dq, h * dk, &dqh);
        add_col_block(&mut dkt, h * dk, &dkh);
        add_col_block(&mut dv, h * dk, &dvh);
    }
    let mut dx = Tensor::zeros(&[n, d]);
    for (mat, dmat) in [("wq", &dq), ("wk", &dkt), ("wv", &dv)] {
        let w = params.get(&format!("{prefix}.{mat}"));
        grads.accum(&format!("{prefix}.{mat}"), &cache.x.matmul_tn(dmat));
        dx.add_assign(&dmat.matmul_nt(w));
    }
    dx
}

/// Contextual token representations for one document.
#[derive(Debug, Clone)]
pub struct TokenReps {
    /// [rows × d_model]; row 0 is the leading control token, each EDU's
    /// tokens are contiguous, and a separator follows each EDU.
    pub h: Tensor,
    /// Global token index → row in `h` (control rows excluded).
    pub token_map: Vec<usize>,
    /// Per EDU: (first row, last row exclusive) of its tokens.
    pub edu_rows: Vec<(usize, usize)>,
}

pub struct EmbedCache {
    ids: Vec<usize>,
    attn: AttnCache,
    h1: Tensor,
    t: Tensor,
}

/// Encodes `[CLS] e_1 [SEP] e_2 [SEP] …` through the toy encoder.
pub fn embed_document(
    d: &Document,
    params: &ParamStore,
    cfg: &EncoderConfig,
    vocab: &Vocab,
    drop: &mut DropoutState,
) -> Result<(TokenReps, EmbedCache), EncoderError> {
    let mut ids = vec![CLS];
    let mut token_map = Vec::with_capacity(d.total_tokens());
    let mut edu_rows = Vec::with_capacity(d.edus.len());
    for edu in &d.edus {
        let start = ids.len();
        for tok in &edu.tokens {
            token_map.push(ids.len());
            ids.push(vocab.id(tok));
        }
        edu_rows.push((start, ids.len()));
        ids.push(SEP);
    }
    if ids.len() > cfg.max_len {
        return Err(EncoderError::SequenceTooLong {
            len: ids.len(),
            max: cfg.max_len,
        });
    }
    let n = ids.len();
    let dm = cfg.d_model;
    let emb = params.get("enc.tok_emb");
    let mut x = positional_encoding(n, dm);
    for (row, &id) in ids.iter().enumerate() {
        for j in 0..dm {
            x.add2(row, j, emb.get2(id, j));
        }
    }
    let (attn_out, attn) = mha_forward(&x, params, "enc.attn", cfg.k_heads, false, drop);
    let mut h1 = x;
    h1.add_assign(&attn_out);
    let mut u = h1.matmul(params.get("enc.ff.w1"));
    add_bias(&mut u, params.get("enc.ff.b1"));
    let t = u.map(f64::tanh);
    let mut f = t.matmul(params.get("enc.ff.w2"));
    add_bias(&mut f, params.get("enc.ff.b2"));
    let mut h = h1.clone();
    h.add_assign(&f);
    Ok((
        TokenReps {
            h,
            token_map,
            edu_rows,
        },
        EmbedCache { ids, attn, h1, t },
    ))
}

/// Backward of [`embed_document`]; accumulates `enc.*` gradients.
pub fn embed_backward(
    cache: &EmbedCache,
    dh: &Tensor,
    params: &ParamStore,
    cfg: &EncoderConfig,
    grads: &mut ParamStore,
) {
    let df = dh;
    let dt_pre = df.matmul_nt(params.get("enc.ff.w2"));
    grads.accum("enc.ff.w2", &cache.t.matmul_tn(df));
    grads.accum("enc.ff.b2", &col_sums(df));
    let du = dt_pre.zip_mul_one_minus_sq(&cache.t);
    grads.accum("enc.ff.w1", &cache.h1.matmul_tn(&du));
    grads.accum("enc.ff.b1", &col_sums(&du));
    let mut dh1 = dh.clone();
    dh1.add_assign(&du.matmul_nt(params.get("enc.ff.w1")));
    let dx_attn = mha_backward(&cache.attn, &dh1, params, "enc.attn", cfg.k_heads, grads);
    let mut dx = dh1;
    dx.add_assign(&dx_attn);
    let gemb = grads.get_mut("enc.tok_emb");
    let dmn = cfg.d_model;
    for (row, &id) in cache.ids.iter().enumerate() {
        for j in 0..dmn {
            gemb.add2(id, j, dx.get2(row, j));
        }
    }
}

/// Where each node row came from, for the init backward.
#[derive(Debug, Clone)]
enum RowSource {
    TokenRow(usize),
    Dummy(usize),
    MeanRows(Vec<usize>),
}

/// Per-document node representations plus the mapping from adjacency
/// label ids to rows of the global edge-label embedding table.
#[derive(Debug, Clone)]
pub struct NodeReps {
    pub r: Tensor,
    pub label_map: Vec<usize>,
}

pub struct InitCache {
    sources: Vec<RowSource>,
    n_token_rows: usize,
}

/// Builds initial node rows: word nodes copy token rows, dummy nodes
/// read the trainable concept table, EDU nodes average their token
/// rows, and span nodes average over their whole EDU range.
pub fn init_node_embeddings(
    g: &S3Graph,
    reps: &TokenReps,
    adj: &AdjacencyView,
    params: &ParamStore,
    concept_vocab: &Vocab,
    edge_label_vocab: &Vocab,
) -> Result<(NodeReps, InitCache), EncoderError> {
    let d = reps.h.cols();
    let n = g.nodes.len();
    let dummy_emb = params.get("node.dummy_emb");
    let mut r = Tensor::zeros(&[n, d]);
    let mut sources = Vec::with_capacity(n);
    for (row, node) in g.nodes.iter().enumerate() {
        match node.ntype {
            NodeType::Word => {
                let t = node.token_index.ok_or(EncoderError::TokenMapMiss {
                    node: node.id,
                    token: usize::MAX,
                })?;
                let hrow = *reps.token_map.get(t).ok_or(EncoderError::TokenMapMiss {
                    node: node.id,
                    token: t,
                })?;
                for j in 0..d {
                    r.set2(row, j, reps.h.get2(hrow, j));
                }
                sources.push(RowSource::TokenRow(hrow));
            }
            NodeType::Dummy => {
                let cid = concept_vocab.id(&node.label);
                for j in 0..d {
                    r.set2(row, j, dummy_emb.get2(cid, j));
                }
                sources.push(RowSource::Dummy(cid));
            }
            NodeType::Edu | NodeType::TextSpan => {
                let (lo, hi) = node.edu_range.ok_or(EncoderError::MissingRange {
                    node: node.id,
                })?;
                let mut rows = Vec::new();
                for e in lo..=hi {
                    let (a, b) = *reps.edu_rows.get(e).ok_or(EncoderError::MissingRange {
                        node: node.id,
                    })?;
                    rows.extend(a..b);
                }
                let inv = 1.0 / rows.len() as f64;
                for &hr in &rows {
                    for j in 0..d {
                        r.add2(row, j, reps.h.get2(hr, j) * inv);
                    }
                }
                sources.push(RowSource::MeanRows(rows));
            }
        }
    }
    let label_map = adj
        .labels
        .iter()
        .map(|l| edge_label_vocab.id(l))
        .collect();
    Ok((
        NodeReps { r, label_map },
        InitCache {
            sources,
            n_token_rows: reps.h.rows(),
        },
    ))
}

/// Backward of [`init_node_embeddings`]: scatters node-row gradients to
/// token rows and the concept table, returning dH.
pub fn init_backward(cache: &InitCache, dr: &Tensor, grads: &mut ParamStore) -> Tensor {
    let d = dr.cols();
    let mut dh = Tensor::zeros(&[cache.n_token_rows, d]);
    for (row, src) in cache.sources.iter().enumerate() {
        match src {
            RowSource::TokenRow(hr) => {
                for j in 0..d {
                    dh.add2(*hr, j, dr.get2(row, j));
                }
            }
            RowSource::Dummy(cid) => {
                let g = grads.get_mut("node.dummy_emb");
                for j in 0..d {
                    g.add2(*cid, j, dr.get2(row, j));
                }
            }
            RowSource::MeanRows(rows) => {
                let inv = 1.0 / rows.len() as f64;
                for &hr in rows {
                    for j in 0..d {
                        dh.add2(hr, j, dr.get2(row, j) * inv);
                    }
                }
            }
        }
    }
    dh
}

struct GatLayerCache {
    /// Node reps after input dropout; e_ij values are rebuilt from this.
    rd: Tensor,
    node_mask: Option<Vec<f64>>,
    /// Per head, per node row: pre-dropout attention over its neighbors.
    beta: Vec<Vec<Vec<f64>>>,
    beta_mask: Vec<Option<Vec<f64>>>,
    /// Per head: aggregated Σ_j β e_ij rows.
    s: Vec<Tensor>,
    u: Tensor,
}

pub struct GatCache {
    layers: Vec<GatLayerCache>,
}

impl GatCache {
    /// Pre-dropout attention row sums, for invariant checks.
    pub fn beta_row_sums(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for head in &layer.beta {
                for row in head {
                    out.push(row.iter().sum());
                }
            }
        }
        out
    }

    /// Attention of a single node row in a given layer/head.
    pub fn beta_row(&self, layer: usize, head: usize, row: usize) -> &[f64] {
        &self.layers[layer].beta[head][row]
    }
}

/// K-head graph attention: per head, neighbor scores come from a
/// learned vector dotted with the squashed sum r_i + r_j + label_emb,
/// normalized over the neighborhood (self-loop included); node output
/// is the sigmoid of the head-averaged linear aggregation.
pub fn gat_forward(
    adj: &AdjacencyView,
    reps: &NodeReps,
    params: &ParamStore,
    cfg: &EncoderConfig,
    drop: &mut DropoutState,
) -> (Tensor, GatCache) {
    let n = adj.n;
    let d = cfg.d_model;
    assert_eq!(reps.r.rows(), n, "adjacency and reps disagree on node count");
    assert_eq!(reps.r.cols(), d, "reps width != d_model");
    let edge_emb = params.get("gat.edge_emb");
    let mut layers = Vec::with_capacity(cfg.gat_layers);
    let mut r_in = reps.r.clone();
    for l in 0..cfg.gat_layers {
        let node_mask = drop.mask(n * d);
        let mut rd = r_in.clone();
        apply_mask(rd.data_mut(), &node_mask);
        let mut beta_all = Vec::with_capacity(cfg.k_heads);
        let mut beta_mask_all = Vec::with_capacity(cfg.k_heads);
        let mut s_all = Vec::with_capacity(cfg.k_heads);
        let mut u_pre = Tensor::zeros(&[n, d]);
        for k in 0..cfg.k_heads {
            let a = params.get(&format!("gat.l{l}.a{k}"));
            let w = params.get(&format!("gat.l{l}.w{k}"));
            let mut beta: Vec<Vec<f64>> = Vec::with_capacity(n);
            for i in 0..n {
                let mut scores: Vec<f64> = adj.neighbors[i]
                    .iter()
                    .map(|&(j, lbl)| {
                        let gid = reps.label_map[lbl];
                        let mut dot = 0.0;
                        for c in 0..d {
                            let e = rd.get2(i, c) + rd.get2(j, c) + edge_emb.get2(gid, c);
                            dot += a.data()[c] * sigmoid_scalar(e);
                        }
                        dot
                    })
                    .collect();
                softmax_slice(&mut scores);
                beta.push(scores);
            }
            let total_neigh: usize = (0..n).map(|i| adj.neighbors[i].len()).sum();
            let bmask = drop.mask(total_neigh);
            let mut s = Tensor::zeros(&[n, d]);
            let mut flat = 0usize;
            for i in 0..n {
                for (pos, &(j, lbl)) in adj.neighbors[i].iter().enumerate() {
                    let gid = reps.label_map[lbl];
                    let mut b = beta[i][pos];
                    if let Some(m) = &bmask {
                        b *= m[flat];
                    }
                    flat += 1;
                    for c in 0..d {
                        let e = rd.get2(i, c) + rd.get2(j, c) + edge_emb.get2(gid, c);
                        s.add2(i, c, b * e);
                    }
                }
            }
            let out = s.matmul(w);
            u_pre.add_assign(&out);
            beta_all.push(beta);
            beta_mask_all.push(bmask);
            s_all.push(s);
        }
        u_pre.scale(1.0 / cfg.k_heads as f64);
        let u = u_pre.map(sigmoid_scalar);
        layers.push(GatLayerCache {
            rd,
            node_mask,
            beta: beta_all,
            beta_mask: beta_mask_all,
            s: s_all,
            u: u.clone(),
        });
        r_in = u;
    }
    (r_in, GatCache { layers })
}

/// Backward of [`gat_forward`]; accumulates gat.* gradients and returns
/// the gradient with respect to the input node reps.
pub fn gat_backward(
    adj: &AdjacencyView,
    reps: &NodeReps,
    cache: &GatCache,
    du_out: &Tensor,
    params: &ParamStore,
    cfg: &EncoderConfig,
    grads: &mut ParamStore,
) -> Tensor {
    let n = adj.n;
    let d = cfg.d_model;
    let edge_emb = params.get("gat.edge_emb");
    let mut du = du_out.clone();
    for l in (0..cfg.gat_layers).rev() {
        let layer = &cache.layers[l];
        // u = sigmoid(u_pre); d u_pre = du ⊙ u(1-u), then 1/K per head.
        let mut dpre = Tensor::zeros(&[n, d]);
        for i in 0..n {
            for c in 0..d {
                let u = layer.u.get2(i, c);
                dpre.set2(i, c, du.get2(i, c) * u * (1.0 - u) / cfg.k_heads as f64);
            }
        }
        let mut drd = Tensor::zeros(&[n, d]);
        for k in 0..cfg.k_heads {
            let a = params.get(&format!("gat.l{l}.a{k}"));
            let w = params.get(&format!("gat.l{l}.w{k}"));
            grads.accum(&format!("gat.l{l}.w{k}"), &layer.s[k].matmul_tn(&dpre));
            let ds = dpre.matmul_nt(w);
            let bmask = &layer.beta_mask[k];
            let mut flat_base = 0usize;
            for i in 0..n {
                let neigh = &adj.neighbors[i];
                let beta = &layer.beta[k][i];
                // dβ_used and de via s_i = Σ β_used e_ij.
                let mut dbeta: Vec<f64> = Vec::with_capacity(neigh.len());
                for (pos, &(j, lbl)) in neigh.iter().enumerate() {
                    let gid = reps.label_map[lbl];
                    let keep = bmask.as_ref().map_or(1.0, |m| m[flat_base + pos]);
                    let b_used = beta[pos] * keep;
                    let mut dot = 0.0;
                    for c in 0..d {
                        let e = layer.rd.get2(i, c) + layer.rd.get2(j, c) + edge_emb.get2(gid, c);
                        dot += ds.get2(i, c) * e;
                        // de from the β_used e term.
                        let de = b_used * ds.get2(i, c);
                        drd.add2(i, c, de);
                        drd.add2(j, c, de);
                        grads.accum_at("gat.edge_emb", gid * d + c, de);
                    }
                    dbeta.push(dot * keep);
                }
                // Softmax backward over the neighborhood row.
                softmax_backward_slice(beta, &mut dbeta);
                let dscore = dbeta;
                for (pos, &(j, lbl)) in neigh.iter().enumerate() {
                    let gid = reps.label_map[lbl];
                    for c in 0..d {
                        let e = layer.rd.get2(i, c) + layer.rd.get2(j, c) + edge_emb.get2(gid, c);
                        let sg = sigmoid_scalar(e);
                        grads.accum_at(&format!("gat.l{l}.a{k}"), c, dscore[pos] * sg);
                        let de = dscore[pos] * a.data()[c] * sg * (1.0 - sg);
                        drd.add2(i, c, de);
                        drd.add2(j, c, de);
                        grads.accum_at("gat.edge_emb", gid * d + c, de);
                    }
                }
                flat_base += neigh.len();
            }
        }
        apply_mask(drd.data_mut(), &layer.node_mask);
        du = drd;
    }
    du
}

trait ZipMulOneMinusSq {
    fn zip_mul_one_minus_sq(self, t: &Tensor) -> Tensor;
}

impl ZipMulOneMinusSq for Tensor {
    /// dU = dT ⊙ (1 − T²), the tanh backward.
    fn zip_mul_one_minus_sq(mut self, t: &Tensor) -> Tensor {
        for (d, &tv) in self.data_mut().iter_mut().zip(t.data().iter()) {
            *d *= 1.0 - tv * tv;
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amr::parse_penman;
    use crate::numerics::finite_diff_check;
    use crate::rst::{parse_rst, Edu};
    use crate::s3::build_s3;

    fn small_cfg(vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            d_model: 8,
            k_heads: 2,
            vocab_size,
            dropout: 0.0,
            max_len: 64,
            gat_layers: 1,
        }
    }

    fn two_edu_doc() -> Document {
        Document {
            id: "d".into(),
            edus: vec![
                Edu {
                    id: 0,
                    text: "a b c d".into(),
                    tokens: ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect(),
                },
                Edu {
                    id: 1,
                    text: "e f g".into(),
                    tokens: ["e", "f", "g"].iter().map(|s| s.to_string()).collect(),
                },
            ],
            headline: "a".into(),
            headline_tokens: vec!["a".into()],
        }
    }

    fn setup() -> (Document, crate::rst::RstTree, Vec<crate::amr::AmrGraph>, Vocab) {
        let d = two_edu_doc();
        let t = parse_rst(
            r#"{"relation":"Elaborate","nuclearity":["N","S"],"children":[{"edu":0},{"edu":1}]}"#,
        )
        .unwrap();
        let amrs = vec![
            parse_penman("(x / alpha~0 :ARG0 (y / beta~2) :mod (z / dummy-thing))", 0).unwrap(),
            parse_penman("(q / gamma~1)", 1).unwrap(),
        ];
        let vocab = Vocab::tokens_from_docs(&[d.clone()]);
        (d, t, amrs, vocab)
    }

    #[test]
    fn sequence_layout_counts_specials() {
        let (d, _, _, vocab) = setup();
        let cfg = small_cfg(vocab.len());
        let mut rng = Rng::new(1);
        let mut ps = ParamStore::new(1);
        init_encoder_params(&mut ps, &cfg, &mut rng);
        let mut drop = DropoutMode::Disabled.start();
        let (reps, _) = embed_document(&d, &ps, &cfg, &vocab, &mut drop).unwrap();
        assert_eq!(reps.h.rows(), 1 + 4 + 1 + 3 + 1);
        assert_eq!(reps.token_map.len(), 7);
        // Control rows excluded from the map.
        assert!(!reps.token_map.contains(&0));
        assert!(!reps.token_map.contains(&5));
        assert!(!reps.token_map.contains(&9));
        assert_eq!(reps.edu_rows, vec![(1, 5), (6, 9)]);
    }

    #[test]
    fn permuting_edus_changes_representations() {
        let (d, _, _, vocab) = setup();
        let mut swapped = d.clone();
        swapped.edus.swap(0, 1);
        swapped.edus[0].id = 0;
        swapped.edus[1].id = 1;
        let cfg = small_cfg(vocab.len());
        let mut rng = Rng::new(2);
        let mut ps = ParamStore::new(2);
        init_encoder_params(&mut ps, &cfg, &mut rng);
        let mut d1 = DropoutMode::Disabled.start();
        let mut d2 = DropoutMode::Disabled.start();
        let (r1, _) = embed_document(&d, &ps, &cfg, &vocab, &mut d1).unwrap();
        let (r2, _) = embed_document(&swapped, &ps, &cfg, &vocab, &mut d2).unwrap();
        // Token "a" sits at different positions, so its row must differ.
        let row1 = r1.token_map[0];
        let row2 = r2.token_map[3];
        assert_eq!(r1.h.cols(), r2.h.cols());
        let same = r1.h.row(row1) == r2.h.row(row2);
        assert!(!same, "representations are position-insensitive");
    }

    #[test]
    fn zero_params_give_position_encodings() {
        let (d, _, _, vocab) = setup();
        let cfg = small_cfg(vocab.len());
        let mut ps = ParamStore::new(0);
        init_encoder_params(&mut ps, &cfg, &mut Rng::new(0));
        ps.scale_all(0.0);
        let mut drop = DropoutMode::Disabled.start();
        let (reps, _) = embed_document(&d, &ps, &cfg, &vocab, &mut drop).unwrap();
        let pe = positional_encoding(reps.h.rows(), cfg.d_model);
        for i in 0..reps.h.rows() {
            for j in 0..cfg.d_model {
                assert!((reps.h.get2(i, j) - pe.get2(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn over_length_sequence_is_rejected() {
        let (d, _, _, vocab) = setup();
        let mut cfg = small_cfg(vocab.len());
        cfg.max_len = 5;
        let mut ps = ParamStore::new(0);
        init_encoder_params(&mut ps, &cfg, &mut Rng::new(0));
        let mut drop = DropoutMode::Disabled.start();
        assert!(matches!(
            embed_document(&d, &ps, &cfg, &vocab, &mut drop),
            Err(EncoderError::SequenceTooLong { len: 10, max: 5 })
        ));
    }

    fn full_setup() -> (
        crate::s3::S3Graph,
        TokenReps,
        crate::s3::AdjacencyView,
        ParamStore,
        EncoderConfig,
        Vocab,
        Vocab,
        Vocab,
        Document,
    ) {
        let (d, t, amrs, vocab) = setup();
        let g = build_s3(&d, &t, &amrs).unwrap();
        let adj = g.to_adjacency();
        let concepts = Vocab::concepts_from_graphs(std::slice::from_ref(&g));
        let labels = Vocab::edge_labels_from_graphs(std::slice::from_ref(&g));
        let cfg = small_cfg(vocab.len());
        let mut rng = Rng::new(7);
        let mut ps = ParamStore::new(7);
        init_encoder_params(&mut ps, &cfg, &mut rng);
        init_graph_params(&mut ps, &cfg, concepts.len(), labels.len(), &mut rng);
        let mut drop = DropoutMode::Disabled.start();
        let (reps, _) = embed_document(&d, &ps, &cfg, &vocab, &mut drop).unwrap();
        (g, reps, adj, ps, cfg, vocab, concepts, labels, d)
    }

    #[test]
    fn edu_node_rows_are_exact_token_means() {
        let (g, reps, adj, ps, _cfg, _v, concepts, labels, _d) = full_setup();
        let (nr, _) = init_node_embeddings(&g, &reps, &adj, &ps, &concepts, &labels).unwrap();
        // Node id 1 is EDU 0 with token rows 1..5.
        let row = g.nodes.iter().position(|n| n.label == "e0").unwrap();
        let d = reps.h.cols();
        for j in 0..d {
            let mean: f64 = (1..5).map(|r| reps.h.get2(r, j)).sum::<f64>() / 4.0;
            assert!((nr.r.get2(row, j) - mean).abs() < 1e-12);
        }
        // Span node over EDUs {0,1}: mean over the union of 7 rows.
        let span_row = g
            .nodes
            .iter()
            .position(|n| n.ntype == NodeType::TextSpan)
            .unwrap();
        for j in 0..d {
            let mean: f64 = (1..5).chain(6..9).map(|r| reps.h.get2(r, j)).sum::<f64>() / 7.0;
            assert!((nr.r.get2(span_row, j) - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn distinct_dummies_get_distinct_vectors() {
        for seed in 0..100u64 {
            let mut ps = ParamStore::new(seed);
            let mut rng = Rng::new(seed);
            ps.add_uniform("node.dummy_emb", &[4, 8], 8, &mut rng);
            let t = ps.get("node.dummy_emb");
            for a in 0..4 {
                for b in (a + 1)..4 {
                    assert_ne!(t.row(a), t.row(b), "seed {seed}: dummies {a},{b} collide");
                }
            }
        }
    }

    #[test]
    fn zero_weight_gat_outputs_half() {
        let (g, reps, adj, mut ps, cfg, _v, concepts, labels, _d) = full_setup();
        for k in 0..cfg.k_heads {
            ps.get_mut(&format!("gat.l0.w{k}")).scale(0.0);
        }
        let (nr, _) = init_node_embeddings(&g, &reps, &adj, &ps, &concepts, &labels).unwrap();
        let mut drop = DropoutMode::Disabled.start();
        let (u, _) = gat_forward(&adj, &nr, &ps, &cfg, &mut drop);
        for &v in u.data() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_rows_sum_to_one_and_u_in_unit_interval() {
        let (g, reps, adj, ps, cfg, _v, concepts, labels, _d) = full_setup();
        let (nr, _) = init_node_embeddings(&g, &reps, &adj, &ps, &concepts, &labels).unwrap();
        let mut drop = DropoutMode::Disabled.start();
        let (u, cache) = gat_forward(&adj, &nr, &ps, &cfg, &mut drop);
        for s in cache.beta_row_sums() {
            assert!((s - 1.0).abs() < 1e-9);
        }
        for &v in u.data() {
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn self_only_node_has_unit_attention() {
        // A dummy-only semantic graph yields an isolated dummy node whose
        // neighborhood is just its self-loop, so every head gives β = [1.0].
        let (d, t, _, vocab) = setup();
        let amrs = vec![
            parse_penman("(x / alpha~0 :ARG0 (y / beta~2))", 0).unwrap(),
            parse_penman("(m / multi-sentence)", 1).unwrap(),
        ];
        let g = build_s3(&d, &t, &amrs).unwrap();
        let adj = g.to_adjacency();
        let lone = (0..adj.n)
            .find(|&i| adj.neighbors[i].len() == 1)
            .expect("dummy-only graph must leave one isolated row");
        assert_eq!(g.nodes[lone].ntype, NodeType::Dummy);
        let concepts = Vocab::concepts_from_graphs(std::slice::from_ref(&g));
        let labels = Vocab::edge_labels_from_graphs(std::slice::from_ref(&g));
        let cfg = small_cfg(vocab.len());
        let mut rng = Rng::new(5);
        let mut ps = ParamStore::new(5);
        init_encoder_params(&mut ps, &cfg, &mut rng);
        init_graph_params(&mut ps, &cfg, concepts.len(), labels.len(), &mut rng);
        let mut drop = DropoutMode::Disabled.start();
        let (reps, _) = embed_document(&d, &ps, &cfg, &vocab, &mut drop).unwrap();
        let (nr, _) = init_node_embeddings(&g, &reps, &adj, &ps, &concepts, &labels).unwrap();
        let (_, cache) = gat_forward(&adj, &nr, &ps, &cfg, &mut drop);
        for k in 0..cfg.k_heads {
            let b = cache.beta_row(0, k, lone);
            assert_eq!(b.len(), 1);
            assert!((b[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn edge_permutation_leaves_output_unchanged() {
        let (g, reps, adj, ps, cfg, _v, concepts, labels, _d) = full_setup();
        let mut g2 = g.clone();
        g2.edges.reverse();
        let adj2 = g2.to_adjacency();
        let (nr1, _) = init_node_embeddings(&g, &reps, &adj, &ps, &concepts, &labels).unwrap();
        let (nr2, _) = init_node_embeddings(&g2, &reps, &adj2, &ps, &concepts, &labels).unwrap();
        let mut da = DropoutMode::Disabled.start();
        let mut db = DropoutMode::Disabled.start();
        let (u1, _) = gat_forward(&adj, &nr1, &ps, &cfg, &mut da);
        let (u2, _) = gat_forward(&adj2, &nr2, &ps, &cfg, &mut db);
        assert_eq!(u1.data(), u2.data());
    }

    /// Full encoder chain objective: mean of all GAT outputs.
    fn encoder_objective(
        ps: &ParamStore,
        d: &Document,
        g: &crate::s3::S3Graph,
        adj: &crate::s3::AdjacencyView,
        cfg: &EncoderConfig,
        vocab: &Vocab,
        concepts: &Vocab,
        labels: &Vocab,
        dropout: &DropoutMode,
    ) -> f64 {
        let mut drop = dropout.start();
        let (reps, _) = embed_document(d, ps, cfg, vocab, &mut drop).unwrap();
        let (nr, _) = init_node_embeddings(g, &reps, adj, ps, concepts, labels).unwrap();
        let (u, _) = gat_forward(adj, &nr, ps, cfg, &mut drop);
        u.data().iter().sum::<f64>() / u.len() as f64
    }

    fn encoder_grads(
        ps: &ParamStore,
        d: &Document,
        g: &crate::s3::S3Graph,
        adj: &crate::s3::AdjacencyView,
        cfg: &EncoderConfig,
        vocab: &Vocab,
        concepts: &Vocab,
        labels: &Vocab,
        dropout: &DropoutMode,
    ) -> ParamStore {
        let mut drop = dropout.start();
        let (reps, ecache) = embed_document(d, ps, cfg, vocab, &mut drop).unwrap();
        let (nr, icache) = init_node_embeddings(g, &reps, adj, ps, concepts, labels).unwrap();
        let (u, gcache) = gat_forward(adj, &nr, ps, cfg, &mut drop);
        let mut grads = ps.zeros_like();
        let du = Tensor::filled(u.shape(), 1.0 / u.len() as f64);
        let dr = gat_backward(adj, &nr, &gcache, &du, ps, cfg, &mut grads);
        let dh = init_backward(&icache, &dr, &mut grads);
        embed_backward(&ecache, &dh, ps, cfg, &mut grads);
        grads
    }

    #[test]
    fn full_encoder_gradient_matches_finite_differences() {
        let (g, _reps, adj, ps, cfg, vocab, concepts, labels, d) = full_setup();
        let mode = DropoutMode::Disabled;
        let grads = encoder_grads(&ps, &d, &g, &adj, &cfg, &vocab, &concepts, &labels, &mode);
        let report = finite_diff_check(
            &ps,
            &grads,
            |p| encoder_objective(p, &d, &g, &adj, &cfg, &vocab, &concepts, &labels, &mode),
            1e-3,
        )
        .unwrap();
        assert!(report.passed(1e-4), "{report}");
    }

    #[test]
    fn gradient_matches_with_seeded_dropout_active() {
        let (g, _reps, adj, ps, mut cfg, vocab, concepts, labels, d) = full_setup();
        cfg.dropout = 0.1;
        let mode = DropoutMode::Seeded { seed: 99, p: 0.1 };
        let grads = encoder_grads(&ps, &d, &g, &adj, &cfg, &vocab, &concepts, &labels, &mode);
        let report = finite_diff_check(
            &ps,
            &grads,
            |p| encoder_objective(p, &d, &g, &adj, &cfg, &vocab, &concepts, &labels, &mode),
            1e-3,
        )
        .unwrap();
        assert!(report.passed(1e-4), "{report}");
    }

    #[test]
    fn two_layer_gat_gradient_matches() {
        let (d, t, amrs, vocab) = setup();
        let g = build_s3(&d, &t, &amrs).unwrap();
        let adj = g.to_adjacency();
        let concepts = Vocab::concepts_from_graphs(std::slice::from_ref(&g));
        let labels = Vocab::edge_labels_from_graphs(std::slice::from_ref(&g));
        let mut cfg = small_cfg(vocab.len());
        cfg.gat_layers = 2;
        let mut rng = Rng::new(11);
        let mut ps = ParamStore::new(11);
        init_encoder_params(&mut ps, &cfg, &mut rng);
        init_graph_params(&mut ps, &cfg, concepts.len(), labels.len(), &mut rng);
        let mode = DropoutMode::Disabled;
        let grads = encoder_grads(&ps, &d, &g, &adj, &cfg, &vocab, &concepts, &labels, &mode);
        let report = finite_diff_check(
            &ps,
            &grads,
            |p| encoder_objective(p, &d, &g, &adj, &cfg, &vocab, &concepts, &labels, &mode),
            1e-3,
        )
        .unwrap();
        assert!(report.passed(1e-4), "{report}");
    }
}

//! Headline decoder: masked self-attention over the partial output,
//! cross-attention into the graph (word-node rows attend as-is, other
//! rows pass through a learned projection), and a vocabulary softmax.
//!
//! Training uses teacher forcing with mean per-token cross-entropy;
//! inference uses beam search with length-normalized scores and a
//! guard that never returns a sequence scored below the greedy rollout.

use crate::encoder::{
    mha_backward, mha_forward, positional_encoding, AttnCache, DropoutState, EncoderConfig,
};
use crate::numerics::tensor::{softmax_backward_slice, softmax_slice};
use crate::numerics::{ParamStore, Rng, Tensor};
use crate::vocab::{BOS, CLS, EOS, PAD, SEP};

/// Registers decoder and fusion parameters.
pub fn init_decoder_params(ps: &mut ParamStore, cfg: &EncoderConfig, rng: &mut Rng) {
    let d = cfg.d_model;
    ps.add_uniform("dec.tok_emb", &[cfg.vocab_size, d], d, rng);
    for w in ["wq", "wk", "wv", "wo"] {
        ps.add_uniform(&format!("dec.attn.{w}"), &[d, d], d, rng);
    }
    ps.add_uniform("fusion.gate", &[d, d], d, rng);
    ps.add_uniform("dec.out.w", &[d, cfg.vocab_size], d, rng);
    ps.add_zeros("dec.out.b", &[cfg.vocab_size]);
}

pub struct FuseCache {
    z: Tensor,
    v: Tensor,
    word_mask: Vec<bool>,
    /// Pre-dropout attention [m × n].
    a_raw: Tensor,
    a_mask: Option<Vec<f64>>,
    o: Tensor,
}

impl FuseCache {
    /// Pre-dropout fusion attention, one row per decoder step, one
    /// column per graph row; rows sum to 1.
    pub fn attention(&self) -> &Tensor {
        &self.a_raw
    }
}

/// Scaled cross-attention from decoder states `o` into graph rows `z`.
/// Keys are the raw rows; values are the rows themselves for word nodes
/// and `z_j · gate` for every other node.
pub fn fuse_forward(
    o: &Tensor,
    z: &Tensor,
    word_mask: &[bool],
    params: &ParamStore,
    drop: &mut DropoutState,
) -> (Tensor, FuseCache) {
    let (m, d) = (o.rows(), o.cols());
    let n = z.rows();
    assert_eq!(word_mask.len(), n, "word mask length != graph rows");
    let gate = params.get("fusion.gate");
    let zg = z.matmul(gate);
    let mut v = z.clone();
    for j in 0..n {
        if !word_mask[j] {
            for c in 0..d {
                v.set2(j, c, zg.get2(j, c));
            }
        }
    }
    let mut scores = o.matmul_nt(z);
    scores.scale(1.0 / (d as f64).sqrt());
    for i in 0..m {
        softmax_slice(scores.row_mut(i));
    }
    let a_raw = scores;
    let a_mask = drop.mask(m * n);
    let mut a_used = a_raw.clone();
    if let Some(mask) = &a_mask {
        for (x, &k) in a_used.data_mut().iter_mut().zip(mask.iter()) {
            *x *= k;
        }
    }
    let out = a_used.matmul(&v);
    (
        out,
        FuseCache {
            z: z.clone(),
            v,
            word_mask: word_mask.to_vec(),
            a_raw,
            a_mask,
            o: o.clone(),
        },
    )
}

/// Backward of [`fuse_forward`]: accumulates the projection gradient
/// and returns (d_o, d_z).
pub fn fuse_backward(
    cache: &FuseCache,
    dout: &Tensor,
    params: &ParamStore,
    grads: &mut ParamStore,
) -> (Tensor, Tensor) {
    let d = cache.o.cols();
    let n = cache.z.rows();
    let m = cache.o.rows();
    let scale = 1.0 / (d as f64).sqrt();
    let gate = params.get("fusion.gate");
    let mut a_used = cache.a_raw.clone();
    if let Some(mask) = &cache.a_mask {
        for (x, &k) in a_used.data_mut().iter_mut().zip(mask.iter()) {
            *x *= k;
        }
    }
    let mut da = dout.matmul_nt(&cache.v);
    let dv = a_used.matmul_tn(dout);
    if let Some(mask) = &cache.a_mask {
        for (x, &k) in da.data_mut().iter_mut().zip(mask.iter()) {
            *x *= k;
        }
    }
    for i in 0..m {
        let yrow: Vec<f64> = cache.a_raw.row(i).to_vec();
        softmax_backward_slice(&yrow, da.row_mut(i));
    }
    da.scale(scale);
    // Scores were o·zᵀ, so da feeds both sides of the product.
    let do_ = da.matmul(&cache.z);
    let mut dz = da.matmul_tn(&cache.o);
    // Value rows: identity for word nodes, ·gate otherwise.
    let mut dv_proj = Tensor::zeros(&[n, d]);
    for j in 0..n {
        if cache.word_mask[j] {
            for c in 0..d {
                dz.add2(j, c, dv.get2(j, c));
            }
        } else {
            for c in 0..d {
                dv_proj.set2(j, c, dv.get2(j, c));
            }
        }
    }
    let mut z_nonword = cache.z.clone();
    for j in 0..n {
        if cache.word_mask[j] {
            for c in 0..d {
                z_nonword.set2(j, c, 0.0);
            }
        }
    }
    grads.accum("fusion.gate", &z_nonword.matmul_tn(&dv_proj));
    dz.add_assign(&dv_proj.matmul_nt(gate));
    (do_, dz)
}

pub struct DecodeCache {
    ids: Vec<usize>,
    attn: AttnCache,
    fuse: FuseCache,
    h2: Tensor,
}

impl DecodeCache {
    pub fn fusion(&self) -> &FuseCache {
        &self.fuse
    }
}

/// Teacher-forced decoder pass: embeds `ids_in`, applies the causal
/// self-attention block, fuses in the graph, and projects to logits.
pub fn decoder_forward(
    ids_in: &[usize],
    z: &Tensor,
    word_mask: &[bool],
    params: &ParamStore,
    cfg: &EncoderConfig,
    drop: &mut DropoutState,
) -> (Tensor, DecodeCache) {
    let m = ids_in.len();
    let d = cfg.d_model;
    let emb = params.get("dec.tok_emb");
    let mut x = positional_encoding(m, d);
    for (row, &id) in ids_in.iter().enumerate() {
        for c in 0..d {
            x.add2(row, c, emb.get2(id, c));
        }
    }
    let (sa, attn) = mha_forward(&x, params, "dec.attn", cfg.k_heads, true, drop);
    let mut h1 = x;
    h1.add_assign(&sa);
    let (fused, fuse) = fuse_forward(&h1, z, word_mask, params, drop);
    let mut h2 = h1.clone();
    h2.add_assign(&fused);
    let mut logits = h2.matmul(params.get("dec.out.w"));
    let b = params.get("dec.out.b");
    for i in 0..m {
        for t in 0..cfg.vocab_size {
            logits.add2(i, t, b.data()[t]);
        }
    }
    (
        logits,
        DecodeCache {
            ids: ids_in.to_vec(),
            attn,
            fuse,
            h2,
        },
    )
}

/// Backward of [`decoder_forward`]; accumulates dec.* and fusion.*
/// gradients and returns the gradient with respect to the graph rows.
pub fn decoder_backward(
    cache: &DecodeCache,
    dlogits: &Tensor,
    params: &ParamStore,
    cfg: &EncoderConfig,
    grads: &mut ParamStore,
) -> Tensor {
    let d = cfg.d_model;
    grads.accum("dec.out.w", &cache.h2.matmul_tn(dlogits));
    let mut db = Tensor::zeros(&[cfg.vocab_size]);
    for i in 0..dlogits.rows() {
        for t in 0..cfg.vocab_size {
            db.data_mut()[t] += dlogits.get2(i, t);
        }
    }
    grads.accum("dec.out.b", &db);
    let dh2 = dlogits.matmul_nt(params.get("dec.out.w"));
    let (do_, dz) = fuse_backward(&cache.fuse, &dh2, params, grads);
    let mut dh1 = dh2;
    dh1.add_assign(&do_);
    let dx_attn = mha_backward(&cache.attn, &dh1, params, "dec.attn", cfg.k_heads, grads);
    let mut dx = dh1;
    dx.add_assign(&dx_attn);
    let gemb = grads.get_mut("dec.tok_emb");
    for (row, &id) in cache.ids.iter().enumerate() {
        for c in 0..d {
            gemb.add2(id, c, dx.get2(row, c));
        }
    }
    dz
}

/// `([BOS] + ids, ids + [EOS])` for teacher forcing.
pub fn teacher_forcing_pair(ids: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut inputs = Vec::with_capacity(ids.len() + 1);
    inputs.push(BOS);
    inputs.extend_from_slice(ids);
    let mut targets = ids.to_vec();
    targets.push(EOS);
    (inputs, targets)
}

pub struct CeCache {
    probs: Tensor,
    targets: Vec<usize>,
    n_active: usize,
}

/// Mean negative log-likelihood per non-padding target token.
pub fn ce_forward(logits: &Tensor, targets: &[usize]) -> (f64, CeCache) {
    assert_eq!(logits.rows(), targets.len(), "logit rows != target count");
    let mut probs = logits.clone();
    for i in 0..probs.rows() {
        softmax_slice(probs.row_mut(i));
    }
    let mut loss = 0.0;
    let mut n_active = 0usize;
    for (i, &t) in targets.iter().enumerate() {
        if t == PAD {
            continue;
        }
        loss -= probs.get2(i, t).max(f64::MIN_POSITIVE).ln();
        n_active += 1;
    }
    let loss = if n_active == 0 { 0.0 } else { loss / n_active as f64 };
    (
        loss,
        CeCache {
            probs,
            targets: targets.to_vec(),
            n_active,
        },
    )
}

/// dlogits = (softmax − one-hot) / n_active on active rows.
pub fn ce_backward(cache: &CeCache) -> Tensor {
    let mut d = Tensor::zeros(&[cache.probs.rows(), cache.probs.cols()]);
    if cache.n_active == 0 {
        return d;
    }
    let inv = 1.0 / cache.n_active as f64;
    for (i, &t) in cache.targets.iter().enumerate() {
        if t == PAD {
            continue;
        }
        for c in 0..cache.probs.cols() {
            let p = cache.probs.get2(i, c);
            let y = if c == t { 1.0 } else { 0.0 };
            d.set2(i, c, (p - y) * inv);
        }
    }
    d
}

fn log_softmax_row(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = xs.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    xs.iter().map(|&v| v - lse).collect()
}

/// Decode-time settings; beam width 1 degenerates to greedy search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationConfig {
    pub beam: usize,
    pub max_len: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self { beam: 2, max_len: 16 }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.beam == 0 {
            return Err("beam width must be at least 1".into());
        }
        if self.max_len == 0 {
            return Err("maximum generation length must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone)]
struct Beam {
    ids: Vec<usize>,
    logp: f64,
    done: bool,
}

impl Beam {
    /// Length-normalized score: cumulative log-probability divided by
    /// the number of generated tokens.
    fn norm_score(&self) -> f64 {
        let gen = self.ids.len().saturating_sub(1).max(1);
        self.logp / gen as f64
    }
}

/// Tokens that may never appear in a generated headline.
fn banned(tok: usize) -> bool {
    tok == PAD || tok == BOS || tok == CLS || tok == SEP
}

fn extend_beams(
    beams: Vec<Beam>,
    width: usize,
    z: &Tensor,
    word_mask: &[bool],
    params: &ParamStore,
    cfg: &EncoderConfig,
    max_steps: usize,
) -> Vec<Beam> {
    let mut candidates: Vec<Beam> = Vec::new();
    for beam in beams {
        if beam.done {
            candidates.push(beam);
            continue;
        }
        let mut off = crate::encoder::DropoutMode::Disabled.start();
        let (logits, _) = decoder_forward(&beam.ids, z, word_mask, params, cfg, &mut off);
        let last = logits.row(logits.rows() - 1);
        let lp = log_softmax_row(last);
        for (tok, &l) in lp.iter().enumerate() {
            if banned(tok) {
                continue;
            }
            let mut ids = beam.ids.clone();
            ids.push(tok);
            let done = tok == EOS || ids.len() - 1 >= max_steps;
            candidates.push(Beam {
                ids,
                logp: beam.logp + l,
                done,
            });
        }
    }
    // Cumulative log-probability ranks the pool during search; ties
    // break toward shorter prefixes for determinism.
    candidates.sort_by(|a, b| {
        b.logp
            .partial_cmp(&a.logp)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.ids.len().cmp(&b.ids.len()))
            .then(a.ids.cmp(&b.ids))
    });
    candidates.truncate(width);
    candidates
}

/// Beam-search decode over graph rows `z`. Returns generated token ids
/// with the leading marker and any trailing end token stripped. The
/// result never scores below the greedy rollout under length-normalized
/// comparison.
pub fn generate(
    z: &Tensor,
    word_mask: &[bool],
    params: &ParamStore,
    cfg: &EncoderConfig,
    beam_width: usize,
    max_steps: usize,
) -> Vec<usize> {
    assert!(beam_width >= 1, "beam width must be positive");
    let run = |width: usize| -> Beam {
        let mut beams = vec![Beam {
            ids: vec![BOS],
            logp: 0.0,
            done: false,
        }];
        while beams.iter().any(|b| !b.done) {
            beams = extend_beams(beams, width, z, word_mask, params, cfg, max_steps);
        }
        beams
            .into_iter()
            .max_by(|a, b| {
                a.norm_score()
                    .partial_cmp(&b.norm_score())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("at least one beam")
    };
    let greedy = run(1);
    let best = if beam_width == 1 {
        greedy
    } else {
        let beamed = run(beam_width);
        if beamed.norm_score() >= greedy.norm_score() {
            beamed
        } else {
            greedy
        }
    };
    let mut ids = best.ids;
    ids.remove(0);
    if ids.last() == Some(&EOS) {
        ids.pop();
    }
    ids
}

/// Length-normalized score of a teacher-forced sequence, for tests and
/// reward computation.
pub fn sequence_norm_logprob(
    ids: &[usize],
    z: &Tensor,
    word_mask: &[bool],
    params: &ParamStore,
    cfg: &EncoderConfig,
) -> f64 {
    let (inputs, targets) = teacher_forcing_pair(ids);
    let mut drop = crate::encoder::DropoutMode::Disabled.start();
    let (logits, _) = decoder_forward(&inputs, z, word_mask, params, cfg, &mut drop);
    let mut total = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let lp = log_softmax_row(logits.row(i));
        total += lp[t];
    }
    total / targets.len() as f64
}

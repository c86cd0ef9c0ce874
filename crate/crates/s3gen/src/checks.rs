//! Canned finite-difference suites over small seeded fixtures, shared
//! by the command-line `gradcheck` and the test suite. Each suite
//! isolates one differentiable component; the end-to-end suite runs
//! the whole generation loss.

use crate::decoder::{
    ce_backward, ce_forward, decoder_backward, decoder_forward, fuse_backward, fuse_forward,
    init_decoder_params, teacher_forcing_pair,
};
use crate::encoder::{
    gat_backward, gat_forward, init_graph_params, DropoutMode, EncoderConfig, NodeReps,
};
use crate::model::{GraphMode, Model, Vocabs};
use crate::numerics::{
    finite_diff_check, finite_diff_check_sampled, GradCheckReport, ParamStore, Rng, Tensor,
};
use crate::pruner::{gaussian_logprob, init_policy_params, policy_logprob_backward, policy_mean};
use crate::pruner::POLICY_STD;
use crate::rst::Document;
use crate::s3::{build_s3, AdjacencyView, S3Graph};
use crate::synth::{generate_docs, SynthSpec};

/// One named suite result.
pub struct CheckOutcome {
    pub name: &'static str,
    pub report: GradCheckReport,
}

/// Attention-related invariants measured on the same fixtures:
/// deviations of attention row sums from 1 and the range of the graph
/// encoder outputs.
pub struct AttentionProbe {
    pub max_beta_row_dev: f64,
    pub max_fusion_row_dev: f64,
    pub u_min: f64,
    pub u_max: f64,
}

fn small_cfg(vocab_size: usize) -> EncoderConfig {
    let mut cfg = EncoderConfig::new(vocab_size);
    cfg.d_model = 8;
    cfg.k_heads = 2;
    cfg
}

fn fixture_doc(seed: u64) -> (Document, S3Graph) {
    let spec = SynthSpec {
        n_docs: 1,
        edus_per_doc: (2, 3),
        tokens_per_edu: (3, 4),
        vocab_size: 20,
        key_edu_rate: 0.5,
        seed,
    };
    let mut docs = generate_docs(&spec).expect("fixture corpus");
    let (doc, tree, amrs) = docs.remove(0);
    let graph = build_s3(&doc, &tree, &amrs).expect("fixture graph");
    (doc, graph)
}

fn random_rows(rng: &mut Rng, rows: usize, cols: usize, half_width: f64) -> Tensor {
    let mut t = Tensor::zeros(&[rows, cols]);
    for v in t.data_mut() {
        *v = rng.uniform(-half_width, half_width);
    }
    t
}

fn copy_prefixed(src: &ParamStore, prefixes: &[&str]) -> ParamStore {
    let mut out = ParamStore::new(src.seed());
    for (name, t) in src.iter() {
        if prefixes.iter().any(|p| name.starts_with(p)) {
            out.add(name, t.clone());
        }
    }
    out
}


fn fd(
    params: &ParamStore,
    grads: &ParamStore,
    objective: impl Fn(&ParamStore) -> f64,
    epsilon: f64,
    sample: Option<usize>,
    seed: u64,
) -> GradCheckReport {
    match sample {
        None => finite_diff_check(params, grads, objective, epsilon).expect("check runs"),
        Some(k) => finite_diff_check_sampled(params, grads, objective, epsilon, k, seed)
            .expect("check runs"),
    }
}

/// Graph attention gradients against central differences: random node
/// rows over a real small graph's adjacency, objective mean(u).
pub fn check_gat(seed: u64, epsilon: f64, sample: Option<usize>) -> CheckOutcome {
    let (_, graph) = fixture_doc(seed);
    let adj = graph.to_adjacency();
    let cfg = small_cfg(20);
    let mut rng = Rng::new(seed ^ 0xA11);
    let mut full = ParamStore::new(seed);
    init_graph_params(&mut full, &cfg, 3, adj.labels.len().max(1), &mut rng);
    let params = copy_prefixed(&full, &["gat."]);
    let reps = NodeReps {
        r: random_rows(&mut rng, adj.n, cfg.d_model, 0.5),
        label_map: (0..adj.labels.len()).collect(),
    };

    let objective = |ps: &ParamStore, adj: &AdjacencyView, reps: &NodeReps| {
        let mut off = DropoutMode::Disabled.start();
        let (u, _) = gat_forward(adj, reps, ps, &cfg, &mut off);
        u.data().iter().sum::<f64>() / u.len() as f64
    };

    let mut grads = params.zeros_like();
    let mut off = DropoutMode::Disabled.start();
    let (u, cache) = gat_forward(&adj, &reps, &params, &cfg, &mut off);
    let du = Tensor::filled(u.shape(), 1.0 / u.len() as f64);
    gat_backward(&adj, &reps, &cache, &du, &params, &cfg, &mut grads);

    let report = fd(
        &params,
        &grads,
        |ps| objective(ps, &adj, &reps),
        epsilon,
        sample,
        seed,
    );
    CheckOutcome { name: "gat", report }
}

/// Fusion cross-attention gradients: random decoder states and graph
/// rows, objective mean of the fused output.
pub fn check_fusion(seed: u64, epsilon: f64, sample: Option<usize>) -> CheckOutcome {
    let cfg = small_cfg(20);
    let mut rng = Rng::new(seed ^ 0xF05);
    let mut full = ParamStore::new(seed);
    init_decoder_params(&mut full, &cfg, &mut rng);
    let params = copy_prefixed(&full, &["fusion."]);
    let o = random_rows(&mut rng, 3, cfg.d_model, 0.5);
    let z = random_rows(&mut rng, 5, cfg.d_model, 0.5);
    let word_mask = [true, false, true, false, false];

    let mut grads = params.zeros_like();
    let mut off = DropoutMode::Disabled.start();
    let (out, cache) = fuse_forward(&o, &z, &word_mask, &params, &mut off);
    let dout = Tensor::filled(out.shape(), 1.0 / out.len() as f64);
    fuse_backward(&cache, &dout, &params, &mut grads);

    let report = fd(
        &params,
        &grads,
        |ps| {
            let mut off = DropoutMode::Disabled.start();
            let (c, _) = fuse_forward(&o, &z, &word_mask, ps, &mut off);
            c.data().iter().sum::<f64>() / c.len() as f64
        },
        epsilon,
        sample,
        seed,
    );
    CheckOutcome {
        name: "fusion",
        report,
    }
}

/// Decoder + generation loss gradients: teacher-forced pass over fixed
/// graph rows, objective the mean cross-entropy.
pub fn check_decoder_ce(seed: u64, epsilon: f64, sample: Option<usize>) -> CheckOutcome {
    let cfg = small_cfg(20);
    let mut rng = Rng::new(seed ^ 0xDEC);
    let mut params = ParamStore::new(seed);
    init_decoder_params(&mut params, &cfg, &mut rng);
    let z = random_rows(&mut rng, 5, cfg.d_model, 0.5);
    let word_mask = [true, true, false, false, true];
    let (inputs, targets) = teacher_forcing_pair(&[7, 9, 11]);

    let objective = |ps: &ParamStore| {
        let mut off = DropoutMode::Disabled.start();
        let (logits, _) = decoder_forward(&inputs, &z, &word_mask, ps, &cfg, &mut off);
        ce_forward(&logits, &targets).0
    };

    let mut grads = params.zeros_like();
    let mut off = DropoutMode::Disabled.start();
    let (logits, cache) = decoder_forward(&inputs, &z, &word_mask, &params, &cfg, &mut off);
    let (_, ce) = ce_forward(&logits, &targets);
    let dlogits = ce_backward(&ce);
    decoder_backward(&cache, &dlogits, &params, &cfg, &mut grads);

    let report = fd(&params, &grads, objective, epsilon, sample, seed);
    CheckOutcome {
        name: "decoder-ce",
        report,
    }
}

/// Policy log-density gradients. Parameters are scaled toward zero
/// because the density's 1/std^2 curvature would otherwise push the
/// central-difference truncation error past the tolerance at the
/// default epsilon; the comparison itself stays exact.
pub fn check_policy_logprob(seed: u64, epsilon: f64, sample: Option<usize>) -> CheckOutcome {
    let d = 8;
    let mut rng = Rng::new(seed ^ 0xB01);
    let mut params = ParamStore::new(seed);
    init_policy_params(&mut params, d, &mut rng);
    params.scale_all(0.3);
    let states = random_rows(&mut rng, 4, d, 0.5);
    let zs: Vec<f64> = (0..4).map(|_| rng.gaussian(0.0, POLICY_STD)).collect();

    let mut grads = params.zeros_like();
    let cache = policy_mean(&states, &params);
    policy_logprob_backward(&cache, &zs, POLICY_STD, 1.0, &params, &mut grads);

    let report = fd(
        &params,
        &grads,
        |ps| {
            let c = policy_mean(&states, ps);
            gaussian_logprob(&zs, c.mus(), POLICY_STD)
        },
        epsilon,
        sample,
        seed,
    );
    CheckOutcome {
        name: "policy-logprob",
        report,
    }
}

/// Whole-pipeline gradients: embed, graph-encode, fuse, decode, and
/// the generation loss together.
pub fn check_end_to_end(seed: u64, epsilon: f64, sample: Option<usize>) -> CheckOutcome {
    let (doc, graph) = fixture_doc(seed);
    let docs = [doc];
    let graphs = [graph];
    let vocabs = Vocabs::build(&docs, &graphs);
    let cfg = small_cfg(vocabs.tokens.len());
    let model = Model::new(cfg, vocabs, GraphMode::S3);
    let full = model.init_params(seed);
    let params = copy_prefixed(&full, &["enc.", "node.", "gat.", "dec.", "fusion."]);

    let mut grads = params.zeros_like();
    let (_, cache) = model
        .forward_ce(&graphs[0], &docs[0], &params, &DropoutMode::Disabled)
        .expect("fixture forward");
    model.backward(&cache, &params, &mut grads);

    let report = fd(
        &params,
        &grads,
        |ps| {
            model
                .forward_ce(&graphs[0], &docs[0], ps, &DropoutMode::Disabled)
                .expect("fixture forward")
                .0
        },
        epsilon,
        sample,
        seed,
    );
    CheckOutcome {
        name: "end-to-end",
        report,
    }
}

/// Every suite, in a fixed order. With `sample`, each parameter tensor
/// contributes at most that many probed coordinates (seeded, stable).
pub fn run_all(seed: u64, epsilon: f64, sample: Option<usize>) -> Vec<CheckOutcome> {
    vec![
        check_gat(seed, epsilon, sample),
        check_fusion(seed, epsilon, sample),
        check_decoder_ce(seed, epsilon, sample),
        check_policy_logprob(seed, epsilon, sample),
        check_end_to_end(seed, epsilon, sample),
    ]
}

/// Measures attention normalization and output range on the shared
/// fixtures: graph attention row sums, fusion row sums, and the
/// encoder output interval.
pub fn probe_attention(seed: u64) -> AttentionProbe {
    let (doc, graph) = fixture_doc(seed);
    let docs = [doc];
    let graphs = [graph];
    let vocabs = Vocabs::build(&docs, &graphs);
    let cfg = small_cfg(vocabs.tokens.len());
    let model = Model::new(cfg.clone(), vocabs, GraphMode::S3);
    let params = model.init_params(seed);

    let mut off = DropoutMode::Disabled.start();
    let (token_reps, _) =
        crate::encoder::embed_document(&docs[0], &params, &cfg, &model.vocabs.tokens, &mut off)
            .expect("fixture embeds");
    let adj = graphs[0].to_adjacency();
    let (reps, _) = crate::encoder::init_node_embeddings(
        &graphs[0],
        &token_reps,
        &adj,
        &params,
        &model.vocabs.concepts,
        &model.vocabs.edge_labels,
    )
    .expect("fixture nodes");
    let (u, gat_cache) = gat_forward(&adj, &reps, &params, &cfg, &mut off);

    let max_beta_row_dev = gat_cache
        .beta_row_sums()
        .iter()
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max);
    let u_min = u.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let u_max = u.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut rng = Rng::new(seed ^ 0x0F5);
    let o = random_rows(&mut rng, 4, cfg.d_model, 0.5);
    let word_mask: Vec<bool> = graphs[0]
        .nodes
        .iter()
        .map(|n| n.ntype == crate::s3::NodeType::Word)
        .collect();
    let (_, fuse_cache) = fuse_forward(&o, &u, &word_mask, &params, &mut off);
    let attn = fuse_cache.attention();
    let mut max_fusion_row_dev = 0.0f64;
    for i in 0..attn.rows() {
        let s: f64 = attn.row(i).iter().sum();
        max_fusion_row_dev = max_fusion_row_dev.max((s - 1.0).abs());
    }

    AttentionProbe {
        max_beta_row_dev,
        max_fusion_row_dev,
        u_min,
        u_max,
    }
}

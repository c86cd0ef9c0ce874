//! Two-phase training: cross-entropy only until the dev loss
//! plateaus, then joint policy-gradient pruning updates alongside the
//! generation loss.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::GenerationConfig;
use crate::encoder::{DropoutMode, EncoderConfig};
use crate::metrics::MetricReport;
use crate::model::{GraphMode, Model, ModelError, Vocabs};
use crate::numerics::{NumericsError, ParamStore, Rng};
use crate::pruner::{policy_logprob_backward, EmaBaseline, PruneThresholds};
use crate::rst::Document;
use crate::s3::S3Graph;
use crate::vocab::{Vocab, UNK};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("training split must be nonempty")]
    EmptyTrain,
    #[error("dev split must be nonempty")]
    EmptyDev,
    #[error("loss became non-finite at epoch {epoch}; diagnostic state attached")]
    NonFiniteLoss { epoch: usize, state: Box<TrainState> },
}

/// One training example: a document and its built graph.
#[derive(Debug, Clone)]
pub struct Sample {
    pub doc: Document,
    pub graph: S3Graph,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_model: f64,
    pub lr_gat: f64,
    pub lr_agent: f64,
    pub d_model: usize,
    pub k_heads: usize,
    pub gat_layers: usize,
    pub dropout: f64,
    pub patience: usize,
    pub rounds: usize,
    pub seed: u64,
    pub batch: usize,
    pub max_epochs: usize,
    pub beam: usize,
    pub max_len: usize,
    pub action_std: f64,
    pub span_threshold: f64,
    pub edu_threshold: f64,
    pub word_threshold: f64,
    pub baseline_decay: f64,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_model: 1e-3,
            lr_gat: 5e-4,
            lr_agent: 1e-3,
            d_model: 32,
            k_heads: 4,
            gat_layers: 1,
            dropout: 0.1,
            patience: 3,
            rounds: 3,
            seed: 1,
            batch: 8,
            max_epochs: 200,
            beam: 2,
            max_len: 16,
            action_std: 0.1,
            span_threshold: 0.85,
            edu_threshold: 0.60,
            word_threshold: 0.40,
            baseline_decay: 0.99,
            clip_norm: 1.0,
        }
    }
}

impl TrainConfig {
    /// Learning rates as published for the pretrained-backbone setup;
    /// the toy defaults are larger because training starts from
    /// scratch.
    pub fn with_paper_lr(mut self) -> Self {
        self.lr_model = 5e-6;
        self.lr_agent = 5e-6;
        self.lr_gat = 5e-4;
        self
    }

    pub fn thresholds(&self) -> PruneThresholds {
        PruneThresholds {
            span: self.span_threshold,
            edu: self.edu_threshold,
            word: self.word_threshold,
        }
    }

    pub fn generation(&self) -> GenerationConfig {
        GenerationConfig {
            beam: self.beam,
            max_len: self.max_len,
        }
    }

    /// Encoder shape for a given vocabulary, with this config's
    /// dropout; the position table keeps its stock capacity.
    pub fn encoder_config(&self, vocab_size: usize) -> EncoderConfig {
        let mut cfg = EncoderConfig::new(vocab_size);
        cfg.d_model = self.d_model;
        cfg.k_heads = self.k_heads;
        cfg.gat_layers = self.gat_layers;
        cfg.dropout = self.dropout;
        cfg
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.lr_model <= 0.0 || self.lr_gat <= 0.0 || self.lr_agent <= 0.0 {
            return bad("all learning rates must be positive");
        }
        if self.d_model == 0 || self.k_heads == 0 || self.d_model % self.k_heads != 0 {
            return bad("d_model must be a positive multiple of k_heads");
        }
        if self.gat_layers == 0 {
            return bad("gat_layers must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1 epoch");
        }
        if self.rounds == 0 {
            return bad("at least one pruning round is required");
        }
        if self.batch == 0 || self.max_epochs == 0 || self.max_len == 0 {
            return bad("batch, max_epochs, and max_len must be positive");
        }
        if self.beam == 0 {
            return bad("beam width must be at least 1");
        }
        if self.action_std < 0.0 {
            return bad("action_std must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad("baseline_decay must lie in [0, 1)");
        }
        if self.clip_norm <= 0.0 {
            return bad("clip_norm must be positive");
        }
        self.thresholds()
            .validate()
            .map_err(TrainError::Config)?;
        Ok(())
    }

    /// Key = value text form; every field appears once.
    pub fn to_text(&self) -> String {
        format!(
            "lr_model = {}\nlr_gat = {}\nlr_agent = {}\nd_model = {}\nk_heads = {}\ngat_layers = {}\ndropout = {}\npatience = {}\nrounds = {}\nseed = {}\nbatch = {}\nmax_epochs = {}\nbeam = {}\nmax_len = {}\naction_std = {}\nspan_threshold = {}\nedu_threshold = {}\nword_threshold = {}\nbaseline_decay = {}\nclip_norm = {}\n",
            self.lr_model,
            self.lr_gat,
            self.lr_agent,
            self.d_model,
            self.k_heads,
            self.gat_layers,
            self.dropout,
            self.patience,
            self.rounds,
            self.seed,
            self.batch,
            self.max_epochs,
            self.beam,
            self.max_len,
            self.action_std,
            self.span_threshold,
            self.edu_threshold,
            self.word_threshold,
            self.baseline_decay,
            self.clip_norm,
        )
    }

    /// Parses the key = value form. Lines may be blank or start with
    /// `#`; unknown keys and malformed values are errors that name the
    /// offending line.
    pub fn parse(text: &str) -> Result<TrainConfig, TrainError> {
        let mut cfg = TrainConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                TrainError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let fail = |what: &str| {
                TrainError::Config(format!("line {}: {} `{}`", lineno + 1, what, value))
            };
            macro_rules! num {
                ($field:ident, $ty:ty) => {
                    cfg.$field = value
                        .parse::<$ty>()
                        .map_err(|_| fail(concat!("invalid ", stringify!($field))))?
                };
            }
            match key {
                "lr_model" => num!(lr_model, f64),
                "lr_gat" => num!(lr_gat, f64),
                "lr_agent" => num!(lr_agent, f64),
                "d_model" => num!(d_model, usize),
                "k_heads" => num!(k_heads, usize),
                "gat_layers" => num!(gat_layers, usize),
                "dropout" => num!(dropout, f64),
                "patience" => num!(patience, usize),
                "rounds" => num!(rounds, usize),
                "seed" => num!(seed, u64),
                "batch" => num!(batch, usize),
                "max_epochs" => num!(max_epochs, usize),
                "beam" => num!(beam, usize),
                "max_len" => num!(max_len, usize),
                "action_std" => num!(action_std, f64),
                "span_threshold" => num!(span_threshold, f64),
                "edu_threshold" => num!(edu_threshold, f64),
                "word_threshold" => num!(word_threshold, f64),
                "baseline_decay" => num!(baseline_decay, f64),
                "clip_norm" => num!(clip_norm, f64),
                other => {
                    return Err(TrainError::Config(format!(
                        "line {}: unknown key `{}`",
                        lineno + 1,
                        other
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read_file(path: &Path) -> Result<TrainConfig, TrainError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))?;
        TrainConfig::parse(&text)
            .map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))
    }

    pub fn write_file(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_text())
            .map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))
    }
}

/// Adam with lazy updates: parameters whose gradient is exactly zero
/// for a step keep their moments and step count unchanged, so unused
/// groups (the policy during warm-up) stay bit-identical.
pub struct Adam {
    m: ParamStore,
    v: ParamStore,
    steps: HashMap<String, u64>,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Adam {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            steps: HashMap::new(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Applies one descent step; `lr_for` maps a parameter name to its
    /// group learning rate.
    pub fn step(
        &mut self,
        params: &mut ParamStore,
        grads: &ParamStore,
        lr_for: impl Fn(&str) -> f64,
    ) {
        let names: Vec<String> = params.names().cloned().collect();
        for name in names {
            let g = grads.get(&name);
            if g.data().iter().all(|&v| v == 0.0) {
                continue;
            }
            let t = self.steps.entry(name.clone()).or_insert(0);
            *t += 1;
            let bc1 = 1.0 - self.beta1.powi(*t as i32);
            let bc2 = 1.0 - self.beta2.powi(*t as i32);
            let lr = lr_for(&name);
            let m = self.m.get_mut(&name);
            for (mv, &gv) in m.data_mut().iter_mut().zip(g.data()) {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
            }
            let m_snapshot: Vec<f64> = self.m.get(&name).data().to_vec();
            let v = self.v.get_mut(&name);
            for (vv, &gv) in v.data_mut().iter_mut().zip(g.data()) {
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
            }
            let v_snapshot: Vec<f64> = self.v.get(&name).data().to_vec();
            let p = params.get_mut(&name);
            for ((pv, mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(m_snapshot)
                .zip(v_snapshot)
            {
                let mhat = mv / bc1;
                let vhat = vv / bc2;
                *pv -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Group learning rates by parameter prefix.
pub fn lr_for_name(cfg: &TrainConfig) -> impl Fn(&str) -> f64 + '_ {
    move |name: &str| {
        if name.starts_with("gat.") {
            cfg.lr_gat
        } else if name.starts_with("policy.") {
            cfg.lr_agent
        } else {
            cfg.lr_model
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warm,
    Joint,
}

/// One line of the metrics log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub train_ce: f64,
    pub dev_ce: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_reward: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_confidence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_rouge_gain: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub epoch: usize,
    pub phase: Phase,
    pub best_dev_ce: f64,
    pub params: ParamStore,
    /// Epoch whose dev loss was lowest across both phases.
    pub best_epoch: usize,
    /// Parameter snapshot from that epoch.
    pub best_params: ParamStore,
    pub baseline: EmaBaseline,
    pub transition_epoch: Option<usize>,
    pub log: Vec<EpochRecord>,
}

fn dropout_seed(seed: u64, epoch: usize, idx: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (idx as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

fn mean_dev_ce(
    model: &Model,
    params: &ParamStore,
    dev: &[Sample],
) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for s in dev {
        let (loss, _) = model.forward_ce(&s.graph, &s.doc, params, &DropoutMode::Disabled)?;
        total += loss;
    }
    Ok(total / dev.len() as f64)
}

/// Runs warm-up then joint training. The warm phase minimizes the
/// generation loss on full graphs; once dev loss stops improving by
/// more than 1e-4 for `patience` epochs the joint phase adds sampled
/// pruning trajectories and policy-gradient updates. Halts on the
/// joint plateau or `max_epochs`. Deterministic given (config, data).
pub fn train(
    model: &Model,
    train_set: &[Sample],
    dev_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainState, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    if dev_set.is_empty() {
        return Err(TrainError::EmptyDev);
    }
    let th = cfg.thresholds();
    let lr_of = lr_for_name(cfg);
    let mut params = model.init_params(cfg.seed);
    let mut adam = Adam::new(&params);
    let mut baseline = EmaBaseline::new(cfg.baseline_decay);
    let mut order_rng = Rng::new(cfg.seed ^ 0x5EED_0001);
    let mut traj_rng = Rng::new(cfg.seed ^ 0x5EED_0002);

    let mut phase = Phase::Warm;
    let mut transition_epoch = None;
    let mut best_dev = f64::INFINITY;
    let mut stale_epochs = 0usize;
    let mut log = Vec::new();

    // The plateau tracker resets at the phase transition; the best
    // checkpoint is global so evaluation can pick either snapshot.
    let mut best_params = params.clone();
    let mut best_epoch = 0usize;
    let mut best_dev_global = f64::INFINITY;

    let snapshot = |epoch: usize,
                    phase: Phase,
                    best: f64,
                    params: &ParamStore,
                    best_epoch: usize,
                    best_params: &ParamStore,
                    baseline: &EmaBaseline,
                    transition: Option<usize>,
                    log: &[EpochRecord]| TrainState {
        epoch,
        phase,
        best_dev_ce: best,
        params: params.clone(),
        best_epoch,
        best_params: best_params.clone(),
        baseline: baseline.clone(),
        transition_epoch: transition,
        log: log.to_vec(),
    };

    let mut epoch = 0;
    while epoch < cfg.max_epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order_rng.shuffle(&mut order);

        let mut epoch_ce = 0.0;
        let mut epoch_rewards: Vec<(f64, f64, f64)> = Vec::new();

        for batch in order.chunks(cfg.batch) {
            let mut grads = params.zeros_like();
            for &idx in batch {
                let sample = &train_set[idx];
                let trace = match phase {
                    Phase::Warm => None,
                    Phase::Joint => Some(model.prune_rounds(
                        &sample.graph,
                        &sample.doc,
                        &params,
                        cfg.rounds,
                        &th,
                        cfg.action_std,
                        &mut traj_rng,
                    )?),
                };
                let graph = trace.as_ref().map_or(&sample.graph, |t| &t.graph);
                let drop = DropoutMode::Seeded {
                    seed: dropout_seed(cfg.seed, epoch, idx),
                    p: cfg.dropout,
                };
                let (loss, cache) = model.forward_ce(graph, &sample.doc, &params, &drop)?;
                if !loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        state: Box::new(snapshot(
                            epoch,
                            phase,
                            best_dev,
                            &params,
                            best_epoch,
                            &best_params,
                            &baseline,
                            transition_epoch,
                            &log,
                        )),
                    });
                }
                epoch_ce += loss;
                model.backward(&cache, &params, &mut grads);
                if let Some(trace) = &trace {
                    let reward = model.compute_reward(
                        &trace.graph,
                        &sample.graph,
                        &sample.doc,
                        &params,
                        cfg.max_len,
                    )?;
                    let advantage = baseline.advantage_and_update(reward.total);
                    // The optimizer minimizes; the policy objective is
                    // maximized, so the score direction is negated.
                    for round in &trace.rounds {
                        policy_logprob_backward(
                            &round.cache,
                            &round.out.zs,
                            cfg.action_std,
                            -advantage,
                            &params,
                            &mut grads,
                        );
                    }
                    epoch_rewards.push((reward.total, reward.confidence, reward.rouge_gain));
                }
            }
            grads.scale_all(1.0 / batch.len() as f64);
            let norm = grads.global_norm();
            if norm > cfg.clip_norm {
                grads.scale_all(cfg.clip_norm / norm);
            }
            adam.step(&mut params, &grads, &lr_of);
            if !params.all_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    state: Box::new(snapshot(
                        epoch,
                        phase,
                        best_dev,
                        &params,
                        best_epoch,
                        &best_params,
                        &baseline,
                        transition_epoch,
                        &log,
                    )),
                });
            }
        }

        let train_ce = epoch_ce / train_set.len() as f64;
        let dev_ce = mean_dev_ce(model, &params, dev_set)?;
        let reward_means = if epoch_rewards.is_empty() {
            (None, None, None)
        } else {
            let n = epoch_rewards.len() as f64;
            let sum = epoch_rewards
                .iter()
                .fold((0.0, 0.0, 0.0), |a, r| (a.0 + r.0, a.1 + r.1, a.2 + r.2));
            (Some(sum.0 / n), Some(sum.1 / n), Some(sum.2 / n))
        };
        log.push(EpochRecord {
            epoch,
            phase,
            train_ce,
            dev_ce,
            mean_reward: reward_means.0,
            mean_confidence: reward_means.1,
            mean_rouge_gain: reward_means.2,
        });

        if dev_ce < best_dev_global {
            best_dev_global = dev_ce;
            best_params = params.clone();
            best_epoch = epoch;
        }
        if best_dev - dev_ce > 1e-4 {
            best_dev = dev_ce;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
        }
        epoch += 1;

        if stale_epochs >= cfg.patience {
            match phase {
                Phase::Warm => {
                    if model.mode == GraphMode::NoGraph {
                        break;
                    }
                    phase = Phase::Joint;
                    transition_epoch = Some(epoch);
                    stale_epochs = 0;
                    best_dev = f64::INFINITY;
                }
                Phase::Joint => break,
            }
        }
    }

    Ok(TrainState {
        epoch,
        phase,
        best_dev_ce: best_dev,
        params,
        best_epoch,
        best_params,
        baseline,
        transition_epoch,
        log,
    })
}

/// Beam-decodes every sample and averages the metric table. With
/// pruning enabled the policy runs deterministically (std 0) for
/// `cfg.rounds` rounds before decoding.
pub fn evaluate(
    model: &Model,
    params: &ParamStore,
    data: &[Sample],
    cfg: &TrainConfig,
    with_pruning: bool,
) -> Result<MetricReport, TrainError> {
    let gen = cfg.generation();
    let th = cfg.thresholds();
    let mut reports = Vec::with_capacity(data.len());
    let mut rng = Rng::new(cfg.seed);
    for s in data {
        let hyp = if with_pruning && model.mode == GraphMode::S3 {
            let trace =
                model.prune_rounds(&s.graph, &s.doc, params, cfg.rounds, &th, 0.0, &mut rng)?;
            model.generate_headline(&trace.graph, &s.doc, params, &gen)?
        } else {
            model.generate_headline(&s.graph, &s.doc, params, &gen)?
        };
        reports.push(MetricReport::compute(&hyp, &s.doc.headline_tokens));
    }
    Ok(MetricReport::average(&reports))
}

/// Sidecar describing everything needed to rebuild a model around a
/// checkpoint: architecture sizes, fusion mode, and the vocabularies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub mode: String,
    pub d_model: usize,
    pub k_heads: usize,
    pub vocab_size: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub gat_layers: usize,
    pub tokens: Vec<String>,
    pub concepts: Vec<String>,
    pub edge_labels: Vec<String>,
}

impl CheckpointMeta {
    pub fn from_model(model: &Model) -> CheckpointMeta {
        CheckpointMeta {
            mode: match model.mode {
                GraphMode::S3 => "s3".into(),
                GraphMode::NoGraph => "no_graph".into(),
            },
            d_model: model.cfg.d_model,
            k_heads: model.cfg.k_heads,
            vocab_size: model.cfg.vocab_size,
            dropout: model.cfg.dropout,
            max_len: model.cfg.max_len,
            gat_layers: model.cfg.gat_layers,
            tokens: model.vocabs.tokens.items().to_vec(),
            concepts: model.vocabs.concepts.items().to_vec(),
            edge_labels: model.vocabs.edge_labels.items().to_vec(),
        }
    }

    pub fn into_model(self) -> Result<Model, TrainError> {
        let mode = match self.mode.as_str() {
            "s3" => GraphMode::S3,
            "no_graph" => GraphMode::NoGraph,
            other => {
                return Err(TrainError::Config(format!(
                    "unknown fusion mode `{other}` in checkpoint meta"
                )))
            }
        };
        if self.vocab_size != self.tokens.len() {
            return Err(TrainError::Config(format!(
                "checkpoint meta vocab_size {} disagrees with token list length {}",
                self.vocab_size,
                self.tokens.len()
            )));
        }
        let cfg = EncoderConfig {
            d_model: self.d_model,
            k_heads: self.k_heads,
            vocab_size: self.vocab_size,
            dropout: self.dropout,
            max_len: self.max_len,
            gat_layers: self.gat_layers,
        };
        let vocabs = Vocabs {
            tokens: Vocab::from_items(self.tokens, UNK),
            concepts: Vocab::from_items(self.concepts, 0),
            edge_labels: Vocab::from_items(self.edge_labels, 0),
        };
        Ok(Model::new(cfg, vocabs, mode))
    }
}

fn meta_path(base: &Path) -> std::path::PathBuf {
    base.with_extension("meta.json")
}

/// Writes `<base>` (parameters) and `<base stem>.meta.json` (model
/// description) next to each other.
pub fn save_model(base: &Path, model: &Model, params: &ParamStore) -> Result<(), TrainError> {
    params.save(base)?;
    let meta = CheckpointMeta::from_model(model);
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| TrainError::Config(format!("meta serialization: {e}")))?;
    std::fs::write(meta_path(base), json)
        .map_err(|e| TrainError::Config(format!("{}: {e}", meta_path(base).display())))?;
    Ok(())
}

pub fn load_model(base: &Path) -> Result<(Model, ParamStore), TrainError> {
    let params = ParamStore::load(base)?;
    let text = std::fs::read_to_string(meta_path(base))
        .map_err(|e| TrainError::Config(format!("{}: {e}", meta_path(base).display())))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)
        .map_err(|e| TrainError::Config(format!("{}: {e}", meta_path(base).display())))?;
    Ok((meta.into_model()?, params))
}

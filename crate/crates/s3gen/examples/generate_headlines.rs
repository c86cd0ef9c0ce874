//! Trains briefly, round-trips the model through a checkpoint file,
//! and beam-decodes headlines for the corpus.

use s3gen::model::{GraphMode, Model};
use s3gen::s3::{build_s3, S3Graph};
use s3gen::synth::{generate_docs, SynthSpec};
use s3gen::trainer::{load_model, save_model, train, Sample, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec {
        n_docs: 8,
        edus_per_doc: (2, 3),
        tokens_per_edu: (3, 4),
        vocab_size: 20,
        key_edu_rate: 0.5,
        seed: 17,
    };
    let samples: Vec<Sample> = generate_docs(&spec)?
        .into_iter()
        .map(|(doc, tree, amrs)| {
            let graph = build_s3(&doc, &tree, &amrs).expect("synthetic graph builds");
            Sample { doc, graph }
        })
        .collect();
    let docs: Vec<_> = samples.iter().map(|s| s.doc.clone()).collect();
    let graphs: Vec<S3Graph> = samples.iter().map(|s| s.graph.clone()).collect();

    let cfg = TrainConfig {
        d_model: 16,
        k_heads: 2,
        max_epochs: 40,
        patience: 40,
        lr_model: 5e-3,
        seed: 2,
        ..TrainConfig::default()
    };
    let mut model = Model::from_corpus(&docs, &graphs, GraphMode::S3);
    model.cfg = cfg.encoder_config(model.vocabs.tokens.len());
    let state = train(&model, &samples, &samples[..2], &cfg)?;

    let dir = tempfile::tempdir()?;
    let ckpt = dir.path().join("demo.ckpt");
    save_model(&ckpt, &model, &state.params)?;
    let (restored, params) = load_model(&ckpt)?;
    println!("checkpoint restored from {}", ckpt.display());

    let gen = cfg.generation();
    for s in &samples {
        let hyp = restored.generate_headline(&s.graph, &s.doc, &params, &gen)?;
        println!(
            "doc `{}`  ref: {:?}  beam-{}: {:?}",
            s.doc.id, s.doc.headline_tokens, gen.beam, hyp
        );
    }
    Ok(())
}

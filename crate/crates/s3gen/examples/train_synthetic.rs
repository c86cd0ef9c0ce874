//! Trains on a small synthetic corpus and prints the epoch log: warm
//! cross-entropy epochs first, then joint epochs that add policy
//! updates driven by pruning rewards.

use s3gen::model::{GraphMode, Model};
use s3gen::s3::{build_s3, S3Graph};
use s3gen::synth::{generate_docs, SynthSpec};
use s3gen::trainer::{Sample, TrainConfig, train};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec {
        n_docs: 12,
        edus_per_doc: (2, 4),
        tokens_per_edu: (3, 5),
        vocab_size: 25,
        key_edu_rate: 0.5,
        seed: 3,
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
        max_epochs: 30,
        patience: 3,
        seed: 9,
        ..TrainConfig::default()
    };
    let mut model = Model::from_corpus(&docs, &graphs, GraphMode::S3);
    model.cfg = cfg.encoder_config(model.vocabs.tokens.len());

    // Dev comes from the training pool here; a real run holds data out.
    let state = train(&model, &samples, &samples[..2], &cfg)?;
    for r in &state.log {
        match r.mean_reward {
            None => println!(
                "epoch {:>3}  {:?}  train ce {:.4}  dev ce {:.4}",
                r.epoch, r.phase, r.train_ce, r.dev_ce
            ),
            Some(reward) => println!(
                "epoch {:>3}  {:?}  train ce {:.4}  dev ce {:.4}  reward {:.4}",
                r.epoch, r.phase, r.train_ce, r.dev_ce, reward
            ),
        }
    }
    match state.transition_epoch {
        Some(t) => println!("switched to joint updates at epoch {t}"),
        None => println!("stayed in the warm phase"),
    }
    println!(
        "best dev ce {:.4} at epoch {}",
        state.best_dev_ce, state.best_epoch
    );
    Ok(())
}

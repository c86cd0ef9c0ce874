//! Runs the pruning policy over a synthetic document: scores every
//! node, applies the per-category keep thresholds, and cascades
//! removal, round by round.

use s3gen::model::{GraphMode, Model};
use s3gen::pruner::PruneThresholds;
use s3gen::s3::{build_s3, S3Graph};
use s3gen::synth::{generate_docs, SynthSpec};
use s3gen::trainer::Sample;
use s3gen::Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec {
        n_docs: 4,
        edus_per_doc: (3, 4),
        ..SynthSpec::default()
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

    let model = Model::from_corpus(&docs, &graphs, GraphMode::S3);
    let params = model.init_params(11);
    let th = PruneThresholds::default();
    let sample = &samples[0];
    println!(
        "document `{}`: {} nodes before pruning",
        sample.doc.id,
        sample.graph.nodes.len()
    );

    // std 0 keeps the trajectory deterministic; training samples with
    // std 0.1 around the same means.
    let trace = model.prune_rounds(
        &sample.graph,
        &sample.doc,
        &params,
        3,
        &th,
        0.0,
        &mut Rng::new(0),
    )?;
    for (i, round) in trace.rounds.iter().enumerate() {
        let dropped: Vec<usize> = round
            .node_ids
            .iter()
            .zip(&round.kept)
            .filter(|(_, &keep)| !keep)
            .map(|(&id, _)| id)
            .collect();
        println!(
            "round {}: {} -> {} nodes, dropped ids {:?}",
            i + 1,
            round.nodes_before,
            round.nodes_after,
            dropped,
        );
    }
    println!(
        "trajectory log-probability {:.4} (untrained policy, actions near 0.5)",
        trace.logprob()
    );
    let stats = trace.graph.node_stats();
    println!(
        "surviving fractions: span {:.2}, edu {:.2}, amr-word {:.2}, rest-word {:.2}, dummy {:.2}",
        stats.text_span, stats.edu, stats.amr_word, stats.rest_word, stats.dummy,
    );
    Ok(())
}

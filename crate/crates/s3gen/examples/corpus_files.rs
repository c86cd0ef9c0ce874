//! Writes a synthetic corpus to disk in the three input formats, reads
//! it back the way the CLI does, and stores the built graphs.

use s3gen::amr::read_amr_file;
use s3gen::rst::{read_docs_file, read_rst_file};
use s3gen::s3::{build_s3, read_s3_file, write_s3_file};
use s3gen::synth::{generate_corpus, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let spec = SynthSpec {
        n_docs: 3,
        seed: 5,
        ..SynthSpec::default()
    };
    generate_corpus(&spec, dir.path())?;
    println!("corpus written under {}", dir.path().display());

    let docs = read_docs_file(&dir.path().join("corpus.docs"))?;
    let mut graphs = Vec::new();
    for doc in &docs {
        let tree = read_rst_file(&dir.path().join("rst").join(format!("{}.rst", doc.id)))?;
        let amrs = read_amr_file(&dir.path().join("amr").join(format!("{}.amr", doc.id)))?;
        let g = build_s3(doc, &tree, &amrs)?;
        println!(
            "doc `{}`: {} EDUs -> {} nodes, {} edges",
            doc.id,
            doc.edus.len(),
            g.nodes.len(),
            g.edges.len()
        );
        graphs.push(g);
    }

    let out = dir.path().join("corpus.s3");
    write_s3_file(&out, &graphs)?;
    let restored = read_s3_file(&out)?;
    println!(
        "stored and re-read {} graphs, node counts preserved: {}",
        restored.len(),
        restored
            .iter()
            .zip(&graphs)
            .all(|(a, b)| a.nodes.len() == b.nodes.len()),
    );
    Ok(())
}

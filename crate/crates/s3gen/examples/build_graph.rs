//! Builds the unified document graph for a tiny two-unit document and
//! prints its nodes, edges, and category breakdown.

use s3gen::amr::parse_penman;
use s3gen::rst::{parse_rst, Document, Edu};
use s3gen::s3::build_s3;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let doc = Document {
        id: "demo".into(),
        edus: vec![
            Edu {
                id: 0,
                text: "police killed the gunman".into(),
                tokens: ["police", "killed", "the", "gunman"]
                    .map(String::from)
                    .to_vec(),
            },
            Edu {
                id: 1,
                text: "after a long standoff".into(),
                tokens: ["after", "a", "long", "standoff"]
                    .map(String::from)
                    .to_vec(),
            },
        ],
        headline: "police kill gunman".into(),
        headline_tokens: ["police", "kill", "gunman"].map(String::from).to_vec(),
    };
    let tree = parse_rst(
        r#"{"relation":"Background","nuclearity":["N","S"],"children":[{"edu":0},{"edu":1}]}"#,
    )?;
    let amrs = vec![
        parse_penman("(k / kill-01~1 :ARG0 (p / police~0) :ARG1 (g / gunman~3))", 0)?,
        parse_penman("(s / standoff~3 :mod (l / long~2))", 1)?,
    ];

    let g = build_s3(&doc, &tree, &amrs)?;
    println!("document `{}`: {} nodes, {} edges", doc.id, g.nodes.len(), g.edges.len());
    for node in &g.nodes {
        println!("  node {:>2}  {:?}  {}", node.id, node.ntype, node.label);
    }
    for edge in &g.edges {
        println!("  edge {:>2} -> {:>2}  {}", edge.src, edge.dst, edge.label);
    }

    let stats = g.node_stats();
    println!("category fractions (sum {}):", stats.sum());
    println!("  text-span {:.3}", stats.text_span);
    println!("  edu       {:.3}", stats.edu);
    println!("  amr-word  {:.3}", stats.amr_word);
    println!("  rest-word {:.3}", stats.rest_word);
    println!("  dummy     {:.3}", stats.dummy);

    let adj = g.to_adjacency();
    let symmetric = (0..adj.n).all(|i| (0..adj.n).all(|j| adj.get(i, j) == adj.get(j, i)));
    println!("adjacency: {}x{}, symmetric with self-loops: {symmetric}", adj.n, adj.n);
    Ok(())
}

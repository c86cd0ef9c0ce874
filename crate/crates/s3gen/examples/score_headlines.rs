//! Scores candidate headlines against references with the bundled
//! n-gram, LCS, and brevity-aware metrics.

use s3gen::metrics::{bleu, rouge_l, rouge_n, MetricReport};

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn main() {
    let pairs = [
        ("police kill the gunman", "police killed the gunman"),
        ("the cat sat on the mat", "a cat sat on a mat"),
        ("markets rally after rate cut", "markets rally after rate cut"),
    ];
    for (cand, reference) in pairs {
        let c = toks(cand);
        let r = toks(reference);
        let report = MetricReport::compute(&c, &r);
        println!("candidate: {cand:?}");
        println!("reference: {reference:?}");
        println!("  {report}");
        println!(
            "  rouge-1 p/r/f {:.3}/{:.3}/{:.3}, rouge-l f {:.3}",
            rouge_n(&c, &r, 1).precision,
            rouge_n(&c, &r, 1).recall,
            rouge_n(&c, &r, 1).f1,
            rouge_l(&c, &r).f1,
        );
    }

    // Counting each candidate n-gram at most as often as the reference
    // holds it keeps degenerate repetition from scoring well.
    let clipped = bleu(&toks("the the the"), &toks("the cat"), 1);
    println!("clipped 1-gram precision of `the the the` vs `the cat`: {clipped:.4}");
}

//! Overlap metrics for generated headlines. All comparisons are
//! case-folded; every function accepts pre-tokenized sequences.

use std::collections::HashMap;

/// Precision, recall, and their harmonic mean. Empty inputs give zeros
/// rather than NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overlap {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Overlap {
    fn from_counts(hits: f64, cand_total: f64, ref_total: f64) -> Overlap {
        let precision = if cand_total > 0.0 { hits / cand_total } else { 0.0 };
        let recall = if ref_total > 0.0 { hits / ref_total } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Overlap {
            precision,
            recall,
            f1,
        }
    }
}

fn fold<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens.iter().map(|t| t.as_ref().to_lowercase()).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n && n > 0 {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_hits(cand: &[String], reference: &[String], n: usize) -> (usize, usize, usize) {
    let cc = ngram_counts(cand, n);
    let rc = ngram_counts(reference, n);
    let hits = cc
        .iter()
        .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
        .sum();
    let cand_total = cand.len().saturating_sub(n - 1);
    let ref_total = reference.len().saturating_sub(n - 1);
    (hits, cand_total, ref_total)
}

/// N-gram overlap with clipped counts.
pub fn rouge_n<S: AsRef<str>>(candidate: &[S], reference: &[S], n: usize) -> Overlap {
    assert!(n >= 1, "n-gram order must be positive");
    let c = fold(candidate);
    let r = fold(reference);
    let (hits, ct, rt) = clipped_hits(&c, &r, n);
    Overlap::from_counts(hits as f64, ct as f64, rt as f64)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let (n, m) = (a.len(), b.len());
    let mut prev = vec![0usize; m + 1];
    let mut cur = vec![0usize; m + 1];
    for i in 0..n {
        for j in 0..m {
            cur[j + 1] = if a[i] == b[j] {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Longest-common-subsequence overlap.
pub fn rouge_l<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> Overlap {
    let c = fold(candidate);
    let r = fold(reference);
    let l = lcs_len(&c, &r);
    Overlap::from_counts(l as f64, c.len() as f64, r.len() as f64)
}

/// Geometric mean of clipped n-gram precisions up to `max_n`, scaled by
/// the brevity penalty min(1, e^{1 − r/c}). Orders longer than the
/// candidate are skipped; a zero precision at any remaining order gives
/// a zero score.
pub fn bleu<S: AsRef<str>>(candidate: &[S], reference: &[S], max_n: usize) -> f64 {
    assert!(max_n >= 1, "n-gram order must be positive");
    let c = fold(candidate);
    let r = fold(reference);
    bleu_core(&c, std::slice::from_ref(&r), max_n)
}

/// Multi-reference BLEU: each candidate n-gram clips against its best
/// count over the references, and the brevity penalty uses the
/// reference length closest to the candidate (ties toward shorter).
pub fn bleu_refs<S: AsRef<str>>(candidate: &[S], references: &[&[S]], max_n: usize) -> f64 {
    assert!(max_n >= 1, "n-gram order must be positive");
    assert!(!references.is_empty(), "at least one reference required");
    let c = fold(candidate);
    let rs: Vec<Vec<String>> = references.iter().map(|r| fold(r)).collect();
    bleu_core(&c, &rs, max_n)
}

fn bleu_core(c: &[String], rs: &[Vec<String>], max_n: usize) -> f64 {
    if c.is_empty() || rs.iter().all(|r| r.is_empty()) {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut orders = 0usize;
    for n in 1..=max_n.min(c.len()) {
        let cand = ngram_counts(c, n);
        let ct = c.len() - (n - 1);
        let ref_tables: Vec<_> = rs.iter().map(|r| ngram_counts(r, n)).collect();
        let mut hits = 0usize;
        for (gram, &count) in &cand {
            let best = ref_tables
                .iter()
                .map(|t| t.get(*gram).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            hits += count.min(best);
        }
        if hits == 0 {
            return 0.0;
        }
        log_sum += (hits as f64 / ct as f64).ln();
        orders += 1;
    }
    if orders == 0 {
        return 0.0;
    }
    let geo = (log_sum / orders as f64).exp();
    let r_star = rs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&l| (l.abs_diff(c.len()), l))
        .expect("nonempty reference list");
    let bp = if c.len() >= r_star {
        1.0
    } else {
        (1.0 - r_star as f64 / c.len() as f64).exp()
    };
    geo * bp
}

/// Unigram-alignment score with a fragmentation penalty, restricted to
/// exact (case-folded) matches. Each candidate token is aligned to the
/// earliest unused identical reference token; chunks count the maximal
/// runs of adjacent alignments.
pub fn meteor_exact<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> f64 {
    let c = fold(candidate);
    let r = fold(reference);
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let mut used = vec![false; r.len()];
    // Candidate position -> aligned reference position.
    let mut align: Vec<Option<usize>> = Vec::with_capacity(c.len());
    for tok in &c {
        let slot = r
            .iter()
            .enumerate()
            .position(|(j, rt)| !used[j] && rt == tok);
        if let Some(j) = slot {
            used[j] = true;
            align.push(Some(j));
        } else {
            align.push(None);
        }
    }
    let m = align.iter().flatten().count();
    if m == 0 {
        return 0.0;
    }
    let mut chunks = 0usize;
    let mut prev: Option<usize> = None;
    for a in &align {
        match (prev, a) {
            (Some(p), Some(j)) if *j == p + 1 => {}
            (_, Some(_)) => chunks += 1,
            _ => {}
        }
        prev = *a;
    }
    let p = m as f64 / c.len() as f64;
    let rc = m as f64 / r.len() as f64;
    let f_mean = 10.0 * p * rc / (rc + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    f_mean * (1.0 - penalty)
}

/// Every headline metric for one candidate/reference pair. ROUGE values
/// report F1.
#[derive(Debug, Clone, Copy, Default)]
pub struct MetricReport {
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub meteor: f64,
}

impl MetricReport {
    pub fn compute<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> MetricReport {
        MetricReport {
            rouge1: rouge_n(candidate, reference, 1).f1,
            rouge2: rouge_n(candidate, reference, 2).f1,
            rouge_l: rouge_l(candidate, reference).f1,
            bleu1: bleu(candidate, reference, 1),
            bleu2: bleu(candidate, reference, 2),
            bleu3: bleu(candidate, reference, 3),
            bleu4: bleu(candidate, reference, 4),
            meteor: meteor_exact(candidate, reference),
        }
    }

    /// Field-wise mean; an empty slice gives all zeros.
    pub fn average(reports: &[MetricReport]) -> MetricReport {
        if reports.is_empty() {
            return MetricReport::default();
        }
        let n = reports.len() as f64;
        let mut avg = MetricReport::default();
        for r in reports {
            avg.rouge1 += r.rouge1;
            avg.rouge2 += r.rouge2;
            avg.rouge_l += r.rouge_l;
            avg.bleu1 += r.bleu1;
            avg.bleu2 += r.bleu2;
            avg.bleu3 += r.bleu3;
            avg.bleu4 += r.bleu4;
            avg.meteor += r.meteor;
        }
        for v in [
            &mut avg.rouge1,
            &mut avg.rouge2,
            &mut avg.rouge_l,
            &mut avg.bleu1,
            &mut avg.bleu2,
            &mut avg.bleu3,
            &mut avg.bleu4,
            &mut avg.meteor,
        ] {
            *v /= n;
        }
        avg
    }
}

impl std::fmt::Display for MetricReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "rouge1={:.4} rouge2={:.4} rougeL={:.4} bleu1={:.4} bleu2={:.4} bleu3={:.4} bleu4={:.4} meteor={:.4}",
            self.rouge1,
            self.rouge2,
            self.rouge_l,
            self.bleu1,
            self.bleu2,
            self.bleu3,
            self.bleu4,
            self.meteor
        )
    }
}

//! Verifies analytic gradients against central finite differences for
//! every differentiable component, on a sampled subset of coordinates
//! so the example stays fast. The test suite runs the exhaustive pass.

use s3gen::checks::{probe_attention, run_all};

fn main() {
    let tolerance = 1e-4;
    let mut all_ok = true;
    for outcome in run_all(7, 1e-3, Some(64)) {
        let ok = outcome.report.passed(tolerance);
        all_ok &= ok;
        println!(
            "{:<16} {} coords, max rel err {:.3e}, worst at {}[{}]  {}",
            outcome.name,
            outcome.report.coords_checked,
            outcome.report.max_rel_err,
            outcome.report.worst.0,
            outcome.report.worst.1,
            if ok { "ok" } else { "FAIL" },
        );
    }

    let probe = probe_attention(7);
    println!("attention rows deviate from 1 by at most {:.2e}", probe.max_beta_row_dev);
    println!("fusion rows deviate from 1 by at most {:.2e}", probe.max_fusion_row_dev);
    println!("graph outputs lie in ({:.4}, {:.4})", probe.u_min, probe.u_max);
    assert!(all_ok, "a gradient check failed");
}

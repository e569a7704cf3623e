//! The statistical verification suite: Monte Carlo checks of the
//! partition's promised behavior.
//!
//! Three kinds of promise get checked, at three strictnesses:
//!   - bookkeeping (plan length, constant active-set size, monotone visited
//!     sets): replayed exactly, zero tolerance;
//!   - distributional facts (each mask bit has mean `p` at every step; the
//!     visited fraction tracks `p + (1-p) r(c)`): estimated over thousands
//!     of seeded runs against a tolerance;
//!   - mechanics (uniform selection is actually uniform; simulations replay
//!     byte-identically from a seed).
//!
//! Run with: `cargo run --example verify_invariants`

use maxroam::harness::verify::{
    check_mask_statistics, check_plan_exactness, check_selection_uniformity, read_report,
    run_verification, REPORT_FILE,
};
use maxroam::{McRegime, Result};

fn main() -> Result<()> {
    // Exact replay: 100 random configurations (S <= 50, T <= 5), counting
    // every departure from the plan's bookkeeping guarantees.
    let exact = check_plan_exactness(100, 11);
    print_line(&exact);
    assert_eq!(exact.statistic, 0.0, "bookkeeping violations are counted");

    // Distributional checks in the default regime: S = 20, T = 3,
    // p in {0.3, 0.5, 0.7}. 2000 runs keeps this example quick; the
    // acceptance-grade setting is 10_000.
    let regime = McRegime::default();
    println!(
        "\nMonte Carlo regime: S = {}, T = {}, p in {:?}, 2000 runs",
        regime.layer_size, regime.tasks, regime.sharing_ratios
    );
    for check in check_mask_statistics(&regime, 2000, 11) {
        print_line(&check);
    }

    // The same checks run on any feasible shape.
    let wide = McRegime {
        layer_size: 40,
        tasks: 5,
        sharing_ratios: vec![0.4],
    };
    println!("\ncustom regime: S = {}, T = {}, p = 0.4", wide.layer_size, wide.tasks);
    for check in check_mask_statistics(&wide, 2000, 12) {
        print_line(&check);
    }

    // Selection mechanics: chi-squared test that uniform selection's draws
    // are uniform over the eligible candidates.
    print_line(&check_selection_uniformity(2000, 11));

    // Infeasible regimes are rejected up front rather than producing
    // meaningless statistics.
    let degenerate = McRegime {
        layer_size: 20,
        tasks: 3,
        sharing_ratios: vec![0.01], // round(0.01 * 20) = 0 active parameters
    };
    let err = run_verification(&degenerate, 2000, 11, std::env::temp_dir().as_path())
        .expect_err("empty active set must be rejected");
    println!("\ndegenerate regime rejected: {err}");

    // The full suite in one call, writing report.json for later inspection.
    let dir = tempfile::tempdir()?;
    let report = run_verification(&McRegime::default(), 2000, 11, dir.path())?;
    let reread = read_report(&dir.path().join(REPORT_FILE))?;
    assert_eq!(reread, report);
    println!(
        "\nfull suite: {} checks, all_pass = {} (report.json round-trips)",
        report.checks.len(),
        report.all_pass
    );
    Ok(())
}

fn print_line(check: &maxroam::harness::CheckResult) {
    println!(
        "{} {:<28} statistic {:.5} vs threshold {:.5}  ({})",
        if check.pass { "PASS" } else { "FAIL" },
        check.name,
        check.statistic,
        check.threshold,
        check.details
    );
}

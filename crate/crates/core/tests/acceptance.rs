//! Acceptance suite: one line per criterion, nonzero exit on any failure.

use std::process::ExitCode;
use std::time::Instant;

use qvel_core::validation::{run_criterion, CRITERIA};

fn main() -> ExitCode {
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failures = 0;
    for (id, _) in CRITERIA {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = run_criterion(id).expect("known id");
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!(
            "[{verdict}] {:>2} {:<30} measured={:<12} threshold={:<10.3e} ({:.1}s) {}",
            o.id,
            o.name,
            o.measured.map_or("n/a".to_string(), |m| format!("{m:.6e}")),
            o.threshold,
            start.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.passed {
            failures += 1;
        }
    }
    println!("{failures} criterion failure(s)");
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Runs the acceptance suite and prints one line per criterion.
//!
//! A second run with a single worker must render to the same bytes.

use std::process::ExitCode;

use nrule_core::acceptance::{run_acceptance, AcceptanceOptions};

fn main() -> ExitCode {
    let pooled = AcceptanceOptions::default();
    let (first, times) = run_acceptance(&pooled);
    print!("{}", first.render());
    for (c, t) in first.criteria.iter().zip(&times) {
        eprintln!("criterion {} took {:.2?}", c.id, t);
    }

    let serial = AcceptanceOptions {
        workers: Some(1),
        ..pooled
    };
    let (second, _) = run_acceptance(&serial);
    let identical = first.render() == second.render();
    println!(
        "rerun with 1 worker byte-identical: {}",
        if identical { "PASS" } else { "FAIL" }
    );

    if first.all_passed() && identical {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

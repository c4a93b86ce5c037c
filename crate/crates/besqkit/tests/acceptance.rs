//! Full acceptance suite: one PASS/FAIL line per criterion. Extra arguments
//! (criterion numbers or tags) restrict the run.

use besqkit::cli::verify::{run_verify, summary_line, VerifyOptions};
use std::process::ExitCode;

fn main() -> ExitCode {
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let opts = VerifyOptions { only, ..VerifyOptions::default() };
    let report = run_verify(&opts, |r| println!("{}", summary_line(r)));
    println!("acceptance: {} passed, {} failed", report.passed, report.failed);
    if report.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Runs every acceptance criterion at its stated tolerance over the
//! checked-in scenarios and prints one verdict line per criterion.
//!
//! Scenario artifacts land in a temporary directory unless
//! `MDFLOW_ACCEPTANCE_OUT` names one to keep.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use mdflow::cli::{suite_status, Status, Suite};

fn main() -> ExitCode {
    // libtest flags such as --list or a name filter are not meaningful here
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let keep = std::env::var_os("MDFLOW_ACCEPTANCE_OUT").map(PathBuf::from);
    let tmp = tempfile::tempdir().expect("temporary directory");
    let out = keep.unwrap_or_else(|| tmp.path().to_path_buf());

    let start = Instant::now();
    let results = Suite::new(&out).acceptance();
    println!();
    for c in &results {
        println!("{c}");
    }
    let passed = results.iter().filter(|c| c.passed).count();
    let status = suite_status(&results);
    println!(
        "\nacceptance: {passed}/{} criteria passed in {:.1} s",
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if status == Status::Pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Acceptance gate: runs the eight suite criteria at full size and prints
//! one line per criterion. Set `PROJLAT_ACCEPTANCE_SEED` to change the seed.

use std::process::ExitCode;
use std::time::Instant;

use projlat::suite::{run_all, SuiteConfig};

fn main() -> ExitCode {
    let seed = std::env::var("PROJLAT_ACCEPTANCE_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(2024);
    let cfg = SuiteConfig { seed, ..SuiteConfig::default() };
    let start = Instant::now();
    let reports = run_all(&cfg);
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.pass()).count();
    println!(
        "acceptance: {} of {} criteria passed (seed {seed}, {:.1}s)",
        reports.len() - failed,
        reports.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

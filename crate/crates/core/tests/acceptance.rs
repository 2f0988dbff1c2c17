//! Runs every acceptance criterion at its stated tolerance.

use std::process::ExitCode;
use std::time::Instant;

use polymerlab::harness::{run_criterion, ExperimentConfig, TITLES};

fn main() -> ExitCode {
    let seed = std::env::var("POLYMERLAB_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = ExperimentConfig::with_seed(seed);
    let mut failed = 0;
    for id in 1..=14u32 {
        let start = Instant::now();
        let title = TITLES[id as usize - 1];
        match run_criterion(id, &cfg) {
            Ok(out) => {
                let ok = out.rows.iter().all(|r| r.pass);
                println!("criterion {id:>2} {} {title} ({} checks, {:.1}s)", if ok { "PASS" } else { "FAIL" }, out.rows.len(), start.elapsed().as_secs_f64());
                for r in out.rows.iter().filter(|r| !r.pass) {
                    println!("    {} N={:?}: estimate {:e} se {:e} target {:e} tolerance {:e}", r.name, r.n, r.estimate, r.se, r.target, r.tolerance);
                }
                failed += usize::from(!ok);
            }
            Err(e) => {
                println!("criterion {id:>2} FAIL {title}: {e}");
                failed += 1;
            }
        }
    }
    println!("acceptance: {} of 14 criteria pass (seed {seed})", 14 - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}

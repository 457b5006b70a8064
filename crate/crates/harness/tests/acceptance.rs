//! Runs the acceptance configs as a suite (twice, for the byte-identity
//! check) and prints one verdict line per criterion. Exits nonzero when any
//! criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;

use stochrep::{run_suite, CriterionId, SuiteOptions};

fn main() -> ExitCode {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/acceptance");
    let out = tempfile::tempdir().expect("temp dir");
    let opts = SuiteOptions {
        check_reproducible: true,
        runtime_limit_seconds: Some(600.0),
        ..SuiteOptions::default()
    };
    let suite = match run_suite(&dir, out.path(), opts) {
        Ok(s) => s,
        Err(e) => {
            println!("acceptance suite did not run: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!();
    let mut failed = 0;
    for id in CriterionId::ALL {
        let row = suite.row(id).expect("every criterion has a row");
        let ok = row.pass && !row.members.is_empty();
        println!(
            "{} {:<24} {} [{}]",
            if ok { "PASS" } else { "FAIL" },
            id.as_str(),
            row.anchor,
            row.members.join(", ")
        );
        if !ok {
            failed += 1;
        }
    }
    for m in suite.members.iter().filter(|m| !m.pass) {
        for f in &m.failures {
            println!("    {}: {f}", m.name);
        }
    }
    if let Some(r) = &suite.reproducibility {
        println!(
            "    suite runtime {:.1} s (limit {:.0} s); differing samples: {:?}; differing reports: {:?}",
            r.first_run_seconds, r.runtime_limit_seconds, r.differing_samples, r.differing_reports
        );
    }
    println!("\n{} of {} criteria pass", CriterionId::ALL.len() - failed, CriterionId::ALL.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

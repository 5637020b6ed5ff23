//! Acceptance run: each criterion prints one `PASS` or `FAIL` line and the
//! process exits non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

mod api;
mod model;
mod sha;
mod split;
mod staleness;
mod versioning;

pub type Outcome = Result<String, String>;

type Criterion = (&'static str, fn() -> Outcome);

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    match payload.downcast::<String>() {
        Ok(s) => format!("panicked: {s}"),
        Err(payload) => match payload.downcast::<&str>() {
            Ok(s) => format!("panicked: {s}"),
            Err(_) => "panicked".into(),
        },
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("discovery-completeness", discovery::check),
        ("versioning-oracle", versioning::check),
        ("atomicity", versioning::check_atomicity),
        ("split-hash-independence", split::check),
        ("staleness-boundary", staleness::check),
        ("sha256-vectors", sha::check),
        ("api-contract", api::check),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| Err(panic_message(p)));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name}: {reason} [{secs:.1}s]");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Acceptance runner: one PASS/FAIL line per criterion, each with a pinned
//! wall-clock limit. Numeric tolerances live in the included check files:
//! 1e-9 for perceptual oracles and agreement statistics, 1e-12 for metrics,
//! and rtol 1e-3 / atol 1e-6 over 100 seeded points for gradient checks.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

#[path = "../../core/tests/perceptual_oracles.rs"]
mod perceptual_oracles;
#[path = "../../core/tests/loss_gradients.rs"]
mod loss_gradients;
#[path = "../../core/tests/loss_oracles.rs"]
mod loss_oracles;
#[path = "../../core/tests/metric_report.rs"]
mod metric_report;
#[path = "../../core/tests/review_state_machine.rs"]
mod review_state_machine;
#[path = "../../core/tests/schema_roundtrip.rs"]
mod schema_roundtrip;
#[path = "../../service/tests/http_contract.rs"]
mod http_contract;
mod support;

struct Criterion {
    name: &'static str,
    limit: Duration,
    check: fn(),
}

fn service_contract() {
    tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()
        .unwrap()
        .block_on(http_contract::run_all());
}

fn loss_kernels() {
    loss_gradients::run_all();
    loss_oracles::run_all();
}

const CRITERIA: [Criterion; 8] = [
    Criterion {
        name: "perceptual oracle equivalence",
        limit: Duration::from_secs(60),
        check: perceptual_oracles::run_all,
    },
    Criterion {
        name: "extraction determinism",
        limit: Duration::from_secs(120),
        check: support::extraction_determinism,
    },
    Criterion {
        name: "loss-kernel verification",
        limit: Duration::from_secs(30),
        check: loss_kernels,
    },
    Criterion {
        name: "metric correctness",
        limit: Duration::from_secs(10),
        check: metric_report::run_all,
    },
    Criterion {
        name: "agreement statistics",
        limit: Duration::from_secs(10),
        check: review_state_machine::run_agreement,
    },
    Criterion {
        name: "schema round-trip",
        limit: Duration::from_secs(10),
        check: schema_roundtrip::run_all,
    },
    Criterion {
        name: "HITL state machine",
        limit: Duration::from_secs(10),
        check: review_state_machine::run_state_machine,
    },
    Criterion {
        name: "service contract",
        limit: Duration::from_secs(30),
        check: service_contract,
    },
];

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    payload
        .downcast_ref::<String>()
        .cloned()
        .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn main() -> ExitCode {
    // Included files have no crate root next to them for regression files.
    std::env::set_var("PROPTEST_DISABLE_FAILURE_PERSISTENCE", "1");
    let mut failed = 0;
    for c in &CRITERIA {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.check));
        let elapsed = start.elapsed();
        let verdict = match result {
            Err(payload) => Err(panic_message(payload.as_ref()).lines().next().unwrap_or("").to_string()),
            Ok(()) if elapsed > c.limit => Err(format!("exceeded {} s", c.limit.as_secs())),
            Ok(()) => Ok(()),
        };
        match verdict {
            Ok(()) => println!("PASS  {:<32} {:>7.2} s (limit {} s)", c.name, elapsed.as_secs_f64(), c.limit.as_secs()),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {:<32} {:>7.2} s (limit {} s): {reason}", c.name, elapsed.as_secs_f64(), c.limit.as_secs());
            }
        }
    }
    println!("{} of {} criteria passed", CRITERIA.len() - failed, CRITERIA.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

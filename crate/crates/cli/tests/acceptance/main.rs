//! Release gate: runs every acceptance criterion and prints one line each.

// `ensure!` negates comparisons so a NaN counts as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod dsp;
mod gradients;
mod pipeline;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

pub type Outcome = Result<String, String>;

type Criterion = (&'static str, Box<dyn FnOnce(&mut pipeline::Stage) -> Outcome>);

/// Fails the enclosing criterion with a message when the condition is false.
#[macro_export]
macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub fn within(elapsed: Duration, budget: Duration, what: &str) -> Result<(), String> {
    if elapsed > budget {
        return Err(format!("{what} took {:.0} s, budget {:.0} s", elapsed.as_secs_f64(), budget.as_secs_f64()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let mut stage = match pipeline::Stage::new() {
        Ok(s) => s,
        Err(e) => {
            println!("acceptance setup failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    let criteria: Vec<Criterion> = vec![
        ("gradient correctness", Box::new(|_| gradients::run())),
        ("viterbi exactness", Box::new(|_| dsp::viterbi())),
        ("dsp oracles", Box::new(|_| dsp::oracles())),
        ("segmentation", Box::new(pipeline::segmentation)),
        ("separation", Box::new(pipeline::separation)),
        ("classification", Box::new(pipeline::classification)),
        ("determinism", Box::new(pipeline::determinism)),
        ("persistence", Box::new(pipeline::persistence)),
        ("end-to-end identify", Box::new(pipeline::end_to_end)),
    ];
    // Numeric arguments select a subset of criteria; cargo's own flags are ignored.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (mut passed, mut failed) = (0, 0);
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| run(&mut stage)))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_message(&p))));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => {
                passed += 1;
                println!("criterion {} PASS {name}: {detail} ({secs:.1} s)", i + 1);
            }
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL {name}: {detail} ({secs:.1} s)", i + 1);
            }
        }
    }
    println!("acceptance: {passed} passed, {failed} failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".into()
    }
}

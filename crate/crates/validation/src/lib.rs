//! A small runner for long numerical checks: each check gets a wall-clock
//! budget and reports a single line with its measured values.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

pub struct Check {
    pub id: usize,
    pub name: &'static str,
    pub budget: Duration,
    pub run: fn() -> Outcome,
}

#[derive(Debug)]
pub struct Report {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    pub elapsed: Duration,
    pub line: String,
}

fn panic_message(e: Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

/// Runs one check. A panic counts as a failure, and so does exceeding the budget.
pub fn run_check(c: &Check) -> Report {
    let t0 = Instant::now();
    let outcome = panic::catch_unwind(AssertUnwindSafe(c.run))
        .unwrap_or_else(|e| Outcome::new(false, format!("panicked: {}", panic_message(e))));
    let elapsed = t0.elapsed();
    let in_budget = elapsed <= c.budget;
    let pass = outcome.pass && in_budget;
    let over = if in_budget { String::new() } else { format!(" over budget of {} s", c.budget.as_secs()) };
    let line = format!(
        "criterion {:2} {} {} [{:.1} s{over}] {}",
        c.id,
        if pass { "PASS" } else { "FAIL" },
        c.name,
        elapsed.as_secs_f64(),
        outcome.detail
    );
    Report { id: c.id, name: c.name, pass, elapsed, line }
}

/// Runs the checks whose names contain any of `filters` (all of them when
/// `filters` is empty), printing one line each, and returns the reports.
pub fn run_all(checks: &[Check], filters: &[String]) -> Vec<Report> {
    let hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let reports: Vec<Report> = checks
        .iter()
        .filter(|c| filters.is_empty() || filters.iter().any(|f| c.name.contains(f.as_str())))
        .map(|c| {
            let r = run_check(c);
            println!("{}", r.line);
            r
        })
        .collect();
    panic::set_hook(hook);
    let failed = reports.iter().filter(|r| !r.pass).count();
    println!("acceptance: {} passed, {} failed of {}", reports.len() - failed, failed, reports.len());
    reports
}

//! Runs every numbered acceptance check and prints one PASS/FAIL line each.

use std::time::Instant;

use jonesbeta::verify::{checks, VerifyConfig};

#[test]
fn acceptance_criteria() {
    let cfg = VerifyConfig::default();
    let mut failed = Vec::new();
    for c in checks() {
        let t = Instant::now();
        let r = c.run(&cfg);
        println!("{} ({:.1}s)", r.line(), t.elapsed().as_secs_f64());
        if !r.passed {
            failed.push(r.id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

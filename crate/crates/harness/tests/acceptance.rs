//! One line per acceptance criterion, then a single assertion over all of them.

use ewkit::verify::{run_suite, Suite};

#[test]
fn acceptance_criteria() {
    let reports = run_suite(Suite::All);
    for r in &reports {
        println!("{r}");
    }
    let failed: Vec<u8> = reports.iter().filter(|r| !r.passed()).map(|r| r.id).collect();
    println!("acceptance: {} of {} criteria pass", reports.len() - failed.len(), reports.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

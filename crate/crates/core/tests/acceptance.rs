use gaussloss::acceptance::{criteria, Report};

#[test]
fn acceptance_criteria() {
    let reports: Vec<Report> = criteria().iter().map(|c| c.run()).collect();
    for r in &reports {
        println!("{}", r.line());
    }
    let failed: Vec<u32> = reports.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

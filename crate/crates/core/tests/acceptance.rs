use coupling_lab::harness::verify::{run_acceptance, AcceptanceOptions};

#[test]
fn acceptance_suite() {
    let outcomes = run_acceptance(&AcceptanceOptions {
        echo: false,
        ..AcceptanceOptions::default()
    });
    println!();
    for o in &outcomes {
        println!("{o}");
    }
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
    println!("{} of {} criteria passed", outcomes.len() - failed.len(), outcomes.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

macro_rules! example {
    ($module:ident, $file:literal) => {
        #[allow(dead_code)]
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }
    };
}

example!(pca, "pca.rs");
example!(brockett, "brockett.rs");
example!(distance, "distance.rs");
example!(regression_fit, "regression_fit.rs");
example!(survival_fit, "survival_fit.rs");
example!(numeric_gradient_threads, "numeric_gradient_threads.rs");
example!(csv_workflow, "csv_workflow.rs");

#[test]
fn pca_example_matches_svd() {
    assert!(pca::run().unwrap() < 1e-3);
}

#[test]
fn brockett_example_reaches_oracle() {
    assert!(brockett::run(60, 4, 300).unwrap() < 1e-6);
}

#[test]
fn distance_example_values() {
    let v = distance::run().unwrap();
    assert!((v[4] - 2f64.sqrt()).abs() < 1e-12);
    assert!((v[9] - 0.5).abs() < 1e-12);
}

#[test]
fn regression_example_recovers_the_index() {
    let (sir, phd) = regression_fit::run().unwrap();
    assert!(sir > 0.95 && phd > 0.95, "{sir} {phd}");
}

#[test]
fn survival_example_runs() {
    let d = survival_fit::run(150, 6, 2).unwrap();
    assert!((0.0..=2.0).contains(&d));
}

#[test]
fn gradient_example_is_thread_invariant() {
    assert_eq!(numeric_gradient_threads::run(120).unwrap(), 0.0);
}

#[test]
fn csv_example_round_trips() {
    assert_eq!(csv_workflow::run().unwrap(), 4);
}

use dlkd_core::gradcheck_suite::{model_check, op_checks, run_suite};

const SEEDS: u64 = 10;
const TOLERANCE: f64 = 1e-4;

#[test]
fn every_operation_over_ten_seeds() {
    let outcomes = run_suite(0, SEEDS).unwrap();
    assert!(outcomes.len() as u64 >= SEEDS * 2);
    for o in &outcomes {
        assert!(o.passed && o.max_relative_error < TOLERANCE, "{} seed {}: {:e}", o.name, o.seed, o.max_relative_error);
    }
}

#[test]
fn suite_covers_the_classifier_and_losses() {
    let names: Vec<String> = op_checks(3).unwrap().into_iter().map(|o| o.name).collect();
    for needed in ["conv3d", "relu", "avg_pool_global", "affine", "log_softmax", "cross_entropy", "kl_soft_targets", "student_total_loss", "r2plus1d_block"] {
        assert!(names.iter().any(|n| n == needed), "missing {needed}");
    }
    assert!(model_check(3).unwrap().passed);
}

use nalgebra::DMatrix;
use pepkit::minors::{
    closed_form_det, combination_min_eigenvalue, det_recursion, direct_minor_det,
    positive_definiteness_suite, recursion_identities, verification_report, MinorSequenceSpec,
};

#[test]
fn recursion_identities_hold_up_to_thirty_steps() {
    for n in 2..=30 {
        for r in recursion_identities(n).unwrap() {
            assert!(
                r.pass,
                "{} N={} k={:?} residual {:.3e}",
                r.identity, r.n, r.k, r.residual
            );
        }
    }
}

#[test]
fn one_step_minor_by_hand() {
    // S_1 = [[2 lambda_1, 1 - lambda_1], [1 - lambda_1, 1]] with lambda_1 = 1/2.
    let s1 = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    assert!((s1.determinant() - 0.75).abs() < 1e-15);
    assert!((direct_minor_det(1, 1).unwrap() - 0.75).abs() < 1e-15);
    let spec = MinorSequenceSpec::certificate(1).unwrap();
    assert!((det_recursion(&spec, 1).unwrap() - 0.75).abs() < 1e-15);
    assert!((closed_form_det(1, 1).unwrap() - 0.75).abs() < 1e-15);
}

#[test]
fn three_step_minors_by_hand() {
    // N = 3: lambda = (1/6, 2/5, 3/4), d = (1/3, 4/5, 3/2, 1), a = (7/30, 7/20, 1/4).
    let m = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0 / 3.0,
            7.0 / 30.0,
            7.0 / 20.0,
            0.25,
            7.0 / 30.0,
            0.8,
            7.0 / 20.0,
            0.25,
            7.0 / 20.0,
            7.0 / 20.0,
            1.5,
            0.25,
            0.25,
            0.25,
            0.25,
            1.0,
        ],
    );
    for k in 0..=3 {
        let expected = m.view((0, 0), (k + 1, k + 1)).clone_owned().determinant();
        assert!(
            (closed_form_det(3, k).unwrap() - expected).abs() < 1e-13 * expected.abs().max(1.0),
            "k={k}"
        );
    }
}

#[test]
fn eigenvalue_suite_small_range() {
    let rows = positive_definiteness_suite(30).unwrap();
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|r| r.pass));
}

#[test]
fn combinations_outside_the_unit_interval_are_reported_not_judged() {
    for h in [-0.5, 1.5, 3.0] {
        assert!(combination_min_eigenvalue(6, h).unwrap().is_finite());
    }
    // Far outside the interval the combination loses definiteness.
    assert!(combination_min_eigenvalue(6, 3.0).unwrap() < 0.0);
}

#[test]
fn report_serializes_with_capital_n() {
    let records = verification_report(3, 1).unwrap();
    assert!(records.iter().all(|r| r.pass));
    let json = serde_json::to_value(&records).unwrap();
    let first = &json[0];
    for key in ["identity", "N", "k", "residual", "pass"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
}

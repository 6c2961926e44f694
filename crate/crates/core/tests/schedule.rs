use pepkit::schedule::{
    fgm_schedule, gm_schedule, hbm_schedule, load_schedule, save_schedule, FgmTSequence,
    FgmVariant, StepSchedule,
};
use pepkit::Error;
use proptest::prelude::*;

fn arb_schedule() -> impl Strategy<Value = StepSchedule> {
    (1usize..9).prop_flat_map(|n| {
        prop::collection::vec(-3.0f64..3.0, n * (n + 1) / 2).prop_map(move |v| {
            let mut s = StepSchedule::zeros(n).unwrap();
            let mut it = v.into_iter();
            for i in 1..=n {
                for k in 0..i {
                    s.set(i, k, it.next().unwrap());
                }
            }
            s
        })
    })
}

proptest! {
    #[test]
    fn json_round_trip_is_exact(s in arb_schedule()) {
        prop_assert_eq!(StepSchedule::from_json_str(&s.to_json_string()).unwrap(), s.clone());
        let via_serde: StepSchedule = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        prop_assert_eq!(via_serde, s);
    }

    #[test]
    fn negation_is_an_involution(s in arb_schedule()) {
        prop_assert_eq!(s.negated().negated(), s.clone());
        prop_assert_eq!(s.len(), s.n() * (s.n() + 1) / 2);
    }

    #[test]
    fn truncation_keeps_leading_rows(s in arb_schedule(), cut in 1usize..9) {
        prop_assume!(cut <= s.n());
        let t = s.truncated(cut).unwrap();
        for i in 1..=cut {
            prop_assert_eq!(t.row(i), s.row(i));
        }
    }

    #[test]
    fn heavy_ball_coefficients(n in 1usize..12, alpha in 0.1f64..2.0, beta in 0.0f64..0.99) {
        let s = hbm_schedule(n, alpha, beta).unwrap();
        for i in 1..=n {
            for k in 0..i {
                let expected = alpha * beta.powi((i - 1 - k) as i32);
                prop_assert!((s.get(i, k) - expected).abs() <= 1e-14 * expected.abs().max(1.0));
            }
        }
    }
}

#[test]
fn momentum_sequence_satisfies_its_quadratic() {
    let t = FgmTSequence::new(40);
    assert_eq!(t.get(1), 1.0);
    for i in 1..40 {
        let next = t.get(i + 1);
        assert!((next * next - next - t.get(i) * t.get(i)).abs() < 1e-12 * next * next);
    }
}

#[test]
fn accelerated_schedule_shapes() {
    let main = fgm_schedule(6, FgmVariant::Main).unwrap();
    let aux = fgm_schedule(6, FgmVariant::Auxiliary).unwrap();
    assert_eq!(main.n(), 6);
    assert_eq!(aux.n(), 5);
    for i in 1..=5 {
        assert_eq!(main.row(i), aux.row(i));
    }
    assert_eq!(main.row(6), &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    // Two steps: y_2 = x_1 exactly since t_1 = 1 gives no momentum.
    assert_eq!(
        fgm_schedule(2, FgmVariant::Main).unwrap().to_rows(),
        vec![vec![1.0], vec![0.0, 1.0]]
    );
    assert!(fgm_schedule(1, FgmVariant::Auxiliary).is_err());
}

#[test]
fn constant_schedule_detection() {
    assert_eq!(
        gm_schedule(4, 0.7).unwrap().as_constant_gradient(),
        Some(0.7)
    );
    assert_eq!(
        hbm_schedule(3, 1.0, 0.5).unwrap().as_constant_gradient(),
        None
    );
}

#[test]
fn file_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let s = fgm_schedule(7, FgmVariant::Main).unwrap();
    save_schedule(&s, &path).unwrap();
    assert_eq!(load_schedule(&path).unwrap(), s);

    std::fs::write(&path, r#"{"n": 2, "rows": [[1.0], [0.5]]}"#).unwrap();
    match load_schedule(&path) {
        Err(Error::ScheduleFormat { row: Some(2), .. }) => {}
        other => panic!("expected a row error, got {other:?}"),
    }
    std::fs::write(&path, "{\"n\": 1, \"rows\": [[\"x\"]]}").unwrap();
    match load_schedule(&path) {
        Err(Error::ScheduleFormat {
            row: Some(1),
            col: Some(_),
            ..
        }) => {}
        other => panic!("expected a cell error, got {other:?}"),
    }
    assert!(StepSchedule::zeros(0).is_err());
    assert!(StepSchedule::from_rows(&[vec![1.0, 2.0]]).is_err());
}

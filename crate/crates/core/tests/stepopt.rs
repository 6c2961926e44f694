use pepkit::bounds::conjectured_gm_factor;
use pepkit::schedule::StepSchedule;
use pepkit::sdp::SdpConfig;
use pepkit::stepopt::{
    crosscheck, recover_steps, render_schedule, solve_lin, substitution_residual, RecoveryPath,
    SUBSTITUTION_TOL,
};

#[test]
fn single_step_optimum_is_the_balanced_step() {
    // One step of length h: max(1/(4h+2), (1-h)^2/2) is smallest at h = 3/2, value 1/8.
    let sol = solve_lin(1, &SdpConfig::default()).unwrap();
    assert!((sol.factor - 0.125).abs() < 1e-7);
    assert!((conjectured_gm_factor(1, 1.5) - 0.125).abs() < 1e-15);
    let rec = recover_steps(&sol).unwrap();
    assert!((rec.schedule.get(1, 0) - 1.5).abs() < 1e-5);
}

#[test]
fn recovered_schedules_reproduce_the_relaxation_value() {
    let cfg = SdpConfig::default();
    for n in 1..=8 {
        let sol = solve_lin(n, &cfg).unwrap();
        let rec = recover_steps(&sol).unwrap();
        assert!(substitution_residual(&rec.schedule, &sol) <= SUBSTITUTION_TOL);
        if rec.path == RecoveryPath::ForwardSolve {
            assert!(rec.verbatim_residual > SUBSTITUTION_TOL);
        }
        let cc = crosscheck(&rec.schedule, &sol, &cfg).unwrap();
        assert!(cc.pass, "n={n}: {cc:?}");
    }
}

#[test]
fn optimized_values_increase_with_steps() {
    let cfg = SdpConfig::default();
    let values: Vec<f64> = (1..=6)
        .map(|n| solve_lin(n, &cfg).unwrap().inverse_factor())
        .collect();
    assert!(values.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn five_step_rendering() {
    let sol = solve_lin(5, &SdpConfig::default()).unwrap();
    let s = recover_steps(&sol).unwrap().schedule;
    let text = render_schedule(&s, false);
    assert_eq!(text.lines().count(), 5);
    assert_eq!(text.matches("/L f'").count(), 15);
    assert_eq!(
        text.lines().next().unwrap(),
        "x_1 <- x_0 - 1.6180/L f'(x_0)"
    );
    assert_eq!(
        render_schedule(&s.negated(), true),
        text.replace(" - ", " + ")
    );
    let zero = render_schedule(&StepSchedule::zeros(1).unwrap(), false);
    assert_eq!(zero, "x_1 <- x_0 - 0.0000/L f'(x_0)\n");
}

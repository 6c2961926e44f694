use nalgebra::DVector;
use pepkit::schedule::gm_schedule;
use pepkit::simulate::{
    cocoercivity_check, fgm_equivalence_suite, nu, phi1_oracle, phi1_oracle_with_dim, phi2_oracle,
    primal_feasibility_check, random_quadratic_oracle, run_fo, FunctionOracle,
};
use proptest::prelude::*;

fn central_difference(o: &FunctionOracle, x: &DVector<f64>, eps: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut hi = x.clone();
        let mut lo = x.clone();
        hi[i] += eps;
        lo[i] -= eps;
        (o.value(&hi) - o.value(&lo)) / (2.0 * eps)
    })
}

fn check_gradient(o: &FunctionOracle, x: &DVector<f64>) -> f64 {
    let g = o.gradient(x);
    (g - central_difference(o, x, 1e-6)).amax()
}

proptest! {
    #[test]
    fn phi1_gradient_matches_finite_differences(
        n in 1usize..20,
        h in 0.1f64..1.9,
        x in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let o = phi1_oracle_with_dim(n, h, 1.5, 1.0, 3).unwrap();
        let x = DVector::from_vec(x);
        prop_assert!(check_gradient(&o, &x) < 1e-6);
    }

    #[test]
    fn quadratic_gradient_matches_finite_differences(
        dim in 1usize..8,
        seed in any::<u64>(),
        scale in 0.1f64..3.0,
    ) {
        let o = random_quadratic_oracle(dim, 2.0, seed).unwrap();
        let x = DVector::from_fn(dim, |i, _| scale * ((i as f64) - 1.5));
        prop_assert!(check_gradient(&o, &x) < 1e-6);
    }

    #[test]
    fn quadratic_oracles_are_cocoercive(dim in 1usize..8, seed in any::<u64>()) {
        let o = random_quadratic_oracle(dim, 3.0, seed).unwrap();
        prop_assert_eq!(cocoercivity_check(&o, 40, seed, 1e-12).violations, 0);
    }
}

#[test]
fn phi1_is_cocoercive_across_regimes() {
    for (n, h) in [(1, 0.5), (5, 1.0), (20, 1.5)] {
        let o = phi1_oracle(n, h, 2.0, 1.0).unwrap();
        let r = cocoercivity_check(&o, 500, 99, 1e-12);
        assert_eq!(r.violations, 0, "n={n} h={h} worst {}", r.max_violation);
    }
}

#[test]
fn worst_case_function_values_by_hand() {
    // One step of length 1 on phi1 with L = R = 1: rho = 1/3, x_1 = (2/3) e_1,
    // f(x_1) = (1/3)(2/3) - (1/2)(1/9) = 1/6.
    let s = gm_schedule(1, 1.0).unwrap();
    let traj = run_fo(&phi1_oracle(1, 1.0, 1.0, 1.0).unwrap(), &s, &nu(4)).unwrap();
    assert!((traj.points[1][0] - 2.0 / 3.0).abs() < 1e-15);
    assert!((traj.attained_factor().unwrap() - 1.0 / 6.0).abs() < 1e-15);

    // On (L/2)|x|^2 a step of h/L scales x by (1 - h).
    let traj = run_fo(
        &phi2_oracle(1.0, 4).unwrap(),
        &gm_schedule(3, 0.5).unwrap(),
        &nu(4),
    )
    .unwrap();
    assert!((traj.attained_factor().unwrap() - 0.5f64.powi(6) / 2.0).abs() < 1e-15);
}

#[test]
fn worst_case_trajectories_are_feasible() {
    let s = gm_schedule(6, 0.8).unwrap();
    let traj = run_fo(&phi1_oracle(6, 0.8, 1.0, 1.0).unwrap(), &s, &nu(4)).unwrap();
    let feas = primal_feasibility_check(&traj).unwrap();
    assert!(feas.is_feasible(1e-12));
    assert!((feas.delta_n() - 1.0 / (4.0 * 6.0 * 0.8 + 2.0)).abs() < 1e-12);
}

#[test]
fn accelerated_equivalence_small_suite() {
    let r = fgm_equivalence_suite(20, 5, 10, 1).unwrap();
    assert!(r.max_residual < 1e-10);
}

#[test]
fn trajectory_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    let traj = run_fo(
        &phi2_oracle(1.0, 2).unwrap(),
        &gm_schedule(4, 1.0).unwrap(),
        &nu(2),
    )
    .unwrap();
    traj.write_csv(std::fs::File::create(&path).unwrap())
        .unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert_eq!(
        text.lines().next().unwrap(),
        "step,value,gradient_norm,distance_to_opt"
    );
}

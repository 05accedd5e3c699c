use aggdiff_core::evolve::characteristic_time;
use aggdiff_core::{
    classify, compute_thresholds, run, solve_extremal_with, threshold_profile, ExtremalOptions, ModelParams, Outcome,
    RadialField, RadialGrid, ReducedKernel, SimConfig, Verdict,
};
use approx::assert_relative_eq;

fn params() -> ModelParams {
    ModelParams::new(3, 1.1, 1.2, 0.0).unwrap()
}

fn cstar(n: usize) -> f64 {
    let g = RadialGrid::new(n, 4.0).unwrap();
    let k = ReducedKernel::for_params(&g, &params()).unwrap();
    solve_extremal_with(&params(), &g, &k, &ExtremalOptions::default()).unwrap().cstar
}

#[test]
fn optimal_constant_settles_under_refinement() {
    let (a, b, c) = (cstar(256), cstar(512), cstar(1024));
    assert!(a < b && b < c);
    assert!(c - b < b - a);
    assert_relative_eq!(b, c, max_relative = 1e-3);
}

fn l1_distance(u: &RadialField, v: &RadialField) -> f64 {
    let g = u.grid();
    u.values().iter().zip(v.values()).enumerate().map(|(i, (a, b))| (a - b).abs() * g.volume(i)).sum()
}

#[test]
fn threshold_profile_is_nearly_stationary() {
    let p = params();
    let e = p.exponents();
    let g = RadialGrid::new(256, 4.0).unwrap();
    let k = ReducedKernel::for_params(&g, &p).unwrap();
    let solved = solve_extremal_with(&p, &g, &k, &ExtremalOptions::default()).unwrap();
    let t = compute_thresholds(&solved, &e).unwrap();
    let u0 = threshold_profile(&solved, &e).unwrap().resized(512);
    let kernel = ReducedKernel::for_params(u0.grid(), &p).unwrap();

    let c = classify(&u0, &t, &e, &kernel, 1e-3).unwrap();
    assert_eq!(c.verdict, Verdict::Indeterminate);
    assert!(c.margins.product.abs() < 1e-12);

    // the threshold is a saddle of the dynamics, so the discrete drift grows
    // with time; one characteristic time stays within a few parts per mille
    let t_c = characteristic_time(&u0, &e).unwrap();
    let cfg = SimConfig { t_end: t_c, record_every: 1000, ..Default::default() };
    let trace = run(&u0, &kernel, &e, &cfg).unwrap();
    assert_eq!(trace.outcome, Outcome::CompletedBounded);
    let drift = l1_distance(&trace.final_state, &u0) / u0.mass();
    assert!(drift < 5e-3, "{drift}");
    assert!(trace.mass_drift() < 1e-12);
}

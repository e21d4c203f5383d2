use dimer_core::exec::Execution;
use dimer_core::fixedpoints::{self, GridAxis, Region, Stability};
use dimer_core::meanfield::{self, BlochState};
use dimer_core::{ModelParams, Solver};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn quartic_agrees_with_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut compared = 0;
    for _ in 0..1000 {
        let g = rng.gen_range(-3.0..3.0);
        let gamma = rng.gen_range(0.0..3.0);
        let p = ModelParams::symmetric(1.0, g, gamma).unwrap();
        let label = fixedpoints::region(&p).unwrap();
        if label.near_boundary() || g == 0.0 {
            continue;
        }
        let closed = fixedpoints::closed_form_points(&p).unwrap();
        let quartic = fixedpoints::quartic_points(&p).unwrap();
        assert_eq!(closed.len(), quartic.len(), "g = {g}, gamma = {gamma}");
        assert_eq!(closed.len(), label.label.expected_count());
        for (pts, other) in [(&closed, &quartic), (&quartic, &closed)] {
            for a in pts {
                let nearest = other.iter().map(|b| distance(a, b)).fold(f64::INFINITY, f64::min);
                assert!(nearest < 1e-10, "g = {g}, gamma = {gamma}: {a:?} unmatched ({nearest:e})");
            }
        }
        compared += 1;
    }
    assert!(compared > 950);
}

#[test]
fn self_trapping_threshold_moves_with_decay() {
    for gamma in [0.0, 0.2, 0.5, 0.8, 0.95] {
        let threshold = (1.0f64 - gamma * gamma).sqrt();
        for (g, count) in [(threshold - 1e-4, 2), (threshold + 1e-4, 4)] {
            let p = ModelParams::symmetric(1.0, g, gamma).unwrap();
            assert_eq!(fixedpoints::fixed_points(&p).unwrap().len(), count, "gamma = {gamma}, g = {g}");
        }
    }
}

#[test]
fn region_structure_of_the_symmetric_plane() {
    let census = |g: f64, gamma: f64| {
        let p = ModelParams::symmetric(1.0, g, gamma).unwrap();
        let mut classes: Vec<&str> = fixedpoints::fixed_points(&p).unwrap().iter().map(|r| r.class.as_str()).collect();
        classes.sort();
        (fixedpoints::region(&p).unwrap().label, classes)
    };
    assert_eq!(census(0.3, 0.4), (Region::A, vec!["center", "center"]));
    assert_eq!(census(0.5, 1.5), (Region::B, vec!["sink", "source"]));
    assert_eq!(census(2.0, 0.5), (Region::C, vec!["center", "saddle", "sink", "source"]));
    assert_eq!(census(2.0, 0.0), (Region::C, vec!["center", "center", "center", "saddle"]));
}

#[test]
fn exceptional_point_is_marginal() {
    let p = ModelParams::symmetric(1.0, 0.0, 1.0).unwrap();
    assert!(fixedpoints::is_exceptional_point(&p));
    let records = fixedpoints::fixed_points(&p).unwrap();
    assert!(!records.is_empty());
    assert!(records.iter().all(|r| r.class == Stability::Marginal));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn returned_points_are_zeros_of_the_flow(
        eps in -1.0..1.0f64,
        g in -3.0..3.0f64,
        gamma in 0.0..2.0f64,
    ) {
        let p = ModelParams::new(eps, 1.0, g, gamma).unwrap();
        for r in fixedpoints::fixed_points(&p).unwrap() {
            prop_assert!(r.residual < 1e-10, "{r:?}");
            let norm = r.s.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn index_sum_is_the_euler_characteristic(
        eps in -1.0..1.0f64,
        g in -3.0..3.0f64,
        gamma in 0.0..2.0f64,
    ) {
        let p = ModelParams::new(eps, 1.0, g, gamma).unwrap();
        let records = fixedpoints::fixed_points(&p).unwrap();
        prop_assume!(records.iter().all(|r| r.class != Stability::Marginal));
        prop_assert_eq!(fixedpoints::index_sum_check(&records), 2);
    }

    #[test]
    fn fixed_points_stay_put_under_the_flow(
        eps in -0.5..0.5f64,
        g in -2.0..2.0f64,
        gamma in 0.0..1.5f64,
    ) {
        let p = ModelParams::new(eps, 1.0, g, gamma).unwrap();
        let solver = Solver::with_tol(1e-12);
        for r in fixedpoints::fixed_points(&p).unwrap() {
            // Rounding-level offsets grow like exp(Re lambda T); beyond this
            // budget no f64 trajectory can stay within 1e-6.
            let growth = r.eigenvalues.iter().map(|l| l.re).fold(0.0, f64::max) * 10.0;
            if growth > 20.0 {
                continue;
            }
            let s0 = BlochState::new(r.s[0], r.s[1], r.s[2], 1.0);
            let (_, s) = meanfield::integrate_bloch(&s0, &p, 0.0, &[10.0], &solver).unwrap()[0];
            let drift = distance(&s.spin(), &r.s);
            prop_assert!(drift < 1e-6, "{:?} drifted by {drift:e}", r.class);
        }
    }
}

#[test]
fn scan_is_identical_sequentially_and_in_parallel() {
    let g = GridAxis::new(0.0, 3.0, 41).unwrap();
    let gamma = GridAxis::new(0.0, 2.0, 37).unwrap();
    let seq = fixedpoints::bifurcation_scan(1.0, g, gamma, Execution::Sequential).unwrap();
    let par = fixedpoints::bifurcation_scan(1.0, g, gamma, Execution::Parallel).unwrap();
    assert_eq!(seq, par);
    assert!(!seq.crossings.is_empty());
    assert_eq!(seq.exceptional_points, vec![(0.0, 1.0)]);
}

#[test]
fn scan_counts_follow_the_region_boundaries() {
    let g = GridAxis::new(0.0125, 2.9875, 120).unwrap();
    let gamma = GridAxis::new(0.0125, 1.9875, 80).unwrap();
    let scan = fixedpoints::bifurcation_scan(1.0, g, gamma, Execution::default()).unwrap();
    for pt in &scan.points {
        let expected = if pt.g * pt.g + pt.gamma * pt.gamma < 1.0 || pt.gamma > 1.0 { 2 } else { 4 };
        assert_eq!(pt.count, expected, "({}, {})", pt.g, pt.gamma);
        if let Some(sum) = pt.index_sum {
            assert_eq!(sum, 2);
        }
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(GridAxis::new(1.0, 0.0, 10).is_err());
    assert!(GridAxis::new(0.0, 1.0, 1).is_err());
    let p = ModelParams::new(0.3, 1.0, 1.0, 0.2).unwrap();
    assert!(fixedpoints::region(&p).is_err());
    assert!(fixedpoints::closed_form_points(&p).is_err());
    assert!(fixedpoints::classify([0.5, 0.0, 0.0], &p).is_err());
}

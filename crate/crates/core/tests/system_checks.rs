//! System-level structure checks: inversion is an involution, the exact
//! shiftability certificate agrees with brute-force scans, and validation
//! reports say what they mean.

use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use rdsline::fixtures;
use rdsline::homeo::MonotoneMap;
use rdsline::system::{check_shiftability, validate_system, MissingDirection, RandomSystem};

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn affine(slope: (i64, i64), intercept: (i64, i64)) -> MonotoneMap {
    MonotoneMap::affine(ratio(slope.0, slope.1), ratio(intercept.0, intercept.1))
        .expect("positive slope")
}

fn all_fixtures() -> Vec<RandomSystem> {
    vec![
        fixtures::drift_walk(),
        fixtures::doubling_escape(),
        fixtures::symmetric_walk(),
        fixtures::split_walk(),
        fixtures::sin_lattice(),
    ]
}

#[test]
fn inversion_is_an_involution_on_every_fixture() {
    // Labels record the construction history, so compare the substance.
    for sys in all_fixtures() {
        let back = sys.inverse().inverse();
        assert_eq!(back.maps(), sys.maps(), "{}", sys.label());
        assert_eq!(back.probs(), sys.probs(), "{}", sys.label());
    }
}

#[test]
fn inverse_swaps_the_direction_of_every_map() {
    for sys in all_fixtures() {
        let inv = sys.inverse();
        for (m, mi) in sys.maps().iter().zip(inv.maps()) {
            for x in [-7.5, -1.0, 0.0, 0.25, 3.0, 42.0] {
                let fwd = m.eval_f64(x) - x;
                let back = mi.eval_f64(m.eval_f64(x)) - m.eval_f64(x);
                // The inverse undoes the displacement (up to bisection slack
                // for numeric kinds).
                assert!(
                    (fwd + back).abs() <= 1e-9,
                    "{}: displacement not undone at {x}",
                    sys.label()
                );
            }
        }
        assert_eq!(inv.probs(), sys.probs());
    }
}

/// Brute scan: at each grid point some map must move strictly left and some
/// strictly right. The exact certificate must agree wherever the scan looks.
fn scan_agrees(sys: &RandomSystem, lo: f64, hi: f64, points: usize) -> Result<(), String> {
    let report = check_shiftability(sys);
    for j in 0..=points {
        let x = lo + (hi - lo) * j as f64 / points as f64;
        let left = sys.maps().iter().any(|m| m.eval_f64(x) < x);
        let right = sys.maps().iter().any(|m| m.eval_f64(x) > x);
        if report.shiftable && !(left && right) {
            return Err(format!("certificate says shiftable but x={x} is stuck"));
        }
    }
    Ok(())
}

#[test]
fn exact_certificate_is_confirmed_by_dense_scans() {
    for sys in all_fixtures() {
        let report = check_shiftability(&sys);
        assert!(report.shiftable, "{}", sys.label());
        scan_agrees(&sys, -100.0, 100.0, 10_000).unwrap();
    }
}

#[test]
fn one_sided_systems_are_caught_with_a_counterexample() {
    let sys = RandomSystem::new(
        "right_only",
        vec![affine((1, 1), (1, 1)), affine((1, 1), (2, 1))],
        vec![ratio(1, 2), ratio(1, 2)],
    )
    .unwrap();
    let report = check_shiftability(&sys);
    assert!(!report.shiftable);
    assert!(report.proved, "all maps exact, so the verdict is a proof");
    let ce = report.counterexample.expect("a stuck point is named");
    assert_eq!(ce.missing, MissingDirection::Left);
}

#[test]
fn fixed_points_of_scaling_maps_break_shiftability() {
    // 2x fixes 0, and below 0 nothing moves right; any named point must be
    // genuinely stuck on the reported side.
    let sys =
        RandomSystem::new("scaling_only", vec![affine((2, 1), (0, 1))], vec![ratio(1, 1)])
            .unwrap();
    let report = check_shiftability(&sys);
    assert!(!report.shiftable);
    assert!(report.proved);
    let ce = report.counterexample.unwrap();
    let x: f64 = ce.point.parse().expect("integer counterexample");
    let moved = 2.0 * x;
    match ce.missing {
        MissingDirection::Left => assert!(moved >= x, "claimed no left-mover at {x}"),
        MissingDirection::Right => assert!(moved <= x, "claimed no right-mover at {x}"),
    }
}

#[test]
fn compact_displacement_holds_pointwise_but_bounds_differ() {
    // Compact displacement is a pointwise property (each point's one-step
    // image is a finite set), so every finitely generated system has it.
    for sys in all_fixtures() {
        assert!(validate_system(&sys).compact_displacement, "{}", sys.label());
    }
    // The uniform displacement bound is a different, stronger notion: shifts
    // have one, scaling maps do not.
    let bound = |sys: &RandomSystem| {
        sys.maps().iter().map(|m| m.displacement_bound_f64()).collect::<Option<Vec<_>>>()
    };
    assert!(bound(&fixtures::drift_walk()).is_some());
    assert!(bound(&fixtures::sin_lattice()).is_some());
    assert!(bound(&fixtures::split_walk()).is_none(), "2x displaces unboundedly");
    assert!(bound(&fixtures::doubling_escape()).is_none(), "2x+1 piece displaces unboundedly");
}

#[test]
fn probabilities_must_sum_to_one() {
    let err = RandomSystem::new(
        "bad_probs",
        vec![affine((1, 1), (1, 1)), affine((1, 1), (-1, 1))],
        vec![ratio(1, 2), ratio(1, 3)],
    )
    .unwrap_err();
    assert!(err.to_string().contains("5/6"), "{err}");
}

proptest! {
    /// Random two-map affine systems: the exact certificate agrees with a
    /// dense scan over a window containing every candidate fixed point.
    #[test]
    fn random_affine_systems_match_the_scan(
        s1 in (1i64..40, 1i64..10),
        c1 in (-30i64..30, 1i64..10),
        s2 in (1i64..40, 1i64..10),
        c2 in (-30i64..30, 1i64..10),
    ) {
        let sys = RandomSystem::new(
            "random_affine",
            vec![affine(s1, c1), affine(s2, c2)],
            vec![ratio(1, 2), ratio(1, 2)],
        )
        .unwrap();
        let report = check_shiftability(&sys);
        prop_assert!(report.proved);
        if report.shiftable {
            scan_agrees(&sys, -200.0, 200.0, 4_000).map_err(|e| {
                TestCaseError::fail(format!("{e}"))
            })?;
        } else {
            // The named counterexample must really be stuck on one side.
            let ce = report.counterexample.unwrap();
            let x: f64 = ce.point.parse().unwrap_or_else(|_| {
                // Rational counterexamples print as n/d.
                let (n, d) = ce.point.split_once('/').expect("rational form");
                n.parse::<f64>().unwrap() / d.parse::<f64>().unwrap()
            });
            let left = sys.maps().iter().any(|m| m.eval_f64(x) < x);
            let right = sys.maps().iter().any(|m| m.eval_f64(x) > x);
            match ce.missing {
                MissingDirection::Left => prop_assert!(!left, "claimed stuck-left at {x}"),
                MissingDirection::Right => prop_assert!(!right, "claimed stuck-right at {x}"),
            }
        }
    }
}

//! The bundled example systems, one per behavior class plus the
//! lattice-supported sine perturbation.
//!
//! These are the systems the integration suite and the shipped JSON fixture
//! files are built around; the JSON files must parse to exactly these.

use crate::homeo::{MonotoneMap, Piece, PlMap, SinPerturbMap};
use crate::rational::parse_ratio;
use crate::system::RandomSystem;
use num_rational::BigRational;

fn rat(s: &str) -> BigRational {
    parse_ratio(s).expect("fixture literal")
}

fn shift(c: &str) -> MonotoneMap {
    MonotoneMap::affine(rat("1"), rat(c)).expect("unit slope is valid")
}

/// Class 1: `{x+1 w.p. 2/3, x-1 w.p. 1/3}`. Everything drifts to +infinity;
/// the inverse drifts to -infinity.
pub fn drift_walk() -> RandomSystem {
    RandomSystem::new("drift_walk", vec![shift("1"), shift("-1")], vec![rat("2/3"), rat("1/3")])
        .expect("fixture is valid")
}

/// Class 2: `{f1 w.p. 1/2, x-1 w.p. 1/2}` where f1 doubles the push above 0
/// (`x+1` below 0, `2x+1` above). Forward trajectories escape to +infinity;
/// inverse trajectories stay recurrent.
pub fn doubling_escape() -> RandomSystem {
    let f1 = PlMap::new(
        vec![rat("0")],
        vec![
            Piece { slope: rat("1"), intercept: rat("1") },
            Piece { slope: rat("2"), intercept: rat("1") },
        ],
    )
    .expect("continuous at 0");
    RandomSystem::new(
        "doubling_escape",
        vec![MonotoneMap::PiecewiseLinear(f1), shift("-1")],
        vec![rat("1/2"), rat("1/2")],
    )
    .expect("fixture is valid")
}

/// Class 3: the symmetric `{x+1, x-1}` walk; recurrent both ways.
pub fn symmetric_walk() -> RandomSystem {
    RandomSystem::new(
        "symmetric_walk",
        vec![shift("1"), shift("-1")],
        vec![rat("1/2"), rat("1/2")],
    )
    .expect("fixture is valid")
}

/// Class 4: symmetric walk plus a doubling map `2x` with probability 1/5.
/// Escape is certain but its direction depends on the start point.
pub fn split_walk() -> RandomSystem {
    RandomSystem::new(
        "split_walk",
        vec![
            shift("1"),
            shift("-1"),
            MonotoneMap::affine(rat("2"), rat("0")).expect("positive slope"),
        ],
        vec![rat("2/5"), rat("2/5"), rat("1/5")],
    )
    .expect("fixture is valid")
}

/// Recurrent system whose stationary measure concentrates on the integers:
/// `{x+1, x-1, x + sin(2*pi*x)/10}` with equal probabilities. All three maps
/// preserve the integer lattice.
pub fn sin_lattice() -> RandomSystem {
    RandomSystem::new(
        "sin_lattice",
        vec![
            shift("1"),
            shift("-1"),
            MonotoneMap::SinPerturb(SinPerturbMap::new(rat("1/10")).expect("amplitude below 1/(2*pi)")),
        ],
        vec![rat("1/3"), rat("1/3"), rat("1/3")],
    )
    .expect("fixture is valid")
}

/// The four class fixtures in class order.
pub fn class_fixtures() -> [(u8, RandomSystem); 4] {
    [(1, drift_walk()), (2, doubling_escape()), (3, symmetric_walk()), (4, split_walk())]
}

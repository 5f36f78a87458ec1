//! A random system: finitely many strictly increasing maps applied i.i.d.
//! with exact rational probabilities.
//!
//! Sampling is exact: probabilities are reduced to integer weights over a
//! common denominator and drawn by rejection on raw `u64`s, so the map
//! frequencies are the stated rationals with no rounding bias.

use crate::homeo::{validate_map, CompiledMap, MonotoneMap, ValidationReport};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};
use rand::RngCore;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SystemError {
    #[error("a system needs at least one map")]
    Empty,
    #[error("map and probability counts differ ({maps} maps, {probs} probabilities)")]
    LengthMismatch { maps: usize, probs: usize },
    #[error("probability {0} of map {1} is not positive")]
    NonPositiveProbability(String, usize),
    #[error("probabilities sum to {0}, not 1")]
    ProbabilitySum(String),
    #[error("common denominator {0} exceeds u64; exact sampling unavailable")]
    DenominatorOverflow(String),
}

/// Finite family of maps with exact probabilities summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomSystem {
    label: String,
    maps: Vec<MonotoneMap>,
    probs: Vec<BigRational>,
}

impl RandomSystem {
    pub fn new(
        label: impl Into<String>,
        maps: Vec<MonotoneMap>,
        probs: Vec<BigRational>,
    ) -> Result<Self, SystemError> {
        if maps.is_empty() {
            return Err(SystemError::Empty);
        }
        if maps.len() != probs.len() {
            return Err(SystemError::LengthMismatch { maps: maps.len(), probs: probs.len() });
        }
        for (i, p) in probs.iter().enumerate() {
            if !p.is_positive() {
                return Err(SystemError::NonPositiveProbability(p.to_string(), i));
            }
        }
        let total: BigRational = probs.iter().sum();
        if !total.is_one() {
            return Err(SystemError::ProbabilitySum(total.to_string()));
        }
        Ok(Self { label: label.into(), maps, probs })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn maps(&self) -> &[MonotoneMap] {
        &self.maps
    }

    pub fn probs(&self) -> &[BigRational] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// Same probabilities attached to the inverse maps.
    pub fn inverse(&self) -> RandomSystem {
        RandomSystem {
            label: format!("inverse({})", self.label),
            maps: self.maps.iter().map(MonotoneMap::invert).collect(),
            probs: self.probs.clone(),
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for (i, m) in self.maps.iter().enumerate() {
            for v in validate_map(m).violations {
                report.violations.push(format!("map {i}: {v}"));
            }
        }
        report
    }

    /// `sup_i sup_{x >= c} (x - f_i(x))`: the largest single-step move to the
    /// left from any point at or above `c`. `None` when unbounded or unknown.
    /// Simulation uses this to certify early escapes.
    pub fn max_left_step_above(&self, c: f64) -> Option<f64> {
        let mut worst = f64::NEG_INFINITY;
        for m in &self.maps {
            worst = worst.max(max_left_step_above(m, c)?);
        }
        Some(worst)
    }

    /// Mirror bound: `sup_i sup_{x <= c} (f_i(x) - x)`, the largest move to
    /// the right from any point at or below `c`.
    pub fn max_right_step_below(&self, c: f64) -> Option<f64> {
        let mut worst = f64::NEG_INFINITY;
        for m in &self.maps {
            worst = worst.max(max_right_step_below(m, c)?);
        }
        Some(worst)
    }

    pub fn compile(&self) -> Result<CompiledSystem, SystemError> {
        let denom = self
            .probs
            .iter()
            .fold(BigInt::one(), |acc, p| acc.lcm(p.denom()));
        let denom_u64 = denom
            .to_u64()
            .ok_or_else(|| SystemError::DenominatorOverflow(denom.to_string()))?;
        let mut cum_weights = Vec::with_capacity(self.probs.len());
        let mut acc: u64 = 0;
        for p in &self.probs {
            let w = (p * BigRational::from_integer(denom.clone()))
                .to_integer()
                .to_u64()
                .expect("weight fits: it is at most the denominator");
            acc += w;
            cum_weights.push(acc);
        }
        debug_assert_eq!(acc, denom_u64);
        // Largest multiple of denom that fits in 2^64 draws; rejecting the
        // overhang keeps every residue exactly equally likely.
        let overhang = ((u64::MAX % denom_u64) + 1) % denom_u64;
        let accept_max = u64::MAX - overhang;
        Ok(CompiledSystem {
            maps: self.maps.iter().map(MonotoneMap::compile).collect(),
            cum_weights,
            denom: denom_u64,
            accept_max,
        })
    }
}

fn max_left_step_above(map: &MonotoneMap, c: f64) -> Option<f64> {
    match map {
        MonotoneMap::PiecewiseLinear(_) => {
            let CompiledMap::Pl { breaks, slopes, intercepts } = map.compile() else {
                unreachable!("piecewise-linear compiles to Pl");
            };
            // x - f(x) restricted to piece k is (1 - s_k) x - i_k: increasing
            // without bound when s_k < 1 on an unbounded stretch, otherwise
            // maximal at an endpoint of the piece's overlap with [c, inf).
            let mut worst = f64::NEG_INFINITY;
            let n = slopes.len();
            for k in 0..n {
                let lo = if k == 0 { f64::NEG_INFINITY } else { breaks[k - 1] };
                let hi = if k == n - 1 { f64::INFINITY } else { breaks[k] };
                if hi <= c {
                    continue;
                }
                let left = lo.max(c);
                let g = |x: f64| (1.0 - slopes[k]) * x - intercepts[k];
                if slopes[k] < 1.0 {
                    if hi.is_infinite() {
                        return None;
                    }
                    worst = worst.max(g(hi));
                } else {
                    worst = worst.max(g(left));
                }
            }
            Some(worst)
        }
        _ => map.displacement_bound_f64(),
    }
}

fn max_right_step_below(map: &MonotoneMap, c: f64) -> Option<f64> {
    match map {
        MonotoneMap::PiecewiseLinear(_) => {
            let CompiledMap::Pl { breaks, slopes, intercepts } = map.compile() else {
                unreachable!("piecewise-linear compiles to Pl");
            };
            // f(x) - x on piece k is (s_k - 1) x + i_k: unbounded toward
            // -inf when s_k < 1 on an unbounded left stretch, otherwise
            // maximal at an endpoint of the piece's overlap with (-inf, c].
            let mut worst = f64::NEG_INFINITY;
            let n = slopes.len();
            for k in 0..n {
                let lo = if k == 0 { f64::NEG_INFINITY } else { breaks[k - 1] };
                let hi = if k == n - 1 { f64::INFINITY } else { breaks[k] };
                if lo > c {
                    continue;
                }
                let right = hi.min(c);
                let g = |x: f64| (slopes[k] - 1.0) * x + intercepts[k];
                if slopes[k] < 1.0 {
                    if lo.is_infinite() {
                        return None;
                    }
                    worst = worst.max(g(lo));
                } else {
                    worst = worst.max(g(right));
                }
            }
            Some(worst)
        }
        _ => map.displacement_bound_f64(),
    }
}

/// Which direction of movement is missing at a non-shiftable point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MissingDirection {
    /// No map moves the point strictly left.
    Left,
    /// No map moves the point strictly right.
    Right,
}

/// Point at which the shiftability hypothesis fails, with the failing side.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftCounterexample {
    pub point: String,
    pub missing: MissingDirection,
}

/// Outcome of the shiftability check. `proved` distinguishes the exact
/// piecewise certificate (all maps exact) from a finite-window scan.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftabilityReport {
    pub shiftable: bool,
    pub proved: bool,
    pub window: Option<(f64, f64)>,
    pub counterexample: Option<ShiftCounterexample>,
}

/// Decides whether every point can be moved strictly left by some map and
/// strictly right by another.
///
/// For systems of exact maps the verdict is a proof: `f_i(x) - x` is
/// piecewise linear, so its sign is constant between the collected candidate
/// points (breakpoints and fixed points of extended pieces), and testing the
/// candidates plus one interior point per region covers every real.
/// Systems with numeric maps get a grid scan over a fixed window instead,
/// reported with `proved: false`.
pub fn check_shiftability(sys: &RandomSystem) -> ShiftabilityReport {
    if sys.maps().iter().all(MonotoneMap::is_exact) {
        exact_shiftability(sys)
    } else {
        window_shiftability(sys, -64.0, 64.0, 1 << 12)
    }
}

fn exact_shiftability(sys: &RandomSystem) -> ShiftabilityReport {
    let one = BigRational::one();
    let mut candidates: Vec<BigRational> = Vec::new();
    for m in sys.maps() {
        let MonotoneMap::PiecewiseLinear(pl) = m else {
            unreachable!("exact maps are piecewise-linear");
        };
        candidates.extend_from_slice(pl.breakpoints());
        for p in pl.pieces() {
            if p.slope != one {
                // Fixed point of the extended piece: s x + i = x.
                candidates.push(&p.intercept / (&one - &p.slope));
            }
        }
    }
    candidates.sort();
    candidates.dedup();

    let mut test_points = crate::homeo::region_representatives(&candidates);
    test_points.extend(candidates);
    for x in &test_points {
        let mut up = false;
        let mut down = false;
        for m in sys.maps() {
            let y = m.eval_exact(x).expect("exact map");
            if y > *x {
                up = true;
            } else if y < *x {
                down = true;
            }
        }
        if !(up && down) {
            return ShiftabilityReport {
                shiftable: false,
                proved: true,
                window: None,
                counterexample: Some(ShiftCounterexample {
                    point: x.to_string(),
                    missing: if up { MissingDirection::Left } else { MissingDirection::Right },
                }),
            };
        }
    }
    ShiftabilityReport { shiftable: true, proved: true, window: None, counterexample: None }
}

fn window_shiftability(sys: &RandomSystem, lo: f64, hi: f64, cells: u32) -> ShiftabilityReport {
    let compiled: Vec<CompiledMap> = sys.maps().iter().map(MonotoneMap::compile).collect();
    for j in 0..=cells {
        let x = lo + (hi - lo) * j as f64 / cells as f64;
        let mut up = false;
        let mut down = false;
        for m in &compiled {
            let y = m.eval(x);
            if y > x {
                up = true;
            } else if y < x {
                down = true;
            }
        }
        if !(up && down) {
            return ShiftabilityReport {
                shiftable: false,
                proved: false,
                window: Some((lo, hi)),
                counterexample: Some(ShiftCounterexample {
                    point: format!("{x}"),
                    missing: if up { MissingDirection::Left } else { MissingDirection::Right },
                }),
            };
        }
    }
    ShiftabilityReport { shiftable: true, proved: false, window: Some((lo, hi)), counterexample: None }
}

/// Combined health report: map validity, shiftability, and the automatic
/// bounded-image property of finite systems.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemReport {
    pub violations: Vec<String>,
    pub shiftability: ShiftabilityReport,
    /// Finitely many continuous maps always send a point into a bounded set.
    pub compact_displacement: bool,
    pub notes: Vec<String>,
}

impl SystemReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_system(sys: &RandomSystem) -> SystemReport {
    let shiftability = check_shiftability(sys);
    let mut notes = vec![
        "probability normalization is enforced at construction (exact rational sum)".to_string(),
    ];
    if !shiftability.proved {
        if let Some((lo, hi)) = shiftability.window {
            notes.push(format!(
                "shiftability checked on [{lo}, {hi}] only; system has numeric maps, no global proof"
            ));
        }
    }
    SystemReport {
        violations: sys.validate().violations,
        shiftability,
        compact_displacement: true,
        notes,
    }
}

/// f64 evaluation form of a system plus its exact index sampler.
#[derive(Clone, Debug)]
pub struct CompiledSystem {
    maps: Vec<CompiledMap>,
    cum_weights: Vec<u64>,
    denom: u64,
    accept_max: u64,
}

impl CompiledSystem {
    /// Draws a map index with probability weight_i / denom, exactly.
    #[inline]
    pub fn sample(&self, rng: &mut impl RngCore) -> usize {
        loop {
            let r = rng.next_u64();
            if r <= self.accept_max {
                let bucket = r % self.denom;
                return self.cum_weights.partition_point(|w| *w <= bucket);
            }
        }
    }

    #[inline]
    pub fn eval_map(&self, index: usize, x: f64) -> f64 {
        self.maps[index].eval(x)
    }

    #[inline]
    pub fn step(&self, rng: &mut impl RngCore, x: f64) -> (usize, f64) {
        let i = self.sample(rng);
        (i, self.maps[i].eval(x))
    }

    pub fn map_count(&self) -> usize {
        self.maps.len()
    }

    pub fn maps(&self) -> &[CompiledMap] {
        &self.maps
    }

    /// Integer weight of each map over the common denominator.
    pub fn weights(&self) -> Vec<u64> {
        let mut prev = 0;
        self.cum_weights
            .iter()
            .map(|&c| {
                let w = c - prev;
                prev = c;
                w
            })
            .collect()
    }

    pub fn denom(&self) -> u64 {
        self.denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::parse_ratio;

    fn rat(s: &str) -> BigRational {
        parse_ratio(s).unwrap()
    }

    fn shift(c: &str) -> MonotoneMap {
        MonotoneMap::affine(rat("1"), rat(c)).unwrap()
    }

    #[test]
    fn probabilities_must_sum_to_one() {
        let err = RandomSystem::new("bad", vec![shift("1"), shift("-1")], vec![rat("1/2"), rat("1/3")])
            .unwrap_err();
        assert!(matches!(err, SystemError::ProbabilitySum(_)));
    }

    #[test]
    fn zero_probability_is_rejected() {
        let err = RandomSystem::new("bad", vec![shift("1"), shift("-1")], vec![rat("1"), rat("0")])
            .unwrap_err();
        assert!(matches!(err, SystemError::NonPositiveProbability(..)));
    }

    #[test]
    fn sampler_weights_match_probabilities() {
        let sys = RandomSystem::new(
            "drift",
            vec![shift("1"), shift("-1")],
            vec![rat("2/3"), rat("1/3")],
        )
        .unwrap();
        let c = sys.compile().unwrap();
        assert_eq!(c.denom(), 3);
        assert_eq!(c.weights(), vec![2, 1]);
        // 2^64 mod 3 == 1, so exactly the top raw value is rejected.
        assert_eq!(c.accept_max, u64::MAX - 1);
    }

    #[test]
    fn sampler_buckets_are_exact() {
        let sys = RandomSystem::new(
            "split",
            vec![shift("1"), shift("-1"), shift("2")],
            vec![rat("2/5"), rat("2/5"), rat("1/5")],
        )
        .unwrap();
        let c = sys.compile().unwrap();
        // Feed fixed raw values through a stub rng.
        struct Stub(Vec<u64>, usize);
        impl RngCore for Stub {
            fn next_u32(&mut self) -> u32 {
                self.next_u64() as u32
            }
            fn next_u64(&mut self) -> u64 {
                let v = self.0[self.1];
                self.1 += 1;
                v
            }
            fn fill_bytes(&mut self, _: &mut [u8]) {
                unimplemented!()
            }
            fn try_fill_bytes(&mut self, _: &mut [u8]) -> Result<(), rand::Error> {
                unimplemented!()
            }
        }
        // Buckets mod 5: 0,1 -> map 0; 2,3 -> map 1; 4 -> map 2.
        let mut rng = Stub(vec![0, 1, 2, 3, 4, 5], 0);
        let drawn: Vec<usize> = (0..6).map(|_| c.sample(&mut rng)).collect();
        assert_eq!(drawn, vec![0, 0, 1, 1, 2, 0]);
    }

    #[test]
    fn inverse_flips_maps_and_keeps_probs() {
        let sys = RandomSystem::new(
            "drift",
            vec![shift("1"), shift("-1")],
            vec![rat("2/3"), rat("1/3")],
        )
        .unwrap();
        let inv = sys.inverse();
        assert_eq!(inv.probs(), sys.probs());
        let x = rat("7/3");
        assert_eq!(inv.maps()[0].eval_exact(&x).unwrap(), &x - rat("1"));
    }

    #[test]
    fn left_step_bound_for_unit_shifts() {
        let sys = RandomSystem::new(
            "drift",
            vec![shift("1"), shift("-1")],
            vec![rat("2/3"), rat("1/3")],
        )
        .unwrap();
        assert_eq!(sys.max_left_step_above(500.0), Some(1.0));
    }

    #[test]
    fn left_step_bound_unbounded_for_contractions() {
        // x/2 moves points at x far to the left without bound.
        let half = MonotoneMap::affine(rat("1/2"), rat("0")).unwrap();
        let sys = RandomSystem::new("contract", vec![half, shift("1")], vec![rat("1/2"), rat("1/2")])
            .unwrap();
        assert_eq!(sys.max_left_step_above(0.0), None);
    }

    #[test]
    fn shiftability_exact_for_two_sided_shifts() {
        let sys = RandomSystem::new(
            "walk",
            vec![shift("1"), shift("-1")],
            vec![rat("1/2"), rat("1/2")],
        )
        .unwrap();
        let rep = check_shiftability(&sys);
        assert!(rep.shiftable && rep.proved);
    }

    #[test]
    fn one_sided_system_is_not_shiftable() {
        let sys = RandomSystem::new("up", vec![shift("1")], vec![rat("1")]).unwrap();
        let rep = check_shiftability(&sys);
        assert!(!rep.shiftable && rep.proved);
        assert_eq!(rep.counterexample.unwrap().missing, MissingDirection::Left);
    }

    #[test]
    fn fixed_point_blocks_shiftability() {
        // 2x and x/2 both fix 0; nothing moves 0.
        let double = MonotoneMap::affine(rat("2"), rat("0")).unwrap();
        let halve = MonotoneMap::affine(rat("1/2"), rat("0")).unwrap();
        let sys =
            RandomSystem::new("pinned", vec![double, halve], vec![rat("1/2"), rat("1/2")]).unwrap();
        let rep = check_shiftability(&sys);
        assert!(!rep.shiftable && rep.proved);
        assert_eq!(rep.counterexample.unwrap().point, "0");
    }

    #[test]
    fn numeric_maps_downgrade_to_window_check() {
        use crate::homeo::SinPerturbMap;
        let sys = RandomSystem::new(
            "sin",
            vec![
                shift("1"),
                shift("-1"),
                MonotoneMap::SinPerturb(SinPerturbMap::new(rat("1/10")).unwrap()),
            ],
            vec![rat("1/3"), rat("1/3"), rat("1/3")],
        )
        .unwrap();
        let rep = check_shiftability(&sys);
        assert!(rep.shiftable && !rep.proved);
        assert!(rep.window.is_some());
        let report = validate_system(&sys);
        assert!(report.is_valid());
        assert!(report.notes.iter().any(|n| n.contains("no global proof")));
    }

    #[test]
    fn doubling_map_bound_is_attained_at_window_edge() {
        // f(x) = 2x for x >= 0 moves right; x - f(x) = -x, maximal at c.
        let double = MonotoneMap::affine(rat("2"), rat("0")).unwrap();
        let sys = RandomSystem::new(
            "expander",
            vec![double, shift("-1")],
            vec![rat("1/2"), rat("1/2")],
        )
        .unwrap();
        assert_eq!(sys.max_left_step_above(2.0), Some(1.0));
    }
}

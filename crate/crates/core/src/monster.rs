//! Exact simulation of the infinitely generated counterexample family.
//!
//! The maps in this family translate by tower exponentials `E(k) = exp(exp(k))`,
//! so a trajectory is a finite integer combination `x0 + sum c_k E(k)` and can
//! be tracked exactly as a sparse integer vector. No float ever approximates a
//! tower value during simulation; floats enter only when a position must be
//! compared against a bounded interval, and then only for ranks small enough
//! that f64 holds the value (E(6) < 2^1023). For higher ranks the top term
//! dominates everything below it by a margin the state cannot overcome, which
//! turns the comparison into a sign check.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use rand::{Rng, RngCore};
use serde::Serialize;
use thiserror::Error;

use crate::seed;
use crate::walk::split_trials;

/// Hard cap on trajectory length; keeps trace memory in the low hundreds of MB.
pub const MAX_STEPS: u64 = 100_000_000;

/// Interval endpoints are restricted so the rank-7 dominance argument applies.
pub const MAX_INTERVAL_END: f64 = 1e6;

/// Ranks below this bound live in a dense vector, the rest in a spill map.
const DENSE_RANKS: usize = 1024;

/// Interval-visit steps kept verbatim per trace; later visits are only counted.
const VISIT_LOG_CAP: usize = 1_000_000;

/// Highest rank whose tower value fits in f64: E(6) = e^403.43 < 2^1023.
const MAX_FLOAT_RANK: u64 = 6;

/// `E_TOWER[k] = exp(exp(k))` for the f64-evaluable ranks.
static E_TOWER: LazyLock<[f64; 7]> =
    LazyLock::new(|| std::array::from_fn(|k| (k as f64).exp().exp()));

#[derive(Debug, Error)]
pub enum MonsterError {
    #[error("rank draw {0} lies outside (0, 1)")]
    BadDraw(f64),
    #[error("{0} steps exceed the supported maximum {MAX_STEPS}")]
    TooManySteps(u64),
    #[error("interval [{0}, {1}] must be ordered with both ends in [-1e6, 1e6]")]
    BadInterval(f64, f64),
    #[error("perturbation bound {0} must lie in [0, 1]")]
    BadPerturbation(f64),
}

/// Which generator family drives the walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Variant {
    /// Rank k always translates by `(-1)^k E(k)`.
    Alternating,
    /// Rank k translates by `+E(k)` or `-E(k)` with equal probability.
    Symmetric,
}

/// Direction of a symmetric-variant translation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// Position of a trajectory relative to a target interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Region {
    Below,
    Inside,
    Above,
}

/// Rank of the map chosen by a uniform draw: `floor(1/u)`.
///
/// The resulting law is `P(rank >= m) = 1/m`, so ranks have infinite mean and
/// the running maximum grows linearly. Draws of exactly zero are rejected
/// rather than mapped to a sentinel.
pub fn sample_rank(u: f64) -> Result<u64, MonsterError> {
    if !(u > 0.0 && u < 1.0) {
        return Err(MonsterError::BadDraw(u));
    }
    Ok((1.0 / u).floor() as u64)
}

/// Exact trajectory state: `x0 + sum over k of coeff(k) * E(k)`.
///
/// Coefficients are integers; `coefficient_mass` tracks `sum |coeff|`, which
/// each step changes by at most one, so `coefficient_mass <= steps` always.
#[derive(Clone, Debug)]
pub struct RankState {
    x0: f64,
    dense: Vec<i64>,
    spill: BTreeMap<u64, i64>,
    steps: u64,
    mass: u64,
    top: Option<u64>,
}

impl RankState {
    pub fn new(x0: f64) -> Self {
        RankState {
            x0,
            dense: vec![0; DENSE_RANKS],
            spill: BTreeMap::new(),
            steps: 0,
            mass: 0,
            top: None,
        }
    }

    /// Builds a state directly from `(rank, coefficient)` pairs.
    ///
    /// The step count is set to the coefficient mass, the smallest count any
    /// trajectory reaching these coefficients could have. Duplicate ranks
    /// accumulate. Panics on a zero rank.
    pub fn with_coefficients(x0: f64, coeffs: &[(u64, i64)]) -> Self {
        let mut s = RankState::new(x0);
        for &(rank, c) in coeffs {
            assert!(rank >= 1, "ranks are positive");
            let old = s.coeff(rank);
            let new = old + c;
            s.set_coeff(rank, new);
            s.mass = (s.mass as i128 + new.abs() as i128 - old.abs() as i128) as u64;
            match s.top {
                Some(t) if rank > t && new != 0 => s.top = Some(rank),
                Some(t) if rank == t && new == 0 => s.top = s.rescan_top(t),
                None if new != 0 => s.top = Some(rank),
                _ => {}
            }
        }
        s.steps = s.mass;
        s
    }

    pub fn base(&self) -> f64 {
        self.x0
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// `sum_k |coeff(k)|`; bounded by `steps()`.
    pub fn coefficient_mass(&self) -> u64 {
        self.mass
    }

    /// Largest rank with a nonzero coefficient, if any.
    pub fn top_rank(&self) -> Option<u64> {
        self.top
    }

    pub fn coeff(&self, rank: u64) -> i64 {
        if rank == 0 {
            return 0;
        }
        if rank as usize <= DENSE_RANKS {
            self.dense[rank as usize - 1]
        } else {
            self.spill.get(&rank).copied().unwrap_or(0)
        }
    }

    fn set_coeff(&mut self, rank: u64, value: i64) {
        if rank as usize <= DENSE_RANKS {
            self.dense[rank as usize - 1] = value;
        } else if value == 0 {
            self.spill.remove(&rank);
        } else {
            self.spill.insert(rank, value);
        }
    }

    /// Applies one map of the given rank: bumps the coefficient, counts the step.
    ///
    /// The alternating variant folds the sign `(-1)^rank` in here; the symmetric
    /// variant uses the caller's coin. Nothing is evaluated in floating point.
    pub fn apply(&mut self, rank: u64, variant: Variant, sign: Sign) {
        assert!(rank >= 1, "ranks are positive");
        let delta: i64 = match variant {
            Variant::Alternating => {
                if rank % 2 == 0 {
                    1
                } else {
                    -1
                }
            }
            Variant::Symmetric => match sign {
                Sign::Plus => 1,
                Sign::Minus => -1,
            },
        };
        let old = self.coeff(rank);
        let new = old + delta;
        self.set_coeff(rank, new);
        self.mass = (self.mass as i128 + new.abs() as i128 - old.abs() as i128) as u64;
        self.steps += 1;
        match self.top {
            Some(t) if rank > t && new != 0 => self.top = Some(rank),
            Some(t) if rank == t && new == 0 => self.top = self.rescan_top(t),
            None if new != 0 => self.top = Some(rank),
            _ => {}
        }
        debug_assert!(self.mass <= self.steps);
    }

    /// Next nonzero rank strictly below `from`, after the top was zeroed.
    fn rescan_top(&self, from: u64) -> Option<u64> {
        if let Some((&k, _)) = self.spill.range(..from).next_back() {
            return Some(k);
        }
        let limit = (from - 1).min(DENSE_RANKS as u64) as usize;
        (0..limit).rev().find(|&i| self.dense[i] != 0).map(|i| i as u64 + 1)
    }

    /// f64 value of the state; meaningful only when `top_rank() <= 6`.
    fn position_f64(&self) -> f64 {
        let mut x = self.x0;
        let hi = self.top.unwrap_or(0).min(MAX_FLOAT_RANK) as usize;
        for k in (1..=hi).rev() {
            let c = self.dense[k - 1];
            if c != 0 {
                x += c as f64 * E_TOWER[k];
            }
        }
        x
    }

    fn region_with_slack(&self, a: f64, b: f64, slack: f64) -> Region {
        match self.top {
            Some(k) if k > MAX_FLOAT_RANK => {
                // The top term alone exceeds everything below it: the base,
                // the lower-rank mass, drift, and the interval ends together
                // are at most (2n+4) E(k-1), and E(k)/E(k-1) =
                // exp(e^k - e^(k-1)) >= exp(e^7 - e^6), far beyond any
                // reachable step count. Checked at runtime, not assumed.
                let margin = dominance_margin(k);
                let n = self.steps;
                assert!(
                    self.x0.abs() <= MAX_INTERVAL_END,
                    "base point {} outside the modeled family",
                    self.x0
                );
                assert!(
                    ((2 * n + 4) as f64).ln() < margin,
                    "dominance precondition failed: {n} steps at top rank {k}"
                );
                if self.coeff(k) > 0 {
                    Region::Above
                } else {
                    Region::Below
                }
            }
            top => {
                let x = self.position_f64();
                let unit = match top {
                    Some(k) => E_TOWER[k as usize],
                    None => 1.0,
                };
                // Worst-case f64 summation error for <= n terms of magnitude
                // <= unit, plus the caller's drift allowance. Ties go Inside.
                let err = self.steps as f64 * unit * 2f64.powi(-52) + slack;
                if x < a - err {
                    Region::Below
                } else if x > b + err {
                    Region::Above
                } else {
                    Region::Inside
                }
            }
        }
    }
}

/// `ln(E(k)/E(k-1)) = e^k - e^(k-1)`, saturating once f64 would overflow.
/// Cached for the ranks a long run touches every step.
fn dominance_margin(k: u64) -> f64 {
    static CACHE: LazyLock<[f64; 64]> = LazyLock::new(|| {
        std::array::from_fn(|k| {
            let kf = k as f64;
            kf.exp() - (kf - 1.0).exp()
        })
    });
    if k > 700 {
        return f64::INFINITY;
    }
    match CACHE.get(k as usize) {
        Some(&m) => m,
        None => {
            let kf = k as f64;
            kf.exp() - (kf - 1.0).exp()
        }
    }
}

/// Compares a state's exact position against `[a, b]`.
///
/// For top rank 7 and above the verdict is the sign of the leading
/// coefficient, justified by the dominance margin and asserted at runtime.
/// At or below rank 6 the position is evaluated in f64 and points within the
/// rounding-error band of an endpoint are conservatively reported Inside.
pub fn position_vs_interval(state: &RankState, a: f64, b: f64) -> Result<Region, MonsterError> {
    check_interval(a, b)?;
    Ok(state.region_with_slack(a, b, 0.0))
}

fn check_interval(a: f64, b: f64) -> Result<(), MonsterError> {
    if !(a <= b && a.abs() <= MAX_INTERVAL_END && b.abs() <= MAX_INTERVAL_END) {
        return Err(MonsterError::BadInterval(a, b));
    }
    Ok(())
}

/// A record moment: the step at which the running rank maximum increased.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Record {
    /// 1-based step index.
    pub step: u64,
    /// The new maximal rank, strictly above every earlier rank.
    pub rank: u64,
}

/// Full per-trajectory log: every rank drawn, the record moments, and the
/// steps spent inside the target interval.
#[derive(Clone, Debug, Default)]
pub struct RankTrace {
    ranks: Vec<u64>,
    records: Vec<Record>,
    visits: Vec<u64>,
    visits_overflow: u64,
    last_visit: Option<u64>,
}

impl RankTrace {
    fn push_rank(&mut self, rank: u64) {
        let step = self.ranks.len() as u64 + 1;
        if self.records.last().map_or(true, |r| rank > r.rank) {
            self.records.push(Record { step, rank });
        }
        self.ranks.push(rank);
    }

    fn push_visit(&mut self, step: u64) {
        if self.visits.len() < VISIT_LOG_CAP {
            self.visits.push(step);
        } else {
            self.visits_overflow += 1;
        }
        self.last_visit = Some(step);
    }

    /// Rank drawn at each step, in order.
    pub fn ranks(&self) -> &[u64] {
        &self.ranks
    }

    /// Record moments, strictly increasing in both step and rank.
    pub fn records(&self) -> &[Record] {
        &self.records
    }

    /// Steps whose position fell inside the target interval (first
    /// `VISIT_LOG_CAP` kept verbatim).
    pub fn visits(&self) -> &[u64] {
        &self.visits
    }

    pub fn visit_count(&self) -> u64 {
        self.visits.len() as u64 + self.visits_overflow
    }

    pub fn last_visit(&self) -> Option<u64> {
        self.last_visit
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// Running maxima `K_n`, yielded in step order.
    pub fn running_maxima(&self) -> impl Iterator<Item = u64> + '_ {
        self.ranks.iter().scan(0u64, |m, &k| {
            *m = (*m).max(k);
            Some(*m)
        })
    }

    /// `K_n` for a single step without scanning the prefix.
    pub fn running_max_at(&self, step: u64) -> Option<u64> {
        if step == 0 || step > self.ranks.len() as u64 {
            return None;
        }
        let idx = self.records.partition_point(|r| r.step <= step);
        Some(self.records[idx - 1].rank)
    }

    /// `(step, K_step)` pairs at steps 1, 2, 4, 8, ... and the final step.
    pub fn logarithmic_spine(&self) -> Vec<(u64, u64)> {
        let n = self.ranks.len() as u64;
        let mut out = Vec::new();
        let mut s = 1u64;
        while s <= n {
            out.push((s, self.running_max_at(s).unwrap()));
            s *= 2;
        }
        if n > 0 && out.last().map_or(true, |&(s, _)| s != n) {
            out.push((n, self.running_max_at(n).unwrap()));
        }
        out
    }
}

/// One full trajectory: the trace plus the exact final state.
#[derive(Debug)]
pub struct MonsterRun {
    pub trace: RankTrace,
    pub state: RankState,
}

/// Simulates `steps` maps from `x0 = 0`, logging every step whose position
/// lies inside `[a, b]`.
///
/// Deterministic in `master_seed`. `perturbation` is a per-step bound on
/// unmodeled drift of the base point, at most 1; the position check widens by
/// `steps_so_far * perturbation`, so a verdict holds for every trajectory of
/// the perturbed family simultaneously. Pass 0.0 for the exact system.
pub fn run_monster(
    variant: Variant,
    steps: u64,
    master_seed: u64,
    interval: (f64, f64),
    perturbation: f64,
) -> Result<MonsterRun, MonsterError> {
    if steps > MAX_STEPS {
        return Err(MonsterError::TooManySteps(steps));
    }
    check_interval(interval.0, interval.1)?;
    if !(0.0..=1.0).contains(&perturbation) {
        return Err(MonsterError::BadPerturbation(perturbation));
    }
    let mut rng = seed::trial_rng(master_seed, 0);
    let mut state = RankState::new(0.0);
    let mut trace = RankTrace {
        ranks: Vec::with_capacity(steps.min(MAX_STEPS) as usize),
        ..RankTrace::default()
    };
    for n in 1..=steps {
        let rank = loop {
            let u: f64 = rng.gen();
            if u > 0.0 {
                break sample_rank(u)?;
            }
        };
        let sign = match variant {
            Variant::Symmetric => {
                if rng.next_u64() & 1 == 0 {
                    Sign::Plus
                } else {
                    Sign::Minus
                }
            }
            Variant::Alternating => Sign::Plus,
        };
        state.apply(rank, variant, sign);
        trace.push_rank(rank);
        let slack = perturbation * n as f64;
        if state.region_with_slack(interval.0, interval.1, slack) == Region::Inside {
            trace.push_visit(n);
        }
    }
    Ok(MonsterRun { trace, state })
}

/// Stabilization horizons for the three almost-sure rank laws.
///
/// Each field is the last point where the corresponding law is violated; a
/// trajectory obeying the law eventually reports a finite horizon that stops
/// moving as the run is extended.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct RankLemmaReport {
    pub steps: u64,
    pub record_count: usize,
    /// Largest n with `K_n <= sqrt(n)`. The maximum grows linearly, so this
    /// stalls early.
    pub last_low_max_step: Option<u64>,
    /// Largest record index j (1-based) whose rank recurs strictly between
    /// record j and record j+1.
    pub last_record_gap_violation: Option<usize>,
    /// Largest record index j (1-based) with record rank `<= 2^(j/3)`.
    pub last_slow_record: Option<usize>,
}

/// Scans a trace for violations of the three rank laws.
pub fn check_rank_lemmas(trace: &RankTrace) -> RankLemmaReport {
    let mut report = RankLemmaReport {
        steps: trace.len() as u64,
        record_count: trace.records().len(),
        ..RankLemmaReport::default()
    };
    for (i, max) in trace.running_maxima().enumerate() {
        let n = i as u64 + 1;
        if (max as u128) * (max as u128) <= n as u128 {
            report.last_low_max_step = Some(n);
        }
    }
    let records = trace.records();
    for j in 0..records.len().saturating_sub(1) {
        let lo = records[j].step as usize;
        let hi = records[j + 1].step as usize;
        // Between consecutive records the running max equals records[j].rank,
        // so any rank >= it in the open gap is an exact recurrence.
        if trace.ranks()[lo..hi - 1].iter().any(|&k| k >= records[j].rank) {
            report.last_record_gap_violation = Some(j + 1);
        }
    }
    for (j, r) in records.iter().enumerate() {
        if (r.rank as f64) <= 2f64.powf((j + 1) as f64 / 3.0) {
            report.last_slow_record = Some(j + 1);
        }
    }
    report
}

/// Per-seed outcome of a batch run, ready for JSON emission.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MonsterSeedSummary {
    pub seed_index: u64,
    pub last_inside_step: Option<u64>,
    pub inside_count: u64,
    pub max_rank: u64,
    pub record_count: usize,
    pub last_low_max_step: Option<u64>,
    pub last_record_gap_violation: Option<usize>,
    pub last_slow_record: Option<usize>,
}

/// Runs `seeds` independent trajectories, fanned out across workers.
///
/// Trajectory i uses the derived stream `trial_seed(master_seed, i)` as its
/// own master seed, so results are independent of the worker count and merge
/// by seed index.
pub fn run_monster_batch(
    variant: Variant,
    steps: u64,
    master_seed: u64,
    interval: (f64, f64),
    perturbation: f64,
    seeds: u64,
    workers: usize,
) -> Result<Vec<MonsterSeedSummary>, MonsterError> {
    if steps > MAX_STEPS {
        return Err(MonsterError::TooManySteps(steps));
    }
    check_interval(interval.0, interval.1)?;
    if !(0.0..=1.0).contains(&perturbation) {
        return Err(MonsterError::BadPerturbation(perturbation));
    }
    let out = split_trials(
        seeds,
        workers,
        Vec::new(),
        |range| {
            range
                .map(|i| {
                    let run = run_monster(
                        variant,
                        steps,
                        seed::trial_seed(master_seed, i),
                        interval,
                        perturbation,
                    )
                    .expect("parameters validated before fan-out");
                    let lemmas = check_rank_lemmas(&run.trace);
                    MonsterSeedSummary {
                        seed_index: i,
                        last_inside_step: run.trace.last_visit(),
                        inside_count: run.trace.visit_count(),
                        max_rank: run.trace.running_max_at(steps).unwrap_or(0),
                        record_count: lemmas.record_count,
                        last_low_max_step: lemmas.last_low_max_step,
                        last_record_gap_violation: lemmas.last_record_gap_violation,
                        last_slow_record: lemmas.last_slow_record,
                    }
                })
                .collect::<Vec<_>>()
        },
        |acc, part| acc.extend(part),
    );
    Ok(out)
}

/// Pooled tallies for the two record-law frequency checks.
///
/// An event is a draw at least as large as the current record rank. Given the
/// record is k, the draw equals k with probability exactly 1/(k+1) and is at
/// least 2k with probability exactly 1/2; both follow from `P(rank >= m) = 1/m`.
#[derive(Clone, Copy, Debug, Default)]
pub struct RecordLawTally {
    pub events: u64,
    /// Draws equal to the standing record.
    pub equal_hits: u64,
    /// `sum 1/(k_i + 1)` over events.
    pub expected_equal: f64,
    /// `sum p(1-p)` over events.
    pub equal_variance: f64,
    /// Draws at least twice the standing record.
    pub doubled_hits: u64,
}

/// Streams record events until `target_events` accumulate.
///
/// Records evolve by the true dynamics (each event's draw replaces the record
/// when larger); once the record exceeds `reset_cap` it restarts at 1 so
/// events stay frequent. The conditional laws being tallied hold at every
/// record value, so restarting does not bias them.
pub fn record_event_stats(master_seed: u64, target_events: u64, reset_cap: u64) -> RecordLawTally {
    assert!(reset_cap >= 1);
    let mut rng = seed::trial_rng(master_seed, 1);
    let mut record = 1u64;
    let mut tally = RecordLawTally::default();
    while tally.events < target_events {
        let u: f64 = rng.gen();
        if u <= 0.0 {
            continue;
        }
        let k = (1.0 / u).floor() as u64;
        if k < record {
            continue;
        }
        tally.events += 1;
        if k == record {
            tally.equal_hits += 1;
        }
        if k >= 2 * record {
            tally.doubled_hits += 1;
        }
        let p = 1.0 / (record as f64 + 1.0);
        tally.expected_equal += p;
        tally.equal_variance += p * (1.0 - p);
        record = k.max(record);
        if record > reset_cap {
            record = 1;
        }
    }
    tally
}

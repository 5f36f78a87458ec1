//! Stationary-measure constructions and the stationarity checker.
//!
//! Measures live on a bounded window as sampled relative CDFs (mass inside
//! `(a, x]`) plus declared tail kinds. Three flavors appear:
//!
//! * probability measures (both tails finite): direction-split escape gives
//!   the CDF directly as the right-escape probability;
//! * semi-infinite measures (finite toward +infinity only): built from
//!   running-minimum probabilities, normalized so `[0, +inf)` has mass 1;
//! * doubly infinite Radon measures: built as occupation measures of a
//!   stopped process, normalized on `[-1, 1]`.
//!
//! The checker verifies `nu = sum_i p_i (f_i)_* nu` in whichever CDF form
//! the declared tails make finite, skipping grid points whose inverse images
//! fall into an undeclared infinite tail.

use crate::system::{CompiledSystem, RandomSystem, SystemError};
use crate::walk::{classify_system, ClassVerdict, ParamError, PhiEstimate, SimParams};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("{reason}")]
    Refused { reason: String },
    #[error("window too small: all {skipped} interior points have inverse images in an undeclared tail")]
    WindowTooSmall { skipped: usize },
    #[error("bad grid: {0}")]
    BadGrid(String),
    #[error("cross-level consistency {worst:.4} exceeds tolerance {tol}")]
    InconsistentLevels { worst: f64, tol: f64, output: Box<Case3Output> },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Params(#[from] ParamError),
}

/// Declared behavior of a measure beyond its window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tail {
    Finite { mass: f64 },
    Infinite,
}

/// Which set the stored values give mass 1 to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Normalization {
    /// Total mass 1.
    Probability,
    /// Unit mass on a bounded interval.
    UnitMassOn { lo: f64, hi: f64 },
    /// Unit mass on the half-ray `[from, +inf)`.
    UnitMassOnRay { from: f64 },
}

/// Measure sampled as a relative CDF over a window: `rel_cdf[j]` is the mass
/// of `(a, x_j]`, so `rel_cdf[0] == 0` and the sequence is non-decreasing.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMeasure {
    a: f64,
    b: f64,
    rel_cdf: Vec<f64>,
    left_tail: Tail,
    right_tail: Tail,
    normalization: Normalization,
}

impl GridMeasure {
    pub fn new(
        window: (f64, f64),
        rel_cdf: Vec<f64>,
        left_tail: Tail,
        right_tail: Tail,
        normalization: Normalization,
    ) -> Result<Self, MeasureError> {
        let (a, b) = window;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(MeasureError::BadGrid(format!("window [{a}, {b}]")));
        }
        if rel_cdf.len() < 2 {
            return Err(MeasureError::BadGrid(format!("{} grid points", rel_cdf.len())));
        }
        if rel_cdf[0] != 0.0 {
            return Err(MeasureError::BadGrid(format!("relative CDF starts at {}", rel_cdf[0])));
        }
        if rel_cdf.windows(2).any(|w| w[1] < w[0]) {
            return Err(MeasureError::BadGrid("relative CDF decreases".into()));
        }
        for t in [left_tail, right_tail] {
            if let Tail::Finite { mass } = t {
                if !(mass >= 0.0) {
                    return Err(MeasureError::BadGrid(format!("negative tail mass {mass}")));
                }
            }
        }
        Ok(Self { a, b, rel_cdf, left_tail, right_tail, normalization })
    }

    pub fn window(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn rel_cdf(&self) -> &[f64] {
        &self.rel_cdf
    }

    pub fn left_tail(&self) -> Tail {
        self.left_tail
    }

    pub fn right_tail(&self) -> Tail {
        self.right_tail
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn len(&self) -> usize {
        self.rel_cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.b - self.a) / (self.rel_cdf.len() - 1) as f64
    }

    pub fn grid_point(&self, j: usize) -> f64 {
        self.a + self.step() * j as f64
    }

    /// Mass of `(a, clamp(t)]` by linear interpolation.
    pub fn rel_at(&self, t: f64) -> f64 {
        if t <= self.a {
            return 0.0;
        }
        if t >= self.b {
            return *self.rel_cdf.last().unwrap();
        }
        let s = (t - self.a) / self.step();
        let j = (s.floor() as usize).min(self.rel_cdf.len() - 2);
        let w = s - j as f64;
        (1.0 - w) * self.rel_cdf[j] + w * self.rel_cdf[j + 1]
    }

    /// Total mass when both tails are finite.
    pub fn total_mass(&self) -> Option<f64> {
        match (self.left_tail, self.right_tail) {
            (Tail::Finite { mass: l }, Tail::Finite { mass: r }) => {
                Some(l + self.rel_cdf.last().unwrap() + r)
            }
            _ => None,
        }
    }
}

/// Stationarity defect summary. `skipped` counts interior grid points whose
/// inverse images fell into an undeclared infinite tail; `tail_clamp` bounds
/// the extra error introduced by clamping images into declared finite tails.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualReport {
    pub sup: f64,
    pub checked: usize,
    pub skipped: usize,
    pub tail_clamp: f64,
}

/// Sup over interior grid points of the defect in the CDF form of the
/// stationarity relation, using exact inverses for exact map kinds.
pub fn stationarity_residual(
    nu: &GridMeasure,
    sys: &RandomSystem,
) -> Result<ResidualReport, MeasureError> {
    stationarity_residual_on(nu, sys, (f64::NEG_INFINITY, f64::INFINITY))
}

/// Same check restricted to grid points inside `range` (used when the
/// construction only claims stationarity on part of the window).
pub fn stationarity_residual_on(
    nu: &GridMeasure,
    sys: &RandomSystem,
    range: (f64, f64),
) -> Result<ResidualReport, MeasureError> {
    let inverse = sys.inverse().compile()?;
    let probs: Vec<f64> = sys.probs().iter().map(crate::rational::to_f64).collect();
    let last = nu.len() - 1;
    let interior_total = *nu.rel_cdf().last().unwrap();

    // Evaluations of the chosen finite CDF form, or None when the point of
    // interest is lost to an undeclared infinite tail. The bool marks a
    // clamped finite-tail evaluation.
    enum Form {
        Absolute { left: f64, right: Option<f64> },
        Survival { right: f64, left: Option<f64> },
        Anchored { anchor: f64 },
    }
    let form = match (nu.left_tail(), nu.right_tail()) {
        (Tail::Finite { mass }, r) => Form::Absolute {
            left: mass,
            right: match r {
                Tail::Finite { mass } => Some(mass),
                Tail::Infinite => None,
            },
        },
        (Tail::Infinite, Tail::Finite { mass }) => Form::Survival { right: mass, left: None },
        (Tail::Infinite, Tail::Infinite) => {
            Form::Anchored { anchor: nu.grid_point(last / 2) }
        }
    };
    let eval = |t: f64| -> Option<(f64, f64)> {
        match &form {
            Form::Absolute { left, right } => {
                if t < nu.window().0 {
                    // True CDF lies in [0, left]; clamp to the tail mass.
                    Some((*left, *left))
                } else if t > nu.window().1 {
                    match right {
                        Some(r) => Some((left + interior_total, *r)),
                        None => None,
                    }
                } else {
                    Some((left + nu.rel_at(t), 0.0))
                }
            }
            Form::Survival { right, left } => {
                if t > nu.window().1 {
                    Some((*right, *right))
                } else if t < nu.window().0 {
                    match left {
                        Some(_) => unreachable!("survival form only used with infinite left tail"),
                        None => None,
                    }
                } else {
                    Some((interior_total - nu.rel_at(t) + right, 0.0))
                }
            }
            Form::Anchored { anchor } => {
                if t < nu.window().0 || t > nu.window().1 {
                    None
                } else {
                    Some((nu.rel_at(t) - nu.rel_at(*anchor), 0.0))
                }
            }
        }
    };

    let mut sup = 0.0f64;
    let mut checked = 0;
    let mut skipped = 0;
    let mut tail_clamp = 0.0f64;
    for j in 1..last {
        let x = nu.grid_point(j);
        if x < range.0 || x > range.1 {
            continue;
        }
        let Some((own, _)) = eval(x) else { unreachable!("grid points are in-window") };
        let mut image = 0.0;
        let mut clamp = 0.0f64;
        let mut ok = true;
        for (i, p) in probs.iter().enumerate() {
            let t = inverse.eval_map(i, x);
            match eval(t) {
                Some((v, c)) => {
                    image += p * v;
                    clamp = clamp.max(c);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            skipped += 1;
            continue;
        }
        checked += 1;
        sup = sup.max((own - image).abs());
        tail_clamp = tail_clamp.max(clamp);
    }
    if checked == 0 {
        return Err(MeasureError::WindowTooSmall { skipped });
    }
    Ok(ResidualReport { sup, checked, skipped, tail_clamp })
}

/// Pool-adjacent-violators: closest non-decreasing sequence in least squares.
pub fn isotonic_non_decreasing(values: &[f64]) -> Vec<f64> {
    // Blocks of (sum, count) whose means must stay increasing.
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        let mut sum = v;
        let mut count = 1;
        while let Some(&(psum, pcount)) = blocks.last() {
            if psum / pcount as f64 > sum / count as f64 {
                sum += psum;
                count += pcount;
                blocks.pop();
            } else {
                break;
            }
        }
        blocks.push((sum, count));
    }
    let mut out = Vec::with_capacity(values.len());
    for (sum, count) in blocks {
        let mean = sum / count as f64;
        out.extend(std::iter::repeat(mean).take(count));
    }
    out
}

/// Classification gate shared by the builders: the Monte Carlo budget spent
/// deciding whether a construction applies at all.
#[derive(Clone, Debug)]
pub struct ClassifyGate {
    pub probes: Vec<f64>,
    pub tau: f64,
    pub sim: SimParams,
}

impl ClassifyGate {
    pub fn standard(master_seed: u64) -> Self {
        Self {
            probes: vec![-20.0, -5.0, 0.0, 5.0, 20.0],
            tau: 0.1,
            sim: SimParams { master_seed, ..SimParams::default() },
        }
    }
}

fn gate_class(
    sys: &RandomSystem,
    gate: &ClassifyGate,
    want: u8,
    builder: &str,
) -> Result<ClassVerdict, MeasureError> {
    let verdict = classify_system(sys, &gate.probes, &gate.sim, gate.tau)?;
    match &verdict {
        ClassVerdict::Classified { class, flipped, swapped, .. } => {
            if *class != want {
                return Err(MeasureError::Refused {
                    reason: format!(
                        "{builder} applies to class {want} systems; this one classifies as class {class}"
                    ),
                });
            }
            if *flipped || *swapped {
                return Err(MeasureError::Refused {
                    reason: format!(
                        "{builder} expects the canonical class-{want} presentation; \
                         classified with flipped={flipped}, swapped={swapped} \
                         (pass the reflected or inverse system instead)"
                    ),
                });
            }
            Ok(verdict)
        }
        ClassVerdict::Refused { reason, .. } => Err(MeasureError::Refused {
            reason: format!("{builder} gate could not classify the system: {reason}"),
        }),
    }
}

/// Parameters for the probability-measure builder.
#[derive(Clone, Debug)]
pub struct Case4Params {
    pub gate: ClassifyGate,
    /// Per-grid-point estimation budget; `trials` is trials per point.
    pub sim: SimParams,
    pub window: (f64, f64),
    pub grid_points: usize,
}

impl Case4Params {
    pub fn standard(master_seed: u64) -> Self {
        Self {
            gate: ClassifyGate::standard(master_seed),
            sim: SimParams { trials: 12_000, master_seed, ..SimParams::default() },
            window: (-50.0, 50.0),
            grid_points: 101,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Case4Output {
    pub measure: GridMeasure,
    pub phi: Vec<PhiEstimate>,
    /// Sup distance the isotonic projection moved the raw estimates; stays 0
    /// when the coupled-stream monotonicity holds exactly.
    pub isotonic_adjustment: f64,
    pub gate: ClassVerdict,
}

/// Builds the stationary probability measure of a direction-split system:
/// the CDF is the right-escape probability of the forward system, and the
/// result is stationary for the inverse system.
pub fn build_case4_measure(
    sys: &RandomSystem,
    params: &Case4Params,
) -> Result<Case4Output, MeasureError> {
    params.sim.validate()?;
    let gate = gate_class(sys, &params.gate, 4, "probability-measure builder")?;
    let (a, b) = params.window;
    if !(a < b) || params.grid_points < 2 {
        return Err(MeasureError::BadGrid(format!(
            "window [{a}, {b}] with {} points",
            params.grid_points
        )));
    }
    let xs: Vec<f64> = (0..params.grid_points)
        .map(|j| a + (b - a) * j as f64 / (params.grid_points - 1) as f64)
        .collect();
    let phi = crate::walk::estimate_phi_batch(sys, &xs, &params.sim)?;
    let raw: Vec<f64> = phi.iter().map(PhiEstimate::phi_plus).collect();
    let iso = isotonic_non_decreasing(&raw);
    let isotonic_adjustment =
        raw.iter().zip(&iso).map(|(r, i)| (r - i).abs()).fold(0.0f64, f64::max);
    let rel: Vec<f64> = iso.iter().map(|v| v - iso[0]).collect();
    let measure = GridMeasure::new(
        (a, b),
        rel,
        Tail::Finite { mass: iso[0] },
        Tail::Finite { mass: 1.0 - iso[iso.len() - 1] },
        Normalization::Probability,
    )?;
    Ok(Case4Output { measure, phi, isotonic_adjustment, gate })
}

/// Parameters for the semi-infinite builder.
#[derive(Clone, Debug)]
pub struct Case2Params {
    pub gate: ClassifyGate,
    /// Per-grid-point budget for the running-minimum probability.
    pub sim: SimParams,
    pub window: (f64, f64),
    pub grid_points: usize,
}

impl Case2Params {
    pub fn standard(master_seed: u64) -> Self {
        Self {
            gate: ClassifyGate::standard(master_seed),
            sim: SimParams { trials: 200_000, master_seed, ..SimParams::default() },
            window: (-22.0, 20.0),
            grid_points: 43,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Case2Output {
    pub measure: GridMeasure,
    /// Raw running-minimum probabilities per grid point.
    pub psi: Vec<f64>,
    pub psi_at_zero: f64,
    /// Mass the normalized measure assigns to `[0, +inf)`; equal to 1 by
    /// construction (the defining ratio divided by itself).
    pub unit_ray_mass: f64,
    /// Trials that neither dipped below the target level nor escaped above
    /// the threshold within the horizon, pooled over simulated grid points.
    pub truncated_fraction: f64,
    pub gate: ClassVerdict,
}

/// Builds the semi-infinite stationary measure of the inverse of a class-2
/// system from psi(x) = P(the forward orbit of x ever drops below `y`):
/// mass of `[x, +inf)` is psi(x)/psi(0).
///
/// psi is exactly 1 below `y` (the orbit starts there), so the measure's
/// half-ray masses grow without bound toward -infinity.
pub fn build_case2_semi(
    sys: &RandomSystem,
    y: f64,
    params: &Case2Params,
) -> Result<Case2Output, MeasureError> {
    params.sim.validate()?;
    let gate = gate_class(sys, &params.gate, 2, "semi-infinite-measure builder")?;
    let (a, b) = params.window;
    if !(a < y && y < b) || params.grid_points < 2 {
        return Err(MeasureError::BadGrid(format!(
            "window [{a}, {b}] must contain the target level {y}"
        )));
    }
    let step = (b - a) / (params.grid_points - 1) as f64;
    let xs: Vec<f64> = (0..params.grid_points).map(|j| a + step * j as f64).collect();
    let zero_index = xs
        .iter()
        .position(|x| x.abs() < 1e-9)
        .ok_or_else(|| MeasureError::BadGrid("grid must contain 0 for normalization".into()))?;

    let compiled = sys.compile()?;
    let escape = params.sim.escape_threshold;
    let horizon = params.sim.horizon;
    let mut psi = Vec::with_capacity(xs.len());
    let mut truncated_total = 0u64;
    let mut simulated_trials = 0u64;
    for &x0 in &xs {
        if x0 < y {
            // The orbit starts below the level: probability exactly 1.
            psi.push(1.0);
            continue;
        }
        let (hits, truncated) = crate::walk::split_trials(
            params.sim.trials,
            params.sim.workers,
            (0u64, 0u64),
            |range| {
                let mut hits = 0u64;
                let mut truncated = 0u64;
                for trial in range {
                    let mut rng = crate::seed::trial_rng(params.sim.master_seed, trial);
                    let mut x = x0;
                    let mut outcome = None;
                    for _ in 0..horizon {
                        x = compiled.step(&mut rng, x).1;
                        if x < y {
                            outcome = Some(true);
                            break;
                        }
                        if x > escape {
                            // The running minimum is almost surely attained
                            // before final escape; stop counting this orbit.
                            outcome = Some(false);
                            break;
                        }
                    }
                    match outcome {
                        Some(true) => hits += 1,
                        Some(false) => {}
                        None => truncated += 1,
                    }
                }
                (hits, truncated)
            },
            |acc, part| {
                acc.0 += part.0;
                acc.1 += part.1;
            },
        );
        truncated_total += truncated;
        simulated_trials += params.sim.trials;
        psi.push(hits as f64 / params.sim.trials as f64);
    }
    // Coupled per-trial streams make the estimates monotone exactly: a lower
    // start point dominates pointwise, dips first, and escapes no earlier.
    for w in psi.windows(2) {
        assert!(w[1] <= w[0], "running-minimum probability increased: {} -> {}", w[0], w[1]);
    }
    let psi_at_zero = psi[zero_index];
    if psi_at_zero <= 0.0 {
        return Err(MeasureError::Refused {
            reason: format!(
                "no simulated orbit from 0 dropped below y = {y}; cannot normalize \
                 (raise trials or the horizon)"
            ),
        });
    }
    let survival: Vec<f64> = psi.iter().map(|p| p / psi_at_zero).collect();
    let rel: Vec<f64> = survival.iter().map(|s| survival[0] - s).collect();
    let measure = GridMeasure::new(
        (a, b),
        rel,
        Tail::Infinite,
        Tail::Finite { mass: survival[survival.len() - 1] },
        Normalization::UnitMassOnRay { from: 0.0 },
    )?;
    Ok(Case2Output {
        measure,
        psi,
        psi_at_zero,
        unit_ray_mass: psi_at_zero / psi_at_zero,
        truncated_fraction: if simulated_trials == 0 {
            0.0
        } else {
            truncated_total as f64 / simulated_trials as f64
        },
        gate,
    })
}

/// Tent-shaped stopping profile: 1 on `[-L, L]`, sloping to 0 at `|x| = L+1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoppingFunction {
    plateau_halfwidth: f64,
}

impl StoppingFunction {
    pub fn tent(plateau_halfwidth: f64) -> Self {
        assert!(plateau_halfwidth > 0.0);
        Self { plateau_halfwidth }
    }

    pub fn plateau(&self) -> (f64, f64) {
        (-self.plateau_halfwidth, self.plateau_halfwidth)
    }

    pub fn support(&self) -> (f64, f64) {
        (-self.plateau_halfwidth - 1.0, self.plateau_halfwidth + 1.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.plateau_halfwidth + 1.0 - x.abs()).clamp(0.0, 1.0)
    }
}

/// The ladder used by default: nested tents with unit margins.
pub fn default_ladder() -> Vec<StoppingFunction> {
    vec![StoppingFunction::tent(5.0), StoppingFunction::tent(10.0), StoppingFunction::tent(20.0)]
}

/// Stop points of independent stopped runs.
#[derive(Clone, Debug)]
pub struct StoppedRuns {
    pub stop_points: Vec<f64>,
    pub no_stop_trials: u64,
    pub trials: u64,
}

fn run_stopped(
    compiled: &CompiledSystem,
    psi: &StoppingFunction,
    start: f64,
    horizon: u64,
    rng: &mut ChaCha8Rng,
) -> Option<f64> {
    let mut x = start;
    for _ in 0..=horizon {
        if rng.gen::<f64>() < psi.eval(x) {
            return Some(x);
        }
        x = compiled.step(rng, x).1;
    }
    None
}

/// Runs the chain from `x`, stopping at each step (step 0 included) with
/// probability `psi(current point)`. Stop points necessarily lie in the
/// support of `psi`. More than 1% of trials failing to stop is a refusal.
pub fn stopped_distribution(
    sys: &RandomSystem,
    psi: &StoppingFunction,
    x: f64,
    params: &SimParams,
) -> Result<StoppedRuns, MeasureError> {
    params.validate()?;
    let compiled = sys.compile()?;
    let (points, no_stop) = crate::walk::split_trials(
        params.trials,
        params.workers,
        (Vec::new(), 0u64),
        |range| {
            let mut points = Vec::with_capacity((range.end - range.start) as usize);
            let mut no_stop = 0u64;
            for trial in range {
                let mut rng = crate::seed::trial_rng(params.master_seed, trial);
                match run_stopped(&compiled, psi, x, params.horizon, &mut rng) {
                    Some(p) => points.push(p),
                    None => no_stop += 1,
                }
            }
            (points, no_stop)
        },
        |acc, part| {
            acc.0.extend(part.0);
            acc.1 += part.1;
        },
    );
    if (no_stop as f64) >= 0.01 * params.trials as f64 {
        return Err(MeasureError::Refused {
            reason: format!(
                "{no_stop} of {} stopped runs hit the horizon without stopping (limit 1%)",
                params.trials
            ),
        });
    }
    Ok(StoppedRuns { stop_points: points, no_stop_trials: no_stop, trials: params.trials })
}

/// Histogram with bins centered on multiples of `width` (so integer points
/// sit at bin centers when `width` divides 1).
#[derive(Clone, Debug)]
pub struct Histogram {
    lo: f64,
    width: f64,
    counts: Vec<u64>,
    total: u64,
}

impl Histogram {
    fn covering(support: (f64, f64), width: f64) -> Self {
        let n_half = (support.1 / width).round() as i64;
        let lo = -(n_half as f64) * width - width / 2.0;
        let bins = (2 * n_half + 1) as usize;
        Self { lo, width, counts: vec![0; bins], total: 0 }
    }

    fn add(&mut self, x: f64) {
        let idx = ((x - self.lo) / self.width).floor() as i64;
        let idx = idx.clamp(0, self.counts.len() as i64 - 1) as usize;
        self.counts[idx] += 1;
        self.total += 1;
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts[i]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.counts[i] as f64 / self.total as f64
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Mass within bins whose centers lie in `[lo, hi]`.
    pub fn mass_in(&self, lo: f64, hi: f64) -> f64 {
        let eps = 1e-9;
        (0..self.bins())
            .filter(|&i| self.center(i) >= lo - eps && self.center(i) <= hi + eps)
            .map(|i| self.mass(i))
            .sum()
    }
}

/// Parameters for the doubly infinite builder.
#[derive(Clone, Debug)]
pub struct Case3Params {
    pub gate: ClassifyGate,
    /// Horizon per stopped run; `trials` is unused here.
    pub sim: SimParams,
    pub ladder: Vec<StoppingFunction>,
    /// Accepted stop points for the smallest ladder level. Wider tents get
    /// proportionally more: the chain mixes in O(L^2) meta-steps and spreads
    /// its mass over O(L) bins, so per-bin accuracy at fixed iterations
    /// degrades like L^(3/2); cubic scaling keeps it level across the ladder.
    pub meta_iters: u64,
    pub bin_width: f64,
    /// Largest relative deviation tolerated between consecutive levels on
    /// the inner plateau.
    pub consistency_tol: f64,
}

impl Case3Params {
    pub fn standard(master_seed: u64) -> Self {
        Self {
            gate: ClassifyGate::standard(master_seed),
            sim: SimParams { master_seed, ..SimParams::default() },
            ladder: default_ladder(),
            meta_iters: 500_000,
            bin_width: 0.1,
            consistency_tol: 0.15,
        }
    }
}

/// One ladder level's occupation histogram.
#[derive(Clone, Debug)]
pub struct LadderLevel {
    pub tent: StoppingFunction,
    pub histogram: Histogram,
    pub no_stop_fraction: f64,
}

#[derive(Clone, Debug)]
pub struct Case3Output {
    /// Largest-level occupation measure, normalized to unit mass on [-1, 1].
    pub measure: GridMeasure,
    pub levels: Vec<LadderLevel>,
    /// Per adjacent level pair: sup relative deviation between the two
    /// occupation measures over the inner plateau.
    pub consistency: Vec<f64>,
    pub gate: ClassVerdict,
}

/// Occupation measure of the stop-point chain: apply one map, run the
/// stopped process, restart from the stop point; average the stop points.
/// Each ladder level is built independently and cross-checked against the
/// next on the smaller plateau, where the two must agree up to scale.
pub fn build_case3_radon(
    sys: &RandomSystem,
    params: &Case3Params,
) -> Result<Case3Output, MeasureError> {
    params.sim.validate()?;
    let gate = gate_class(sys, &params.gate, 3, "occupation-measure builder")?;
    if params.ladder.is_empty() {
        return Err(MeasureError::BadGrid("empty ladder".into()));
    }
    let mut ladder = params.ladder.clone();
    ladder.sort_by(|a, b| a.plateau_halfwidth.total_cmp(&b.plateau_halfwidth));
    for pair in ladder.windows(2) {
        let (outer_plateau_lo, outer_plateau_hi) = pair[1].plateau();
        let (inner_lo, inner_hi) = pair[0].support();
        if inner_lo < outer_plateau_lo || inner_hi > outer_plateau_hi {
            return Err(MeasureError::BadGrid(format!(
                "ladder not nested: support [{inner_lo}, {inner_hi}] exceeds the next plateau"
            )));
        }
    }

    let compiled = sys.compile()?;
    let smallest = ladder[0].plateau_halfwidth;
    let mut levels = Vec::with_capacity(ladder.len());
    for (li, tent) in ladder.iter().enumerate() {
        // One dedicated stream per level, far from per-trial indices.
        let mut rng = crate::seed::trial_rng(params.sim.master_seed, u64::MAX - li as u64);
        let mut hist = Histogram::covering(tent.support(), params.bin_width);
        let ratio = tent.plateau_halfwidth / smallest;
        let iters = (params.meta_iters as f64 * ratio.powi(3)).round() as u64;
        let mut z = 0.0f64;
        let mut no_stop = 0u64;
        let mut accepted = 0u64;
        while accepted < iters {
            let stepped = compiled.step(&mut rng, z).1;
            match run_stopped(&compiled, tent, stepped, params.sim.horizon, &mut rng) {
                Some(stop) => {
                    hist.add(stop);
                    z = stop;
                    accepted += 1;
                }
                None => {
                    // Retry from the same state on a fresh stretch of the
                    // stream; give up if stopping is evidently not working.
                    no_stop += 1;
                    if no_stop > accepted / 50 + 100 {
                        return Err(MeasureError::Refused {
                            reason: format!(
                                "stopped process fails to stop ({no_stop} failures against \
                                 {accepted} accepted points at plateau halfwidth {})",
                                tent.plateau_halfwidth
                            ),
                        });
                    }
                }
            }
        }
        let total_runs = accepted + no_stop;
        let no_stop_fraction = no_stop as f64 / total_runs as f64;
        if no_stop_fraction >= 0.01 {
            return Err(MeasureError::Refused {
                reason: format!(
                    "{:.2}% of stopped runs hit the horizon at plateau halfwidth {} (limit 1%)",
                    100.0 * no_stop_fraction,
                    tent.plateau_halfwidth
                ),
            });
        }
        levels.push(LadderLevel { tent: *tent, histogram: hist, no_stop_fraction });
    }

    let mut consistency = Vec::new();
    let mut worst = 0.0f64;
    for pair in levels.windows(2) {
        let inner = &pair[0];
        let outer = &pair[1];
        let (plo, phi_) = inner.tent.plateau();
        // On the inner plateau the stopping profile is 1, so the two
        // occupation measures must be proportional there.
        let inner_mass = inner.histogram.mass_in(plo, phi_);
        let outer_mass = outer.histogram.mass_in(plo, phi_);
        let mut dev = 0.0f64;
        for i in 0..inner.histogram.bins() {
            let c = inner.histogram.center(i);
            if c < plo || c > phi_ {
                continue;
            }
            let pi = inner.histogram.mass(i) / inner_mass;
            let qi = outer_bin_mass(&outer.histogram, c) / outer_mass;
            let scale = pi.max(qi);
            if scale > 1e-4 {
                dev = dev.max((pi - qi).abs() / scale);
            }
        }
        consistency.push(dev);
        worst = worst.max(dev);
    }

    let top = levels.last().unwrap();
    let norm = top.histogram.mass_in(-1.0, 1.0);
    let mut rel = Vec::with_capacity(top.histogram.bins() + 1);
    rel.push(0.0);
    let mut acc = 0.0;
    for i in 0..top.histogram.bins() {
        acc += top.histogram.mass(i) / norm;
        rel.push(acc);
    }
    let a = top.histogram.lo;
    let b = top.histogram.lo + top.histogram.width * top.histogram.bins() as f64;
    let measure = GridMeasure::new(
        (a, b),
        rel,
        Tail::Infinite,
        Tail::Infinite,
        Normalization::UnitMassOn { lo: -1.0, hi: 1.0 },
    )?;
    let output = Case3Output { measure, levels, consistency, gate };
    if worst > params.consistency_tol {
        return Err(MeasureError::InconsistentLevels {
            worst,
            tol: params.consistency_tol,
            output: Box::new(output),
        });
    }
    Ok(output)
}

/// Mass of the bin of `hist` whose center is nearest `c`.
fn outer_bin_mass(hist: &Histogram, c: f64) -> f64 {
    let idx = ((c - hist.lo) / hist.width).floor() as i64;
    let idx = idx.clamp(0, hist.bins() as i64 - 1) as usize;
    hist.mass(idx)
}

//! Seeded Monte Carlo trajectory engine: escape-probability estimation and
//! behavioral classification.
//!
//! A trajectory "tends to +infinity" at finite horizon when it exceeds the
//! escape threshold M and then stays strictly above confine_fraction*M until
//! the horizon. Every trial draws its own random stream from (master_seed,
//! trial_index), so estimates are bit-identical across worker counts.
//!
//! When the system admits a bound on single-step moves back toward the
//! confinement band, a latched trajectory whose distance to the band exceeds
//! bound*(steps remaining) already has its verdict decided; the engine then
//! stops early. This is an exact certificate, not a heuristic: the early
//! verdict always equals the full-horizon verdict.

use crate::seed::trial_rng;
use crate::system::{check_shiftability, CompiledSystem, RandomSystem, SystemError};
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("horizon must be at least 1")]
    HorizonZero,
    #[error("escape threshold must be positive (got {0})")]
    EscapeNotPositive(f64),
    #[error("confine fraction must lie strictly between 0 and 1 (got {0})")]
    ConfineFractionOutOfRange(f64),
    #[error("trials must be at least 1")]
    TrialsZero,
}

/// Monte Carlo knobs shared by every estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimParams {
    /// Maximum steps per trajectory.
    pub horizon: u64,
    /// Escape threshold M: crossing +/-M arms the corresponding verdict.
    pub escape_threshold: f64,
    /// A crossing survives while the trajectory stays strictly outside
    /// (-confine_fraction*M, confine_fraction*M) on its side.
    pub confine_fraction: f64,
    /// Independent trajectories per estimate.
    pub trials: u64,
    pub master_seed: u64,
    /// Worker threads; results never depend on this.
    pub workers: usize,
}

impl SimParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.horizon == 0 {
            return Err(ParamError::HorizonZero);
        }
        if !(self.escape_threshold > 0.0) {
            return Err(ParamError::EscapeNotPositive(self.escape_threshold));
        }
        if !(self.confine_fraction > 0.0 && self.confine_fraction < 1.0) {
            return Err(ParamError::ConfineFractionOutOfRange(self.confine_fraction));
        }
        if self.trials == 0 {
            return Err(ParamError::TrialsZero);
        }
        Ok(())
    }

    /// The confinement level confine_fraction * M.
    pub fn confine_level(&self) -> f64 {
        self.confine_fraction * self.escape_threshold
    }
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            horizon: 10_000,
            escape_threshold: 1_000.0,
            confine_fraction: 0.5,
            trials: 2_000,
            master_seed: 0,
            workers: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    TendsPlus,
    TendsMinus,
    Undecided,
}

/// What one finite-horizon trajectory did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryOutcome {
    pub verdict: Verdict,
    /// Step that armed the verdict's surviving threshold crossing.
    pub first_exit_step: Option<u64>,
    pub final_position: f64,
    /// Steps actually simulated (less than horizon when certified early).
    pub steps_taken: u64,
    /// True when the verdict was certified before the horizon.
    pub certified_early: bool,
}

/// Positions of one seeded trajectory, yielded step by step (the start point
/// is not yielded). Deterministic given (system, x0, params, trial_index).
pub struct Trajectory {
    system: CompiledSystem,
    rng: ChaCha8Rng,
    x: f64,
    remaining: u64,
}

impl Iterator for Trajectory {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        self.x = self.system.step(&mut self.rng, self.x).1;
        Some(self.x)
    }
}

pub fn sample_trajectory(
    sys: &RandomSystem,
    x0: f64,
    params: &SimParams,
    trial_index: u64,
) -> Result<Trajectory, SystemError> {
    Ok(Trajectory {
        system: sys.compile()?,
        rng: trial_rng(params.master_seed, trial_index),
        x: x0,
        remaining: params.horizon,
    })
}

/// Applies the escape/confinement rule to an already-produced trajectory.
/// Reference implementation without early certification; `TrialEngine`
/// must agree with it verdict-for-verdict.
pub fn classify_trajectory(
    positions: impl IntoIterator<Item = f64>,
    params: &SimParams,
) -> TrajectoryOutcome {
    let escape = params.escape_threshold;
    let confine = params.confine_level();
    let mut plus = false;
    let mut minus = false;
    let mut window_start = None;
    let mut x = f64::NAN;
    let mut steps = 0;
    for (n, pos) in positions.into_iter().enumerate().take(params.horizon as usize) {
        let step = n as u64 + 1;
        x = pos;
        steps = step;
        let was = (plus, minus);
        plus = (plus && x > confine) || x > escape;
        minus = (minus && x < -confine) || x < -escape;
        if (plus && !was.0) || (minus && !was.1) {
            window_start = Some(step);
        }
    }
    let verdict = match (plus, minus) {
        (true, _) => Verdict::TendsPlus,
        (_, true) => Verdict::TendsMinus,
        _ => Verdict::Undecided,
    };
    TrajectoryOutcome {
        verdict,
        first_exit_step: if verdict == Verdict::Undecided { None } else { window_start },
        final_position: x,
        steps_taken: steps,
        certified_early: false,
    }
}

/// Fused sampler + classifier with the early-certification optimization.
pub struct TrialEngine {
    system: CompiledSystem,
    horizon: u64,
    escape: f64,
    confine: f64,
    /// Worst single-step move toward the band from above +confine, with a
    /// small safety margin; `None` disables plus-side certification.
    left_bound: Option<f64>,
    right_bound: Option<f64>,
}

impl TrialEngine {
    pub fn new(sys: &RandomSystem, params: &SimParams) -> Result<Self, SystemError> {
        let confine = params.confine_level();
        let margin = 1e-9;
        Ok(Self {
            system: sys.compile()?,
            horizon: params.horizon,
            escape: params.escape_threshold,
            confine,
            left_bound: sys.max_left_step_above(confine).map(|b| b + margin),
            right_bound: sys.max_right_step_below(-confine).map(|b| b + margin),
        })
    }

    pub fn run_trial(&self, x0: f64, rng: &mut impl RngCore) -> TrajectoryOutcome {
        let mut x = x0;
        let mut plus = false;
        let mut minus = false;
        let mut window_start = 0;
        for n in 1..=self.horizon {
            x = self.system.step(rng, x).1;
            let was = (plus, minus);
            plus = (plus && x > self.confine) || x > self.escape;
            minus = (minus && x < -self.confine) || x < -self.escape;
            if (plus && !was.0) || (minus && !was.1) {
                window_start = n;
            }
            let remaining = (self.horizon - n) as f64;
            if plus {
                if let Some(b) = self.left_bound {
                    // x stays strictly above confine through the horizon:
                    // each step from >= confine loses at most b.
                    if x - self.confine > b * remaining {
                        return TrajectoryOutcome {
                            verdict: Verdict::TendsPlus,
                            first_exit_step: Some(window_start),
                            final_position: x,
                            steps_taken: n,
                            certified_early: n < self.horizon,
                        };
                    }
                }
            } else if minus {
                if let Some(b) = self.right_bound {
                    if -x - self.confine > b * remaining {
                        return TrajectoryOutcome {
                            verdict: Verdict::TendsMinus,
                            first_exit_step: Some(window_start),
                            final_position: x,
                            steps_taken: n,
                            certified_early: n < self.horizon,
                        };
                    }
                }
            }
        }
        let verdict = match (plus, minus) {
            (true, _) => Verdict::TendsPlus,
            (_, true) => Verdict::TendsMinus,
            _ => Verdict::Undecided,
        };
        TrajectoryOutcome {
            verdict,
            first_exit_step: (verdict != Verdict::Undecided).then_some(window_start),
            final_position: x,
            steps_taken: self.horizon,
            certified_early: false,
        }
    }
}

/// Escape-probability estimate at one start point. Counts are the ground
/// truth; the three proportions partition 1 exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiEstimate {
    pub x: f64,
    pub plus: u64,
    pub minus: u64,
    pub undecided: u64,
    pub trials: u64,
    pub certified_early: u64,
    pub total_steps: u64,
}

impl PhiEstimate {
    pub fn phi_plus(&self) -> f64 {
        self.plus as f64 / self.trials as f64
    }

    pub fn phi_minus(&self) -> f64 {
        self.minus as f64 / self.trials as f64
    }

    pub fn phi_zero(&self) -> f64 {
        self.undecided as f64 / self.trials as f64
    }

    /// 95% normal-approximation half-width for phi_plus, floored by the
    /// 1/trials resolution so it never reads as exactly zero confidence.
    pub fn ci_halfwidth(&self) -> f64 {
        let t = self.trials as f64;
        let p = self.phi_plus();
        1.96 * (p * (1.0 - p) / t).sqrt() + 1.0 / t
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct TrialTally {
    plus: u64,
    minus: u64,
    undecided: u64,
    certified_early: u64,
    total_steps: u64,
}

impl TrialTally {
    fn absorb(&mut self, outcome: &TrajectoryOutcome) {
        match outcome.verdict {
            Verdict::TendsPlus => self.plus += 1,
            Verdict::TendsMinus => self.minus += 1,
            Verdict::Undecided => self.undecided += 1,
        }
        self.certified_early += u64::from(outcome.certified_early);
        self.total_steps += outcome.steps_taken;
    }

    fn merge(&mut self, other: &TrialTally) {
        self.plus += other.plus;
        self.minus += other.minus;
        self.undecided += other.undecided;
        self.certified_early += other.certified_early;
        self.total_steps += other.total_steps;
    }
}

/// Runs `f` over the trial indices `0..trials` split into contiguous chunks
/// across workers and merges the partial results in worker order. Per-trial
/// streams are keyed by trial index alone and merging happens in a fixed
/// order, so the result is independent of the worker count.
pub(crate) fn split_trials<T: Clone + Send>(
    trials: u64,
    workers: usize,
    empty: T,
    f: impl Fn(std::ops::Range<u64>) -> T + Sync,
    merge: impl Fn(&mut T, T),
) -> T {
    let workers = workers.max(1).min(trials.max(1) as usize);
    if workers == 1 {
        return f(0..trials);
    }
    let mut partials = vec![empty.clone(); workers];
    std::thread::scope(|scope| {
        for (w, slot) in partials.iter_mut().enumerate() {
            let lo = trials * w as u64 / workers as u64;
            let hi = trials * (w as u64 + 1) / workers as u64;
            let f = &f;
            scope.spawn(move || *slot = f(lo..hi));
        }
    });
    let mut total = empty;
    for p in partials {
        merge(&mut total, p);
    }
    total
}

fn tally_trials(
    trials: u64,
    workers: usize,
    f: impl Fn(std::ops::Range<u64>) -> TrialTally + Sync,
) -> TrialTally {
    split_trials(trials, workers, TrialTally::default(), f, |acc, p| acc.merge(&p))
}

/// Estimates (phi_plus, phi_minus, phi_zero) at `x` by independent seeded
/// trajectories.
pub fn estimate_phi(sys: &RandomSystem, x: f64, params: &SimParams) -> Result<PhiEstimate, SystemError> {
    Ok(estimate_phi_batch(sys, &[x], params)?.pop().expect("one probe in, one estimate out"))
}

/// Same estimator over several start points, sharing one compiled system.
/// All probes reuse the same per-trial streams, so estimates at different
/// points are coupled through identical map sequences; since every map is
/// increasing, the resulting phi_plus estimates are monotone in x by
/// construction whenever no trajectory is cut off by the horizon asymmetry.
pub fn estimate_phi_batch(
    sys: &RandomSystem,
    probes: &[f64],
    params: &SimParams,
) -> Result<Vec<PhiEstimate>, SystemError> {
    let engine = TrialEngine::new(sys, params)?;
    let mut out = Vec::with_capacity(probes.len());
    for &x in probes {
        let tally = tally_trials(params.trials, params.workers, |range| {
            let mut t = TrialTally::default();
            for trial in range {
                let mut rng = trial_rng(params.master_seed, trial);
                t.absorb(&engine.run_trial(x, &mut rng));
            }
            t
        });
        out.push(PhiEstimate {
            x,
            plus: tally.plus,
            minus: tally.minus,
            undecided: tally.undecided,
            trials: params.trials,
            certified_early: tally.certified_early,
            total_steps: tally.total_steps,
        });
    }
    Ok(out)
}

/// Visit counts for a bounded interval: how often trajectories return, and
/// whether returns persist into the late half of the horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VisitStats {
    pub trials: u64,
    pub horizon: u64,
    /// Total over trials of steps n >= 1 with position in the interval.
    pub total_visits: u64,
    /// Trials with at least one visit strictly after horizon/2.
    pub trials_with_late_visit: u64,
}

impl VisitStats {
    pub fn mean_visits(&self) -> f64 {
        self.total_visits as f64 / self.trials as f64
    }

    pub fn late_visit_fraction(&self) -> f64 {
        self.trials_with_late_visit as f64 / self.trials as f64
    }
}

/// Counts visits of seeded trajectories from `x0` to the closed interval
/// `[interval.0, interval.1]`. No early certification: every trajectory runs
/// the full horizon so late visits are never missed.
pub fn recurrence_stats(
    sys: &RandomSystem,
    interval: (f64, f64),
    x0: f64,
    params: &SimParams,
) -> Result<VisitStats, SystemError> {
    let (a, b) = interval;
    let compiled = sys.compile()?;
    let half = params.horizon / 2;
    let tally = tally_trials(params.trials, params.workers, |range| {
        let mut t = TrialTally::default();
        for trial in range {
            let mut rng = trial_rng(params.master_seed, trial);
            let mut x = x0;
            let mut late = false;
            for n in 1..=params.horizon {
                x = compiled.step(&mut rng, x).1;
                if x >= a && x <= b {
                    t.total_steps += 1;
                    late |= n > half;
                }
            }
            t.plus += u64::from(late);
        }
        t
    });
    Ok(VisitStats {
        trials: params.trials,
        horizon: params.horizon,
        total_visits: tally.total_steps,
        trials_with_late_visit: tally.plus,
    })
}

/// Evidence the probe profile gives about one direction of time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SideEvidence {
    /// Everything escapes to +infinity (phi_minus negligible everywhere,
    /// phi_plus saturated at the right edge).
    PlusDominant,
    MinusDominant,
    /// phi_zero saturated at every probe.
    Recurrent,
    /// Escape certain but direction genuinely depends on the start point.
    Split,
    Inconclusive,
}

/// Probe estimates for one direction of time plus the evidence they support.
#[derive(Clone, Debug, PartialEq)]
pub struct SideReading {
    pub evidence: SideEvidence,
    pub estimates: Vec<PhiEstimate>,
}

/// Classification of a system into the four asymptotic behavior classes,
/// reported in a canonical presentation: `flipped` means the classification
/// holds after the orientation change x -> -x, `swapped` after exchanging
/// the system with its inverse.
#[derive(Clone, Debug, PartialEq)]
pub enum ClassVerdict {
    Classified {
        class: u8,
        flipped: bool,
        swapped: bool,
        forward: SideReading,
        inverse: SideReading,
        notes: Vec<String>,
    },
    Refused {
        reason: String,
        forward: SideReading,
        inverse: SideReading,
        notes: Vec<String>,
    },
}

impl ClassVerdict {
    pub fn class(&self) -> Option<u8> {
        match self {
            Self::Classified { class, .. } => Some(*class),
            Self::Refused { .. } => None,
        }
    }
}

fn side_evidence(estimates: &[PhiEstimate], tau: f64) -> SideEvidence {
    let saturated = 1.0 - tau;
    if estimates.iter().all(|e| e.phi_zero() >= saturated) {
        return SideEvidence::Recurrent;
    }
    if estimates.iter().all(|e| e.phi_zero() <= tau) {
        let hi = estimates.iter().max_by(|a, b| a.phi_plus().total_cmp(&b.phi_plus())).unwrap();
        let lo = estimates.iter().min_by(|a, b| a.phi_plus().total_cmp(&b.phi_plus())).unwrap();
        let spread = hi.phi_plus() - lo.phi_plus();
        let plus_saturates = estimates.iter().any(|e| e.phi_plus() >= saturated);
        let minus_saturates = estimates.iter().any(|e| e.phi_minus() >= saturated);
        if spread > 2.0 * (hi.ci_halfwidth() + lo.ci_halfwidth()) && plus_saturates && minus_saturates
        {
            return SideEvidence::Split;
        }
    }
    // Probes are sorted, so the extremes sit at the ends.
    if estimates.iter().all(|e| e.phi_minus() <= tau)
        && estimates.last().unwrap().phi_plus() >= saturated
    {
        return SideEvidence::PlusDominant;
    }
    if estimates.iter().all(|e| e.phi_plus() <= tau)
        && estimates.first().unwrap().phi_minus() >= saturated
    {
        return SideEvidence::MinusDominant;
    }
    SideEvidence::Inconclusive
}

fn transient_mass_note(side: &str, estimates: &[PhiEstimate], tau: f64) -> Option<String> {
    let all_low = estimates.iter().all(|e| e.phi_zero() <= tau);
    let all_high = estimates.iter().all(|e| e.phi_zero() >= 1.0 - tau);
    (!all_low && !all_high).then(|| {
        format!(
            "{side}: phi_zero is not uniform across probes at this horizon \
             (undecided mass is finite-horizon transient); dominance evidence used"
        )
    })
}

/// Estimates escape probabilities for the system and its inverse at the probe
/// points and matches the pair of evidence readings against the four classes.
/// Inconsistent readings refuse with diagnostics rather than forcing a class.
pub fn classify_system(
    sys: &RandomSystem,
    probe_points: &[f64],
    params: &SimParams,
    tau: f64,
) -> Result<ClassVerdict, SystemError> {
    let mut probes: Vec<f64> = probe_points.to_vec();
    probes.sort_by(f64::total_cmp);
    probes.dedup();

    let mut notes = Vec::new();
    let empty = || SideReading { evidence: SideEvidence::Inconclusive, estimates: vec![] };
    let shift = check_shiftability(sys);
    if !shift.shiftable {
        let detail = shift
            .counterexample
            .map(|c| format!(" (counterexample at x = {}, no map moves it {})", c.point, match c.missing {
                crate::system::MissingDirection::Left => "left",
                crate::system::MissingDirection::Right => "right",
            }))
            .unwrap_or_default();
        return Ok(ClassVerdict::Refused {
            reason: format!("system is not shiftable{detail}"),
            forward: empty(),
            inverse: empty(),
            notes,
        });
    }
    if !shift.proved {
        if let Some((lo, hi)) = shift.window {
            notes.push(format!("shiftability checked on window [{lo}, {hi}], not proved globally"));
        }
    }

    let forward_estimates = estimate_phi_batch(sys, &probes, params)?;
    let inverse_estimates = estimate_phi_batch(&sys.inverse(), &probes, params)?;
    notes.extend(transient_mass_note("forward", &forward_estimates, tau));
    notes.extend(transient_mass_note("inverse", &inverse_estimates, tau));
    let forward =
        SideReading { evidence: side_evidence(&forward_estimates, tau), estimates: forward_estimates };
    let inverse =
        SideReading { evidence: side_evidence(&inverse_estimates, tau), estimates: inverse_estimates };

    use SideEvidence::*;
    let decided = match (forward.evidence, inverse.evidence) {
        (PlusDominant, MinusDominant) => Some((1, false, false)),
        (MinusDominant, PlusDominant) => Some((1, true, false)),
        (PlusDominant, Recurrent) => Some((2, false, false)),
        (MinusDominant, Recurrent) => Some((2, true, false)),
        (Recurrent, PlusDominant) => Some((2, false, true)),
        (Recurrent, MinusDominant) => Some((2, true, true)),
        (Recurrent, Recurrent) => Some((3, false, false)),
        (Split, Recurrent) => Some((4, false, false)),
        (Recurrent, Split) => Some((4, false, true)),
        _ => None,
    };
    Ok(match decided {
        Some((class, flipped, swapped)) => {
            ClassVerdict::Classified { class, flipped, swapped, forward, inverse, notes }
        }
        None => ClassVerdict::Refused {
            reason: format!(
                "no class matches the evidence pair (forward {:?}, inverse {:?}); \
                 horizon may be too short or thresholds too tight",
                forward.evidence, inverse.evidence
            ),
            forward,
            inverse,
            notes,
        },
    })
}

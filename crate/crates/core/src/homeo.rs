//! Strictly increasing maps of the real line.
//!
//! Two families with different guarantees:
//!
//! * exact kinds (piecewise-linear with rational breakpoints and
//!   coefficients, of which affine is the zero-breakpoint case): evaluation,
//!   inversion and composition are closed over exact rationals;
//! * numeric kinds (sine perturbation, user callables, and inverses or
//!   compositions involving them): evaluated in f64, inverted by bisection.
//!
//! Hot loops never touch rationals: `MonotoneMap::compile` produces a f64
//! form once and simulation runs on that.

use crate::rational::to_f64;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("piece list must be one longer than the breakpoint list (got {pieces} pieces, {breakpoints} breakpoints)")]
    PieceCountMismatch { pieces: usize, breakpoints: usize },
    #[error("breakpoints must be strictly increasing (offender at index {0})")]
    NonIncreasingBreakpoints(usize),
    #[error("slope must be positive (piece {0})")]
    NonPositiveSlope(usize),
    #[error("discontinuous at breakpoint {at}: left limit {left}, right limit {right}")]
    Discontinuous { at: String, left: String, right: String },
    #[error("sine perturbation amplitude {0} breaks monotonicity (|2*pi*a| must stay below 1)")]
    SinAmplitudeTooLarge(String),
    #[error("map kind {0} has no exact evaluation")]
    NotExact(&'static str),
}

/// One affine piece `x -> slope*x + intercept` of a piecewise-linear map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Piece {
    pub slope: BigRational,
    pub intercept: BigRational,
}

impl Piece {
    pub fn eval(&self, x: &BigRational) -> BigRational {
        &self.slope * x + &self.intercept
    }
}

/// Continuous strictly increasing piecewise-linear bijection of the line.
///
/// Piece `k` applies on `[b_{k-1}, b_k)`; the first and last pieces extend to
/// the infinities. Continuity at every breakpoint is checked exactly, so the
/// half-open convention never matters for values.
#[derive(Clone, Debug, PartialEq)]
pub struct PlMap {
    breakpoints: Vec<BigRational>,
    pieces: Vec<Piece>,
}

impl PlMap {
    pub fn new(breakpoints: Vec<BigRational>, pieces: Vec<Piece>) -> Result<Self, MapError> {
        if pieces.len() != breakpoints.len() + 1 {
            return Err(MapError::PieceCountMismatch {
                pieces: pieces.len(),
                breakpoints: breakpoints.len(),
            });
        }
        for (i, w) in breakpoints.windows(2).enumerate() {
            if w[0] >= w[1] {
                return Err(MapError::NonIncreasingBreakpoints(i + 1));
            }
        }
        for (i, p) in pieces.iter().enumerate() {
            if !p.slope.is_positive() {
                return Err(MapError::NonPositiveSlope(i));
            }
        }
        for (k, b) in breakpoints.iter().enumerate() {
            let left = pieces[k].eval(b);
            let right = pieces[k + 1].eval(b);
            if left != right {
                return Err(MapError::Discontinuous {
                    at: b.to_string(),
                    left: left.to_string(),
                    right: right.to_string(),
                });
            }
        }
        Ok(Self { breakpoints, pieces })
    }

    pub fn affine(slope: BigRational, intercept: BigRational) -> Result<Self, MapError> {
        Self::new(vec![], vec![Piece { slope, intercept }])
    }

    pub fn is_affine(&self) -> bool {
        self.breakpoints.is_empty()
    }

    pub fn breakpoints(&self) -> &[BigRational] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    fn piece_index(&self, x: &BigRational) -> usize {
        self.breakpoints.partition_point(|b| b <= x)
    }

    pub fn eval(&self, x: &BigRational) -> BigRational {
        self.pieces[self.piece_index(x)].eval(x)
    }

    /// Exact inverse. Breakpoints map to their images (order preserved since
    /// the map is increasing); each piece `(s, i)` becomes `(1/s, -i/s)`.
    pub fn invert(&self) -> PlMap {
        let breakpoints = self.breakpoints.iter().map(|b| self.eval(b)).collect();
        let pieces = self
            .pieces
            .iter()
            .map(|p| Piece {
                slope: p.slope.recip(),
                intercept: -(&p.intercept / &p.slope),
            })
            .collect();
        PlMap::new(breakpoints, pieces).expect("inverse of a valid map is valid")
    }

    /// Exact composition `self(g(x))`. The result's breakpoints are `g`'s own
    /// together with the preimages under `g` of `self`'s breakpoints.
    pub fn compose(&self, g: &PlMap) -> PlMap {
        let ginv = g.invert();
        let mut breaks: Vec<BigRational> = g.breakpoints.clone();
        breaks.extend(self.breakpoints.iter().map(|b| ginv.eval(b)));
        breaks.sort();
        breaks.dedup();

        let representatives = region_representatives(&breaks);
        let pieces = representatives
            .iter()
            .map(|x| {
                let inner = &g.pieces[g.piece_index(x)];
                let outer = &self.pieces[self.piece_index(&inner.eval(x))];
                Piece {
                    slope: &outer.slope * &inner.slope,
                    intercept: &outer.slope * &inner.intercept + &outer.intercept,
                }
            })
            .collect();
        PlMap::new(breaks, pieces).expect("composition of valid maps is valid")
    }
}

/// One interior point per region cut out by `breaks` (including both
/// unbounded ends), in order.
pub(crate) fn region_representatives(breaks: &[BigRational]) -> Vec<BigRational> {
    let one = BigRational::from_integer(1.into());
    if breaks.is_empty() {
        return vec![BigRational::zero()];
    }
    let mut reps = Vec::with_capacity(breaks.len() + 1);
    reps.push(breaks.first().unwrap() - &one);
    for w in breaks.windows(2) {
        reps.push((&w[0] + &w[1]) / BigRational::from_integer(2.into()));
    }
    reps.push(breaks.last().unwrap() + &one);
    reps
}

/// `x -> x + a*sin(2*pi*x)`; strictly increasing exactly when `|2*pi*a| < 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SinPerturbMap {
    amplitude: BigRational,
}

impl SinPerturbMap {
    pub fn new(amplitude: BigRational) -> Result<Self, MapError> {
        let a = to_f64(&amplitude);
        if !(TAU * a.abs() < 1.0) {
            return Err(MapError::SinAmplitudeTooLarge(amplitude.to_string()));
        }
        Ok(Self { amplitude })
    }

    pub fn amplitude(&self) -> &BigRational {
        &self.amplitude
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        if !x.is_finite() {
            return x;
        }
        x + to_f64(&self.amplitude) * sin_tau(x)
    }
}

/// sin(2 pi x) with the period removed before the multiplication. `fract` is
/// exact, so lattice points map to sin(0) = 0 exactly; multiplying first
/// would leave argument-rounding dust at integers, which the map's slope
/// amplifies until orbits drift off the invariant lattice.
fn sin_tau(x: f64) -> f64 {
    (TAU * x.fract()).sin()
}

/// User-supplied strictly increasing callable.
///
/// Equality and serialization identify a custom map by its label; the
/// optional displacement bound (`sup |f(x)-x|`) tightens inversion brackets
/// and enables early-exit bounds in simulation.
#[derive(Clone)]
pub struct CustomMap {
    label: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    displacement_bound: Option<f64>,
}

impl CustomMap {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { label: label.into(), f: Arc::new(f), displacement_bound: None }
    }

    pub fn with_displacement_bound(mut self, bound: f64) -> Self {
        self.displacement_bound = Some(bound);
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn displacement_bound(&self) -> Option<f64> {
        self.displacement_bound
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        if !x.is_finite() {
            return x;
        }
        (self.f)(x)
    }
}

impl fmt::Debug for CustomMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomMap")
            .field("label", &self.label)
            .field("displacement_bound", &self.displacement_bound)
            .finish_non_exhaustive()
    }
}

impl PartialEq for CustomMap {
    fn eq(&self, other: &Self) -> bool {
        self.label == other.label && self.displacement_bound == other.displacement_bound
    }
}

/// A strictly increasing map of the line, tagged by how much of its structure
/// is exact.
#[derive(Clone, Debug, PartialEq)]
pub enum MonotoneMap {
    PiecewiseLinear(PlMap),
    SinPerturb(SinPerturbMap),
    Custom(CustomMap),
    /// Inverse of a numeric kind, evaluated by bisection. Inverses of exact
    /// kinds never take this form: they invert into `PiecewiseLinear`.
    Inverse(Box<MonotoneMap>),
    /// Composition involving a numeric kind; exact kinds compose into
    /// `PiecewiseLinear`.
    Composed(Box<MonotoneMap>, Box<MonotoneMap>),
}

impl MonotoneMap {
    pub fn affine(slope: BigRational, intercept: BigRational) -> Result<Self, MapError> {
        Ok(Self::PiecewiseLinear(PlMap::affine(slope, intercept)?))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::PiecewiseLinear(m) if m.is_affine() => "affine",
            Self::PiecewiseLinear(_) => "piecewise_linear",
            Self::SinPerturb(_) => "sin_perturbation",
            Self::Custom(_) => "custom",
            Self::Inverse(_) => "inverse",
            Self::Composed(_, _) => "composed",
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Self::PiecewiseLinear(_))
    }

    /// Exact evaluation; errors for numeric kinds.
    pub fn eval_exact(&self, x: &BigRational) -> Result<BigRational, MapError> {
        match self {
            Self::PiecewiseLinear(m) => Ok(m.eval(x)),
            other => Err(MapError::NotExact(other.kind_name())),
        }
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        self.compile().eval(x)
    }

    /// Inverse map. Exact kinds invert exactly; numeric kinds get a bisection
    /// wrapper, and `invert(invert(m))` returns `m` structurally.
    pub fn invert(&self) -> MonotoneMap {
        match self {
            Self::PiecewiseLinear(m) => Self::PiecewiseLinear(m.invert()),
            Self::Inverse(inner) => (**inner).clone(),
            other => Self::Inverse(Box::new(other.clone())),
        }
    }

    /// `self ∘ g`. Exact kinds stay closed (piecewise-linear); any numeric
    /// participant yields a sequential composition.
    pub fn compose(&self, g: &MonotoneMap) -> MonotoneMap {
        match (self, g) {
            (Self::PiecewiseLinear(f), Self::PiecewiseLinear(gm)) => {
                Self::PiecewiseLinear(f.compose(gm))
            }
            _ => Self::Composed(Box::new(self.clone()), Box::new(g.clone())),
        }
    }

    /// Short human-readable form for reports.
    pub fn describe(&self) -> String {
        match self {
            Self::PiecewiseLinear(m) if m.is_affine() => {
                let p = &m.pieces()[0];
                format!("x -> {}*x + {}", p.slope, p.intercept)
            }
            Self::PiecewiseLinear(m) => {
                format!("piecewise-linear ({} pieces)", m.pieces().len())
            }
            Self::SinPerturb(m) => format!("x -> x + {}*sin(2*pi*x)", m.amplitude()),
            Self::Custom(m) => format!("custom {:?}", m.label()),
            Self::Inverse(m) => format!("inverse of {}", m.describe()),
            Self::Composed(f, g) => format!("({}) after ({})", f.describe(), g.describe()),
        }
    }

    /// Builds the f64 evaluation form used by simulation loops.
    pub fn compile(&self) -> CompiledMap {
        match self {
            Self::PiecewiseLinear(m) => CompiledMap::Pl {
                breaks: m.breakpoints.iter().map(to_f64).collect(),
                slopes: m.pieces.iter().map(|p| to_f64(&p.slope)).collect(),
                intercepts: m.pieces.iter().map(|p| to_f64(&p.intercept)).collect(),
            },
            Self::SinPerturb(m) => CompiledMap::Sin { amp: to_f64(m.amplitude()) },
            Self::Custom(m) => {
                let f = Arc::clone(&m.f);
                CompiledMap::Dyn { f: Arc::new(move |x| f(x)) }
            }
            Self::Inverse(inner) => {
                let fwd = inner.compile();
                let bound = inner.displacement_bound_f64();
                CompiledMap::Dyn {
                    f: Arc::new(move |y| invert_monotone(|x| fwd.eval(x), y, bound, BISECT_TOL)),
                }
            }
            Self::Composed(f, g) => {
                let cf = f.compile();
                let cg = g.compile();
                CompiledMap::Dyn { f: Arc::new(move |x| cf.eval(cg.eval(x))) }
            }
        }
    }

    /// `sup_x |f(x) - x|` when finite and known; used for inversion brackets
    /// and simulation early exits.
    pub fn displacement_bound_f64(&self) -> Option<f64> {
        match self {
            Self::PiecewiseLinear(m) => {
                // |f(x)-x| is bounded iff every piece has slope 1; then the
                // displacement is piecewise constant.
                let one = BigRational::from_integer(1.into());
                if m.pieces.iter().all(|p| p.slope == one) {
                    m.pieces
                        .iter()
                        .map(|p| to_f64(&p.intercept.abs()))
                        .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
                } else {
                    None
                }
            }
            Self::SinPerturb(m) => Some(to_f64(m.amplitude()).abs()),
            Self::Custom(m) => m.displacement_bound(),
            Self::Inverse(inner) => inner.displacement_bound_f64(),
            Self::Composed(f, g) => Some(f.displacement_bound_f64()? + g.displacement_bound_f64()?),
        }
    }
}

const BISECT_TOL: f64 = 1e-12;

/// Solves `f(x) = y` for increasing `f` by bracket growth plus bisection.
/// With a displacement bound `b` the root lies in `[y-b, y+b]`; otherwise the
/// bracket grows geometrically away from `y`.
pub fn invert_monotone(f: impl Fn(f64) -> f64, y: f64, bound: Option<f64>, tol: f64) -> f64 {
    if !y.is_finite() {
        return y;
    }
    let (mut lo, mut hi) = match bound {
        Some(b) => (y - b, y + b),
        None => {
            let mut d = 1.0;
            let mut lo = y - d;
            while f(lo) > y && d < 1e300 {
                d *= 2.0;
                lo = y - d;
            }
            let mut d = 1.0;
            let mut hi = y + d;
            while f(hi) < y && d < 1e300 {
                d *= 2.0;
                hi = y + d;
            }
            (lo, hi)
        }
    };
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // f64 exhausted
        }
        if f(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// f64 evaluation form. `Pl` covers both affine and general piecewise-linear.
#[derive(Clone)]
pub enum CompiledMap {
    Pl { breaks: Vec<f64>, slopes: Vec<f64>, intercepts: Vec<f64> },
    Sin { amp: f64 },
    Dyn { f: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl CompiledMap {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Pl { breaks, slopes, intercepts } => {
                let k = breaks.partition_point(|b| *b <= x);
                slopes[k] * x + intercepts[k]
            }
            Self::Sin { amp } => {
                if !x.is_finite() {
                    x
                } else {
                    x + amp * sin_tau(x)
                }
            }
            Self::Dyn { f } => {
                if !x.is_finite() {
                    x
                } else {
                    f(x)
                }
            }
        }
    }
}

impl fmt::Debug for CompiledMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Pl { breaks, .. } => write!(f, "CompiledMap::Pl({} breaks)", breaks.len()),
            Self::Sin { amp } => write!(f, "CompiledMap::Sin({amp})"),
            Self::Dyn { .. } => write!(f, "CompiledMap::Dyn"),
        }
    }
}

/// Violations found by `validate`; empty means valid.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-checks structural invariants. For exact kinds the constructors already
/// enforce them, so violations here indicate construction bypass; for custom
/// maps this is the only check (strict increase sampled on a grid).
pub fn validate_map(map: &MonotoneMap) -> ValidationReport {
    let mut report = ValidationReport::default();
    match map {
        MonotoneMap::PiecewiseLinear(m) => {
            if let Err(e) = PlMap::new(m.breakpoints().to_vec(), m.pieces().to_vec()) {
                report.violations.push(e.to_string());
            }
        }
        MonotoneMap::SinPerturb(m) => {
            if let Err(e) = SinPerturbMap::new(m.amplitude().clone()) {
                report.violations.push(e.to_string());
            }
        }
        MonotoneMap::Custom(m) => {
            let grid = 1 << 12;
            let (lo, hi) = (-64.0, 64.0);
            let mut prev = m.eval_f64(lo);
            for j in 1..=grid {
                let x = lo + (hi - lo) * j as f64 / grid as f64;
                let y = m.eval_f64(x);
                if y <= prev {
                    report
                        .violations
                        .push(format!("custom map {:?} not strictly increasing near x = {x}", m.label()));
                    break;
                }
                if let Some(b) = m.displacement_bound() {
                    if (y - x).abs() > b {
                        report.violations.push(format!(
                            "custom map {:?} exceeds declared displacement bound {b} at x = {x}",
                            m.label()
                        ));
                        break;
                    }
                }
                prev = y;
            }
        }
        MonotoneMap::Inverse(inner) => {
            report.violations.extend(validate_map(inner).violations);
        }
        MonotoneMap::Composed(f, g) => {
            report.violations.extend(validate_map(f).violations);
            report.violations.extend(validate_map(g).violations);
        }
    }
    report
}

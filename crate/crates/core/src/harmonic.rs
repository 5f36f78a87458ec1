//! Deterministic cross-check for the Monte Carlo escape probabilities:
//! solve the averaging fixed-point equation phi(x) = sum_i p_i phi(f_i(x))
//! on a bounded window with absorbing ends.
//!
//! The computed function is the probability of hitting the upper window edge
//! before the lower one. Where escape is direction-split that approximates
//! the true escape probability; where one direction dominates it degenerates
//! to the constant 0 or 1, which is still the correct windowed answer.

use crate::system::{RandomSystem, SystemError};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum HarmonicError {
    #[error("window [{0}, {1}] is empty or not finite")]
    BadWindow(f64, f64),
    #[error("grid needs at least 2 points (got {0})")]
    GridTooSmall(usize),
    #[error("no convergence after {sweeps} sweeps; residual {residual:.3e}")]
    NotConverged { sweeps: u32, residual: f64 },
    #[error(transparent)]
    System(#[from] SystemError),
}

/// Function sampled on a uniform grid over `[a, b]`, extended by 0 strictly
/// below `a` and by 1 strictly above `b`. Inside the window (boundary points
/// included) evaluation linearly interpolates the stored values.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    a: f64,
    b: f64,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(a: f64, b: f64, values: Vec<f64>) -> Result<Self, HarmonicError> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(HarmonicError::BadWindow(a, b));
        }
        if values.len() < 2 {
            return Err(HarmonicError::GridTooSmall(values.len()));
        }
        Ok(Self { a, b, values })
    }

    /// Linear ramp from 0 at `a` to 1 at `b`: the solver's start iterate.
    pub fn ramp(a: f64, b: f64, points: usize) -> Result<Self, HarmonicError> {
        let values = (0..points).map(|j| j as f64 / (points - 1) as f64).collect();
        Self::new(a, b, values)
    }

    pub fn window(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.b - self.a) / (self.values.len() - 1) as f64
    }

    pub fn grid_point(&self, j: usize) -> f64 {
        self.a + self.step() * j as f64
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t < self.a {
            return 0.0;
        }
        if t > self.b {
            return 1.0;
        }
        let s = (t - self.a) / self.step();
        let j = (s.floor() as usize).min(self.values.len() - 2);
        let w = s - j as f64;
        (1.0 - w) * self.values[j] + w * self.values[j + 1]
    }

    /// Whether the stored edge values agree with the outside conventions
    /// (0 below, 1 above). A self-consistent interior does not imply this:
    /// constants are averaging fixed points too.
    pub fn boundary_consistent(&self) -> bool {
        self.values[0].abs() <= 1e-9 && (self.values[self.values.len() - 1] - 1.0).abs() <= 1e-9
    }
}

/// Where an image point f_i(x_j) lands relative to the grid; captures the
/// interpolation so sweeps are pure fused multiply-adds.
#[derive(Clone, Copy, Debug)]
enum ImageRef {
    Below,
    Above,
    Interp { index: usize, weight: f64 },
}

struct Stencil {
    /// probs[i] weighted references, flattened: entry (i, j) at i*points + j.
    refs: Vec<ImageRef>,
    probs: Vec<f64>,
    points: usize,
}

impl Stencil {
    fn build(sys: &RandomSystem, grid: &GridFunction) -> Result<Self, SystemError> {
        let compiled = sys.compile()?;
        let points = grid.len();
        let mut refs = Vec::with_capacity(points * sys.len());
        for map in compiled.maps() {
            for j in 0..points {
                let t = map.eval(grid.grid_point(j));
                refs.push(if t < grid.a {
                    ImageRef::Below
                } else if t > grid.b {
                    ImageRef::Above
                } else {
                    let s = (t - grid.a) / grid.step();
                    let index = (s.floor() as usize).min(points - 2);
                    ImageRef::Interp { index, weight: s - index as f64 }
                });
            }
        }
        let probs = sys.probs().iter().map(crate::rational::to_f64).collect();
        Ok(Self { refs, probs, points })
    }

    /// One Jacobi sweep: next[j] = sum_i p_i phi(f_i(x_j)) at interior j,
    /// boundary values pinned to the absorbing conventions.
    fn sweep(&self, current: &[f64], next: &mut [f64]) {
        next[0] = 0.0;
        let last = self.points - 1;
        next[last] = 1.0;
        for j in 1..last {
            let mut acc = 0.0;
            for (i, p) in self.probs.iter().enumerate() {
                let v = match self.refs[i * self.points + j] {
                    ImageRef::Below => 0.0,
                    ImageRef::Above => 1.0,
                    ImageRef::Interp { index, weight } => {
                        (1.0 - weight) * current[index] + weight * current[index + 1]
                    }
                };
                acc += p * v;
            }
            next[j] = acc;
        }
    }
}

/// Converged solve plus its convergence record.
#[derive(Clone, Debug)]
pub struct HarmonicSolution {
    pub phi: GridFunction,
    pub sweeps: u32,
    pub residual: f64,
}

/// Iterates the averaging operator from the linear ramp until the
/// self-consistency residual drops to `tol`.
///
/// The residual sequence is non-increasing (the sweep is sup-norm
/// non-expansive), asserted every sweep; the converged values are monotone
/// non-decreasing up to f64 rounding, asserted and then clamped exactly.
pub fn solve_phi_window(
    sys: &RandomSystem,
    window: (f64, f64),
    grid_points: usize,
    tol: f64,
    max_sweeps: u32,
) -> Result<HarmonicSolution, HarmonicError> {
    let grid = GridFunction::ramp(window.0, window.1, grid_points)?;
    let stencil = Stencil::build(sys, &grid)?;
    let mut current = grid.values().to_vec();
    let mut next = vec![0.0; current.len()];
    let mut previous_residual = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        stencil.sweep(&current, &mut next);
        let residual = current
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(
            residual <= previous_residual + 1e-12,
            "sweep residual increased: {residual:.3e} after {previous_residual:.3e}"
        );
        previous_residual = residual;
        std::mem::swap(&mut current, &mut next);
        if residual <= tol {
            enforce_monotone(&mut current);
            let phi = GridFunction::new(window.0, window.1, current)?;
            return Ok(HarmonicSolution { phi, sweeps: sweep, residual });
        }
    }
    Err(HarmonicError::NotConverged { sweeps: max_sweeps, residual: previous_residual })
}

/// Rounding can leave ~1e-16 inversions; anything larger means a real bug.
fn enforce_monotone(values: &mut [f64]) {
    let mut high = f64::NEG_INFINITY;
    for v in values.iter_mut() {
        assert!(high - *v <= 1e-12, "non-monotone solve: drop of {:.3e}", high - *v);
        high = high.max(*v);
        *v = high.clamp(0.0, 1.0);
    }
}

/// Self-consistency defect of `phi` at every interior grid point.
pub fn residual_profile(sys: &RandomSystem, phi: &GridFunction) -> Result<Vec<f64>, SystemError> {
    let compiled = sys.compile()?;
    let probs: Vec<f64> = sys.probs().iter().map(crate::rational::to_f64).collect();
    Ok((1..phi.len() - 1)
        .map(|j| {
            let x = phi.grid_point(j);
            let image: f64 = compiled
                .maps()
                .iter()
                .zip(&probs)
                .map(|(m, p)| p * phi.eval(m.eval(x)))
                .sum();
            (phi.values()[j] - image).abs()
        })
        .collect())
}

/// Sup self-consistency defect over interior grid points.
pub fn harmonic_residual(sys: &RandomSystem, phi: &GridFunction) -> Result<f64, SystemError> {
    Ok(residual_profile(sys, phi)?.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn symmetric_walk_solves_to_the_ramp() {
        let sol = solve_phi_window(&fixtures::symmetric_walk(), (-10.0, 10.0), 21, 1e-10, 10_000)
            .unwrap();
        for (j, v) in sol.phi.values().iter().enumerate() {
            let exact = j as f64 / 20.0;
            assert!((v - exact).abs() <= 1e-8, "phi({}) = {v}", sol.phi.grid_point(j));
        }
    }

    #[test]
    fn deterministic_up_shift_saturates() {
        let up = crate::system::RandomSystem::new(
            "up",
            vec![crate::homeo::MonotoneMap::affine(
                crate::rational::parse_ratio("1").unwrap(),
                crate::rational::parse_ratio("1").unwrap(),
            )
            .unwrap()],
            vec![crate::rational::parse_ratio("1").unwrap()],
        )
        .unwrap();
        let sol = solve_phi_window(&up, (-10.0, 10.0), 21, 1e-12, 10_000).unwrap();
        for j in 1..20 {
            assert!((sol.phi.values()[j] - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn solved_function_passes_its_own_residual_check() {
        let sol =
            solve_phi_window(&fixtures::split_walk(), (-20.0, 20.0), 401, 1e-9, 100_000).unwrap();
        let r = harmonic_residual(&fixtures::split_walk(), &sol.phi).unwrap();
        assert!(r <= 1e-9 + 1e-12, "residual {r}");
        assert!(sol.phi.boundary_consistent());
    }

    #[test]
    fn constant_half_is_interior_consistent_but_boundary_flagged() {
        let sys = fixtures::symmetric_walk();
        let phi = GridFunction::new(-10.0, 10.0, vec![0.5; 21]).unwrap();
        let r = harmonic_residual(&sys, &phi).unwrap();
        assert_eq!(r, 0.0);
        assert!(!phi.boundary_consistent());
    }

    #[test]
    fn ramp_residual_under_drift_walk_matches_direct_substitution() {
        // phi(x) = (x-a)/(b-a) under {x+1 p, x-1 q}: the defect at points at
        // least one unit from the edges is |p-q|/(b-a).
        let sys = fixtures::drift_walk();
        let phi = GridFunction::ramp(-10.0, 10.0, 21).unwrap();
        let profile = residual_profile(&sys, &phi).unwrap();
        let expect = (2.0 / 3.0 - 1.0 / 3.0) / 20.0;
        for (j, r) in profile.iter().enumerate() {
            let x = phi.grid_point(j + 1);
            if x > -9.0 && x < 9.0 {
                assert!((r - expect).abs() <= 1e-12, "at {x}: {r} vs {expect}");
            }
        }
    }

    #[test]
    fn interpolation_conventions() {
        let phi = GridFunction::new(0.0, 1.0, vec![0.2, 0.6]).unwrap();
        assert_eq!(phi.eval(-0.5), 0.0);
        assert_eq!(phi.eval(1.5), 1.0);
        assert_eq!(phi.eval(0.0), 0.2);
        assert_eq!(phi.eval(1.0), 0.6);
        assert!((phi.eval(0.5) - 0.4).abs() <= 1e-15);
    }
}

//! Shared helpers for integration suites. Each test target compiles its own
//! copy, so everything here must stand alone.
#![allow(dead_code)]

use astro_float::{BigFloat, Consts, RoundingMode};
use rdsline::monster::Region;

const RM: RoundingMode = RoundingMode::ToEven;

/// Tower values `E(k) = exp(exp(k))` held at high precision, used as an
/// independent referee for the f64 and sign-dominance position branches.
pub struct TowerOracle {
    towers: Vec<BigFloat>,
    bits: usize,
}

impl TowerOracle {
    /// Precomputes `E(1)..=E(max_rank)` at `bits` precision. The double
    /// exponent overflows the representation near rank 21, which is far above
    /// anything the f64 branch is allowed to touch.
    pub fn new(max_rank: u64, bits: usize) -> Self {
        let mut consts = Consts::new().expect("constants cache");
        let towers = (0..=max_rank)
            .map(|k| {
                let t = BigFloat::from_f64(k as f64, bits)
                    .exp(bits, RM, &mut consts)
                    .exp(bits, RM, &mut consts);
                assert!(!t.is_nan() && !t.is_inf(), "tower E({k}) not representable");
                t
            })
            .collect();
        TowerOracle { towers, bits }
    }

    /// `x0 + sum c_k E(k)` evaluated entirely at oracle precision.
    pub fn position(&self, x0: f64, coeffs: &[(u64, i64)]) -> BigFloat {
        let mut pos = BigFloat::from_f64(x0, self.bits);
        for &(rank, c) in coeffs {
            if c == 0 {
                continue;
            }
            let term = self.towers[rank as usize].mul(
                &BigFloat::from_f64(c as f64, self.bits),
                self.bits,
                RM,
            );
            pos = pos.add(&term, self.bits, RM);
        }
        assert!(!pos.is_nan());
        pos
    }

    /// Verdict against `[a, b]` widened by `slack` on both sides.
    pub fn region(&self, x0: f64, coeffs: &[(u64, i64)], a: f64, b: f64, slack: f64) -> Region {
        let pos = self.position(x0, coeffs);
        let lo = BigFloat::from_f64(a - slack, self.bits);
        let hi = BigFloat::from_f64(b + slack, self.bits);
        if pos < lo {
            Region::Below
        } else if pos > hi {
            Region::Above
        } else {
            Region::Inside
        }
    }
}

//! Guarded trigonometric and hyperbolic Jacobi rotations.
//!
//! With `t = +1` (trigonometric) or `t = -1` (hyperbolic):
//!
//! ```text
//! h      = h_qq - t h_pp,        ct2 = t h / (2 h_pq)
//! |ct|   = |ct2| + sqrt(fma(ct2, ct2, t))
//! tn     = sgn(ct2) / |ct|
//! cs_1   = 1 / sqrt(fma(t tn, tn, 1))
//! cs_2   = |ct| / sqrt(fma(|ct|, |ct|, t))
//! ```
//!
//! A trigonometric rotation maps `[g_p, g_q]` to `cs [g_p - tn g_q, g_q + tn g_p]`,
//! a hyperbolic one to `cs [g_p + tn g_q, g_q + tn g_p]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dd::DoubleDouble;

/// `sqrt(2 / eps)`: beyond it the square root in the formulas is redundant.
pub const BIG_COT: f64 = 134_217_728.0; // 2^27
/// `sqrt(eps)`.
pub const SMALL_COT: f64 = 1.0 / 94_906_265.624_251_56; // 2^-26.5

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum RotationKind {
    Trig,
    Hyperbolic,
}

impl RotationKind {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            RotationKind::Trig => 1.0,
            RotationKind::Hyperbolic => -1.0,
        }
    }
}

/// Which of the two cosine expressions to evaluate.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum CosineFormula {
    /// `1 / sqrt(fma(t tn, tn, 1))`
    Cs1,
    /// `|ct| / sqrt(fma(|ct|, |ct|, t))`, the production choice.
    Cs2,
}

/// The 2x2 pivot submatrix of a Gram matrix.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PivotGram {
    pub h_pp: f64,
    pub h_qq: f64,
    pub h_pq: f64,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RotationParams {
    pub kind: RotationKind,
    pub cs: f64,
    pub tn: f64,
    /// `cs != 1`.
    pub proper: bool,
    /// The column swap that keeps the diagonal sorted was applied.
    pub swap: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RotationError {
    #[error("hyperbolic rotation with |coth 2phi| = {ct2} < 1; J-definiteness was lost")]
    HyperbolicDomain { ct2: f64 },
    #[error("pivot Gram entries must be finite with positive diagonal, got {0:?}")]
    BadGram(PivotGram),
}

impl RotationParams {
    pub fn identity(kind: RotationKind) -> Self {
        Self {
            kind,
            cs: 1.0,
            tn: 0.0,
            proper: false,
            swap: false,
        }
    }

    /// Applies the rotation to a column pair in place (no swap).
    pub fn apply(&self, gp: &mut [f64], gq: &mut [f64]) {
        debug_assert_eq!(gp.len(), gq.len());
        let tn = self.tn;
        match self.kind {
            RotationKind::Trig => {
                if self.proper {
                    let cs = self.cs;
                    for (x, y) in gp.iter_mut().zip(gq.iter_mut()) {
                        let (a, b) = (*x, *y);
                        *x = cs * (-tn).mul_add(b, a);
                        *y = cs * tn.mul_add(a, b);
                    }
                } else {
                    for (x, y) in gp.iter_mut().zip(gq.iter_mut()) {
                        let (a, b) = (*x, *y);
                        *x = (-tn).mul_add(b, a);
                        *y = tn.mul_add(a, b);
                    }
                }
            }
            RotationKind::Hyperbolic => {
                if self.proper {
                    let cs = self.cs;
                    for (x, y) in gp.iter_mut().zip(gq.iter_mut()) {
                        let (a, b) = (*x, *y);
                        *x = cs * tn.mul_add(b, a);
                        *y = cs * tn.mul_add(a, b);
                    }
                } else {
                    for (x, y) in gp.iter_mut().zip(gq.iter_mut()) {
                        let (a, b) = (*x, *y);
                        *x = tn.mul_add(b, a);
                        *y = tn.mul_add(a, b);
                    }
                }
            }
        }
    }
}

/// Rotation parameters from the Gram entries, using the production cosine formula.
pub fn compute_rotation(g: PivotGram, kind: RotationKind) -> Result<RotationParams, RotationError> {
    compute_rotation_with(g, kind, CosineFormula::Cs2)
}

pub fn compute_rotation_with(
    g: PivotGram,
    kind: RotationKind,
    formula: CosineFormula,
) -> Result<RotationParams, RotationError> {
    if !(g.h_pp > 0.0 && g.h_qq > 0.0 && g.h_pp.is_finite() && g.h_qq.is_finite())
        || !g.h_pq.is_finite()
    {
        return Err(RotationError::BadGram(g));
    }
    if g.h_pq == 0.0 {
        return Ok(RotationParams::identity(kind));
    }
    let t = kind.sign();
    let h = (-t).mul_add(g.h_pp, g.h_qq);
    let ct2 = t * (h / (2.0 * g.h_pq));
    rotation_from_cot2(ct2, kind, formula)
}

/// Rotation parameters from a given `ct2`, applying the guards.
pub fn rotation_from_cot2(
    ct2: f64,
    kind: RotationKind,
    formula: CosineFormula,
) -> Result<RotationParams, RotationError> {
    let t = kind.sign();
    let mut a2 = ct2.abs();
    if kind == RotationKind::Hyperbolic {
        if a2 == 1.0 {
            a2 = 1.25;
        } else if a2 < 1.0 {
            return Err(RotationError::HyperbolicDomain { ct2 });
        }
    }
    let sign = if ct2.is_sign_negative() && ct2 != 0.0 { -1.0 } else { 1.0 };

    let (act, big) = if a2 >= BIG_COT {
        (2.0 * a2, true)
    } else if kind == RotationKind::Trig && a2 < SMALL_COT {
        (a2 + 1.0, false)
    } else {
        (a2 + a2.mul_add(a2, t).sqrt(), false)
    };
    let tn = sign / act;
    let cs = if big || act >= BIG_COT {
        1.0
    } else {
        match formula {
            CosineFormula::Cs1 => 1.0 / (t * tn).mul_add(tn, 1.0).sqrt(),
            CosineFormula::Cs2 => act / act.mul_add(act, t).sqrt(),
        }
    };
    Ok(RotationParams {
        kind,
        cs,
        tn,
        proper: cs != 1.0,
        swap: false,
    })
}

/// Departure from (J-)orthogonality, evaluated in double-double arithmetic.
pub fn departure(params: &RotationParams) -> f64 {
    departure_of(params.kind, params.cs, params.tn)
}

pub fn departure_of(kind: RotationKind, cs: f64, tn: f64) -> f64 {
    let c = DoubleDouble::from_f64(cs);
    let s = DoubleDouble::from_prod(cs, tn);
    let one = DoubleDouble::ONE;
    let d = match kind {
        RotationKind::Trig => c.square() + s.square() - one,
        RotationKind::Hyperbolic => (c - s) * (c + s) - one,
    };
    d.abs().to_f64()
}

/// One row of a departure survey.
#[derive(Clone, Debug, PartialEq)]
pub struct SurveyRow {
    pub exponent: i32,
    pub mean_cs1: f64,
    pub mean_cs2: f64,
}

/// Aggregated departure survey.
#[derive(Clone, Debug, PartialEq)]
pub struct Survey {
    pub kind: RotationKind,
    pub samples_per_exponent: usize,
    pub rows: Vec<SurveyRow>,
    /// Mean over every sample of every surveyed exponent.
    pub mean_cs1: f64,
    pub mean_cs2: f64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SurveyError {
    #[error("empty exponent range")]
    EmptyRange,
    #[error("need at least one sample per exponent")]
    NoSamples,
}

/// Exponents at which `|coth 2phi| >= 1` is representable: hyperbolic surveys skip the rest.
pub fn survey_exponents(kind: RotationKind, lo: i32, hi: i32) -> Vec<i32> {
    (lo..=hi)
        .filter(|&e| kind == RotationKind::Trig || e >= 0)
        .collect()
}

/// Mean departures of random rotations, one exponent of `|ct2|` at a time.
///
/// Each sample has a uniformly random 52-bit significand field and the given
/// binary exponent. Every exponent draws from its own stream derived from
/// `seed`, so the output does not depend on the thread count.
pub fn departure_survey(
    kind: RotationKind,
    exponents: std::ops::RangeInclusive<i32>,
    samples: usize,
    seed: u64,
) -> Result<Survey, SurveyError> {
    if samples == 0 {
        return Err(SurveyError::NoSamples);
    }
    let exps = survey_exponents(kind, *exponents.start(), *exponents.end());
    if exps.is_empty() {
        return Err(SurveyError::EmptyRange);
    }
    let rows: Vec<(SurveyRow, f64, f64)> = exps
        .par_iter()
        .map(|&e| {
            let stream = seed ^ ((e as i64 as u64).wrapping_add(1 << 32)).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            let mut rng = ChaCha8Rng::seed_from_u64(stream);
            let (mut s1, mut s2) = (0.0f64, 0.0f64);
            let biased = ((e + 1023) as u64) << 52;
            for _ in 0..samples {
                let m = rng.random::<u64>() >> 12;
                let ct2 = f64::from_bits(biased | m);
                let r1 = rotation_from_cot2(ct2, kind, CosineFormula::Cs1)
                    .expect("surveyed exponents are in the domain");
                let r2 = rotation_from_cot2(ct2, kind, CosineFormula::Cs2)
                    .expect("surveyed exponents are in the domain");
                s1 += departure(&r1);
                s2 += departure(&r2);
            }
            let row = SurveyRow {
                exponent: e,
                mean_cs1: s1 / samples as f64,
                mean_cs2: s2 / samples as f64,
            };
            (row, s1, s2)
        })
        .collect();
    let total = (samples * rows.len()) as f64;
    let mean_cs1 = rows.iter().map(|r| r.1).sum::<f64>() / total;
    let mean_cs2 = rows.iter().map(|r| r.2).sum::<f64>() / total;
    Ok(Survey {
        kind,
        samples_per_exponent: samples,
        rows: rows.into_iter().map(|r| r.0).collect(),
        mean_cs1,
        mean_cs2,
    })
}

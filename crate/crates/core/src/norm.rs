//! Overflow- and underflow-proof sums of squares and 2-norms.
//!
//! The sum of squares is reduced over a fixed pairwise tree: a range of
//! length `k > 2` is split after its first `next_power_of_two(k) / 2`
//! elements. The tree depth is therefore exactly `ceil(lg n)` and results are
//! bitwise reproducible. Values that are too large or too small are summed
//! separately after exact power-of-two scaling, and the partial sums are
//! merged in nondecreasing order of magnitude.

use std::sync::OnceLock;

use thiserror::Error;

use crate::dd::{two_prod, DoubleDouble};

/// Smallest positive normalized double.
pub const MU: f64 = f64::MIN_POSITIVE;
/// Largest finite double.
pub const NU: f64 = f64::MAX;
/// Unit roundoff for rounding to nearest.
pub const EPS: f64 = f64::EPSILON / 2.0;
pub const GAMMA: f64 = 1.0 - EPS;
pub const DELTA: f64 = 1.0 + EPS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormError {
    #[error("component {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("scale_exponent needs positive finite arguments, got f = {f}, t = {t}")]
    BadScaleArgs { f: f64, t: f64 },
}

/// `x * 2^e`, rounded once even when the result is subnormal.
pub fn ldexp(x: f64, e: i32) -> f64 {
    if x == 0.0 || !x.is_finite() || e == 0 {
        return x;
    }
    let (y, fe) = frexp(x);
    let te = fe as i64 + e as i64;
    if te > 1024 {
        return f64::INFINITY.copysign(x);
    }
    if te >= -1021 {
        return (2.0 * y) * pow2(te as i32 - 1);
    }
    // subnormal or zero result: one rounding in the final multiply
    let shifted = te + 1074;
    if shifted < -1021 {
        return 0.0f64.copysign(x);
    }
    (y * pow2(shifted as i32)) * pow2_tiny()
}

/// `2^e` for `-1022 <= e <= 1023`.
#[inline]
fn pow2(e: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}

#[inline]
fn pow2_tiny() -> f64 {
    f64::from_bits(1) // 2^-1074
}

/// Splits `x` into `y * 2^e` with `0.5 <= |y| < 1`; zero and non-finite values give `(x, 0)`.
pub fn frexp(x: f64) -> (f64, i32) {
    if x == 0.0 || !x.is_finite() {
        return (x, 0);
    }
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    if biased == 0 {
        let (y, e) = frexp(x * f64::from_bits((1023u64 + 64) << 52));
        return (y, e - 64);
    }
    let y = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1022u64 << 52));
    (y, biased - 1022)
}

#[inline]
fn ceil_lg(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Which way [`scale_exponent`] resolves the power of two.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ScaleDirection {
    /// Smallest `j` with `2^j f >= t`.
    Up,
    /// Largest `j` with `2^j f <= t`.
    Down,
}

/// Exponent of the power-of-two scaling that moves `f` onto the threshold `t`.
pub fn scale_exponent(f: f64, t: f64, dir: ScaleDirection) -> Result<i32, NormError> {
    if !(f > 0.0 && t > 0.0 && f.is_finite() && t.is_finite()) {
        return Err(NormError::BadScaleArgs { f, t });
    }
    let (fy, fe) = frexp(f);
    let (ty, te) = frexp(t);
    Ok(match dir {
        ScaleDirection::Up => (te - fe) + i32::from(fy < ty),
        ScaleDirection::Down => (te - fe) - i32::from(fy > ty),
    })
}

/// Correctly directed square root of a double-double, used for the safe bounds.
fn directed_sqrt(q: DoubleDouble, up: bool) -> f64 {
    let mut s = q.hi.sqrt();
    let cmp = |s: f64| {
        let (p, e) = two_prod(s, s);
        (DoubleDouble::new(p, e) - q).hi
    };
    if up {
        while cmp(s) < 0.0 {
            s = s.next_up();
        }
        while cmp(s.next_down()) >= 0.0 {
            s = s.next_down();
        }
    } else {
        while cmp(s) > 0.0 {
            s = s.next_down();
        }
        while cmp(s.next_up()) <= 0.0 {
            s = s.next_up();
        }
    }
    s
}

/// `ru(sqrt(mu / gamma))`.
pub fn mu_tilde() -> f64 {
    // work at a shifted exponent so the low parts stay normalized
    let q = DoubleDouble::from_f64(ldexp(MU, 600)) / DoubleDouble::from_f64(GAMMA);
    ldexp(directed_sqrt(q, true), -300)
}

/// `2^c * delta^(1 + c)` with `c = ceil(lg n)`, in double-double.
pub fn delta_n(n: usize) -> DoubleDouble {
    let c = ceil_lg(n.max(1));
    let mut p = DoubleDouble::ONE;
    let d = DoubleDouble::from_f64(DELTA);
    for _ in 0..=c {
        p = p * d;
    }
    p.ldexp(c as i32)
}

/// `rz(sqrt(nu / delta_n))`.
pub fn nu_hat(n: usize) -> f64 {
    let q = DoubleDouble::from_f64(ldexp(NU, -600)) / delta_n(n);
    ldexp(directed_sqrt(q, false), 300)
}

/// The inclusive safe range `(mu_tilde, nu_hat)` for vectors of length `n`.
pub fn safe_bounds(n: usize) -> (f64, f64) {
    static TABLE: OnceLock<(f64, Vec<f64>)> = OnceLock::new();
    let (mt, nh) = TABLE.get_or_init(|| {
        let nh = (0..usize::BITS).map(|c| nu_hat(1usize << c)).collect();
        (mu_tilde(), nh)
    });
    (*mt, nh[ceil_lg(n.max(1)) as usize])
}

/// A sum of squares `value * 2^scale_exp`; `scale_exp` is even.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ScaledSquare {
    pub scale_exp: i32,
    pub value: f64,
}

impl ScaledSquare {
    pub const ZERO: Self = Self {
        scale_exp: 0,
        value: 0.0,
    };

    pub fn new(scale_exp: i32, value: f64) -> Self {
        Self { scale_exp, value }
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0.0
    }

    /// Collapses to a plain double; may overflow or underflow.
    pub fn to_f64(&self) -> f64 {
        ldexp(self.value, self.scale_exp)
    }

    /// The square root as `sigma * 2^exp`.
    pub fn sqrt(&self) -> Norm2 {
        if self.is_zero() {
            return Norm2 { exp: 0, sigma: 0.0 };
        }
        let c = self.common_form();
        Norm2 {
            exp: c.scale_exp / 2,
            sigma: c.value.sqrt(),
        }
    }

    /// Representation with `0.5 <= value < 2` and an even exponent.
    pub fn common_form(&self) -> ScaledSquare {
        if self.value == 0.0 {
            return *self;
        }
        // value = 2^m * y with 1 <= y < 2
        let (fy, fe) = frexp(self.value);
        let y = 2.0 * fy;
        let m = fe - 1;
        let m1 = -m.rem_euclid(2);
        ScaledSquare {
            scale_exp: self.scale_exp + m - m1,
            value: if m1 == 0 { y } else { 0.5 * y },
        }
    }

    fn lex_key(&self) -> (i32, f64) {
        (self.scale_exp, self.value)
    }
}

/// Sum of two common-form scaled squares; the smaller is rescaled to the larger's scale.
pub fn add_scaled(a: ScaledSquare, b: ScaledSquare) -> ScaledSquare {
    if a.is_zero() {
        return b;
    }
    if b.is_zero() {
        return a;
    }
    let (small, large) = if a.lex_key() <= b.lex_key() { (a, b) } else { (b, a) };
    let ratio = small.scale_exp - large.scale_exp;
    ScaledSquare {
        scale_exp: large.scale_exp,
        value: ldexp(small.value, ratio) + large.value,
    }
}

/// A norm `sigma * 2^exp`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Norm2 {
    pub exp: i32,
    pub sigma: f64,
}

impl Norm2 {
    pub fn to_f64(&self) -> f64 {
        ldexp(self.sigma, self.exp)
    }
}

/// Reduction options.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct NormConfig {
    /// Skip the unscaled fast path even when it is safe.
    pub force_scaled: bool,
}

/// Counts of squares or partial sums that left the normalized range.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct NormTrace {
    pub overflows: u64,
    pub underflows: u64,
}

fn tree_sum<F: Fn(f64) -> f64>(x: &[f64], f: &F) -> f64 {
    match x.len() {
        0 => 0.0,
        1 => f(x[0]),
        2 => f(x[0]) + f(x[1]),
        n => {
            let h = n.next_power_of_two() / 2;
            tree_sum(&x[..h], f) + tree_sum(&x[h..], f)
        }
    }
}

/// Robust sum of squares with default options.
pub fn sum_squares(x: &[f64]) -> Result<ScaledSquare, NormError> {
    sum_squares_with(x, &NormConfig::default())
}

pub fn sum_squares_with(x: &[f64], cfg: &NormConfig) -> Result<ScaledSquare, NormError> {
    sum_squares_impl(x, cfg, None)
}

/// Like [`sum_squares_with`], also counting range exits of the computed squares and sums.
pub fn sum_squares_traced(
    x: &[f64],
    cfg: &NormConfig,
) -> Result<(ScaledSquare, NormTrace), NormError> {
    let mut trace = NormTrace::default();
    let s = sum_squares_impl(x, cfg, Some(&mut trace))?;
    Ok((s, trace))
}

fn sum_squares_impl(
    x: &[f64],
    cfg: &NormConfig,
    mut trace: Option<&mut NormTrace>,
) -> Result<ScaledSquare, NormError> {
    let mut big = 0.0f64;
    let mut small = NU;
    for (index, &v) in x.iter().enumerate() {
        if !v.is_finite() {
            return Err(NormError::NonFinite { index, value: v });
        }
        let a = v.abs();
        big = big.max(a);
        if a > 0.0 {
            small = small.min(a);
        }
    }
    if big == 0.0 {
        return Ok(ScaledSquare::ZERO);
    }
    let n = x.len();
    let (mt, nh) = safe_bounds(n);

    if !cfg.force_scaled && big <= nh && small * small >= MU {
        let s = tree_sum(x, &|v| v * v);
        if let Some(t) = trace.as_deref_mut() {
            record(t, x, &|v| v, s);
        }
        return Ok(ScaledSquare::new(0, s));
    }

    let mut parts: Vec<ScaledSquare> = Vec::with_capacity(3);
    if small <= nh && big >= mt {
        let sel = |v: f64| {
            let a = v.abs();
            if a >= mt && a <= nh {
                v
            } else {
                0.0
            }
        };
        let s = tree_sum(x, &|v| {
            let w = sel(v);
            w * w
        });
        if let Some(t) = trace.as_deref_mut() {
            record(t, x, &sel, s);
        }
        if s != 0.0 {
            parts.push(ScaledSquare::new(0, s));
        }
    }
    if big > nh {
        let l = scale_exponent(big, nh, ScaleDirection::Down)?;
        let sel = |v: f64| if v.abs() > nh { ldexp(v, l) } else { 0.0 };
        let s = tree_sum(x, &|v| {
            let w = sel(v);
            w * w
        });
        if let Some(t) = trace.as_deref_mut() {
            record(t, x, &sel, s);
        }
        if s != 0.0 {
            parts.push(ScaledSquare::new(-2 * l, s));
        }
    }
    if small < mt {
        let k = scale_exponent(small, mt, ScaleDirection::Up)?;
        let sel = |v: f64| if v.abs() < mt { ldexp(v, k) } else { 0.0 };
        let s = tree_sum(x, &|v| {
            let w = sel(v);
            w * w
        });
        if let Some(t) = trace {
            record(t, x, &sel, s);
        }
        if s != 0.0 {
            parts.push(ScaledSquare::new(-2 * k, s));
        }
    }

    if parts.len() == 1 {
        return Ok(parts[0]);
    }
    let mut forms: Vec<ScaledSquare> = parts.iter().map(ScaledSquare::common_form).collect();
    forms.sort_by(|a, b| a.lex_key().partial_cmp(&b.lex_key()).expect("finite partial sums"));
    let mut acc = ScaledSquare::ZERO;
    for f in forms {
        acc = add_scaled(acc.common_form(), f);
    }
    Ok(acc)
}

fn record<F: Fn(f64) -> f64>(t: &mut NormTrace, x: &[f64], sel: &F, total: f64) {
    for &v in x {
        let w = sel(v);
        if w != 0.0 {
            let sq = w * w;
            if sq < MU {
                t.underflows += 1;
            }
            if !sq.is_finite() {
                t.overflows += 1;
            }
        }
    }
    if !total.is_finite() {
        t.overflows += 1;
    }
}

/// Robust 2-norm as `sigma * 2^exp`.
pub fn norm2(x: &[f64]) -> Result<Norm2, NormError> {
    Ok(sum_squares(x)?.sqrt())
}

pub fn norm2_with(x: &[f64], cfg: &NormConfig) -> Result<Norm2, NormError> {
    Ok(sum_squares_with(x, cfg)?.sqrt())
}

/// Robust 2-norm collapsed to a double.
pub fn norm(x: &[f64]) -> Result<f64, NormError> {
    Ok(norm2(x)?.to_f64())
}

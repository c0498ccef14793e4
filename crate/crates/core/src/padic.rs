//! Exact-as-possible arithmetic in `Q_p` with explicit precision bookkeeping.
//!
//! A scalar is stored in relative-precision form: an exact integer valuation
//! plus a unit known modulo `p^prec`. Multiplication and division are then
//! loss-free; only additive cancellation reduces precision, and it does so
//! visibly (the relative precision of the result drops by the number of
//! cancelled digits). An element indistinguishable from zero is a
//! distinguished flag carrying the absolute valuation bound below which
//! nothing is known.

use crate::error::{KernelError, Result};
use serde_json::{json, Value};

/// Sentinel: "zero to infinite absolute precision", i.e. exactly zero.
pub const ABS_EXACT: i64 = i64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Repr {
    /// Indistinguishable from zero modulo `p^abs`.
    Zero { abs: i64 },
    /// `p^val * unit`, with `unit` a unit known modulo `p^prec`.
    Unit { val: i64, unit: u128, prec: u32 },
}

/// An element of `Q_p` at finite precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PadicScalar {
    p: u32,
    repr: Repr,
}

/// Largest relative precision for which `p^(2*prec)` fits comfortably in
/// `u128`, so that products of reduced units never overflow.
pub fn max_prec(p: u32) -> u32 {
    (126.0 / (2.0 * (p as f64).log2())).floor() as u32
}

fn pow_u128(p: u32, e: u32) -> u128 {
    (0..e).fold(1u128, |acc, _| acc * p as u128)
}

/// Extended Euclid inverse of `a` modulo `m` (`a` coprime to `m`).
fn inv_mod(a: u128, m: u128) -> u128 {
    let (mut r0, mut r1) = (m as i128, (a % m) as i128);
    let (mut s0, mut s1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
    }
    debug_assert_eq!(r0, 1, "inv_mod of a non-unit");
    (s0.rem_euclid(m as i128)) as u128
}

impl PadicScalar {
    // ---- constructors ----

    pub fn zero(p: u32) -> Self {
        PadicScalar { p, repr: Repr::Zero { abs: ABS_EXACT } }
    }

    /// Zero-at-precision: known only to vanish modulo `p^abs`.
    pub fn zero_at(p: u32, abs: i64) -> Self {
        PadicScalar { p, repr: Repr::Zero { abs } }
    }

    /// Build from an exact valuation and a value known mod `p^digits`
    /// (the value sits at scale `p^base_val`). Strips p-powers from `value`.
    fn from_parts(p: u32, base_val: i64, value: u128, digits: u32) -> Self {
        assert!(digits <= max_prec(p), "precision {digits} too large for p={p}");
        let modulus = pow_u128(p, digits);
        let mut v = value % modulus;
        if v == 0 {
            return PadicScalar { p, repr: Repr::Zero { abs: base_val + digits as i64 } };
        }
        let mut w = 0u32;
        while v % p as u128 == 0 {
            v /= p as u128;
            w += 1;
        }
        let rem = digits - w;
        PadicScalar { p, repr: Repr::Unit { val: base_val + w as i64, unit: v % pow_u128(p, rem), prec: rem } }
    }

    pub fn from_int(p: u32, n: i64, prec: u32) -> Self {
        if n == 0 {
            return Self::zero(p);
        }
        let neg = n < 0;
        let mut m = n.unsigned_abs() as u128;
        let mut val = 0i64;
        while m % p as u128 == 0 {
            m /= p as u128;
            val += 1;
        }
        let modulus = pow_u128(p, prec);
        let v = m % modulus;
        let v = if neg { (modulus - v) % modulus } else { v };
        Self::from_parts(p, val, v, prec)
    }

    pub fn from_ratio(p: u32, num: i64, den: i64, prec: u32) -> Result<Self> {
        let d = Self::from_int(p, den, prec);
        Self::from_int(p, num, prec).div(&d)
    }

    pub fn one(p: u32, prec: u32) -> Self {
        Self::from_int(p, 1, prec)
    }

    /// `p^k` as an exact power.
    pub fn p_power(p: u32, k: i64, prec: u32) -> Self {
        PadicScalar { p, repr: Repr::Unit { val: k, unit: 1, prec } }
    }

    // ---- accessors ----

    pub fn prime(&self) -> u32 {
        self.p
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.repr, Repr::Zero { .. })
    }

    /// Valuation; `None` for zero-at-precision (the `+infinity` flag).
    pub fn valuation(&self) -> Option<i64> {
        match self.repr {
            Repr::Zero { .. } => None,
            Repr::Unit { val, .. } => Some(val),
        }
    }

    /// Absolute precision: the element is known modulo `p^abs_prec()`.
    pub fn abs_prec(&self) -> i64 {
        match self.repr {
            Repr::Zero { abs } => abs,
            Repr::Unit { val, prec, .. } => val + prec as i64,
        }
    }

    pub fn rel_prec(&self) -> u32 {
        match self.repr {
            Repr::Zero { .. } => 0,
            Repr::Unit { prec, .. } => prec,
        }
    }

    /// Base-p digits of the unit part, lowest first; empty for zero.
    pub fn unit_digits(&self) -> Vec<u64> {
        match self.repr {
            Repr::Zero { .. } => vec![],
            Repr::Unit { mut unit, prec, .. } => {
                let mut ds = Vec::with_capacity(prec as usize);
                for _ in 0..prec {
                    ds.push((unit % self.p as u128) as u64);
                    unit /= self.p as u128;
                }
                ds
            }
        }
    }

    /// The unit part as an integer residue mod `p^k`, for `k <= rel_prec`.
    pub fn unit_residue(&self, k: u32) -> Option<u128> {
        match self.repr {
            Repr::Zero { .. } => None,
            Repr::Unit { unit, prec, .. } => {
                if k > prec {
                    None
                } else {
                    Some(unit % pow_u128(self.p, k))
                }
            }
        }
    }

    /// Integer residue of the whole element mod `p^k` (requires val >= 0).
    pub fn residue(&self, k: u32) -> Option<u128> {
        match self.repr {
            Repr::Zero { abs } => {
                if abs >= k as i64 {
                    Some(0)
                } else {
                    None
                }
            }
            Repr::Unit { val, unit, prec } => {
                if val < 0 || val + (prec as i64) < k as i64 {
                    return None;
                }
                let shift = (k as i64 - val).max(0) as u32;
                Some((unit % pow_u128(self.p, shift)) * pow_u128(self.p, val as u32) % pow_u128(self.p, k))
            }
        }
    }

    // ---- arithmetic ----

    pub fn neg(&self) -> Self {
        match self.repr {
            Repr::Zero { .. } => *self,
            Repr::Unit { val, unit, prec } => {
                let m = pow_u128(self.p, prec);
                PadicScalar { p: self.p, repr: Repr::Unit { val, unit: (m - unit) % m, prec } }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.p, other.p, "mixed primes");
        let p = self.p;
        match (self.repr, other.repr) {
            (Repr::Zero { abs: a }, Repr::Zero { abs: b }) => Self::zero_at(p, a.min(b)),
            (Repr::Zero { abs }, Repr::Unit { val, unit, prec }) | (Repr::Unit { val, unit, prec }, Repr::Zero { abs }) => {
                let m = abs.min(val + prec as i64);
                if val >= m {
                    Self::zero_at(p, m)
                } else {
                    Self::from_parts(p, val, unit, (m - val) as u32)
                }
            }
            (Repr::Unit { val: va, unit: ua, prec: na }, Repr::Unit { val: vb, unit: ub, prec: nb }) => {
                let v = va.min(vb);
                let m = (va + na as i64).min(vb + nb as i64);
                let digits = (m - v) as u32;
                let modulus = pow_u128(p, digits);
                let lift = |val: i64, unit: u128| -> u128 {
                    let sh = (val - v) as u32;
                    if sh >= digits {
                        0
                    } else {
                        (unit % pow_u128(p, digits - sh)) * pow_u128(p, sh)
                    }
                };
                Self::from_parts(p, v, (lift(va, ua) + lift(vb, ub)) % modulus, digits)
            }
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.p, other.p, "mixed primes");
        let p = self.p;
        match (self.repr, other.repr) {
            (Repr::Zero { abs: a }, Repr::Zero { abs: b }) => Self::zero_at(p, a.saturating_add(b)),
            (Repr::Zero { abs }, Repr::Unit { val, .. }) | (Repr::Unit { val, .. }, Repr::Zero { abs }) => {
                Self::zero_at(p, abs.saturating_add(val))
            }
            (Repr::Unit { val: va, unit: ua, prec: na }, Repr::Unit { val: vb, unit: ub, prec: nb }) => {
                let prec = na.min(nb);
                let m = pow_u128(p, prec);
                PadicScalar { p, repr: Repr::Unit { val: va + vb, unit: (ua % m) * (ub % m) % m, prec } }
            }
        }
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        assert_eq!(self.p, other.p, "mixed primes");
        let p = self.p;
        match other.repr {
            Repr::Zero { .. } => Err(KernelError::DivisionByZero),
            Repr::Unit { val: vb, unit: ub, prec: nb } => match self.repr {
                Repr::Zero { abs } => Ok(Self::zero_at(p, abs.saturating_sub(vb))),
                Repr::Unit { val: va, unit: ua, prec: na } => {
                    let prec = na.min(nb);
                    let m = pow_u128(p, prec);
                    Ok(PadicScalar { p, repr: Repr::Unit { val: va - vb, unit: (ua % m) * inv_mod(ub % m, m) % m, prec } })
                }
            },
        }
    }

    pub fn inv(&self) -> Result<Self> {
        Self::one(self.p, self.rel_prec().max(1)).div(self)
    }

    /// Integer power, negative exponents via inversion.
    pub fn pow(&self, e: i64) -> Result<Self> {
        if e == 0 {
            return Ok(Self::one(self.p, self.rel_prec().max(1)));
        }
        let base = if e < 0 { self.inv()? } else { *self };
        let mut acc = Self::one(self.p, base.rel_prec().max(1));
        for _ in 0..e.unsigned_abs() {
            acc = acc.mul(&base);
        }
        Ok(acc)
    }

    // ---- comparisons ----

    /// `v_p(self - other) >= abs`, i.e. the two agree modulo `p^abs`.
    pub fn agrees_to(&self, other: &Self, abs: i64) -> bool {
        let d = self.sub(other);
        match d.repr {
            Repr::Zero { .. } => true,
            Repr::Unit { val, .. } => val >= abs,
        }
    }

    /// Valuation of the difference; `None` when zero at joint precision.
    pub fn discrepancy(&self, other: &Self) -> Option<i64> {
        self.sub(other).valuation()
    }

    // ---- special functions ----

    /// Falling-factorial binomial `self (self-1) ... (self-k+1) / k!`.
    pub fn binomial(&self, k: u64) -> Result<Self> {
        let p = self.p;
        let prec = self.rel_prec().max(1);
        let mut num = Self::one(p, prec);
        let mut fact = Self::one(p, prec);
        for i in 0..k {
            num = num.mul(&self.sub(&Self::from_int(p, i as i64, prec)));
            fact = fact.mul(&Self::from_int(p, (i + 1) as i64, prec));
        }
        let out = num.div(&fact)?;
        if !out.is_zero() && out.rel_prec() == 0 {
            return Err(KernelError::PrecisionExhausted(format!("binomial with k={k}")));
        }
        Ok(out)
    }

    /// Minimal truncation order `R` with certified log error
    /// `(R+1) v_p(a-1) - floor(log_p(R+1)) >= v_p(a-1) + N`.
    pub fn log_terms(&self) -> Result<u64> {
        let w = self
            .sub(&Self::one(self.p, self.rel_prec().max(1)))
            .valuation()
            .unwrap_or(ABS_EXACT);
        if w < 1 {
            return Err(KernelError::DomainError("plog needs a principal unit (a = 1 mod p)".into()));
        }
        if w == ABS_EXACT {
            return Ok(1);
        }
        let n = self.rel_prec() as i64;
        let mut r: i64 = 1;
        loop {
            let log_term = ((r + 1) as f64).log(self.p as f64).floor() as i64;
            if (r + 1) * w - log_term >= w + n {
                return Ok(r as u64);
            }
            r += 1;
        }
    }

    /// Truncated p-adic logarithm of a principal unit, with the truncation
    /// order chosen so the series tail sits below the working precision.
    pub fn plog(&self) -> Result<Self> {
        let r = self.log_terms()?;
        self.plog_with_terms(r)
    }

    pub fn plog_with_terms(&self, r: u64) -> Result<Self> {
        let p = self.p;
        let prec = self.rel_prec().max(1);
        let w = self.sub(&Self::one(p, prec));
        if w.is_zero() {
            return Ok(Self::zero_at(p, w.abs_prec()));
        }
        if w.valuation().unwrap_or(0) < 1 {
            return Err(KernelError::DomainError("plog needs a principal unit".into()));
        }
        let mut acc = Self::zero(p);
        let mut wp = Self::one(p, prec);
        for k in 1..=r {
            wp = wp.mul(&w);
            let term = wp.div(&Self::from_int(p, k as i64, prec))?;
            acc = if k % 2 == 1 { acc.add(&term) } else { acc.sub(&term) };
        }
        Ok(acc)
    }

    /// `log(a) / p^{v_p(log a)}`, a unit.
    pub fn log0(&self) -> Result<Self> {
        let l = self.plog()?;
        let v = l.valuation().ok_or_else(|| {
            KernelError::PrecisionExhausted("log0 of an element whose log vanishes at precision".into())
        })?;
        l.div(&Self::p_power(self.p, v, l.rel_prec()))
    }

    /// Teichmüller lift of `a mod p` by Hensel iteration `x -> x^p`.
    pub fn teichmuller(p: u32, a: u64, prec: u32) -> Result<Self> {
        if a % p as u64 == 0 {
            return Err(KernelError::DomainError("teichmuller of a non-unit residue".into()));
        }
        let m = pow_u128(p, prec);
        let mut x = (a as u128) % m;
        loop {
            let mut y = 1u128;
            for _ in 0..p {
                y = y * x % m;
            }
            if y == x {
                break;
            }
            x = y;
        }
        Ok(Self::from_parts(p, 0, x, prec))
    }

    // ---- JSON (schema: {"val": int|null, "digits": [..], "prec": N}) ----

    pub fn to_json(&self) -> Value {
        match self.repr {
            Repr::Zero { .. } => json!({"val": null, "digits": [], "prec": 0}),
            Repr::Unit { val, prec, .. } => json!({"val": val, "digits": self.unit_digits(), "prec": prec}),
        }
    }

    pub fn from_json(p: u32, v: &Value) -> Result<Self> {
        let bad = |m: &str| KernelError::Mismatch(format!("scalar json: {m}"));
        let val = v.get("val").ok_or_else(|| bad("missing val"))?;
        if val.is_null() {
            return Ok(Self::zero(p));
        }
        let val = val.as_i64().ok_or_else(|| bad("val not an integer"))?;
        let digits = v
            .get("digits")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing digits"))?;
        let prec = v.get("prec").and_then(Value::as_u64).ok_or_else(|| bad("missing prec"))? as u32;
        if digits.len() != prec as usize {
            return Err(bad("digits length != prec"));
        }
        let mut unit = 0u128;
        for (i, d) in digits.iter().enumerate() {
            let d = d.as_u64().ok_or_else(|| bad("digit not an integer"))?;
            if d >= p as u64 {
                return Err(bad("digit out of range"));
            }
            unit += d as u128 * pow_u128(p, i as u32);
        }
        if prec == 0 {
            return Ok(Self::zero(p));
        }
        if unit % p as u128 == 0 {
            return Err(bad("lowest unit digit is zero"));
        }
        Ok(PadicScalar { p, repr: Repr::Unit { val, unit, prec } })
    }
}

impl std::fmt::Display for PadicScalar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.repr {
            Repr::Zero { abs } => {
                if abs == ABS_EXACT {
                    write!(f, "0")
                } else {
                    write!(f, "O({}^{})", self.p, abs)
                }
            }
            Repr::Unit { val, unit, prec } => write!(f, "{}*{}^{} + O({}^{})", unit, self.p, val, self.p, val + prec as i64),
        }
    }
}

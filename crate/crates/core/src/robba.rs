//! Truncated Laurent-series model of the Robba ring over `Q_p`.
//!
//! An element is a sparse Laurent polynomial on a degree window
//! `[dmin, dmax]` with precision-tracked coefficients. Coefficients below the
//! window are exactly zero; coefficients above `dmax` are unknown unless the
//! element is flagged `exact` (a genuinely finite object, e.g. a fixture
//! polynomial or the image of one under an operator that preserves
//! finiteness). Every operation returns the largest window on which each
//! retained coefficient is fully determined by its inputs, so tests can
//! assert on certified regions only.
//!
//! The operators: `phi` is `T -> (1+T)^p - 1`, `gamma(a)` is
//! `T -> (1+T)^a - 1`, `psi` is the left inverse of `phi` computed by a
//! `mu_p`-trace over `K_1` followed by a triangular Frobenius inversion with
//! diagonal `p^d` at degree `d`, `partial` is `(1+T) d/dT`, and `nabla0` is
//! `t * partial` with `t = log(1+T)`.

use crate::cyclo::{CycloElement, CycloField};
use crate::error::{KernelError, Result};
use crate::padic::PadicScalar;
use serde_json::{json, Value};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct LaurentWindow {
    p: u32,
    prec: u32,
    dmin: i64,
    dmax: i64,
    exact: bool,
    coeffs: BTreeMap<i64, PadicScalar>,
    loss: u32,
}

impl LaurentWindow {
    // ---- constructors ----

    pub fn zero(p: u32, prec: u32, dmin: i64, dmax: i64) -> Self {
        LaurentWindow { p, prec, dmin, dmax, exact: true, coeffs: BTreeMap::new(), loss: 0 }
    }

    pub fn monomial(p: u32, prec: u32, dmin: i64, dmax: i64, degree: i64, c: PadicScalar) -> Self {
        let mut f = Self::zero(p, prec, dmin, dmax);
        f.set(degree, c);
        f
    }

    pub fn constant(p: u32, prec: u32, dmin: i64, dmax: i64, c: PadicScalar) -> Self {
        Self::monomial(p, prec, dmin, dmax, 0, c)
    }

    pub fn one(p: u32, prec: u32, dmin: i64, dmax: i64) -> Self {
        Self::constant(p, prec, dmin, dmax, PadicScalar::one(p, prec))
    }

    /// `t = log(1+T)` truncated at `dmax`; not exact (the true object is an
    /// infinite series).
    pub fn t_series(p: u32, prec: u32, dmin: i64, dmax: i64) -> Self {
        let mut f = Self::zero(p, prec, dmin, dmax);
        f.exact = false;
        for k in 1..=dmax.max(0) {
            let c = PadicScalar::from_ratio(p, if k % 2 == 1 { 1 } else { -1 }, k, prec)
                .expect("k is a nonzero integer");
            f.set(k, c);
        }
        f
    }

    /// `t / T`, a unit power series with constant term 1.
    pub fn t_over_big_t(p: u32, prec: u32, dmin: i64, dmax: i64) -> Self {
        Self::t_series(p, prec, dmin, dmax + 1).shift(-1).with_window_top(dmax)
    }

    /// `T / t`, the inverse unit.
    pub fn big_t_over_t(p: u32, prec: u32, dmin: i64, dmax: i64) -> Self {
        Self::t_over_big_t(p, prec, dmin, dmax)
            .invert()
            .expect("t/T has unit constant term")
    }

    // ---- accessors ----

    pub fn prime(&self) -> u32 {
        self.p
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    pub fn dmin(&self) -> i64 {
        self.dmin
    }

    pub fn dmax(&self) -> i64 {
        self.dmax
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn loss(&self) -> u32 {
        self.loss
    }

    pub fn coeffs(&self) -> &BTreeMap<i64, PadicScalar> {
        &self.coeffs
    }

    /// Coefficient at `d`; exactly zero off the stored support. Callers must
    /// respect the window: degrees above `dmax` of a non-exact element are
    /// not knowledge.
    pub fn coeff(&self, d: i64) -> PadicScalar {
        self.coeffs.get(&d).copied().unwrap_or_else(|| PadicScalar::zero(self.p))
    }

    fn set(&mut self, d: i64, c: PadicScalar) {
        if c.is_zero() && c.abs_prec() == i64::MAX {
            self.coeffs.remove(&d);
        } else {
            self.dmin = self.dmin.min(d);
            self.dmax = self.dmax.max(d);
            self.coeffs.insert(d, c);
        }
    }

    /// Lowest degree whose coefficient might be nonzero.
    pub fn support_min(&self) -> Option<i64> {
        self.coeffs.keys().next().copied()
    }

    pub fn support_max(&self) -> Option<i64> {
        self.coeffs.keys().next_back().copied()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.values().all(PadicScalar::is_zero)
    }

    /// Minimal coefficient valuation over the support.
    pub fn min_valuation(&self) -> Option<i64> {
        self.coeffs.values().filter_map(PadicScalar::valuation).min()
    }

    /// Minimal absolute precision across stored coefficients.
    pub fn abs_prec(&self) -> i64 {
        self.coeffs.values().map(PadicScalar::abs_prec).min().unwrap_or(i64::MAX)
    }

    fn eff_dmax(&self) -> i64 {
        if self.exact {
            i64::MAX
        } else {
            self.dmax
        }
    }

    fn assert_compat(&self, other: &Self) {
        assert_eq!(self.p, other.p, "mixed primes");
    }

    /// Clip the stored window; dropping a possibly-nonzero coefficient above
    /// the new top forfeits exactness.
    fn with_window_top(mut self, dmax: i64) -> Self {
        if self.coeffs.keys().any(|&d| d > dmax) {
            self.exact = false;
            self.coeffs.retain(|&d, _| d <= dmax);
        }
        self.dmax = dmax;
        self
    }

    // ---- ring operations ----

    pub fn add(&self, other: &Self) -> Self {
        self.assert_compat(other);
        let eff = self.eff_dmax().min(other.eff_dmax());
        let exact = self.exact && other.exact;
        let store_max = if eff == i64::MAX { self.dmax.max(other.dmax) } else { eff };
        let mut out = LaurentWindow {
            p: self.p,
            prec: self.prec.min(other.prec),
            dmin: self.dmin.min(other.dmin),
            dmax: store_max,
            exact,
            coeffs: BTreeMap::new(),
            loss: self.loss.max(other.loss),
        };
        let keys: std::collections::BTreeSet<i64> =
            self.coeffs.keys().chain(other.coeffs.keys()).copied().collect();
        for d in keys {
            if d > store_max {
                continue;
            }
            out.set(d, self.coeff(d).add(&other.coeff(d)));
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for c in out.coeffs.values_mut() {
            *c = c.neg();
        }
        out
    }

    pub fn scale(&self, s: &PadicScalar) -> Self {
        let mut out = LaurentWindow { coeffs: BTreeMap::new(), ..self.clone() };
        for (&d, c) in &self.coeffs {
            out.set(d, c.mul(s));
        }
        out
    }

    /// Multiply by the exact monomial `T^k`: knowledge translates by `k`.
    pub fn shift(&self, k: i64) -> Self {
        let mut out = LaurentWindow {
            p: self.p,
            prec: self.prec,
            dmin: self.dmin + k,
            dmax: self.dmax.saturating_add(k),
            exact: self.exact,
            coeffs: BTreeMap::new(),
            loss: self.loss,
        };
        for (&d, c) in &self.coeffs {
            out.coeffs.insert(d + k, *c);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.assert_compat(other);
        let p = self.p;
        let prec = self.prec.min(other.prec);
        let loss = self.loss.max(other.loss);
        let (sf, sg) = (self.support_min(), other.support_min());
        let (Some(sf), Some(sg)) = (sf, sg) else {
            // One factor is exactly zero.
            let mut z = Self::zero(p, prec, self.dmin.min(other.dmin), self.dmax.max(other.dmax));
            z.loss = loss;
            return z;
        };
        let det_a = if self.exact { i64::MAX } else { self.dmax.saturating_add(sg) };
        let det_b = if other.exact { i64::MAX } else { other.dmax.saturating_add(sf) };
        let mut dmax = det_a.min(det_b);
        let exact = self.exact && other.exact;
        if dmax == i64::MAX {
            dmax = self.support_max().unwrap() + other.support_max().unwrap();
        }
        let dmin = sf + sg;
        if dmax < dmin {
            let mut z = Self::zero(p, prec, dmin, dmin);
            z.exact = false;
            z.loss = loss;
            return z;
        }
        let mut out = LaurentWindow { p, prec, dmin, dmax, exact, coeffs: BTreeMap::new(), loss };
        for (&i, a) in &self.coeffs {
            for (&j, b) in &other.coeffs {
                let d = i + j;
                if d > dmax {
                    continue;
                }
                let cur = out.coeff(d);
                out.set(d, cur.add(&a.mul(b)));
            }
        }
        out
    }

    /// Inverse of a series whose lowest surviving coefficient is nonzero at
    /// precision. With leading term `c T^m`, the result is determined
    /// through `dmax - 2m` for a truncated input and through any requested
    /// degree for an exact one; digits paid for `v_p(c) > 0` enter the loss
    /// ledger.
    pub fn invert(&self) -> Result<Self> {
        let top = if self.exact { self.dmax } else { self.invert_natural_top()? };
        self.invert_to(top)
    }

    fn invert_natural_top(&self) -> Result<i64> {
        let m = self.leading_degree()?;
        Ok(self.dmax - 2 * m)
    }

    fn leading_degree(&self) -> Result<i64> {
        self.coeffs
            .iter()
            .find(|(_, c)| !c.is_zero())
            .map(|(&d, _)| d)
            .ok_or(KernelError::NotInvertible)
    }

    /// Inverse computed through output degree `out_top`. Requires the input
    /// coefficients to be known through `out_top + 2m`, which holds either
    /// for exact inputs or when `out_top <= dmax - 2m`.
    pub fn invert_to(&self, out_top: i64) -> Result<Self> {
        let m = self.leading_degree()?;
        if !self.exact && out_top > self.dmax - 2 * m {
            return Err(KernelError::WindowExhausted(format!(
                "inverse requested through degree {out_top}, certified only through {}",
                self.dmax - 2 * m
            )));
        }
        if out_top < -m {
            return Err(KernelError::WindowExhausted("inverse window is empty".into()));
        }
        let lead = self.coeff(m);
        let w = lead.valuation().unwrap_or(0).unsigned_abs() as u32;
        let inv_lead = lead.inv().map_err(|_| KernelError::NotInvertible)?;
        // After factoring T^m, solve (1 + u) g = 1 triangularly.
        let mut g: BTreeMap<i64, PadicScalar> = BTreeMap::new();
        for d in 0..=(out_top + m) {
            let mut acc =
                if d == 0 { PadicScalar::one(self.p, self.prec) } else { PadicScalar::zero(self.p) };
            for (&j, c) in self.coeffs.range(m + 1..=m + d) {
                let k = j - m;
                if let Some(gp) = g.get(&(d - k)) {
                    acc = acc.sub(&c.mul(gp));
                }
            }
            g.insert(d, acc.mul(&inv_lead));
        }
        let mut out = LaurentWindow {
            p: self.p,
            prec: self.prec,
            dmin: -m,
            dmax: out_top,
            exact: false,
            coeffs: BTreeMap::new(),
            loss: self.loss + w,
        };
        for (d, c) in g {
            if d - m <= out_top {
                out.set(d - m, c);
            }
        }
        Ok(out)
    }

    /// Integer power (negative via inversion).
    pub fn pow(&self, e: i64) -> Result<Self> {
        let base = if e < 0 { self.invert()? } else { self.clone() };
        let mut acc = Self::one(self.p, self.prec, base.dmin, base.dmax);
        acc.exact = base.exact;
        for _ in 0..e.unsigned_abs() {
            acc = acc.mul(&base);
        }
        Ok(acc)
    }

    // ---- the operator family ----

    /// `(1+T)^p - 1`, an exact polynomial.
    fn phi_base(p: u32, prec: u32, dmin: i64, dmax: i64) -> Self {
        let mut b = Self::zero(p, prec, dmin, dmax.max(p as i64));
        let pp = PadicScalar::from_int(p, p as i64, prec);
        for k in 1..=p as i64 {
            b.set(k, pp.binomial(k as u64).expect("integer binomial"));
        }
        b
    }

    /// Substitution `T -> (1+T)^p - 1` with coefficients fixed by `phi`
    /// acting trivially on `Q_p`.
    pub fn phi(&self) -> Result<Self> {
        let base = Self::phi_base(self.p, self.prec, self.dmin.min(0), self.dmax);
        self.substitute(&base)
    }

    /// Substitution `T -> (1+T)^a - 1` for a unit `a`.
    pub fn gamma(&self, a: &PadicScalar) -> Result<Self> {
        assert_eq!(a.prime(), self.p);
        if a.valuation() != Some(0) {
            return Err(KernelError::DomainError("gamma needs a unit exponent".into()));
        }
        let pad = 2 * self.support_min().unwrap_or(0).min(0).unsigned_abs() as i64;
        let top = self.dmax + pad;
        let mut base = Self::zero(self.p, self.prec, self.dmin.min(0), top);
        base.exact = false;
        for k in 1..=top.max(1) {
            base.set(k, a.binomial(k as u64)?);
        }
        self.substitute(&base)
    }

    /// `sum_d f_d * base^d` where `base` has support starting at degree 1,
    /// so `base^d` starts at degree `d` and each output degree receives
    /// finitely many contributions. `base` must carry knowledge at least
    /// `2 |support_min(f)|` beyond the output top so the polar tables stay
    /// certified.
    fn substitute(&self, base: &Self) -> Result<Self> {
        debug_assert_eq!(base.support_min().map(|s| s >= 1), Some(true).filter(|_| !base.coeffs.is_empty()).or(Some(true)).map(|_| true));
        let s_opt = self.support_min();
        let has_polar = s_opt.is_some_and(|s| s < 0);
        let out_exact = self.exact && base.exact && !has_polar;
        let out_dmax = if out_exact {
            self.support_max().unwrap_or(0).max(0) * base.support_max().unwrap_or(1).max(1)
        } else if self.exact {
            // exact polar input: capped by base knowledge
            self.dmax.min(base.eff_dmax())
        } else {
            self.dmax
        };
        let out_dmin = s_opt.unwrap_or(0).min(0);
        let mut out = LaurentWindow {
            p: self.p,
            prec: self.prec,
            dmin: out_dmin,
            dmax: out_dmax,
            exact: out_exact,
            coeffs: BTreeMap::new(),
            loss: self.loss.max(base.loss),
        };
        let Some(s) = s_opt else { return Ok(out) };
        // Positive powers, truncated to out_dmax.
        let mut acc: Vec<(i64, Self)> = Vec::new();
        let top = self.support_max().unwrap();
        if top >= 1 {
            let mut pos = base.clone().with_window_top(out_dmax);
            if self.coeffs.contains_key(&1) {
                acc.push((1, pos.clone()));
            }
            for d in 2..=top {
                pos = pos.mul(base).with_window_top(out_dmax);
                if self.coeffs.contains_key(&d) {
                    acc.push((d, pos.clone()));
                }
            }
        }
        if s < 0 {
            // Negative powers from an extended inverse, so that the
            // multiplicative window shrinkage still covers out_dmax.
            let ext = out_dmax + 2 * (-s);
            let inv = base.invert_to(if base.exact { ext } else { (base.dmax - 2).min(ext) })?;
            let mut negp = inv.clone();
            if self.coeffs.contains_key(&-1) {
                acc.push((-1, negp.clone().with_window_top(out_dmax)));
            }
            for d in 2..=(-s) {
                negp = negp.mul(&inv);
                if self.coeffs.contains_key(&(-d)) {
                    acc.push((-d, negp.clone().with_window_top(out_dmax)));
                }
            }
            out.loss = out.loss.max(inv.loss);
        }
        let mut result = Self::zero(self.p, self.prec, out_dmin, out_dmax);
        for (&d, c) in &self.coeffs {
            if d == 0 {
                let cur = result.coeff(0);
                result.set(0, cur.add(c));
            }
        }
        for (d, powser) in acc {
            let c = self.coeffs[&d];
            for (&deg, v) in &powser.coeffs {
                if deg <= out_dmax {
                    let cur = result.coeff(deg);
                    result.set(deg, cur.add(&v.mul(&c)));
                }
            }
        }
        result.dmin = out_dmin.min(result.dmin);
        result.dmax = out_dmax;
        result.coeffs.retain(|&deg, _| deg <= out_dmax);
        result.exact = out_exact;
        result.loss = out.loss;
        Ok(result)
    }

    /// The trace `(1/p) sum_{zeta^p = 1} f(zeta(1+T) - 1)` as a rational
    /// series: the identity conjugate contributes `f` itself, the others are
    /// computed over `K_1` and the sum must be rational at precision.
    pub fn mu_p_trace(&self) -> Result<Self> {
        let p = self.p;
        let field = CycloField::new(p, 1, self.prec);
        let mut acc = CycloSeries::from_rational(self, field);
        for j in 1..p as u64 {
            let conj = self.conjugate_series(j, field)?;
            acc = acc.add(&conj);
        }
        let mut out = LaurentWindow {
            p,
            prec: self.prec,
            dmin: acc.dmin,
            dmax: self.dmax,
            exact: self.exact,
            coeffs: BTreeMap::new(),
            loss: self.loss,
        };
        let pinv = PadicScalar::p_power(p, -1, self.prec);
        for (&d, e) in &acc.coeffs {
            if d > out.dmax {
                continue;
            }
            if !e.is_rational() {
                let worst = e
                    .coords()
                    .iter()
                    .skip(1)
                    .filter_map(PadicScalar::valuation)
                    .min()
                    .unwrap_or(i64::MAX);
                return Err(KernelError::NotInPhiImage(worst));
            }
            out.set(d, e.rational_part().mul(&pinv));
        }
        Ok(out)
    }

    /// `f(zeta^j (1+T) - 1)` over `K_1`, truncated at the window top.
    fn conjugate_series(&self, j: u64, field: CycloField) -> Result<CycloSeries> {
        let zeta = CycloElement::zeta(field).galois(j);
        // base = (zeta - 1) + zeta T: exact, support [0, 1], unit constant.
        let mut base = CycloSeries::zero(field, self.dmin.min(0), self.dmax);
        base.set(0, zeta.sub(&CycloElement::one(field)));
        base.set(1, zeta);
        let mut acc = CycloSeries::zero(field, self.dmin.min(0), self.dmax);
        let Some(top) = self.support_max() else { return Ok(acc) };
        let mut pow_cache: BTreeMap<i64, CycloSeries> = BTreeMap::new();
        if top >= 1 {
            let mut pos = base.clone();
            if self.coeffs.contains_key(&1) {
                pow_cache.insert(1, pos.clone());
            }
            for d in 2..=top {
                pos = pos.mul(&base);
                if self.coeffs.contains_key(&d) {
                    pow_cache.insert(d, pos.clone());
                }
            }
        }
        if let Some(sf) = self.support_min() {
            if sf < 0 {
                let inv = base.invert()?;
                let mut negp = inv.clone();
                if self.coeffs.contains_key(&-1) {
                    pow_cache.insert(-1, negp.clone());
                }
                for d in 2..=(-sf) {
                    negp = negp.mul(&inv);
                    if self.coeffs.contains_key(&(-d)) {
                        pow_cache.insert(-d, negp.clone());
                    }
                }
            }
        }
        for (&d, c) in &self.coeffs {
            if d == 0 {
                let cur = acc.coeff(0);
                acc.set(0, cur.add(&CycloElement::from_scalar(field, *c)));
            } else {
                acc = acc.add(&pow_cache[&d].scale_scalar(c));
            }
        }
        Ok(acc)
    }

    /// Left inverse of `phi`: the `mu_p`-trace followed by the triangular
    /// solve against `T -> (1+T)^p - 1`. Degree `d` is the pivot of the
    /// unknown `h_d` with diagonal `p^d`; positive degrees therefore pay `d`
    /// digits of absolute precision, which the scalars record.
    pub fn psi(&self) -> Result<Self> {
        let g = self.mu_p_trace()?;
        let Some(smin) = g.support_min() else {
            return Ok(g);
        };
        let dmax = g.dmax;
        let base = Self::phi_base(self.p, self.prec, g.dmin.min(0), dmax);
        // phi(T^m) tables for every support degree of the solution grid.
        let mut pows: BTreeMap<i64, Self> = BTreeMap::new();
        if dmax >= 1 {
            let mut pos = base.clone().with_window_top(dmax);
            pows.insert(1, pos.clone());
            for d in 2..=dmax {
                pos = pos.mul(&base).with_window_top(dmax);
                pows.insert(d, pos.clone());
            }
        }
        if smin < 0 {
            let inv = base.invert_to(dmax + 2 * (-smin))?;
            let mut negp = inv.clone();
            pows.insert(-1, negp.clone().with_window_top(dmax));
            for d in 2..=(-smin) {
                negp = negp.mul(&inv);
                pows.insert(-d, negp.clone().with_window_top(dmax));
            }
        }
        let mut h = LaurentWindow {
            p: self.p,
            prec: self.prec,
            dmin: smin,
            dmax,
            exact: self.exact,
            coeffs: BTreeMap::new(),
            loss: g.loss,
        };
        for d in smin..=dmax {
            let mut rhs = g.coeff(d);
            for (&m, hm) in h.coeffs.range(..d) {
                if hm.is_zero() && hm.abs_prec() == i64::MAX {
                    continue;
                }
                if m == 0 {
                    if d == 0 {
                        rhs = rhs.sub(hm);
                    }
                    continue;
                }
                rhs = rhs.sub(&hm.mul(&pows[&m].coeff(d)));
            }
            let hd = rhs.mul(&PadicScalar::p_power(self.p, -d, self.prec));
            h.set(d, hd);
        }
        Ok(h)
    }

    /// `(1+T) f'`, the invariant derivative.
    pub fn partial(&self) -> Self {
        let out_dmax = if self.exact { self.dmax.saturating_add(1) } else { self.dmax - 1 };
        let mut out = LaurentWindow {
            p: self.p,
            prec: self.prec,
            dmin: self.dmin - 1,
            dmax: out_dmax,
            exact: self.exact,
            coeffs: BTreeMap::new(),
            loss: self.loss,
        };
        for (&d, c) in &self.coeffs {
            let dc = PadicScalar::from_int(self.p, d, self.prec).mul(c);
            for deg in [d - 1, d] {
                if deg <= out_dmax {
                    let cur = out.coeff(deg);
                    out.set(deg, cur.add(&dc));
                }
            }
        }
        out.coeffs.retain(|&deg, _| deg <= out_dmax);
        out.dmax = out_dmax;
        out
    }

    /// `nabla_0 = t * partial` in closed form.
    pub fn nabla0(&self) -> Self {
        let df = self.partial();
        let t = Self::t_series(self.p, self.prec, self.dmin.min(0), self.dmax.max(1));
        t.mul(&df)
    }

    /// `nabla_i = nabla_0 - i`.
    pub fn nabla(&self, i: i64) -> Self {
        self.nabla0().sub(&self.scale(&PadicScalar::from_int(self.p, i, self.prec)))
    }

    /// Series evaluation of `nabla_0` as `log(gamma_a)/log(a)`:
    /// `sum_{k<=R} (-1)^{k-1} (gamma_a - 1)^k f / (k log a)`. Used only to
    /// cross-validate the closed form.
    pub fn nabla0_series(&self, a: &PadicScalar, terms: u64) -> Result<Self> {
        let log_a = a.plog()?;
        let mut acc = Self::zero(self.p, self.prec, self.dmin, self.dmax);
        acc.exact = false;
        let mut w = self.clone();
        let mut last_val = i64::MAX;
        for k in 1..=terms {
            w = w.gamma(a)?.sub(&w);
            let kk = PadicScalar::from_int(self.p, k as i64, self.prec);
            let term = w.scale(&kk.mul(&log_a).inv().map_err(|_| KernelError::DivisionByZero)?);
            acc = if k % 2 == 1 { acc.add(&term) } else { acc.sub(&term) };
            last_val = term.min_valuation().unwrap_or(i64::MAX);
        }
        let target = self.min_valuation().unwrap_or(0) + self.prec as i64 - 2;
        if last_val < target {
            return Err(KernelError::PrecisionExhausted(format!(
                "nabla series truncated with last term at valuation {last_val}, target {target}"
            )));
        }
        Ok(acc)
    }

    /// `Res(f) = f_{-1}`.
    pub fn res(&self) -> PadicScalar {
        self.coeff(-1)
    }

    /// `Res(f dT/(1+T)) = sum_{m>=1} (-1)^{m-1} f_{-m}`.
    pub fn reslog(&self) -> PadicScalar {
        let mut acc = PadicScalar::zero(self.p);
        for (&d, c) in self.coeffs.range(..0) {
            acc = if (-d) % 2 == 1 { acc.add(c) } else { acc.sub(c) };
        }
        acc
    }

    /// Divide by `t`: `f/t = f * (T/t) * T^{-1}`.
    pub fn div_t(&self) -> Self {
        let unit = Self::big_t_over_t(self.p, self.prec, 0, self.dmax.max(1));
        self.mul(&unit).shift(-1)
    }

    /// Multiply by `t^k` (`k >= 0`).
    pub fn mul_t(&self, k: u32) -> Self {
        let t = Self::t_series(self.p, self.prec, self.dmin.min(0), self.dmax.max(1));
        let mut out = self.clone();
        for _ in 0..k {
            out = out.mul(&t);
        }
        out
    }

    // ---- comparisons ----

    /// Degrees on which both elements carry knowledge.
    pub fn common_window(&self, other: &Self) -> (i64, i64) {
        let hi = self.eff_dmax().min(other.eff_dmax());
        let hi = if hi == i64::MAX { self.dmax.max(other.dmax) } else { hi };
        (self.dmin.min(other.dmin), hi)
    }

    /// Coefficient-wise agreement modulo `p^abs` on the common window.
    pub fn agrees_to(&self, other: &Self, abs: i64) -> bool {
        let (lo, hi) = self.common_window(other);
        (lo..=hi).all(|d| self.coeff(d).agrees_to(&other.coeff(d), abs))
    }

    /// Minimal difference valuation over the common window (`None` when the
    /// difference vanishes at precision everywhere).
    pub fn discrepancy(&self, other: &Self) -> Option<i64> {
        let (lo, hi) = self.common_window(other);
        (lo..=hi)
            .filter_map(|d| self.coeff(d).discrepancy(&other.coeff(d)))
            .min()
    }

    /// Worst absolute precision over the common window, the certification
    /// floor for exactness assertions.
    pub fn joint_abs_prec(&self, other: &Self) -> i64 {
        self.abs_prec().min(other.abs_prec())
    }

    // ---- JSON ----

    pub fn to_json(&self) -> Value {
        let coeffs: serde_json::Map<String, Value> = self
            .coeffs
            .iter()
            .map(|(d, c)| (d.to_string(), c.to_json()))
            .collect();
        json!({
            "p": self.p,
            "prec": self.prec,
            "dmin": self.dmin,
            "dmax": self.dmax,
            "coeffs": coeffs,
            "loss": self.loss,
            "exact": self.exact,
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let bad = |m: &str| KernelError::Mismatch(format!("laurent json: {m}"));
        let p = v.get("p").and_then(Value::as_u64).ok_or_else(|| bad("missing p"))? as u32;
        let prec = v.get("prec").and_then(Value::as_u64).ok_or_else(|| bad("missing prec"))? as u32;
        let dmin = v.get("dmin").and_then(Value::as_i64).ok_or_else(|| bad("missing dmin"))?;
        let dmax = v.get("dmax").and_then(Value::as_i64).ok_or_else(|| bad("missing dmax"))?;
        let loss = v.get("loss").and_then(Value::as_u64).unwrap_or(0) as u32;
        let exact = v.get("exact").and_then(Value::as_bool).unwrap_or(false);
        let mut out = Self::zero(p, prec, dmin, dmax);
        out.loss = loss;
        out.exact = exact;
        let coeffs = v.get("coeffs").and_then(Value::as_object).ok_or_else(|| bad("missing coeffs"))?;
        for (k, cv) in coeffs {
            let d: i64 = k.parse().map_err(|_| bad("bad degree key"))?;
            if d < dmin || d > dmax {
                return Err(bad("degree outside window"));
            }
            out.set(d, PadicScalar::from_json(p, cv)?);
        }
        out.dmin = dmin;
        out.dmax = dmax;
        Ok(out)
    }
}

/// Truncated Laurent series with `K_1` coefficients, used only inside the
/// `mu_p`-trace. All inputs are exact by construction (the conjugate base
/// has support `[0, 1]`), so plain truncation at `dmax` is the only window
/// rule needed.
#[derive(Debug, Clone)]
struct CycloSeries {
    field: CycloField,
    dmin: i64,
    dmax: i64,
    coeffs: BTreeMap<i64, CycloElement>,
}

impl CycloSeries {
    fn zero(field: CycloField, dmin: i64, dmax: i64) -> Self {
        CycloSeries { field, dmin, dmax, coeffs: BTreeMap::new() }
    }

    fn from_rational(f: &LaurentWindow, field: CycloField) -> Self {
        let mut s = Self::zero(field, f.dmin.min(0), f.dmax);
        for (&d, c) in &f.coeffs {
            s.set(d, CycloElement::from_scalar(field, *c));
        }
        s
    }

    fn set(&mut self, d: i64, c: CycloElement) {
        if c.is_zero() && c.abs_prec() == i64::MAX {
            self.coeffs.remove(&d);
        } else {
            self.dmin = self.dmin.min(d);
            self.coeffs.insert(d, c);
        }
    }

    fn coeff(&self, d: i64) -> CycloElement {
        self.coeffs.get(&d).cloned().unwrap_or_else(|| CycloElement::zero(self.field))
    }

    fn add(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.field, self.dmin.min(other.dmin), self.dmax.min(other.dmax));
        let keys: std::collections::BTreeSet<i64> =
            self.coeffs.keys().chain(other.coeffs.keys()).copied().collect();
        for d in keys {
            if d > out.dmax {
                continue;
            }
            out.set(d, self.coeff(d).add(&other.coeff(d)));
        }
        out
    }

    fn scale_scalar(&self, s: &PadicScalar) -> Self {
        let mut out = Self::zero(self.field, self.dmin, self.dmax);
        for (&d, c) in &self.coeffs {
            out.set(d, c.scale(s));
        }
        out
    }

    fn mul(&self, other: &Self) -> Self {
        let dmax = self.dmax.min(other.dmax);
        let dmin = self.coeffs.keys().next().copied().unwrap_or(0)
            + other.coeffs.keys().next().copied().unwrap_or(0);
        let mut out = Self::zero(self.field, dmin, dmax);
        for (&i, a) in &self.coeffs {
            for (&j, b) in &other.coeffs {
                if i + j > dmax {
                    continue;
                }
                let cur = out.coeff(i + j);
                out.set(i + j, cur.add(&a.mul(b)));
            }
        }
        out
    }

    /// Inverse of a series with invertible constant term.
    fn invert(&self) -> Result<Self> {
        let lead = self.coeff(0);
        if lead.is_zero() {
            return Err(KernelError::NotInvertible);
        }
        let inv_lead = lead.inv()?;
        let mut out = Self::zero(self.field, 0, self.dmax);
        out.set(0, inv_lead.clone());
        for d in 1..=self.dmax {
            let mut acc = CycloElement::zero(self.field);
            for (&j, c) in self.coeffs.range(1..=d) {
                acc = acc.sub(&c.mul(&out.coeff(d - j)));
            }
            out.set(d, acc.mul(&inv_lead));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: u32 = 3;
    const N: u32 = 12;
    const DMIN: i64 = -8;
    const DMAX: i64 = 40;

    fn s(n: i64) -> PadicScalar {
        PadicScalar::from_int(P, n, N)
    }

    fn mono(d: i64, c: i64) -> LaurentWindow {
        LaurentWindow::monomial(P, N, DMIN, DMAX, d, s(c))
    }

    #[test]
    fn t_times_t_inverse() {
        let prod = mono(1, 1).mul(&mono(-1, 1));
        assert!(prod.coeff(0).agrees_to(&s(1), 12));
        assert!(prod.is_exact());
    }

    #[test]
    fn geometric_series() {
        // 1/(1-T) = 1 + T + T^2 + ...
        let f = mono(0, 1).sub(&mono(1, 1));
        let g = f.invert().unwrap();
        for d in 0..=10 {
            assert!(g.coeff(d).agrees_to(&s(1), 12), "degree {d}");
        }
    }

    #[test]
    fn t_over_big_t_inverse_leading_terms() {
        // T/t = 1 + T/2 + ...
        let u = LaurentWindow::big_t_over_t(P, N, DMIN, DMAX);
        assert!(u.coeff(0).agrees_to(&s(1), 12));
        assert!(u.coeff(1).agrees_to(&PadicScalar::from_ratio(P, 1, 2, N).unwrap(), 12));
        let v = LaurentWindow::t_over_big_t(P, N, DMIN, DMAX);
        let prod = u.mul(&v);
        assert!(prod.coeff(0).agrees_to(&s(1), 12));
        for d in 1..=prod.dmax().min(30) {
            assert!(prod.coeff(d).is_zero(), "degree {d} of (T/t)(t/T)");
        }
    }

    #[test]
    fn phi_of_t_monomial() {
        // phi(T) = (1+T)^p - 1 = 3T + 3T^2 + T^3 at p = 3
        let f = mono(1, 1).phi().unwrap();
        assert!(f.coeff(1).agrees_to(&s(3), 12));
        assert!(f.coeff(2).agrees_to(&s(3), 12));
        assert!(f.coeff(3).agrees_to(&s(1), 12));
        assert!(f.coeff(0).is_zero());
        let one = mono(0, 1).phi().unwrap();
        assert!(one.coeff(0).agrees_to(&s(1), 12));
    }

    #[test]
    fn phi_scales_t_by_p() {
        let t = LaurentWindow::t_series(P, N, DMIN, DMAX);
        let lhs = t.phi().unwrap();
        let rhs = t.scale(&s(3));
        assert!(lhs.agrees_to(&rhs, 10), "phi(t) != p t; discrepancy {:?}", lhs.discrepancy(&rhs));
    }

    #[test]
    fn phi_of_polar_monomial() {
        // phi(T^{-1}) = 1/((1+T)^3 - 1); check (phi T^{-1}) * phi(T) = 1.
        let f = mono(-1, 1).phi().unwrap();
        let g = mono(1, 1).phi().unwrap();
        let prod = f.mul(&g);
        assert!(prod.coeff(0).agrees_to(&s(1), 10));
        let (lo, hi) = (prod.dmin(), prod.dmax());
        for d in lo..=hi {
            if d != 0 {
                assert!(prod.coeff(d).is_zero(), "phi(1/T) phi(T) at degree {d}");
            }
        }
    }

    #[test]
    fn gamma_basics() {
        let f = mono(1, 1).gamma(&s(4)).unwrap();
        for (d, c) in [(1, 4), (2, 6), (3, 4), (4, 1)] {
            assert!(f.coeff(d).agrees_to(&s(c), 12), "degree {d}");
        }
        let g = mono(2, 5).add(&mono(-1, 2));
        assert!(g.gamma(&s(1)).unwrap().agrees_to(&g, 12));
        let t = LaurentWindow::t_series(P, N, DMIN, DMAX);
        assert!(t.gamma(&s(4)).unwrap().agrees_to(&t.scale(&s(4)), 10));
    }

    #[test]
    fn gamma_group_law() {
        use rand::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let mut f = LaurentWindow::zero(P, N, DMIN, DMAX);
            for _ in 0..6 {
                let d = (rng.next_u64() % 20) as i64 - 4;
                f = f.add(&mono(d, (rng.next_u64() % 100) as i64 - 50));
            }
            let lhs = f.gamma(&s(4)).unwrap().gamma(&s(7)).unwrap();
            let rhs = f.gamma(&s(28)).unwrap();
            assert!(lhs.agrees_to(&rhs, 9), "group law; discrepancy {:?}", lhs.discrepancy(&rhs));
        }
    }

    #[test]
    fn psi_basics() {
        let one = mono(0, 1);
        assert!(one.psi().unwrap().agrees_to(&one, 12));
        // psi(T) = -1
        let pt = mono(1, 1).psi().unwrap();
        assert!(pt.coeff(0).agrees_to(&s(-1), 12));
        assert!(pt.coeff(1).is_zero());
        // psi((1+T)/T) = (1+T)/T
        let f = mono(-1, 1).add(&mono(0, 1));
        let pf = f.psi().unwrap();
        assert!(pf.agrees_to(&f, 11), "cyclotomic unit fixture; discrepancy {:?}", pf.discrepancy(&f));
    }

    #[test]
    fn psi_of_inverse_t_exactly() {
        // psi(T^{-1}) = T^{-1} and psi(T^{-2}) = p T^{-2} + (p-1) T^{-1}
        let f = mono(-1, 1).psi().unwrap();
        assert!(f.coeff(-1).agrees_to(&s(1), 11));
        for d in 0..=5 {
            assert!(f.coeff(d).is_zero(), "psi(1/T) degree {d}");
        }
        let g = mono(-2, 1).psi().unwrap();
        assert!(g.coeff(-2).agrees_to(&s(3), 11));
        assert!(g.coeff(-1).agrees_to(&s(2), 11));
    }

    #[test]
    fn psi_after_phi_is_identity() {
        use rand::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        for _ in 0..5 {
            let mut f = LaurentWindow::zero(P, N, DMIN, DMAX);
            for _ in 0..8 {
                let d = (rng.next_u64() % (DMAX as u64 / P as u64)) as i64;
                f = f.add(&mono(d, (rng.next_u64() % 200) as i64 - 100));
            }
            let round = f.phi().unwrap().psi().unwrap();
            assert!(round.agrees_to(&f, 12), "psi(phi(f)) != f");
        }
    }

    #[test]
    fn phi_psi_matches_direct_trace() {
        // phi(psi(f)) = (1/p) sum_zeta f(zeta(1+T) - 1) for a mixed-support f.
        let f = mono(-2, 5).add(&mono(0, 2)).add(&mono(3, 1)).add(&mono(7, -4));
        let lhs = f.psi().unwrap().phi().unwrap();
        let rhs = f.mu_p_trace().unwrap();
        let disc = lhs.discrepancy(&rhs);
        assert!(disc.map_or(true, |v| v >= 6), "phi psi vs trace: {disc:?}");
    }

    #[test]
    fn partial_rules() {
        let d = mono(1, 1).partial();
        assert!(d.coeff(0).agrees_to(&s(1), 12));
        assert!(d.coeff(1).agrees_to(&s(1), 12));
        let t = LaurentWindow::t_series(P, N, DMIN, DMAX);
        let dt = t.partial();
        assert!(dt.coeff(0).agrees_to(&s(1), 12));
        for deg in 1..=dt.dmax() {
            assert!(dt.coeff(deg).is_zero(), "partial(t) at degree {deg}");
        }
    }

    #[test]
    fn partial_phi_commutation() {
        let f = mono(2, 1).add(&mono(-1, 3)).add(&mono(5, -2));
        let lhs = f.phi().unwrap().partial();
        let rhs = f.partial().phi().unwrap().scale(&s(3));
        assert!(lhs.agrees_to(&rhs, 9), "d phi = p phi d; discrepancy {:?}", lhs.discrepancy(&rhs));
    }

    #[test]
    fn nabla_on_t() {
        let t = LaurentWindow::t_series(P, N, DMIN, DMAX);
        assert!(t.nabla0().agrees_to(&t, 10));
        let n1 = t.nabla(1);
        let (lo, hi) = n1.common_window(&t);
        for d in lo..=hi.min(n1.dmax()) {
            assert!(n1.coeff(d).is_zero(), "nabla_1(t) at degree {d}");
        }
    }

    #[test]
    fn nabla_series_matches_closed_form() {
        let f = mono(1, 1);
        let closed = f.nabla0();
        let series = f.nabla0_series(&s(4), 26).unwrap();
        let disc = closed.discrepancy(&series);
        assert!(disc.map_or(true, |v| v >= 8), "series-mode nabla disagrees: {disc:?}");
    }

    #[test]
    fn residues() {
        assert!(mono(-1, 1).res().agrees_to(&s(1), 12));
        assert!(mono(3, 7).res().is_zero());
        let f = mono(-1, 1).add(&mono(0, 1));
        assert!(f.reslog().agrees_to(&s(1), 12));
    }

    #[test]
    fn division_by_t() {
        let t = LaurentWindow::t_series(P, N, DMIN, DMAX);
        let f = t.mul(&mono(2, 5));
        let q = f.div_t();
        assert!(q.coeff(2).agrees_to(&s(5), 10), "t * 5T^2 / t");
    }

    #[test]
    fn json_round_trip() {
        let f = mono(-2, 7).add(&LaurentWindow::t_series(P, N, DMIN, DMAX));
        let g = LaurentWindow::from_json(&f.to_json()).unwrap();
        assert!(f.agrees_to(&g, 12));
        assert_eq!(f.dmin(), g.dmin());
        assert_eq!(f.dmax(), g.dmax());
    }
}

//! Arithmetic in the cyclotomic tower `K_n = Q_p(zeta_{p^n})`.
//!
//! Elements live in the power basis `1, zeta, ..., zeta^{d_n - 1}` modulo the
//! cyclotomic polynomial `Phi_{p^n}(X) = sum_{i=0}^{p-1} X^{i p^{n-1}}`; the
//! compatible system is fixed by `zeta_{p^{n+1}}^p = zeta_{p^n}`. Denominators
//! such as `1/(zeta - 1)` are legitimate here and are carried by the scalar
//! valuations.

use crate::error::{KernelError, Result};
use crate::linalg;
use crate::padic::PadicScalar;
use serde_json::{json, Value};

/// Descriptor of `K_n` for a fixed odd prime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycloField {
    pub p: u32,
    pub level: u32,
    pub prec: u32,
}

impl CycloField {
    pub fn new(p: u32, level: u32, prec: u32) -> Self {
        CycloField { p, level, prec }
    }

    /// `[K_n : Q_p] = p^{n-1}(p-1)` for `n >= 1`, and 1 at level 0.
    pub fn degree(&self) -> usize {
        if self.level == 0 {
            1
        } else {
            (self.p as usize - 1) * (self.p as usize).pow(self.level - 1)
        }
    }

    pub fn up(&self) -> CycloField {
        CycloField { p: self.p, level: self.level + 1, prec: self.prec }
    }

    pub fn down(&self) -> CycloField {
        assert!(self.level > 0);
        CycloField { p: self.p, level: self.level - 1, prec: self.prec }
    }

    fn pn(&self) -> usize {
        (self.p as usize).pow(self.level)
    }
}

/// An element of `K_n` as a coordinate vector over `PadicScalar`.
#[derive(Debug, Clone, PartialEq)]
pub struct CycloElement {
    pub field: CycloField,
    coords: Vec<PadicScalar>,
}

impl CycloElement {
    pub fn zero(field: CycloField) -> Self {
        CycloElement { field, coords: vec![PadicScalar::zero(field.p); field.degree()] }
    }

    pub fn from_scalar(field: CycloField, s: PadicScalar) -> Self {
        assert_eq!(s.prime(), field.p);
        let mut e = Self::zero(field);
        e.coords[0] = s;
        e
    }

    pub fn one(field: CycloField) -> Self {
        Self::from_scalar(field, PadicScalar::one(field.p, field.prec))
    }

    /// The generator `zeta_{p^n}` (only at level >= 1).
    pub fn zeta(field: CycloField) -> Self {
        assert!(field.level >= 1, "zeta lives at level >= 1");
        let mut e = Self::zero(field);
        e.coords[1] = PadicScalar::one(field.p, field.prec);
        e
    }

    pub fn from_coords(field: CycloField, coords: Vec<PadicScalar>) -> Self {
        assert_eq!(coords.len(), field.degree());
        CycloElement { field, coords }
    }

    pub fn coords(&self) -> &[PadicScalar] {
        &self.coords
    }

    pub fn coord(&self, i: usize) -> PadicScalar {
        self.coords[i]
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(PadicScalar::is_zero)
    }

    /// Minimal coordinate valuation; `None` if zero at precision.
    pub fn min_valuation(&self) -> Option<i64> {
        self.coords.iter().filter_map(PadicScalar::valuation).min()
    }

    /// Minimal absolute precision across coordinates.
    pub fn abs_prec(&self) -> i64 {
        self.coords.iter().map(PadicScalar::abs_prec).min().unwrap_or(i64::MAX)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.field, other.field);
        let coords = self.coords.iter().zip(&other.coords).map(|(a, b)| a.add(b)).collect();
        CycloElement { field: self.field, coords }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.field, other.field);
        let coords = self.coords.iter().zip(&other.coords).map(|(a, b)| a.sub(b)).collect();
        CycloElement { field: self.field, coords }
    }

    pub fn neg(&self) -> Self {
        CycloElement { field: self.field, coords: self.coords.iter().map(PadicScalar::neg).collect() }
    }

    pub fn scale(&self, s: &PadicScalar) -> Self {
        CycloElement { field: self.field, coords: self.coords.iter().map(|c| c.mul(s)).collect() }
    }

    /// Reduce a raw power-basis expansion indexed by exponents of `zeta`
    /// (arbitrary non-negative exponents) into the standard basis.
    fn reduce_raw(field: CycloField, raw: &[(usize, PadicScalar)]) -> Self {
        let d = field.degree();
        let pn = field.pn();
        let pnm1 = pn / field.p as usize;
        let mut out = Self::zero(field);
        for &(e, ref c) in raw {
            if c.is_zero() && c.abs_prec() == i64::MAX {
                continue;
            }
            let e = e % pn;
            if e < d {
                out.coords[e] = out.coords[e].add(c);
            } else {
                // zeta^{(p-1)p^{n-1} + r} = -sum_{i=0}^{p-2} zeta^{i p^{n-1} + r}
                let r = e - (field.p as usize - 1) * pnm1;
                for i in 0..field.p as usize - 1 {
                    let idx = i * pnm1 + r;
                    debug_assert!(idx < d);
                    out.coords[idx] = out.coords[idx].sub(c);
                }
            }
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.field, other.field);
        let d = self.field.degree();
        let mut raw: Vec<PadicScalar> = vec![PadicScalar::zero(self.field.p); 2 * d - 1];
        for i in 0..d {
            if self.coords[i].is_zero() && self.coords[i].abs_prec() == i64::MAX {
                continue;
            }
            for j in 0..d {
                raw[i + j] = raw[i + j].add(&self.coords[i].mul(&other.coords[j]));
            }
        }
        let pairs: Vec<(usize, PadicScalar)> = raw.into_iter().enumerate().collect();
        Self::reduce_raw(self.field, &pairs)
    }

    /// Inverse via the multiplication matrix; `NonInvertible` when the
    /// linear solve fails at precision.
    pub fn inv(&self) -> Result<Self> {
        let d = self.field.degree();
        if d == 1 {
            return Ok(Self::from_scalar(
                self.field,
                self.coords[0].inv().map_err(|_| KernelError::NonInvertible)?,
            ));
        }
        // Columns: self * zeta^j in the power basis.
        let mut cols: Vec<Vec<PadicScalar>> = Vec::with_capacity(d);
        let mut cur = self.clone();
        for _ in 0..d {
            cols.push(cur.coords.clone());
            let pairs: Vec<(usize, PadicScalar)> =
                cur.coords.iter().enumerate().map(|(e, c)| (e + 1, *c)).collect();
            cur = Self::reduce_raw(self.field, &pairs);
        }
        let a: Vec<Vec<PadicScalar>> = (0..d).map(|r| (0..d).map(|c| cols[c][r]).collect()).collect();
        let mut b = vec![PadicScalar::zero(self.field.p); d];
        b[0] = PadicScalar::one(self.field.p, self.field.prec);
        let tol = 2 - (self.field.prec as i64);
        let x = linalg::solve_exact(&a, &b, tol).map_err(|_| KernelError::NonInvertible)?;
        Ok(Self::from_coords(self.field, x))
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        Ok(self.mul(&other.inv()?))
    }

    /// Galois action `zeta -> zeta^c` for `c` prime to `p`.
    pub fn galois(&self, c: u64) -> Self {
        let pn = self.field.pn() as u64;
        let c = c % pn;
        assert!(c % self.field.p as u64 != 0, "galois exponent must be a unit");
        if self.field.level == 0 {
            return self.clone();
        }
        let pairs: Vec<(usize, PadicScalar)> = self
            .coords
            .iter()
            .enumerate()
            .map(|(j, coeff)| (((j as u64 * c) % pn) as usize, *coeff))
            .collect();
        Self::reduce_raw(self.field, &pairs)
    }

    /// Ring embedding `K_n -> K_{n+1}`, `zeta_n -> zeta_{n+1}^p`.
    pub fn embed_up(&self) -> Self {
        let up = self.field.up();
        let pairs: Vec<(usize, PadicScalar)> = self
            .coords
            .iter()
            .enumerate()
            .map(|(j, coeff)| (j * self.field.p as usize, *coeff))
            .collect();
        Self::reduce_raw(up, &pairs)
    }

    /// Plain trace `Tr_{K_{n+1}/K_n}`, by summing the conjugates
    /// `zeta -> zeta^c` over `c = 1 mod p^n` (over all units mod p at the
    /// bottom step). The off-lattice coordinates of the sum must vanish at
    /// precision.
    pub fn trace_down(&self) -> Result<Self> {
        let n = self.field.level;
        assert!(n >= 1, "trace_down needs level >= 1");
        let p = self.field.p as u64;
        let pn_low = (self.field.p as u64).pow(n - 1);
        let mut acc = Self::zero(self.field);
        if n == 1 {
            for c in 1..p {
                acc = acc.add(&self.galois(c));
            }
        } else {
            for j in 0..p {
                acc = acc.add(&self.galois(1 + j * pn_low));
            }
        }
        let down = self.field.down();
        let d_low = down.degree();
        let mut coords = vec![PadicScalar::zero(self.field.p); d_low];
        if n == 1 {
            for (i, c) in acc.coords.iter().enumerate() {
                if i == 0 {
                    coords[0] = *c;
                } else if let Some(v) = c.valuation() {
                    return Err(KernelError::PrecisionExhausted(format!(
                        "trace landed off Q_p at coordinate {i} with valuation {v}"
                    )));
                }
            }
        } else {
            for (i, c) in acc.coords.iter().enumerate() {
                if i % self.field.p as usize == 0 {
                    coords[i / self.field.p as usize] = *c;
                } else if let Some(v) = c.valuation() {
                    return Err(KernelError::PrecisionExhausted(format!(
                        "trace landed off the sublattice at coordinate {i} with valuation {v}"
                    )));
                }
            }
        }
        Ok(Self::from_coords(down, coords))
    }

    /// The diagram-normalized transition `(1/p) Tr_{K_{n+1}/K_n}`.
    pub fn normalized_trace_step(&self) -> Result<Self> {
        let p = self.field.p;
        let tr = self.trace_down()?;
        Ok(tr.scale(&PadicScalar::p_power(p, -1, self.field.prec)))
    }

    /// `(1/[K_m : K_l]) Tr_{K_m/K_l}`: the degree-normalized trace used by
    /// the finite-level projections.
    pub fn degree_normalized_trace_to(&self, target_level: u32) -> Result<Self> {
        assert!(target_level <= self.field.level);
        let deg_ratio =
            self.field.degree() / CycloField::new(self.field.p, target_level, self.field.prec).degree();
        let mut cur = self.clone();
        while cur.field.level > target_level {
            cur = cur.trace_down()?;
        }
        let ratio = PadicScalar::from_int(self.field.p, deg_ratio as i64, self.field.prec);
        Ok(cur.scale(&ratio.inv()?))
    }

    /// Whether all coordinates above index 0 vanish at precision.
    pub fn is_rational(&self) -> bool {
        self.coords.iter().skip(1).all(PadicScalar::is_zero)
    }

    pub fn rational_part(&self) -> PadicScalar {
        self.coords[0]
    }

    /// Coordinate-wise agreement modulo `p^abs`.
    pub fn agrees_to(&self, other: &Self, abs: i64) -> bool {
        assert_eq!(self.field, other.field);
        self.coords.iter().zip(&other.coords).all(|(a, b)| a.agrees_to(b, abs))
    }

    /// Valuation of the difference (min across coordinates).
    pub fn discrepancy(&self, other: &Self) -> Option<i64> {
        self.coords
            .iter()
            .zip(&other.coords)
            .filter_map(|(a, b)| a.discrepancy(b))
            .min()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "p": self.field.p,
            "level": self.field.level,
            "coords": self.coords.iter().map(PadicScalar::to_json).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &Value, prec: u32) -> Result<Self> {
        let bad = |m: &str| KernelError::Mismatch(format!("cyclo json: {m}"));
        let p = v.get("p").and_then(Value::as_u64).ok_or_else(|| bad("missing p"))? as u32;
        let level = v.get("level").and_then(Value::as_u64).ok_or_else(|| bad("missing level"))? as u32;
        let field = CycloField::new(p, level, prec);
        let coords = v.get("coords").and_then(Value::as_array).ok_or_else(|| bad("missing coords"))?;
        if coords.len() != field.degree() {
            return Err(bad("coords length != degree"));
        }
        let coords = coords
            .iter()
            .map(|c| PadicScalar::from_json(p, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_coords(field, coords))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k1() -> CycloField {
        CycloField::new(3, 1, 12)
    }

    #[test]
    fn zeta_squared_reduces() {
        // zeta^2 = -1 - zeta mod Phi_3
        let z = CycloElement::zeta(k1());
        let z2 = z.mul(&z);
        let m1 = PadicScalar::from_int(3, -1, 12);
        assert!(z2.coord(0).agrees_to(&m1, 12));
        assert!(z2.coord(1).agrees_to(&m1, 12));
    }

    #[test]
    fn unit_multiplication() {
        let a = CycloElement::from_coords(
            k1(),
            vec![PadicScalar::from_int(3, 5, 12), PadicScalar::from_int(3, -2, 12)],
        );
        let one = CycloElement::one(k1());
        assert!(a.mul(&one).agrees_to(&a, 12));
    }

    #[test]
    fn inverse_of_zeta_minus_one() {
        // 1/(zeta - 1) = (-2 - zeta)/3 for p = 3
        let z = CycloElement::zeta(k1());
        let zm1 = z.sub(&CycloElement::one(k1()));
        let inv = zm1.inv().unwrap();
        let expect = CycloElement::from_coords(
            k1(),
            vec![
                PadicScalar::from_ratio(3, -2, 3, 12).unwrap(),
                PadicScalar::from_ratio(3, -1, 3, 12).unwrap(),
            ],
        );
        assert!(inv.agrees_to(&expect, 10));
        assert!(zm1.mul(&inv).agrees_to(&CycloElement::one(k1()), 10));
    }

    #[test]
    fn embed_up_sends_zeta_to_pth_power() {
        let k2 = k1().up();
        let z1 = CycloElement::zeta(k1());
        let z2 = CycloElement::zeta(k2);
        let cube = z2.mul(&z2).mul(&z2);
        assert!(z1.embed_up().agrees_to(&cube, 12));
        assert!(CycloElement::one(k1()).embed_up().agrees_to(&CycloElement::one(k2), 12));
    }

    #[test]
    fn embed_up_is_additive_and_multiplicative() {
        use rand::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut rnd = |rng: &mut rand_chacha::ChaCha8Rng| {
            CycloElement::from_coords(
                k1(),
                (0..2)
                    .map(|_| PadicScalar::from_int(3, (rng.next_u64() % 200) as i64 - 100, 12))
                    .collect(),
            )
        };
        for _ in 0..20 {
            let (a, b) = (rnd(&mut rng), rnd(&mut rng));
            assert!(a.add(&b).embed_up().agrees_to(&a.embed_up().add(&b.embed_up()), 12));
            assert!(a.mul(&b).embed_up().agrees_to(&a.embed_up().mul(&b.embed_up()), 12));
        }
    }

    #[test]
    fn galois_is_a_group_action() {
        use rand::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let k2 = CycloField::new(3, 2, 12);
        for _ in 0..20 {
            let a = CycloElement::from_coords(
                k2,
                (0..6)
                    .map(|_| PadicScalar::from_int(3, (rng.next_u64() % 200) as i64 - 100, 12))
                    .collect(),
            );
            assert!(a.galois(1).agrees_to(&a, 12));
            for (c, cp) in [(2u64, 4u64), (4, 7), (5, 8)] {
                let lhs = a.galois(c).galois(cp);
                let rhs = a.galois(c * cp % 9);
                assert!(lhs.agrees_to(&rhs, 12));
            }
        }
    }

    #[test]
    fn galois_sum_is_rational() {
        use rand::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let k2 = CycloField::new(3, 2, 12);
        let a = CycloElement::from_coords(
            k2,
            (0..6)
                .map(|_| PadicScalar::from_int(3, (rng.next_u64() % 200) as i64 - 100, 12))
                .collect(),
        );
        let mut acc = CycloElement::zero(k2);
        for c in [1u64, 2, 4, 5, 7, 8] {
            acc = acc.add(&a.galois(c));
        }
        assert!(acc.is_rational());
    }

    #[test]
    fn trace_basics() {
        // Tr_{K1/Qp}(1) = p - 1; Tr(zeta_3) = -1.
        let one = CycloElement::one(k1());
        let tr1 = one.trace_down().unwrap();
        assert!(tr1.rational_part().agrees_to(&PadicScalar::from_int(3, 2, 12), 12));
        let trz = CycloElement::zeta(k1()).trace_down().unwrap();
        assert!(trz.rational_part().agrees_to(&PadicScalar::from_int(3, -1, 12), 12));
        // Level 2 -> 1: Tr(1) = p.
        let k2 = k1().up();
        let tr = CycloElement::one(k2).trace_down().unwrap();
        assert!(tr.coord(0).agrees_to(&PadicScalar::from_int(3, 3, 12), 12));
    }

    #[test]
    fn trace_of_embedding_multiplies_by_p() {
        use rand::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let a = CycloElement::from_coords(
                k1(),
                (0..2)
                    .map(|_| PadicScalar::from_int(3, (rng.next_u64() % 200) as i64 - 100, 12))
                    .collect(),
            );
            let back = a.embed_up().trace_down().unwrap();
            assert!(back.agrees_to(&a.scale(&PadicScalar::from_int(3, 3, 12)), 12));
        }
    }

    #[test]
    fn trace_is_galois_invariant_over_the_base() {
        let k2 = CycloField::new(3, 2, 12);
        let z = CycloElement::zeta(k2);
        // c = 4 = 1 mod 3 lies in Gal(K_2/K_1)
        let lhs = z.galois(4).trace_down().unwrap();
        let rhs = z.trace_down().unwrap();
        assert!(lhs.agrees_to(&rhs, 12));
    }

    #[test]
    fn degree_normalized_trace_inverts_embedding() {
        let a = CycloElement::zeta(k1());
        let t = a.embed_up().degree_normalized_trace_to(1).unwrap();
        assert!(t.agrees_to(&a, 12));
    }

    #[test]
    fn works_at_p5() {
        let f = CycloField::new(5, 1, 12);
        let z = CycloElement::zeta(f);
        let zm1 = z.sub(&CycloElement::one(f));
        let inv = zm1.inv().unwrap();
        assert!(zm1.mul(&inv).agrees_to(&CycloElement::one(f), 10));
        let tr = z.trace_down().unwrap();
        assert!(tr.rational_part().agrees_to(&PadicScalar::from_int(5, -1, 12), 12));
    }
}

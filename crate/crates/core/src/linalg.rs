//! Dense linear solves over `Q_p` scalars with valuation pivoting.
//!
//! Row reduction picks the p-adically largest available pivot (minimal
//! valuation) with deterministic tie-breaking, so solver output is
//! reproducible. Systems may be under- or over-determined; free variables
//! are set to zero and the residual is reported, never swallowed.

use crate::error::{KernelError, Result};
use crate::padic::PadicScalar;

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub solution: Vec<PadicScalar>,
    /// Minimal valuation of `A x - b` over all rows; `None` when every
    /// residual entry vanishes at its precision.
    pub residual_valuation: Option<i64>,
}

/// Solve `A x = b` in least-structure form. `a` is row-major, rows of equal
/// length; `b.len() == a.len()`.
pub fn solve(a: &[Vec<PadicScalar>], b: &[PadicScalar]) -> Result<SolveOutcome> {
    let rows = a.len();
    if rows == 0 {
        return Ok(SolveOutcome { solution: vec![], residual_valuation: None });
    }
    let cols = a[0].len();
    let p = if cols > 0 { a[0][0].prime() } else { b[0].prime() };
    let mut m: Vec<Vec<PadicScalar>> = a.to_vec();
    let mut rhs: Vec<PadicScalar> = b.to_vec();

    let mut pivot_of_col: Vec<Option<usize>> = vec![None; cols];
    let mut used_row = vec![false; rows];

    for _ in 0..cols.min(rows) {
        // Best remaining pivot: minimal valuation, then lowest (col, row).
        let mut best: Option<(i64, usize, usize)> = None;
        for c in 0..cols {
            if pivot_of_col[c].is_some() {
                continue;
            }
            for r in 0..rows {
                if used_row[r] || m[r][c].is_zero() {
                    continue;
                }
                let v = m[r][c].valuation().unwrap();
                if best.map_or(true, |(bv, bc, br)| (v, c, r) < (bv, bc, br)) {
                    best = Some((v, c, r));
                }
            }
        }
        let Some((_, c, r)) = best else { break };
        pivot_of_col[c] = Some(r);
        used_row[r] = true;
        let piv = m[r][c];
        for r2 in 0..rows {
            if r2 == r || m[r2][c].is_zero() {
                continue;
            }
            let factor = m[r2][c].div(&piv)?;
            for c2 in 0..cols {
                let t = factor.mul(&m[r][c2]);
                m[r2][c2] = m[r2][c2].sub(&t);
            }
            rhs[r2] = rhs[r2].sub(&factor.mul(&rhs[r]));
        }
    }

    let mut x = vec![PadicScalar::zero(p); cols];
    for c in 0..cols {
        if let Some(r) = pivot_of_col[c] {
            x[c] = rhs[r].div(&m[r][c])?;
        }
    }

    // Residual against the original system.
    let mut worst: Option<i64> = None;
    for r in 0..rows {
        let mut acc = PadicScalar::zero(p);
        for c in 0..cols {
            acc = acc.add(&a[r][c].mul(&x[c]));
        }
        if let Some(v) = acc.sub(&b[r]).valuation() {
            worst = Some(worst.map_or(v, |w: i64| w.min(v)));
        }
    }
    Ok(SolveOutcome { solution: x, residual_valuation: worst })
}

/// Solve insisting on an exact-at-precision solution: the residual must
/// vanish down to `tolerance` digits of absolute valuation.
pub fn solve_exact(a: &[Vec<PadicScalar>], b: &[PadicScalar], tolerance: i64) -> Result<Vec<PadicScalar>> {
    let out = solve(a, b)?;
    match out.residual_valuation {
        Some(v) if v < tolerance => Err(KernelError::NonInvertible),
        _ => Ok(out.solution),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(n: i64) -> PadicScalar {
        PadicScalar::from_int(3, n, 12)
    }

    #[test]
    fn solves_a_2x2_system() {
        // [1 2; 3 1] x = [5; 5]  =>  x = [1, 2]
        let a = vec![vec![s(1), s(2)], vec![s(3), s(1)]];
        let b = vec![s(5), s(5)];
        let out = solve(&a, &b).unwrap();
        assert!(out.solution[0].agrees_to(&s(1), 12));
        assert!(out.solution[1].agrees_to(&s(2), 12));
        assert!(out.residual_valuation.is_none());
    }

    #[test]
    fn pivots_on_smallest_valuation() {
        // First column is divisible by 3; pivoting must avoid precision waste.
        let a = vec![vec![s(3), s(1)], vec![s(9), s(1)]];
        let b = vec![s(4), s(10)];
        let out = solve(&a, &b).unwrap();
        // 3x + y = 4, 9x + y = 10 => x = 1, y = 1
        assert!(out.solution[0].agrees_to(&s(1), 10));
        assert!(out.solution[1].agrees_to(&s(1), 10));
    }

    #[test]
    fn reports_inconsistency() {
        let a = vec![vec![s(1)], vec![s(1)]];
        let b = vec![s(0), s(1)];
        let out = solve(&a, &b).unwrap();
        assert_eq!(out.residual_valuation, Some(0));
        assert!(solve_exact(&a, &b, 6).is_err());
    }

    #[test]
    fn underdetermined_uses_free_zero() {
        let a = vec![vec![s(1), s(1)]];
        let b = vec![s(7)];
        let out = solve(&a, &b).unwrap();
        assert!(out.residual_valuation.is_none());
        let sum = out.solution[0].add(&out.solution[1]);
        assert!(sum.agrees_to(&s(7), 12));
    }
}

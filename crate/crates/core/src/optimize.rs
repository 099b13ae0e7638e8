//! One-dimensional minimization of unimodal functions.

use crate::error::{KppError, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub fx: f64,
    /// Final bracket.
    pub lo: f64,
    pub hi: f64,
    pub evals: usize,
}

/// Golden-section search on `[lo, hi]`, stopping when the bracket is narrower
/// than `rel_tol * |x|` (or `rel_tol` near zero).
pub fn golden_section<F>(mut f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> Result<Minimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut evals = 2;
    while (hi - lo) > rel_tol * (0.5 * (lo + hi)).abs().max(1.0e-3) && evals < 400 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2)?;
        }
        evals += 1;
    }
    let (x, fx) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    Ok(Minimum {
        x,
        fx,
        lo,
        hi,
        evals,
    })
}

/// Widen `[lo, hi]` geometrically until `f` decreases at `lo` and increases at
/// `hi`. `lo_floor` bounds the left end from below; `hi_cap` the right end
/// from above.
pub fn expand_bracket<F>(
    f: &mut F,
    mut lo: f64,
    mut hi: f64,
    lo_floor: f64,
    hi_cap: f64,
    max_expansions: usize,
) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    // One-sided differences pointing into the bracket, so `f` is never
    // evaluated outside `[lo_floor, hi_cap]`.
    let step = |x: f64| 1e-3 * x.abs().max(1e-6);
    let mut tries = 0;
    loop {
        let left_ok = f(lo + step(lo))? < f(lo)?;
        let right_ok = f(hi)? > f(hi - step(hi))?;
        if left_ok && right_ok {
            return Ok((lo, hi));
        }
        if tries == max_expansions {
            return Err(KppError::BracketFailure(format!(
                "no descent-ascent bracket after {max_expansions} expansions, last [{lo}, {hi}]"
            )));
        }
        if !left_ok {
            lo = (lo_floor + 0.5 * (lo - lo_floor)).max(lo_floor);
        }
        if !right_ok {
            hi = (hi * 2.0).min(hi_cap);
        }
        tries += 1;
    }
}

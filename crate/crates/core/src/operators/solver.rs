use crate::error::{KppError, Result};
use crate::linalg::{Cyclic, CyclicSolver};

use super::{DiscreteOperator, EigenResult};

/// Computes the Perron root and positive eigenvector of a discrete operator.
pub trait EigenSolver: Send + Sync {
    fn name(&self) -> &'static str;

    /// `init`, when given, is a positive starting vector (warm start).
    fn solve(
        &self,
        op: &DiscreteOperator,
        tol: f64,
        max_iters: usize,
        init: Option<&[f64]>,
    ) -> Result<EigenResult>;
}

/// Shifted power iteration on `A + sigma I`, `sigma = 1 + max |diag|`.
///
/// Its contraction factor is `1 - gap / (2 sigma)`, so it is only practical on
/// coarse grids; kept as a reference implementation.
pub struct Power;

/// Noda's shift-and-invert iteration: the shift is the upper Collatz-Wielandt
/// bound `max_i (A phi)_i / phi_i`, which keeps `sI - A` a nonsingular M-matrix
/// and the iterates positive. Converges quadratically.
pub struct Noda;

/// Rounding floor for the Collatz-Wielandt spread.
fn rounding_floor(op: &DiscreteOperator) -> f64 {
    let scale = op.diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    64.0 * f64::EPSILON * scale
}

fn start_vector(n: usize, init: Option<&[f64]>) -> Vec<f64> {
    match init {
        Some(v) if v.len() == n && v.iter().all(|&x| x > 0.0 && x.is_finite()) => {
            let top = v.iter().cloned().fold(0.0, f64::max);
            v.iter().map(|x| x / top).collect()
        }
        _ => vec![1.0; n],
    }
}

/// Entries below this (relative to `max phi = 1`) are left out of the
/// Collatz-Wielandt ratios. Strongly localized eigenvectors decay below the
/// range of `f64` across long windows; their far tails carry no information
/// about the eigenvalue.
const SIGNIFICANT: f64 = 1e-150;

/// Smallest entry kept in an iterate, so that underflow cannot produce zeros.
const TAIL_FLOOR: f64 = 1e-300;

/// Lower and upper Collatz-Wielandt bounds `min/max (A phi)_i / phi_i` over
/// the significant entries.
fn cw_bounds(op: &DiscreteOperator, phi: &[f64], work: &mut [f64]) -> (f64, f64) {
    op.apply(phi, work);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (y, x) in work.iter().zip(phi) {
        if *x < SIGNIFICANT {
            continue;
        }
        let r = y / x;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (lo, hi)
}

fn normalize_max(v: &mut [f64]) {
    let top = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for x in v.iter_mut() {
        *x = (*x / top).max(TAIL_FLOOR);
    }
}

pub(crate) fn finish(
    op: &DiscreteOperator,
    phi: Vec<f64>,
    bounds: (f64, f64),
    iters: usize,
    solver: &'static str,
) -> EigenResult {
    let mut lambda = 0.5 * (bounds.0 + bounds.1);
    if op.symmetric {
        // Second-order accurate in the eigenvector error.
        lambda = op.rayleigh(&phi).clamp(bounds.0, bounds.1);
    }
    let mut work = vec![0.0; op.n];
    op.apply(&phi, &mut work);
    let residual = work
        .iter()
        .zip(&phi)
        .map(|(y, x)| (y - lambda * x).abs())
        .fold(0.0, f64::max);
    EigenResult {
        lambda,
        phi,
        residual,
        iters,
        cw_lower: bounds.0,
        cw_upper: bounds.1,
        p: op.p,
        n: op.n,
        h: op.h,
        window: op.h * op.n as f64,
        source: op.source,
        stencil: op.stencil.to_string(),
        solver: solver.to_string(),
    }
}

impl EigenSolver for Power {
    fn name(&self) -> &'static str {
        "power"
    }

    fn solve(
        &self,
        op: &DiscreteOperator,
        tol: f64,
        max_iters: usize,
        init: Option<&[f64]>,
    ) -> Result<EigenResult> {
        let tol = tol.max(rounding_floor(op));
        let sigma = 1.0 + op.diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let mut phi = start_vector(op.n, init);
        let mut work = vec![0.0; op.n];
        let mut prev = f64::NAN;
        let mut bounds = cw_bounds(op, &phi, &mut work);
        for it in 0..max_iters {
            // work holds A phi from the bound computation
            for (w, x) in work.iter_mut().zip(&phi) {
                *w += sigma * x;
            }
            std::mem::swap(&mut phi, &mut work);
            normalize_max(&mut phi);
            bounds = cw_bounds(op, &phi, &mut work);
            let est = 0.5 * (bounds.0 + bounds.1);
            if bounds.1 - bounds.0 < tol && (est - prev).abs() < tol {
                return Ok(finish(op, phi, bounds, it + 1, self.name()));
            }
            prev = est;
        }
        Err(KppError::NoConvergence {
            iters: max_iters,
            residual: bounds.1 - bounds.0,
        })
    }
}

impl EigenSolver for Noda {
    fn name(&self) -> &'static str {
        "noda"
    }

    fn solve(
        &self,
        op: &DiscreteOperator,
        tol: f64,
        max_iters: usize,
        init: Option<&[f64]>,
    ) -> Result<EigenResult> {
        let floor = rounding_floor(op);
        let tol = tol.max(floor);
        let n = op.n;
        let mut phi = start_vector(n, init);
        let mut work = vec![0.0; n];
        let lower: Vec<f64> = op.sub.iter().map(|v| -v).collect();
        let upper: Vec<f64> = op.sup.iter().map(|v| -v).collect();
        let mut diag = vec![0.0; n];
        let mut bounds = cw_bounds(op, &phi, &mut work);
        let mut iters = 0;
        let mut polished = false;
        while iters < max_iters {
            let converged = bounds.1 - bounds.0 <= tol;
            if converged && polished {
                return Ok(finish(op, phi, bounds, iters, self.name()));
            }
            let shift = bounds.1;
            for i in 0..n {
                diag[i] = shift - op.diag[i];
            }
            let next = CyclicSolver::new(&Cyclic {
                lower: &lower,
                diag: &diag,
                upper: &upper,
            })
            .map(|s| s.solve(&phi))
            .ok()
            .filter(|y| y.iter().all(|&v| v >= 0.0 && v.is_finite()) && y.iter().any(|&v| v > 0.0));
            let Some(mut y) = next else {
                // The shift reached the Perron root to rounding.
                break;
            };
            iters += 1;
            normalize_max(&mut y);
            let nb = cw_bounds(op, &y, &mut work);
            if converged {
                // One extra step once within tolerance: the iteration is
                // quadratic, so this usually lands on rounding level.
                polished = true;
                if nb.1 - nb.0 <= bounds.1 - bounds.0 {
                    phi = y;
                    bounds = nb;
                }
                continue;
            }
            if nb.1 - nb.0 >= bounds.1 - bounds.0 && nb.1 - nb.0 <= 16.0 * floor {
                break;
            }
            phi = y;
            bounds = nb;
        }
        if bounds.1 - bounds.0 <= tol.max(16.0 * floor) {
            return Ok(finish(op, phi, bounds, iters, self.name()));
        }
        Err(KppError::NoConvergence {
            iters: max_iters,
            residual: bounds.1 - bounds.0,
        })
    }
}

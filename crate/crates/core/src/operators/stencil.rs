use crate::error::{KppError, Result};
use crate::medium::MediumRealization;

use super::DiscreteOperator;

/// A finite-difference discretization of the tilted operator.
pub trait Stencil: Send + Sync {
    fn name(&self) -> &'static str;

    /// Matrix of `L_p` on the periodized window of `m`.
    fn assemble(&self, m: &MediumRealization, p: f64) -> Result<DiscreteOperator>;
}

/// Flux form for both the diffusion and the drift: the drift term
/// `-p (2 a phi' + a' phi)` is discretized as `-p (a_{i+1/2} phi_{i+1} - a_{i-1/2} phi_{i-1}) / h`.
///
/// The matrix at `-p` is the transpose of the matrix at `p`, mirroring the
/// continuous adjoint relation between `L_p` and `L_{-p}`.
pub struct Conservative;

/// Flux-form diffusion with a centered drift `-2 p a_i (phi_{i+1} - phi_{i-1}) / (2h)`
/// and the analytic `a'` in the zeroth-order term.
pub struct Centered;

fn neighbours(m: &MediumRealization, i: usize) -> (f64, f64) {
    let n = m.len();
    let left = m.a_half[if i == 0 { n - 1 } else { i - 1 }];
    (left, m.a_half[i])
}

fn check_positive(op: &DiscreteOperator) -> Result<()> {
    for i in 0..op.n {
        if !(op.sub[i] > 0.0 && op.sup[i] > 0.0) {
            return Err(KppError::PositivityViolation {
                p: op.p,
                h: op.h,
                row: i,
            });
        }
    }
    Ok(())
}

impl Stencil for Conservative {
    fn name(&self) -> &'static str {
        "conservative"
    }

    fn assemble(&self, m: &MediumRealization, p: f64) -> Result<DiscreteOperator> {
        let n = m.len();
        let h = m.spacing();
        let inv_h2 = 1.0 / (h * h);
        let mut op = DiscreteOperator::empty(m, p, self.name());
        for i in 0..n {
            let (am, ap) = neighbours(m, i);
            op.sub[i] = am * (inv_h2 + p / h);
            op.sup[i] = ap * (inv_h2 - p / h);
            op.potential[i] = p * p * m.a[i] + m.c[i] + p * (am - ap) / h;
            op.diag[i] = -(am + ap) * inv_h2 + p * p * m.a[i] + m.c[i];
        }
        check_positive(&op)?;
        Ok(op)
    }
}

impl Stencil for Centered {
    fn name(&self) -> &'static str {
        "centered"
    }

    fn assemble(&self, m: &MediumRealization, p: f64) -> Result<DiscreteOperator> {
        let n = m.len();
        let h = m.spacing();
        let inv_h2 = 1.0 / (h * h);
        let mut op = DiscreteOperator::empty(m, p, self.name());
        for i in 0..n {
            let (am, ap) = neighbours(m, i);
            op.sub[i] = am * inv_h2 + p * m.a[i] / h;
            op.sup[i] = ap * inv_h2 - p * m.a[i] / h;
            op.potential[i] = p * p * m.a[i] - p * m.a_prime[i] + m.c[i];
            op.diag[i] = -(am + ap) * inv_h2 + op.potential[i];
        }
        check_positive(&op)?;
        Ok(op)
    }
}

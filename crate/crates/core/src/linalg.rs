//! Periodic tridiagonal systems.

use crate::error::{KppError, Result};

/// Cyclic tridiagonal matrix: row `i` reads `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]`
/// with indices taken mod `n`.
#[derive(Clone, Debug)]
pub struct Cyclic<'a> {
    pub lower: &'a [f64],
    pub diag: &'a [f64],
    pub upper: &'a [f64],
}

/// LU factors of the open chain (corners dropped), reused across right-hand sides.
struct Chain {
    /// Modified upper coefficients.
    cp: Vec<f64>,
    /// Pivots.
    piv: Vec<f64>,
}

impl Chain {
    fn factor(m: &Cyclic) -> Result<Chain> {
        let n = m.diag.len();
        let mut cp = vec![0.0; n];
        let mut piv = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let l = if i == 0 { 0.0 } else { m.lower[i] };
            let d = m.diag[i] - l * prev;
            if d == 0.0 || !d.is_finite() {
                return Err(KppError::Breakdown(format!("zero pivot at row {i}")));
            }
            piv[i] = d;
            prev = if i + 1 < n { m.upper[i] / d } else { 0.0 };
            cp[i] = prev;
        }
        Ok(Chain { cp, piv })
    }

    fn solve(&self, lower: &[f64], rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut y = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let l = if i == 0 { 0.0 } else { lower[i] };
            prev = (rhs[i] - l * prev) / self.piv[i];
            y[i] = prev;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            y[i] -= self.cp[i] * y[i + 1];
        }
        y
    }
}

/// Factored cyclic system; the two corner entries are folded in by a rank-2
/// Woodbury correction.
pub struct CyclicSolver {
    chain: Chain,
    lower: Vec<f64>,
    corner_lo: f64,
    corner_hi: f64,
    z1: Vec<f64>,
    z2: Vec<f64>,
    /// Inverse of the 2x2 capacitance matrix `I + V^T Z`.
    cap_inv: [[f64; 2]; 2],
}

impl CyclicSolver {
    pub fn new(m: &Cyclic) -> Result<CyclicSolver> {
        let n = m.diag.len();
        if n < 3 || m.lower.len() != n || m.upper.len() != n {
            return Err(KppError::GridMismatch(
                "cyclic system needs three equal arrays of length >= 3".into(),
            ));
        }
        let chain = Chain::factor(m)?;
        let mut e0 = vec![0.0; n];
        e0[0] = 1.0;
        let mut en = vec![0.0; n];
        en[n - 1] = 1.0;
        let z1 = chain.solve(m.lower, &e0);
        let z2 = chain.solve(m.lower, &en);
        // corner_lo sits at (0, n-1), corner_hi at (n-1, 0)
        let corner_lo = m.lower[0];
        let corner_hi = m.upper[n - 1];
        let c11 = 1.0 + corner_lo * z1[n - 1];
        let c12 = corner_lo * z2[n - 1];
        let c21 = corner_hi * z1[0];
        let c22 = 1.0 + corner_hi * z2[0];
        let det = c11 * c22 - c12 * c21;
        if det == 0.0 || !det.is_finite() {
            return Err(KppError::Breakdown("singular cyclic system".into()));
        }
        let cap_inv = [[c22 / det, -c12 / det], [-c21 / det, c11 / det]];
        Ok(CyclicSolver {
            chain,
            lower: m.lower.to_vec(),
            corner_lo,
            corner_hi,
            z1,
            z2,
            cap_inv,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut y = self.chain.solve(&self.lower, rhs);
        let v1 = self.corner_lo * y[n - 1];
        let v2 = self.corner_hi * y[0];
        let w1 = self.cap_inv[0][0] * v1 + self.cap_inv[0][1] * v2;
        let w2 = self.cap_inv[1][0] * v1 + self.cap_inv[1][1] * v2;
        for i in 0..n {
            y[i] -= self.z1[i] * w1 + self.z2[i] * w2;
        }
        y
    }
}

/// `y = M x` for a cyclic tridiagonal `M`.
pub fn cyclic_apply(m: &Cyclic, x: &[f64], y: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        let im = if i == 0 { n - 1 } else { i - 1 };
        let ip = if i + 1 == n { 0 } else { i + 1 };
        y[i] = m.lower[i] * x[im] + m.diag[i] * x[i] + m.upper[i] * x[ip];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solves_random_dominant_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &n in &[3usize, 4, 17, 200] {
            let lower: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let upper: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let diag: Vec<f64> = (0..n).map(|_| 2.5 + rng.gen::<f64>()).collect();
            let m = Cyclic {
                lower: &lower,
                diag: &diag,
                upper: &upper,
            };
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut b = vec![0.0; n];
            cyclic_apply(&m, &x, &mut b);
            let got = CyclicSolver::new(&m).unwrap().solve(&b);
            for i in 0..n {
                assert!((got[i] - x[i]).abs() < 1e-12, "n = {n}, i = {i}");
            }
        }
    }
}

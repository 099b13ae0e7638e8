//! The tilted operator `L_p phi = (a phi')' - 2 p a phi' + (p^2 a - p a' + c) phi`
//! on a periodized window, and its principal eigenvalue `k_p`.

mod memo;
mod solver;
mod stencil;

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

pub use memo::{global_memo, MemoKey, MemoStore};
pub use solver::{EigenSolver, Noda, Power};
pub use stencil::{Centered, Conservative, Stencil};

use crate::error::{KppError, Result};
use crate::estimate::{Method, Provenance, SpeedEstimate};
use crate::medium::MediumRealization;
use crate::optimize::{expand_bracket, golden_section};
use crate::registry::Registry;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 500;

/// Periodic tridiagonal matrix of a tilted operator.
///
/// Rows are applied as `sub (phi_{i-1} - phi_i) + sup (phi_{i+1} - phi_i) + potential phi_i`,
/// which avoids the cancellation of the `O(1/h^2)` diagonal.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    pub n: usize,
    pub h: f64,
    pub p: f64,
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    /// Row sums `sub + diag + sup`.
    pub potential: Vec<f64>,
    pub source: u64,
    pub stencil: &'static str,
    pub symmetric: bool,
}

impl DiscreteOperator {
    fn empty(m: &MediumRealization, p: f64, stencil: &'static str) -> Self {
        let n = m.len();
        DiscreteOperator {
            n,
            h: m.spacing(),
            p,
            sub: vec![0.0; n],
            diag: vec![0.0; n],
            sup: vec![0.0; n],
            potential: vec![0.0; n],
            source: m.realization_id,
            stencil,
            symmetric: p == 0.0,
        }
    }

    /// Self-adjoint operator `(a phi')' + V phi` with flux-form diffusion.
    pub fn schrodinger(m: &MediumRealization, potential: &[f64]) -> Result<Self> {
        let h = m.spacing();
        let conductance: Vec<f64> = m.a_half.iter().map(|a| a / (h * h)).collect();
        DiscreteOperator::symmetric(m, &conductance, potential)
    }

    /// Symmetric operator with edge weights `conductance[i]` on `(i, i + 1)`
    /// and row sums `potential`.
    pub fn symmetric(
        m: &MediumRealization,
        conductance: &[f64],
        potential: &[f64],
    ) -> Result<Self> {
        let n = m.len();
        if potential.len() != n || conductance.len() != n {
            return Err(KppError::GridMismatch(format!(
                "coefficients have {} and {} entries, medium has {n} nodes",
                conductance.len(),
                potential.len()
            )));
        }
        let mut op = DiscreteOperator::empty(m, 0.0, "symmetric");
        for i in 0..n {
            op.sub[i] = conductance[if i == 0 { n - 1 } else { i - 1 }];
            op.sup[i] = conductance[i];
            op.potential[i] = potential[i];
            op.diag[i] = potential[i] - op.sub[i] - op.sup[i];
        }
        Ok(op)
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let xm = x[if i == 0 { n - 1 } else { i - 1 }];
            let xp = x[if i + 1 == n { 0 } else { i + 1 }];
            y[i] = self.sub[i] * (xm - x[i]) + self.sup[i] * (xp - x[i]) + self.potential[i] * x[i];
        }
    }

    /// Rayleigh quotient in Dirichlet form; only meaningful when symmetric.
    pub fn rayleigh(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            let ip = if i + 1 == n { 0 } else { i + 1 };
            let d = x[ip] - x[i];
            num += self.potential[i] * x[i] * x[i] - self.sup[i] * d * d;
            den += x[i] * x[i];
        }
        num / den
    }
}

/// Principal eigenpair of a discrete operator.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenResult {
    pub lambda: f64,
    /// Positive eigenvector with `max = 1`; exported separately as a binary attachment.
    #[serde(skip)]
    pub phi: Vec<f64>,
    /// `|A phi - lambda phi|_inf / |phi|_inf`.
    pub residual: f64,
    pub iters: usize,
    /// Collatz-Wielandt enclosure `cw_lower <= lambda <= cw_upper`.
    pub cw_lower: f64,
    pub cw_upper: f64,
    pub p: f64,
    pub n: usize,
    pub h: f64,
    pub window: f64,
    pub source: u64,
    pub stencil: String,
    pub solver: String,
}

impl EigenResult {
    /// `phi` scaled to unit discrete L2 norm, `sum alpha_i^2 h = 1`.
    pub fn l2_normalized(&self) -> Vec<f64> {
        let norm = (self.phi.iter().map(|v| v * v).sum::<f64>() * self.h).sqrt();
        self.phi.iter().map(|v| v / norm).collect()
    }
}

pub fn stencils() -> &'static Registry<dyn Stencil> {
    static R: OnceLock<Registry<dyn Stencil>> = OnceLock::new();
    R.get_or_init(|| {
        let mut r: Registry<dyn Stencil> = Registry::new("stencil", "conservative");
        r.register("conservative", Arc::new(Conservative));
        r.register("centered", Arc::new(Centered));
        r
    })
}

pub fn eigen_solvers() -> &'static Registry<dyn EigenSolver> {
    static R: OnceLock<Registry<dyn EigenSolver>> = OnceLock::new();
    R.get_or_init(|| {
        let mut r: Registry<dyn EigenSolver> = Registry::new("eigen solver", "noda");
        r.register("noda", Arc::new(Noda));
        r.register("power", Arc::new(Power));
        r
    })
}

/// Assemble `L_p` with the default stencil.
pub fn assemble_tilted(m: &MediumRealization, p: f64) -> Result<DiscreteOperator> {
    stencils().default_strategy().assemble(m, p)
}

/// Perron root of `op` with the default solver.
pub fn principal_eigen(op: &DiscreteOperator, tol: f64, max_iters: usize) -> Result<EigenResult> {
    eigen_solvers()
        .default_strategy()
        .solve(op, tol, max_iters, None)
}

/// Stencil, solver and tolerance bundled with an optional memo store.
#[derive(Clone)]
pub struct KpEngine {
    pub stencil: Arc<dyn Stencil>,
    pub solver: Arc<dyn EigenSolver>,
    pub tol: f64,
    pub max_iters: usize,
    memo: Option<Arc<MemoStore>>,
}

impl Default for KpEngine {
    fn default() -> Self {
        KpEngine {
            stencil: stencils().default_strategy(),
            solver: eigen_solvers().default_strategy(),
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
            memo: Some(global_memo()),
        }
    }
}

impl KpEngine {
    pub fn new(stencil: &str, solver: &str, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(KppError::Config(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        Ok(KpEngine {
            stencil: stencils().get(stencil)?,
            solver: eigen_solvers().get(solver)?,
            tol,
            ..Default::default()
        })
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_memo(mut self, memo: Option<Arc<MemoStore>>) -> Self {
        self.memo = memo;
        self
    }

    /// Largest `|p|` the stencil accepts on spacing `h`, with a safety factor.
    pub fn p_cap(&self, m: &MediumRealization) -> f64 {
        let ratio = (0..m.len())
            .map(|i| {
                let left = m.a_half[if i == 0 { m.len() - 1 } else { i - 1 }];
                left.min(m.a_half[i]) / m.a[i]
            })
            .fold(f64::INFINITY, f64::min);
        0.9 * ratio.min(1.0) / m.spacing()
    }

    fn key(&self, m: &MediumRealization, p: f64) -> MemoKey {
        MemoKey {
            realization: m.realization_id,
            p: p.to_bits(),
            n: m.len(),
            h: m.spacing().to_bits(),
            tol: self.tol.to_bits(),
            stencil: self.stencil.name(),
            solver: self.solver.name(),
        }
    }

    pub fn kp(&self, m: &MediumRealization, p: f64) -> Result<Arc<EigenResult>> {
        self.kp_warm(m, p, None)
    }

    /// `k_p`, starting the iteration from `init` when the memo misses.
    pub fn kp_warm(
        &self,
        m: &MediumRealization,
        p: f64,
        init: Option<&[f64]>,
    ) -> Result<Arc<EigenResult>> {
        let key = self.key(m, p);
        if let Some(memo) = &self.memo {
            if let Some(hit) = memo.get(&key) {
                return Ok(hit);
            }
        }
        let op = self.stencil.assemble(m, p)?;
        let res = Arc::new(self.solver.solve(&op, self.tol, self.max_iters, init)?);
        if let Some(memo) = &self.memo {
            memo.insert(key, res.clone());
        }
        Ok(res)
    }

    /// Minimize `p -> k_p / p` over `p > 0` by golden section, expanding
    /// `[p_lo, p_hi]` up to 8 times when it does not bracket the minimum.
    pub fn speed(
        &self,
        m: &MediumRealization,
        p_lo: f64,
        p_hi: f64,
        rel_tol: f64,
    ) -> Result<SpeedEstimate> {
        if !(p_lo > 0.0 && p_hi > p_lo) {
            return Err(KppError::Config(format!(
                "need 0 < p_lo < p_hi, got [{p_lo}, {p_hi}]"
            )));
        }
        let cap = self.p_cap(m);
        let mut warm: Option<Vec<f64>> = None;
        let mut worst_residual = 0.0f64;
        let mut ratio = |p: f64| -> Result<f64> {
            if p >= cap {
                return Err(KppError::BracketFailure(format!(
                    "p = {p} exceeds the grid limit {cap}"
                )));
            }
            let r = self.kp_warm(m, p, warm.as_deref())?;
            worst_residual = worst_residual.max(r.residual);
            warm = Some(r.phi.clone());
            Ok(r.lambda / p)
        };
        let (lo, hi) = expand_bracket(&mut ratio, p_lo, p_hi.min(cap / 1.01), 0.0, cap / 1.01, 8)?;
        let min = golden_section(&mut ratio, lo, hi, rel_tol)?;
        let edge = ratio(min.lo)?.max(ratio(min.hi)?);
        let p_star = min.x;
        let k_star = min.fx * p_star;
        let mut extras = BTreeMap::new();
        extras.insert("k_p".to_string(), k_star);
        extras.insert("eigen_residual".to_string(), worst_residual);
        extras.insert("evaluations".to_string(), min.evals as f64);
        Ok(SpeedEstimate {
            value: min.fx,
            method: Method::Eigen,
            optimizer: Some(p_star),
            err: self.tol / p_star + (edge - min.fx).abs(),
            provenance: Provenance::of(m, self.tol),
            extras,
        })
    }
}

/// Principal eigenvalue `k_p` of `m` with the default discretization; memoized.
pub fn k_p(m: &MediumRealization, p: f64, tol: f64) -> Result<Arc<EigenResult>> {
    KpEngine::default().with_tol(tol).kp(m, p)
}

/// `w* = min_{p > 0} k_p / p` with the default discretization.
pub fn speed_from_kp(
    m: &MediumRealization,
    p_lo: f64,
    p_hi: f64,
    tol: f64,
) -> Result<SpeedEstimate> {
    KpEngine::default().speed(m, p_lo, p_hi, tol)
}

#[cfg(test)]
mod tests;

//! Lyapunov exponent `mu(gamma)` of the decaying solution of
//! `(a phi')' + c phi = gamma phi`, and the speed `min gamma / mu(gamma)`.
//!
//! With `w = a phi' / phi` the equation becomes `w' = gamma - c - w^2 / a`.
//! Integrated in decreasing `x` the branch `w ~ -sqrt(a (gamma - c))` attracts,
//! and `mu = -<w / a>`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{KppError, Result};
use crate::estimate::{Method, Provenance, SpeedEstimate};
use crate::medium::MediumRealization;
use crate::operators::KpEngine;
use crate::optimize::{expand_bracket, golden_section};

/// Fields tabulated at half-step spacing for RK4.
struct Table {
    dx: f64,
    steps: usize,
    a: Vec<f64>,
    c: Vec<f64>,
}

impl Table {
    fn new(m: &MediumRealization, ode_step: f64) -> Result<Table> {
        if !(ode_step > 0.0) {
            return Err(KppError::Config(format!(
                "ODE step must be positive, got {ode_step}"
            )));
        }
        let steps = (m.window() / ode_step).ceil() as usize;
        let dx = m.window() / steps as f64;
        let mut a = Vec::with_capacity(2 * steps + 1);
        let mut c = Vec::with_capacity(2 * steps + 1);
        for j in 0..=2 * steps {
            let v = m.eval(0.5 * dx * j as f64);
            a.push(v.a);
            c.push(v.c);
        }
        Ok(Table { dx, steps, a, c })
    }

    fn max_c(&self) -> f64 {
        self.c.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `dw/ds` with `s = -x`, at half-node `j`.
    fn rhs(&self, gamma: f64, j: usize, w: f64) -> f64 {
        w * w / self.a[j] - (gamma - self.c[j])
    }

    /// One RK4 step from node `k` to node `k - 1`.
    fn step(&self, gamma: f64, k: usize, w: f64) -> Result<f64> {
        let h = self.dx;
        let j = 2 * k;
        let k1 = self.rhs(gamma, j, w);
        let k2 = self.rhs(gamma, j - 1, w + 0.5 * h * k1);
        let k3 = self.rhs(gamma, j - 1, w + 0.5 * h * k2);
        let k4 = self.rhs(gamma, j - 2, w + h * k3);
        let limit = 0.2 * w.abs();
        if [0.5 * h * k1, 0.5 * h * k2, h * k3, h * k4]
            .iter()
            .any(|d| d.abs() > limit)
        {
            return Err(KppError::StepTooCoarse {
                step: h,
                x: h * k as f64,
            });
        }
        Ok(w + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    }

    /// Integrate from `x = X` down to `x = 0`; returns `w(0)` and the node mean of `-w / a`.
    fn sweep(&self, gamma: f64, w_end: f64) -> Result<(f64, f64)> {
        let mut w = w_end;
        let mut acc = 0.0;
        for k in (1..=self.steps).rev() {
            acc -= w / self.a[2 * k];
            w = self.step(gamma, k, w)?;
        }
        Ok((w, acc / self.steps as f64))
    }
}

fn check_gamma(table: &Table, gamma: f64) -> Result<()> {
    let threshold = table.max_c();
    if !(gamma > threshold) {
        return Err(KppError::GammaBelowThreshold { gamma, threshold });
    }
    Ok(())
}

/// `mu(gamma)` on the periodized window.
///
/// A first backward sweep relaxes onto the attracting branch; a second sweep,
/// started from the periodic continuation of the first, is averaged.
pub fn riccati_mu(m: &MediumRealization, gamma: f64, ode_step: f64) -> Result<f64> {
    let table = Table::new(m, ode_step)?;
    mu_on(&table, gamma)
}

fn mu_on(table: &Table, gamma: f64) -> Result<f64> {
    check_gamma(table, gamma)?;
    let last = 2 * table.steps;
    let w_init = -(table.a[last] * (gamma - table.c[last])).sqrt();
    let (w0, _) = table.sweep(gamma, w_init)?;
    let (_, mu) = table.sweep(gamma, w0)?;
    Ok(mu)
}

/// Relative mismatch between `w(X)` on the periodic backward orbit and the
/// forward re-integration from `w(0)`. Forward integration follows the
/// unstable branch, so this is only informative on short windows.
pub fn forward_consistency(m: &MediumRealization, gamma: f64, ode_step: f64) -> Result<f64> {
    let table = Table::new(m, ode_step)?;
    check_gamma(&table, gamma)?;
    let last = 2 * table.steps;
    let w_init = -(table.a[last] * (gamma - table.c[last])).sqrt();
    let (w0, _) = table.sweep(gamma, w_init)?;
    let (w0_again, _) = table.sweep(gamma, w0)?;
    // forward: dw/dx = gamma - c - w^2 / a
    let f = |j: usize, w: f64| gamma - table.c[j] - w * w / table.a[j];
    let h = table.dx;
    let mut w = w0_again;
    for k in 0..table.steps {
        let j = 2 * k;
        let k1 = f(j, w);
        let k2 = f(j + 1, w + 0.5 * h * k1);
        let k3 = f(j + 1, w + 0.5 * h * k2);
        let k4 = f(j + 2, w + h * k3);
        w += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !w.is_finite() {
            return Ok(f64::INFINITY);
        }
    }
    Ok((w - w0).abs() / w0.abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveProvenance {
    pub realization: String,
    pub window: f64,
    pub h: f64,
    pub ode_step: f64,
}

/// Sampled `mu(gamma)` above the principal eigenvalue `Lambda_1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuCurve {
    pub gamma: Vec<f64>,
    pub mu: Vec<f64>,
    pub lambda1_estimate: f64,
    pub margin: f64,
    pub provenance: CurveProvenance,
}

impl MuCurve {
    /// CSV with a `#`-prefixed JSON provenance line.
    pub fn to_csv(&self) -> Result<String> {
        let header = serde_json::json!({
            "lambda1_estimate": self.lambda1_estimate,
            "margin": self.margin,
            "provenance": self.provenance,
        });
        let mut out = format!("# {}\ngamma,mu\n", serde_json::to_string(&header)?);
        for (g, m) in self.gamma.iter().zip(&self.mu) {
            writeln!(out, "{g},{m}").expect("writing to a String");
        }
        Ok(out)
    }

    /// Whitespace-separated `(gamma, mu)` pairs.
    pub fn to_dat(&self) -> String {
        let mut out = String::from("# gamma mu\n");
        for (g, m) in self.gamma.iter().zip(&self.mu) {
            writeln!(out, "{g} {m}").expect("writing to a String");
        }
        out
    }
}

/// Default margin above `Lambda_1`.
pub fn default_margin(lambda1: f64) -> f64 {
    0.05 * lambda1.abs() + 1e-3
}

/// Settings of the Freidlin route.
#[derive(Clone)]
pub struct FreidlinSolver {
    pub ode_step: f64,
    pub engine: KpEngine,
}

impl FreidlinSolver {
    pub fn new(ode_step: f64, engine: KpEngine) -> Self {
        FreidlinSolver { ode_step, engine }
    }

    /// `Lambda_1 = k_0` and the default margin.
    pub fn lambda1(&self, m: &MediumRealization) -> Result<(f64, f64)> {
        let l1 = self.engine.kp(m, 0.0)?.lambda;
        Ok((l1, default_margin(l1)))
    }

    /// Smallest admissible `gamma`: above `Lambda_1 + margin` and above `max c`.
    pub fn gamma_floor(&self, m: &MediumRealization) -> Result<(f64, f64, f64)> {
        let (l1, margin) = self.lambda1(m)?;
        let table = Table::new(m, self.ode_step)?;
        let floor = (l1 + margin).max(table.max_c() + margin);
        Ok((floor, l1, margin))
    }

    pub fn mu_curve(&self, m: &MediumRealization, gammas: &[f64]) -> Result<MuCurve> {
        let (floor, l1, margin) = self.gamma_floor(m)?;
        let table = Table::new(m, self.ode_step)?;
        let mut gamma = Vec::with_capacity(gammas.len());
        let mut mu = Vec::with_capacity(gammas.len());
        for &g in gammas {
            if g <= floor {
                return Err(KppError::GammaBelowThreshold {
                    gamma: g,
                    threshold: floor,
                });
            }
            gamma.push(g);
            mu.push(mu_on(&table, g)?);
        }
        Ok(MuCurve {
            gamma,
            mu,
            lambda1_estimate: l1,
            margin,
            provenance: CurveProvenance {
                realization: format!("{:016x}", m.realization_id),
                window: m.window(),
                h: m.spacing(),
                ode_step: self.ode_step,
            },
        })
    }

    /// `w* = min_gamma gamma / mu(gamma)`.
    pub fn speed(&self, m: &MediumRealization, rel_tol: f64) -> Result<SpeedEstimate> {
        let (floor, l1, margin) = self.gamma_floor(m)?;
        let table = Table::new(m, self.ode_step)?;
        let mut ratio = |g: f64| -> Result<f64> { Ok(g / mu_on(&table, g)?) };
        let g0 = floor + margin;
        // A bracket that cannot be made to descend at its left end means the
        // minimizer sits at the admissible boundary.
        let (lo, hi) = expand_bracket(&mut ratio, g0, 2.0 * g0 + 1.0, floor, f64::INFINITY, 8)
            .map_err(|e| {
                KppError::BracketFailure(format!(
                    "{e}; the minimizer may bind at the admissible boundary gamma = {floor}"
                ))
            })?;
        let min = golden_section(&mut ratio, lo, hi, rel_tol)?;
        let edge = ratio(min.lo)?.max(ratio(min.hi)?);
        let mu_star = min.x / min.fx;
        let mut extras = BTreeMap::new();
        extras.insert("mu".to_string(), mu_star);
        extras.insert("lambda1".to_string(), l1);
        extras.insert("gamma_floor".to_string(), floor);
        Ok(SpeedEstimate {
            value: min.fx,
            method: Method::Freidlin,
            optimizer: Some(min.x),
            err: (edge - min.fx).abs() + rel_tol * min.fx,
            provenance: Provenance::of(m, rel_tol),
            extras,
        })
    }
}

impl Default for FreidlinSolver {
    fn default() -> Self {
        FreidlinSolver {
            ode_step: 0.01,
            engine: KpEngine::default(),
        }
    }
}

/// Freidlin speed with the default ODE step.
pub fn speed_freidlin(m: &MediumRealization, tol: f64) -> Result<SpeedEstimate> {
    let step = m.spacing().min(0.01);
    FreidlinSolver::new(step, KpEngine::default()).speed(m, tol)
}

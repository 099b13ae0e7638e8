//! The drift formula `k_p = inf_theta k_0(a, c + a (p + theta)^2)` over
//! mean-zero fields `theta`.
//!
//! The default objective ([`GaugeObjective`]) places `theta` on grid edges:
//! conjugating the tilted matrix by `diag(e^G)` with `G_{i+1} - G_i = h theta_i`
//! and taking the symmetric part gives a self-adjoint matrix whose top
//! eigenvalue bounds `k_p` from above, with equality at
//! `G = log(psi / phi) / 2`. On this grid the formula is therefore exact, and its
//! potential is `c + a (p + theta)^2 + O(h^2)`. [`NodeObjective`] uses that
//! potential literally on the nodes.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{KppError, Result};
use crate::medium::io::{header_of, write_container};
use crate::medium::{empirical_means, MediumRealization};
use crate::operators::{DiscreteOperator, EigenSolver, KpEngine};
use crate::registry::Registry;

/// Mean-zero drift sampled on the grid (entry `i` belongs to the edge
/// `(x_i, x_{i+1})` for the gauge objective and to node `x_i` otherwise).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaField {
    pub theta: Vec<f64>,
    pub mean: f64,
    pub sup_norm: f64,
}

impl ThetaField {
    pub fn new(theta: Vec<f64>) -> Self {
        let mean = theta.iter().sum::<f64>() / theta.len() as f64;
        let sup_norm = theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ThetaField {
            theta,
            mean,
            sup_norm,
        }
    }

    pub fn zeros(n: usize) -> Self {
        ThetaField::new(vec![0.0; n])
    }

    /// Subtract the window mean.
    pub fn projected(theta: Vec<f64>) -> Self {
        let mean = theta.iter().sum::<f64>() / theta.len() as f64;
        ThetaField::new(theta.into_iter().map(|v| v - mean).collect())
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// A discretization of `theta -> k_0(a, c + a (p + theta)^2)`.
pub trait ThetaObjective: Send + Sync {
    fn name(&self) -> &'static str;

    /// Symmetric operator whose top eigenvalue is the objective.
    fn operator(&self, m: &MediumRealization, p: f64, theta: &[f64]) -> Result<DiscreteOperator>;

    /// Derivative with respect to each `theta[i]`, given the top eigenvector
    /// `z` normalized by `sum z_i^2 h = 1`.
    fn gradient(&self, m: &MediumRealization, p: f64, theta: &[f64], z: &[f64]) -> Vec<f64>;

    /// Diagonal of the Hessian, eigenvector motion neglected.
    fn curvature(&self, m: &MediumRealization, p: f64, theta: &[f64], z: &[f64]) -> Vec<f64>;
}

/// Edge drift entering through a diagonal gauge of the tilted matrix.
pub struct GaugeObjective;

/// Node potential `c_i + a_i (p + theta_i)^2` with flux-form diffusion.
pub struct NodeObjective;

fn next(i: usize, n: usize) -> usize {
    if i + 1 == n {
        0
    } else {
        i + 1
    }
}

impl GaugeObjective {
    /// `q(t) - 1` with `q(t) = cosh t + p h sinh t`, free of cancellation.
    fn q_minus_one(t: f64, ph: f64) -> f64 {
        let s = (0.5 * t).sinh();
        2.0 * s * s + ph * t.sinh()
    }
}

impl ThetaObjective for GaugeObjective {
    fn name(&self) -> &'static str {
        "gauge"
    }

    fn operator(&self, m: &MediumRealization, p: f64, theta: &[f64]) -> Result<DiscreteOperator> {
        let n = m.len();
        let h = m.spacing();
        if theta.len() != n {
            return Err(KppError::GridMismatch(format!(
                "theta has {} entries, medium has {n} nodes",
                theta.len()
            )));
        }
        let ph = p * h;
        if ph.abs() >= 1.0 {
            return Err(KppError::PositivityViolation { p, h, row: 0 });
        }
        let mut conductance = vec![0.0; n];
        let mut excess = vec![0.0; n];
        for e in 0..n {
            let alpha = m.a_half[e] / (h * h);
            let d = alpha * GaugeObjective::q_minus_one(h * theta[e], ph);
            conductance[e] = alpha + d;
            excess[e] = d;
        }
        let potential: Vec<f64> = (0..n)
            .map(|i| {
                let left = excess[if i == 0 { n - 1 } else { i - 1 }];
                p * p * m.a[i] + m.c[i] + left + excess[i]
            })
            .collect();
        DiscreteOperator::symmetric(m, &conductance, &potential)
    }

    fn gradient(&self, m: &MediumRealization, p: f64, theta: &[f64], z: &[f64]) -> Vec<f64> {
        let n = m.len();
        let h = m.spacing();
        (0..n)
            .map(|e| {
                let t = h * theta[e];
                let dq = t.sinh() + p * h * t.cosh();
                2.0 * m.a_half[e] * z[e] * z[next(e, n)] * dq
            })
            .collect()
    }

    fn curvature(&self, m: &MediumRealization, p: f64, theta: &[f64], z: &[f64]) -> Vec<f64> {
        let n = m.len();
        let h = m.spacing();
        (0..n)
            .map(|e| {
                let t = h * theta[e];
                let d2q = t.cosh() + p * h * t.sinh();
                2.0 * m.a_half[e] * z[e] * z[next(e, n)] * d2q * h
            })
            .collect()
    }
}

impl ThetaObjective for NodeObjective {
    fn name(&self) -> &'static str {
        "node"
    }

    fn operator(&self, m: &MediumRealization, p: f64, theta: &[f64]) -> Result<DiscreteOperator> {
        if theta.len() != m.len() {
            return Err(KppError::GridMismatch(format!(
                "theta has {} entries, medium has {} nodes",
                theta.len(),
                m.len()
            )));
        }
        let potential: Vec<f64> = (0..m.len())
            .map(|i| m.c[i] + m.a[i] * (p + theta[i]).powi(2))
            .collect();
        DiscreteOperator::schrodinger(m, &potential)
    }

    fn gradient(&self, m: &MediumRealization, p: f64, theta: &[f64], z: &[f64]) -> Vec<f64> {
        let h = m.spacing();
        (0..m.len())
            .map(|i| 2.0 * m.a[i] * (p + theta[i]) * z[i] * z[i] * h)
            .collect()
    }

    fn curvature(&self, m: &MediumRealization, _p: f64, _theta: &[f64], z: &[f64]) -> Vec<f64> {
        let h = m.spacing();
        (0..m.len())
            .map(|i| 2.0 * m.a[i] * z[i] * z[i] * h)
            .collect()
    }
}

pub fn objectives() -> &'static Registry<dyn ThetaObjective> {
    static R: OnceLock<Registry<dyn ThetaObjective>> = OnceLock::new();
    R.get_or_init(|| {
        let mut r: Registry<dyn ThetaObjective> = Registry::new("theta objective", "gauge");
        r.register("gauge", Arc::new(GaugeObjective));
        r.register("node", Arc::new(NodeObjective));
        r
    })
}

/// Objective value and normalized top eigenvector at one `theta`.
pub struct Evaluation {
    pub value: f64,
    pub z: Vec<f64>,
}

/// Evaluates an objective with warm-started eigen solves.
pub struct Evaluator<'a> {
    pub objective: &'a dyn ThetaObjective,
    pub solver: &'a dyn EigenSolver,
    pub m: &'a MediumRealization,
    pub p: f64,
    pub tol: f64,
    pub max_iters: usize,
    warm: Option<Vec<f64>>,
    pub evaluations: usize,
    /// Smallest objective value seen.
    pub trial_min: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        objective: &'a dyn ThetaObjective,
        engine: &'a KpEngine,
        m: &'a MediumRealization,
        p: f64,
    ) -> Self {
        Evaluator {
            objective,
            solver: engine.solver.as_ref(),
            m,
            p,
            tol: engine.tol,
            max_iters: engine.max_iters,
            warm: None,
            evaluations: 0,
            trial_min: f64::INFINITY,
        }
    }

    pub fn eval(&mut self, theta: &[f64]) -> Result<Evaluation> {
        let op = self.objective.operator(self.m, self.p, theta)?;
        let r = self
            .solver
            .solve(&op, self.tol, self.max_iters, self.warm.as_deref())?;
        self.warm = Some(r.phi.clone());
        self.evaluations += 1;
        self.trial_min = self.trial_min.min(r.lambda);
        Ok(Evaluation {
            value: r.lambda,
            z: r.l2_normalized(),
        })
    }

    pub fn gradient(&self, theta: &[f64], z: &[f64]) -> Vec<f64> {
        self.objective.gradient(self.m, self.p, theta, z)
    }

    pub fn curvature(&self, theta: &[f64], z: &[f64]) -> Vec<f64> {
        self.objective.curvature(self.m, self.p, theta, z)
    }
}

/// Norm of the mean-zero part of the gradient density `g_i / h` in `L^2(h)`.
pub fn projected_grad_norm(g: &[f64], h: f64) -> f64 {
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    (g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / h).sqrt()
}

/// Outcome of a descent run, before comparison with the direct `k_p`.
pub struct Descent {
    pub theta: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub grad_norm: f64,
    pub iters: usize,
}

/// Minimizes the objective over mean-zero `theta`.
pub trait ThetaOptimizer: Send + Sync {
    fn name(&self) -> &'static str;

    fn run(&self, ev: &mut Evaluator, init: &[f64], tol: f64, max_iters: usize) -> Result<Descent>;
}

/// Projected quasi-Newton descent. The initial inverse Hessian is the
/// diagonal curvature restricted to mean-zero fields; `memory` secant pairs
/// refine it (limited-memory BFGS). With `memory = 0` each step solves
/// `min g.d + d.P d / 2` subject to `sum d = 0`.
pub struct ScaledGradient {
    pub memory: usize,
}

/// Projected steepest descent in `L^2(h)` with Armijo backtracking; the trial
/// step grows after each first-try acceptance.
pub struct PlainGradient;

const ARMIJO: f64 = 1e-4;

fn project(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

/// Backtracking along `dir` with predicted decrease `pred` for a unit step.
/// Returns the accepted point, or `None` when no step decreases the objective.
fn line_search(
    ev: &mut Evaluator,
    theta: &[f64],
    value: f64,
    dir: &[f64],
    pred: f64,
    mut step: f64,
) -> Result<Option<(Vec<f64>, Evaluation, f64)>> {
    for _ in 0..40 {
        let mut trial: Vec<f64> = theta.iter().zip(dir).map(|(t, d)| t + step * d).collect();
        project(&mut trial);
        match ev.eval(&trial) {
            Ok(e) if e.value <= value - ARMIJO * step * pred => return Ok(Some((trial, e, step))),
            Ok(_) => {}
            // A step far outside the trust region can make the eigen solve fail.
            Err(err) if err.is_numerical() => {}
            Err(err) => return Err(err),
        }
        step *= 0.5;
    }
    Ok(None)
}

/// `(v - nu) / P` with `nu` chosen so the result has zero sum.
fn precondition(v: &[f64], pc: &[f64]) -> Vec<f64> {
    let nu =
        v.iter().zip(pc).map(|(v, p)| v / p).sum::<f64>() / pc.iter().map(|p| 1.0 / p).sum::<f64>();
    v.iter().zip(pc).map(|(v, p)| (v - nu) / p).collect()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

impl ThetaOptimizer for ScaledGradient {
    fn name(&self) -> &'static str {
        if self.memory == 0 {
            "scaled-gradient"
        } else {
            "lbfgs"
        }
    }

    fn run(&self, ev: &mut Evaluator, init: &[f64], tol: f64, max_iters: usize) -> Result<Descent> {
        let h = ev.m.spacing();
        let mut theta = init.to_vec();
        project(&mut theta);
        let mut cur = ev.eval(&theta)?;
        let mut g = ev.gradient(&theta, &cur.z);
        let mut pairs: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = Default::default();
        let mut iters = 0;
        // Trial step length, grown back towards one after each acceptance.
        let mut first = 1.0f64;
        loop {
            let grad_norm = projected_grad_norm(&g, h);
            // Decrease below the eigen tolerance cannot be resolved.
            let resolution = ev.tol.max(1e-15 * cur.value.abs());
            let mut pc = ev.curvature(&theta, &cur.z);
            let top = pc.iter().cloned().fold(0.0, f64::max);
            for v in pc.iter_mut() {
                *v = v.max(1e-6 * top);
            }
            // two-loop recursion
            let mut q = g.clone();
            let mut alphas = Vec::with_capacity(pairs.len());
            for (s, y, rho) in pairs.iter().rev() {
                let a = rho * dot(s, &q);
                for (qi, yi) in q.iter_mut().zip(y) {
                    *qi -= a * yi;
                }
                alphas.push(a);
            }
            let mut r = precondition(&q, &pc);
            for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
                let b = rho * dot(y, &r);
                for (ri, si) in r.iter_mut().zip(s) {
                    *ri += (a - b) * si;
                }
            }
            let mut dir: Vec<f64> = r.iter().map(|v| -v).collect();
            let mut pred = -dot(&g, &dir);
            if !(pred > 0.0) {
                pairs.clear();
                dir = precondition(&g, &pc).iter().map(|v| -v).collect();
                pred = -dot(&g, &dir);
            }
            if grad_norm < tol || pred < resolution {
                return Ok(Descent {
                    theta,
                    value: cur.value,
                    gradient: g,
                    grad_norm,
                    iters,
                });
            }
            if iters == max_iters {
                return Err(KppError::NoConvergence {
                    iters,
                    residual: grad_norm,
                });
            }
            match line_search(ev, &theta, cur.value, &dir, pred, first)? {
                Some((t, e, used)) => {
                    first = (2.0 * used).min(1.0);
                    let g_new = ev.gradient(&t, &e.z);
                    if self.memory > 0 {
                        let s: Vec<f64> = t.iter().zip(&theta).map(|(a, b)| a - b).collect();
                        let mut y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                        project(&mut y);
                        let sy = dot(&s, &y);
                        if sy > 0.0 {
                            if pairs.len() == self.memory {
                                pairs.pop_front();
                            }
                            pairs.push_back((s, y, 1.0 / sy));
                        }
                    }
                    theta = t;
                    cur = e;
                    g = g_new;
                }
                None => {
                    return Ok(Descent {
                        theta,
                        value: cur.value,
                        gradient: g,
                        grad_norm,
                        iters,
                    })
                }
            }
            iters += 1;
        }
    }
}

impl ThetaOptimizer for PlainGradient {
    fn name(&self) -> &'static str {
        "gradient"
    }

    fn run(&self, ev: &mut Evaluator, init: &[f64], tol: f64, max_iters: usize) -> Result<Descent> {
        let h = ev.m.spacing();
        let mut theta = init.to_vec();
        project(&mut theta);
        let mut cur = ev.eval(&theta)?;
        let mut step = 1.0;
        let mut iters = 0;
        loop {
            let g = ev.gradient(&theta, &cur.z);
            let grad_norm = projected_grad_norm(&g, h);
            let mean = g.iter().sum::<f64>() / g.len() as f64;
            let dir: Vec<f64> = g.iter().map(|v| -(v - mean) / h).collect();
            let pred = grad_norm * grad_norm;
            if grad_norm < tol || pred * step < ev.tol {
                return Ok(Descent {
                    theta,
                    value: cur.value,
                    gradient: g,
                    grad_norm,
                    iters,
                });
            }
            if iters == max_iters {
                return Err(KppError::NoConvergence {
                    iters,
                    residual: grad_norm,
                });
            }
            match line_search(ev, &theta, cur.value, &dir, pred, step)? {
                Some((t, e, used)) => {
                    theta = t;
                    cur = e;
                    step = if used == step { 2.0 * step } else { used };
                }
                None => {
                    return Ok(Descent {
                        theta,
                        value: cur.value,
                        gradient: g,
                        grad_norm,
                        iters,
                    })
                }
            }
            iters += 1;
        }
    }
}

pub fn optimizers() -> &'static Registry<dyn ThetaOptimizer> {
    static R: OnceLock<Registry<dyn ThetaOptimizer>> = OnceLock::new();
    R.get_or_init(|| {
        let mut r: Registry<dyn ThetaOptimizer> = Registry::new("theta optimizer", "lbfgs");
        r.register("lbfgs", Arc::new(ScaledGradient { memory: 8 }));
        r.register("scaled-gradient", Arc::new(ScaledGradient { memory: 0 }));
        r.register("gradient", Arc::new(PlainGradient));
        r
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThetaResult {
    pub theta: ThetaField,
    pub k0_value: f64,
    pub grad_norm: f64,
    pub iters: usize,
    /// `k0_value - k_p` with `k_p` from the tilted operator.
    pub gap_vs_direct: f64,
    pub k_p: f64,
    /// Smallest objective value over every `theta` evaluated.
    pub trial_min: f64,
    pub evaluations: usize,
    pub objective: String,
    pub optimizer: String,
    #[serde(skip)]
    pub gradient: Vec<f64>,
}

/// Objective, optimizer and eigen settings of a minimization.
#[derive(Clone)]
pub struct VariationalSolver {
    pub objective: Arc<dyn ThetaObjective>,
    pub optimizer: Arc<dyn ThetaOptimizer>,
    pub engine: KpEngine,
}

impl Default for VariationalSolver {
    fn default() -> Self {
        VariationalSolver {
            objective: objectives().default_strategy(),
            optimizer: optimizers().default_strategy(),
            engine: KpEngine::default().with_tol(1e-11),
        }
    }
}

impl VariationalSolver {
    pub fn new(objective: &str, optimizer: &str, engine: KpEngine) -> Result<Self> {
        Ok(VariationalSolver {
            objective: objectives().get(objective)?,
            optimizer: optimizers().get(optimizer)?,
            engine,
        })
    }

    pub fn k0_with_theta(&self, m: &MediumRealization, p: f64, theta: &ThetaField) -> Result<f64> {
        let op = self.objective.operator(m, p, &theta.theta)?;
        Ok(self
            .engine
            .solver
            .solve(&op, self.engine.tol, self.engine.max_iters, None)?
            .lambda)
    }

    /// Objective value and gradient at `theta`.
    pub fn value_and_gradient(
        &self,
        m: &MediumRealization,
        p: f64,
        theta: &ThetaField,
    ) -> Result<(f64, Vec<f64>)> {
        let mut ev = Evaluator::new(self.objective.as_ref(), &self.engine, m, p);
        let e = ev.eval(&theta.theta)?;
        let g = ev.gradient(&theta.theta, &e.z);
        Ok((e.value, g))
    }

    pub fn minimize(
        &self,
        m: &MediumRealization,
        p: f64,
        init: &ThetaField,
        tol: f64,
        max_iters: usize,
    ) -> Result<ThetaResult> {
        if init.len() != m.len() {
            return Err(KppError::GridMismatch(format!(
                "theta has {} entries, medium has {} nodes",
                init.len(),
                m.len()
            )));
        }
        let k_p = self.engine.kp(m, p)?.lambda;
        let mut ev = Evaluator::new(self.objective.as_ref(), &self.engine, m, p);
        let d = self.optimizer.run(&mut ev, &init.theta, tol, max_iters)?;
        Ok(ThetaResult {
            theta: ThetaField::new(d.theta),
            k0_value: d.value,
            grad_norm: d.grad_norm,
            iters: d.iters,
            gap_vs_direct: d.value - k_p,
            k_p,
            trial_min: ev.trial_min,
            evaluations: ev.evaluations,
            objective: self.objective.name().to_string(),
            optimizer: self.optimizer.name().to_string(),
            gradient: d.gradient,
        })
    }

    /// `theta* = (-phi'/phi + psi'/psi) / 2` from the eigenvectors of `L_p` and `L_{-p}`,
    /// as edge differences of the logarithms.
    pub fn theta_closed_form(&self, m: &MediumRealization, p: f64) -> Result<ThetaField> {
        let k0 = self.engine.kp(m, 0.0)?.lambda;
        let fwd = self.engine.kp(m, p)?;
        let gap = fwd.lambda - k0;
        if !(gap > 10.0 * self.engine.tol) {
            return Err(KppError::DegenerateTilt { p, gap });
        }
        let bwd = self.engine.kp(m, -p)?;
        let n = m.len();
        let h = m.spacing();
        let raw: Vec<f64> = (0..n)
            .map(|e| {
                let j = next(e, n);
                let dphi = (fwd.phi[j] / fwd.phi[e]).ln();
                let dpsi = (bwd.phi[j] / bwd.phi[e]).ln();
                0.5 * (dpsi - dphi) / h
            })
            .collect();
        Ok(ThetaField::projected(raw))
    }
}

/// `k_0(a, c + a (p + theta)^2)` with the default objective.
pub fn k0_with_theta(m: &MediumRealization, p: f64, theta: &ThetaField, tol: f64) -> Result<f64> {
    let s = VariationalSolver {
        engine: KpEngine::default().with_tol(tol),
        ..Default::default()
    };
    s.k0_with_theta(m, p, theta)
}

pub fn minimize_theta(
    m: &MediumRealization,
    p: f64,
    init: &ThetaField,
    tol: f64,
    max_iters: usize,
) -> Result<ThetaResult> {
    VariationalSolver::default().minimize(m, p, init, tol, max_iters)
}

pub fn theta_closed_form(m: &MediumRealization, p: f64) -> Result<ThetaField> {
    VariationalSolver::default().theta_closed_form(m, p)
}

/// Minimizer of the homogenized problem, `p (1 / (<1/a> a) - 1)`, sampled on
/// edges from `a_half`.
pub fn homogenized_theta(m: &MediumRealization, p: f64) -> ThetaField {
    let mean_inv = m.a_half.iter().map(|a| 1.0 / a).sum::<f64>() / m.len() as f64;
    ThetaField::projected(
        m.a_half
            .iter()
            .map(|a| p * (1.0 / (mean_inv * a) - 1.0))
            .collect(),
    )
}

/// Node version of [`homogenized_theta`] using the node means.
pub fn homogenized_theta_nodes(m: &MediumRealization, p: f64) -> ThetaField {
    let mean_inv = empirical_means(m).mean_inv_a;
    ThetaField::projected(
        m.a.iter()
            .map(|a| p * (1.0 / (mean_inv * a) - 1.0))
            .collect(),
    )
}

/// Write `theta`, its gradient density and the potential `c + a (p + theta)^2`
/// in the medium container layout.
pub fn export_theta(
    path: &std::path::Path,
    m: &MediumRealization,
    p: f64,
    result: &ThetaResult,
) -> Result<()> {
    let h = m.spacing();
    let density: Vec<f64> = result.gradient.iter().map(|g| g / h).collect();
    let potential: Vec<f64> = (0..m.len())
        .map(|i| m.c[i] + m.a[i] * (p + result.theta.theta[i]).powi(2))
        .collect();
    write_container(
        path,
        &header_of(m),
        &[&result.theta.theta, &density, &potential],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::{sample_realization, EnsembleSpec, LengthLaw};
    use rand::{Rng, SeedableRng};

    fn constant(a: f64, c: f64) -> MediumRealization {
        sample_realization(&EnsembleSpec::constant(a, c), 0, 0, 10.0, 0.01).unwrap()
    }

    fn dimer(seed: u64, window: f64, h: f64) -> MediumRealization {
        let spec =
            EnsembleSpec::dimer_c(1.0, 1.5, 0.5, 1.0, 1.0, LengthLaw::Uniform { delta: 0.5 });
        sample_realization(&spec, seed, 0, window, h).unwrap()
    }

    fn solver() -> VariationalSolver {
        VariationalSolver {
            engine: KpEngine::default().with_tol(1e-11).with_memo(None),
            ..Default::default()
        }
    }

    #[test]
    fn zero_drift_on_constants() {
        let m = constant(1.0, 1.0);
        for name in objectives().names() {
            let s = VariationalSolver::new(name, "lbfgs", KpEngine::default()).unwrap();
            for &p in &[0.0, 0.5, 1.3] {
                let v = s.k0_with_theta(&m, p, &ThetaField::zeros(m.len())).unwrap();
                assert!((v - 1.0 - p * p).abs() < 1e-10, "{name}: {v}");
            }
        }
        let r = solver()
            .minimize(&m, 0.8, &ThetaField::zeros(m.len()), 1e-8, 50)
            .unwrap();
        assert!(r.theta.sup_norm < 1e-12);
        assert!((r.k0_value - 1.64).abs() < 1e-10);
    }

    #[test]
    fn zero_drift_bounds_kp() {
        let m = dimer(2, 30.0, 0.01);
        let s = solver();
        for &p in &[0.5, 1.0, 2.0] {
            let kp = s.engine.kp(&m, p).unwrap().lambda;
            let v = s.k0_with_theta(&m, p, &ThetaField::zeros(m.len())).unwrap();
            assert!(v >= kp - 5e-11);
        }
    }

    #[test]
    fn homogenized_theta_values() {
        let spec = EnsembleSpec::DimerRandom {
            a_plus: 2.0,
            a_minus: 1.0,
            c_plus: 1.0,
            c_minus: 1.0,
            l1: 1.0,
            l2: 1.0,
            lengths: LengthLaw::Fixed,
            eps: None,
        };
        let m = sample_realization(&spec, 1, 0, 40.0, 0.01).unwrap();
        let th = homogenized_theta(&m, 1.0);
        assert!(th.mean.abs() < 1e-12 * th.sup_norm);
        for (i, a) in m.a_half.iter().enumerate() {
            if *a == 1.0 {
                assert!((th.theta[i] - 1.0 / 3.0).abs() < 0.01);
            } else if *a == 2.0 {
                assert!((th.theta[i] + 1.0 / 3.0).abs() < 0.01);
            }
        }
        let nodes = homogenized_theta_nodes(&m, 1.0);
        let means = empirical_means(&m);
        let energy = (0..m.len())
            .map(|i| m.a[i] * (1.0 + nodes.theta[i]).powi(2))
            .sum::<f64>()
            / m.len() as f64;
        assert!((energy - 1.0 / means.mean_inv_a).abs() < 1e-9);
        let flat = homogenized_theta(&constant(1.0, 2.0), 0.7);
        assert!(flat.sup_norm < 1e-14);
    }

    #[test]
    fn closed_form_attains_kp() {
        let m = dimer(5, 30.0, 0.01);
        let s = solver();
        for &p in &[1.0, 1.6] {
            let th = s.theta_closed_form(&m, p).unwrap();
            let kp = s.engine.kp(&m, p).unwrap().lambda;
            let v = s.k0_with_theta(&m, p, &th).unwrap();
            assert!(
                v - kp >= -5e-11 && v - kp <= 1e-8 * kp,
                "p = {p}: {v} vs {kp}"
            );
        }
        assert!(matches!(
            s.theta_closed_form(&constant(1.0, 1.0), 0.0),
            Err(KppError::DegenerateTilt { .. })
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = dimer(7, 20.0, 0.02);
        let s = solver();
        let p = 1.2;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for name in objectives().names() {
            let s = VariationalSolver {
                objective: objectives().get(name).unwrap(),
                ..s.clone()
            };
            let theta = ThetaField::projected(
                (0..m.len())
                    .map(|_| 0.3 * rng.gen_range(-1.0..1.0))
                    .collect(),
            );
            let (_, g) = s.value_and_gradient(&m, p, &theta).unwrap();
            for _ in 0..5 {
                let i = rng.gen_range(0..m.len());
                let bump = |d: f64| {
                    let mut t = theta.theta.clone();
                    t[i] += d;
                    s.k0_with_theta(&m, p, &ThetaField::new(t)).unwrap()
                };
                let fd = (bump(1e-5) - bump(-1e-5)) / 2e-5;
                assert!(
                    ((fd - g[i]) / g[i]).abs() < 1e-4,
                    "{name} coordinate {i}: {fd} vs {}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn descent_reaches_kp() {
        let m = dimer(9, 30.0, 0.01);
        let s = solver();
        let p = 1.5;
        let r = s
            .minimize(&m, p, &ThetaField::zeros(m.len()), 1e-9, 500)
            .unwrap();
        assert!(
            r.gap_vs_direct >= -1e-6 * r.k_p && r.gap_vs_direct <= 1e-3 * r.k_p,
            "gap {}",
            r.gap_vs_direct
        );
        assert!(r.trial_min >= r.k_p - 5e-11);
        let star = s.theta_closed_form(&m, p).unwrap();
        let again = s.minimize(&m, p, &star, 1e-9, 50).unwrap();
        assert!(again.iters <= 3);
    }

    #[test]
    fn objective_is_convex_along_segments() {
        let m = dimer(3, 20.0, 0.02);
        let s = solver();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut draw =
            || ThetaField::projected((0..m.len()).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let (t1, t2) = (draw(), draw());
        let f1 = s.k0_with_theta(&m, 0.9, &t1).unwrap();
        let f2 = s.k0_with_theta(&m, 0.9, &t2).unwrap();
        for &t in &[0.25, 0.5, 0.75] {
            let mix = ThetaField::new(
                t1.theta
                    .iter()
                    .zip(&t2.theta)
                    .map(|(a, b)| t * a + (1.0 - t) * b)
                    .collect(),
            );
            let fm = s.k0_with_theta(&m, 0.9, &mix).unwrap();
            assert!(fm <= t * f1 + (1.0 - t) * f2 + 5e-11);
        }
    }
}

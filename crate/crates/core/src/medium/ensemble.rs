use serde::{Deserialize, Serialize};

use crate::error::{KppError, Result};

/// Law of the block lengths of the dimer medium.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum LengthLaw {
    Fixed,
    /// Lengths drawn uniformly in `mean * [1 - delta, 1 + delta]`.
    Uniform {
        delta: f64,
    },
}

/// Statistical description of a family of coefficient fields `(a, c)`.
///
/// Every kind yields fields that are stationary under spatial shifts once the
/// random phase is taken into account, with `inf a > 0` and `inf c > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnsembleSpec {
    Constant {
        a0: f64,
        c0: f64,
    },
    /// Two plateaus per period (each half a period long), random phase.
    PeriodicPiecewise {
        period: f64,
        a_plus: f64,
        a_minus: f64,
        c_plus: f64,
        c_minus: f64,
        /// Mollifier width; defaults to ten grid spacings.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eps: Option<f64>,
    },
    /// Alternating blocks `(a_plus, c_plus)` of mean length `l1` and
    /// `(a_minus, c_minus)` of mean length `l2`.
    DimerRandom {
        a_plus: f64,
        a_minus: f64,
        c_plus: f64,
        c_minus: f64,
        l1: f64,
        l2: f64,
        lengths: LengthLaw,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eps: Option<f64>,
    },
    /// `a(x) = a_min + sum_m amp_a[m] (1 + cos(k_m x + phi_m))`, same shape for `c`.
    RandomTrig {
        freqs: Vec<f64>,
        amp_a: Vec<f64>,
        amp_c: Vec<f64>,
        a_min: f64,
        c_min: f64,
    },
}

impl EnsembleSpec {
    pub fn constant(a0: f64, c0: f64) -> Self {
        EnsembleSpec::Constant { a0, c0 }
    }

    /// Dimer medium with `a` constant and two growth-rate plateaus.
    pub fn dimer_c(
        a: f64,
        c_plus: f64,
        c_minus: f64,
        l1: f64,
        l2: f64,
        lengths: LengthLaw,
    ) -> Self {
        EnsembleSpec::DimerRandom {
            a_plus: a,
            a_minus: a,
            c_plus,
            c_minus,
            l1,
            l2,
            lengths,
            eps: None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            EnsembleSpec::Constant { .. } => "constant",
            EnsembleSpec::PeriodicPiecewise { .. } => "periodic_piecewise",
            EnsembleSpec::DimerRandom { .. } => "dimer_random",
            EnsembleSpec::RandomTrig { .. } => "random_trig",
        }
    }

    /// Smoothing width for piecewise kinds at spacing `h`.
    pub fn smoothing(&self, h: f64) -> Option<f64> {
        match self {
            EnsembleSpec::PeriodicPiecewise { eps, .. } | EnsembleSpec::DimerRandom { eps, .. } => {
                Some(eps.unwrap_or(10.0 * h))
            }
            _ => None,
        }
    }

    /// Declared floors `(inf a, inf c)`.
    pub fn floors(&self) -> (f64, f64) {
        match self {
            EnsembleSpec::Constant { a0, c0 } => (*a0, *c0),
            EnsembleSpec::PeriodicPiecewise {
                a_plus,
                a_minus,
                c_plus,
                c_minus,
                ..
            }
            | EnsembleSpec::DimerRandom {
                a_plus,
                a_minus,
                c_plus,
                c_minus,
                ..
            } => (a_plus.min(*a_minus), c_plus.min(*c_minus)),
            EnsembleSpec::RandomTrig { a_min, c_min, .. } => (*a_min, *c_min),
        }
    }

    /// True when `a` is the same constant everywhere for every realization.
    pub fn has_constant_diffusion(&self) -> bool {
        match self {
            EnsembleSpec::Constant { .. } => true,
            EnsembleSpec::PeriodicPiecewise {
                a_plus, a_minus, ..
            }
            | EnsembleSpec::DimerRandom {
                a_plus, a_minus, ..
            } => a_plus == a_minus,
            EnsembleSpec::RandomTrig { amp_a, .. } => amp_a.iter().all(|&v| v == 0.0),
        }
    }

    pub fn has_constant_reaction(&self) -> bool {
        match self {
            EnsembleSpec::Constant { .. } => true,
            EnsembleSpec::PeriodicPiecewise {
                c_plus, c_minus, ..
            }
            | EnsembleSpec::DimerRandom {
                c_plus, c_minus, ..
            } => c_plus == c_minus,
            EnsembleSpec::RandomTrig { amp_c, .. } => amp_c.iter().all(|&v| v == 0.0),
        }
    }

    /// Correlation-length proxy used for statistical slack.
    pub fn correlation_length(&self) -> f64 {
        match self {
            EnsembleSpec::Constant { .. } => 0.0,
            EnsembleSpec::PeriodicPiecewise { period, .. } => *period,
            EnsembleSpec::DimerRandom { l1, l2, .. } => l1 + l2,
            EnsembleSpec::RandomTrig { freqs, .. } => {
                let kmin = freqs.iter().cloned().fold(f64::INFINITY, f64::min);
                std::f64::consts::TAU / kmin
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(KppError::InvalidMedium(msg.to_string()));
        let (amin, cmin) = self.floors();
        if !(amin > 0.0) {
            return bad("diffusion floor must be positive");
        }
        if !(cmin > 0.0) {
            return bad("growth-rate floor must be positive");
        }
        match self {
            EnsembleSpec::Constant { .. } => {}
            EnsembleSpec::PeriodicPiecewise { period, eps, .. } => {
                if !(*period > 0.0) {
                    return bad("period must be positive");
                }
                if let Some(e) = eps {
                    if !(*e > 0.0) {
                        return bad("smoothing width must be positive");
                    }
                }
            }
            EnsembleSpec::DimerRandom {
                l1,
                l2,
                lengths,
                eps,
                ..
            } => {
                if !(*l1 > 0.0 && *l2 > 0.0) {
                    return bad("mean block lengths must be positive");
                }
                if let LengthLaw::Uniform { delta } = lengths {
                    if !(0.0..1.0).contains(delta) {
                        return bad("uniform length spread must lie in [0, 1)");
                    }
                }
                if let Some(e) = eps {
                    if !(*e > 0.0) {
                        return bad("smoothing width must be positive");
                    }
                }
            }
            EnsembleSpec::RandomTrig {
                freqs,
                amp_a,
                amp_c,
                ..
            } => {
                if freqs.is_empty() {
                    return bad("random_trig needs at least one mode");
                }
                if amp_a.len() != freqs.len() || amp_c.len() != freqs.len() {
                    return bad("amplitude vectors must have one entry per mode");
                }
                if freqs.iter().any(|&k| !(k > 0.0)) {
                    return bad("frequencies must be positive");
                }
                if amp_a.iter().chain(amp_c.iter()).any(|&v| v < 0.0) {
                    return bad("amplitudes must be nonnegative");
                }
            }
        }
        Ok(())
    }
}

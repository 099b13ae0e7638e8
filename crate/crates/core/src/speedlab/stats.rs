//! Seed statistics and three-valued verdicts.

use serde::{Deserialize, Serialize};

use crate::medium::{empirical_means, window_std, MediumRealization};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub std_error: f64,
    /// Normal-approximation 95% interval of the mean.
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary {
                n,
                mean: f64::NAN,
                std: f64::NAN,
                std_error: f64::NAN,
                ci_lo: f64::NAN,
                ci_hi: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let std_error = std / (n as f64).sqrt();
        Summary {
            n,
            mean,
            std,
            std_error,
            ci_lo: mean - 1.96 * std_error,
            ci_hi: mean + 1.96 * std_error,
        }
    }
}

/// `3 sd / sqrt(X / l)` for a field sampled on `m`, with `l` the correlation
/// length of the ensemble in the current units (zero for constant media).
pub fn statistical_slack(m: &MediumRealization, sd: f64) -> f64 {
    let l = m.ensemble.correlation_length() * m.transform.spatial_scale;
    if l <= 0.0 || sd == 0.0 {
        return 0.0;
    }
    3.0 * sd / (m.window() / l).max(1.0).sqrt()
}

/// Homogenized speed `2 sqrt(<c> / <1/a>)` and its slack, propagated from the
/// slacks of the two window means.
pub fn bound_slack(m: &MediumRealization) -> (f64, f64) {
    let means = empirical_means(m);
    let (sd_c, sd_ia) = window_std(m);
    let bound = means.homogenized_speed();
    let rel = statistical_slack(m, sd_c) / means.mean_c.abs()
        + statistical_slack(m, sd_ia) / means.mean_inv_a;
    (bound, 0.5 * bound * rel)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    Verified,
    Violated {
        margin: f64,
    },
    /// The confidence interval straddles the boundary.
    Inconclusive {
        margin: f64,
    },
}

impl Verdict {
    /// 0 verified, 1 inconclusive, 2 violated.
    pub fn severity(&self) -> u8 {
        match self {
            Verdict::Verified => 0,
            Verdict::Inconclusive { .. } => 1,
            Verdict::Violated { .. } => 2,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Verified => "verified",
            Verdict::Inconclusive { .. } => "inconclusive",
            Verdict::Violated { .. } => "violated",
        }
    }
}

/// One claimed inequality with the tolerance it was judged at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub claim: String,
    /// Ensemble index the check refers to.
    pub ensemble: usize,
    pub tolerance: f64,
    /// Signed distance to the boundary; positive means the claim holds.
    pub margin: f64,
    /// Reported only, without effect on the overall verdict.
    pub gating: bool,
    pub verdict: Verdict,
    pub detail: String,
}

impl Check {
    fn make(
        claim: &str,
        ensemble: usize,
        tolerance: f64,
        margin: f64,
        verdict: Verdict,
        detail: String,
    ) -> Check {
        Check {
            claim: claim.to_string(),
            ensemble,
            tolerance,
            margin,
            gating: true,
            verdict,
            detail,
        }
    }

    /// `|deviation| <= tolerance`.
    pub fn within(claim: &str, ensemble: usize, deviation: f64, tolerance: f64) -> Check {
        let margin = tolerance - deviation.abs();
        let verdict = if margin >= 0.0 {
            Verdict::Verified
        } else {
            Verdict::Violated { margin }
        };
        Check::make(
            claim,
            ensemble,
            tolerance,
            margin,
            verdict,
            format!("deviation {deviation:e}"),
        )
    }

    /// `margin >= -tolerance`, a non-strict inequality up to numerical error.
    pub fn at_least(claim: &str, ensemble: usize, margin: f64, tolerance: f64) -> Check {
        let verdict = if margin >= -tolerance {
            Verdict::Verified
        } else {
            Verdict::Violated { margin }
        };
        Check::make(claim, ensemble, tolerance, margin, verdict, String::new())
    }

    /// A strict inequality judged against `noise`: verified above it,
    /// violated below `-noise`, inconclusive in between.
    pub fn strict(claim: &str, ensemble: usize, margin: f64, noise: f64) -> Check {
        let verdict = if margin > noise {
            Verdict::Verified
        } else if margin < -noise {
            Verdict::Violated { margin }
        } else {
            Verdict::Inconclusive { margin }
        };
        Check::make(claim, ensemble, noise, margin, verdict, String::new())
    }

    /// A per-seed claim that must hold on at least `gate` of the seeds.
    /// Seeds contradicting the claim outright make it violated.
    pub fn gated(
        claim: &str,
        ensemble: usize,
        passes: usize,
        contradictions: usize,
        total: usize,
        gate: f64,
    ) -> Check {
        let frac = passes as f64 / total as f64;
        let margin = frac - gate;
        let verdict = if margin >= 0.0 {
            Verdict::Verified
        } else if contradictions > 0 && (total - contradictions) as f64 / (total as f64) < gate {
            Verdict::Violated { margin }
        } else {
            Verdict::Inconclusive { margin }
        };
        Check::make(
            claim,
            ensemble,
            gate,
            margin,
            verdict,
            format!("{passes} of {total} seeds"),
        )
    }

    pub fn with_detail(mut self, detail: String) -> Check {
        self.detail = detail;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Check {
        self.tolerance = tolerance;
        self
    }

    pub fn informational(mut self) -> Check {
        self.gating = false;
        self
    }
}

/// Strict increase from paired differences `d[i]` with per-seed error bars
/// `err[i]`: verified when every difference exceeds its error bar and the
/// mean exceeds three standard errors; violated when the mean is below
/// minus three standard errors or a difference is below minus its error bar.
pub fn paired_increase(claim: &str, ensemble: usize, d: &[f64], err: &[f64]) -> Check {
    let s = Summary::of(d);
    let noise = 3.0 * s.std_error;
    let all_clear = d.iter().zip(err).all(|(d, e)| *d > *e);
    let contradicted = d.iter().zip(err).any(|(d, e)| *d < -*e);
    let margin = s.mean - noise;
    let verdict = if all_clear && margin > 0.0 {
        Verdict::Verified
    } else if s.mean + noise < 0.0 || contradicted {
        Verdict::Violated { margin }
    } else {
        Verdict::Inconclusive { margin }
    };
    let smallest = d.iter().cloned().fold(f64::INFINITY, f64::min);
    Check::make(
        claim,
        ensemble,
        noise,
        margin,
        verdict,
        format!(
            "mean {:e}, std error {:e}, smallest {smallest:e}",
            s.mean, s.std_error
        ),
    )
}

/// Every paired difference at least minus its error bar.
pub fn paired_nondecrease(claim: &str, ensemble: usize, d: &[f64], err: &[f64]) -> Check {
    let (margin, tol) = d
        .iter()
        .zip(err)
        .map(|(d, e)| (d + e, *e))
        .fold((f64::INFINITY, 0.0f64), |(m, t), (v, e)| {
            (m.min(v), t.max(e))
        });
    let verdict = if margin >= 0.0 {
        Verdict::Verified
    } else {
        Verdict::Violated { margin }
    };
    Check::make(claim, ensemble, tol, margin, verdict, String::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::{sample_realization, EnsembleSpec, LengthLaw};

    #[test]
    fn summary_values() {
        let s = Summary::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 1.0).abs() < 1e-15);
        assert!((s.std_error - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn slack_vanishes_for_constants() {
        let m = sample_realization(&EnsembleSpec::constant(1.0, 1.0), 0, 0, 10.0, 0.1).unwrap();
        assert_eq!(bound_slack(&m), (2.0, 0.0));
        let spec = EnsembleSpec::dimer_c(1.0, 1.5, 0.5, 1.0, 1.0, LengthLaw::Fixed);
        let d = sample_realization(&spec, 0, 0, 200.0, 0.01).unwrap();
        let s = statistical_slack(&d, 0.5);
        assert!((s - 1.5 / 10.0).abs() < 1e-12);
    }

    #[test]
    fn verdicts_are_three_valued() {
        assert_eq!(Check::strict("x", 0, 1.0, 0.5).verdict, Verdict::Verified);
        assert!(matches!(
            Check::strict("x", 0, 0.2, 0.5).verdict,
            Verdict::Inconclusive { .. }
        ));
        assert!(matches!(
            Check::strict("x", 0, -1.0, 0.5).verdict,
            Verdict::Violated { .. }
        ));
        assert_eq!(
            paired_increase("x", 0, &[1.0, 1.1, 0.9], &[0.01; 3]).verdict,
            Verdict::Verified
        );
        assert!(matches!(
            paired_increase("x", 0, &[1.0, -1.0, 0.1], &[0.01; 3]).verdict,
            Verdict::Violated { .. }
        ));
        assert!(matches!(
            paired_increase("x", 0, &[0.005, 0.02, 0.03], &[0.01; 3]).verdict,
            Verdict::Inconclusive { .. }
        ));
        assert_eq!(
            Check::gated("x", 0, 19, 0, 20, 0.95).verdict,
            Verdict::Verified
        );
        assert!(matches!(
            Check::gated("x", 0, 18, 0, 20, 0.95).verdict,
            Verdict::Inconclusive { .. }
        ));
        assert!(matches!(
            Check::gated("x", 0, 10, 10, 20, 0.95).verdict,
            Verdict::Violated { .. }
        ));
    }
}

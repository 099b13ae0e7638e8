//! Continuous descriptions of sampled coefficient fields.
//!
//! A profile is the exact function `x -> (a, a', c)` behind a realization. It
//! lets derived media (rescaled, resampled) be evaluated at arbitrary points
//! instead of being interpolated from a grid.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ensemble::{EnsembleSpec, LengthLaw};

/// Point values of the coefficients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coeffs {
    pub a: f64,
    pub a_prime: f64,
    pub c: f64,
}

#[derive(Clone, Debug)]
pub(crate) enum Profile {
    Constant { a: f64, c: f64 },
    Steps(Steps),
    Trig(Trig),
}

/// Piecewise-constant fields on `[0, period)`, mollified by a quartic bump.
#[derive(Clone, Debug)]
pub(crate) struct Steps {
    period: f64,
    /// Block start points, `starts[0] == 0`.
    starts: Vec<f64>,
    a_vals: Vec<f64>,
    c_vals: Vec<f64>,
    /// Jump located at `starts[k]`: value of block `k` minus value of block `k - 1` (cyclic).
    jump_a: Vec<f64>,
    jump_c: Vec<f64>,
    eps: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct Trig {
    a_min: f64,
    c_min: f64,
    k: Vec<f64>,
    amp_a: Vec<f64>,
    amp_c: Vec<f64>,
    phase_a: Vec<f64>,
    phase_c: Vec<f64>,
}

/// Mollifier `K(s) = 15/16 (1 - s^2)^2` on `[-1, 1]`; its primitive is C^2.
fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let t = 1.0 - s * s;
        15.0 / 16.0 * t * t
    }
}

fn bump_cdf(s: f64) -> f64 {
    if s <= -1.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let s3 = s * s * s;
        0.5 + 15.0 / 16.0 * (s - 2.0 * s3 / 3.0 + s3 * s * s / 5.0)
    }
}

impl Steps {
    /// Build from blocks `(length, a, c)` laid end to end starting at `origin <= 0`,
    /// clipped to `[0, period)`.
    fn from_blocks(period: f64, origin: f64, blocks: &[(f64, f64, f64)], eps: f64) -> Steps {
        let mut starts = Vec::new();
        let mut a_vals = Vec::new();
        let mut c_vals = Vec::new();
        let mut pos = origin;
        for &(len, a, c) in blocks {
            let end = pos + len;
            if end > 0.0 && pos < period {
                starts.push(pos.max(0.0));
                a_vals.push(a);
                c_vals.push(c);
            }
            pos = end;
            if pos >= period {
                break;
            }
        }
        let n = starts.len();
        let jump_a = (0..n)
            .map(|k| a_vals[k] - a_vals[(k + n - 1) % n])
            .collect();
        let jump_c = (0..n)
            .map(|k| c_vals[k] - c_vals[(k + n - 1) % n])
            .collect();
        Steps {
            period,
            starts,
            a_vals,
            c_vals,
            jump_a,
            jump_c,
            eps,
        }
    }

    fn eval(&self, x: f64) -> Coeffs {
        let x = x.rem_euclid(self.period);
        let block = self.starts.partition_point(|&s| s <= x).saturating_sub(1);
        let mut a = self.a_vals[block];
        let mut c = self.c_vals[block];
        let mut da = 0.0;
        let half = 0.5 * self.eps;
        for shift in [-self.period, 0.0, self.period] {
            let lo = x - shift - half;
            let hi = x - shift + half;
            let first = self.starts.partition_point(|&s| s <= lo);
            for k in first..self.starts.len() {
                let xj = self.starts[k];
                if xj >= hi {
                    break;
                }
                let t = x - (xj + shift);
                let s = t / half;
                let heaviside = if t >= 0.0 { 1.0 } else { 0.0 };
                let corr = bump_cdf(s) - heaviside;
                a += self.jump_a[k] * corr;
                c += self.jump_c[k] * corr;
                da += self.jump_a[k] * bump(s) / half;
            }
        }
        Coeffs { a, a_prime: da, c }
    }
}

impl Trig {
    fn eval(&self, x: f64) -> Coeffs {
        let mut a = self.a_min;
        let mut da = 0.0;
        let mut c = self.c_min;
        for m in 0..self.k.len() {
            let ta = self.k[m] * x + self.phase_a[m];
            a += self.amp_a[m] * (1.0 + ta.cos());
            da -= self.amp_a[m] * self.k[m] * ta.sin();
            c += self.amp_c[m] * (1.0 + (self.k[m] * x + self.phase_c[m]).cos());
        }
        Coeffs { a, a_prime: da, c }
    }
}

impl Profile {
    pub(crate) fn eval(&self, x: f64) -> Coeffs {
        match self {
            Profile::Constant { a, c } => Coeffs {
                a: *a,
                a_prime: 0.0,
                c: *c,
            },
            Profile::Steps(s) => s.eval(x),
            Profile::Trig(t) => t.eval(x),
        }
    }

    /// Draw a profile on the window `[0, window)`; the RNG is consumed in a
    /// fixed order so that longer windows extend shorter ones.
    pub(crate) fn draw(
        spec: &EnsembleSpec,
        window: f64,
        eps: Option<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Profile {
        match spec {
            EnsembleSpec::Constant { a0, c0 } => Profile::Constant { a: *a0, c: *c0 },
            EnsembleSpec::PeriodicPiecewise {
                period,
                a_plus,
                a_minus,
                c_plus,
                c_minus,
                ..
            } => {
                let phase = rng.gen::<f64>() * period;
                let half = 0.5 * period;
                let mut blocks = Vec::new();
                let mut covered = phase - period;
                while covered < window {
                    blocks.push((half, *a_plus, *c_plus));
                    blocks.push((half, *a_minus, *c_minus));
                    covered += *period;
                }
                Profile::Steps(Steps::from_blocks(
                    window,
                    phase - period,
                    &blocks,
                    eps.unwrap_or(0.0),
                ))
            }
            EnsembleSpec::DimerRandom {
                a_plus,
                a_minus,
                c_plus,
                c_minus,
                l1,
                l2,
                lengths,
                ..
            } => {
                let draw_len = |mean: f64, rng: &mut ChaCha8Rng| match lengths {
                    LengthLaw::Fixed => mean,
                    LengthLaw::Uniform { delta } => {
                        mean * (1.0 + delta * (2.0 * rng.gen::<f64>() - 1.0))
                    }
                };
                let mut plus = rng.gen::<f64>() < l1 / (l1 + l2);
                let first = draw_len(if plus { *l1 } else { *l2 }, rng);
                let offset = rng.gen::<f64>() * first;
                let origin = -offset;
                let mut blocks = Vec::new();
                let mut len = first;
                let mut covered = origin;
                loop {
                    let (a, c) = if plus {
                        (*a_plus, *c_plus)
                    } else {
                        (*a_minus, *c_minus)
                    };
                    blocks.push((len, a, c));
                    covered += len;
                    if covered >= window {
                        break;
                    }
                    plus = !plus;
                    len = draw_len(if plus { *l1 } else { *l2 }, rng);
                }
                Profile::Steps(Steps::from_blocks(
                    window,
                    origin,
                    &blocks,
                    eps.unwrap_or(0.0),
                ))
            }
            EnsembleSpec::RandomTrig {
                freqs,
                amp_a,
                amp_c,
                a_min,
                c_min,
            } => {
                // Wavenumbers snapped to the window so that the periodized field is smooth.
                let k = freqs
                    .iter()
                    .map(|&f| {
                        let n = (f * window / TAU).round().max(1.0);
                        TAU * n / window
                    })
                    .collect();
                let phase_a = (0..freqs.len()).map(|_| rng.gen::<f64>() * TAU).collect();
                let phase_c = (0..freqs.len()).map(|_| rng.gen::<f64>() * TAU).collect();
                Profile::Trig(Trig {
                    a_min: *a_min,
                    c_min: *c_min,
                    k,
                    amp_a: amp_a.clone(),
                    amp_c: amp_c.clone(),
                    phase_a,
                    phase_c,
                })
            }
        }
    }

    /// Number of plateau blocks (piecewise kinds only).
    pub(crate) fn block_count(&self) -> Option<usize> {
        match self {
            Profile::Steps(s) => Some(s.starts.len()),
            _ => None,
        }
    }
}

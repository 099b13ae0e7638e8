//! Seeded realizations of stationary ergodic coefficient fields `(a, c)`.
//!
//! A realization is a periodized window `[0, X)` sampled on `N = X / h` nodes.
//! It keeps the continuous profile it was drawn from, so rescaled or resampled
//! media are evaluated exactly rather than interpolated.

mod ensemble;
pub mod io;
mod profile;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use ensemble::{EnsembleSpec, LengthLaw};
pub use profile::Coeffs;
use profile::Profile;

use crate::error::{KppError, Result};

/// SplitMix64 finalizer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed of `(master, stream)`; streams are paired across parameter sweeps.
pub fn child_seed(master: u64, stream: u64) -> u64 {
    splitmix(splitmix(master) ^ splitmix(stream.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

/// Affine and spatial transformations applied on top of a drawn profile:
/// `a(x) = a_scale * a0(x / L)`, `c(x) = c_scale * c0(x / L) + c_shift`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub spatial_scale: f64,
    pub a_scale: f64,
    pub c_scale: f64,
    pub c_shift: f64,
}

impl Default for Transform {
    fn default() -> Self {
        Transform {
            spatial_scale: 1.0,
            a_scale: 1.0,
            c_scale: 1.0,
            c_shift: 0.0,
        }
    }
}

impl Transform {
    pub fn is_identity(&self) -> bool {
        *self == Transform::default()
    }
}

/// One sampled medium on a periodized window.
#[derive(Clone, Debug)]
pub struct MediumRealization {
    h: f64,
    window: f64,
    /// `a(x_i)`, `x_i = i h`.
    pub a: Vec<f64>,
    pub a_prime: Vec<f64>,
    pub c: Vec<f64>,
    /// `a(x_i + h / 2)`.
    pub a_half: Vec<f64>,
    pub master_seed: u64,
    pub stream_id: u64,
    pub ensemble: EnsembleSpec,
    pub realization_id: u64,
    pub transform: Transform,
    /// Window of the untransformed profile.
    base_window: f64,
    eps: Option<f64>,
    profile: Arc<Profile>,
}

/// Birkhoff window averages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeans {
    pub mean_c: f64,
    pub mean_a: f64,
    pub mean_inv_a: f64,
}

impl EmpiricalMeans {
    /// Harmonic mean `E[1/a]^{-1}`.
    pub fn harmonic_a(&self) -> f64 {
        1.0 / self.mean_inv_a
    }

    /// Homogenized speed `2 sqrt(E[c] / E[1/a])`.
    pub fn homogenized_speed(&self) -> f64 {
        2.0 * (self.mean_c / self.mean_inv_a).sqrt()
    }
}

fn node_count(window: f64, h: f64) -> Result<usize> {
    if !(h > 0.0) || !(window > 0.0) {
        return Err(KppError::InvalidMedium(
            "window and spacing must be positive".into(),
        ));
    }
    let n = (window / h).round();
    if (n * h - window).abs() > 1e-9 * window || n < 3.0 {
        return Err(KppError::NonIntegralGrid { x: window, h });
    }
    Ok(n as usize)
}

/// Draw a realization. Deterministic in all arguments.
pub fn sample_realization(
    spec: &EnsembleSpec,
    master_seed: u64,
    stream_id: u64,
    window: f64,
    h: f64,
) -> Result<MediumRealization> {
    spec.validate()?;
    node_count(window, h)?;
    let eps = spec.smoothing(h);
    if let Some(e) = eps {
        if e < 4.0 * h * (1.0 - 1e-12) {
            return Err(KppError::UnresolvedSmoothing { eps: e, h });
        }
    }
    if let EnsembleSpec::PeriodicPiecewise { period, .. } = spec {
        let periods = window / period;
        if (periods - periods.round()).abs() > 1e-9 * periods.max(1.0) {
            return Err(KppError::InvalidMedium(format!(
                "window {window} is not a multiple of the period {period}"
            )));
        }
    }
    let m = regenerate(
        spec,
        master_seed,
        stream_id,
        window,
        window,
        h,
        Transform::default(),
    )?;
    let (amin, cmin) = spec.floors();
    let lo_a =
        m.a.iter()
            .chain(m.a_half.iter())
            .cloned()
            .fold(f64::INFINITY, f64::min);
    let lo_c = m.c.iter().cloned().fold(f64::INFINITY, f64::min);
    // The mollified field is a convex combination of plateau values.
    if lo_a < amin * (1.0 - 1e-12) || lo_c < cmin * (1.0 - 1e-12) {
        return Err(KppError::InvalidMedium(
            "sampled field fell below its floor".into(),
        ));
    }
    Ok(m)
}

/// Redraw the profile of `(spec, master_seed, stream_id, base_window)` and
/// sample it with `transform` on `[0, window)`.
pub(crate) fn regenerate(
    spec: &EnsembleSpec,
    master_seed: u64,
    stream_id: u64,
    base_window: f64,
    window: f64,
    h: f64,
    transform: Transform,
) -> Result<MediumRealization> {
    let eps = spec.smoothing(h);
    // Pin the mollifier width so that resampling at another spacing keeps it.
    let resolved = match spec.clone() {
        EnsembleSpec::PeriodicPiecewise {
            period,
            a_plus,
            a_minus,
            c_plus,
            c_minus,
            ..
        } => EnsembleSpec::PeriodicPiecewise {
            period,
            a_plus,
            a_minus,
            c_plus,
            c_minus,
            eps,
        },
        EnsembleSpec::DimerRandom {
            a_plus,
            a_minus,
            c_plus,
            c_minus,
            l1,
            l2,
            lengths,
            ..
        } => EnsembleSpec::DimerRandom {
            a_plus,
            a_minus,
            c_plus,
            c_minus,
            l1,
            l2,
            lengths,
            eps,
        },
        other => other,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(master_seed, stream_id));
    let profile = Profile::draw(&resolved, base_window, eps, &mut rng);
    MediumRealization::from_profile(
        Arc::new(profile),
        resolved,
        master_seed,
        stream_id,
        base_window,
        window,
        h,
        eps,
        transform,
    )
}

impl MediumRealization {
    #[allow(clippy::too_many_arguments)]
    fn from_profile(
        profile: Arc<Profile>,
        ensemble: EnsembleSpec,
        master_seed: u64,
        stream_id: u64,
        base_window: f64,
        window: f64,
        h: f64,
        eps: Option<f64>,
        transform: Transform,
    ) -> Result<Self> {
        let n = node_count(window, h)?;
        let mut m = MediumRealization {
            h,
            window,
            a: Vec::with_capacity(n),
            a_prime: Vec::with_capacity(n),
            c: Vec::with_capacity(n),
            a_half: Vec::with_capacity(n),
            master_seed,
            stream_id,
            ensemble,
            realization_id: 0,
            transform,
            base_window,
            eps,
            profile,
        };
        for i in 0..n {
            let x = i as f64 * h;
            let p = m.eval(x);
            m.a.push(p.a);
            m.a_prime.push(p.a_prime);
            m.c.push(p.c);
            m.a_half.push(m.eval(x + 0.5 * h).a);
        }
        if m.a.iter().chain(m.a_half.iter()).any(|&v| !(v > 0.0)) {
            return Err(KppError::InvalidMedium(
                "diffusion must stay positive".into(),
            ));
        }
        m.realization_id = m.content_hash_u64();
        Ok(m)
    }

    /// Exact coefficients at an arbitrary point (periodic in the window).
    pub fn eval(&self, x: f64) -> Coeffs {
        let t = &self.transform;
        let base = self.profile.eval(x / t.spatial_scale);
        Coeffs {
            a: t.a_scale * base.a,
            a_prime: t.a_scale * base.a_prime / t.spatial_scale,
            c: t.c_scale * base.c + t.c_shift,
        }
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    /// Smoothing width of the piecewise kinds, in current length units.
    pub fn smoothing(&self) -> Option<f64> {
        self.eps.map(|e| e * self.transform.spatial_scale)
    }

    pub fn base_window(&self) -> f64 {
        self.base_window
    }

    pub fn block_count(&self) -> Option<usize> {
        self.profile.block_count()
    }

    /// SHA-256 over the spacing and all sampled arrays.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.h.to_le_bytes());
        for arr in [&self.a, &self.a_prime, &self.c, &self.a_half] {
            hasher.update((arr.len() as u64).to_le_bytes());
            for v in arr.iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        hasher.finalize().into()
    }

    fn content_hash_u64(&self) -> u64 {
        let d = self.content_hash();
        u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
    }

    fn derive(&self, window: f64, h: f64, transform: Transform) -> Result<Self> {
        MediumRealization::from_profile(
            self.profile.clone(),
            self.ensemble.clone(),
            self.master_seed,
            self.stream_id,
            self.base_window,
            window,
            h,
            self.eps,
            transform,
        )
    }

    /// The same medium sampled at another spacing.
    pub fn resample(&self, h: f64) -> Result<Self> {
        if let Some(e) = self.smoothing() {
            if e < 4.0 * h * (1.0 - 1e-12) {
                return Err(KppError::UnresolvedSmoothing { eps: e, h });
            }
        }
        self.derive(self.window, h, self.transform)
    }

    /// `a(x) -> kappa a(x)`.
    pub fn scale_diffusion(&self, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(KppError::InvalidScale(kappa));
        }
        let mut t = self.transform;
        t.a_scale *= kappa;
        self.derive(self.window, self.h, t)
    }

    /// `c(x) -> scale c(x) + shift`.
    pub fn affine_reaction(&self, scale: f64, shift: f64) -> Result<Self> {
        let mut t = self.transform;
        t.c_scale *= scale;
        t.c_shift = t.c_shift * scale + shift;
        self.derive(self.window, self.h, t)
    }

    /// `c(x) -> value`.
    pub fn with_constant_reaction(&self, value: f64) -> Result<Self> {
        let mut t = self.transform;
        t.c_scale = 0.0;
        t.c_shift = value;
        self.derive(self.window, self.h, t)
    }

    /// `c(x) -> c(x) - <c>`, with `<c>` the window mean.
    pub fn demeaned_reaction(&self) -> Result<Self> {
        let mean = empirical_means(self).mean_c;
        self.affine_reaction(1.0, -mean)
    }

    /// `f(x) -> f(x / L)` for every coefficient; the window becomes `L X`.
    pub fn rescale(&self, scale: f64) -> Result<Self> {
        rescale(self, scale)
    }
}

/// Window averages of `c`, `a` and `1/a` (trapezoid rule on the periodic grid).
pub fn empirical_means(m: &MediumRealization) -> EmpiricalMeans {
    let n = m.len() as f64;
    EmpiricalMeans {
        mean_c: m.c.iter().sum::<f64>() / n,
        mean_a: m.a.iter().sum::<f64>() / n,
        mean_inv_a: m.a.iter().map(|v| 1.0 / v).sum::<f64>() / n,
    }
}

/// Window standard deviations of `(c, 1/a)`.
pub fn window_std(m: &MediumRealization) -> (f64, f64) {
    let means = empirical_means(m);
    let n = m.len() as f64;
    let var_c = m.c.iter().map(|v| (v - means.mean_c).powi(2)).sum::<f64>() / n;
    let var_ia =
        m.a.iter()
            .map(|v| (1.0 / v - means.mean_inv_a).powi(2))
            .sum::<f64>()
            / n;
    (var_c.sqrt(), var_ia.sqrt())
}

/// Rescaled medium `a_L(x) = a(x / L)`, `c_L(x) = c(x / L)` on the window `L X`
/// with the same spacing.
pub fn rescale(m: &MediumRealization, scale: f64) -> Result<MediumRealization> {
    if !(scale > 0.0) {
        return Err(KppError::InvalidScale(scale));
    }
    if scale == 1.0 {
        return Ok(m.clone());
    }
    if let Some(e) = m.smoothing() {
        if e * scale < 4.0 * m.h * (1.0 - 1e-12) {
            return Err(KppError::UnresolvedSmoothing {
                eps: e * scale,
                h: m.h,
            });
        }
    }
    let mut t = m.transform;
    t.spatial_scale *= scale;
    m.derive(m.window * scale, m.h, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dimer_a12() -> EnsembleSpec {
        EnsembleSpec::DimerRandom {
            a_plus: 2.0,
            a_minus: 1.0,
            c_plus: 1.0,
            c_minus: 1.0,
            l1: 1.0,
            l2: 1.0,
            lengths: LengthLaw::Fixed,
            eps: None,
        }
    }

    #[test]
    fn constant_kind_is_flat() {
        let m = sample_realization(&EnsembleSpec::constant(1.0, 1.0), 7, 0, 100.0, 0.01).unwrap();
        assert_eq!(m.len(), 10_000);
        assert!(m.a.iter().all(|&v| v == 1.0));
        assert!(m.c.iter().all(|&v| v == 1.0));
        assert!(m.a_prime.iter().all(|&v| v == 0.0));
        let means = empirical_means(&m);
        assert_eq!(
            (means.mean_c, means.mean_a, means.mean_inv_a),
            (1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec =
            EnsembleSpec::dimer_c(1.0, 1.5, 0.5, 1.0, 1.0, LengthLaw::Uniform { delta: 0.5 });
        let m1 = sample_realization(&spec, 42, 3, 50.0, 0.01).unwrap();
        let m2 = sample_realization(&spec, 42, 3, 50.0, 0.01).unwrap();
        assert_eq!(m1.a, m2.a);
        assert_eq!(m1.c, m2.c);
        assert_eq!(m1.a_prime, m2.a_prime);
        assert_eq!(m1.realization_id, m2.realization_id);
        let m3 = sample_realization(&spec, 42, 4, 50.0, 0.01).unwrap();
        assert_ne!(m1.c, m3.c);
    }

    #[test]
    fn fixed_dimer_is_two_periodic() {
        let spec = EnsembleSpec::dimer_c(1.0, 1.5, 0.5, 1.0, 1.0, LengthLaw::Fixed);
        let m = sample_realization(&spec, 1, 0, 20.0, 0.01).unwrap();
        let shift = 200;
        for i in 0..m.len() {
            let j = (i + shift) % m.len();
            assert!((m.c[i] - m.c[j]).abs() < 1e-9, "node {i}");
        }
        // plateau values are reached
        let hi = m.c.iter().cloned().fold(f64::MIN, f64::max);
        let lo = m.c.iter().cloned().fold(f64::MAX, f64::min);
        assert!((hi - 1.5).abs() < 1e-12 && (lo - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dimer_harmonic_mean() {
        let m = sample_realization(&dimer_a12(), 9, 0, 200.0, 0.01).unwrap();
        let means = empirical_means(&m);
        // plateaus 1 and 2 with equal lengths: E[1/a] = 0.75 up to the smoothing layers
        assert!((means.mean_inv_a - 0.75).abs() < 0.01);
        assert!(means.mean_inv_a * means.mean_a >= 1.0);
    }

    #[test]
    fn derivative_is_consistent_with_centered_differences() {
        let m = sample_realization(&dimer_a12(), 5, 1, 20.0, 0.005).unwrap();
        let h = m.spacing();
        let n = m.len();
        let worst = (0..n)
            .map(|i| {
                let fd = (m.a[(i + 1) % n] - m.a[(i + n - 1) % n]) / (2.0 * h);
                (m.a_prime[i] - fd).abs()
            })
            .fold(0.0, f64::max);
        // K h^2 with K = max|a'''| / 6 <= 10 |jump| / eps^3 for the mollified step
        let eps = m.smoothing().unwrap();
        assert!(worst <= 10.0 / eps.powi(3) * h * h, "worst {worst}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = EnsembleSpec::DimerRandom {
            a_plus: 1.0,
            a_minus: 1.0,
            c_plus: 1.0,
            c_minus: 0.5,
            l1: 1.0,
            l2: 1.0,
            lengths: LengthLaw::Fixed,
            eps: Some(0.02),
        };
        assert!(matches!(
            sample_realization(&spec, 0, 0, 10.0, 0.01),
            Err(KppError::UnresolvedSmoothing { .. })
        ));
        let bad = EnsembleSpec::RandomTrig {
            freqs: vec![1.0],
            amp_a: vec![0.1],
            amp_c: vec![0.1],
            a_min: 0.0,
            c_min: 1.0,
        };
        assert!(matches!(
            sample_realization(&bad, 0, 0, 10.0, 0.01),
            Err(KppError::InvalidMedium(_))
        ));
        let m = sample_realization(&EnsembleSpec::constant(1.0, 1.0), 0, 0, 10.0, 0.01).unwrap();
        assert!(matches!(rescale(&m, 0.0), Err(KppError::InvalidScale(_))));
        assert!(matches!(rescale(&m, -2.0), Err(KppError::InvalidScale(_))));
    }

    #[test]
    fn rescale_identity_and_doubling() {
        let spec = EnsembleSpec::dimer_c(1.0, 1.5, 0.5, 1.0, 1.0, LengthLaw::Fixed);
        let m = sample_realization(&spec, 3, 0, 20.0, 0.01).unwrap();
        let same = rescale(&m, 1.0).unwrap();
        assert_eq!(same.c, m.c);
        let m2 = rescale(&m, 2.0).unwrap();
        assert_eq!(m2.len(), 2 * m.len());
        assert!((m2.window() - 40.0).abs() < 1e-12);
        // 4-periodic
        for i in 0..m2.len() {
            let j = (i + 400) % m2.len();
            assert!((m2.c[i] - m2.c[j]).abs() < 1e-9);
        }
        // shared sample points: x = 2 i h in the rescaled medium is x = i h in the parent
        for i in 0..m.len() {
            assert!((m2.c[2 * i] - m.c[i]).abs() < 1e-12);
            assert!((m2.a_prime[2 * i] - m.a_prime[i] / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_trig_derivative_is_analytic() {
        let spec = EnsembleSpec::RandomTrig {
            freqs: vec![1.0, 2.3],
            amp_a: vec![0.3, 0.2],
            amp_c: vec![0.4, 0.1],
            a_min: 0.5,
            c_min: 0.5,
        };
        let m = sample_realization(&spec, 11, 2, 31.4, 0.01).unwrap();
        let n = m.len();
        let h = m.spacing();
        // truncation error max|a'''| h^2 / 6, with max|a'''| <= sum amp k^3 (k snapped near 1 and 2.3)
        let bound = (0.3 * 1.01f64.powi(3) + 0.2 * 2.31f64.powi(3)) / 6.0 * h * h;
        for i in 0..n {
            let fd = (m.a[(i + 1) % n] - m.a[(i + n - 1) % n]) / (2.0 * h);
            assert!((fd - m.a_prime[i]).abs() <= bound * 1.01);
        }
    }
}

//! Orchestration: paired-seed ensembles, the multi-method speed report, the
//! monotonicity suites, the result cache and run manifests.

mod methods;
mod stats;
mod store;
mod suites;

use std::sync::Arc;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{KppError, Result};
use crate::medium::{sample_realization, EnsembleSpec, LengthLaw, MediumRealization};
use crate::operators::KpEngine;
use crate::pde::ReactionSpec;

pub use methods::{
    estimate_speed, speed_methods, EigenMethod, FreidlinMethod, MethodContext, MethodSummary,
    PdeMethod, SeedRow, SpeedMethod, SpeedReport,
};
pub use stats::{
    bound_slack, paired_increase, paired_nondecrease, statistical_slack, Check, Summary, Verdict,
};
pub use store::{
    config_hash, load_run, rerun_config, run_id, write_run, OutputFile, ResultCache, RunManifest,
    TOOL_VERSION,
};
pub use suites::{
    admissible_amplitude, admissible_amplitude_tabulated, run_suite, suites, DiffusionMonotonicity,
    EigenProperties, HomogenizedBound, PointRow, PointSummary, ReactionMonotonicity,
    ScalingMonotonicity, Suite, SuiteReport,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PdeSettings {
    pub dt: f64,
    pub fit_fraction: f64,
    /// Spacing for the simulation when coarser than the medium grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
}

impl Default for PdeSettings {
    fn default() -> Self {
        PdeSettings {
            dt: 0.05,
            fit_fraction: 0.5,
            h: None,
        }
    }
}

/// Everything a run depends on. Unset fields take the documented defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabConfig {
    /// Primary ensemble.
    pub ensemble: EnsembleSpec,
    /// Further ensembles for suites that sweep several (homogenized bound).
    pub extra_ensembles: Vec<EnsembleSpec>,
    pub master_seed: u64,
    pub seeds: usize,
    pub window: f64,
    pub h: f64,
    pub tol: f64,
    pub methods: Vec<String>,
    pub p_bracket: [f64; 2],
    pub reaction: ReactionSpec,
    pub pde: PdeSettings,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ode_step: Option<f64>,
    /// Worker threads; not part of the run identity.
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Fraction of seeds an almost-sure claim must hold on.
    pub gate: f64,
    pub kappas: Vec<f64>,
    pub identity_p: f64,
    pub identity_kappa: f64,
    pub delta_c: f64,
    pub r: f64,
    pub b_grid: Vec<f64>,
    pub l_grid: Vec<f64>,
    pub identity_ls: Vec<f64>,
    pub identity_ps: Vec<f64>,
    pub p_grid: Vec<f64>,
    pub duality_ps: Vec<f64>,
    /// The drift formula is checked at `attainment_factor * p*`.
    pub attainment_factor: f64,
    /// Consult and fill the on-disk result cache.
    pub cache: bool,
}

impl Default for LabConfig {
    fn default() -> Self {
        LabConfig {
            ensemble: EnsembleSpec::dimer_c(
                1.0,
                1.5,
                0.5,
                1.0,
                1.0,
                LengthLaw::Uniform { delta: 0.5 },
            ),
            extra_ensembles: Vec::new(),
            master_seed: 0,
            seeds: 8,
            window: 100.0,
            h: 0.01,
            tol: 1e-8,
            methods: vec!["eigen".into(), "freidlin".into()],
            p_bracket: [0.2, 3.0],
            reaction: ReactionSpec::logistic(),
            pde: PdeSettings::default(),
            ode_step: None,
            threads: None,
            gate: 0.95,
            kappas: vec![1.0, 2.0, 4.0],
            identity_p: 1.0,
            identity_kappa: 3.0,
            delta_c: 0.5,
            r: 1.0,
            b_grid: vec![0.0, 0.2, 0.4],
            l_grid: vec![0.5, 1.0, 2.0, 4.0],
            identity_ls: vec![1.0, 2.0, 4.0],
            identity_ps: vec![0.3, 0.7, 1.2],
            p_grid: (0..9).map(|j| -2.0 + 0.5 * j as f64).collect(),
            duality_ps: vec![1.0, 1.25, 1.5, 1.75, 2.0],
            attainment_factor: 1.5,
            cache: true,
        }
    }
}

impl LabConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: LabConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(KppError::Config(msg));
        if self.seeds == 0 {
            return bad("seed count must be positive".into());
        }
        if !(self.tol > 0.0 && self.h > 0.0 && self.window > 0.0) {
            return bad("tol, h and window must be positive".into());
        }
        if !(self.gate > 0.0 && self.gate <= 1.0) {
            return bad(format!("gate must lie in (0, 1], got {}", self.gate));
        }
        for name in &self.methods {
            speed_methods().get(name)?;
        }
        self.ensemble.validate()?;
        for e in &self.extra_ensembles {
            e.validate()?;
        }
        Ok(())
    }

    pub fn ensembles(&self) -> Vec<&EnsembleSpec> {
        std::iter::once(&self.ensemble)
            .chain(&self.extra_ensembles)
            .collect()
    }
}

/// Shared state of a run: configuration, worker pool and cache.
pub struct Lab {
    pub config: LabConfig,
    pool: rayon::ThreadPool,
    pub cache: Option<Arc<ResultCache>>,
}

impl Lab {
    pub fn new(config: LabConfig, cache: Option<Arc<ResultCache>>) -> Result<Self> {
        config.validate()?;
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = config.threads {
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| KppError::Config(format!("thread pool: {e}")))?;
        let cache = if config.cache { cache } else { None };
        Ok(Lab {
            config,
            pool,
            cache,
        })
    }

    /// Realization `seed` of ensemble `ensemble`; the seed index alone fixes
    /// the stream, so every parameter point sees the same media.
    pub fn realization(&self, ensemble: usize, seed: usize) -> Result<MediumRealization> {
        let spec = self.config.ensembles()[ensemble];
        sample_realization(
            spec,
            self.config.master_seed,
            seed as u64,
            self.config.window,
            self.config.h,
        )
    }

    /// `f(0), ..., f(n - 1)` on the worker pool, in index order.
    pub fn par_map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool
            .install(|| (0..n).into_par_iter().map(f).collect())
    }

    pub fn engine(&self) -> KpEngine {
        KpEngine::default().with_tol(self.config.tol)
    }

    /// Result of `op` on `m`, read from the cache when present.
    pub fn cached<T, F>(
        &self,
        m: &MediumRealization,
        op: &str,
        params: &serde_json::Value,
        f: F,
    ) -> Result<T>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        match &self.cache {
            Some(cache) => cache.get_or_compute(m, op, params, f),
            None => f(),
        }
    }
}

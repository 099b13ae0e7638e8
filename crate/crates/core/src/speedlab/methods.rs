//! The three speed routes behind one interface, and the multi-method report.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::{Lab, PdeSettings, Summary};
use crate::error::Result;
use crate::estimate::SpeedEstimate;
use crate::freidlin::FreidlinSolver;
use crate::medium::{empirical_means, MediumRealization};
use crate::operators::KpEngine;
use crate::pde::{pde_speed, ReactionSpec};
use crate::registry::Registry;

/// Relative width at which the one-dimensional searches stop.
const SEARCH_TOL: f64 = 1e-6;

/// Inputs shared by the speed routes.
#[derive(Clone, Debug, Serialize)]
pub struct MethodContext {
    pub reaction: ReactionSpec,
    pub tol: f64,
    pub p_bracket: [f64; 2],
    pub pde: PdeSettings,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ode_step: Option<f64>,
    /// Expected speed, used to size simulations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hint: Option<f64>,
}

impl MethodContext {
    pub fn of(lab: &Lab) -> MethodContext {
        let c = &lab.config;
        MethodContext {
            reaction: c.reaction,
            tol: c.tol,
            p_bracket: c.p_bracket,
            pde: c.pde.clone(),
            ode_step: c.ode_step,
            hint: None,
        }
    }

    pub fn with_reaction(mut self, reaction: ReactionSpec) -> Self {
        self.reaction = reaction;
        self
    }
}

pub trait SpeedMethod: Send + Sync {
    fn name(&self) -> &'static str;

    fn estimate(&self, m: &MediumRealization, ctx: &MethodContext) -> Result<SpeedEstimate>;
}

/// `min_p k_p / p` on the linearized medium.
pub struct EigenMethod;

/// `min_gamma gamma / mu(gamma)` on the linearized medium.
pub struct FreidlinMethod;

/// Slope of the simulated front.
pub struct PdeMethod;

impl SpeedMethod for EigenMethod {
    fn name(&self) -> &'static str {
        "eigen"
    }

    fn estimate(&self, m: &MediumRealization, ctx: &MethodContext) -> Result<SpeedEstimate> {
        let lin = ctx.reaction.linearized(m)?;
        KpEngine::default().with_tol(ctx.tol).speed(
            &lin,
            ctx.p_bracket[0],
            ctx.p_bracket[1],
            SEARCH_TOL,
        )
    }
}

impl SpeedMethod for FreidlinMethod {
    fn name(&self) -> &'static str {
        "freidlin"
    }

    fn estimate(&self, m: &MediumRealization, ctx: &MethodContext) -> Result<SpeedEstimate> {
        let lin = ctx.reaction.linearized(m)?;
        let step = ctx.ode_step.unwrap_or(m.spacing().min(0.01));
        FreidlinSolver::new(step, KpEngine::default().with_tol(ctx.tol)).speed(&lin, SEARCH_TOL)
    }
}

impl SpeedMethod for PdeMethod {
    fn name(&self) -> &'static str {
        "pde"
    }

    fn estimate(&self, m: &MediumRealization, ctx: &MethodContext) -> Result<SpeedEstimate> {
        let grid = match ctx.pde.h {
            Some(h) if h > m.spacing() => m.resample(h)?,
            _ => m.clone(),
        };
        let guess = match ctx.hint {
            Some(w) => w,
            None => {
                let lin = ctx.reaction.linearized(m)?;
                empirical_means(&lin).homogenized_speed()
            }
        };
        pde_speed(
            &grid,
            &ctx.reaction,
            guess,
            ctx.pde.dt,
            ctx.pde.fit_fraction,
        )
    }
}

pub fn speed_methods() -> &'static Registry<dyn SpeedMethod> {
    static R: OnceLock<Registry<dyn SpeedMethod>> = OnceLock::new();
    R.get_or_init(|| {
        let mut r: Registry<dyn SpeedMethod> = Registry::new("speed method", "eigen");
        r.register("eigen", Arc::new(EigenMethod));
        r.register("freidlin", Arc::new(FreidlinMethod));
        r.register("pde", Arc::new(PdeMethod));
        r
    })
}

impl Lab {
    /// Speed of `m` by the named route, through the cache.
    pub fn speed(
        &self,
        m: &MediumRealization,
        method: &str,
        ctx: &MethodContext,
    ) -> Result<SpeedEstimate> {
        let route = speed_methods().get(method)?;
        let params = serde_json::to_value(ctx)?;
        self.cached(m, &format!("speed/{method}"), &params, || {
            route.estimate(m, ctx)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub summary: Summary,
    /// Per seed, absent where the route failed.
    pub values: Vec<Option<f64>>,
    pub failures: BTreeMap<usize, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: usize,
    pub realization: String,
    pub estimates: BTreeMap<String, SpeedEstimate>,
    /// Largest `|w_i - w_j| / min(w_i, w_j)` over the routes on this seed.
    pub max_relative_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedReport {
    pub methods: BTreeMap<String, MethodSummary>,
    pub seeds: Vec<SeedRow>,
    /// Largest difference between the method means.
    pub max_pairwise_gap: f64,
    /// Largest per-seed relative gap.
    pub max_relative_gap: f64,
}

impl SpeedReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,realization,method,value,err,optimizer\n");
        for row in &self.seeds {
            for (name, e) in &row.estimates {
                let opt = e.optimizer.map(|v| v.to_string()).unwrap_or_default();
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    row.seed, row.realization, name, e.value, e.err, opt
                ));
            }
        }
        s
    }
}

/// Run every configured route on the paired realizations of the primary ensemble.
/// Failures are recorded per seed and method rather than aborting the report.
pub fn estimate_speed(lab: &Lab) -> Result<SpeedReport> {
    let cfg = &lab.config;
    let ctx = MethodContext::of(lab);
    let names = cfg.methods.clone();
    let rows: Vec<Result<(SeedRow, BTreeMap<String, String>)>> = lab.par_map(cfg.seeds, |seed| {
        let m = lab.realization(0, seed)?;
        let mut estimates = BTreeMap::new();
        let mut failures = BTreeMap::new();
        let mut hint = None;
        for name in &names {
            let mut c = ctx.clone();
            c.hint = hint;
            match lab.speed(&m, name, &c) {
                Ok(e) => {
                    if name != "pde" {
                        hint = Some(e.value);
                    }
                    estimates.insert(name.clone(), e);
                }
                Err(err) => {
                    failures.insert(name.clone(), err.to_string());
                }
            }
        }
        let values: Vec<f64> = estimates.values().map(|e| e.value).collect();
        let mut gap = 0.0f64;
        for i in 0..values.len() {
            for j in 0..i {
                gap = gap.max((values[i] - values[j]).abs() / values[i].min(values[j]));
            }
        }
        let row = SeedRow {
            seed,
            realization: format!("{:016x}", m.realization_id),
            estimates,
            max_relative_gap: gap,
        };
        Ok((row, failures))
    });
    let mut seeds = Vec::with_capacity(rows.len());
    let mut methods: BTreeMap<String, MethodSummary> = BTreeMap::new();
    for name in &names {
        methods.insert(
            name.clone(),
            MethodSummary {
                summary: Summary::of(&[]),
                values: Vec::new(),
                failures: BTreeMap::new(),
            },
        );
    }
    for r in rows {
        let (row, failures) = r?;
        for name in &names {
            let ms = methods.get_mut(name).expect("inserted above");
            ms.values.push(row.estimates.get(name).map(|e| e.value));
            if let Some(msg) = failures.get(name) {
                ms.failures.insert(row.seed, msg.clone());
            }
        }
        seeds.push(row);
    }
    for ms in methods.values_mut() {
        let ok: Vec<f64> = ms.values.iter().flatten().cloned().collect();
        ms.summary = Summary::of(&ok);
    }
    let means: Vec<f64> = methods
        .values()
        .map(|m| m.summary.mean)
        .filter(|v| v.is_finite())
        .collect();
    let mut max_pairwise_gap = 0.0f64;
    for i in 0..means.len() {
        for j in 0..i {
            max_pairwise_gap = max_pairwise_gap.max((means[i] - means[j]).abs());
        }
    }
    let max_relative_gap = seeds.iter().map(|r| r.max_relative_gap).fold(0.0, f64::max);
    Ok(SpeedReport {
        methods,
        seeds,
        max_pairwise_gap,
        max_relative_gap,
    })
}

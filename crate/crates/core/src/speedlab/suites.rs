//! The comparison and monotonicity suites.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::stats::paired_nondecrease;
use super::{
    bound_slack, config_hash, paired_increase, statistical_slack, Check, Lab, LabConfig,
    MethodContext, Summary, Verdict,
};
use crate::error::{KppError, Result};
use crate::freidlin::FreidlinSolver;
use crate::medium::{empirical_means, window_std, MediumRealization};
use crate::pde::{ReactionKind, ReactionSpec};
use crate::registry::Registry;
use crate::variational::{ThetaField, VariationalSolver};

/// One measured quantity at one parameter value on one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub ensemble: usize,
    pub seed: usize,
    pub realization: String,
    pub quantity: String,
    pub param: f64,
    pub value: f64,
    pub err: f64,
}

/// Seed statistics of one quantity at one parameter value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub ensemble: usize,
    pub quantity: String,
    pub param: f64,
    pub stats: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub grid: serde_json::Value,
    pub rows: Vec<PointRow>,
    pub summaries: Vec<PointSummary>,
    pub checks: Vec<Check>,
    /// Worst verdict over the gating checks.
    pub verdict: Verdict,
    /// Named `(x, y)` curves exported as `.dat` files.
    pub curves: BTreeMap<String, Vec<[f64; 2]>>,
    pub config_hash: String,
}

impl SuiteReport {
    fn finish(
        suite: &str,
        cfg: &LabConfig,
        grid: serde_json::Value,
        rows: Vec<PointRow>,
        checks: Vec<Check>,
        curves: BTreeMap<String, Vec<[f64; 2]>>,
    ) -> Result<SuiteReport> {
        let mut keys: Vec<(usize, String, f64)> = Vec::new();
        for r in &rows {
            if !keys.iter().any(|k| {
                k.0 == r.ensemble && k.1 == r.quantity && k.2.to_bits() == r.param.to_bits()
            }) {
                keys.push((r.ensemble, r.quantity.clone(), r.param));
            }
        }
        let summaries = keys
            .into_iter()
            .map(|(ensemble, quantity, param)| {
                let values: Vec<f64> = rows
                    .iter()
                    .filter(|r| {
                        r.ensemble == ensemble
                            && r.quantity == quantity
                            && r.param.to_bits() == param.to_bits()
                    })
                    .map(|r| r.value)
                    .collect();
                PointSummary {
                    ensemble,
                    quantity,
                    param,
                    stats: Summary::of(&values),
                }
            })
            .collect();
        let verdict = checks
            .iter()
            .filter(|c| c.gating)
            .fold(Verdict::Verified, |acc, c| {
                if c.verdict.severity() > acc.severity() {
                    c.verdict.clone()
                } else {
                    acc
                }
            });
        Ok(SuiteReport {
            suite: suite.to_string(),
            grid,
            rows,
            summaries,
            checks,
            verdict,
            curves,
            config_hash: config_hash(&format!("suite {suite}"), cfg)?,
        })
    }

    pub fn points_csv(&self) -> String {
        let mut s = String::from("ensemble,seed,realization,quantity,param,value,err\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.ensemble, r.seed, r.realization, r.quantity, r.param, r.value, r.err
            ));
        }
        s
    }

    pub fn checks_csv(&self) -> String {
        let mut s = String::from("ensemble,claim,verdict,margin,tolerance,gating\n");
        for c in &self.checks {
            s.push_str(&format!(
                "{},\"{}\",{},{},{},{}\n",
                c.ensemble,
                c.claim,
                c.verdict.label(),
                c.margin,
                c.tolerance,
                c.gating
            ));
        }
        s
    }

    /// Every payload of the run, by relative path.
    pub fn files(&self) -> Result<Vec<(String, Vec<u8>)>> {
        let mut files = vec![
            ("report.json".to_string(), serde_json::to_vec_pretty(self)?),
            ("points.csv".to_string(), self.points_csv().into_bytes()),
            ("checks.csv".to_string(), self.checks_csv().into_bytes()),
        ];
        for (name, pts) in &self.curves {
            let mut s = format!("# {name}\n");
            for [x, y] in pts {
                s.push_str(&format!("{x} {y}\n"));
            }
            files.push((format!("{name}.dat"), s.into_bytes()));
        }
        Ok(files)
    }
}

pub trait Suite: Send + Sync {
    fn name(&self) -> &'static str;

    /// The parameter grid the suite sweeps, as recorded in the report.
    fn grid(&self, cfg: &LabConfig) -> serde_json::Value;

    fn run(&self, lab: &Lab) -> Result<SuiteReport>;
}

/// `w* >= 2 sqrt(<c> / <1/a>)`, strict for constant `a` and nonconstant `c`.
pub struct HomogenizedBound;
/// `kappa -> w*(kappa a, c)` increasing for constant `c`, with the exact identity
/// `k_p(kappa a, c) = kappa k_p(a, 0) + c`.
pub struct DiffusionMonotonicity;
/// Speed ordering under `c <= c + Delta`, and `B -> w*(f + B g)` nondecreasing.
pub struct ReactionMonotonicity;
/// `L -> w*(a_L, c_L)` nondecreasing, with the exact rescaling identity.
pub struct ScalingMonotonicity;
/// Parity, convexity and lower bounds of `p -> k_p`, duality with `mu`, and
/// attainment of the drift formula.
pub struct EigenProperties;

pub fn suites() -> &'static Registry<dyn Suite> {
    static R: OnceLock<Registry<dyn Suite>> = OnceLock::new();
    R.get_or_init(|| {
        let mut r: Registry<dyn Suite> = Registry::new("suite", "eigen_properties");
        r.register("homogenized_bound", Arc::new(HomogenizedBound));
        r.register("diffusion_monotonicity", Arc::new(DiffusionMonotonicity));
        r.register("reaction_monotonicity", Arc::new(ReactionMonotonicity));
        r.register("scaling_monotonicity", Arc::new(ScalingMonotonicity));
        r.register("eigen_properties", Arc::new(EigenProperties));
        r
    })
}

pub fn run_suite(name: &str, lab: &Lab) -> Result<SuiteReport> {
    suites().get(name)?.run(lab)
}

fn hex_id(m: &MediumRealization) -> String {
    format!("{:016x}", m.realization_id)
}

fn row(
    ensemble: usize,
    seed: usize,
    m: &MediumRealization,
    quantity: &str,
    param: f64,
    value: f64,
    err: f64,
) -> PointRow {
    PointRow {
        ensemble,
        seed,
        realization: hex_id(m),
        quantity: quantity.to_string(),
        param,
        value,
        err,
    }
}

/// Run `f` on every seed of `ensemble` and keep seed order.
fn per_seed<T, F>(lab: &Lab, ensemble: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &MediumRealization) -> Result<T> + Sync + Send,
{
    lab.par_map(lab.config.seeds, |seed| {
        let m = lab.realization(ensemble, seed)?;
        f(seed, &m)
    })
    .into_iter()
    .collect()
}

fn min_of(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(f64::INFINITY, f64::min)
}

fn max_of(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(f64::NEG_INFINITY, f64::max)
}

impl Suite for HomogenizedBound {
    fn name(&self) -> &'static str {
        "homogenized_bound"
    }

    fn grid(&self, cfg: &LabConfig) -> serde_json::Value {
        serde_json::json!({ "ensembles": cfg.ensembles(), "seeds": cfg.seeds })
    }

    fn run(&self, lab: &Lab) -> Result<SuiteReport> {
        let cfg = &lab.config;
        let ctx = MethodContext::of(lab);
        let mut rows = Vec::new();
        let mut checks = Vec::new();
        for (e, spec) in cfg.ensembles().into_iter().enumerate() {
            // (speed, its error bar, bound, slack)
            let res = per_seed(lab, e, |seed, m| {
                let w = lab.speed(m, "eigen", &ctx)?;
                let (bound, slack) = bound_slack(m);
                let numeric = w.err + 5.0 * cfg.tol;
                Ok((
                    (w.value, numeric, bound, slack),
                    vec![
                        row(e, seed, m, "w_star", 0.0, w.value, w.err),
                        row(e, seed, m, "bound", 0.0, bound, 0.0),
                        row(e, seed, m, "slack", 0.0, slack, 0.0),
                        row(e, seed, m, "margin", 0.0, w.value - bound, numeric),
                    ],
                ))
            })?;
            let mut pts = Vec::new();
            for (p, r) in res {
                pts.push(p);
                rows.extend(r);
            }
            let lowest = min_of(pts.iter().map(|(w, n, b, s)| w - b + s + n));
            let widest = max_of(pts.iter().map(|(_, n, _, s)| s + n));
            checks.push(
                Check::at_least(
                    "w* >= 2 sqrt(<c> / <1/a>) - slack on every seed",
                    e,
                    lowest,
                    0.0,
                )
                .with_tolerance(widest),
            );
            if spec.has_constant_diffusion() && !spec.has_constant_reaction() {
                let passes = pts.iter().filter(|(w, _, b, s)| w - b > 3.0 * s).count();
                let contradictions = pts.iter().filter(|(w, n, b, _)| w - b < -n).count();
                checks.push(Check::gated(
                    "w* - 2 sqrt(<c> / <1/a>) > 3 slack (strict bound)",
                    e,
                    passes,
                    contradictions,
                    pts.len(),
                    cfg.gate,
                ));
            }
        }
        SuiteReport::finish(
            self.name(),
            cfg,
            self.grid(cfg),
            rows,
            checks,
            BTreeMap::new(),
        )
    }
}

/// Consecutive paired differences of `values[seed][j]` with summed error bars.
fn consecutive(values: &[Vec<(f64, f64)>], j: usize) -> (Vec<f64>, Vec<f64>) {
    values
        .iter()
        .map(|v| (v[j + 1].0 - v[j].0, v[j + 1].1 + v[j].1))
        .unzip()
}

impl Suite for DiffusionMonotonicity {
    fn name(&self) -> &'static str {
        "diffusion_monotonicity"
    }

    fn grid(&self, cfg: &LabConfig) -> serde_json::Value {
        serde_json::json!({ "kappas": cfg.kappas, "identity_p": cfg.identity_p, "identity_kappa": cfg.identity_kappa })
    }

    fn run(&self, lab: &Lab) -> Result<SuiteReport> {
        let cfg = &lab.config;
        if !cfg.ensemble.has_constant_reaction() {
            return Err(KppError::Config(
                "diffusion monotonicity needs a constant growth rate; it fails in general when c varies".into(),
            ));
        }
        let ctx = MethodContext::of(lab);
        let engine = lab.engine();
        let (p, kappa) = (cfg.identity_p, cfg.identity_kappa);
        let res = per_seed(lab, 0, |seed, m| {
            let c0 = m.c[0];
            let lhs = engine.kp(&m.scale_diffusion(kappa)?, p)?.lambda;
            let rhs = kappa * engine.kp(&m.with_constant_reaction(0.0)?, p)?.lambda + c0;
            let mut rows = vec![row(0, seed, m, "identity_deviation", kappa, lhs - rhs, 0.0)];
            let mut speeds = Vec::new();
            for &k in &cfg.kappas {
                let w = lab.speed(&m.scale_diffusion(k)?, "eigen", &ctx)?;
                rows.push(row(0, seed, m, "w_star", k, w.value, w.err));
                speeds.push((w.value, w.err));
            }
            Ok((lhs - rhs, speeds, rows))
        })?;
        let mut rows = Vec::new();
        let mut devs = Vec::new();
        let mut speeds = Vec::new();
        for (d, s, r) in res {
            devs.push(d);
            speeds.push(s);
            rows.extend(r);
        }
        let mut checks = vec![Check::within(
            "|k_p(kappa a, c) - kappa k_p(a, 0) - c| <= 5 tol",
            0,
            max_of(devs.iter().map(|d| d.abs())),
            5.0 * cfg.tol,
        )];
        for j in 0..cfg.kappas.len().saturating_sub(1) {
            let (d, err) = consecutive(&speeds, j);
            let claim = format!("w*({} a) > w*({} a)", cfg.kappas[j + 1], cfg.kappas[j]);
            checks.push(paired_increase(&claim, 0, &d, &err));
        }
        if let crate::medium::EnsembleSpec::Constant { a0, c0 } = cfg.ensemble {
            let dev = max_of(speeds.iter().flat_map(|s| {
                s.iter()
                    .zip(&cfg.kappas)
                    .map(move |((w, _), k)| (w - 2.0 * (k * a0 * c0).sqrt()).abs())
            }));
            checks.push(Check::within(
                "w*(kappa a0, c0) = 2 sqrt(kappa a0 c0)",
                0,
                dev,
                1e-6,
            ));
        }
        SuiteReport::finish(
            self.name(),
            cfg,
            self.grid(cfg),
            rows,
            checks,
            BTreeMap::new(),
        )
    }
}

/// `B*` for `f = r s (1 - s)` and `g = c(x) s (1 - s)` with `c` read from `m`:
/// unbounded when `c >= 0`, else `r / |min c|`. `s_grid_size` is unused for
/// these kinds, whose positivity condition does not depend on `s`.
pub fn admissible_amplitude(f: &ReactionSpec, m: &MediumRealization, _s_grid_size: usize) -> f64 {
    let r = match f.kind {
        ReactionKind::ShiftedCombo | ReactionKind::LogisticC => f.r,
    };
    let min_c = min_of(m.c.iter().cloned());
    if min_c >= 0.0 {
        f64::INFINITY
    } else {
        r / min_c.abs()
    }
}

/// `B* = sup { B >= 0 : f(s) + B g(i, s) > 0 }` over nodes `i < nx` and the
/// interior points of an `s_grid_size` grid on `(0, 1)`, by bisection on
/// `[0, b_max]`. Returns infinity when `b_max` is admissible.
pub fn admissible_amplitude_tabulated(
    f: &dyn Fn(f64) -> f64,
    g: &dyn Fn(usize, f64) -> f64,
    nx: usize,
    s_grid_size: usize,
    b_max: f64,
) -> f64 {
    let ok = |b: f64| {
        (1..s_grid_size).all(|j| {
            let s = j as f64 / s_grid_size as f64;
            (0..nx).all(|i| f(s) + b * g(i, s) > 0.0)
        })
    };
    if ok(b_max) {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (0.0, b_max);
    while hi - lo > 1e-12 * b_max.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl Suite for ReactionMonotonicity {
    fn name(&self) -> &'static str {
        "reaction_monotonicity"
    }

    fn grid(&self, cfg: &LabConfig) -> serde_json::Value {
        serde_json::json!({ "delta_c": cfg.delta_c, "r": cfg.r, "b_grid": cfg.b_grid })
    }

    fn run(&self, lab: &Lab) -> Result<SuiteReport> {
        let cfg = &lab.config;
        if cfg.delta_c < 0.0 {
            return Err(KppError::Config(format!(
                "Delta must be nonnegative, got {}",
                cfg.delta_c
            )));
        }
        let ctx = MethodContext::of(lab);
        let part2 = cfg.ensemble.has_constant_diffusion();
        let b_top = max_of(cfg.b_grid.iter().cloned());
        let res = per_seed(lab, 0, |seed, m| {
            let base = lab.speed(m, "eigen", &ctx)?;
            let up = lab.speed(&m.affine_reaction(1.0, cfg.delta_c)?, "eigen", &ctx)?;
            let mut rows = vec![
                row(0, seed, m, "w_star_c", 0.0, base.value, base.err),
                row(
                    0,
                    seed,
                    m,
                    "w_star_c_plus_delta",
                    cfg.delta_c,
                    up.value,
                    up.err,
                ),
            ];
            let mut combo = Vec::new();
            if part2 {
                let g = m.demeaned_reaction()?;
                let b_star = admissible_amplitude(&ReactionSpec::shifted_combo(cfg.r, 1.0), &g, 0);
                if b_top >= b_star {
                    return Err(KppError::Config(format!(
                        "B = {b_top} is not below the admissible amplitude {b_star}"
                    )));
                }
                rows.push(row(0, seed, m, "b_star", 0.0, b_star, 0.0));
                for &b in &cfg.b_grid {
                    let c = ctx
                        .clone()
                        .with_reaction(ReactionSpec::shifted_combo(cfg.r, b));
                    let w = lab.speed(&g, "eigen", &c)?;
                    rows.push(row(0, seed, m, "w_star_b", b, w.value, w.err));
                    combo.push((w.value, w.err));
                }
            }
            Ok((
                (
                    up.value - base.value,
                    up.err + base.err,
                    base.value,
                    up.value,
                ),
                combo,
                rows,
            ))
        })?;
        let mut rows = Vec::new();
        let mut pairs = Vec::new();
        let mut combos = Vec::new();
        for (p, c, r) in res {
            pairs.push(p);
            combos.push(c);
            rows.extend(r);
        }
        let passes = pairs.iter().filter(|(d, e, _, _)| d > e).count();
        let contradictions = pairs.iter().filter(|(d, e, _, _)| *d < -e).count();
        let mut checks = vec![Check::gated(
            "w*(a, c + Delta) > w*(a, c) on every paired seed",
            0,
            passes,
            contradictions,
            pairs.len(),
            1.0,
        )];
        if let crate::medium::EnsembleSpec::Constant { a0, c0 } = cfg.ensemble {
            let dev = max_of(pairs.iter().map(|(_, _, lo, hi)| {
                (lo - 2.0 * (a0 * c0).sqrt())
                    .abs()
                    .max((hi - 2.0 * (a0 * (c0 + cfg.delta_c)).sqrt()).abs())
            }));
            checks.push(Check::within(
                "w* = 2 sqrt(a0 c) for constants",
                0,
                dev,
                1e-6,
            ));
        }
        if part2 {
            if let Some(j0) = cfg.b_grid.iter().position(|&b| b == 0.0) {
                let a0 = lab.realization(0, 0)?.a[0];
                let dev = max_of(
                    combos
                        .iter()
                        .map(|c| (c[j0].0 - 2.0 * (a0 * cfg.r).sqrt()).abs()),
                );
                checks.push(Check::within("w*(f + 0 g) = 2 sqrt(a r)", 0, dev, 1e-6));
            }
            for j in 0..cfg.b_grid.len().saturating_sub(1) {
                let (d, err) = consecutive(&combos, j);
                let (b0, b1) = (cfg.b_grid[j], cfg.b_grid[j + 1]);
                checks.push(paired_nondecrease(
                    &format!("w*(f + {b1} g) >= w*(f + {b0} g)"),
                    0,
                    &d,
                    &err,
                ));
                if !cfg.ensemble.has_constant_reaction() {
                    checks.push(paired_increase(
                        &format!("w*(f + {b1} g) > w*(f + {b0} g) (strict)"),
                        0,
                        &d,
                        &err,
                    ));
                }
            }
        } else {
            checks.push(
                Check::strict("B -> w*(f + B g) nondecreasing", 0, 0.0, 0.0)
                    .with_detail("needs constant diffusion; not evaluated".into())
                    .informational(),
            );
        }
        SuiteReport::finish(
            self.name(),
            cfg,
            self.grid(cfg),
            rows,
            checks,
            BTreeMap::new(),
        )
    }
}

impl Suite for ScalingMonotonicity {
    fn name(&self) -> &'static str {
        "scaling_monotonicity"
    }

    fn grid(&self, cfg: &LabConfig) -> serde_json::Value {
        serde_json::json!({ "l_grid": cfg.l_grid, "identity_ls": cfg.identity_ls, "identity_ps": cfg.identity_ps })
    }

    fn run(&self, lab: &Lab) -> Result<SuiteReport> {
        let cfg = &lab.config;
        let ctx = MethodContext::of(lab);
        let engine = lab.engine();
        let res = per_seed(lab, 0, |seed, m| {
            let mut rows = Vec::new();
            let mut worst = 0.0f64;
            for &l in &cfg.identity_ls {
                let scaled = m.rescale(l)?;
                let parent = m.resample(m.spacing() / l)?.affine_reaction(l * l, 0.0)?;
                for &p in &cfg.identity_ps {
                    let lhs = engine.kp(&scaled, p)?.lambda;
                    let rhs = engine.kp(&parent, p * l)?.lambda / (l * l);
                    worst = worst.max((lhs - rhs).abs());
                }
                rows.push(row(0, seed, m, "identity_deviation", l, worst, 0.0));
            }
            let mut speeds = Vec::new();
            for &l in &cfg.l_grid {
                let w = lab.speed(&m.rescale(l)?, "eigen", &ctx)?;
                rows.push(row(0, seed, m, "w_star", l, w.value, w.err));
                speeds.push((w.value, w.err));
            }
            Ok((worst, speeds, rows))
        })?;
        let mut rows = Vec::new();
        let mut devs = Vec::new();
        let mut speeds = Vec::new();
        for (d, s, r) in res {
            devs.push(d);
            speeds.push(s);
            rows.extend(r);
        }
        let mut checks = vec![Check::within(
            "|k_p(a_L, c_L) - k_{pL}(a, L^2 c) / L^2| <= 5 tol",
            0,
            max_of(devs.into_iter()),
            5.0 * cfg.tol,
        )];
        let strict_gates =
            cfg.ensemble.has_constant_diffusion() && !cfg.ensemble.has_constant_reaction();
        for j in 0..cfg.l_grid.len().saturating_sub(1) {
            let (d, err) = consecutive(&speeds, j);
            let (l0, l1) = (cfg.l_grid[j], cfg.l_grid[j + 1]);
            checks.push(paired_nondecrease(
                &format!("w*(L = {l1}) >= w*(L = {l0})"),
                0,
                &d,
                &err,
            ));
            let strict = paired_increase(
                &format!("w*(L = {l1}) > w*(L = {l0}) (strict)"),
                0,
                &d,
                &err,
            );
            checks.push(if strict_gates {
                strict
            } else {
                strict.informational()
            });
        }
        SuiteReport::finish(
            self.name(),
            cfg,
            self.grid(cfg),
            rows,
            checks,
            BTreeMap::new(),
        )
    }
}

/// Per-seed output of the eigen battery.
struct Battery {
    parity: f64,
    convexity: f64,
    above_k0: f64,
    k0_margin: f64,
    duality: Option<f64>,
    attainment: f64,
    closed_form: f64,
    k_p: f64,
    upper_bound: f64,
    kp_curve: Vec<[f64; 2]>,
    mu_curve: Vec<[f64; 2]>,
    rows: Vec<PointRow>,
}

impl EigenProperties {
    fn battery(lab: &Lab, seed: usize, m: &MediumRealization) -> Result<Battery> {
        let cfg = &lab.config;
        let engine = lab.engine();
        let mut rows = Vec::new();
        let mut grid = cfg.p_grid.clone();
        grid.sort_by(f64::total_cmp);
        let ks: Vec<f64> = grid
            .iter()
            .map(|&p| Ok(engine.kp(m, p)?.lambda))
            .collect::<Result<_>>()?;
        for (p, k) in grid.iter().zip(&ks) {
            rows.push(row(0, seed, m, "k_p", *p, *k, cfg.tol));
        }
        let k0 = engine.kp(m, 0.0)?.lambda;
        let mut parity = 0.0f64;
        for (i, &p) in grid.iter().enumerate() {
            if let Some(j) = grid.iter().position(|&q| q == -p) {
                parity = parity.max((ks[i] - ks[j]).abs());
            }
        }
        let mut convexity = f64::INFINITY;
        if grid.len() >= 3 {
            let mean_step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
            for j in 1..grid.len() - 1 {
                let right = (ks[j + 1] - ks[j]) / (grid[j + 1] - grid[j]);
                let left = (ks[j] - ks[j - 1]) / (grid[j] - grid[j - 1]);
                convexity = convexity.min(mean_step * (right - left));
            }
        }
        let above_k0 = min_of(ks.iter().map(|k| k - k0));
        let mean_c = empirical_means(m).mean_c;
        let slack_c = statistical_slack(m, window_std(m).0);
        let k0_margin = k0 - mean_c + slack_c;
        rows.push(row(
            0,
            seed,
            m,
            "k0_minus_mean_c",
            0.0,
            k0 - mean_c,
            slack_c,
        ));

        let step = cfg.ode_step.unwrap_or(m.spacing().min(0.01));
        let freidlin = FreidlinSolver::new(step, engine.clone());
        let (floor, _, _) = freidlin.gamma_floor(m)?;
        let mut duality: Option<f64> = None;
        let mut mu_curve = Vec::new();
        for &p in &cfg.duality_ps {
            let k = engine.kp(m, p)?.lambda;
            if k <= floor {
                continue;
            }
            let mu = freidlin.mu_curve(m, &[k])?.mu[0];
            duality = Some(duality.unwrap_or(0.0).max((mu - p).abs()));
            rows.push(row(0, seed, m, "duality_error", p, mu - p, 0.0));
            mu_curve.push([k, mu]);
        }

        let ctx = MethodContext::of(lab);
        let w = lab.speed(m, "eigen", &ctx)?;
        let p = cfg.attainment_factor * w.optimizer.unwrap_or(1.0);
        let var = VariationalSolver::default();
        let result = var.minimize(m, p, &ThetaField::zeros(m.len()), 1e-9, 1000)?;
        let attainment = result.gap_vs_direct / result.k_p;
        let star = var.theta_closed_form(m, p)?;
        let closed_form = var.k0_with_theta(m, p, &star)? - result.k_p;
        let upper_bound = result.trial_min - result.k_p;
        rows.push(row(
            0,
            seed,
            m,
            "attainment_gap",
            p,
            attainment,
            result.grad_norm,
        ));
        rows.push(row(
            0,
            seed,
            m,
            "closed_form_gap",
            p,
            closed_form / result.k_p,
            0.0,
        ));
        let kp_curve = grid.iter().zip(&ks).map(|(p, k)| [*p, *k]).collect();
        Ok(Battery {
            parity,
            convexity,
            above_k0,
            k0_margin,
            duality,
            attainment,
            closed_form,
            k_p: result.k_p,
            upper_bound,
            kp_curve,
            mu_curve,
            rows,
        })
    }
}

impl Suite for EigenProperties {
    fn name(&self) -> &'static str {
        "eigen_properties"
    }

    fn grid(&self, cfg: &LabConfig) -> serde_json::Value {
        serde_json::json!({
            "p_grid": cfg.p_grid,
            "duality_ps": cfg.duality_ps,
            "attainment_factor": cfg.attainment_factor,
        })
    }

    fn run(&self, lab: &Lab) -> Result<SuiteReport> {
        let cfg = &lab.config;
        let tol = cfg.tol;
        let res = per_seed(lab, 0, |seed, m| EigenProperties::battery(lab, seed, m))?;
        let mut checks = vec![
            Check::within(
                "|k_p - k_{-p}| <= 5 tol",
                0,
                max_of(res.iter().map(|b| b.parity)),
                5.0 * tol,
            ),
            Check::at_least(
                "second differences of p -> k_p >= -1e-6",
                0,
                min_of(res.iter().map(|b| b.convexity)),
                1e-6,
            ),
            Check::at_least(
                "k_p >= k_0",
                0,
                min_of(res.iter().map(|b| b.above_k0)),
                5.0 * tol,
            ),
            Check::at_least(
                "k_0 >= <c> - slack",
                0,
                min_of(res.iter().map(|b| b.k0_margin)),
                5.0 * tol,
            ),
        ];
        let dual: Vec<f64> = res.iter().filter_map(|b| b.duality).collect();
        if dual.len() == res.len() {
            checks.push(Check::within(
                "|mu(k_p) - p| <= 2e-3",
                0,
                max_of(dual.into_iter()),
                2e-3,
            ));
        } else {
            checks.push(
                Check::strict("|mu(k_p) - p| <= 2e-3", 0, 0.0, 0.0)
                    .with_detail("no p with k_p above the admissible gamma on some seed".into())
                    .informational(),
            );
        }
        let worst_low = min_of(res.iter().map(|b| b.attainment));
        let worst_high = max_of(res.iter().map(|b| b.attainment));
        checks.push(Check::at_least(
            "(inf_theta k_0 - k_p) / k_p >= -1e-6",
            0,
            worst_low,
            1e-6,
        ));
        checks.push(Check::at_least(
            "(inf_theta k_0 - k_p) / k_p <= 1e-3",
            0,
            1e-3 - worst_high,
            0.0,
        ));
        checks.push(Check::at_least(
            "k_0(theta*) - k_p >= -5 tol",
            0,
            min_of(res.iter().map(|b| b.closed_form)),
            5.0 * tol,
        ));
        checks.push(Check::at_least(
            "k_0(theta*) - k_p <= 1e-3 k_p",
            0,
            1e-3 - max_of(res.iter().map(|b| b.closed_form / b.k_p)),
            0.0,
        ));
        checks.push(Check::at_least(
            "k_0(theta) >= k_p for every theta tried",
            0,
            min_of(res.iter().map(|b| b.upper_bound)),
            5.0 * tol,
        ));
        let mut curves = BTreeMap::new();
        let mut rows = Vec::new();
        for (seed, b) in res.into_iter().enumerate() {
            curves.insert(format!("kp_seed{seed}"), b.kp_curve);
            if !b.mu_curve.is_empty() {
                curves.insert(format!("mu_seed{seed}"), b.mu_curve);
            }
            rows.extend(b.rows);
        }
        SuiteReport::finish(self.name(), cfg, self.grid(cfg), rows, checks, curves)
    }
}

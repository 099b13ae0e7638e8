//! Acceptance oracles. Each test prints one PASS/FAIL line with its measured
//! quantities and wall time. Tests run one at a time so the timings are honest.

use std::io::Write;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use kpp_core::freidlin::FreidlinSolver;
use kpp_core::medium::{sample_realization, EnsembleSpec, LengthLaw, MediumRealization};
use kpp_core::operators::KpEngine;
use kpp_core::pde::{dichotomy_check, ReactionSpec};
use kpp_core::speedlab::{
    bound_slack, estimate_speed, load_run, rerun_config, run_suite, write_run, Check, Lab,
    LabConfig, PdeSettings, ResultCache, SuiteReport, Verdict,
};
use kpp_core::variational::{ThetaField, VariationalSolver};
use rand::{Rng, SeedableRng};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Print the outcome line, then fail the test if the claim or the time budget is missed.
fn verdict(name: &str, ok: bool, detail: &str, started: Instant, budget: Duration) {
    let elapsed = started.elapsed();
    let in_time = elapsed <= budget;
    let tag = if ok && in_time { "PASS" } else { "FAIL" };
    let line = format!(
        "[{tag}] {name}: {detail} ({:.1} s of {} s)\n",
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(ok, "{name}: {detail}");
    assert!(in_time, "{name}: took {elapsed:?}, budget {budget:?}");
}

fn dimer_c(l: f64) -> EnsembleSpec {
    EnsembleSpec::dimer_c(1.0, 1.5, 0.5, l, l, LengthLaw::Uniform { delta: 0.5 })
}

fn realization(spec: &EnsembleSpec, seed: u64, window: f64, h: f64) -> MediumRealization {
    sample_realization(spec, 0, seed, window, h).unwrap()
}

fn lab(config: LabConfig) -> Lab {
    Lab::new(config, None).unwrap()
}

fn check<'a>(report: &'a SuiteReport, prefix: &str) -> Vec<&'a Check> {
    report
        .checks
        .iter()
        .filter(|c| c.claim.starts_with(prefix))
        .collect()
}

fn all_verified(checks: &[&Check]) -> bool {
    !checks.is_empty() && checks.iter().all(|c| c.verdict == Verdict::Verified)
}

#[test]
fn homogeneous_speeds_match_closed_form() {
    let _g = serial();
    let t = Instant::now();
    let mut worst = [0.0f64; 2];
    let mut pde_range = (f64::INFINITY, f64::NEG_INFINITY);
    for (a, c) in [(1.0, 1.0), (4.0, 1.0), (1.0, 4.0)] {
        let config = LabConfig {
            ensemble: EnsembleSpec::constant(a, c),
            seeds: 1,
            window: 400.0,
            h: 0.05,
            methods: vec!["eigen".into(), "freidlin".into(), "pde".into()],
            cache: false,
            ..Default::default()
        };
        let report = estimate_speed(&lab(config)).unwrap();
        let exact = 2.0 * (a * c).sqrt();
        let value = |name: &str| report.methods[name].values[0].unwrap_or(f64::NAN) / exact;
        worst[0] = worst[0].max((value("eigen") - 1.0).abs());
        worst[1] = worst[1].max((value("freidlin") - 1.0).abs());
        pde_range = (pde_range.0.min(value("pde")), pde_range.1.max(value("pde")));
    }
    let ok = worst[0] <= 5e-3 && worst[1] <= 5e-3 && pde_range.0 >= 0.975 && pde_range.1 <= 1.0;
    let detail = format!(
        "max relative error eigen {:.1e}, freidlin {:.1e}; pde / exact in [{:.4}, {:.4}]",
        worst[0], worst[1], pde_range.0, pde_range.1
    );
    verdict(
        "homogeneous speeds 2 sqrt(a c)",
        ok,
        &detail,
        t,
        Duration::from_secs(60),
    );
}

#[test]
fn kp_closed_form_for_constants() {
    let _g = serial();
    let t = Instant::now();
    let engine = KpEngine::default().with_tol(1e-10);
    let mut worst = 0.0f64;
    for (a, c) in [(1.0, 1.0), (4.0, 1.0), (1.0, 4.0), (2.5, 0.3)] {
        let m = realization(&EnsembleSpec::constant(a, c), 0, 50.0, 0.05);
        for p in [0.0, 0.5, 1.0, 2.0] {
            worst = worst.max((engine.kp(&m, p).unwrap().lambda - (c + a * p * p)).abs());
        }
    }
    verdict(
        "k_p = c + a p^2 for constants",
        worst <= 1e-6,
        &format!("max deviation {worst:.1e}"),
        t,
        Duration::from_secs(5),
    );
}

#[test]
fn methods_agree_on_dimer_media() {
    let _g = serial();
    let t = Instant::now();
    let config = LabConfig {
        seeds: 16,
        window: 400.0,
        methods: vec!["eigen".into(), "freidlin".into(), "pde".into()],
        pde: PdeSettings {
            h: Some(0.02),
            ..Default::default()
        },
        cache: false,
        ..Default::default()
    };
    let report = estimate_speed(&lab(config)).unwrap();
    let mut eig_fr = 0.0f64;
    let mut eig_pde = 0.0f64;
    let mut failures = 0;
    for row in &report.seeds {
        match (
            row.estimates.get("eigen"),
            row.estimates.get("freidlin"),
            row.estimates.get("pde"),
        ) {
            (Some(e), Some(f), Some(p)) => {
                eig_fr = eig_fr.max((f.value - e.value).abs() / e.value);
                eig_pde = eig_pde.max((p.value - e.value).abs() / e.value);
            }
            _ => failures += 1,
        }
    }
    let ok = failures == 0 && eig_fr <= 0.01 && eig_pde <= 0.025;
    let detail = format!(
        "16 seeds, max |freidlin - eigen| / eigen {:.2e}, max |pde - eigen| / eigen {:.2e}, failures {failures}",
        eig_fr, eig_pde
    );
    verdict(
        "eigen, freidlin and pde agree on the dimer",
        ok,
        &detail,
        t,
        Duration::from_secs(600),
    );
}

#[test]
fn legendre_duality_of_mu_and_kp() {
    let _g = serial();
    let t = Instant::now();
    let engine = KpEngine::default().with_tol(1e-10);
    let freidlin = FreidlinSolver::new(0.01, engine.clone());
    let mut worst = 0.0f64;
    let mut count = 0;
    for seed in 0..4 {
        let m = realization(&dimer_c(1.0), seed, 200.0, 0.01);
        for p in [1.0, 1.25, 1.5, 1.75, 2.0] {
            let k = engine.kp(&m, p).unwrap().lambda;
            let mu = freidlin.mu_curve(&m, &[k]).unwrap().mu[0];
            worst = worst.max((mu - p).abs());
            count += 1;
        }
    }
    let detail = format!("{count} pairs, max |mu(k_p) - p| {worst:.2e}");
    verdict(
        "mu(k_p) = p",
        worst <= 2e-3,
        &detail,
        t,
        Duration::from_secs(120),
    );
}

#[test]
fn drift_formula_is_attained() {
    let _g = serial();
    let t = Instant::now();
    let engine = KpEngine::default().with_tol(1e-11);
    let solver = VariationalSolver {
        engine: engine.clone(),
        ..Default::default()
    };
    let (mut low, mut high, mut closed) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for seed in 0..8 {
        let m = realization(&dimer_c(1.0), seed, 100.0, 0.02);
        let w = engine.speed(&m, 0.2, 3.0, 1e-6).unwrap();
        let p = 1.5 * w.optimizer.unwrap();
        let r = solver
            .minimize(&m, p, &ThetaField::zeros(m.len()), 1e-9, 1000)
            .unwrap();
        let rel = r.gap_vs_direct / r.k_p;
        low = low.min(rel);
        high = high.max(rel);
        let star = solver.theta_closed_form(&m, p).unwrap();
        closed = closed.max((solver.k0_with_theta(&m, p, &star).unwrap() - r.k_p).abs() / r.k_p);
    }
    let m = realization(&dimer_c(1.0), 11, 20.0, 0.02);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let theta = ThetaField::projected(
        (0..m.len())
            .map(|_| 0.3 * rng.gen_range(-1.0..1.0))
            .collect(),
    );
    let p = 1.2;
    let (_, g) = solver.value_and_gradient(&m, p, &theta).unwrap();
    let mut grad_err = 0.0f64;
    for _ in 0..5 {
        let i = rng.gen_range(0..m.len());
        let bump = |d: f64| {
            let mut v = theta.theta.clone();
            v[i] += d;
            solver.k0_with_theta(&m, p, &ThetaField::new(v)).unwrap()
        };
        let fd = (bump(1e-5) - bump(-1e-5)) / 2e-5;
        grad_err = grad_err.max(((fd - g[i]) / g[i]).abs());
    }
    let ok = low >= -1e-6 && high <= 1e-3 && closed <= 1e-3 && grad_err <= 1e-4;
    let detail = format!(
        "8 seeds, relative gap in [{low:.1e}, {high:.1e}], closed form {closed:.1e}, gradient vs differences {grad_err:.1e}"
    );
    verdict(
        "inf over drifts of k_0 equals k_p",
        ok,
        &detail,
        t,
        Duration::from_secs(300),
    );
}

/// Rare tall growth-rate bumps: the ensemble on which the strict gap clears
/// three slacks at a window reachable in the time budget.
fn bumpy_growth() -> EnsembleSpec {
    EnsembleSpec::dimer_c(1.0, 8.0, 0.02, 1.0, 12.0, LengthLaw::Uniform { delta: 0.5 })
}

#[test]
fn homogenized_bound_and_strictness() {
    let _g = serial();
    let t = Instant::now();
    let a_dimer = EnsembleSpec::DimerRandom {
        a_plus: 2.0,
        a_minus: 1.0,
        c_plus: 1.0,
        c_minus: 1.0,
        l1: 1.0,
        l2: 1.0,
        lengths: LengthLaw::Uniform { delta: 0.5 },
        eps: None,
    };
    let config = LabConfig {
        ensemble: bumpy_growth(),
        extra_ensembles: vec![EnsembleSpec::constant(1.0, 1.0), a_dimer],
        seeds: 32,
        window: 6500.0,
        h: 0.1,
        p_bracket: [0.5, 3.5],
        cache: false,
        ..Default::default()
    };
    let report = run_suite("homogenized_bound", &lab(config)).unwrap();
    let bound = check(&report, "w* >= 2 sqrt");
    let strict = check(&report, "w* - 2 sqrt");
    let ok = bound.len() == 3 && all_verified(&bound) && strict.len() == 1 && all_verified(&strict);
    let detail = format!(
        "bound on 3 x 32 seeds: {}; strict gap > 3 slack: {} ({})",
        bound
            .iter()
            .map(|c| c.verdict.label())
            .collect::<Vec<_>>()
            .join("/"),
        strict
            .first()
            .map(|c| c.verdict.label())
            .unwrap_or("missing"),
        strict.first().map(|c| c.detail.as_str()).unwrap_or(""),
    );
    verdict(
        "homogenized lower bound, strict for varying c",
        ok,
        &detail,
        t,
        Duration::from_secs(600),
    );
}

/// Ratio of the strict gap to the slack on the plain {0.5, 1.5} dimer, for the record.
#[test]
fn strictness_on_the_plain_dimer_is_below_slack() {
    let _g = serial();
    let m = realization(&dimer_c(1.0), 0, 400.0, 0.05);
    let w = KpEngine::default()
        .with_tol(1e-8)
        .speed(&m, 0.2, 3.0, 1e-6)
        .unwrap();
    let (bound, slack) = bound_slack(&m);
    let line = format!(
        "[INFO] plain dimer at X = 400: w* - bound = {:.4}, slack = {:.4}, ratio {:.2}\n",
        w.value - bound,
        slack,
        (w.value - bound) / slack
    );
    std::io::stdout().lock().write_all(line.as_bytes()).unwrap();
    assert!(w.value > bound);
}

#[test]
fn diffusion_monotonicity_with_constant_growth() {
    let _g = serial();
    let t = Instant::now();
    let config = LabConfig {
        ensemble: EnsembleSpec::RandomTrig {
            freqs: vec![1.0, 2.3],
            amp_a: vec![0.5, 0.3],
            amp_c: vec![0.0, 0.0],
            a_min: 0.5,
            c_min: 1.0,
        },
        seeds: 8,
        window: 200.0,
        h: 0.02,
        cache: false,
        ..Default::default()
    };
    let report = run_suite("diffusion_monotonicity", &lab(config)).unwrap();
    let identity = check(&report, "|k_p(kappa a, c)");
    let increase = check(&report, "w*(");
    let ok = all_verified(&identity) && increase.len() == 2 && all_verified(&increase);
    let detail = format!(
        "identity deviation {:.1e}, increases {}",
        identity[0].tolerance - identity[0].margin,
        increase
            .iter()
            .map(|c| c.verdict.label())
            .collect::<Vec<_>>()
            .join("/")
    );
    verdict(
        "kappa -> w*(kappa a, c) increasing",
        ok,
        &detail,
        t,
        Duration::from_secs(180),
    );
}

#[test]
fn reaction_monotonicity() {
    let _g = serial();
    let t = Instant::now();
    let config = LabConfig {
        seeds: 8,
        window: 200.0,
        h: 0.02,
        cache: false,
        ..Default::default()
    };
    let report = run_suite("reaction_monotonicity", &lab(config)).unwrap();
    let ordering = check(&report, "w*(a, c + Delta)");
    let nondecrease: Vec<&Check> = report
        .checks
        .iter()
        .filter(|c| c.claim.contains(" g) >="))
        .collect();
    let strict: Vec<&Check> = report
        .checks
        .iter()
        .filter(|c| c.claim.ends_with("(strict)"))
        .collect();
    let ok = all_verified(&ordering)
        && nondecrease.len() == 2
        && all_verified(&nondecrease)
        && strict.len() == 2
        && all_verified(&strict)
        && report.verdict == Verdict::Verified;
    let detail = format!(
        "ordering {} ({}), B nondecreasing {}, strict {}",
        ordering[0].verdict.label(),
        ordering[0].detail,
        nondecrease
            .iter()
            .map(|c| c.verdict.label())
            .collect::<Vec<_>>()
            .join("/"),
        strict
            .iter()
            .map(|c| c.verdict.label())
            .collect::<Vec<_>>()
            .join("/")
    );
    verdict(
        "w* ordered in c and nondecreasing in B",
        ok,
        &detail,
        t,
        Duration::from_secs(300),
    );
}

#[test]
fn fragmentation_slows_the_front() {
    let _g = serial();
    let t = Instant::now();
    let config = LabConfig {
        ensemble: EnsembleSpec::dimer_c(1.0, 1.5, 0.5, 1.0, 1.0, LengthLaw::Fixed),
        seeds: 4,
        window: 200.0,
        h: 0.01,
        cache: false,
        ..Default::default()
    };
    let report = run_suite("scaling_monotonicity", &lab(config)).unwrap();
    let identity = check(&report, "|k_p(a_L");
    let nondecrease: Vec<&Check> = report
        .checks
        .iter()
        .filter(|c| c.claim.starts_with("w*(L") && !c.claim.ends_with("(strict)"))
        .collect();
    let strict: Vec<&Check> = report
        .checks
        .iter()
        .filter(|c| c.claim.ends_with("(strict)"))
        .collect();
    let ok = all_verified(&identity)
        && nondecrease.len() == 3
        && all_verified(&nondecrease)
        && strict.len() == 3
        && all_verified(&strict)
        && strict.iter().all(|c| c.gating);
    let detail = format!(
        "identity deviation {:.1e}, nondecreasing {}, strict {}",
        identity[0].tolerance - identity[0].margin,
        nondecrease
            .iter()
            .map(|c| c.verdict.label())
            .collect::<Vec<_>>()
            .join("/"),
        strict
            .iter()
            .map(|c| c.verdict.label())
            .collect::<Vec<_>>()
            .join("/")
    );
    verdict(
        "L -> w*(a_L, c_L) nondecreasing",
        ok,
        &detail,
        t,
        Duration::from_secs(600),
    );
}

#[test]
fn eigenvalue_property_battery() {
    let _g = serial();
    let t = Instant::now();
    let config = LabConfig {
        seeds: 8,
        window: 100.0,
        h: 0.02,
        cache: false,
        ..Default::default()
    };
    let report = run_suite("eigen_properties", &lab(config)).unwrap();
    let wanted = [
        "|k_p - k_{-p}|",
        "second differences",
        "k_p >= k_0",
        "k_0 >= <c>",
    ];
    let found: Vec<&Check> = wanted.iter().flat_map(|w| check(&report, w)).collect();
    let ok = found.len() == 4 && all_verified(&found);
    let detail = found
        .iter()
        .map(|c| {
            format!(
                "{} {} (margin {:.1e})",
                c.claim,
                c.verdict.label(),
                c.margin
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    verdict(
        "parity, convexity and lower bounds of k_p",
        ok,
        &detail,
        t,
        Duration::from_secs(300),
    );
}

#[test]
fn spreading_dichotomy() {
    let _g = serial();
    let t = Instant::now();
    let engine = KpEngine::default().with_tol(1e-8);
    let f = ReactionSpec::logistic();
    let mut holds = 0;
    let mut worst = (f64::INFINITY, f64::NEG_INFINITY);
    for seed in 0..8 {
        let m = realization(&dimer_c(1.0), seed, 600.0, 0.05);
        let w = engine.speed(&m, 0.2, 3.0, 1e-6).unwrap().value;
        let report = dichotomy_check(&m, &f, w, &[0.25], 200.0, 0.05).unwrap();
        let row = &report.rows[0];
        worst = (worst.0.min(row.u_inside), worst.1.max(row.u_outside));
        if row.holds() == Some(true) {
            holds += 1;
        }
    }
    let detail = format!(
        "{holds} of 8 seeds, min u inside {:.4}, max u outside {:.2e}",
        worst.0, worst.1
    );
    verdict(
        "invasion behind (1 - d) w* t, none beyond (1 + d) w* t",
        holds >= 7,
        &detail,
        t,
        Duration::from_secs(900),
    );
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let _g = serial();
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cache = Arc::new(ResultCache::open(&dir.path().join("cache")).unwrap());
    let config = LabConfig {
        seeds: 2,
        window: 50.0,
        h: 0.02,
        ..Default::default()
    };
    let mut identical = true;
    let mut compared = 0;
    for suite in ["homogenized_bound", "eigen_properties"] {
        let first = run_suite(
            suite,
            &Lab::new(config.clone(), Some(cache.clone())).unwrap(),
        )
        .unwrap();
        let command = format!("suite {suite}");
        let (run_a, _) = write_run(
            &dir.path().join("a"),
            &command,
            &config,
            chrono::Utc::now(),
            &first.files().unwrap(),
            None,
        )
        .unwrap();
        let manifest_text = std::fs::read_to_string(run_a.join("manifest.json")).unwrap();
        let replay = rerun_config(&manifest_text).unwrap();
        let second = run_suite(
            suite,
            &Lab::new(replay.clone(), Some(cache.clone())).unwrap(),
        )
        .unwrap();
        let (run_b, manifest_b) = write_run(
            &dir.path().join("b"),
            &command,
            &replay,
            chrono::Utc::now(),
            &second.files().unwrap(),
            None,
        )
        .unwrap();
        let (manifest_a, stale) = load_run(&run_a).unwrap();
        identical &= stale.is_empty() && manifest_a.run_id == manifest_b.run_id;
        for out in &manifest_a.outputs {
            let a = std::fs::read(run_a.join(&out.path)).unwrap();
            let b = std::fs::read(run_b.join(&out.path)).unwrap();
            identical &= a == b;
            compared += 1;
        }
    }
    let (hits, misses) = cache.stats();
    let detail = format!("{compared} output files compared, cache hits {hits}, misses {misses}");
    verdict(
        "re-run from manifest reproduces every output",
        identical,
        &detail,
        t,
        Duration::from_secs(120),
    );
}

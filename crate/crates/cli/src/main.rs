//! `kpplab`: command-line front end of the spreading-speed laboratory.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use kpp_core::error::KppError;
use kpp_core::freidlin::FreidlinSolver;
use kpp_core::medium::io::{encode, header_of, sidecar_of};
use kpp_core::medium::MediumRealization;
use kpp_core::pde::{dichotomy_check, simulate};
use kpp_core::speedlab::{
    estimate_speed, load_run, rerun_config, run_suite, suites, write_run, Check, Lab, LabConfig,
    ResultCache, SuiteReport, Verdict,
};
use kpp_core::variational::ThetaField;

#[derive(Parser, Debug)]
#[command(
    name = "kpplab",
    version,
    about = "Spreading speeds of Fisher-KPP fronts in heterogeneous media"
)]
struct Cli {
    /// JSON configuration, or the manifest.json of an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory that receives run directories and the result cache.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Eigenvalue tolerance (overrides the configuration).
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw realizations of the configured ensemble.
    #[command(subcommand)]
    Medium(MediumCmd),
    /// Principal eigenvalues of the tilted operator.
    #[command(subcommand)]
    Eigen(EigenCmd),
    /// Lyapunov exponents and the Freidlin speed.
    #[command(subcommand)]
    Freidlin(FreidlinCmd),
    /// The drift formula for k_p.
    #[command(subcommand)]
    Variational(VariationalCmd),
    /// Front simulations.
    #[command(subcommand)]
    Pde(PdeCmd),
    /// Run a named suite.
    Suite {
        /// homogenized_bound, diffusion_monotonicity, reaction_monotonicity,
        /// scaling_monotonicity or eigen_properties.
        name: String,
    },
    /// Check and summarize a finished run.
    Report {
        /// Run id under --out, or a run directory.
        run: String,
    },
}

#[derive(Args, Debug)]
struct Pick {
    /// Seed index within the ensemble.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Ensemble index (0 is the primary ensemble).
    #[arg(long, default_value_t = 0)]
    ensemble: usize,
}

#[derive(Subcommand, Debug)]
enum MediumCmd {
    /// Write one realization as a binary container with a JSON sidecar.
    Sample {
        #[command(flatten)]
        pick: Pick,
    },
}

#[derive(Subcommand, Debug)]
enum EigenCmd {
    /// k_p on a list of p values.
    Kp {
        #[command(flatten)]
        pick: Pick,
        /// Comma-separated p values.
        #[arg(long, value_delimiter = ',', default_value = "-2,-1,0,1,2")]
        p: Vec<f64>,
    },
    /// min_p k_p / p on every seed.
    Speed,
}

#[derive(Subcommand, Debug)]
enum FreidlinCmd {
    /// mu(gamma) on a list of levels, or on a default grid above the admissible floor.
    Mu {
        #[command(flatten)]
        pick: Pick,
        #[arg(long, value_delimiter = ',')]
        gamma: Vec<f64>,
    },
    /// min_gamma gamma / mu(gamma) on every seed.
    Speed,
}

#[derive(Subcommand, Debug)]
enum VariationalCmd {
    /// Minimize k_0(a, c + a (p + theta)^2) over mean-zero drifts.
    Minimize {
        #[command(flatten)]
        pick: Pick,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 1e-9)]
        grad_tol: f64,
        #[arg(long, default_value_t = 1000)]
        max_iters: usize,
    },
}

#[derive(Subcommand, Debug)]
enum PdeCmd {
    /// Simulate and record the front position.
    Run {
        #[command(flatten)]
        pick: Pick,
        #[arg(long, default_value_t = 100.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0.5)]
        snapshot: f64,
    },
    /// Fitted front speed on every seed.
    Speed,
    /// Invasion behind (1 - delta) w* t and none beyond (1 + delta) w* t, on every seed.
    Dichotomy {
        #[arg(long, value_delimiter = ',', default_value = "0.25")]
        delta: Vec<f64>,
        #[arg(long, default_value_t = 200.0)]
        t_end: f64,
    },
}

/// A finished command: its files and, for claims, the overall verdict.
struct Outcome {
    files: Vec<(String, Vec<u8>)>,
    verdict: Option<Verdict>,
}

impl Outcome {
    fn files(files: Vec<(String, Vec<u8>)>) -> Self {
        Outcome {
            files,
            verdict: None,
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<LabConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            rerun_config(&text)?
        }
        None => LabConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(tol) = cli.tol {
        config.tol = tol;
    }
    config.threads = cli.threads;
    config.validate()?;
    Ok(config)
}

fn pick(lab: &Lab, p: &Pick) -> anyhow::Result<MediumRealization> {
    if p.ensemble >= lab.config.ensembles().len() {
        bail!("ensemble {} is not configured", p.ensemble);
    }
    Ok(lab.realization(p.ensemble, p.index)?)
}

fn speed_outcome(lab: &Lab, method: &str) -> anyhow::Result<Outcome> {
    let mut cfg = lab.config.clone();
    cfg.methods = vec![method.to_string()];
    let lab = Lab::new(cfg, lab.cache.clone())?;
    let report = estimate_speed(&lab)?;
    Ok(Outcome::files(vec![
        ("speed.json".into(), serde_json::to_vec_pretty(&report)?),
        ("speed.csv".into(), report.to_csv().into_bytes()),
    ]))
}

fn suite_outcome(report: SuiteReport) -> anyhow::Result<Outcome> {
    let verdict = report.verdict.clone();
    for c in &report.checks {
        println!(
            "{:>12}  {}  (margin {:e}, tolerance {:e}) {}",
            c.verdict.label(),
            c.claim,
            c.margin,
            c.tolerance,
            c.detail
        );
    }
    Ok(Outcome {
        files: report.files()?,
        verdict: Some(verdict),
    })
}

fn execute(cli: &Cli, lab: &Lab) -> anyhow::Result<Outcome> {
    let engine = lab.engine();
    match &cli.command {
        Command::Medium(MediumCmd::Sample { pick: p }) => {
            let m = pick(lab, p)?;
            let bytes = encode(&header_of(&m), &[&m.a, &m.a_prime, &m.c])?;
            let stem = format!("medium_e{}_s{}", p.ensemble, p.index);
            Ok(Outcome::files(vec![
                (format!("{stem}.dat"), bytes),
                (
                    format!("{stem}.json"),
                    serde_json::to_vec_pretty(&sidecar_of(&m))?,
                ),
            ]))
        }
        Command::Eigen(EigenCmd::Kp { pick: p, p: ps }) => {
            let m = pick(lab, p)?;
            let mut csv = String::from("p,k_p,residual,iters,cw_lower,cw_upper\n");
            let mut dat = String::from("# p k_p\n");
            for &q in ps {
                let r = engine.kp(&m, q)?;
                csv.push_str(&format!(
                    "{q},{},{},{},{},{}\n",
                    r.lambda, r.residual, r.iters, r.cw_lower, r.cw_upper
                ));
                dat.push_str(&format!("{q} {}\n", r.lambda));
                println!("k_{q} = {}", r.lambda);
            }
            Ok(Outcome::files(vec![
                ("kp.csv".into(), csv.into_bytes()),
                ("kp.dat".into(), dat.into_bytes()),
            ]))
        }
        Command::Eigen(EigenCmd::Speed) => speed_outcome(lab, "eigen"),
        Command::Freidlin(FreidlinCmd::Mu { pick: p, gamma }) => {
            let m = pick(lab, p)?;
            let step = lab.config.ode_step.unwrap_or(m.spacing().min(0.01));
            let solver = FreidlinSolver::new(step, engine);
            let gammas = if gamma.is_empty() {
                let (floor, _, _) = solver.gamma_floor(&m)?;
                (1..=20).map(|j| floor + 0.15 * j as f64).collect()
            } else {
                gamma.clone()
            };
            let curve = solver.mu_curve(&m, &gammas)?;
            Ok(Outcome::files(vec![
                ("mu.csv".into(), curve.to_csv()?.into_bytes()),
                ("mu.dat".into(), curve.to_dat().into_bytes()),
            ]))
        }
        Command::Freidlin(FreidlinCmd::Speed) => speed_outcome(lab, "freidlin"),
        Command::Variational(VariationalCmd::Minimize {
            pick: p,
            p: tilt,
            grad_tol,
            max_iters,
        }) => {
            let m = pick(lab, p)?;
            let solver = kpp_core::variational::VariationalSolver {
                engine,
                ..Default::default()
            };
            let r = solver.minimize(
                &m,
                *tilt,
                &ThetaField::zeros(m.len()),
                *grad_tol,
                *max_iters,
            )?;
            println!(
                "inf k_0 = {}, k_p = {}, gap {:e}, {} iterations",
                r.k0_value, r.k_p, r.gap_vs_direct, r.iters
            );
            let h = m.spacing();
            let density: Vec<f64> = r.gradient.iter().map(|g| g / h).collect();
            let potential: Vec<f64> = (0..m.len())
                .map(|i| m.c[i] + m.a[i] * (tilt + r.theta.theta[i]).powi(2))
                .collect();
            let bytes = encode(&header_of(&m), &[&r.theta.theta, &density, &potential])?;
            Ok(Outcome::files(vec![
                ("theta.dat".into(), bytes),
                ("theta.json".into(), serde_json::to_vec_pretty(&r)?),
            ]))
        }
        Command::Pde(PdeCmd::Run {
            pick: p,
            t_end,
            snapshot,
        }) => {
            let m = pick(lab, p)?;
            let grid = match lab.config.pde.h {
                Some(h) if h > m.spacing() => m.resample(h)?,
                _ => m,
            };
            let trace = simulate(
                &grid,
                &lab.config.reaction,
                *t_end,
                lab.config.pde.dt,
                *snapshot,
            )?;
            Ok(Outcome::files(vec![
                ("front.csv".into(), trace.to_csv().into_bytes()),
                ("front.dat".into(), trace.to_dat().into_bytes()),
            ]))
        }
        Command::Pde(PdeCmd::Speed) => speed_outcome(lab, "pde"),
        Command::Pde(PdeCmd::Dichotomy { delta, t_end }) => {
            let cfg = &lab.config;
            let reports = lab
                .par_map(cfg.seeds, |seed| -> kpp_core::error::Result<_> {
                    let m = lab.realization(0, seed)?;
                    let lin = cfg.reaction.linearized(&m)?;
                    let w = engine.speed(&lin, cfg.p_bracket[0], cfg.p_bracket[1], 1e-6)?;
                    dichotomy_check(&m, &cfg.reaction, w.value, delta, *t_end, cfg.pde.dt)
                })
                .into_iter()
                .collect::<kpp_core::error::Result<Vec<_>>>()?;
            let mut csv =
                String::from("seed,w_star,delta,x_inside,u_inside,x_outside,u_outside,holds\n");
            let mut passes = 0;
            let mut fails = 0;
            for (seed, r) in reports.iter().enumerate() {
                let mut all = true;
                for row in &r.rows {
                    let holds = row.holds();
                    all &= holds != Some(false);
                    let label = holds.map(|b| b.to_string()).unwrap_or_default();
                    csv.push_str(&format!(
                        "{seed},{},{},{},{},{},{},{label}\n",
                        r.w_star,
                        row.delta,
                        row.x_inside,
                        row.u_inside,
                        row.x_outside,
                        row.u_outside
                    ));
                }
                if all {
                    passes += 1;
                } else {
                    fails += 1;
                }
            }
            let check = Check::gated(
                "u >= 0.9 behind and <= 0.1 ahead",
                0,
                passes,
                fails,
                reports.len(),
                cfg.gate,
            );
            println!("{}: {}", check.verdict.label(), check.detail);
            Ok(Outcome {
                files: vec![
                    (
                        "dichotomy.json".into(),
                        serde_json::to_vec_pretty(&reports)?,
                    ),
                    ("dichotomy.csv".into(), csv.into_bytes()),
                ],
                verdict: Some(check.verdict),
            })
        }
        Command::Suite { name } => {
            suites().get(name)?;
            suite_outcome(run_suite(name, lab)?)
        }
        Command::Report { .. } => unreachable!("handled before the lab is built"),
    }
}

/// Canonical text of the command for the run identity.
fn command_text(cmd: &Command) -> String {
    match cmd {
        Command::Suite { name } => format!("suite {name}"),
        other => format!("{other:?}"),
    }
}

fn report(cli: &Cli, run: &str) -> anyhow::Result<Option<Verdict>> {
    let direct = Path::new(run);
    let dir = if direct.join("manifest.json").is_file() {
        direct.to_path_buf()
    } else {
        cli.out.join(run)
    };
    let (manifest, stale) =
        load_run(&dir).with_context(|| format!("loading run {}", dir.display()))?;
    println!("run {} ({})", manifest.run_id, manifest.command);
    println!(
        "tool {}, master seed {}",
        manifest.tool_version, manifest.master_seed
    );
    println!(
        "started {}, finished {}",
        manifest.started, manifest.finished
    );
    println!(
        "cache hits {}, misses {}",
        manifest.cache_hits, manifest.cache_misses
    );
    for f in &manifest.outputs {
        let mark = if stale.contains(&f.path) {
            "MODIFIED"
        } else {
            "ok"
        };
        println!("  {:<8} {} ({} bytes)", mark, f.path, f.bytes);
    }
    if !stale.is_empty() {
        bail!(
            "{} output file(s) no longer match the manifest",
            stale.len()
        );
    }
    let suite_path = dir.join("report.json");
    if suite_path.is_file() {
        let suite: SuiteReport = serde_json::from_str(&std::fs::read_to_string(suite_path)?)?;
        for c in &suite.checks {
            println!("{:>12}  {}", c.verdict.label(), c.claim);
        }
        println!("verdict: {}", suite.verdict.label());
        return Ok(Some(suite.verdict));
    }
    Ok(None)
}

fn run(cli: &Cli) -> anyhow::Result<Option<Verdict>> {
    if let Command::Report { run } = &cli.command {
        return report(cli, run);
    }
    let started = chrono::Utc::now();
    let config = load_config(cli)?;
    let cache = if config.cache {
        Some(Arc::new(ResultCache::open(&cli.out.join("cache"))?))
    } else {
        None
    };
    let lab = Lab::new(config, cache.clone())?;
    let outcome = execute(cli, &lab)?;
    let stats = cache.as_ref().map(|c| c.stats());
    let (dir, _) = write_run(
        &cli.out,
        &command_text(&cli.command),
        &lab.config,
        started,
        &outcome.files,
        stats,
    )?;
    println!("wrote {}", dir.display());
    Ok(outcome.verdict)
}

fn exit_code(verdict: Option<&Verdict>) -> u8 {
    match verdict {
        None | Some(Verdict::Verified) => 0,
        Some(Verdict::Violated { .. }) => 2,
        Some(Verdict::Inconclusive { .. }) => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            // Usage errors exit with 1; 2 is reserved for a violated verdict.
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(v) => ExitCode::from(exit_code(v.as_ref())),
        Err(err) => {
            eprintln!("error: {err:#}");
            let numerical = err
                .downcast_ref::<KppError>()
                .is_some_and(KppError::is_numerical);
            ExitCode::from(if numerical { 4 } else { 1 })
        }
    }
}

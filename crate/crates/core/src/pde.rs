//! Direct integration of `u_t = (a u_x)_x + f(x, u)` with front tracking.
//!
//! The medium window `[0, X)` is tiled once more to the left, so the run uses
//! the periodic domain `[-X, X)`: the left-moving front has room to travel
//! without wrapping onto the tracked right-moving one.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{KppError, Result};
use crate::estimate::{Method, Provenance, SpeedEstimate};
use crate::linalg::{Cyclic, CyclicSolver};
use crate::medium::io::{header_of, write_container};
use crate::medium::MediumRealization;

/// Front observable level.
pub const LEVEL: f64 = 0.5;
/// Fraction of the window the front may reach.
pub const GUARD: f64 = 0.9;
/// Initial datum: smoothed indicator of `[0, INIT_WIDTH]`.
pub const INIT_WIDTH: f64 = 5.0;
pub const INIT_SMOOTHING: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReactionKind {
    /// `f = c(x) u (1 - u)`.
    LogisticC,
    /// `f = r u (1 - u) + B c(x) u (1 - u)`.
    ShiftedCombo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReactionSpec {
    pub kind: ReactionKind,
    #[serde(default)]
    pub r: f64,
    #[serde(default)]
    pub b: f64,
}

impl ReactionSpec {
    pub fn logistic() -> Self {
        ReactionSpec {
            kind: ReactionKind::LogisticC,
            r: 0.0,
            b: 0.0,
        }
    }

    pub fn shifted_combo(r: f64, b: f64) -> Self {
        ReactionSpec {
            kind: ReactionKind::ShiftedCombo,
            r,
            b,
        }
    }

    /// Linear growth rate `f_u(x, 0)` given the local `c(x)`.
    pub fn rate(&self, c: f64) -> f64 {
        match self.kind {
            ReactionKind::LogisticC => c,
            ReactionKind::ShiftedCombo => self.r + self.b * c,
        }
    }

    /// The medium whose reaction field is `f_u(x, 0)`, for the eigen and Freidlin routes.
    pub fn linearized(&self, m: &MediumRealization) -> Result<MediumRealization> {
        match self.kind {
            ReactionKind::LogisticC => Ok(m.clone()),
            ReactionKind::ShiftedCombo => m.affine_reaction(self.b, self.r),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrontTrace {
    pub times: Vec<f64>,
    /// Rightmost `x` in `[0, X)` with `u >= 0.5`.
    pub positions: Vec<f64>,
    /// Smallest `u` on `[0, position / 2]`.
    pub mass_left: Vec<f64>,
    /// Positions are nondecreasing from this index on.
    pub transient: usize,
    /// Smallest and largest `u` over every node and step.
    pub u_min: f64,
    pub u_max: f64,
    pub dt: f64,
    pub window: f64,
    pub h: f64,
    pub realization: u64,
    /// True when the run stopped early at the guard band.
    pub stopped_at_guard: bool,
}

impl FrontTrace {
    fn mark_transient(&mut self) {
        self.transient = (1..self.positions.len())
            .rev()
            .find(|&k| self.positions[k] < self.positions[k - 1])
            .unwrap_or(0);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,position,mass_left\n");
        for k in 0..self.times.len() {
            s.push_str(&format!(
                "{},{},{}\n",
                self.times[k], self.positions[k], self.mass_left[k]
            ));
        }
        s
    }

    /// Gnuplot columns `t position`.
    pub fn to_dat(&self) -> String {
        let mut s = String::from("# t position\n");
        for k in 0..self.times.len() {
            s.push_str(&format!("{} {}\n", self.times[k], self.positions[k]));
        }
        s
    }
}

/// Run controls beyond the time step.
#[derive(Clone, Debug, Default)]
pub struct SimOptions {
    /// End the run at the last snapshot before the guard band instead of failing.
    pub stop_at_guard: bool,
    /// Write each snapshot field in the medium binary layout.
    pub field_dir: Option<PathBuf>,
}

/// State of one integration on the doubled window.
pub struct Simulation<'a> {
    m: &'a MediumRealization,
    rate: Vec<f64>,
    solver: CyclicSolver,
    pub u: Vec<f64>,
    pub t: f64,
    pub dt: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl<'a> Simulation<'a> {
    pub fn new(m: &'a MediumRealization, f: &ReactionSpec, dt: f64) -> Result<Self> {
        let n = m.len();
        let h = m.spacing();
        let rate: Vec<f64> = m.c.iter().map(|&c| f.rate(c)).collect();
        let top = rate.iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
        let bound = if top > 0.0 { 0.5 / top } else { f64::INFINITY };
        if !(dt > 0.0) || dt > bound {
            return Err(KppError::CflViolation { dt, bound });
        }
        let total = 2 * n;
        let mut lower = vec![0.0; total];
        let mut diag = vec![0.0; total];
        let mut upper = vec![0.0; total];
        for j in 0..total {
            let right = m.a_half[j % n] * dt / (h * h);
            let left = m.a_half[(j + total - 1) % n] * dt / (h * h);
            lower[j] = -left;
            upper[j] = -right;
            diag[j] = 1.0 + left + right;
        }
        let solver = CyclicSolver::new(&Cyclic {
            lower: &lower,
            diag: &diag,
            upper: &upper,
        })?;
        let u: Vec<f64> = (0..total)
            .map(|j| initial_datum(j as f64 * h - m.window()))
            .collect();
        let (u_min, u_max) = range(&u);
        Ok(Simulation {
            m,
            rate,
            solver,
            u,
            t: 0.0,
            dt,
            u_min,
            u_max,
        })
    }

    /// Coordinate of node `j` of the doubled window.
    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.m.spacing() - self.m.window()
    }

    /// Explicit reaction, then implicit diffusion.
    pub fn step(&mut self) {
        let n = self.m.len();
        let dt = self.dt;
        let rhs: Vec<f64> = self
            .u
            .iter()
            .enumerate()
            .map(|(j, &u)| u + dt * self.rate[j % n] * u * (1.0 - u))
            .collect();
        self.u = self.solver.solve(&rhs);
        let (lo, hi) = range(&self.u);
        self.u_min = self.u_min.min(lo);
        self.u_max = self.u_max.max(hi);
        self.t += dt;
    }

    /// Rightmost level crossing in `[0, X)`, linearly interpolated.
    pub fn front(&self) -> f64 {
        let n = self.m.len();
        let h = self.m.spacing();
        for j in (n..2 * n).rev() {
            if self.u[j] >= LEVEL {
                if j + 1 == 2 * n {
                    return self.x(j);
                }
                let (ul, ur) = (self.u[j], self.u[j + 1]);
                return self.x(j) + h * (ul - LEVEL) / (ul - ur);
            }
        }
        0.0
    }

    /// Smallest `u` over `[0, x_max]`.
    pub fn min_on(&self, x_max: f64) -> f64 {
        let n = self.m.len();
        let h = self.m.spacing();
        let last = n + ((x_max / h).floor().max(0.0) as usize).min(n - 1);
        self.u[n..=last]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Linear interpolation of `u` at `x` in `[-X, X)`.
    pub fn value_at(&self, x: f64) -> f64 {
        let h = self.m.spacing();
        let total = self.u.len();
        let s = (x + self.m.window()) / h;
        let j = (s.floor().max(0.0) as usize).min(total - 1);
        let w = s - j as f64;
        (1.0 - w) * self.u[j] + w * self.u[(j + 1) % total]
    }
}

fn range(u: &[f64]) -> (f64, f64) {
    u.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Smoothed indicator of `[0, 5]` with `tanh` edges of width 1.
pub fn initial_datum(x: f64) -> f64 {
    let left = 0.5 * (1.0 + (x / INIT_SMOOTHING).tanh());
    let right = 0.5 * (1.0 - ((x - INIT_WIDTH) / INIT_SMOOTHING).tanh());
    (left * right).clamp(0.0, 1.0)
}

/// Integrate to time `t_end` (or the guard band), recording a snapshot every `snapshot_every`.
pub fn simulate_with(
    m: &MediumRealization,
    f: &ReactionSpec,
    t_end: f64,
    dt: f64,
    snapshot_every: f64,
    opts: &SimOptions,
) -> Result<FrontTrace> {
    if !(t_end > 0.0 && snapshot_every > 0.0) {
        return Err(KppError::Config(format!(
            "need T > 0 and snapshot interval > 0, got {t_end} and {snapshot_every}"
        )));
    }
    let mut sim = Simulation::new(m, f, dt)?;
    let mut trace = FrontTrace {
        dt,
        window: m.window(),
        h: m.spacing(),
        realization: m.realization_id,
        ..Default::default()
    };
    let guard = GUARD * m.window();
    let steps = (t_end / dt).round() as usize;
    let every = ((snapshot_every / dt).round() as usize).max(1);
    if let Some(dir) = &opts.field_dir {
        std::fs::create_dir_all(dir)?;
    }
    for k in 1..=steps {
        sim.step();
        let pos = sim.front();
        if pos >= guard {
            if opts.stop_at_guard {
                trace.stopped_at_guard = true;
                break;
            }
            return Err(KppError::FrontEscaped(sim.t));
        }
        if k % every == 0 {
            trace.times.push(sim.t);
            trace.positions.push(pos);
            trace.mass_left.push(sim.min_on(0.5 * pos));
            if let Some(dir) = &opts.field_dir {
                let path = dir.join(format!("u_{:06}.kppm", trace.times.len() - 1));
                write_container(
                    &path,
                    &header_of(m),
                    &[&sim.u[m.len()..], &sim.u[..m.len()]],
                )?;
            }
        }
    }
    trace.u_min = sim.u_min;
    trace.u_max = sim.u_max;
    trace.mark_transient();
    Ok(trace)
}

pub fn simulate(
    m: &MediumRealization,
    f: &ReactionSpec,
    t_end: f64,
    dt: f64,
    snapshot_every: f64,
) -> Result<FrontTrace> {
    simulate_with(m, f, t_end, dt, snapshot_every, &SimOptions::default())
}

fn least_squares(t: &[f64], x: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let xm = x.iter().sum::<f64>() / n;
    let sxx: f64 = t.iter().map(|v| (v - tm).powi(2)).sum();
    let sxy: f64 = t.iter().zip(x).map(|(a, b)| (a - tm) * (b - xm)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = t
        .iter()
        .zip(x)
        .map(|(a, b)| (b - xm - slope * (a - tm)).powi(2))
        .sum();
    let se = if t.len() > 2 {
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, se)
}

/// Least-squares slope of the front over the last `fit_fraction` of the run.
/// The error bar is the larger of the regression standard error and the
/// change of slope when only the second half of the fit window is used.
pub fn front_speed(trace: &FrontTrace, fit_fraction: f64) -> Result<SpeedEstimate> {
    if !(fit_fraction > 0.0 && fit_fraction <= 0.5) {
        return Err(KppError::Config(format!(
            "fit fraction must lie in (0, 0.5], got {fit_fraction}"
        )));
    }
    if trace.times.is_empty() {
        return Err(KppError::TooFewSnapshots { found: 0 });
    }
    let (t0, t1) = (trace.times[0], *trace.times.last().unwrap());
    let start = t1 - fit_fraction * (t1 - t0);
    let first = trace
        .times
        .iter()
        .position(|&t| t >= start - 1e-9 * t1.abs())
        .unwrap_or(trace.times.len());
    let found = trace.times.len() - first;
    if found < 10 {
        return Err(KppError::TooFewSnapshots { found });
    }
    let (t, x) = (&trace.times[first..], &trace.positions[first..]);
    let (slope, se) = least_squares(t, x);
    let half = found / 2;
    let (late, _) = least_squares(&t[half..], &x[half..]);
    let mut extras = BTreeMap::new();
    extras.insert("dt".to_string(), trace.dt);
    extras.insert("t_end".to_string(), t1);
    extras.insert("fit_fraction".to_string(), fit_fraction);
    extras.insert("snapshots".to_string(), found as f64);
    extras.insert("std_error".to_string(), se);
    extras.insert(
        "min_mass_left".to_string(),
        trace.mass_left[first..]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min),
    );
    Ok(SpeedEstimate {
        value: slope,
        method: Method::Pde,
        optimizer: None,
        err: se.max((late - slope).abs()),
        provenance: Provenance {
            realization: format!("{:016x}", trace.realization),
            window: trace.window,
            h: trace.h,
            tol: trace.dt,
        },
        extras,
    })
}

/// Run until the front nears the guard band and fit its speed.
/// `speed_guess` sizes the run; the fit uses the last `fit_fraction` of it.
pub fn pde_speed(
    m: &MediumRealization,
    f: &ReactionSpec,
    speed_guess: f64,
    dt: f64,
    fit_fraction: f64,
) -> Result<SpeedEstimate> {
    let t_end = 1.2 * GUARD * m.window() / speed_guess;
    let snap = (t_end / 400.0).max(dt);
    let opts = SimOptions {
        stop_at_guard: true,
        field_dir: None,
    };
    let trace = simulate_with(m, f, t_end, dt, snap, &opts)?;
    front_speed(&trace, fit_fraction)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DichotomyRow {
    pub delta: f64,
    pub x_inside: f64,
    pub x_outside: f64,
    pub u_inside: f64,
    pub u_outside: f64,
    /// `u >= 0.9` behind, absent for `delta = 0`.
    pub inside_ok: Option<bool>,
    /// `u <= 0.1` ahead, absent for `delta = 0`.
    pub outside_ok: Option<bool>,
}

impl DichotomyRow {
    pub fn holds(&self) -> Option<bool> {
        Some(self.inside_ok? && self.outside_ok?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub w_star: f64,
    pub t_end: f64,
    pub front: f64,
    pub rows: Vec<DichotomyRow>,
}

/// Values of `u(T, (1 - delta) w* T)` and `u(T, (1 + delta) w* T)` for each `delta`.
pub fn dichotomy_check(
    m: &MediumRealization,
    f: &ReactionSpec,
    w_star: f64,
    deltas: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<DichotomyReport> {
    let reach = deltas.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
    if (1.0 + reach) * w_star * t_end >= m.window() {
        return Err(KppError::Config(format!(
            "window {} is shorter than the farthest probe {}",
            m.window(),
            (1.0 + reach) * w_star * t_end
        )));
    }
    let mut sim = Simulation::new(m, f, dt)?;
    let guard = GUARD * m.window();
    let steps = (t_end / dt).round() as usize;
    for _ in 0..steps {
        sim.step();
        if sim.front() >= guard {
            return Err(KppError::FrontEscaped(sim.t));
        }
    }
    let rows = deltas
        .iter()
        .map(|&delta| {
            let x_inside = (1.0 - delta) * w_star * sim.t;
            let x_outside = (1.0 + delta) * w_star * sim.t;
            let u_inside = sim.value_at(x_inside);
            let u_outside = sim.value_at(x_outside);
            let decided = delta != 0.0;
            DichotomyRow {
                delta,
                x_inside,
                x_outside,
                u_inside,
                u_outside,
                inside_ok: decided.then_some(u_inside >= 0.9),
                outside_ok: decided.then_some(u_outside <= 0.1),
            }
        })
        .collect();
    Ok(DichotomyReport {
        w_star,
        t_end: sim.t,
        front: sim.front(),
        rows,
    })
}

pub fn write_trace_csv(path: &Path, trace: &FrontTrace) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(trace.to_csv().as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::{sample_realization, EnsembleSpec, LengthLaw};
    use crate::operators::KpEngine;

    fn constant(a: f64, c: f64, window: f64, h: f64) -> MediumRealization {
        sample_realization(&EnsembleSpec::constant(a, c), 0, 0, window, h).unwrap()
    }

    fn synthetic(pos: impl Fn(f64) -> f64) -> FrontTrace {
        let times: Vec<f64> = (0..=100).map(|k| k as f64).collect();
        FrontTrace {
            positions: times.iter().map(|&t| pos(t)).collect(),
            mass_left: vec![1.0; times.len()],
            times,
            ..Default::default()
        }
    }

    #[test]
    fn linear_trace() {
        let s = front_speed(&synthetic(|t| 2.0 * t), 0.5).unwrap();
        assert!((s.value - 2.0).abs() < 1e-12);
        assert!(s.err < 1e-12);
    }

    #[test]
    fn logarithmic_drift_is_covered() {
        // fit window [50, 100]: the drift slope lies between 1/101 and 1/51
        let s = front_speed(&synthetic(|t| 2.0 * t + (1.0 + t).ln()), 0.5).unwrap();
        assert!(
            s.value > 2.0 + 1.0 / 101.0 && s.value < 2.0 + 1.0 / 51.0,
            "{}",
            s.value
        );
        // the error bar sees the slope still falling: the second half fits lower
        assert!(s.err > 0.0 && s.value - s.err > 2.0);
        assert!((s.value - s.err - (2.0 + 1.0 / 88.0)).abs() < 1e-3);
    }

    #[test]
    fn argument_checks() {
        let m = constant(1.0, 1.0, 20.0, 0.05);
        let f = ReactionSpec::logistic();
        assert!(matches!(
            simulate(&m, &f, 1.0, 0.6, 0.1),
            Err(KppError::CflViolation { .. })
        ));
        assert!(matches!(
            front_speed(&synthetic(|t| t), 0.7),
            Err(KppError::Config(_))
        ));
        let short = FrontTrace {
            times: vec![0.0, 1.0],
            positions: vec![0.0, 1.0],
            mass_left: vec![1.0; 2],
            ..Default::default()
        };
        assert!(matches!(
            front_speed(&short, 0.5),
            Err(KppError::TooFewSnapshots { .. })
        ));
        assert!(matches!(
            simulate(&m, &f, 20.0, 0.05, 0.5),
            Err(KppError::FrontEscaped(_))
        ));
    }

    #[test]
    fn homogeneous_front_speed() {
        for &(a, c) in &[(1.0, 1.0), (4.0, 1.0)] {
            let exact = 2.0 * f64::sqrt(a * c);
            let m = constant(a, c, 250.0 * exact / 2.0, 0.05);
            let trace = simulate(&m, &ReactionSpec::logistic(), 100.0, 0.05, 0.5).unwrap();
            let s = front_speed(&trace, 0.5).unwrap();
            assert!(
                s.value <= exact * 1.01 && s.value >= exact * 0.975,
                "a = {a}: {}",
                s.value
            );
            assert!(trace.u_min >= 0.0 && trace.u_max <= 1.0);
            assert!(trace.mass_left[trace.times.len() / 2..]
                .iter()
                .all(|&v| v >= 0.95));
            assert!(trace.transient < trace.times.len() / 2);
        }
    }

    #[test]
    fn dimer_front_matches_eigen_speed() {
        let spec =
            EnsembleSpec::dimer_c(1.0, 1.5, 0.5, 1.0, 1.0, LengthLaw::Uniform { delta: 0.5 });
        let m = sample_realization(&spec, 3, 0, 200.0, 0.02).unwrap();
        let eigen = KpEngine::default().speed(&m, 0.5, 2.0, 1e-7).unwrap().value;
        let s = pde_speed(&m, &ReactionSpec::logistic(), eigen, 0.05, 0.5).unwrap();
        assert!(
            ((s.value - eigen) / eigen).abs() < 0.02,
            "{} vs {eigen}",
            s.value
        );
    }

    #[test]
    fn larger_reaction_is_faster() {
        let m = constant(1.0, 1.0, 200.0, 0.05);
        let shifted = m.affine_reaction(1.0, 0.5).unwrap();
        let f = ReactionSpec::logistic();
        let slow = front_speed(&simulate(&m, &f, 70.0, 0.05, 0.5).unwrap(), 0.5).unwrap();
        let fast = front_speed(&simulate(&shifted, &f, 70.0, 0.05, 0.5).unwrap(), 0.5).unwrap();
        assert!(fast.value - slow.value > fast.err + slow.err);
    }

    #[test]
    fn dichotomy_on_constants() {
        let m = constant(1.0, 1.0, 400.0, 0.05);
        let r =
            dichotomy_check(&m, &ReactionSpec::logistic(), 2.0, &[0.2, 0.0], 150.0, 0.05).unwrap();
        assert_eq!(r.rows[0].holds(), Some(true));
        assert!(r.rows[0].u_inside >= 0.9 && r.rows[0].u_outside <= 0.1);
        assert_eq!(r.rows[1].holds(), None);
    }

    #[test]
    fn combo_reaction_rate() {
        let f = ReactionSpec::shifted_combo(1.0, 0.4);
        assert_eq!(f.rate(0.5), 1.2);
        let m = constant(1.0, 0.5, 10.0, 0.1);
        let lin = f.linearized(&m).unwrap();
        assert!(lin.c.iter().all(|&c| (c - 1.2).abs() < 1e-15));
    }
}

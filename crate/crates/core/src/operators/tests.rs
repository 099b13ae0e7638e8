use super::*;
use crate::medium::{empirical_means, sample_realization, EnsembleSpec, LengthLaw};

fn constant(a: f64, c: f64, window: f64, h: f64) -> MediumRealization {
    sample_realization(&EnsembleSpec::constant(a, c), 1, 0, window, h).unwrap()
}

fn dimer(seed: u64, window: f64, h: f64) -> MediumRealization {
    let spec = EnsembleSpec::dimer_c(1.0, 1.5, 0.5, 1.0, 1.0, LengthLaw::Uniform { delta: 0.5 });
    sample_realization(&spec, seed, 0, window, h).unwrap()
}

fn engine() -> KpEngine {
    KpEngine::default().with_memo(None)
}

#[test]
fn laplacian_stencil() {
    let m = constant(1.0, 0.0001, 1.0, 0.01);
    let m = m.with_constant_reaction(0.0).unwrap();
    for st in stencils().names() {
        let op = stencils().get(st).unwrap().assemble(&m, 0.0).unwrap();
        let h2 = 1e-4;
        for i in 0..op.n {
            assert!((op.sub[i] - 1.0 / h2).abs() < 1e-9);
            assert!((op.sup[i] - 1.0 / h2).abs() < 1e-9);
            assert!((op.diag[i] + 2.0 / h2).abs() < 1e-9);
            assert_eq!(op.potential[i], 0.0);
        }
        assert!(op.symmetric);
    }
}

#[test]
fn tilted_entries_for_constants() {
    let m = constant(1.0, 1.0, 1.0, 0.01);
    for st in stencils().names() {
        let op = stencils().get(st).unwrap().assemble(&m, 0.5).unwrap();
        for i in 0..op.n {
            assert!((op.sub[i] - (1e4 + 50.0)).abs() < 1e-9);
            assert!((op.sup[i] - (1e4 - 50.0)).abs() < 1e-9);
            assert!((op.diag[i] - (-2e4 + 1.25)).abs() < 1e-9);
        }
        let ones = vec![1.0; op.n];
        let mut y = vec![0.0; op.n];
        op.apply(&ones, &mut y);
        assert!(y.iter().all(|&v| v == 1.25));
    }
}

#[test]
fn positivity_violation_names_row() {
    let m = constant(1.0, 1.0, 1.0, 0.01);
    let err = assemble_tilted(&m, 150.0).unwrap_err();
    assert!(matches!(err, KppError::PositivityViolation { row: 0, .. }));
}

#[test]
fn conservative_stencil_is_adjoint_under_parity() {
    let m = dimer(3, 10.0, 0.01);
    let m = m.scale_diffusion(1.0).unwrap();
    let plus = Conservative.assemble(&m, 0.7).unwrap();
    let minus = Conservative.assemble(&m, -0.7).unwrap();
    let n = plus.n;
    for i in 0..n {
        let ip = (i + 1) % n;
        assert!((plus.sup[i] - minus.sub[ip]).abs() <= 1e-12 * plus.sup[i]);
        assert!((plus.diag[i] - minus.diag[i]).abs() <= 1e-12 * plus.diag[i].abs());
    }
}

#[test]
fn closed_form_for_constants() {
    for &(a, c) in &[(1.0, 1.0), (4.0, 1.0), (1.0, 4.0)] {
        let m = constant(a, c, 20.0, 0.01);
        for &p in &[0.0, 0.5, 1.0, 2.0] {
            let r = engine().kp(&m, p).unwrap();
            assert!(
                (r.lambda - (c + a * p * p)).abs() < 1e-9,
                "a={a} c={c} p={p}: {}",
                r.lambda
            );
            assert!(r.phi.iter().all(|&v| v > 0.0));
        }
    }
}

#[test]
fn noda_and_power_agree_on_coarse_grid() {
    let spec = EnsembleSpec::dimer_c(1.0, 1.5, 0.5, 1.0, 1.0, LengthLaw::Fixed);
    let m = sample_realization(&spec, 4, 0, 4.0, 0.1).unwrap();
    for &p in &[0.0, 0.8] {
        let op = assemble_tilted(&m, p).unwrap();
        let a = Noda.solve(&op, 1e-10, 100, None).unwrap();
        let b = Power.solve(&op, 1e-10, 200_000, None).unwrap();
        assert!(
            (a.lambda - b.lambda).abs() < 1e-9,
            "{} vs {}",
            a.lambda,
            b.lambda
        );
        assert!(a.residual <= 1e-9);
    }
}

#[test]
fn power_reports_no_convergence() {
    let m = dimer(2, 40.0, 0.01);
    let op = assemble_tilted(&m, 0.0).unwrap();
    assert!(matches!(
        Power.solve(&op, 1e-12, 50, None),
        Err(KppError::NoConvergence { iters: 50, .. })
    ));
}

#[test]
fn principal_eigenvalue_converges_under_refinement() {
    // fixed smoothing width so that all grids see the same medium
    let spec = EnsembleSpec::DimerRandom {
        a_plus: 1.0,
        a_minus: 1.0,
        c_plus: 1.5,
        c_minus: 0.5,
        l1: 1.0,
        l2: 1.0,
        lengths: LengthLaw::Fixed,
        eps: Some(0.4),
    };
    let coarse = sample_realization(&spec, 8, 0, 20.0, 0.04).unwrap();
    let fine = coarse.resample(0.005).unwrap();
    let lc = engine().kp(&coarse, 0.0).unwrap().lambda;
    let lf = engine().kp(&fine, 0.0).unwrap().lambda;
    assert!(((lc - lf) / lf).abs() < 5e-5, "{lc} vs {lf}");
}

#[test]
fn rayleigh_quotients_stay_below_k0() {
    use rand::{Rng, SeedableRng};
    let m = dimer(5, 40.0, 0.02);
    let r = engine().kp(&m, 0.0).unwrap();
    let op = assemble_tilted(&m, 0.0).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    for k in 0..200 {
        let trial: Vec<f64> = if k % 2 == 0 {
            (0..op.n).map(|_| rng.gen_range(-1.0..1.0)).collect()
        } else {
            r.phi
                .iter()
                .map(|v| v * (1.0 + 0.01 * rng.gen_range(-1.0..1.0)))
                .collect()
        };
        assert!(op.rayleigh(&trial) <= r.lambda + DEFAULT_TOL);
    }
}

#[test]
fn dimer_eigen_properties() {
    let m = dimer(11, 100.0, 0.01);
    let e = engine();
    let ps: Vec<f64> = (0..9).map(|j| -2.0 + 0.5 * j as f64).collect();
    let ks: Vec<f64> = ps.iter().map(|&p| e.kp(&m, p).unwrap().lambda).collect();
    let k0 = ks[4];
    for (j, &k) in ks.iter().enumerate() {
        assert!(k >= k0 - 5.0 * DEFAULT_TOL);
        assert!(
            (k - ks[8 - j]).abs() <= 5.0 * DEFAULT_TOL,
            "parity at p = {}",
            ps[j]
        );
    }
    for j in 1..8 {
        assert!(ks[j + 1] - 2.0 * ks[j] + ks[j - 1] >= -10.0 * DEFAULT_TOL);
    }
    assert!(k0 >= empirical_means(&m).mean_c - 0.05);
}

#[test]
fn diffusion_scaling_identity() {
    let m = dimer(13, 50.0, 0.01);
    let kappa = 3.0;
    let lhs = engine()
        .kp(
            &m.scale_diffusion(kappa)
                .unwrap()
                .with_constant_reaction(1.0)
                .unwrap(),
            1.0,
        )
        .unwrap();
    let rhs = engine()
        .kp(&m.with_constant_reaction(0.0).unwrap(), 1.0)
        .unwrap();
    assert!((lhs.lambda - kappa * rhs.lambda - 1.0).abs() <= 5e-8);
}

#[test]
fn window_scaling_identity() {
    let m = dimer(17, 20.0, 0.02);
    for &l in &[0.5, 2.0, 4.0] {
        for &p in &[0.3, 0.7, 1.2] {
            let lhs = engine().kp(&m.rescale(l).unwrap(), p).unwrap().lambda;
            let parent = m
                .resample(0.02 / l)
                .unwrap()
                .affine_reaction(l * l, 0.0)
                .unwrap();
            let rhs = engine().kp(&parent, p * l).unwrap().lambda / (l * l);
            assert!(
                (lhs - rhs).abs() <= 5e-8,
                "L = {l}, p = {p}: {lhs} vs {rhs}"
            );
        }
    }
}

#[test]
fn homogeneous_speeds() {
    for &(a, c) in &[(1.0, 1.0), (4.0, 1.0), (1.0, 4.0)] {
        let m = constant(a, c, 10.0, 0.01);
        let s = engine().speed(&m, 0.2, 3.0, 1e-6).unwrap();
        let exact = 2.0 * (a * c).sqrt();
        assert!(
            (s.value - exact).abs() < 1e-9 * exact,
            "{} vs {exact}",
            s.value
        );
        assert!((s.optimizer.unwrap() - (c / a).sqrt()).abs() < 1e-5);
    }
}

#[test]
fn bracket_is_expanded() {
    let m = constant(1.0, 1.0, 10.0, 0.01);
    let s = engine().speed(&m, 3.0, 4.0, 1e-6).unwrap();
    assert!((s.value - 2.0).abs() < 1e-9);
    assert!(matches!(
        engine().speed(&m, 2.0, 1.0, 1e-6),
        Err(KppError::Config(_))
    ));
}

#[test]
fn memo_returns_same_result() {
    let memo = Arc::new(MemoStore::new(8));
    let e = KpEngine::default().with_memo(Some(memo.clone()));
    let m = dimer(21, 20.0, 0.01);
    let a = e.kp(&m, 0.4).unwrap();
    let b = e.kp(&m, 0.4).unwrap();
    assert!(Arc::ptr_eq(&a, &b));
    assert_eq!(memo.stats(), (1, 1));
    assert!(matches!(
        KpEngine::new("upwind", "noda", 1e-8),
        Err(KppError::UnknownStrategy { .. })
    ));
}

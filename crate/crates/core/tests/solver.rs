mod common;

use std::sync::Arc;

use common::{basis, rms_terminal_gap, spec_with, SEED};
use delay_spde::solver::{
    apply_lt, det_convolution, picard_solve, semigroup_orbit, step_solve, step_solve_ensemble,
    stoch_convolution, AdditiveDiffusion, Exponents, HeadDrift, IntervalRule,
    ModewiseLinearDiffusion, ProblemSpec, SolverSettings, ZeroDiffusion, ZeroDrift,
};
use delay_spde::stochastic::{ou_exact_step, CylindricalNoise, StepProcess};
use delay_spde::{Error, Exec};
use nalgebra::DMatrix;

const COEFFS: [f64; 4] = [1.0, -0.5, 0.25, 0.1];

fn settings(dt: f64) -> SolverSettings {
    SolverSettings {
        dt,
        tol: 1e-11,
        seed: SEED,
        ..SolverSettings::default()
    }
}

fn head_drift_spec(gain: f64, horizon: f64, dt: f64) -> ProblemSpec {
    spec_with(
        basis(1.0, 4, 16),
        Arc::new(HeadDrift { gain }),
        Arc::new(ZeroDiffusion { noise_modes: 1 }),
        &COEFFS,
        1.0,
        horizon,
        dt,
    )
}

/// `u_k(t) = e^{(gain - λ_k) t} u_k(0)`.
fn head_drift_exact(gain: f64, t: f64) -> Vec<f64> {
    COEFFS
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let lam = ((k + 1) as f64 * std::f64::consts::PI).powi(2);
            ((gain - lam) * t).exp() * a
        })
        .collect()
}

fn l2_rel_gap(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (d / b.iter().map(|y| y * y).sum::<f64>()).sqrt()
}

fn max_rel_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1e-300))
        .fold(0.0, f64::max)
}

#[test]
fn free_problem_follows_the_semigroup() {
    let dt = 0.01;
    let spec = spec_with(
        basis(1.0, 4, 16),
        Arc::new(ZeroDrift),
        Arc::new(ZeroDiffusion { noise_modes: 1 }),
        &COEFFS,
        1.0,
        0.5,
        dt,
    );
    let sol = picard_solve(&spec, &settings(dt), &[]).unwrap();
    let orbit = semigroup_orbit(spec.basis.eigenvalues(), dt, 50, &COEFFS);
    assert_eq!(sol.paths.len(), 1);
    assert!(max_rel_gap(sol.paths[0].data(), &orbit) < 1e-12);
    let stepped = step_solve(&spec, dt, None).unwrap();
    assert!(max_rel_gap(stepped.data(), &orbit) < 1e-12);
    assert_eq!(sol.records[0].residuals, vec![0.0]);
}

#[test]
fn head_drift_matches_exponential_with_second_order() {
    let (gain, horizon) = (3.0, 0.4);
    let mut errs = Vec::new();
    for dt in [0.02, 0.01] {
        let spec = head_drift_spec(gain, horizon, dt);
        let sol = picard_solve(&spec, &settings(dt), &[]).unwrap();
        errs.push(l2_rel_gap(
            sol.paths[0].terminal(),
            &head_drift_exact(gain, horizon),
        ));
    }
    assert!(errs[1] < 1e-3, "{errs:?}");
    let order = (errs[0] / errs[1]).log2();
    assert!((order - 2.0).abs() < 0.2, "order {order}");
}

#[test]
fn exponential_euler_is_first_order_for_head_drift() {
    let (gain, horizon) = (3.0, 0.4);
    let errs: Vec<f64> = [0.004, 0.002]
        .iter()
        .map(|&dt| {
            let path = step_solve(&head_drift_spec(gain, horizon, dt), dt, None).unwrap();
            l2_rel_gap(path.terminal(), &head_drift_exact(gain, horizon))
        })
        .collect();
    let order = (errs[0] / errs[1]).log2();
    assert!((order - 1.0).abs() < 0.15, "order {order}");
}

#[test]
fn strong_coupling_forces_bisection() {
    let (gain, horizon, dt) = (40.0, 0.32, 0.00125);
    let spec = head_drift_spec(gain, horizon, dt);
    let sol = picard_solve(&spec, &settings(dt), &[]).unwrap();
    assert!(sol.halvings > 0);
    assert!(sol.contraction.max_ratio < 0.5);
    assert_eq!(sol.interval_steps, 256 >> sol.halvings);
    assert_eq!(sol.records.len(), 1 << sol.halvings);
    let gap = l2_rel_gap(sol.paths[0].terminal(), &head_drift_exact(gain, horizon));
    assert!(gap < 2e-3, "{gap}");

    let capped = SolverSettings {
        max_halvings: 0,
        ..settings(dt)
    };
    assert!(matches!(
        picard_solve(&spec, &capped, &[]),
        Err(Error::Conditioning { halvings: 0, .. })
    ));
}

#[test]
fn iteration_budget_is_enforced() {
    let dt = 0.01;
    let spec = head_drift_spec(3.0, 0.4, dt);
    let tight = SolverSettings {
        max_iter: 2,
        tol: 1e-14,
        ..settings(dt)
    };
    match picard_solve(&spec, &tight, &[]) {
        Err(Error::Divergence {
            iterations,
            residuals,
        }) => {
            assert_eq!(iterations, 2);
            assert!(residuals[1] < residuals[0]);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn solution_is_a_fixed_point() {
    let dt = 0.01;
    let spec = head_drift_spec(3.0, 0.4, dt);
    let sol = picard_solve(
        &spec,
        &SolverSettings {
            interval: IntervalRule::Steps(40),
            ..settings(dt)
        },
        &[],
    )
    .unwrap();
    let again = apply_lt(&spec, &sol.paths[0], None).unwrap();
    assert!(max_rel_gap(again.data(), sol.paths[0].data()) < 1e-9);
    for r in &sol.records {
        assert!(r.residuals.windows(2).all(|w| w[1] < w[0]));
        assert!(r.ratios.iter().all(|q| *q < 0.5));
    }
}

#[test]
fn restarted_intervals_agree_with_one_interval() {
    let dt = 0.01;
    let spec = head_drift_spec(3.0, 0.4, dt);
    let whole = picard_solve(
        &spec,
        &SolverSettings {
            interval: IntervalRule::Steps(40),
            ..settings(dt)
        },
        &[],
    )
    .unwrap();
    let split = picard_solve(
        &spec,
        &SolverSettings {
            interval: IntervalRule::Steps(10),
            ..settings(dt)
        },
        &[],
    )
    .unwrap();
    assert_eq!(split.records.len(), 4);
    assert!((split.records[2].start - 0.2).abs() < 1e-12);
    assert!(max_rel_gap(split.paths[0].data(), whole.paths[0].data()) < 1e-8);
}

#[test]
fn deterministic_convolution_of_linear_integrand() {
    // ψ(s) = c + d s integrates exactly against e^{-λ(t-s)}
    let (lam, dt, steps, c, d) = (2.5, 0.1, 10usize, 1.5, -0.7);
    let psi: Vec<f64> = (0..=steps).map(|i| c + d * i as f64 * dt).collect();
    let conv = det_convolution(&[lam], dt, &psi).unwrap();
    for (i, v) in conv.iter().enumerate() {
        let t = i as f64 * dt;
        let e = (-lam * t).exp();
        let exact = c * (1.0 - e) / lam + d * (t / lam - (1.0 - e) / (lam * lam));
        assert!((v - exact).abs() < 1e-14, "{i}: {v} vs {exact}");
    }
}

#[test]
fn stochastic_convolution_is_the_ou_recursion() {
    let (lam, sigma, dt, steps) = (4.0, 0.6, 0.02, 50);
    let noise = CylindricalNoise::generate(SEED, 0, 1, steps, dt).unwrap();
    let process =
        StepProcess::deterministic(dt, vec![DMatrix::from_element(1, 1, sigma); steps]).unwrap();
    let conv = stoch_convolution(&[lam], &process, noise.full()).unwrap();
    let mut a = 0.0;
    for i in 0..steps {
        a = ou_exact_step(a, lam, sigma, dt, noise.increment(i, 0) / dt.sqrt()).unwrap();
        assert!((conv[i + 1] - a).abs() < 1e-14);
    }
    let unchecked =
        StepProcess::from_cells_unchecked(dt, vec![DMatrix::from_element(1, 1, sigma); steps])
            .unwrap();
    assert!(matches!(
        stoch_convolution(&[lam], &unchecked, noise.full()),
        Err(Error::Anticipating { .. })
    ));
}

fn stochastic_spec(dt: f64) -> ProblemSpec {
    spec_with(
        basis(1.0, 4, 16),
        Arc::new(HeadDrift { gain: -1.0 }),
        Arc::new(ModewiseLinearDiffusion {
            gains: vec![0.5, 0.4, 0.3, 0.2],
        }),
        &COEFFS,
        1.0,
        0.4,
        dt,
    )
}

#[test]
fn picard_and_stepper_share_the_limit() {
    let paths = 16;
    let fine = 0.0025;
    let noises: Vec<CylindricalNoise> = (0..paths)
        .map(|k| CylindricalNoise::generate(SEED, k, 4, 160, fine).unwrap())
        .collect();
    let mut gaps = Vec::new();
    for factor in [4, 1] {
        let dt = fine * factor as f64;
        let coarse: Vec<CylindricalNoise> = noises
            .iter()
            .map(|w| w.coarsened(factor).unwrap())
            .collect();
        let spec = stochastic_spec(dt);
        let sol = picard_solve(&spec, &settings(dt), &coarse).unwrap();
        let stepped = step_solve_ensemble(&spec, dt, &coarse, Exec::Parallel).unwrap();
        gaps.push(rms_terminal_gap(&sol.paths, &stepped));
    }
    assert!(gaps[1] < gaps[0], "{gaps:?}");
    assert!(gaps[1] < 1e-2, "{gaps:?}");
}

#[test]
fn execution_policy_does_not_change_results() {
    let dt = 0.01;
    let spec = stochastic_spec(dt);
    let noises: Vec<CylindricalNoise> = (0..6)
        .map(|k| CylindricalNoise::generate(SEED, k, 4, 40, dt).unwrap())
        .collect();
    let seq = picard_solve(
        &spec,
        &SolverSettings {
            exec: Exec::Sequential,
            ..settings(dt)
        },
        &noises,
    )
    .unwrap();
    let par = picard_solve(
        &spec,
        &SolverSettings {
            exec: Exec::Parallel,
            ..settings(dt)
        },
        &noises,
    )
    .unwrap();
    for (a, b) in seq.paths.iter().zip(&par.paths) {
        assert_eq!(a.data(), b.data());
    }
    assert_eq!(seq.contraction.ratios, par.contraction.ratios);
    let a = step_solve_ensemble(&spec, dt, &noises, Exec::Sequential).unwrap();
    let b = step_solve_ensemble(&spec, dt, &noises, Exec::Parallel).unwrap();
    assert_eq!(
        a.iter().map(|p| p.data().to_vec()).collect::<Vec<_>>(),
        b.iter().map(|p| p.data().to_vec()).collect::<Vec<_>>()
    );
}

#[test]
fn malformed_problems_are_rejected() {
    let dt = 0.01;
    let spec = stochastic_spec(dt);
    assert!(picard_solve(&spec, &settings(dt), &[]).is_err());
    let wrong_modes = [CylindricalNoise::generate(SEED, 0, 3, 40, dt).unwrap()];
    assert!(matches!(
        picard_solve(&spec, &settings(dt), &wrong_modes),
        Err(Error::Structural(_))
    ));
    let short = [CylindricalNoise::generate(SEED, 0, 4, 20, dt).unwrap()];
    assert!(step_solve(&spec, dt, Some(short[0].full())).is_err());
    assert!(picard_solve(&spec, &settings(0.03), &[]).is_err());

    let low_p = ProblemSpec {
        exponents: Exponents {
            p: 2.0,
            ..Exponents::default()
        },
        ..spec.clone()
    };
    assert!(matches!(low_p.validate(), Err(Error::Inadmissible(_))));
    let rough = ProblemSpec {
        exponents: Exponents {
            theta_b: 0.2,
            ..Exponents::default()
        },
        ..spec.clone()
    };
    assert!(matches!(rough.validate(), Err(Error::Inadmissible(_))));
    let few_probes = SolverSettings {
        probes: 4,
        ..settings(dt)
    };
    let noises = [CylindricalNoise::generate(SEED, 0, 4, 40, dt).unwrap()];
    assert!(picard_solve(&spec, &few_probes, &noises).is_err());
    let additive = ProblemSpec {
        diffusion: Arc::new(AdditiveDiffusion {
            gains: vec![0.0; 4],
        }),
        ..spec
    };
    assert!(additive.is_deterministic());
}

mod common;

use std::sync::Arc;

use approx::assert_relative_eq;
use common::{basis, SEED};
use delay_spde::heatmem::{
    admissibility, build_problem, kernel_dual_norm, verify_lipschitz, Coupling, HeatMemParams,
    HistoryChoice,
};
use delay_spde::solver::{step_solve, Drift};
use delay_spde::stochastic::CylindricalNoise;
use delay_spde::weights::{History, TemporalProfile};
use delay_spde::{Error, SpectralField};
use proptest::prelude::*;

fn small() -> HeatMemParams {
    HeatMemParams {
        modes: 16,
        points: 64,
        history_nodes: 128,
        horizon: 0.2,
        ..HeatMemParams::default()
    }
}

/// Composite Simpson rule.
fn simpson<F: Fn(f64) -> f64>(a: f64, b: f64, n: usize, f: F) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    h / 3.0 * (f(a) + f(b) + inner)
}

#[test]
fn kernel_dual_norm_by_quadrature() {
    for p in [2.5, 4.0, 10.0] {
        let pp = p / (p - 1.0);
        let integral = simpson(-60.0, 0.0, 20_000, |t| (pp * t).exp());
        assert_relative_eq!(
            kernel_dual_norm(p),
            integral.powf(1.0 / pp),
            max_relative = 1e-10
        );
    }
}

#[test]
fn closed_form_lipschitz_constants() {
    let params = HeatMemParams {
        kappa_f: 0.7,
        c0: 0.3,
        q: 1.5,
        ..small()
    };
    let hm = build_problem(&params, 0.01).unwrap();
    let dual = kernel_dual_norm(4.0);
    assert_relative_eq!(hm.drift_lipschitz(), 0.7 * dual, max_relative = 1e-14);
    let sum: f64 = (1..=16)
        .map(|n| (0.3 * (n as f64).powf(-1.5)).powi(2))
        .sum();
    assert_relative_eq!(
        hm.diffusion_lipschitz(),
        (2.0 * sum).sqrt() * dual,
        max_relative = 1e-12
    );
    let tail: f64 = (17..2_000_000)
        .map(|n| (0.3 * (n as f64).powf(-1.5)).powi(2))
        .sum();
    assert_relative_eq!(hm.noise_tail, tail, max_relative = 1e-6);

    let additive = build_problem(
        &HeatMemParams {
            coupling: Coupling::Additive,
            ..params
        },
        0.01,
    )
    .unwrap();
    assert_eq!(additive.diffusion_lipschitz(), 0.0);
}

#[test]
fn memory_drift_of_exponential_history() {
    // ∫_{-∞}^0 e^θ a e^{rθ} dθ = a / (1 + r)
    let rate = 2.0;
    let params = HeatMemParams {
        history: HistoryChoice {
            profile: TemporalProfile::Exponential { rate },
            mode: 2,
            amplitude: 1.5,
        },
        history_nodes: 2000,
        tail_eps: 1e-14,
        ..small()
    };
    let hm = build_problem(&params, 0.001).unwrap();
    let seg = hm.spec.history.sample(&hm.spec.history_grid);
    let mut out = vec![0.0; 16];
    hm.drift.eval(0.0, &seg, &mut out).unwrap();
    let coeff = 1.5 * 0.5f64.sqrt();
    assert_relative_eq!(out[1], 0.5 * coeff / (1.0 + rate), max_relative = 1e-5);
    assert!(out
        .iter()
        .enumerate()
        .all(|(k, v)| k == 1 || v.abs() < 1e-14));

    // saturation caps the drift pointwise
    let capped = build_problem(
        &HeatMemParams {
            drift_saturation: Some(0.01),
            kappa_f: 5.0,
            ..params
        },
        0.001,
    )
    .unwrap();
    assert!((0..200).all(|i| capped.drift.scalar(i as f64 - 100.0).abs() <= 0.05 + 1e-15));
    assert_relative_eq!(capped.drift.scalar(1e-6), 5e-6, max_relative = 1e-6);
}

#[test]
fn admissibility_of_exponential_history_closed_form() {
    // Φ(θ, s) = a e^{ρθ} sin(πs) continued by zero
    let (a, rho, p, horizon) = (1.3, 0.8, 4.0, 0.5);
    let b = basis(1.0, 4, 256);
    let shape = SpectralField::mode(4, b.grid, 1, a * 0.5f64.sqrt());
    let history = History::Separable {
        profile: TemporalProfile::Exponential { rate: rho },
        shape,
    };
    let adm = admissibility(&history, &b, p, horizon).unwrap();
    let sin_p: f64 = 3.0 / 8.0; // ∫_0^1 sin⁴(πs) ds
    let second = horizon * a * a * sin_p.powf(2.0 / p) * (p * rho).powf(-2.0 / p);
    assert_relative_eq!(adm.second, second, max_relative = 1e-4);
    let inner = |t: f64| {
        let e = if t <= -horizon {
            (2.0 * rho * t).exp() * ((2.0 * rho * horizon).exp() - 1.0)
        } else {
            1.0 - (2.0 * rho * t).exp()
        };
        (a * a * e / (2.0 * rho)).powf(p / 2.0)
    };
    let first =
        sin_p * (simpson(-80.0, -horizon, 40_000, inner) + simpson(-horizon, 0.0, 2_000, inner));
    assert_relative_eq!(adm.first, first, max_relative = 1e-4);
}

#[test]
fn invalid_parameters_are_rejected() {
    let e = build_problem(&HeatMemParams { q: 0.5, ..small() }, 0.01);
    assert!(matches!(e, Err(Error::Inadmissible(_))));
    assert!(build_problem(
        &HeatMemParams {
            noise_modes: Some(17),
            ..small()
        },
        0.01
    )
    .is_err());
    assert!(build_problem(
        &HeatMemParams {
            drift_saturation: Some(0.0),
            ..small()
        },
        0.01
    )
    .is_err());
    assert!(build_problem(&HeatMemParams { p: 2.0, ..small() }, 0.01).is_err());
    let heavy = HistoryChoice {
        profile: TemporalProfile::Algebraic { exponent: 0.2 },
        ..HistoryChoice::default()
    };
    assert!(build_problem(
        &HeatMemParams {
            history: heavy,
            ..small()
        },
        0.01
    )
    .is_err());
}

#[test]
fn observed_lipschitz_ratios_respect_bounds() {
    for coupling in [Coupling::Linear, Coupling::Saturated] {
        let hm = build_problem(
            &HeatMemParams {
                coupling,
                ..small()
            },
            0.01,
        )
        .unwrap();
        let r = verify_lipschitz(&hm, 100, SEED).unwrap();
        assert!(r.within(0.05), "{r:?}");
        assert!(r.drift_extremal_ratio > 0.9 * r.drift_bound);
    }
    let hm = build_problem(&small(), 0.01).unwrap();
    assert!(verify_lipschitz(&hm, 50, SEED).is_err());
}

#[test]
fn zero_history_with_linear_coupling_stays_at_rest() {
    let params = HeatMemParams {
        coupling: Coupling::Linear,
        history: HistoryChoice {
            amplitude: 0.0,
            ..HistoryChoice::default()
        },
        ..small()
    };
    let hm = build_problem(&params, 0.01).unwrap();
    let noise = CylindricalNoise::generate(SEED, 0, 16, 20, 0.01).unwrap();
    let path = step_solve(&hm.spec, 0.01, Some(noise.full())).unwrap();
    assert!(path.data().iter().all(|v| *v == 0.0));
}

#[test]
fn anticipating_diffusion_is_caught() {
    let hm = build_problem(
        &HeatMemParams {
            anticipating: true,
            ..small()
        },
        0.01,
    )
    .unwrap();
    let noise = CylindricalNoise::generate(SEED, 0, 16, 20, 0.01).unwrap();
    let err = step_solve(&hm.spec, 0.01, Some(noise.full())).unwrap_err();
    assert!(matches!(err, Error::Anticipating { step: 0, index: 0 }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn drift_scalar_is_lipschitz(x in -50.0f64..50.0, y in -50.0f64..50.0, sat in prop::option::of(0.01f64..10.0)) {
        let drift = delay_spde::heatmem::MemoryDrift { gain: 0.8, saturation: sat, basis: basis(1.0, 2, 4) };
        prop_assert!((drift.scalar(x) - drift.scalar(y)).abs() <= 0.8 * (x - y).abs() * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn diffusion_scalar_is_lipschitz(x in -5.0f64..5.0, y in -5.0f64..5.0, q in 0usize..16, n in 1usize..5) {
        let b = basis(1.0, 4, 16);
        let diff = delay_spde::heatmem::MemoryDiffusion {
            amplitudes: vec![0.1, 0.05, 0.03, 0.02],
            coupling: Coupling::Saturated,
            anticipating: false,
            basis: Arc::clone(&b),
        };
        let bound = diff.amplitudes[n - 1] * 2f64.sqrt();
        prop_assert!((diff.scalar(n, q, x) - diff.scalar(n, q, y)).abs() <= bound * (x - y).abs() + 1e-15);
    }
}

mod common;

use std::sync::Arc;

use approx::assert_relative_eq;
use common::{basis, SEED};
use delay_spde::solver::semigroup_orbit;
use delay_spde::stats::stream_rng;
use delay_spde::vnorms::{
    holder_diagnostic, mu_weights, v_norm, Flavor, GammaMethod, HolderConfig, VNormConfig,
};
use delay_spde::weights::History;
use delay_spde::{Basis, Exec, MildPath, SpectralField};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn zero_history(b: &Basis) -> Arc<History> {
    Arc::new(History::Zero {
        modes: b.modes(),
        spatial: b.grid,
    })
}

fn constant_path(b: &Basis, x: f64, dt: f64, steps: usize) -> MildPath {
    let e1 = SpectralField::mode(b.modes(), b.grid, 1, x);
    MildPath::from_fn(dt, steps, Arc::new(History::Constant(e1.clone())), |_| {
        e1.coeffs.clone()
    })
    .unwrap()
}

fn random_path(b: &Basis, dt: f64, steps: usize, stream: u64) -> MildPath {
    let mut rng = stream_rng(SEED, stream);
    let n = b.modes();
    let data: Vec<f64> = (0..(steps + 1) * n)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    MildPath::new(dt, n, data, zero_history(b)).unwrap()
}

#[test]
fn rank_one_constant_path_closed_form() {
    let b = basis(1.0, 4, 64);
    let (x, dt, steps, alpha, p) = (-1.7, 0.01, 100, 0.3, 4.0);
    let path = constant_path(&b, x, dt, steps);
    let e1 = b.lp_norm_coeffs(&[1.0, 0.0, 0.0, 0.0], p);
    let cfg = VNormConfig {
        alpha,
        p,
        ..VNormConfig::default()
    };
    let r = v_norm(std::slice::from_ref(&path), &b, &cfg, Exec::Sequential).unwrap();
    let t = dt * steps as f64;
    let gamma = x.abs() * e1 * (t.powf(1.0 - 2.0 * alpha) / (1.0 - 2.0 * alpha)).sqrt();
    assert_relative_eq!(r.sup_part, x.abs() * e1, max_relative = 1e-12);
    assert_relative_eq!(r.gamma_part, gamma, max_relative = 1e-12);
    assert_relative_eq!(r.value, r.sup_part + r.gamma_part);
    assert_eq!(r.std_err, 0.0);

    // Monte Carlo γ-norms coincide with the square function for rank-one integrands
    let mc = VNormConfig {
        gamma: GammaMethod::MonteCarlo {
            samples: 20_000,
            seed: SEED,
        },
        ..cfg
    };
    let short = constant_path(&b, x, 0.1, 10);
    let a = v_norm(std::slice::from_ref(&short), &b, &cfg, Exec::Sequential).unwrap();
    let m = v_norm(&[short], &b, &mc, Exec::Parallel).unwrap();
    assert!(
        (a.gamma_part - m.gamma_part).abs() / a.gamma_part < 0.03,
        "{} vs {}",
        a.gamma_part,
        m.gamma_part
    );
}

#[test]
fn integrated_flavor_of_constant_path() {
    // (∫_0^T γ(t)^p dt)^{1/p} with γ(t) = c t^{β/2}, β = 1 - 2α
    let b = basis(1.0, 4, 64);
    let (dt, steps, alpha, p) = (0.001, 1000, 0.25, 4.0);
    let path = constant_path(&b, 1.0, dt, steps);
    let cfg = VNormConfig {
        alpha,
        p,
        flavor: Flavor::Integrated,
        ..VNormConfig::default()
    };
    let r = v_norm(&[path], &b, &cfg, Exec::Parallel).unwrap();
    let beta = 1.0 - 2.0 * alpha;
    let c = b.lp_norm_coeffs(&[1.0, 0.0, 0.0, 0.0], p) / beta.sqrt();
    let exact = c * (1.0 / (p * beta / 2.0 + 1.0)).powf(1.0 / p);
    assert_relative_eq!(r.gamma_part, exact, max_relative = 1e-3);
}

#[test]
fn ensembles_average_in_lp() {
    let b = basis(1.0, 4, 32);
    let cfg = VNormConfig::default();
    let a = constant_path(&b, 1.0, 0.1, 5);
    let c = constant_path(&b, 2.0, 0.1, 5);
    let single = v_norm(std::slice::from_ref(&a), &b, &cfg, Exec::Sequential).unwrap();
    let pair = v_norm(&[a, c], &b, &cfg, Exec::Sequential).unwrap();
    let factor = ((1.0 + 16.0) / 2.0f64).powf(0.25);
    assert_relative_eq!(
        pair.sup_part,
        factor * single.sup_part,
        max_relative = 1e-12
    );
    assert_relative_eq!(
        pair.gamma_part,
        factor * single.gamma_part,
        max_relative = 1e-12
    );
    assert!(pair.std_err > 0.0);
    assert!(v_norm(&[], &b, &cfg, Exec::Sequential).is_err());
    let bad = VNormConfig { alpha: 0.5, ..cfg };
    assert!(v_norm(
        &[constant_path(&b, 1.0, 0.1, 5)],
        &b,
        &bad,
        Exec::Sequential
    )
    .is_err());
}

#[test]
fn mu_masses_add_up() {
    let nodes = [0.0, 0.3, 0.5, 0.9];
    let mu = mu_weights(1.0, 0.2, &nodes).unwrap();
    let beta = 0.6;
    assert_relative_eq!(
        mu.iter().sum::<f64>(),
        (1.0f64.powf(beta) - 0.1f64.powf(beta)) / beta,
        max_relative = 1e-14
    );
    assert!(mu_weights(0.5, 0.2, &nodes).is_err());
    assert!(mu_weights(1.0, 0.2, &[0.5, 0.3]).is_err());
}

#[test]
fn holder_diagnostic_of_linear_drift() {
    // U(t) = S(t)Φ(0) + t x: sup = T‖x‖, seminorm = T^{1-λ}‖x‖
    let b = basis(1.0, 4, 64);
    let (dt, steps, lambda, p) = (0.05, 20, 0.2, 4.0);
    let head = [1.0, 0.5, 0.0, -0.25];
    let x = [0.0, 1.0, 0.0, 0.0];
    let orbit = semigroup_orbit(b.eigenvalues(), dt, steps, &head);
    let data: Vec<f64> = orbit
        .chunks(4)
        .enumerate()
        .flat_map(|(i, c)| {
            c.iter()
                .zip(&x)
                .map(move |(a, v)| a + i as f64 * dt * v)
                .collect::<Vec<_>>()
        })
        .collect();
    let history = Arc::new(History::Constant(SpectralField::from_coeffs(
        head.to_vec(),
        b.grid,
    )));
    let path = MildPath::new(dt, 4, data, history.clone()).unwrap();
    let cfg = HolderConfig {
        lambda,
        delta: 0.0,
        p,
        eta: 0.0,
        theta_f: 0.0,
        theta_b: 0.0,
    };
    let r = holder_diagnostic(&[path], &b, &cfg, Exec::Sequential).unwrap();
    let nx = b.lp_norm_coeffs(&x, p);
    assert_relative_eq!(
        r.estimate,
        nx * (1.0 + 1.0f64.powf(1.0 - lambda)),
        max_relative = 1e-10
    );

    let free = MildPath::new(dt, 4, orbit, history).unwrap();
    let r = holder_diagnostic(&[free], &b, &cfg, Exec::Sequential).unwrap();
    assert!(r.estimate < 1e-12);
    assert!(HolderConfig { lambda: 0.3, ..cfg }.validate().is_err());
    assert!(HolderConfig { delta: -0.1, ..cfg }.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn v_norm_is_homogeneous(stream in 0u64..10_000, c in -5.0f64..5.0, integrated in any::<bool>()) {
        let b = basis(1.0, 4, 16);
        let cfg = VNormConfig {
            flavor: if integrated { Flavor::Integrated } else { Flavor::Sup },
            ..VNormConfig::default()
        };
        let paths = [random_path(&b, 0.05, 10, stream), random_path(&b, 0.05, 10, stream + 1)];
        let scaled: Vec<MildPath> = paths.iter().map(|p| p.scaled(c)).collect();
        let a = v_norm(&paths, &b, &cfg, Exec::Sequential).unwrap().value;
        let s = v_norm(&scaled, &b, &cfg, Exec::Sequential).unwrap().value;
        prop_assert!((s - c.abs() * a).abs() <= 1e-10 * a);
    }

    #[test]
    fn v_norm_triangle_inequality(stream in 0u64..10_000, eta in prop_oneof![Just(0.0), 0.1f64..0.5]) {
        let b = basis(1.0, 4, 16);
        let cfg = VNormConfig { eta, ..VNormConfig::default() };
        let x = random_path(&b, 0.05, 10, stream);
        let y = random_path(&b, 0.05, 10, stream + 50_000);
        let v = |p: &MildPath| v_norm(std::slice::from_ref(p), &b, &cfg, Exec::Sequential).unwrap().value;
        let sum = x.axpy(1.0, &y).unwrap();
        prop_assert!(v(&sum) <= v(&x) + v(&y) + 1e-10);
    }

    #[test]
    fn larger_alpha_weighs_more(stream in 0u64..10_000) {
        // (t-s)^{-2α} grows with α when t - s ≤ 1
        let b = basis(1.0, 4, 16);
        let x = random_path(&b, 0.05, 20, stream);
        let g = |alpha: f64| {
            let cfg = VNormConfig { alpha, ..VNormConfig::default() };
            v_norm(std::slice::from_ref(&x), &b, &cfg, Exec::Sequential).unwrap().gamma_part
        };
        prop_assert!(g(0.35) >= g(0.1));
    }
}

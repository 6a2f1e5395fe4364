mod common;

use std::f64::consts::PI;

use approx::assert_relative_eq;
use common::basis;
use delay_spde::{Basis, DirichletLaplacian1D, SpectralField};
use proptest::prelude::*;

fn direct_sine_sum(coeffs: &[f64], length: f64, s: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(k, a)| a * (2.0 / length).sqrt() * ((k + 1) as f64 * PI * s / length).sin())
        .sum()
}

#[test]
fn eigenvalues_are_squared_wavenumbers() {
    let op = DirichletLaplacian1D::new(2.0, 5).unwrap();
    for k in 1..=5 {
        assert_relative_eq!(
            op.eigenvalue(k),
            (k as f64 * PI / 2.0).powi(2),
            max_relative = 1e-15
        );
    }
    assert!(DirichletLaplacian1D::new(0.0, 3).is_err());
    assert!(DirichletLaplacian1D::new(1.0, 0).is_err());
    assert!(DirichletLaplacian1D::with_shift(1.0, 3, -20.0).is_err());
}

#[test]
fn basis_needs_enough_points() {
    let op = DirichletLaplacian1D::new(1.0, 16).unwrap();
    assert!(Basis::new(op, 15).is_err());
    assert!(Basis::new(op, 16).is_ok());
}

#[test]
fn synthesis_matches_direct_sine_series() {
    let b = basis(1.5, 6, 40);
    let coeffs = [1.0, -0.5, 0.25, 0.0, 2.0, -1.0];
    let mut vals = vec![0.0; 40];
    b.synthesize(&coeffs, &mut vals);
    for (q, v) in vals.iter().enumerate() {
        assert_relative_eq!(
            *v,
            direct_sine_sum(&coeffs, 1.5, b.grid.point(q)),
            epsilon = 1e-13
        );
    }
}

#[test]
fn first_mode_l4_norm_closed_form() {
    // ∫_0^ℓ (2/ℓ)² sin⁴(πs/ℓ) ds = 3/(2ℓ)
    for length in [0.5, 1.0, 3.0] {
        let b = basis(length, 4, 64);
        let e1 = SpectralField::mode(4, b.grid, 1, 1.0);
        assert_relative_eq!(
            b.lp_norm(&e1, 4.0).unwrap(),
            (1.5 / length).powf(0.25),
            max_relative = 1e-12
        );
    }
}

#[test]
fn semigroup_decays_each_mode_exponentially() {
    let b = basis(1.0, 8, 32);
    let x = b.field((1..=8).map(|k| 1.0 / k as f64).collect()).unwrap();
    let y = b.operator.semigroup_apply(0.01, &x).unwrap();
    for k in 0..8 {
        let lam = ((k + 1) as f64 * PI).powi(2);
        assert_relative_eq!(
            y.coeffs[k],
            (-lam * 0.01).exp() / (k + 1) as f64,
            max_relative = 1e-14
        );
    }
    assert!(b.operator.semigroup_apply(-1.0, &x).is_err());
    assert_eq!(
        b.operator.semigroup_apply(0.0, &x).unwrap().coeffs,
        x.coeffs
    );
}

#[test]
fn fields_from_another_grid_are_rejected() {
    let a = basis(1.0, 4, 16);
    let b = basis(1.0, 4, 32);
    let x = SpectralField::mode(4, a.grid, 2, 1.0);
    assert!(b.lp_norm(&x, 2.0).is_err());
    assert!(a.field(vec![1.0; 3]).is_err());
}

#[test]
fn analytic_scan_without_smoothing_is_twice_the_contraction_bound() {
    // at η = 0 the graph norm is 2‖·‖, so the scan is 2 sup ‖S(t)x‖/‖x‖ ≤ 2 in L²
    let b = basis(1.0, 8, 32);
    let samples: Vec<SpectralField> = (1..=8)
        .map(|k| SpectralField::mode(8, b.grid, k, 1.0))
        .collect();
    let times = [1e-3, 1e-2, 0.1];
    let r = b
        .analytic_estimate_scan(0.0, &times, &samples, 2.0)
        .unwrap();
    assert!(r.constant <= 2.0 + 1e-14);
    assert_relative_eq!(
        r.constant,
        2.0 * (-PI * PI * 1e-3f64).exp(),
        max_relative = 1e-12
    );
    let r = b
        .analytic_estimate_scan(0.5, &times, &[b.zeros()], 2.0)
        .unwrap();
    assert_eq!(r.skipped, 1);
}

proptest! {
    #[test]
    fn projection_inverts_synthesis(coeffs in prop::collection::vec(-10.0f64..10.0, 12)) {
        let b = basis(1.0, 12, 30);
        let mut vals = vec![0.0; 30];
        b.synthesize(&coeffs, &mut vals);
        let mut back = vec![0.0; 12];
        b.project(&vals, &mut back);
        for (a, c) in back.iter().zip(&coeffs) {
            prop_assert!((a - c).abs() <= 1e-12 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn l2_norm_is_parseval(coeffs in prop::collection::vec(-10.0f64..10.0, 12)) {
        let b = basis(2.0, 12, 40);
        let l2 = coeffs.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!((b.lp_norm_coeffs(&coeffs, 2.0) - l2).abs() <= 1e-12 * (1.0 + l2));
    }

    #[test]
    fn semigroup_contracts_in_every_lp(
        coeffs in prop::collection::vec(-5.0f64..5.0, 8),
        t in 0.0f64..0.5,
        p in 1.0f64..8.0,
    ) {
        // S(t) is given by a positive kernel of mass ≤ 1; the discrete norm inherits this up to quadrature error
        let b = basis(1.0, 8, 256);
        let x = b.field(coeffs).unwrap();
        let y = b.operator.semigroup_apply(t, &x).unwrap();
        let (nx, ny) = (b.lp_norm(&x, p).unwrap(), b.lp_norm(&y, p).unwrap());
        prop_assert!(ny <= nx * (1.0 + 1e-2) + 1e-12);
    }

    #[test]
    fn fractional_powers_compose(
        coeffs in prop::collection::vec(-1.0f64..1.0, 6),
        a in 0.0f64..1.0,
        c in 0.0f64..1.0,
    ) {
        let b = basis(1.0, 6, 12);
        let x = b.field(coeffs).unwrap();
        let two = b.operator.frac_power_apply(a, &b.operator.frac_power_apply(c, &x).unwrap()).unwrap();
        let one = b.operator.frac_power_apply(a + c, &x).unwrap();
        for (u, v) in two.coeffs.iter().zip(&one.coeffs) {
            prop_assert!((u - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn e_eta_norm_dominates_base_norm(coeffs in prop::collection::vec(-1.0f64..1.0, 6), eta in 0.0f64..1.5) {
        let b = basis(1.0, 6, 24);
        let x = b.field(coeffs).unwrap();
        let base = b.lp_norm(&x, 3.0).unwrap();
        prop_assert!(b.e_eta_norm(&x, eta, 3.0).unwrap() >= base);
        prop_assert!(b.space_norm_coeffs(&x.coeffs, 0.0, 3.0) == base);
    }
}

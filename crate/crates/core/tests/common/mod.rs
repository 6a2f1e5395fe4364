//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use delay_spde::solver::{Diffusion, Drift, Exponents, ProblemSpec};
use delay_spde::stats::stream_rng;
use delay_spde::weights::{History, HistoryBound, HistoryGrid, TemporalProfile, WeightFunction};
use delay_spde::{Basis, DirichletLaplacian1D, MildPath, SpectralField};
use rand::Rng;
use rand_distr::StandardNormal;

pub const SEED: u64 = 2024;

pub fn basis(length: f64, modes: usize, points: usize) -> Arc<Basis> {
    Basis::new(DirichletLaplacian1D::new(length, modes).unwrap(), points).unwrap()
}

/// Problem with history `coeffs · e^{rate θ}` (or zero when `coeffs` vanish)
/// and an exponential weight.
pub fn spec_with(
    basis: Arc<Basis>,
    drift: Arc<dyn Drift>,
    diffusion: Arc<dyn Diffusion>,
    coeffs: &[f64],
    rate: f64,
    horizon: f64,
    dt: f64,
) -> ProblemSpec {
    let shape = SpectralField::from_coeffs(coeffs.to_vec(), basis.grid);
    let scale = basis.lp_norm(&shape, 4.0).unwrap();
    let history = Arc::new(History::Separable {
        profile: TemporalProfile::Exponential { rate },
        shape,
    });
    let weight = WeightFunction::Exponential { rate: 1.0 };
    let bound = if scale == 0.0 {
        HistoryBound::Bounded { sup: 0.0 }
    } else {
        HistoryBound::ExpDecay { scale, rate }
    };
    let history_grid =
        HistoryGrid::for_history(&weight, 4.0, bound, horizon, 1e-12, 256, dt / 2.0).unwrap();
    ProblemSpec {
        basis,
        drift,
        diffusion,
        history,
        weight,
        history_grid,
        exponents: Exponents::default(),
        horizon,
    }
}

/// Root-mean-square over paths of `‖a(T) - b(T)‖_{ℓ²}` (the `L²(S)` norm).
pub fn rms_terminal_gap(a: &[MildPath], b: &[MildPath]) -> f64 {
    assert_eq!(a.len(), b.len());
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            x.terminal()
                .iter()
                .zip(y.terminal())
                .map(|(u, v)| (u - v).powi(2))
                .sum::<f64>()
        })
        .sum();
    (s / a.len() as f64).sqrt()
}

/// Classical RK4 for the scalar delay equation
/// `u'(t) = -λ u(t) + κ ∫_{-∞}^0 e^{ρθ} u(t+θ) dθ` with history `u(θ) = a e^{rθ}`.
///
/// The distributed delay is carried by `m(t) = ∫_{-∞}^t e^{-ρ(t-s)} u(s) ds`,
/// which obeys `m' = u - ρ m`, `m(0) = a / (ρ + r)`. Returns `u` at the
/// multiples of `output_dt` in `[0, horizon]`.
pub fn delay_ode_rk4(
    lambda: f64,
    kappa: f64,
    rho: f64,
    a: f64,
    r: f64,
    horizon: f64,
    output_dt: f64,
    substeps: usize,
) -> Vec<f64> {
    let f = |u: f64, m: f64| (-lambda * u + kappa * m, u - rho * m);
    let h = output_dt / substeps as f64;
    let outputs = (horizon / output_dt).round() as usize;
    let (mut u, mut m) = (a, a / (rho + r));
    let mut out = vec![u];
    for _ in 0..outputs {
        for _ in 0..substeps {
            let (k1u, k1m) = f(u, m);
            let (k2u, k2m) = f(u + 0.5 * h * k1u, m + 0.5 * h * k1m);
            let (k3u, k3m) = f(u + 0.5 * h * k2u, m + 0.5 * h * k2m);
            let (k4u, k4m) = f(u + h * k3u, m + h * k3m);
            u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
            m += h / 6.0 * (k1m + 2.0 * k2m + 2.0 * k3m + k4m);
        }
        out.push(u);
    }
    out
}

/// A random piecewise-linear path continuing a random exponential history.
pub fn random_pl_path(basis: &Basis, dt: f64, steps: usize, stream: u64) -> (MildPath, f64, f64) {
    let n = basis.modes();
    let mut rng = stream_rng(SEED, stream);
    let rate = 0.5 + 1.5 * rng.random::<f64>();
    let coeffs: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let shape = SpectralField::from_coeffs(coeffs.clone(), basis.grid);
    let history = Arc::new(History::Separable {
        profile: TemporalProfile::Exponential { rate },
        shape,
    });
    let mut data = coeffs.clone();
    let mut cur = coeffs;
    for _ in 0..steps {
        for c in cur.iter_mut() {
            *c += 0.5 * rng.sample::<f64, _>(StandardNormal);
        }
        data.extend_from_slice(&cur);
    }
    let t = rng.random::<f64>() * dt * steps as f64;
    (MildPath::new(dt, n, data, history).unwrap(), rate, t)
}

/// Independent Frobenius norm.
pub fn frobenius(m: &nalgebra::DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

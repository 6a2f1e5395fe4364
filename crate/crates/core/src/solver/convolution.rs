//! Deterministic and stochastic convolutions with the diagonal semigroup.

use crate::error::{Error, Result};
use crate::stochastic::{ou_transfer_std, NoiseWindow, StepProcess};

use super::problem::FrozenDiffusion;

/// Per-mode one-step coefficients for a step `Δt`.
#[derive(Debug, Clone)]
pub(crate) struct StepWeights {
    /// `e^{-λΔt}`.
    pub decay: Vec<f64>,
    /// Weight of the left node for piecewise-linear integrands.
    pub left: Vec<f64>,
    /// Weight of the right node for piecewise-linear integrands.
    pub right: Vec<f64>,
    /// `(1 - e^{-λΔt}) / λ`, the exponential-Euler weight.
    pub euler: Vec<f64>,
    /// `((1 - e^{-2λΔt}) / (2λ))^{1/2} / Δt^{1/2}`, scaling `ΔW` to the exact
    /// transfer of a cell-constant integrand.
    pub noise: Vec<f64>,
}

impl StepWeights {
    pub fn new(eigenvalues: &[f64], dt: f64) -> Self {
        let n = eigenvalues.len();
        let mut w = Self {
            decay: Vec::with_capacity(n),
            left: Vec::with_capacity(n),
            right: Vec::with_capacity(n),
            euler: Vec::with_capacity(n),
            noise: Vec::with_capacity(n),
        };
        for &l in eigenvalues {
            let x = l * dt;
            let decay = (-x).exp();
            // ∫_0^Δt e^{-λu} du and (1/Δt) ∫_0^Δt u e^{-λu} du
            let (i0, i1) = if x.abs() < 1e-3 {
                (
                    dt * (1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0),
                    dt * (0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0),
                )
            } else {
                (-(-x).exp_m1() / l, (1.0 - decay * (1.0 + x)) / (l * x))
            };
            w.decay.push(decay);
            w.left.push(i1);
            w.right.push(i0 - i1);
            w.euler.push(i0);
            w.noise.push(ou_transfer_std(l.max(0.0), dt) / dt.sqrt());
        }
        w
    }
}

/// `(S∗Ψ)(t_i) = ∫_0^{t_i} S(t_i - s) Ψ(s) ds` at every node, exact for the
/// piecewise-linear interpolant of the node values `psi` (row-major,
/// `(L+1) × N`).
pub fn det_convolution(eigenvalues: &[f64], dt: f64, psi: &[f64]) -> Result<Vec<f64>> {
    let n = eigenvalues.len();
    if n == 0 || psi.is_empty() || !psi.len().is_multiple_of(n) {
        return Err(Error::structural(
            "integrand is not a whole number of nodes",
        ));
    }
    if !(dt > 0.0) {
        return Err(Error::domain("time step must be positive"));
    }
    let w = StepWeights::new(eigenvalues, dt);
    let nodes = psi.len() / n;
    let mut out = vec![0.0; psi.len()];
    for i in 0..nodes - 1 {
        let (done, rest) = out.split_at_mut((i + 1) * n);
        let prev = &done[i * n..];
        let next = &mut rest[..n];
        for k in 0..n {
            next[k] = w.decay[k] * prev[k]
                + w.left[k] * psi[i * n + k]
                + w.right[k] * psi[(i + 1) * n + k];
        }
    }
    Ok(out)
}

/// `(S⋄Ψ)(t_i) = ∫_0^{t_i} S(t_i - s) Ψ(s) dW_H(s)` for an adapted step process
/// (cell `i` frozen at `t_i`), with the exact Ornstein–Uhlenbeck transfer per
/// mode. Integrands not built through the adapted interface are rejected.
pub fn stoch_convolution(
    eigenvalues: &[f64],
    process: &StepProcess,
    noise: NoiseWindow<'_>,
) -> Result<Vec<f64>> {
    if !process.is_adapted() {
        return Err(Error::Anticipating { step: 0, index: 0 });
    }
    let n = eigenvalues.len();
    let frozen: Vec<FrozenDiffusion> = process
        .cells()
        .iter()
        .map(|m| {
            if m.nrows() != n {
                return Err(Error::structural(
                    "integrand rows differ from the mode count",
                ));
            }
            Ok(FrozenDiffusion::Dense(m.clone()))
        })
        .collect::<Result<_>>()?;
    if (process.dt() - noise.dt()).abs() > 1e-12 * noise.dt() || process.steps() > noise.steps() {
        return Err(Error::structural(
            "integrand and noise live on different grids",
        ));
    }
    Ok(stoch_convolution_frozen(eigenvalues, &frozen, noise))
}

pub(crate) fn stoch_convolution_frozen(
    eigenvalues: &[f64],
    frozen: &[FrozenDiffusion],
    noise: NoiseWindow<'_>,
) -> Vec<f64> {
    let n = eigenvalues.len();
    let w = StepWeights::new(eigenvalues, noise.dt());
    let mut out = vec![0.0; (frozen.len() + 1) * n];
    let mut kick = vec![0.0; n];
    for (i, b) in frozen.iter().enumerate() {
        b.apply(noise.cell(i), &mut kick);
        for k in 0..n {
            out[(i + 1) * n + k] = w.decay[k] * out[i * n + k] + w.noise[k] * kick[k];
        }
    }
    out
}

/// `S(t_i) x` at every node.
pub fn semigroup_orbit(eigenvalues: &[f64], dt: f64, steps: usize, x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity((steps + 1) * x.len());
    for i in 0..=steps {
        let t = i as f64 * dt;
        out.extend(x.iter().zip(eigenvalues).map(|(a, l)| (-l * t).exp() * a));
    }
    out
}

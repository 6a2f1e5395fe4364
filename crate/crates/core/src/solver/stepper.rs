//! Exponential Euler with the exact Ornstein–Uhlenbeck transfer:
//! `a⁺ = e^{-λΔt} a + (1 - e^{-λΔt})/λ · F(t, U_t) + σ(Δt) Δt^{-1/2} (B(t, U_t) ΔW)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::path::{MildPath, NoiseTag, PathView};
use crate::stochastic::{CylindricalNoise, NoiseWindow};
use crate::weights::{segment_into, HistorySegment};

use super::problem::ProblemSpec;
use super::StepWeights;

/// One path of the exponential-Euler scheme on `[0, T0]` with step `dt`.
pub fn step_solve(spec: &ProblemSpec, dt: f64, noise: Option<NoiseWindow<'_>>) -> Result<MildPath> {
    spec.validate()?;
    let steps = super::picard::step_count(spec.horizon, dt)?;
    if !spec.diffusion.is_zero() {
        let w = noise.ok_or_else(|| Error::structural("a stochastic problem needs noise"))?;
        super::picard::check_noise(&w, dt, steps, spec.diffusion.noise_modes())?;
    }
    let n = spec.modes();
    let w = StepWeights::new(spec.basis.eigenvalues(), dt);
    let history = spec.history.clone();
    let mut data = Vec::with_capacity((steps + 1) * n);
    data.extend_from_slice(&history.head().coeffs);
    let mut seg = HistorySegment::zeros(spec.history_grid.clone(), n, spec.basis.grid);
    let mut f = vec![0.0; n];
    let mut kick = vec![0.0; n];
    let needs_segment = !spec.drift.is_zero() || !spec.diffusion.is_additive();
    for i in 0..steps {
        let t = i as f64 * dt;
        if needs_segment {
            let view = PathView::new(dt, n, &data, &history);
            segment_into(&view, t, &mut seg)?;
        }
        spec.drift.eval(t, &seg, &mut f)?;
        match noise {
            Some(win) if !spec.diffusion.is_zero() => {
                let b = spec.diffusion.freeze(t, &seg, win.past(i))?;
                b.apply(win.cell(i), &mut kick);
            }
            _ => kick.iter_mut().for_each(|v| *v = 0.0),
        }
        for k in 0..n {
            let next = w.decay[k] * data[i * n + k] + w.euler[k] * f[k] + w.noise[k] * kick[k];
            data.push(next);
        }
    }
    let mut path = MildPath::new(dt, n, data, history)?;
    if let Some(win) = noise {
        path = path.with_noise(NoiseTag {
            seed: win.noise().seed(),
            path: win.noise().path_index(),
            offset: win.offset(),
        });
    }
    Ok(path)
}

/// [`step_solve`] over an ensemble of noise realizations (one path each).
pub fn step_solve_ensemble(
    spec: &ProblemSpec,
    dt: f64,
    noises: &[CylindricalNoise],
    exec: Exec,
) -> Result<Vec<MildPath>> {
    if spec.diffusion.is_zero() && noises.is_empty() {
        return Ok(vec![step_solve(spec, dt, None)?]);
    }
    let spec = Arc::new(spec.clone());
    exec.try_map(noises.len(), |k| {
        step_solve(&spec, dt, Some(noises[k].full()))
    })
}

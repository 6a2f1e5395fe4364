//! The fixed-point operator `L_T`, its empirical contraction constant and the
//! Picard solver with interval restarts.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::path::{MildPath, NoiseTag, Trajectory};
use crate::stats::stream_rng;
use crate::stochastic::{CylindricalNoise, NoiseWindow};
use crate::vnorms::{v_norm_raw, VNormConfig};
use crate::weights::{extend_tilde, segment_into, History, HistorySegment};

use super::convolution::StepWeights;
use super::problem::ProblemSpec;

/// How the Picard interval length `T` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntervalRule {
    /// Halve `T` from `T0` until the empirical contraction constant is below `1/2`.
    #[default]
    Bisect,
    /// Use intervals of exactly this many steps (the last may be shorter).
    Steps(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    pub dt: f64,
    /// Stop once `‖φ^{k+1} - φ^k‖_V < tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Number of seeded probe pairs for the contraction estimate (at least 8).
    pub probes: usize,
    /// Ensemble members used when estimating the contraction constant.
    pub contraction_paths: usize,
    pub interval: IntervalRule,
    pub vnorm: VNormConfig,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            dt: 0.01,
            tol: 1e-6,
            max_iter: 60,
            max_halvings: 10,
            probes: 10,
            contraction_paths: 8,
            interval: IntervalRule::Bisect,
            vnorm: VNormConfig::default(),
            seed: 0,
            exec: Exec::Parallel,
        }
    }
}

pub(crate) fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(Error::domain("time step and horizon must be positive"));
    }
    let steps = (horizon / dt).round();
    if (steps * dt - horizon).abs() > 1e-9 * horizon || steps < 1.0 {
        return Err(Error::domain(format!(
            "horizon {horizon} is not a whole number of steps of {dt}"
        )));
    }
    Ok(steps as usize)
}

pub(crate) fn check_noise(
    w: &NoiseWindow<'_>,
    dt: f64,
    steps: usize,
    noise_modes: usize,
) -> Result<()> {
    if (w.dt() - dt).abs() > 1e-12 * dt {
        return Err(Error::structural(format!(
            "noise step {} differs from solver step {dt}",
            w.dt()
        )));
    }
    if w.steps() < steps {
        return Err(Error::structural(format!(
            "noise has {} cells, {steps} needed",
            w.steps()
        )));
    }
    if w.noise_modes() != noise_modes {
        return Err(Error::structural(format!(
            "noise has {} modes, diffusion expects {noise_modes}",
            w.noise_modes()
        )));
    }
    Ok(())
}

/// One application of `L_T` on an interval that starts at absolute time
/// `start` from the history `history`.
pub(crate) fn apply_lt_interval(
    spec: &ProblemSpec,
    weights: &StepWeights,
    phi: &MildPath,
    history: &Arc<History>,
    start: f64,
    noise: Option<NoiseWindow<'_>>,
) -> Result<MildPath> {
    let tilde = extend_tilde(phi, history)?;
    let n = spec.modes();
    let steps = phi.steps();
    let dt = phi.dt();
    let stochastic = !spec.diffusion.is_zero();
    let noise = match (stochastic, noise) {
        (true, Some(w)) => {
            check_noise(&w, dt, steps, spec.diffusion.noise_modes())?;
            Some(w)
        }
        (true, None) => return Err(Error::structural("a stochastic problem needs noise")),
        (false, _) => None,
    };
    let needs_segment = !spec.drift.is_zero() || (stochastic && !spec.diffusion.is_additive());
    let mut seg = HistorySegment::zeros(spec.history_grid.clone(), n, spec.basis.grid);
    let mut f = vec![0.0; (steps + 1) * n];
    let mut frozen = Vec::with_capacity(if stochastic { steps } else { 0 });
    for i in 0..=steps {
        let t = start + i as f64 * dt;
        if needs_segment {
            segment_into(&tilde, i as f64 * dt, &mut seg)?;
        }
        spec.drift.eval(t, &seg, &mut f[i * n..(i + 1) * n])?;
        if let Some(w) = noise {
            if i < steps {
                frozen.push(spec.diffusion.freeze(t, &seg, w.past(i))?);
            }
        }
    }
    let mut data = Vec::with_capacity((steps + 1) * n);
    data.extend_from_slice(&history.head().coeffs);
    let mut kick = vec![0.0; n];
    for i in 0..steps {
        match (noise, frozen.get(i)) {
            (Some(w), Some(b)) if !b.is_zero() => b.apply(w.cell(i), &mut kick),
            _ => kick.iter_mut().for_each(|v| *v = 0.0),
        }
        for k in 0..n {
            let next = weights.decay[k] * data[i * n + k]
                + weights.left[k] * f[i * n + k]
                + weights.right[k] * f[(i + 1) * n + k]
                + weights.noise[k] * kick[k];
            data.push(next);
        }
    }
    let mut out = MildPath::new(dt, n, data, history.clone())?;
    if let Some(w) = noise {
        out = out.with_noise(NoiseTag {
            seed: w.noise().seed(),
            path: w.noise().path_index(),
            offset: w.offset(),
        });
    }
    Ok(out)
}

/// `L_T(φ)(t) = S(t)Φ(0) + S∗F(·, φ̃)(t) + S⋄B(·, φ̃)(t)` on the grid of `φ`,
/// with `φ̃` the extension of `φ` by the problem's initial history.
pub fn apply_lt(
    spec: &ProblemSpec,
    phi: &MildPath,
    noise: Option<NoiseWindow<'_>>,
) -> Result<MildPath> {
    let weights = StepWeights::new(spec.basis.eigenvalues(), phi.dt());
    apply_lt_interval(spec, &weights, phi, &spec.history, 0.0, noise)
}

/// `t ↦ S(t)x` on the grid, built by the same recursion `L_T` uses so that
/// `L_T` reproduces it bit for bit when `F = B = 0`.
fn orbit(weights: &StepWeights, dt: f64, steps: usize, history: &Arc<History>) -> Result<MildPath> {
    let head = history.head().coeffs;
    let n = head.len();
    let mut data = Vec::with_capacity((steps + 1) * n);
    data.extend_from_slice(&head);
    for i in 0..steps {
        for k in 0..n {
            data.push(weights.decay[k] * data[i * n + k]);
        }
    }
    MildPath::new(dt, n, data, history.clone())
}

/// Two candidate paths (or ensembles, one member per noise realization; a
/// single member is shared by all realizations).
#[derive(Debug, Clone)]
pub struct ProbePair {
    pub first: Vec<MildPath>,
    pub second: Vec<MildPath>,
}

/// Seeded probe pairs on `[0, steps·dt]` around the orbit `S(t)Φ(0)`: the
/// perturbations vanish at `0`, scale with the interval (so ratios at
/// different `T` compare like with like) and mix smooth, oscillating and
/// random-walk shapes over a decaying random mode profile.
pub fn default_probes(
    spec: &ProblemSpec,
    history: &Arc<History>,
    dt: f64,
    steps: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<ProbePair>> {
    let n = spec.modes();
    let weights = StepWeights::new(spec.basis.eigenvalues(), dt);
    let base = orbit(&weights, dt, steps, history)?;
    let p = spec.exponents.p;
    let scale = spec.basis.lp_norm_coeffs(base.value(0), p).max(1e-3);
    let mut rng = stream_rng(seed, 0xC0FFEE);
    let mut profile = |amplitude: f64| -> Vec<f64> {
        let v: Vec<f64> = (0..n)
            .map(|k| rng.sample::<f64, _>(StandardNormal) / (k + 1) as f64)
            .collect();
        let norm = spec.basis.lp_norm_coeffs(&v, p).max(1e-300);
        v.into_iter().map(|x| amplitude * x / norm).collect()
    };
    let walk: Vec<f64> = {
        let mut r = stream_rng(seed, 0xBEEF);
        let mut acc = 0.0;
        let mut w = vec![0.0];
        for _ in 0..steps {
            acc += r.sample::<f64, _>(StandardNormal) / (steps as f64).sqrt();
            w.push(acc);
        }
        w
    };
    let shape = |kind: usize, i: usize| -> f64 {
        let tau = i as f64 / steps as f64;
        match kind % 5 {
            0 => tau,
            1 => tau * tau,
            2 => (std::f64::consts::PI * tau).sin() + tau,
            3 => tau.sqrt(),
            _ => walk[i],
        }
    };
    let perturbed = |kind: usize, v: &[f64]| -> Result<MildPath> {
        let mut data = base.data().to_vec();
        for i in 0..=steps {
            let s = shape(kind, i);
            for k in 0..n {
                data[i * n + k] += s * v[k];
            }
        }
        MildPath::new(dt, n, data, history.clone())
    };
    let mut pairs = Vec::with_capacity(count);
    for c in 0..count {
        let amplitude = scale * if c % 2 == 0 { 1.0 } else { 0.1 };
        let v1 = profile(amplitude);
        let first = perturbed(c, &v1)?;
        let second = if c % 3 == 0 {
            base.clone()
        } else {
            let v2 = profile(amplitude);
            perturbed(c + 1, &v2)?
        };
        pairs.push(ProbePair {
            first: vec![first],
            second: vec![second],
        });
    }
    Ok(pairs)
}

/// Empirical Lipschitz constant of `L_T` in the V-norm.
#[derive(Debug, Clone, Serialize)]
pub struct ContractionEstimate {
    pub horizon: f64,
    pub steps: usize,
    pub max_ratio: f64,
    pub ratios: Vec<f64>,
    /// Degenerate pairs (`φ = ψ`) that were skipped.
    pub skipped: usize,
}

fn member(v: &[MildPath], k: usize) -> &MildPath {
    if v.len() == 1 {
        &v[0]
    } else {
        &v[k]
    }
}

fn ensemble_difference(a: &[MildPath], b: &[MildPath], members: usize) -> Result<Vec<Vec<f64>>> {
    (0..members)
        .map(|k| Ok(member(a, k).difference(member(b, k))?.data().to_vec()))
        .collect()
}

fn v_of(
    spec: &ProblemSpec,
    dt: f64,
    diffs: &[Vec<f64>],
    cfg: &VNormConfig,
    exec: Exec,
) -> Result<f64> {
    let refs: Vec<&[f64]> = diffs.iter().map(|d| d.as_slice()).collect();
    Ok(v_norm_raw(&spec.basis, dt, &refs, cfg, exec)?.value)
}

struct IntervalContext<'a> {
    spec: &'a ProblemSpec,
    weights: StepWeights,
    history: Vec<Arc<History>>,
    start: f64,
    noises: Vec<Option<NoiseWindow<'a>>>,
    exec: Exec,
}

impl IntervalContext<'_> {
    fn members(&self) -> usize {
        self.noises.len()
    }

    fn apply(&self, phis: &[MildPath]) -> Result<Vec<MildPath>> {
        self.exec.try_map(self.members(), |k| {
            apply_lt_interval(
                self.spec,
                &self.weights,
                member(phis, k),
                &self.history[k.min(self.history.len() - 1)],
                self.start,
                self.noises[k],
            )
        })
    }
}

/// `max ‖L_T φ - L_T ψ‖_V / ‖φ - ψ‖_V` over the probe pairs, with `L_T`
/// driven by each of `noises` (or deterministically when the slice is empty).
pub fn empirical_contraction(
    spec: &ProblemSpec,
    settings: &SolverSettings,
    probes: &[ProbePair],
    noises: &[NoiseWindow<'_>],
) -> Result<ContractionEstimate> {
    let first = probes
        .first()
        .and_then(|p| p.first.first())
        .ok_or_else(|| Error::domain("no probe pairs"))?;
    let dt = first.dt();
    let steps = first.steps();
    let ctx = IntervalContext {
        spec,
        weights: StepWeights::new(spec.basis.eigenvalues(), dt),
        history: vec![first.history().clone()],
        start: 0.0,
        noises: if spec.is_deterministic() || noises.is_empty() {
            vec![None]
        } else {
            noises.iter().map(|w| Some(*w)).collect()
        },
        exec: settings.exec,
    };
    contraction_in(&ctx, settings, probes, steps, dt)
}

fn contraction_in(
    ctx: &IntervalContext<'_>,
    settings: &SolverSettings,
    probes: &[ProbePair],
    steps: usize,
    dt: f64,
) -> Result<ContractionEstimate> {
    let members = ctx.members();
    let mut ratios = Vec::with_capacity(probes.len());
    let mut skipped = 0;
    for pair in probes {
        let before = ensemble_difference(
            &pair.first,
            &pair.second,
            members.min(pair.first.len().max(pair.second.len())),
        )?;
        let denom = v_of(ctx.spec, dt, &before, &settings.vnorm, settings.exec)?;
        if denom == 0.0 {
            skipped += 1;
            continue;
        }
        let a = ctx.apply(&pair.first)?;
        let b = ctx.apply(&pair.second)?;
        let after = ensemble_difference(&a, &b, members)?;
        ratios.push(v_of(ctx.spec, dt, &after, &settings.vnorm, settings.exec)? / denom);
    }
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(ContractionEstimate {
        horizon: steps as f64 * dt,
        steps,
        max_ratio,
        ratios,
        skipped,
    })
}

/// Convergence record of one Picard interval.
#[derive(Debug, Clone, Serialize)]
pub struct IntervalRecord {
    pub index: usize,
    pub start: f64,
    pub steps: usize,
    /// `‖φ^{k+1} - φ^k‖_V` for `k = 0, 1, …`.
    pub residuals: Vec<f64>,
    /// Successive residual ratios.
    pub ratios: Vec<f64>,
    /// `‖U - L_T(U)‖_V` for the accepted iterate.
    pub fixed_point_residual: f64,
}

impl IntervalRecord {
    pub fn iterations(&self) -> usize {
        self.residuals.len()
    }
}

#[derive(Debug, Clone)]
pub struct PicardSolution {
    /// One path per noise realization on `[0, T0]`, carrying the initial history.
    pub paths: Vec<MildPath>,
    pub contraction: ContractionEstimate,
    pub interval_steps: usize,
    pub halvings: usize,
    pub records: Vec<IntervalRecord>,
}

/// Picard iteration `φ^{k+1} = L_T(φ^k)` from `φ^0 = S(·)U(start)` on
/// consecutive intervals of length `T`, each restarted from the segment of
/// the path computed so far. `noises` holds one realization per Monte Carlo
/// path and is ignored for deterministic problems.
pub fn picard_solve(
    spec: &ProblemSpec,
    settings: &SolverSettings,
    noises: &[CylindricalNoise],
) -> Result<PicardSolution> {
    spec.validate()?;
    settings.vnorm.validate()?;
    if settings.probes < 8 {
        return Err(Error::domain("at least 8 probe pairs are required"));
    }
    let dt = settings.dt;
    let total = step_count(spec.horizon, dt)?;
    let n = spec.modes();
    let deterministic = spec.is_deterministic();
    if !deterministic && noises.is_empty() {
        return Err(Error::structural(
            "a stochastic problem needs noise realizations",
        ));
    }
    let full: Vec<Option<NoiseWindow<'_>>> = if deterministic {
        vec![None]
    } else {
        noises.iter().map(|w| Some(w.full())).collect()
    };
    for w in full.iter().flatten() {
        check_noise(w, dt, total, spec.diffusion.noise_modes())?;
    }
    let members = full.len();
    let weights = StepWeights::new(spec.basis.eigenvalues(), dt);

    // Interval length.
    let contraction_members = members.min(settings.contraction_paths.max(1));
    let estimate_for = |steps: usize| -> Result<ContractionEstimate> {
        let probes = default_probes(
            spec,
            &spec.history,
            dt,
            steps,
            settings.probes - 1,
            settings.seed,
        )?;
        let ctx = IntervalContext {
            spec,
            weights: weights.clone(),
            history: vec![spec.history.clone()],
            start: 0.0,
            noises: full[..contraction_members]
                .iter()
                .map(|w| w.map(|w| w.noise().window(0, steps).expect("checked length")))
                .collect(),
            exec: settings.exec,
        };
        // The first Picard step is always among the probes.
        let phi0 = orbit(&weights, dt, steps, &spec.history)?;
        let phi1 = ctx.apply(std::slice::from_ref(&phi0))?;
        let mut all = probes;
        all.push(ProbePair {
            first: phi1,
            second: vec![phi0],
        });
        contraction_in(&ctx, settings, &all, steps, dt)
    };
    let (interval_steps, halvings, contraction) = match settings.interval {
        IntervalRule::Steps(s) => {
            let s = s.clamp(1, total);
            (s, 0, estimate_for(s)?)
        }
        IntervalRule::Bisect => {
            let mut h = 0;
            loop {
                let steps = (total >> h).max(1);
                let est = estimate_for(steps)?;
                if est.max_ratio < 0.5 {
                    break (steps, h, est);
                }
                if h >= settings.max_halvings || steps == 1 {
                    return Err(Error::Conditioning {
                        threshold: 0.5,
                        halvings: h,
                        last_ratio: est.max_ratio,
                    });
                }
                h += 1;
            }
        }
    };

    let mut acc: Vec<Vec<f64>> = vec![Vec::with_capacity((total + 1) * n); members];
    let mut records = Vec::new();
    let mut offset = 0;
    while offset < total {
        let steps = interval_steps.min(total - offset);
        let start = offset as f64 * dt;
        let history: Vec<Arc<History>> = if offset == 0 {
            vec![spec.history.clone()]
        } else {
            acc.iter()
                .map(|data| {
                    let so_far = MildPath::new(dt, n, data.clone(), spec.history.clone())?;
                    Ok(Arc::new(History::Restart {
                        at: so_far.horizon(),
                        path: Arc::new(so_far),
                    }))
                })
                .collect::<Result<_>>()?
        };
        let ctx = IntervalContext {
            spec,
            weights: weights.clone(),
            history: history.clone(),
            start,
            noises: full
                .iter()
                .map(|w| {
                    w.map(|w| {
                        w.noise()
                            .window(w.offset() + offset, steps)
                            .expect("checked length")
                    })
                })
                .collect(),
            exec: settings.exec,
        };
        let mut phi: Vec<MildPath> = history
            .iter()
            .map(|h| orbit(&weights, dt, steps, h))
            .collect::<Result<_>>()?;
        let mut residuals = Vec::new();
        let mut ratios = Vec::new();
        let accepted = loop {
            let next = ctx.apply(&phi)?;
            let diff = ensemble_difference(&next, &phi, members)?;
            let r = v_of(spec, dt, &diff, &settings.vnorm, settings.exec)?;
            if let Some(prev) = residuals.last() {
                if *prev > 0.0 {
                    ratios.push(r / prev);
                }
            }
            residuals.push(r);
            if !r.is_finite() {
                return Err(Error::Divergence {
                    iterations: residuals.len(),
                    residuals,
                });
            }
            phi = next;
            if r < settings.tol {
                break phi;
            }
            if residuals.len() >= settings.max_iter {
                return Err(Error::Divergence {
                    iterations: residuals.len(),
                    residuals,
                });
            }
        };
        let check = ctx.apply(&accepted)?;
        let fixed_point_residual = v_of(
            spec,
            dt,
            &ensemble_difference(&check, &accepted, members)?,
            &settings.vnorm,
            settings.exec,
        )?;
        for (data, path) in acc.iter_mut().zip(member_iter(&accepted, members)) {
            let skip = if offset == 0 { 0 } else { n };
            data.extend_from_slice(&path.data()[skip..]);
        }
        records.push(IntervalRecord {
            index: records.len(),
            start,
            steps,
            residuals,
            ratios,
            fixed_point_residual,
        });
        offset += steps;
    }
    let paths = acc
        .into_iter()
        .enumerate()
        .map(|(k, data)| {
            let path = MildPath::new(dt, n, data, spec.history.clone())?;
            Ok(match full[k] {
                Some(w) => path.with_noise(NoiseTag {
                    seed: w.noise().seed(),
                    path: w.noise().path_index(),
                    offset: 0,
                }),
                None => path,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PicardSolution {
        paths,
        contraction,
        interval_steps,
        halvings,
        records,
    })
}

fn member_iter(v: &[MildPath], members: usize) -> impl Iterator<Item = &MildPath> {
    (0..members).map(move |k| member(v, k))
}

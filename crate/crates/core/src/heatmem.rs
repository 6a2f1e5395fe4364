//! Perturbed heat equation with memory on `S = (0, ℓ)`:
//!
//! ```text
//! ∂_t u = Δu + f(s, u_t(s)) + Σ_n b_n(s, u_t(s)) ∂_t W_n,
//! f(s, φ) = κ_f · sat_f(∫_{-∞}^0 e^θ φ(θ) dθ),
//! b_n(s, φ) = c_n e_n(s) χ(∫_{-∞}^0 e^θ φ(θ) dθ),   c_n = c_0 n^{-q},
//! ```
//!
//! posed on `E = L^p(S)` with history space `L^p((-∞,0] × S) × L^p(S)`
//! (constant weight). Both coefficient maps act pointwise in `s` (Nemytskii
//! maps) on the memory variable, so their Lipschitz constants have closed forms.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{Diffusion, Drift, Exponents, FrozenDiffusion, ProblemSpec};
use crate::spectral::{Basis, DirichletLaplacian1D, SpectralField};
use crate::stats::stream_rng;
use crate::stochastic::NoisePast;
use crate::weights::{
    integrate, History, HistoryBound, HistoryGrid, HistorySegment, TemporalProfile, WeightFunction,
};

/// How the diffusion depends on the memory variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// `χ ≡ 1`: additive noise.
    Additive,
    /// `χ(x) = x`.
    Linear,
    /// `χ(x) = tanh(x)`.
    #[default]
    Saturated,
}

impl Coupling {
    fn apply(self, x: f64) -> f64 {
        match self {
            Coupling::Additive => 1.0,
            Coupling::Linear => x,
            Coupling::Saturated => x.tanh(),
        }
    }

    /// Lipschitz constant of `χ`.
    fn lipschitz(self) -> f64 {
        match self {
            Coupling::Additive => 0.0,
            Coupling::Linear | Coupling::Saturated => 1.0,
        }
    }
}

/// Initial history `Φ(θ, s) = amplitude · profile(θ) · sin(mπs/ℓ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryChoice {
    pub profile: TemporalProfile,
    #[serde(default = "one_usize")]
    pub mode: usize,
    #[serde(default = "one_f64")]
    pub amplitude: f64,
}

fn one_usize() -> usize {
    1
}

fn one_f64() -> f64 {
    1.0
}

impl Default for HistoryChoice {
    fn default() -> Self {
        Self {
            profile: TemporalProfile::Exponential { rate: 1.0 },
            mode: 1,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatMemParams {
    pub length: f64,
    pub modes: usize,
    pub points: usize,
    pub p: f64,
    pub alpha: f64,
    pub kappa_f: f64,
    /// Saturation level `s_f` of `sat_f(x) = s_f tanh(x / s_f)`; `None` keeps `f` linear.
    pub drift_saturation: Option<f64>,
    pub c0: f64,
    pub q: f64,
    /// Noise modes `N_H` (defaults to `modes`).
    pub noise_modes: Option<usize>,
    pub coupling: Coupling,
    /// Negative control: lets the diffusion read the increment of its own cell.
    pub anticipating: bool,
    pub horizon: f64,
    pub history: HistoryChoice,
    pub history_nodes: usize,
    pub tail_eps: f64,
}

impl Default for HeatMemParams {
    fn default() -> Self {
        Self {
            length: 1.0,
            modes: 64,
            points: 512,
            p: 4.0,
            alpha: 0.3,
            kappa_f: 0.5,
            drift_saturation: None,
            c0: 0.1,
            q: 1.0,
            noise_modes: None,
            coupling: Coupling::Saturated,
            anticipating: false,
            horizon: 1.0,
            history: HistoryChoice::default(),
            history_nodes: 256,
            tail_eps: 1e-10,
        }
    }
}

/// `‖e^θ‖_{L^{p'}(-∞,0]} = (1/p')^{1/p'}`.
pub fn kernel_dual_norm(p: f64) -> f64 {
    let pp = p / (p - 1.0);
    (1.0 / pp).powf(1.0 / pp)
}

/// Memory variable `m = ∫ e^θ φ(θ) dθ` (trapezoid on the segment grid), mode by mode.
fn memory(seg: &HistorySegment, out: &mut [f64]) {
    seg.kernel_integral(f64::exp, out);
}

/// `F(φ)(s) = κ_f sat_f(m(s))`.
#[derive(Debug, Clone)]
pub struct MemoryDrift {
    pub gain: f64,
    pub saturation: Option<f64>,
    pub basis: Arc<Basis>,
}

impl MemoryDrift {
    /// `f` as a function of the memory variable.
    pub fn scalar(&self, m: f64) -> f64 {
        match self.saturation {
            Some(s) => self.gain * s * (m / s).tanh(),
            None => self.gain * m,
        }
    }

    pub fn lipschitz(&self, p: f64) -> f64 {
        self.gain.abs() * kernel_dual_norm(p)
    }
}

impl Drift for MemoryDrift {
    fn eval(&self, _t: f64, seg: &HistorySegment, out: &mut [f64]) -> Result<()> {
        if self.gain == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return Ok(());
        }
        memory(seg, out);
        if self.saturation.is_none() {
            out.iter_mut().for_each(|v| *v *= self.gain);
            return Ok(());
        }
        let mut vals = vec![0.0; self.basis.points()];
        self.basis.synthesize(out, &mut vals);
        vals.iter_mut().for_each(|v| *v = self.scalar(*v));
        self.basis.project(&vals, out);
        Ok(())
    }

    fn is_zero(&self) -> bool {
        self.gain == 0.0
    }
}

/// `(B(φ) h)(s) = Σ_n c_n h_n e_n(s) χ(m(s))`.
#[derive(Debug, Clone)]
pub struct MemoryDiffusion {
    pub amplitudes: Vec<f64>,
    pub coupling: Coupling,
    pub anticipating: bool,
    pub basis: Arc<Basis>,
}

impl MemoryDiffusion {
    /// `b_n(s, φ)` as a function of the memory variable (`n` is 1-based, `q`
    /// a grid index).
    pub fn scalar(&self, n: usize, q: usize, m: f64) -> f64 {
        self.amplitudes[n - 1] * self.basis.basis_value(q, n) * self.coupling.apply(m)
    }

    /// Closed-form `L_{b_n} = c_n (2/ℓ)^{1/2} ‖e^θ‖_{L^{p'}}` (times `Lip χ`).
    pub fn mode_lipschitz(&self, p: f64) -> Vec<f64> {
        let sup_e = (2.0 / self.basis.grid.length).sqrt();
        self.amplitudes
            .iter()
            .map(|c| c.abs() * sup_e * kernel_dual_norm(p) * self.coupling.lipschitz())
            .collect()
    }

    /// `L = (Σ_n L_{b_n}²)^{1/2}`.
    pub fn lipschitz(&self, p: f64) -> f64 {
        self.mode_lipschitz(p)
            .iter()
            .map(|l| l * l)
            .sum::<f64>()
            .sqrt()
    }
}

impl Diffusion for MemoryDiffusion {
    fn noise_modes(&self) -> usize {
        self.amplitudes.len()
    }

    fn freeze(
        &self,
        _t: f64,
        seg: &HistorySegment,
        past: NoisePast<'_>,
    ) -> Result<FrozenDiffusion> {
        let sign = if self.anticipating {
            // reads the increment of the cell being integrated
            past.increment(past.limit(), 0)?.signum()
        } else {
            1.0
        };
        if self.coupling == Coupling::Additive {
            return Ok(FrozenDiffusion::Diagonal(
                self.amplitudes.iter().map(|c| sign * c).collect(),
            ));
        }
        let mut m = vec![0.0; self.basis.modes()];
        memory(seg, &mut m);
        let mut profile = vec![0.0; self.basis.points()];
        self.basis.synthesize(&m, &mut profile);
        profile
            .iter_mut()
            .for_each(|v| *v = sign * self.coupling.apply(*v));
        Ok(FrozenDiffusion::Multiplier {
            amplitudes: self.amplitudes.clone(),
            profile,
            basis: self.basis.clone(),
        })
    }

    fn is_zero(&self) -> bool {
        self.amplitudes.iter().all(|c| *c == 0.0)
    }

    fn is_additive(&self) -> bool {
        self.coupling == Coupling::Additive
    }
}

/// Values of the two integrals whose finiteness makes a history admissible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Admissibility {
    /// `∫_S ∫_{-∞}^0 (∫_0^T |Φ̂(r+t,s)|² dr)^{p/2} dt ds`.
    pub first: f64,
    /// `∫_0^T (∫_S ∫_{-∞}^0 |Φ̂(r+t,s)|^p dt ds)^{2/p} dr`.
    pub second: f64,
}

/// Dyadic windows `[-T 2^{k+1}, -T 2^k]` used to sum half-line integrals.
const WINDOWS: usize = 48;

/// `∫_{-∞}^0 h(t) dt` over `[-T, 0]` and dyadic windows; `None` if the window
/// contributions stop decaying geometrically (a divergent tail).
fn half_line<F: FnMut(f64) -> f64>(horizon: f64, mut h: F) -> Option<f64> {
    let mut total = integrate(-horizon, 0.0, horizon / 4.0, &mut h);
    let mut contributions = Vec::with_capacity(WINDOWS);
    for k in 0..WINDOWS {
        let hi = -horizon * 2f64.powi(k as i32);
        let lo = 2.0 * hi;
        let c = integrate(lo, hi, (hi - lo) / 8.0, &mut h);
        if !c.is_finite() {
            return None;
        }
        contributions.push(c);
        total += c;
    }
    let tail = &contributions[WINDOWS - 6..];
    let decaying = tail
        .windows(2)
        .all(|w| w[1] == 0.0 || (w[0] > 0.0 && w[1] / w[0] <= 0.9));
    decaying.then_some(total)
}

/// Both admissibility integrals for `Φ(θ, s) = a(θ) σ(s)`.
fn separable_admissibility(
    a: impl Fn(f64) -> f64,
    sigma_norm: f64,
    p: f64,
    horizon: f64,
) -> Result<Admissibility> {
    let hat = |u: f64| if u <= 0.0 { a(u) } else { 0.0 };
    // ∫_t^{min(t+T, 0)} |a(u)|² du
    let inner = |t: f64| integrate(t, (t + horizon).min(0.0), horizon / 4.0, |u| hat(u).powi(2));
    let first = half_line(horizon, |t| inner(t).powf(p / 2.0)).ok_or_else(|| {
        Error::Inadmissible("first admissibility integral diverges (history tail too heavy)".into())
    })?;
    // ∫_{-∞}^{-r} |a(r+t)|^p dt = ∫_{-∞}^0 |a|^p does not depend on r.
    let lp = half_line(horizon, |u| hat(u).abs().powf(p)).ok_or_else(|| {
        Error::Inadmissible("second admissibility integral diverges (history not in L^p)".into())
    })?;
    Ok(Admissibility {
        first: sigma_norm.powf(p) * first,
        second: sigma_norm.powi(2) * horizon * lp.powf(2.0 / p),
    })
}

/// Admissibility integrals of an initial history on `[0, T]`. Sampled
/// histories are taken to vanish beyond their grid.
pub fn admissibility(
    history: &History,
    basis: &Basis,
    p: f64,
    horizon: f64,
) -> Result<Admissibility> {
    match history {
        History::Zero { .. } => Ok(Admissibility {
            first: 0.0,
            second: 0.0,
        }),
        History::Constant(x) => separable_admissibility(|_| 1.0, basis.lp_norm(x, p)?, p, horizon),
        History::Separable { profile, shape } => {
            separable_admissibility(|t| profile.value(t), basis.lp_norm(shape, p)?, p, horizon)
        }
        History::Sampled(seg) => {
            let grid = seg.grid();
            let q = basis.points();
            let h = basis.grid.spacing();
            let values: Vec<Vec<f64>> = (0..grid.len())
                .map(|j| {
                    let mut v = vec![0.0; q];
                    basis.synthesize(seg.value(j), &mut v);
                    v
                })
                .collect();
            let mut first = 0.0;
            let mut lp = 0.0;
            for s in 0..q {
                let a = |u: f64| -> f64 {
                    match grid.locate(u) {
                        Some((j, f)) if f == 0.0 => values[j][s],
                        Some((j, f)) => (1.0 - f) * values[j][s] + f * values[j + 1][s],
                        None => 0.0,
                    }
                };
                let r = grid.radius();
                let inner = |t: f64| {
                    integrate(t.max(-r), (t + horizon).min(0.0), horizon / 4.0, |u| {
                        a(u).powi(2)
                    })
                };
                first += h * integrate(-r, 0.0, horizon / 4.0, |t| inner(t).powf(p / 2.0));
                lp += h * integrate(-r, 0.0, horizon / 4.0, |u| a(u).abs().powf(p));
            }
            Ok(Admissibility {
                first,
                second: horizon * lp.powf(2.0 / p),
            })
        }
        History::Restart { .. } => Err(Error::Unsupported(
            "admissibility of restart histories is not computed".into(),
        )),
    }
}

/// The assembled problem together with its closed-form constants.
#[derive(Debug, Clone)]
pub struct HeatMem {
    pub params: HeatMemParams,
    pub spec: ProblemSpec,
    pub drift: Arc<MemoryDrift>,
    pub diffusion: Arc<MemoryDiffusion>,
    pub admissibility: Admissibility,
    /// `Σ_{n > N_H} c_n²`, the neglected noise variance.
    pub noise_tail: f64,
}

impl HeatMem {
    pub fn drift_lipschitz(&self) -> f64 {
        self.drift.lipschitz(self.params.p)
    }

    pub fn diffusion_lipschitz(&self) -> f64 {
        self.diffusion.lipschitz(self.params.p)
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.spec.basis
    }
}

fn noise_tail(c0: f64, q: f64, from: usize) -> f64 {
    let cut = 1_000_000usize.max(from + 1);
    let s: f64 = (from + 1..=cut).map(|n| (n as f64).powf(-2.0 * q)).sum();
    c0 * c0 * (s + (cut as f64).powf(1.0 - 2.0 * q) / (2.0 * q - 1.0))
}

/// Assembles the problem; `dt` sets the resolution of the history grid near `0`.
pub fn build_problem(params: &HeatMemParams, dt: f64) -> Result<HeatMem> {
    if !(params.q > 0.5) {
        return Err(Error::Inadmissible(format!(
            "c_n = c0 n^(-q) needs q > 1/2 for Σ c_n² < ∞, got q = {}",
            params.q
        )));
    }
    if params.drift_saturation.is_some_and(|s| !(s > 0.0)) {
        return Err(Error::domain("drift saturation level must be positive"));
    }
    let exponents = Exponents {
        p: params.p,
        alpha: params.alpha,
        ..Exponents::default()
    };
    exponents.validate()?;
    let op = DirichletLaplacian1D::new(params.length, params.modes)?;
    let basis = Basis::new(op, params.points)?;
    let noise_modes = params.noise_modes.unwrap_or(params.modes);
    if noise_modes == 0 || noise_modes > params.modes {
        return Err(Error::domain(format!(
            "noise modes must lie in 1..={}, got {noise_modes}",
            params.modes
        )));
    }
    let hc = params.history;
    if hc.mode == 0 || hc.mode > params.modes {
        return Err(Error::domain("history mode outside the spectral range"));
    }
    // sin(mπs/ℓ) = (ℓ/2)^{1/2} e_m(s)
    let coeff = hc.amplitude * (params.length / 2.0).sqrt();
    let shape = SpectralField::mode(params.modes, basis.grid, hc.mode, coeff);
    let history = Arc::new(History::Separable {
        profile: hc.profile,
        shape: shape.clone(),
    });
    let admissibility = admissibility(&history, &basis, params.p, params.horizon)?;

    let weight = WeightFunction::Constant;
    let bound = match hc.profile {
        TemporalProfile::Exponential { rate } => HistoryBound::ExpDecay {
            scale: hc.amplitude.abs(),
            rate,
        },
        TemporalProfile::Algebraic { exponent } => HistoryBound::Algebraic {
            scale: hc.amplitude.abs(),
            exponent,
        },
        TemporalProfile::Constant => HistoryBound::Bounded {
            sup: hc.amplitude.abs(),
        },
    };
    let history_grid = HistoryGrid::for_history(
        &weight,
        params.p,
        bound,
        params.horizon,
        params.tail_eps,
        params.history_nodes,
        dt / 2.0,
    )?;
    let drift = Arc::new(MemoryDrift {
        gain: params.kappa_f,
        saturation: params.drift_saturation,
        basis: basis.clone(),
    });
    let amplitudes: Vec<f64> = (1..=noise_modes)
        .map(|n| params.c0 * (n as f64).powf(-params.q))
        .collect();
    let diffusion = Arc::new(MemoryDiffusion {
        amplitudes,
        coupling: params.coupling,
        anticipating: params.anticipating,
        basis: basis.clone(),
    });
    let spec = ProblemSpec {
        basis,
        drift: drift.clone(),
        diffusion: diffusion.clone(),
        history,
        weight,
        history_grid,
        exponents,
        horizon: params.horizon,
    };
    spec.validate()?;
    Ok(HeatMem {
        params: *params,
        spec,
        drift,
        diffusion,
        admissibility,
        noise_tail: noise_tail(params.c0, params.q, noise_modes),
    })
}

/// Observed Lipschitz ratios next to their closed-form bounds.
#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    pub trials: usize,
    /// `max |f(φ) - f(ψ)| / ‖φ - ψ‖_{L^p(-∞,0]}` over scalar history pairs.
    pub drift_ratio: f64,
    pub drift_bound: f64,
    /// Ratio on the Hölder-extremal direction `e^{θ/(p-1)}` (near zero).
    pub drift_extremal_ratio: f64,
    /// `(Σ_n max_s |b_n(s,φ) - b_n(s,ψ)|² / ‖φ - ψ‖²)^{1/2}`.
    pub diffusion_ratio: f64,
    pub diffusion_bound: f64,
    /// Ratio of the `γ(L²(0,T;H), E)` distance of `B(·,φ_·) - B(·,ψ_·)` to the
    /// `L²_γ(0,T; L^p((-∞,0]×S))` distance of the segments.
    pub diffusion_gamma_ratio: f64,
}

impl LipschitzReport {
    /// Both ratios within `slack` (relative) of their bounds.
    pub fn within(&self, slack: f64) -> bool {
        let ok = |r: f64, b: f64| r <= b * (1.0 + slack) + 1e-14;
        ok(self.drift_ratio, self.drift_bound)
            && ok(self.diffusion_ratio, self.diffusion_bound)
            && ok(self.diffusion_gamma_ratio, self.diffusion_bound)
    }
}

/// Random scalar history on the grid nodes: a mix of decaying exponentials,
/// an oscillation and a random walk.
fn random_history(rng: &mut impl rand::Rng, nodes: &[f64]) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let a: f64 = StandardNormal.sample(rng);
    let rate = 0.2 + 3.0 * rng.random::<f64>();
    let b: f64 = StandardNormal.sample(rng);
    let freq = 0.5 + 5.0 * rng.random::<f64>();
    let walk_scale: f64 = 0.3 * rng.random::<f64>();
    let mut walk = 0.0;
    let mut out = Vec::with_capacity(nodes.len());
    let mut prev = 0.0;
    for &t in nodes {
        let z: f64 = StandardNormal.sample(rng);
        walk += walk_scale * z * (prev - t).abs().sqrt();
        prev = t;
        out.push(
            a * (rate * t).exp() + b * (freq * t).sin() * (0.5 * t).exp() + walk * (0.3 * t).exp(),
        );
    }
    out
}

/// Samples `trials` scalar history pairs (plus the extremal direction) and
/// compares the observed Lipschitz ratios of `f` and `b_n` with `L_f` and `L`.
pub fn verify_lipschitz(problem: &HeatMem, trials: usize, seed: u64) -> Result<LipschitzReport> {
    if trials < 100 {
        return Err(Error::domain("at least 100 trials are required"));
    }
    let p = problem.params.p;
    let grid = problem.spec.history_grid.clone();
    let nodes = grid.nodes();
    let weights = grid.weights();
    let basis = problem.basis();
    let lp = |v: &[f64]| -> f64 {
        v.iter()
            .zip(weights)
            .map(|(x, w)| w * x.abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    };
    let mem = |v: &[f64]| -> f64 {
        v.iter()
            .zip(nodes.iter().zip(weights))
            .map(|(x, (t, w))| w * t.exp() * x)
            .sum()
    };
    let sup_e: Vec<f64> = (1..=problem.diffusion.amplitudes.len())
        .map(|n| {
            (0..basis.points())
                .map(|q| basis.basis_value(q, n).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let coupling = problem.diffusion.coupling;
    let amps = &problem.diffusion.amplitudes;
    let mut rng = stream_rng(seed, 0x11F);
    let mut drift_ratio: f64 = 0.0;
    let mut mode_ratio = vec![0.0f64; amps.len()];
    let mut record = |phi: &[f64], psi: &[f64]| -> f64 {
        let d: Vec<f64> = phi.iter().zip(psi).map(|(a, b)| a - b).collect();
        let norm = lp(&d);
        if norm == 0.0 {
            return 0.0;
        }
        let (mp, mq) = (mem(phi), mem(psi));
        let r = (problem.drift.scalar(mp) - problem.drift.scalar(mq)).abs() / norm;
        drift_ratio = drift_ratio.max(r);
        let dchi = (coupling.apply(mp) - coupling.apply(mq)).abs() / norm;
        for ((m, c), e) in mode_ratio.iter_mut().zip(amps).zip(&sup_e) {
            *m = m.max(c.abs() * e * dchi);
        }
        r
    };
    for _ in 0..trials {
        let phi = random_history(&mut rng, nodes);
        let psi = random_history(&mut rng, nodes);
        record(&phi, &psi);
    }
    // Hölder-extremal direction, small enough to see sat'(0) = 1.
    let eps = 1e-6;
    let extremal: Vec<f64> = nodes.iter().map(|t| eps * (t / (p - 1.0)).exp()).collect();
    let zero = vec![0.0; nodes.len()];
    let drift_extremal_ratio = record(&extremal, &zero);
    let diffusion_ratio = mode_ratio.iter().map(|r| r * r).sum::<f64>().sqrt();
    let diffusion_gamma_ratio = diffusion_gamma_chain(problem, 24, seed)?;
    Ok(LipschitzReport {
        trials,
        drift_ratio,
        drift_bound: problem.drift_lipschitz(),
        drift_extremal_ratio,
        diffusion_ratio,
        diffusion_bound: problem.diffusion_lipschitz(),
        diffusion_gamma_ratio,
    })
}

/// Square-function form of the diffusion estimate: for random space–time
/// segment families `φ_t, ψ_t` at `times` uniform times in `[0, T]`,
/// `‖(Σ_n ∫|b_n(φ_t) - b_n(ψ_t)|² dt)^{1/2}‖_{L^p(S)}` over
/// `‖(∫‖(φ-ψ)_t(·,s)‖²_{L^p(-∞,0]} dt)^{1/2}‖_{L^p(S)}`.
fn diffusion_gamma_chain(problem: &HeatMem, times: usize, seed: u64) -> Result<f64> {
    let p = problem.params.p;
    let basis = problem.basis();
    let grid = problem.spec.history_grid.clone();
    let nodes = grid.nodes();
    let weights = grid.weights();
    let q = basis.points();
    let amps = &problem.diffusion.amplitudes;
    let coupling = problem.diffusion.coupling;
    let dt = problem.params.horizon / times as f64;
    let mut rng = stream_rng(seed, 0x6A11);
    let mut lhs = vec![0.0; q];
    let mut rhs = vec![0.0; q];
    // Each family: φ_t(θ, s) = Σ_m u_m(θ) A_{t,m} v_m(s) with scalar histories u_m.
    let terms = 3;
    let fam = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..terms).map(|_| random_history(rng, nodes)).collect()
    };
    let (u_phi, u_psi) = (fam(&mut rng), fam(&mut rng));
    let spatial: Vec<Vec<f64>> = (0..terms)
        .map(|m| (0..q).map(|s| basis.basis_value(s, m + 1)).collect())
        .collect();
    for _ in 0..times {
        use rand_distr::{Distribution, StandardNormal};
        let a: Vec<f64> = (0..2 * terms)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        for s in 0..q {
            let mut d = vec![0.0; nodes.len()];
            let (mut mp, mut mq) = (0.0, 0.0);
            for (j, (t, w)) in nodes.iter().zip(weights).enumerate() {
                let mut fp = 0.0;
                let mut fq = 0.0;
                for m in 0..terms {
                    fp += a[m] * u_phi[m][j] * spatial[m][s];
                    fq += a[terms + m] * u_psi[m][j] * spatial[m][s];
                }
                d[j] = fp - fq;
                mp += w * t.exp() * fp;
                mq += w * t.exp() * fq;
            }
            let seg_norm = d
                .iter()
                .zip(weights)
                .map(|(x, w)| w * x.abs().powf(p))
                .sum::<f64>()
                .powf(1.0 / p);
            rhs[s] += dt * seg_norm * seg_norm;
            let dchi = coupling.apply(mp) - coupling.apply(mq);
            let sum_b: f64 = amps
                .iter()
                .enumerate()
                .map(|(n, c)| (c * basis.basis_value(s, n + 1) * dchi).powi(2))
                .sum();
            lhs[s] += dt * sum_b;
        }
    }
    lhs.iter_mut()
        .chain(rhs.iter_mut())
        .for_each(|v| *v = v.sqrt());
    let denom = basis.lp_norm_values(&rhs, p);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(basis.lp_norm_values(&lhs, p) / denom)
}

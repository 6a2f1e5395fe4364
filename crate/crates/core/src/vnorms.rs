//! Solution-space norms `V^p_{α,∞}`, `V^p_{α,p}` and the Hölder diagnostic.
//!
//! For an ensemble of paths on a uniform grid,
//!
//! ```text
//! ‖φ‖_{V^p_{α,∞}} = (E sup_t ‖φ(t)‖^p)^{1/p} + sup_t (E ‖s ↦ (t-s)^{-α} φ(s)‖^p_{γ(L²(0,t),E)})^{1/p}
//! ```
//!
//! and `V^p_{α,p}` replaces the second supremum by `(∫_0^T … dt)^{1/p}`.
//! Expectations are ensemble means; the path is taken piecewise constant at
//! left endpoints inside the γ-norm and the singular weight is integrated
//! exactly per cell (the measure `μ_{t,α}`).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gamma::{gamma_norm_mc, GammaOperator, TargetNorm};
use crate::path::MildPath;
use crate::spectral::{check_exponent, Basis};
use crate::stats::MeanEstimate;

/// How the time variable is aggregated in the γ-part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    /// `V^p_{α,∞}`: supremum over the time grid.
    #[default]
    Sup,
    /// `V^p_{α,p}`: trapezoid integral over the time grid.
    Integrated,
}

/// How `‖·‖_{γ(L²(0,t),L^p(S))}` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaMethod {
    /// Square function `‖(∫ (t-s)^{-2α} |φ(s,·)|² ds)^{1/2}‖_{L^p(S)}`, equivalent
    /// to the γ-norm on `L^p` and equal to it for rank-one integrands.
    #[default]
    SquareFunction,
    /// Monte Carlo over Gaussian sums with the given budget.
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VNormConfig {
    pub alpha: f64,
    pub p: f64,
    /// Interpolation order of the state space `E_η`.
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub flavor: Flavor,
    #[serde(default)]
    pub gamma: GammaMethod,
}

impl Default for VNormConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            p: 4.0,
            eta: 0.0,
            flavor: Flavor::Sup,
            gamma: GammaMethod::SquareFunction,
        }
    }
}

impl VNormConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::domain(format!(
                "α must lie in (0, 1/2), got {}",
                self.alpha
            )));
        }
        check_exponent(self.p)?;
        if !(self.eta >= 0.0) {
            return Err(Error::domain("η must be nonnegative"));
        }
        Ok(())
    }
}

/// Cell masses of `μ_{t,α}(B) = ∫_0^t (t-s)^{-2α} 1_B(s) ds` for the cells
/// `[s_j, s_{j+1}]` of `nodes` (increasing, inside `[0, t]`).
pub fn mu_weights(t: f64, alpha: f64, nodes: &[f64]) -> Result<Vec<f64>> {
    if !(0.0..0.5).contains(&alpha) {
        return Err(Error::domain(format!(
            "(t-s)^(-2α) is not integrable for α = {alpha}"
        )));
    }
    if nodes.windows(2).any(|w| !(w[1] > w[0])) || nodes.first().is_some_and(|s| *s < 0.0) {
        return Err(Error::domain("nodes must be increasing and nonnegative"));
    }
    if nodes.last().is_some_and(|s| *s > t) {
        return Err(Error::domain("nodes extend past t"));
    }
    let beta = 1.0 - 2.0 * alpha;
    let anti = |s: f64| (t - s).max(0.0).powf(beta) / beta;
    Ok(nodes.windows(2).map(|w| anti(w[0]) - anti(w[1])).collect())
}

/// `c_m = (m^β - (m-1)^β) / β`, so that on a uniform grid the cell
/// `[t_j, t_{j+1}]` carries `μ = Δt^β c_{i-j}` as seen from `t_i`.
fn uniform_mu_table(steps: usize, alpha: f64) -> Vec<f64> {
    let beta = 1.0 - 2.0 * alpha;
    (0..=steps)
        .map(|m| {
            if m == 0 {
                0.0
            } else {
                ((m as f64).powf(beta) - ((m - 1) as f64).powf(beta)) / beta
            }
        })
        .collect()
}

/// Result of a V-norm estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VNormReport {
    pub value: f64,
    pub sup_part: f64,
    pub gamma_part: f64,
    pub sup_std_err: f64,
    pub gamma_std_err: f64,
    /// The two part errors combined in quadrature.
    pub std_err: f64,
    pub paths: usize,
}

/// Per-path ingredients: `sup_t ‖φ‖^p` and `‖γ_i‖^p` for every grid time.
struct PathTerms {
    sup_p: f64,
    gamma_p: Vec<f64>,
}

/// Point values of the components whose norms add up to the `E_η` norm.
fn components(basis: &Basis, data: &[f64], eta: f64) -> Vec<Vec<f64>> {
    let n = basis.modes();
    let q = basis.points();
    let nodes = data.len() / n;
    let mut comps = vec![data.to_vec()];
    if eta != 0.0 {
        let mut scaled = Vec::with_capacity(data.len());
        for i in 0..nodes {
            scaled.extend(basis.frac_power_coeffs(&data[i * n..(i + 1) * n], eta));
        }
        comps.push(scaled);
    }
    comps
        .into_iter()
        .map(|c| {
            let mut vals = vec![0.0; nodes * q];
            for i in 0..nodes {
                basis.synthesize(&c[i * n..(i + 1) * n], &mut vals[i * q..(i + 1) * q]);
            }
            vals
        })
        .collect()
}

fn path_terms(
    basis: &Basis,
    dt: f64,
    data: &[f64],
    cfg: &VNormConfig,
    exec: Exec,
) -> Result<PathTerms> {
    let q = basis.points();
    let p = cfg.p;
    let nodes = data.len() / basis.modes();
    let comps = components(basis, data, cfg.eta);
    let mut sup: f64 = 0.0;
    for i in 0..nodes {
        let norm: f64 = comps
            .iter()
            .map(|c| basis.lp_norm_values(&c[i * q..(i + 1) * q], p))
            .sum();
        sup = sup.max(norm);
    }
    let beta = 1.0 - 2.0 * cfg.alpha;
    let table = uniform_mu_table(nodes, cfg.alpha);
    let scale = dt.powf(beta);
    let gamma_at = |i: usize| -> Result<f64> {
        if i == 0 {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for (ci, c) in comps.iter().enumerate() {
            total += match cfg.gamma {
                GammaMethod::SquareFunction => {
                    let mut acc = vec![0.0; q];
                    for j in 0..i {
                        let mu = scale * table[i - j];
                        for (a, v) in acc.iter_mut().zip(&c[j * q..(j + 1) * q]) {
                            *a += mu * v * v;
                        }
                    }
                    acc.iter_mut().for_each(|a| *a = a.sqrt());
                    basis.lp_norm_values(&acc, p)
                }
                GammaMethod::MonteCarlo { samples, seed } => {
                    let m =
                        DMatrix::from_fn(q, i, |r, j| (scale * table[i - j]).sqrt() * c[j * q + r]);
                    let op = GammaOperator::new(m, TargetNorm::lp_grid(basis, p))?;
                    let stream = seed.wrapping_add((i * 2 + ci) as u64);
                    gamma_norm_mc(&op, samples, stream, Exec::Sequential)?.value
                }
            };
        }
        Ok(total.powf(p))
    };
    let gamma_p = exec.try_map(nodes, gamma_at)?;
    Ok(PathTerms {
        sup_p: sup.powf(p),
        gamma_p,
    })
}

/// `(mean)^{1/p}` with the delta-method error.
fn root_estimate(samples: &[f64], p: f64) -> (f64, f64) {
    let est = MeanEstimate::from_samples(samples);
    let mean = est.mean.max(0.0);
    let value = mean.powf(1.0 / p);
    let se = if mean > 0.0 {
        est.std_err * value / (p * mean)
    } else {
        0.0
    };
    (value, se)
}

/// V-norm of an ensemble given as flat node arrays on a common grid.
pub fn v_norm_raw(
    basis: &Basis,
    dt: f64,
    paths: &[&[f64]],
    cfg: &VNormConfig,
    exec: Exec,
) -> Result<VNormReport> {
    cfg.validate()?;
    let first = paths
        .first()
        .ok_or_else(|| Error::domain("V-norm of an empty ensemble"))?;
    let n = basis.modes();
    if paths
        .iter()
        .any(|d| d.len() != first.len() || d.len() % n != 0 || d.is_empty())
    {
        return Err(Error::structural("ensemble paths have different grids"));
    }
    // Parallelise across paths when there are several, across times otherwise.
    let (outer, inner) = if paths.len() > 1 {
        (exec, Exec::Sequential)
    } else {
        (Exec::Sequential, exec)
    };
    let terms = outer.try_map(paths.len(), |k| path_terms(basis, dt, paths[k], cfg, inner))?;
    let sups: Vec<f64> = terms.iter().map(|t| t.sup_p).collect();
    let (sup_part, sup_std_err) = root_estimate(&sups, cfg.p);
    let nodes = first.len() / n;
    let (gamma_part, gamma_std_err) = match cfg.flavor {
        Flavor::Sup => {
            let mut best = (0.0, 0.0);
            for i in 1..nodes {
                let col: Vec<f64> = terms.iter().map(|t| t.gamma_p[i]).collect();
                let r = root_estimate(&col, cfg.p);
                if r.0 > best.0 {
                    best = r;
                }
            }
            best
        }
        Flavor::Integrated => {
            let per_path: Vec<f64> = terms
                .iter()
                .map(|t| {
                    (1..nodes)
                        .map(|i| {
                            let w = if i == nodes - 1 { 0.5 * dt } else { dt };
                            w * t.gamma_p[i]
                        })
                        .sum::<f64>()
                        + 0.5 * dt * t.gamma_p[0]
                })
                .collect();
            root_estimate(&per_path, cfg.p)
        }
    };
    Ok(VNormReport {
        value: sup_part + gamma_part,
        sup_part,
        gamma_part,
        sup_std_err,
        gamma_std_err,
        std_err: sup_std_err.hypot(gamma_std_err),
        paths: paths.len(),
    })
}

/// V-norm of an ensemble of paths sharing one time grid.
pub fn v_norm(
    paths: &[MildPath],
    basis: &Basis,
    cfg: &VNormConfig,
    exec: Exec,
) -> Result<VNormReport> {
    let first = paths
        .first()
        .ok_or_else(|| Error::domain("V-norm of an empty ensemble"))?;
    if paths.iter().any(|p| p.dt() != first.dt()) {
        return Err(Error::structural(
            "ensemble paths have different time steps",
        ));
    }
    let data: Vec<&[f64]> = paths.iter().map(|p| p.data()).collect();
    v_norm_raw(basis, first.dt(), &data, cfg, exec)
}

/// Parameters of the Hölder diagnostic `(E‖U - SΦ(0)‖^p_{C^λ([0,T];E_δ)})^{1/p}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderConfig {
    pub lambda: f64,
    pub delta: f64,
    pub p: f64,
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub theta_f: f64,
    #[serde(default)]
    pub theta_b: f64,
}

impl HolderConfig {
    /// `min{1/2 - 1/p - θ_B, 1 - θ_F}`, the bound on `λ + δ`.
    pub fn admissible_bound(&self) -> f64 {
        (0.5 - 1.0 / self.p - self.theta_b).min(1.0 - self.theta_f)
    }

    pub fn validate(&self) -> Result<()> {
        check_exponent(self.p)?;
        if !(self.lambda >= 0.0) || !(self.delta >= self.eta) || self.eta < 0.0 {
            return Err(Error::domain(format!(
                "need λ ≥ 0 and δ ≥ η, got λ = {}, δ = {}, η = {}",
                self.lambda, self.delta, self.eta
            )));
        }
        let bound = self.admissible_bound();
        if !(self.lambda + self.delta < bound) {
            return Err(Error::domain(format!(
                "λ + δ = {} is not below the admissible bound {bound}",
                self.lambda + self.delta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderReport {
    pub estimate: f64,
    pub std_err: f64,
    pub paths: usize,
}

fn holder_path(basis: &Basis, path: &MildPath, cfg: &HolderConfig) -> f64 {
    let n = basis.modes();
    let q = basis.points();
    let head = path.history().head();
    let eig = basis.eigenvalues();
    let nodes = path.steps() + 1;
    let mut w = Vec::with_capacity(nodes * n);
    for i in 0..nodes {
        let t = path.time(i);
        for ((a, x0), l) in path.value(i).iter().zip(&head.coeffs).zip(eig) {
            w.push(a - (-l * t).exp() * x0);
        }
    }
    let comps = components(basis, &w, cfg.delta);
    let norm_at = |i: usize| -> f64 {
        comps
            .iter()
            .map(|c| basis.lp_norm_values(&c[i * q..(i + 1) * q], cfg.p))
            .sum()
    };
    let mut sup: f64 = (0..nodes).map(norm_at).fold(0.0, f64::max);
    let mut semi: f64 = 0.0;
    let mut diff = vec![0.0; q];
    for i in 1..nodes {
        for j in 0..i {
            let mut norm = 0.0;
            for c in &comps {
                let (a, b) = (&c[i * q..(i + 1) * q], &c[j * q..(j + 1) * q]);
                diff.iter_mut()
                    .zip(a.iter().zip(b))
                    .for_each(|(d, (x, y))| *d = x - y);
                norm += basis.lp_norm_values(&diff, cfg.p);
            }
            let gap = (i - j) as f64 * path.dt();
            semi = semi.max(norm / gap.powf(cfg.lambda));
        }
    }
    sup += semi;
    sup
}

/// Empirical `C^λ([0,T]; E_δ)` norm of `U - S(·)Φ(0)`, taken over all pairs
/// of grid times, in `L^p(Ω)` over the ensemble.
pub fn holder_diagnostic(
    paths: &[MildPath],
    basis: &Basis,
    cfg: &HolderConfig,
    exec: Exec,
) -> Result<HolderReport> {
    cfg.validate()?;
    if paths.is_empty() {
        return Err(Error::domain("Hölder diagnostic of an empty ensemble"));
    }
    let values: Vec<f64> = exec
        .map(paths.len(), |k| holder_path(basis, &paths[k], cfg))
        .into_iter()
        .map(|h| h.powf(cfg.p))
        .collect();
    let (estimate, std_err) = root_estimate(&values, cfg.p);
    Ok(HolderReport {
        estimate,
        std_err,
        paths: paths.len(),
    })
}

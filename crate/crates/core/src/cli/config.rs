//! The TOML run configuration. Every section has defaults, so an empty file
//! describes the default heat-with-memory experiment.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmem::{build_problem, Coupling, HeatMem, HeatMemParams, HistoryChoice};
use crate::solver::{
    AdditiveDiffusion, Diffusion, Drift, ExpMemoryDrift, Exponents, HeadDrift, IntervalRule,
    ModewiseLinearDiffusion, ProblemSpec, SolverSettings, ZeroDiffusion, ZeroDrift,
};
use crate::spectral::{Basis, DirichletLaplacian1D, SpectralField};
use crate::vnorms::{Flavor, VNormConfig};
use crate::weights::{History, HistoryBound, HistoryGrid, TemporalProfile, WeightFunction};
use crate::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub heatmem: HeatMemSection,
    pub discretization: Discretization,
    pub stochastics: Stochastics,
    pub solver: SolverSection,
    pub output: OutputSection,
    pub verify: VerifySection,
    pub convergence: ConvergenceSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSection {
    /// The perturbed heat equation with memory, parameterised by `[heatmem]`.
    #[default]
    Heatmem,
    Custom(CustomProblem),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftChoice {
    Zero,
    /// `F(φ) = gain · φ(0)`.
    Head {
        gain: f64,
    },
    /// `F(φ) = gain · ∫ e^{rate θ} φ(θ) dθ`.
    Memory {
        gain: f64,
        rate: f64,
    },
}

/// Diffusions with per-mode gains `sigma · n^{-decay}`, `n = 1..N_H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiffusionChoice {
    Zero,
    Additive { sigma: f64, decay: f64 },
    ModewiseLinear { sigma: f64, decay: f64 },
}

impl DiffusionChoice {
    fn gains(sigma: f64, decay: f64, noise_modes: usize) -> Vec<f64> {
        (1..=noise_modes)
            .map(|n| sigma * (n as f64).powf(-decay))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomProblem {
    pub drift: DriftChoice,
    pub diffusion: DiffusionChoice,
    #[serde(default)]
    pub history: HistoryChoice,
    #[serde(default)]
    pub weight: WeightFunction,
    #[serde(default)]
    pub exponents: Option<Exponents>,
}

/// Physical parameters of the heat equation with memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatMemSection {
    pub kappa_f: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift_saturation: Option<f64>,
    pub c0: f64,
    pub q: f64,
    pub coupling: Coupling,
    pub anticipating: bool,
    pub history: HistoryChoice,
}

impl Default for HeatMemSection {
    fn default() -> Self {
        let d = HeatMemParams::default();
        Self {
            kappa_f: d.kappa_f,
            drift_saturation: d.drift_saturation,
            c0: d.c0,
            q: d.q,
            coupling: d.coupling,
            anticipating: d.anticipating,
            history: d.history,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Discretization {
    /// Domain length `ℓ`.
    pub length: f64,
    /// Spectral modes `N`.
    pub modes: usize,
    /// Spatial quadrature points `Q`.
    pub points: usize,
    pub dt: f64,
    /// Final time `T0`.
    pub horizon: f64,
    /// History grid intervals `M`.
    pub history_nodes: usize,
    /// History radius `R`; derived from `tail_eps` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    pub tail_eps: f64,
}

impl Default for Discretization {
    fn default() -> Self {
        Self {
            length: 1.0,
            modes: 64,
            points: 512,
            dt: 0.01,
            horizon: 1.0,
            history_nodes: 256,
            radius: None,
            tail_eps: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stochastics {
    pub seed: u64,
    pub paths: usize,
    /// Noise modes `N_H` (defaults to `N`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_modes: Option<usize>,
}

impl Default for Stochastics {
    fn default() -> Self {
        Self {
            seed: 2024,
            paths: 8,
            noise_modes: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    pub alpha: f64,
    pub p: f64,
    pub flavor: Flavor,
    pub max_halvings: usize,
    pub probes: usize,
    pub contraction_paths: usize,
    /// Fixed interval length in steps; bisection when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval_steps: Option<usize>,
    pub sequential: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            tol: s.tol,
            max_iter: s.max_iter,
            alpha: s.vnorm.alpha,
            p: s.vnorm.p,
            flavor: s.vnorm.flavor,
            max_halvings: s.max_halvings,
            probes: s.probes,
            contraction_paths: s.contraction_paths,
            interval_steps: None,
            sequential: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    /// Write every `stride`-th time node to the path CSV.
    pub stride: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// Acceptance band for Monte Carlo checks, in standard errors.
    pub se_band: f64,
    pub gamma_operators: usize,
    pub gamma_samples: usize,
    pub ito_draws: usize,
    pub km_paths: usize,
    pub lipschitz_trials: usize,
    /// Relative slack of observed Lipschitz ratios over the closed forms.
    pub lipschitz_slack: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            se_band: 4.0,
            gamma_operators: 20,
            gamma_samples: 20_000,
            ito_draws: 10_000,
            km_paths: 100,
            lipschitz_trials: 200,
            lipschitz_slack: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    #[default]
    Step,
    Picard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    pub levels: usize,
    /// Coarsest time step; each level halves it.
    pub coarse_dt: f64,
    pub paths: usize,
    pub solver: SolverChoice,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self {
            levels: 4,
            coarse_dt: 0.04,
            paths: 32,
            solver: SolverChoice::Step,
        }
    }
}

/// A problem assembled from a configuration.
#[derive(Debug, Clone)]
pub struct BuiltProblem {
    pub spec: ProblemSpec,
    pub heatmem: Option<HeatMem>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> Result<String> {
        Ok(super::sha256_hex(self.to_toml()?.as_bytes()))
    }

    pub fn exec(&self) -> Exec {
        if self.solver.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }

    pub fn noise_modes(&self) -> usize {
        self.stochastics
            .noise_modes
            .unwrap_or(self.discretization.modes)
    }

    /// Structural checks plus building the problem once, so that admissibility
    /// failures surface at load time.
    pub fn check(&self) -> Result<()> {
        let d = &self.discretization;
        if !(d.dt > 0.0 && d.horizon > 0.0) {
            return Err(Error::Config("dt and horizon must be positive".into()));
        }
        if self.stochastics.paths == 0 {
            return Err(Error::Config("at least one path is required".into()));
        }
        if self.output.stride == 0 {
            return Err(Error::Config("output stride must be positive".into()));
        }
        if self.convergence.levels < 3 {
            return Err(Error::Config(format!(
                "convergence needs at least 3 levels, got {}",
                self.convergence.levels
            )));
        }
        self.vnorm().validate()?;
        self.build(d.dt)?;
        Ok(())
    }

    pub fn vnorm(&self) -> VNormConfig {
        VNormConfig {
            alpha: self.solver.alpha,
            p: self.solver.p,
            flavor: self.solver.flavor,
            ..VNormConfig::default()
        }
    }

    pub fn solver_settings(&self, dt: f64) -> SolverSettings {
        let s = &self.solver;
        SolverSettings {
            dt,
            tol: s.tol,
            max_iter: s.max_iter,
            max_halvings: s.max_halvings,
            probes: s.probes,
            contraction_paths: s.contraction_paths,
            interval: s
                .interval_steps
                .map_or(IntervalRule::Bisect, IntervalRule::Steps),
            vnorm: self.vnorm(),
            seed: self.stochastics.seed,
            exec: self.exec(),
        }
    }

    pub fn heatmem_params(&self) -> HeatMemParams {
        let d = &self.discretization;
        let h = &self.heatmem;
        HeatMemParams {
            length: d.length,
            modes: d.modes,
            points: d.points,
            p: self.solver.p,
            alpha: self.solver.alpha,
            kappa_f: h.kappa_f,
            drift_saturation: h.drift_saturation,
            c0: h.c0,
            q: h.q,
            noise_modes: self.stochastics.noise_modes,
            coupling: h.coupling,
            anticipating: h.anticipating,
            horizon: d.horizon,
            history: h.history,
            history_nodes: d.history_nodes,
            tail_eps: d.tail_eps,
        }
    }

    /// Assembles the problem with the history grid resolved for time step `dt`.
    pub fn build(&self, dt: f64) -> Result<BuiltProblem> {
        match &self.problem {
            ProblemSection::Heatmem => {
                let mut hm = build_problem(&self.heatmem_params(), dt)?;
                if let Some(r) = self.discretization.radius {
                    hm.spec.history_grid =
                        HistoryGrid::geometric(r, self.discretization.history_nodes, dt / 2.0)?;
                }
                Ok(BuiltProblem {
                    spec: hm.spec.clone(),
                    heatmem: Some(hm),
                })
            }
            ProblemSection::Custom(c) => Ok(BuiltProblem {
                spec: self.build_custom(c, dt)?,
                heatmem: None,
            }),
        }
    }

    fn build_custom(&self, c: &CustomProblem, dt: f64) -> Result<ProblemSpec> {
        let d = &self.discretization;
        let basis = Basis::new(DirichletLaplacian1D::new(d.length, d.modes)?, d.points)?;
        let nh = self.noise_modes();
        let drift: Arc<dyn Drift> = match c.drift {
            DriftChoice::Zero => Arc::new(ZeroDrift),
            DriftChoice::Head { gain } => Arc::new(HeadDrift { gain }),
            DriftChoice::Memory { gain, rate } => Arc::new(ExpMemoryDrift { gain, rate }),
        };
        let diffusion: Arc<dyn Diffusion> = match c.diffusion {
            DiffusionChoice::Zero => Arc::new(ZeroDiffusion { noise_modes: nh }),
            DiffusionChoice::Additive { sigma, decay } => Arc::new(AdditiveDiffusion {
                gains: DiffusionChoice::gains(sigma, decay, nh),
            }),
            DiffusionChoice::ModewiseLinear { sigma, decay } => Arc::new(ModewiseLinearDiffusion {
                gains: DiffusionChoice::gains(sigma, decay, nh),
            }),
        };
        let hc = c.history;
        if hc.mode == 0 || hc.mode > d.modes {
            return Err(Error::Config(
                "history mode outside the spectral range".into(),
            ));
        }
        let shape = SpectralField::mode(
            d.modes,
            basis.grid,
            hc.mode,
            hc.amplitude * (d.length / 2.0).sqrt(),
        );
        let history = Arc::new(History::Separable {
            profile: hc.profile,
            shape,
        });
        let scale = hc.amplitude.abs();
        let bound = match hc.profile {
            TemporalProfile::Exponential { rate } => HistoryBound::ExpDecay { scale, rate },
            TemporalProfile::Algebraic { exponent } => HistoryBound::Algebraic { scale, exponent },
            TemporalProfile::Constant => HistoryBound::Bounded { sup: scale },
        };
        let history_grid = match d.radius {
            Some(r) => HistoryGrid::geometric(r, d.history_nodes, dt / 2.0)?,
            None => HistoryGrid::for_history(
                &c.weight,
                self.solver.p,
                bound,
                d.horizon,
                d.tail_eps,
                d.history_nodes,
                dt / 2.0,
            )?,
        };
        let exponents = c.exponents.unwrap_or(Exponents {
            p: self.solver.p,
            alpha: self.solver.alpha,
            ..Exponents::default()
        });
        let spec = ProblemSpec {
            basis,
            drift,
            diffusion,
            history,
            weight: c.weight,
            history_grid,
            exponents,
            horizon: d.horizon,
        };
        spec.validate()?;
        Ok(spec)
    }
}

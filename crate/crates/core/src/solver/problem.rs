//! Problem data: generator, drift `F`, diffusion `B`, initial history and the
//! exponents that the well-posedness theory constrains.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::Basis;
use crate::stochastic::NoisePast;
use crate::weights::{History, HistoryGrid, HistorySegment, WeightFunction};

/// Drift `F(t, φ_t)` acting on history segments, returning spectral coefficients.
pub trait Drift: Debug + Send + Sync {
    fn eval(&self, t: f64, seg: &HistorySegment, out: &mut [f64]) -> Result<()>;

    /// `true` if `F ≡ 0`, letting solvers skip segment extraction.
    fn is_zero(&self) -> bool {
        false
    }
}

/// Diffusion `B(t, φ_t) ∈ 𝓛(H, E)` on an `N_H`-dimensional truncation of `H`.
pub trait Diffusion: Debug + Send + Sync {
    fn noise_modes(&self) -> usize;

    /// The operator used on the cell starting at `t`. `past` exposes the noise
    /// increments before `t` only; reading later ones is an error.
    fn freeze(&self, t: f64, seg: &HistorySegment, past: NoisePast<'_>) -> Result<FrozenDiffusion>;

    fn is_zero(&self) -> bool {
        false
    }

    /// `true` if `B` does not depend on the state.
    fn is_additive(&self) -> bool {
        false
    }
}

/// `B(t, φ_t)` frozen on one cell, as a map `ℝ^{N_H} → ℝ^N` (coefficients).
#[derive(Debug, Clone)]
pub enum FrozenDiffusion {
    Zero,
    /// `h ↦ Σ_n g_n h_n e_n`.
    Diagonal(Vec<f64>),
    /// `h ↦ P_N[(Σ_n c_n h_n e_n) · m]`: a multiplication operator by the point
    /// values `m` composed with the diagonal amplitudes `c_n`.
    Multiplier {
        amplitudes: Vec<f64>,
        profile: Vec<f64>,
        basis: Arc<Basis>,
    },
    Dense(DMatrix<f64>),
}

impl FrozenDiffusion {
    /// `out = B h`.
    pub fn apply(&self, h: &[f64], out: &mut [f64]) {
        match self {
            FrozenDiffusion::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            FrozenDiffusion::Diagonal(gains) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                for ((o, g), x) in out.iter_mut().zip(gains).zip(h) {
                    *o = g * x;
                }
            }
            FrozenDiffusion::Multiplier {
                amplitudes,
                profile,
                basis,
            } => {
                let mut coeffs = vec![0.0; basis.modes()];
                for ((c, a), x) in coeffs.iter_mut().zip(amplitudes).zip(h) {
                    *c = a * x;
                }
                let mut vals = vec![0.0; basis.points()];
                basis.synthesize(&coeffs, &mut vals);
                vals.iter_mut().zip(profile).for_each(|(v, m)| *v *= m);
                basis.project(&vals, out);
            }
            FrozenDiffusion::Dense(m) => {
                let y = m * DVector::from_column_slice(h);
                out.copy_from_slice(y.as_slice());
            }
        }
    }

    /// The operator as an `N × N_H` coefficient matrix.
    pub fn matrix(&self, modes: usize, noise_modes: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(modes, noise_modes);
        let mut h = vec![0.0; noise_modes];
        let mut col = vec![0.0; modes];
        for n in 0..noise_modes {
            h.iter_mut().for_each(|v| *v = 0.0);
            h[n] = 1.0;
            self.apply(&h, &mut col);
            m.set_column(n, &DVector::from_column_slice(&col));
        }
        m
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, FrozenDiffusion::Zero)
    }
}

/// `F ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDrift;

impl Drift for ZeroDrift {
    fn eval(&self, _t: f64, _seg: &HistorySegment, out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        Ok(())
    }

    fn is_zero(&self) -> bool {
        true
    }
}

/// `F(t, φ) = a · φ(0)`.
#[derive(Debug, Clone, Copy)]
pub struct HeadDrift {
    pub gain: f64,
}

impl Drift for HeadDrift {
    fn eval(&self, _t: f64, seg: &HistorySegment, out: &mut [f64]) -> Result<()> {
        for (o, x) in out.iter_mut().zip(seg.head()) {
            *o = self.gain * x;
        }
        Ok(())
    }
}

/// `F(t, φ) = b ∫_{-∞}^0 e^{rθ} φ(θ) dθ`, mode by mode.
#[derive(Debug, Clone, Copy)]
pub struct ExpMemoryDrift {
    pub gain: f64,
    pub rate: f64,
}

impl Drift for ExpMemoryDrift {
    fn eval(&self, _t: f64, seg: &HistorySegment, out: &mut [f64]) -> Result<()> {
        seg.kernel_integral(|th| (self.rate * th).exp(), out);
        out.iter_mut().for_each(|v| *v *= self.gain);
        Ok(())
    }
}

/// `B ≡ 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroDiffusion {
    pub noise_modes: usize,
}

impl Diffusion for ZeroDiffusion {
    fn noise_modes(&self) -> usize {
        self.noise_modes
    }

    fn freeze(
        &self,
        _t: f64,
        _seg: &HistorySegment,
        _past: NoisePast<'_>,
    ) -> Result<FrozenDiffusion> {
        Ok(FrozenDiffusion::Zero)
    }

    fn is_zero(&self) -> bool {
        true
    }

    fn is_additive(&self) -> bool {
        true
    }
}

/// State-independent `B h = Σ_n σ_n h_n e_n`.
#[derive(Debug, Clone)]
pub struct AdditiveDiffusion {
    pub gains: Vec<f64>,
}

impl Diffusion for AdditiveDiffusion {
    fn noise_modes(&self) -> usize {
        self.gains.len()
    }

    fn freeze(
        &self,
        _t: f64,
        _seg: &HistorySegment,
        _past: NoisePast<'_>,
    ) -> Result<FrozenDiffusion> {
        Ok(FrozenDiffusion::Diagonal(self.gains.clone()))
    }

    fn is_zero(&self) -> bool {
        self.gains.iter().all(|g| *g == 0.0)
    }

    fn is_additive(&self) -> bool {
        true
    }
}

/// Multiplicative `B(φ) h = Σ_n σ_n h_n φ_n(0) e_n`: mode-wise linear noise.
#[derive(Debug, Clone)]
pub struct ModewiseLinearDiffusion {
    pub gains: Vec<f64>,
}

impl Diffusion for ModewiseLinearDiffusion {
    fn noise_modes(&self) -> usize {
        self.gains.len()
    }

    fn freeze(
        &self,
        _t: f64,
        seg: &HistorySegment,
        _past: NoisePast<'_>,
    ) -> Result<FrozenDiffusion> {
        let head = seg.head();
        Ok(FrozenDiffusion::Diagonal(
            self.gains.iter().zip(head).map(|(g, x)| g * x).collect(),
        ))
    }
}

/// The exponents of the well-posedness hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub eta: f64,
    pub theta_f: f64,
    pub theta_b: f64,
    pub p: f64,
    pub alpha: f64,
    /// Type of `E`; metadata only.
    pub tau: f64,
}

impl Default for Exponents {
    fn default() -> Self {
        Self {
            eta: 0.0,
            theta_f: 0.0,
            theta_b: 0.0,
            p: 4.0,
            alpha: 0.3,
            tau: 2.0,
        }
    }
}

impl Exponents {
    /// `0 ≤ η+θ_F < 3/2 - 1/τ`, `0 < η+θ_B+1/p < 1/2` and `η+θ_B < α - 1/p`
    /// with `p > 2`, `α ∈ (0, 1/2)`.
    pub fn validate(&self) -> Result<()> {
        let Exponents {
            eta,
            theta_f,
            theta_b,
            p,
            alpha,
            tau,
        } = *self;
        if !(p > 2.0) {
            return Err(Error::Inadmissible(format!("p must exceed 2, got {p}")));
        }
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::Inadmissible(format!(
                "α must lie in (0, 1/2), got {alpha}"
            )));
        }
        if eta < 0.0 || theta_f < 0.0 || theta_b < 0.0 {
            return Err(Error::Inadmissible("exponents must be nonnegative".into()));
        }
        if !(1.0..=2.0).contains(&tau) {
            return Err(Error::Inadmissible(format!(
                "type τ must lie in [1, 2], got {tau}"
            )));
        }
        if !(eta + theta_f < 1.5 - 1.0 / tau) {
            return Err(Error::Inadmissible(format!(
                "η + θ_F = {} is not below 3/2 - 1/τ = {}",
                eta + theta_f,
                1.5 - 1.0 / tau
            )));
        }
        let b = eta + theta_b + 1.0 / p;
        if !(b > 0.0 && b < 0.5) {
            return Err(Error::Inadmissible(format!(
                "η + θ_B + 1/p = {b} is not in (0, 1/2)"
            )));
        }
        if !(eta + theta_b < alpha - 1.0 / p) {
            return Err(Error::Inadmissible(format!(
                "η + θ_B = {} is not below α - 1/p = {}",
                eta + theta_b,
                alpha - 1.0 / p
            )));
        }
        Ok(())
    }
}

/// Everything needed to define the mild solution on `[0, T0]`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub basis: Arc<Basis>,
    pub drift: Arc<dyn Drift>,
    pub diffusion: Arc<dyn Diffusion>,
    pub history: Arc<History>,
    pub weight: WeightFunction,
    /// Grid on which segments `U_t` are sampled.
    pub history_grid: Arc<HistoryGrid>,
    pub exponents: Exponents,
    pub horizon: f64,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        self.exponents.validate()?;
        self.weight.validate()?;
        if !(self.horizon > 0.0) {
            return Err(Error::domain("horizon must be positive"));
        }
        if self.history.modes() != self.basis.modes() || self.history.spatial() != self.basis.grid {
            return Err(Error::structural(
                "initial history does not live on the basis grid",
            ));
        }
        Ok(())
    }

    pub fn modes(&self) -> usize {
        self.basis.modes()
    }

    pub fn is_deterministic(&self) -> bool {
        self.diffusion.is_zero()
    }

    /// Same problem with a different initial history.
    pub fn with_history(&self, history: Arc<History>) -> Self {
        Self {
            history,
            ..self.clone()
        }
    }
}

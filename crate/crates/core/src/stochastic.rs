//! Seeded cylindrical Brownian motion, adapted step processes and their
//! stochastic integrals, and the exact Ornstein–Uhlenbeck transfer.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::stats::stream_rng;

/// Increments `ΔW_n(i) ~ N(0, Δt)` of an `N_H`-mode truncation of an
/// `H`-cylindrical Brownian motion on a uniform grid.
///
/// Mode `n` of Monte Carlo path `path` draws from its own counter-based stream,
/// so a realization is fully determined by `(seed, path, n)` and is a prefix
/// of every longer realization with the same step.
#[derive(Debug, Clone, PartialEq)]
pub struct CylindricalNoise {
    seed: u64,
    path: u64,
    noise_modes: usize,
    dt: f64,
    /// Row-major `steps × noise_modes`.
    increments: Vec<f64>,
}

/// Stream index for `(path, mode)`; modes occupy the low 20 bits.
pub fn stream_id(path: u64, mode: usize) -> u64 {
    (path << 20) | mode as u64
}

impl CylindricalNoise {
    pub fn generate(
        seed: u64,
        path: u64,
        noise_modes: usize,
        steps: usize,
        dt: f64,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::domain(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if noise_modes >= 1 << 20 {
            return Err(Error::domain("too many noise modes"));
        }
        let mut increments = vec![0.0; steps * noise_modes];
        let scale = dt.sqrt();
        for n in 0..noise_modes {
            let mut rng = stream_rng(seed, stream_id(path, n));
            for i in 0..steps {
                let z: f64 = rng.sample(StandardNormal);
                increments[i * noise_modes + n] = scale * z;
            }
        }
        Ok(Self {
            seed,
            path,
            noise_modes,
            dt,
            increments,
        })
    }

    /// Noise with explicitly given increments (row-major `steps × noise_modes`).
    pub fn from_increments(noise_modes: usize, dt: f64, increments: Vec<f64>) -> Result<Self> {
        if noise_modes == 0 || !increments.len().is_multiple_of(noise_modes) || !(dt > 0.0) {
            return Err(Error::structural("increments do not fill whole cells"));
        }
        Ok(Self {
            seed: 0,
            path: 0,
            noise_modes,
            dt,
            increments,
        })
    }

    /// The same realization on a grid `factor` times coarser: each coarse
    /// increment is the sum of the fine ones it covers.
    pub fn coarsened(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(Error::structural(format!(
                "{} steps are not divisible by {factor}",
                self.steps()
            )));
        }
        let coarse = self.steps() / factor;
        let nh = self.noise_modes;
        let mut increments = vec![0.0; coarse * nh];
        for i in 0..coarse {
            for j in 0..factor {
                let fine = self.cell(i * factor + j);
                for (c, f) in increments[i * nh..(i + 1) * nh].iter_mut().zip(fine) {
                    *c += f;
                }
            }
        }
        Ok(Self {
            dt: self.dt * factor as f64,
            increments,
            ..self.clone()
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path
    }

    pub fn noise_modes(&self) -> usize {
        self.noise_modes
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.increments.len() / self.noise_modes.max(1)
    }

    /// `(ΔW_1(i), …, ΔW_{N_H}(i))`.
    pub fn cell(&self, i: usize) -> &[f64] {
        &self.increments[i * self.noise_modes..(i + 1) * self.noise_modes]
    }

    pub fn increment(&self, i: usize, n: usize) -> f64 {
        self.increments[i * self.noise_modes + n]
    }

    /// `W_n(t_i)`.
    pub fn value(&self, i: usize, n: usize) -> f64 {
        (0..i).map(|j| self.increment(j, n)).sum()
    }

    /// Cells `offset .. offset + steps` as a window starting at local time 0.
    pub fn window(&self, offset: usize, steps: usize) -> Result<NoiseWindow<'_>> {
        if offset + steps > self.steps() {
            return Err(Error::structural(format!(
                "noise window {offset}+{steps} exceeds {} cells",
                self.steps()
            )));
        }
        Ok(NoiseWindow {
            noise: self,
            offset,
            steps,
        })
    }

    pub fn full(&self) -> NoiseWindow<'_> {
        NoiseWindow {
            noise: self,
            offset: 0,
            steps: self.steps(),
        }
    }
}

/// A contiguous range of cells of a [`CylindricalNoise`].
#[derive(Debug, Clone, Copy)]
pub struct NoiseWindow<'a> {
    noise: &'a CylindricalNoise,
    offset: usize,
    steps: usize,
}

impl<'a> NoiseWindow<'a> {
    pub fn noise(&self) -> &'a CylindricalNoise {
        self.noise
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.noise.dt
    }

    pub fn noise_modes(&self) -> usize {
        self.noise.noise_modes
    }

    pub fn cell(&self, i: usize) -> &'a [f64] {
        self.noise.cell(self.offset + i)
    }

    /// Access to the increments strictly before local cell `limit`.
    pub fn past(&self, limit: usize) -> NoisePast<'a> {
        NoisePast {
            window: *self,
            limit,
        }
    }
}

/// The information available when building the integrand of cell `limit`:
/// increments of cells `< limit` only.
#[derive(Debug, Clone, Copy)]
pub struct NoisePast<'a> {
    window: NoiseWindow<'a>,
    limit: usize,
}

impl NoisePast<'_> {
    pub fn limit(&self) -> usize {
        self.limit
    }

    /// `ΔW_n(i)`, refused for `i ≥ limit`.
    pub fn increment(&self, i: usize, n: usize) -> Result<f64> {
        if i >= self.limit {
            return Err(Error::Anticipating {
                step: self.limit,
                index: i,
            });
        }
        Ok(self.window.cell(i)[n])
    }
}

/// A finite-rank step process `Φ = Σ_i 1_{(t_i, t_{i+1}]} ⊗ Φ_i` with
/// `Φ_i : ℝ^{N_H} → ℝ^N` stored as `N × N_H` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct StepProcess {
    dt: f64,
    cells: Vec<DMatrix<f64>>,
    adapted: bool,
}

impl StepProcess {
    /// Builds cell `i` from the noise past `t_i`; reading a later increment
    /// aborts construction with [`Error::Anticipating`].
    pub fn adapted<F>(noise: NoiseWindow<'_>, mut build: F) -> Result<Self>
    where
        F: FnMut(usize, NoisePast<'_>) -> Result<DMatrix<f64>>,
    {
        let mut cells = Vec::with_capacity(noise.steps());
        for i in 0..noise.steps() {
            cells.push(build(i, noise.past(i))?);
        }
        let process = Self {
            dt: noise.dt(),
            cells,
            adapted: true,
        };
        process.check_shapes()?;
        Ok(process)
    }

    /// Deterministic integrand (trivially adapted).
    pub fn deterministic(dt: f64, cells: Vec<DMatrix<f64>>) -> Result<Self> {
        let process = Self {
            dt,
            cells,
            adapted: true,
        };
        process.check_shapes()?;
        Ok(process)
    }

    /// Integrand assembled outside the adapted interface, e.g. from future
    /// increments; flagged as not known to be adapted.
    pub fn from_cells_unchecked(dt: f64, cells: Vec<DMatrix<f64>>) -> Result<Self> {
        let process = Self {
            dt,
            cells,
            adapted: false,
        };
        process.check_shapes()?;
        Ok(process)
    }

    fn check_shapes(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::domain("step process needs a positive step"));
        }
        if let Some(first) = self.cells.first() {
            if self.cells.iter().any(|c| c.shape() != first.shape()) {
                return Err(Error::structural(
                    "step process cells have different shapes",
                ));
            }
        }
        Ok(())
    }

    pub fn is_adapted(&self) -> bool {
        self.adapted
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn cells(&self) -> &[DMatrix<f64>] {
        &self.cells
    }

    pub fn steps(&self) -> usize {
        self.cells.len()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            cells: self.cells.iter().map(|m| m * c).collect(),
            ..self.clone()
        }
    }

    pub fn sum(&self, other: &Self) -> Result<Self> {
        if self.dt != other.dt || self.steps() != other.steps() {
            return Err(Error::structural("step processes on different grids"));
        }
        Ok(Self {
            dt: self.dt,
            cells: self
                .cells
                .iter()
                .zip(&other.cells)
                .map(|(a, b)| a + b)
                .collect(),
            adapted: self.adapted && other.adapted,
        })
    }
}

/// `ξ(t_j) = Σ_{i<j} Φ_i ΔW(i)`: the stochastic integral of a step process,
/// returned at every node (`ξ(0) = 0`).
pub fn integrate_step(process: &StepProcess, noise: NoiseWindow<'_>) -> Result<Vec<Vec<f64>>> {
    let rel = (process.dt - noise.dt()).abs() / noise.dt();
    if rel > 1e-12 || process.steps() > noise.steps() {
        return Err(Error::structural(format!(
            "step process ({} cells of {}) does not fit the noise ({} cells of {})",
            process.steps(),
            process.dt,
            noise.steps(),
            noise.dt()
        )));
    }
    let rows = process.cells.first().map_or(0, |c| c.nrows());
    if let Some(c) = process.cells.first() {
        if c.ncols() != noise.noise_modes() {
            return Err(Error::structural("step process and noise disagree on N_H"));
        }
    }
    let mut acc = DVector::zeros(rows);
    let mut out = Vec::with_capacity(process.steps() + 1);
    out.push(acc.as_slice().to_vec());
    for (i, cell) in process.cells.iter().enumerate() {
        let dw = DVector::from_column_slice(noise.cell(i));
        acc += cell * dw;
        out.push(acc.as_slice().to_vec());
    }
    Ok(out)
}

/// `((1 - e^{-2λΔt}) / (2λ))^{1/2}`, the standard deviation of
/// `∫_0^{Δt} e^{-λ(Δt-s)} dW(s)`.
pub fn ou_transfer_std(lambda: f64, dt: f64) -> f64 {
    if lambda * dt < 1e-8 {
        // series of (1 - e^{-2x})/(2λ) with x = λΔt
        return (dt * (1.0 - lambda * dt)).sqrt();
    }
    (-(-2.0 * lambda * dt).exp_m1() / (2.0 * lambda)).sqrt()
}

/// Exact transition of `da = -λ a dt + σ dW`:
/// `a⁺ = e^{-λΔt} a + σ ((1 - e^{-2λΔt}) / (2λ))^{1/2} ξ`.
pub fn ou_exact_step(a: f64, lambda: f64, sigma: f64, dt: f64, xi: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::domain(format!(
            "OU rate must be positive, got {lambda}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::domain(format!(
            "time step must be positive, got {dt}"
        )));
    }
    Ok((-lambda * dt).exp() * a + sigma * ou_transfer_std(lambda, dt) * xi)
}

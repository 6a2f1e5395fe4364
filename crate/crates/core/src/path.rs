//! Solution paths on a uniform time grid, continued into the past by an
//! initial history.

use std::sync::Arc;

use crate::error::{ensure_finite, Error, Result};
use crate::spectral::{Basis, SpatialGrid, SpectralField};
use crate::weights::History;

/// Anything that can be evaluated as a continuous `E`-valued path on `(-∞, horizon]`.
pub trait Trajectory {
    fn modes(&self) -> usize;
    fn spatial(&self) -> SpatialGrid;
    fn horizon(&self) -> f64;
    /// Coefficients at time `t`; times past the horizon are clamped to it.
    fn eval_into(&self, t: f64, out: &mut [f64]);

    fn eval(&self, t: f64) -> SpectralField {
        let mut v = vec![0.0; self.modes()];
        self.eval_into(t, &mut v);
        SpectralField::from_coeffs(v, self.spatial())
    }
}

/// Identifies the noise realization a path was driven by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseTag {
    pub seed: u64,
    pub path: u64,
    /// Index of the first noise cell used by this path.
    pub offset: usize,
}

/// Per-node coefficients on `t_i = i Δt`, `i = 0..=L`, with linear
/// interpolation between nodes and the attached history before `0`.
#[derive(Debug, Clone)]
pub struct MildPath {
    dt: f64,
    modes: usize,
    spatial: SpatialGrid,
    data: Vec<f64>,
    history: Arc<History>,
    noise: Option<NoiseTag>,
}

fn interpolate(data: &[f64], modes: usize, dt: f64, t: f64, out: &mut [f64]) {
    let last = data.len() / modes - 1;
    let x = t / dt;
    let mut j = x.floor() as usize;
    let mut f = x - j as f64;
    if f > 1.0 - 1e-12 {
        j += 1;
        f = 0.0;
    } else if f < 1e-12 {
        f = 0.0;
    }
    if j >= last {
        out.copy_from_slice(&data[last * modes..]);
        return;
    }
    let a = &data[j * modes..(j + 1) * modes];
    if f == 0.0 {
        out.copy_from_slice(a);
        return;
    }
    let b = &data[(j + 1) * modes..(j + 2) * modes];
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = (1.0 - f) * x + f * y;
    }
}

impl MildPath {
    /// Path from row-major node data (`(L+1) × modes`).
    pub fn new(dt: f64, modes: usize, data: Vec<f64>, history: Arc<History>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::domain(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if modes == 0 || data.is_empty() || !data.len().is_multiple_of(modes) {
            return Err(Error::structural(
                "path data is not a whole number of nodes",
            ));
        }
        if history.modes() != modes {
            return Err(Error::structural(
                "history and path have different mode counts",
            ));
        }
        ensure_finite(&data, "path values")?;
        Ok(Self {
            dt,
            modes,
            spatial: history.spatial(),
            data,
            history,
            noise: None,
        })
    }

    /// Path from per-node fields.
    pub fn from_fields(dt: f64, values: &[SpectralField], history: Arc<History>) -> Result<Self> {
        let modes = history.modes();
        let mut data = Vec::with_capacity(values.len() * modes);
        for v in values {
            if v.modes() != modes {
                return Err(Error::structural("field with the wrong mode count"));
            }
            data.extend_from_slice(&v.coeffs);
        }
        Self::new(dt, modes, data, history)
    }

    /// `t ↦ f(t)` sampled on the grid.
    pub fn from_fn<F>(dt: f64, steps: usize, history: Arc<History>, f: F) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64>,
    {
        let modes = history.modes();
        let mut data = Vec::with_capacity((steps + 1) * modes);
        for i in 0..=steps {
            data.extend(f(i as f64 * dt));
        }
        Self::new(dt, modes, data, history)
    }

    pub fn with_noise(mut self, tag: NoiseTag) -> Self {
        self.noise = Some(tag);
        self
    }

    pub fn with_history(&self, history: Arc<History>) -> Self {
        Self {
            history,
            ..self.clone()
        }
    }

    pub fn noise(&self) -> Option<NoiseTag> {
        self.noise
    }

    pub fn history(&self) -> &Arc<History> {
        &self.history
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.data.len() / self.modes - 1
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.data[i * self.modes..(i + 1) * self.modes]
    }

    pub fn field(&self, i: usize) -> SpectralField {
        SpectralField::from_coeffs(self.value(i).to_vec(), self.spatial)
    }

    pub fn terminal(&self) -> &[f64] {
        self.value(self.steps())
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `max_i ‖φ(t_i)‖_{L^p}` over the grid.
    pub fn sup_norm(&self, basis: &Basis, p: f64) -> f64 {
        (0..=self.steps())
            .map(|i| basis.lp_norm_coeffs(self.value(i), p))
            .fold(0.0, f64::max)
    }

    /// Node-wise difference `self - other` (history of `self` kept).
    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a -= b);
        Ok(out)
    }

    /// `self + c·other` node-wise.
    pub fn axpy(&self, c: f64, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += c * b);
        Ok(out)
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Every `stride`-th node (a coarser grid with step `stride·Δt`).
    pub fn coarsened(&self, stride: usize) -> Result<Self> {
        if stride == 0 || !self.steps().is_multiple_of(stride) {
            return Err(Error::structural(format!(
                "{} steps are not divisible by {stride}",
                self.steps()
            )));
        }
        let mut data = Vec::with_capacity((self.steps() / stride + 1) * self.modes);
        for i in (0..=self.steps()).step_by(stride) {
            data.extend_from_slice(self.value(i));
        }
        Ok(Self {
            dt: self.dt * stride as f64,
            data,
            ..self.clone()
        })
    }

    /// The path restricted to nodes `0..=nodes-1`.
    pub fn view(&self, nodes: usize) -> PathView<'_> {
        PathView {
            dt: self.dt,
            modes: self.modes,
            spatial: self.spatial,
            data: &self.data[..nodes * self.modes],
            history: &self.history,
        }
    }

    /// Path on `[0, (steps)Δt]` whose node `i` is this path's node `start + i`.
    pub fn window(&self, start: usize, steps: usize) -> Result<Self> {
        if start + steps > self.steps() {
            return Err(Error::structural("window exceeds the path"));
        }
        let data = self.data[start * self.modes..(start + steps + 1) * self.modes].to_vec();
        Ok(Self {
            data,
            noise: None,
            ..self.clone()
        })
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.modes != other.modes || self.data.len() != other.data.len() || self.dt != other.dt {
            return Err(Error::structural("paths live on different grids"));
        }
        Ok(())
    }
}

impl Trajectory for MildPath {
    fn modes(&self) -> usize {
        self.modes
    }

    fn spatial(&self) -> SpatialGrid {
        self.spatial
    }

    fn horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        if t < 0.0 {
            self.history.eval_into(t, out);
        } else {
            interpolate(&self.data, self.modes, self.dt, t, out);
        }
    }
}

/// A borrowed prefix of a path under construction.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    dt: f64,
    modes: usize,
    spatial: SpatialGrid,
    data: &'a [f64],
    history: &'a History,
}

impl<'a> PathView<'a> {
    pub fn new(dt: f64, modes: usize, data: &'a [f64], history: &'a History) -> Self {
        Self {
            dt,
            modes,
            spatial: history.spatial(),
            data,
            history,
        }
    }
}

impl Trajectory for PathView<'_> {
    fn modes(&self) -> usize {
        self.modes
    }

    fn spatial(&self) -> SpatialGrid {
        self.spatial
    }

    fn horizon(&self) -> f64 {
        (self.data.len() / self.modes - 1) as f64 * self.dt
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        if t < 0.0 {
            self.history.eval_into(t, out);
        } else {
            interpolate(self.data, self.modes, self.dt, t, out);
        }
    }
}

//! The weighted history space `𝔅 = L^p_g(-∞,0;E) × E`.
//!
//! A history is a function on `(-∞, 0]` together with its value at `0`; its norm
//! is `‖(φ, x)‖_𝔅 = ‖x‖ + (∫ g(θ) ‖φ(θ)‖^p dθ)^{1/p}`. Numerically the half-line
//! is truncated at `-R` and discretised by a [`HistoryGrid`] that is fine near
//! `0` and geometrically coarser towards `-R`; integrals use the trapezoid rule
//! on that grid.

use std::sync::{Arc, OnceLock};

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::path::{MildPath, Trajectory};
use crate::spectral::{check_exponent, Basis, SpatialGrid, SpectralField};

fn gauss_legendre() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(24).expect("24-point Gauss-Legendre rule"))
}

/// Composite Gauss–Legendre quadrature with panels of length at most `panel`.
pub(crate) fn integrate<F: FnMut(f64) -> f64>(a: f64, b: f64, panel: f64, mut f: F) -> f64 {
    if b <= a {
        return 0.0;
    }
    let pieces = ((b - a) / panel).ceil().max(1.0) as usize;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let lo = a + i as f64 * h;
            gauss_legendre().integrate(lo, lo + h, &mut f)
        })
        .sum()
}

/// History weight `g` together with its submultiplicative companion `G`,
/// `g(s + θ) ≤ G(s) g(θ)` for `s, θ ≤ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightFunction {
    /// `g(θ) = e^{rθ}`, `G(s) = e^{rs}`.
    Exponential { rate: f64 },
    /// `g ≡ 1`, `G ≡ 1` (the unweighted space `L^p(-∞,0;E) × E`).
    Constant,
    /// `g(θ) = (1 + |θ|)^{-β}`, `G ≡ 1`.
    Algebraic { exponent: f64 },
}

impl Default for WeightFunction {
    fn default() -> Self {
        WeightFunction::Exponential { rate: 1.0 }
    }
}

impl WeightFunction {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightFunction::Exponential { rate } if !(rate > 0.0) => Err(Error::domain(format!(
                "weight decay rate must be positive, got {rate}"
            ))),
            WeightFunction::Algebraic { exponent } if !(exponent > 0.0) => Err(Error::domain(
                format!("algebraic weight exponent must be positive, got {exponent}"),
            )),
            _ => Ok(()),
        }
    }

    /// `g(θ)` for `θ ≤ 0`.
    pub fn g(&self, theta: f64) -> f64 {
        match *self {
            WeightFunction::Exponential { rate } => (rate * theta).exp(),
            WeightFunction::Constant => 1.0,
            WeightFunction::Algebraic { exponent } => (1.0 + theta.abs()).powf(-exponent),
        }
    }

    /// `G(s)` for `s ≤ 0`.
    pub fn companion(&self, s: f64) -> f64 {
        match *self {
            WeightFunction::Exponential { rate } => (rate * s).exp(),
            WeightFunction::Constant | WeightFunction::Algebraic { .. } => 1.0,
        }
    }

    /// `∫_a^b g` by Gauss–Legendre quadrature (`a ≤ b ≤ 0`).
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        integrate(a, b, 0.5, |x| self.g(x))
    }

    /// `K(t) = 1 + (∫_{-t}^0 g)^{1/p}`.
    pub fn k_fn(&self, t: f64, p: f64) -> Result<f64> {
        check_time(t)?;
        check_exponent(p)?;
        Ok(1.0 + self.integral(-t, 0.0).powf(1.0 / p))
    }

    /// `M(t) = max{(∫_{-t}^0 g)^{1/p}, G(-t)^{1/p}}`.
    pub fn m_fn(&self, t: f64, p: f64) -> Result<f64> {
        check_time(t)?;
        check_exponent(p)?;
        Ok(self
            .integral(-t, 0.0)
            .powf(1.0 / p)
            .max(self.companion(-t).powf(1.0 / p)))
    }

    /// Largest relative violation of `g(s+θ) ≤ G(s) g(θ)` over the sample pairs
    /// (zero when the axiom holds everywhere).
    pub fn submultiplicativity_defect(&self, shifts: &[f64], thetas: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for &s in shifts {
            for &th in thetas {
                let lhs = self.g(s + th);
                let rhs = self.companion(s) * self.g(th);
                worst = worst.max((lhs - rhs) / rhs);
            }
        }
        worst
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be nonnegative, got {t}")));
    }
    Ok(())
}

/// A priori bound on `‖Φ(θ)‖_E`, used to choose the truncation radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HistoryBound {
    Bounded {
        sup: f64,
    },
    /// `‖Φ(θ)‖ ≤ scale · e^{rate θ}`.
    ExpDecay {
        scale: f64,
        rate: f64,
    },
    /// `‖Φ(θ)‖ ≤ scale · (1 + |θ|)^{-exponent}`.
    Algebraic {
        scale: f64,
        exponent: f64,
    },
}

impl HistoryBound {
    /// Upper bound on `∫_{-∞}^{-R} g(θ) ‖Φ(θ)‖^p dθ`.
    pub fn tail_mass(&self, weight: &WeightFunction, p: f64, radius: f64) -> f64 {
        let r = radius;
        match (*self, *weight) {
            (HistoryBound::Bounded { sup }, _) if sup == 0.0 => 0.0,
            (HistoryBound::Bounded { sup }, WeightFunction::Exponential { rate }) => {
                sup.powf(p) * (-rate * r).exp() / rate
            }
            (HistoryBound::Bounded { .. }, WeightFunction::Constant) => f64::INFINITY,
            (HistoryBound::Bounded { sup }, WeightFunction::Algebraic { exponent }) => {
                if exponent > 1.0 {
                    sup.powf(p) * (1.0 + r).powf(1.0 - exponent) / (exponent - 1.0)
                } else {
                    f64::INFINITY
                }
            }
            (HistoryBound::Algebraic { scale, exponent }, w) => {
                let (extra, factor) = match w {
                    WeightFunction::Exponential { rate } => {
                        // g ≤ e^{-rate R} on the tail and |Φ|^p ≤ scale^p
                        return scale.powf(p) * (-rate * r).exp() / rate;
                    }
                    WeightFunction::Constant => (0.0, 1.0),
                    WeightFunction::Algebraic { exponent: b } => (b, 1.0),
                };
                let decay = exponent * p + extra - 1.0;
                if decay <= 0.0 {
                    return f64::INFINITY;
                }
                factor * scale.powf(p) * (1.0 + r).powf(-decay) / decay
            }
            (HistoryBound::ExpDecay { scale, rate }, w) => {
                let (gr, gmax) = match w {
                    WeightFunction::Exponential { rate: wr } => (wr, (-wr * r).exp()),
                    WeightFunction::Constant => (0.0, 1.0),
                    WeightFunction::Algebraic { exponent } => (0.0, (1.0 + r).powf(-exponent)),
                };
                let decay = gr + p * rate;
                if decay <= 0.0 {
                    return f64::INFINITY;
                }
                let base = if gr > 0.0 { 1.0 } else { gmax };
                scale.powf(p) * base * (-decay * r).exp() / decay
            }
        }
    }

    /// Smallest radius (to within 1e-6 relative) with tail mass below `eps`.
    pub fn radius_for_tail(&self, weight: &WeightFunction, p: f64, eps: f64) -> Result<f64> {
        let tail = |r: f64| self.tail_mass(weight, p, r);
        if tail(0.0) <= eps {
            return Ok(1.0);
        }
        let mut hi = 1.0;
        while tail(hi) > eps {
            hi *= 2.0;
            if hi > 1e8 {
                return Err(Error::Inadmissible(format!(
                    "history tail mass does not fall below {eps} for weight {weight:?}"
                )));
            }
        }
        let mut lo = hi / 2.0;
        while hi - lo > 1e-6 * hi {
            let mid = 0.5 * (lo + hi);
            if tail(mid) > eps {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }
}

/// Truncated discretisation `0 = θ_0 > θ_1 > … > θ_M = -R` with trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    radius: f64,
    /// Asserted bound on the neglected weighted mass of the represented history.
    pub tail_bound: f64,
}

impl HistoryGrid {
    /// `intervals` geometric steps growing from `first_step` at `0` to fill `[-R, 0]`.
    /// Falls back to a uniform grid when `first_step ≥ R / intervals`.
    pub fn geometric(radius: f64, intervals: usize, first_step: f64) -> Result<Arc<Self>> {
        if !(radius > 0.0) || intervals == 0 || !(first_step > 0.0) {
            return Err(Error::domain(format!(
                "invalid history grid (R = {radius}, M = {intervals}, h0 = {first_step})"
            )));
        }
        let m = intervals as f64;
        if first_step * m >= radius {
            return Self::uniform(radius, intervals);
        }
        // solve first_step * (r^M - 1) / (r - 1) = radius for r > 1
        let total = |r: f64| first_step * ((m * r.ln()).exp_m1() / (r - 1.0));
        let (mut lo, mut hi) = (1.0 + 1e-12, 2.0);
        while total(hi) < radius {
            hi = 1.0 + 2.0 * (hi - 1.0);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid) < radius {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let ratio = 0.5 * (lo + hi);
        let mut nodes = Vec::with_capacity(intervals + 1);
        let mut theta = 0.0;
        let mut step = first_step;
        nodes.push(0.0);
        for _ in 0..intervals {
            theta -= step;
            step *= ratio;
            nodes.push(theta);
        }
        *nodes.last_mut().unwrap() = -radius;
        Ok(Arc::new(Self::from_nodes(nodes)?))
    }

    pub fn uniform(radius: f64, intervals: usize) -> Result<Arc<Self>> {
        if !(radius > 0.0) || intervals == 0 {
            return Err(Error::domain("invalid uniform history grid"));
        }
        let h = radius / intervals as f64;
        let nodes = (0..=intervals).map(|j| -(j as f64) * h).collect();
        Ok(Arc::new(Self::from_nodes(nodes)?))
    }

    /// Grid from explicit nodes (strictly decreasing, starting at `0`).
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(Error::domain(
                "history grid must start at 0 and have two nodes",
            ));
        }
        if nodes.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::domain("history nodes must be strictly decreasing"));
        }
        let m = nodes.len() - 1;
        let mut weights = vec![0.0; m + 1];
        for j in 0..m {
            let h = nodes[j] - nodes[j + 1];
            weights[j] += 0.5 * h;
            weights[j + 1] += 0.5 * h;
        }
        let radius = -nodes[m];
        Ok(Self {
            nodes,
            weights,
            radius,
            tail_bound: 0.0,
        })
    }

    /// Grid whose radius keeps the tail mass of histories obeying `bound`
    /// (evaluated up to `horizon` after the origin) below `eps_tail`.
    pub fn for_history(
        weight: &WeightFunction,
        p: f64,
        bound: HistoryBound,
        horizon: f64,
        eps_tail: f64,
        intervals: usize,
        first_step: f64,
    ) -> Result<Arc<Self>> {
        let radius = bound.radius_for_tail(weight, p, eps_tail)? + horizon;
        let grid = Self::geometric(radius, intervals, first_step)?;
        let mut grid = Arc::try_unwrap(grid).unwrap_or_else(|g| (*g).clone());
        grid.tail_bound = bound.tail_mass(weight, p, radius - horizon);
        Ok(Arc::new(grid))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `|Σ w_j g(θ_j) - ∫_{-R}^0 g|`, the quadrature error on the weight itself.
    pub fn weight_quadrature_error(&self, weight: &WeightFunction) -> f64 {
        let disc: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w * weight.g(*t))
            .sum();
        (disc - integrate_on_nodes(weight, &self.nodes)).abs()
    }

    /// Index `j` and fraction `f` with `θ = (1-f) θ_j + f θ_{j+1}`; `None` past `-R`.
    pub(crate) fn locate(&self, theta: f64) -> Option<(usize, f64)> {
        if theta >= 0.0 {
            return Some((0, 0.0));
        }
        if theta <= -self.radius {
            return None;
        }
        // nodes decrease: find first j with nodes[j+1] <= theta
        let j = self.nodes.partition_point(|&x| x > theta).saturating_sub(1);
        let (a, b) = (self.nodes[j], self.nodes[j + 1]);
        Some((j, (a - theta) / (a - b)))
    }
}

fn integrate_on_nodes(weight: &WeightFunction, nodes: &[f64]) -> f64 {
    nodes
        .windows(2)
        .map(|w| integrate(w[1], w[0], 0.5, |x| weight.g(x)))
        .sum()
}

/// A history `(φ, φ(0))` sampled on a [`HistoryGrid`]; node `0` is the head.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySegment {
    grid: Arc<HistoryGrid>,
    spatial: SpatialGrid,
    modes: usize,
    /// Row-major `(M+1) × modes`.
    data: Vec<f64>,
}

impl HistorySegment {
    pub fn zeros(grid: Arc<HistoryGrid>, modes: usize, spatial: SpatialGrid) -> Self {
        let data = vec![0.0; grid.len() * modes];
        Self {
            grid,
            spatial,
            modes,
            data,
        }
    }

    /// Builds a segment from per-node fields; `values[0]` must equal `head`.
    pub fn new(
        grid: Arc<HistoryGrid>,
        values: &[SpectralField],
        head: &SpectralField,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::structural(format!(
                "{} values for {} history nodes",
                values.len(),
                grid.len()
            )));
        }
        if values
            .iter()
            .any(|v| v.grid != head.grid || v.modes() != head.modes())
        {
            return Err(Error::structural(
                "history values live on different spatial grids",
            ));
        }
        if values[0] != *head {
            return Err(Error::Consistency(
                "segment value at 0 differs from its head".into(),
            ));
        }
        let modes = head.modes();
        let mut data = Vec::with_capacity(values.len() * modes);
        values
            .iter()
            .for_each(|v| data.extend_from_slice(&v.coeffs));
        Ok(Self {
            grid,
            spatial: head.grid,
            modes,
            data,
        })
    }

    /// Samples a closed-form history `θ ↦ coefficients` at the grid nodes.
    pub fn from_fn<F>(grid: Arc<HistoryGrid>, modes: usize, spatial: SpatialGrid, f: F) -> Self
    where
        F: Fn(f64) -> Vec<f64>,
    {
        let mut seg = Self::zeros(grid, modes, spatial);
        for j in 0..seg.grid.len() {
            let v = f(seg.grid.nodes[j]);
            seg.data[j * modes..(j + 1) * modes].copy_from_slice(&v);
        }
        seg
    }

    pub fn grid(&self) -> &Arc<HistoryGrid> {
        &self.grid
    }

    pub fn spatial(&self) -> SpatialGrid {
        self.spatial
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn value(&self, j: usize) -> &[f64] {
        &self.data[j * self.modes..(j + 1) * self.modes]
    }

    pub(crate) fn value_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.modes..(j + 1) * self.modes]
    }

    pub fn head(&self) -> &[f64] {
        self.value(0)
    }

    pub fn head_field(&self) -> SpectralField {
        SpectralField::from_coeffs(self.head().to_vec(), self.spatial)
    }

    pub fn value_field(&self, j: usize) -> SpectralField {
        SpectralField::from_coeffs(self.value(j).to_vec(), self.spatial)
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `self - other` on a shared grid.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid || self.modes != other.modes {
            return Err(Error::structural("segments on different grids"));
        }
        let mut out = self.clone();
        out.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a -= b);
        Ok(out)
    }

    /// `Σ_j w_j k(θ_j) φ(θ_j)`: a kernel-weighted trapezoid integral over the segment.
    pub fn kernel_integral<K: Fn(f64) -> f64>(&self, kernel: K, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, (&t, &w)) in self.grid.nodes.iter().zip(&self.grid.weights).enumerate() {
            let c = w * kernel(t);
            if c == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.value(j)) {
                *o += c * v;
            }
        }
    }

    /// Linear interpolation in `θ`; the last node is held beyond `-R`.
    pub fn eval_into(&self, theta: f64, out: &mut [f64]) {
        match self.grid.locate(theta) {
            Some((j, f)) if f == 0.0 => out.copy_from_slice(self.value(j)),
            Some((j, f)) => {
                let (a, b) = (self.value(j), self.value(j + 1));
                for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                    *o = (1.0 - f) * x + f * y;
                }
            }
            None => out.copy_from_slice(self.value(self.grid.len() - 1)),
        }
    }
}

/// `‖(φ, φ(0))‖_𝔅 = ‖φ(0)‖_{L^p} + (Σ_j w_j g(θ_j) ‖φ(θ_j)‖^p_{L^p})^{1/p}`.
pub fn b_norm(seg: &HistorySegment, basis: &Basis, weight: &WeightFunction, p: f64) -> Result<f64> {
    check_exponent(p)?;
    if seg.spatial != basis.grid || seg.modes != basis.modes() {
        return Err(Error::structural("segment does not live on the basis grid"));
    }
    ensure_finite(&seg.data, "history segment")?;
    let mut vals = vec![0.0; basis.points()];
    let mut tail = 0.0;
    let mut head = 0.0;
    for j in 0..seg.grid.len() {
        let w = seg.grid.weights[j] * weight.g(seg.grid.nodes[j]);
        if j != 0 && w == 0.0 {
            continue;
        }
        basis.synthesize(seg.value(j), &mut vals);
        let n = basis.lp_norm_values(&vals, p);
        if j == 0 {
            head = n;
        }
        tail += w * n.powf(p);
    }
    Ok(head + tail.powf(1.0 / p))
}

/// Shape of a separable history `Φ(θ, s) = profile(θ) · shape(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemporalProfile {
    /// `e^{rθ}`.
    Exponential {
        rate: f64,
    },
    /// `(1 + |θ|)^{-β}`.
    Algebraic {
        exponent: f64,
    },
    Constant,
}

impl TemporalProfile {
    pub fn value(&self, theta: f64) -> f64 {
        match *self {
            TemporalProfile::Exponential { rate } => (rate * theta).exp(),
            TemporalProfile::Algebraic { exponent } => (1.0 + theta.abs()).powf(-exponent),
            TemporalProfile::Constant => 1.0,
        }
    }
}

/// An initial history `Φ` on `(-∞, 0]`.
#[derive(Debug, Clone)]
pub enum History {
    Zero {
        modes: usize,
        spatial: SpatialGrid,
    },
    Constant(SpectralField),
    Separable {
        profile: TemporalProfile,
        shape: SpectralField,
    },
    Sampled(HistorySegment),
    /// The segment `U_T` of an already computed path: `θ ↦ U(T + θ)`, where
    /// `T` is in the path's local time.
    Restart {
        path: Arc<MildPath>,
        at: f64,
    },
}

impl History {
    pub fn modes(&self) -> usize {
        match self {
            History::Zero { modes, .. } => *modes,
            History::Constant(x) => x.modes(),
            History::Separable { shape, .. } => shape.modes(),
            History::Sampled(seg) => seg.modes(),
            History::Restart { path, .. } => path.modes(),
        }
    }

    pub fn spatial(&self) -> SpatialGrid {
        match self {
            History::Zero { spatial, .. } => *spatial,
            History::Constant(x) => x.grid,
            History::Separable { shape, .. } => shape.grid,
            History::Sampled(seg) => seg.spatial(),
            History::Restart { path, .. } => path.spatial(),
        }
    }

    /// Value at `θ ≤ 0`.
    pub fn eval_into(&self, theta: f64, out: &mut [f64]) {
        match self {
            History::Zero { .. } => out.iter_mut().for_each(|v| *v = 0.0),
            History::Constant(x) => out.copy_from_slice(&x.coeffs),
            History::Separable { profile, shape } => {
                let c = profile.value(theta);
                for (o, a) in out.iter_mut().zip(&shape.coeffs) {
                    *o = c * a;
                }
            }
            History::Sampled(seg) => seg.eval_into(theta, out),
            History::Restart { path, at } => path.eval_into(at + theta, out),
        }
    }

    pub fn head(&self) -> SpectralField {
        let mut v = vec![0.0; self.modes()];
        self.eval_into(0.0, &mut v);
        SpectralField::from_coeffs(v, self.spatial())
    }

    /// Samples the history on `grid`.
    pub fn sample(&self, grid: &Arc<HistoryGrid>) -> HistorySegment {
        let mut seg = HistorySegment::zeros(grid.clone(), self.modes(), self.spatial());
        for j in 0..grid.len() {
            let theta = grid.nodes[j];
            self.eval_into(theta, seg.value_mut(j));
        }
        seg
    }

    /// `Φ` scaled by `c` (restart histories are sampled first).
    pub fn scaled(&self, c: f64, grid: &Arc<HistoryGrid>) -> History {
        match self {
            History::Zero { .. } => self.clone(),
            History::Constant(x) => History::Constant(x.scaled(c)),
            History::Separable { profile, shape } => History::Separable {
                profile: *profile,
                shape: shape.scaled(c),
            },
            History::Sampled(seg) => History::Sampled(seg.scaled(c)),
            History::Restart { .. } => History::Sampled(self.sample(grid).scaled(c)),
        }
    }
}

impl Trajectory for History {
    fn modes(&self) -> usize {
        History::modes(self)
    }

    fn spatial(&self) -> SpatialGrid {
        History::spatial(self)
    }

    fn horizon(&self) -> f64 {
        0.0
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        History::eval_into(self, t.min(0.0), out)
    }
}

/// `φ_t`: the segment `θ ↦ φ(t + θ)` sampled on `grid`.
pub fn segment_at<P: Trajectory + ?Sized>(
    path: &P,
    t: f64,
    grid: &Arc<HistoryGrid>,
) -> Result<HistorySegment> {
    let mut seg = HistorySegment::zeros(grid.clone(), path.modes(), path.spatial());
    segment_into(path, t, &mut seg)?;
    Ok(seg)
}

/// In-place variant of [`segment_at`] reusing the segment's grid and storage.
pub fn segment_into<P: Trajectory + ?Sized>(
    path: &P,
    t: f64,
    seg: &mut HistorySegment,
) -> Result<()> {
    let horizon = path.horizon();
    if !(t >= 0.0) || t > horizon * (1.0 + 1e-12) + 1e-14 {
        return Err(Error::domain(format!(
            "segment time {t} outside [0, {horizon}]"
        )));
    }
    let t = t.min(horizon);
    let grid = seg.grid.clone();
    for (j, theta) in grid.nodes.iter().enumerate() {
        path.eval_into(t + theta, seg.value_mut(j));
    }
    Ok(())
}

/// `φ̃`: the path `φ` on `[0, T]` continued by the history `Φ` on `(-∞, 0)`.
///
/// Fails with [`Error::Consistency`] if `φ(0)` and `Φ(0)` differ beyond a
/// relative tolerance of `1e-10`.
pub fn extend_tilde(path: &MildPath, history: &History) -> Result<MildPath> {
    let head = history.head();
    let start = path.value(0);
    let scale = 1.0 + head.coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gap = start
        .iter()
        .zip(&head.coeffs)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if gap > 1e-10 * scale {
        return Err(Error::Consistency(format!(
            "path starts {gap:e} away from the history head"
        )));
    }
    Ok(path.with_history(Arc::new(history.clone())))
}

/// `Φ̂`: the history `Φ` on `(-∞, 0]` continued by zero on `(0, T0]`.
#[derive(Debug, Clone)]
pub struct HatPath {
    pub history: History,
    pub horizon: f64,
}

pub fn extend_hat(history: &History, horizon: f64) -> HatPath {
    HatPath {
        history: history.clone(),
        horizon,
    }
}

impl Trajectory for HatPath {
    fn modes(&self) -> usize {
        self.history.modes()
    }

    fn spatial(&self) -> SpatialGrid {
        self.history.spatial()
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        if t > 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
        } else {
            self.history.eval_into(t, out);
        }
    }
}

/// The three sides of `‖φ(t)‖ ≤ ‖(φ_t,φ(t))‖_𝔅 ≤ K(t) sup_{[0,t]}‖φ‖ + M(t) ‖(φ_0,φ(0))‖_𝔅`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmReport {
    pub lhs: f64,
    pub mid: f64,
    pub rhs: f64,
    pub k: f64,
    pub m: f64,
    pub pass: bool,
}

pub fn check_km_inequality(
    path: &MildPath,
    t: f64,
    p: f64,
    weight: &WeightFunction,
    grid: &Arc<HistoryGrid>,
    basis: &Basis,
    slack: f64,
) -> Result<KmReport> {
    let seg_t = segment_at(path, t, grid)?;
    let seg_0 = segment_at(path, 0.0, grid)?;
    let lhs = basis.lp_norm_coeffs(seg_t.head(), p);
    let mid = b_norm(&seg_t, basis, weight, p)?;
    // ‖φ(s)‖ is convex along each linear piece, so the sup sits on a node or at t.
    let mut sup = lhs;
    let last = ((t / path.dt()).floor() as usize).min(path.steps());
    for i in 0..=last {
        sup = sup.max(basis.lp_norm_coeffs(path.value(i), p));
    }
    let k = weight.k_fn(t, p)?;
    let m = weight.m_fn(t, p)?;
    let rhs = k * sup + m * b_norm(&seg_0, basis, weight, p)?;
    Ok(KmReport {
        lhs,
        mid,
        rhs,
        k,
        m,
        pass: lhs <= mid && mid <= rhs + slack,
    })
}

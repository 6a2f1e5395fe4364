//! Spectral calculus of the Dirichlet Laplacian on `(0, ℓ)`.
//!
//! Fields are stored as coefficients in the orthonormal sine basis
//! `e_k(s) = sqrt(2/ℓ) sin(kπs/ℓ)`, `k = 1..N`. The analytic semigroup acts
//! diagonally, `a_k ↦ e^{-λ_k t} a_k` with `λ_k = (kπ/ℓ)²`, and fractional powers
//! of `-(A - w)` act as `a_k ↦ (λ_k + w)^η a_k`.
//!
//! `L^p` norms are evaluated on `Q` interior points `s_q = qℓ/(Q+1)` with weight
//! `h = ℓ/(Q+1)` (trapezoid rule with vanishing end points). For `N ≤ Q` the
//! sampled sine basis is exactly orthonormal under this rule, so synthesis
//! followed by projection is the identity.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// The Dirichlet Laplacian truncated to its first `modes` eigenpairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirichletLaplacian1D {
    pub length: f64,
    pub modes: usize,
    /// Shift `w` used for fractional powers of `-(A - w)`.
    #[serde(default)]
    pub shift: f64,
}

impl DirichletLaplacian1D {
    pub fn new(length: f64, modes: usize) -> Result<Self> {
        Self::with_shift(length, modes, 0.0)
    }

    pub fn with_shift(length: f64, modes: usize, shift: f64) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::domain(format!(
                "interval length must be positive, got {length}"
            )));
        }
        if modes == 0 {
            return Err(Error::domain("mode count must be positive"));
        }
        let op = Self {
            length,
            modes,
            shift,
        };
        if !(op.eigenvalue(1) + shift > 0.0) {
            return Err(Error::domain(format!(
                "shift {shift} makes A - w fail to be exponentially stable"
            )));
        }
        Ok(op)
    }

    /// `λ_k = (kπ/ℓ)²` for the 1-based mode index `k`.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let v = k as f64 * PI / self.length;
        v * v
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        (1..=self.modes).map(|k| self.eigenvalue(k)).collect()
    }

    /// `S(t)x`: coefficients multiplied by `e^{-λ_k t}`.
    pub fn semigroup_apply(&self, t: f64, x: &SpectralField) -> Result<SpectralField> {
        if !(t >= 0.0) {
            return Err(Error::domain(format!(
                "semigroup time must be nonnegative, got {t}"
            )));
        }
        self.check(x)?;
        let mut out = x.clone();
        for (k, a) in out.coeffs.iter_mut().enumerate() {
            *a *= (-self.eigenvalue(k + 1) * t).exp();
        }
        Ok(out)
    }

    /// `(-(A - w))^η x`: coefficients multiplied by `(λ_k + w)^η`.
    pub fn frac_power_apply(&self, eta: f64, x: &SpectralField) -> Result<SpectralField> {
        self.check(x)?;
        let mut out = x.clone();
        for (k, a) in out.coeffs.iter_mut().enumerate() {
            *a *= (self.eigenvalue(k + 1) + self.shift).powf(eta);
        }
        Ok(out)
    }

    fn check(&self, x: &SpectralField) -> Result<()> {
        if x.modes() != self.modes {
            return Err(Error::structural(format!(
                "field has {} modes, operator has {}",
                x.modes(),
                self.modes
            )));
        }
        Ok(())
    }
}

/// Interior quadrature points of `(0, ℓ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub length: f64,
    pub points: usize,
}

impl SpatialGrid {
    pub fn spacing(&self) -> f64 {
        self.length / (self.points as f64 + 1.0)
    }

    pub fn point(&self, q: usize) -> f64 {
        (q as f64 + 1.0) * self.spacing()
    }
}

/// An element of `E = L^p(0, ℓ)` in sine coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub coeffs: Vec<f64>,
    pub grid: SpatialGrid,
}

impl SpectralField {
    pub fn zeros(modes: usize, grid: SpatialGrid) -> Self {
        Self {
            coeffs: vec![0.0; modes],
            grid,
        }
    }

    pub fn from_coeffs(coeffs: Vec<f64>, grid: SpatialGrid) -> Self {
        Self { coeffs, grid }
    }

    /// The single basis function `e_k` (1-based) scaled by `amplitude`.
    pub fn mode(modes: usize, grid: SpatialGrid, k: usize, amplitude: f64) -> Self {
        let mut f = Self::zeros(modes, grid);
        f.coeffs[k - 1] = amplitude;
        f
    }

    pub fn modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|a| c * a).collect(),
            grid: self.grid,
        }
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Self) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + c * b)
                .collect(),
            grid: self.grid,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|a| *a == 0.0)
    }
}

/// Operator plus spatial grid, with the sampled sine table shared by all
/// synthesis/projection calls.
#[derive(Debug, Clone)]
pub struct Basis {
    pub operator: DirichletLaplacian1D,
    pub grid: SpatialGrid,
    eigen: Vec<f64>,
    /// Row-major `points × modes`.
    table: Vec<f64>,
}

impl Basis {
    pub fn new(operator: DirichletLaplacian1D, points: usize) -> Result<Arc<Self>> {
        if points < operator.modes {
            return Err(Error::domain(format!(
                "spatial grid of {points} points cannot resolve {} modes",
                operator.modes
            )));
        }
        let grid = SpatialGrid {
            length: operator.length,
            points,
        };
        let n = operator.modes;
        let norm = (2.0 / operator.length).sqrt();
        let mut table = vec![0.0; points * n];
        for q in 0..points {
            let s = grid.point(q);
            for k in 0..n {
                table[q * n + k] = norm * ((k + 1) as f64 * PI * s / operator.length).sin();
            }
        }
        Ok(Arc::new(Self {
            operator,
            grid,
            eigen: operator.eigenvalues(),
            table,
        }))
    }

    pub fn modes(&self) -> usize {
        self.operator.modes
    }

    pub fn points(&self) -> usize {
        self.grid.points
    }

    /// Eigenvalues `λ_1..λ_N`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen
    }

    pub fn zeros(&self) -> SpectralField {
        SpectralField::zeros(self.modes(), self.grid)
    }

    pub fn field(&self, coeffs: Vec<f64>) -> Result<SpectralField> {
        if coeffs.len() != self.modes() {
            return Err(Error::structural(format!(
                "expected {} coefficients, got {}",
                self.modes(),
                coeffs.len()
            )));
        }
        Ok(SpectralField::from_coeffs(coeffs, self.grid))
    }

    /// Value of `e_k` (1-based) at grid point `q`.
    pub fn basis_value(&self, q: usize, k: usize) -> f64 {
        self.table[q * self.modes() + k - 1]
    }

    /// Point values `Σ_k a_k e_k(s_q)`.
    pub fn synthesize(&self, coeffs: &[f64], out: &mut [f64]) {
        let n = self.modes();
        debug_assert_eq!(coeffs.len(), n);
        for (q, o) in out.iter_mut().enumerate() {
            let row = &self.table[q * n..(q + 1) * n];
            *o = row.iter().zip(coeffs).map(|(b, a)| b * a).sum();
        }
    }

    pub fn point_values(&self, x: &SpectralField) -> Vec<f64> {
        let mut out = vec![0.0; self.points()];
        self.synthesize(&x.coeffs, &mut out);
        out
    }

    /// Discrete `L²` projection `a_k = h Σ_q v_q e_k(s_q)`.
    pub fn project(&self, values: &[f64], out: &mut [f64]) {
        let n = self.modes();
        let h = self.grid.spacing();
        out.iter_mut().for_each(|a| *a = 0.0);
        for (q, v) in values.iter().enumerate() {
            let row = &self.table[q * n..(q + 1) * n];
            for (a, b) in out.iter_mut().zip(row) {
                *a += b * v;
            }
        }
        out.iter_mut().for_each(|a| *a *= h);
    }

    /// `(h Σ_q |v_q|^p)^{1/p}`.
    pub fn lp_norm_values(&self, values: &[f64], p: f64) -> f64 {
        let h = self.grid.spacing();
        if p == 2.0 {
            return (h * values.iter().map(|v| v * v).sum::<f64>()).sqrt();
        }
        (h * values.iter().map(|v| v.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
    }

    pub fn lp_norm_coeffs(&self, coeffs: &[f64], p: f64) -> f64 {
        let mut vals = vec![0.0; self.points()];
        self.synthesize(coeffs, &mut vals);
        self.lp_norm_values(&vals, p)
    }

    /// `‖x‖_{L^p(0,ℓ)}` on the quadrature grid.
    pub fn lp_norm(&self, x: &SpectralField, p: f64) -> Result<f64> {
        self.check(x)?;
        check_exponent(p)?;
        ensure_finite(&x.coeffs, "field")?;
        Ok(self.lp_norm_coeffs(&x.coeffs, p))
    }

    /// `‖x‖_{E_η} = ‖x‖ + ‖(-(A-w))^η x‖`. At `η = 0` this is `2‖x‖`.
    pub fn e_eta_norm(&self, x: &SpectralField, eta: f64, p: f64) -> Result<f64> {
        if !(eta >= 0.0) {
            return Err(Error::domain(format!(
                "interpolation order must be nonnegative, got {eta}"
            )));
        }
        let y = self.operator.frac_power_apply(eta, x)?;
        Ok(self.lp_norm(x, p)? + self.lp_norm(&y, p)?)
    }

    /// Norm of the space `E_η` used for solution paths: plain `‖·‖_E` when
    /// `η = 0` (where `E_0 = E`), the graph norm [`Basis::e_eta_norm`] otherwise.
    pub fn space_norm_coeffs(&self, coeffs: &[f64], eta: f64, p: f64) -> f64 {
        let base = self.lp_norm_coeffs(coeffs, p);
        if eta == 0.0 {
            return base;
        }
        base + self.lp_norm_coeffs(&self.frac_power_coeffs(coeffs, eta), p)
    }

    pub fn frac_power_coeffs(&self, coeffs: &[f64], eta: f64) -> Vec<f64> {
        coeffs
            .iter()
            .zip(&self.eigen)
            .map(|(a, l)| a * (l + self.operator.shift).powf(eta))
            .collect()
    }

    /// Empirical constant `sup_{t, x} t^η ‖S(t)x‖_{E_η} / ‖x‖` over the given
    /// times and sample fields. Zero samples are skipped and counted.
    pub fn analytic_estimate_scan(
        &self,
        eta: f64,
        times: &[f64],
        samples: &[SpectralField],
        p: f64,
    ) -> Result<ScanReport> {
        if !(eta >= 0.0) {
            return Err(Error::domain("interpolation order must be nonnegative"));
        }
        if times.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::domain("scan times must be positive"));
        }
        let mut constant: f64 = 0.0;
        let mut skipped = 0;
        for x in samples {
            let base = self.lp_norm(x, p)?;
            if base == 0.0 {
                skipped += 1;
                continue;
            }
            for &t in times {
                let y = self.operator.semigroup_apply(t, x)?;
                let r = t.powf(eta) * self.e_eta_norm(&y, eta, p)? / base;
                constant = constant.max(r);
            }
        }
        Ok(ScanReport { constant, skipped })
    }

    pub(crate) fn check(&self, x: &SpectralField) -> Result<()> {
        if x.modes() != self.modes() || x.grid != self.grid {
            return Err(Error::structural(format!(
                "field ({} modes, {} points) does not match basis ({} modes, {} points)",
                x.modes(),
                x.grid.points,
                self.modes(),
                self.points()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanReport {
    pub constant: f64,
    pub skipped: usize,
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::domain(format!(
            "exponent p must lie in [1, ∞), got {p}"
        )));
    }
    Ok(())
}

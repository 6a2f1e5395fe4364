//! γ-radonifying norms of finite-rank operators `R : ℝ^{d_H} → X`.
//!
//! `‖R‖_γ = (E‖Σ_n γ_n R h_n‖²_X)^{1/2}` for a standard Gaussian sequence
//! `(γ_n)`. For Euclidean targets this is the Hilbert–Schmidt (Frobenius)
//! norm; for `L^p` targets it is estimated by Monte Carlo.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure_finite, Error, Result};
use crate::exec::Exec;
use crate::spectral::{check_exponent, Basis};
use crate::stats::{stream_rng, MeanEstimate};
use crate::stochastic::StepProcess;

/// Samples drawn from one random stream; batches are the unit of parallelism.
const BATCH: usize = 1024;

/// The norm of the target space `X`, acting on row vectors of the matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetNorm {
    /// `‖v‖_2`.
    Euclidean,
    /// `(Σ_q w_q |v_q|^p)^{1/p}`, e.g. `L^p(S)` on a quadrature grid.
    Lp { p: f64, weights: Vec<f64> },
    /// `(Σ_j w_j ‖v_j‖^p_inner)^{1/p}` over consecutive row blocks of size
    /// `block`: `L^p(T; X_inner)` on a grid.
    Bochner {
        p: f64,
        weights: Vec<f64>,
        block: usize,
        inner: Box<TargetNorm>,
    },
    /// `‖(u, v)‖ = ‖u‖_first + ‖v‖_second`, with `u` the first `split` rows.
    Product {
        split: usize,
        first: Box<TargetNorm>,
        second: Box<TargetNorm>,
    },
}

impl TargetNorm {
    /// `L^p(S)` on the spatial quadrature grid of `basis`.
    pub fn lp_grid(basis: &Basis, p: f64) -> Self {
        TargetNorm::Lp {
            p,
            weights: vec![basis.grid.spacing(); basis.points()],
        }
    }

    /// Required row count, if the descriptor fixes one.
    pub fn rows(&self) -> Option<usize> {
        match self {
            TargetNorm::Euclidean => None,
            TargetNorm::Lp { weights, .. } => Some(weights.len()),
            TargetNorm::Bochner { weights, block, .. } => Some(weights.len() * block),
            TargetNorm::Product { split, second, .. } => second.rows().map(|r| split + r),
        }
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        match self {
            TargetNorm::Euclidean => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            TargetNorm::Lp { p, weights } => weights
                .iter()
                .zip(v)
                .map(|(w, x)| w * x.abs().powf(*p))
                .sum::<f64>()
                .powf(1.0 / p),
            TargetNorm::Bochner {
                p,
                weights,
                block,
                inner,
            } => weights
                .iter()
                .zip(v.chunks(*block))
                .map(|(w, chunk)| w * inner.norm(chunk).powf(*p))
                .sum::<f64>()
                .powf(1.0 / p),
            TargetNorm::Product {
                split,
                first,
                second,
            } => first.norm(&v[..*split]) + second.norm(&v[*split..]),
        }
    }

    fn validate(&self, rows: usize) -> Result<()> {
        match self {
            TargetNorm::Euclidean => Ok(()),
            TargetNorm::Lp { p, weights } => {
                check_exponent(*p)?;
                check_weights(weights)?;
                expect_rows(weights.len(), rows)
            }
            TargetNorm::Bochner {
                p,
                weights,
                block,
                inner,
            } => {
                check_exponent(*p)?;
                check_weights(weights)?;
                expect_rows(weights.len() * block, rows)?;
                inner.validate(*block)
            }
            TargetNorm::Product {
                split,
                first,
                second,
            } => {
                if *split > rows {
                    return Err(Error::structural("product split exceeds the row count"));
                }
                first.validate(*split)?;
                second.validate(rows - split)
            }
        }
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::domain(
            "quadrature weights must be finite and nonnegative",
        ));
    }
    Ok(())
}

fn expect_rows(expected: usize, rows: usize) -> Result<()> {
    if expected != rows {
        return Err(Error::structural(format!(
            "target norm expects {expected} rows, operator has {rows}"
        )));
    }
    Ok(())
}

/// A matrix `R` (rows: target coordinates, columns: `h_1, …, h_{d_H}`)
/// together with the norm of its target space.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaOperator {
    pub matrix: DMatrix<f64>,
    pub target: TargetNorm,
}

impl GammaOperator {
    pub fn new(matrix: DMatrix<f64>, target: TargetNorm) -> Result<Self> {
        ensure_finite(matrix.as_slice(), "operator entries")?;
        target.validate(matrix.nrows())?;
        Ok(Self { matrix, target })
    }

    pub fn euclidean(matrix: DMatrix<f64>) -> Result<Self> {
        Self::new(matrix, TargetNorm::Euclidean)
    }

    /// Rank-one operator `h ⊗ x : k ↦ ⟨k, h⟩ x`.
    pub fn rank_one(h: &[f64], x: &[f64], target: TargetNorm) -> Result<Self> {
        let m = DVector::from_column_slice(x) * DVector::from_column_slice(h).transpose();
        Self::new(m, target)
    }

    pub fn hilbert_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            matrix: &self.matrix * c,
            target: self.target.clone(),
        }
    }

    /// `R ∘ U` for a change of basis `U` of the Hilbert space.
    pub fn compose_right(&self, u: &DMatrix<f64>) -> Result<Self> {
        if u.nrows() != self.matrix.ncols() {
            return Err(Error::structural("basis change has the wrong size"));
        }
        Ok(Self {
            matrix: &self.matrix * u,
            target: self.target.clone(),
        })
    }
}

/// Monte Carlo estimate of `‖R‖_γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaEstimate {
    /// `(mean of ‖Rγ‖²)^{1/2}`.
    pub value: f64,
    /// Standard error of `value` (delta method).
    pub std_err: f64,
    /// Unbiased estimate of `E‖Rγ‖²`.
    pub sq_mean: f64,
    pub sq_std_err: f64,
    pub samples: usize,
}

impl GammaEstimate {
    fn from_squares(squares: &[f64]) -> Self {
        let est = MeanEstimate::from_samples(squares);
        let value = est.mean.max(0.0).sqrt();
        let std_err = if value > 0.0 {
            est.std_err / (2.0 * value)
        } else {
            0.0
        };
        Self {
            value,
            std_err,
            sq_mean: est.mean,
            sq_std_err: est.std_err,
            samples: squares.len(),
        }
    }

    pub fn exact(value: f64) -> Self {
        Self {
            value,
            std_err: 0.0,
            sq_mean: value * value,
            sq_std_err: 0.0,
            samples: 0,
        }
    }
}

/// Applies `f(γ)` to `samples` standard Gaussian vectors of dimension `dim`;
/// results come back in sample order whatever the execution policy.
fn map_gaussians<T, F>(seed: u64, dim: usize, samples: usize, exec: Exec, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&DVector<f64>) -> T + Sync + Send,
{
    let batches = samples.div_ceil(BATCH);
    exec.map(batches, |b| {
        let mut rng: ChaCha8Rng = stream_rng(seed, b as u64);
        let count = BATCH.min(samples - b * BATCH);
        let mut g = DVector::zeros(dim);
        (0..count)
            .map(|_| {
                g.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
                f(&g)
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Monte Carlo estimate of `(E‖Σ_n γ_n R h_n‖²)^{1/2}`.
pub fn gamma_norm_mc(
    op: &GammaOperator,
    samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<GammaEstimate> {
    if samples < 2 {
        return Err(Error::domain(
            "γ-norm estimation needs at least two samples",
        ));
    }
    let squares = map_gaussians(seed, op.hilbert_dim(), samples, exec, |g| {
        let y = &op.matrix * g;
        op.target.norm(y.as_slice()).powi(2)
    });
    Ok(GammaEstimate::from_squares(&squares))
}

/// Exact `‖R‖_γ` for a Euclidean target: the Frobenius norm.
pub fn gamma_norm_hilbert(op: &GammaOperator) -> Result<f64> {
    match op.target {
        TargetNorm::Euclidean => Ok(op.matrix.norm()),
        _ => Err(Error::Unsupported(
            "exact γ-norms are only available for Euclidean targets".into(),
        )),
    }
}

/// `F_γ(φ)`: stacks per-node operators `φ(s_j) : ℝ^{d_H} → X` into one
/// operator into `L^p(T; X)` with node weights `weights`.
pub fn gamma_fubini_forward(
    blocks: &[DMatrix<f64>],
    inner: &TargetNorm,
    p: f64,
    weights: &[f64],
) -> Result<GammaOperator> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::structural("γ-Fubini needs at least one node"))?;
    if blocks.len() != weights.len() {
        return Err(Error::structural("one weight per node is required"));
    }
    let (r, c) = first.shape();
    if blocks.iter().any(|b| b.shape() != (r, c)) {
        return Err(Error::structural("nodes have inconsistent operator shapes"));
    }
    let mut stacked = DMatrix::zeros(r * blocks.len(), c);
    for (j, b) in blocks.iter().enumerate() {
        stacked.view_mut((j * r, 0), (r, c)).copy_from(b);
    }
    GammaOperator::new(
        stacked,
        TargetNorm::Bochner {
            p,
            weights: weights.to_vec(),
            block: r,
            inner: Box::new(inner.clone()),
        },
    )
}

/// The product-space version: `(F_γ(φ), x)` into `L^p(T;X) × X`.
pub fn gamma_fubini_product(tail: &GammaOperator, head: &GammaOperator) -> Result<GammaOperator> {
    if tail.hilbert_dim() != head.hilbert_dim() {
        return Err(Error::structural(
            "product parts have different Hilbert dimensions",
        ));
    }
    let split = tail.matrix.nrows();
    let mut m = DMatrix::zeros(split + head.matrix.nrows(), tail.hilbert_dim());
    m.view_mut((0, 0), tail.matrix.shape())
        .copy_from(&tail.matrix);
    m.view_mut((split, 0), head.matrix.shape())
        .copy_from(&head.matrix);
    GammaOperator::new(
        m,
        TargetNorm::Product {
            split,
            first: Box::new(tail.target.clone()),
            second: Box::new(head.target.clone()),
        },
    )
}

/// `(Σ_j w_j ‖φ(s_j)‖^p_γ)^{1/p}`, the norm of `φ` in `L^p(T; γ(H, X))`,
/// with each node's γ-norm exact (Euclidean inner target) or estimated.
pub fn gamma_lp_aggregate(
    blocks: &[DMatrix<f64>],
    inner: &TargetNorm,
    p: f64,
    weights: &[f64],
    samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<f64> {
    check_exponent(p)?;
    let mut total = 0.0;
    for (j, (b, w)) in blocks.iter().zip(weights).enumerate() {
        let op = GammaOperator::new(b.clone(), inner.clone())?;
        let g = match inner {
            TargetNorm::Euclidean => gamma_norm_hilbert(&op)?,
            _ => gamma_norm_mc(&op, samples, seed.wrapping_add(j as u64), exec)?.value,
        };
        total += w * g.powf(p);
    }
    Ok(total.powf(1.0 / p))
}

/// `‖φ‖_{L²_γ(μ)} = ‖φ‖_{γ(L²(μ),E)} + ‖φ‖_{L²(μ;E)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2GammaNorm {
    pub gamma: GammaEstimate,
    pub bochner: f64,
    pub total: f64,
}

/// `L²_γ` norm of a path with node values `values` (spectral coefficients)
/// and node masses `mu`; `γ(L²(μ), E)` is realised by the matrix with columns
/// `√μ_j φ(s_j)` in point values, `E = L^p(S)`.
pub fn l2gamma_norm(
    values: &[Vec<f64>],
    mu: &[f64],
    basis: &Basis,
    p: f64,
    samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<L2GammaNorm> {
    check_exponent(p)?;
    if values.len() != mu.len() {
        return Err(Error::structural("one mass per path node is required"));
    }
    check_weights(mu)?;
    let q = basis.points();
    let mut m = DMatrix::zeros(q, values.len());
    let mut pts = vec![0.0; q];
    let mut bochner = 0.0;
    for (j, (v, w)) in values.iter().zip(mu).enumerate() {
        basis.synthesize(v, &mut pts);
        bochner += w * basis.lp_norm_values(&pts, p).powi(2);
        let s = w.sqrt();
        for (r, x) in pts.iter().enumerate() {
            m[(r, j)] = s * x;
        }
    }
    let op = GammaOperator::new(m, TargetNorm::lp_grid(basis, p))?;
    let gamma = if values.iter().all(|v| v.iter().all(|x| *x == 0.0)) {
        GammaEstimate::exact(0.0)
    } else {
        gamma_norm_mc(&op, samples, seed, exec)?
    };
    let bochner = bochner.sqrt();
    Ok(L2GammaNorm {
        gamma,
        bochner,
        total: gamma.value + bochner,
    })
}

/// Best ratio found for the Gaussian sums of a finite family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaBound {
    /// `(E‖Σγ_n T_n x_n‖²)^{1/2} / (E‖Σγ_n x_n‖²)^{1/2}` for the best candidate,
    /// re-estimated on fresh samples.
    pub ratio: f64,
    pub std_err: f64,
    pub candidates: usize,
}

/// Ratio estimate with common random numbers and its delta-method error.
fn ratio_estimate(num: &[f64], den: &[f64]) -> (f64, f64) {
    let n = num.len() as f64;
    let mn = num.iter().sum::<f64>() / n;
    let md = den.iter().sum::<f64>() / n;
    if md <= 0.0 {
        return (0.0, 0.0);
    }
    let r2 = mn / md;
    // residuals of the linearised ratio
    let resid: Vec<f64> = num
        .iter()
        .zip(den)
        .map(|(a, b)| (a - r2 * b) / md)
        .collect();
    let var = resid.iter().map(|x| x * x).sum::<f64>() / (n - 1.0).max(1.0);
    let se_r2 = (var / n).sqrt();
    let r = r2.max(0.0).sqrt();
    let se = if r > 0.0 {
        se_r2 / (2.0 * r)
    } else {
        se_r2.sqrt()
    };
    (r, se)
}

fn sums_for_candidate(
    family: &[DMatrix<f64>],
    picks: &[usize],
    xs: &[DVector<f64>],
    samples: usize,
    seed: u64,
    exec: Exec,
) -> (f64, f64) {
    let txs: Vec<DVector<f64>> = picks.iter().zip(xs).map(|(&k, x)| &family[k] * x).collect();
    let pairs = map_gaussians(seed, xs.len(), samples, exec, |g| {
        let mut a = DVector::zeros(txs[0].len());
        let mut b = DVector::zeros(xs[0].len());
        for n in 0..xs.len() {
            a.axpy(g[n], &txs[n], 1.0);
            b.axpy(g[n], &xs[n], 1.0);
        }
        (a.norm_squared(), b.norm_squared())
    });
    let (num, den): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    ratio_estimate(&num, &den)
}

/// Randomised search for a lower bound of the γ-bound of `family`:
/// `trials` random finite sequences `(T_n, x_n)` (plus, for every member,
/// its top right singular vector) are scored with `samples` Gaussian draws and
/// the winner is re-estimated on an independent sample.
pub fn gamma_bound_estimate(
    family: &[DMatrix<f64>],
    trials: usize,
    samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<GammaBound> {
    let first = family
        .first()
        .ok_or_else(|| Error::domain("γ-bound of an empty family"))?;
    let dim = first.ncols();
    if family
        .iter()
        .any(|t| t.ncols() != dim || t.nrows() != first.nrows())
    {
        return Err(Error::structural("family members have different shapes"));
    }
    if samples < 2 {
        return Err(Error::domain(
            "γ-bound estimation needs at least two samples",
        ));
    }
    let mut candidates: Vec<(Vec<usize>, Vec<DVector<f64>>)> = Vec::new();
    for (k, t) in family.iter().enumerate() {
        let svd = t.clone().svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors requested");
        let best = svd.singular_values.iamax();
        candidates.push((vec![k], vec![v_t.row(best).transpose()]));
    }
    let mut rng = stream_rng(seed, u64::MAX);
    for _ in 0..trials {
        let len = rng.random_range(1..=4usize);
        let picks: Vec<usize> = (0..len)
            .map(|_| rng.random_range(0..family.len()))
            .collect();
        let xs: Vec<DVector<f64>> = (0..len)
            .map(|_| DVector::from_fn(dim, |_, _| rng.sample(StandardNormal)))
            .collect();
        candidates.push((picks, xs));
    }
    let scored: Vec<f64> = candidates
        .iter()
        .enumerate()
        .map(|(c, (picks, xs))| {
            sums_for_candidate(
                family,
                picks,
                xs,
                samples,
                seed.wrapping_add(c as u64 + 1),
                exec,
            )
            .0
        })
        .collect();
    let best = scored
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if *r > scored[b] { i } else { b });
    let (picks, xs) = &candidates[best];
    let (ratio, std_err) = sums_for_candidate(
        family,
        picks,
        xs,
        samples,
        seed ^ 0x9e37_79b9_7f4a_7c15,
        exec,
    );
    Ok(GammaBound {
        ratio,
        std_err,
        candidates: candidates.len(),
    })
}

/// The two sides of `‖MΨ‖_γ ≤ γ(𝓜) ‖Ψ‖_γ` for a step process `Ψ` and
/// per-cell multipliers `M_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierReport {
    pub lhs: GammaEstimate,
    pub rhs: GammaEstimate,
    pub bound: GammaBound,
    pub pass: bool,
}

/// Operator `f ↦ Σ_i ∫_{t_i}^{t_{i+1}} M_i Ψ_i f(s) ds` from `L²(0,T;ℝ^{d_H})`
/// as a matrix with columns `√Δt M_i Ψ_i e_n`.
fn step_operator(process: &StepProcess, multipliers: Option<&[DMatrix<f64>]>) -> DMatrix<f64> {
    let cells = process.cells();
    let (rows, dh) = cells.first().map_or((0, 0), |c| c.shape());
    let out_rows = multipliers
        .and_then(|m| m.first())
        .map_or(rows, |m| m.nrows());
    let mut m = DMatrix::zeros(out_rows, dh * cells.len());
    let s = process.dt().sqrt();
    for (i, c) in cells.iter().enumerate() {
        let block = match multipliers {
            Some(ms) => &ms[i] * c * s,
            None => c * s,
        };
        m.view_mut((0, i * dh), (out_rows, dh)).copy_from(&block);
    }
    m
}

/// Empirical check of the multiplier inequality with `γ(𝓜)` replaced by
/// [`gamma_bound_estimate`] over `{M_i}`; both sides share their Gaussian draws.
/// Passes iff `lhs ≤ (bound + 3 SE)(rhs + 3 SE)` up to the lhs error.
pub fn check_multiplier_inequality(
    multipliers: &[DMatrix<f64>],
    process: &StepProcess,
    samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<MultiplierReport> {
    if multipliers.len() != process.steps() {
        return Err(Error::structural("one multiplier per cell is required"));
    }
    let rows = process.cells().first().map_or(0, |c| c.nrows());
    if multipliers.iter().any(|m| m.ncols() != rows) {
        return Err(Error::structural(
            "multipliers do not act on the process values",
        ));
    }
    let bound = gamma_bound_estimate(multipliers, 64, samples, seed, exec)?;
    let lhs_op = GammaOperator::euclidean(step_operator(process, Some(multipliers)))?;
    let rhs_op = GammaOperator::euclidean(step_operator(process, None))?;
    let lhs = gamma_norm_mc(&lhs_op, samples, seed.wrapping_add(7), exec)?;
    let rhs = gamma_norm_mc(&rhs_op, samples, seed.wrapping_add(7), exec)?;
    let pass = lhs.value - 3.0 * lhs.std_err
        <= (bound.ratio + 3.0 * bound.std_err) * (rhs.value + 3.0 * rhs.std_err) + 1e-12;
    Ok(MultiplierReport {
        lhs,
        rhs,
        bound,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hilbert_norm_is_frobenius() {
        let op = GammaOperator::euclidean(DMatrix::identity(2, 2)).unwrap();
        assert!((gamma_norm_hilbert(&op).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let zero = GammaOperator::euclidean(DMatrix::zeros(3, 2)).unwrap();
        assert_eq!(gamma_norm_hilbert(&zero).unwrap(), 0.0);
        let lp = GammaOperator::new(
            DMatrix::identity(2, 2),
            TargetNorm::Lp {
                p: 4.0,
                weights: vec![0.5, 0.5],
            },
        )
        .unwrap();
        assert!(matches!(
            gamma_norm_hilbert(&lp),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn identity_estimate_is_sqrt_dimension() {
        let op = GammaOperator::euclidean(DMatrix::identity(5, 5)).unwrap();
        let est = gamma_norm_mc(&op, 20_000, 3, Exec::Sequential).unwrap();
        assert!((est.value - 5f64.sqrt()).abs() < 3.0 * est.std_err);
    }

    #[test]
    fn estimate_does_not_depend_on_execution_policy() {
        let op =
            GammaOperator::euclidean(DMatrix::from_fn(3, 4, |i, j| (i + 2 * j) as f64)).unwrap();
        let a = gamma_norm_mc(&op, 5000, 9, Exec::Sequential).unwrap();
        let b = gamma_norm_mc(&op, 5000, 9, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_node_forward_is_the_block() {
        let block = DMatrix::from_fn(3, 2, |i, j| (i as f64) - (j as f64));
        let op = gamma_fubini_forward(
            std::slice::from_ref(&block),
            &TargetNorm::Euclidean,
            2.0,
            &[1.0],
        )
        .unwrap();
        assert_eq!(op.matrix, block);
        let bad = gamma_fubini_forward(
            &[block, DMatrix::zeros(2, 2)],
            &TargetNorm::Euclidean,
            2.0,
            &[1.0, 1.0],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn bound_of_scaled_identity() {
        let fam = vec![DMatrix::identity(3, 3) * -2.5];
        let b = gamma_bound_estimate(&fam, 16, 4000, 1, Exec::Sequential).unwrap();
        assert!((b.ratio - 2.5).abs() < 1e-12);
        let fam = vec![DMatrix::identity(3, 3)];
        let b = gamma_bound_estimate(&fam, 16, 4000, 1, Exec::Sequential).unwrap();
        assert!((b.ratio - 1.0).abs() < 1e-12);
    }
}

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{RunConfig, SolverChoice};
use super::Artifacts;
use crate::error::{Error, Result};
use crate::gamma::{gamma_norm_hilbert, gamma_norm_mc, GammaOperator};
use crate::heatmem::verify_lipschitz;
use crate::path::{MildPath, Trajectory};
use crate::solver::{picard_solve, step_solve, stoch_convolution, ProblemSpec};
use crate::spectral::{Basis, DirichletLaplacian1D};
use crate::stats::{convergence_order, stream_rng, LinearFit, MeanEstimate};
use crate::stochastic::{integrate_step, CylindricalNoise, StepProcess};
use crate::weights::{
    check_km_inequality, History, HistoryBound, HistoryGrid, TemporalProfile, WeightFunction,
};

// Path indices of the verification draws, disjoint from the simulation paths.
const ITO_PATHS: u64 = 1 << 40;
const OU_PATHS: u64 = 2 << 40;
const CELL_PATH: u64 = 3 << 40;

fn steps_for(horizon: f64, dt: f64) -> Result<usize> {
    let n = (horizon / dt).round();
    if n < 1.0 || ((n * dt - horizon).abs() > 1e-9 * horizon) {
        return Err(Error::Config(format!(
            "horizon {horizon} is not a whole number of steps of {dt}"
        )));
    }
    Ok(n as usize)
}

fn noises(
    cfg: &RunConfig,
    spec: &ProblemSpec,
    count: usize,
    steps: usize,
    dt: f64,
) -> Result<Vec<CylindricalNoise>> {
    if spec.is_deterministic() {
        return Ok(Vec::new());
    }
    let nh = spec.diffusion.noise_modes();
    let seed = cfg.stochastics.seed;
    cfg.exec().try_map(count, |k| {
        CylindricalNoise::generate(seed, k as u64, nh, steps, dt)
    })
}

fn header(out: &mut String, lead: &str, modes: usize) {
    out.push_str(lead);
    for k in 1..=modes {
        let _ = write!(out, ",a_{k}");
    }
    out.push('\n');
}

/// Rows `path,t,a_1..a_N` for every `stride`-th node (and the last one).
pub fn paths_csv(paths: &[MildPath], stride: usize) -> String {
    let mut out = String::new();
    header(&mut out, "path,t", paths.first().map_or(0, |p| p.modes()));
    for (k, path) in paths.iter().enumerate() {
        let last = path.steps();
        for i in (0..=last).filter(|i| i % stride == 0 || *i == last) {
            let _ = write!(out, "{k},{:e}", path.time(i));
            for a in path.value(i) {
                let _ = write!(out, ",{a:e}");
            }
            out.push('\n');
        }
    }
    out
}

/// Solves the configured problem with the Picard solver and records paths,
/// residual histories and the contraction estimate.
pub fn simulate(cfg: &RunConfig) -> Result<Artifacts> {
    let dt = cfg.discretization.dt;
    let built = cfg.build(dt)?;
    let spec = &built.spec;
    let steps = steps_for(spec.horizon, dt)?;
    let noises = noises(cfg, spec, cfg.stochastics.paths, steps, dt)?;
    let solution = picard_solve(spec, &cfg.solver_settings(dt), &noises)?;

    let mut artifacts = Artifacts::default();
    artifacts.push("paths.csv", paths_csv(&solution.paths, cfg.output.stride));

    let mut conv = String::from("interval,start,iteration,residual,ratio\n");
    for rec in &solution.records {
        for (k, r) in rec.residuals.iter().enumerate() {
            let ratio = if k == 0 {
                String::new()
            } else {
                format!("{:e}", rec.ratios.get(k - 1).copied().unwrap_or(f64::NAN))
            };
            let _ = writeln!(
                conv,
                "{},{:e},{},{r:e},{ratio}",
                rec.index,
                rec.start,
                k + 1
            );
        }
    }
    artifacts.push("convergence.csv", conv);

    let c = &solution.contraction;
    let mut contraction = String::from("horizon,steps,halvings,max_ratio,fixed_point_residual\n");
    let fp = solution
        .records
        .iter()
        .map(|r| r.fixed_point_residual)
        .fold(0.0, f64::max);
    let _ = writeln!(
        contraction,
        "{:e},{},{},{:e},{fp:e}",
        c.horizon, c.steps, solution.halvings, c.max_ratio
    );
    artifacts.push("contraction.csv", contraction);
    Ok(artifacts)
}

/// One line of the invariant table.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub invariant: String,
    pub value: f64,
    pub band: String,
    pub pass: bool,
}

impl VerifyRow {
    fn at_most(invariant: &str, value: f64, bound: f64) -> Self {
        Self {
            invariant: invariant.into(),
            value,
            band: format!("<= {bound:e}"),
            pass: value <= bound,
        }
    }
}

fn semigroup_law(cfg: &RunConfig) -> Result<VerifyRow> {
    let d = &cfg.discretization;
    let op = DirichletLaplacian1D::new(d.length, d.modes)?;
    let basis = Basis::new(op, d.points)?;
    let mut rng = stream_rng(cfg.stochastics.seed, 0x5E);
    let x = basis.field((0..d.modes).map(|_| rng.sample(StandardNormal)).collect())?;
    let mut worst: f64 = 0.0;
    for &(t, s) in &[(1e-3, 2e-3), (0.01, 0.05), (0.1, 0.3), (0.7, 0.2)] {
        let two = op.semigroup_apply(t, &op.semigroup_apply(s, &x)?)?;
        let one = op.semigroup_apply(t + s, &x)?;
        for (a, b) in two.coeffs.iter().zip(&one.coeffs) {
            // relative error while the value is a normal float, absolute below
            let scale = b.abs().max(f64::MIN_POSITIVE * 1e20);
            worst = worst.max((a - b).abs() / scale);
        }
    }
    Ok(VerifyRow::at_most("semigroup_law_rel_err", worst, 1e-12))
}

/// Random piecewise-linear paths continuing random exponential histories.
fn km_inequality(cfg: &RunConfig) -> Result<VerifyRow> {
    let (p, horizon, dt) = (2.0, 1.0, 0.05);
    let weight = WeightFunction::Exponential { rate: 1.0 };
    let basis = Basis::new(DirichletLaplacian1D::new(1.0, 4)?, 32)?;
    let mut rng = stream_rng(cfg.stochastics.seed, 0x4B4D);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..cfg.verify.km_paths {
        let rate = 0.5 + 1.5 * rng.random::<f64>();
        let shape = basis.field((0..4).map(|_| rng.sample(StandardNormal)).collect())?;
        let scale = basis.lp_norm(&shape, p)?;
        let history = Arc::new(History::Separable {
            profile: TemporalProfile::Exponential { rate },
            shape: shape.clone(),
        });
        let steps = (horizon / dt) as usize;
        let mut data = shape.coeffs.clone();
        let mut cur = shape.coeffs.clone();
        for _ in 0..steps {
            for c in cur.iter_mut() {
                *c += 0.5 * rng.sample::<f64, _>(StandardNormal);
            }
            data.extend_from_slice(&cur);
        }
        let path = MildPath::new(dt, 4, data, history)?;
        let grid = HistoryGrid::for_history(
            &weight,
            p,
            HistoryBound::ExpDecay { scale, rate },
            horizon,
            1e-14,
            512,
            dt / 8.0,
        )?;
        let t = rng.random::<f64>() * horizon;
        let r = check_km_inequality(&path, t, p, &weight, &grid, &basis, 1e-8)?;
        worst = worst.max(r.lhs - r.mid).max(r.mid - r.rhs);
    }
    Ok(VerifyRow::at_most("km_inequality_violation", worst, 1e-8))
}

fn gamma_oracles(cfg: &RunConfig) -> Result<Vec<VerifyRow>> {
    let v = &cfg.verify;
    let mut rng = stream_rng(cfg.stochastics.seed, 0x6A);
    let mut worst_z: f64 = 0.0;
    let mut worst_rel_se: f64 = 0.0;
    for k in 0..v.gamma_operators {
        let m = DMatrix::from_fn(8, 8, |_, _| rng.sample::<f64, _>(StandardNormal));
        let op = GammaOperator::euclidean(m)?;
        let hs = gamma_norm_hilbert(&op)?;
        let est = gamma_norm_mc(
            &op,
            v.gamma_samples,
            cfg.stochastics.seed ^ (k as u64 + 1),
            cfg.exec(),
        )?;
        worst_z = worst_z.max((est.value - hs).abs() / est.std_err);
        worst_rel_se = worst_rel_se.max(est.std_err / hs);
    }
    Ok(vec![
        VerifyRow::at_most("gamma_mc_vs_hilbert_schmidt_se", worst_z, v.se_band),
        VerifyRow::at_most("gamma_mc_relative_se", worst_rel_se, 0.01),
    ])
}

fn ito_checks(cfg: &RunConfig) -> Result<Vec<VerifyRow>> {
    let v = &cfg.verify;
    let (c, horizon, steps) = (0.7, 1.0, 50usize);
    let dt = horizon / steps as f64;
    let seed = cfg.stochastics.seed;
    let constant = StepProcess::deterministic(dt, vec![DMatrix::from_element(1, 1, c); steps])?;
    let finals = cfg.exec().try_map(v.ito_draws, |k| {
        let noise = CylindricalNoise::generate(seed, ITO_PATHS + k as u64, 1, steps, dt)?;
        Ok(integrate_step(&constant, noise.full())?[steps][0])
    })?;
    let est = MeanEstimate::from_samples(&finals);
    let se = MeanEstimate::variance_std_err(&finals);
    let isometry = (est.variance - c * c * horizon).abs() / se;

    // ∫ 1_{(t_i, t_{i+1}]} x ⊗ e_2 dW = x ΔW_2(i), with no rounding.
    let noise = CylindricalNoise::generate(seed, CELL_PATH, 2, steps, dt)?;
    let (cell, x, h) = (7usize, [1.5, -0.25], [0.0, 1.0]);
    let cells: Vec<DMatrix<f64>> = (0..steps)
        .map(|i| {
            if i == cell {
                DMatrix::from_fn(2, 2, |r, s| x[r] * h[s])
            } else {
                DMatrix::zeros(2, 2)
            }
        })
        .collect();
    let integral = integrate_step(&StepProcess::deterministic(dt, cells)?, noise.full())?;
    let dw = noise.cell(cell);
    let pairing = dw[1];
    let exact_err = (0..2)
        .map(|r| (integral[steps][r] - x[r] * pairing).abs())
        .fold(0.0, f64::max);
    Ok(vec![
        VerifyRow::at_most("ito_isometry_se", isometry, v.se_band),
        VerifyRow {
            invariant: "ito_single_cell_abs_err".into(),
            value: exact_err,
            band: "== 0".into(),
            pass: exact_err == 0.0,
        },
    ])
}

/// Variance of `∫_0^1 e^{-(1-s)} dW(s)` from the stochastic convolution.
fn ou_variance(cfg: &RunConfig) -> Result<VerifyRow> {
    let (steps, dt) = (20usize, 0.05);
    let seed = cfg.stochastics.seed;
    let eig = [1.0];
    let process = StepProcess::deterministic(dt, vec![DMatrix::from_element(1, 1, 1.0); steps])?;
    let finals = cfg.exec().try_map(cfg.verify.ito_draws, |k| {
        let noise = CylindricalNoise::generate(seed, OU_PATHS + k as u64, 1, steps, dt)?;
        Ok(stoch_convolution(&eig, &process, noise.full())?[steps])
    })?;
    let exact = (1.0 - (-2.0f64).exp()) / 2.0;
    let var = MeanEstimate::from_samples(&finals).variance;
    let z = (var - exact).abs() / MeanEstimate::variance_std_err(&finals);
    Ok(VerifyRow::at_most("ou_variance_se", z, cfg.verify.se_band))
}

/// A short stochastic solve; fails when the diffusion reads future noise.
fn adaptedness(cfg: &RunConfig, spec: &ProblemSpec) -> Result<VerifyRow> {
    let dt = cfg.discretization.dt;
    let mut ok = true;
    if !spec.is_deterministic() {
        let mut short = spec.clone();
        short.horizon = 2.0 * dt;
        let noise = CylindricalNoise::generate(
            cfg.stochastics.seed,
            0,
            spec.diffusion.noise_modes(),
            2,
            dt,
        )?;
        match step_solve(&short, dt, Some(noise.full())) {
            Ok(_) => {}
            Err(Error::Anticipating { .. }) => ok = false,
            Err(e) => return Err(e),
        }
    }
    Ok(VerifyRow {
        invariant: "diffusion_adapted".into(),
        value: if ok { 1.0 } else { 0.0 },
        band: "== 1".into(),
        pass: ok,
    })
}

/// Runs the invariant suite; one row per invariant.
pub fn verify(cfg: &RunConfig) -> Result<(Vec<VerifyRow>, Artifacts)> {
    let built = cfg.build(cfg.discretization.dt)?;
    let mut rows = vec![semigroup_law(cfg)?, km_inequality(cfg)?];
    rows.extend(gamma_oracles(cfg)?);
    rows.extend(ito_checks(cfg)?);
    rows.push(ou_variance(cfg)?);
    if let Some(hm) = &built.heatmem {
        let v = &cfg.verify;
        let rep = verify_lipschitz(hm, v.lipschitz_trials, cfg.stochastics.seed)?;
        let relative = |name: &str, ratio: f64, bound: f64| {
            let value = if bound > 0.0 { ratio / bound } else { ratio };
            VerifyRow::at_most(
                name,
                value,
                if bound > 0.0 {
                    1.0 + v.lipschitz_slack
                } else {
                    1e-14
                },
            )
        };
        rows.push(relative(
            "drift_lipschitz_ratio",
            rep.drift_ratio,
            rep.drift_bound,
        ));
        rows.push(relative(
            "diffusion_lipschitz_ratio",
            rep.diffusion_ratio,
            rep.diffusion_bound,
        ));
        rows.push(relative(
            "diffusion_gamma_lipschitz_ratio",
            rep.diffusion_gamma_ratio,
            rep.diffusion_bound,
        ));
        let adm = hm.admissibility.first.max(hm.admissibility.second);
        rows.push(VerifyRow {
            invariant: "history_admissibility".into(),
            value: adm,
            band: "< inf".into(),
            pass: adm.is_finite(),
        });
    }
    rows.push(adaptedness(cfg, &built.spec)?);

    let mut csv = String::from("invariant,value,band,verdict\n");
    for r in &rows {
        let verdict = if r.pass { "pass" } else { "fail" };
        let _ = writeln!(csv, "{},{:e},{},{verdict}", r.invariant, r.value, r.band);
    }
    let mut artifacts = Artifacts::default();
    artifacts.push("verify.csv", csv);
    Ok((rows, artifacts))
}

/// Errors of a coupled time-step refinement study.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub dts: Vec<f64>,
    /// `(E‖U_{Δt}(T) - U_{Δt/2}(T)‖²_{L²})^{1/2}` per level.
    pub errors: Vec<f64>,
    pub std_errs: Vec<f64>,
    pub fit: Option<LinearFit>,
    /// 95% confidence interval of the fitted order.
    pub interval: (f64, f64),
    pub flagged: bool,
}

/// Relative size below which level differences are treated as rounding.
const ROUNDING_FLOOR: f64 = 1e-12;

/// Two-sided 95% Student-t quantile.
fn t_quantile(df: usize) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    if df == 0 {
        return f64::INFINITY;
    }
    StudentsT::new(0.0, 1.0, df as f64).map_or(f64::NAN, |t| t.inverse_cdf(0.975))
}

/// Solves on `levels + 1` time steps `Δt_0 2^{-l}` with noise coarsened from
/// the finest level and regresses the successive terminal differences.
pub fn convergence(cfg: &RunConfig) -> Result<(ConvergenceReport, Artifacts)> {
    let c = &cfg.convergence;
    let levels = c.levels;
    let finest = c.coarse_dt / f64::powi(2.0, levels as i32);
    let built = cfg.build(finest)?;
    let spec = &built.spec;
    let fine_steps = steps_for(spec.horizon, finest)?;
    steps_for(spec.horizon, c.coarse_dt)?;
    let paths = if spec.is_deterministic() { 1 } else { c.paths };
    let nh = spec.diffusion.noise_modes();
    let seed = cfg.stochastics.seed;
    let solve = |dt: f64, noise: Option<&CylindricalNoise>| -> Result<Vec<f64>> {
        match c.solver {
            SolverChoice::Step => Ok(step_solve(spec, dt, noise.map(|n| n.full()))?
                .terminal()
                .to_vec()),
            SolverChoice::Picard => {
                let mut settings = cfg.solver_settings(dt);
                settings.exec = crate::Exec::Sequential;
                let noises: Vec<CylindricalNoise> = noise.into_iter().cloned().collect();
                let sol = picard_solve(spec, &settings, &noises)?;
                Ok(sol.paths[0].terminal().to_vec())
            }
        }
    };
    // terminal values per path and level, level 0 coarsest
    let terminals: Vec<Vec<Vec<f64>>> = cfg.exec().try_map(paths, |k| {
        let fine = if spec.is_deterministic() {
            None
        } else {
            Some(CylindricalNoise::generate(
                seed, k as u64, nh, fine_steps, finest,
            )?)
        };
        (0..=levels)
            .map(|l| {
                let factor = 1usize << (levels - l);
                let dt = c.coarse_dt / f64::powi(2.0, l as i32);
                match &fine {
                    Some(n) => solve(dt, Some(&n.coarsened(factor)?)),
                    None => solve(dt, None),
                }
            })
            .collect()
    })?;
    let mut dts = Vec::with_capacity(levels);
    let mut errors = Vec::with_capacity(levels);
    let mut std_errs = Vec::with_capacity(levels);
    for l in 0..levels {
        let sq: Vec<f64> = terminals
            .iter()
            .map(|t| {
                t[l].iter()
                    .zip(&t[l + 1])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum()
            })
            .collect();
        let est = MeanEstimate::from_samples(&sq);
        let e = est.mean.sqrt();
        dts.push(c.coarse_dt / f64::powi(2.0, l as i32));
        errors.push(e);
        std_errs.push(if e > 0.0 {
            est.std_err / (2.0 * e)
        } else {
            0.0
        });
    }
    // differences at rounding level relative to the solution count as zero
    let size = terminals
        .iter()
        .map(|t| t[levels].iter().map(|a| a * a).sum::<f64>())
        .sum::<f64>()
        .sqrt()
        / (paths as f64).sqrt();
    let floor = ROUNDING_FLOOR * size;
    for (e, se) in errors.iter_mut().zip(std_errs.iter_mut()) {
        if *e <= floor {
            *e = 0.0;
            *se = 0.0;
        }
    }
    let flagged = (1..levels)
        .any(|l| errors[l] > errors[l - 1] * (1.0 + 1e-12) + 2.0 * (std_errs[l] + std_errs[l - 1]));
    let fit = convergence_order(&dts, &errors);
    let interval = fit.map_or((f64::NAN, f64::NAN), |f| {
        let half = t_quantile(levels.saturating_sub(2)) * f.slope_std_err;
        (f.slope - half, f.slope + half)
    });

    let mut table = String::from("level,dt,error,std_err\n");
    for l in 0..levels {
        let _ = writeln!(table, "{l},{:e},{:e},{:e}", dts[l], errors[l], std_errs[l]);
    }
    let mut order = String::from("order,std_err,ci_low,ci_high,r_squared,flagged\n");
    let (slope, se, r2) = fit.map_or((f64::NAN, f64::NAN, f64::NAN), |f| {
        (f.slope, f.slope_std_err, f.r_squared)
    });
    let _ = writeln!(
        order,
        "{slope:e},{se:e},{:e},{:e},{r2:e},{flagged}",
        interval.0, interval.1
    );
    let mut artifacts = Artifacts::default();
    artifacts.push("convergence_levels.csv", table);
    artifacts.push("convergence_order.csv", order);
    Ok((
        ConvergenceReport {
            dts,
            errors,
            std_errs,
            fit,
            interval,
            flagged,
        },
        artifacts,
    ))
}

/// Monte Carlo γ-norms of random Euclidean-target operators of several shapes
/// next to their Hilbert–Schmidt norms.
pub fn gamma_bench(cfg: &RunConfig) -> Result<Artifacts> {
    let v = &cfg.verify;
    let mut rng = stream_rng(cfg.stochastics.seed, 0x6B);
    let mut csv =
        String::from("operator,rows,cols,samples,hilbert_schmidt,monte_carlo,std_err,z\n");
    let shapes = [(8usize, 8usize), (16, 4), (4, 16), (32, 32)];
    for k in 0..v.gamma_operators {
        let (r, c) = shapes[k % shapes.len()];
        let m = DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
        let op = GammaOperator::euclidean(m)?;
        let hs = gamma_norm_hilbert(&op)?;
        let est = gamma_norm_mc(
            &op,
            v.gamma_samples,
            cfg.stochastics.seed ^ (k as u64 + 1),
            cfg.exec(),
        )?;
        let z = (est.value - hs) / est.std_err;
        let _ = writeln!(
            csv,
            "{k},{r},{c},{},{hs:e},{:e},{:e},{z:e}",
            v.gamma_samples, est.value, est.std_err
        );
    }
    let mut artifacts = Artifacts::default();
    artifacts.push("gamma_bench.csv", csv);
    Ok(artifacts)
}

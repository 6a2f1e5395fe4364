//! Mild solutions `U(t) = S(t)Φ(0) + S∗F(·,Ũ)(t) + S⋄B(·,Ũ)(t)`.
//!
//! [`apply_lt`] evaluates the fixed-point operator on a candidate path,
//! [`picard_solve`] iterates it on intervals short enough for the empirical
//! contraction constant to drop below `1/2` and glues the pieces together by
//! restarting from the segment `U_T`, and [`step_solve`] is an independent
//! exponential-Euler scheme used as a cross-check.

mod convolution;
mod picard;
mod problem;
mod stepper;

pub use convolution::{det_convolution, semigroup_orbit, stoch_convolution};
pub use picard::{
    apply_lt, default_probes, empirical_contraction, picard_solve, ContractionEstimate,
    IntervalRecord, IntervalRule, PicardSolution, ProbePair, SolverSettings,
};
pub use problem::{
    AdditiveDiffusion, Diffusion, Drift, ExpMemoryDrift, Exponents, FrozenDiffusion, HeadDrift,
    ModewiseLinearDiffusion, ProblemSpec, ZeroDiffusion, ZeroDrift,
};
pub use stepper::{step_solve, step_solve_ensemble};

pub(crate) use convolution::StepWeights;

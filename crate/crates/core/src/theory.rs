//! Saturation theory: the saturated-fraction estimator, the finite-sample
//! recovery bound for compression-based SCI under clipping, and the
//! normalized bound used to pick mask densities.
//!
//! The bound says, with the stated probability, that
//!
//! ```text
//! ||x - x_hat|| / sqrt(nB)
//!   <= 2 sqrt((1 - p_s)/(nBp)) eps_z
//!    + sqrt((1 + Bp/(1-p)) delta + rho^2 eps1 / (p(1-p))
//!           + (p_s + eps2) beta_T (beta_T/B + 4 rho))
//! ```
//!
//! with `beta_T = (B rho/2 - T)^+`. Dividing through by `rho^2` and
//! dropping the noise term gives the density profile
//! `g(p;T) = (1 + Bp/(1-p)) delta' + eps1/(p(1-p)) + (p_s + eps2) Delta_T / B`
//! whose grid minimizer is the recommended mask density: it sits below
//! one half and moves further down as clipping gets harsher.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{derive_seed, sample_masks, DensityGrid, MaskSpec};
use crate::model::{forward, saturated_indices, Cube};

/// Default value for the free parameters eps1 and eps2.
pub const DEFAULT_EPS: f64 = 0.01;

/// Inputs to the recovery bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Mask density in (0,1).
    pub p: f64,
    /// Clipping threshold.
    pub t: f64,
    /// Frame count B.
    #[serde(alias = "B")]
    pub frames: usize,
    /// Amplitude bound parameter.
    pub rho: f64,
    /// Worst-case code distortion.
    pub delta: f64,
    /// Code rate r (codebook size is at most 2^(B r)).
    pub rate_r: f64,
    /// Spatial measurement count.
    pub n: usize,
    /// Free concentration parameter.
    pub eps1: f64,
    /// Free concentration parameter.
    pub eps2: f64,
    /// l2 noise budget.
    pub eps_z: f64,
    /// Expected fraction of saturated measurements.
    pub p_s: f64,
}

impl BoundParams {
    fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::Parameter(format!(
                "p={} outside (0,1); the bound divides by p(1-p)",
                self.p
            )));
        }
        if !(self.t > 0.0) {
            return Err(Error::Parameter("threshold must be positive".into()));
        }
        if self.frames == 0 || self.n == 0 {
            return Err(Error::Parameter("frames and n must be positive".into()));
        }
        if !(self.rho > 0.0) {
            return Err(Error::Parameter("rho must be positive".into()));
        }
        if self.delta < 0.0 || self.eps_z < 0.0 {
            return Err(Error::Parameter("delta and eps_z must be nonnegative".into()));
        }
        if !(self.rate_r > 0.0) {
            return Err(Error::Parameter("code rate must be positive".into()));
        }
        if !(self.eps1 > 0.0 && self.eps2 > 0.0) {
            return Err(Error::Parameter("eps1 and eps2 must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.p_s) {
            return Err(Error::Parameter(format!("p_s={} outside [0,1]", self.p_s)));
        }
        Ok(())
    }
}

/// Evaluated recovery bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    /// Saturation severity `(B rho/2 - T)^+`.
    pub beta_t: f64,
    /// Bound on the normalized error `||x - x_hat||_2 / sqrt(nB)`.
    pub rhs: f64,
    /// `1 - 2^(Br+1) exp(-n eps1^2 / (2 B^2)) - exp(-2 n eps2^2)`; can be
    /// far below zero for small n, in which case the bound is vacuous.
    pub success_prob_lower: f64,
}

/// The p-independent pieces of the normalized bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedBound {
    /// `delta / rho^2`.
    pub delta_prime: f64,
    /// `T / rho`.
    pub t_prime: f64,
    /// `(B/2 - T')^+ ((B/2 - T')^+ + 4B)`.
    pub delta_t: f64,
}

impl NormalizedBound {
    pub fn new(delta: f64, t: f64, rho: f64, frames: usize) -> Self {
        let delta_prime = delta / (rho * rho);
        let t_prime = t / rho;
        let d = (frames as f64 / 2.0 - t_prime).max(0.0);
        NormalizedBound { delta_prime, t_prime, delta_t: d * (d + 4.0 * frames as f64) }
    }
}

/// Monte-Carlo estimate of p_s along with its 99% Hoeffding half width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsEstimate {
    pub estimate: f64,
    pub half_width: f64,
}

/// Estimates `p_s(x;T)`, the expected fraction of saturated measurements
/// over mask randomness, by drawing `trials` independent Bern(p) mask sets.
///
/// The estimate is an exact integer ratio (total saturated count over
/// `trials * n`), so the value does not depend on accumulation order and
/// trials can run in parallel. Per-trial mask seeds derive from `seed`
/// independently of `p`, which couples the draws across densities: reruns
/// at a larger `p` flip bits on, never off.
pub fn estimate_ps(
    x: &Cube,
    t: f64,
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<PsEstimate> {
    if trials == 0 {
        return Err(Error::Parameter("trials must be at least 1".into()));
    }
    if !(t > 0.0) {
        return Err(Error::Parameter("threshold must be positive".into()));
    }
    let n = x.n();
    let saturated: u64 = (0..trials)
        .into_par_iter()
        .map(|k| {
            let spec = MaskSpec {
                n1: x.n1(),
                n2: x.n2(),
                frames: x.frames(),
                p,
                seed: derive_seed(seed, k as u64),
            };
            let m = sample_masks(&spec).expect("validated above");
            let y = forward(x, &m).expect("shapes match by construction");
            saturated_indices(&y, t).len() as u64
        })
        .sum();
    let draws = (trials * n) as f64;
    Ok(PsEstimate {
        estimate: saturated as f64 / draws,
        half_width: ((2.0f64 / 0.01).ln() / (2.0 * draws)).sqrt(),
    })
}

/// Evaluates the recovery bound and its success probability.
pub fn theorem_bound(params: &BoundParams) -> Result<BoundResult> {
    params.validate()?;
    let b = params.frames as f64;
    let n = params.n as f64;
    let beta_t = (b * params.rho / 2.0 - params.t).max(0.0);

    let noise_term = 2.0 * ((1.0 - params.p_s) / (n * b * params.p)).sqrt() * params.eps_z;
    let code_term = (1.0 + b * params.p / (1.0 - params.p)) * params.delta;
    let concentration_term = params.rho * params.rho * params.eps1 / (params.p * (1.0 - params.p));
    let saturation_term = (params.p_s + params.eps2) * beta_t * (beta_t / b + 4.0 * params.rho);
    let rhs = noise_term + (code_term + concentration_term + saturation_term).sqrt();

    let success_prob_lower = 1.0
        - (b * params.rate_r + 1.0).exp2() * (-n * params.eps1 * params.eps1 / (2.0 * b * b)).exp()
        - (-2.0 * n * params.eps2 * params.eps2).exp();

    Ok(BoundResult { beta_t, rhs, success_prob_lower })
}

/// Shared configuration for the normalized bound `g(p;T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GConfig {
    #[serde(alias = "B")]
    pub frames: usize,
    pub rho: f64,
    pub delta: f64,
    pub eps1: f64,
    pub eps2: f64,
}

impl GConfig {
    fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Parameter("frames must be positive".into()));
        }
        if !(self.rho > 0.0) {
            return Err(Error::Parameter("rho must be positive".into()));
        }
        if self.delta < 0.0 {
            return Err(Error::Parameter("delta must be nonnegative".into()));
        }
        if !(self.eps1 > 0.0 && self.eps2 > 0.0) {
            return Err(Error::Parameter("eps1 and eps2 must be positive".into()));
        }
        Ok(())
    }
}

/// Evaluates the normalized bound
/// `g(p;T) = (1 + Bp/(1-p)) delta' + eps1/(p(1-p)) + (p_s(p) + eps2) Delta_T / B`.
///
/// `p_s_curve` supplies the saturated fraction as a function of density;
/// it may be analytic, tabulated, or Monte-Carlo backed — the minimizer
/// results only need it nondecreasing in `p`.
pub fn normalized_bound_g(
    p: f64,
    t: f64,
    cfg: &GConfig,
    p_s_curve: &dyn Fn(f64) -> f64,
) -> Result<f64> {
    cfg.validate()?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Parameter(format!("p={p} outside (0,1)")));
    }
    if !(t > 0.0) {
        return Err(Error::Parameter("threshold must be positive".into()));
    }
    let p_s = p_s_curve(p);
    if !(0.0..=1.0).contains(&p_s) {
        return Err(Error::Parameter(format!("p_s curve returned {p_s}, outside [0,1]")));
    }
    let b = cfg.frames as f64;
    let norm = NormalizedBound::new(cfg.delta, t, cfg.rho, cfg.frames);
    Ok((1.0 + b * p / (1.0 - p)) * norm.delta_prime
        + cfg.eps1 / (p * (1.0 - p))
        + (p_s + cfg.eps2) * norm.delta_t / b)
}

/// For each threshold, the density minimizing `g(p;T)` over the grid.
/// Ties break toward the smaller density.
pub fn optimal_density(
    t_grid: &[f64],
    cfg: &GConfig,
    p_s_curve: &dyn Fn(f64) -> f64,
    p_grid: &DensityGrid,
) -> Result<Vec<(f64, f64)>> {
    if t_grid.is_empty() {
        return Err(Error::Parameter("threshold grid must be nonempty".into()));
    }
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let mut best_p = f64::NAN;
        let mut best_g = f64::INFINITY;
        for &p in p_grid.values() {
            let g = normalized_bound_g(p, t, cfg, p_s_curve)?;
            if g < best_g {
                best_g = g;
                best_p = p;
            }
        }
        out.push((t, best_p));
    }
    Ok(out)
}

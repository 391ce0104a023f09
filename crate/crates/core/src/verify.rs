//! End-to-end certification of the recovery bound on small instances.
//!
//! Each trial samples a class member and a mask set, simulates the clipped
//! acquisition, solves with the saturation-aware codebook search, and
//! compares the realized error `||x - x_hat|| / sqrt(nB)` against the
//! bound. The report states how often the bound was violated next to the
//! failure probability the theory allows (plus a 3-sigma Monte-Carlo
//! margin on the frequency itself).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csp::{build_toy_code, csp_sat_solve, ToyCodeSpec};
use crate::error::{Error, Result};
use crate::mask::{derive_seed, sample_masks, MaskSpec};
use crate::sweep::{simulate_measurement, HARNESS_RHO};
use crate::theory::{estimate_ps, theorem_bound, BoundParams, DEFAULT_EPS};

/// Budget limits for the small-instance verifier.
pub const MAX_VERIFY_N: usize = 256;
pub const MAX_VERIFY_FRAMES: usize = 4;

/// Configuration for a certification run. The code spec fixes the cube
/// dimensions; `t_over_b` is mapped to an absolute threshold under the
/// harness rho = 2 convention (cap = B).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub code: ToyCodeSpec,
    pub p: f64,
    #[serde(alias = "T_over_B")]
    pub t_over_b: f64,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "default_eps")]
    pub eps1: f64,
    #[serde(default = "default_eps")]
    pub eps2: f64,
    #[serde(default = "default_ps_trials")]
    pub ps_trials: usize,
}

fn default_eps() -> f64 {
    DEFAULT_EPS
}

fn default_ps_trials() -> usize {
    256
}

/// Outcome of a certification run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoremReport {
    pub trials: usize,
    pub violations: usize,
    pub violation_frequency: f64,
    /// Lower bound on the per-trial success probability from the theory.
    pub success_prob_lower: f64,
    /// `(1 - success_prob_lower) + 3 sqrt(0.25 / trials)`; frequencies at
    /// or below this are consistent with the theorem.
    pub allowed_frequency: f64,
    pub mean_error: f64,
    pub max_error: f64,
    pub mean_rhs: f64,
    pub mean_sat_fraction: f64,
    pub passed: bool,
}

struct TrialOutcome {
    error: f64,
    rhs: f64,
    sat_fraction: f64,
}

/// Runs the certification. Budget: `n <= 256`, `B <= 4`, codebook within
/// the enumeration cap.
pub fn verify_theorem(cfg: &VerifyConfig) -> Result<TheoremReport> {
    let code = &cfg.code;
    let n = code.n1 * code.n2;
    if n > MAX_VERIFY_N || code.frames > MAX_VERIFY_FRAMES {
        return Err(Error::Resource(format!(
            "verification instance {}x{}x{} exceeds the n <= {MAX_VERIFY_N}, B <= {MAX_VERIFY_FRAMES} budget",
            code.n1, code.n2, code.frames
        )));
    }
    if cfg.trials == 0 {
        return Err(Error::Parameter("need at least one trial".into()));
    }
    if !(cfg.t_over_b > 0.0) {
        return Err(Error::Parameter("T/B must be positive".into()));
    }
    let codebook = build_toy_code(code)?;
    let t = cfg.t_over_b * code.frames as f64;

    let outcomes: Vec<Result<TrialOutcome>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let root = derive_seed(cfg.seed, trial as u64);
            let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(root, 0));
            let x = code.sample_class_member(&mut rng)?;
            let mask = sample_masks(&MaskSpec {
                n1: code.n1,
                n2: code.n2,
                frames: code.frames,
                p: cfg.p,
                seed: derive_seed(root, 1),
            })?;
            let meas =
                simulate_measurement(&x, &mask, t, cfg.noise_sigma, derive_seed(root, 2))?;
            let sol = csp_sat_solve(meas.clipped(), meas.sat_index(), t, &mask, &codebook)?;

            let err_sq: f64 = x
                .as_slice()
                .iter()
                .zip(sol.cube.as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let error = (err_sq / (n * code.frames) as f64).sqrt();

            let ps = estimate_ps(&x, t, cfg.p, cfg.ps_trials, derive_seed(root, 3))?;
            let bound = theorem_bound(&BoundParams {
                p: cfg.p,
                t,
                frames: code.frames,
                rho: HARNESS_RHO,
                delta: codebook.distortion_delta(),
                rate_r: codebook.rate_r(),
                n,
                eps1: cfg.eps1,
                eps2: cfg.eps2,
                eps_z: meas.noise_eps(),
                p_s: ps.estimate,
            })?;
            Ok(TrialOutcome { error, rhs: bound.rhs, sat_fraction: meas.sat_fraction() })
        })
        .collect();

    let mut violations = 0usize;
    let mut sum_error = 0.0;
    let mut max_error: f64 = 0.0;
    let mut sum_rhs = 0.0;
    let mut sum_sat = 0.0;
    for outcome in outcomes {
        let o = outcome?;
        if o.error > o.rhs {
            violations += 1;
        }
        sum_error += o.error;
        max_error = max_error.max(o.error);
        sum_rhs += o.rhs;
        sum_sat += o.sat_fraction;
    }

    let success_prob_lower = theorem_bound(&BoundParams {
        p: cfg.p,
        t,
        frames: code.frames,
        rho: HARNESS_RHO,
        delta: codebook.distortion_delta(),
        rate_r: codebook.rate_r(),
        n,
        eps1: cfg.eps1,
        eps2: cfg.eps2,
        eps_z: 0.0,
        p_s: 0.0,
    })?
    .success_prob_lower;

    let trials_f = cfg.trials as f64;
    let violation_frequency = violations as f64 / trials_f;
    let allowed_frequency = (1.0 - success_prob_lower) + 3.0 * (0.25 / trials_f).sqrt();
    Ok(TheoremReport {
        trials: cfg.trials,
        violations,
        violation_frequency,
        success_prob_lower,
        allowed_frequency,
        mean_error: sum_error / trials_f,
        max_error,
        mean_rhs: sum_rhs / trials_f,
        mean_sat_fraction: sum_sat / trials_f,
        passed: violation_frequency <= allowed_frequency,
    })
}

//! Experiment harness: measurement simulation, sweep execution over
//! (density, threshold, solver) grids, and the sweep record schema.
//!
//! Normalization convention: cubes live in [0,1] with rho = 2, so the
//! class bound rho/2 is 1, the no-saturation cap B*rho/2 equals B, and the
//! threshold axis is the ratio T/B directly. PSNR uses peak 1.0.

use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csp::{build_toy_code, csp_sat_solve, Codebook, ToyCodeSpec};
use crate::error::{Error, Result};
use crate::mask::{derive_seed, sample_masks, DensityGrid, MaskSpec, RNG_ID};
use crate::metrics::psnr;
use crate::model::{forward, Cube, MaskSet, Measurement};
use crate::recon::{reconstruct, SolverConfig, TvDenoiser};
use crate::scene::{generate_scene, SceneKind, SceneSpec};
use crate::theory::{estimate_ps, theorem_bound, BoundParams, DEFAULT_EPS};

/// Amplitude-bound parameter fixed by the harness normalization.
pub const HARNESS_RHO: f64 = 2.0;

/// Solvers a sweep can exercise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    GapTv,
    Sapnet,
    CspOracle,
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SolverKind::GapTv => "gap_tv",
            SolverKind::Sapnet => "sapnet",
            SolverKind::CspOracle => "csp_oracle",
        };
        f.write_str(name)
    }
}

/// One sweep cell result; the CSV schema is exactly these fields in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub scene: SceneKind,
    pub solver: SolverKind,
    pub p: f64,
    #[serde(rename = "T_over_B")]
    pub t_over_b: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub psnr_db: f64,
    pub ps_hat: f64,
    pub bound_rhs: Option<f64>,
    pub wall_time_s: f64,
}

/// A failed cell. Failures never enter the CSV (records keep finite,
/// well-typed fields); they are reported alongside so a sweep can continue
/// past a bad cell.
#[derive(Debug, Clone, Serialize)]
pub struct SweepCellError {
    pub solver: SolverKind,
    pub p: f64,
    pub t_over_b: f64,
    pub seed: u64,
    pub message: String,
}

/// Sweep configuration; JSON config files mirror these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scene: SceneSpec,
    pub density_grid: Vec<f64>,
    #[serde(alias = "T_over_B_grid", default = "default_t_over_b_grid")]
    pub t_over_b_grid: Vec<f64>,
    #[serde(default)]
    pub noise_sigma: f64,
    pub solvers: Vec<SolverKind>,
    /// Trials to run; defaults to one per seed.
    #[serde(default)]
    pub trials: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tv_lambda")]
    pub tv_lambda: f64,
    #[serde(default = "default_tv_inner_iters")]
    pub tv_inner_iters: usize,
    /// Mask draws behind each p_s estimate.
    #[serde(default = "default_ps_trials")]
    pub ps_trials: usize,
    /// Required when the solver set includes the CSP oracle.
    #[serde(default)]
    pub codebook: Option<ToyCodeSpec>,
}

fn default_t_over_b_grid() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}

fn default_max_iters() -> usize {
    60
}

fn default_tv_lambda() -> f64 {
    0.12
}

fn default_tv_inner_iters() -> usize {
    30
}

fn default_ps_trials() -> usize {
    64
}

/// Metadata stamped next to sweep outputs so cells can be replayed.
#[derive(Debug, Clone, Serialize)]
pub struct SweepMetadata<'a> {
    pub rng: &'static str,
    pub rho: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub config: &'a ExperimentConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<usize> {
        DensityGrid::new(self.density_grid.clone())?;
        if self.t_over_b_grid.is_empty() {
            return Err(Error::Parameter("T/B grid must be nonempty".into()));
        }
        for &t in &self.t_over_b_grid {
            if !(t > 0.0) {
                return Err(Error::Parameter(format!("T/B value {t} must be positive")));
            }
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Parameter("noise_sigma must be nonnegative".into()));
        }
        if self.solvers.is_empty() {
            return Err(Error::Parameter("solver set must be nonempty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Parameter("need at least one seed".into()));
        }
        let trials = if self.trials == 0 { self.seeds.len() } else { self.trials };
        if trials > self.seeds.len() {
            return Err(Error::Parameter(format!(
                "{trials} trials requested but only {} seeds supplied",
                self.seeds.len()
            )));
        }
        if self.solvers.contains(&SolverKind::CspOracle) && self.codebook.is_none() {
            return Err(Error::Parameter(
                "csp_oracle solver needs a codebook spec in the config".into(),
            ));
        }
        Ok(trials)
    }

    pub fn metadata(&self) -> SweepMetadata<'_> {
        SweepMetadata {
            rng: RNG_ID,
            rho: HARNESS_RHO,
            eps1: DEFAULT_EPS,
            eps2: DEFAULT_EPS,
            config: self,
        }
    }
}

/// Simulates one acquisition: forward, additive Gaussian noise with the
/// theorem's convention that noise vanishes on saturated indices, then
/// clipping. With `noise_sigma = 0` the recorded noise norm is exactly 0.
pub fn simulate_measurement(
    x: &Cube,
    m: &MaskSet,
    t: f64,
    noise_sigma: f64,
    noise_seed: u64,
) -> Result<Measurement> {
    if noise_sigma < 0.0 {
        return Err(Error::Parameter("noise sigma must be nonnegative".into()));
    }
    let ideal = forward(x, m)?;
    if noise_sigma == 0.0 {
        return Measurement::from_ideal(ideal, t, 0.0);
    }
    let normal = Normal::new(0.0, noise_sigma)
        .map_err(|e| Error::Parameter(format!("bad noise sigma: {e}")))?;
    let mut rng = ChaCha20Rng::seed_from_u64(noise_seed);
    let mut noise_sq = 0.0;
    let noisy: Vec<f64> = ideal
        .iter()
        .map(|&v| {
            let z = normal.sample(&mut rng);
            if v >= t {
                // Saturated readings absorb the noise: z_i = 0 on I_s.
                v
            } else {
                noise_sq += z * z;
                v + z
            }
        })
        .collect();
    Measurement::from_ideal(noisy, t, noise_sq.sqrt())
}

/// Everything a sweep produced: records in deterministic cell order plus
/// any per-cell failures.
#[derive(Debug)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub errors: Vec<SweepCellError>,
}

/// Runs the full Cartesian sweep. See [`run_sweep_with`] for streaming.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    run_sweep_with(cfg, |_| {})
}

/// Runs the sweep, invoking `on_record` for every finished record in
/// deterministic (seed, p, T/B, solver) order. Work is distributed over
/// (seed, density) tasks; per-cell seeds keep each record reproducible
/// regardless of scheduling.
pub fn run_sweep_with(
    cfg: &ExperimentConfig,
    mut on_record: impl FnMut(&SweepRecord),
) -> Result<SweepOutcome> {
    let trials = cfg.validate()?;
    let truth = generate_scene(&cfg.scene)?;
    let codebook = match (&cfg.codebook, cfg.solvers.contains(&SolverKind::CspOracle)) {
        (Some(spec), true) => {
            let cb = build_toy_code(spec)?;
            if cb.codewords().first().map(|c| !c.same_shape(&truth)).unwrap_or(false) {
                return Err(Error::Parameter(
                    "codebook shape does not match the scene".into(),
                ));
            }
            Some(cb)
        }
        _ => None,
    };

    let tasks: Vec<(u64, f64)> = cfg.seeds[..trials]
        .iter()
        .flat_map(|&seed| cfg.density_grid.iter().map(move |&p| (seed, p)))
        .collect();

    let results: Vec<(Vec<SweepRecord>, Vec<SweepCellError>)> = tasks
        .par_iter()
        .map(|&(seed, p)| run_density_cell(cfg, &truth, codebook.as_ref(), seed, p))
        .collect();

    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (recs, errs) in results {
        for rec in recs {
            on_record(&rec);
            records.push(rec);
        }
        errors.extend(errs);
    }
    Ok(SweepOutcome { records, errors })
}

/// All cells sharing one (seed, density): one mask set, then every
/// threshold and solver.
fn run_density_cell(
    cfg: &ExperimentConfig,
    truth: &Cube,
    codebook: Option<&Codebook>,
    seed: u64,
    p: f64,
) -> (Vec<SweepRecord>, Vec<SweepCellError>) {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let fail = |solver: SolverKind, t_over_b: f64, message: String| SweepCellError {
        solver,
        p,
        t_over_b,
        seed,
        message,
    };

    let mask_seed = derive_seed(seed, p.to_bits());
    let mask = match sample_masks(&MaskSpec {
        n1: truth.n1(),
        n2: truth.n2(),
        frames: truth.frames(),
        p,
        seed: mask_seed,
    }) {
        Ok(m) => m,
        Err(e) => {
            for &solver in &cfg.solvers {
                for &t_over_b in &cfg.t_over_b_grid {
                    errors.push(fail(solver, t_over_b, e.to_string()));
                }
            }
            return (records, errors);
        }
    };

    for &t_over_b in &cfg.t_over_b_grid {
        let t = t_over_b * truth.frames() as f64; // cap = B under rho = 2
        let noise_seed = derive_seed(mask_seed, t_over_b.to_bits());
        let measurement = match simulate_measurement(truth, &mask, t, cfg.noise_sigma, noise_seed)
        {
            Ok(m) => m,
            Err(e) => {
                for &solver in &cfg.solvers {
                    errors.push(fail(solver, t_over_b, e.to_string()));
                }
                continue;
            }
        };
        let ps_hat = match estimate_ps(truth, t, p, cfg.ps_trials, derive_seed(mask_seed, 0x7073))
        {
            Ok(est) => est.estimate,
            Err(e) => {
                for &solver in &cfg.solvers {
                    errors.push(fail(solver, t_over_b, e.to_string()));
                }
                continue;
            }
        };

        for &solver in &cfg.solvers {
            let started = Instant::now();
            let solved = solve_cell(cfg, truth, codebook, &mask, &measurement, solver);
            match solved {
                Ok((psnr_db, bound_rhs)) => records.push(SweepRecord {
                    scene: cfg.scene.kind,
                    solver,
                    p,
                    t_over_b,
                    noise_sigma: cfg.noise_sigma,
                    seed,
                    psnr_db,
                    ps_hat,
                    bound_rhs,
                    wall_time_s: started.elapsed().as_secs_f64(),
                }),
                Err(e) => errors.push(fail(solver, t_over_b, e.to_string())),
            }
        }
    }
    (records, errors)
}

fn solve_cell(
    cfg: &ExperimentConfig,
    truth: &Cube,
    codebook: Option<&Codebook>,
    mask: &MaskSet,
    measurement: &Measurement,
    solver: SolverKind,
) -> Result<(f64, Option<f64>)> {
    let t = measurement.threshold();
    match solver {
        SolverKind::GapTv | SolverKind::Sapnet => {
            let denoiser = TvDenoiser { lambda: cfg.tv_lambda, inner_iters: cfg.tv_inner_iters };
            let mut solver_cfg = match solver {
                SolverKind::GapTv => SolverConfig::plain_gap(),
                _ => SolverConfig::sapnet(t),
            };
            solver_cfg.max_iters = cfg.max_iters;
            let rec = reconstruct(measurement.clipped(), mask, &solver_cfg, &denoiser)?;
            Ok((psnr(truth, &rec.cube)?, None))
        }
        SolverKind::CspOracle => {
            let cb = codebook.expect("validated: codebook present for csp_oracle");
            let sol = csp_sat_solve(
                measurement.clipped(),
                measurement.sat_index(),
                t,
                mask,
                cb,
            )?;
            let ps_for_bound = estimate_ps(
                truth,
                t,
                mask.density_p(),
                cfg.ps_trials,
                derive_seed(mask.seed(), 0x626e),
            )?;
            let bound = theorem_bound(&BoundParams {
                p: mask.density_p(),
                t,
                frames: truth.frames(),
                rho: HARNESS_RHO,
                delta: cb.distortion_delta(),
                rate_r: cb.rate_r(),
                n: truth.n(),
                eps1: DEFAULT_EPS,
                eps2: DEFAULT_EPS,
                eps_z: measurement.noise_eps(),
                p_s: ps_for_bound.estimate,
            })?;
            Ok((psnr(truth, &sol.cube)?, Some(bound.rhs)))
        }
    }
}

//! Iterative reconstruction: generalized alternating projection with a
//! pluggable denoiser, in a plain flavor and a saturation-aware flavor.
//!
//! Both run the same loop from `x^0 = 0`: project the iterate into
//! measurement space, form a residual, take the GAP correction step
//! `x + mu * H^T (H H^T)^{-1} e` (the Gram operator is diagonal, so the
//! inversion is element-wise division), then apply the denoiser. The two
//! modes differ only in the residual: the saturation-aware one clamps
//! saturated pixels with `(T - r)_+`, so a pixel that has reached the clip
//! level stops pulling the iterate down.

mod external;
mod tv;

pub use external::ExternalDenoiser;
pub use tv::{tv_denoise, tv_objective, TvDenoiser};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{adjoint, forward, gram_diagonal, Cube, MaskSet};

/// Prior-projection contract used inside the solver. Implementations must
/// preserve the cube shape and act as the identity at zero strength.
pub trait Denoiser {
    fn denoise(&self, s: &Cube, strength: f64) -> Result<Cube>;
}

/// The do-nothing denoiser; useful for consistency checks and debugging.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDenoiser;

impl Denoiser for IdentityDenoiser {
    fn denoise(&self, s: &Cube, _strength: f64) -> Result<Cube> {
        Ok(s.clone())
    }
}

/// Residual handling mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    PlainGap,
    Sapnet,
}

/// Solver configuration. `t` is the clip level and is required in
/// saturation-aware mode; `sat_tol` widens saturation detection for
/// imported data where `y_T = T` may not hold bit-exactly (zero for
/// synthetic pipelines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub mode: SolverMode,
    pub mu: f64,
    pub max_iters: usize,
    /// Denoiser strength per equal block of iterations.
    pub strength_schedule: Vec<f64>,
    pub t: Option<f64>,
    #[serde(default)]
    pub sat_tol: f64,
    /// Optional early stop on relative iterate change.
    #[serde(default)]
    pub early_stop: Option<f64>,
}

/// Default three-stage geometrically decreasing strength schedule.
pub const DEFAULT_STRENGTH_SCHEDULE: [f64; 3] = [1.0, 0.5, 0.25];

impl SolverConfig {
    pub fn plain_gap() -> Self {
        SolverConfig {
            mode: SolverMode::PlainGap,
            mu: 1.0,
            max_iters: 100,
            strength_schedule: DEFAULT_STRENGTH_SCHEDULE.to_vec(),
            t: None,
            sat_tol: 0.0,
            early_stop: None,
        }
    }

    pub fn sapnet(t: f64) -> Self {
        SolverConfig { mode: SolverMode::Sapnet, t: Some(t), ..Self::plain_gap() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::Parameter("step size mu must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Parameter("max_iters must be at least 1".into()));
        }
        if self.strength_schedule.is_empty() {
            return Err(Error::Parameter("strength schedule must be nonempty".into()));
        }
        if self.mode == SolverMode::Sapnet {
            match self.t {
                Some(t) if t > 0.0 => {}
                _ => {
                    return Err(Error::Parameter(
                        "saturation-aware mode requires a positive threshold T".into(),
                    ))
                }
            }
        }
        if self.sat_tol < 0.0 {
            return Err(Error::Parameter("sat_tol must be nonnegative".into()));
        }
        Ok(())
    }

    fn strength_at(&self, iter: usize) -> f64 {
        let idx = iter * self.strength_schedule.len() / self.max_iters;
        self.strength_schedule[idx.min(self.strength_schedule.len() - 1)]
    }
}

/// Final iterate plus the per-iteration residual norms for diagnostics.
#[derive(Debug, Clone)]
pub struct ReconResult {
    pub cube: Cube,
    /// `||e^t||_2` per iteration.
    pub data_fidelity: Vec<f64>,
}

/// One GAP correction: `x + mu * adjoint(residual / gram)` with the
/// convention 0/0 = 0, so pixels never sensed receive no correction.
pub fn gap_step(x: &Cube, residual: &[f64], m: &MaskSet, mu: f64) -> Result<Cube> {
    let gram = gram_diagonal(m);
    gap_step_with_gram(x, residual, m, mu, &gram)
}

fn gap_step_with_gram(
    x: &Cube,
    residual: &[f64],
    m: &MaskSet,
    mu: f64,
    gram: &[f64],
) -> Result<Cube> {
    if !m.matches_cube(x) {
        return Err(Error::Dimension("iterate shape does not match mask".into()));
    }
    if residual.len() != m.n() {
        return Err(Error::Dimension("residual length does not match mask".into()));
    }
    let scaled: Vec<f64> =
        residual.iter().zip(gram).map(|(&e, &g)| if g > 0.0 { e / g } else { 0.0 }).collect();
    let correction = adjoint(&scaled, m)?;
    let data: Vec<f64> = x
        .as_slice()
        .iter()
        .zip(correction.as_slice())
        .map(|(&xv, &cv)| xv + mu * cv)
        .collect();
    Ok(Cube::from_vec_unchecked(x.n1(), x.n2(), x.frames(), data))
}

/// Saturation-aware residual: unsaturated pixels keep the plain residual
/// `y_T - r`; saturated pixels contribute `(T - r)_+`, vanishing once the
/// current measurement reaches the clip level.
pub fn sapnet_residual(y_t: &[f64], r: &[f64], t: f64) -> Result<Vec<f64>> {
    sapnet_residual_tol(y_t, r, t, 0.0)
}

/// [`sapnet_residual`] with a detection band: entries with
/// `y_T >= T - sat_tol` count as saturated. Synthetic data uses zero.
pub fn sapnet_residual_tol(y_t: &[f64], r: &[f64], t: f64, sat_tol: f64) -> Result<Vec<f64>> {
    if y_t.len() != r.len() {
        return Err(Error::Dimension("y_T and r lengths differ".into()));
    }
    if let Some(v) = y_t.iter().find(|&&v| v > t) {
        return Err(Error::Parameter(format!(
            "y_T contains {v} above the clip level {t}; input is not clipped at T"
        )));
    }
    let cutoff = t - sat_tol;
    Ok(y_t
        .iter()
        .zip(r)
        .map(|(&y, &ri)| if y >= cutoff { (t - ri).max(0.0) } else { y - ri })
        .collect())
}

/// Runs the reconstruction loop from `x^0 = 0` and returns the final
/// iterate after `max_iters` passes of project / correct / denoise.
pub fn reconstruct(
    y_t: &[f64],
    m: &MaskSet,
    cfg: &SolverConfig,
    denoiser: &dyn Denoiser,
) -> Result<ReconResult> {
    cfg.validate()?;
    if y_t.len() != m.n() {
        return Err(Error::Dimension(format!(
            "measurement length {} does not match mask spatial size {}",
            y_t.len(),
            m.n()
        )));
    }
    let gram = gram_diagonal(m);
    let mut x = Cube::zeros(m.n1(), m.n2(), m.frames());
    let mut fidelity = Vec::with_capacity(cfg.max_iters);

    for iter in 0..cfg.max_iters {
        let r = forward(&x, m)?;
        let e = match cfg.mode {
            SolverMode::PlainGap => y_t.iter().zip(&r).map(|(&y, &ri)| y - ri).collect(),
            SolverMode::Sapnet => {
                sapnet_residual_tol(y_t, &r, cfg.t.expect("validated"), cfg.sat_tol)?
            }
        };
        fidelity.push(e.iter().map(|v| v * v).sum::<f64>().sqrt());

        let s = gap_step_with_gram(&x, &e, m, cfg.mu, &gram)?;
        let next = denoiser.denoise(&s, cfg.strength_at(iter))?;
        if !next.same_shape(&s) {
            return Err(Error::Contract(format!(
                "denoiser returned {}x{}x{}, expected {}x{}x{}",
                next.n1(),
                next.n2(),
                next.frames(),
                s.n1(),
                s.n2(),
                s.frames()
            )));
        }

        if let Some(tol) = cfg.early_stop {
            let diff: f64 = next
                .as_slice()
                .iter()
                .zip(x.as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let base: f64 = x.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
            x = next;
            if diff < tol * base.max(1e-12) {
                break;
            }
        } else {
            x = next;
        }
    }
    Ok(ReconResult { cube: x, data_fidelity: fidelity })
}

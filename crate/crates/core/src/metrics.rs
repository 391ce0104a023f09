//! Reconstruction quality metrics.

use crate::error::{Error, Result};
use crate::model::Cube;

/// Peak intensity under the crate's normalization (cubes in [0,1],
/// rho = 2, so the class ceiling rho/2 is 1).
pub const PSNR_PEAK: f64 = 1.0;

/// Mean squared error over all entries.
pub fn mse(x: &Cube, x_hat: &Cube) -> Result<f64> {
    if !x.same_shape(x_hat) {
        return Err(Error::Dimension("cubes have different shapes".into()));
    }
    let sum: f64 = x
        .as_slice()
        .iter()
        .zip(x_hat.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / x.len() as f64)
}

/// `10 log10(peak^2 / MSE)` with the normalized peak of 1.0. Identical
/// cubes report positive infinity.
pub fn psnr(x: &Cube, x_hat: &Cube) -> Result<f64> {
    psnr_with_peak(x, x_hat, PSNR_PEAK)
}

/// PSNR against an explicit peak (the declared intensity ceiling rho/2).
pub fn psnr_with_peak(x: &Cube, x_hat: &Cube, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::Parameter("peak must be positive".into()));
    }
    let err = mse(x, x_hat)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / err).log10())
}

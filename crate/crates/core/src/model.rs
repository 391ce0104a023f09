//! The SCI forward model and the sensor clipping nonlinearity.
//!
//! A snapshot camera compresses a cube of `B` frames into a single 2-D
//! measurement: each frame is gated by its binary mask and the gated frames
//! are summed on the sensor. Everything downstream (bounds, solvers,
//! sweeps) talks to the model through the five operations in this module.
//!
//! Vectorization convention, used everywhere in the crate: within a frame,
//! columns are concatenated (entry `(row, col)` sits at `col * n1 + row`),
//! and frames are concatenated along the long axis (frame `b` occupies
//! `b*n .. (b+1)*n` with `n = n1 * n2`). Cube and mask payloads are stored
//! flat in exactly this order, so "vectorize" is a no-op borrow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real-valued data cube of shape `n1 x n2 x frames`, stored flat in the
/// crate-wide vectorization order. Intensities are normalized; the signal
/// class bound `0 <= x <= rho/2` is checked on ingest, not on every
/// intermediate (solver iterates roam outside the class).
#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    n1: usize,
    n2: usize,
    frames: usize,
    data: Vec<f64>,
}

impl Cube {
    /// All-zero cube.
    pub fn zeros(n1: usize, n2: usize, frames: usize) -> Self {
        Cube { n1, n2, frames, data: vec![0.0; n1 * n2 * frames] }
    }

    /// Builds a signal cube from data already laid out in vectorization
    /// order. Rejects wrong lengths, empty shapes, non-finite or negative
    /// entries (intensities use the nonnegative clip form).
    pub fn from_vec(n1: usize, n2: usize, frames: usize, data: Vec<f64>) -> Result<Self> {
        let cube = Self::from_vec_finite(n1, n2, frames, data)?;
        if let Some(v) = cube.data.iter().find(|&&v| v < 0.0) {
            return Err(Error::Parameter(format!(
                "cube entry {v} is negative; intensities are nonnegative"
            )));
        }
        Ok(cube)
    }

    /// Container-level constructor: checks shape and finiteness but not
    /// the signal sign convention. Solver iterates and wire payloads may
    /// legitimately carry negative values.
    pub fn from_vec_finite(n1: usize, n2: usize, frames: usize, data: Vec<f64>) -> Result<Self> {
        if n1 == 0 || n2 == 0 || frames == 0 {
            return Err(Error::Parameter("cube dimensions must be positive".into()));
        }
        if data.len() != n1 * n2 * frames {
            return Err(Error::Dimension(format!(
                "cube payload has {} entries, shape {}x{}x{} needs {}",
                data.len(),
                n1,
                n2,
                frames,
                n1 * n2 * frames
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("cube entry {v} is not finite")));
        }
        Ok(Cube { n1, n2, frames, data })
    }

    /// Internal constructor for solver iterates; skips entry validation.
    pub(crate) fn from_vec_unchecked(n1: usize, n2: usize, frames: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n1 * n2 * frames);
        Cube { n1, n2, frames, data }
    }

    /// Checks the class bound `||x||_inf <= rho/2` declared by `params`.
    pub fn check_class_bound(&self, params: &ModelParams) -> Result<()> {
        let cap = params.rho / 2.0;
        match self.data.iter().find(|&&v| v > cap) {
            Some(v) => Err(Error::Parameter(format!(
                "cube entry {v} exceeds the class bound rho/2 = {cap}"
            ))),
            None => Ok(()),
        }
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Spatial size `n = n1 * n2`.
    pub fn n(&self) -> usize {
        self.n1 * self.n2
    }

    /// Total entry count `n * frames`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    fn offset(&self, row: usize, col: usize, frame: usize) -> usize {
        debug_assert!(row < self.n1 && col < self.n2 && frame < self.frames);
        frame * self.n1 * self.n2 + col * self.n1 + row
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, frame: usize) -> f64 {
        self.data[self.offset(row, col, frame)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, frame: usize, value: f64) {
        let i = self.offset(row, col, frame);
        self.data[i] = value;
    }

    /// The vectorized cube (borrow of the flat storage).
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Borrow of one frame (a column-major `n1 x n2` image).
    pub fn frame(&self, b: usize) -> &[f64] {
        let n = self.n1 * self.n2;
        &self.data[b * n..(b + 1) * n]
    }

    pub(crate) fn frame_mut(&mut self, b: usize) -> &mut [f64] {
        let n = self.n1 * self.n2;
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn same_shape(&self, other: &Cube) -> bool {
        self.n1 == other.n1 && self.n2 == other.n2 && self.frames == other.frames
    }
}

/// One binary mask per frame, same shape and layout as the cube it senses.
/// `density_p` and `seed` record how the set was generated so experiments
/// can be replayed.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    n1: usize,
    n2: usize,
    frames: usize,
    bits: Vec<u8>,
    density_p: f64,
    seed: u64,
}

impl MaskSet {
    /// Builds a mask set from bits in vectorization order; entries must be
    /// 0 or 1.
    pub fn from_bits(
        n1: usize,
        n2: usize,
        frames: usize,
        bits: Vec<u8>,
        density_p: f64,
        seed: u64,
    ) -> Result<Self> {
        if n1 == 0 || n2 == 0 || frames == 0 {
            return Err(Error::Parameter("mask dimensions must be positive".into()));
        }
        if bits.len() != n1 * n2 * frames {
            return Err(Error::Dimension(format!(
                "mask payload has {} entries, shape {}x{}x{} needs {}",
                bits.len(),
                n1,
                n2,
                frames,
                n1 * n2 * frames
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Parameter("mask entries must be 0 or 1".into()));
        }
        Ok(MaskSet { n1, n2, frames, bits, density_p, seed })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn n(&self) -> usize {
        self.n1 * self.n2
    }

    /// Density parameter recorded at generation time.
    pub fn density_p(&self) -> f64 {
        self.density_p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Flat bits in vectorization order.
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Borrow of one frame's mask.
    pub fn frame(&self, b: usize) -> &[u8] {
        let n = self.n1 * self.n2;
        &self.bits[b * n..(b + 1) * n]
    }

    /// Fraction of ones actually present.
    pub fn empirical_density(&self) -> f64 {
        let ones: u64 = self.bits.iter().map(|&b| u64::from(b)).sum();
        ones as f64 / self.bits.len() as f64
    }

    pub fn matches_cube(&self, x: &Cube) -> bool {
        self.n1 == x.n1() && self.n2 == x.n2() && self.frames == x.frames()
    }
}

/// Signal-class parameters: the amplitude bound `rho` and the frame count.
/// `saturation_cap() = B*rho/2` is the smallest threshold at which clipping
/// can no longer occur for binary masks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub rho: f64,
    pub frames: usize,
}

impl ModelParams {
    pub fn new(rho: f64, frames: usize) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::Parameter(format!("rho must be positive, got {rho}")));
        }
        if frames == 0 {
            return Err(Error::Parameter("frame count must be positive".into()));
        }
        Ok(ModelParams { rho, frames })
    }

    /// `B * rho / 2`: thresholds at or above this level never clip.
    pub fn saturation_cap(&self) -> f64 {
        self.frames as f64 * self.rho / 2.0
    }
}

/// An acquired snapshot: the ideal measurement `y`, its clipped version
/// `y_T`, the threshold, the saturated index set, and the l2 noise budget
/// actually realized.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    y: Vec<f64>,
    y_t: Vec<f64>,
    t: f64,
    sat_index: Vec<usize>,
    noise_eps: f64,
}

impl Measurement {
    /// Clips an ideal measurement at `t`. The invariants
    /// `y_T = min(y, T)`, `sat_index = {j : y_j >= T}` and `y_T[j] = T` on
    /// saturated indices hold by construction.
    pub fn from_ideal(y: Vec<f64>, t: f64, noise_eps: f64) -> Result<Self> {
        if noise_eps < 0.0 {
            return Err(Error::Parameter("noise budget must be nonnegative".into()));
        }
        let y_t = clip(&y, t)?;
        let sat_index = saturated_indices(&y, t);
        Ok(Measurement { y, y_t, t, sat_index, noise_eps })
    }

    /// Ideal (pre-clip) measurement.
    pub fn ideal(&self) -> &[f64] {
        &self.y
    }

    /// Clipped measurement as read off the sensor.
    pub fn clipped(&self) -> &[f64] {
        &self.y_t
    }

    pub fn threshold(&self) -> f64 {
        self.t
    }

    /// Saturated measurement locations, ascending.
    pub fn sat_index(&self) -> &[usize] {
        &self.sat_index
    }

    pub fn noise_eps(&self) -> f64 {
        self.noise_eps
    }

    /// Fraction of saturated entries.
    pub fn sat_fraction(&self) -> f64 {
        self.sat_index.len() as f64 / self.y.len() as f64
    }
}

/// Applies the SCI operator: `y[j] = sum_b mask[j,b] * x[j,b]`.
///
/// The accumulation runs frame 0 to frame B-1 so results are bit-for-bit
/// reproducible.
pub fn forward(x: &Cube, m: &MaskSet) -> Result<Vec<f64>> {
    if !m.matches_cube(x) {
        return Err(Error::Dimension(format!(
            "mask {}x{}x{} does not match cube {}x{}x{}",
            m.n1(),
            m.n2(),
            m.frames(),
            x.n1(),
            x.n2(),
            x.frames()
        )));
    }
    let n = x.n();
    let mut y = vec![0.0; n];
    for b in 0..x.frames() {
        let xf = x.frame(b);
        let mf = m.frame(b);
        for j in 0..n {
            if mf[j] == 1 {
                y[j] += xf[j];
            }
        }
    }
    Ok(y)
}

/// Adjoint of [`forward`]: spreads a measurement-space vector back into a
/// cube, `out[j,b] = mask[j,b] * r[j]`.
pub fn adjoint(r: &[f64], m: &MaskSet) -> Result<Cube> {
    let n = m.n();
    if r.len() != n {
        return Err(Error::Dimension(format!(
            "residual length {} does not match mask spatial size {}",
            r.len(),
            n
        )));
    }
    let mut data = vec![0.0; n * m.frames()];
    for b in 0..m.frames() {
        let mf = m.frame(b);
        let out = &mut data[b * n..(b + 1) * n];
        for j in 0..n {
            if mf[j] == 1 {
                out[j] = r[j];
            }
        }
    }
    Ok(Cube::from_vec_unchecked(m.n1(), m.n2(), m.frames(), data))
}

/// Diagonal of the n x n operator `r -> forward(adjoint(r))`; for binary
/// masks this is the per-pixel count of active frames, in `{0, .., B}`.
pub fn gram_diagonal(m: &MaskSet) -> Vec<f64> {
    let n = m.n();
    let mut diag = vec![0.0; n];
    for b in 0..m.frames() {
        let mf = m.frame(b);
        for j in 0..n {
            if mf[j] == 1 {
                diag[j] += 1.0;
            }
        }
    }
    diag
}

/// Element-wise sensor clipping `min(y_i, T)` (nonnegative form).
pub fn clip(y: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::Parameter(format!("clip threshold must be positive, got {t}")));
    }
    Ok(y.iter().map(|&v| v.min(t)).collect())
}

/// Indices where the ideal measurement meets or exceeds the threshold.
/// The boundary `y_j = T` counts as saturated.
pub fn saturated_indices(y: &[f64], t: f64) -> Vec<usize> {
    y.iter()
        .enumerate()
        .filter_map(|(j, &v)| if v >= t { Some(j) } else { None })
        .collect()
}

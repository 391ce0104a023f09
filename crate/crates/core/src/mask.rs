//! Seeded Bernoulli mask generation and density sweep grids.
//!
//! Masks must be bit-for-bit reproducible across runs and machines, so the
//! generator is pinned: ChaCha20 keyed by the 64-bit seed, one independent
//! stream per frame (`set_stream(frame)`), and each bit drawn by
//! thresholding a 53-bit uniform against `p`. The identifier in [`RNG_ID`]
//! is stamped into sweep metadata so results can be replayed later.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MaskSet;

/// Generator identifier recorded in output metadata.
pub const RNG_ID: &str = "chacha20/stream-per-frame/53-bit-threshold";

const INV_2POW53: f64 = 1.0 / 9007199254740992.0; // 2^-53

/// Parameters for one Bernoulli mask set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub n1: usize,
    pub n2: usize,
    #[serde(alias = "B")]
    pub frames: usize,
    pub p: f64,
    pub seed: u64,
}

/// A strictly increasing list of densities in (0,1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DensityGrid {
    values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Parameter("density grid must be nonempty".into()));
        }
        for &v in &values {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Parameter(format!("density {v} outside (0,1)")));
            }
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter("density grid must be strictly increasing".into()));
        }
        Ok(DensityGrid { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The sweep grid used throughout the experiments: 0.1 to 0.9 in steps of
/// 0.1.
pub fn default_density_grid() -> DensityGrid {
    DensityGrid::new((1..=9).map(|i| i as f64 / 10.0).collect()).expect("static grid is valid")
}

/// Fine grid for bound minimization, `step, 2*step, ..` up to `1 - step`.
pub fn fine_density_grid(step: f64) -> Result<DensityGrid> {
    if !(step > 0.0 && step < 0.5) {
        return Err(Error::Parameter(format!("grid step {step} outside (0, 0.5)")));
    }
    let count = (1.0 / step).floor() as usize;
    let values: Vec<f64> =
        (1..count).map(|i| i as f64 * step).filter(|&v| v > 0.0 && v < 1.0).collect();
    DensityGrid::new(values)
}

/// One uniform in [0,1) from the top 53 bits of a ChaCha word pair; ties
/// against `p` are impossible at double precision.
#[inline]
fn uniform53(rng: &mut ChaCha20Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * INV_2POW53
}

/// Deterministically derives an independent substream seed, splitmix64
/// style. Used for per-trial and per-cell seeding across the crate.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    let mut z = root ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples an i.i.d. Bern(p) mask set. Same spec, same bits, on every
/// platform; frames fill from independent ChaCha streams so the loop
/// parallelizes without changing the output.
pub fn sample_masks(spec: &MaskSpec) -> Result<MaskSet> {
    if !(spec.p > 0.0 && spec.p < 1.0) {
        return Err(Error::Parameter(format!("mask density p={} outside (0,1)", spec.p)));
    }
    if spec.n1 == 0 || spec.n2 == 0 || spec.frames == 0 {
        return Err(Error::Parameter("mask dimensions must be positive".into()));
    }
    let n = spec.n1 * spec.n2;
    let mut bits = vec![0u8; n * spec.frames];
    bits.par_chunks_mut(n).enumerate().for_each(|(frame, chunk)| {
        let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
        rng.set_stream(frame as u64);
        for bit in chunk.iter_mut() {
            *bit = u8::from(uniform53(&mut rng) < spec.p);
        }
    });
    MaskSet::from_bits(spec.n1, spec.n2, spec.frames, bits, spec.p, spec.seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bits() {
        let spec = MaskSpec { n1: 16, n2: 16, frames: 4, p: 0.3, seed: 42 };
        let a = sample_masks(&spec).unwrap();
        let b = sample_masks(&spec).unwrap();
        assert_eq!(a.bits(), b.bits());
    }

    #[test]
    fn pinned_reference_bits() {
        // Frozen output of the pinned generator; a change here means masks
        // are no longer replayable from recorded seeds.
        let spec = MaskSpec { n1: 2, n2: 2, frames: 2, p: 0.5, seed: 1 };
        let m = sample_masks(&spec).unwrap();
        assert_eq!(m.bits(), &[0, 1, 0, 1, 0, 0, 1, 1]);
    }

    #[test]
    fn empirical_density_near_p() {
        let spec = MaskSpec { n1: 256, n2: 256, frames: 8, p: 0.5, seed: 7 };
        let m = sample_masks(&spec).unwrap();
        assert!((m.empirical_density() - 0.5).abs() < 0.01);
    }

    #[test]
    fn density_ordering_between_low_and_high_p() {
        let lo = sample_masks(&MaskSpec { n1: 64, n2: 64, frames: 4, p: 0.1, seed: 3 }).unwrap();
        let hi = sample_masks(&MaskSpec { n1: 64, n2: 64, frames: 4, p: 0.9, seed: 3 }).unwrap();
        assert!(lo.empirical_density() < hi.empirical_density());
    }

    #[test]
    fn rejects_bad_density() {
        for p in [0.0, 1.0, -0.1, 1.5] {
            let spec = MaskSpec { n1: 4, n2: 4, frames: 2, p, seed: 0 };
            assert!(sample_masks(&spec).is_err());
        }
    }

    #[test]
    fn chi_square_on_bit_frequencies() {
        // 10^6 bits at p = 0.5; chi-square with 1 degree of freedom must
        // stay under the alpha = 0.001 critical value 10.828.
        let spec = MaskSpec { n1: 1000, n2: 125, frames: 8, p: 0.5, seed: 2024 };
        let m = sample_masks(&spec).unwrap();
        let total = m.bits().len() as f64;
        let ones: f64 = m.bits().iter().map(|&b| f64::from(b)).sum();
        let zeros = total - ones;
        let expected = total * 0.5;
        let chi2 = (ones - expected).powi(2) / expected + (zeros - expected).powi(2) / expected;
        assert!(chi2 < 10.828, "chi2 = {chi2}");
    }

    #[test]
    fn default_grid_is_the_paper_sweep() {
        let g = default_density_grid();
        assert_eq!(g.len(), 9);
        assert_eq!(g.values()[0], 0.1);
        assert_eq!(g.values()[8], 0.9);
        for w in g.values().windows(2) {
            assert!(w[0] < w[1]);
            assert!((w[1] - w[0] - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn fine_grid_endpoints_stay_interior() {
        let g = fine_density_grid(0.005).unwrap();
        assert!(g.values()[0] > 0.0);
        assert!(*g.values().last().unwrap() < 1.0);
        assert_eq!(g.len(), 199);
    }

    #[test]
    fn derive_seed_spreads_indices() {
        let a = derive_seed(1, 0);
        let b = derive_seed(1, 1);
        let c = derive_seed(2, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(1, 0));
    }
}

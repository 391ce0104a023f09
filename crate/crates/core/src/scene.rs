//! Synthetic test scenes and cube import.
//!
//! Cubes are normalized to [0,1] (rho = 2 convention), deterministic given
//! the seed. The three generators cover the interesting saturation
//! regimes: a bright object on a dark background, a smooth moving blob,
//! and a mostly-bright field whose measurements clip heavily.

use std::path::PathBuf;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::pgm::import_pgm_sequence;
use crate::model::Cube;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    MovingSquare,
    BouncingBlob,
    BrightField,
    Imported,
}

impl std::fmt::Display for SceneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SceneKind::MovingSquare => "moving_square",
            SceneKind::BouncingBlob => "bouncing_blob",
            SceneKind::BrightField => "bright_field",
            SceneKind::Imported => "imported",
        };
        f.write_str(name)
    }
}

/// Scene description. `path` points at a directory of `.pgm` frames and is
/// only meaningful for the imported kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub n1: usize,
    pub n2: usize,
    #[serde(alias = "B")]
    pub frames: usize,
    #[serde(default = "default_brightness")]
    pub brightness_scale: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

fn default_brightness() -> f64 {
    1.0
}

/// Builds the scene cube. Generated entries are `pattern * brightness`
/// clamped into [0,1], so the class bound holds for any scale.
pub fn generate_scene(spec: &SceneSpec) -> Result<Cube> {
    if spec.kind != SceneKind::Imported && (spec.n1 == 0 || spec.n2 == 0 || spec.frames == 0) {
        return Err(Error::Parameter("scene dimensions must be positive".into()));
    }
    if !(spec.brightness_scale >= 0.0) {
        return Err(Error::Parameter("brightness scale must be nonnegative".into()));
    }
    match spec.kind {
        SceneKind::MovingSquare => Ok(moving_square(spec)),
        SceneKind::BouncingBlob => Ok(bouncing_blob(spec)),
        SceneKind::BrightField => Ok(bright_field(spec)),
        SceneKind::Imported => imported(spec),
    }
}

fn scaled(pattern: f64, scale: f64) -> f64 {
    (pattern * scale).clamp(0.0, 1.0)
}

/// A bright square over a dim background, translating one pixel per frame
/// along the diagonal (wrapping at the borders).
fn moving_square(spec: &SceneSpec) -> Cube {
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let side = (spec.n1.min(spec.n2) / 4).max(2);
    let row0 = rng.random_range(0..spec.n1);
    let col0 = rng.random_range(0..spec.n2);
    let mut cube = Cube::zeros(spec.n1, spec.n2, spec.frames);
    for b in 0..spec.frames {
        let top = (row0 + b) % spec.n1;
        let left = (col0 + b) % spec.n2;
        for col in 0..spec.n2 {
            for row in 0..spec.n1 {
                let in_rows = (row + spec.n1 - top) % spec.n1 < side;
                let in_cols = (col + spec.n2 - left) % spec.n2 < side;
                let pattern = if in_rows && in_cols { 1.0 } else { 0.15 };
                cube.set(row, col, b, scaled(pattern, spec.brightness_scale));
            }
        }
    }
    cube
}

/// A Gaussian blob bouncing off the frame borders.
fn bouncing_blob(spec: &SceneSpec) -> Cube {
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let mut row = rng.random_range(0.25..0.75) * spec.n1 as f64;
    let mut col = rng.random_range(0.25..0.75) * spec.n2 as f64;
    let mut v_row = rng.random_range(0.5..1.5) * if rng.random::<bool>() { 1.0 } else { -1.0 };
    let mut v_col = rng.random_range(0.5..1.5) * if rng.random::<bool>() { 1.0 } else { -1.0 };
    let sigma = spec.n1.min(spec.n2) as f64 / 6.0;
    let mut cube = Cube::zeros(spec.n1, spec.n2, spec.frames);
    for b in 0..spec.frames {
        for c in 0..spec.n2 {
            for r in 0..spec.n1 {
                let dr = r as f64 - row;
                let dc = c as f64 - col;
                let pattern = 0.1 + 0.9 * (-(dr * dr + dc * dc) / (2.0 * sigma * sigma)).exp();
                cube.set(r, c, b, scaled(pattern, spec.brightness_scale));
            }
        }
        row += v_row;
        col += v_col;
        if row < 0.0 || row > (spec.n1 - 1) as f64 {
            v_row = -v_row;
            row += 2.0 * v_row;
        }
        if col < 0.0 || col > (spec.n2 - 1) as f64 {
            v_col = -v_col;
            col += 2.0 * v_col;
        }
    }
    cube
}

/// A mostly-bright field: high background, a broad bright ellipse, and a
/// drifting peak region. Designed to saturate large measurement areas at
/// low thresholds.
fn bright_field(spec: &SceneSpec) -> Cube {
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let ec_row = spec.n1 as f64 * rng.random_range(0.4..0.6);
    let ec_col = spec.n2 as f64 * rng.random_range(0.4..0.6);
    let ra = spec.n1 as f64 * 0.42;
    let rb = spec.n2 as f64 * 0.42;
    let peak_r = spec.n1.min(spec.n2) as f64 * 0.18;
    let mut cube = Cube::zeros(spec.n1, spec.n2, spec.frames);
    for b in 0..spec.frames {
        let drift = b as f64;
        for c in 0..spec.n2 {
            for r in 0..spec.n1 {
                let er = (r as f64 - ec_row) / ra;
                let ec = (c as f64 - ec_col) / rb;
                let mut pattern = 0.7 + 0.03 * (c as f64 / spec.n2 as f64);
                if er * er + ec * ec <= 1.0 {
                    pattern = 0.92;
                }
                let dr = r as f64 - (ec_row + drift);
                let dc = c as f64 - (ec_col + drift);
                if (dr * dr + dc * dc).sqrt() <= peak_r {
                    pattern = 1.0;
                }
                cube.set(r, c, b, scaled(pattern, spec.brightness_scale));
            }
        }
    }
    cube
}

fn imported(spec: &SceneSpec) -> Result<Cube> {
    let dir = spec
        .path
        .as_ref()
        .ok_or_else(|| Error::Parameter("imported scene needs a path".into()))?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "pgm").unwrap_or(false))
        .collect();
    if paths.is_empty() {
        return Err(Error::Parameter(format!("no .pgm frames under {}", dir.display())));
    }
    paths.sort();
    let cube = import_pgm_sequence(&paths)?;
    if spec.brightness_scale != 1.0 {
        let scale = spec.brightness_scale;
        let data = cube.as_slice().iter().map(|&v| scaled(v, scale)).collect();
        return Cube::from_vec(cube.n1(), cube.n2(), cube.frames(), data);
    }
    Ok(cube)
}

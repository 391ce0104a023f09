//! Portable graymap import: one 8- or 16-bit grayscale image per frame,
//! scaled to [0,1]. Both the binary (`P5`) and ASCII (`P2`) flavors are
//! accepted; 16-bit binary samples are big-endian per the format.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Cube;

/// A decoded grayscale frame with samples already scaled to [0,1].
#[derive(Debug, Clone)]
pub struct GrayFrame {
    pub width: usize,
    pub height: usize,
    /// Row-major samples, top row first.
    pub samples: Vec<f64>,
}

fn is_pgm_whitespace(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c)
}

/// Pulls the next whitespace-separated token, skipping `#` comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && is_pgm_whitespace(bytes[*pos]) {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !is_pgm_whitespace(bytes[*pos]) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("unexpected end of graymap header".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn parse_dim(token: &str, what: &str) -> Result<usize> {
    token
        .parse::<usize>()
        .map_err(|_| Error::Format(format!("graymap {what} {token:?} is not a number")))
}

/// Decodes a PGM image from raw bytes.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayFrame> {
    let mut pos = 0;
    let kind = next_token(bytes, &mut pos)?;
    if kind != "P5" && kind != "P2" {
        return Err(Error::Format(format!("not a graymap: magic {kind:?}")));
    }
    let width = parse_dim(&next_token(bytes, &mut pos)?, "width")?;
    let height = parse_dim(&next_token(bytes, &mut pos)?, "height")?;
    let maxval = parse_dim(&next_token(bytes, &mut pos)?, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Format("graymap dimensions must be positive".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("graymap maxval {maxval} outside 1..=65535")));
    }
    let count = width * height;
    let scale = 1.0 / maxval as f64;
    let samples = if kind == "P5" {
        // One whitespace byte separates header and raster.
        pos += 1;
        let wide = maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        if bytes.len() < pos + need {
            return Err(Error::Format("graymap raster is truncated".into()));
        }
        let raster = &bytes[pos..pos + need];
        if wide {
            raster
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
                .collect()
        } else {
            raster.iter().map(|&b| b as f64 * scale).collect()
        }
    } else {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let v = parse_dim(&next_token(bytes, &mut pos)?, "sample")?;
            out.push(v as f64 * scale);
        }
        out
    };
    if samples.iter().any(|&v| v > 1.0) {
        return Err(Error::Format("graymap sample exceeds maxval".into()));
    }
    Ok(GrayFrame { width, height, samples })
}

pub fn read_pgm_file(path: impl AsRef<Path>) -> Result<GrayFrame> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_pgm(&bytes)
}

/// Stacks one graymap per frame into a cube; all frames must agree on
/// size. Graymaps are row-major, the cube is column-major, so samples are
/// transposed into place.
pub fn import_pgm_sequence(paths: &[impl AsRef<Path>]) -> Result<Cube> {
    if paths.is_empty() {
        return Err(Error::Parameter("need at least one graymap frame".into()));
    }
    let first = read_pgm_file(&paths[0])?;
    let (n1, n2) = (first.height, first.width);
    let mut data = vec![0.0; n1 * n2 * paths.len()];
    for (b, path) in paths.iter().enumerate() {
        let frame = if b == 0 { first.clone() } else { read_pgm_file(path)? };
        if frame.height != n1 || frame.width != n2 {
            return Err(Error::Dimension(format!(
                "frame {b} is {}x{}, expected {n1}x{n2}",
                frame.height, frame.width
            )));
        }
        let dst = &mut data[b * n1 * n2..(b + 1) * n1 * n2];
        for row in 0..n1 {
            for col in 0..n2 {
                dst[col * n1 + row] = frame.samples[row * n2 + col];
            }
        }
    }
    Cube::from_vec(n1, n2, paths.len(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_binary_8_bit() {
        let mut bytes = b"P5\n# comment line\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 128, 255, 64, 32, 16]);
        let f = decode_pgm(&bytes).unwrap();
        assert_eq!((f.width, f.height), (3, 2));
        assert_eq!(f.samples[0], 0.0);
        assert_eq!(f.samples[2], 1.0);
        assert!((f.samples[1] - 128.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn decodes_binary_16_bit_big_endian() {
        let mut bytes = b"P5 2 1 65535\n".to_vec();
        bytes.extend_from_slice(&[0xFF, 0xFF, 0x00, 0x01]);
        let f = decode_pgm(&bytes).unwrap();
        assert_eq!(f.samples[0], 1.0);
        assert!((f.samples[1] - 1.0 / 65535.0).abs() < 1e-18);
    }

    #[test]
    fn decodes_ascii_variant() {
        let bytes = b"P2\n2 2\n100\n0 50\n100 25\n";
        let f = decode_pgm(bytes).unwrap();
        assert_eq!(f.samples, vec![0.0, 0.5, 1.0, 0.25]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode_pgm(b"P6 1 1 255 x").is_err());
        assert!(decode_pgm(b"P5 0 1 255\n").is_err());
        assert!(decode_pgm(b"P5 2 2 255\nab").is_err()); // truncated raster
    }

    #[test]
    fn sequence_import_transposes_into_column_major() {
        let dir = tempfile::tempdir().unwrap();
        for (i, pix) in [[10u8, 20, 30, 40], [50, 60, 70, 80]].iter().enumerate() {
            let mut bytes = b"P5\n2 2\n255\n".to_vec();
            bytes.extend_from_slice(pix);
            std::fs::write(dir.path().join(format!("f{i}.pgm")), bytes).unwrap();
        }
        let paths: Vec<_> = (0..2).map(|i| dir.path().join(format!("f{i}.pgm"))).collect();
        let cube = import_pgm_sequence(&paths).unwrap();
        assert_eq!((cube.n1(), cube.n2(), cube.frames()), (2, 2, 2));
        // Row-major [10 20; 30 40] lands at (row,col) positions.
        assert!((cube.get(0, 1, 0) - 20.0 / 255.0).abs() < 1e-15);
        assert!((cube.get(1, 0, 0) - 30.0 / 255.0).abs() < 1e-15);
        assert!((cube.get(1, 1, 1) - 80.0 / 255.0).abs() < 1e-15);
    }
}

//! On-disk formats: the binary cube/mask containers, portable graymap
//! import, and the sweep CSV schema.
//!
//! Cube container (little-endian): magic `SCIC`, version u16 = 1, flags
//! u16 = 0, n1 u32, n2 u32, B u32, dtype u8 = 1 (32-bit float), 3 reserved
//! bytes, then `n1*n2*B` floats in the crate-wide vectorization order.
//! Mask files are identical except magic `SCIM` and dtype 0, one byte per
//! bit. Arithmetic stays in f64 internally; storage is f32 for
//! compactness, so reading back a written cube reproduces the f32-rounded
//! values and a second write is byte-identical.

pub mod pgm;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Cube, MaskSet};
use crate::sweep::SweepRecord;

pub const CUBE_MAGIC: [u8; 4] = *b"SCIC";
pub const MASK_MAGIC: [u8; 4] = *b"SCIM";
pub const FORMAT_VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 1;
pub const DTYPE_BIT: u8 = 0;

fn write_header(
    w: &mut impl Write,
    magic: [u8; 4],
    n1: usize,
    n2: usize,
    frames: usize,
    dtype: u8,
) -> Result<()> {
    let as_u32 = |v: usize, what: &str| -> Result<u32> {
        u32::try_from(v).map_err(|_| Error::Parameter(format!("{what} {v} exceeds u32 range")))
    };
    w.write_all(&magic)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&0u16.to_le_bytes())?; // flags
    w.write_all(&as_u32(n1, "n1")?.to_le_bytes())?;
    w.write_all(&as_u32(n2, "n2")?.to_le_bytes())?;
    w.write_all(&as_u32(frames, "B")?.to_le_bytes())?;
    w.write_all(&[dtype, 0, 0, 0])?;
    Ok(())
}

struct Header {
    magic: [u8; 4],
    n1: usize,
    n2: usize,
    frames: usize,
    dtype: u8,
}

fn read_header(r: &mut impl Read) -> Result<Header> {
    let mut buf = [0u8; 24];
    r.read_exact(&mut buf)?;
    let magic = [buf[0], buf[1], buf[2], buf[3]];
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let n1 = u32::from_le_bytes([buf[8], buf[9], buf[10], buf[11]]) as usize;
    let n2 = u32::from_le_bytes([buf[12], buf[13], buf[14], buf[15]]) as usize;
    let frames = u32::from_le_bytes([buf[16], buf[17], buf[18], buf[19]]) as usize;
    Ok(Header { magic, n1, n2, frames, dtype: buf[20] })
}

/// Streams a cube in the container format.
pub fn write_cube_to(w: &mut impl Write, cube: &Cube) -> Result<()> {
    write_header(w, CUBE_MAGIC, cube.n1(), cube.n2(), cube.frames(), DTYPE_F32)?;
    for &v in cube.as_slice() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Reads one cube from the stream.
pub fn read_cube_from(r: &mut impl Read) -> Result<Cube> {
    let h = read_header(r)?;
    if h.magic != CUBE_MAGIC {
        return Err(Error::Format(format!("bad cube magic {:?}", h.magic)));
    }
    if h.dtype != DTYPE_F32 {
        return Err(Error::Format(format!("cube dtype {} is not f32", h.dtype)));
    }
    let count = h
        .n1
        .checked_mul(h.n2)
        .and_then(|v| v.checked_mul(h.frames))
        .ok_or_else(|| Error::Format("cube dimensions overflow".into()))?;
    let mut payload = vec![0u8; count * 4];
    r.read_exact(&mut payload)?;
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Cube::from_vec_finite(h.n1, h.n2, h.frames, data)
}

/// Writes a measurement-space vector as a single-frame cube container.
pub fn write_vector_file(path: impl AsRef<Path>, n1: usize, n2: usize, values: &[f64]) -> Result<()> {
    let cube = Cube::from_vec_finite(n1, n2, 1, values.to_vec())?;
    write_cube_file(path, &cube)
}

/// Reads a measurement vector from a single-frame cube container.
pub fn read_vector_file(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f64>)> {
    let cube = read_cube_file(path)?;
    if cube.frames() != 1 {
        return Err(Error::Format(format!(
            "expected a single-frame measurement container, found B = {}",
            cube.frames()
        )));
    }
    let (n1, n2) = (cube.n1(), cube.n2());
    Ok((n1, n2, cube.into_vec()))
}

pub fn write_cube_file(path: impl AsRef<Path>, cube: &Cube) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_cube_to(&mut w, cube)?;
    w.flush()?;
    Ok(())
}

pub fn read_cube_file(path: impl AsRef<Path>) -> Result<Cube> {
    read_cube_from(&mut BufReader::new(File::open(path)?))
}

/// Streams a mask set: the shared header with magic `SCIM` and dtype 0,
/// then one byte per bit. Generation metadata (density, seed) is not part
/// of the file; the harness records it in sidecar metadata.
pub fn write_mask_to(w: &mut impl Write, mask: &MaskSet) -> Result<()> {
    write_header(w, MASK_MAGIC, mask.n1(), mask.n2(), mask.frames(), DTYPE_BIT)?;
    w.write_all(mask.bits())?;
    Ok(())
}

/// Reads a mask file. The returned set reports its empirical density and a
/// zero seed, since the container carries bits only.
pub fn read_mask_from(r: &mut impl Read) -> Result<MaskSet> {
    let h = read_header(r)?;
    if h.magic != MASK_MAGIC {
        return Err(Error::Format(format!("bad mask magic {:?}", h.magic)));
    }
    if h.dtype != DTYPE_BIT {
        return Err(Error::Format(format!("mask dtype {} is not bit", h.dtype)));
    }
    let count = h
        .n1
        .checked_mul(h.n2)
        .and_then(|v| v.checked_mul(h.frames))
        .ok_or_else(|| Error::Format("mask dimensions overflow".into()))?;
    let mut bits = vec![0u8; count];
    r.read_exact(&mut bits)?;
    let ones: u64 = bits.iter().map(|&b| u64::from(b)).sum();
    let density = ones as f64 / bits.len() as f64;
    MaskSet::from_bits(h.n1, h.n2, h.frames, bits, density, 0)
}

pub fn write_mask_file(path: impl AsRef<Path>, mask: &MaskSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_mask_to(&mut w, mask)?;
    w.flush()?;
    Ok(())
}

pub fn read_mask_file(path: impl AsRef<Path>) -> Result<MaskSet> {
    read_mask_from(&mut BufReader::new(File::open(path)?))
}

/// Emits sweep records with the fixed header
/// `scene,solver,p,T_over_B,noise_sigma,seed,psnr_db,ps_hat,bound_rhs,wall_time_s`.
pub fn emit_records(w: impl Write, records: &[SweepRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for rec in records {
        writer.serialize(rec).map_err(|e| Error::Format(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Parses records written by [`emit_records`]; `parse(emit(r)) == r`.
pub fn parse_records(r: impl Read) -> Result<Vec<SweepRecord>> {
    let mut reader = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row.map_err(|e| Error::Format(e.to_string()))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{sample_masks, MaskSpec};
    use crate::scene::SceneKind;
    use crate::sweep::SolverKind;
    use proptest::prelude::*;

    #[test]
    fn cube_round_trip_is_f32_exact_and_stable() {
        let data: Vec<f64> = (0..24).map(|i| i as f64 / 23.0).collect();
        let cube = Cube::from_vec(2, 3, 4, data.clone()).unwrap();

        let mut bytes = Vec::new();
        write_cube_to(&mut bytes, &cube).unwrap();
        assert_eq!(&bytes[..4], b"SCIC");
        assert_eq!(bytes.len(), 24 + 24 * 4);

        let back = read_cube_from(&mut bytes.as_slice()).unwrap();
        for (orig, got) in data.iter().zip(back.as_slice()) {
            assert_eq!(*got, *orig as f32 as f64);
        }

        // Second write is byte-identical: the format is stable at f32.
        let mut again = Vec::new();
        write_cube_to(&mut again, &back).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn mask_round_trip_is_bit_exact() {
        let mask = sample_masks(&MaskSpec { n1: 5, n2: 7, frames: 3, p: 0.42, seed: 99 }).unwrap();
        let mut bytes = Vec::new();
        write_mask_to(&mut bytes, &mask).unwrap();
        assert_eq!(&bytes[..4], b"SCIM");
        assert_eq!(bytes.len(), 24 + 5 * 7 * 3);
        let back = read_mask_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.bits(), mask.bits());
        let mut again = Vec::new();
        write_mask_to(&mut again, &back).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn bad_magic_and_dtype_are_format_errors() {
        let cube = Cube::zeros(2, 2, 1);
        let mut bytes = Vec::new();
        write_cube_to(&mut bytes, &cube).unwrap();

        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(matches!(read_cube_from(&mut wrong_magic.as_slice()), Err(Error::Format(_))));

        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(matches!(read_cube_from(&mut wrong_version.as_slice()), Err(Error::Format(_))));

        // A mask reader must reject a cube payload.
        assert!(matches!(read_mask_from(&mut bytes.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_errors() {
        let cube = Cube::zeros(4, 4, 2);
        let mut bytes = Vec::new();
        write_cube_to(&mut bytes, &cube).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(read_cube_from(&mut bytes.as_slice()).is_err());
    }

    fn sample_records() -> Vec<SweepRecord> {
        vec![
            SweepRecord {
                scene: SceneKind::MovingSquare,
                solver: SolverKind::GapTv,
                p: 0.3,
                t_over_b: 0.25,
                noise_sigma: 0.0,
                seed: 7,
                psnr_db: 23.456789,
                ps_hat: 0.1125,
                bound_rhs: None,
                wall_time_s: 0.0312,
            },
            SweepRecord {
                scene: SceneKind::BrightField,
                solver: SolverKind::CspOracle,
                p: 0.5,
                t_over_b: 0.5,
                noise_sigma: 10.0 / 255.0,
                seed: 8,
                psnr_db: f64::INFINITY,
                ps_hat: 0.0,
                bound_rhs: Some(1.25),
                wall_time_s: 1.5,
            },
        ]
    }

    #[test]
    fn csv_round_trip_including_infinity_and_empty_fields() {
        let records = sample_records();
        let mut bytes = Vec::new();
        emit_records(&mut bytes, &records).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with(
            "scene,solver,p,T_over_B,noise_sigma,seed,psnr_db,ps_hat,bound_rhs,wall_time_s"
        ));
        assert!(text.contains("inf"));
        let back = parse_records(bytes.as_slice()).unwrap();
        assert_eq!(back, records);
    }

    proptest! {
        #[test]
        fn prop_cube_file_round_trip(
            n1 in 1usize..5,
            n2 in 1usize..5,
            frames in 1usize..4,
            seed in 0u64..1000,
        ) {
            let len = n1 * n2 * frames;
            let data: Vec<f64> = (0..len)
                .map(|i| ((seed as usize + i * 37) % 101) as f64 / 101.0)
                .collect();
            let cube = Cube::from_vec(n1, n2, frames, data).unwrap();
            let mut bytes = Vec::new();
            write_cube_to(&mut bytes, &cube).unwrap();
            let back = read_cube_from(&mut bytes.as_slice()).unwrap();
            let mut again = Vec::new();
            write_cube_to(&mut again, &back).unwrap();
            prop_assert_eq!(bytes, again);
        }
    }
}

//! Denoiser hook for an external child process.
//!
//! The wire contract is one cube-container frame per request on the
//! child's stdin and one mirrored frame per response on its stdout (see
//! the io module for the byte layout). The child stays alive for the whole
//! reconstruction, serving one request per solver iteration. A response
//! that does not arrive within the timeout is a solver error.

use std::io::Write;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{channel, Receiver};
use std::thread;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::io::{read_cube_from, write_cube_to};
use crate::model::Cube;
use crate::recon::Denoiser;

#[derive(Debug)]
pub struct ExternalDenoiser {
    child: Child,
    stdin: ChildStdin,
    responses: Receiver<Result<Cube>>,
    timeout: Duration,
}

impl ExternalDenoiser {
    /// Spawns the child and wires up its pipes. The reader thread lives as
    /// long as the child's stdout does.
    pub fn spawn(program: &str, args: &[String], timeout: Duration) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::External(format!("failed to spawn {program:?}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin was piped");
        let mut stdout = child.stdout.take().expect("stdout was piped");
        let (tx, rx) = channel();
        thread::spawn(move || loop {
            let cube = read_cube_from(&mut stdout);
            let failed = cube.is_err();
            if tx.send(cube).is_err() || failed {
                break;
            }
        });
        Ok(ExternalDenoiser { child, stdin, responses: rx, timeout })
    }
}

impl Denoiser for ExternalDenoiser {
    fn denoise(&self, s: &Cube, strength: f64) -> Result<Cube> {
        // The wire format carries no strength; honoring the zero-strength
        // identity contract is the caller side's job.
        if strength == 0.0 {
            return Ok(s.clone());
        }
        let mut stdin = &self.stdin;
        let mut frame = Vec::with_capacity(24 + s.len() * 4);
        write_cube_to(&mut frame, s)?;
        stdin
            .write_all(&frame)
            .and_then(|_| stdin.flush())
            .map_err(|e| Error::External(format!("request write failed: {e}")))?;

        match self.responses.recv_timeout(self.timeout) {
            Ok(Ok(cube)) => {
                if !cube.same_shape(s) {
                    return Err(Error::Contract(format!(
                        "external denoiser returned {}x{}x{}, expected {}x{}x{}",
                        cube.n1(),
                        cube.n2(),
                        cube.frames(),
                        s.n1(),
                        s.n2(),
                        s.frames()
                    )));
                }
                Ok(cube)
            }
            Ok(Err(e)) => Err(Error::External(format!("response decode failed: {e}"))),
            Err(_) => Err(Error::External(format!(
                "no response within {:.1}s",
                self.timeout.as_secs_f64()
            ))),
        }
    }
}

impl Drop for ExternalDenoiser {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_cube(seed: u64) -> Cube {
        let mut rng = StdRng::seed_from_u64(seed);
        let data = (0..2 * 3 * 2).map(|_| rng.random::<f64>()).collect();
        Cube::from_vec(2, 3, 2, data).unwrap()
    }

    #[test]
    fn cat_is_a_valid_identity_denoiser() {
        let d = ExternalDenoiser::spawn("cat", &[], Duration::from_secs(10)).unwrap();
        let s = random_cube(1);
        // Several requests over the same child, mirroring per-iteration use.
        for _ in 0..3 {
            let out = d.denoise(&s, 1.0).unwrap();
            // f32 storage round trip.
            for (a, b) in out.as_slice().iter().zip(s.as_slice()) {
                assert_eq!(*a, *b as f32 as f64);
            }
        }
        // Zero strength never touches the wire.
        assert_eq!(d.denoise(&s, 0.0).unwrap(), s);
    }

    #[test]
    fn unresponsive_child_times_out() {
        let d = ExternalDenoiser::spawn("sleep", &["30".into()], Duration::from_millis(200))
            .unwrap();
        let err = d.denoise(&random_cube(2), 1.0).unwrap_err();
        assert!(matches!(err, Error::External(_)));
    }

    #[test]
    fn missing_program_is_an_external_error() {
        let err =
            ExternalDenoiser::spawn("definitely-not-a-real-denoiser", &[], Duration::from_secs(1))
                .unwrap_err();
        assert!(matches!(err, Error::External(_)));
    }
}

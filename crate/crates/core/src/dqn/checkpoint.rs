//! Binary checkpoint format:
//!
//! ```text
//! b"SOMAQNET"  u32 version  u32 arch  u32 layer_count
//! per layer:   u32 inputs   u32 outputs
//! per layer:   weights (outputs × inputs), then biases, as f32
//! ```
//!
//! All integers and floats little-endian.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::net::{Arch, Dense, QNetwork};

pub const MAGIC: &[u8; 8] = b"SOMAQNET";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("layer shapes do not match the architecture: {0}")]
    ShapeMismatch(String),
    #[error("checkpoint file is truncated")]
    TruncatedFile,
    #[error("unexpected data after the last layer")]
    TrailingData,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_checkpoint<W: Write>(net: &QNetwork<f32>, mut w: W) -> io::Result<()> {
    w.write_all(MAGIC)?;
    for v in [VERSION, net.arch.code(), net.layers.len() as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for l in &net.layers {
        w.write_all(&(l.inputs as u32).to_le_bytes())?;
        w.write_all(&(l.outputs as u32).to_le_bytes())?;
    }
    for l in &net.layers {
        for v in l.w.iter().chain(&l.b) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), CheckpointError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => CheckpointError::TruncatedFile,
        _ => CheckpointError::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut b = [0; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<QNetwork<f32>, CheckpointError> {
    let mut magic = [0; 8];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let code = read_u32(&mut r)?;
    let arch = Arch::from_code(code)
        .ok_or_else(|| CheckpointError::ShapeMismatch(format!("unknown architecture {code}")))?;
    let expected = arch.shapes();
    let count = read_u32(&mut r)? as usize;
    if count != expected.len() {
        return Err(CheckpointError::ShapeMismatch(format!(
            "{count} layers, expected {}",
            expected.len()
        )));
    }
    for (k, &(i, o)) in expected.iter().enumerate() {
        let (fi, fo) = (read_u32(&mut r)? as usize, read_u32(&mut r)? as usize);
        if (fi, fo) != (i, o) {
            return Err(CheckpointError::ShapeMismatch(format!(
                "layer {k} is {fi}→{fo}, expected {i}→{o}"
            )));
        }
    }
    let mut net = QNetwork::<f32>::zeros(arch);
    for l in &mut net.layers {
        let Dense { w, b, .. } = l;
        let mut bytes = vec![0u8; (w.len() + b.len()) * 4];
        read_exact(&mut r, &mut bytes)?;
        let mut vals = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        for v in w.iter_mut().chain(b.iter_mut()) {
            *v = vals.next().expect("sized above");
        }
    }
    let mut extra = [0u8; 1];
    match r.read(&mut extra)? {
        0 => Ok(net),
        _ => Err(CheckpointError::TrailingData),
    }
}

pub fn save_checkpoint(net: &QNetwork<f32>, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let f = File::create(path)?;
    write_checkpoint(net, BufWriter::new(f))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<QNetwork<f32>, CheckpointError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn bytes(net: &QNetwork<f32>) -> Vec<u8> {
        let mut v = Vec::new();
        write_checkpoint(net, &mut v).unwrap();
        v
    }

    #[test]
    fn round_trip_is_bitwise() {
        for arch in [Arch::Hierarchical, Arch::Flat] {
            let net = QNetwork::<f32>::init(arch, &mut stream(5, Stream::Init));
            let b = bytes(&net);
            let back = read_checkpoint(&b[..]).unwrap();
            assert_eq!(back, net);
            assert_eq!(bytes(&back), b);
        }
    }

    #[test]
    fn header_errors() {
        let net = QNetwork::<f32>::zeros(Arch::Hierarchical);
        let good = bytes(&net);

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(&bad[..]), Err(CheckpointError::BadMagic)));

        // orientation head claims 115 outputs
        let mut shape = good.clone();
        let head_out = 8 + 12 + 3 * 8 + 4;
        shape[head_out..head_out + 4].copy_from_slice(&115u32.to_le_bytes());
        assert!(matches!(read_checkpoint(&shape[..]), Err(CheckpointError::ShapeMismatch(_))));

        assert!(matches!(
            read_checkpoint(&good[..good.len() - 1]),
            Err(CheckpointError::TruncatedFile)
        ));
        assert!(matches!(read_checkpoint(&good[..5]), Err(CheckpointError::TruncatedFile)));

        let mut long = good.clone();
        long.push(0);
        assert!(matches!(read_checkpoint(&long[..]), Err(CheckpointError::TrailingData)));

        let mut ver = good;
        ver[8] = 9;
        assert!(matches!(read_checkpoint(&ver[..]), Err(CheckpointError::UnsupportedVersion(9))));
    }
}

//! Binary checkpoints: one JSON header line, then little-endian f64 arrays
//! in header order (mention tower, event tower, each extra head block).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::complex::ComplExHead;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    #[serde(rename = "F")]
    pub features: usize,
    #[serde(rename = "d")]
    pub dim: usize,
    pub towers: Vec<String>,
    pub extra_heads: Vec<String>,
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Checkpoint(format!("truncated array: {e}")))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn save_checkpoint(path: &Path, params: &EncoderParams, head: &ComplExHead) -> Result<()> {
    let header = CheckpointHeader {
        format_version: CHECKPOINT_VERSION,
        features: params.features,
        dim: params.dim,
        towers: vec!["mention".into(), "event".into()],
        extra_heads: head.blocks().iter().map(|(n, _)| n.to_string()).collect(),
    };
    let io_err = |e| Error::io(format!("write {}", path.display()), e);
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n").map_err(io_err)?;
    write_f64s(&mut w, &params.mention).map_err(io_err)?;
    write_f64s(&mut w, &params.event).map_err(io_err)?;
    for (_, block) in head.blocks() {
        write_f64s(&mut w, block).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_checkpoint(path: &Path) -> Result<(EncoderParams, ComplExHead)> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut r = BufReader::new(file);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)
        .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    let header: CheckpointHeader = serde_json::from_slice(&line)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format_version {}",
            header.format_version
        )));
    }
    if header.towers != ["mention", "event"] {
        return Err(Error::Checkpoint(format!("unexpected towers {:?}", header.towers)));
    }
    let (f, d) = (header.features, header.dim);
    let mention = read_f64s(&mut r, f * d)?;
    let event = read_f64s(&mut r, f * d)?;
    let mut head = ComplExHead::zeros(d);
    let names: Vec<&str> = head.blocks().iter().map(|(n, _)| *n).collect();
    if header.extra_heads != names {
        return Err(Error::Checkpoint(format!(
            "unexpected extra heads {:?}",
            header.extra_heads
        )));
    }
    for block in head.blocks_mut() {
        let n = block.len();
        *block = read_f64s(&mut r, n)?;
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::io("read checkpoint", e))? != 0 {
        return Err(Error::Checkpoint("trailing bytes after last array".into()));
    }
    Ok((
        EncoderParams {
            features: f,
            dim: d,
            mention,
            event,
        },
        head,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn round_trip_and_header_layout() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let params = EncoderParams::random(8, 3, 0.5, &mut rng);
        let head = ComplExHead::random(3, 0.5, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &params, &head).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        let nl = bytes.iter().position(|b| *b == b'\n').unwrap();
        let header = std::str::from_utf8(&bytes[..nl]).unwrap();
        assert_eq!(
            header,
            r#"{"format_version":1,"F":8,"d":3,"towers":["mention","event"],"extra_heads":["complex.W_Re","complex.W_Im","complex.b_Re","complex.b_Im","complex.r"]}"#
        );
        assert_eq!(bytes.len() - nl - 1, 8 * (2 * 8 * 3 + 2 * 9 + 3 * 3));
        let first = f64::from_le_bytes(bytes[nl + 1..nl + 9].try_into().unwrap());
        assert_eq!(first, params.mention[0]);

        let (p2, h2) = load_checkpoint(&path).unwrap();
        assert_eq!(p2, params);
        assert_eq!(h2, head);
    }

    #[test]
    fn truncated_file_rejected() {
        let params = EncoderParams::zeros(4, 2);
        let head = ComplExHead::zeros(2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &params, &head).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}

//! Model checkpoints.
//!
//! Layout (little-endian): `b"QSCK"`, version `u32`, architecture as a
//! length-prefixed JSON string, loss weights (3 × f64), step count `u64`,
//! then for `E_r`, `E_g`, `G`, `D` in turn: the parameter blocks and the
//! batch-norm running-statistic blocks, each group as a `u32` block count
//! followed by `u64`-length-prefixed f64 arrays. The file ends with `b"END!"`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cvnn::Network;
use crate::error::{Error, Result};
use crate::model::{ArchitectureConfig, LossWeights, ModelState};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"QSCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const END_MAGIC: &[u8; 4] = b"END!";

fn write_blocks<W: Write>(w: &mut W, blocks: &[&[f64]]) -> Result<()> {
    w.write_all(&(blocks.len() as u32).to_le_bytes())?;
    for b in blocks {
        w.write_all(&(b.len() as u64).to_le_bytes())?;
        for v in *b {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_checkpoint<W: Write>(model: &ModelState, w: &mut W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let arch = serde_json::to_vec(&model.arch).map_err(|e| Error::InternalFailure(e.to_string()))?;
    w.write_all(&(arch.len() as u32).to_le_bytes())?;
    w.write_all(&arch)?;
    for v in [model.weights.w1, model.weights.w2, model.weights.wa] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&model.step_count.to_le_bytes())?;
    for net in [&model.er, &model.eg, &model.g, &model.d] {
        write_blocks(w, &net.params())?;
        write_blocks(w, &net.running_stats())?;
    }
    w.write_all(END_MAGIC)?;
    Ok(())
}

struct Reader<'a, R: Read>(&'a mut R);

impl<R: Read> Reader<'_, R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::format("checkpoint truncated"),
            _ => Error::Io(e),
        })?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn fill_blocks(&mut self, mut blocks: Vec<&mut [f64]>, what: &str) -> Result<()> {
        let count = self.u32()? as usize;
        if count != blocks.len() {
            return Err(Error::format(format!("{what}: {count} blocks stored, {} expected", blocks.len())));
        }
        for (i, block) in blocks.iter_mut().enumerate() {
            let len = self.u64()?;
            if len != block.len() as u64 {
                return Err(Error::format(format!("{what}: block {i} has {len} values, {} expected", block.len())));
            }
            for v in block.iter_mut() {
                *v = self.f64()?;
            }
        }
        Ok(())
    }
}

/// Reads a checkpoint; with `expected` set, the stored architecture must
/// match it exactly.
pub fn read_checkpoint<R: Read>(r: &mut R, expected: Option<&ArchitectureConfig>) -> Result<ModelState> {
    let mut rd = Reader(r);
    if &rd.bytes::<4>()? != CHECKPOINT_MAGIC {
        return Err(Error::format("not a checkpoint file (bad magic)"));
    }
    let version = rd.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::invalid(format!("unsupported checkpoint version {version}")));
    }
    let len = rd.u32()? as usize;
    if len > 1 << 20 {
        return Err(Error::format("architecture descriptor too long"));
    }
    let mut json = vec![0u8; len];
    rd.0.read_exact(&mut json).map_err(|_| Error::format("checkpoint truncated"))?;
    let arch: ArchitectureConfig =
        serde_json::from_slice(&json).map_err(|e| Error::format(format!("bad architecture descriptor: {e}")))?;
    if let Some(exp) = expected {
        if exp != &arch {
            return Err(Error::invalid(format!(
                "checkpoint architecture ({} qubits) does not match the expected one ({} qubits)",
                arch.n_qubits, exp.n_qubits
            )));
        }
    }
    arch.validate().map_err(|e| Error::format(format!("stored architecture is invalid: {e}")))?;
    let weights = LossWeights { w1: rd.f64()?, w2: rd.f64()?, wa: rd.f64()? };
    let step_count = rd.u64()?;
    // Parameter values are overwritten below; the draw only fixes shapes.
    let mut model = ModelState::new(arch, weights, &mut ChaCha8Rng::seed_from_u64(0))?;
    model.step_count = step_count;
    let fill = |rd: &mut Reader<'_, R>, net: &mut Network, name: &str| -> Result<()> {
        rd.fill_blocks(net.params_mut(), name)?;
        rd.fill_blocks(net.running_stats_mut(), name)
    };
    fill(&mut rd, &mut model.er, "E_r")?;
    fill(&mut rd, &mut model.eg, "E_g")?;
    fill(&mut rd, &mut model.g, "G")?;
    fill(&mut rd, &mut model.d, "D")?;
    if &rd.bytes::<4>()? != END_MAGIC {
        return Err(Error::format("missing end marker"));
    }
    let mut probe = [0u8; 1];
    if rd.0.read(&mut probe)? != 0 {
        return Err(Error::format("trailing bytes after the end marker"));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &ModelState, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, expected: Option<&ArchitectureConfig>) -> Result<ModelState> {
    read_checkpoint(&mut BufReader::new(File::open(path)?), expected)
}

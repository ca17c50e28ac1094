//! Labeled density-matrix datasets and their binary file format.
//!
//! Layout (little-endian): `b"QSDM"`, version `u32`, dim `u32`, count `u64`,
//! flags `u32` (bit 0: labels present), then `count` fixed-stride records of
//! `dim²` `(re f64, im f64)` pairs in row-major order, each followed by a
//! `u8` label when bit 0 is set.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gme::{gme_label, GmeConfig};
use crate::qstate::{
    is_ppt, mixture_of_bipartitions, random_pure_product_state, random_pure_state, sample_entangled_2qubit,
    separable_mixed_state, biseparable_state, CMatrix, DensityMatrix, MixtureSpec, BIPARTITION_BLOCKS,
    MAX_REJECTION_ATTEMPTS,
};

pub const DATASET_MAGIC: &[u8; 4] = b"QSDM";
pub const DATASET_VERSION: u32 = 1;
const FLAG_LABELS: u32 = 1;

pub const LABEL_SEPARABLE: u8 = 0;
pub const LABEL_ENTANGLED: u8 = 1;
/// Bi-separable labels in [`BIPARTITION_BLOCKS`] order: A|BC, B|AC, C|AB.
pub const LABEL_BISEPARABLE: [u8; 3] = [2, 3, 4];
/// Reserved for externally supplied bound-entangled states; nothing here
/// generates them.
pub const LABEL_BOUND_ENTANGLED: u8 = 5;

pub fn label_name(label: u8) -> &'static str {
    match label {
        0 => "separable",
        1 => "entangled",
        2 => "biseparable_a_bc",
        3 => "biseparable_b_ac",
        4 => "biseparable_c_ab",
        5 => "bound_entangled",
        _ => "other",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub matrix: CMatrix,
    pub label: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    records: Vec<Record>,
}

impl Dataset {
    /// All records must be `dim × dim` density matrices, and either all or
    /// none labeled.
    pub fn new(dim: usize, records: Vec<Record>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        let labeled = records.first().map(|r| r.label.is_some());
        for (i, r) in records.iter().enumerate() {
            if r.matrix.nrows() != dim || r.matrix.ncols() != dim {
                return Err(Error::invalid(format!("record {i} is not {dim}×{dim}")));
            }
            if Some(r.label.is_some()) != labeled {
                return Err(Error::invalid("records must be uniformly labeled or unlabeled"));
            }
            DensityMatrix::new(r.matrix.clone())
                .map_err(|e| Error::invalid(format!("record {i} is not a density matrix: {e}")))?;
        }
        Ok(Dataset { dim, records })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn is_labeled(&self) -> bool {
        self.records.first().is_some_and(|r| r.label.is_some())
    }

    pub fn labels(&self) -> Vec<Option<u8>> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn matrices(&self) -> impl Iterator<Item = &CMatrix> {
        self.records.iter().map(|r| &r.matrix)
    }

    /// Concatenates datasets of equal dimension and labeling.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        let mut records = Vec::new();
        for p in parts {
            if p.dim != first.dim || (!p.is_empty() && !first.is_empty() && p.is_labeled() != first.is_labeled()) {
                return Err(Error::invalid("datasets differ in dimension or labeling"));
            }
            records.extend(p.records.iter().cloned());
        }
        Ok(Dataset { dim: first.dim, records })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let labeled = self.is_labeled();
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        w.write_all(&(if labeled { FLAG_LABELS } else { 0 }).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.dim * self.dim * 16 + 1);
        for r in &self.records {
            buf.clear();
            for row in 0..self.dim {
                for col in 0..self.dim {
                    let z = r.matrix[(row, col)];
                    buf.extend_from_slice(&z.re.to_le_bytes());
                    buf.extend_from_slice(&z.im.to_le_bytes());
                }
            }
            if let Some(l) = r.label {
                buf.push(l);
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Dataset> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::format("not a dataset file (bad magic)"));
        }
        let version = read_u32(r)?;
        if version != DATASET_VERSION {
            return Err(Error::invalid(format!("unsupported dataset version {version}")));
        }
        let dim = read_u32(r)? as usize;
        let count = read_u64(r)?;
        let flags = read_u32(r)?;
        if dim == 0 || dim > 1 << 12 {
            return Err(Error::format(format!("implausible dimension {dim}")));
        }
        if flags & !FLAG_LABELS != 0 {
            return Err(Error::format(format!("unknown flags {flags:#x}")));
        }
        let labeled = flags & FLAG_LABELS != 0;
        let stride = dim * dim * 16 + usize::from(labeled);
        let mut buf = vec![0u8; stride];
        let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
        for i in 0..count {
            read_exact(r, &mut buf).map_err(|_| Error::format(format!("file truncated at record {i}")))?;
            let mut m = CMatrix::zeros(dim, dim);
            for (k, chunk) in buf[..dim * dim * 16].chunks_exact(16).enumerate() {
                let re = f64::from_le_bytes(chunk[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(chunk[8..].try_into().expect("8 bytes"));
                m[(k / dim, k % dim)] = Complex64::new(re, im);
            }
            let label = labeled.then(|| buf[stride - 1]);
            DensityMatrix::new(m.clone())
                .map_err(|e| Error::format(format!("record {i} is not a density matrix: {e}")))?;
            records.push(Record { matrix: m, label });
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(Error::format("trailing bytes after the last record"));
        }
        Ok(Dataset { dim, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        Dataset::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format("unexpected end of file"),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Separable2q,
    Separable3q,
    /// Bi-separable three-qubit states; `None` picks the partition uniformly
    /// per sample.
    Biseparable(Option<usize>),
    BipartitionMixture,
    ProductPure,
    Entangled2q,
    EntangledPure,
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "separable_2q" => DatasetKind::Separable2q,
            "separable_3q" => DatasetKind::Separable3q,
            "biseparable" => DatasetKind::Biseparable(None),
            "biseparable_a_bc" => DatasetKind::Biseparable(Some(0)),
            "biseparable_b_ac" => DatasetKind::Biseparable(Some(1)),
            "biseparable_c_ab" => DatasetKind::Biseparable(Some(2)),
            "bipartition_mixture" => DatasetKind::BipartitionMixture,
            "product_pure" => DatasetKind::ProductPure,
            "entangled_2q" => DatasetKind::Entangled2q,
            "entangled_pure" => DatasetKind::EntangledPure,
            other => return Err(Error::invalid(format!("unknown dataset kind '{other}'"))),
        })
    }
}

impl DatasetKind {
    /// Qubit count, or `None` when the caller chooses it (pure-state kinds).
    pub fn fixed_qubits(&self) -> Option<usize> {
        match self {
            DatasetKind::Separable2q | DatasetKind::Entangled2q => Some(2),
            DatasetKind::Separable3q | DatasetKind::Biseparable(_) | DatasetKind::BipartitionMixture => Some(3),
            DatasetKind::ProductPure | DatasetKind::EntangledPure => None,
        }
    }
}

/// Options for [`generate_dataset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateOptions {
    /// Qubit count for the pure-state kinds.
    pub n_qubits: usize,
    /// GME settings used to label `entangled_pure` samples.
    pub gme: GmeConfig,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions { n_qubits: 2, gme: GmeConfig::default() }
    }
}

/// Random stream for sample `index` of a dataset generated with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn flat_dirichlet<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

/// Bi-separable sample across `BIPARTITION_BLOCKS[partition]` that is also
/// NPT across the cut inside the merged pair, so it is certainly not fully
/// separable.
fn biseparable_sample<R: Rng + ?Sized>(partition: usize, rng: &mut R) -> Result<DensityMatrix> {
    let dims = [2, 2, 2];
    let block = BIPARTITION_BLOCKS[partition];
    for _ in 0..MAX_REJECTION_ATTEMPTS {
        let spec = MixtureSpec::random(dims.to_vec(), rng)?;
        let rho = biseparable_state(&spec, block, rng)?;
        if !is_ppt(rho.matrix(), &dims, &[block.1])? {
            return Ok(rho);
        }
    }
    Err(Error::InternalFailure("no NPT bi-separable sample found".into()))
}

fn generate_one(kind: DatasetKind, opts: &GenerateOptions, seed: u64, index: u64) -> Result<Record> {
    let mut rng = sample_rng(seed, index);
    let rng = &mut rng;
    let (rho, label) = match kind {
        DatasetKind::Separable2q => {
            (separable_mixed_state(&MixtureSpec::random(vec![2, 2], rng)?, rng)?, LABEL_SEPARABLE)
        }
        DatasetKind::Separable3q => {
            (separable_mixed_state(&MixtureSpec::random(vec![2, 2, 2], rng)?, rng)?, LABEL_SEPARABLE)
        }
        DatasetKind::Biseparable(p) => {
            let partition = p.unwrap_or_else(|| rng.random_range(0..3));
            (biseparable_sample(partition, rng)?, LABEL_BISEPARABLE[partition])
        }
        DatasetKind::BipartitionMixture => {
            let w = flat_dirichlet(3, rng);
            let specs = [
                MixtureSpec::random(vec![2, 2, 2], rng)?,
                MixtureSpec::random(vec![2, 2, 2], rng)?,
                MixtureSpec::random(vec![2, 2, 2], rng)?,
            ];
            (mixture_of_bipartitions(&[w[0], w[1], w[2]], &specs, rng)?, LABEL_SEPARABLE)
        }
        DatasetKind::ProductPure => {
            let psi = random_pure_product_state(opts.n_qubits, rng)?;
            (DensityMatrix::from_pure(&psi), LABEL_SEPARABLE)
        }
        DatasetKind::Entangled2q => (sample_entangled_2qubit(rng)?, LABEL_ENTANGLED),
        DatasetKind::EntangledPure => {
            let psi = random_pure_state(opts.n_qubits, rng)?;
            let entangled = gme_label(&psi, &opts.gme, rng.random())?;
            let label = if entangled { LABEL_ENTANGLED } else { LABEL_SEPARABLE };
            (DensityMatrix::from_pure(&psi), label)
        }
    };
    Ok(Record { matrix: rho.into_matrix(), label: Some(label) })
}

/// Generates `count` labeled records; sample `i` draws from
/// [`sample_rng`]`(seed, i)`, so the output does not depend on thread count.
pub fn generate_dataset(kind: DatasetKind, count: usize, seed: u64, opts: &GenerateOptions) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    let n_qubits = kind.fixed_qubits().unwrap_or(opts.n_qubits);
    if n_qubits == 0 || n_qubits > 10 {
        return Err(Error::invalid(format!("unsupported qubit count {n_qubits}")));
    }
    let records = (0..count as u64)
        .into_par_iter()
        .map(|i| generate_one(kind, opts, seed, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { dim: 1 << n_qubits, records })
}

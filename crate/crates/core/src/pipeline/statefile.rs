//! Plain-text quantum states.
//!
//! Each non-blank line holds whitespace-separated `re im` pairs; `#` starts
//! a comment. A column of single pairs is a pure state's amplitudes (any
//! norm, normalized on read). `d` lines of `d` pairs are a density matrix.

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qstate::{CMatrix, DensityMatrix, PureState};

#[derive(Debug, Clone, PartialEq)]
pub enum StateInput {
    Pure(PureState),
    Mixed(DensityMatrix),
}

impl StateInput {
    pub fn density_matrix(&self) -> DensityMatrix {
        match self {
            StateInput::Pure(p) => DensityMatrix::from_pure(p),
            StateInput::Mixed(m) => m.clone(),
        }
    }
}

fn qubits_for(len: usize) -> Result<usize> {
    if len < 2 || !len.is_power_of_two() {
        return Err(Error::invalid(format!("state dimension {len} is not 2^n with n ≥ 1")));
    }
    Ok(len.trailing_zeros() as usize)
}

pub fn parse_state_text(text: &str) -> Result<StateInput> {
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::invalid(format!("line {}: bad number '{t}'", i + 1))))
            .collect::<Result<_>>()?;
        if nums.len() % 2 != 0 {
            return Err(Error::invalid(format!("line {}: values must come in re im pairs", i + 1)));
        }
        rows.push(nums.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect());
    }
    if rows.is_empty() {
        return Err(Error::invalid("state file is empty"));
    }
    if rows.iter().all(|r| r.len() == 1) {
        let amps: Vec<Complex64> = rows.into_iter().map(|r| r[0]).collect();
        let n = qubits_for(amps.len())?;
        return Ok(StateInput::Pure(PureState::normalized(n, amps)?));
    }
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("density matrix rows must all hold d entries for d rows"));
    }
    qubits_for(d)?;
    let m = CMatrix::from_fn(d, d, |i, j| rows[i][j]);
    Ok(StateInput::Mixed(DensityMatrix::new(m)?))
}

pub fn read_state_file(path: &Path) -> Result<StateInput> {
    parse_state_text(&std::fs::read_to_string(path)?)
}

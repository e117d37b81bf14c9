use std::fs;
use std::path::{Path, PathBuf};

use dilatron_core::{Error, MatrixSequence, StochasticMatrix};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// `{"states": N, "matrices": [[[...]]], "homogeneous": bool}`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDocument {
    pub states: usize,
    pub matrices: Vec<Vec<Vec<f64>>>,
    pub homogeneous: bool,
}

/// A parsed input together with its origin.
#[derive(Debug, Clone)]
pub struct LoadedInput {
    pub path: PathBuf,
    pub sha256: String,
    pub document: InputDocument,
    pub matrices: Vec<StochasticMatrix>,
}

pub fn parse(text: &str, path: &Path) -> Result<(InputDocument, Vec<StochasticMatrix>), CliError> {
    let document: InputDocument = serde_json::from_str(text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if document.matrices.is_empty() {
        return Err(CliError::invalid("matrices", Error::EmptySequence));
    }
    if document.homogeneous && document.matrices.len() != 1 {
        return Err(CliError::Usage(format!(
            "homogeneous input must list exactly one matrix, found {}",
            document.matrices.len()
        )));
    }
    let mut matrices = Vec::with_capacity(document.matrices.len());
    for (idx, rows) in document.matrices.iter().enumerate() {
        let context = format!("matrices[{idx}]");
        if rows.len() != document.states {
            return Err(CliError::invalid(
                &context,
                Error::DimensionMismatch { expected: document.states, found: rows.len() },
            ));
        }
        matrices.push(StochasticMatrix::from_rows(rows).map_err(|e| CliError::invalid(&context, e))?);
    }
    Ok((document, matrices))
}

pub fn load(path: &Path) -> Result<LoadedInput, CliError> {
    let bytes = fs::read(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|e| CliError::Usage(format!("{}: not UTF-8 text: {e}", path.display())))?;
    let (document, matrices) = parse(&text, path)?;
    let sha256 = format!("{:x}", Sha256::digest(&bytes));
    Ok(LoadedInput { path: path.to_path_buf(), sha256, document, matrices })
}

impl LoadedInput {
    pub fn n(&self) -> usize {
        self.document.states
    }

    /// Homogeneous inputs repeat their matrix `horizon` times (default
    /// `default_horizon`); inhomogeneous ones use their first `horizon`
    /// matrices (default all of them).
    pub fn sequence(&self, horizon: Option<usize>, default_horizon: usize) -> Result<MatrixSequence, CliError> {
        if self.document.homogeneous {
            let t = horizon.unwrap_or(default_horizon);
            if t == 0 {
                return Err(CliError::Usage("horizon must be at least 1".into()));
            }
            return Ok(MatrixSequence::homogeneous(self.matrices[0].clone(), t));
        }
        let available = self.matrices.len();
        let t = horizon.unwrap_or(available);
        if t == 0 || t > available {
            return Err(CliError::invalid("--horizon", Error::HorizonExceeded { t, horizon: available }));
        }
        MatrixSequence::inhomogeneous(self.matrices[..t].to_vec()).map_err(|e| CliError::invalid("matrices", e))
    }
}

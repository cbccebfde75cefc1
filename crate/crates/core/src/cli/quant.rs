//! `eval-quant`: test accuracy of a stored (optionally projected) model.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use super::{accuracy, CliError};
use crate::data;
use crate::prox::QuantGrid;

/// Parses a vector separated by whitespace and/or commas.
pub fn parse_vector(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            let v: f64 = t.parse().map_err(|_| CliError::Validation(format!("bad number '{t}'")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(CliError::Validation(format!("non-finite value '{t}'")))
            }
        })
        .collect()
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let v = parse_vector(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    if v.is_empty() {
        return Err(CliError::Validation(format!("{}: empty vector", path.display())));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantEval {
    pub correct: usize,
    pub total: usize,
    pub dim: usize,
}

impl QuantEval {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Loads the model and test set, projects the model onto `grid` if given
/// and counts correct predictions of `1{σ(xᵀa) > ½}`.
pub fn cmd_eval_quant(model: &Path, grid: Option<&Path>, test: &Path) -> Result<QuantEval, CliError> {
    let x = read_vector(model)?;
    let grid = grid
        .map(|g| QuantGrid::new(read_vector(g)?).map_err(|e| CliError::Validation(format!("grid: {e}"))))
        .transpose()?;
    let file = File::open(test).map_err(|e| CliError::Validation(format!("{}: {e}", test.display())))?;
    let raw = data::parse_libsvm(BufReader::new(file), None)
        .map_err(|e| CliError::Validation(format!("{}: {e}", test.display())))?;
    if raw.dim() > x.len() {
        return Err(CliError::Validation(format!(
            "test set has feature index {} but the model has dimension {}",
            raw.dim(),
            x.len()
        )));
    }
    let ds = data::binarize_labels(&raw).map_err(|e| CliError::Validation(e.to_string()))?;
    let (correct, total) = accuracy(&x, &ds, grid.as_ref());
    Ok(QuantEval { correct, total, dim: x.len() })
}

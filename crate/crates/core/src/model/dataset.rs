use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("dataset has no records")]
    Empty,
    #[error("feature dimension must be >= 1")]
    ZeroDimension,
    #[error("{labels} labels for {rows} rows")]
    LabelCount { rows: usize, labels: usize },
    #[error("row {row}: feature index {index} out of range for dimension {dim}")]
    IndexOutOfRange { row: usize, index: usize, dim: usize },
    #[error("row {row}: feature indices must be strictly increasing")]
    UnsortedIndices { row: usize },
    #[error("row {row}: non-finite value")]
    NonFinite { row: usize },
    #[error("sample index {index} out of range for {n} samples")]
    SampleOutOfRange { index: usize, n: usize },
}

/// Borrowed view of one sparse feature row.
#[derive(Debug, Clone, Copy)]
pub struct SparseRow<'a> {
    pub indices: &'a [usize],
    pub values: &'a [f64],
}

impl SparseRow<'_> {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.indices.iter().zip(self.values).map(|(&j, &v)| v * x[j]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// `out += scale · row`
    pub fn axpy(&self, scale: f64, out: &mut [f64]) {
        for (&j, &v) in self.indices.iter().zip(self.values) {
            out[j] += scale * v;
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

/// Owned sparse vector (index/value pairs, ascending indices).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVec {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVec {
    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            out[j] = v;
        }
        out
    }
}

/// Immutable CSR design matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    labels: Vec<f64>,
    dim: usize,
}

impl Dataset {
    /// Builds a dataset from 0-based `(index, value)` rows.
    pub fn from_rows(
        rows: Vec<Vec<(usize, f64)>>,
        labels: Vec<f64>,
        dim: usize,
    ) -> Result<Self, DatasetError> {
        if rows.is_empty() {
            return Err(DatasetError::Empty);
        }
        if dim == 0 {
            return Err(DatasetError::ZeroDimension);
        }
        if labels.len() != rows.len() {
            return Err(DatasetError::LabelCount { rows: rows.len(), labels: labels.len() });
        }
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        indptr.push(0);
        for (r, row) in rows.into_iter().enumerate() {
            let mut prev: Option<usize> = None;
            for (j, v) in row {
                if j >= dim {
                    return Err(DatasetError::IndexOutOfRange { row: r, index: j, dim });
                }
                if prev.is_some_and(|p| p >= j) {
                    return Err(DatasetError::UnsortedIndices { row: r });
                }
                if !v.is_finite() {
                    return Err(DatasetError::NonFinite { row: r });
                }
                prev = Some(j);
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        if let Some(r) = labels.iter().position(|l| !l.is_finite()) {
            return Err(DatasetError::NonFinite { row: r });
        }
        Ok(Dataset { indptr, indices, values, labels, dim })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn row(&self, i: usize) -> SparseRow<'_> {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        SparseRow { indices: &self.indices[a..b], values: &self.values[a..b] }
    }

    pub fn rows(&self) -> impl Iterator<Item = SparseRow<'_>> + '_ {
        (0..self.n()).map(move |i| self.row(i))
    }

    pub fn check_index(&self, i: usize) -> Result<(), DatasetError> {
        if i < self.n() {
            Ok(())
        } else {
            Err(DatasetError::SampleOutOfRange { index: i, n: self.n() })
        }
    }

    /// Rows as owned `(index, value)` lists.
    pub fn to_rows(&self) -> Vec<Vec<(usize, f64)>> {
        self.rows()
            .map(|r| r.indices.iter().copied().zip(r.values.iter().copied()).collect())
            .collect()
    }

    /// Same rows, new labels.
    pub fn with_labels(&self, labels: Vec<f64>) -> Result<Self, DatasetError> {
        if labels.len() != self.n() {
            return Err(DatasetError::LabelCount { rows: self.n(), labels: labels.len() });
        }
        if let Some(r) = labels.iter().position(|l| !l.is_finite()) {
            return Err(DatasetError::NonFinite { row: r });
        }
        Ok(Dataset { labels, ..self.clone() })
    }

    /// Rows selected by `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self, DatasetError> {
        let rows = idx.iter().map(|&i| {
            let r = self.row(i);
            r.indices.iter().copied().zip(r.values.iter().copied()).collect()
        });
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Dataset::from_rows(rows.collect(), labels, self.dim)
    }

    /// Applies `scale(i, row)` as a per-row multiplier.
    pub fn scale_rows(&self, scale: impl Fn(SparseRow<'_>) -> f64) -> Self {
        let mut values = self.values.clone();
        for i in 0..self.n() {
            let s = scale(self.row(i));
            for v in &mut values[self.indptr[i]..self.indptr[i + 1]] {
                *v *= s;
            }
        }
        Dataset { values, ..self.clone() }
    }

    pub fn max_row_norm_sq(&self) -> f64 {
        self.rows().map(|r| r.norm_sq()).fold(0.0, f64::max)
    }
}

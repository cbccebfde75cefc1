//! libsvm ingestion, synthetic problems, label binarization, splitting and
//! row scaling.

use std::io::{self, BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use thiserror::Error;

use crate::model::{sigmoid, Dataset, DatasetError};
use crate::rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no records")]
    NoRecords,
    #[error("labels are not binary: found {0} distinct values")]
    Multiclass(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("need at least 2 samples to split, got {0}")]
    TooFewSamples(usize),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One libsvm line; feature indices are 1-based as in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub label: f64,
    pub features: Vec<(usize, f64)>,
}

fn parse_line(text: &str, line: usize) -> Result<Option<RawRecord>, DataError> {
    let err = |msg: String| DataError::Parse { line, msg };
    let body = text.split('#').next().unwrap_or("").trim();
    if body.is_empty() {
        return Ok(None);
    }
    let mut tokens = body.split_whitespace();
    let label_tok = tokens.next().unwrap_or_default();
    let label: f64 = label_tok.parse().map_err(|_| err(format!("malformed label '{label_tok}'")))?;
    if !label.is_finite() {
        return Err(err(format!("non-finite label '{label_tok}'")));
    }
    let mut features: Vec<(usize, f64)> = Vec::new();
    for tok in tokens {
        let (i, v) = tok.split_once(':').ok_or_else(|| err(format!("malformed token '{tok}'")))?;
        let idx: usize = i.parse().map_err(|_| err(format!("malformed index in '{tok}'")))?;
        let val: f64 = v.parse().map_err(|_| err(format!("malformed value in '{tok}'")))?;
        if idx < 1 {
            return Err(err(format!("index must be >= 1 in '{tok}'")));
        }
        if !val.is_finite() {
            return Err(err(format!("non-finite value in '{tok}'")));
        }
        if features.last().is_some_and(|&(p, _)| p >= idx) {
            return Err(err(format!("indices not strictly increasing at '{tok}'")));
        }
        features.push((idx, val));
    }
    Ok(Some(RawRecord { label, features }))
}

/// Reads all records; blank lines and `#` comments are skipped.
pub fn parse_libsvm_records<R: BufRead>(reader: R) -> Result<Vec<RawRecord>, DataError> {
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        if let Some(rec) = parse_line(&line?, k + 1)? {
            out.push(rec);
        }
    }
    if out.is_empty() {
        return Err(DataError::NoRecords);
    }
    Ok(out)
}

/// Builds a dataset from records; `d` is the largest index seen unless
/// `dim` overrides it.
pub fn records_to_dataset(records: Vec<RawRecord>, dim: Option<usize>) -> Result<Dataset, DataError> {
    if records.is_empty() {
        return Err(DataError::NoRecords);
    }
    let max_idx = records.iter().filter_map(|r| r.features.last().map(|&(i, _)| i)).max().unwrap_or(0);
    let d = match dim {
        Some(d) if d < max_idx => {
            return Err(DataError::InvalidParameter(format!("dimension override {d} is below max index {max_idx}")))
        }
        Some(d) => d,
        None => max_idx.max(1),
    };
    let labels = records.iter().map(|r| r.label).collect();
    let rows = records.into_iter().map(|r| r.features.into_iter().map(|(i, v)| (i - 1, v)).collect()).collect();
    Ok(Dataset::from_rows(rows, labels, d)?)
}

pub fn parse_libsvm<R: BufRead>(reader: R, dim: Option<usize>) -> Result<Dataset, DataError> {
    records_to_dataset(parse_libsvm_records(reader)?, dim)
}

pub fn parse_libsvm_str(text: &str, dim: Option<usize>) -> Result<Dataset, DataError> {
    parse_libsvm(text.as_bytes(), dim)
}

/// Writes the dataset with 1-based indices. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn emit_libsvm<W: Write>(ds: &Dataset, mut out: W) -> io::Result<()> {
    for (i, row) in ds.rows().enumerate() {
        write!(out, "{}", ds.label(i))?;
        for (&j, &v) in row.indices.iter().zip(row.values) {
            write!(out, " {}:{}", j + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn emit_libsvm_string(ds: &Dataset) -> String {
    let mut buf = Vec::new();
    emit_libsvm(ds, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// Maps two-valued labels to `{0, 1}` (smaller value → 0), so `{−1, +1}`
/// and `{1, 2}` both become `{0, 1}`. More than two values is an error.
pub fn binarize_labels(ds: &Dataset) -> Result<Dataset, DataError> {
    let mut distinct: Vec<f64> = ds.labels().to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let map = |y: f64| -> Result<f64, DataError> {
        match distinct.as_slice() {
            [only] => match *only {
                1.0 => Ok(1.0),
                0.0 | -1.0 => Ok(0.0),
                v => Err(DataError::InvalidParameter(format!("cannot binarize single label value {v}"))),
            },
            [lo, _] => Ok(if y == *lo { 0.0 } else { 1.0 }),
            other => Err(DataError::Multiclass(other.len())),
        }
    };
    let labels = ds.labels().iter().map(|&y| map(y)).collect::<Result<Vec<_>, _>>()?;
    Ok(ds.with_labels(labels)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlantedKind {
    /// Standard-normal nonzeros.
    #[default]
    Gaussian,
    /// Nonzeros drawn uniformly from `{−1, +1}`.
    Signs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    /// Nonzero features per row.
    pub row_nnz: usize,
    /// Nonzeros of the planted model.
    pub planted_nnz: usize,
    pub planted: PlantedKind,
    pub noise: f64,
    /// Regression only: fraction of labels hit by heavy-tailed noise.
    pub outlier_fraction: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(n: usize, d: usize) -> Self {
        SynthSpec {
            n,
            d,
            row_nnz: d,
            planted_nnz: d.div_ceil(5),
            planted: PlantedKind::Gaussian,
            noise: 0.0,
            outlier_fraction: 0.0,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidParameter(m));
        if self.n == 0 || self.d == 0 {
            return bad(format!("need n, d >= 1, got n={}, d={}", self.n, self.d));
        }
        if self.row_nnz == 0 || self.row_nnz > self.d {
            return bad(format!("row sparsity must be in [1, d], got {}", self.row_nnz));
        }
        if self.planted_nnz == 0 || self.planted_nnz > self.d {
            return bad(format!("planted sparsity must be in [1, d], got {}", self.planted_nnz));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be >= 0, got {}", self.noise));
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return bad(format!("outlier fraction must be in [0, 1], got {}", self.outlier_fraction));
        }
        Ok(())
    }
}

/// A generated dataset together with the model that produced its labels.
#[derive(Debug, Clone)]
pub struct SynthProblem {
    pub data: Dataset,
    pub planted: Vec<f64>,
}

fn sorted_support<R: Rng>(rng: &mut R, d: usize, k: usize) -> Vec<usize> {
    let mut s = rand::seq::index::sample(rng, d, k).into_vec();
    s.sort_unstable();
    s
}

fn planted_and_rows<R: Rng>(spec: &SynthSpec, rng: &mut R) -> (Vec<f64>, Vec<Vec<(usize, f64)>>) {
    let mut planted = vec![0.0; spec.d];
    for j in sorted_support(rng, spec.d, spec.planted_nnz) {
        planted[j] = match spec.planted {
            PlantedKind::Gaussian => StandardNormal.sample(rng),
            PlantedKind::Signs => {
                if rng.random_bool(0.5) {
                    1.0
                } else {
                    -1.0
                }
            }
        };
    }
    let rows = (0..spec.n)
        .map(|_| {
            sorted_support(rng, spec.d, spec.row_nnz)
                .into_iter()
                .map(|j| (j, StandardNormal.sample(rng)))
                .collect()
        })
        .collect();
    (planted, rows)
}

fn margin(row: &[(usize, f64)], x: &[f64]) -> f64 {
    row.iter().map(|&(j, v)| v * x[j]).sum()
}

/// Labels `b_i = 1{σ(x*ᵀa_i) + noise·z_i > ½}` with `z_i ~ N(0, 1)`.
pub fn synth_classification(spec: &SynthSpec) -> Result<SynthProblem, DataError> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, rng::STREAM_DATA);
    let (planted, rows) = planted_and_rows(spec, &mut rng);
    let labels = rows
        .iter()
        .map(|row| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if sigmoid(margin(row, &planted)) + spec.noise * z > 0.5 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(SynthProblem { data: Dataset::from_rows(rows, labels, spec.d)?, planted })
}

/// Labels `y_i = x*ᵀa_i + noise·z_i`; a random `outlier_fraction` of them
/// additionally receive Cauchy noise of scale 10.
pub fn synth_regression(spec: &SynthSpec) -> Result<SynthProblem, DataError> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, rng::STREAM_DATA);
    let (planted, rows) = planted_and_rows(spec, &mut rng);
    let cauchy = Cauchy::new(0.0, 10.0).expect("valid scale");
    let labels = rows
        .iter()
        .map(|row| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let mut y = margin(row, &planted) + spec.noise * z;
            if spec.outlier_fraction > 0.0 && rng.random_bool(spec.outlier_fraction) {
                y += cauchy.sample(&mut rng);
            }
            y
        })
        .collect();
    Ok(SynthProblem { data: Dataset::from_rows(rows, labels, spec.d)?, planted })
}

/// Seeded split; the train part gets `round(fraction·n)` samples clamped to
/// `[1, n−1]`. Both parts keep the original sample order.
pub fn train_test_split(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    let n = ds.n();
    if n < 2 {
        return Err(DataError::TooFewSamples(n));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::InvalidParameter(format!("split fraction must be in (0, 1), got {fraction}")));
    }
    let n_train = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(seed, rng::STREAM_SPLIT));
    let (train, test) = perm.split_at_mut(n_train);
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(train)?, ds.subset(test)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormMode {
    #[default]
    None,
    UnitRowNorm,
}

impl NormMode {
    pub fn name(self) -> &'static str {
        match self {
            NormMode::None => "none",
            NormMode::UnitRowNorm => "unit_row_norm",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "none" => Some(NormMode::None),
            "unit_row_norm" => Some(NormMode::UnitRowNorm),
            _ => None,
        }
    }
}

/// `UnitRowNorm` divides each nonzero row by its Euclidean norm.
pub fn normalize_features(ds: &Dataset, mode: NormMode) -> Dataset {
    match mode {
        NormMode::None => ds.clone(),
        NormMode::UnitRowNorm => ds.scale_rows(|row| {
            let norm = row.norm_sq().sqrt();
            if norm > 0.0 {
                1.0 / norm
            } else {
                1.0
            }
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{estimate_smoothness, Objective, SmoothLoss};
    use crate::prox::{ExtReal, Regularizer};

    #[test]
    fn parses_basic_line() {
        let ds = parse_libsvm_str("1 1:0.5 3:2\n", None).unwrap();
        assert_eq!(ds.n(), 1);
        assert_eq!(ds.dim(), 3);
        assert_eq!(ds.label(0), 1.0);
        assert_eq!(ds.to_rows()[0], vec![(0, 0.5), (2, 2.0)]);
        assert_eq!(parse_libsvm_str("1 1:0.5\n", Some(10)).unwrap().dim(), 10);
        assert!(parse_libsvm_str("1 3:1\n", Some(2)).is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert!(matches!(parse_libsvm_str("", None), Err(DataError::NoRecords)));
        assert!(matches!(parse_libsvm_str("\n# only\n", None), Err(DataError::NoRecords)));
        let cases = ["1 1:0.5\n0 2:1 2:3\n", "1 1:0.5\n0 0:1\n", "1 1:0.5\n0 x:1\n", "1 1:0.5\nfoo 1:1\n", "1 1:0.5\n1 1\n"];
        for text in cases {
            match parse_libsvm_str(text, None) {
                Err(DataError::Parse { line, .. }) => assert_eq!(line, 2, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn binarization() {
        let ds = parse_libsvm_str("-1 1:1\n1 1:2\n-1 2:1\n", None).unwrap();
        assert_eq!(binarize_labels(&ds).unwrap().labels(), &[0.0, 1.0, 0.0]);
        let ds = parse_libsvm_str("2 1:1\n1 1:2\n", None).unwrap();
        assert_eq!(binarize_labels(&ds).unwrap().labels(), &[1.0, 0.0]);
        let ds = parse_libsvm_str("0 1:1\n1 1:2\n2 1:1\n", None).unwrap();
        assert!(matches!(binarize_labels(&ds), Err(DataError::Multiclass(3))));
    }

    #[test]
    fn emit_parse_round_trip() {
        let text = "1 1:0.5 3:2\n0 2:-0.125\n1\n";
        let ds = parse_libsvm_str(text, None).unwrap();
        let again = parse_libsvm_str(&emit_libsvm_string(&ds), Some(ds.dim())).unwrap();
        assert_eq!(again, ds);
        assert_eq!(emit_libsvm_string(&ds), text);
    }

    #[test]
    fn single_record_synthetic_round_trips() {
        let p = synth_classification(&SynthSpec { seed: 4, ..SynthSpec::new(1, 5) }).unwrap();
        let again = parse_libsvm_str(&emit_libsvm_string(&p.data), Some(5)).unwrap();
        assert_eq!(again, p.data);
    }

    #[test]
    fn noiseless_classification_is_separated_by_planted_model() {
        let spec = SynthSpec { row_nnz: 4, seed: 11, ..SynthSpec::new(300, 10) };
        let p = synth_classification(&spec).unwrap();
        for (i, row) in p.data.rows().enumerate() {
            let pred = if sigmoid(row.dot(&p.planted)) > 0.5 { 1.0 } else { 0.0 };
            assert_eq!(pred, p.data.label(i));
        }
    }

    #[test]
    fn noiseless_regression_has_zero_loss_at_planted() {
        let p = synth_regression(&SynthSpec { seed: 2, ..SynthSpec::new(50, 8) }).unwrap();
        let reg = Regularizer::l0(1e-4).unwrap();
        let obj = Objective::new(SmoothLoss::truncated_ls_default(50), reg.clone(), &p.data).unwrap();
        assert_eq!(obj.full_objective(&p.planted).unwrap(), reg.value(&p.planted).unwrap());
        assert!(matches!(reg.value(&p.planted).unwrap(), ExtReal::Finite(v) if v > 0.0));
    }

    #[test]
    fn generators_are_deterministic_and_validate() {
        let spec = SynthSpec { noise: 0.3, outlier_fraction: 0.1, seed: 8, ..SynthSpec::new(40, 6) };
        assert_eq!(synth_regression(&spec).unwrap().data, synth_regression(&spec).unwrap().data);
        assert_eq!(synth_classification(&spec).unwrap().data, synth_classification(&spec).unwrap().data);
        assert!(synth_classification(&SynthSpec { row_nnz: 7, ..spec.clone() }).is_err());
        assert!(synth_classification(&SynthSpec { n: 0, ..spec }).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = parse_libsvm_str("1 1:1\n0 1:2\n1 1:3\n0 1:4\n", None).unwrap();
        let (a, b) = train_test_split(&ds, 0.5, 3).unwrap();
        assert_eq!((a.n(), b.n()), (2, 2));
        let (a2, _) = train_test_split(&ds, 0.5, 3).unwrap();
        assert_eq!(a, a2);
        let one = parse_libsvm_str("1 1:1\n", None).unwrap();
        assert!(matches!(train_test_split(&one, 0.5, 0), Err(DataError::TooFewSamples(1))));
        assert!(train_test_split(&ds, 1.0, 0).is_err());
    }

    #[test]
    fn unit_row_norm_gives_unit_smoothness_for_tls() {
        let ds = parse_libsvm_str("1 1:3 2:4\n0 2:0.5\n2\n", None).unwrap();
        let normed = normalize_features(&ds, NormMode::UnitRowNorm);
        let row = normed.to_rows()[0].clone();
        assert!((row[0].1 - 0.6).abs() < 1e-15 && (row[1].1 - 0.8).abs() < 1e-15);
        assert!(normed.to_rows()[2].is_empty());
        let l = estimate_smoothness(&SmoothLoss::TruncatedLs { alpha: 1.0 }, &normed).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
    }
}

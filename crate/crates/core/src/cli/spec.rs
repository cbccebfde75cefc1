//! TOML experiment specification.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{NormMode, PlantedKind};
use crate::estimators::{BatchSchedule, Sampling, Setting};
use crate::model::SmoothLoss;
use crate::prox::Regularizer;
use crate::solver::{Algorithm, Horizon, SolverConfig};

/// Default regularization weight.
pub const DEFAULT_LAMBDA: f64 = 1e-4;
/// Default number of probes for the gradient-noise estimate.
pub const DEFAULT_NOISE_PROBES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub seeds: Vec<u64>,
    pub dataset: DatasetSpec,
    pub loss: LossSpec,
    pub regularizer: RegularizerSpec,
    /// Overrides the analytic smoothness bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    /// Overrides the estimated gradient-noise variance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_probes: Option<usize>,
    pub solvers: Vec<SolverSpec>,
    pub outputs: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    /// `none` or `unit_row_norm`; defaults to `unit_row_norm` for NLLS.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalize: Option<String>,
    /// Hold out this fraction as a test set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub task: Task,
    pub n: usize,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_nnz: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted_nnz: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted: Option<PlantedSpec>,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub outlier_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantedSpec {
    Gaussian,
    Signs,
}

impl From<PlantedSpec> for PlantedKind {
    fn from(p: PlantedSpec) -> Self {
        match p {
            PlantedSpec::Gaussian => PlantedKind::Gaussian,
            PlantedSpec::Signs => PlantedKind::Signs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossKind,
    /// TLS truncation; defaults to `√(10n)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Nlls,
    Tls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerSpec {
    pub kind: RegSpecKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// ℓ0-ball radius; defaults to `⌈0.2d⌉`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegSpecKind {
    L0,
    LHalf,
    LTwoThirds,
    L0Ball,
    Quantization,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlgorithmSpec {
    #[serde(rename = "PGD")]
    Pgd,
    #[serde(rename = "MBSPG")]
    MbSpg,
    #[serde(rename = "SPGR")]
    Spgr,
    #[serde(rename = "SPGRIMB")]
    SpgrImb,
    #[serde(rename = "HeuristicQSGD")]
    HeuristicQsgd,
}

impl From<AlgorithmSpec> for Algorithm {
    fn from(a: AlgorithmSpec) -> Self {
        match a {
            AlgorithmSpec::Pgd => Algorithm::Pgd,
            AlgorithmSpec::MbSpg => Algorithm::MbSpg,
            AlgorithmSpec::Spgr => Algorithm::Spgr,
            AlgorithmSpec::SpgrImb => Algorithm::SpgrImb,
            AlgorithmSpec::HeuristicQsgd => Algorithm::HeuristicQsgd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingSpec {
    Online,
    FiniteSum,
}

impl From<SettingSpec> for Setting {
    fn from(s: SettingSpec) -> Self {
        match s {
            SettingSpec::Online => Setting::Online,
            SettingSpec::FiniteSum => Setting::FiniteSum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Fixed {
        m: usize,
    },
    Increasing {
        b: usize,
    },
    SpgrOnline {
        s1: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        s2: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q: Option<usize>,
    },
    SpgrFiniteSum,
    SpgrImb {
        b: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingSpec {
    WithReplacement,
    WithoutReplacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub algorithm: AlgorithmSpec,
    pub setting: SettingSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_every: Option<usize>,
    /// Halve the step every this many iterations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halve_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_grad_evals: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub csv: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
    /// Directory receiving one `x_R` vector file per run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| e.to_string())?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec is serializable")
    }

    /// Structural checks that need no data.
    pub fn validate(&self) -> Result<(), String> {
        if self.seeds.is_empty() {
            return Err("seeds must be nonempty".into());
        }
        if self.solvers.is_empty() {
            return Err("at least one solver is required".into());
        }
        let ds = &self.dataset;
        match (&ds.path, &ds.synthetic) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err("dataset needs exactly one of `path` or `synthetic`".into()),
        }
        if let Some(m) = &ds.normalize {
            if NormMode::from_name(m).is_none() {
                return Err(format!("unknown normalization '{m}' (expected none or unit_row_norm)"));
            }
        }
        if let Some(f) = ds.test_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(format!("test_fraction must be in (0, 1), got {f}"));
            }
        }
        if self.regularizer.kind == RegSpecKind::Quantization && self.regularizer.grid.is_none() {
            return Err("quantization regularizer needs a grid".into());
        }
        for (i, s) in self.solvers.iter().enumerate() {
            if s.iterations.is_some() == s.eps.is_some() {
                return Err(format!("solver {i}: give exactly one of `iterations` or `eps`"));
            }
        }
        Ok(())
    }

    pub fn task(&self) -> Task {
        match self.loss.kind {
            LossKind::Nlls => Task::Classification,
            LossKind::Tls => Task::Regression,
        }
    }

    pub fn norm_mode(&self) -> NormMode {
        match &self.dataset.normalize {
            Some(m) => NormMode::from_name(m).unwrap_or_default(),
            None if self.loss.kind == LossKind::Nlls => NormMode::UnitRowNorm,
            None => NormMode::None,
        }
    }
}

impl LossSpec {
    pub fn build(&self, n: usize) -> SmoothLoss {
        match self.kind {
            LossKind::Nlls => SmoothLoss::NllsSigmoid,
            LossKind::Tls => match self.alpha {
                Some(alpha) => SmoothLoss::TruncatedLs { alpha },
                None => SmoothLoss::truncated_ls_default(n),
            },
        }
    }
}

impl RegularizerSpec {
    pub fn build(&self, d: usize) -> Result<Regularizer, String> {
        let lambda = self.lambda.unwrap_or(DEFAULT_LAMBDA);
        let r = match self.kind {
            RegSpecKind::L0 => Regularizer::l0(lambda),
            RegSpecKind::LHalf => Regularizer::l_half(lambda),
            RegSpecKind::LTwoThirds => Regularizer::l_two_thirds(lambda),
            RegSpecKind::L0Ball => Regularizer::l0_ball(self.k.unwrap_or((0.2 * d as f64).ceil() as usize).max(1)),
            RegSpecKind::Quantization => Regularizer::quantization(lambda, self.grid.clone().unwrap_or_default()),
            RegSpecKind::L1 => Regularizer::l1(lambda),
        };
        r.map_err(|e| e.to_string())
    }
}

impl SolverSpec {
    pub fn algorithm(&self) -> Algorithm {
        self.algorithm.into()
    }

    pub fn setting(&self) -> Setting {
        self.setting.into()
    }

    /// Solver configuration for one seed.
    pub fn build(&self, seed: u64) -> Result<SolverConfig, String> {
        let alg = self.algorithm();
        let mut cfg = SolverConfig::new(alg, self.setting()).with_seed(seed);
        if let Some(c) = self.c {
            cfg.c = c;
        }
        cfg.horizon = match (self.iterations, self.eps) {
            (Some(t), None) => Horizon::Iterations(t),
            (None, Some(e)) => Horizon::Accuracy(e),
            _ => return Err("give exactly one of `iterations` or `eps`".into()),
        };
        if let Some(s) = self.schedule {
            cfg.schedule = match s {
                ScheduleSpec::Fixed { m } => BatchSchedule::Fixed(m),
                ScheduleSpec::Increasing { b } => BatchSchedule::Increasing(b),
                ScheduleSpec::SpgrOnline { s1, s2: None, q: None } => {
                    BatchSchedule::spgr_online(s1).map_err(|e| e.to_string())?
                }
                ScheduleSpec::SpgrOnline { s1, s2, q } => {
                    let auto = ((s1 as f64).sqrt().round() as usize).max(1);
                    BatchSchedule::SpgrOnline { s1, s2: s2.unwrap_or(auto), q: q.unwrap_or(auto) }
                }
                ScheduleSpec::SpgrFiniteSum => BatchSchedule::SpgrFiniteSum,
                ScheduleSpec::SpgrImb { b } => BatchSchedule::SpgrImb(b),
            };
        }
        if let Some(r) = self.residual_every {
            cfg.residual_every = r;
        }
        cfg.step_decay = self.halve_every;
        cfg.sampling = match self.sampling {
            Some(SamplingSpec::WithoutReplacement) => Sampling::WithoutReplacement,
            _ => Sampling::WithReplacement,
        };
        cfg.stop_residual = self.stop_residual;
        cfg.max_grad_evals = self.max_grad_evals;
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

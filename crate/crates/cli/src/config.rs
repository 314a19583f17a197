use std::path::{Path, PathBuf};

use mol::linops::{make_mask, synthetic_coil_maps, LinearOperatorSpec, MaskSpec};
use mol::net::{Activation, NetworkConfig};
use mol::solver::{Acceleration, SolverConfig};
use mol::training::{DatasetSpec, Optimizer, PhantomSpec, TrainConfig, TrainMode};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Complete, strictly parsed experiment description. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetSection,
    pub operator: OperatorSection,
    pub network: NetworkSection,
    pub solver: SolverSection,
    pub training: TrainingSection,
    pub analysis: AnalysisSection,
    pub reconstruct: ReconstructSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset: DatasetSection::default(),
            operator: OperatorSection::default(),
            network: NetworkSection::default(),
            solver: SolverSection::default(),
            training: TrainingSection::default(),
            analysis: AnalysisSection::default(),
            reconstruct: ReconstructSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub noise_sigma: f64,
    pub min_shapes: usize,
    pub max_shapes: usize,
    pub rect_fraction: f64,
    pub phase_strength: f64,
    pub train_fraction: f64,
    pub validation_fraction: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let d = DatasetSpec::default();
        Self {
            count: d.count,
            height: d.shape.0,
            width: d.shape.1,
            noise_sigma: 0.01,
            min_shapes: d.phantom.min_shapes,
            max_shapes: d.phantom.max_shapes,
            rect_fraction: d.phantom.rect_fraction,
            phase_strength: d.phantom.phase_strength,
            train_fraction: d.train_fraction,
            validation_fraction: d.validation_fraction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Identity,
    MaskedFourier,
    DenseGaussian,
    MultiCoil,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    VariableDensity,
    Full,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorSection {
    pub kind: OperatorKind,
    pub mask: MaskKind,
    pub acceleration: f64,
    pub density_decay: f64,
    pub coils: usize,
    /// Rows of the dense Gaussian operator; 0 means half the pixel count.
    pub dense_rows: usize,
}

impl Default for OperatorSection {
    fn default() -> Self {
        Self {
            kind: OperatorKind::MaskedFourier,
            mask: MaskKind::VariableDensity,
            acceleration: 4.0,
            density_decay: 2.0,
            coils: mol::linops::DEFAULT_COILS,
            dense_rows: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    LeakyRelu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub layers: usize,
    pub channels: usize,
    pub kernel_size: usize,
    pub activation: ActivationKind,
    pub leaky_slope: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let n = NetworkConfig::default();
        Self {
            layers: n.num_layers,
            channels: n.channels,
            kernel_size: n.kernel_size,
            activation: ActivationKind::Relu,
            leaky_slope: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub m: f64,
    pub lambda: f64,
    /// alpha as a fraction of the step-size bound 2m/(2-m)^2.
    pub alpha_fraction: f64,
    pub tol_fwd: f64,
    pub tol_bwd: f64,
    pub max_iter_fwd: usize,
    pub max_iter_bwd: usize,
    /// 0 disables Anderson acceleration.
    pub anderson_depth: usize,
    pub divergence_threshold: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverConfig::new(0.1, 1.0).expect("valid default solver");
        Self {
            m: s.m,
            lambda: s.lambda,
            alpha_fraction: mol::solver::DEFAULT_ALPHA_FRACTION,
            tol_fwd: s.tol_fwd,
            tol_bwd: s.tol_bwd,
            max_iter_fwd: s.max_iter_fwd,
            max_iter_bwd: s.max_iter_bwd,
            anderson_depth: 0,
            divergence_threshold: s.divergence_threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    MolLr,
    MolSn,
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lip_weight: f64,
    pub lip_ascent_steps: usize,
    pub mode: ModeKind,
    /// Write a checkpoint every this many epochs (the last epoch is always written).
    pub checkpoint_every: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let (beta1, beta2, eps) = match Optimizer::default() {
            Optimizer::Adam { beta1, beta2, eps } => (beta1, beta2, eps),
            Optimizer::Sgd => unreachable!(),
        };
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            optimizer: OptimizerKind::Adam,
            beta1,
            beta2,
            eps,
            lip_weight: t.lip_weight,
            lip_ascent_steps: t.lip_ascent_steps,
            mode: ModeKind::MolLr,
            checkpoint_every: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub ascent_steps: usize,
    pub ascent_step_size: f64,
    pub margin_pairs: usize,
    pub robustness_trials: usize,
    pub perturb_scale: f64,
    /// Problems used by `verify` and `bench`.
    pub problems: usize,
    pub gradient_params: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            ascent_steps: mol::analysis::DEFAULT_ASCENT_STEPS,
            ascent_step_size: mol::analysis::DEFAULT_ASCENT_STEP,
            margin_pairs: 1000,
            robustness_trials: 100,
            perturb_scale: 0.05,
            problems: 3,
            gradient_params: 5,
        }
    }
}

/// One measurement to reconstruct; paths are relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructInput {
    pub measurement: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructSection {
    /// When empty, the test split of the synthetic dataset is reconstructed.
    pub inputs: Vec<ReconstructInput>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.network_config().validate()?;
        self.solver_config()?;
        self.train_config().validate()?;
        if self.dataset.height == 0 || self.dataset.width == 0 {
            return Err(CliError::Config("dataset height and width must be positive".into()));
        }
        if self.dataset.height > u16::MAX as usize || self.dataset.width > u16::MAX as usize {
            return Err(CliError::Config("image dimensions exceed 65535".into()));
        }
        if self.operator.kind == OperatorKind::MultiCoil && self.operator.coils == 0 {
            return Err(CliError::Config("operator.coils must be positive".into()));
        }
        if self.analysis.problems == 0 {
            return Err(CliError::Config("analysis.problems must be positive".into()));
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.dataset.height, self.dataset.width)
    }

    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            num_layers: self.network.layers,
            channels: self.network.channels,
            kernel_size: self.network.kernel_size,
            activation: match self.network.activation {
                ActivationKind::Relu => Activation::Relu,
                ActivationKind::LeakyRelu => Activation::LeakyRelu(self.network.leaky_slope),
                ActivationKind::Identity => Activation::Identity,
            },
            image_shape: self.shape(),
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        let s = &self.solver;
        let acceleration = match s.anderson_depth {
            0 => Acceleration::None,
            depth => Acceleration::Anderson { depth },
        };
        let mut cfg = SolverConfig::with_alpha_fraction(s.m, s.lambda, s.alpha_fraction)?
            .with_tolerances(s.tol_fwd, s.tol_bwd)
            .with_max_iters(s.max_iter_fwd, s.max_iter_bwd)
            .with_acceleration(acceleration);
        cfg.divergence_threshold = s.divergence_threshold;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            optimizer: match t.optimizer {
                OptimizerKind::Adam => Optimizer::Adam {
                    beta1: t.beta1,
                    beta2: t.beta2,
                    eps: t.eps,
                },
                OptimizerKind::Sgd => Optimizer::Sgd,
            },
            lip_weight: t.lip_weight,
            lip_ascent_steps: t.lip_ascent_steps,
            mode: match t.mode {
                ModeKind::MolLr => TrainMode::MolLr,
                ModeKind::MolSn => TrainMode::MolSn,
                ModeKind::Unconstrained => TrainMode::Unconstrained,
            },
            m_target: self.solver.m.min(0.999),
            seed: mol::seed::sub_seed(self.seed, "train"),
        }
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec, CliError> {
        let coils = match self.operator.kind {
            OperatorKind::MaskedFourier => 1,
            OperatorKind::MultiCoil => self.operator.coils,
            other => {
                return Err(CliError::Config(format!(
                    "synthetic datasets need a Fourier operator, got {other:?}"
                )))
            }
        };
        if self.operator.mask != MaskKind::VariableDensity {
            return Err(CliError::Config("synthetic datasets need a variable-density mask".into()));
        }
        let d = &self.dataset;
        Ok(DatasetSpec {
            count: d.count,
            shape: self.shape(),
            phantom: self.dataset_phantom(),
            acceleration: self.operator.acceleration,
            density_decay: self.operator.density_decay,
            noise_sigma: d.noise_sigma,
            coils,
            train_fraction: d.train_fraction,
            validation_fraction: d.validation_fraction,
            seed: mol::seed::sub_seed(self.seed, "dataset"),
        })
    }

    pub fn dataset_phantom(&self) -> PhantomSpec {
        let d = &self.dataset;
        PhantomSpec {
            min_shapes: d.min_shapes,
            max_shapes: d.max_shapes,
            rect_fraction: d.rect_fraction,
            phase_strength: d.phase_strength,
        }
    }

    pub fn make_mask(&self, seed: u64) -> Result<MaskSpec, CliError> {
        let (h, w) = self.shape();
        Ok(match self.operator.mask {
            MaskKind::VariableDensity => make_mask((h, w), self.operator.acceleration, self.operator.density_decay, seed)?,
            MaskKind::Full => MaskSpec::full(h, w),
            MaskKind::Empty => MaskSpec::empty(h, w),
        })
    }

    /// Operator for a given mask (ignored by mask-free kinds).
    pub fn operator_with_mask(&self, mask: MaskSpec, seed: u64) -> Result<LinearOperatorSpec, CliError> {
        let (h, w) = self.shape();
        Ok(match self.operator.kind {
            OperatorKind::Identity => LinearOperatorSpec::identity(h, w),
            OperatorKind::MaskedFourier => LinearOperatorSpec::masked_fourier(mask),
            OperatorKind::DenseGaussian => {
                let rows = if self.operator.dense_rows == 0 { h * w / 2 } else { self.operator.dense_rows };
                LinearOperatorSpec::dense_gaussian(h, w, rows.max(1), seed).normalized(50, seed)
            }
            OperatorKind::MultiCoil => LinearOperatorSpec::multi_coil(mask, synthetic_coil_maps(h, w, self.operator.coils))?,
        })
    }

    pub fn needs_mask(&self) -> bool {
        matches!(self.operator.kind, OperatorKind::MaskedFourier | OperatorKind::MultiCoil)
    }

    /// Operator for the `index`-th generated problem.
    pub fn problem_operator(&self, index: u64) -> Result<LinearOperatorSpec, CliError> {
        let seed = mol::seed::indexed_seed(self.seed, "operator", index);
        let mask = if self.needs_mask() {
            self.make_mask(seed)?
        } else {
            MaskSpec::full(self.dataset.height, self.dataset.width)
        };
        self.operator_with_mask(mask, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = ExperimentConfig::parse("[solver]\nmm = 0.2\n").unwrap_err();
        assert!(err.to_string().contains("mm"), "{err}");
        let err = ExperimentConfig::parse("bogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(ExperimentConfig::parse("[solver]\nm = 1.5\n").is_err());
        assert!(ExperimentConfig::parse("[network]\nkernel_size = 4\n").is_err());
        assert!(ExperimentConfig::parse("[training]\nlearning_rate = -1.0\n").is_err());
    }

    #[test]
    fn sub_seeds_follow_global_seed() {
        let mut a = ExperimentConfig::default();
        let mut b = a.clone();
        a.seed = 1;
        b.seed = 2;
        assert_ne!(a.dataset_spec().unwrap().seed, b.dataset_spec().unwrap().seed);
        assert_ne!(a.train_config().seed, a.dataset_spec().unwrap().seed);
    }
}

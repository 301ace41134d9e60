use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_spec, DeformationSpec, PairModelSpec, SymmetryClass, ValidationConstants};
use crate::spectral_stats::TestFunction;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_N_CAP: usize = 1000;
pub const DEFAULT_SAMPLE_CAP: usize = 100_000;
pub const GAMMA_MAX: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ThresholdSweep,
    OptimalityDemo,
    GftContinuity,
    MdeValidation,
    TraceCorrIdentity,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::ThresholdSweep => "threshold_sweep",
            ExperimentKind::OptimalityDemo => "optimality_demo",
            ExperimentKind::GftContinuity => "gft_continuity",
            ExperimentKind::MdeValidation => "mde_validation",
            ExperimentKind::TraceCorrIdentity => "trace_corr_identity",
        }
    }
}

/// Knobs shared by the runners; every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentParams {
    /// Bulk energy used for local statistics.
    pub energy: f64,
    pub kappa: f64,
    /// `Im z = N^{-1-xi}` for resolvent observables.
    pub xi: f64,
    pub bootstrap: usize,
    pub test_function: TestFunction,
    /// Symmetry class and deformation of the Example-2 construction.
    pub symmetry: SymmetryClass,
    pub deformation: DeformationSpec,
    /// Flow times as fractions of alpha.
    pub t_fractions: Vec<f64>,
    /// Poisson smoothing width for density comparisons.
    pub smoothing_eta: f64,
    pub grid_points: usize,
    /// Time of the Gaussian component in the free-convolution comparison.
    pub free_convolution_t: f64,
    /// Optional deformed model for the density comparison.
    pub deformed_model: Option<PairModelSpec>,
    /// Fail with `InsufficientSamples` when the joint-statistic SE exceeds this.
    pub stderr_tolerance: Option<f64>,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            energy: 0.0,
            kappa: 0.1,
            xi: 0.05,
            bootstrap: 1000,
            test_function: TestFunction::bump_product(2.0),
            symmetry: SymmetryClass::RealSymmetric,
            deformation: DeformationSpec::Zero,
            t_fractions: vec![0.0, 1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0],
            smoothing_eta: 0.05,
            grid_points: 201,
            free_convolution_t: 0.05,
            deformed_model: None,
            stderr_tolerance: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub model: Option<PairModelSpec>,
    pub n_list: Vec<usize>,
    #[serde(default)]
    pub alpha_list: Option<Vec<f64>>,
    /// `alpha = N^{-gamma}`; takes precedence over `alpha_list`.
    #[serde(default)]
    pub gamma_list: Option<Vec<f64>>,
    pub mc_samples: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub params: ExperimentParams,
}

/// One `(N, alpha)` cell of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub n: usize,
    pub alpha: f64,
    pub gamma: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, n_list: Vec<usize>, mc_samples: usize, master_seed: u64) -> Self {
        ExperimentConfig {
            schema: SCHEMA_VERSION,
            experiment,
            model: None,
            n_list,
            alpha_list: None,
            gamma_list: None,
            mc_samples,
            master_seed,
            output_dir: None,
            params: ExperimentParams::default(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical JSON with `output_dir` cleared, so the same
    /// experiment written to two places has one hash.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        crate::model::hash_json(&c)
    }

    pub fn grid(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &n in &self.n_list {
            if let Some(gammas) = &self.gamma_list {
                for &g in gammas {
                    out.push(GridPoint { n, alpha: (n as f64).powf(-g), gamma: Some(g) });
                }
            } else if let Some(alphas) = &self.alpha_list {
                for &a in alphas {
                    out.push(GridPoint { n, alpha: a, gamma: None });
                }
            } else {
                let alpha = self.model.as_ref().map_or(f64::NAN, |m| m.profile.alpha);
                out.push(GridPoint { n, alpha, gamma: None });
            }
        }
        out
    }

    /// The configured model at size `n`, or the default for the experiment.
    pub fn model_at(&self, n: usize) -> PairModelSpec {
        match &self.model {
            Some(m) => m.with_n(n),
            None => PairModelSpec::wigner(n, self.params.symmetry, 0.9, 0.1),
        }
    }

    /// Schema, ranges, resource caps and every referenced model spec.
    pub fn validate(&self, allow_large: bool) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.schema != SCHEMA_VERSION {
            return bad(format!("unsupported schema {}, expected {SCHEMA_VERSION}", self.schema));
        }
        if self.n_list.is_empty() || self.n_list.iter().any(|&n| n < 2) {
            return bad("n_list must be nonempty with every N >= 2".into());
        }
        if self.mc_samples < 2 {
            return bad("mc_samples must be at least 2".into());
        }
        if !allow_large {
            if let Some(&n) = self.n_list.iter().find(|&&n| n > DEFAULT_N_CAP) {
                return Err(Error::ResourceGuard(format!("N = {n} exceeds {DEFAULT_N_CAP}; pass --allow-large")));
            }
            if self.mc_samples > DEFAULT_SAMPLE_CAP {
                return Err(Error::ResourceGuard(format!(
                    "mc_samples = {} exceeds {DEFAULT_SAMPLE_CAP}; pass --allow-large",
                    self.mc_samples
                )));
            }
        }
        if let Some(g) = &self.gamma_list {
            if g.is_empty() || g.iter().any(|&x| !(0.0..=GAMMA_MAX).contains(&x)) {
                return bad(format!("gamma_list must be nonempty within [0, {GAMMA_MAX}]"));
            }
        }
        if let Some(a) = &self.alpha_list {
            if a.is_empty() || a.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return bad("alpha_list must be nonempty within [0, 1]".into());
            }
        }
        let p = &self.params;
        if !(p.kappa > 0.0) || !(p.smoothing_eta > 0.0) || !(p.xi >= 0.0) || p.grid_points < 2 {
            return bad("params: kappa, smoothing_eta must be positive, xi nonnegative, grid_points >= 2".into());
        }
        match self.experiment {
            ExperimentKind::ThresholdSweep | ExperimentKind::OptimalityDemo | ExperimentKind::TraceCorrIdentity => {
                if self.alpha_list.is_none() && self.gamma_list.is_none() {
                    return bad("this experiment needs alpha_list or gamma_list".into());
                }
            }
            ExperimentKind::GftContinuity => {
                if p.t_fractions.is_empty() || p.t_fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
                    return bad("t_fractions must lie in [0, 1]".into());
                }
            }
            ExperimentKind::MdeValidation => {}
        }
        let constants = ValidationConstants::default();
        let mut specs: Vec<PairModelSpec> = Vec::new();
        if matches!(self.experiment, ExperimentKind::GftContinuity | ExperimentKind::MdeValidation) {
            specs.extend(self.n_list.iter().map(|&n| self.model_at(n)));
        }
        if let Some(d) = &p.deformed_model {
            specs.extend(self.n_list.iter().map(|&n| d.with_n(n)));
        }
        for spec in &specs {
            let report = validate_spec(spec, constants);
            if !report.passed() {
                let msg: Vec<String> = report.failures().map(|c| format!("{}: {}", c.name, c.detail)).collect();
                return Err(Error::InvalidSpec(format!("N = {}: {}", spec.n, msg.join("; "))));
            }
        }
        Ok(())
    }
}

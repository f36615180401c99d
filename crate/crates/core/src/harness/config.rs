use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::denoiser::{Denoiser, DenoiserSchedule, ParamPolicy};
use crate::error::{Error, Result};
use crate::model::{NoiseSpec, Prior};
use crate::observables::{Observable, DEFAULT_DECOUPLING_TUPLES};
use crate::quadrature::QuadratureConfig;
use crate::recursion::{Variant, DEFAULT_EDGE_CAP};
use crate::state_evolution::{CsSpec, DEFAULT_FIXED_POINT_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Se,
    Amp,
    Ist,
    Ensemble,
    Symmetric,
    MpCompare,
    Decouple,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Se => "se",
            Mode::Amp => "amp",
            Mode::Ist => "ist",
            Mode::Ensemble => "ensemble",
            Mode::Symmetric => "symmetric",
            Mode::MpCompare => "mp-compare",
            Mode::Decouple => "decouple",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Number of measurements.
    pub n: usize,
    /// Signal dimension.
    #[serde(rename = "N")]
    pub big_n: usize,
    pub sigma2: f64,
}

impl ModelConfig {
    pub fn delta(&self) -> f64 {
        self.n as f64 / self.big_n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiserKind {
    SoftThreshold,
    Linear,
    Tanh,
    Mmse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    Fixed { values: Vec<f64> },
    ScaledTau { alpha: f64 },
    StateEvolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    pub kind: DenoiserKind,
    pub schedule: ScheduleConfig,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            kind: DenoiserKind::SoftThreshold,
            schedule: ScheduleConfig::ScaledTau { alpha: 1.5 },
        }
    }
}

impl DenoiserConfig {
    pub fn schedule(&self, prior: &Prior<f64>) -> Result<DenoiserSchedule<f64>> {
        let policy = match &self.schedule {
            ScheduleConfig::Fixed { values } => {
                if values.is_empty() {
                    return Err(Error::Config("denoiser.schedule.values must not be empty".into()));
                }
                ParamPolicy::Fixed(values.clone())
            }
            ScheduleConfig::ScaledTau { alpha } => ParamPolicy::ScaledTau(*alpha),
            ScheduleConfig::StateEvolution => ParamPolicy::StateEvolution,
        };
        let ok = matches!(
            (self.kind, &policy),
            (_, ParamPolicy::Fixed(_))
                | (DenoiserKind::SoftThreshold, ParamPolicy::ScaledTau(_))
                | (DenoiserKind::Linear | DenoiserKind::Tanh | DenoiserKind::Mmse, ParamPolicy::StateEvolution)
        );
        if !ok {
            return Err(Error::Config(format!(
                "policy \"{}\" is not available for denoiser kind {:?}",
                policy.label(),
                self.kind
            )));
        }
        Ok(match self.kind {
            DenoiserKind::SoftThreshold => DenoiserSchedule::SoftThreshold(policy),
            DenoiserKind::Linear => DenoiserSchedule::Linear(policy),
            DenoiserKind::Tanh => DenoiserSchedule::Tanh(policy),
            DenoiserKind::Mmse => DenoiserSchedule::Mmse {
                prior: prior.clone(),
                policy,
            },
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SymmetricConfig {
    /// `<m^1, m^1>`; the initial vector is constant.
    pub tau1_sq: f64,
}

impl Default for SymmetricConfig {
    fn default() -> Self {
        Self { tau1_sq: 1.0 }
    }
}

/// Bounded Lipschitz factor `psi_s(x, x0)` for the decoupling check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FactorSpec {
    /// `clamp(x, -bound, bound)`
    Clip { bound: f64 },
    /// `clamp(x - x0, -bound, bound)`
    ClippedError { bound: f64 },
    /// `clamp(eta(x; theta), -bound, bound)`
    ClippedSoftThreshold { theta: f64, bound: f64 },
}

impl FactorSpec {
    pub fn eval(&self, x: f64, x0: f64) -> f64 {
        match *self {
            FactorSpec::Clip { bound } => x.clamp(-bound, bound),
            FactorSpec::ClippedError { bound } => (x - x0).clamp(-bound, bound),
            FactorSpec::ClippedSoftThreshold { theta, bound } => {
                let s = if x > theta {
                    x - theta
                } else if x < -theta {
                    x + theta
                } else {
                    0.0
                };
                s.clamp(-bound, bound)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let (bound, theta) = match *self {
            FactorSpec::Clip { bound } | FactorSpec::ClippedError { bound } => (bound, 0.0),
            FactorSpec::ClippedSoftThreshold { theta, bound } => (bound, theta),
        };
        if bound > 0.0 && bound.is_finite() && theta >= 0.0 && theta.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid decoupling factor {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoupleConfig {
    /// One factor per coordinate of the tuple, so `ell = factors.len()`.
    pub factors: Vec<FactorSpec>,
    pub tuples: usize,
}

impl Default for DecoupleConfig {
    fn default() -> Self {
        let f = FactorSpec::ClippedSoftThreshold {
            theta: 0.1,
            bound: 1.0,
        };
        Self {
            factors: vec![f.clone(), f],
            tuples: DEFAULT_DECOUPLING_TUPLES,
        }
    }
}

fn default_replicates() -> usize {
    1
}

fn default_observables() -> Vec<String> {
    vec!["mse".into()]
}

fn default_tol() -> f64 {
    DEFAULT_FIXED_POINT_TOLERANCE
}

fn default_edge_cap() -> usize {
    DEFAULT_EDGE_CAP
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub model: ModelConfig,
    pub prior: Prior<f64>,
    /// Defaults to Gaussian noise of variance `model.sigma2`.
    #[serde(default)]
    pub noise: Option<NoiseSpec<f64>>,
    #[serde(default)]
    pub denoiser: DenoiserConfig,
    /// Number of iterations `T`.
    pub iterations: usize,
    /// Number of replicates `R`.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_observables")]
    pub observables: Vec<String>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    /// Worker threads; the rayon default when absent.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_tol")]
    pub fixed_point_tol: f64,
    /// Algorithm run by `ensemble` mode.
    #[serde(default)]
    pub algorithm: Option<Variant>,
    #[serde(default = "default_edge_cap")]
    pub mp_edge_cap: usize,
    #[serde(default)]
    pub symmetric: SymmetricConfig,
    #[serde(default)]
    pub decouple: DecoupleConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.model.n == 0 || self.model.big_n == 0 {
            return bad(format!(
                "model.n and model.N must be >= 1, got {} and {}",
                self.model.n, self.model.big_n
            ));
        }
        if !(self.model.sigma2 >= 0.0 && self.model.sigma2.is_finite()) {
            return bad(format!("model.sigma2 must be >= 0, got {}", self.model.sigma2));
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be >= 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be >= 1".into());
        }
        if !(self.fixed_point_tol > 0.0) {
            return bad("fixed_point_tol must be positive".into());
        }
        self.prior.validate().map_err(|e| Error::Config(format!("prior: {e}")))?;
        if let Some(noise) = &self.noise {
            noise.validate().map_err(|e| Error::Config(format!("noise: {e}")))?;
            let v = noise.variance();
            if (v - self.model.sigma2).abs() > 1e-12 * (1.0 + v.abs()) {
                return bad(format!(
                    "noise second moment {v} does not match model.sigma2 = {}",
                    self.model.sigma2
                ));
            }
        }
        self.quadrature.validate().map_err(|e| Error::Config(format!("quadrature: {e}")))?;
        self.parsed_observables()?;
        self.denoiser.schedule(&self.prior)?;
        if self.mode == Mode::Symmetric {
            self.symmetric_denoiser()?;
            if !(self.symmetric.tau1_sq >= 0.0 && self.symmetric.tau1_sq.is_finite()) {
                return bad("symmetric.tau1_sq must be >= 0".into());
            }
        }
        if self.mode == Mode::Decouple {
            let ell = self.decouple.factors.len();
            if ell < 2 {
                return bad(format!("decouple.factors needs at least 2 entries, got {ell}"));
            }
            if ell > self.model.big_n {
                return bad(format!("decouple.factors has {ell} entries but N = {}", self.model.big_n));
            }
            if self.decouple.tuples == 0 {
                return bad("decouple.tuples must be >= 1".into());
            }
            for f in &self.decouple.factors {
                f.validate()?;
            }
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        self.model.delta()
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec<f64>> {
        match &self.noise {
            Some(n) => Ok(n.clone()),
            None => NoiseSpec::gaussian(self.model.sigma2),
        }
    }

    pub fn cs_spec(&self) -> Result<CsSpec<f64>> {
        CsSpec::new(self.prior.clone(), self.model.sigma2, self.delta())
    }

    pub fn parsed_observables(&self) -> Result<Vec<Observable<f64>>> {
        if self.observables.is_empty() {
            return Err(Error::Config("observables must not be empty".into()));
        }
        self.observables.iter().map(|s| Observable::parse(s)).collect()
    }

    /// The time-invariant `f` of the symmetric iteration: the first value of
    /// a fixed schedule.
    pub fn symmetric_denoiser(&self) -> Result<Denoiser<f64>> {
        match &self.denoiser.schedule {
            ScheduleConfig::Fixed { .. } => self
                .denoiser
                .schedule(&self.prior)?
                .resolve(0, 1.0, &self.prior)
                .map_err(|e| Error::Config(format!("denoiser: {e}"))),
            _ => Err(Error::Config(
                "symmetric mode needs a fixed denoiser schedule".into(),
            )),
        }
    }

    /// The algorithm run by the ensemble modes.
    pub fn variant(&self) -> Variant {
        match self.mode {
            Mode::Ist => Variant::Ist,
            Mode::Ensemble => self.algorithm.unwrap_or(Variant::Amp),
            _ => Variant::Amp,
        }
    }
}

/// Parses and validates a JSON config. Unknown keys, missing fields and
/// type mismatches are rejected with the offending name.
pub fn parse_config(text: &[u8]) -> Result<ExperimentConfig> {
    let text = std::str::from_utf8(text).map_err(|e| Error::Config(format!("config is not UTF-8: {e}")))?;
    let cfg: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

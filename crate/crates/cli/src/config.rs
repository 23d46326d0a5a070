//! Experiment configuration files.
//!
//! A config is a TOML document. Every key is optional; missing keys take the
//! experimental defaults (`M = 10`, `T = 2000`, `nu1 = 1`, `rho = 0.5`,
//! `c = 0.1`, `c1 = 1`, `delta = 1/M`, Garland, seeds 0..=9). Unknown keys are
//! rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fedpne::harness::oracle::DEFAULT_RESOLUTION;
use fedpne::harness::ExperimentSetup;
use fedpne::objectives::{
    normalize_objective, GlobalObjective, InfectionMetric, NoiseKind, NoiseModel, SeirParams,
};
use fedpne::partition::{PartitionSpec, SplitPolicy};
use fedpne::privacy::{dp_constants, DpConfig};
use fedpne::protocol::ServerConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
    #[error("cannot build experiment: {0}")]
    Build(String),
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Fedpne,
    DpFedpne,
    #[serde(alias = "grid")]
    GridBaseline,
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fedpne" => Ok(Algorithm::Fedpne),
            "dp-fedpne" => Ok(Algorithm::DpFedpne),
            "grid" | "grid-baseline" => Ok(Algorithm::GridBaseline),
            other => Err(format!("unknown algorithm `{other}`")),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Fedpne => "fedpne",
            Algorithm::DpFedpne => "dp-fedpne",
            Algorithm::GridBaseline => "grid-baseline",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Experimental,
    Theory,
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "experimental" => Ok(Preset::Experimental),
            "theory" => Ok(Preset::Theory),
            other => Err(format!("unknown preset `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveName {
    Garland,
    DoubleSine,
    Seir,
}

impl FromStr for ObjectiveName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "garland" => Ok(ObjectiveName::Garland),
            "double-sine" | "double_sine" | "doublesine" => Ok(ObjectiveName::DoubleSine),
            "seir" => Ok(ObjectiveName::Seir),
            other => Err(format!("unknown objective `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricName {
    EverInfected,
    FinalInfectious,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeirSection {
    pub beta: f64,
    pub gamma: f64,
    pub sigma_e: f64,
    pub population: f64,
    pub v_full: f64,
    pub alpha_full: f64,
    pub e0: f64,
    pub i0: f64,
    pub r0: f64,
    pub horizon_days: f64,
    pub step_days: f64,
    pub metric: MetricName,
}

impl Default for SeirSection {
    fn default() -> Self {
        let p = SeirParams::default();
        SeirSection {
            beta: p.beta,
            gamma: p.gamma,
            sigma_e: p.sigma_e,
            population: p.population,
            v_full: p.v_full,
            alpha_full: p.alpha_full,
            e0: p.e0,
            i0: p.i0,
            r0: p.r0,
            horizon_days: p.horizon_days,
            step_days: p.step_days,
            metric: MetricName::EverInfected,
        }
    }
}

impl SeirSection {
    pub fn params(&self) -> SeirParams {
        SeirParams {
            beta: self.beta,
            gamma: self.gamma,
            sigma_e: self.sigma_e,
            population: self.population,
            v_full: self.v_full,
            alpha_full: self.alpha_full,
            s0: self.population - self.e0 - self.i0 - self.r0,
            e0: self.e0,
            i0: self.i0,
            r0: self.r0,
            horizon_days: self.horizon_days,
            step_days: self.step_days,
        }
    }

    pub fn metric(&self) -> InfectionMetric {
        match self.metric {
            MetricName::EverInfected => InfectionMetric::EverInfected,
            MetricName::FinalInfectious => InfectionMetric::FinalInfectious,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    #[serde(default = "default_objective")]
    pub name: ObjectiveName,
    #[serde(default = "default_rho1")]
    pub rho1: f64,
    #[serde(default = "default_rho2")]
    pub rho2: f64,
    /// Rescale the objective to `[0, 1]` with the grid oracle.
    #[serde(default = "yes")]
    pub normalize: bool,
    /// Points per axis for normalization; defaults depend on the objective.
    #[serde(default)]
    pub resolution: Option<usize>,
    #[serde(default)]
    pub seir: SeirSection,
}

fn default_objective() -> ObjectiveName {
    ObjectiveName::Garland
}
fn default_rho1() -> f64 {
    0.3
}
fn default_rho2() -> f64 {
    0.8
}
fn yes() -> bool {
    true
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        ObjectiveSection {
            name: default_objective(),
            rho1: default_rho1(),
            rho2: default_rho2(),
            normalize: true,
            resolution: None,
            seir: SeirSection::default(),
        }
    }
}

impl ObjectiveSection {
    /// SEIR evaluations integrate an ODE, so its grid is much coarser.
    pub fn default_resolution(name: ObjectiveName) -> usize {
        match name {
            ObjectiveName::Seir => 2001,
            _ => DEFAULT_RESOLUTION,
        }
    }

    pub fn raw_objective(&self) -> Result<GlobalObjective, ConfigError> {
        match self.name {
            ObjectiveName::Garland => Ok(GlobalObjective::garland()),
            ObjectiveName::DoubleSine => GlobalObjective::double_sine(self.rho1, self.rho2)
                .map_err(|e| invalid("objective.rho1", e.to_string())),
            ObjectiveName::Seir => GlobalObjective::seir(self.seir.params(), self.seir.metric())
                .map_err(|e| invalid("objective.seir", e.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitName {
    RoundRobin,
    SeededRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionSection {
    pub split: SplitName,
    pub split_seed: u64,
}

impl Default for PartitionSection {
    fn default() -> Self {
        PartitionSection {
            split: SplitName::RoundRobin,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseName {
    None,
    BoundedUniform,
    TruncatedGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub kind: NoiseName,
    pub scale: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            kind: NoiseName::BoundedUniform,
            scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpSection {
    pub enabled: bool,
    pub epsilon: f64,
    pub delta: f64,
}

impl Default for DpSection {
    fn default() -> Self {
        DpSection {
            enabled: false,
            epsilon: 1.0,
            delta: 0.05,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FstarSection {
    /// Grid points per axis for the oracle.
    pub resolution: Option<usize>,
    /// Use this optimum instead of the oracle.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into() }
    }
}

/// The file as written, before defaults that depend on other keys are filled.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub algorithm: Option<Algorithm>,
    pub preset: Option<Preset>,
    #[serde(alias = "M")]
    pub clients: Option<usize>,
    #[serde(alias = "T")]
    pub horizon: Option<u64>,
    #[serde(alias = "k")]
    pub arity: Option<u32>,
    pub nu1: Option<f64>,
    pub rho: Option<f64>,
    pub c: Option<f64>,
    pub c1: Option<f64>,
    pub delta: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub perturb_scale: Option<f64>,
    /// Arms per axis for the meshgrid baseline.
    pub grid_arms: Option<usize>,
    #[serde(default)]
    pub objective: ObjectiveSection,
    #[serde(default)]
    pub partition: PartitionSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub dp: DpSection,
    #[serde(default)]
    pub fstar: FstarSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub preset: Preset,
    pub clients: usize,
    pub horizon: u64,
    pub arity: u32,
    pub nu1: f64,
    pub rho: f64,
    pub c: f64,
    pub c1: f64,
    pub delta: f64,
    pub seeds: Vec<u64>,
    pub perturb_scale: f64,
    pub grid_arms: usize,
    pub objective: ObjectiveSection,
    pub partition: PartitionSection,
    pub noise: NoiseSection,
    pub dp: DpSection,
    pub fstar: FstarSection,
    pub output: OutputSection,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let offset = e.span().map_or(0, |s| s.start).min(text.len());
            let before = &text[..offset];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |j| j + 1) + 1;
            ConfigError::Parse {
                line,
                column,
                message: e.message().trim().replace('\n', " "),
            }
        })
    }

    /// Fills defaults and validates.
    pub fn resolve(self) -> Result<ExperimentConfig, ConfigError> {
        let mut algorithm = self.algorithm.unwrap_or(Algorithm::Fedpne);
        let mut dp = self.dp.clone();
        match algorithm {
            Algorithm::DpFedpne => dp.enabled = true,
            Algorithm::Fedpne if dp.enabled => algorithm = Algorithm::DpFedpne,
            Algorithm::GridBaseline if dp.enabled => {
                return Err(invalid("dp.enabled", "the grid baseline has no private variant"))
            }
            _ => {}
        }
        let preset = self.preset.unwrap_or(Preset::Experimental);
        let clients = self.clients.unwrap_or(10);
        if clients == 0 {
            return Err(invalid("clients", "M must be at least 1"));
        }
        let (preset_c, preset_c1) = match preset {
            Preset::Experimental => (0.1, 1.0),
            Preset::Theory => dp_constants(0.0, clients),
        };
        let mut objective = self.objective.clone();
        objective
            .resolution
            .get_or_insert(ObjectiveSection::default_resolution(objective.name));
        let mut fstar = self.fstar.clone();
        if fstar.value.is_none() {
            fstar
                .resolution
                .get_or_insert(ObjectiveSection::default_resolution(objective.name));
        }
        let cfg = ExperimentConfig {
            algorithm,
            preset,
            clients,
            horizon: self.horizon.unwrap_or(2000),
            arity: self.arity.unwrap_or(2),
            nu1: self.nu1.unwrap_or(1.0),
            rho: self.rho.unwrap_or(0.5),
            c: self.c.unwrap_or(preset_c),
            c1: self.c1.unwrap_or(preset_c1),
            delta: self.delta.unwrap_or(1.0 / clients as f64),
            seeds: self.seeds.unwrap_or_else(|| (0..10).collect()),
            perturb_scale: self.perturb_scale.unwrap_or(1.0),
            grid_arms: self.grid_arms.unwrap_or(10),
            objective,
            partition: self.partition,
            noise: self.noise,
            dp,
            fstar,
            output: self.output,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn server(&self) -> ServerConfig {
        ServerConfig {
            arity: self.arity,
            nu1: self.nu1,
            rho: self.rho,
            c: self.c,
            c1: self.c1,
            delta: self.delta,
            horizon: self.horizon,
            clients: self.clients,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.arity < 2 {
            return Err(invalid("arity", "k must be at least 2"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(invalid("rho", "ρ must lie in (0,1)"));
        }
        if !(self.nu1 > 0.0 && self.nu1.is_finite()) {
            return Err(invalid("nu1", "ν₁ must be > 0"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid("c", "c must be > 0"));
        }
        if !(self.c1 > 0.0 && self.c1.is_finite()) {
            return Err(invalid("c1", "c₁ must be > 0"));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(invalid("delta", "δ must lie in (0,1]"));
        }
        if self.horizon == 0 {
            return Err(invalid("horizon", "T must be at least 1"));
        }
        if !(self.server().log_term() > 0.0) {
            return Err(invalid("c1", "log(c₁T/δ) must be > 0"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        if !(self.perturb_scale >= 0.0 && self.perturb_scale.is_finite()) {
            return Err(invalid("perturb_scale", "must be finite and >= 0"));
        }
        if !(self.noise.scale >= 0.0 && self.noise.scale.is_finite()) {
            return Err(invalid("noise.scale", "must be finite and >= 0"));
        }
        if self.algorithm == Algorithm::GridBaseline && self.grid_arms == 0 {
            return Err(invalid("grid_arms", "K must be at least 1"));
        }
        if self.dp.enabled {
            DpConfig::new(self.dp.epsilon, self.dp.delta).map_err(|e| match e {
                fedpne::privacy::PrivacyError::Epsilon(_) => invalid("dp.epsilon", e.to_string()),
                fedpne::privacy::PrivacyError::Delta(_) => invalid("dp.delta", e.to_string()),
            })?;
        }
        if let Some(v) = self.fstar.value {
            if !v.is_finite() {
                return Err(invalid("fstar.value", "must be finite"));
            }
        }
        if self.objective.name == ObjectiveName::DoubleSine {
            self.objective.raw_objective()?;
        }
        if self.objective.name == ObjectiveName::Seir {
            self.objective
                .seir
                .params()
                .validate()
                .map_err(|e| invalid("objective.seir", e.to_string()))?;
        }
        Ok(())
    }

    pub fn privacy(&self) -> Option<DpConfig> {
        if self.dp.enabled {
            DpConfig::new(self.dp.epsilon, self.dp.delta).ok()
        } else {
            None
        }
    }

    pub fn noise_model(&self) -> NoiseModel {
        let kind = match self.noise.kind {
            NoiseName::None => NoiseKind::None,
            NoiseName::BoundedUniform => NoiseKind::BoundedUniform,
            NoiseName::TruncatedGaussian => NoiseKind::TruncatedGaussian,
        };
        NoiseModel {
            kind,
            scale: self.noise.scale,
        }
    }

    pub fn partition_spec(&self, dimension: usize) -> Result<PartitionSpec, ConfigError> {
        let policy = match self.partition.split {
            SplitName::RoundRobin => SplitPolicy::RoundRobin,
            SplitName::SeededRandom => SplitPolicy::SeededRandom {
                seed: self.partition.split_seed,
            },
        };
        PartitionSpec::unit_cube(self.arity, dimension, policy)
            .map_err(|e| ConfigError::Build(e.to_string()))
    }

    /// Global objective used for rewards and regret.
    pub fn objective(&self) -> Result<GlobalObjective, ConfigError> {
        let raw = self.objective.raw_objective()?;
        if !self.objective.normalize {
            if !raw.unit_range() {
                return Err(invalid(
                    "objective.normalize",
                    format!("`{}` must be normalized to serve rewards", raw.descriptor().name),
                ));
            }
            return Ok(raw);
        }
        let resolution = self
            .objective
            .resolution
            .unwrap_or(ObjectiveSection::default_resolution(self.objective.name));
        normalize_objective(&raw, resolution).map_err(|e| ConfigError::Build(e.to_string()))
    }

    /// Builds the run setup, computing f* with the oracle unless given.
    pub fn setup(&self) -> Result<ExperimentSetup, ConfigError> {
        let objective = self.objective()?;
        let fstar = match self.fstar.value {
            Some(v) => v,
            None => {
                let resolution = self
                    .fstar
                    .resolution
                    .unwrap_or(ObjectiveSection::default_resolution(self.objective.name));
                fedpne::harness::estimate_fstar(&objective, resolution)
                    .map_err(|e| ConfigError::Build(e.to_string()))?
                    .0
            }
        };
        Ok(ExperimentSetup {
            server: self.server(),
            partition: self.partition_spec(objective.dimension())?,
            objective,
            perturb_scale: self.perturb_scale,
            noise: self.noise_model(),
            privacy: self.privacy(),
            fstar,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved config serializes")
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    load_raw(path)?.resolve()
}

pub fn load_raw(path: &Path) -> Result<RawConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RawConfig::parse(&text)
}

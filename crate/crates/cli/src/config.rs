//! Run configuration: one JSON document with a versioned schema.

use std::path::{Path, PathBuf};

use dsi_core::esmda::EsmdaConfig;
use dsi_core::faultgeom::FaultPlane;
use dsi_core::forward::{FlowProps, Scenario, Stepping, WellSpec};
use dsi_core::geostat::{Overburden, PriorRanges, ScalarParams, VariogramSpec};
use dsi_core::grid::Grid;
use dsi_core::latentparam::{OmegaStage, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub prior: u64,
    pub truth: u64,
    pub observation: u64,
    pub training: u64,
    pub esmda: u64,
    pub kmeans: u64,
    pub generate: u64,
}

impl Seeds {
    /// Every seed replaced by a value derived from `base`.
    pub fn overridden(base: u64) -> Self {
        Self {
            prior: base,
            truth: base.wrapping_add(1),
            observation: base.wrapping_add(2),
            training: base.wrapping_add(3),
            esmda: base.wrapping_add(4),
            kmeans: base.wrapping_add(5),
            generate: base.wrapping_add(6),
        }
    }
}

/// The synthetic truth: a field realization from a held-out seed, with
/// optionally pinned scalar parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub scalars: Option<ScalarParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorConfig {
    /// Fixed `(i, j)` columns.
    Columns { columns: Vec<(usize, usize)>, layers: Vec<usize> },
    /// Greedy placement over every `stride`-th column.
    Place { n_wells: usize, layers: Vec<usize>, stride: usize },
}

impl MonitorConfig {
    pub fn layers(&self) -> &[usize] {
        match self {
            Self::Columns { layers, .. } | Self::Place { layers, .. } => layers,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Pca,
    Vae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterizerConfig {
    pub kind: ParamKind,
    pub latent_dim: usize,
    /// PCA components seen by the VAE (default: all of the training span).
    #[serde(default)]
    pub front_components: Option<usize>,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub omega_schedule: Vec<OmegaStage>,
    #[serde(default = "yes")]
    pub whiten_latent: bool,
}

fn yes() -> bool {
    true
}

impl ParameterizerConfig {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            latent_dim: self.latent_dim,
            hidden: self.hidden.clone(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            omega_schedule: self.omega_schedule.clone(),
            seed,
            whiten_latent: self.whiten_latent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsmdaSection {
    pub n_ensemble: usize,
    pub alphas: Vec<f64>,
    pub normalize_inflation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Output root, relative to the config file unless absolute.
    pub output_dir: PathBuf,
    pub grid: Grid,
    pub variogram: VariogramSpec,
    pub prior_ranges: PriorRanges,
    pub wells: Vec<WellSpec>,
    pub faults: Vec<FaultPlane>,
    pub flow: FlowProps,
    pub overburden: Overburden,
    pub stepping: Stepping,
    pub hm_times: Vec<f64>,
    pub pred_times: Vec<f64>,
    pub n_realizations: usize,
    pub split: Split,
    pub truth: TruthConfig,
    pub monitors: MonitorConfig,
    pub parameterizer: ParameterizerConfig,
    pub esmda: EsmdaSection,
    pub joint_inversion: bool,
    pub n_representatives: usize,
    pub seeds: Seeds,
}

fn bad<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Validation(msg.into()))
}

impl RunConfig {
    /// Parses and validates a config file; `output_dir` is resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        if cfg.output_dir.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let v = |r: dsi_core::Result<()>| r.map_err(|e| CliError::Validation(e.to_string()));
        v(self.grid.validate())?;
        v(self.variogram.validate())?;
        v(self.prior_ranges.validate())?;
        v(self.scenario().map(|_| ()))?;
        let s = &self.split;
        if s.train + s.validation + s.test != self.n_realizations {
            return bad("split sizes must add up to n_realizations");
        }
        if self.n_realizations == 0 {
            return bad("n_realizations must be positive");
        }
        if self.hm_times.is_empty() {
            return bad("at least one history-matching time is required");
        }
        if let Some(t) = &self.truth.scalars {
            if !t.within(&self.prior_ranges) {
                return bad("truth scalars lie outside the prior ranges");
            }
        }
        let nz = self.grid.nz;
        if self.monitors.layers().is_empty() || self.monitors.layers().iter().any(|&k| k >= nz) {
            return bad("monitor layers must be a non-empty subset of the grid layers");
        }
        match &self.monitors {
            MonitorConfig::Columns { columns, .. } => {
                for &(i, j) in columns {
                    if i >= self.grid.nx || j >= self.grid.ny {
                        return bad(format!("monitor column ({i}, {j}) outside the grid"));
                    }
                    if self.wells.iter().any(|w| w.i == i && w.j == j) {
                        return bad(format!("monitor column ({i}, {j}) coincides with an injector"));
                    }
                }
            }
            MonitorConfig::Place { stride, .. } => {
                if *stride == 0 {
                    return bad("monitor placement stride must be positive");
                }
            }
        }
        Ok(())
    }

    /// Constraints that only matter once a parameterizer is trained and
    /// inverted; prior generation and simulation run without them.
    pub fn validate_inversion(&self) -> CliResult<()> {
        let v = |r: dsi_core::Result<()>| r.map_err(|e| CliError::Validation(e.to_string()));
        let s = &self.split;
        if s.train < 2 || s.test == 0 {
            return bad("split needs at least two training and one test realization");
        }
        let p = &self.parameterizer;
        if p.latent_dim == 0 || p.latent_dim > s.train - 1 {
            return bad(format!("latent_dim must lie in 1..={}", s.train - 1));
        }
        if let Some(k) = p.front_components {
            if k < p.latent_dim || k > s.train - 1 {
                return bad("front_components must lie between latent_dim and train − 1");
            }
        }
        if p.kind == ParamKind::Vae {
            v(p.train_config(0).validate())?;
        }
        let e = self.esmda_config();
        v(e.schedule().map(|_| ()))?;
        if e.n_ensemble > self.n_realizations {
            return bad("n_ensemble cannot exceed the number of prior realizations");
        }
        if self.n_representatives == 0 || self.n_representatives > e.n_ensemble {
            return bad("n_representatives must lie in 1..=n_ensemble");
        }
        Ok(())
    }

    pub fn scenario(&self) -> dsi_core::Result<Scenario> {
        let faults = self
            .faults
            .iter()
            .map(|p| p.to_spec(&self.grid))
            .collect::<dsi_core::Result<Vec<_>>>()?;
        let sc = Scenario {
            grid: self.grid,
            wells: self.wells.clone(),
            faults,
            kz_over_kx: self.variogram.kz_over_kx,
            flow: self.flow,
            overburden: self.overburden,
            stepping: self.stepping,
            times: self.hm_times.iter().chain(&self.pred_times).copied().collect(),
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn esmda_config(&self) -> EsmdaConfig {
        EsmdaConfig {
            n_ensemble: self.esmda.n_ensemble,
            alphas: self.esmda.alphas.clone(),
            seed: self.seeds.esmda,
            normalize_inflation: self.esmda.normalize_inflation,
        }
    }

    /// Realization indices of the training, validation and test splits.
    pub fn split_indices(&self) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let s = &self.split;
        (
            (0..s.train).collect(),
            (s.train..s.train + s.validation).collect(),
            (s.train + s.validation..self.n_realizations).collect(),
        )
    }

    pub fn out(&self, rel: &str) -> PathBuf {
        self.output_dir.join(rel)
    }
}

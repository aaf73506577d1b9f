//! JSON run configuration with `data`, `model`, `algorithm` and `output`
//! sections plus optional per-subcommand sections.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::effects::{Model, ModelSpec, Statistic};
use crate::error::{Error, Result};
use crate::estimation::{EstimationSettings, Phase2Schedule};
use crate::inference::{DfMode, Penalty};
use crate::network::{load_panel, PanelData};
use crate::simulation::ParameterPoint;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub wave1: PathBuf,
    pub wave2: PathBuf,
    #[serde(default)]
    pub covariates: BTreeMap<String, PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub schedule: Phase2Schedule,
    pub phase1_replicates: usize,
    pub phase3_replicates: usize,
    pub seed: u64,
    pub workers: Option<usize>,
    /// Starting point of phase 2; defaults are derived from the data.
    pub start: Option<ParameterPoint>,
    /// Fixed parameter point for `simulate`, and for `test`, `gof` and `psc`
    /// in place of estimation.
    pub parameters: Option<ParameterPoint>,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        let e = EstimationSettings::default();
        AlgorithmConfig {
            schedule: e.schedule,
            phase1_replicates: e.phase1_replicates,
            phase3_replicates: e.phase3_replicates,
            seed: e.seed,
            workers: None,
            start: None,
            parameters: None,
        }
    }
}

impl AlgorithmConfig {
    pub fn settings(&self) -> EstimationSettings {
        EstimationSettings {
            schedule: self.schedule.clone(),
            phase1_replicates: self.phase1_replicates,
            phase3_replicates: self.phase3_replicates,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMode {
    /// One-sided test for a single dispersion statistic, quadratic form otherwise.
    #[default]
    Auto,
    Simple,
    Composite,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    /// Statistics that are zero-parameter under the null model; the
    /// out-degree dispersion when empty.
    pub statistics: Vec<Statistic>,
    pub mode: TestMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GofConfig {
    pub max_bin: usize,
    pub ridge: f64,
}

impl Default for GofConfig {
    fn default() -> Self {
        GofConfig {
            max_bin: 20,
            ridge: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PscModelConfig {
    pub label: String,
    pub model: ModelSpec,
    #[serde(default)]
    pub parameters: Option<ParameterPoint>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PscConfig {
    /// Compared models; the main model alone when empty.
    pub models: Vec<PscModelConfig>,
    pub penalty: Penalty,
    pub df: DfMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write the per-replicate phase-3 archive.
    pub archive: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            archive: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelSpec,
    #[serde(default)]
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub test: TestConfig,
    #[serde(default)]
    pub gof: GofConfig,
    #[serde(default)]
    pub psc: PscConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    /// Parses and validates a configuration; relative paths are resolved
    /// against the directory of the file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::from_json(&text, base)
    }

    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.data.wave1);
        resolve(&mut cfg.data.wave2);
        cfg.data.covariates.values_mut().for_each(resolve);
        resolve(&mut cfg.output.dir);
        cfg.validate_static()?;
        Ok(cfg)
    }

    fn validate_static(&self) -> Result<()> {
        self.model.validate()?;
        let a = &self.algorithm;
        a.schedule.validate()?;
        if a.phase1_replicates < 50 {
            return Err(Error::InvalidConfig(
                "phase1_replicates must be at least 50".into(),
            ));
        }
        if a.phase3_replicates < 1000 {
            return Err(Error::InvalidConfig(
                "phase3_replicates must be at least 1000".into(),
            ));
        }
        if a.workers == Some(0) {
            return Err(Error::InvalidConfig("workers must be positive".into()));
        }
        if !(self.gof.ridge >= 0.0) {
            return Err(Error::InvalidConfig("gof ridge must be nonnegative".into()));
        }
        let mut specs = vec![&self.model];
        specs.extend(self.psc.models.iter().map(|m| &m.model));
        for spec in specs {
            spec.validate()?;
            for e in spec.fixed.iter().chain(&spec.random) {
                if let Some(c) = e.covariate() {
                    if !self.data.covariates.contains_key(c) {
                        return Err(Error::MissingCovariate(c.to_string()));
                    }
                }
            }
        }
        for p in [&self.data.wave1, &self.data.wave2]
            .into_iter()
            .chain(self.data.covariates.values())
        {
            if !p.is_file() {
                return Err(Error::InvalidConfig(format!(
                    "data file {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn load_panel(&self) -> Result<PanelData> {
        let covs: Vec<(String, PathBuf)> = self
            .data
            .covariates
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        load_panel(&self.data.wave1, &self.data.wave2, &covs)
    }

    /// Compiles the main model and checks any configured parameter points.
    pub fn compile(&self, panel: &PanelData) -> Result<Model> {
        let model = Model::new(self.model.clone(), panel)?;
        for pp in [&self.algorithm.start, &self.algorithm.parameters]
            .into_iter()
            .flatten()
        {
            pp.validate(&model)?;
        }
        Ok(model)
    }
}

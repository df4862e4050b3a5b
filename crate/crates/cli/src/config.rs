use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stockops_core::{
    ColumnMap, CostModel, CvConfig, EvaluationProtocol, ForestConfig, ParamGrid, ParseMode,
    ScoreWeights,
};

use crate::CliError;

/// Declarative run configuration, read from TOML. Command-line flags
/// override the corresponding fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    /// Empty means every ticker found in the inputs.
    pub tickers: Vec<String>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub strict_labeling: bool,
    pub percent: bool,
    /// Worker threads; `None` lets rayon decide.
    pub threads: Option<usize>,
    pub parse_mode: ParseMode,
    pub columns: ColumnMap,
    pub grid: ParamGrid,
    pub costs: CostModel,
    pub forest: ForestConfig,
    pub weights: ScoreWeights,
    pub protocol: EvaluationProtocol,
    /// Ranking rows kept by `evaluate`; `None` keeps all.
    pub top: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            tickers: Vec::new(),
            out: PathBuf::from("."),
            seed: None,
            strict_labeling: false,
            percent: false,
            threads: None,
            parse_mode: ParseMode::Strict,
            columns: ColumnMap::default(),
            grid: ParamGrid::default(),
            costs: CostModel::default(),
            forest: ForestConfig::default(),
            weights: ScoreWeights::default(),
            protocol: EvaluationProtocol::default(),
            top: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::env(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::env(format!("bad config {}: {e}", path.display())))
    }

    pub fn check_inputs(&self) -> Result<(), CliError> {
        if self.inputs.is_empty() {
            return Err(CliError::env("no input files given"));
        }
        for p in &self.inputs {
            if !p.is_file() {
                return Err(CliError::env(format!("input not found: {}", p.display())));
            }
        }
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::env("a seed is required (--seed or `seed` in the config)"))
    }

    pub fn cv_config(&self) -> Result<CvConfig, CliError> {
        let mut forest = self.forest;
        forest.seed = self.require_seed()?;
        let mut cv = CvConfig::new(0, forest);
        cv.strict_labeling = self.strict_labeling;
        cv.weights = self.weights;
        Ok(cv)
    }
}

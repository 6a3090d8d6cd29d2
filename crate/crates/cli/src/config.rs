//! Run configuration read from TOML, command-line overrides and the
//! configuration hash.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use blockg_core::block::{Engine, IntegrationOptions, LaplaceMode};
use blockg_core::models::{EnumerationMode, PriorSpec};
use blockg_lab::scenarios::ScenarioOverrides;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// What a run does.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mode {
    Fit,
    Select,
    Predict,
    Experiment(String),
}

impl Mode {
    /// Whether the mode reads a data file.
    pub fn needs_data(&self) -> bool {
        !matches!(self, Mode::Experiment(_))
    }
}

impl FromStr for Mode {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "fit" => Ok(Mode::Fit),
            "select" => Ok(Mode::Select),
            "predict" => Ok(Mode::Predict),
            _ => match s.strip_prefix("experiment:") {
                Some(name) if !name.is_empty() => Ok(Mode::Experiment(name.to_string())),
                _ => Err(CliError::config(format!(
                    "unknown mode '{s}'; expected fit, select, predict or experiment:<name>"
                ))),
            },
        }
    }
}

/// Optional changes to the default integration settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationOverrides {
    /// Maximum number of integrand evaluations.
    pub budget: Option<usize>,
    pub tol: Option<f64>,
    pub qmc_tol: Option<f64>,
    pub engine: Option<Engine>,
    pub laplace: Option<LaplaceMode>,
}

/// Model space settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectSettings {
    /// Defaults to block subsets for the block hyper-g prior and all
    /// subsets otherwise.
    pub enumeration: Option<EnumerationMode>,
}

/// Prediction points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSettings {
    /// CSV with one column per predictor.
    pub points: PathBuf,
}

/// Contents of a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `fit`, `select`, `predict` or `experiment:<name>`.
    pub mode: String,
    /// CSV data file; relative paths start at the configuration's directory.
    pub data: Option<PathBuf>,
    /// Name of the response column.
    pub response: Option<String>,
    /// Predictor column names, one list per block.
    #[serde(default)]
    pub blocks: Vec<Vec<String>>,
    pub prior: Option<PriorSpec>,
    #[serde(default)]
    pub seed: u64,
    /// Output directory.
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Residualize each block on the preceding ones before fitting.
    #[serde(default)]
    pub orthogonalize: bool,
    #[serde(default)]
    pub integration: IntegrationOverrides,
    #[serde(default)]
    pub select: SelectSettings,
    pub predict: Option<PredictSettings>,
    /// Scenario changes for sequence experiments.
    #[serde(default)]
    pub experiment: ScenarioOverrides,
    /// Cap on replicates times summed sample sizes in simulation studies.
    pub simulation_budget: Option<usize>,
}

fn default_output() -> PathBuf {
    PathBuf::from("blockg-out")
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub orthogonalize: bool,
    /// Replaces both the integration and the simulation budget.
    pub budget: Option<usize>,
}

/// A validated configuration with paths resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub config: RunConfig,
    pub mode: Mode,
    pub base: PathBuf,
    /// SHA-256 of the effective configuration as canonical JSON.
    pub hash: String,
}

impl Resolved {
    pub fn path(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.path(&self.config.output)
    }

    pub fn prior(&self) -> CliResult<PriorSpec> {
        self.config.prior.ok_or_else(|| CliError::config("missing [prior] table"))
    }

    /// Integration settings with the file's overrides applied and the run
    /// seed driving any quasi-Monte Carlo randomization.
    pub fn integration(&self) -> IntegrationOptions {
        let o = &self.config.integration;
        let d = IntegrationOptions::default();
        IntegrationOptions {
            budget: o.budget.unwrap_or(d.budget),
            tol: o.tol.unwrap_or(d.tol),
            qmc_tol: o.qmc_tol.unwrap_or(d.qmc_tol),
            seed: self.config.seed,
            engine: o.engine.unwrap_or(d.engine),
            laplace: o.laplace.unwrap_or(d.laplace),
        }
    }

    /// Predictor names in column order, block by block.
    pub fn predictors(&self) -> Vec<String> {
        self.config.blocks.iter().flatten().cloned().collect()
    }
}

/// Parse TOML text; relative paths resolve against `base`.
pub fn parse(text: &str, base: &Path, over: &Overrides) -> CliResult<Resolved> {
    let mut config: RunConfig =
        toml::from_str(text).map_err(|e| CliError::config(format!("invalid configuration: {e}")))?;
    if let Some(seed) = over.seed {
        config.seed = seed;
    }
    config.orthogonalize |= over.orthogonalize;
    if let Some(b) = over.budget {
        config.integration.budget = Some(b);
        config.simulation_budget = Some(b);
    }
    let mode: Mode = config.mode.parse()?;
    validate(&config, &mode)?;
    let canonical = serde_json::to_vec(&config)
        .map_err(|e| CliError::config(format!("cannot serialize configuration: {e}")))?;
    let hash = Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect();
    Ok(Resolved { config, mode, base: base.to_path_buf(), hash })
}

/// Read and parse a configuration file.
pub fn load(path: &Path, over: &Overrides) -> CliResult<Resolved> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse(&text, &base, over)
}

fn validate(c: &RunConfig, mode: &Mode) -> CliResult<()> {
    let o = &c.integration;
    if o.budget == Some(0) || c.simulation_budget == Some(0) {
        return Err(CliError::config("budgets must be positive"));
    }
    if o.tol.is_some_and(|t| !(t > 0.0)) || o.qmc_tol.is_some_and(|t| !(t > 0.0)) {
        return Err(CliError::config("tolerances must be positive"));
    }
    if let Some(p) = &c.prior {
        p.validate().map_err(|e| CliError::config(format!("prior: {e}")))?;
    }
    if !mode.needs_data() {
        return Ok(());
    }
    if c.prior.is_none() {
        return Err(CliError::config("missing [prior] table"));
    }
    if c.data.is_none() {
        return Err(CliError::config("missing data path"));
    }
    let response = c.response.as_deref().ok_or_else(|| CliError::config("missing response"))?;
    if c.blocks.is_empty() || c.blocks.iter().any(|b| b.is_empty()) {
        return Err(CliError::config("blocks must be nonempty lists of column names"));
    }
    let mut seen = HashSet::new();
    for name in c.blocks.iter().flatten() {
        if !seen.insert(name.as_str()) {
            return Err(CliError::config(format!("column '{name}' appears in more than one block")));
        }
        if name == response {
            return Err(CliError::config(format!("response '{name}' is also a predictor")));
        }
    }
    if *mode == Mode::Predict && c.predict.is_none() {
        return Err(CliError::config("predict mode needs a [predict] table with points"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
mode = "fit"
data = "d.csv"
response = "y"
blocks = [["x1", "x2"], ["x3"]]
prior = { type = "block-hyper-g", a = 3.0 }
"#;

    fn parse_str(text: &str) -> CliResult<Resolved> {
        parse(text, Path::new("/cfg"), &Overrides::default())
    }

    #[test]
    fn parses_and_resolves_paths() {
        let r = parse_str(BASE).unwrap();
        assert_eq!(r.mode, Mode::Fit);
        assert_eq!(r.path(r.config.data.as_ref().unwrap()), PathBuf::from("/cfg/d.csv"));
        assert_eq!(r.predictors(), vec!["x1", "x2", "x3"]);
        assert_eq!(r.hash.len(), 64);
    }

    #[test]
    fn overlapping_blocks_are_rejected() {
        let text = BASE.replace(r#"["x3"]"#, r#"["x2"]"#);
        assert_eq!(parse_str(&text).unwrap_err().code, crate::error::EXIT_CONFIG);
    }

    #[test]
    fn hyperparameter_range_is_checked() {
        let text = BASE.replace("a = 3.0", "a = 4.5");
        assert_eq!(parse_str(&text).unwrap_err().tag, "ConfigError");
    }

    #[test]
    fn modes_parse() {
        assert_eq!("experiment:els".parse::<Mode>().unwrap(), Mode::Experiment("els".into()));
        assert!("experiment:".parse::<Mode>().is_err());
        assert!("fitt".parse::<Mode>().is_err());
    }

    #[test]
    fn overrides_change_the_hash() {
        let a = parse_str(BASE).unwrap();
        let over = Overrides { seed: Some(7), ..Default::default() };
        let b = parse(BASE, Path::new("/cfg"), &over).unwrap();
        assert_eq!(b.config.seed, 7);
        assert_ne!(a.hash, b.hash);
        assert_eq!(a.hash, parse_str(BASE).unwrap().hash);
    }
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use loskit::eval::{ExperimentConfig, FeatureSetLadder, SplitScenario};
use loskit::features::FeatureConfig;
use loskit::learn::{Family, HyperGrid, Metric};
use loskit::synth::GeneratorConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// The TOML run configuration. Every section is optional.
///
/// ```toml
/// seed = 42
///
/// [paths]
/// data = "records.csv"
/// maps_dir = "maps"
/// out_dir = "out"
///
/// [generator]
/// n_records = 50000
///
/// [features]
/// window_days = 90
/// diagnosis_encoding = "target"
///
/// [experiment]
/// scenarios = ["A", "B"]
/// families = ["forest", "gbdt"]
///
/// [grid.gbdt]
/// n_rounds = [100, 300]
/// max_depth = [4, 6]
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub verbosity: u8,
    pub paths: Paths,
    pub generator: GeneratorConfig,
    pub features: FeatureConfig,
    pub experiment: ExperimentSection,
    /// Family name to parameter name to candidate values.
    pub grid: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub maps_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub scenarios: Vec<String>,
    pub families: Vec<String>,
    pub metric: String,
    pub importance_repeats: usize,
    pub refit_on_train_val: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let d = ExperimentConfig::default();
        Self {
            scenarios: d.scenarios.iter().map(|s| s.to_string()).collect(),
            families: d.families.iter().map(|f| f.as_str().to_string()).collect(),
            metric: "mae".into(),
            importance_repeats: d.importance_repeats,
            refit_on_train_val: d.refit_on_train_val,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation("MissingPath", format!("{}: {e}", path.display())))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::validation("ConfigInvalid", format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Applies a `--seed` override and propagates the seed to every section.
    pub fn with_seed(mut self, flag: Option<u64>) -> Self {
        if let Some(s) = flag.or(self.seed) {
            self.seed = Some(s);
            self.generator.seed = s;
            self.features.seed = s;
        }
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.generator.seed)
    }

    /// Canonical text of the settings that shape outputs; paths are left out
    /// so the same inputs give the same digest wherever they live.
    pub fn digest_text(&self, command: &str, extra: &[(&str, String)]) -> String {
        let mut clean = self.clone();
        clean.paths = Paths::default();
        clean.verbosity = 0;
        let mut text = format!("command={command}\n{}\n", serde_json::to_string(&clean).expect("config serializes"));
        for (k, v) in extra {
            text.push_str(&format!("{k}={v}\n"));
        }
        text
    }

    pub fn grid_for(&self, family: Family) -> Result<Option<HyperGrid>, CliError> {
        match self.grid.get(family.as_str()) {
            None => Ok(None),
            Some(params) => {
                let grid = HyperGrid::new(params.iter().map(|(k, v)| (k.clone(), v.clone())).collect());
                if grid.cardinality() == 0 {
                    return Err(CliError::validation("ConfigInvalid", format!("grid for {} is empty", family.as_str())));
                }
                Ok(Some(grid))
            }
        }
    }

    pub fn experiment(&self) -> Result<ExperimentConfig, CliError> {
        let bad = |m: String| CliError::validation("ConfigInvalid", m);
        let scenarios = self
            .experiment
            .scenarios
            .iter()
            .map(|s| s.parse::<SplitScenario>().map_err(|e| bad(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let families = self
            .experiment
            .families
            .iter()
            .map(|f| parse_family(f))
            .collect::<Result<Vec<_>, _>>()?;
        let mut grids = Vec::new();
        for &f in &families {
            if let Some(g) = self.grid_for(f)? {
                grids.push((f, g));
            }
        }
        let cfg = ExperimentConfig {
            seed: self.seed(),
            scenarios,
            families,
            grids,
            metric: parse_metric(&self.experiment.metric)?,
            features: self.features.clone(),
            ladder: FeatureSetLadder::standard(),
            importance_repeats: self.experiment.importance_repeats,
            refit_on_train_val: self.experiment.refit_on_train_val,
        };
        cfg.validate().map_err(|e| bad(e.to_string()))?;
        Ok(cfg)
    }
}

pub fn parse_family(s: &str) -> Result<Family, CliError> {
    s.parse::<Family>().map_err(|e| CliError::validation("ConfigInvalid", e.to_string()))
}

pub fn parse_metric(s: &str) -> Result<Metric, CliError> {
    s.parse::<Metric>().map_err(|e| CliError::validation("ConfigInvalid", e.to_string()))
}

/// Parses `name=v1,v2;name=v3` into a grid, parameters in the given order.
pub fn parse_grid(spec: &str) -> Result<HyperGrid, CliError> {
    let bad = |m: String| CliError::validation("ConfigInvalid", m);
    let mut params = Vec::new();
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, values) = part.split_once('=').ok_or_else(|| bad(format!("grid entry {part:?} lacks '='")))?;
        let values = values
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad(format!("bad grid value {v:?} for {name}"))))
            .collect::<Result<Vec<_>, _>>()?;
        params.push((name.trim().to_string(), values));
    }
    if params.is_empty() {
        return Err(bad("grid is empty".into()));
    }
    Ok(HyperGrid::new(params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_sections_and_seed_override() {
        let text = r#"
seed = 5
[generator]
n_records = 100
[features]
diagnosis_encoding = "target"
[experiment]
families = ["gbdt"]
scenarios = ["A"]
[grid.gbdt]
n_rounds = [10, 20]
"#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        let cfg = cfg.with_seed(None);
        assert_eq!((cfg.generator.seed, cfg.features.seed), (5, 5));
        assert_eq!(cfg.generator.n_records, 100);
        let exp = cfg.experiment().unwrap();
        assert_eq!(exp.families, vec![Family::Gbdt]);
        assert_eq!(exp.grids[0].1.cardinality(), 2);
        assert_eq!(cfg.clone().with_seed(Some(9)).seed(), 9);
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }

    #[test]
    fn digest_ignores_paths() {
        let mut a = RunConfig::default();
        let b = a.clone();
        a.paths.data = Some("x.csv".into());
        assert_eq!(a.digest_text("generate", &[]), b.digest_text("generate", &[]));
        assert_ne!(a.digest_text("generate", &[]), a.digest_text("featurize", &[]));
    }

    #[test]
    fn inline_grid() {
        let g = parse_grid("n_rounds=10,20; max_depth=3").unwrap();
        assert_eq!(g.params, vec![("n_rounds".to_string(), vec![10.0, 20.0]), ("max_depth".to_string(), vec![3.0])]);
        assert!(parse_grid("n_rounds").is_err());
        assert!(parse_grid("n_rounds=a").is_err());
        assert!(parse_grid("").is_err());
    }
}

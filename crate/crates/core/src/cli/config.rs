//! Experiment configuration files (TOML).
//!
//! ```toml
//! version = 1
//! problem_types = ["1", "3", "1-nomc"]
//! k_grid = [8, 16, 32]
//! n_f_grid = [1, 2, 4]
//! test_configs = 100
//!
//! [scenario]
//! n_f = 4
//! n_m = 12
//! n_u = 4
//! coupling = 0.8
//! snr_db = 40.0
//! seed = 0
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, ProblemType};
use crate::optimizer::GaConfig;
use crate::scenario::ScenarioSpec;

pub const CONFIG_VERSION: u32 = 1;

/// An estimator, optionally run on the MC-unaware (`Gamma = 0`) stacks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeSpec {
    pub ty: ProblemType,
    pub no_mc: bool,
}

impl TypeSpec {
    pub fn new(ty: ProblemType, no_mc: bool) -> Self {
        Self { ty, no_mc }
    }
}

impl fmt::Display for TypeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.no_mc {
            write!(f, "{}-nomc", self.ty)
        } else {
            write!(f, "{}", self.ty)
        }
    }
}

impl FromStr for TypeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        for suffix in ["-nomc", "_no_mc", "-no-mc", "_nomc"] {
            if let Some(base) = lower.strip_suffix(suffix) {
                return Ok(Self::new(base.parse()?, true));
            }
        }
        Ok(Self::new(lower.parse()?, false))
    }
}

impl Serialize for TypeSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TypeSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Comma-separated list, e.g. `1,3,rbf-nomc` or `8,16,32`.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("bad list item {p:?}: {e}")))
        })
        .collect()
}

fn default_types() -> Vec<TypeSpec> {
    vec![TypeSpec::new(ProblemType::One, false)]
}

fn default_q() -> usize {
    100
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSettings {
    /// Training measurements; defaults to the largest `k_grid` entry.
    #[serde(default)]
    pub train: Option<usize>,
    #[serde(default = "default_true")]
    pub ground_truth: bool,
}

impl Default for GenerateSettings {
    fn default() -> Self {
        Self {
            train: None,
            ground_truth: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub scenario: ScenarioSpec,
    #[serde(default = "default_types")]
    pub problem_types: Vec<TypeSpec>,
    #[serde(default)]
    pub k_grid: Vec<usize>,
    /// Feed counts for sweeps; each column keeps the first `n_f` feeds of one
    /// scenario generated with the largest entry. Defaults to `[scenario.n_f]`.
    #[serde(default)]
    pub n_f_grid: Vec<usize>,
    #[serde(default = "default_q")]
    pub test_configs: usize,
    /// Scenario seeds for sweeps. Defaults to `[scenario.seed]`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub generate: GenerateSettings,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Record `wall_time_ms` in sweep rows; off gives byte-reproducible CSV.
    #[serde(default = "default_true")]
    pub timing: bool,
}

impl ExperimentConfig {
    /// Parses TOML, checking the version before anything else so that files of
    /// another version get a version error rather than a field error.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
        match table.get("version") {
            None => {
                return Err(Error::Config {
                    path: "version".into(),
                    message: "missing field `version`".into(),
                })
            }
            Some(toml::Value::Integer(v)) if *v == CONFIG_VERSION as i64 => {}
            Some(toml::Value::Integer(v)) => {
                return Err(Error::Version {
                    found: u32::try_from(*v).unwrap_or(u32::MAX),
                    expected: CONFIG_VERSION,
                })
            }
            Some(_) => {
                return Err(Error::Config {
                    path: "version".into(),
                    message: "must be an integer".into(),
                })
            }
        }
        let de = toml::Deserializer::parse(text).map_err(|e| toml_error(text, &e))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config {
                path,
                message: e.into_inner().message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let field = |path: &str, message: &str| {
            Err(Error::Config {
                path: path.into(),
                message: message.into(),
            })
        };
        self.scenario.validate()?;
        self.estimator.validate()?;
        self.ga.validate()?;
        if self.test_configs < 2 {
            return field("test_configs", "must be >= 2 (zeta needs a spread over configurations)");
        }
        if self.problem_types.is_empty() {
            return field("problem_types", "must not be empty");
        }
        if self.k_grid.contains(&0) {
            return field("k_grid", "entries must be >= 1");
        }
        if self.n_f_grid.contains(&0) {
            return field("n_f_grid", "entries must be >= 1");
        }
        Ok(())
    }

    pub fn n_f_grid(&self) -> Vec<usize> {
        if self.n_f_grid.is_empty() {
            vec![self.scenario.n_f]
        } else {
            self.n_f_grid.clone()
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.scenario.seed]
        } else {
            self.seeds.clone()
        }
    }

    /// Checks the grids a sweep needs.
    pub fn validate_sweep(&self) -> Result<()> {
        if self.k_grid.is_empty() {
            return Err(Error::Config {
                path: "k_grid".into(),
                message: "a sweep needs at least one K".into(),
            });
        }
        Ok(())
    }

    pub fn train_count(&self) -> Result<usize> {
        self.generate
            .train
            .or_else(|| self.k_grid.iter().copied().max())
            .ok_or_else(|| Error::Config {
                path: "generate.train".into(),
                message: "missing field `train` (and no k_grid to take it from)".into(),
            })
    }
}

fn toml_error(text: &str, e: &toml::de::Error) -> Error {
    let offset = e.span().map(|s| s.start).unwrap_or(0).min(text.len());
    Error::Parse {
        offset,
        message: e.message().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "version = 1\n[scenario]\nn_f = 2\nn_m = 8\nn_u = 3\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.test_configs, 100);
        assert_eq!(cfg.problem_types, default_types());
        assert_eq!(cfg.scenario.coupling, 0.8);
        assert_eq!(cfg.n_f_grid(), vec![2]);
    }

    #[test]
    fn missing_field_names_its_path() {
        let err = ExperimentConfig::from_toml("version = 1\n[scenario]\nn_f = 2\nn_u = 3\n").unwrap_err();
        match err {
            Error::Config { path, message } => {
                assert_eq!(path, "scenario");
                assert!(message.contains("n_m"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_type_names_nested_path() {
        let text = format!("{MINIMAL}[estimator]\nmax_iter = \"many\"\n");
        match ExperimentConfig::from_toml(&text).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "estimator.max_iter"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_is_checked_first() {
        let err = ExperimentConfig::from_toml("version = 7\n").unwrap_err();
        assert!(matches!(err, Error::Version { found: 7, expected: 1 }));
    }

    #[test]
    fn type_specs_round_trip() {
        for s in ["1", "2", "rbf", "3", "4", "1-nomc", "rbf-nomc"] {
            assert_eq!(s.parse::<TypeSpec>().unwrap().to_string(), s);
        }
        assert!("5-nomc".parse::<TypeSpec>().is_err());
    }
}

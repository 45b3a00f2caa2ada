//! `hdl-explain.toml`: backend settings, corpus location and prompt options.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use hdl_explain::backend::remote::DEFAULT_ENDPOINT;
use hdl_explain::backend::RetryPolicy;
use hdl_explain::experiment::Templates;
use hdl_explain::logparse::LogScanner;
use hdl_explain::prompting::PromptTemplate;
use hdl_explain::{default_model_plan, ModelSpec, Strategy};
use serde::Deserialize;

pub const FILE_NAME: &str = "hdl-explain.toml";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub endpoint: String,
    pub models: Vec<ModelSpec>,
    pub temperature: Option<f64>,
    pub max_in_flight: usize,
    pub request_timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint: DEFAULT_ENDPOINT.to_owned(),
            models: default_model_plan(),
            temperature: None,
            max_in_flight: 4,
            request_timeout_secs: 120,
            retry: RetryPolicy::default(),
        }
    }
}

impl BackendConfig {
    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs(self.request_timeout_secs)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplatePaths {
    pub ec: Option<PathBuf>,
    pub ecl: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub corpus_root: PathBuf,
    #[serde(deserialize_with = "strategy_from_str")]
    pub default_strategy: Strategy,
    /// Lines of source shown around the reported line by `explain`; 0 shows none.
    pub context_window: u32,
    pub quartus_location_pattern: Option<String>,
    pub solution_keywords: Vec<String>,
    pub templates: TemplatePaths,
    pub backend: BackendConfig,
    #[serde(skip)]
    pub source: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            corpus_root: PathBuf::from("corpus"),
            default_strategy: Strategy::ErrorCodeLine,
            context_window: 0,
            quartus_location_pattern: None,
            solution_keywords: Vec::new(),
            templates: TemplatePaths::default(),
            backend: BackendConfig::default(),
            source: None,
        }
    }
}

fn strategy_from_str<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Strategy, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

impl Config {
    /// `explicit` if given, else `./hdl-explain.toml`, else the user config
    /// directory, else defaults.
    pub fn discover(explicit: Option<&Path>) -> Result<Self> {
        if let Some(path) = explicit {
            return Self::load(path);
        }
        let mut candidates = vec![PathBuf::from(FILE_NAME)];
        if let Some(dir) = user_config_dir() {
            candidates.push(dir.join("hdl-explain").join("config.toml"));
        }
        match candidates.into_iter().find(|p| p.is_file()) {
            Some(path) => Self::load(&path),
            None => Ok(Self::default()),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config: Config =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        config.source = Some(path.to_path_buf());
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.backend.models.is_empty() {
            bail!("backend.models must list at least one model");
        }
        if let Some(m) = self.backend.models.iter().find(|m| m.samples == 0) {
            bail!("model `{}` has zero samples", m.name);
        }
        if self.backend.max_in_flight == 0 {
            bail!("backend.max_in_flight must be at least 1");
        }
        if self.backend.request_timeout_secs == 0 {
            bail!("backend.request_timeout_secs must be at least 1");
        }
        if let Some(t) = self.backend.temperature {
            if !(0.0..=2.0).contains(&t) {
                bail!("backend.temperature must be between 0 and 2");
            }
        }
        Ok(())
    }

    /// Paths in the config file are relative to the file's directory.
    fn relative(&self, path: &Path) -> PathBuf {
        match self.source.as_deref().and_then(Path::parent) {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    pub fn corpus_root(&self, override_: Option<&Path>) -> PathBuf {
        match override_ {
            Some(p) => p.to_path_buf(),
            None => self.relative(&self.corpus_root),
        }
    }

    pub fn scanner(&self) -> Result<LogScanner> {
        Ok(match &self.quartus_location_pattern {
            Some(p) => LogScanner::with_quartus_location(p)?,
            None => LogScanner::default(),
        })
    }

    pub fn templates(&self) -> Result<Templates> {
        let mut t = Templates::default();
        if let Some(p) = &self.templates.ec {
            t.ec = PromptTemplate::from_file(&self.relative(p), Strategy::ErrorCode)?;
        }
        if let Some(p) = &self.templates.ecl {
            t.ecl = PromptTemplate::from_file(&self.relative(p), Strategy::ErrorCodeLine)?;
        }
        Ok(t)
    }
}

fn user_config_dir() -> Option<PathBuf> {
    std::env::var_os("XDG_CONFIG_HOME")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".config")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = Config::default();
        c.validate().unwrap();
        assert_eq!(c.backend.models.len(), 3);
        assert_eq!(c.default_strategy, Strategy::ErrorCodeLine);
    }

    #[test]
    fn parses_a_full_file() {
        let c: Config = toml::from_str(
            r#"
            corpus_root = "data/corpus"
            default_strategy = "ec"
            context_window = 2
            solution_keywords = ["always_ff"]

            [backend]
            temperature = 0.2
            max_in_flight = 8

            [[backend.models]]
            name = "gpt-4"
            samples = 3

            [backend.retry]
            max_attempts = 2
            base_delay = 100
            max_delay = 1000
            "#,
        )
        .unwrap();
        c.validate().unwrap();
        assert_eq!(c.default_strategy, Strategy::ErrorCode);
        assert_eq!(c.backend.models, vec![ModelSpec::new("gpt-4", 3)]);
        assert_eq!(c.backend.retry.base_delay, Duration::from_millis(100));
        assert_eq!(c.backend.endpoint, DEFAULT_ENDPOINT);
    }

    #[test]
    fn rejects_bad_values() {
        let c: Config = toml::from_str("[backend]\nmax_in_flight = 0\n").unwrap();
        assert!(c.validate().is_err());
        let c: Config = toml::from_str("[backend]\nmodels = []\n").unwrap();
        assert!(c.validate().is_err());
        assert!(toml::from_str::<Config>("unknown_key = 1\n").is_err());
        assert!(toml::from_str::<Config>("default_strategy = \"xyz\"\n").is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(FILE_NAME);
        std::fs::write(&path, "corpus_root = \"c\"\n").unwrap();
        let c = Config::load(&path).unwrap();
        assert_eq!(c.corpus_root(None), dir.path().join("c"));
        assert_eq!(c.corpus_root(Some(Path::new("/x"))), PathBuf::from("/x"));
    }
}

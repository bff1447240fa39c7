//! Service configuration: a `key = value` text file with `#` comments.
//!
//! ```text
//! corpus.quac = data/quac      # dataset name -> corpus directory (repeatable)
//! embeddings = vectors.txt     # word vectors; cosine on raw terms when absent
//! reader = lexical             # lexical | remote:URL
//! rewriter = oracle            # oracle | identity | remote:URL
//! generator = heuristic        # heuristic | remote:URL
//! generator_fallback = false
//! threshold = 0.75
//! k = inf
//! assessment = true
//! workers = 1                  # concurrently running evaluation jobs
//! ui_dir = ui/dist
//! snapshot = sessions.json     # sessions written here on shutdown
//! bind = 127.0.0.1
//! port = 8080
//! ```
//!
//! Relative paths are resolved against the file's directory. Every key can be
//! overridden by an environment variable `CONVSR_<KEY>`, upper-cased with `.`
//! written as `__` (`CONVSR_THRESHOLD=0.6`, `CONVSR_CORPUS__QUAC=/data/quac`).

use std::path::{Path, PathBuf};

use convsr_core::run::RunConfig;
use thiserror::Error;

pub const ENV_PREFIX: &str = "CONVSR_";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("{key}: {message}")]
    Value { key: String, message: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    /// `(name, directory)` in file order.
    pub datasets: Vec<(String, PathBuf)>,
    pub embeddings: Option<PathBuf>,
    /// Backends and selection defaults for sessions and jobs.
    pub defaults: RunConfig,
    pub workers: usize,
    pub ui_dir: Option<PathBuf>,
    pub snapshot: Option<PathBuf>,
    pub bind: String,
    pub port: u16,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            embeddings: None,
            defaults: RunConfig::default(),
            workers: 1,
            ui_dir: None,
            snapshot: None,
            bind: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value { key: key.into(), message: e.to_string() })
}

impl ServiceConfig {
    /// Parses the file format, then applies `overrides` (environment style).
    pub fn parse<I>(text: &str, base: &Path, overrides: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            config.set(key.trim(), value.trim(), base)?;
        }
        for (name, value) in overrides {
            if let Some(rest) = name.strip_prefix(ENV_PREFIX) {
                let key = rest.to_lowercase().replace("__", ".");
                config.set(&key, value.trim(), base)?;
            }
        }
        config.defaults.validate().map_err(|e| ConfigError::Value { key: "defaults".into(), message: e.0 })?;
        Ok(config)
    }

    /// Reads a file and applies the process environment.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, std::env::vars())
    }

    /// The defaults with environment overrides only.
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::parse("", Path::new("."), std::env::vars())
    }

    fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), ConfigError> {
        let path = |v: &str| base.join(v);
        let d = &mut self.defaults;
        match key {
            "embeddings" => self.embeddings = Some(path(value)),
            "reader" => d.reader = value.into(),
            "rewriter" => d.rewriter = value.into(),
            "generator" => d.generator = value.into(),
            "generator_fallback" => d.generator_fallback = parse_value(key, value)?,
            "threshold" => d.threshold = parse_value(key, value)?,
            "k" => d.k = if value == "inf" { None } else { Some(parse_value(key, value)?) },
            "assessment" => d.assessment = parse_value(key, value)?,
            "workers" => self.workers = parse_value::<usize>(key, value)?.max(1),
            "ui_dir" => self.ui_dir = Some(path(value)),
            "snapshot" => self.snapshot = Some(path(value)),
            "bind" => self.bind = value.into(),
            "port" => self.port = parse_value(key, value)?,
            _ => match key.strip_prefix("corpus.") {
                Some(name) if !name.is_empty() => {
                    let dir = path(value);
                    match self.datasets.iter_mut().find(|(n, _)| n == name) {
                        Some(entry) => entry.1 = dir,
                        None => self.datasets.push((name.to_string(), dir)),
                    }
                }
                _ => return Err(ConfigError::UnknownKey(key.to_string())),
            },
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FILE: &str = "# service\ncorpus.quac = data/quac\nthreshold = 0.6 # lower\nk = 2\nreader = lexical\nworkers = 3\n";

    #[test]
    fn parses_file_and_resolves_paths() {
        let c = ServiceConfig::parse(FILE, Path::new("/etc/convsr"), Vec::new()).unwrap();
        assert_eq!(c.datasets, [("quac".to_string(), PathBuf::from("/etc/convsr/data/quac"))]);
        assert_eq!(c.defaults.threshold, 0.6);
        assert_eq!(c.defaults.k, Some(2));
        assert_eq!(c.workers, 3);
        assert_eq!(c.port, 8080);
    }

    #[test]
    fn environment_overrides_the_file() {
        let env = vec![
            ("CONVSR_THRESHOLD".to_string(), "0.9".to_string()),
            ("CONVSR_CORPUS__QUAC".to_string(), "/srv/quac".to_string()),
            ("CONVSR_K".to_string(), "inf".to_string()),
            ("HOME".to_string(), "/root".to_string()),
        ];
        let c = ServiceConfig::parse(FILE, Path::new("/etc/convsr"), env).unwrap();
        assert_eq!(c.defaults.threshold, 0.9);
        assert_eq!(c.defaults.k, None);
        assert_eq!(c.datasets, [("quac".to_string(), PathBuf::from("/srv/quac"))]);
    }

    #[test]
    fn rejects_bad_lines() {
        let parse = |t: &str| ServiceConfig::parse(t, Path::new("."), Vec::new());
        assert_eq!(parse("threshold 0.5"), Err(ConfigError::Syntax { line: 1 }));
        assert!(matches!(parse("threshold = high"), Err(ConfigError::Value { .. })));
        assert!(matches!(parse("threshold = 2"), Err(ConfigError::Value { .. })));
        assert_eq!(parse("colour = red"), Err(ConfigError::UnknownKey("colour".into())));
        assert!(matches!(parse("reader = remote:nowhere"), Err(ConfigError::Value { .. })));
    }
}

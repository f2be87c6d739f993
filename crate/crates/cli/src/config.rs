//! Layered configuration. Precedence, highest first: command-line flags,
//! `HELIOS_*` environment variables, the TOML config file, built-in
//! defaults.
//!
//! ```toml
//! seed = 7
//! base_url = "http://127.0.0.1:8000"
//! audit_log = "llm-audit.ndjson"
//!
//! [server]          # same table the service reads
//! latency_s = 1.5
//!
//! [client]
//! retries = 3
//!
//! [llm]             # enables ask/extract/toolchat against a live provider
//! model = "gpt-4o-mini"
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use helios_client::ClientConfig;
use helios_llm::ProviderConfig;
use helios_service::ServiceConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_ENV: &str = "HELIOS_CONFIG";
pub const DEFAULT_AUDIT_LOG: &str = "helios-llm-audit.ndjson";
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientSection {
    pub timeout_s: f64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for ClientSection {
    fn default() -> Self {
        let d = ClientConfig::default();
        ClientSection {
            timeout_s: d.timeout.as_secs_f64(),
            retries: d.retries,
            backoff_ms: d.backoff_base.as_millis() as u64,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub base_url: Option<String>,
    pub provider_script: Option<PathBuf>,
    pub audit_log: Option<PathBuf>,
    pub server: ServiceConfig,
    pub client: ClientSection,
    pub llm: Option<ProviderConfig>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("bad config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Values that flags and environment variables can set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub base_url: Option<String>,
    pub seed: Option<u64>,
    pub latency_s: Option<f64>,
    pub calibration: Option<PathBuf>,
    pub provider_script: Option<PathBuf>,
    pub audit_log: Option<PathBuf>,
    pub listen: Option<String>,
    pub log_path: Option<PathBuf>,
}

fn parsed<T: FromStr>(name: &str, value: String) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("{name}=`{value}` is not valid")))
}

impl Overrides {
    /// Reads the `HELIOS_*` variables through `lookup`; empty values count
    /// as unset.
    pub fn from_env(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, CliError> {
        let get = |name: &str| lookup(name).filter(|v| !v.trim().is_empty());
        Ok(Overrides {
            base_url: get(helios_client::BASE_URL_ENV),
            seed: get("HELIOS_SEED").map(|v| parsed("HELIOS_SEED", v)).transpose()?,
            latency_s: get("HELIOS_LATENCY").map(|v| parsed("HELIOS_LATENCY", v)).transpose()?,
            calibration: get("HELIOS_CALIBRATION").map(PathBuf::from),
            provider_script: get("HELIOS_PROVIDER_SCRIPT").map(PathBuf::from),
            audit_log: get("HELIOS_AUDIT_LOG").map(PathBuf::from),
            listen: get("HELIOS_LISTEN"),
            log_path: get("HELIOS_LOG").map(PathBuf::from),
        })
    }

    /// `self` wherever set, else `lower`.
    fn over(self, lower: Overrides) -> Overrides {
        Overrides {
            base_url: self.base_url.or(lower.base_url),
            seed: self.seed.or(lower.seed),
            latency_s: self.latency_s.or(lower.latency_s),
            calibration: self.calibration.or(lower.calibration),
            provider_script: self.provider_script.or(lower.provider_script),
            audit_log: self.audit_log.or(lower.audit_log),
            listen: self.listen.or(lower.listen),
            log_path: self.log_path.or(lower.log_path),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub server: ServiceConfig,
    pub client: ClientConfig,
    pub seed: Option<u64>,
    pub llm: Option<ProviderConfig>,
    pub provider_script: Option<PathBuf>,
    pub audit_log: PathBuf,
}

impl CliConfig {
    /// Seed for randomized commands.
    pub fn seed_or_default(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
}

/// Merges the layers. Pure: callers do the file and environment reads.
pub fn resolve(file: FileConfig, env: Overrides, flags: Overrides) -> Result<CliConfig, CliError> {
    let top = flags.over(env);
    let mut server = file.server;
    let seed = top.seed.or(file.seed).or(server.seed);
    server.seed = seed;
    if let Some(l) = top.latency_s {
        server.latency_s = l;
    }
    if let Some(c) = top.calibration {
        server.calibration = Some(c);
    }
    if let Some(l) = top.listen {
        server.listen = l;
    }
    if let Some(p) = top.log_path {
        server.log_path = Some(p);
    }
    server.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let section = file.client;
    if !(section.timeout_s.is_finite() && section.timeout_s > 0.0) {
        return Err(CliError::Config("client.timeout_s must be positive".into()));
    }
    let defaults = ClientConfig::default();
    let client = ClientConfig {
        base_url: top.base_url.or(file.base_url).unwrap_or(defaults.base_url),
        timeout: Duration::from_secs_f64(section.timeout_s),
        retries: section.retries,
        backoff_base: Duration::from_millis(section.backoff_ms),
    };
    if let Some(llm) = &file.llm {
        llm.validate().map_err(|e| CliError::Config(format!("[llm]: {e}")))?;
    }
    Ok(CliConfig {
        server,
        client,
        seed,
        llm: file.llm,
        provider_script: top.provider_script.or(file.provider_script),
        audit_log: top
            .audit_log
            .or(file.audit_log)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_AUDIT_LOG)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env(pairs: &[(&str, &str)]) -> Overrides {
        let map: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        Overrides::from_env(|k| map.get(k).cloned()).unwrap()
    }

    const FILE: &str = r#"
seed = 1
base_url = "http://file:1"
[server]
latency_s = 0.5
calibration = "file.toml"
listen = "127.0.0.1:7000"
[client]
retries = 0
"#;

    #[test]
    fn defaults_when_nothing_is_set() {
        let c = resolve(FileConfig::default(), Overrides::default(), Overrides::default()).unwrap();
        assert_eq!(c.client, ClientConfig::default());
        assert_eq!(c.server, ServiceConfig::default());
        assert_eq!(c.seed, None);
        assert_eq!(c.seed_or_default(), DEFAULT_SEED);
        assert_eq!(c.audit_log, PathBuf::from(DEFAULT_AUDIT_LOG));
        assert!(c.llm.is_none());
    }

    #[test]
    fn file_over_defaults() {
        let c = resolve(FileConfig::parse(FILE).unwrap(), Overrides::default(), Overrides::default()).unwrap();
        assert_eq!(c.seed, Some(1));
        assert_eq!(c.server.seed, Some(1));
        assert_eq!(c.client.base_url, "http://file:1");
        assert_eq!(c.client.retries, 0);
        assert_eq!(c.server.latency_s, 0.5);
        assert_eq!(c.server.calibration, Some(PathBuf::from("file.toml")));
        assert_eq!(c.server.listen, "127.0.0.1:7000");
    }

    #[test]
    fn env_over_file_and_flags_over_env() {
        let e = env(&[
            ("HELIOS_BASE_URL", "http://env:2"),
            ("HELIOS_SEED", "2"),
            ("HELIOS_LATENCY", "1.5"),
            ("HELIOS_CALIBRATION", "env.toml"),
        ]);
        let c = resolve(FileConfig::parse(FILE).unwrap(), e.clone(), Overrides::default()).unwrap();
        assert_eq!((c.client.base_url.as_str(), c.seed), ("http://env:2", Some(2)));
        assert_eq!(c.server.latency_s, 1.5);
        assert_eq!(c.server.calibration, Some(PathBuf::from("env.toml")));

        let flags = Overrides {
            base_url: Some("http://flag:3".into()),
            seed: Some(3),
            latency_s: Some(0.0),
            ..Default::default()
        };
        let c = resolve(FileConfig::parse(FILE).unwrap(), e, flags).unwrap();
        assert_eq!((c.client.base_url.as_str(), c.seed), ("http://flag:3", Some(3)));
        assert_eq!(c.server.latency_s, 0.0);
        // Not overridden by flags, so the environment still wins.
        assert_eq!(c.server.calibration, Some(PathBuf::from("env.toml")));
    }

    #[test]
    fn server_table_seed_is_lowest() {
        let f = FileConfig::parse("[server]\nseed = 9\n").unwrap();
        assert_eq!(resolve(f.clone(), Overrides::default(), Overrides::default()).unwrap().seed, Some(9));
        let f2 = FileConfig::parse("seed = 4\n[server]\nseed = 9\n").unwrap();
        assert_eq!(resolve(f2, Overrides::default(), Overrides::default()).unwrap().seed, Some(4));
    }

    #[test]
    fn bad_inputs_are_config_errors() {
        assert!(FileConfig::parse("sed = 1").is_err());
        assert!(FileConfig::parse("[server]\nlisten = 5").is_err());
        let e = Overrides::from_env(|k| (k == "HELIOS_SEED").then(|| "many".to_string()));
        assert_eq!(e.unwrap_err().exit_code(), 2);
        let flags = Overrides {
            latency_s: Some(-1.0),
            ..Default::default()
        };
        assert!(resolve(FileConfig::default(), Overrides::default(), flags).is_err());
        let f = FileConfig::parse("[llm]\ntemperature = -1.0\n").unwrap();
        assert!(resolve(f, Overrides::default(), Overrides::default()).is_err());
    }

    #[test]
    fn empty_env_values_are_unset() {
        assert_eq!(env(&[("HELIOS_SEED", " "), ("HELIOS_BASE_URL", "")]), Overrides::default());
    }
}

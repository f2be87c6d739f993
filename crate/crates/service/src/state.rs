use std::fs;
use std::net::IpAddr;
use std::path::Path;
use std::time::Duration;

use chrono::Utc;
use helios_core::{Reading, ResponseModel, RgbSetting, Simulator};
use rand::Rng;
use sha2::{Digest, Sha256};
use tokio::sync::Mutex;

use crate::config::ServiceConfig;
use crate::log::{Endpoint, ExperimentLog, ExperimentRecord, LogError, LogReader};

/// The single-file measurement path: simulator RNG stream plus log writer.
struct Bench {
    sim: Simulator,
    log: ExperimentLog,
}

#[derive(Debug, thiserror::Error)]
pub enum MeasureError {
    #[error("instrument busy: no slot within {0:?}")]
    Busy(Duration),
    #[error(transparent)]
    Log(#[from] LogError),
}

pub struct AppState {
    bench: Mutex<Bench>,
    reader: LogReader,
    latency: Duration,
    queue_timeout: Duration,
    salt: String,
    pub(crate) token: Option<String>,
    pub(crate) trust_forwarded_for: bool,
}

fn load_or_create_salt(log_path: &Path) -> Result<String, LogError> {
    let mut salt_path = log_path.as_os_str().to_owned();
    salt_path.push(".salt");
    let salt_path = std::path::PathBuf::from(salt_path);
    let wrap = |source| LogError::Io {
        path: salt_path.clone(),
        source,
    };
    match fs::read_to_string(&salt_path) {
        Ok(s) if !s.trim().is_empty() => return Ok(s.trim().to_string()),
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(wrap(e)),
    }
    let salt = hex::encode(rand::rng().random::<[u8; 16]>());
    fs::write(&salt_path, &salt).map_err(wrap)?;
    Ok(salt)
}

impl AppState {
    pub fn new(config: &ServiceConfig, mut model: ResponseModel) -> Result<Self, LogError> {
        if let Some(seed) = config.seed {
            model = model.with_seed(seed);
        }
        let (log, reader) = match &config.log_path {
            Some(path) => ExperimentLog::open(path, config.log_max_bytes)?,
            None => ExperimentLog::in_memory(),
        };
        let salt = match (&config.client_salt, &config.log_path) {
            (Some(s), _) => s.clone(),
            (None, Some(path)) => load_or_create_salt(path)?,
            (None, None) => hex::encode(rand::rng().random::<[u8; 16]>()),
        };
        Ok(AppState {
            bench: Mutex::new(Bench {
                sim: Simulator::new(model),
                log,
            }),
            reader,
            latency: config.latency(),
            queue_timeout: config.queue_timeout(),
            salt,
            token: config.token.clone(),
            trust_forwarded_for: config.trust_forwarded_for,
        })
    }

    pub fn reader(&self) -> &LogReader {
        &self.reader
    }

    pub fn queue_timeout(&self) -> Duration {
        self.queue_timeout
    }

    /// Opaque, salted identity for a remote address.
    pub fn client_id(&self, addr: Option<IpAddr>) -> String {
        let Some(addr) = addr else {
            return "unknown".to_string();
        };
        let mut h = Sha256::new();
        h.update(self.salt.as_bytes());
        h.update(addr.to_string().as_bytes());
        hex::encode(&h.finalize()[..8])
    }

    /// Takes one measurement. Callers are served strictly in arrival order;
    /// the configured latency is spent while holding the instrument.
    pub async fn measure(
        &self,
        setting: RgbSetting,
        endpoint: Endpoint,
        client_id: String,
    ) -> Result<Reading, MeasureError> {
        let mut bench = tokio::time::timeout(self.queue_timeout, self.bench.lock())
            .await
            .map_err(|_| MeasureError::Busy(self.queue_timeout))?;
        if !self.latency.is_zero() {
            tokio::time::sleep(self.latency).await;
        }
        let t = bench.log.next_timestamp(Utc::now());
        let reading = bench.sim.measure(setting, t);
        bench.log.append(ExperimentRecord {
            timestamp: reading.timestamp,
            client_id,
            endpoint,
            input: setting,
            output: reading.counts,
        })?;
        Ok(reading)
    }
}

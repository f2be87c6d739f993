#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use helios_core::ResponseModel;
use helios_service::{AppState, Server, ServiceConfig};
use tokio::runtime::Runtime;
use tokio::sync::oneshot;

/// A service on its own runtime, stopped on drop.
pub struct Running {
    pub base: String,
    pub state: Arc<AppState>,
    stop: Option<oneshot::Sender<()>>,
    _rt: Runtime,
}

impl Running {
    pub fn start(model: ResponseModel) -> Running {
        Self::with_config(ServiceConfig::default(), model)
    }

    pub fn with_config(mut config: ServiceConfig, model: ResponseModel) -> Running {
        config.listen = "127.0.0.1:0".into();
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        let server = rt.block_on(Server::bind(&config, model)).unwrap();
        let base = format!("http://{}", server.local_addr());
        let state = server.state();
        let (tx, rx) = oneshot::channel();
        rt.spawn(server.run(async {
            let _ = rx.await;
        }));
        Running {
            base,
            state,
            stop: Some(tx),
            _rt: rt,
        }
    }

    pub fn records(&self) -> usize {
        self.state.reader().records().unwrap().len()
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
    }
}

/// The `helios` binary with a clean `HELIOS_*` environment.
pub fn helios(dir: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_helios"));
    c.current_dir(dir);
    for (k, _) in std::env::vars() {
        if k.starts_with("HELIOS_") {
            c.env_remove(k);
        }
    }
    c
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Compares against `tests/golden/<name>`; `HELIOS_UPDATE_GOLDEN=1`
/// rewrites the file instead.
pub fn assert_golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("HELIOS_UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "output differs from {}", path.display());
}

pub fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

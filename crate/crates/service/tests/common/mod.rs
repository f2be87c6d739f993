#![allow(dead_code)]

use std::sync::Arc;

use helios_core::ResponseModel;
use helios_service::{AppState, Server, ServiceConfig};
use tokio::runtime::Runtime;
use tokio::sync::oneshot;

/// A service running on its own runtime, stopped on drop.
pub struct Running {
    pub base: String,
    pub state: Arc<AppState>,
    stop: Option<oneshot::Sender<()>>,
    _rt: Runtime,
}

impl Running {
    pub fn start(mut config: ServiceConfig, model: ResponseModel) -> Running {
        config.listen = "127.0.0.1:0".into();
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
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

    pub fn url(&self, path_and_query: &str) -> String {
        format!("{}{}", self.base, path_and_query)
    }

    pub fn get(&self, path_and_query: &str) -> reqwest::blocking::Response {
        reqwest::blocking::get(self.url(path_and_query)).unwrap()
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

use std::io::Write;

use helios_service::{load_model, shutdown_signal, Server, ServiceConfig, ServiceError};
use serde_json::json;

use crate::error::CliError;

fn startup_error(e: ServiceError) -> CliError {
    CliError::Config(e.to_string())
}

/// Runs the service until Ctrl-C or SIGTERM, announcing the bound address
/// on `out` first.
pub fn run(config: &ServiceConfig, json_output: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(config).map_err(startup_error)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start the async runtime: {e}")))?;
    runtime.block_on(async {
        let server = Server::bind(config, model).await.map_err(startup_error)?;
        let url = format!("http://{}", server.local_addr());
        if json_output {
            writeln!(out, "{}", json!({ "listening": url }))?;
        } else {
            writeln!(out, "listening on {url}")?;
        }
        out.flush()?;
        server
            .run(shutdown_signal())
            .await
            .map_err(|e| CliError::Runtime(format!("server failed: {e}")))
    })
}

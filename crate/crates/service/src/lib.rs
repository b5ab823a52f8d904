//! REST orchestration service and decomposition agent server.

pub mod agent;
pub mod api;
pub mod config;
pub mod error;
pub mod orchestrator;
pub mod state;
pub mod storage;

use std::future::Future;
use std::sync::Arc;

use maod_core::a2a::DecompositionAgent;
use maod_core::gateway::{load_vendor_file, ModelGateway};
use tokio::net::TcpListener;

pub use agent::{agent_router, DecompositionClient, DisabledAgent, HttpAgentClient, LocalAgentClient};
pub use config::Config;
pub use error::ServiceError;
pub use orchestrator::Orchestrator;
pub use storage::{FileStorage, MemoryStorage, Storage};

/// A gateway with the mock provider plus any vendors from `config`.
pub fn build_gateway(config: &Config) -> Result<ModelGateway, String> {
    let gateway = ModelGateway::with_mock();
    if let Some(path) = &config.vendors_path {
        for meta in load_vendor_file(path).map_err(|e| e.to_string())? {
            gateway.register_vendor(meta).map_err(|e| e.to_string())?;
        }
    }
    Ok(gateway)
}

pub fn build_orchestrator(config: &Config) -> Result<Orchestrator, String> {
    let storage: Arc<dyn Storage> = match &config.storage_path {
        Some(path) => Arc::new(FileStorage::new(path).map_err(|e| format!("{}: {e}", path.display()))?),
        None => Arc::new(MemoryStorage::new()),
    };
    let agent: Arc<dyn DecompositionClient> = match &config.agent_url {
        Some(url) => Arc::new(HttpAgentClient::new(url.clone())),
        None => Arc::new(DisabledAgent),
    };
    Ok(Orchestrator::new(storage, Arc::new(build_gateway(config)?), agent))
}

/// Serves the REST API until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    orchestrator: Arc<Orchestrator>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, api::router(orchestrator)).with_graceful_shutdown(shutdown).await
}

/// Serves the A2A agent until `shutdown` resolves.
pub async fn serve_agent(
    listener: TcpListener,
    agent: DecompositionAgent,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, agent_router(agent)).with_graceful_shutdown(shutdown).await
}

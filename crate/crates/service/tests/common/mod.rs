//! In-process harness: a REST service and an A2A agent on loopback ports.
#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use maod_core::a2a::DecompositionAgent;
use maod_core::gateway::ModelGateway;
use maod_service::{DecompositionClient, Orchestrator, Storage};
use reqwest::Method;
use serde_json::Value;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub struct Server {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl Server {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn stop(mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        let _ = self.task.await;
    }
}

async fn bind(addr: SocketAddr) -> TcpListener {
    for _ in 0..100 {
        if let Ok(l) = TcpListener::bind(addr).await {
            return l;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("cannot bind {addr}");
}

pub async fn start_agent_at(addr: SocketAddr) -> Server {
    let listener = bind(addr).await;
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = oneshot::channel();
    let task = tokio::spawn(async move {
        maod_service::serve_agent(listener, DecompositionAgent::default(), async {
            let _ = rx.await;
        })
        .await
        .unwrap();
    });
    Server { addr, stop: Some(tx), task }
}

pub async fn start_agent() -> Server {
    start_agent_at("127.0.0.1:0".parse().unwrap()).await
}

pub async fn start_service(orchestrator: Arc<Orchestrator>) -> Server {
    let listener = bind("127.0.0.1:0".parse().unwrap()).await;
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = oneshot::channel();
    let task = tokio::spawn(async move {
        maod_service::serve(listener, orchestrator, async {
            let _ = rx.await;
        })
        .await
        .unwrap();
    });
    Server { addr, stop: Some(tx), task }
}

pub fn orchestrator(storage: Arc<dyn Storage>, agent: Arc<dyn DecompositionClient>) -> Arc<Orchestrator> {
    Arc::new(Orchestrator::new(storage, Arc::new(ModelGateway::with_mock()), agent))
}

pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(server: &Server) -> Self {
        Client { base: server.url(), http: reqwest::Client::new() }
    }

    pub async fn call(&self, method: Method, path: &str, body: Option<Value>) -> (u16, Value) {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(body) = body {
            req = req.header("content-type", "application/json").body(body.to_string());
        }
        let resp = req.send().await.unwrap();
        let status = resp.status().as_u16();
        let bytes = resp.bytes().await.unwrap();
        let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
        (status, value)
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        self.call(Method::GET, path, None).await
    }

    pub async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        self.call(Method::POST, path, Some(body)).await
    }

    pub async fn patch(&self, path: &str, body: Value) -> (u16, Value) {
        self.call(Method::PATCH, path, Some(body)).await
    }

    pub async fn new_session(&self) -> String {
        let (status, body) = self.post("/api/sessions", serde_json::json!({})).await;
        assert_eq!(status, 200, "{body}");
        body["session_id"].as_str().unwrap().to_owned()
    }
}

pub fn error_code(body: &Value) -> &str {
    body["error"]["code"].as_str().unwrap_or("<none>")
}

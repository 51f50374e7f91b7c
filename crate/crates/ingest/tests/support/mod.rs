#![allow(dead_code)]

use std::sync::Arc;

use tokio::runtime::Runtime;
use vita_core::demo::demo_chat_log;
use vita_core::ingest::{parse_chat_log, transform_batch};
use vita_core::tutor::ScriptedMock;
use vita_core::xapi::{Statement, VerbRegistry};
use vita_lrs::AppState;

pub const SECRET: &str = "ingest-test-secret";

pub fn runtime() -> Runtime {
    tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap()
}

/// Serves `router` on an ephemeral port inside `rt`; returns the base URL.
pub fn spawn_router(rt: &Runtime, router: axum::Router) -> String {
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
        base
    })
}

/// A real in-memory LRS; the returned state can be inspected afterwards.
pub fn spawn_lrs(rt: &Runtime) -> (String, Arc<AppState>) {
    let state = Arc::new(AppState::in_memory(SECRET, Arc::new(ScriptedMock::new()), true));
    let base = spawn_router(rt, vita_lrs::router(state.clone()));
    (base, state)
}

pub fn demo_statements(entries: usize, seed: u64) -> Vec<Statement> {
    let parsed = parse_chat_log(demo_chat_log(entries, seed).as_bytes()).unwrap();
    transform_batch(&parsed.records, &VerbRegistry::standard()).unwrap()
}

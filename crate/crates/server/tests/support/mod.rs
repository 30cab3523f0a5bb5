//! Toy project and request replay shared by the API tests and the
//! acceptance suite.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use topolens_core::project::{load_project, run_pipeline, InputConfig, InputFormat};
use topolens_core::{synthetic, Project, ProjectConfig};

pub const REQUESTS: &[&str] = &[
    "/api/meta",
    "/api/embedding?method=isomap",
    "/api/embedding?method=mds",
    "/api/embedding?method=tsne",
    "/api/embedding?method=umap",
    "/api/embedding",
    "/api/item/0_0",
    "/api/item/8_0",
    "/api/item/1_0",
    "/api/item/nope",
    "/api/diff?a=0_0&b=8_0",
    "/api/diff?a=8_0&b=0_0",
    "/api/diff?a=6_0&b=6_0",
    "/api/diff?a=0_0&b=nope",
    "/api/diff?a=0_0",
    "/api/unknown",
];

pub const UNLOADED_REQUESTS: &[&str] = &[
    "/api/meta",
    "/api/embedding?method=mds",
    "/api/item/0_0",
    "/api/diff?a=0_0&b=1_0",
];

/// One synthetic raster per label, every embedding method.
pub fn toy_project(root: &Path) -> Project {
    let input = root.join("input");
    synthetic::write_png_dir(&synthetic::corpus(1), &input).unwrap();
    let mut cfg = ProjectConfig::new(
        InputConfig {
            path: input,
            format: InputFormat::Dir,
            labels: None,
        },
        1,
    );
    cfg.embedding.k = 3;
    cfg.embedding.tsne.perplexity = 3.0;
    cfg.embedding.tsne.iterations = 300;
    cfg.embedding.tsne.learning_rate = 10.0;
    let out = root.join("project");
    run_pipeline(&cfg, &out).unwrap();
    load_project(&out).unwrap()
}

pub async fn get(app: &axum::Router, uri: &str) -> (StatusCode, Vec<u8>) {
    let response = app
        .clone()
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    (status, bytes.to_vec())
}

/// `server_dir` is the server crate's manifest directory.
pub fn golden_path(server_dir: &Path) -> PathBuf {
    server_dir.join("tests/golden/api.json")
}

/// Issues every request twice, checks the bodies are identical and returns
/// `[{request, status, body}]`.
pub async fn record(app: &axum::Router, requests: &[&str]) -> Vec<Value> {
    let mut recorded = Vec::new();
    for uri in requests {
        let (status, body) = get(app, uri).await;
        let (status_again, body_again) = get(app, uri).await;
        assert_eq!(
            (status, &body),
            (status_again, &body_again),
            "{uri} is not pure"
        );
        let body: Value = serde_json::from_slice(&body).unwrap();
        recorded.push(json!({ "request": uri, "status": status.as_u16(), "body": body }));
    }
    recorded
}

pub fn read_golden(server_dir: &Path) -> Vec<Value> {
    let text = std::fs::read_to_string(golden_path(server_dir)).unwrap();
    serde_json::from_str(&text).unwrap()
}

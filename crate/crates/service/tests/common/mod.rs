#![allow(dead_code)]

use base64::Engine;
use presenzia_core::imaging::{encode_png, RgbImage};
use presenzia_core::metric::calibrate_distances;
use presenzia_core::synthetic::{render, SyntheticSpec};
use presenzia_core::{FacePipeline, RecognitionConfig};
use presenzia_service::{App, ServiceConfig};
use serde_json::{json, Value};
use std::path::PathBuf;
use std::sync::Arc;
use tokio::net::TcpListener;
use tokio::sync::oneshot;

pub const ADMIN_TOKEN: &str = "test-admin-token-0123456789";

/// Identity images used across the service tests.
pub fn spec(identities: usize) -> SyntheticSpec {
    SyntheticSpec { identities, images_per_identity: 8, seed: 7, ..Default::default() }
}

/// Renderings 1..=3 are used for enrollment; 4 and above are probe frames.
pub fn enrollment_images(spec: &SyntheticSpec, identity: usize) -> Vec<RgbImage> {
    (1..=3).map(|i| render(spec, identity, i)).collect()
}

pub fn probe(spec: &SyntheticSpec, identity: usize, index: u32) -> RgbImage {
    render(spec, identity, 3 + index)
}

pub fn png(img: &RgbImage) -> Vec<u8> {
    encode_png(img)
}

pub fn b64(img: &RgbImage) -> String {
    base64::engine::general_purpose::STANDARD.encode(encode_png(img))
}

/// Rejection threshold calibrated on held-out renderings (indices 6..=8) of
/// the enrolled identities plus strangers, with the reference pipeline.
pub fn calibrated_recognition(spec: &SyntheticSpec) -> RecognitionConfig {
    let p = FacePipeline::reference();
    let n = spec.identities + 3;
    let emb = |id: usize, i: u32| p.embed_primary_face(&render(spec, id, i)).unwrap().1;
    let mut samples = Vec::new();
    for a in 0..n {
        samples.push((presenzia_core::squared_l2_distance(&emb(a, 6), &emb(a, 7)), true));
        samples.push((presenzia_core::squared_l2_distance(&emb(a, 6), &emb((a + 1) % n, 8)), false));
    }
    let r = calibrate_distances(&samples).unwrap();
    assert_eq!(r.accuracy, 1.0, "synthetic identities must be separable for these tests");
    RecognitionConfig { k: 3, tau: r.threshold }
}

pub fn test_config(dir: &std::path::Path, spec: &SyntheticSpec) -> ServiceConfig {
    let mut cfg = ServiceConfig {
        listen: "127.0.0.1:0".into(),
        store: dir.join("store.db").display().to_string(),
        admin_token: Some(ADMIN_TOKEN.into()),
        recognition: calibrated_recognition(spec),
        ..Default::default()
    };
    cfg.tracking.n_miss = 3;
    cfg
}

pub struct TestServer {
    pub base: String,
    pub app: Arc<App>,
    pub client: reqwest::Client,
    shutdown: Option<oneshot::Sender<()>>,
    handle: Option<tokio::task::JoinHandle<std::io::Result<()>>>,
}

impl TestServer {
    pub async fn start(cfg: ServiceConfig) -> TestServer {
        let app = Arc::new(tokio::task::spawn_blocking(move || App::open(cfg).unwrap()).await.unwrap());
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = oneshot::channel();
        let handle = tokio::spawn(presenzia_service::server::serve(app.clone(), listener, async {
            let _ = rx.await;
        }));
        TestServer { base, app, client: reqwest::Client::new(), shutdown: Some(tx), handle: Some(handle) }
    }

    pub async fn stop(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(h) = self.handle.take() {
            h.await.unwrap().unwrap();
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn get(&self, path: &str, token: &str) -> (u16, Value) {
        let r = self.client.get(self.url(path)).bearer_auth(token).send().await.unwrap();
        split(r).await
    }

    pub async fn post_json(&self, path: &str, token: &str, body: &Value) -> (u16, Value) {
        let r = self.client.post(self.url(path)).bearer_auth(token).json(body).send().await.unwrap();
        split(r).await
    }

    pub async fn put_json(&self, path: &str, token: &str, body: &Value) -> (u16, Value) {
        let r = self.client.put(self.url(path)).bearer_auth(token).json(body).send().await.unwrap();
        split(r).await
    }

    pub async fn delete(&self, path: &str, token: &str) -> (u16, Value) {
        let r = self.client.delete(self.url(path)).bearer_auth(token).send().await.unwrap();
        split(r).await
    }

    pub async fn post_bytes(&self, path: &str, token: &str, bytes: Vec<u8>, content_type: &str) -> (u16, Value) {
        let r = self
            .client
            .post(self.url(path))
            .bearer_auth(token)
            .header("content-type", content_type)
            .body(bytes)
            .send()
            .await
            .unwrap();
        split(r).await
    }

    pub async fn enroll(&self, id: &str, images: &[RgbImage]) -> (u16, Value) {
        let body = json!({
            "employee_id": id,
            "name": format!("Employee {id}"),
            "contact": format!("{id}@corp.example"),
            "images": images.iter().map(b64).collect::<Vec<_>>(),
        });
        self.post_json("/employees", ADMIN_TOKEN, &body).await
    }

    pub async fn token(&self, principal: &str, role: &str) -> String {
        let (s, v) = self.post_json("/tokens", ADMIN_TOKEN, &json!({"principal_id": principal, "role": role})).await;
        assert_eq!(s, 201, "{v}");
        v["token"].as_str().unwrap().to_string()
    }

    pub async fn frame(&self, session: &str, token: &str, img: &RgbImage) -> (u16, Value) {
        self.post_bytes(&format!("/sessions/{session}/frames"), token, png(img), "image/png").await
    }
}

pub async fn split(r: reqwest::Response) -> (u16, Value) {
    let status = r.status().as_u16();
    let text = r.text().await.unwrap();
    let v = if text.is_empty() { Value::Null } else { serde_json::from_str(&text).unwrap_or(Value::String(text)) };
    (status, v)
}

pub fn alert_log_lines(cfg_store: &std::path::Path) -> Vec<Value> {
    let mut p = cfg_store.as_os_str().to_owned();
    p.push(".alerts.jsonl");
    let text = std::fs::read_to_string(PathBuf::from(p)).unwrap_or_default();
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}


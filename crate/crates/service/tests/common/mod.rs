#![allow(dead_code)]

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use lexgap_service::{router, AppState, AuthMode, ServiceConfig, Store};
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

pub const ADMIN: &str = "admin-secret";
pub const TTL_MS: u64 = 3_600_000;

pub struct Harness {
    pub app: Router,
    pub state: Arc<AppState>,
    pub clock: Arc<AtomicU64>,
    pub dir: TempDir,
}

pub struct Reply {
    pub status: StatusCode,
    pub body: String,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.body))
    }

    pub fn code(&self) -> String {
        self.json()["error"].as_str().unwrap_or_default().to_string()
    }
}

impl Harness {
    pub fn new() -> Self {
        Self::with_mode(AuthMode::Token)
    }

    pub fn with_mode(auth_mode: AuthMode) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = ServiceConfig {
            data_dir: dir.path().to_path_buf(),
            auth_mode,
            admin_token: Some(ADMIN.into()),
            token_ttl_ms: TTL_MS,
            ..ServiceConfig::default()
        };
        let clock = Arc::new(AtomicU64::new(1_000));
        let c = clock.clone();
        let (store, _) = Store::open(dir.path()).unwrap();
        let state = AppState::new(store, config, Arc::new(move || c.load(Ordering::SeqCst)));
        Self {
            app: router(state.clone()),
            state,
            clock,
            dir,
        }
    }

    pub fn advance(&self, ms: u64) {
        self.clock.fetch_add(ms, Ordering::SeqCst);
    }

    pub fn events(&self) -> u64 {
        self.state.store().last_seq()
    }

    pub async fn call(&self, method: &str, path: &str, token: Option<&str>, body: &str) -> Reply {
        let mut req = Request::builder().method(method).uri(format!("/api/v1{path}"));
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let resp = self
            .app
            .clone()
            .oneshot(req.body(Body::from(body.to_string())).unwrap())
            .await
            .unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        Reply {
            status,
            body: String::from_utf8(bytes.to_vec()).unwrap(),
        }
    }

    pub async fn admin(&self, method: &str, path: &str, body: &str) -> Reply {
        self.call(method, path, Some(ADMIN), body).await
    }

    pub async fn login(&self, worker: &str) -> String {
        let r = self.call("POST", "/login", None, &format!(r#"{{"worker":"{worker}"}}"#)).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.body);
        r.json()["token"].as_str().unwrap().to_string()
    }
}

pub const SOURCE: &str = "word,gloss\ncider,fermented apple drink\nbanana,long yellow fruit\nkibbeh,bulgur dish\npudding,sweet dessert\n";
pub const TARGET: &str = "word,gloss\nموز,فاكهة طويلة\nكبة,طبق برغل\n";
pub const ACQS: &str = "word,gloss,expected_answer\nsnowball,a ball of snow,GAP\n";

/// Creates a campaign with one four-question task and registers workers.
pub async fn setup(h: &Harness) -> String {
    let r = h
        .admin(
            "POST",
            "/experiments",
            r#"{"description":"food","date":"2024-03-01","source_language":"eng","target_language":"arb","field":"food","questions_per_task":4,"acqs_per_task":1}"#,
        )
        .await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
    let id = r.json()["id"].as_str().unwrap().to_string();
    for (path, csv) in [("source", SOURCE), ("target", TARGET), ("acq-bank", ACQS)] {
        let r = h.admin("POST", &format!("/experiments/{id}/{path}"), csv).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    }
    for (w, role) in [
        ("w1", "qualified"),
        ("w2", "qualified"),
        ("w3", "qualified"),
        ("r1", "qualified"),
        ("exp", "expert"),
    ] {
        let r = h
            .admin("POST", "/workers", &format!(r#"{{"worker":"{w}","role":"{role}"}}"#))
            .await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
    }
    let r = h.admin("POST", &format!("/experiments/{id}/tasks"), "").await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
    id
}

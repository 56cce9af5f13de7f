//! Exposure-protocol conformance over real sockets.

mod common;

use std::sync::{Arc, Mutex};

use serde_json::json;
use y1jamlab_core::y1::consumer::{self, consumer_router, ConsumerCore, ConsumerError};
use y1jamlab_core::y1::producer::{producer_router, ProducerConfig, ProducerCore, SUBSCRIBE_PATH};
use y1jamlab_core::y1::tls::{self, TlsMode, TlsPaths};
use y1jamlab_core::y1::wire::{SubscriptionRequest, Trigger};

async fn spawn_plain_producer() -> (std::net::SocketAddr, Arc<Mutex<ProducerCore>>) {
    let core = Arc::new(Mutex::new(ProducerCore::new(ProducerConfig::default())));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let router = producer_router(core.clone());
    tokio::spawn(async move {
        let _ = axum::serve(listener, router).await;
    });
    (addr, core)
}

fn subscribe_url(addr: std::net::SocketAddr) -> String {
    format!("http://{addr}{SUBSCRIBE_PATH}")
}

#[tokio::test]
async fn subscribe_over_http_returns_201_with_id() {
    let (addr, _core) = spawn_plain_producer().await;
    let client = reqwest::Client::new();
    let resp = client
        .post(subscribe_url(addr))
        .json(&SubscriptionRequest::periodic(
            1.0,
            "https://consumer:8443/notify",
        ))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 201);
    let body: serde_json::Value = resp.json().await.unwrap();
    let id = body["id"].as_str().unwrap();
    assert_eq!(id.len(), 32);
    assert_eq!(body["state"], "ACTIVE");
}

#[tokio::test]
async fn subscribe_rejections_over_http() {
    let (addr, _core) = spawn_plain_producer().await;
    let client = reqwest::Client::new();

    let mut bogus = SubscriptionRequest::periodic(1.0, "https://c/notify");
    bogus.rai_type = "bogus".into();
    let resp = client
        .post(subscribe_url(addr))
        .json(&bogus)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 400);

    let mut event = SubscriptionRequest::periodic(1.0, "https://c/notify");
    event.notification_criteria.trigger = Trigger::Event;
    let resp = client
        .post(subscribe_url(addr))
        .json(&event)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 400);

    let resp = client
        .post(subscribe_url(addr))
        .body("{not json")
        .header("content-type", "application/json")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 400);
}

#[tokio::test]
async fn unsubscribe_and_update_over_http() {
    let (addr, _core) = spawn_plain_producer().await;
    let client = reqwest::Client::new();
    let id = {
        let resp = client
            .post(subscribe_url(addr))
            .json(&SubscriptionRequest::periodic(1.0, "https://c/notify"))
            .send()
            .await
            .unwrap();
        resp.json::<serde_json::Value>().await.unwrap()["id"]
            .as_str()
            .unwrap()
            .to_string()
    };

    let update_url = format!("http://{addr}/Y1_RAI_Subscriptions/v1/subscriptions/{id}");
    let resp = client
        .put(&update_url)
        .json(&json!({"notificationCriteria": {"periodSeconds": 5.0}}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    let body: serde_json::Value = resp.json().await.unwrap();
    assert_eq!(
        body["request"]["notificationCriteria"]["periodSeconds"],
        5.0
    );

    let resp = client
        .put(&update_url)
        .json(&json!({"notificationTargetAddress": "https://elsewhere/notify"}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 400);

    let unsub = format!("http://{addr}/Y1_RAI_Subscriptions/v1/subscriptions/unsubscribe?id={id}");
    assert_eq!(client.delete(&unsub).send().await.unwrap().status(), 204);
    assert_eq!(client.delete(&unsub).send().await.unwrap().status(), 404);
    assert_eq!(
        client
            .put(&update_url)
            .json(&json!({}))
            .send()
            .await
            .unwrap()
            .status(),
        404
    );
}

#[tokio::test]
async fn notify_endpoint_accepts_and_rejects() {
    let core = Arc::new(Mutex::new(ConsumerCore::default()));
    core.lock().unwrap().set_subscription("abc".into());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let router = consumer_router(core.clone());
    tokio::spawn(async move {
        let _ = axum::serve(listener, router).await;
    });

    let client = reqwest::Client::new();
    let url = format!("http://{addr}/notify");
    let payload = json!({
        "subscription_id": "abc",
        "rai_content": {"dl_bitrate_bps": 4.0e6},
        "timestamp": "2025-01-01T00:00:05Z",
        "validity_period": 1,
    });
    assert_eq!(
        client
            .post(&url)
            .json(&payload)
            .send()
            .await
            .unwrap()
            .status(),
        200
    );
    assert_eq!(core.lock().unwrap().state.received_count, 1);

    // Truncated JSON never reaches the core.
    let resp = client
        .post(&url)
        .body("{\"subscription_id\": \"abc\"")
        .header("content-type", "application/json")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 400);
    assert_eq!(core.lock().unwrap().state.received_count, 1);

    // Stale id: tolerated, dropped.
    let stale = json!({
        "subscription_id": "old",
        "rai_content": {},
        "timestamp": "2025-01-01T00:00:06Z",
        "validity_period": 1,
    });
    assert_eq!(
        client
            .post(&url)
            .json(&stale)
            .send()
            .await
            .unwrap()
            .status(),
        200
    );
    assert_eq!(core.lock().unwrap().state.received_count, 1);
}

#[tokio::test]
async fn consumer_subscribe_error_paths() {
    let shared = Arc::new(Mutex::new(ConsumerCore::default()));
    let client = reqwest::Client::new();

    // Nothing listening on this port.
    let err = consumer::subscribe(
        &shared,
        &client,
        "http://127.0.0.1:1",
        &SubscriptionRequest::periodic(1.0, "https://c/notify"),
    )
    .await
    .unwrap_err();
    assert!(matches!(err, ConsumerError::ConnectionFailed(_)));
    assert!(shared.lock().unwrap().state.subscription_id.is_none());

    let (addr, _core) = spawn_plain_producer().await;
    let mut bad = SubscriptionRequest::periodic(1.0, "https://c/notify");
    bad.rai_type = "bogus".into();
    let err = consumer::subscribe(&shared, &client, &format!("http://{addr}"), &bad)
        .await
        .unwrap_err();
    assert!(matches!(err, ConsumerError::Rejected { status: 400, .. }));

    let ok = consumer::subscribe(
        &shared,
        &client,
        &format!("http://{addr}"),
        &SubscriptionRequest::periodic(1.0, "https://c/notify"),
    )
    .await
    .unwrap();
    assert_eq!(
        shared.lock().unwrap().state.subscription_id.as_deref(),
        Some(ok.as_str())
    );
}

#[tokio::test]
async fn mutual_tls_gates_the_producer() {
    let certs = common::generate_test_certs();
    let paths = TlsPaths {
        cert: certs.cert_path.clone(),
        key: certs.key_path.clone(),
        ca: certs.ca_path.clone(),
    };

    let core = Arc::new(Mutex::new(ProducerCore::new(ProducerConfig::default())));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let port = listener.local_addr().unwrap().port();
    let config = tls::server_config(&paths).unwrap();
    let router = producer_router(core.clone());
    tokio::spawn(async move {
        let _ = tls::serve_mutual_tls(listener, config, router).await;
    });

    let url = format!("https://localhost:{port}{SUBSCRIBE_PATH}");
    let req = SubscriptionRequest::periodic(1.0, "https://localhost:9/notify");

    // Client that trusts the CA but presents no certificate: rejected at
    // the handshake, before any payload is exchanged.
    let ca_pem = std::fs::read(&certs.ca_path).unwrap();
    let no_identity = reqwest::Client::builder()
        .use_rustls_tls()
        .add_root_certificate(reqwest::Certificate::from_pem(&ca_pem).unwrap())
        .tls_built_in_root_certs(false)
        .build()
        .unwrap();
    let err = no_identity.post(&url).json(&req).send().await;
    assert!(
        err.is_err(),
        "certless client must not complete the exchange: {err:?}"
    );
    assert_eq!(core.lock().unwrap().active_count(), 0);

    // Full mutual identity: accepted.
    let with_identity = tls::http_client(&TlsMode::Mutual(paths)).unwrap();
    let resp = with_identity.post(&url).json(&req).send().await.unwrap();
    assert_eq!(resp.status(), 201);
    assert_eq!(core.lock().unwrap().active_count(), 1);
}

#[test]
fn tls_mode_from_env_requires_all_or_none() {
    // Sequential env manipulation in one test to avoid races.
    let vars = [
        tls::ENV_TLS_CERT,
        tls::ENV_TLS_KEY,
        tls::ENV_TLS_CA,
        tls::ENV_TLS_DISABLE,
    ];
    let clear = || {
        for v in vars {
            std::env::remove_var(v);
        }
    };

    clear();
    assert_eq!(TlsMode::from_env().unwrap(), TlsMode::Disabled);

    std::env::set_var(tls::ENV_TLS_CERT, "/tmp/a.pem");
    assert!(TlsMode::from_env().is_err());

    std::env::set_var(tls::ENV_TLS_KEY, "/tmp/a.key");
    std::env::set_var(tls::ENV_TLS_CA, "/tmp/ca.pem");
    let mode = TlsMode::from_env().unwrap();
    assert!(mode.is_mutual());

    std::env::set_var(tls::ENV_TLS_DISABLE, "1");
    assert_eq!(TlsMode::from_env().unwrap(), TlsMode::Disabled);
    clear();
}

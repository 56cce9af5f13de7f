//! Mutual TLS material and serving helpers.
//!
//! Certificate, key, and CA paths come from a config file or from the
//! `Y1_TLS_CERT` / `Y1_TLS_KEY` / `Y1_TLS_CA` environment variables;
//! `Y1_TLS_DISABLE=1` switches the whole stack to plaintext test mode.
//! In mTLS mode the server requires a client certificate chained to the
//! configured CA, so unauthenticated peers fail at the handshake and never
//! see a payload.

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use hyper_util::rt::{TokioExecutor, TokioIo};
use hyper_util::service::TowerToHyperService;
use rustls::pki_types::{CertificateDer, PrivateKeyDer};
use rustls::server::WebPkiClientVerifier;
use rustls::{RootCertStore, ServerConfig};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio_rustls::TlsAcceptor;

pub const ENV_TLS_CERT: &str = "Y1_TLS_CERT";
pub const ENV_TLS_KEY: &str = "Y1_TLS_KEY";
pub const ENV_TLS_CA: &str = "Y1_TLS_CA";
pub const ENV_TLS_DISABLE: &str = "Y1_TLS_DISABLE";

#[derive(Debug, Error)]
pub enum TlsError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no certificates found in {0}")]
    NoCerts(PathBuf),
    #[error("no private key found in {0}")]
    NoKey(PathBuf),
    #[error("tls setup failed: {0}")]
    Setup(String),
}

/// Paths to the PEM material of one endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TlsPaths {
    pub cert: PathBuf,
    pub key: PathBuf,
    pub ca: PathBuf,
}

/// Transport security mode shared by every service in a deployment.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TlsMode {
    /// Plaintext loopback test mode.
    #[default]
    Disabled,
    /// Mutual TLS with the given local identity and peer CA.
    Mutual(TlsPaths),
}

impl TlsMode {
    /// Resolves the mode from the environment. Returns `Disabled` when
    /// `Y1_TLS_DISABLE=1` or when no cert variables are set at all.
    pub fn from_env() -> Result<Self, TlsError> {
        if std::env::var(ENV_TLS_DISABLE)
            .map(|v| v == "1")
            .unwrap_or(false)
        {
            return Ok(TlsMode::Disabled);
        }
        match (
            std::env::var(ENV_TLS_CERT).ok(),
            std::env::var(ENV_TLS_KEY).ok(),
            std::env::var(ENV_TLS_CA).ok(),
        ) {
            (Some(cert), Some(key), Some(ca)) => Ok(TlsMode::Mutual(TlsPaths {
                cert: cert.into(),
                key: key.into(),
                ca: ca.into(),
            })),
            (None, None, None) => Ok(TlsMode::Disabled),
            _ => Err(TlsError::Setup(format!(
                "set all of {ENV_TLS_CERT}, {ENV_TLS_KEY}, {ENV_TLS_CA} or none"
            ))),
        }
    }

    pub fn is_mutual(&self) -> bool {
        matches!(self, TlsMode::Mutual(_))
    }
}

fn ensure_provider() {
    static INSTALLED: OnceLock<()> = OnceLock::new();
    INSTALLED.get_or_init(|| {
        let _ = rustls::crypto::ring::default_provider().install_default();
    });
}

fn read_certs(path: &Path) -> Result<Vec<CertificateDer<'static>>, TlsError> {
    let data = std::fs::read(path).map_err(|source| TlsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let certs: Vec<_> = rustls_pemfile::certs(&mut data.as_slice())
        .collect::<Result<_, _>>()
        .map_err(|source| TlsError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    if certs.is_empty() {
        return Err(TlsError::NoCerts(path.to_path_buf()));
    }
    Ok(certs)
}

fn read_key(path: &Path) -> Result<PrivateKeyDer<'static>, TlsError> {
    let data = std::fs::read(path).map_err(|source| TlsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    rustls_pemfile::private_key(&mut data.as_slice())
        .map_err(|source| TlsError::Io {
            path: path.to_path_buf(),
            source,
        })?
        .ok_or_else(|| TlsError::NoKey(path.to_path_buf()))
}

/// Server config that presents `cert`/`key` and requires client
/// certificates signed by `ca`.
pub fn server_config(paths: &TlsPaths) -> Result<Arc<ServerConfig>, TlsError> {
    ensure_provider();
    let certs = read_certs(&paths.cert)?;
    let key = read_key(&paths.key)?;
    let mut roots = RootCertStore::empty();
    for ca in read_certs(&paths.ca)? {
        roots.add(ca).map_err(|e| TlsError::Setup(e.to_string()))?;
    }
    let verifier = WebPkiClientVerifier::builder(Arc::new(roots))
        .build()
        .map_err(|e| TlsError::Setup(e.to_string()))?;
    let config = ServerConfig::builder()
        .with_client_cert_verifier(verifier)
        .with_single_cert(certs, key)
        .map_err(|e| TlsError::Setup(e.to_string()))?;
    Ok(Arc::new(config))
}

/// HTTP client honoring the mode: in mutual mode it presents the local
/// identity and trusts only the configured CA.
pub fn http_client(mode: &TlsMode) -> Result<reqwest::Client, TlsError> {
    let builder = reqwest::Client::builder().use_rustls_tls();
    let builder = match mode {
        TlsMode::Disabled => builder,
        TlsMode::Mutual(paths) => {
            let cert = std::fs::read(&paths.cert).map_err(|source| TlsError::Io {
                path: paths.cert.clone(),
                source,
            })?;
            let key = std::fs::read(&paths.key).map_err(|source| TlsError::Io {
                path: paths.key.clone(),
                source,
            })?;
            let identity = reqwest::Identity::from_pem(&[cert, key.clone()].concat())
                .map_err(|e| TlsError::Setup(e.to_string()))?;
            let ca = std::fs::read(&paths.ca).map_err(|source| TlsError::Io {
                path: paths.ca.clone(),
                source,
            })?;
            let ca =
                reqwest::Certificate::from_pem(&ca).map_err(|e| TlsError::Setup(e.to_string()))?;
            builder
                .identity(identity)
                .add_root_certificate(ca)
                .tls_built_in_root_certs(false)
        }
    };
    builder.build().map_err(|e| TlsError::Setup(e.to_string()))
}

/// Serves an axum router on the listener, terminating mutual TLS per
/// connection. Handshake failures (including missing client certificates)
/// drop the connection before any request is read.
pub async fn serve_mutual_tls(
    listener: TcpListener,
    config: Arc<ServerConfig>,
    router: axum::Router,
) -> std::io::Result<()> {
    let acceptor = TlsAcceptor::from(config);
    loop {
        let (tcp, peer) = listener.accept().await?;
        let acceptor = acceptor.clone();
        let service = TowerToHyperService::new(router.clone());
        tokio::spawn(async move {
            match acceptor.accept(tcp).await {
                Ok(stream) => {
                    let io = TokioIo::new(stream);
                    if let Err(e) =
                        hyper_util::server::conn::auto::Builder::new(TokioExecutor::new())
                            .serve_connection(io, service)
                            .await
                    {
                        tracing::debug!(%peer, "connection ended: {e}");
                    }
                }
                Err(e) => {
                    tracing::warn!(%peer, "tls handshake rejected: {e}");
                }
            }
        });
    }
}

/// Plaintext variant for test mode.
pub async fn serve_plain(listener: TcpListener, router: axum::Router) -> std::io::Result<()> {
    axum::serve(listener, router).await
}

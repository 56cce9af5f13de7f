//! Localhost socket deployment of the closed loop.
//!
//! The same cores as the in-process loop, but the producer and consumer are
//! real HTTP services (plaintext or mutual TLS), the relay is a real TCP
//! stream, and the jammer answers a driver over an NDJSON control socket.
//! The driver still owns the logical clock: each tick it requests one
//! decision, steps the link, dispatches notifications, and waits for the
//! analytics pipeline to settle, so a session replays the in-process run
//! exactly.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::tcp::OwnedWriteHalf;
use tokio::net::{TcpListener, TcpStream};
use tokio::task::JoinHandle;
use tokio::time::Instant;

use crate::jammer::{JamDecision, JammerCore};
use crate::ran_sim::LinkSimulator;
use crate::sdl_store::{CellKey, SdlStore};
use crate::y1::consumer::{self, consumer_router, ConsumerCore, SharedConsumer};
use crate::y1::producer::{
    dispatch_over_http, producer_router, ProducerConfig, ProducerCore, SharedProducer,
};
use crate::y1::tls::{self, TlsMode};
use crate::y1::wire::SubscriptionRequest;

use super::virtual_loop::{ClosedLoopResult, TickRecord};
use super::{EvalError, LiveOptions};

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ControlRequest {
    Decide { tick: u64 },
    Status,
    DumpLog,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlResponse {
    Decision { decision: JamDecision },
    Status { latest_tick: Option<u64> },
    Log { decisions: Vec<JamDecision> },
    Error { message: String },
}

fn handle_control(jam: &Arc<Mutex<JammerCore>>, line: &str) -> ControlResponse {
    match serde_json::from_str::<ControlRequest>(line) {
        Ok(ControlRequest::Decide { tick }) => ControlResponse::Decision {
            decision: jam.lock().unwrap().decide(tick),
        },
        Ok(ControlRequest::Status) => ControlResponse::Status {
            latest_tick: jam.lock().unwrap().latest_tick(),
        },
        Ok(ControlRequest::DumpLog) => ControlResponse::Log {
            decisions: jam.lock().unwrap().log().to_vec(),
        },
        Err(e) => ControlResponse::Error {
            message: e.to_string(),
        },
    }
}

/// Accepts relay connections and feeds lines into the jammer's
/// latest-analytics slot.
async fn relay_reader(listener: TcpListener, jam: Arc<Mutex<JammerCore>>) {
    loop {
        let Ok((stream, _)) = listener.accept().await else {
            return;
        };
        let mut lines = BufReader::new(stream).lines();
        while let Ok(Some(line)) = lines.next_line().await {
            jam.lock().unwrap().ingest_line(&line);
        }
    }
}

async fn control_server(listener: TcpListener, jam: Arc<Mutex<JammerCore>>) {
    loop {
        let Ok((stream, _)) = listener.accept().await else {
            return;
        };
        let (read, mut write) = stream.into_split();
        let mut lines = BufReader::new(read).lines();
        while let Ok(Some(line)) = lines.next_line().await {
            let mut text = serde_json::to_string(&handle_control(&jam, &line)).unwrap();
            text.push('\n');
            if write.write_all(text.as_bytes()).await.is_err() {
                break;
            }
        }
    }
}

/// Forwards consumer relay lines to the jammer, reconnecting with backoff;
/// after an outage only the newest pending line is sent.
async fn relay_pump(consumer: SharedConsumer, addr: std::net::SocketAddr) {
    let mut had_outage = false;
    let mut backoff = Duration::from_millis(20);
    loop {
        match TcpStream::connect(addr).await {
            Ok(mut stream) => {
                backoff = Duration::from_millis(20);
                if had_outage {
                    let newest = consumer.lock().unwrap().drain_relay_newest_only();
                    if let Some(line) = newest {
                        if stream.write_all(line.as_bytes()).await.is_err() {
                            continue;
                        }
                    }
                }
                loop {
                    let line = consumer.lock().unwrap().pop_relay();
                    match line {
                        Some(line) => {
                            if stream.write_all(line.as_bytes()).await.is_err() {
                                tracing::warn!("relay write failed, reconnecting");
                                had_outage = true;
                                break;
                            }
                        }
                        None => tokio::time::sleep(Duration::from_micros(500)).await,
                    }
                }
            }
            Err(_) => {
                had_outage = true;
                tokio::time::sleep(backoff).await;
                backoff = (backoff * 2).min(Duration::from_secs(1));
            }
        }
    }
}

struct ControlClient {
    lines: tokio::io::Lines<BufReader<tokio::net::tcp::OwnedReadHalf>>,
    write: OwnedWriteHalf,
}

impl ControlClient {
    async fn connect(addr: std::net::SocketAddr) -> Result<Self, EvalError> {
        let mut attempt = 0;
        let stream = loop {
            match TcpStream::connect(addr).await {
                Ok(s) => break s,
                Err(e) if attempt < 50 => {
                    attempt += 1;
                    tokio::time::sleep(Duration::from_millis(20)).await;
                    tracing::debug!("control connect retry: {e}");
                }
                Err(e) => return Err(EvalError::Runtime(format!("control connect: {e}"))),
            }
        };
        let (read, write) = stream.into_split();
        Ok(Self {
            lines: BufReader::new(read).lines(),
            write,
        })
    }

    async fn request(&mut self, req: &ControlRequest) -> Result<ControlResponse, EvalError> {
        let mut text = serde_json::to_string(req).map_err(|e| EvalError::Runtime(e.to_string()))?;
        text.push('\n');
        self.write
            .write_all(text.as_bytes())
            .await
            .map_err(|e| EvalError::Runtime(format!("control write: {e}")))?;
        let line = self
            .lines
            .next_line()
            .await
            .map_err(|e| EvalError::Runtime(format!("control read: {e}")))?
            .ok_or_else(|| EvalError::Runtime("control socket closed".into()))?;
        let resp: ControlResponse =
            serde_json::from_str(&line).map_err(|e| EvalError::Runtime(e.to_string()))?;
        if let ControlResponse::Error { message } = resp {
            return Err(EvalError::Runtime(format!(
                "jammer control error: {message}"
            )));
        }
        Ok(resp)
    }

    async fn decide(&mut self, tick: u64) -> Result<JamDecision, EvalError> {
        match self.request(&ControlRequest::Decide { tick }).await? {
            ControlResponse::Decision { decision } => Ok(decision),
            other => Err(EvalError::Runtime(format!(
                "unexpected control response {other:?}"
            ))),
        }
    }

    async fn latest_tick(&mut self) -> Result<Option<u64>, EvalError> {
        match self.request(&ControlRequest::Status).await? {
            ControlResponse::Status { latest_tick } => Ok(latest_tick),
            other => Err(EvalError::Runtime(format!(
                "unexpected control response {other:?}"
            ))),
        }
    }

    async fn dump_log(&mut self) -> Result<Vec<JamDecision>, EvalError> {
        match self.request(&ControlRequest::DumpLog).await? {
            ControlResponse::Log { decisions } => Ok(decisions),
            other => Err(EvalError::Runtime(format!(
                "unexpected control response {other:?}"
            ))),
        }
    }
}

async fn bind(port: u16) -> Result<TcpListener, EvalError> {
    let addr = format!("127.0.0.1:{port}");
    TcpListener::bind(&addr)
        .await
        .map_err(|source| EvalError::PortBind { addr, source })
}

fn spawn_http(
    listener: TcpListener,
    router: axum::Router,
    mode: &TlsMode,
) -> Result<JoinHandle<()>, EvalError> {
    match mode {
        TlsMode::Disabled => Ok(tokio::spawn(async move {
            let _ = tls::serve_plain(listener, router).await;
        })),
        TlsMode::Mutual(paths) => {
            let config =
                tls::server_config(paths).map_err(|e| EvalError::Runtime(e.to_string()))?;
            Ok(tokio::spawn(async move {
                let _ = tls::serve_mutual_tls(listener, config, router).await;
            }))
        }
    }
}

/// Settings for a standalone consumer deployment.
#[derive(Debug, Clone)]
pub struct ConsumerServiceOptions {
    pub listen_port: u16,
    pub producer_url: String,
    pub period_s: f64,
    pub relay_endpoint: std::net::SocketAddr,
    pub metrics_filter: Option<Vec<String>>,
    pub tls: TlsMode,
    /// Externally reachable notification URL; defaults to the bound
    /// loopback address.
    pub notify_url: Option<String>,
}

/// Runs the consumer as its own service: subscribes to a producer, serves
/// `/notify`, and streams accepted analytics to the jammer endpoint. Only
/// returns on a subscription failure; otherwise serves until the process
/// is killed.
pub async fn run_consumer_service(opts: ConsumerServiceOptions) -> Result<(), EvalError> {
    let listener = bind(opts.listen_port).await?;
    let addr = listener.local_addr()?;
    let consumer: SharedConsumer = Arc::new(Mutex::new(ConsumerCore::new(opts.metrics_filter)));
    let _server = spawn_http(listener, consumer_router(consumer.clone()), &opts.tls)?;

    let client = tls::http_client(&opts.tls).map_err(|e| EvalError::Runtime(e.to_string()))?;
    let scheme = if opts.tls.is_mutual() {
        "https"
    } else {
        "http"
    };
    let notify_url = opts
        .notify_url
        .clone()
        .unwrap_or_else(|| format!("{scheme}://127.0.0.1:{}/notify", addr.port()));
    let id = consumer::subscribe(
        &consumer,
        &client,
        &opts.producer_url,
        &SubscriptionRequest::periodic(opts.period_s, notify_url),
    )
    .await
    .map_err(|e| EvalError::Runtime(e.to_string()))?;
    tracing::info!(%id, listen = %addr, relay = %opts.relay_endpoint, "consumer subscribed");

    relay_pump(consumer, opts.relay_endpoint).await;
    Ok(())
}

/// Runs the session over localhost sockets; blocks until the scenario
/// completes and returns the same result shape as the in-process loop.
pub fn run_live(
    sim: &LinkSimulator,
    jammer: JammerCore,
    producer_config: ProducerConfig,
    period_s: f64,
    options: &LiveOptions,
) -> Result<ClosedLoopResult, EvalError> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()?;
    runtime.block_on(run_live_async(
        sim,
        jammer,
        producer_config,
        period_s,
        options,
    ))
}

async fn run_live_async(
    sim: &LinkSimulator,
    jammer: JammerCore,
    producer_config: ProducerConfig,
    period_s: f64,
    options: &LiveOptions,
) -> Result<ClosedLoopResult, EvalError> {
    let cell = CellKey {
        pci: sim.params.pci,
        carrier_id: sim.params.carrier_id,
    };
    let store = Arc::new(SdlStore::default());

    // Bind everything first so every address is known before wiring.
    let producer_listener = bind(options.producer_port).await?;
    let consumer_listener = bind(options.consumer_port).await?;
    let relay_listener = bind(options.relay_port).await?;
    let control_listener = bind(options.control_port).await?;
    let producer_addr = producer_listener.local_addr()?;
    let consumer_addr = consumer_listener.local_addr()?;
    let relay_addr = relay_listener.local_addr()?;
    let control_addr = control_listener.local_addr()?;

    // Startup order: producer, consumer, jammer, then the driver acts as
    // the simulator.
    let producer: SharedProducer = Arc::new(Mutex::new(ProducerCore::new(producer_config)));
    producer.lock().unwrap().set_clock(-1);
    let producer_task = spawn_http(
        producer_listener,
        producer_router(producer.clone()),
        &options.tls,
    )?;

    let consumer: SharedConsumer = Arc::new(Mutex::new(ConsumerCore::default()));
    let consumer_task = spawn_http(
        consumer_listener,
        consumer_router(consumer.clone()),
        &options.tls,
    )?;

    let jam = Arc::new(Mutex::new(jammer));
    let relay_task = tokio::spawn(relay_reader(relay_listener, jam.clone()));
    let control_task = tokio::spawn(control_server(control_listener, jam.clone()));
    let pump_task = tokio::spawn(relay_pump(consumer.clone(), relay_addr));

    let host = match &options.tls {
        // The test CA issues for "localhost"; plaintext dials the IP.
        TlsMode::Mutual(_) => "localhost".to_string(),
        TlsMode::Disabled => "127.0.0.1".to_string(),
    };
    let scheme = if options.tls.is_mutual() {
        "https"
    } else {
        "http"
    };
    let client = tls::http_client(&options.tls).map_err(|e| EvalError::Runtime(e.to_string()))?;
    let producer_url = format!("{scheme}://{host}:{}", producer_addr.port());
    let notify_target = format!("{scheme}://{host}:{}/notify", consumer_addr.port());

    let subscription_id = consumer::subscribe(
        &consumer,
        &client,
        &producer_url,
        &SubscriptionRequest::periodic(period_s, notify_target),
    )
    .await
    .map_err(|e| EvalError::Runtime(e.to_string()))?;

    let mut control = ControlClient::connect(control_addr).await?;
    let settle_timeout = Duration::from_millis(options.settle_timeout_ms);

    let mut per_tick = Vec::with_capacity(sim.total_ticks() as usize);
    for tick in 0..sim.total_ticks() {
        let tick_start = Instant::now();
        let decision = control.decide(tick).await?;
        let out = sim.step_tick(tick, decision.is_jam());
        store
            .put_sample(cell, out.sample.clone())
            .map_err(EvalError::Store)?;
        per_tick.push(TickRecord {
            tick,
            offered_rate_bps: out.offered_rate_bps,
            jam_active: out.jam_active,
            snr_db: out.snr_db,
            sample: out.sample,
        });

        let batch = producer.lock().unwrap().advance_clock(tick as i64, &store);
        let delivered_any = !batch.is_empty();
        dispatch_over_http(&producer, &client, batch).await;

        if delivered_any {
            // Wait for the notification to traverse consumer and relay so
            // the next decision sees this tick's analytics, exactly like
            // one wall-clock period would allow on real hardware.
            let deadline = Instant::now() + settle_timeout;
            loop {
                if control.latest_tick().await? == Some(tick) {
                    break;
                }
                if Instant::now() >= deadline {
                    tracing::warn!(tick, "analytics pipeline did not settle within timeout");
                    break;
                }
                tokio::time::sleep(Duration::from_micros(200)).await;
            }
        }
        if options.tick_ms > 0 {
            tokio::time::sleep_until(tick_start + Duration::from_millis(options.tick_ms)).await;
        }
    }

    let decisions = control.dump_log().await?;
    let notification_count = consumer.lock().unwrap().state.received_count;

    // Teardown in reverse order of startup.
    pump_task.abort();
    control_task.abort();
    relay_task.abort();
    consumer_task.abort();
    producer_task.abort();

    Ok(ClosedLoopResult {
        per_tick,
        decisions,
        notification_count,
        subscription_id,
    })
}

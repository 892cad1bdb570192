use std::io::{self, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, info, warn};

use crate::model::{load_net, trunk_forward, FeatureMask, HybridNet, Signature};
use crate::{Result, Scalar};

use super::wire::{encode_response, read_request, to_wire_score, Frame, ScoreResponse, SignatureRequest, Status};

/// Scores one decoded request. Depends only on the model and the payload;
/// the mask byte is ignored.
pub fn score_request<T: Scalar>(net: &HybridNet<T>, req: &SignatureRequest) -> ScoreResponse {
    if req.dim() != net.signature_dim() {
        return ScoreResponse::error(Status::DimMismatch);
    }
    if req.values.iter().any(|v| !v.is_finite()) {
        return ScoreResponse::error(Status::ServerError);
    }
    let sig = Signature {
        values: req.values.iter().map(|&v| T::of_f32(v)).collect(),
    };
    match trunk_forward(&sig, &net.trunk) {
        Ok(scores) if scores.iter().all(|s| s.is_finite()) => {
            ScoreResponse::ok(scores.into_iter().map(to_wire_score).collect())
        }
        _ => ScoreResponse::error(Status::ServerError),
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Idle connections are dropped after this long without a complete frame.
    pub read_timeout: Option<Duration>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            read_timeout: Some(Duration::from_secs(60)),
        }
    }
}

pub struct Server<T> {
    listener: TcpListener,
    net: Arc<HybridNet<T>>,
    config: ServerConfig,
}

/// Running server on a background thread.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting; in-flight connections finish on their own threads.
    pub fn shutdown(mut self) {
        self.stop_inner();
    }

    fn stop_inner(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.stop_inner();
        }
    }
}

impl<T: Scalar> Server<T> {
    pub fn bind(endpoint: impl ToSocketAddrs, net: HybridNet<T>, config: ServerConfig) -> Result<Self> {
        let listener = TcpListener::bind(endpoint)?;
        Ok(Self {
            listener,
            net: Arc::new(net),
            config,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts connections until `stop` is raised, one thread per connection.
    fn accept_loop(self, stop: &AtomicBool) {
        for conn in self.listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            match conn {
                Ok(stream) => {
                    let net = Arc::clone(&self.net);
                    let timeout = self.config.read_timeout;
                    thread::spawn(move || {
                        let peer = stream.peer_addr().ok();
                        if let Err(e) = handle_connection(stream, &net, timeout) {
                            debug!("connection {peer:?}: {e}");
                        }
                    });
                }
                Err(e) => warn!("accept failed: {e}"),
            }
        }
    }

    /// Blocks forever serving requests.
    pub fn run(self) {
        let stop = AtomicBool::new(false);
        self.accept_loop(&stop);
    }

    pub fn spawn(self) -> Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let thread = thread::Builder::new()
            .name("sigfuse-accept".into())
            .spawn(move || self.accept_loop(&flag))?;
        Ok(ServerHandle {
            addr,
            stop,
            thread: Some(thread),
        })
    }
}

fn handle_connection<T: Scalar>(
    mut stream: TcpStream,
    net: &HybridNet<T>,
    timeout: Option<Duration>,
) -> io::Result<()> {
    stream.set_read_timeout(timeout)?;
    stream.set_nodelay(true)?;
    loop {
        match read_request(&mut stream)? {
            Frame::Closed => return Ok(()),
            Frame::Bad(e) => {
                debug!("bad frame (code {}): {e}", e.code());
                stream.write_all(&encode_response(&ScoreResponse::error(e.status())))?;
                let _ = stream.shutdown(Shutdown::Both);
                return Ok(());
            }
            Frame::Ok(req) => {
                let resp = catch_unwind(AssertUnwindSafe(|| score_request(net, &req)))
                    .unwrap_or_else(|_| ScoreResponse::error(Status::ServerError));
                debug!(
                    "request mask={} dim={} status={:?}",
                    net.mask_label(FeatureMask::from_bits(req.mask)),
                    req.dim(),
                    resp.status
                );
                stream.write_all(&encode_response(&resp))?;
            }
        }
    }
}

/// Loads a model and serves it on `endpoint` until the process exits.
pub fn serve(model_path: &Path, endpoint: &str) -> Result<()> {
    let net: HybridNet<f64> = load_net(model_path)?;
    let server = Server::bind(endpoint, net, ServerConfig::default())?;
    info!("serving {} on {}", model_path.display(), server.local_addr()?);
    server.run();
    Ok(())
}

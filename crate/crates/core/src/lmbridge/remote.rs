use std::collections::HashMap;
use std::io;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{LmError, TokenDistribution, TokenId, TokenModel};

pub const DISTRIBUTION_PATH: &str = "/v1/next_token_distribution";

const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Serialize, Deserialize)]
struct Request {
    context: Vec<TokenId>,
}

#[derive(Serialize, Deserialize)]
struct Reply {
    probs: HashMap<String, f64>,
}

/// HTTP client for the next-token protocol with a per-context cache.
pub struct RemoteTokenModel {
    agent: ureq::Agent,
    url: String,
    bos: TokenId,
    eos: TokenId,
    retries: u32,
    backoff: Duration,
    cache: Mutex<HashMap<Vec<TokenId>, Arc<TokenDistribution>>>,
    requests: AtomicU64,
}

pub fn remote_token_model(endpoint: &str, timeout: Duration, retries: u32, bos: TokenId, eos: TokenId) -> RemoteTokenModel {
    RemoteTokenModel {
        agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        url: format!("{}{DISTRIBUTION_PATH}", endpoint.trim_end_matches('/')),
        bos,
        eos,
        retries,
        backoff: Duration::from_millis(50),
        cache: Mutex::new(HashMap::new()),
        requests: AtomicU64::new(0),
    }
}

fn parse_reply(body: &str) -> Result<TokenDistribution, LmError> {
    let reply: Reply = serde_json::from_str(body).map_err(|e| LmError::Protocol(e.to_string()))?;
    let mut out = TokenDistribution::with_capacity(reply.probs.len());
    for (k, p) in reply.probs {
        let t = k.parse::<TokenId>().map_err(|_| LmError::Protocol(format!("token key `{k}` is not an id")))?;
        if !p.is_finite() || p < 0.0 {
            return Err(LmError::Protocol(format!("probability {p} of token {t}")));
        }
        out.insert(t, p);
    }
    let total: f64 = out.values().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(LmError::Protocol(format!("probabilities sum to {total}")));
    }
    Ok(out)
}

impl RemoteTokenModel {
    /// First delay between retries; doubled after every attempt.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    /// Network requests issued so far, retries included.
    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    fn fetch(&self, context: &[TokenId]) -> Result<TokenDistribution, LmError> {
        let body = serde_json::to_string(&Request { context: context.to_vec() }).expect("serializable");
        let mut delay = self.backoff;
        let mut attempt = 0;
        loop {
            self.requests.fetch_add(1, Ordering::Relaxed);
            let outcome = self
                .agent
                .post(&self.url)
                .set("Content-Type", "application/json")
                .send_string(&body);
            let failure = match outcome {
                Ok(resp) if resp.status() == 200 => {
                    let text = resp.into_string().map_err(|e| LmError::Transport(e.to_string()))?;
                    return parse_reply(&text);
                }
                Ok(resp) => format!("status {}", resp.status()),
                Err(ureq::Error::Status(code, _)) => format!("status {code}"),
                Err(e) => e.to_string(),
            };
            if attempt >= self.retries {
                return Err(LmError::Transport(format!("{failure} after {} attempts", attempt + 1)));
            }
            log::debug!("retrying {} after {failure}", self.url);
            std::thread::sleep(delay);
            delay *= 2;
            attempt += 1;
        }
    }
}

impl TokenModel for RemoteTokenModel {
    fn bos(&self) -> TokenId {
        self.bos
    }

    fn eos(&self) -> TokenId {
        self.eos
    }

    fn vocab(&self) -> Option<Vec<TokenId>> {
        None
    }

    fn next_tokens(&self, context: &[TokenId]) -> Result<Arc<TokenDistribution>, LmError> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(context) {
            return Ok(hit.clone());
        }
        let d = Arc::new(self.fetch(context)?);
        self.cache.lock().expect("cache lock").insert(context.to_vec(), d.clone());
        Ok(d)
    }
}

/// What the mock server sends back for one context.
#[derive(Debug, Clone, PartialEq)]
pub enum MockReply {
    Probs(TokenDistribution),
    Status(u16),
    /// Body sent verbatim with status 200.
    Raw(String),
}

/// In-process HTTP server speaking the next-token protocol on 127.0.0.1.
pub struct MockServer {
    server: Arc<tiny_http::Server>,
    worker: Option<JoinHandle<()>>,
    url: String,
    requests: Arc<AtomicU64>,
}

impl MockServer {
    pub fn start<F>(handler: F) -> io::Result<MockServer>
    where
        F: Fn(&[TokenId]) -> MockReply + Send + 'static,
    {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").map_err(io::Error::other)?);
        let addr = server.server_addr().to_ip().ok_or_else(|| io::Error::other("no IP listen address"))?;
        let requests = Arc::new(AtomicU64::new(0));
        let worker = {
            let (server, requests) = (server.clone(), requests.clone());
            std::thread::spawn(move || {
                for mut rq in server.incoming_requests() {
                    requests.fetch_add(1, Ordering::Relaxed);
                    let json = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("valid header");
                    let reply = if rq.url() != DISTRIBUTION_PATH || *rq.method() != tiny_http::Method::Post {
                        MockReply::Status(404)
                    } else {
                        let mut body = String::new();
                        match rq.as_reader().read_to_string(&mut body).ok().and_then(|_| serde_json::from_str::<Request>(&body).ok()) {
                            Some(req) => handler(&req.context),
                            None => MockReply::Status(400),
                        }
                    };
                    let response = match reply {
                        MockReply::Probs(p) => {
                            let probs = p.into_iter().map(|(t, x)| (t.to_string(), x)).collect();
                            tiny_http::Response::from_string(serde_json::to_string(&Reply { probs }).expect("serializable"))
                                .with_header(json)
                        }
                        MockReply::Raw(s) => tiny_http::Response::from_string(s).with_header(json),
                        MockReply::Status(code) => tiny_http::Response::from_string("").with_status_code(code),
                    };
                    let _ = rq.respond(response);
                }
            })
        };
        Ok(MockServer { server, worker: Some(worker), url: format!("http://{addr}"), requests })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

/// Serves `model` verbatim; model errors become status 500.
pub fn serve_model<M: TokenModel + 'static>(model: M) -> io::Result<MockServer> {
    MockServer::start(move |ctx| match model.next_tokens(ctx) {
        Ok(d) => MockReply::Probs((*d).clone()),
        Err(_) => MockReply::Status(500),
    })
}

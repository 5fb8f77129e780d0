use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::GatewayError;

/// Connection settings shared by the remote chat and embedding backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub url: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Extra attempts after the first failed one.
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    2
}

fn default_backoff_ms() -> u64 {
    250
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            api_key: None,
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn with_retries(mut self, retries: u32, backoff_ms: u64) -> Self {
        self.retries = retries;
        self.backoff_ms = backoff_ms;
        self
    }

    pub fn with_timeout_ms(mut self, timeout_ms: u64) -> Self {
        self.timeout_ms = timeout_ms;
        self
    }
}

/// Blocking JSON POST with bounded retry. The client is built on first use
/// so that it is never created or dropped on an async executor thread.
pub(crate) struct JsonPoster {
    backend_id: String,
    config: RemoteConfig,
    client: OnceLock<reqwest::blocking::Client>,
}

impl JsonPoster {
    pub fn new(backend_id: String, config: RemoteConfig) -> Self {
        Self {
            backend_id,
            config,
            client: OnceLock::new(),
        }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn client(&self) -> Result<&reqwest::blocking::Client, GatewayError> {
        if let Some(c) = self.client.get() {
            return Ok(c);
        }
        let c = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(self.config.timeout_ms))
            .build()
            .map_err(|e| GatewayError::Config(format!("building http client: {e}")))?;
        Ok(self.client.get_or_init(|| c))
    }

    pub fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(&self, body: &Req) -> Result<Resp, GatewayError> {
        let client = self.client()?;
        let attempts = self.config.retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms * u64::from(attempt - 1)));
            }
            let mut req = client.post(&self.config.url).json(body);
            if let Some(key) = &self.config.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    let text = resp.text().map_err(|e| GatewayError::Transport {
                        backend: self.backend_id.clone(),
                        attempts: attempt,
                        message: e.to_string(),
                    })?;
                    return serde_json::from_str(&text).map_err(|e| GatewayError::Protocol {
                        backend: self.backend_id.clone(),
                        message: format!("{e}: {text}"),
                    });
                }
                Ok(resp) if resp.status().is_server_error() || resp.status().as_u16() == 429 => {
                    last = format!("http status {}", resp.status());
                }
                Ok(resp) => {
                    return Err(GatewayError::Protocol {
                        backend: self.backend_id.clone(),
                        message: format!("http status {}", resp.status()),
                    })
                }
                Err(e) => last = e.to_string(),
            }
            log::warn!("{}: attempt {attempt}/{attempts} failed: {last}", self.backend_id);
        }
        Err(GatewayError::Transport {
            backend: self.backend_id.clone(),
            attempts,
            message: last,
        })
    }

    /// Cheap reachability check: a TCP connect to the configured host.
    pub fn probe(&self) -> bool {
        let Ok(url) = reqwest::Url::parse(&self.config.url) else {
            return false;
        };
        let (Some(host), Some(port)) = (url.host_str(), url.port_or_known_default()) else {
            return false;
        };
        use std::net::ToSocketAddrs;
        let Ok(mut addrs) = (host, port).to_socket_addrs() else {
            return false;
        };
        addrs.any(|a| std::net::TcpStream::connect_timeout(&a, Duration::from_millis(500)).is_ok())
    }
}

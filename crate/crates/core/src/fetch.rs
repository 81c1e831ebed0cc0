//! Pulls verified contract sources from an Etherscan-compatible explorer API.

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use serde::Deserialize;

pub const DEFAULT_EXPLORER_URL: &str = "https://api.etherscan.io/api";
pub const API_KEY_ENV: &str = "VOLCANO_EXPLORER_KEY";

#[derive(Debug, thiserror::Error)]
pub enum FetchError {
    #[error("invalid address {0:?}: expected 0x followed by 40 hex digits")]
    InvalidAddress(String),
    #[error("missing explorer API key (set {API_KEY_ENV})")]
    MissingApiKey,
    #[error("contract {0} has no verified source")]
    NotVerified(String),
    #[error("rate limited after {attempts} attempts for {address}")]
    RateLimited { address: String, attempts: u32 },
    #[error("explorer rejected request for {address}: {message}")]
    Rejected { address: String, message: String },
    #[error("transport error for {address}: {message}")]
    Transport { address: String, message: String },
    #[error("malformed explorer response for {address}: {message}")]
    Malformed { address: String, message: String },
    #[error("failed to write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Request pacing and retry policy.
#[derive(Debug, Clone, Copy)]
pub struct RateBudget {
    pub requests_per_second: u32,
    pub max_retries: u32,
    pub backoff_base: Duration,
}

impl Default for RateBudget {
    fn default() -> Self {
        RateBudget {
            requests_per_second: 5,
            max_retries: 3,
            backoff_base: Duration::from_secs(1),
        }
    }
}

impl RateBudget {
    fn min_interval(&self) -> Duration {
        Duration::from_secs(1) / self.requests_per_second.max(1)
    }
}

#[derive(Debug, Deserialize)]
struct ApiResponse {
    status: String,
    #[serde(default)]
    message: String,
    result: serde_json::Value,
}

#[derive(Debug, Deserialize)]
struct SourceEntry {
    #[serde(rename = "SourceCode", default)]
    source_code: String,
}

/// Result of a successful fetch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchedSource {
    pub address: String,
    pub path: PathBuf,
    pub bytes: usize,
}

pub struct ExplorerClient {
    base_url: String,
    api_key: String,
    budget: RateBudget,
    agent: ureq::Agent,
    last_request: Option<Instant>,
}

pub fn validate_address(address: &str) -> Result<String, FetchError> {
    let hex = address
        .strip_prefix("0x")
        .or_else(|| address.strip_prefix("0X"))
        .ok_or_else(|| FetchError::InvalidAddress(address.to_string()))?;
    if hex.len() != 40 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(FetchError::InvalidAddress(address.to_string()));
    }
    Ok(format!("0x{}", hex.to_ascii_lowercase()))
}

fn is_rate_limit_message(text: &str) -> bool {
    let t = text.to_ascii_lowercase();
    t.contains("rate limit") || t.contains("max calls")
}

impl ExplorerClient {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Result<Self, FetchError> {
        let api_key = api_key.into();
        if api_key.trim().is_empty() {
            return Err(FetchError::MissingApiKey);
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Ok(ExplorerClient {
            base_url: base_url.into(),
            api_key,
            budget: RateBudget::default(),
            agent,
            last_request: None,
        })
    }

    /// Reads the key from `VOLCANO_EXPLORER_KEY`.
    pub fn from_env(base_url: impl Into<String>) -> Result<Self, FetchError> {
        let key = std::env::var(API_KEY_ENV).unwrap_or_default();
        Self::new(base_url, key)
    }

    pub fn with_budget(mut self, budget: RateBudget) -> Self {
        self.budget = budget;
        self
    }

    fn pace(&mut self) {
        if let Some(last) = self.last_request {
            let wait = self.budget.min_interval().saturating_sub(last.elapsed());
            if !wait.is_zero() {
                thread::sleep(wait);
            }
        }
        self.last_request = Some(Instant::now());
    }

    /// Returns the verified source text of `address`.
    pub fn fetch_source(&mut self, address: &str) -> Result<String, FetchError> {
        let address = validate_address(address)?;
        let attempts = self.budget.max_retries + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.budget.backoff_base * 2u32.pow(attempt - 1));
            }
            self.pace();
            match self.request_once(&address)? {
                Some(source) => return Ok(source),
                None => continue,
            }
        }
        Err(FetchError::RateLimited { address, attempts })
    }

    /// `Ok(None)` signals a retryable throttle response.
    fn request_once(&self, address: &str) -> Result<Option<String>, FetchError> {
        let transport = |e: ureq::Error| FetchError::Transport {
            address: address.to_string(),
            message: e.to_string(),
        };
        let mut resp = self
            .agent
            .get(&self.base_url)
            .query("module", "contract")
            .query("action", "getsourcecode")
            .query("address", address)
            .query("apikey", &self.api_key)
            .call()
            .map_err(transport)?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Ok(None);
        }
        let body = resp.body_mut().read_to_string().map_err(transport)?;
        if status != 200 {
            return Err(FetchError::Rejected {
                address: address.to_string(),
                message: format!("HTTP {status}"),
            });
        }
        let parsed: ApiResponse = serde_json::from_str(&body).map_err(|e| FetchError::Malformed {
            address: address.to_string(),
            message: e.to_string(),
        })?;
        if parsed.status != "1" {
            let detail = parsed.result.as_str().unwrap_or(&parsed.message).to_string();
            if is_rate_limit_message(&detail) || is_rate_limit_message(&parsed.message) {
                return Ok(None);
            }
            return Err(FetchError::Rejected {
                address: address.to_string(),
                message: detail,
            });
        }
        let entries: Vec<SourceEntry> =
            serde_json::from_value(parsed.result).map_err(|e| FetchError::Malformed {
                address: address.to_string(),
                message: e.to_string(),
            })?;
        match entries.into_iter().next() {
            Some(e) if !e.source_code.is_empty() => Ok(Some(e.source_code)),
            _ => Err(FetchError::NotVerified(address.to_string())),
        }
    }

    /// Fetches `address` and stores it as `<out_dir>/<address>.sol`.
    pub fn fetch_to(&mut self, address: &str, out_dir: &Path) -> Result<FetchedSource, FetchError> {
        let source = self.fetch_source(address)?;
        let address = validate_address(address)?;
        let io = |path: &Path, source| FetchError::Io {
            path: path.to_path_buf(),
            source,
        };
        fs::create_dir_all(out_dir).map_err(|e| io(out_dir, e))?;
        let path = out_dir.join(format!("{address}.sol"));
        fs::write(&path, source.as_bytes()).map_err(|e| io(&path, e))?;
        Ok(FetchedSource {
            address,
            path,
            bytes: source.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn address_validation() {
        let ok = "0x".to_string() + &"aB".repeat(20);
        assert_eq!(validate_address(&ok).unwrap(), "0x".to_string() + &"ab".repeat(20));
        for bad in ["", "0x", "1234", "0xzz", &("0x".to_string() + &"a".repeat(41))] {
            assert!(matches!(validate_address(bad), Err(FetchError::InvalidAddress(_))), "{bad}");
        }
    }

    #[test]
    fn missing_key_rejected() {
        assert!(matches!(ExplorerClient::new("http://x", " "), Err(FetchError::MissingApiKey)));
    }

    #[test]
    fn invalid_address_fails_before_network() {
        let mut c = ExplorerClient::new("http://127.0.0.1:1", "k").unwrap();
        assert!(matches!(c.fetch_source("nope"), Err(FetchError::InvalidAddress(_))));
    }

    #[test]
    fn throttle_detection() {
        assert!(is_rate_limit_message("Max rate limit reached"));
        assert!(!is_rate_limit_message("Invalid API Key"));
    }
}

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{io_err, SynthError};

pub const LLM_URL_ENV: &str = "STREAMFORGE_LLM_URL";
pub const LLM_KEY_ENV: &str = "STREAMFORGE_LLM_KEY";
pub const LLM_MODEL_ENV: &str = "STREAMFORGE_LLM_MODEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Stats,
    Discovery,
    Cluster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Backend identity, filled in by the caller for provenance.
    pub backend: String,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { temperature: 0.7, max_tokens: 4096, backend: String::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub purpose: Purpose,
    pub text: String,
    pub params: GenParams,
}

impl LlmRequest {
    /// Hex SHA-256 over the purpose, sampling parameters and payload text.
    /// The backend id is left out so replayed fixtures match live ones.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{:?}\n{}\n{}\n", self.purpose, self.params.temperature, self.params.max_tokens));
        h.update(self.text.as_bytes());
        hex::encode(h.finalize())
    }
}

pub trait LlmBackend: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, request: &LlmRequest) -> Result<String, SynthError>;
}

fn fixture_paths(dir: &Path, digest: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{digest}.request.txt")), dir.join(format!("{digest}.response.txt")))
}

/// Serves responses recorded by [`LiveBackend`].
pub struct ReplayBackend {
    pub dir: PathBuf,
}

impl LlmBackend for ReplayBackend {
    fn id(&self) -> String {
        "replay".into()
    }

    fn complete(&self, request: &LlmRequest) -> Result<String, SynthError> {
        let digest = request.digest();
        let (_, resp) = fixture_paths(&self.dir, &digest);
        if !resp.exists() {
            return Err(SynthError::MissingFixture { digest, path: resp });
        }
        std::fs::read_to_string(&resp).map_err(io_err(&resp))
    }
}

/// Messages-style HTTP endpoint. Every exchange is written to `fixtures`.
pub struct LiveBackend {
    pub url: String,
    pub api_key: String,
    pub model: String,
    pub fixtures: PathBuf,
    write_lock: Mutex<()>,
}

impl LiveBackend {
    pub fn new(url: String, api_key: String, model: String, fixtures: PathBuf) -> Self {
        LiveBackend { url, api_key, model, fixtures, write_lock: Mutex::new(()) }
    }

    pub fn from_env(fixtures: PathBuf) -> Result<Self, SynthError> {
        let var = |k: &str| std::env::var(k).map_err(|_| SynthError::Backend(format!("environment variable {k} is not set")));
        Ok(Self::new(var(LLM_URL_ENV)?, var(LLM_KEY_ENV)?, var(LLM_MODEL_ENV)?, fixtures))
    }

    fn record(&self, request: &LlmRequest, response: &str) -> Result<(), SynthError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        std::fs::create_dir_all(&self.fixtures).map_err(io_err(&self.fixtures))?;
        let (req, resp) = fixture_paths(&self.fixtures, &request.digest());
        std::fs::write(&req, &request.text).map_err(io_err(&req))?;
        std::fs::write(&resp, response).map_err(io_err(&resp))
    }
}

impl LlmBackend for LiveBackend {
    fn id(&self) -> String {
        format!("live:{}", self.model)
    }

    fn complete(&self, request: &LlmRequest) -> Result<String, SynthError> {
        let body = serde_json::json!({
            "model": self.model,
            "max_tokens": request.params.max_tokens,
            "temperature": request.params.temperature,
            "messages": [{"role": "user", "content": request.text}],
        });
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(600))
            .build()
            .map_err(|e| SynthError::Backend(e.to_string()))?;
        let resp = client
            .post(&self.url)
            .header("x-api-key", &self.api_key)
            .header("anthropic-version", "2023-06-01")
            .json(&body)
            .send()
            .map_err(|e| SynthError::Backend(e.to_string()))?;
        let status = resp.status();
        let value: serde_json::Value = resp.json().map_err(|e| SynthError::Backend(e.to_string()))?;
        if !status.is_success() {
            return Err(SynthError::Backend(format!("HTTP {status}: {value}")));
        }
        let text: String = value["content"]
            .as_array()
            .map(|blocks| blocks.iter().filter_map(|b| b["text"].as_str()).collect::<Vec<_>>().join(""))
            .ok_or_else(|| SynthError::Backend(format!("unexpected response shape: {value}")))?;
        self.record(request, &text)?;
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_is_keyed_by_digest() {
        let dir = tempfile::tempdir().unwrap();
        let req = LlmRequest { purpose: Purpose::Stats, text: "payload".into(), params: GenParams::default() };
        let replay = ReplayBackend { dir: dir.path().to_path_buf() };
        assert!(matches!(replay.complete(&req), Err(SynthError::MissingFixture { .. })));
        let live = LiveBackend::new("http://unused".into(), "k".into(), "m".into(), dir.path().to_path_buf());
        live.record(&req, "[1]").unwrap();
        assert_eq!(replay.complete(&req).unwrap(), "[1]");
        assert_eq!(replay.complete(&req).unwrap(), "[1]");
        let other = LlmRequest { text: "payload ".into(), ..req.clone() };
        assert_ne!(other.digest(), req.digest());
        let relabelled = LlmRequest { params: GenParams { backend: "x".into(), ..req.params.clone() }, ..req.clone() };
        assert_eq!(relabelled.digest(), req.digest());
    }
}

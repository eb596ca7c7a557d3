use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ChatClient, ChatRequest, LlmError};

pub const API_KEY_ENV: &str = "MALLMGAN_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_base_secs: f64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            api_key_env: API_KEY_ENV.into(),
            timeout_secs: 120.0,
            max_retries: 3,
            backoff_base_secs: 1.0,
        }
    }
}

/// Blocking client for `POST {base_url}/chat/completions`.
pub struct OpenAiClient {
    config: ProviderConfig,
    api_key: String,
    http: reqwest::blocking::Client,
}

enum Attempt {
    Done(String),
    Retry(LlmError),
    Fatal(LlmError),
}

impl OpenAiClient {
    /// Reads the API key from the environment; fails before any request is made.
    pub fn new(config: ProviderConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| LlmError::MissingApiKey(config.api_key_env.clone()))?;
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: ProviderConfig, api_key: impl Into<String>) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(Self {
            config,
            api_key: api_key.into(),
            http,
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &serde_json::Value, attempts: u32) -> Attempt {
        let response = match self
            .http
            .post(self.endpoint())
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
        {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Retry(LlmError::Timeout { attempts }),
            Err(e) => {
                return Attempt::Retry(LlmError::Transport {
                    attempts,
                    message: e.to_string(),
                })
            }
        };
        let status = response.status().as_u16();
        let text = match response.text() {
            Ok(t) => t,
            Err(e) => {
                return Attempt::Retry(LlmError::Transport {
                    attempts,
                    message: e.to_string(),
                })
            }
        };
        match status {
            200..=299 => match extract_content(&text) {
                Ok(content) => Attempt::Done(content),
                Err(e) => Attempt::Fatal(e),
            },
            401 | 403 => Attempt::Fatal(LlmError::Auth { status, body: text }),
            429 | 500..=599 => Attempt::Retry(LlmError::Http {
                status,
                attempts,
                body: text,
            }),
            _ => Attempt::Fatal(LlmError::Http {
                status,
                attempts,
                body: text,
            }),
        }
    }
}

fn extract_content(body: &str) -> Result<String, LlmError> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| LlmError::Malformed(e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| LlmError::Malformed("missing choices[0].message.content".into()))
}

impl ChatClient for OpenAiClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body, attempts) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) => {
                    if attempts > self.config.max_retries {
                        return Err(e);
                    }
                    let delay = self.config.backoff_base_secs * 2f64.powi(attempts as i32 - 1);
                    warn!("chat completion attempt {attempts} failed ({e}); retrying in {delay:.2}s");
                    std::thread::sleep(Duration::from_secs_f64(delay));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    /// Serves the canned `(status, body)` responses in order, one per connection,
    /// and records each request body.
    fn stub_server(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let Ok((mut stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut content_length = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        content_length = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; content_length];
                reader.read_exact(&mut buf).unwrap();
                log.lock().unwrap().push(String::from_utf8(buf).unwrap());
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (format!("http://{addr}/v1"), seen)
    }

    fn ok_body(content: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
    }

    fn client(base_url: String, max_retries: u32) -> OpenAiClient {
        let config = ProviderConfig {
            base_url,
            model: "test-model".into(),
            max_retries,
            backoff_base_secs: 0.01,
            timeout_secs: 5.0,
            ..ProviderConfig::default()
        };
        OpenAiClient::with_key(config, "k").unwrap()
    }

    #[test]
    fn retries_after_rate_limit() {
        let (url, seen) = stub_server(vec![(429, "{}".into()), (200, ok_body("hello"))]);
        let req = ChatRequest::new("sys", "user", 0.5).unwrap();
        assert_eq!(client(url, 2).complete(&req).unwrap(), "hello");
        let bodies = seen.lock().unwrap();
        assert_eq!(bodies.len(), 2);
        let sent: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(sent["model"], "test-model");
        assert_eq!(sent["messages"][0]["role"], "system");
        assert_eq!(sent["messages"][1]["content"], "user");
        assert_eq!(sent["temperature"], 0.5);
    }

    #[test]
    fn gives_up_after_retry_budget() {
        let (url, _) = stub_server(vec![(500, "a".into()), (500, "b".into()), (500, "c".into())]);
        let req = ChatRequest::new("s", "u", 0.0).unwrap();
        match client(url, 2).complete(&req) {
            Err(LlmError::Http { status: 500, attempts: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let (url, seen) = stub_server(vec![(401, "nope".into()), (200, ok_body("x"))]);
        let req = ChatRequest::new("s", "u", 0.0).unwrap();
        assert!(matches!(client(url, 3).complete(&req), Err(LlmError::Auth { status: 401, .. })));
        assert_eq!(seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn malformed_body_is_reported() {
        let (url, _) = stub_server(vec![(200, r#"{"choices": []}"#.into())]);
        let req = ChatRequest::new("s", "u", 0.0).unwrap();
        assert!(matches!(client(url, 0).complete(&req), Err(LlmError::Malformed(_))));
    }

    #[test]
    fn missing_key_fails_at_construction() {
        let config = ProviderConfig {
            api_key_env: "MALLMGAN_TEST_KEY_THAT_IS_NOT_SET".into(),
            ..ProviderConfig::default()
        };
        assert!(matches!(OpenAiClient::new(config), Err(LlmError::MissingApiKey(_))));
    }

    #[test]
    fn connection_refused_counts_attempts() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let req = ChatRequest::new("s", "u", 0.0).unwrap();
        match client(format!("http://127.0.0.1:{port}"), 1).complete(&req) {
            Err(LlmError::Transport { attempts: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}

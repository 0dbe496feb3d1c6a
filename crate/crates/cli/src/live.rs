//! OpenAI-compatible chat-completion provider.

use std::time::Duration;

use serde_json::{json, Value};

use qaspect_core::llm::{Provider, ProviderError};

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug)]
pub enum CredentialError {
    Missing(String),
}

impl std::error::Error for CredentialError {}

impl std::fmt::Display for CredentialError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CredentialError::Missing(var) => write!(
                f,
                "live provider needs an API key in the environment variable {var}"
            ),
        }
    }
}

pub struct ChatCompletions {
    client: reqwest::blocking::Client,
    endpoint: String,
    key: String,
}

impl ChatCompletions {
    pub fn new(base_url: &str, key: String, timeout: Duration) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Fatal(e.to_string()))?;
        Ok(ChatCompletions {
            client,
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            key,
        })
    }

    /// Reads the key from `var`; an unset or empty variable is an error.
    pub fn from_env(base_url: &str, var: &str) -> anyhow::Result<Self> {
        let key = std::env::var(var)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| CredentialError::Missing(var.to_string()))?;
        Ok(Self::new(base_url, key, Duration::from_secs(300))?)
    }
}

impl Provider for ChatCompletions {
    fn complete(&self, model: &str, message: &str) -> Result<String, ProviderError> {
        let body = json!({
            "model": model,
            "messages": [{"role": "user", "content": message}],
        });
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.key)
            .json(&body)
            .send()
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(ProviderError::Transient(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(ProviderError::Fatal(format!("HTTP {status}: {text}")));
        }
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Fatal(format!("bad response body: {e}")))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Fatal("response has no message content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serves the canned `(status, body)` replies in order, one per request.
    fn fake_server(replies: Vec<(u16, &'static str)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                let mut head = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if line == "\r\n" {
                        break;
                    }
                    head.push_str(&line);
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                seen.push(format!("{head}\n{}", String::from_utf8(buf).unwrap()));
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            seen
        });
        (url, handle)
    }

    #[test]
    fn sends_one_user_message_and_reads_content() {
        let (url, h) = fake_server(vec![(200, r#"{"choices":[{"message":{"role":"assistant","content":"1. ok"}}]}"#)]);
        let p = ChatCompletions::new(&url, "sk-test".into(), Duration::from_secs(5)).unwrap();
        assert_eq!(p.complete("gpt-4o", "hello").unwrap(), "1. ok");
        let req = &h.join().unwrap()[0];
        assert!(req.starts_with("POST /chat/completions"));
        assert!(req.to_ascii_lowercase().contains("authorization: bearer sk-test"));
        let body: Value = serde_json::from_str(req.split("\n\n").last().unwrap()).unwrap();
        assert_eq!(body["model"], "gpt-4o");
        assert_eq!(body["messages"].as_array().unwrap().len(), 1);
        assert_eq!(body["messages"][0]["content"], "hello");
    }

    #[test]
    fn classifies_failures() {
        let (url, h) = fake_server(vec![(429, "{}"), (503, "{}"), (401, "{}"), (200, "{}")]);
        let p = ChatCompletions::new(&url, "k".into(), Duration::from_secs(5)).unwrap();
        assert!(matches!(p.complete("m", "x"), Err(ProviderError::Transient(_))));
        assert!(matches!(p.complete("m", "x"), Err(ProviderError::Transient(_))));
        assert!(matches!(p.complete("m", "x"), Err(ProviderError::Fatal(_))));
        assert!(matches!(p.complete("m", "x"), Err(ProviderError::Fatal(_))));
        h.join().unwrap();
    }

    #[test]
    fn missing_key_is_explicit() {
        let err = ChatCompletions::from_env(DEFAULT_BASE_URL, "QASPECT_TEST_UNSET_KEY").err().unwrap();
        assert!(err.to_string().contains("QASPECT_TEST_UNSET_KEY"));
    }
}

use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{BackendReply, ChatBackend, ChatTranscript, CompletionParams, GatewayError, TokenUsage};

/// Environment variable holding the API key for the live backend.
pub const API_KEY_ENV: &str = "SOPFL_API_KEY";

/// OpenAI-compatible chat-completions client.
///
/// Transport failures (connection errors, timeouts) are retried up to
/// `max_retries` times with exponential backoff. Any HTTP status outside
/// 2xx is returned as [`GatewayError::BackendRefusal`] without retrying.
pub struct LiveBackend {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    max_retries: u32,
    backoff: Duration,
    agent: ureq::Agent,
}

impl LiveBackend {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            max_retries: 3,
            backoff: Duration::from_millis(500),
            agent,
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn with_retries(mut self, max_retries: u32, backoff: Duration) -> Self {
        self.max_retries = max_retries;
        self.backoff = backoff;
        self
    }

    fn body(&self, transcript: &ChatTranscript, params: &CompletionParams) -> Value {
        json!({
            "model": self.model,
            "messages": transcript.messages,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> Result<(u16, String), ureq::Error> {
        let mut request = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = request.send_json(body)?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string()?;
        Ok((status, text))
    }
}

fn parse_reply(text: &str) -> Result<(String, Option<TokenUsage>), GatewayError> {
    let value: Value = serde_json::from_str(text).map_err(|e| GatewayError::Protocol(e.to_string()))?;
    let content = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::Protocol("missing choices[0].message.content".into()))?;
    let usage = value.get("usage").and_then(|u| {
        Some(TokenUsage {
            prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
            completion_tokens: u.get("completion_tokens")?.as_u64()?,
        })
    });
    Ok((content.to_string(), usage))
}

impl ChatBackend for LiveBackend {
    fn send(&self, transcript: &ChatTranscript, params: &CompletionParams) -> Result<BackendReply, GatewayError> {
        let body = self.body(transcript, params);
        let started = Instant::now();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok((status, text)) if (200..300).contains(&status) => {
                    let (content, usage) = parse_reply(&text)?;
                    return Ok(BackendReply {
                        content,
                        usage,
                        latency_secs: started.elapsed().as_secs_f64(),
                    });
                }
                Ok((status, body)) => return Err(GatewayError::BackendRefusal { status, body }),
                Err(err) if attempts > self.max_retries => {
                    return Err(GatewayError::Transport {
                        attempts,
                        message: err.to_string(),
                    })
                }
                Err(err) => {
                    let delay = self.backoff * 2u32.pow(attempts - 1);
                    tracing::warn!(%err, attempt = attempts, ?delay, "transport failure, retrying");
                    std::thread::sleep(delay);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Serves one canned HTTP response per connection and returns the
    /// request bodies it saw.
    fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                loop {
                    let n = stream.read(&mut chunk).unwrap();
                    buf.extend_from_slice(&chunk[..n]);
                    let text = String::from_utf8_lossy(&buf);
                    if let Some(split) = text.find("\r\n\r\n") {
                        let len = text[..split]
                            .lines()
                            .find_map(|l| {
                                l.to_ascii_lowercase()
                                    .strip_prefix("content-length:")
                                    .map(|v| v.trim().parse::<usize>().unwrap())
                            })
                            .unwrap_or(0);
                        if buf.len() >= split + 4 + len {
                            seen.push(text[split + 4..].to_string());
                            break;
                        }
                    }
                    if n == 0 {
                        break;
                    }
                }
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
            seen
        });
        (url, handle)
    }

    #[test]
    fn parses_openai_response() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"FALSE"}}],"usage":{"prompt_tokens":12,"completion_tokens":1}}"#;
        let (url, server) = serve(vec![(200, body.to_string())]);
        let backend = LiveBackend::new(url, "test-model").with_api_key(Some("k".into()));
        let reply = backend
            .send(&ChatTranscript::new("sys", "hi"), &CompletionParams::default())
            .unwrap();
        assert_eq!(reply.content, "FALSE");
        assert_eq!(reply.usage.unwrap().prompt_tokens, 12);
        let requests = server.join().unwrap();
        let sent: Value = serde_json::from_str(&requests[0]).unwrap();
        assert_eq!(sent["model"], "test-model");
        assert_eq!(sent["messages"][0]["role"], "system");
        assert_eq!(sent["max_tokens"], 1024);
    }

    #[test]
    fn non_success_status_is_a_refusal() {
        let (url, server) = serve(vec![(429, r#"{"error":"slow down"}"#.to_string())]);
        let backend = LiveBackend::new(url, "m");
        let err = backend
            .send(&ChatTranscript::new("sys", "hi"), &CompletionParams::default())
            .unwrap_err();
        match err {
            GatewayError::BackendRefusal { status, body } => {
                assert_eq!(status, 429);
                assert!(body.contains("slow down"));
            }
            other => panic!("{other:?}"),
        }
        server.join().unwrap();
    }

    #[test]
    fn transport_failures_are_retried_then_reported() {
        // Bind and drop to get a port nothing listens on.
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let backend =
            LiveBackend::new(format!("http://127.0.0.1:{port}/x"), "m").with_retries(3, Duration::from_millis(1));
        match backend.send(&ChatTranscript::new("s", "u"), &CompletionParams::default()) {
            Err(GatewayError::Transport { attempts, .. }) => assert_eq!(attempts, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_content_is_a_protocol_error() {
        assert!(matches!(
            parse_reply(r#"{"choices":[]}"#),
            Err(GatewayError::Protocol(_))
        ));
        let (content, usage) = parse_reply(r#"{"choices":[{"message":{"content":"x"}}]}"#).unwrap();
        assert_eq!(content, "x");
        assert!(usage.is_none());
    }
}

//! JSON-over-HTTP clients for model services.
//!
//! `POST {endpoint}/score` with `{"image_png_b64": ...}` answers
//! `{"score": x}`; `POST {endpoint}/lpips` with `{"a": ..., "b": ...}`
//! answers `{"lpips": x}`. Images travel as base64 8-bit PNG.

use super::{Backend, QualityModel};
use crate::error::{Error, Result};
use crate::imageops::{encode_png, Image};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use std::time::Duration;
use ureq::Agent;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Serialize)]
struct ScoreRequest<'a> {
    image_png_b64: &'a str,
}

#[derive(Deserialize)]
struct ScoreReply {
    score: f64,
}

#[derive(Serialize)]
struct LpipsRequest<'a> {
    a: &'a str,
    b: &'a str,
}

#[derive(Deserialize)]
struct LpipsReply {
    lpips: f64,
}

fn agent(timeout: Duration) -> Agent {
    Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn png_b64(img: &Image) -> Result<String> {
    Ok(STANDARD.encode(encode_png(img)?))
}

fn base_url(endpoint: &str) -> Result<String> {
    let trimmed = endpoint.trim_end_matches('/');
    if !(trimmed.starts_with("http://") || trimmed.starts_with("https://")) {
        return Err(Error::InvalidParameter(format!("endpoint {endpoint:?} must be an http(s) URL")));
    }
    Ok(trimmed.to_string())
}

fn post_json<T: for<'de> Deserialize<'de>>(agent: &Agent, url: &str, body: String) -> Result<T> {
    let unavailable = |what: String| Error::OracleUnavailable(format!("{url}: {what}"));
    let mut resp = agent
        .post(url)
        .header("content-type", "application/json")
        .send(body)
        .map_err(|e| unavailable(e.to_string()))?;
    let status = resp.status();
    let text = resp.body_mut().read_to_string().map_err(|e| unavailable(e.to_string()))?;
    if status.as_u16() != 200 {
        return Err(unavailable(format!("HTTP {}: {}", status.as_u16(), text.trim())));
    }
    serde_json::from_str(&text).map_err(|e| unavailable(format!("malformed reply {text:?}: {e}")))
}

/// A quality model served over HTTP.
pub struct ExternalModel {
    url: String,
    agent: Agent,
}

impl ExternalModel {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self> {
        Ok(Self {
            url: format!("{}/score", base_url(endpoint)?),
            agent: agent(timeout),
        })
    }
}

impl QualityModel for ExternalModel {
    fn predict(&mut self, img: &Image) -> Result<f64> {
        let b64 = png_b64(img)?;
        let body = serde_json::to_string(&ScoreRequest { image_png_b64: &b64 })?;
        let reply: ScoreReply = post_json(&self.agent, &self.url, body)?;
        Ok(reply.score)
    }

    fn describe(&self) -> String {
        format!("external:{}", self.url)
    }

    fn backend(&self) -> Backend {
        Backend::External
    }
}

/// Client for the perceptual distance endpoint.
pub struct LpipsClient {
    url: String,
    agent: Agent,
}

impl LpipsClient {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self> {
        Ok(Self {
            url: format!("{}/lpips", base_url(endpoint)?),
            agent: agent(timeout),
        })
    }

    pub fn distance(&self, a: &Image, b: &Image) -> Result<f64> {
        let (a, b) = (png_b64(a)?, png_b64(b)?);
        let body = serde_json::to_string(&LpipsRequest { a: &a, b: &b })?;
        let reply: LpipsReply = post_json(&self.agent, &self.url, body)?;
        if !(reply.lpips.is_finite() && reply.lpips >= 0.0) {
            return Err(Error::OracleUnavailable(format!("{}: invalid distance {}", self.url, reply.lpips)));
        }
        Ok(reply.lpips)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::OracleHandle;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;
    use std::thread;

    /// Serves `replies.len()` requests, each answered with the next
    /// `(status, body)`; request bodies are sent back over the channel.
    fn fake_server(replies: Vec<(u16, String)>) -> (String, mpsc::Receiver<(String, String)>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                reader.read_line(&mut request_line).unwrap();
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                tx.send((request_line, String::from_utf8(buf).unwrap())).unwrap();
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}"), rx)
    }

    fn img() -> Image {
        Image::from_fn(8, 8, 3, |y, x, c| ((y + x + c) % 4) as f64 / 3.0).unwrap()
    }

    #[test]
    fn echo_score_is_returned_verbatim() {
        let (url, rx) = fake_server(vec![(200, r#"{"score": 42.0}"#.into())]);
        let mut m = ExternalModel::new(&url, DEFAULT_TIMEOUT).unwrap();
        assert_eq!(m.predict(&img()).unwrap(), 42.0);
        let (line, body) = rx.recv().unwrap();
        assert!(line.starts_with("POST /score "));
        let v: serde_json::Value = serde_json::from_str(&body).unwrap();
        let png = STANDARD.decode(v["image_png_b64"].as_str().unwrap()).unwrap();
        assert_eq!(crate::imageops::decode_png(&png).unwrap(), img());
    }

    #[test]
    fn nan_reply_is_unavailable() {
        // JSON has no NaN literal, so a NaN-emitting service sends invalid JSON
        let (url, _rx) = fake_server(vec![(200, r#"{"score": NaN}"#.into())]);
        let mut h = OracleHandle::new(Box::new(ExternalModel::new(&url, DEFAULT_TIMEOUT).unwrap()), 10);
        assert!(matches!(h.score(&img()), Err(Error::OracleUnavailable(_))));
        assert_eq!(h.used(), 0);
    }

    #[test]
    fn error_status_is_unavailable() {
        let (url, _rx) = fake_server(vec![(500, r#"{"detail": "boom"}"#.into())]);
        let mut m = ExternalModel::new(&url, DEFAULT_TIMEOUT).unwrap();
        let err = m.predict(&img()).unwrap_err();
        assert!(matches!(&err, Error::OracleUnavailable(msg) if msg.contains("500")));
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let mut m = ExternalModel::new(&format!("http://127.0.0.1:{port}"), Duration::from_secs(2)).unwrap();
        assert!(matches!(m.predict(&img()), Err(Error::OracleUnavailable(_))));
    }

    #[test]
    fn rejects_non_http_endpoint() {
        assert!(ExternalModel::new("localhost:8000", DEFAULT_TIMEOUT).is_err());
    }

    #[test]
    fn lpips_round_trip() {
        let (url, rx) = fake_server(vec![(200, r#"{"lpips": 0.125}"#.into())]);
        let c = LpipsClient::new(&url, DEFAULT_TIMEOUT).unwrap();
        assert_eq!(c.distance(&img(), &img()).unwrap(), 0.125);
        let (line, body) = rx.recv().unwrap();
        assert!(line.starts_with("POST /lpips "));
        let v: serde_json::Value = serde_json::from_str(&body).unwrap();
        assert_eq!(v["a"], v["b"]);
    }

    #[test]
    fn lpips_negative_is_rejected() {
        let (url, _rx) = fake_server(vec![(200, r#"{"lpips": -1.0}"#.into())]);
        let c = LpipsClient::new(&url, DEFAULT_TIMEOUT).unwrap();
        assert!(c.distance(&img(), &img()).is_err());
    }
}

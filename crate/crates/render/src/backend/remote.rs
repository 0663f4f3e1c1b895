//! Client for A1111-compatible txt2img servers.

use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{sniff_media_type, BackendError, Health, Image, ImageBackend, RenderRequest};

/// Wire names of the request fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldNames {
    pub prompt: String,
    pub seed: String,
    pub width: String,
    pub height: String,
    pub steps: String,
    pub cfg_scale: String,
    /// Response field holding the base64 image list.
    pub images: String,
}

impl Default for FieldNames {
    fn default() -> Self {
        Self {
            prompt: "prompt".into(),
            seed: "seed".into(),
            width: "width".into(),
            height: "height".into(),
            steps: "steps".into(),
            cfg_scale: "cfg_scale".into(),
            images: "images".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub base_url: String,
    pub txt2img_path: String,
    pub health_path: String,
    #[serde(with = "secs")]
    pub timeout: Duration,
    pub max_in_flight: usize,
    pub steps: u32,
    pub cfg_scale: f64,
    pub fields: FieldNames,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:7860".into(),
            txt2img_path: "/sdapi/v1/txt2img".into(),
            health_path: "/internal/ping".into(),
            timeout: Duration::from_secs(120),
            max_in_flight: 4,
            steps: 20,
            cfg_scale: 7.0,
            fields: FieldNames::default(),
        }
    }
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            ..Self::default()
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base_url.trim_end_matches('/'), path)
    }
}

/// Counting gate for concurrent requests.
#[derive(Debug)]
struct Gate {
    cap: usize,
    busy: Mutex<usize>,
    freed: Condvar,
}

struct Pass<'a>(&'a Gate);

impl Gate {
    fn enter(&self) -> Pass<'_> {
        let mut busy = self.busy.lock().expect("gate poisoned");
        while *busy >= self.cap {
            busy = self.freed.wait(busy).expect("gate poisoned");
        }
        *busy += 1;
        Pass(self)
    }
}

impl Drop for Pass<'_> {
    fn drop(&mut self) {
        *self.0.busy.lock().expect("gate poisoned") -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug)]
pub struct RemoteBackend {
    config: RemoteConfig,
    gate: Gate,
    peak: Mutex<usize>,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let cap = config.max_in_flight.max(1);
        Self {
            config,
            gate: Gate {
                cap,
                busy: Mutex::new(0),
                freed: Condvar::new(),
            },
            peak: Mutex::new(0),
        }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// Highest number of requests seen in flight at once.
    pub fn peak_in_flight(&self) -> usize {
        *self.peak.lock().expect("peak poisoned")
    }

    /// JSON body sent for a request.
    pub fn request_body(&self, req: &RenderRequest) -> Value {
        let f = &self.config.fields;
        let mut body: Map<String, Value> = req
            .params
            .iter()
            .filter(|(k, _)| k.as_str() != "steps" && k.as_str() != "cfg_scale")
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let param = |k: &str, default: Value| req.params.get(k).cloned().unwrap_or(default);
        body.insert(f.prompt.clone(), json!(req.prompt.text));
        body.insert(f.seed.clone(), json!(req.seed));
        body.insert(f.width.clone(), json!(req.width));
        body.insert(f.height.clone(), json!(req.height));
        body.insert(f.steps.clone(), param("steps", json!(self.config.steps)));
        body.insert(
            f.cfg_scale.clone(),
            param("cfg_scale", json!(self.config.cfg_scale)),
        );
        Value::Object(body)
    }

    // A fresh blocking client per call: it owns a runtime, and dropping one
    // from async code panics.
    fn client(&self) -> Result<reqwest::blocking::Client, BackendError> {
        reqwest::blocking::Client::builder()
            .timeout(self.config.timeout)
            .build()
            .map_err(|e| BackendError::Unreachable(e.to_string()))
    }

    fn classify(&self, e: reqwest::Error) -> BackendError {
        if e.is_timeout() {
            BackendError::Timeout(self.config.timeout)
        } else {
            BackendError::Unreachable(e.to_string())
        }
    }
}

/// Decodes one base64 image, accepting an optional `data:` URL prefix.
pub(crate) fn decode_image(s: &str) -> Result<Vec<u8>, BackendError> {
    let payload = match s.strip_prefix("data:") {
        Some(rest) => rest
            .split_once(',')
            .map(|(_, p)| p)
            .ok_or_else(|| BackendError::BadResponse("data URL without payload".into()))?,
        None => s,
    };
    base64::engine::general_purpose::STANDARD
        .decode(payload.trim())
        .map_err(|e| BackendError::BadResponse(format!("base64: {e}")))
}

impl ImageBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn health(&self) -> Health {
        let unhealthy = |detail: String| Health {
            backend: "remote".into(),
            healthy: false,
            detail,
        };
        let client = match self.client() {
            Ok(c) => c,
            Err(e) => return unhealthy(e.to_string()),
        };
        match client.get(self.config.url(&self.config.health_path)).send() {
            Ok(r) if r.status().is_success() => Health {
                backend: "remote".into(),
                healthy: true,
                detail: format!("{} ok", self.config.base_url),
            },
            Ok(r) => unhealthy(format!("status {}", r.status().as_u16())),
            Err(e) => unhealthy(self.classify(e).to_string()),
        }
    }

    fn draw(&self, req: &RenderRequest) -> Result<Image, BackendError> {
        let _pass = self.gate.enter();
        {
            let busy = *self.gate.busy.lock().expect("gate poisoned");
            let mut peak = self.peak.lock().expect("peak poisoned");
            *peak = (*peak).max(busy);
        }
        let resp = self
            .client()?
            .post(self.config.url(&self.config.txt2img_path))
            .json(&self.request_body(req))
            .send()
            .map_err(|e| self.classify(e))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: body.chars().take(512).collect(),
            });
        }
        let doc: BTreeMap<String, Value> = resp
            .json()
            .map_err(|e| BackendError::BadResponse(e.to_string()))?;
        let first = doc
            .get(&self.config.fields.images)
            .and_then(Value::as_array)
            .and_then(|a| a.first())
            .and_then(Value::as_str)
            .ok_or_else(|| {
                BackendError::BadResponse(format!(
                    "no `{}` string list in response",
                    self.config.fields.images
                ))
            })?;
        let bytes = decode_image(first)?;
        Ok(Image {
            media_type: sniff_media_type(&bytes).into(),
            bytes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use promptsteer_core::{AttributeSchema, Chromosome};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn decodes_plain_and_data_urls() {
        assert_eq!(decode_image("aGVsbG8=").unwrap(), b"hello");
        assert_eq!(
            decode_image("data:image/png;base64,aGVsbG8=").unwrap(),
            b"hello"
        );
        assert!(decode_image("data:image/png;base64").is_err());
        assert!(decode_image("!!!").is_err());
    }

    #[test]
    fn body_uses_configured_names() {
        let schema = AttributeSchema::kandinsky();
        let c = Chromosome::random(&schema, &mut ChaCha8Rng::seed_from_u64(1));
        let mut req = RenderRequest::for_chromosome(&c, &schema, 512, 512).unwrap();
        req.params.insert("steps".into(), json!(30));
        req.params.insert("sampler_name".into(), json!("Euler a"));
        let mut cfg = RemoteConfig::default();
        cfg.fields.cfg_scale = "guidance".into();
        let body = RemoteBackend::new(cfg).request_body(&req);
        assert_eq!(body["prompt"], json!(req.prompt.text));
        assert_eq!(body["seed"], json!(c.seed));
        assert_eq!(body["steps"], json!(30));
        assert_eq!(body["guidance"], json!(7.0));
        assert_eq!(body["sampler_name"], json!("Euler a"));
        assert!(body.get("cfg_scale").is_none());
    }

    #[test]
    fn config_defaults() {
        let cfg: RemoteConfig = serde_json::from_str(r#"{"base_url": "http://x:1"}"#).unwrap();
        assert_eq!(cfg.timeout, Duration::from_secs(120));
        assert_eq!(cfg.max_in_flight, 4);
        assert_eq!(cfg.url("/a"), "http://x:1/a");
    }
}

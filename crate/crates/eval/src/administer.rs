//! Putting a questionnaire to a persona-conditioned model, online or from fixtures.

use base64::Engine;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;
use thiserror::Error;

use crate::likert::{LikertAnswer, LikertLabel};
use crate::persona::PersonaProfile;
use crate::scale::{Scale, ScaleId};
use crate::scoring::{score_scale, NamedScore, ScoringError};
use crate::{visualization_rank, visualization_title};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("request failed: {0}")]
    Request(String),
    #[error("endpoint answered HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed endpoint reply: {0}")]
    Body(String),
    #[error("no fixture entry for {persona} / {visualization} / {scale}")]
    NoFixture {
        persona: String,
        visualization: String,
        scale: ScaleId,
    },
}

impl TransportError {
    /// Network failures, throttling and server errors are worth another try.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Request(_) => true,
            TransportError::Status { status, .. } => *status == 429 || *status >= 500,
            TransportError::Body(_) | TransportError::NoFixture { .. } => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("no parseable answer after {attempts} attempts; last reply: {raw}")]
    UnparseableResponse { attempts: u32, raw: String },
    #[error("reply never answered item {0}")]
    MissingItem(String),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error("cannot read image {path}: {source}")]
    Image {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad fixture: {0}")]
    Fixture(String),
    #[error("{0} is not set")]
    NotConfigured(&'static str),
}

/// One call to the model. Only `prompt` and `image_base64` go over the wire;
/// the identifying fields let fixture transports answer without parsing prompts.
#[derive(Debug, Clone)]
pub struct EvalRequest {
    pub persona: String,
    pub visualization: String,
    pub scale: ScaleId,
    pub prompt: String,
    pub image_base64: Option<String>,
}

pub trait Transport: Sync {
    fn send(&self, request: &EvalRequest) -> Result<String, TransportError>;
    fn model(&self) -> &str;
    /// Wall-clock stamp for provenance; offline transports return `None`.
    fn timestamp(&self) -> Option<String> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct HttpTransport {
    pub endpoint: String,
    pub token: Option<String>,
    pub model: String,
    pub max_tokens: u32,
    pub timeout: Duration,
}

impl HttpTransport {
    /// Reads `EVAL_ENDPOINT`, `EVAL_MODEL` and optionally `EVAL_TOKEN`.
    pub fn from_env() -> Result<Self, EvalError> {
        let endpoint = std::env::var("EVAL_ENDPOINT").map_err(|_| EvalError::NotConfigured("EVAL_ENDPOINT"))?;
        let model = std::env::var("EVAL_MODEL").map_err(|_| EvalError::NotConfigured("EVAL_MODEL"))?;
        Ok(Self {
            endpoint,
            token: std::env::var("EVAL_TOKEN").ok().filter(|t| !t.is_empty()),
            model,
            max_tokens: 1024,
            timeout: Duration::from_secs(120),
        })
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    image_base64: Option<&'a str>,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
}

impl Transport for HttpTransport {
    fn send(&self, request: &EvalRequest) -> Result<String, TransportError> {
        let body = serde_json::to_string(&WireRequest {
            model: &self.model,
            prompt: &request.prompt,
            image_base64: request.image_base64.as_deref(),
            max_tokens: self.max_tokens,
        })
        .map_err(|e| TransportError::Request(e.to_string()))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req
            .send(body.as_bytes())
            .map_err(|e| TransportError::Request(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Request(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Status { status, body: text });
        }
        serde_json::from_str::<WireResponse>(&text)
            .map(|r| r.text)
            .map_err(|e| TransportError::Body(e.to_string()))
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn timestamp(&self) -> Option<String> {
        Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub persona: String,
    pub visualization: String,
    pub scale: ScaleId,
    pub labels: BTreeMap<String, String>,
}

/// Answers from canned label sets. Never opens a socket.
#[derive(Debug, Clone, Default)]
pub struct FixtureTransport {
    entries: BTreeMap<(String, String, ScaleId), BTreeMap<String, String>>,
}

impl FixtureTransport {
    pub fn from_entries(entries: Vec<FixtureEntry>) -> Result<Self, EvalError> {
        let mut map = BTreeMap::new();
        for e in entries {
            let key = (e.persona.clone(), e.visualization.clone(), e.scale);
            if map.insert(key, e.labels).is_some() {
                return Err(EvalError::Fixture(format!(
                    "duplicate entry for {} / {} / {}",
                    e.persona, e.visualization, e.scale
                )));
            }
        }
        Ok(Self { entries: map })
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let entries: Vec<FixtureEntry> = serde_json::from_str(text).map_err(|e| EvalError::Fixture(e.to_string()))?;
        Self::from_entries(entries)
    }

    pub fn from_path(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvalError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// `(persona, visualization, scale)` keys in sorted order.
    pub fn keys(&self) -> impl Iterator<Item = &(String, String, ScaleId)> {
        self.entries.keys()
    }
}

impl Transport for FixtureTransport {
    fn send(&self, request: &EvalRequest) -> Result<String, TransportError> {
        let key = (request.persona.clone(), request.visualization.clone(), request.scale);
        let labels = self.entries.get(&key).ok_or_else(|| TransportError::NoFixture {
            persona: request.persona.clone(),
            visualization: request.visualization.clone(),
            scale: request.scale,
        })?;
        serde_json::to_string(labels).map_err(|e| TransportError::Body(e.to_string()))
    }

    fn model(&self) -> &str {
        "offline-fixture"
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub base: Duration,
    pub factor: u32,
    pub max_tries: u32,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base: Duration::from_secs(1),
            factor: 2,
            max_tries: 5,
        }
    }
}

impl Backoff {
    /// Pause after failed try number `try_no` (1-based).
    pub fn delay(&self, try_no: u32) -> Duration {
        self.base * self.factor.saturating_pow(try_no.saturating_sub(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    /// Total model calls per questionnaire before giving up on parsing.
    pub max_attempts: u32,
    pub backoff: Backoff,
    pub max_in_flight: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff: Backoff::default(),
            max_in_flight: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransportMeta {
    pub model: String,
    pub timestamp: Option<String>,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleResponse {
    pub persona: String,
    pub visualization: String,
    pub scale: ScaleId,
    pub answers: Vec<LikertAnswer>,
    pub aggregates: Vec<NamedScore>,
    pub raw_output: String,
    pub meta: TransportMeta,
}

impl ScaleResponse {
    pub fn recompute(&self) -> Result<Vec<NamedScore>, ScoringError> {
        score_scale(self.scale.scale(), &self.answers)
    }

    pub fn aggregate(&self, subscale: &str) -> Option<&NamedScore> {
        self.aggregates.iter().find(|a| a.subscale == subscale)
    }
}

pub fn build_prompt(persona: &PersonaProfile, scale: &Scale, visualization: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "Adopt the following persona and answer as this person would.\n"
    );
    s.push_str(&persona.prompt_block());
    let _ = writeln!(
        s,
        "\nThe attached image is a heart rate visualization ({}). Rate each statement below.",
        visualization_title(visualization)
    );
    let labels: Vec<&str> = LikertLabel::SCALE.iter().map(|l| l.as_str()).collect();
    let _ = writeln!(
        s,
        "Use exactly one of: {}, or NA if you don't know or it does not apply.\n",
        labels.join(", ")
    );
    for item in scale.items {
        let _ = writeln!(s, "{}: {}", item.code, item.statement);
    }
    let example: Vec<String> = scale.codes().map(|c| format!("\"{c}\": \"<label>\"")).collect();
    let _ = write!(
        s,
        "\nReply with only a JSON object keyed by item code, one label per item, and no other text: {{{}}}",
        example.join(", ")
    );
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseFailure {
    NoJsonObject,
    NotALabel { item: String, value: String },
    Missing(String),
}

impl std::fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParseFailure::NoJsonObject => f.write_str("the reply contained no JSON object"),
            ParseFailure::NotALabel { item, value } => write!(f, "{item} had {value}, which is not an allowed label"),
            ParseFailure::Missing(code) => write!(f, "item {code} was not answered"),
        }
    }
}

/// First JSON object embedded anywhere in `text`.
fn find_object(text: &str) -> Option<serde_json::Map<String, serde_json::Value>> {
    text.char_indices().filter(|&(_, c)| c == '{').find_map(|(i, _)| {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<serde_json::Value>();
        match stream.next() {
            Some(Ok(serde_json::Value::Object(m))) => Some(m),
            _ => None,
        }
    })
}

/// Extracts one answer per scale item from a model reply. Extra keys are ignored.
pub fn parse_labels(text: &str, scale: &Scale) -> Result<Vec<LikertAnswer>, ParseFailure> {
    let obj = find_object(text).ok_or(ParseFailure::NoJsonObject)?;
    scale
        .codes()
        .map(|code| {
            let v = obj.get(code).ok_or_else(|| ParseFailure::Missing(code.to_string()))?;
            let label = v
                .as_str()
                .and_then(|s| s.parse::<LikertLabel>().ok())
                .ok_or_else(|| ParseFailure::NotALabel {
                    item: code.to_string(),
                    value: v.to_string(),
                })?;
            Ok(LikertAnswer::new(code, label))
        })
        .collect()
}

fn repair_prompt(original: &str, failure: &ParseFailure) -> String {
    format!(
        "{original}\n\nYour previous reply could not be used: {failure}. \
         Answer again with only the JSON object, every item code present, each value one of the allowed labels."
    )
}

fn send_with_backoff(
    transport: &dyn Transport,
    request: &EvalRequest,
    backoff: &Backoff,
) -> Result<String, TransportError> {
    let mut try_no = 1;
    loop {
        match transport.send(request) {
            Ok(text) => return Ok(text),
            Err(e) if e.is_retryable() && try_no < backoff.max_tries => {
                std::thread::sleep(backoff.delay(try_no));
                try_no += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Job {
    pub persona: PersonaProfile,
    pub visualization: String,
    pub scale: ScaleId,
    /// Attached image; optional in fixture mode.
    pub image: Option<PathBuf>,
}

pub fn administer(job: &Job, transport: &dyn Transport, config: &EvalConfig) -> Result<ScaleResponse, EvalError> {
    let image_base64 = match &job.image {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|source| EvalError::Image {
                path: path.clone(),
                source,
            })?;
            Some(base64::engine::general_purpose::STANDARD.encode(bytes))
        }
        None => None,
    };
    let scale = job.scale.scale();
    let prompt = build_prompt(&job.persona, scale, &job.visualization);
    let mut request = EvalRequest {
        persona: job.persona.name.clone(),
        visualization: job.visualization.clone(),
        scale: job.scale,
        prompt: prompt.clone(),
        image_base64,
    };
    let mut last = None;
    for attempt in 1..=config.max_attempts.max(1) {
        let raw = send_with_backoff(transport, &request, &config.backoff)?;
        match parse_labels(&raw, scale) {
            Ok(answers) => {
                let aggregates = score_scale(scale, &answers)?;
                return Ok(ScaleResponse {
                    persona: job.persona.name.clone(),
                    visualization: job.visualization.clone(),
                    scale: job.scale,
                    answers,
                    aggregates,
                    raw_output: raw,
                    meta: TransportMeta {
                        model: transport.model().to_string(),
                        timestamp: transport.timestamp(),
                        attempts: attempt,
                    },
                });
            }
            Err(failure) => {
                request.prompt = repair_prompt(&prompt, &failure);
                last = Some((raw, failure));
            }
        }
    }
    let (raw, failure) = last.expect("at least one attempt");
    Err(match failure {
        ParseFailure::Missing(code) => EvalError::MissingItem(code),
        _ => EvalError::UnparseableResponse {
            attempts: config.max_attempts.max(1),
            raw,
        },
    })
}

/// Canonical (persona, visualization, scale) order; personas rank by literacy.
pub fn sort_jobs(jobs: &mut [Job]) {
    jobs.sort_by(|a, b| {
        (a.persona.vlat_level, &a.persona.name, visualization_rank(&a.visualization), &a.visualization, a.scale).cmp(&(
            b.persona.vlat_level,
            &b.persona.name,
            visualization_rank(&b.visualization),
            &b.visualization,
            b.scale,
        ))
    });
}

/// Runs every job with at most `config.max_in_flight` requests outstanding.
/// Results come back in canonical job order regardless of completion order.
pub fn administer_all(
    mut jobs: Vec<Job>,
    transport: &dyn Transport,
    config: &EvalConfig,
) -> Vec<(Job, Result<ScaleResponse, EvalError>)> {
    sort_jobs(&mut jobs);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<ScaleResponse, EvalError>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let workers = config.max_in_flight.clamp(1, jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(k) else { break };
                let result = administer(job, transport, config);
                *slots[k].lock().expect("slot lock") = Some(result);
            });
        }
    });
    jobs.into_iter()
        .zip(slots)
        .map(|(job, slot)| {
            let r = slot.into_inner().expect("slot lock").expect("every job ran");
            (job, r)
        })
        .collect()
}

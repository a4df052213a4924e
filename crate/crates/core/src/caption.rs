//! Caption backends and the image + question → caption pipeline.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use base64::Engine;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::classifier::{ModalityClassifier, ModalityPrediction};
use crate::data_io::ImageSample;
use crate::error::{Error, Result, Stage};
use crate::modality::Modality;
use crate::prompt::{DualPrompt, PromptTemplates};
use crate::question::{analyze, AnalyzerConfig, ConceptDictionary};
use crate::text::TextEmbeddingProvider;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub max_tokens: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            max_tokens: 128,
            temperature: 0.0,
            seed: 0,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be positive".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::Config("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

/// Text generator conditioned on an image and a prompt. Must return
/// non-empty text of at most `max_tokens` whitespace tokens, and be
/// deterministic at temperature 0.
pub trait CaptionBackend: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, image: &ImageSample, prompt: &str, params: &GenerationParams) -> Result<String>;
}

fn truncate_tokens(text: &str, max_tokens: usize) -> String {
    text.split_whitespace().take(max_tokens).collect::<Vec<_>>().join(" ")
}

/// Deterministic template backend that only reads the fused prompt.
#[derive(Debug, Clone, Default)]
pub struct StubBackend;

fn clause_regex(lead: &str) -> Regex {
    Regex::new(&format!(r"(?i){lead}\s+([^;.\n]+)")).expect("static pattern")
}

/// Caption rendered from a fused prompt by [`StubBackend`].
pub fn stub_generate(prompt: &str) -> String {
    static FOCUS: OnceLock<Regex> = OnceLock::new();
    static ASSESS: OnceLock<Regex> = OnceLock::new();
    let focus = FOCUS.get_or_init(|| clause_regex("focus on"));
    let assess = ASSESS.get_or_init(|| clause_regex("assess"));

    let modality = Modality::ALL
        .iter()
        .filter_map(|m| prompt.find(m.canonical_name()).map(|pos| (pos, *m)))
        .min_by_key(|(pos, _)| *pos)
        .map(|(_, m)| m);
    let clause = match modality {
        Some(m) => format!("This is a {} image", m.canonical_name()),
        None => "This is a medical image".to_string(),
    };
    let capture = |re: &Regex| re.captures(prompt).map(|c| c[1].trim().to_string()).filter(|s| !s.is_empty());
    let anatomy = capture(focus).map(|a| a.split(',').next().unwrap_or_default().trim().to_string());
    let pathology = capture(assess).map(|p| p.split(',').map(str::trim).collect::<Vec<_>>().join(" and "));
    match (anatomy, pathology) {
        (Some(a), Some(p)) => format!("{clause}. The image shows {p} in the {a} region."),
        (Some(a), None) => format!("{clause}. The image shows the {a} region without a focal abnormality named."),
        (None, Some(p)) => format!("{clause}. The image shows {p}."),
        (None, None) => format!("{clause}. The image shows no specific focal findings."),
    }
}

impl CaptionBackend for StubBackend {
    fn id(&self) -> &str {
        "stub"
    }

    fn generate(&self, _image: &ImageSample, prompt: &str, params: &GenerationParams) -> Result<String> {
        params.validate()?;
        Ok(truncate_tokens(&stub_generate(prompt), params.max_tokens))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    pub retries: u32,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080/generate".into(),
            timeout_ms: 30_000,
            retries: 2,
        }
    }
}

#[derive(Serialize)]
struct HttpRequest<'a> {
    image_b64: String,
    prompt: &'a str,
    params: &'a GenerationParams,
}

#[derive(Deserialize)]
struct HttpResponse {
    caption: String,
}

/// Remote backend: POSTs `{image_b64, prompt, params}` as JSON and expects
/// `{caption}` back. Transport failures and 5xx responses are retried.
pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| Error::Backend(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn attempt(&self, body: &HttpRequest<'_>) -> std::result::Result<String, (bool, String)> {
        let resp = self
            .client
            .post(&self.config.endpoint)
            .json(body)
            .send()
            .map_err(|e| (true, format!("{}: {e}", self.config.endpoint)))?;
        let status = resp.status();
        if !status.is_success() {
            return Err((status.is_server_error(), format!("{} returned {status}", self.config.endpoint)));
        }
        let parsed: HttpResponse = resp.json().map_err(|e| (false, format!("malformed response: {e}")))?;
        Ok(parsed.caption)
    }
}

impl CaptionBackend for HttpBackend {
    fn id(&self) -> &str {
        "http"
    }

    fn generate(&self, image: &ImageSample, prompt: &str, params: &GenerationParams) -> Result<String> {
        params.validate()?;
        let body = HttpRequest {
            image_b64: base64::engine::general_purpose::STANDARD.encode(image.encode_png()),
            prompt,
            params,
        };
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            match self.attempt(&body) {
                Ok(caption) => {
                    let caption = truncate_tokens(&caption, params.max_tokens);
                    if caption.is_empty() {
                        return Err(Error::Backend("backend returned an empty caption".into()));
                    }
                    return Ok(caption);
                }
                Err((retryable, msg)) => {
                    log::warn!("caption backend attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                    if !retryable {
                        break;
                    }
                }
            }
        }
        Err(Error::Backend(last))
    }
}

/// Output of one pipeline run. `timing_ms` is wall-clock metadata and is
/// not serialised with the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub record_id: String,
    pub caption: String,
    pub prediction: ModalityPrediction,
    pub prompt: DualPrompt,
    pub backend_id: String,
    #[serde(skip)]
    pub timing_ms: u64,
}

/// Everything needed to caption an image.
pub struct CaptionPipeline {
    pub classifier: ModalityClassifier,
    pub dictionary: ConceptDictionary,
    pub provider: Box<dyn TextEmbeddingProvider>,
    pub analyzer: AnalyzerConfig,
    pub templates: PromptTemplates,
    pub backend: Box<dyn CaptionBackend>,
    /// Upper bound on concurrent `generate` calls in [`CaptionPipeline::caption_many`].
    pub max_inflight: usize,
}

impl CaptionPipeline {
    /// Predict modality → analyse question → build prompts → generate.
    /// Failures carry the stage they came from.
    pub fn caption(&self, image: &ImageSample, question: &str, params: &GenerationParams) -> Result<CaptionRecord> {
        let started = Instant::now();
        let prediction = self.classifier.predict(image).map_err(|e| e.in_stage(Stage::Predict))?;
        let analysis = analyze(question, &self.dictionary, self.provider.as_ref(), &self.analyzer)
            .map_err(|e| e.in_stage(Stage::Analyze))?;
        let prompt = self.templates.build(&prediction, &analysis);
        let caption = self
            .backend
            .generate(image, &prompt.fused_text, params)
            .and_then(|c| {
                if c.trim().is_empty() {
                    Err(Error::Backend("backend returned an empty caption".into()))
                } else {
                    Ok(c)
                }
            })
            .map_err(|e| e.in_stage(Stage::Generate))?;
        Ok(CaptionRecord {
            record_id: image.record_id.clone(),
            caption,
            prediction,
            prompt,
            backend_id: self.backend.id().to_string(),
            timing_ms: started.elapsed().as_millis() as u64,
        })
    }

    /// Captions every `(image, question)` pair, running at most
    /// `max_inflight` at once. Results keep input order.
    pub fn caption_many(&self, items: &[(ImageSample, String)], params: &GenerationParams) -> Vec<Result<CaptionRecord>> {
        let width = self.max_inflight.max(1);
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(width) {
            let results: Vec<Result<CaptionRecord>> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|(img, q)| scope.spawn(move || self.caption(img, q, params)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::Backend("caption worker panicked".into()))))
                    .collect()
            });
            out.extend(results);
        }
        out
    }

    /// Re-renders the fused prompt from a record's stored prediction and analysis.
    pub fn rebuild_prompt(&self, record: &CaptionRecord) -> String {
        self.templates.build(&record.prediction, &record.prompt.analysis).fused_text
    }
}

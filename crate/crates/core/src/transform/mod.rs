//! Text transformation: prompt templates, pluggable backends, a persistent
//! cache and the corpus-level driver.

mod backend;
mod cache;
mod simplify;

use std::collections::BTreeMap;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError};

pub use backend::{
    BackendConfig, BackendError, ChatCompletionBackend, IdentityTransformer, LookupTransformer,
    RuleTransformer, Transformer,
};
pub use cache::{TransformCache, CACHE_FORMAT_VERSION};
pub use simplify::{offline_simplify, RewriteRules, RuleSpec, StopwordPolicy};

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("invalid prompt template: {0}")]
    Template(String),
    #[error("invalid rewrite rules: {0}")]
    Rules(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("offline mode with {} uncached documents: {}", .ids.len(), .ids.join(", "))]
    Offline { ids: Vec<String> },
    #[error(
        "backend failed on `{doc_id}` after {attempts} attempt(s): {message}; \
         {completed} new records are cached, rerun the same command to resume"
    )]
    Backend {
        doc_id: String,
        attempts: u32,
        message: String,
        completed: usize,
    },
    #[error("cache line {line}: {reason}")]
    Cache { line: usize, reason: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = TransformError> = std::result::Result<T, E>;

const PLACEHOLDER: &str = "{text}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TemplateRepr", into = "TemplateRepr")]
pub struct PromptTemplate {
    name: String,
    template: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateRepr {
    name: String,
    template: String,
}

impl TryFrom<TemplateRepr> for PromptTemplate {
    type Error = TransformError;

    fn try_from(r: TemplateRepr) -> Result<Self> {
        PromptTemplate::new(&r.name, &r.template)
    }
}

impl From<PromptTemplate> for TemplateRepr {
    fn from(t: PromptTemplate) -> Self {
        TemplateRepr {
            name: t.name,
            template: t.template,
        }
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::simplify()
    }
}

impl PromptTemplate {
    pub fn new(name: &str, template: &str) -> Result<Self> {
        let n = template.matches(PLACEHOLDER).count();
        if n != 1 {
            return Err(TransformError::Template(format!(
                "`{template}` must contain {PLACEHOLDER} exactly once, found {n}"
            )));
        }
        if name.trim().is_empty() {
            return Err(TransformError::Template("template name is empty".into()));
        }
        Ok(PromptTemplate {
            name: name.to_string(),
            template: template.to_string(),
        })
    }

    pub fn simplify() -> Self {
        PromptTemplate::new("simplify", "Simplify \"{text}\"").expect("valid template")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    /// Substitutes the raw text without escaping.
    pub fn render(&self, text: &str) -> String {
        self.template.replacen(PLACEHOLDER, text, 1)
    }
}

/// Cache key for one backend call.
pub fn request_hash(backend_id: &str, model: &str, rendered_prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(backend_id.as_bytes());
    h.update([0x1f]);
    h.update(model.as_bytes());
    h.update([0x1f]);
    h.update(rendered_prompt.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub doc_id: String,
    pub original: String,
    pub transformed: String,
    pub backend: String,
    pub model: String,
    pub template: String,
    pub request_hash: String,
    pub created_unix: u64,
}

const RESPONSE_PREFIXES: &[&str] = &[
    "here is the simplified review:",
    "here's the simplified review:",
    "here is a simplified version:",
    "here's a simplified version:",
    "simplified review:",
    "simplified version:",
    "simplified text:",
    "simplified:",
    "simplification:",
];

const QUOTE_PAIRS: &[(char, char)] = &[
    ('"', '"'),
    ('\'', '\''),
    ('\u{201c}', '\u{201d}'),
    ('`', '`'),
];

/// Strips framing that chat models add around an answer: a leading
/// "Simplified:"-style label (case-insensitive) and matching surrounding
/// quotes, repeatedly.
pub fn clean_response(raw: &str) -> String {
    let mut s = raw.trim();
    loop {
        let before = s;
        let lower = s.to_lowercase();
        if let Some(p) = RESPONSE_PREFIXES.iter().find(|p| lower.starts_with(*p)) {
            if s.is_char_boundary(p.len()) {
                s = s[p.len()..].trim();
            }
        }
        for (open, close) in QUOTE_PAIRS {
            let inner = s.strip_prefix(*open).and_then(|r| r.strip_suffix(*close));
            if let Some(inner) = inner {
                s = inner.trim();
                break;
            }
        }
        if s == before {
            return s.to_string();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformOptions {
    /// Forbid calls to remote backends; everything must come from the cache.
    pub offline: bool,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub rate_limit_per_min: Option<f64>,
    pub progress_every: usize,
}

impl Default for TransformOptions {
    fn default() -> Self {
        TransformOptions {
            offline: false,
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
            rate_limit_per_min: None,
            progress_every: 25,
        }
    }
}

impl TransformOptions {
    pub fn from_backend(config: &BackendConfig, offline: bool) -> Self {
        TransformOptions {
            offline,
            max_retries: config.max_retries,
            backoff_base: Duration::from_millis(config.backoff_base_ms),
            rate_limit_per_min: Some(config.rate_limit_per_min),
            ..Self::default()
        }
    }
}

/// Single-token bucket: calls are spaced at least `60 / rate` seconds apart.
struct RateLimiter {
    interval: Duration,
    next: Option<Instant>,
}

impl RateLimiter {
    fn new(per_min: Option<f64>) -> Self {
        RateLimiter {
            interval: per_min
                .filter(|r| r.is_finite() && *r > 0.0)
                .map(|r| Duration::from_secs_f64(60.0 / r))
                .unwrap_or(Duration::ZERO),
            next: None,
        }
    }

    fn acquire(&mut self) {
        let now = Instant::now();
        if let Some(next) = self.next {
            if next > now {
                std::thread::sleep(next - now);
            }
        }
        self.next = Some(Instant::now() + self.interval);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlaggedDoc {
    pub doc_id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct TransformOutcome {
    /// Same ids and labels as the input minus flagged documents.
    pub corpus: Corpus,
    /// One record per surviving document, in input order.
    pub records: Vec<TransformRecord>,
    pub flagged: Vec<FlaggedDoc>,
    pub backend_calls: usize,
    pub cache_hits: usize,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Transforms every document, consulting the cache before calling the
/// backend and persisting each new record as soon as it arrives.
pub fn transform_corpus(
    corpus: &Corpus,
    backend: &dyn Transformer,
    template: &PromptTemplate,
    cache: &mut TransformCache,
    options: &TransformOptions,
) -> Result<TransformOutcome> {
    let hashes: Vec<String> = corpus
        .iter()
        .map(|d| request_hash(backend.id(), backend.model(), &template.render(&d.text)))
        .collect();
    if options.offline && backend.is_remote() {
        let missing: Vec<String> = corpus
            .iter()
            .zip(&hashes)
            .filter(|(_, h)| cache.get(h).is_none())
            .map(|(d, _)| d.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(TransformError::Offline { ids: missing });
        }
    }
    let mut limiter = RateLimiter::new(if backend.is_remote() {
        options.rate_limit_per_min
    } else {
        None
    });
    let mut records = Vec::with_capacity(corpus.len());
    let mut flagged = Vec::new();
    let mut texts = BTreeMap::new();
    let (mut calls, mut hits, mut completed) = (0usize, 0usize, 0usize);
    for (i, (doc, hash)) in corpus.iter().zip(&hashes).enumerate() {
        if let Some(record) = cache.get(hash) {
            hits += 1;
            texts.insert(doc.id.clone(), record.transformed.clone());
            records.push(TransformRecord {
                doc_id: doc.id.clone(),
                ..record.clone()
            });
            continue;
        }
        let prompt = template.render(&doc.text);
        let mut attempt = 0u32;
        let raw = loop {
            limiter.acquire();
            calls += 1;
            attempt += 1;
            match backend.transform(&prompt, &doc.text) {
                Ok(out) => break out,
                Err(BackendError::Transient(m)) if attempt <= options.max_retries => {
                    let wait = options
                        .backoff_base
                        .saturating_mul(1 << (attempt - 1).min(16));
                    log::warn!(
                        "`{}` attempt {attempt} failed ({m}); retrying in {wait:?}",
                        doc.id
                    );
                    std::thread::sleep(wait);
                }
                Err(e) => {
                    return Err(TransformError::Backend {
                        doc_id: doc.id.clone(),
                        attempts: attempt,
                        message: e.to_string(),
                        completed,
                    })
                }
            }
        };
        let cleaned = clean_response(&raw);
        if cleaned.is_empty() {
            log::warn!("`{}`: empty response, document excluded", doc.id);
            flagged.push(FlaggedDoc {
                doc_id: doc.id.clone(),
                reason: "empty response".into(),
            });
            continue;
        }
        let record = TransformRecord {
            doc_id: doc.id.clone(),
            original: doc.text.clone(),
            transformed: cleaned.clone(),
            backend: backend.id().to_string(),
            model: backend.model().to_string(),
            template: template.name().to_string(),
            request_hash: hash.clone(),
            created_unix: now_unix(),
        };
        cache.insert(record.clone())?;
        completed += 1;
        texts.insert(doc.id.clone(), cleaned);
        records.push(record);
        if options.progress_every > 0 && (i + 1) % options.progress_every == 0 {
            log::info!("transformed {}/{} documents", i + 1, corpus.len());
        }
    }
    let step = format!(
        "transform {}/{} template={}",
        backend.id(),
        backend.model(),
        template.name()
    );
    Ok(TransformOutcome {
        corpus: corpus.with_texts(&texts, &step)?,
        records,
        flagged,
        backend_calls: calls,
        cache_hits: hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, GroupLabel, GroupNames, Provenance};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::{Arc, Mutex};

    fn corpus(texts: &[&str]) -> Corpus {
        let docs = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document {
                id: format!("d{i}"),
                text: t.to_string(),
                group: if i % 2 == 0 {
                    GroupLabel::A
                } else {
                    GroupLabel::B
                },
                meta: Default::default(),
            })
            .collect();
        Corpus::new(docs, GroupNames::new("UK", "US"), Provenance::default()).unwrap()
    }

    fn fast() -> TransformOptions {
        TransformOptions {
            backoff_base: Duration::ZERO,
            ..TransformOptions::default()
        }
    }

    /// Scripted backend: answers from `script` in order (then echoes upper
    /// case text), counting calls.
    struct Scripted {
        calls: AtomicUsize,
        script: Mutex<Vec<Result<String, BackendError>>>,
        remote: bool,
    }

    impl Scripted {
        fn new(script: Vec<Result<String, BackendError>>, remote: bool) -> Self {
            Scripted {
                calls: AtomicUsize::new(0),
                script: Mutex::new(script.into_iter().rev().collect()),
                remote,
            }
        }
    }

    impl Transformer for Scripted {
        fn id(&self) -> &str {
            "scripted"
        }
        fn model(&self) -> &str {
            "m1"
        }
        fn is_remote(&self) -> bool {
            self.remote
        }
        fn transform(&self, _prompt: &str, text: &str) -> Result<String, BackendError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.script
                .lock()
                .unwrap()
                .pop()
                .unwrap_or_else(|| Ok(text.to_uppercase()))
        }
    }

    #[test]
    fn render_examples() {
        let t = PromptTemplate::simplify();
        assert_eq!(t.render("Great rides"), "Simplify \"Great rides\"");
        assert_eq!(
            t.render("a \"quoted\" word"),
            "Simplify \"a \"quoted\" word\""
        );
        assert_eq!(t.render(""), "Simplify \"\"");
        assert_eq!(t.render("{text}"), "Simplify \"{text}\"");
    }

    #[test]
    fn template_validation() {
        assert!(PromptTemplate::new("x", "no placeholder").is_err());
        assert!(PromptTemplate::new("x", "{text} {text}").is_err());
        assert!(PromptTemplate::new("", "{text}").is_err());
        let bad: std::result::Result<PromptTemplate, _> =
            serde_json::from_str(r#"{"name":"x","template":"nothing"}"#);
        assert!(bad.is_err());
        let ok: PromptTemplate = serde_json::from_str(
            r#"{"name":"summarise","template":"Summarise the main points: {text}"}"#,
        )
        .unwrap();
        assert_eq!(ok.render("a"), "Summarise the main points: a");
    }

    #[test]
    fn hash_is_stable() {
        let h = request_hash(
            "chat-completion",
            "gpt-3.5-turbo",
            "Simplify \"Great rides\"",
        );
        assert_eq!(
            h,
            "932a3497fb372a84ef26100853687800bfe22623db120eb7039996c979ac08d7"
        );
        assert_ne!(
            h,
            request_hash("chat-completion", "gpt-4", "Simplify \"Great rides\"")
        );
    }

    #[test]
    fn response_cleaning() {
        assert_eq!(clean_response("  \"Rides were fun.\" "), "Rides were fun.");
        assert_eq!(
            clean_response("Simplified: \"Rides were fun.\""),
            "Rides were fun."
        );
        assert_eq!(clean_response("SIMPLIFIED REVIEW: fun"), "fun");
        assert_eq!(clean_response("\u{201c}fun\u{201d}"), "fun");
        assert_eq!(clean_response("\"\""), "");
        assert_eq!(clean_response("it's \"fine\""), "it's \"fine\"");
    }

    #[test]
    fn identity_preserves_corpus() {
        let c = corpus(&["Great rides", "Long queues"]);
        let mut cache = TransformCache::in_memory();
        let out = transform_corpus(
            &c,
            &IdentityTransformer,
            &PromptTemplate::simplify(),
            &mut cache,
            &fast(),
        )
        .unwrap();
        assert_eq!(out.corpus.documents(), c.documents());
        assert_eq!(out.backend_calls, 2);
        assert_eq!(out.records.len(), 2);
    }

    #[test]
    fn rule_backend_example() {
        let rules = RewriteRules::new(RuleSpec::new(&[("didn't", "did not"), ("queues", "lines")]))
            .unwrap();
        let c = corpus(&["I didn't like the long queues"]);
        let mut cache = TransformCache::in_memory();
        let out = transform_corpus(
            &c,
            &RuleTransformer::new(rules),
            &PromptTemplate::simplify(),
            &mut cache,
            &fast(),
        )
        .unwrap();
        assert_eq!(
            out.corpus.documents()[0].text,
            "i did not like the long lines"
        );
        assert_eq!(out.corpus.documents()[0].group, GroupLabel::A);
    }

    #[test]
    fn cache_round_trip_makes_no_calls() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let c = corpus(&["one", "two", "three"]);
        let backend = Scripted::new(vec![], true);
        let t = PromptTemplate::simplify();
        let mut cache = TransformCache::open(&path).unwrap();
        let first = transform_corpus(&c, &backend, &t, &mut cache, &fast()).unwrap();
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
        let digest = cache.digest();

        let mut reloaded = TransformCache::open(&path).unwrap();
        assert_eq!(reloaded.len(), 3);
        assert_eq!(reloaded.digest(), digest);
        let offline = TransformOptions {
            offline: true,
            ..fast()
        };
        let second = transform_corpus(&c, &backend, &t, &mut reloaded, &offline).unwrap();
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
        assert_eq!(second.backend_calls, 0);
        assert_eq!(second.cache_hits, 3);
        assert_eq!(second.corpus.documents(), first.corpus.documents());
        assert_eq!(second.records, first.records);
    }

    #[test]
    fn offline_cold_cache_lists_ids() {
        let c = corpus(&["one", "two"]);
        let backend = Scripted::new(vec![], true);
        let mut cache = TransformCache::in_memory();
        let offline = TransformOptions {
            offline: true,
            ..fast()
        };
        let err = transform_corpus(
            &c,
            &backend,
            &PromptTemplate::simplify(),
            &mut cache,
            &offline,
        )
        .unwrap_err();
        match &err {
            TransformError::Offline { ids } => assert_eq!(ids, &["d0", "d1"]),
            other => panic!("unexpected {other}"),
        }
        assert!(err.to_string().contains("d0, d1"));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn interrupted_run_resumes_without_repeating_calls() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let c = corpus(&["a", "b", "c", "d", "e"]);
        let t = PromptTemplate::simplify();
        let failing = Scripted::new(
            vec![
                Ok("A".into()),
                Ok("B".into()),
                Err(BackendError::Fatal("quota exhausted".into())),
            ],
            true,
        );
        let mut cache = TransformCache::open(&path).unwrap();
        let err = transform_corpus(&c, &failing, &t, &mut cache, &fast()).unwrap_err();
        assert!(
            matches!(err, TransformError::Backend { completed: 2, ref doc_id, .. } if doc_id == "d2")
        );
        assert!(err.to_string().contains("resume"));

        let mut cache = TransformCache::open(&path).unwrap();
        assert_eq!(cache.len(), 2);
        let working = Scripted::new(vec![], true);
        let out = transform_corpus(&c, &working, &t, &mut cache, &fast()).unwrap();
        let successful_calls = 2 + working.calls.load(Ordering::SeqCst);
        assert_eq!(successful_calls, c.len());
        assert_eq!(out.cache_hits, 2);
        let texts: Vec<&str> = out.corpus.texts().collect();
        assert_eq!(texts, ["A", "B", "C", "D", "E"]);
    }

    #[test]
    fn transient_errors_are_retried_then_give_up() {
        let c = corpus(&["a"]);
        let t = PromptTemplate::simplify();
        let flaky = Scripted::new(
            vec![Err(BackendError::Transient("503".into())), Ok("ok".into())],
            true,
        );
        let out =
            transform_corpus(&c, &flaky, &t, &mut TransformCache::in_memory(), &fast()).unwrap();
        assert_eq!(out.backend_calls, 2);
        assert_eq!(out.corpus.documents()[0].text, "ok");

        let down = Scripted::new(vec![Err(BackendError::Transient("503".into())); 10], true);
        let opts = TransformOptions {
            max_retries: 2,
            ..fast()
        };
        let err =
            transform_corpus(&c, &down, &t, &mut TransformCache::in_memory(), &opts).unwrap_err();
        assert!(matches!(err, TransformError::Backend { attempts: 3, .. }));
        assert_eq!(down.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn empty_responses_are_flagged_not_cached() {
        let c = corpus(&["a", "b", "c"]);
        let backend = Scripted::new(
            vec![Ok("x".into()), Ok("  \"\" ".into()), Ok("z".into())],
            false,
        );
        let mut cache = TransformCache::in_memory();
        let out = transform_corpus(
            &c,
            &backend,
            &PromptTemplate::simplify(),
            &mut cache,
            &fast(),
        )
        .unwrap();
        assert_eq!(out.flagged.len(), 1);
        assert_eq!(out.flagged[0].doc_id, "d1");
        assert_eq!(out.corpus.ids(), ["d0", "d2"]);
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn truncated_cache_tail_is_tolerated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let c = corpus(&["a", "b"]);
        let mut cache = TransformCache::open(&path).unwrap();
        transform_corpus(
            &c,
            &IdentityTransformer,
            &PromptTemplate::simplify(),
            &mut cache,
            &fast(),
        )
        .unwrap();
        let mut f = std::fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .unwrap();
        f.write_all(b"{\"doc_id\":\"d9\",\"orig").unwrap();
        assert_eq!(TransformCache::open(&path).unwrap().len(), 2);
        let content = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, format!("garbage\n{content}")).unwrap();
        assert!(matches!(
            TransformCache::open(&path),
            Err(TransformError::Cache { line: 1, .. })
        ));
    }

    #[test]
    fn lookup_backend() {
        let lookup = LookupTransformer::from_pairs(
            "pairs",
            [("Long queues ".to_string(), "Long lines".to_string())],
        );
        assert_eq!(lookup.transform("", "Long queues").unwrap(), "Long lines");
        assert!(matches!(
            lookup.transform("", "other"),
            Err(BackendError::Fatal(_))
        ));
    }

    /// Minimal HTTP/1.1 responder: answers each connection with the next
    /// scripted (status, body) and records request bodies.
    fn stub_server(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!(
            "http://{}/v1/chat/completions",
            listener.local_addr().unwrap()
        );
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&seen);
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut length = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; length];
                reader.read_exact(&mut buf).unwrap();
                log.lock().unwrap().push(String::from_utf8(buf).unwrap());
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (url, seen)
    }

    fn chat_body(content: &str) -> String {
        serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
            .to_string()
    }

    #[test]
    fn chat_completion_over_http() {
        let (url, seen) = stub_server(vec![
            (500, "{}".into()),
            (200, chat_body("Simplified: \"The rides were fun.\"")),
        ]);
        let config = BackendConfig {
            endpoint: url,
            model: "stub-model".into(),
            api_key_env: "LEAKAGE_TEST_UNSET_KEY".into(),
            ..BackendConfig::default()
        };
        let backend = ChatCompletionBackend::new(config.clone()).unwrap();
        let c = corpus(&["Rides were great fun!"]);
        let mut opts = TransformOptions::from_backend(&config, false);
        opts.backoff_base = Duration::ZERO;
        opts.rate_limit_per_min = Some(6000.0);
        let out = transform_corpus(
            &c,
            &backend,
            &PromptTemplate::simplify(),
            &mut TransformCache::in_memory(),
            &opts,
        )
        .unwrap();
        assert_eq!(out.corpus.documents()[0].text, "The rides were fun.");
        assert_eq!(out.backend_calls, 2);
        let bodies = seen.lock().unwrap();
        let sent: serde_json::Value = serde_json::from_str(&bodies[1]).unwrap();
        assert_eq!(sent["model"], "stub-model");
        assert_eq!(sent["temperature"], 0.0);
        assert_eq!(sent["messages"][0]["role"], "user");
        assert_eq!(
            sent["messages"][0]["content"],
            "Simplify \"Rides were great fun!\""
        );
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let (url, _) = stub_server(vec![(401, "{}".into())]);
        let config = BackendConfig {
            endpoint: url,
            api_key_env: "LEAKAGE_TEST_UNSET_KEY".into(),
            ..BackendConfig::default()
        };
        let backend = ChatCompletionBackend::new(config).unwrap();
        let err = backend.transform("p", "t").unwrap_err();
        assert!(matches!(err, BackendError::Fatal(ref m) if m.contains("401")));
    }

    #[test]
    fn backend_config_validation() {
        let mut c = BackendConfig::default();
        assert!(c.validate().is_ok());
        c.rate_limit_per_min = 0.0;
        assert!(c.validate().is_err());
        c = BackendConfig {
            temperature: -0.1,
            ..BackendConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(
            serde_json::from_str::<BackendConfig>(r#"{"endpoint":"http://x","bogus":1}"#).is_err()
        );
    }
}

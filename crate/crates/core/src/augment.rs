//! Paraphrase augmentation: prompt construction, response parsing, a
//! content-addressed on-disk cache, and a chat-completion HTTP client with
//! bounded concurrency and exponential backoff.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{CorpusError, LabeledDataset, LabeledUtterance};

pub const PROMPT_VERSION: &str = "paraphrase-json-v1";
const UTTERANCE_MARKER: &str = "Utterance: ";

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("could not parse {expected} paraphrases from response ({reason}): {raw:?}")]
    Parse {
        expected: usize,
        reason: String,
        raw: String,
    },
    #[error("auth token variable {0} is not set")]
    AuthMissing(String),
    #[error("request for {source_id} failed after {attempts} attempts: {last}")]
    RetriesExhausted {
        source_id: String,
        attempts: usize,
        last: String,
    },
    #[error("request for {source_id} rejected with status {status}: {body}")]
    Status {
        source_id: String,
        status: u16,
        body: String,
    },
    #[error("malformed chat-completion response for {source_id}: {reason}")]
    Response { source_id: String, reason: String },
    #[error("paraphrase set refers to unknown instance {0}")]
    UnknownSource(String),
    #[error("{ids} ids but {gold} gold and {pred} predicted labels")]
    LengthMismatch { ids: usize, gold: usize, pred: usize },
    #[error("invalid client config: {0}")]
    Config(String),
    #[error("cache: {0}")]
    Cache(#[from] std::io::Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugStrategy {
    /// `k` paraphrases for every training instance, added before round 1.
    FullK { k: usize },
    /// `k` paraphrases for each instance mispredicted in the previous round.
    WrongPredK { k: usize },
}

impl AugStrategy {
    pub const F4: AugStrategy = AugStrategy::FullK { k: 4 };
    pub const F10: AugStrategy = AugStrategy::FullK { k: 10 };
    pub const WP10: AugStrategy = AugStrategy::WrongPredK { k: 10 };

    pub fn k(&self) -> usize {
        match *self {
            AugStrategy::FullK { k } | AugStrategy::WrongPredK { k } => k,
        }
    }

    pub fn with_k(self, k: usize) -> AugStrategy {
        match self {
            AugStrategy::FullK { .. } => AugStrategy::FullK { k },
            AugStrategy::WrongPredK { .. } => AugStrategy::WrongPredK { k },
        }
    }
}

impl fmt::Display for AugStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AugStrategy::FullK { k } => write!(f, "f{k}"),
            AugStrategy::WrongPredK { k } => write!(f, "wp{k}"),
        }
    }
}

impl FromStr for AugStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.to_ascii_lowercase();
        let (ctor, digits): (fn(usize) -> AugStrategy, &str) = if let Some(d) = s.strip_prefix("wp") {
            (|k| AugStrategy::WrongPredK { k }, d)
        } else if let Some(d) = s.strip_prefix('f') {
            (|k| AugStrategy::FullK { k }, d)
        } else {
            return Err(format!("unknown strategy {s:?} (expected f4, f10, wp10, ...)"));
        };
        match digits.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(ctor(k)),
            _ => Err(format!("strategy {s:?} needs a positive paraphrase count")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParaphraseSet {
    pub source_id: String,
    pub source_text: String,
    pub paraphrases: Vec<String>,
    pub model: String,
    pub prompt_version: String,
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl ParaphraseSet {
    /// Paraphrases that repeat the source or an earlier paraphrase, ignoring
    /// case and whitespace.
    pub fn duplicate_count(&self) -> usize {
        let mut seen: BTreeSet<String> = BTreeSet::from([normalize_ws(&self.source_text)]);
        self.paraphrases
            .iter()
            .filter(|p| !seen.insert(normalize_ws(p)))
            .count()
    }
}

pub fn build_prompt(text: &str, k: usize) -> String {
    let plural = if k == 1 { "" } else { "s" };
    format!(
        "Write exactly {k} paraphrase{plural} of the utterance below. Each paraphrase must keep \
         the intent of the original while varying its wording and sentence structure.\n\
         Respond with a JSON array of exactly {k} string{plural} and nothing else.\n\n\
         {UTTERANCE_MARKER}{text}"
    )
}

/// Recovers `(utterance, k)` from a prompt produced by [`build_prompt`].
pub fn prompt_fields(prompt: &str) -> Option<(&str, usize)> {
    let (_, text) = prompt.rsplit_once(UTTERANCE_MARKER)?;
    let rest = prompt.strip_prefix("Write exactly ")?;
    let k = rest.split_whitespace().next()?.parse().ok()?;
    Some((text, k))
}

fn strip_code_fence(s: &str) -> &str {
    let t = s.trim();
    match t.strip_prefix("```") {
        Some(inner) => {
            let inner = inner.trim_start_matches(|c: char| c.is_ascii_alphanumeric());
            inner.strip_suffix("```").unwrap_or(inner).trim()
        }
        None => t,
    }
}

fn parse_json_array(body: &str) -> Option<Vec<String>> {
    let t = strip_code_fence(body);
    if let Ok(v) = serde_json::from_str::<Vec<String>>(t) {
        return Some(v);
    }
    let (start, end) = (t.find('[')?, t.rfind(']')?);
    serde_json::from_str(t.get(start..=end)?).ok()
}

fn parse_numbered_list(body: &str) -> Vec<String> {
    body.lines()
        .filter_map(|line| {
            let line = line.trim();
            let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
            if digits == 0 {
                return None;
            }
            let rest = line[digits..].strip_prefix(['.', ')'])?.trim();
            let rest = rest.strip_prefix('"').and_then(|r| r.strip_suffix('"')).unwrap_or(rest);
            Some(rest.trim().to_string())
        })
        .collect()
}

// Paraphrases end up as TSV cells, which cannot hold tabs or newlines.
fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Extracts exactly `k` paraphrases from a completion: a JSON string array
/// first, then a numbered list (`1. ...` per line) with surrounding prose.
pub fn parse_paraphrases(body: &str, k: usize) -> Result<Vec<String>, AugmentError> {
    let valid = |v: &[String]| v.len() == k && v.iter().all(|p| !p.trim().is_empty());
    let json = parse_json_array(body);
    if let Some(v) = &json {
        if valid(v) {
            return Ok(v.iter().map(|p| collapse_whitespace(p)).collect());
        }
    }
    let numbered = parse_numbered_list(body);
    if valid(&numbered) {
        return Ok(numbered.iter().map(|p| collapse_whitespace(p)).collect());
    }
    let reason = match json {
        Some(v) => format!(
            "JSON array holds {} usable strings",
            v.iter().filter(|p| !p.trim().is_empty()).count()
        ),
        None if numbered.is_empty() => "neither a JSON array nor a numbered list".to_string(),
        None => format!(
            "numbered list holds {} usable lines",
            numbered.iter().filter(|p| !p.is_empty()).count()
        ),
    };
    Err(AugmentError::Parse {
        expected: k,
        reason,
        raw: body.to_string(),
    })
}

/// Lowercase hex SHA-256 of `model \x1f prompt_version \x1f source_text \x1f k`.
pub fn cache_key(model: &str, prompt_version: &str, source_text: &str, k: usize) -> String {
    let mut h = Sha256::new();
    h.update(format!("{model}\x1f{prompt_version}\x1f{source_text}\x1f{k}").as_bytes());
    hex::encode(h.finalize())
}

/// Directory-backed paraphrase store with one JSON file per key.
#[derive(Debug)]
pub struct ParaphraseCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl ParaphraseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, AugmentError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(ParaphraseCache {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<ParaphraseSet>, AugmentError> {
        let bytes = match std::fs::read(self.path(key)) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        match serde_json::from_slice(&bytes) {
            Ok(set) => Ok(Some(set)),
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {key}: {e}");
                Ok(None)
            }
        }
    }

    pub fn put(&self, key: &str, set: &ParaphraseSet) -> Result<(), AugmentError> {
        let body = serde_json::to_vec_pretty(set).expect("paraphrase sets serialize");
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let tmp = self.dir.join(format!(".{key}.tmp"));
        std::fs::write(&tmp, body)?;
        std::fs::rename(tmp, self.path(key))?;
        Ok(())
    }

    pub fn lookup(&self, model: &str, source_text: &str, k: usize) -> Result<Option<ParaphraseSet>, AugmentError> {
        self.get(&cache_key(model, PROMPT_VERSION, source_text, k))
    }

    pub fn len(&self) -> Result<usize, AugmentError> {
        let mut n = 0;
        for entry in std::fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if name.ends_with(".json") && !name.starts_with('.') {
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn is_empty(&self) -> Result<bool, AugmentError> {
        Ok(self.len()? == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmClientConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    pub max_retries: usize,
    pub max_in_flight: usize,
    /// Environment variable holding the bearer token; `None` sends no auth header.
    pub auth_env: Option<String>,
    /// First retry delay; doubles on each further retry.
    pub backoff_base_ms: u64,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        LlmClientConfig {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".to_string(),
            model: "gpt-3.5-turbo".to_string(),
            temperature: 0.7,
            timeout_secs: 60,
            max_retries: 5,
            max_in_flight: 4,
            auth_env: Some("LLM_API_KEY".to_string()),
            backoff_base_ms: 500,
        }
    }
}

impl LlmClientConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if self.max_in_flight == 0 {
            return Err(AugmentError::Config("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }

    fn backoff(&self, retry: usize) -> Duration {
        let factor = 1u64 << retry.min(16);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor).min(60_000))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GenerationStats {
    pub cache_hits: usize,
    /// Instances fetched over HTTP.
    pub fetched: usize,
    /// HTTP attempts including retries.
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub sets: Vec<ParaphraseSet>,
    pub stats: GenerationStats,
}

fn is_retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

struct ChatClient<'a> {
    http: reqwest::blocking::Client,
    config: &'a LlmClientConfig,
    token: Option<String>,
    attempts: AtomicUsize,
}

impl ChatClient<'_> {
    fn request(&self, source: &LabeledUtterance, k: usize) -> Result<Vec<String>, AugmentError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": build_prompt(&source.text, k)}],
            "temperature": self.config.temperature,
        });
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.config.backoff(attempt - 1));
            }
            self.attempts.fetch_add(1, Ordering::Relaxed);
            let mut req = self.http.post(&self.config.endpoint).json(&body);
            if let Some(token) = &self.token {
                req = req.bearer_auth(token);
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => {
                    log::debug!("attempt {} for {} failed: {e}", attempt + 1, source.id);
                    last = e.to_string();
                    continue;
                }
            };
            let status = resp.status().as_u16();
            let text = resp.text().unwrap_or_default();
            if is_retryable(status) {
                log::debug!("attempt {} for {} got status {status}", attempt + 1, source.id);
                last = format!("status {status}: {text}");
                continue;
            }
            if !(200..300).contains(&status) {
                return Err(AugmentError::Status {
                    source_id: source.id.clone(),
                    status,
                    body: text,
                });
            }
            let content = completion_content(&text).map_err(|reason| AugmentError::Response {
                source_id: source.id.clone(),
                reason,
            })?;
            return parse_paraphrases(&content, k);
        }
        Err(AugmentError::RetriesExhausted {
            source_id: source.id.clone(),
            attempts: self.config.max_retries + 1,
            last,
        })
    }
}

/// `choices[0].message.content` of a chat-completion response body.
pub fn completion_content(body: &str) -> Result<String, String> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| e.to_string())?;
    v.pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| "missing choices[0].message.content".to_string())
}

/// Fetches `k` paraphrases per instance, consulting `cache` first. Misses are
/// requested with at most `max_in_flight` concurrent requests and stored as
/// they complete, so a failed run can be resumed. Output order follows input.
pub fn generate_paraphrases(
    instances: &[LabeledUtterance],
    k: usize,
    config: &LlmClientConfig,
    cache: &ParaphraseCache,
) -> Result<Generation, AugmentError> {
    config.validate()?;
    let mut stats = GenerationStats::default();
    let mut slots: Vec<Option<ParaphraseSet>> = Vec::with_capacity(instances.len());
    let mut misses = Vec::new();
    for (i, u) in instances.iter().enumerate() {
        match cache.lookup(&config.model, &u.text, k)? {
            Some(mut set) => {
                set.source_id = u.id.clone();
                stats.cache_hits += 1;
                slots.push(Some(set));
            }
            None => {
                misses.push(i);
                slots.push(None);
            }
        }
    }

    if !misses.is_empty() {
        let token = match &config.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| AugmentError::AuthMissing(var.clone()))?),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| AugmentError::Config(e.to_string()))?;
        let client = ChatClient {
            http,
            config,
            token,
            attempts: AtomicUsize::new(0),
        };
        let cursor = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);
        let results: Mutex<HashMap<usize, Result<ParaphraseSet, AugmentError>>> = Mutex::new(HashMap::new());
        let workers = config.max_in_flight.min(misses.len());

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if abort.load(Ordering::Relaxed) {
                        break;
                    }
                    let n = cursor.fetch_add(1, Ordering::Relaxed);
                    let Some(&i) = misses.get(n) else { break };
                    let u = &instances[i];
                    let outcome = client.request(u, k).and_then(|paraphrases| {
                        let set = ParaphraseSet {
                            source_id: u.id.clone(),
                            source_text: u.text.clone(),
                            paraphrases,
                            model: config.model.clone(),
                            prompt_version: PROMPT_VERSION.to_string(),
                        };
                        cache.put(&cache_key(&config.model, PROMPT_VERSION, &u.text, k), &set)?;
                        Ok(set)
                    });
                    if outcome.is_err() {
                        abort.store(true, Ordering::Relaxed);
                    }
                    results.lock().unwrap_or_else(|p| p.into_inner()).insert(i, outcome);
                });
            }
        });

        stats.attempts = client.attempts.load(Ordering::Relaxed);
        let mut results = results.into_inner().unwrap_or_else(|p| p.into_inner());
        for &i in &misses {
            match results.remove(&i) {
                Some(Ok(set)) => {
                    stats.fetched += 1;
                    slots[i] = Some(set);
                }
                Some(Err(e)) => return Err(e),
                None => {}
            }
        }
    }

    let sets: Vec<ParaphraseSet> = slots.into_iter().flatten().collect();
    debug_assert_eq!(sets.len(), instances.len());
    Ok(Generation { sets, stats })
}

/// Anything that can supply paraphrase sets for a batch of instances.
pub trait ParaphraseSource {
    fn paraphrase(&self, instances: &[LabeledUtterance], k: usize) -> Result<Vec<ParaphraseSet>, AugmentError>;
}

/// HTTP-backed source with a persistent cache.
#[derive(Debug)]
pub struct LlmParaphraser {
    pub config: LlmClientConfig,
    pub cache: ParaphraseCache,
}

impl ParaphraseSource for LlmParaphraser {
    fn paraphrase(&self, instances: &[LabeledUtterance], k: usize) -> Result<Vec<ParaphraseSet>, AugmentError> {
        let generation = generate_paraphrases(instances, k, &self.config, &self.cache)?;
        log::info!(
            "paraphrases: {} cached, {} fetched in {} attempts",
            generation.stats.cache_hits,
            generation.stats.fetched,
            generation.stats.attempts
        );
        Ok(generation.sets)
    }
}

/// Appends each paraphrase as `source_id#p<i>` carrying its source's intent.
pub fn augment_dataset(train: &LabeledDataset, sets: &[ParaphraseSet]) -> Result<LabeledDataset, AugmentError> {
    let by_id: HashMap<&str, &LabeledUtterance> = train.utterances().iter().map(|u| (u.id.as_str(), u)).collect();
    let mut rows = train.utterances().to_vec();
    let mut duplicates = 0;
    for set in sets {
        let source = by_id
            .get(set.source_id.as_str())
            .ok_or_else(|| AugmentError::UnknownSource(set.source_id.clone()))?;
        duplicates += set.duplicate_count();
        for (i, p) in set.paraphrases.iter().enumerate() {
            rows.push(LabeledUtterance::new(
                format!("{}#p{i}", source.id),
                p.clone(),
                source.intent.clone(),
            ));
        }
    }
    if duplicates > 0 {
        log::warn!("{duplicates} paraphrases duplicate their source or a sibling; kept as-is");
    }
    Ok(LabeledDataset::new(train.name(), train.split_tag(), rows)?)
}

pub fn select_wrong_predictions<G, P, I>(gold: &[G], pred: &[P], ids: &[I]) -> Result<Vec<String>, AugmentError>
where
    G: AsRef<str>,
    P: AsRef<str>,
    I: AsRef<str>,
{
    if gold.len() != pred.len() || gold.len() != ids.len() {
        return Err(AugmentError::LengthMismatch {
            ids: ids.len(),
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    Ok(ids
        .iter()
        .zip(gold.iter().zip(pred))
        .filter(|(_, (g, p))| g.as_ref() != p.as_ref())
        .map(|(id, _)| id.as_ref().to_string())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SplitTag;

    #[test]
    fn prompt_shape() {
        let p = build_prompt("i have a pending top-up", 4);
        assert!(p.contains("i have a pending top-up"));
        assert!(p.contains("exactly 4 paraphrases"));
        assert!(p.contains("JSON array of exactly 4 strings"));
        assert_eq!(p, build_prompt("i have a pending top-up", 4));
        let one = build_prompt("hello", 1);
        assert!(one.contains("exactly 1 paraphrase of"));
        assert!(one.contains("exactly 1 string and"));
        assert_eq!(prompt_fields(&p), Some(("i have a pending top-up", 4)));
    }

    #[test]
    fn parse_json_primary() {
        assert_eq!(
            parse_paraphrases(r#"["a","b","c","d"]"#, 4).unwrap(),
            ["a", "b", "c", "d"]
        );
        let fenced = "Sure!\n```json\n[\"x\", \"y\"]\n```";
        assert_eq!(parse_paraphrases(fenced, 2).unwrap(), ["x", "y"]);
        assert_eq!(
            parse_paraphrases("[\" two\\tcells\\nhere \"]", 1).unwrap(),
            ["two cells here"]
        );
    }

    #[test]
    fn parse_numbered_fallback() {
        let body = "Here are some paraphrases:\n".to_string()
            + &(1..=10)
                .map(|i| format!("{i}. variant number {i}\n"))
                .collect::<String>()
            + "Hope this helps!";
        let got = parse_paraphrases(&body, 10).unwrap();
        assert_eq!(got.len(), 10);
        assert_eq!(got[9], "variant number 10");
        assert_eq!(
            parse_paraphrases("1) \"quoted\"\n2) plain", 2).unwrap(),
            ["quoted", "plain"]
        );
    }

    #[test]
    fn parse_count_mismatch() {
        match parse_paraphrases(r#"["a","b"]"#, 4) {
            Err(AugmentError::Parse { expected: 4, raw, .. }) => assert_eq!(raw, r#"["a","b"]"#),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_paraphrases(r#"["a",""]"#, 2).is_err());
        assert!(parse_paraphrases("no list here", 1).is_err());
    }

    #[test]
    fn strategy_names() {
        assert_eq!("f4".parse::<AugStrategy>().unwrap(), AugStrategy::F4);
        assert_eq!("WP10".parse::<AugStrategy>().unwrap(), AugStrategy::WP10);
        assert_eq!(AugStrategy::F10.to_string(), "f10");
        assert!("f0".parse::<AugStrategy>().is_err());
        assert!("x3".parse::<AugStrategy>().is_err());
    }

    #[test]
    fn key_is_sha256_hex() {
        let key = cache_key("m", "v", "t", 3);
        assert_eq!(key.len(), 64);
        assert!(key.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
        let mut h = Sha256::new();
        h.update(b"m\x1fv\x1ft\x1f3");
        assert_eq!(key, hex::encode(h.finalize()));
        assert_ne!(key, cache_key("m", "v", "t", 4));
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ParaphraseCache::open(dir.path()).unwrap();
        assert_eq!(cache.get("abc").unwrap(), None);
        let set = ParaphraseSet {
            source_id: "train:00000".into(),
            source_text: "hi".into(),
            paraphrases: vec!["hello".into()],
            model: "m".into(),
            prompt_version: PROMPT_VERSION.into(),
        };
        cache.put("abc", &set).unwrap();
        assert_eq!(cache.get("abc").unwrap(), Some(set));
        assert_eq!(cache.len().unwrap(), 1);
    }

    #[test]
    fn duplicates_counted() {
        let set = ParaphraseSet {
            source_id: "x".into(),
            source_text: "Hello  world".into(),
            paraphrases: vec!["hello world".into(), "hi there".into(), "Hi there".into()],
            model: "m".into(),
            prompt_version: "v".into(),
        };
        assert_eq!(set.duplicate_count(), 2);
    }

    fn toy_train() -> LabeledDataset {
        LabeledDataset::from_rows(
            SplitTag::Train,
            [("top up pending", "pending_top_up"), ("lost my card", "lost_card")],
        )
        .unwrap()
    }

    fn set_for(u: &LabeledUtterance, k: usize) -> ParaphraseSet {
        ParaphraseSet {
            source_id: u.id.clone(),
            source_text: u.text.clone(),
            paraphrases: (0..k).map(|i| format!("{} v{i}", u.text)).collect(),
            model: "m".into(),
            prompt_version: PROMPT_VERSION.into(),
        }
    }

    #[test]
    fn augment_appends_with_source_labels() {
        let train = toy_train();
        assert_eq!(augment_dataset(&train, &[]).unwrap(), train);
        let sets: Vec<_> = train.utterances().iter().map(|u| set_for(u, 4)).collect();
        let out = augment_dataset(&train, &sets).unwrap();
        assert_eq!(out.len(), train.len() + 8);
        assert_eq!(&out.utterances()[..2], train.utterances());
        let p = out.get("train:00001#p3").unwrap();
        assert_eq!(p.intent, "lost_card");
        assert_eq!(p.text, "lost my card v3");
    }

    #[test]
    fn augment_unknown_source() {
        let train = toy_train();
        let mut set = set_for(&train.utterances()[0], 1);
        set.source_id = "train:00099".into();
        assert!(matches!(
            augment_dataset(&train, &[set]),
            Err(AugmentError::UnknownSource(_))
        ));
    }

    #[test]
    fn wrong_predictions() {
        let ids = ["t1", "t2", "t3", "t4", "t5"];
        let gold = ["a", "b", "c", "a", "b"];
        assert!(select_wrong_predictions(&gold, &gold, &ids).unwrap().is_empty());
        assert_eq!(select_wrong_predictions(&gold, &["z"; 5], &ids).unwrap(), ids);
        assert_eq!(
            select_wrong_predictions(&gold, &["a", "c", "c", "oos", "b"], &ids).unwrap(),
            ["t2", "t4"]
        );
        assert!(select_wrong_predictions(&gold, &["a"], &ids).is_err());
    }

    #[test]
    fn completion_content_extraction() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"[\"a\"]"}}]}"#;
        assert_eq!(completion_content(body).unwrap(), r#"["a"]"#);
        assert!(completion_content("{}").is_err());
    }
}

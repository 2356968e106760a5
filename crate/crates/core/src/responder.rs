//! The responder contract: anything that maps (prompt, image reference)
//! to free text. Ships two deterministic in-process oracles for pipeline
//! testing and an HTTP client for a real inference endpoint.
//!
//! Wire contract of the remote responder: POST with JSON body
//! `{"prompt": ..., "image_ref": ...}`, success is status 200 with body
//! `{"text": ...}`. Any other status maps to `EndpointUnavailable`, an
//! unreadable body to `MalformedReply`. Transient failures (unavailable,
//! timeout) are retried with exponential backoff; malformed replies are
//! not.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::coco_ingest::CategoryTable;
use crate::dataset_gen::expected_label;
use crate::numword;
use crate::pseudo_label::PseudoLabelTable;
use crate::question_grammar::{extract_reference, parse_question, strip_reference, PromptRecord};

#[derive(Debug, Error)]
pub enum RespondError {
    #[error("endpoint unavailable: {0}")]
    EndpointUnavailable(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("malformed reply: {0}")]
    MalformedReply(String),
    #[error("prompt lacks expected structure: {0}")]
    ParseFailure(String),
}

/// One inference request. `request_id` keys the blind oracle's seeded
/// stream; leaving it out falls back to the image reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponderRequest {
    pub prompt: String,
    pub image_ref: String,
    pub request_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponderReply {
    pub text: String,
    pub latency: Duration,
    pub responder_id: String,
}

pub trait Responder: Send + Sync {
    fn id(&self) -> &str;
    fn respond(&self, req: &ResponderRequest) -> Result<ResponderReply, RespondError>;
}

fn reply(id: &str, text: String, start: Instant) -> ResponderReply {
    ResponderReply {
        text,
        latency: start.elapsed(),
        responder_id: id.to_string(),
    }
}

/// Deterministic responder that perfectly obeys injected references:
/// reads the "Reference answer:" count, applies any counterfactual
/// arithmetic from the trailing question, and answers yes/no prompts from
/// its own pseudo-label table. Models ideal post-finetuning behavior.
pub struct ReferenceOracle {
    table: PseudoLabelTable,
    categories: CategoryTable,
}

impl ReferenceOracle {
    pub fn new(table: PseudoLabelTable, categories: CategoryTable) -> ReferenceOracle {
        ReferenceOracle { table, categories }
    }
}

impl Responder for ReferenceOracle {
    fn id(&self) -> &str {
        "oracle-reference"
    }

    fn respond(&self, req: &ResponderRequest) -> Result<ResponderReply, RespondError> {
        let start = Instant::now();
        if let Some(reference) = extract_reference(&req.prompt) {
            let bare = strip_reference(&req.prompt);
            let question = parse_question(&bare, &self.categories)
                .map_err(|e| RespondError::ParseFailure(e.to_string()))?;
            if !question.kind.is_digit() {
                return Err(RespondError::ParseFailure(
                    "reference clause on a yes/no question".to_string(),
                ));
            }
            let answer = expected_label(&question, reference);
            return Ok(reply(self.id(), answer.to_text(), start));
        }
        let question = parse_question(&req.prompt, &self.categories)
            .map_err(|e| RespondError::ParseFailure(e.to_string()))?;
        if question.kind.is_digit() {
            return Err(RespondError::ParseFailure(
                "digit question without a reference clause".to_string(),
            ));
        }
        let image_id: i64 = req.image_ref.parse().map_err(|_| {
            RespondError::ParseFailure(format!("image_ref {:?} is not an id", req.image_ref))
        })?;
        let category_id = self
            .categories
            .id_by_name(&question.category)
            .expect("parse_question resolved against this table");
        let answer = expected_label(&question, self.table.count(image_id, category_id));
        Ok(reply(self.id(), answer.to_text(), start))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Seeded baseline that ignores prompt content: digit prompts get a
/// uniform count in 0..=5, yes/no prompts a coin flip, both determined
/// only by (seed, request_id). Models the no-detection-assistance
/// baseline, and doubles as a label-leak control: injecting references
/// cannot change its answers.
pub struct BlindOracle {
    seed: u64,
}

impl BlindOracle {
    pub fn new(seed: u64) -> BlindOracle {
        BlindOracle { seed }
    }
}

impl Responder for BlindOracle {
    fn id(&self) -> &str {
        "oracle-blind"
    }

    fn respond(&self, req: &ResponderRequest) -> Result<ResponderReply, RespondError> {
        let start = Instant::now();
        let key = req.request_id.as_deref().unwrap_or(&req.image_ref);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a64(key.as_bytes()));
        let lowered = req.prompt.to_lowercase();
        let digit = lowered.contains("how many") || lowered.contains("how mant");
        let text = if digit {
            numword::to_words_saturating(rng.random_range(0..=5))
        } else if rng.random_bool(0.5) {
            "yes".to_string()
        } else {
            "no".to_string()
        };
        Ok(reply(self.id(), text, start))
    }
}

/// Remote endpoint settings. Defaults: 30 s timeout, 2 retries (3
/// attempts) with backoff doubling from 500 ms, at most 4 requests in
/// flight.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub timeout: Duration,
    pub retry_budget: u32,
    pub backoff_start: Duration,
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> RemoteConfig {
        RemoteConfig {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(30),
            retry_budget: 2,
            backoff_start: Duration::from_millis(500),
            max_in_flight: 4,
        }
    }
}

struct Gate {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

struct GatePermit<'a> {
    gate: &'a Gate,
}

impl Gate {
    fn new(max: usize) -> Gate {
        Gate {
            max: max.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> GatePermit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.max {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        GatePermit { gate: self }
    }
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        *self.gate.in_flight.lock().unwrap() -= 1;
        self.gate.freed.notify_one();
    }
}

/// HTTP client for a remote inference endpoint.
pub struct RemoteResponder {
    cfg: RemoteConfig,
    agent: ureq::Agent,
    gate: Gate,
}

#[derive(Deserialize)]
struct WireReply {
    text: String,
}

impl RemoteResponder {
    pub fn new(cfg: RemoteConfig) -> RemoteResponder {
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build();
        RemoteResponder {
            gate: Gate::new(cfg.max_in_flight),
            agent: agent_config.new_agent(),
            cfg,
        }
    }

    fn attempt(&self, req: &ResponderRequest) -> Result<ResponderReply, RespondError> {
        let _permit = self.gate.acquire();
        let start = Instant::now();
        let body = serde_json::json!({
            "prompt": req.prompt,
            "image_ref": req.image_ref,
        });
        let mut response = self
            .agent
            .post(&self.cfg.endpoint)
            .send_json(&body)
            .map_err(|e| self.map_transport(e))?;
        let status = response.status().as_u16();
        if status != 200 {
            return Err(RespondError::EndpointUnavailable(format!("status {status}")));
        }
        let wire: WireReply = response
            .body_mut()
            .read_json()
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => RespondError::Timeout(self.cfg.timeout),
                other => RespondError::MalformedReply(other.to_string()),
            })?;
        if wire.text.is_empty() {
            return Err(RespondError::MalformedReply("empty text field".to_string()));
        }
        Ok(reply(self.id(), wire.text, start))
    }

    fn map_transport(&self, e: ureq::Error) -> RespondError {
        use std::io::ErrorKind;
        match e {
            ureq::Error::Timeout(_) => RespondError::Timeout(self.cfg.timeout),
            ureq::Error::Io(ref io)
                if matches!(io.kind(), ErrorKind::TimedOut | ErrorKind::WouldBlock) =>
            {
                RespondError::Timeout(self.cfg.timeout)
            }
            other => RespondError::EndpointUnavailable(other.to_string()),
        }
    }
}

impl Responder for RemoteResponder {
    fn id(&self) -> &str {
        "remote"
    }

    fn respond(&self, req: &ResponderRequest) -> Result<ResponderReply, RespondError> {
        let mut attempt = 0;
        loop {
            match self.attempt(req) {
                Ok(r) => return Ok(r),
                Err(e @ (RespondError::EndpointUnavailable(_) | RespondError::Timeout(_)))
                    if attempt < self.cfg.retry_budget =>
                {
                    let backoff = self.cfg.backoff_start * 2u32.saturating_pow(attempt);
                    drop(e);
                    std::thread::sleep(backoff);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn request_for(record: &PromptRecord) -> ResponderRequest {
    ResponderRequest {
        prompt: record.prompt.clone(),
        image_ref: record.image_id.to_string(),
        request_id: Some(record.question_id.clone()),
    }
}

/// Run a responder over a record batch, replies ordered by record
/// position. `jobs` bounds worker threads; on failure the
/// earliest-position error is returned.
pub fn respond_all(
    responder: &dyn Responder,
    records: &[PromptRecord],
    jobs: usize,
) -> Result<Vec<ResponderReply>, RespondError> {
    let jobs = jobs.max(1).min(records.len().max(1));
    if jobs == 1 {
        return records
            .iter()
            .map(|r| responder.respond(&request_for(r)))
            .collect();
    }

    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let slots: Vec<Mutex<Option<Result<ResponderReply, RespondError>>>> =
        (0..records.len()).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= records.len() || failed.load(Ordering::Relaxed) {
                    break;
                }
                let outcome = responder.respond(&request_for(&records[i]));
                if outcome.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                *slots[i].lock().unwrap() = Some(outcome);
            });
        }
    });

    let mut replies = Vec::with_capacity(records.len());
    for slot in slots {
        match slot.into_inner().unwrap() {
            Some(Ok(r)) => replies.push(r),
            Some(Err(e)) => return Err(e),
            None => {
                return Err(RespondError::EndpointUnavailable(
                    "request abandoned after an earlier failure".to_string(),
                ))
            }
        }
    }
    Ok(replies)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::question_grammar::{render_test_prompt, Question};
    use std::io::{Read, Write};
    use std::net::{TcpListener, TcpStream};
    use std::sync::atomic::AtomicUsize;
    use std::sync::Arc;
    use std::thread::JoinHandle;

    fn cats() -> CategoryTable {
        CategoryTable::new([(1u32, "cat"), (2, "dog")]).unwrap()
    }

    fn request(prompt: &str, image_ref: &str, request_id: &str) -> ResponderRequest {
        ResponderRequest {
            prompt: prompt.to_string(),
            image_ref: image_ref.to_string(),
            request_id: Some(request_id.to_string()),
        }
    }

    #[test]
    fn reference_oracle_applies_counterfactual_arithmetic() {
        let oracle = ReferenceOracle::new(PseudoLabelTable::new(), cats());
        let prompt = "How many cats would there be in the image? Reference answer: four. \
                      How many cats would there be in the image now that two more cats have been moved into the scene?";
        let reply = oracle.respond(&request(prompt, "1", "q")).unwrap();
        assert_eq!(reply.text, "six");
        assert_eq!(reply.responder_id, "oracle-reference");
    }

    #[test]
    fn reference_oracle_reads_plain_references() {
        let oracle = ReferenceOracle::new(PseudoLabelTable::new(), cats());
        let prompt = "How many cats would there be in the image? Reference answer: three.";
        assert_eq!(oracle.respond(&request(prompt, "1", "q")).unwrap().text, "three");
    }

    #[test]
    fn reference_oracle_answers_yesno_from_table() {
        let mut table = PseudoLabelTable::new();
        table.add(7, 1, 2);
        let oracle = ReferenceOracle::new(table, cats());
        let yes = oracle
            .respond(&request("Is there a cat in the image?", "7", "a"))
            .unwrap();
        assert_eq!(yes.text, "yes");
        let no = oracle
            .respond(&request("Is there a dog in the image?", "7", "b"))
            .unwrap();
        assert_eq!(no.text, "no");
        let removal = oracle
            .respond(&request(
                "Would there be a cat in the image once the cat has been removed from the scene?",
                "7",
                "c",
            ))
            .unwrap();
        assert_eq!(removal.text, "yes");
    }

    #[test]
    fn reference_oracle_rejects_referenceless_digit_prompts() {
        let oracle = ReferenceOracle::new(PseudoLabelTable::new(), cats());
        let err = oracle
            .respond(&request("How many cats are there in the picture?", "1", "q"))
            .unwrap_err();
        assert!(matches!(err, RespondError::ParseFailure(_)));
        let err = oracle
            .respond(&request("What color is the sky?", "1", "q"))
            .unwrap_err();
        assert!(matches!(err, RespondError::ParseFailure(_)));
    }

    #[test]
    fn blind_oracle_is_deterministic_and_prompt_blind() {
        let oracle = BlindOracle::new(42);
        let bare = "How many cats are there in the picture?";
        let q = Question::digit_plain("cat").unwrap();
        let injected = render_test_prompt(bare, &q, 3);
        let a = oracle.respond(&request(bare, "1", "q-1")).unwrap();
        let b = oracle.respond(&request(&injected, "1", "q-1")).unwrap();
        assert_eq!(a.text, b.text, "injection must not change the answer");
        let again = oracle.respond(&request(bare, "1", "q-1")).unwrap();
        assert_eq!(a.text, again.text);
    }

    #[test]
    fn blind_oracle_varies_with_request_id_and_seed() {
        let oracle = BlindOracle::new(42);
        let texts: std::collections::BTreeSet<String> = (0..40)
            .map(|i| {
                oracle
                    .respond(&request("How many cats are there in the picture?", "1", &format!("q{i}")))
                    .unwrap()
                    .text
            })
            .collect();
        assert!(texts.len() > 1, "answers should vary across request ids");
        for text in &texts {
            let n = numword::from_words(text).unwrap();
            assert!(n <= 5);
        }
        let other = BlindOracle::new(43)
            .respond(&request("Is there a cat in the image?", "1", "q0"))
            .unwrap();
        assert!(other.text == "yes" || other.text == "no");
    }

    #[test]
    fn gate_bounds_concurrency() {
        let gate = Arc::new(Gate::new(2));
        let live = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let mut handles = Vec::new();
        for _ in 0..8 {
            let (gate, live, peak) = (gate.clone(), live.clone(), peak.clone());
            handles.push(std::thread::spawn(move || {
                let _permit = gate.acquire();
                let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                peak.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(10));
                live.fetch_sub(1, Ordering::SeqCst);
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }

    enum Script {
        Reply { status: u16, body: &'static str },
        StallThenClose { dwell: Duration },
    }

    struct TestServer {
        endpoint: String,
        hits: Arc<AtomicUsize>,
        handle: Option<JoinHandle<()>>,
    }

    impl Drop for TestServer {
        fn drop(&mut self) {
            if let Some(h) = self.handle.take() {
                let _ = h.join();
            }
        }
    }

    fn find_subsequence(haystack: &[u8], needle: &[u8]) -> Option<usize> {
        haystack.windows(needle.len()).position(|w| w == needle)
    }

    fn read_http_request(stream: &mut TcpStream) {
        stream.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
        let mut buf = Vec::new();
        let mut chunk = [0u8; 1024];
        loop {
            if let Some(pos) = find_subsequence(&buf, b"\r\n\r\n") {
                let headers = String::from_utf8_lossy(&buf[..pos]).to_lowercase();
                let content_length = headers
                    .lines()
                    .find_map(|l| l.strip_prefix("content-length:"))
                    .and_then(|v| v.trim().parse::<usize>().ok())
                    .unwrap_or(0);
                if buf.len() >= pos + 4 + content_length {
                    return;
                }
            }
            match stream.read(&mut chunk) {
                Ok(0) | Err(_) => return,
                Ok(n) => buf.extend_from_slice(&chunk[..n]),
            }
        }
    }

    fn spawn_server(script: Vec<Script>) -> TestServer {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let endpoint = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let hits_in_thread = hits.clone();
        let handle = std::thread::spawn(move || {
            for action in script {
                let (mut stream, _) = match listener.accept() {
                    Ok(conn) => conn,
                    Err(_) => return,
                };
                hits_in_thread.fetch_add(1, Ordering::SeqCst);
                read_http_request(&mut stream);
                match action {
                    Script::Reply { status, body } => {
                        let response = format!(
                            "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                            body.len()
                        );
                        let _ = stream.write_all(response.as_bytes());
                    }
                    Script::StallThenClose { dwell } => {
                        std::thread::sleep(dwell);
                    }
                }
            }
        });
        TestServer {
            endpoint,
            hits,
            handle: Some(handle),
        }
    }

    fn fast_config(endpoint: &str, retry_budget: u32) -> RemoteConfig {
        RemoteConfig {
            retry_budget,
            timeout: Duration::from_millis(200),
            backoff_start: Duration::from_millis(1),
            ..RemoteConfig::new(endpoint)
        }
    }

    #[test]
    fn remote_success_round_trip() {
        let server = spawn_server(vec![Script::Reply {
            status: 200,
            body: r#"{"text":"yes"}"#,
        }]);
        let responder = RemoteResponder::new(fast_config(&server.endpoint, 0));
        let reply = responder
            .respond(&request("Is there a cat in the image?", "1", "q"))
            .unwrap();
        assert_eq!(reply.text, "yes");
        assert_eq!(reply.responder_id, "remote");
        assert_eq!(server.hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn remote_sends_exactly_one_request_at_zero_budget() {
        let server = spawn_server(vec![Script::Reply { status: 503, body: "{}" }]);
        let responder = RemoteResponder::new(fast_config(&server.endpoint, 0));
        let err = responder.respond(&request("p", "1", "q")).unwrap_err();
        assert!(matches!(err, RespondError::EndpointUnavailable(_)), "{err:?}");
        assert_eq!(server.hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn remote_retries_transient_failures() {
        let server = spawn_server(vec![
            Script::Reply { status: 503, body: "{}" },
            Script::Reply { status: 200, body: r#"{"text":"four"}"# },
        ]);
        let responder = RemoteResponder::new(fast_config(&server.endpoint, 2));
        let reply = responder.respond(&request("p", "1", "q")).unwrap();
        assert_eq!(reply.text, "four");
        assert_eq!(server.hits.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn remote_does_not_retry_malformed_replies() {
        let server = spawn_server(vec![Script::Reply { status: 200, body: "not json" }]);
        let responder = RemoteResponder::new(fast_config(&server.endpoint, 3));
        let err = responder.respond(&request("p", "1", "q")).unwrap_err();
        assert!(matches!(err, RespondError::MalformedReply(_)), "{err:?}");
        assert_eq!(server.hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn remote_times_out_on_stalled_server() {
        let server = spawn_server(vec![Script::StallThenClose {
            dwell: Duration::from_millis(800),
        }]);
        let responder = RemoteResponder::new(fast_config(&server.endpoint, 0));
        let err = responder.respond(&request("p", "1", "q")).unwrap_err();
        assert!(
            matches!(err, RespondError::Timeout(_) | RespondError::EndpointUnavailable(_)),
            "{err:?}"
        );
    }

    #[test]
    fn remote_reports_down_endpoints() {
        let endpoint = {
            let listener = TcpListener::bind("127.0.0.1:0").unwrap();
            format!("http://{}", listener.local_addr().unwrap())
        };
        let responder = RemoteResponder::new(fast_config(&endpoint, 0));
        let err = responder.respond(&request("p", "1", "q")).unwrap_err();
        assert!(matches!(err, RespondError::EndpointUnavailable(_)), "{err:?}");
    }

    #[test]
    fn respond_all_preserves_order_across_jobs() {
        let oracle = BlindOracle::new(7);
        let records: Vec<PromptRecord> = (0..20)
            .map(|i| {
                let question = Question::digit_plain("cat").unwrap();
                PromptRecord {
                    question_id: format!("q{i}"),
                    prompt: render_test_prompt(&question.source_text.clone(), &question, 1),
                    image_id: i,
                    expected: crate::eval::CanonicalAnswer::Count(1),
                    question,
                    reference_count: Some(1),
                    pseudo_derived: false,
                }
            })
            .collect();
        let sequential = respond_all(&oracle, &records, 1).unwrap();
        let parallel = respond_all(&oracle, &records, 4).unwrap();
        assert_eq!(
            sequential.iter().map(|r| &r.text).collect::<Vec<_>>(),
            parallel.iter().map(|r| &r.text).collect::<Vec<_>>()
        );
    }
}

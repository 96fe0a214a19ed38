//! Parsing of structured language-model replies into manipulation
//! instructions, plus transcript replay and LLM clients.
//!
//! An actionable reply ends with a block
//!
//! ```text
//! <action>
//! object: red bottle
//! task: pick_place(bottle, tray)
//! confirm: yes
//! qualifiers: red, left
//! </action>
//! ```
//!
//! `qualifiers` is optional. Prose outside the block is ignored. When a
//! reply holds several blocks the last one is used. A reply without a block
//! whose final sentence asks a question is a clarification request.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const OPEN_TAG: &str = "<action>";
pub const CLOSE_TAG: &str = "</action>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    PickPlace,
    Handover,
    Stack,
    Tidy,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [TaskKind::PickPlace, TaskKind::Handover, TaskKind::Stack, TaskKind::Tidy];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::PickPlace => "pick_place",
            TaskKind::Handover => "handover",
            TaskKind::Stack => "stack",
            TaskKind::Tidy => "tidy",
        }
    }

    /// Accepts the canonical names plus common spellings, case-insensitively.
    pub fn parse(token: &str) -> Option<TaskKind> {
        let t = token.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        match t.as_str() {
            "pick_place" | "pick_and_place" | "pickplace" | "pick_n_place" => Some(TaskKind::PickPlace),
            "handover" | "hand_over" => Some(TaskKind::Handover),
            "stack" => Some(TaskKind::Stack),
            "tidy" | "tidy_up" => Some(TaskKind::Tidy),
            _ => None,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub kind: TaskKind,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    /// Noun phrase naming the target object.
    pub object: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub qualifiers: Vec<String>,
    pub task: Task,
    pub confirmed: bool,
}

impl Instruction {
    /// The block form that [`parse_response`] reads back to `self`.
    pub fn to_action_block(&self) -> String {
        let mut s = format!("{OPEN_TAG}\nobject: {}\ntask: {}({})\nconfirm: {}\n", self.object, self.task.kind, self.task.args.join(", "), if self.confirmed { "yes" } else { "no" });
        if !self.qualifiers.is_empty() {
            s.push_str(&format!("qualifiers: {}\n", self.qualifiers.join(", ")));
        }
        s.push_str(CLOSE_TAG);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum ParseErrorKind {
    NoActionBlock,
    UnterminatedBlock,
    MissingField(String),
    DuplicateField(String),
    UnknownField(String),
    MalformedLine,
    UnknownTask(String),
    MalformedTask(String),
    InvalidConfirm(String),
    EmptyObject,
}

/// Result of parsing one reply. Exactly one variant applies to any input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ParseOutcome {
    Instruction(Instruction),
    NeedsClarification { question: String },
    ParseError { kind: ParseErrorKind, offset: usize },
}

impl ParseOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            ParseOutcome::Instruction(_) => "instruction",
            ParseOutcome::NeedsClarification { .. } => "needs_clarification",
            ParseOutcome::ParseError { .. } => "parse_error",
        }
    }

    pub fn is_confirmed_instruction(&self) -> bool {
        matches!(self, ParseOutcome::Instruction(i) if i.confirmed)
    }
}

fn error(kind: ParseErrorKind, offset: usize) -> ParseOutcome {
    ParseOutcome::ParseError { kind, offset }
}

/// Parses a reply given as raw bytes; invalid UTF-8 is replaced first, so
/// offsets refer to the repaired text.
pub fn parse_response_bytes(bytes: &[u8]) -> ParseOutcome {
    parse_response(&String::from_utf8_lossy(bytes))
}

pub fn parse_response(text: &str) -> ParseOutcome {
    let Some(open) = text.rfind(OPEN_TAG) else {
        return match final_question(text) {
            Some(q) => ParseOutcome::NeedsClarification { question: q.to_string() },
            None => error(ParseErrorKind::NoActionBlock, text.len()),
        };
    };
    let body_start = open + OPEN_TAG.len();
    let Some(close_rel) = text[body_start..].find(CLOSE_TAG) else {
        return error(ParseErrorKind::UnterminatedBlock, open);
    };
    parse_block(text, body_start, body_start + close_rel, open)
}

/// The last sentence of `text` if it contains a question mark.
fn final_question(text: &str) -> Option<&str> {
    let trimmed = text.trim_end();
    let body = trimmed.trim_end_matches(['.', '!', '?', '"', '\'', ')']);
    let start = body.rfind(['.', '!', '?', '\n']).map(|i| i + 1).unwrap_or(0);
    let sentence = trimmed[start..].trim();
    sentence.contains('?').then_some(sentence)
}

fn parse_block(text: &str, start: usize, end: usize, open: usize) -> ParseOutcome {
    let mut fields: HashMap<&str, (&str, usize)> = HashMap::new();
    let mut offset = start;
    for raw in text[start..end].split_inclusive('\n') {
        let line_at = offset;
        offset += raw.len();
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let lead = raw.len() - raw.trim_start().len();
        let Some((key, value)) = line.split_once(':') else {
            return error(ParseErrorKind::MalformedLine, line_at + lead);
        };
        let key = key.trim();
        let name = match key.to_ascii_lowercase().as_str() {
            "object" => "object",
            "task" => "task",
            "confirm" => "confirm",
            "qualifiers" => "qualifiers",
            _ => return error(ParseErrorKind::UnknownField(key.to_string()), line_at + lead),
        };
        let value_at = line_at + lead + line.find(':').unwrap() + 1;
        if fields.insert(name, (value.trim(), value_at)).is_some() {
            return error(ParseErrorKind::DuplicateField(name.to_string()), line_at + lead);
        }
    }
    for name in ["object", "task", "confirm"] {
        if !fields.contains_key(name) {
            return error(ParseErrorKind::MissingField(name.to_string()), open);
        }
    }
    let (confirm, confirm_at) = fields["confirm"];
    let confirmed = match confirm.to_ascii_lowercase().as_str() {
        "yes" | "true" | "y" => true,
        "no" | "false" | "n" => false,
        _ => return error(ParseErrorKind::InvalidConfirm(confirm.to_string()), confirm_at),
    };
    let (task_text, task_at) = fields["task"];
    let task = match parse_task(task_text) {
        Ok(t) => t,
        Err(kind) => return error(kind, task_at),
    };
    let (object, object_at) = fields["object"];
    if object.is_empty() && confirmed {
        return error(ParseErrorKind::EmptyObject, object_at);
    }
    let qualifiers = fields
        .get("qualifiers")
        .map(|(q, _)| q.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect())
        .unwrap_or_default();
    ParseOutcome::Instruction(Instruction { object: object.to_string(), qualifiers, task, confirmed })
}

fn parse_task(s: &str) -> Result<Task, ParseErrorKind> {
    let malformed = || ParseErrorKind::MalformedTask(s.to_string());
    let (name, args) = match s.find('(') {
        None => {
            if s.contains(')') {
                return Err(malformed());
            }
            (s, "")
        }
        Some(i) => {
            let rest = &s[i + 1..];
            let inner = rest.strip_suffix(')').ok_or_else(malformed)?;
            if inner.contains(['(', ')']) {
                return Err(malformed());
            }
            (&s[..i], inner)
        }
    };
    let name = name.trim();
    if name.is_empty() {
        return Err(malformed());
    }
    let kind = TaskKind::parse(name).ok_or_else(|| ParseErrorKind::UnknownTask(name.to_string()))?;
    let args: Vec<String> = if args.trim().is_empty() { Vec::new() } else { args.split(',').map(|a| a.trim().to_string()).collect() };
    if args.iter().any(String::is_empty) {
        return Err(malformed());
    }
    Ok(Task { kind, args })
}

/// One round of user/model interaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmExchange {
    pub round_index: u32,
    pub user_text: String,
    pub model_text: String,
    #[serde(default)]
    pub timestamp: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TranscriptError {
    #[error("round {got} follows round {prev}; rounds must strictly increase")]
    NonMonotonicRounds { prev: u32, got: u32 },
    #[error("round indices start at 1")]
    ZeroRound,
    #[error("transcript line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("cannot read transcript: {0}")]
    Io(String),
}

pub fn read_transcript(path: &Path) -> Result<Vec<LlmExchange>, TranscriptError> {
    let text = std::fs::read_to_string(path).map_err(|e| TranscriptError::Io(format!("{}: {e}", path.display())))?;
    parse_transcript(&text)
}

/// Parses JSON lines, one exchange per non-blank line.
pub fn parse_transcript(text: &str) -> Result<Vec<LlmExchange>, TranscriptError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| TranscriptError::Malformed { line: i + 1, reason: e.to_string() }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round: u32,
    pub outcome: ParseOutcome,
}

pub fn run_transcript(exchanges: &[LlmExchange]) -> Result<Vec<RoundOutcome>, TranscriptError> {
    let mut prev = 0;
    let mut out = Vec::with_capacity(exchanges.len());
    for ex in exchanges {
        if ex.round_index == 0 {
            return Err(TranscriptError::ZeroRound);
        }
        if ex.round_index <= prev {
            return Err(TranscriptError::NonMonotonicRounds { prev, got: ex.round_index });
        }
        prev = ex.round_index;
        out.push(RoundOutcome { round: ex.round_index, outcome: parse_response(&ex.model_text) });
    }
    Ok(out)
}

/// Rounds ending in a confirmed instruction, with the clarifications asked
/// since the previous episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub first_round: u32,
    pub last_round: u32,
    pub clarifications: usize,
    pub instruction: Instruction,
}

pub fn episodes(outcomes: &[RoundOutcome]) -> Vec<Episode> {
    let mut out = Vec::new();
    let mut first = None;
    let mut asked = 0;
    for r in outcomes {
        let start = *first.get_or_insert(r.round);
        match &r.outcome {
            ParseOutcome::NeedsClarification { .. } => asked += 1,
            ParseOutcome::Instruction(i) if i.confirmed => {
                out.push(Episode { first_round: start, last_round: r.round, clarifications: asked, instruction: i.clone() });
                first = None;
                asked = 0;
            }
            _ => {}
        }
    }
    out
}

/// Mean clarification questions per completed episode.
pub fn mean_clarifications(episodes: &[Episode]) -> Option<f64> {
    (!episodes.is_empty()).then(|| episodes.iter().map(|e| e.clarifications).sum::<usize>() as f64 / episodes.len() as f64)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("network error: {0}")]
    NetworkError(String),
    #[error("authentication error: {0}")]
    AuthError(String),
    #[error("no canned response for prompt hash {0}")]
    StubMiss(String),
    #[error("bad stub corpus: {0}")]
    StubCorpus(String),
}

pub trait LlmClient {
    fn send(&self, prompt: &str) -> Result<String, LlmError>;
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Replays canned responses keyed by the SHA-256 of the prompt.
#[derive(Debug, Clone, Default)]
pub struct ScriptedStub {
    responses: HashMap<String, String>,
}

#[derive(Deserialize)]
struct StubLine {
    #[serde(default)]
    prompt: Option<String>,
    #[serde(default)]
    prompt_sha256: Option<String>,
    response: String,
}

impl ScriptedStub {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prompt: &str, response: impl Into<String>) {
        self.responses.insert(prompt_hash(prompt), response.into());
    }

    /// Loads JSON lines of `{"prompt": .., "response": ..}` or
    /// `{"prompt_sha256": .., "response": ..}`.
    pub fn from_jsonl(text: &str) -> Result<Self, LlmError> {
        let mut stub = Self::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let entry: StubLine = serde_json::from_str(line).map_err(|e| LlmError::StubCorpus(format!("line {}: {e}", i + 1)))?;
            let key = match (entry.prompt, entry.prompt_sha256) {
                (Some(p), _) => prompt_hash(&p),
                (None, Some(h)) => h.to_ascii_lowercase(),
                (None, None) => return Err(LlmError::StubCorpus(format!("line {}: needs prompt or prompt_sha256", i + 1))),
            };
            stub.responses.insert(key, entry.response);
        }
        Ok(stub)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl LlmClient for ScriptedStub {
    fn send(&self, prompt: &str) -> Result<String, LlmError> {
        let h = prompt_hash(prompt);
        self.responses.get(&h).cloned().ok_or(LlmError::StubMiss(h))
    }
}

pub const ENV_ENDPOINT: &str = "POSEKIT_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "POSEKIT_LLM_API_KEY";
pub const ENV_MODEL: &str = "POSEKIT_LLM_MODEL";

/// Client for an OpenAI-style chat completions endpoint.
#[derive(Debug, Clone)]
pub struct HttpLlmClient {
    endpoint: String,
    api_key: String,
    model: String,
    timeout: Duration,
}

impl HttpLlmClient {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>) -> Self {
        Self { endpoint: endpoint.into(), api_key: api_key.into(), model: model.into(), timeout: Duration::from_secs(60) }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Reads endpoint, key and model from the environment.
    pub fn from_env() -> Result<Self, LlmError> {
        let endpoint = std::env::var(ENV_ENDPOINT).map_err(|_| LlmError::NetworkError(format!("{ENV_ENDPOINT} is not set")))?;
        let key = std::env::var(ENV_API_KEY).map_err(|_| LlmError::AuthError(format!("{ENV_API_KEY} is not set")))?;
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "gpt-4".to_string());
        Ok(Self::new(endpoint, key, model))
    }
}

impl LlmClient for HttpLlmClient {
    fn send(&self, prompt: &str) -> Result<String, LlmError> {
        if self.api_key.trim().is_empty() {
            return Err(LlmError::AuthError("empty api key".into()));
        }
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(LlmError::NetworkError(format!("endpoint {:?} is not an http(s) url", self.endpoint)));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(self.timeout)).build().into();
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut resp = agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| match e {
                ureq::Error::StatusCode(401 | 403) => LlmError::AuthError(e.to_string()),
                other => LlmError::NetworkError(other.to_string()),
            })?;
        let value: serde_json::Value = resp.body_mut().read_json().map_err(|e| LlmError::NetworkError(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(String::from)
            .ok_or_else(|| LlmError::NetworkError("response has no choices[0].message.content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn instr(text: &str) -> Instruction {
        match parse_response(text) {
            ParseOutcome::Instruction(i) => i,
            other => panic!("expected instruction, got {other:?}"),
        }
    }

    #[test]
    fn basic_block() {
        let i = instr("Sure, I will do that.\n<action>\nobject: red bottle\ntask: pick_place(bottle, tray)\nconfirm: yes\n</action>");
        assert_eq!(i.object, "red bottle");
        assert_eq!(i.task, Task { kind: TaskKind::PickPlace, args: vec!["bottle".into(), "tray".into()] });
        assert!(i.confirmed);
        assert!(i.qualifiers.is_empty());
    }

    #[test]
    fn missing_task_field() {
        let text = "<action>\nobject: cup\nconfirm: yes\n</action>";
        assert_eq!(parse_response(text), ParseOutcome::ParseError { kind: ParseErrorKind::MissingField("task".into()), offset: 0 });
    }

    #[test]
    fn last_block_wins() {
        let text = "<action>\nobject: cup\ntask: stack(cup, plate)\nconfirm: no\n</action>\nActually:\n<action>\nobject: mug\ntask: handover()\nconfirm: yes\n</action>";
        let i = instr(text);
        assert_eq!(i.object, "mug");
        assert_eq!(i.task.kind, TaskKind::Handover);
        assert!(i.task.args.is_empty());
    }

    #[test]
    fn error_kinds_and_offsets() {
        let text = "ok <action>\nobject: cup\ntask: juggle(cup)\nconfirm: yes\n</action>";
        let at = text.find(" juggle").unwrap();
        assert_eq!(parse_response(text), ParseOutcome::ParseError { kind: ParseErrorKind::UnknownTask("juggle".into()), offset: at });
        assert_eq!(parse_response("hi <action>\nobject: cup"), ParseOutcome::ParseError { kind: ParseErrorKind::UnterminatedBlock, offset: 3 });
        let empty = "<action>\nobject:\ntask: tidy()\nconfirm: yes\n</action>";
        assert!(matches!(parse_response(empty), ParseOutcome::ParseError { kind: ParseErrorKind::EmptyObject, .. }));
        let unconfirmed = "<action>\nobject:\ntask: tidy()\nconfirm: no\n</action>";
        assert!(!instr(unconfirmed).confirmed);
        let dup = "<action>\nobject: a\nobject: b\ntask: tidy\nconfirm: yes\n</action>";
        assert!(matches!(parse_response(dup), ParseOutcome::ParseError { kind: ParseErrorKind::DuplicateField(_), .. }));
        let bad_confirm = "<action>\nobject: a\ntask: tidy\nconfirm: maybe\n</action>";
        assert!(matches!(parse_response(bad_confirm), ParseOutcome::ParseError { kind: ParseErrorKind::InvalidConfirm(_), .. }));
        let bad_task = "<action>\nobject: a\ntask: stack(a,,b)\nconfirm: yes\n</action>";
        assert!(matches!(parse_response(bad_task), ParseOutcome::ParseError { kind: ParseErrorKind::MalformedTask(_), .. }));
        let line = "<action>\nobject a\n</action>";
        assert_eq!(parse_response(line), ParseOutcome::ParseError { kind: ParseErrorKind::MalformedLine, offset: 9 });
        assert_eq!(parse_response("No block here."), ParseOutcome::ParseError { kind: ParseErrorKind::NoActionBlock, offset: 14 });
    }

    #[test]
    fn clarification() {
        let q = parse_response("I see two bottles. Do you mean the red one or the blue one?");
        assert_eq!(q, ParseOutcome::NeedsClarification { question: "Do you mean the red one or the blue one?".into() });
        // a question earlier in the reply does not count
        assert!(matches!(parse_response("Which one? I will take the cup."), ParseOutcome::ParseError { .. }));
    }

    #[test]
    fn aliases() {
        assert_eq!(TaskKind::parse("Pick-and-Place"), Some(TaskKind::PickPlace));
        assert_eq!(TaskKind::parse("hand over"), Some(TaskKind::Handover));
        assert_eq!(TaskKind::parse("tidy_up"), Some(TaskKind::Tidy));
        assert_eq!(TaskKind::parse("throw"), None);
    }

    #[test]
    fn transcript_rounds() {
        let ex = |r, m: &str| LlmExchange { round_index: r, user_text: "u".into(), model_text: m.into(), timestamp: String::new() };
        let rounds = vec![
            ex(1, "Which bottle do you mean?"),
            ex(2, "Should I put it on the tray or the shelf?"),
            ex(3, "<action>\nobject: red bottle\ntask: pick_place(red bottle, tray)\nconfirm: yes\n</action>"),
        ];
        let out = run_transcript(&rounds).unwrap();
        assert_eq!(out.iter().filter(|r| matches!(r.outcome, ParseOutcome::NeedsClarification { .. })).count(), 2);
        assert!(out[2].outcome.is_confirmed_instruction());
        let eps = episodes(&out);
        assert_eq!(eps.len(), 1);
        assert_eq!((eps[0].first_round, eps[0].last_round, eps[0].clarifications), (1, 3, 2));
        assert_eq!(mean_clarifications(&eps), Some(2.0));
        assert!(run_transcript(&[]).unwrap().is_empty());
        assert_eq!(run_transcript(&[ex(1, "a"), ex(1, "b")]), Err(TranscriptError::NonMonotonicRounds { prev: 1, got: 1 }));
        assert_eq!(run_transcript(&[ex(0, "a")]), Err(TranscriptError::ZeroRound));
    }

    #[test]
    fn stub_client() {
        let mut stub = ScriptedStub::new();
        stub.insert("bring me the cup", "Which cup?");
        assert_eq!(stub.send("bring me the cup").unwrap(), "Which cup?");
        assert!(matches!(stub.send("other"), Err(LlmError::StubMiss(_))));
        let line = format!("{{\"prompt_sha256\": \"{}\", \"response\": \"ok\"}}\n{{\"prompt\": \"p\", \"response\": \"q\"}}", prompt_hash("x"));
        let loaded = ScriptedStub::from_jsonl(&line).unwrap();
        assert_eq!(loaded.send("x").unwrap(), "ok");
        assert_eq!(loaded.send("p").unwrap(), "q");
        assert!(ScriptedStub::from_jsonl("{").is_err());
    }

    #[test]
    fn http_client_errors_do_not_panic() {
        let no_key = HttpLlmClient::new("http://127.0.0.1:9", "", "m");
        assert!(matches!(no_key.send("hi"), Err(LlmError::AuthError(_))));
        let bad_url = HttpLlmClient::new("not a url", "k", "m");
        assert!(matches!(bad_url.send("hi"), Err(LlmError::NetworkError(_))));
        let refused = HttpLlmClient::new("http://127.0.0.1:9/v1", "k", "m").with_timeout(Duration::from_secs(2));
        assert!(matches!(refused.send("hi"), Err(LlmError::NetworkError(_))));
    }

    fn word() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9 ]{0,10}[a-z0-9]".prop_map(|s| s.trim().to_string())
    }

    proptest! {
        #[test]
        fn action_block_round_trip(object in word(), args in prop::collection::vec(word(), 0..3),
                                   quals in prop::collection::vec(word(), 0..3), k in 0..4usize, confirmed: bool) {
            let i = Instruction { object, qualifiers: quals, task: Task { kind: TaskKind::ALL[k], args }, confirmed };
            let text = format!("Here you go.\n{}\n", i.to_action_block());
            prop_assert_eq!(parse_response(&text), ParseOutcome::Instruction(i));
        }

        #[test]
        fn parse_is_total_and_pure(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
            let a = parse_response_bytes(&bytes);
            prop_assert_eq!(a, parse_response_bytes(&bytes));
        }

        #[test]
        fn parse_is_total_on_block_like_text(s in "(<action>|</action>|object:|task:|confirm:|\\(|\\)|,|\\?|\\.|\n| |[a-z]{1,4}){0,40}") {
            let _ = parse_response(&s);
        }
    }
}

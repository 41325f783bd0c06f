use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ScoringError;
use crate::net::{HttpClient, HttpError, RateLimiter};

/// A chat-style model: one system message, one user message, one reply.
pub trait LlmProvider: Send + Sync {
    /// Provider and model name; part of the score cache key.
    fn id(&self) -> String;
    fn complete(&self, system: &str, user: &str) -> Result<String, ScoringError>;
}

/// Always answers with the same score.
#[derive(Debug, Clone)]
pub struct ConstantStub {
    pub score: u8,
}

impl LlmProvider for ConstantStub {
    fn id(&self) -> String {
        format!("constant-stub:{}", self.score)
    }

    fn complete(&self, _system: &str, _user: &str) -> Result<String, ScoringError> {
        Ok(format!("SCORE: {}", self.score))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordRule {
    pub phrase: String,
    pub score: u8,
}

/// Scores by phrase lookup in the context part of the prompt (everything
/// before the question). The first matching rule wins; otherwise `default`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordStub {
    pub rules: Vec<KeywordRule>,
    pub default: u8,
}

impl KeywordStub {
    pub fn from_file(path: &std::path::Path) -> Result<Self, ScoringError> {
        let stub: KeywordStub = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if stub.default > 100 || stub.rules.iter().any(|r| r.score > 100 || r.phrase.is_empty()) {
            return Err(ScoringError::Provider {
                message: format!("{}: scores must be 0..=100 and phrases non-empty", path.display()),
                retriable: false,
            });
        }
        Ok(stub)
    }
}

impl LlmProvider for KeywordStub {
    fn id(&self) -> String {
        let rules: Vec<String> =
            self.rules.iter().map(|r| format!("{}={}", r.phrase, r.score)).collect();
        format!("keyword-stub:{}:default={}", rules.join("|"), self.default)
    }

    fn complete(&self, _system: &str, user: &str) -> Result<String, ScoringError> {
        let context = user.rfind("\nQuestion:").map_or(user, |i| &user[..i]).to_lowercase();
        let score = self
            .rules
            .iter()
            .find(|r| context.contains(&r.phrase.to_lowercase()))
            .map_or(self.default, |r| r.score);
        Ok(format!("SCORE: {score}"))
    }
}

/// OpenAI-compatible chat completions endpoint.
#[derive(Debug)]
pub struct HttpChatProvider {
    endpoint: String,
    model: String,
    client: HttpClient,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: [ChatMessage<'a>; 2],
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ChatResponse {
    Choices { choices: Vec<Choice> },
    Text { text: String },
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: String,
}

impl HttpChatProvider {
    /// `requests_per_minute` of `None` disables client-side throttling.
    pub fn new(
        endpoint: &str,
        model: &str,
        api_key: Option<&str>,
        requests_per_minute: Option<f64>,
    ) -> Self {
        // Retries at this layer only cover transport; the scorer's bounded
        // retry covers unparseable replies.
        let mut client =
            HttpClient::new(Duration::from_secs(120)).with_retries(1, Duration::from_millis(0));
        if let Some(key) = api_key.filter(|k| !k.is_empty()) {
            client = client.with_header("Authorization", format!("Bearer {key}"));
        }
        if let Some(rpm) = requests_per_minute.filter(|r| *r > 0.0) {
            client = client.with_rate_limit(RateLimiter::per_minute(rpm));
        }
        Self { endpoint: endpoint.into(), model: model.into(), client }
    }
}

impl LlmProvider for HttpChatProvider {
    fn id(&self) -> String {
        format!("http:{}", self.model)
    }

    fn complete(&self, system: &str, user: &str) -> Result<String, ScoringError> {
        let req = ChatRequest {
            model: &self.model,
            temperature: 0.0,
            messages: [
                ChatMessage { role: "system", content: system },
                ChatMessage { role: "user", content: user },
            ],
        };
        let resp: ChatResponse = self.client.post_json(&self.endpoint, &req).map_err(|e| {
            let retriable = match &e {
                HttpError::Transport(_) => true,
                HttpError::Status { status, .. } => *status == 429 || *status >= 500,
            };
            ScoringError::Provider { message: e.to_string(), retriable }
        })?;
        match resp {
            ChatResponse::Choices { mut choices } if !choices.is_empty() => {
                Ok(choices.swap_remove(0).message.content)
            }
            ChatResponse::Text { text } => Ok(text),
            _ => Err(ScoringError::Provider { message: "empty choices".into(), retriable: true }),
        }
    }
}

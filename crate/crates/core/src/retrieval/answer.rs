use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::prompts::generation_prompt;
use crate::providers::{LlmClient, Phase};

/// Separator between chunk texts in the answer context.
const CONTEXT_SEPARATOR: &str = "\n\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub chunks_used: usize,
    /// Lowest-ranked chunks left out to fit the prompt limit.
    pub chunks_dropped: usize,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Answers `question` from `chunks` (best first). When the prompt exceeds the
/// model's limit, chunks are dropped from the end until it fits.
pub fn generate_answer(question: &str, chunks: &[&str], llm: &LlmClient) -> Result<Answer> {
    let mut used = chunks.len();
    let mut prompt = generation_prompt(&chunks[..used].join(CONTEXT_SEPARATOR), question);
    while used > 0 && llm.count_tokens(&prompt) > llm.token_limit() {
        used -= 1;
        log::warn!("answer prompt over the token limit; dropping chunk {}", used + 1);
        prompt = generation_prompt(&chunks[..used].join(CONTEXT_SEPARATOR), question);
    }
    let reply = llm.complete(&prompt, Phase::Query)?;
    Ok(Answer {
        text: reply.text.trim().to_string(),
        chunks_used: used,
        chunks_dropped: chunks.len() - used,
        prompt_tokens: reply.prompt_tokens,
        completion_tokens: reply.completion_tokens,
    })
}

use serde::{Deserialize, Serialize};

use super::InferenceError;

pub const SYSTEM_TEXT: &str =
    "You are an expert in inferring students' Big-5 personality traits from text that they have written.";

pub const USER_PREFIX: &str = "For the given text sample, infer the author's personality traits and return your results in the following format without explanation: ";

/// Output format appended after the instruction, then a blank line, then the post.
pub const FORMAT_SCHEMA: &str = "{\"Openness\": \"low\" | \"high\", \"Conscientiousness\": \"low\" | \"high\", \"Extroversion\": \"low\" | \"high\", \"Agreeableness\": \"low\" | \"high\", \"Neuroticism\": \"low\" | \"high\"}\n\n";

pub const DEFAULT_MODEL: &str = "gpt-4o-mini";

/// A fully specified chat request: system + user message at temperature 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub model_name: String,
}

impl PromptBundle {
    /// The post embedded in `user_text`, if the bundle was built by [`build_prompt`].
    pub fn post_text(&self) -> Option<&str> {
        self.user_text
            .strip_prefix(USER_PREFIX)
            .and_then(|rest| rest.strip_prefix(FORMAT_SCHEMA))
    }
}

/// Build the inference prompt for `text`. The text is embedded verbatim.
pub fn build_prompt(text: &str, model_name: &str) -> Result<PromptBundle, InferenceError> {
    if text.trim().is_empty() {
        return Err(InferenceError::EmptyText);
    }
    let mut user_text = String::with_capacity(USER_PREFIX.len() + FORMAT_SCHEMA.len() + text.len());
    user_text.push_str(USER_PREFIX);
    user_text.push_str(FORMAT_SCHEMA);
    user_text.push_str(text);
    Ok(PromptBundle {
        system_text: SYSTEM_TEXT.to_string(),
        user_text,
        temperature: 0.0,
        model_name: model_name.to_string(),
    })
}

use std::io::Write;
use std::sync::Mutex;

use serde_json::json;

use super::{redact_names, PromptBundle, TransportError};

/// JSONL log of raw request/response pairs, with roster names redacted before writing.
pub struct AuditLog {
    sink: Mutex<Box<dyn Write + Send>>,
    roster: Vec<String>,
}

impl AuditLog {
    pub fn new(sink: Box<dyn Write + Send>, roster: Vec<String>) -> Self {
        Self {
            sink: Mutex::new(sink),
            roster,
        }
    }

    pub fn open(path: &std::path::Path, roster: Vec<String>) -> std::io::Result<Self> {
        let f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self::new(Box::new(f), roster))
    }

    pub fn record(
        &self,
        provider: &str,
        prompt: &PromptBundle,
        response: Result<&str, TransportError>,
    ) -> std::io::Result<()> {
        let scrub = |s: &str| redact_names(s, &self.roster);
        let line = json!({
            "provider": provider,
            "model": prompt.model_name,
            "temperature": prompt.temperature,
            "system": scrub(&prompt.system_text),
            "user": scrub(&prompt.user_text),
            "response": response.as_ref().ok().map(|r| scrub(r)),
            "error": response.as_ref().err().map(|e| scrub(&e.to_string())),
        });
        let mut sink = self.sink.lock().expect("audit lock");
        writeln!(sink, "{line}")?;
        sink.flush()
    }
}

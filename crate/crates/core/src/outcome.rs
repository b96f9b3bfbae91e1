//! The `outcome|success|explanation` text grammar.
//!
//! Every execution result — whether produced by the simulator or parsed out
//! of an evaluator reply — is carried around as a single line with exactly
//! three pipe-separated fields. The middle field must parse as a boolean.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OutcomeTextError {
    #[error("expected three pipe-separated fields (outcome|success|explanation), got {0}")]
    FieldCount(usize),
    #[error("success field must be 'true' or 'false', got '{0}'")]
    BadSuccess(String),
}

/// A parsed `outcome|success|explanation` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeText {
    pub summary: String,
    pub success: bool,
    pub explanation: String,
}

impl OutcomeText {
    pub fn new(summary: &str, success: bool, explanation: &str) -> Self {
        Self {
            summary: sanitize(summary),
            success,
            explanation: sanitize(explanation),
        }
    }

    pub fn render(&self) -> String {
        format!("{}|{}|{}", self.summary, self.success, self.explanation)
    }
}

/// Parses a grammar line. The explanation may itself contain pipes; only the
/// first two separators are structural.
pub fn parse_outcome_text(text: &str) -> Result<OutcomeText, OutcomeTextError> {
    let mut parts = text.splitn(3, '|');
    let summary = parts.next().unwrap_or("");
    let success = match parts.next() {
        Some(s) => s,
        None => return Err(OutcomeTextError::FieldCount(1)),
    };
    let explanation = match parts.next() {
        Some(e) => e,
        None => return Err(OutcomeTextError::FieldCount(2)),
    };
    let success = match success.trim().to_ascii_lowercase().as_str() {
        "true" => true,
        "false" => false,
        other => return Err(OutcomeTextError::BadSuccess(other.to_string())),
    };
    Ok(OutcomeText {
        summary: summary.trim().to_string(),
        success,
        explanation: explanation.trim().to_string(),
    })
}

// Keeps structural separators out of the free-text fields.
fn sanitize(s: &str) -> String {
    s.replace('|', "/").replace('\n', " ").trim().to_string()
}

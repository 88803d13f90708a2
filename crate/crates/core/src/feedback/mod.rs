//! Grounded feedback: a prompt built from mastery and recommendations, an
//! HTTP chat-completion client, a strict three-section parser and a
//! deterministic offline fallback.

mod client;
mod fallback;
mod parse;
mod prompt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::data::QMatrix;

pub use client::{FeedbackClient, ProviderConfig};
pub use fallback::{fallback_feedback, CONSOLIDATION_CEILING, MAX_WEAK_POINTS};
pub use parse::{parse_feedback, ParseFailure};
pub use prompt::{build_prompt, PromptBundle, DEFAULT_PROMPT_CAP};

pub const MASTERY_MARKER: &str = "## Mastery Analysis";
pub const EVALUATION_MARKER: &str = "## Recommendation Evaluation";
pub const SUGGESTIONS_MARKER: &str = "## Learning Suggestions";

/// Longest allowed suggestion bullet, in characters.
pub const MAX_BULLET_CHARS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    Llm,
    Fallback,
}

impl Provider {
    pub fn as_str(self) -> &'static str {
        match self {
            Provider::Llm => "llm",
            Provider::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sections {
    pub mastery_analysis: String,
    pub recommendation_evaluation: String,
    pub learning_suggestions: Vec<String>,
}

impl Sections {
    /// Text with the section markers, readable by [`parse_feedback`].
    pub fn render(&self) -> String {
        let mut out = format!(
            "{MASTERY_MARKER}\n{}\n\n{EVALUATION_MARKER}\n{}\n\n{SUGGESTIONS_MARKER}\n",
            self.mastery_analysis, self.recommendation_evaluation
        );
        for b in &self.learning_suggestions {
            out.push_str("- ");
            out.push_str(b);
            out.push('\n');
        }
        out
    }

    pub fn is_well_formed(&self) -> bool {
        !self.mastery_analysis.trim().is_empty()
            && !self.recommendation_evaluation.trim().is_empty()
            && !self.learning_suggestions.is_empty()
            && self
                .learning_suggestions
                .iter()
                .all(|b| !b.trim().is_empty() && b.chars().count() <= MAX_BULLET_CHARS)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackReport {
    pub provider: Provider,
    pub sections: Sections,
    pub raw_response: String,
    /// Why the fallback was used, when it was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
}

/// What `feedback_report.json` holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    /// Raw student id; `None` for a fresh learner.
    pub student_id: Option<String>,
    pub provider: Provider,
    pub sections: Sections,
    /// Raw item ids.
    pub recommended_items: Vec<String>,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
}

impl FeedbackRecord {
    pub fn new(
        student_id: Option<String>,
        report: &FeedbackReport,
        recommended_items: Vec<String>,
        created_at: DateTime<Utc>,
    ) -> Self {
        FeedbackRecord {
            student_id,
            provider: report.provider,
            sections: report.sections.clone(),
            recommended_items,
            created_at,
            fallback_reason: report.fallback_reason.clone(),
        }
    }
}

/// Everything the feedback stage reads about one student.
#[derive(Debug, Clone, Copy)]
pub struct Evidence<'a> {
    /// Mastery per dense knowledge id.
    pub mastery: &'a [f64],
    pub knowledge_names: &'a [String],
    /// Dense item ids, most relevant first.
    pub recommended: &'a [usize],
    /// Display label (raw id) per dense item id.
    pub item_labels: &'a [String],
    pub item_texts: &'a [String],
    pub q: &'a QMatrix,
}

impl Evidence<'_> {
    fn knowledge_name(&self, k: usize) -> Option<&str> {
        self.knowledge_names
            .get(k)
            .map(String::as_str)
            .filter(|s| !s.trim().is_empty())
    }

    fn item_label(&self, item: usize) -> String {
        self.item_labels
            .get(item)
            .cloned()
            .unwrap_or_else(|| item.to_string())
    }

    fn item_knowledge(&self, item: usize) -> &[usize] {
        if item < self.q.n_items() {
            self.q.row(item)
        } else {
            &[]
        }
    }
}

pub(crate) fn truncate_chars(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        return s.to_owned();
    }
    let mut out: String = s.chars().take(max.saturating_sub(1)).collect();
    out.push('…');
    out
}

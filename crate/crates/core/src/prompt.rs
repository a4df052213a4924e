//! Modality-aware and clinical-focus prompts, and their fusion.

use serde::{Deserialize, Serialize};

use crate::classifier::ModalityPrediction;
use crate::modality::Modality;
use crate::question::{ConceptCategory, QuestionAnalysis, QuestionType};

/// Template strings. Placeholders: `{modality}` in the modality template;
/// `{anatomy}`, `{pathology}`, `{question_type}` in the focus template,
/// whose `;`-separated clauses are dropped when their placeholder is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplates {
    pub modality_template: String,
    pub focus_template: String,
    pub fallback_focus: String,
    pub preamble: String,
    pub separator: String,
    /// Terms per category shown in the focus prompt.
    pub max_terms: usize,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            modality_template: "This is a {modality} image.".into(),
            focus_template: "Focus on {anatomy}; assess {pathology}; question type: {question_type}.".into(),
            fallback_focus: "Describe clinically relevant findings.".into(),
            preamble: "Describe the medical image in the style of a radiology report.\n".into(),
            separator: "\nClinical focus: ".into(),
            max_terms: 3,
        }
    }
}

/// Fused guidance for the caption backend, with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPrompt {
    pub modality_text: String,
    pub focus_text: String,
    pub fused_text: String,
    pub modality: Modality,
    pub confidence: f64,
    pub analysis: QuestionAnalysis,
}

impl PromptTemplates {
    pub fn render_modality_prompt(&self, pred: &ModalityPrediction) -> String {
        self.modality_template.replace("{modality}", pred.modality.canonical_name())
    }

    pub fn render_focus_prompt(&self, analysis: &QuestionAnalysis) -> String {
        let terms = |c: ConceptCategory| {
            analysis
                .focus(c)
                .iter()
                .take(self.max_terms)
                .map(|t| t.term.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let anatomy = terms(ConceptCategory::Anatomy);
        let pathology = terms(ConceptCategory::Pathology);
        if anatomy.is_empty() && pathology.is_empty() && analysis.question_type == QuestionType::Other {
            return self.fallback_focus.clone();
        }
        let question_type = analysis.question_type.to_string();
        let values = [("{anatomy}", &anatomy), ("{pathology}", &pathology), ("{question_type}", &question_type)];

        let body = self.focus_template.trim_end();
        let (body, terminal) = match body.strip_suffix('.') {
            Some(b) => (b, "."),
            None => (body, ""),
        };
        let clauses: Vec<String> = body
            .split(';')
            .filter(|clause| values.iter().all(|(key, v)| !clause.contains(key) || !v.is_empty()))
            .map(|clause| values.iter().fold(clause.trim().to_string(), |acc, (key, v)| acc.replace(key, v)))
            .collect();
        if clauses.is_empty() {
            return self.fallback_focus.clone();
        }
        format!("{}{terminal}", clauses.join("; "))
    }

    /// `preamble + modality_text + separator + focus_text`.
    pub fn fuse(&self, modality_text: &str, focus_text: &str) -> String {
        format!("{}{modality_text}{}{focus_text}", self.preamble, self.separator)
    }

    /// Splits a fused prompt back into its two constituents.
    pub fn split<'a>(&self, fused: &'a str) -> Option<(&'a str, &'a str)> {
        fused.strip_prefix(self.preamble.as_str())?.split_once(self.separator.as_str())
    }

    pub fn build(&self, pred: &ModalityPrediction, analysis: &QuestionAnalysis) -> DualPrompt {
        let modality_text = self.render_modality_prompt(pred);
        let focus_text = self.render_focus_prompt(analysis);
        let fused_text = self.fuse(&modality_text, &focus_text);
        DualPrompt {
            modality_text,
            focus_text,
            fused_text,
            modality: pred.modality,
            confidence: pred.confidence,
            analysis: analysis.clone(),
        }
    }
}

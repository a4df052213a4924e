//! Clinical-focus extraction from free-text questions.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{phrase_positions, tokenize, TextEmbeddingProvider};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConceptCategory {
    Anatomy,
    Pathology,
    Location,
    Comparison,
}

impl ConceptCategory {
    pub const ALL: [ConceptCategory; 4] = [
        ConceptCategory::Anatomy,
        ConceptCategory::Pathology,
        ConceptCategory::Location,
        ConceptCategory::Comparison,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConceptCategory::Anatomy => "anatomy",
            ConceptCategory::Pathology => "pathology",
            ConceptCategory::Location => "location",
            ConceptCategory::Comparison => "comparison",
        }
    }
}

impl FromStr for ConceptCategory {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        ConceptCategory::ALL.into_iter().find(|c| c.name() == s.trim().to_lowercase()).ok_or(())
    }
}

/// Lexicon bundled with the crate.
pub const BUILTIN_LEXICON: &str = include_str!("../assets/lexicon.tsv");

/// One row of a lexicon file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub category: ConceptCategory,
    pub term: String,
    pub concept_id: Option<String>,
}

/// Parses `category<TAB>term[<TAB>concept_id]` lines. `#` starts a comment
/// line; blank lines are skipped. Terms are lower-cased and must be unique
/// within their category.
pub fn parse_lexicon(text: &str) -> Result<Vec<LexiconEntry>> {
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let err = |message: String| Error::Parse {
            line: Some(line_no),
            message,
        };
        if !(2..=3).contains(&cols.len()) {
            return Err(err(format!("expected 2 or 3 tab-separated columns, found {}", cols.len())));
        }
        let category: ConceptCategory = cols[0]
            .parse()
            .map_err(|_| err(format!("unknown category `{}`", cols[0].trim())))?;
        let term = cols[1].trim().to_lowercase();
        if tokenize(&term).is_empty() {
            return Err(err("empty term".into()));
        }
        if !seen.insert((category, term.clone())) {
            return Err(err(format!("duplicate {} term `{term}`", category.name())));
        }
        let concept_id = cols.get(2).map(|c| c.trim().to_string()).filter(|c| !c.is_empty());
        entries.push(LexiconEntry {
            category,
            term,
            concept_id,
        });
    }
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Concept {
    pub term: String,
    pub concept_id: Option<String>,
    tokens: Vec<String>,
    pub embedding: Vec<f64>,
}

impl Concept {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Per-category concept lists with cached embeddings; immutable once built.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConceptDictionary {
    categories: BTreeMap<ConceptCategory, Vec<Concept>>,
    warnings: Vec<String>,
}

impl ConceptDictionary {
    pub fn from_entries(entries: &[LexiconEntry], provider: &dyn TextEmbeddingProvider) -> Result<Self> {
        let mut categories: BTreeMap<ConceptCategory, Vec<Concept>> =
            ConceptCategory::ALL.iter().map(|c| (*c, Vec::new())).collect();
        for e in entries {
            categories.entry(e.category).or_default().push(Concept {
                term: e.term.clone(),
                concept_id: e.concept_id.clone(),
                tokens: tokenize(&e.term),
                embedding: provider.embed(&e.term)?,
            });
        }
        let warnings: Vec<String> = categories
            .iter()
            .filter(|(_, v)| v.is_empty())
            .map(|(c, _)| format!("lexicon has no {} terms", c.name()))
            .collect();
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(Self { categories, warnings })
    }

    pub fn from_tsv(text: &str, provider: &dyn TextEmbeddingProvider) -> Result<Self> {
        Self::from_entries(&parse_lexicon(text)?, provider)
    }

    pub fn concepts(&self, category: ConceptCategory) -> &[Concept] {
        self.categories.get(&category).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.categories.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Load-time warnings such as empty categories.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

/// Loads a lexicon TSV and embeds every term.
pub fn build_dictionary(path: impl AsRef<Path>, provider: &dyn TextEmbeddingProvider) -> Result<ConceptDictionary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ConceptDictionary::from_tsv(&text, provider)
}

/// Cosine of the angle between `q` and `c`, clamped to [-1, 1].
pub fn cosine_similarity(q: &[f64], c: &[f64]) -> Result<f64> {
    if q.len() != c.len() {
        return Err(Error::Dimension {
            left: q.len(),
            right: c.len(),
        });
    }
    let dot: f64 = q.iter().zip(c).map(|(a, b)| a * b).sum();
    let nq = q.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nc = c.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nq == 0.0 || nc == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (nq * nc)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QuestionType {
    Modality,
    Anatomy,
    Pathology,
    Location,
    Comparison,
    Other,
}

impl QuestionType {
    /// Tie-break rank: higher wins.
    fn priority(self) -> u8 {
        match self {
            QuestionType::Location => 5,
            QuestionType::Comparison => 4,
            QuestionType::Pathology => 3,
            QuestionType::Anatomy => 2,
            QuestionType::Modality => 1,
            QuestionType::Other => 0,
        }
    }

    fn of_category(c: ConceptCategory) -> Self {
        match c {
            ConceptCategory::Anatomy => QuestionType::Anatomy,
            ConceptCategory::Pathology => QuestionType::Pathology,
            ConceptCategory::Location => QuestionType::Location,
            ConceptCategory::Comparison => QuestionType::Comparison,
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            QuestionType::Modality => "MODALITY",
            QuestionType::Anatomy => "ANATOMY",
            QuestionType::Pathology => "PATHOLOGY",
            QuestionType::Location => "LOCATION",
            QuestionType::Comparison => "COMPARISON",
            QuestionType::Other => "OTHER",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusTerm {
    pub term: String,
    pub similarity: f64,
    /// Whether the term occurs verbatim in the question.
    pub lexical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionAnalysis {
    pub question_type: QuestionType,
    /// Per-category focus terms, sorted by descending similarity.
    pub focus_terms: BTreeMap<ConceptCategory, Vec<FocusTerm>>,
    pub raw_question: String,
}

impl QuestionAnalysis {
    pub fn focus(&self, category: ConceptCategory) -> &[FocusTerm] {
        self.focus_terms.get(&category).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.focus_terms.values().all(Vec::is_empty)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzerConfig {
    /// Minimum cosine for a non-lexical focus term.
    pub sim_threshold: f64,
    pub top_k: usize,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        Self {
            sim_threshold: 0.35,
            top_k: 5,
        }
    }
}

const LOCATION_CUES: &[&str] = &[
    "which side", "what side", "where", "which part", "what part", "which lobe", "located", "location",
    "left or right", "right or left", "which region", "what region", "which quadrant",
];
const COMPARISON_CUES: &[&str] = &["compare", "compared", "comparison", "than", "versus", "vs", "difference between"];
const MODALITY_CUES: &[&str] = &[
    "modality", "imaging technique", "type of imaging", "kind of imaging", "type of scan", "kind of scan",
    "type of image", "kind of image", "how was this image taken", "mri", "ct", "x ray", "xray", "radiograph",
];

fn has_cue(tokens: &[String], cues: &[&str]) -> bool {
    cues.iter().any(|cue| !phrase_positions(tokens, &tokenize(cue)).is_empty())
}

/// Embeds the question, collects per-category focus terms (verbatim
/// occurrences pinned to similarity 1.0, otherwise cosine above the
/// threshold, top-k each) and classifies the question type.
///
/// The type comes from interrogative cues first (location, comparison,
/// modality); otherwise from the category of the best-scoring focus term;
/// otherwise OTHER. Conflicts resolve LOCATION > COMPARISON > PATHOLOGY >
/// ANATOMY > MODALITY.
pub fn analyze(
    question: &str,
    dict: &ConceptDictionary,
    provider: &dyn TextEmbeddingProvider,
    config: &AnalyzerConfig,
) -> Result<QuestionAnalysis> {
    if question.trim().is_empty() {
        return Err(Error::Data("question is empty".into()));
    }
    let q_tokens = tokenize(question);
    let q_emb = provider.embed(question)?;

    let mut focus_terms = BTreeMap::new();
    for category in ConceptCategory::ALL {
        let mut hits: Vec<FocusTerm> = Vec::new();
        for concept in dict.concepts(category) {
            let lexical = !phrase_positions(&q_tokens, concept.tokens()).is_empty();
            let similarity = if lexical {
                1.0
            } else {
                match cosine_similarity(&q_emb, &concept.embedding) {
                    Ok(s) => s,
                    Err(Error::ZeroVector) => continue,
                    Err(e) => return Err(e),
                }
            };
            if lexical || similarity > config.sim_threshold {
                hits.push(FocusTerm {
                    term: concept.term.clone(),
                    similarity,
                    lexical,
                });
            }
        }
        hits.sort_by(|a, b| {
            b.similarity
                .total_cmp(&a.similarity)
                .then(b.lexical.cmp(&a.lexical))
                .then(a.term.cmp(&b.term))
        });
        hits.truncate(config.top_k);
        focus_terms.insert(category, hits);
    }

    let mut cued = Vec::new();
    if has_cue(&q_tokens, LOCATION_CUES) {
        cued.push(QuestionType::Location);
    }
    if has_cue(&q_tokens, COMPARISON_CUES) {
        cued.push(QuestionType::Comparison);
    }
    if has_cue(&q_tokens, MODALITY_CUES) {
        cued.push(QuestionType::Modality);
    }
    let question_type = if let Some(t) = cued.into_iter().max_by_key(|t| t.priority()) {
        t
    } else {
        let best = focus_terms
            .iter()
            .filter_map(|(c, terms)| terms.first().map(|t| (QuestionType::of_category(*c), t.similarity)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(a.0.priority().cmp(&b.0.priority())));
        best.map(|(t, _)| t).unwrap_or(QuestionType::Other)
    };

    Ok(QuestionAnalysis {
        question_type,
        focus_terms,
        raw_question: question.to_string(),
    })
}

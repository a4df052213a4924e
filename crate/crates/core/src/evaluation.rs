//! Reference-free caption scoring: embedding relevance plus rubric-based
//! medical quality.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::data_io::ImageSample;
use crate::error::{Error, Result};
use crate::question::{
    analyze, cosine_similarity, parse_lexicon, AnalyzerConfig, BUILTIN_LEXICON, ConceptCategory, ConceptDictionary, LexiconEntry,
    QuestionAnalysis, QuestionType,
};
use crate::text::{tokenize, HashingEmbedder, TextEmbeddingProvider};

/// Image and text encoders sharing one embedding space.
pub trait MultimodalEmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed_image(&self, image: &ImageSample) -> Result<Vec<f64>>;
    fn embed_text(&self, text: &str) -> Result<Vec<f64>>;
}

/// Test double: hashed text features and a coarse luminance grid for images,
/// both of dimension `grid * grid`.
#[derive(Debug, Clone)]
pub struct HashingMultimodalEmbedder {
    grid: usize,
    text: HashingEmbedder,
}

impl HashingMultimodalEmbedder {
    pub fn new(grid: usize) -> Self {
        let grid = grid.max(1);
        Self {
            grid,
            text: HashingEmbedder::new(grid * grid),
        }
    }
}

impl Default for HashingMultimodalEmbedder {
    fn default() -> Self {
        Self::new(8)
    }
}

impl MultimodalEmbeddingProvider for HashingMultimodalEmbedder {
    fn dimension(&self) -> usize {
        self.grid * self.grid
    }

    fn embed_image(&self, image: &ImageSample) -> Result<Vec<f64>> {
        let g = self.grid;
        let mut sums = vec![0.0f64; g * g];
        let mut counts = vec![0usize; g * g];
        for y in 0..image.height {
            let gy = y * g / image.height;
            for x in 0..image.width {
                let gx = x * g / image.width;
                let lum = (0..image.channels).map(|c| image.get(y, x, c) as f64).sum::<f64>() / image.channels as f64;
                sums[gy * g + gx] += lum;
                counts[gy * g + gx] += 1;
            }
        }
        // Cells left empty by images smaller than the grid borrow the global mean.
        let mean = sums.iter().sum::<f64>() / counts.iter().sum::<usize>().max(1) as f64;
        Ok(sums
            .iter()
            .zip(&counts)
            .map(|(s, &n)| if n == 0 { mean } else { s / n as f64 })
            .collect())
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        self.text.embed(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl Default for EvalWeights {
    fn default() -> Self {
        Self {
            alpha1: 0.25,
            alpha2: 0.25,
            beta1: 1.0 / 3.0,
            beta2: 1.0 / 3.0,
            beta3: 1.0 / 3.0,
            gamma1: 1.0,
            gamma2: 1.0,
        }
    }
}

impl EvalWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("beta3", self.beta3),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
        ];
        for (name, w) in all {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!("evaluation weight {name} must be finite and non-negative, got {w}")));
            }
        }
        Ok(())
    }

    pub fn relevance(&self, s_image_text: f64, s_question_text: f64) -> f64 {
        self.alpha1 * s_image_text + self.alpha2 * s_question_text
    }

    pub fn quality(&self, s_medical: f64, s_clinical: f64, s_structure: f64) -> f64 {
        self.beta1 * s_medical + self.beta2 * s_clinical + self.beta3 * s_structure
    }

    pub fn final_score(&self, s_relevance: f64, s_quality: f64) -> f64 {
        self.gamma1 * s_relevance + self.gamma2 * s_quality
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub s_image_text: f64,
    pub s_question_text: f64,
    pub s_relevance: f64,
    pub s_medical: f64,
    pub s_clinical: f64,
    pub s_structure: f64,
    pub s_quality: f64,
    pub s_final: f64,
    /// Individual rubric checks and intermediate quantities.
    pub per_check: BTreeMap<String, f64>,
}

impl EvaluationReport {
    /// Combines sub-scores with `weights`. The composite fields are always
    /// recomputable bit-for-bit from the components.
    pub fn from_components(
        s_image_text: f64,
        s_question_text: f64,
        s_medical: f64,
        s_clinical: f64,
        s_structure: f64,
        weights: &EvalWeights,
        per_check: BTreeMap<String, f64>,
    ) -> Self {
        let s_relevance = weights.relevance(s_image_text, s_question_text);
        let s_quality = weights.quality(s_medical, s_clinical, s_structure);
        Self {
            s_image_text,
            s_question_text,
            s_relevance,
            s_medical,
            s_clinical,
            s_structure,
            s_quality,
            s_final: weights.final_score(s_relevance, s_quality),
            per_check,
        }
    }
}

/// A lexicon phrase found in a token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptMatch {
    pub start: usize,
    pub len: usize,
    pub phrase: String,
    pub concept_id: String,
    /// `None` for flat terms that carry no category.
    pub category: Option<ConceptCategory>,
}

/// Links token runs to concepts.
pub trait ConceptLinker: Send + Sync {
    fn link(&self, tokens: &[String]) -> Vec<ConceptMatch>;
}

#[derive(Debug, Clone)]
struct LexiconTerm {
    tokens: Vec<String>,
    concept_id: String,
    category: Option<ConceptCategory>,
}

/// Longest-match phrase linker over categorised entries and flat terms.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    terms: Vec<LexiconTerm>,
    by_first: HashMap<String, Vec<usize>>,
}

impl Lexicon {
    pub fn from_entries(entries: &[LexiconEntry]) -> Self {
        let mut lex = Self::default();
        for e in entries {
            let id = e.concept_id.clone().unwrap_or_else(|| format!("{}:{}", e.category.name(), e.term));
            lex.push(&e.term, id, Some(e.category));
        }
        lex
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        Ok(Self::from_entries(&parse_lexicon(text)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text)
    }

    /// The lexicon bundled with the crate.
    pub fn builtin() -> Self {
        Self::from_tsv(BUILTIN_LEXICON).expect("bundled lexicon parses")
    }

    /// Adds one term per non-blank, non-`#` line. Terms already present are
    /// left alone.
    pub fn add_flat_terms(&mut self, text: &str) {
        for line in text.lines() {
            let term = line.trim();
            if term.is_empty() || term.starts_with('#') {
                continue;
            }
            let tokens = tokenize(term);
            if tokens.is_empty() || self.terms.iter().any(|t| t.tokens == tokens) {
                continue;
            }
            let id = format!("term:{}", tokens.join(" "));
            self.push(term, id, None);
        }
    }

    fn push(&mut self, term: &str, concept_id: String, category: Option<ConceptCategory>) {
        let tokens = tokenize(term);
        if tokens.is_empty() {
            return;
        }
        self.by_first.entry(tokens[0].clone()).or_default().push(self.terms.len());
        self.terms.push(LexiconTerm {
            tokens,
            concept_id,
            category,
        });
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Concept ids a single term links to when read on its own.
    pub fn concepts_of(&self, term: &str) -> BTreeSet<String> {
        self.link(&tokenize(term)).into_iter().map(|m| m.concept_id).collect()
    }
}

impl ConceptLinker for Lexicon {
    /// Greedy left-to-right scan taking the longest phrase at each position;
    /// the first-listed entry wins among equal-length phrases.
    fn link(&self, tokens: &[String]) -> Vec<ConceptMatch> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let best = self.by_first.get(&tokens[i]).and_then(|cands| {
                cands
                    .iter()
                    .map(|&k| &self.terms[k])
                    .filter(|t| tokens[i..].starts_with(&t.tokens))
                    .fold(None::<&LexiconTerm>, |acc, t| match acc {
                        Some(a) if a.tokens.len() >= t.tokens.len() => Some(a),
                        _ => Some(t),
                    })
            });
            match best {
                Some(t) => {
                    out.push(ConceptMatch {
                        start: i,
                        len: t.tokens.len(),
                        phrase: t.tokens.join(" "),
                        concept_id: t.concept_id.clone(),
                        category: t.category,
                    });
                    i += t.tokens.len();
                }
                None => i += 1,
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RubricConfig {
    /// Term density at which the density half of the terminology score saturates.
    pub density_cap: f64,
}

impl Default for RubricConfig {
    fn default() -> Self {
        Self { density_cap: 0.3 }
    }
}

/// Sub-score with the checks that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub score: f64,
    pub checks: BTreeMap<String, f64>,
}

/// `0.5 * min(density / cap, 1) + 0.5 * diversity`, where density is the
/// share of tokens covered by lexicon phrases and diversity is distinct
/// concepts over distinct matched phrase forms.
pub fn terminology_score(caption: &str, linker: &dyn ConceptLinker, density_cap: f64) -> Scored {
    let tokens = tokenize(caption);
    let mut checks = BTreeMap::new();
    if tokens.is_empty() {
        checks.insert("density".into(), 0.0);
        checks.insert("diversity".into(), 0.0);
        return Scored { score: 0.0, checks };
    }
    let matches = linker.link(&tokens);
    let matched_tokens: usize = matches.iter().map(|m| m.len).sum();
    let density = matched_tokens as f64 / tokens.len() as f64;
    let concepts: BTreeSet<&str> = matches.iter().map(|m| m.concept_id.as_str()).collect();
    let forms: BTreeSet<&str> = matches.iter().map(|m| m.phrase.as_str()).collect();
    let diversity = concepts.len() as f64 / forms.len().max(1) as f64;
    let density_part = if density_cap > 0.0 { (density / density_cap).min(1.0) } else { 1.0 };
    checks.insert("density".into(), density);
    checks.insert("diversity".into(), diversity);
    Scored {
        score: 0.5 * density_part + 0.5 * diversity,
        checks,
    }
}

const NORMALITY_PHRASES: &[&str] = &[
    "normal",
    "unremarkable",
    "no abnormality",
    "no evidence",
    "no acute",
    "no significant",
    "within normal limits",
];
const SIZE_WORDS: &[&str] = &[
    "size", "large", "larger", "big", "bigger", "small", "smaller", "tiny", "huge", "massive", "measure",
    "measurement", "diameter", "dimension", "dimensions", "length", "width", "enlarged", "enlargement", "mild",
    "moderate", "severe", "extensive",
];
const QUESTION_SIZE_WORDS: &[&str] = &[
    "size", "large", "big", "small", "measure", "measurement", "diameter", "dimension", "dimensions", "length",
    "width", "how big", "how large", "how small", "how long",
];

fn contains_phrase(tokens: &[String], phrases: &[&str]) -> bool {
    phrases.iter().any(|p| {
        let p = tokenize(p);
        tokens.windows(p.len()).any(|w| w == p.as_slice())
    })
}

fn measurement_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b\d+(?:\.\d+)?\s*(?:mm|cm|m|ml|cc|hu|degrees?|%)(?:\b|$|\s)|\b\d+(?:\.\d+)?\s*%").unwrap()
    })
}

fn measurement_applicable(analysis: &QuestionAnalysis) -> bool {
    matches!(analysis.question_type, QuestionType::Pathology | QuestionType::Comparison)
        || contains_phrase(&tokenize(&analysis.raw_question), QUESTION_SIZE_WORDS)
}

/// Mean of localisation, finding and (when applicable) measurement checks.
///
/// Localisation requires an anatomy term consistent with the question's
/// anatomy focus (any anatomy term when the question has none) and, for
/// LOCATION questions, a location word; it scores the fraction met.
/// Measurement applies to PATHOLOGY and COMPARISON questions and to
/// questions about size.
pub fn clinical_score(caption: &str, analysis: &QuestionAnalysis, lexicon: &Lexicon) -> Scored {
    let tokens = tokenize(caption);
    let mut checks = BTreeMap::new();
    if tokens.is_empty() {
        checks.insert("localization".into(), 0.0);
        checks.insert("finding".into(), 0.0);
        return Scored { score: 0.0, checks };
    }
    let matches = lexicon.link(&tokens);
    let in_caption = |cat: ConceptCategory| -> BTreeSet<&str> {
        matches
            .iter()
            .filter(|m| m.category == Some(cat))
            .map(|m| m.concept_id.as_str())
            .collect()
    };

    let caption_anatomy = in_caption(ConceptCategory::Anatomy);
    let focus = analysis.focus(ConceptCategory::Anatomy);
    let lexical: Vec<_> = focus.iter().filter(|f| f.lexical).collect();
    let wanted: Vec<_> = if lexical.is_empty() { focus.iter().collect() } else { lexical };
    let anatomy_ok = if wanted.is_empty() {
        !caption_anatomy.is_empty()
    } else {
        wanted
            .iter()
            .any(|f| lexicon.concepts_of(&f.term).iter().any(|id| caption_anatomy.contains(id.as_str())))
    };
    let mut met = vec![anatomy_ok];
    checks.insert("localization.anatomy".into(), anatomy_ok as u8 as f64);
    if analysis.question_type == QuestionType::Location {
        let lateral = !in_caption(ConceptCategory::Location).is_empty();
        checks.insert("localization.laterality".into(), lateral as u8 as f64);
        met.push(lateral);
    }
    let localization = met.iter().filter(|&&m| m).count() as f64 / met.len() as f64;
    checks.insert("localization".into(), localization);

    let pathology = !in_caption(ConceptCategory::Pathology).is_empty();
    let normality = contains_phrase(&tokens, NORMALITY_PHRASES);
    let finding = (pathology || normality) as u8 as f64;
    checks.insert("finding".into(), finding);

    let mut parts = vec![localization, finding];
    if measurement_applicable(analysis) {
        let measurement = if measurement_regex().is_match(caption) {
            1.0
        } else if contains_phrase(&tokens, SIZE_WORDS) {
            0.5
        } else {
            0.0
        };
        checks.insert("measurement".into(), measurement);
        parts.push(measurement);
    }
    Scored {
        score: parts.iter().sum::<f64>() / parts.len() as f64,
        checks,
    }
}

const FIRST_PERSON: &[&str] = &["i", "me", "my", "mine", "we", "us", "our", "ours", "myself", "ourselves"];
const TECHNIQUE_WORDS: &[&str] = &[
    "ct", "mri", "mr", "x ray", "xray", "radiograph", "radiography", "radiographic", "scan", "tomography",
    "magnetic resonance", "ultrasound", "sonography", "fluoroscopy", "mammogram", "angiography", "contrast",
    "axial", "coronal", "sagittal", "t1", "t2", "flair", "weighted", "pa view", "ap view", "lateral view",
];
const FINDINGS_CUES: &[&str] = &[
    "findings", "shows", "show", "demonstrates", "reveals", "there is", "there are", "seen", "noted", "visible",
];
const IMPRESSION_CUES: &[&str] = &[
    "impression", "conclusion", "consistent with", "suggestive of", "suggests", "likely", "in summary", "overall",
    "diagnosis",
];

fn first_position(tokens: &[String], phrases: &[&str]) -> Option<usize> {
    phrases
        .iter()
        .filter_map(|p| {
            let p = tokenize(p);
            tokens.windows(p.len()).position(|w| w == p.as_slice())
        })
        .min()
}

/// Mean of four reporting-convention checks: complete sentences,
/// declarative style, technique mention and findings-before-impression.
pub fn structure_score(caption: &str) -> Scored {
    let tokens = tokenize(caption);
    let mut checks = BTreeMap::new();
    let trimmed = caption.trim();
    if tokens.is_empty() {
        for name in ["complete", "declarative", "technique", "ordering"] {
            checks.insert(name.into(), 0.0);
        }
        return Scored { score: 0.0, checks };
    }
    let complete = (trimmed.ends_with('.') || trimmed.ends_with('!')) && tokens.len() >= 5;
    let declarative = !trimmed.contains('?') && !tokens.iter().any(|t| FIRST_PERSON.contains(&t.as_str()));
    let technique = contains_phrase(&tokens, TECHNIQUE_WORDS);
    let ordering = match (first_position(&tokens, FINDINGS_CUES), first_position(&tokens, IMPRESSION_CUES)) {
        (Some(f), Some(i)) => f < i,
        _ => true,
    };
    let all = [
        ("complete", complete),
        ("declarative", declarative),
        ("technique", technique),
        ("ordering", ordering),
    ];
    for (name, ok) in all {
        checks.insert(name.into(), ok as u8 as f64);
    }
    Scored {
        score: all.iter().filter(|(_, ok)| *ok).count() as f64 / all.len() as f64,
        checks,
    }
}

/// Cosine of the caption against the image and against the question, and
/// their weighted sum.
pub fn relevance(
    image: &ImageSample,
    question: &str,
    caption: &str,
    provider: &dyn MultimodalEmbeddingProvider,
    weights: &EvalWeights,
) -> Result<(f64, f64, f64)> {
    if caption.trim().is_empty() {
        return Err(Error::Data("caption is empty".into()));
    }
    let c = provider.embed_text(caption)?;
    let s_image_text = cosine_similarity(&provider.embed_image(image)?, &c)?;
    let s_question_text = cosine_similarity(&provider.embed_text(question)?, &c)?;
    Ok((s_image_text, s_question_text, weights.relevance(s_image_text, s_question_text)))
}

/// Everything the scorer needs besides the inputs themselves.
pub struct Evaluator {
    pub provider: Box<dyn MultimodalEmbeddingProvider>,
    pub lexicon: Lexicon,
    pub dictionary: ConceptDictionary,
    pub text_provider: Box<dyn TextEmbeddingProvider>,
    pub analyzer: AnalyzerConfig,
    pub rubric: RubricConfig,
    pub weights: EvalWeights,
}

impl Evaluator {
    /// Hashing stubs with the bundled lexicon.
    pub fn stub(weights: EvalWeights) -> Result<Self> {
        let text = HashingEmbedder::default();
        let dictionary = ConceptDictionary::from_tsv(BUILTIN_LEXICON, &text)?;
        Ok(Self {
            provider: Box::new(HashingMultimodalEmbedder::default()),
            lexicon: Lexicon::builtin(),
            dictionary,
            text_provider: Box::new(text),
            analyzer: AnalyzerConfig::default(),
            rubric: RubricConfig::default(),
            weights,
        })
    }

    pub fn evaluate(&self, image: &ImageSample, question: &str, caption: &str) -> Result<EvaluationReport> {
        let (s_image_text, s_question_text, _) = relevance(image, question, caption, self.provider.as_ref(), &self.weights)?;
        let analysis = analyze(question, &self.dictionary, self.text_provider.as_ref(), &self.analyzer)?;
        let medical = terminology_score(caption, &self.lexicon, self.rubric.density_cap);
        let clinical = clinical_score(caption, &analysis, &self.lexicon);
        let structure = structure_score(caption);
        let mut per_check = BTreeMap::new();
        for (prefix, scored) in [("medical", &medical), ("clinical", &clinical), ("structure", &structure)] {
            for (k, v) in &scored.checks {
                per_check.insert(format!("{prefix}.{k}"), *v);
            }
        }
        Ok(EvaluationReport::from_components(
            s_image_text,
            s_question_text,
            medical.score,
            clinical.score,
            structure.score,
            &self.weights,
            per_check,
        ))
    }

    /// Scores every item and aggregates.
    pub fn evaluate_batch(&self, items: &[EvalItem]) -> Result<BatchReport> {
        if items.is_empty() {
            return Err(Error::Data("nothing to evaluate".into()));
        }
        let records = items
            .iter()
            .map(|item| {
                let report = self
                    .evaluate(&item.image, &item.question, &item.caption)
                    .map_err(|e| Error::Data(format!("record {}: {e}", item.record_id)))?;
                Ok(RecordReport {
                    record_id: item.record_id.clone(),
                    report,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let reports: Vec<&EvaluationReport> = records.iter().map(|r| &r.report).collect();
        Ok(BatchReport {
            aggregate: AggregateRow::mean_of(&reports),
            records,
        })
    }
}

/// One line of an evaluation input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalInput {
    pub record_id: String,
    pub image_path: PathBuf,
    pub question: String,
    pub caption: String,
}

/// Parses JSON lines; blank lines are skipped.
pub fn parse_eval_jsonl(text: &str) -> Result<Vec<EvalInput>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: Some(i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct EvalItem {
    pub record_id: String,
    pub image: ImageSample,
    pub question: String,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordReport {
    pub record_id: String,
    #[serde(flatten)]
    pub report: EvaluationReport,
}

/// Column means over a batch, in report-table order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub count: usize,
    pub final_score: f64,
    pub image_similarity: f64,
    pub question_similarity: f64,
    pub medical_quality: f64,
    pub clinical_accuracy: f64,
    pub structure: f64,
    pub relevance: f64,
    pub quality: f64,
}

/// Mean that does not depend on input order.
fn ordered_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

impl AggregateRow {
    pub const CSV_HEADER: &'static str = "dataset,count,final_score,image_similarity,question_similarity,\
medical_quality,clinical_accuracy,structure,relevance,quality";

    pub fn mean_of(reports: &[&EvaluationReport]) -> Self {
        let col = |f: fn(&EvaluationReport) -> f64| ordered_mean(reports.iter().map(|r| f(r)).collect());
        Self {
            count: reports.len(),
            final_score: col(|r| r.s_final),
            image_similarity: col(|r| r.s_image_text),
            question_similarity: col(|r| r.s_question_text),
            medical_quality: col(|r| r.s_medical),
            clinical_accuracy: col(|r| r.s_clinical),
            structure: col(|r| r.s_structure),
            relevance: col(|r| r.s_relevance),
            quality: col(|r| r.s_quality),
        }
    }

    pub fn csv_row(&self, dataset: &str) -> String {
        let mut row = format!("{},{}", dataset.replace(',', "_"), self.count);
        for v in [
            self.final_score,
            self.image_similarity,
            self.question_similarity,
            self.medical_quality,
            self.clinical_accuracy,
            self.structure,
            self.relevance,
            self.quality,
        ] {
            let _ = write!(row, ",{v:.6}");
        }
        row
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub records: Vec<RecordReport>,
    pub aggregate: AggregateRow,
}

impl BatchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    pub fn to_csv(&self, dataset: &str) -> String {
        format!("{}\n{}\n", AggregateRow::CSV_HEADER, self.aggregate.csv_row(dataset))
    }
}

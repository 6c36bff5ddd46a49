//! Domain types shared by the whole pipeline.
//!
//! Every validation rule lives on the constructors here, so a value that
//! exists (including one produced by deserialization) is always valid.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("triple {0} is empty")]
    EmptyField(&'static str),
    #[error("example field `{0}` is empty")]
    EmptyExampleField(&'static str),
    #[error("label must be 0 or 1, got {0}")]
    InvalidLabel(u64),
    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("threshold {0} must lie strictly inside (0, 1)")]
    ThresholdOutOfRange(f64),
}

/// One `(subject, relation, object)` unit of a knowledge graph.
///
/// Fields are trimmed at construction and never empty. Comparison is exact
/// and case-sensitive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[String; 3]", into = "[String; 3]")]
pub struct Triple {
    subject: String,
    relation: String,
    object: String,
}

impl Triple {
    pub fn new(subject: &str, relation: &str, object: &str) -> Result<Self, ModelError> {
        let field = |value: &str, name| {
            let trimmed = value.trim();
            if trimmed.is_empty() {
                Err(ModelError::EmptyField(name))
            } else {
                Ok(trimmed.to_owned())
            }
        };
        Ok(Self {
            subject: field(subject, "subject")?,
            relation: field(relation, "relation")?,
            object: field(object, "object")?,
        })
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn object(&self) -> &str {
        &self.object
    }

    pub fn fields(&self) -> [&str; 3] {
        [&self.subject, &self.relation, &self.object]
    }
}

impl TryFrom<[String; 3]> for Triple {
    type Error = ModelError;

    fn try_from([s, r, o]: [String; 3]) -> Result<Self, Self::Error> {
        Triple::new(&s, &r, &o)
    }
}

impl From<Triple> for [String; 3] {
    fn from(t: Triple) -> Self {
        [t.subject, t.relation, t.object]
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::parse::render_triple(self))
    }
}

/// Builds a normalized [`Triple`]; see [`Triple::new`].
pub fn make_triple(subject: &str, relation: &str, object: &str) -> Result<Triple, ModelError> {
    Triple::new(subject, relation, object)
}

/// An ordered, duplicate-free collection of triples.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<Triple>", into = "Vec<Triple>")]
pub struct KnowledgeGraph {
    triples: Vec<Triple>,
}

impl KnowledgeGraph {
    pub fn new(triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut seen = BTreeSet::new();
        let triples = triples
            .into_iter()
            .filter(|t| seen.insert(t.clone()))
            .collect();
        Self { triples }
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Distinct subject and object texts, in first-appearance order.
    pub fn entities(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.triples
            .iter()
            .flat_map(|t| [t.subject(), t.object()])
            .filter(|e| seen.insert(*e))
            .collect()
    }

    /// Distinct relation texts, in first-appearance order.
    pub fn relations(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.triples
            .iter()
            .map(Triple::relation)
            .filter(|r| seen.insert(*r))
            .collect()
    }
}

impl From<Vec<Triple>> for KnowledgeGraph {
    fn from(triples: Vec<Triple>) -> Self {
        KnowledgeGraph::new(triples)
    }
}

impl From<KnowledgeGraph> for Vec<Triple> {
    fn from(kg: KnowledgeGraph) -> Self {
        kg.triples
    }
}

impl<'a> IntoIterator for &'a KnowledgeGraph {
    type Item = &'a Triple;
    type IntoIter = core::slice::Iter<'a, Triple>;

    fn into_iter(self) -> Self::IntoIter {
        self.triples.iter()
    }
}

/// Deduplicates `triples`, keeping the first occurrence of each.
pub fn make_kg(triples: impl IntoIterator<Item = Triple>) -> KnowledgeGraph {
    KnowledgeGraph::new(triples)
}

/// Binary consistency label. Positive class is [`Label::Inconsistent`].
///
/// Serialized as the integer `0` (consistent) or `1` (inconsistent).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Consistent,
    Inconsistent,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Consistent => 0,
            Label::Inconsistent => 1,
        }
    }

    pub fn from_u64(value: u64) -> Result<Self, ModelError> {
        match value {
            0 => Ok(Label::Consistent),
            1 => Ok(Label::Inconsistent),
            other => Err(ModelError::InvalidLabel(other)),
        }
    }

    pub fn is_inconsistent(self) -> bool {
        self == Label::Inconsistent
    }
}

impl From<bool> for Label {
    fn from(inconsistent: bool) -> Self {
        if inconsistent {
            Label::Inconsistent
        } else {
            Label::Consistent
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = u64::deserialize(deserializer)?;
        Label::from_u64(raw).map_err(serde::de::Error::custom)
    }
}

/// One benchmark item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawExample")]
pub struct Example {
    pub id: String,
    pub context: String,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

#[derive(Deserialize)]
struct RawExample {
    id: String,
    context: String,
    output: String,
    #[serde(default)]
    label: Option<Label>,
}

impl TryFrom<RawExample> for Example {
    type Error = ModelError;

    fn try_from(raw: RawExample) -> Result<Self, Self::Error> {
        Example::new(raw.id, raw.context, raw.output, raw.label)
    }
}

impl Example {
    pub fn new(
        id: impl Into<String>,
        context: impl Into<String>,
        output: impl Into<String>,
        label: Option<Label>,
    ) -> Result<Self, ModelError> {
        let (id, context, output) = (id.into(), context.into(), output.into());
        for (value, name) in [(&id, "id"), (&context, "context"), (&output, "output")] {
            if value.trim().is_empty() {
                return Err(ModelError::EmptyExampleField(name));
            }
        }
        Ok(Self {
            id,
            context,
            output,
            label,
        })
    }
}

/// Decision threshold, strictly inside `(0, 1)`. Defaults to 0.5.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(value: f64) -> Result<Self, ModelError> {
        if value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(ModelError::ThresholdOutOfRange(value))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// Strict comparison: a probability equal to the threshold is not flagged.
    pub fn exceeded_by(self, probability: f64) -> bool {
        probability > self.0
    }
}

impl Default for Threshold {
    fn default() -> Self {
        Self(0.5)
    }
}

impl TryFrom<f64> for Threshold {
    type Error = ModelError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Threshold::new(value)
    }
}

impl From<Threshold> for f64 {
    fn from(t: Threshold) -> Self {
        t.0
    }
}

pub(crate) fn check_probability(p: f64) -> Result<f64, ModelError> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(ModelError::ProbabilityOutOfRange(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScoredTriple")]
pub struct ScoredTriple {
    pub triple: Triple,
    prob_hallucination: f64,
}

#[derive(Deserialize)]
struct RawScoredTriple {
    triple: Triple,
    prob_hallucination: f64,
}

impl TryFrom<RawScoredTriple> for ScoredTriple {
    type Error = ModelError;

    fn try_from(raw: RawScoredTriple) -> Result<Self, Self::Error> {
        ScoredTriple::new(raw.triple, raw.prob_hallucination)
    }
}

impl ScoredTriple {
    pub fn new(triple: Triple, prob_hallucination: f64) -> Result<Self, ModelError> {
        Ok(Self {
            triple,
            prob_hallucination: check_probability(prob_hallucination)?,
        })
    }

    pub fn prob_hallucination(&self) -> f64 {
        self.prob_hallucination
    }
}

/// Detection method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "grapheval")]
    GraphEval,
    #[serde(rename = "raw-nli")]
    RawNli,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::GraphEval => "grapheval",
            Method::RawNli => "raw-nli",
        }
    }
}

/// Correction method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Corrector {
    #[serde(rename = "graphcorrect")]
    GraphCorrect,
    #[serde(rename = "direct")]
    Direct,
}

impl Corrector {
    pub fn as_str(self) -> &'static str {
        match self {
            Corrector::GraphCorrect => "graphcorrect",
            Corrector::Direct => "direct",
        }
    }
}

/// Verdict for one example plus the evidence behind it.
///
/// `flagged` and `verdict` are derived from the scores and the threshold by
/// the constructors; [`DetectionReport::is_consistent`] re-derives them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub example_id: String,
    pub method: Method,
    pub verdict: Label,
    pub threshold: Threshold,
    /// Whole-output hallucination probability (raw-NLI only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_score: Option<f64>,
    pub scored_triples: Vec<ScoredTriple>,
    pub flagged: Vec<ScoredTriple>,
    pub warnings: Vec<String>,
}

impl DetectionReport {
    /// GraphEval aggregation: flagged are the triples strictly above the
    /// threshold, in scoring order; the verdict is 1 iff any are flagged.
    pub fn from_scored(
        example_id: impl Into<String>,
        scored_triples: Vec<ScoredTriple>,
        threshold: Threshold,
        warnings: Vec<String>,
    ) -> Self {
        let flagged: Vec<ScoredTriple> = scored_triples
            .iter()
            .filter(|s| threshold.exceeded_by(s.prob_hallucination()))
            .cloned()
            .collect();
        Self {
            example_id: example_id.into(),
            method: Method::GraphEval,
            verdict: Label::from(!flagged.is_empty()),
            threshold,
            output_score: None,
            scored_triples,
            flagged,
            warnings,
        }
    }

    /// Raw-NLI verdict from a single whole-output probability.
    pub fn from_output_score(
        example_id: impl Into<String>,
        score: f64,
        threshold: Threshold,
        warnings: Vec<String>,
    ) -> Result<Self, ModelError> {
        let score = check_probability(score)?;
        Ok(Self {
            example_id: example_id.into(),
            method: Method::RawNli,
            verdict: Label::from(threshold.exceeded_by(score)),
            threshold,
            output_score: Some(score),
            scored_triples: Vec::new(),
            flagged: Vec::new(),
            warnings,
        })
    }

    /// Whether `flagged` and `verdict` agree with the stored scores.
    pub fn is_consistent(&self) -> bool {
        match self.method {
            Method::GraphEval => {
                let rebuilt = DetectionReport::from_scored(
                    self.example_id.clone(),
                    self.scored_triples.clone(),
                    self.threshold,
                    Vec::new(),
                );
                self.output_score.is_none()
                    && rebuilt.flagged == self.flagged
                    && rebuilt.verdict == self.verdict
            }
            Method::RawNli => match self.output_score {
                Some(score) => {
                    self.scored_triples.is_empty()
                        && self.flagged.is_empty()
                        && Label::from(self.threshold.exceeded_by(score)) == self.verdict
                }
                None => false,
            },
        }
    }
}

/// What happened to one flagged triple during GraphCorrect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "detail")]
pub enum StepOutcome {
    /// The corrected triple was spliced into the output.
    Spliced,
    /// The corrected triple equals the original; no splice was requested.
    Unchanged,
    /// Correction or splicing failed; the triple was skipped.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub old: Triple,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new: Option<Triple>,
    pub outcome: StepOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub example_id: String,
    pub corrector: Corrector,
    pub original_output: String,
    pub corrected_output: String,
    /// Per-triple steps in the order applied (empty for the direct corrector).
    pub trace: Vec<TraceEntry>,
    /// Set once the corrected output has been re-detected.
    #[serde(default)]
    pub believed_corrected: Option<bool>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn t(s: &str, r: &str, o: &str) -> Triple {
        make_triple(s, r, o).unwrap()
    }

    #[test]
    fn make_triple_keeps_fields() {
        let triple = t(
            "Italy",
            "had 3.6x times more cases of coronavirus than",
            "China",
        );
        assert_eq!(triple.subject(), "Italy");
        assert_eq!(
            triple.relation(),
            "had 3.6x times more cases of coronavirus than"
        );
        assert_eq!(triple.object(), "China");
    }

    #[test]
    fn make_triple_trims() {
        assert_eq!(t("  a ", "b", "c"), t("a", "b", "c"));
        assert_eq!(t("  a ", "b", "c").subject(), "a");
    }

    #[test]
    fn make_triple_rejects_empty() {
        assert_eq!(
            make_triple("a", "", "c"),
            Err(ModelError::EmptyField("relation"))
        );
        assert_eq!(
            make_triple("   ", "b", "c"),
            Err(ModelError::EmptyField("subject"))
        );
        assert_eq!(
            make_triple("a", "b", "\n"),
            Err(ModelError::EmptyField("object"))
        );
    }

    #[test]
    fn triple_comparison_is_case_sensitive() {
        assert_ne!(t("Paris", "in", "France"), t("paris", "in", "France"));
    }

    #[test]
    fn make_kg_dedups_in_order() {
        let (a, b) = (t("a", "b", "c"), t("d", "e", "f"));
        let kg = make_kg(vec![a.clone(), b.clone(), a.clone()]);
        assert_eq!(kg.triples(), &[a.clone(), b.clone()]);
        assert!(make_kg(Vec::new()).is_empty());
        assert_eq!(make_kg(vec![a.clone()]).triples(), &[a]);
        assert_eq!(make_kg(kg.triples().to_vec()), kg);
    }

    #[test]
    fn entity_and_relation_sets() {
        let kg = make_kg(vec![t("a", "r", "b"), t("b", "r", "c"), t("a", "s", "c")]);
        assert_eq!(kg.entities(), vec!["a", "b", "c"]);
        assert_eq!(kg.relations(), vec!["r", "s"]);
    }

    #[test]
    fn triple_serde_validates() {
        let triple: Triple = serde_json::from_str(r#"[" x ", "y", "z"]"#).unwrap();
        assert_eq!(triple, t("x", "y", "z"));
        assert_eq!(serde_json::to_string(&triple).unwrap(), r#"["x","y","z"]"#);
        assert!(serde_json::from_str::<Triple>(r#"["x", "", "z"]"#).is_err());
        assert!(serde_json::from_str::<Triple>(r#"["x", "y"]"#).is_err());
    }

    #[test]
    fn kg_deserialization_dedups() {
        let kg: KnowledgeGraph =
            serde_json::from_str(r#"[["a","b","c"],["a","b","c"],["d","e","f"]]"#).unwrap();
        assert_eq!(kg.len(), 2);
    }

    #[test]
    fn label_serde() {
        assert_eq!(serde_json::to_string(&Label::Inconsistent).unwrap(), "1");
        assert_eq!(serde_json::from_str::<Label>("0").unwrap(), Label::Consistent);
        assert!(serde_json::from_str::<Label>("2").is_err());
    }

    #[test]
    fn example_validation() {
        assert!(Example::new("id", "ctx", "out", None).is_ok());
        assert_eq!(
            Example::new("id", "", "out", None),
            Err(ModelError::EmptyExampleField("context"))
        );
        let parsed: Result<Example, _> =
            serde_json::from_str(r#"{"id":"a","context":"c","output":" ","label":1}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn threshold_bounds() {
        assert!(Threshold::new(0.5).is_ok());
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(Threshold::new(bad).is_err(), "{bad}");
        }
        assert!(!Threshold::default().exceeded_by(0.5));
        assert!(Threshold::default().exceeded_by(0.500_000_1));
    }

    #[test]
    fn scored_triple_range() {
        assert!(ScoredTriple::new(t("a", "b", "c"), 1.0).is_ok());
        assert!(ScoredTriple::new(t("a", "b", "c"), 0.0).is_ok());
        assert!(ScoredTriple::new(t("a", "b", "c"), 1.01).is_err());
        assert!(ScoredTriple::new(t("a", "b", "c"), f64::NAN).is_err());
    }

    #[test]
    fn report_flags_and_verdict() {
        let scored = vec![
            ScoredTriple::new(t("a", "b", "c"), 0.2).unwrap(),
            ScoredTriple::new(t("d", "e", "f"), 0.9).unwrap(),
            ScoredTriple::new(t("g", "h", "i"), 0.5).unwrap(),
        ];
        let report = DetectionReport::from_scored("x", scored, Threshold::default(), vec![]);
        assert_eq!(report.verdict, Label::Inconsistent);
        assert_eq!(report.flagged.len(), 1);
        assert_eq!(report.flagged[0].triple, t("d", "e", "f"));
        assert!(report.is_consistent());

        let mut tampered = report.clone();
        tampered.flagged.clear();
        assert!(!tampered.is_consistent());
    }

    #[test]
    fn raw_report_checks_range() {
        assert!(DetectionReport::from_output_score("x", 1.2, Threshold::default(), vec![]).is_err());
        let report =
            DetectionReport::from_output_score("x", 0.5, Threshold::default(), vec![]).unwrap();
        assert_eq!(report.verdict, Label::Consistent);
        assert!(report.is_consistent());
    }
}

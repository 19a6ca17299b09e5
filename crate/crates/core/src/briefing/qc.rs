//! Brief quality rubric and inter-annotator agreement.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QcError {
    #[error("no scores to aggregate")]
    Empty,
    #[error("score level {0} is outside 0..=2")]
    Level(u8),
    #[error("annotator lists differ at item {index}: {left} vs {right}")]
    Mismatch {
        index: usize,
        left: String,
        right: String,
    },
    #[error("annotator lists have different lengths ({0} vs {1})")]
    Length(usize, usize),
    #[error("expected exactly two annotators, found {0:?}")]
    Annotators(Vec<String>),
    #[error("annotation file error: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    DateAccuracy,
    Coverage,
    BiasAwareness,
    SourceDiversity,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion::DateAccuracy,
        Criterion::Coverage,
        Criterion::BiasAwareness,
        Criterion::SourceDiversity,
    ];
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::DateAccuracy => "date_accuracy",
            Criterion::Coverage => "coverage",
            Criterion::BiasAwareness => "bias_awareness",
            Criterion::SourceDiversity => "source_diversity",
        })
    }
}

/// A three-level rubric score: 0 not satisfied, 1 partial, 2 full.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Level(u8);

impl Level {
    pub fn new(v: u8) -> Result<Self, QcError> {
        if v > 2 {
            return Err(QcError::Level(v));
        }
        Ok(Self(v))
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Level {
    type Error = QcError;
    fn try_from(v: u8) -> Result<Self, QcError> {
        Level::new(v)
    }
}

impl From<Level> for u8 {
    fn from(l: Level) -> u8 {
        l.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BriefRef {
    pub symbol: String,
    pub date: NaiveDate,
}

impl fmt::Display for BriefRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.symbol, self.date)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityScore {
    pub brief_ref: BriefRef,
    pub date_accuracy: Level,
    pub coverage: Level,
    pub bias_awareness: Level,
    pub source_diversity: Level,
    pub annotator: String,
}

impl QualityScore {
    pub fn level(&self, criterion: Criterion) -> Level {
        match criterion {
            Criterion::DateAccuracy => self.date_accuracy,
            Criterion::Coverage => self.coverage,
            Criterion::BiasAwareness => self.bias_awareness,
            Criterion::SourceDiversity => self.source_diversity,
        }
    }
}

/// Per-criterion mean of rubric levels, each in `[0, 2]`.
pub type CriterionMeans = BTreeMap<Criterion, f64>;

pub fn score_brief(scores: &[QualityScore]) -> Result<CriterionMeans, QcError> {
    if scores.is_empty() {
        return Err(QcError::Empty);
    }
    let n = scores.len() as f64;
    Ok(Criterion::ALL
        .iter()
        .map(|&c| {
            let total: u32 = scores.iter().map(|s| u32::from(s.level(c).value())).sum();
            (c, f64::from(total) / n)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub per_criterion_agreement: BTreeMap<Criterion, f64>,
    pub n_items: usize,
}

impl AgreementReport {
    pub fn get(&self, criterion: Criterion) -> f64 {
        self.per_criterion_agreement[&criterion]
    }
}

/// Exact-match percent agreement between two annotators who scored the
/// same briefs in the same order.
pub fn agreement(a: &[QualityScore], b: &[QualityScore]) -> Result<AgreementReport, QcError> {
    if a.len() != b.len() {
        return Err(QcError::Length(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(QcError::Empty);
    }
    for (index, (x, y)) in a.iter().zip(b).enumerate() {
        if x.brief_ref != y.brief_ref {
            return Err(QcError::Mismatch {
                index,
                left: x.brief_ref.to_string(),
                right: y.brief_ref.to_string(),
            });
        }
    }
    let n = a.len();
    let per_criterion_agreement = Criterion::ALL
        .iter()
        .map(|&c| {
            let matches = a.iter().zip(b).filter(|(x, y)| x.level(c) == y.level(c)).count();
            (c, matches as f64 / n as f64)
        })
        .collect();
    Ok(AgreementReport {
        per_criterion_agreement,
        n_items: n,
    })
}

#[derive(Debug, Deserialize)]
struct AnnotationRow {
    symbol: String,
    date: NaiveDate,
    annotator: String,
    date_accuracy: u8,
    coverage: u8,
    bias_awareness: u8,
    source_diversity: u8,
}

/// Reads `symbol,date,annotator,date_accuracy,coverage,bias_awareness,source_diversity`.
pub fn read_annotations(path: &Path) -> Result<Vec<QualityScore>, QcError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| QcError::Csv(e.to_string()))?;
    reader
        .deserialize::<AnnotationRow>()
        .map(|row| {
            let row = row.map_err(|e| QcError::Csv(e.to_string()))?;
            Ok(QualityScore {
                brief_ref: BriefRef {
                    symbol: row.symbol.trim().to_uppercase(),
                    date: row.date,
                },
                date_accuracy: Level::new(row.date_accuracy)?,
                coverage: Level::new(row.coverage)?,
                bias_awareness: Level::new(row.bias_awareness)?,
                source_diversity: Level::new(row.source_diversity)?,
                annotator: row.annotator,
            })
        })
        .collect()
}

/// Splits a two-annotator file into aligned lists ordered by brief.
pub fn pair_annotators(scores: &[QualityScore]) -> Result<(Vec<QualityScore>, Vec<QualityScore>), QcError> {
    let mut by_annotator: BTreeMap<&str, BTreeMap<&BriefRef, &QualityScore>> = BTreeMap::new();
    for s in scores {
        by_annotator
            .entry(s.annotator.as_str())
            .or_default()
            .insert(&s.brief_ref, s);
    }
    if by_annotator.len() != 2 {
        return Err(QcError::Annotators(
            by_annotator.keys().map(|s| s.to_string()).collect(),
        ));
    }
    let mut lists = by_annotator
        .into_values()
        .map(|m| m.into_values().cloned().collect::<Vec<_>>());
    let a = lists.next().expect("two annotators");
    let b = lists.next().expect("two annotators");
    Ok((a, b))
}

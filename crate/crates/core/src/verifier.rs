//! Weighted nearest-prototype classification and verdict assignment.
//!
//! The distance from a user to specialty `j` is
//!
//! ```text
//! rho_j = sqrt( sum_i (ref[i][j] - user[i])^2 * w[i] )
//! ```
//!
//! The nearest prototype is the predicted specialty. A user whose nearest
//! prototype is still farther than that specialty's acceptance radius is
//! treated as not writing like any medical specialist.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::corpus::UserProfile;
use crate::indicators::{IndicatorVector, LabeledVector, ReferenceMatrix};
use crate::lexicon::TrackAnalysis;
use crate::stats;
use crate::weighting::{WeightVector, DEFAULT_CAP, DEFAULT_EPSILON};

pub const ATTRIBUTE_NAME: &str = "medical_specialty";
pub const NORMALIZATION: &str = "per_1000_tokens";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerifyError {
    #[error("indicator vector has length {actual}, model expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("unknown specialty '{0}'")]
    UnknownSpecialty(String),
    #[error("training set is empty")]
    EmptyTraining,
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// The trained artifact: prototypes, weights and acceptance radii for one
/// community.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    pub model_version: String,
    pub community_id: String,
    pub lexicon_version: String,
    pub matrix: ReferenceMatrix,
    pub weights: WeightVector,
    pub acceptance_radii: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    model_version: String,
    community_id: String,
    attribute_name: String,
    lexicon_version: String,
    indicator_ids: Vec<String>,
    specialty_ids: Vec<String>,
    reference_matrix: Vec<Vec<f64>>,
    weights: Vec<f64>,
    acceptance_radii: BTreeMap<String, f64>,
    normalization: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    specialty_support: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weighting: Option<WeightingParams>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightingParams {
    epsilon: f64,
    cap: f64,
}

impl ReferenceModel {
    pub fn new(
        model_version: impl Into<String>,
        community_id: impl Into<String>,
        lexicon_version: impl Into<String>,
        matrix: ReferenceMatrix,
        weights: WeightVector,
        acceptance_radii: BTreeMap<String, f64>,
    ) -> Result<Self, VerifyError> {
        let model = Self {
            model_version: model_version.into(),
            community_id: community_id.into(),
            lexicon_version: lexicon_version.into(),
            matrix,
            weights,
            acceptance_radii,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), VerifyError> {
        let invalid = |m: String| Err(VerifyError::InvalidModel(m));
        if self.weights.len() != self.matrix.n_indicators() {
            return invalid(format!(
                "{} weights for {} indicators",
                self.weights.len(),
                self.matrix.n_indicators()
            ));
        }
        if self
            .weights
            .weights
            .iter()
            .any(|w| !w.is_finite() || *w < 0.0)
        {
            return invalid("weights must be finite and non-negative".into());
        }
        for s in self.matrix.specialty_ids() {
            match self.acceptance_radii.get(s) {
                None => return invalid(format!("no acceptance radius for specialty '{s}'")),
                Some(r) if !r.is_finite() || *r < 0.0 => {
                    return invalid(format!("bad acceptance radius for specialty '{s}'"))
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = self
            .acceptance_radii
            .keys()
            .find(|k| self.matrix.specialty_index(k).is_none())
        {
            return invalid(format!("acceptance radius for unknown specialty '{extra}'"));
        }
        Ok(())
    }

    pub fn specialty_ids(&self) -> &[String] {
        self.matrix.specialty_ids()
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            model_version: self.model_version.clone(),
            community_id: self.community_id.clone(),
            attribute_name: ATTRIBUTE_NAME.to_string(),
            lexicon_version: self.lexicon_version.clone(),
            indicator_ids: self.matrix.indicator_ids().to_vec(),
            specialty_ids: self.matrix.specialty_ids().to_vec(),
            reference_matrix: self.matrix.rows(),
            weights: self.weights.weights.clone(),
            acceptance_radii: self.acceptance_radii.clone(),
            normalization: NORMALIZATION.to_string(),
            specialty_support: Some(self.matrix.per_column_support().to_vec()),
            weighting: Some(WeightingParams {
                epsilon: self.weights.epsilon,
                cap: self.weights.cap,
            }),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("model serializes");
        out.push('\n');
        out
    }

    pub fn from_json(source: &[u8]) -> Result<Self, VerifyError> {
        let file: ModelFile =
            serde_json::from_slice(source).map_err(|e| VerifyError::InvalidModel(e.to_string()))?;
        if file.attribute_name != ATTRIBUTE_NAME {
            return Err(VerifyError::InvalidModel(format!(
                "unsupported attribute '{}'",
                file.attribute_name
            )));
        }
        if file.normalization != NORMALIZATION {
            return Err(VerifyError::InvalidModel(format!(
                "unsupported normalization '{}'",
                file.normalization
            )));
        }
        let support = file
            .specialty_support
            .unwrap_or_else(|| vec![1; file.specialty_ids.len()]);
        let matrix = ReferenceMatrix::from_rows(
            file.indicator_ids,
            file.specialty_ids,
            &file.reference_matrix,
            support,
        )
        .map_err(VerifyError::InvalidModel)?;
        let params = file.weighting.unwrap_or(WeightingParams {
            epsilon: DEFAULT_EPSILON,
            cap: DEFAULT_CAP,
        });
        let weights = WeightVector {
            weights: file.weights,
            epsilon: params.epsilon,
            cap: params.cap,
        };
        Self::new(
            file.model_version,
            file.community_id,
            file.lexicon_version,
            matrix,
            weights,
            file.acceptance_radii,
        )
    }
}

fn weighted_distance(
    matrix: &ReferenceMatrix,
    column: usize,
    user: &[f64],
    weights: &[f64],
) -> f64 {
    let mut acc = stats::CompensatedSum::default();
    for (i, (&u, &w)) in user.iter().zip(weights).enumerate() {
        let d = matrix.get(i, column) - u;
        acc.add(d * d * w);
    }
    acc.value().max(0.0).sqrt()
}

fn check_dimension(user: &IndicatorVector, model: &ReferenceModel) -> Result<(), VerifyError> {
    if user.values.len() != model.matrix.n_indicators() {
        return Err(VerifyError::DimensionMismatch {
            expected: model.matrix.n_indicators(),
            actual: user.values.len(),
        });
    }
    Ok(())
}

/// Weighted Euclidean distance from a user to one specialty prototype.
pub fn distance(
    user: &IndicatorVector,
    model: &ReferenceModel,
    specialty_id: &str,
) -> Result<f64, VerifyError> {
    check_dimension(user, model)?;
    let j = model
        .matrix
        .specialty_index(specialty_id)
        .ok_or_else(|| VerifyError::UnknownSpecialty(specialty_id.to_string()))?;
    Ok(weighted_distance(
        &model.matrix,
        j,
        &user.values,
        &model.weights.weights,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub user_id: String,
    pub distances: BTreeMap<String, f64>,
    pub best: String,
    pub best_distance: f64,
    pub margin: f64,
    pub confidence: f64,
}

/// Picks the nearest prototype. Ties go to the earlier specialty column.
pub fn classify(user: &IndicatorVector, model: &ReferenceModel) -> Result<Prediction, VerifyError> {
    check_dimension(user, model)?;
    let ids = model.matrix.specialty_ids();
    let dists: Vec<f64> = (0..ids.len())
        .map(|j| weighted_distance(&model.matrix, j, &user.values, &model.weights.weights))
        .collect();
    let mut best = 0;
    for (j, &d) in dists.iter().enumerate().skip(1) {
        if d < dists[best] {
            best = j;
        }
    }
    let second = dists
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != best)
        .map(|(_, &d)| d)
        .min_by(f64::total_cmp);
    let best_distance = dists[best];
    let (margin, confidence) = match second {
        Some(s) => {
            let margin = (s - best_distance).max(0.0);
            (margin, margin / (best_distance + s + 1e-12))
        }
        None => (0.0, 0.0),
    };
    Ok(Prediction {
        user_id: user.user_id.clone(),
        distances: ids.iter().cloned().zip(dists).collect(),
        best: ids[best].clone(),
        best_distance,
        margin,
        confidence,
    })
}

/// Acceptance radius per specialty: mean plus `radius_multiplier` standard
/// deviations of training members' distances to their own prototype. Classes
/// with fewer than three members use statistics pooled over all members.
pub fn calibrate_radii(
    training: &[LabeledVector],
    matrix: &ReferenceMatrix,
    weights: &WeightVector,
    radius_multiplier: f64,
) -> Result<BTreeMap<String, f64>, VerifyError> {
    if training.is_empty() {
        return Err(VerifyError::EmptyTraining);
    }
    let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); matrix.n_specialties()];
    for (vector, specialty) in training {
        if vector.values.len() != matrix.n_indicators() {
            return Err(VerifyError::DimensionMismatch {
                expected: matrix.n_indicators(),
                actual: vector.values.len(),
            });
        }
        let j = matrix
            .specialty_index(specialty)
            .ok_or_else(|| VerifyError::UnknownSpecialty(specialty.clone()))?;
        per_class[j].push(weighted_distance(
            matrix,
            j,
            &vector.values,
            &weights.weights,
        ));
    }
    for d in &mut per_class {
        d.sort_by(f64::total_cmp);
    }
    let mut pooled: Vec<f64> = per_class.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    let radius = |values: &[f64]| {
        let (mean, std) = stats::mean_std(values);
        (mean + radius_multiplier * std).max(0.0)
    };
    let pooled_radius = radius(&pooled);
    Ok(matrix
        .specialty_ids()
        .iter()
        .zip(&per_class)
        .map(|(id, d)| {
            let r = if d.len() >= 3 {
                radius(d)
            } else {
                pooled_radius
            };
            (id.clone(), r)
        })
        .collect())
}

/// Content minimums for verification and the acceptance-radius multiplier
/// used at training time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub min_tokens: usize,
    pub min_posts: usize,
    pub radius_multiplier: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            min_tokens: 500,
            min_posts: 10,
            radius_multiplier: DEFAULT_RADIUS_MULTIPLIER,
        }
    }
}

impl Thresholds {
    pub fn is_sufficient(&self, token_count: usize, post_count: usize) -> bool {
        token_count >= self.min_tokens && post_count >= self.min_posts
    }
}

pub const DEFAULT_RADIUS_MULTIPLIER: f64 = 2.0;

/// Verification outcome. Declaration order is the reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Verified,
    IncorrectClaim,
    MissingClaim,
    NonMedical,
    Unverified,
}

impl Outcome {
    pub const ALL: [Outcome; 5] = [
        Outcome::Verified,
        Outcome::IncorrectClaim,
        Outcome::MissingClaim,
        Outcome::NonMedical,
        Outcome::Unverified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Verified => "Verified",
            Self::IncorrectClaim => "IncorrectClaim",
            Self::MissingClaim => "MissingClaim",
            Self::NonMedical => "NonMedical",
            Self::Unverified => "Unverified",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| format!("unknown outcome '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub user_id: String,
    pub outcome: Outcome,
    pub claimed_raw: Option<String>,
    pub claimed_id: Option<String>,
    pub predicted_id: Option<String>,
    pub best_distance: Option<f64>,
    pub margin: Option<f64>,
    pub confidence: Option<f64>,
    pub token_count: usize,
    pub post_count: usize,
}

/// Maps free-text specialty claims to specialty ids. Keys are compared after
/// [`normalize_claim`]; a claim that spells a known specialty id resolves to
/// it without an explicit alias.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AliasTable {
    aliases: HashMap<String, String>,
}

/// NFC, lowercase, trimmed, inner whitespace collapsed to single spaces.
pub fn normalize_claim(raw: &str) -> String {
    let lowered = raw.nfc().collect::<String>().to_lowercase();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl AliasTable {
    pub fn new<I, K, V>(entries: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        Self {
            aliases: entries
                .into_iter()
                .map(|(k, v)| (normalize_claim(k.as_ref()), v.into()))
                .collect(),
        }
    }

    /// Parses `aliases.json`, an object mapping claim strings to specialty ids.
    pub fn from_json(source: &[u8]) -> Result<Self, serde_json::Error> {
        let map: BTreeMap<String, String> = serde_json::from_slice(source)?;
        Ok(Self::new(map))
    }

    pub fn len(&self) -> usize {
        self.aliases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aliases.is_empty()
    }

    /// Alias targets that are not specialties of `model`.
    pub fn unknown_targets(&self, model: &ReferenceModel) -> Vec<String> {
        let mut unknown: Vec<String> = self
            .aliases
            .values()
            .filter(|v| model.matrix.specialty_index(v).is_none())
            .cloned()
            .collect();
        unknown.sort();
        unknown.dedup();
        unknown
    }

    pub fn resolve(&self, raw: &str, model: &ReferenceModel) -> Option<String> {
        let key = normalize_claim(raw);
        if let Some(id) = self.aliases.get(&key) {
            return model.matrix.specialty_index(id).map(|_| id.clone());
        }
        model
            .specialty_ids()
            .iter()
            .find(|id| normalize_claim(id) == key)
            .cloned()
    }
}

/// Assigns the verification outcome. Rules, first match wins:
///
/// 1. not enough content (or no prediction) → `Unverified`
/// 2. nearest prototype beyond its acceptance radius → `NonMedical`
/// 3. no claim in the profile → `MissingClaim`
/// 4. claim resolves to the predicted specialty → `Verified`
/// 5. claim resolves to another specialty, or to none → `IncorrectClaim`
pub fn categorize(
    profile: Option<&UserProfile>,
    analysis: &TrackAnalysis,
    prediction: Option<&Prediction>,
    model: &ReferenceModel,
    thresholds: &Thresholds,
    aliases: &AliasTable,
) -> Verdict {
    let claimed_raw = profile.and_then(|p| p.claimed_specialty_raw.clone());
    let claimed_id = claimed_raw
        .as_deref()
        .and_then(|raw| aliases.resolve(raw, model));
    let mut verdict = Verdict {
        user_id: analysis.user_id.clone(),
        outcome: Outcome::Unverified,
        claimed_raw,
        claimed_id,
        predicted_id: None,
        best_distance: None,
        margin: None,
        confidence: None,
        token_count: analysis.token_count,
        post_count: analysis.post_count,
    };
    let prediction = match prediction {
        Some(p) if thresholds.is_sufficient(analysis.token_count, analysis.post_count) => p,
        _ => return verdict,
    };
    verdict.predicted_id = Some(prediction.best.clone());
    verdict.best_distance = Some(prediction.best_distance);
    verdict.margin = Some(prediction.margin);
    verdict.confidence = Some(prediction.confidence);

    let radius = model
        .acceptance_radii
        .get(&prediction.best)
        .copied()
        .unwrap_or(f64::INFINITY);
    let has_claim = verdict
        .claimed_raw
        .as_deref()
        .is_some_and(|c| !c.trim().is_empty());
    verdict.outcome = if prediction.best_distance > radius {
        Outcome::NonMedical
    } else if !has_claim {
        Outcome::MissingClaim
    } else if verdict.claimed_id.as_deref() == Some(prediction.best.as_str()) {
        Outcome::Verified
    } else {
        Outcome::IncorrectClaim
    };
    verdict
}

//! End-to-end training and verification over an in-memory corpus.

use std::collections::HashSet;

use crate::corpus::{Corpus, Label};
use crate::indicators::{build_reference_matrix, compute_indicator_vector, LabeledVector};
use crate::lexicon::{scan_track, MarkerLexicon};
use crate::verifier::{
    calibrate_radii, categorize, classify, AliasTable, ReferenceModel, Thresholds, Verdict,
};
use crate::weighting::compute_weights;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("labeled user '{0}' does not appear in the corpus")]
    UnknownLabeledUser(String),
    #[error("no labeled users")]
    NoLabels,
    #[error("specialty '{0}' has no labeled user with enough content")]
    SpecialtyLost(String),
    #[error("model was trained with lexicon version '{model}', but lexicon version '{lexicon}' was supplied")]
    LexiconVersionMismatch { model: String, lexicon: String },
    #[error("model indicators {model:?} do not match lexicon groups {lexicon:?}")]
    IndicatorMismatch {
        model: Vec<String>,
        lexicon: Vec<String>,
    },
    #[error(transparent)]
    Indicators(#[from] crate::indicators::IndicatorError),
    #[error(transparent)]
    Weighting(#[from] crate::weighting::WeightingError),
    #[error(transparent)]
    Verify(#[from] crate::verifier::VerifyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub thresholds: Thresholds,
    pub epsilon: f64,
    pub cap: f64,
    pub model_version: String,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            thresholds: Thresholds::default(),
            epsilon: crate::weighting::DEFAULT_EPSILON,
            cap: crate::weighting::DEFAULT_CAP,
            model_version: "1".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: ReferenceModel,
    pub training: Vec<LabeledVector>,
    /// Labeled users left out for lack of content.
    pub excluded: Vec<String>,
}

/// Builds indicator vectors for the labeled users, in label order.
pub fn training_vectors(
    corpus: &Corpus,
    labels: &[Label],
    lexicon: &MarkerLexicon,
    thresholds: &Thresholds,
) -> Result<(Vec<LabeledVector>, Vec<String>), PipelineError> {
    let mut training = Vec::with_capacity(labels.len());
    let mut excluded = Vec::new();
    for label in labels {
        let track = corpus
            .tracks
            .get(&label.user_id)
            .ok_or_else(|| PipelineError::UnknownLabeledUser(label.user_id.clone()))?;
        let analysis = scan_track(track, lexicon);
        if !thresholds.is_sufficient(analysis.token_count, analysis.post_count) {
            excluded.push(label.user_id.clone());
            continue;
        }
        match compute_indicator_vector(&analysis, lexicon) {
            Ok(v) => training.push((v, label.specialty_id.clone())),
            Err(_) => excluded.push(label.user_id.clone()),
        }
    }
    Ok((training, excluded))
}

pub fn train(
    corpus: &Corpus,
    labels: &[Label],
    lexicon: &MarkerLexicon,
    params: &TrainParams,
) -> Result<TrainOutput, PipelineError> {
    if labels.is_empty() {
        return Err(PipelineError::NoLabels);
    }
    let (training, excluded) = training_vectors(corpus, labels, lexicon, &params.thresholds)?;
    let kept: HashSet<&str> = training.iter().map(|(_, s)| s.as_str()).collect();
    if let Some(lost) = labels
        .iter()
        .find(|l| !kept.contains(l.specialty_id.as_str()))
    {
        return Err(PipelineError::SpecialtyLost(lost.specialty_id.clone()));
    }
    let matrix = build_reference_matrix(&lexicon.group_ids(), &training)?;
    let weights = compute_weights(&training, params.epsilon, params.cap)?;
    let radii = calibrate_radii(
        &training,
        &matrix,
        &weights,
        params.thresholds.radius_multiplier,
    )?;
    let model = ReferenceModel::new(
        params.model_version.clone(),
        corpus.community_id.clone(),
        lexicon.lexicon_version.clone(),
        matrix,
        weights,
        radii,
    )?;
    Ok(TrainOutput {
        model,
        training,
        excluded,
    })
}

pub fn check_compatibility(
    model: &ReferenceModel,
    lexicon: &MarkerLexicon,
) -> Result<(), PipelineError> {
    if model.lexicon_version != lexicon.lexicon_version {
        return Err(PipelineError::LexiconVersionMismatch {
            model: model.lexicon_version.clone(),
            lexicon: lexicon.lexicon_version.clone(),
        });
    }
    let groups = lexicon.group_ids();
    if model.matrix.indicator_ids() != groups.as_slice() {
        return Err(PipelineError::IndicatorMismatch {
            model: model.matrix.indicator_ids().to_vec(),
            lexicon: groups,
        });
    }
    Ok(())
}

/// One verdict per user in the corpus, sorted by user id.
pub fn verify(
    corpus: &Corpus,
    model: &ReferenceModel,
    lexicon: &MarkerLexicon,
    aliases: &AliasTable,
    thresholds: &Thresholds,
) -> Result<Vec<Verdict>, PipelineError> {
    check_compatibility(model, lexicon)?;
    let profiles = corpus.profile_index();
    let mut verdicts = Vec::with_capacity(corpus.tracks.len());
    for (user_id, track) in &corpus.tracks {
        let analysis = scan_track(track, lexicon);
        let prediction = if thresholds.is_sufficient(analysis.token_count, analysis.post_count) {
            match compute_indicator_vector(&analysis, lexicon) {
                Ok(v) => Some(classify(&v, model)?),
                Err(_) => None,
            }
        } else {
            None
        };
        verdicts.push(categorize(
            profiles.get(user_id.as_str()).copied(),
            &analysis,
            prediction.as_ref(),
            model,
            thresholds,
            aliases,
        ));
    }
    Ok(verdicts)
}

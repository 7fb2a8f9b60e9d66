//! Indicator vectors and the per-specialty reference matrix.
//!
//! An indicator is the rate of a marker group in a user's content, in hits
//! per 1000 tokens. The reference matrix has one row per indicator and one
//! column per specialty; each column is the mean indicator vector of the
//! trusted training users with that specialty.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::lexicon::{MarkerLexicon, TrackAnalysis};
use crate::stats::CompensatedSum;

pub const TOKENS_PER_UNIT: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndicatorError {
    #[error("user '{user_id}' has no tokens to compute indicators from")]
    InsufficientContent { user_id: String },
    #[error("training set is empty")]
    EmptyTraining,
    #[error("indicator vector of user '{user_id}' has length {actual}, expected {expected}")]
    LengthMismatch {
        user_id: String,
        expected: usize,
        actual: usize,
    },
    #[error("unknown specialty '{0}'")]
    UnknownSpecialty(String),
    #[error("unknown indicator '{0}'")]
    UnknownIndicator(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorVector {
    pub user_id: String,
    pub values: Vec<f64>,
    pub token_count: usize,
    pub post_count: usize,
}

/// A training vector with its trusted specialty label.
pub type LabeledVector = (IndicatorVector, String);

pub fn compute_indicator_vector(
    analysis: &TrackAnalysis,
    lexicon: &MarkerLexicon,
) -> Result<IndicatorVector, IndicatorError> {
    if analysis.token_count == 0 {
        return Err(IndicatorError::InsufficientContent {
            user_id: analysis.user_id.clone(),
        });
    }
    let tokens = analysis.token_count as f64;
    let values = analysis
        .hits_in_order(lexicon)
        .into_iter()
        .map(|h| h as f64 / tokens * TOKENS_PER_UNIT)
        .collect();
    Ok(IndicatorVector {
        user_id: analysis.user_id.clone(),
        values,
        token_count: analysis.token_count,
        post_count: analysis.post_count,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMatrix {
    indicator_ids: Vec<String>,
    specialty_ids: Vec<String>,
    /// Row-major, `indicator_ids.len() × specialty_ids.len()`.
    entries: Vec<f64>,
    per_column_support: Vec<usize>,
}

impl ReferenceMatrix {
    /// Assembles a matrix from explicit rows. Used when loading a model.
    pub fn from_rows(
        indicator_ids: Vec<String>,
        specialty_ids: Vec<String>,
        rows: &[Vec<f64>],
        per_column_support: Vec<usize>,
    ) -> Result<Self, String> {
        if indicator_ids.is_empty() || specialty_ids.is_empty() {
            return Err("matrix needs at least one indicator and one specialty".into());
        }
        if rows.len() != indicator_ids.len() {
            return Err(format!(
                "matrix has {} rows, expected {}",
                rows.len(),
                indicator_ids.len()
            ));
        }
        if per_column_support.len() != specialty_ids.len() {
            return Err("support counts do not match specialty count".into());
        }
        if per_column_support.contains(&0) {
            return Err("every specialty needs at least one training user".into());
        }
        let mut entries = Vec::with_capacity(rows.len() * specialty_ids.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != specialty_ids.len() {
                return Err(format!(
                    "matrix row {i} has {} entries, expected {}",
                    row.len(),
                    specialty_ids.len()
                ));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(format!("matrix row {i} has a non-finite entry"));
            }
            entries.extend_from_slice(row);
        }
        check_unique(&indicator_ids, "indicator")?;
        check_unique(&specialty_ids, "specialty")?;
        Ok(Self {
            indicator_ids,
            specialty_ids,
            entries,
            per_column_support,
        })
    }

    pub fn indicator_ids(&self) -> &[String] {
        &self.indicator_ids
    }

    pub fn specialty_ids(&self) -> &[String] {
        &self.specialty_ids
    }

    pub fn per_column_support(&self) -> &[usize] {
        &self.per_column_support
    }

    pub fn n_indicators(&self) -> usize {
        self.indicator_ids.len()
    }

    pub fn n_specialties(&self) -> usize {
        self.specialty_ids.len()
    }

    pub fn get(&self, indicator: usize, specialty: usize) -> f64 {
        self.entries[indicator * self.n_specialties() + specialty]
    }

    pub fn specialty_index(&self, specialty_id: &str) -> Option<usize> {
        self.specialty_ids.iter().position(|s| s == specialty_id)
    }

    pub fn column(&self, specialty: usize) -> Vec<f64> {
        (0..self.n_indicators())
            .map(|i| self.get(i, specialty))
            .collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries
            .chunks(self.n_specialties())
            .map(<[f64]>::to_vec)
            .collect()
    }
}

fn check_unique(ids: &[String], what: &str) -> Result<(), String> {
    let mut seen = std::collections::HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(format!("duplicate {what} id '{id}'"));
        }
    }
    Ok(())
}

/// Averages the training vectors of each specialty into a column. Columns
/// follow the order in which specialties first appear in `training`.
pub fn build_reference_matrix(
    indicator_ids: &[String],
    training: &[LabeledVector],
) -> Result<ReferenceMatrix, IndicatorError> {
    if training.is_empty() {
        return Err(IndicatorError::EmptyTraining);
    }
    let n_ind = indicator_ids.len();
    let mut specialty_ids: Vec<String> = Vec::new();
    let mut column_of: HashMap<&str, usize> = HashMap::new();
    let mut sums: Vec<Vec<CompensatedSum>> = Vec::new();
    let mut support: Vec<usize> = Vec::new();

    for (vector, specialty) in training {
        if vector.values.len() != n_ind {
            return Err(IndicatorError::LengthMismatch {
                user_id: vector.user_id.clone(),
                expected: n_ind,
                actual: vector.values.len(),
            });
        }
        let col = *column_of.entry(specialty.as_str()).or_insert_with(|| {
            specialty_ids.push(specialty.clone());
            sums.push(vec![CompensatedSum::default(); n_ind]);
            support.push(0);
            specialty_ids.len() - 1
        });
        support[col] += 1;
        for (acc, &v) in sums[col].iter_mut().zip(&vector.values) {
            acc.add(v);
        }
    }

    let n_vi = specialty_ids.len();
    let mut entries = vec![0.0; n_ind * n_vi];
    for (col, column_sums) in sums.iter().enumerate() {
        let n = support[col] as f64;
        for (i, acc) in column_sums.iter().enumerate() {
            entries[i * n_vi + col] = acc.value() / n;
        }
    }
    Ok(ReferenceMatrix {
        indicator_ids: indicator_ids.to_vec(),
        specialty_ids,
        entries,
        per_column_support: support,
    })
}

/// The prototype vector of one specialty.
pub fn reference_column(
    matrix: &ReferenceMatrix,
    specialty_id: &str,
) -> Result<Vec<f64>, IndicatorError> {
    matrix
        .specialty_index(specialty_id)
        .map(|j| matrix.column(j))
        .ok_or_else(|| IndicatorError::UnknownSpecialty(specialty_id.to_string()))
}

/// One indicator across all specialties, in column order.
pub fn indicator_row(
    matrix: &ReferenceMatrix,
    indicator_id: &str,
) -> Result<Vec<f64>, IndicatorError> {
    let i = matrix
        .indicator_ids
        .iter()
        .position(|id| id == indicator_id)
        .ok_or_else(|| IndicatorError::UnknownIndicator(indicator_id.to_string()))?;
    Ok((0..matrix.n_specialties())
        .map(|j| matrix.get(i, j))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::load_lexicon;
    use std::collections::BTreeMap;

    fn vector(user: &str, values: &[f64]) -> IndicatorVector {
        IndicatorVector {
            user_id: user.into(),
            values: values.to_vec(),
            token_count: 1000,
            post_count: 10,
        }
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("g{i}")).collect()
    }

    fn lexicon() -> MarkerLexicon {
        load_lexicon(
            br#"{"lexicon_version":"1","groups":[{"group_id":"g","label":"g"},{"group_id":"h","label":"h"}],"markers":[]}"#,
        )
        .unwrap()
    }

    fn analysis(tokens: usize, g: u64) -> TrackAnalysis {
        TrackAnalysis {
            user_id: "u".into(),
            token_count: tokens,
            hits_per_group: BTreeMap::from([("g".to_string(), g), ("h".to_string(), 0)]),
            post_count: 3,
        }
    }

    #[test]
    fn rate_per_thousand_tokens() {
        let v = compute_indicator_vector(&analysis(2000, 6), &lexicon()).unwrap();
        assert_eq!(v.values, vec![3.0, 0.0]);
        assert_eq!(v.token_count, 2000);
        assert_eq!(v.post_count, 3);
    }

    #[test]
    fn zero_tokens_is_insufficient() {
        let err = compute_indicator_vector(&analysis(0, 0), &lexicon()).unwrap_err();
        assert!(matches!(err, IndicatorError::InsufficientContent { .. }));
    }

    #[test]
    fn column_is_class_mean() {
        let training = vec![
            (vector("a", &[2.0, 4.0]), "s1".to_string()),
            (vector("b", &[9.0, 9.0]), "s2".to_string()),
            (vector("c", &[4.0, 8.0]), "s1".to_string()),
        ];
        let m = build_reference_matrix(&ids(2), &training).unwrap();
        assert_eq!(m.specialty_ids(), ["s1", "s2"]);
        assert_eq!(reference_column(&m, "s1").unwrap(), vec![3.0, 6.0]);
        assert_eq!(reference_column(&m, "s2").unwrap(), vec![9.0, 9.0]);
        assert_eq!(m.per_column_support(), [2, 1]);
        assert_eq!(indicator_row(&m, "g1").unwrap(), vec![6.0, 9.0]);
    }

    #[test]
    fn single_vector_is_its_own_column() {
        let v = [0.25, 7.5, 1.0];
        let m = build_reference_matrix(&ids(3), &[(vector("a", &v), "s".into())]).unwrap();
        assert_eq!(reference_column(&m, "s").unwrap(), v.to_vec());
    }

    #[test]
    fn accessor_errors() {
        let m = build_reference_matrix(&ids(1), &[(vector("a", &[5.0]), "s".into())]).unwrap();
        assert_eq!(indicator_row(&m, "g0").unwrap(), vec![5.0]);
        assert_eq!(m.get(0, 0), 5.0);
        assert!(matches!(
            reference_column(&m, "nope"),
            Err(IndicatorError::UnknownSpecialty(_))
        ));
        assert!(matches!(
            indicator_row(&m, "nope"),
            Err(IndicatorError::UnknownIndicator(_))
        ));
    }

    #[test]
    fn build_errors() {
        assert_eq!(
            build_reference_matrix(&ids(2), &[]),
            Err(IndicatorError::EmptyTraining)
        );
        let training = vec![
            (vector("a", &[1.0, 2.0]), "s".to_string()),
            (vector("b", &[1.0]), "s".to_string()),
        ];
        assert!(matches!(
            build_reference_matrix(&ids(2), &training),
            Err(IndicatorError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn from_rows_validates_shape() {
        let ok = ReferenceMatrix::from_rows(
            ids(2),
            vec!["a".into(), "b".into()],
            &[vec![1.0, 2.0], vec![3.0, 4.0]],
            vec![1, 1],
        )
        .unwrap();
        assert_eq!(ok.column(1), vec![2.0, 4.0]);
        assert_eq!(ok.rows(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(
            ReferenceMatrix::from_rows(ids(2), vec!["a".into()], &[vec![1.0]], vec![1]).is_err()
        );
        assert!(ReferenceMatrix::from_rows(
            ids(1),
            vec!["a".into(), "a".into()],
            &[vec![1.0, 1.0]],
            vec![1, 1]
        )
        .is_err());
    }
}

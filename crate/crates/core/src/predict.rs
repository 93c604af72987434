//! Per-ambiance top-5 feature selection, leave-one-out regression, error
//! reporting, and the people-vs-algorithm accuracy comparison.
//!
//! Feature selection reruns inside every fold so the held-out place never
//! influences which features the fold trains on.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::TargetScores;
use crate::stats::{spearman, spearman_dense, CorrelationCell, CorrelationMatrix, StatsError};

pub const SELECTED_FEATURES: usize = 5;
const MIN_TRAINING_PLACES: usize = 10;
pub const MIN_LOO_PLACES: usize = 12;
const CONDITION_LIMIT: f64 = 1e10;
const RIDGE_SCALE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("need at least {need} training places, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("only {got} features have defined correlations, need {need}")]
    TooFewFeatures { got: usize, need: usize },
    #[error("normal matrix singular even after ridge")]
    SingularAfterRidge,
    #[error("report misaligned: {0}")]
    AlignmentError(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// One place's flattened 129-entry vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaceVector {
    pub place_id: String,
    pub values: Vec<Option<f64>>,
}

impl PlaceVector {
    pub fn from_profile(profile: &crate::aggregate::PlaceProfile) -> Self {
        Self {
            place_id: profile.place_id.clone(),
            values: profile.flatten().iter().map(|v| v.value()).collect(),
        }
    }
}

/// Indices of the k features most rank-correlated (by |rho|) with the
/// training targets; ties break toward the lower registry index.
pub fn select_features(
    train: &[&PlaceVector],
    train_targets: &[f64],
    k: usize,
) -> Result<Vec<usize>, PredictError> {
    if train.len() < MIN_TRAINING_PLACES {
        return Err(PredictError::TooFewSamples {
            need: MIN_TRAINING_PLACES,
            got: train.len(),
        });
    }
    let width = train[0].values.len();
    let targets: Vec<Option<f64>> = train_targets.iter().map(|v| Some(*v)).collect();
    let mut scored: Vec<(usize, f64)> = Vec::new();
    for feature in 0..width {
        let column: Vec<Option<f64>> = train.iter().map(|p| p.values[feature]).collect();
        if let Some(rho) = spearman(&column, &targets)?.rho {
            scored.push((feature, rho.abs()));
        }
    }
    if scored.len() < k {
        return Err(PredictError::TooFewFeatures {
            got: scored.len(),
            need: k,
        });
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<usize> = scored.into_iter().take(k).map(|(i, _)| i).collect();
    chosen.sort_unstable();
    Ok(chosen)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-fold fit result: the medians used for imputation and the solved
/// coefficients (intercept first).
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub features: Vec<usize>,
    pub medians: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub used_ridge: bool,
}

/// Ordinary least squares on the selected features plus intercept, with a
/// ridge fallback when the normal matrix is near-singular. Missing values
/// impute to the training median of their feature.
pub fn fit(
    train: &[&PlaceVector],
    train_targets: &[f64],
    features: &[usize],
) -> Result<FittedModel, PredictError> {
    let n = train.len();
    let p = features.len();
    let medians: Vec<f64> = features
        .iter()
        .map(|&f| {
            let mut present: Vec<f64> = train.iter().filter_map(|row| row.values[f]).collect();
            if present.is_empty() {
                0.0
            } else {
                median(&mut present)
            }
        })
        .collect();

    let design = DMatrix::from_fn(n, p + 1, |row, col| {
        if col == 0 {
            1.0
        } else {
            let f = features[col - 1];
            train[row].values[f].unwrap_or(medians[col - 1])
        }
    });
    let y = DVector::from_iterator(n, train_targets.iter().copied());
    let normal = design.transpose() * &design;
    let rhs = design.transpose() * y;

    let condition = |m: &DMatrix<f64>| -> f64 {
        let svd = m.clone().svd(false, false);
        let max = svd.singular_values.max();
        let min = svd.singular_values.min();
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    };

    let mut used_ridge = false;
    let mut system = normal.clone();
    if condition(&system) > CONDITION_LIMIT {
        used_ridge = true;
        let feature_trace: f64 = (1..=p).map(|i| normal[(i, i)]).sum();
        let lambda = RIDGE_SCALE * feature_trace / p as f64;
        for i in 1..=p {
            system[(i, i)] += lambda;
        }
        if condition(&system) > 1e14 {
            return Err(PredictError::SingularAfterRidge);
        }
    }
    let solved = system
        .lu()
        .solve(&rhs)
        .filter(|c| c.iter().all(|v| v.is_finite()))
        .ok_or(PredictError::SingularAfterRidge)?;
    Ok(FittedModel {
        features: features.to_vec(),
        medians,
        coefficients: solved.iter().copied().collect(),
        used_ridge,
    })
}

impl FittedModel {
    /// Predict one place, clamped onto the rating scale.
    pub fn predict(&self, place: &PlaceVector) -> f64 {
        let mut value = self.coefficients[0];
        for ((&f, median), coefficient) in self
            .features
            .iter()
            .zip(&self.medians)
            .zip(&self.coefficients[1..])
        {
            value += coefficient * place.values[f].unwrap_or(*median);
        }
        value.clamp(0.0, 1.0)
    }
}

/// Select features on the training split, fit, and predict the held-out
/// place.
pub fn fit_predict(
    train: &[&PlaceVector],
    train_targets: &[f64],
    test: &PlaceVector,
    features: &[usize],
) -> Result<f64, PredictError> {
    Ok(fit(train, train_targets, features)?.predict(test))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub place_id: String,
    pub selected: Vec<String>,
    pub predicted: f64,
    pub actual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionReport {
    pub dimension: String,
    pub folds: Vec<FoldOutcome>,
    /// 100 x mean squared residual on [0,1] targets.
    pub percent_mse: f64,
    /// 100 x root mean squared residual; the alternate error column.
    pub percent_rmse: f64,
    pub accuracy: CorrelationCell,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionReport {
    pub dimensions: Vec<DimensionReport>,
}

impl PredictionReport {
    pub fn dimension(&self, name: &str) -> Option<&DimensionReport> {
        self.dimensions.iter().find(|d| d.dimension == name)
    }
}

fn aligned_targets<'a>(
    places: &[PlaceVector],
    targets: &'a [TargetScores],
) -> Result<Vec<&'a TargetScores>, PredictError> {
    let mut by_id = std::collections::BTreeMap::new();
    for t in targets {
        if by_id.insert(t.place_id.as_str(), t).is_some() {
            return Err(PredictError::AlignmentError(format!(
                "duplicate targets for place {:?}",
                t.place_id
            )));
        }
    }
    places
        .iter()
        .map(|p| {
            by_id.get(p.place_id.as_str()).copied().ok_or_else(|| {
                PredictError::AlignmentError(format!("no targets for place {:?}", p.place_id))
            })
        })
        .collect()
}

/// Leave-one-out evaluation of one ambiance dimension. Every fold reruns
/// feature selection on its own training split.
pub fn loo_evaluate(
    places: &[PlaceVector],
    targets: &[TargetScores],
    dim_index: usize,
    dim_name: &str,
    feature_labels: &[String],
) -> Result<DimensionReport, PredictError> {
    if places.len() < MIN_LOO_PLACES {
        return Err(PredictError::TooFewSamples {
            need: MIN_LOO_PLACES,
            got: places.len(),
        });
    }
    let target_rows = aligned_targets(places, targets)?;
    let actuals: Vec<f64> = target_rows.iter().map(|t| t.values[dim_index]).collect();

    let folds: Vec<Result<FoldOutcome, PredictError>> = (0..places.len())
        .into_par_iter()
        .map(|held_out| {
            let train: Vec<&PlaceVector> = places
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != held_out)
                .map(|(_, p)| p)
                .collect();
            let train_targets: Vec<f64> = actuals
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != held_out)
                .map(|(_, v)| *v)
                .collect();
            let features = select_features(&train, &train_targets, SELECTED_FEATURES)?;
            let predicted = fit_predict(&train, &train_targets, &places[held_out], &features)?;
            Ok(FoldOutcome {
                place_id: places[held_out].place_id.clone(),
                selected: features
                    .iter()
                    .map(|&f| feature_labels[f].clone())
                    .collect(),
                predicted,
                actual: actuals[held_out],
            })
        })
        .collect();
    let folds: Vec<FoldOutcome> = folds.into_iter().collect::<Result<_, _>>()?;

    let mse = folds
        .iter()
        .map(|f| (f.predicted - f.actual) * (f.predicted - f.actual))
        .sum::<f64>()
        / folds.len() as f64;
    let predictions: Vec<f64> = folds.iter().map(|f| f.predicted).collect();
    let accuracy = spearman_dense(&predictions, &actuals)?;
    Ok(DimensionReport {
        dimension: dim_name.to_string(),
        folds,
        percent_mse: 100.0 * mse,
        percent_rmse: 100.0 * mse.sqrt(),
        accuracy,
    })
}

/// Leave-one-out over every target dimension.
pub fn evaluate_all(
    places: &[PlaceVector],
    targets: &[TargetScores],
    dimension_names: &[String],
    feature_labels: &[String],
) -> Result<PredictionReport, PredictError> {
    let dimensions = dimension_names
        .iter()
        .enumerate()
        .map(|(i, name)| loo_evaluate(places, targets, i, name, feature_labels))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PredictionReport { dimensions })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    People,
    Algorithm,
    Tie,
}

/// Signed top-correlate lists for one side of the comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopFeatures {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub dimension: String,
    pub people: CorrelationCell,
    pub algorithm: CorrelationCell,
    pub winner: Winner,
    pub people_features: TopFeatures,
    pub algorithm_features: TopFeatures,
    /// Feature labels in both sides' top lists.
    pub shared: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub alpha: f64,
}

fn top_features_for(
    matrix: &CorrelationMatrix,
    dimension: &str,
    alpha: f64,
) -> (TopFeatures, Vec<String>) {
    let Some(col) = matrix.col_labels.iter().position(|c| c == dimension) else {
        return (
            TopFeatures {
                positive: vec![],
                negative: vec![],
            },
            vec![],
        );
    };
    let mut cells: Vec<(String, f64)> = matrix
        .row_labels
        .iter()
        .zip(&matrix.cells)
        .filter_map(|(label, row)| {
            let cell = &row[col];
            match (cell.rho, cell.p_value) {
                (Some(rho), Some(p)) if p < alpha => Some((label.clone(), rho)),
                _ => None,
            }
        })
        .collect();
    cells.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    cells.truncate(SELECTED_FEATURES);
    let all: Vec<String> = cells.iter().map(|(label, _)| label.clone()).collect();
    let top = TopFeatures {
        positive: cells
            .iter()
            .filter(|(_, rho)| *rho > 0.0)
            .map(|(l, _)| l.clone())
            .collect(),
        negative: cells
            .iter()
            .filter(|(_, rho)| *rho < 0.0)
            .map(|(l, _)| l.clone())
            .collect(),
    };
    (top, all)
}

/// Per-dimension accuracy of the respondent group (face-driven vs
/// on-the-spot target scores) against the algorithm's leave-one-out
/// accuracy, with each side's strongest feature associations.
pub fn compare(
    face_driven: &[TargetScores],
    on_the_spot: &[TargetScores],
    dimension_names: &[String],
    report: &PredictionReport,
    people_matrix: &CorrelationMatrix,
    algorithm_matrix: &CorrelationMatrix,
    alpha: f64,
) -> Result<ComparisonTable, PredictError> {
    let mut spot_by_id = std::collections::BTreeMap::new();
    for t in on_the_spot {
        if spot_by_id.insert(t.place_id.as_str(), t).is_some() {
            return Err(PredictError::AlignmentError(format!(
                "duplicate on-the-spot row for {:?}",
                t.place_id
            )));
        }
    }
    let pairs: Vec<(&TargetScores, &TargetScores)> = face_driven
        .iter()
        .map(|f| {
            spot_by_id
                .get(f.place_id.as_str())
                .map(|s| (f, *s))
                .ok_or_else(|| {
                    PredictError::AlignmentError(format!(
                        "no on-the-spot row for {:?}",
                        f.place_id
                    ))
                })
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::with_capacity(dimension_names.len());
    for (dim_index, dimension) in dimension_names.iter().enumerate() {
        let algo = report.dimension(dimension).ok_or_else(|| {
            PredictError::AlignmentError(format!("report lacks dimension {dimension:?}"))
        })?;
        let face_scores: Vec<f64> = pairs.iter().map(|(f, _)| f.values[dim_index]).collect();
        let spot_scores: Vec<f64> = pairs.iter().map(|(_, s)| s.values[dim_index]).collect();
        let people = spearman_dense(&face_scores, &spot_scores)?;

        let winner = match (people.rho, algo.accuracy.rho) {
            (Some(p), Some(a)) if (p - a).abs() <= 1e-12 => Winner::Tie,
            (Some(p), Some(a)) if p > a => Winner::People,
            (Some(_), Some(_)) => Winner::Algorithm,
            (Some(_), None) => Winner::People,
            (None, Some(_)) => Winner::Algorithm,
            (None, None) => Winner::Tie,
        };
        let (people_features, people_all) = top_features_for(people_matrix, dimension, alpha);
        let (algorithm_features, algo_all) = top_features_for(algorithm_matrix, dimension, alpha);
        let shared: Vec<String> = people_all
            .iter()
            .filter(|f| algo_all.contains(f))
            .cloned()
            .collect();
        rows.push(ComparisonRow {
            dimension: dimension.clone(),
            people,
            algorithm: algo.accuracy,
            winner,
            people_features,
            algorithm_features,
            shared,
        });
    }
    Ok(ComparisonTable { rows, alpha })
}

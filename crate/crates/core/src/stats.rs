//! Spearman rank correlation with tie handling, significance testing, and
//! the full 129 x 18 feature-ambiance correlation matrix with
//! pairwise-complete missing-data handling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::aggregate::PlaceProfile;
use crate::cluster::TargetScores;
use crate::registry::{FeatureRegistry, PLACE_VECTOR_LEN};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("place ids misaligned: {0}")]
    AlignmentError(String),
    #[error("need at least {need} places, got {got}")]
    TooFewPlaces { need: usize, got: usize },
}

/// One correlation: rho is undefined below 3 complete pairs or for constant
/// rank vectors; the p-value needs at least 4 complete pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCell {
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
    pub n_effective: usize,
}

impl CorrelationCell {
    pub fn undefined(n_effective: usize) -> Self {
        Self {
            rho: None,
            p_value: None,
            n_effective,
        }
    }

    pub fn significant_at(&self, alpha: f64) -> bool {
        matches!(self.p_value, Some(p) if p < alpha)
    }
}

/// Average ranks with ties sharing the mean of the rank run.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // ranks are 1-based; a tie run [i, j] shares the mean rank
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

fn has_duplicates(sorted_source: &[f64]) -> bool {
    let mut seen: Vec<f64> = sorted_source.to_vec();
    seen.sort_by(|a, b| a.total_cmp(b));
    seen.windows(2).any(|w| w[0] == w[1])
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x <= 0.0 || var_y <= 0.0 {
        return None;
    }
    Some((cov / (var_x.sqrt() * var_y.sqrt())).clamp(-1.0, 1.0))
}

/// Two-sided p from the t approximation t = rho sqrt((n-2)/(1-rho^2)).
fn t_approximation_p(rho: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let denom = 1.0 - rho * rho;
    if denom <= 0.0 {
        return 0.0;
    }
    let t = rho.abs() * (df / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 2");
    (2.0 * (1.0 - dist.cdf(t))).clamp(0.0, 1.0)
}

/// Spearman correlation with pairwise-complete deletion and average ranks
/// for ties.
pub fn spearman(x: &[Option<f64>], y: &[Option<f64>]) -> Result<CorrelationCell, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (a, b) in x.iter().zip(y) {
        if let (Some(a), Some(b)) = (a, b) {
            if a.is_finite() && b.is_finite() {
                xs.push(*a);
                ys.push(*b);
            }
        }
    }
    let n = xs.len();
    if n < 3 {
        return Ok(CorrelationCell::undefined(n));
    }
    let rank_x = average_ranks(&xs);
    let rank_y = average_ranks(&ys);
    // without ties the Pearson-of-ranks reduces algebraically to the
    // rank-difference formula, which is numerically exact at rho = +/-1
    let has_ties =
        |ranks: &[f64]| ranks.iter().any(|r| r.fract() != 0.0) || has_duplicates(ranks);
    let rho = if has_ties(&rank_x) || has_ties(&rank_y) {
        match pearson(&rank_x, &rank_y) {
            Some(rho) => rho,
            None => return Ok(CorrelationCell::undefined(n)),
        }
    } else {
        let d_sq: f64 = rank_x
            .iter()
            .zip(&rank_y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let nf = n as f64;
        1.0 - 6.0 * d_sq / (nf * (nf * nf - 1.0))
    };
    let p_value = (n >= 4).then(|| t_approximation_p(rho, n));
    Ok(CorrelationCell {
        rho: Some(rho),
        p_value,
        n_effective: n,
    })
}

/// Convenience for fully-present vectors.
pub fn spearman_dense(x: &[f64], y: &[f64]) -> Result<CorrelationCell, StatsError> {
    let xs: Vec<Option<f64>> = x.iter().map(|v| Some(*v)).collect();
    let ys: Vec<Option<f64>> = y.iter().map(|v| Some(*v)).collect();
    spearman(&xs, &ys)
}

/// Seeded permutation p-value for auditing the t approximation: the
/// fraction of shuffles with |rho| at least as extreme.
pub fn spearman_permutation_p(
    x: &[Option<f64>],
    y: &[Option<f64>],
    shuffles: usize,
    seed: u64,
) -> Result<Option<f64>, StatsError> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let base = spearman(x, y)?;
    let Some(rho) = base.rho else { return Ok(None) };
    let shuffles = shuffles.min(10_000);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut ys: Vec<Option<f64>> = y.to_vec();
    let mut extreme = 0usize;
    for _ in 0..shuffles {
        ys.shuffle(&mut rng);
        if let Some(r) = spearman(x, &ys)?.rho {
            if r.abs() >= rho.abs() - 1e-12 {
                extreme += 1;
            }
        }
    }
    Ok(Some((extreme as f64 + 1.0) / (shuffles as f64 + 1.0)))
}

/// The 129 x 18 grid of feature-ambiance correlations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// Row-major: `cells[row][col]`.
    pub cells: Vec<Vec<CorrelationCell>>,
    pub alpha: f64,
}

impl CorrelationMatrix {
    pub fn cell_count(&self) -> usize {
        self.row_labels.len() * self.col_labels.len()
    }
}

/// Correlate every flattened place-vector entry against every target
/// dimension across places. Face-dependent rows run on fewer complete
/// pairs; their `n_effective` says how many.
pub fn correlation_matrix(
    profiles: &[PlaceProfile],
    targets: &[TargetScores],
    col_labels: &[String],
    alpha: f64,
) -> Result<CorrelationMatrix, StatsError> {
    if profiles.len() < 5 {
        return Err(StatsError::TooFewPlaces {
            need: 5,
            got: profiles.len(),
        });
    }
    let aligned = align_by_place(profiles, targets)?;
    let rows: Vec<Vec<Option<f64>>> = (0..PLACE_VECTOR_LEN)
        .map(|slot| {
            aligned
                .iter()
                .map(|(profile, _)| profile.flatten()[slot].value())
                .collect()
        })
        .collect();
    let cols: Vec<Vec<Option<f64>>> = (0..col_labels.len())
        .map(|c| {
            aligned
                .iter()
                .map(|(_, target)| Some(target.values[c]))
                .collect()
        })
        .collect();

    let cells: Vec<Vec<CorrelationCell>> = rows
        .par_iter()
        .map(|row| {
            cols.iter()
                .map(|col| spearman(row, col).expect("aligned lengths"))
                .collect()
        })
        .collect();

    Ok(CorrelationMatrix {
        row_labels: FeatureRegistry::standard().place_vector_labels(),
        col_labels: col_labels.to_vec(),
        cells,
        alpha,
    })
}

fn align_by_place<'a>(
    profiles: &'a [PlaceProfile],
    targets: &'a [TargetScores],
) -> Result<Vec<(&'a PlaceProfile, &'a TargetScores)>, StatsError> {
    if profiles.len() != targets.len() {
        return Err(StatsError::AlignmentError(format!(
            "{} profiles vs {} target rows",
            profiles.len(),
            targets.len()
        )));
    }
    let mut by_id = std::collections::BTreeMap::new();
    for t in targets {
        if by_id.insert(t.place_id.as_str(), t).is_some() {
            return Err(StatsError::AlignmentError(format!(
                "duplicate place id {:?} in targets",
                t.place_id
            )));
        }
    }
    profiles
        .iter()
        .map(|p| {
            by_id
                .get(p.place_id.as_str())
                .map(|t| (p, *t))
                .ok_or_else(|| {
                    StatsError::AlignmentError(format!("no targets for place {:?}", p.place_id))
                })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SignificantCell {
    pub feature: String,
    pub ambiance: String,
    pub rho: f64,
    pub p_value: f64,
    pub n_effective: usize,
}

/// Cells significant at `alpha`, strongest |rho| first, ties in
/// (feature, ambiance) label order.
pub fn significant_cells(matrix: &CorrelationMatrix, alpha: f64) -> Vec<SignificantCell> {
    let mut out = Vec::new();
    for (row_label, row) in matrix.row_labels.iter().zip(&matrix.cells) {
        for (col_label, cell) in matrix.col_labels.iter().zip(row) {
            if let (Some(rho), Some(p)) = (cell.rho, cell.p_value) {
                if p < alpha {
                    out.push(SignificantCell {
                        feature: row_label.clone(),
                        ambiance: col_label.clone(),
                        rho,
                        p_value: p,
                        n_effective: cell.n_effective,
                    });
                }
            }
        }
    }
    out.sort_by(|a, b| {
        b.rho
            .abs()
            .total_cmp(&a.rho.abs())
            .then_with(|| a.feature.cmp(&b.feature))
            .then_with(|| a.ambiance.cmp(&b.ambiance))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense(values: &[f64]) -> Vec<Option<f64>> {
        values.iter().map(|v| Some(*v)).collect()
    }

    #[test]
    fn monotone_identity_and_reversal() {
        let cell = spearman_dense(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(cell.rho, Some(1.0));
        let cell = spearman_dense(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert_eq!(cell.rho, Some(-1.0));
    }

    #[test]
    fn no_ties_formula_example() {
        // 1 - 6*sum(d^2)/(n(n^2-1)) with d = (1,-1,1,-1): 1 - 24/60 = 0.6
        let cell = spearman_dense(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((cell.rho.unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn symmetric_in_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let n = rng.gen_range(3..20);
            let x: Vec<Option<f64>> = (0..n)
                .map(|_| (rng.gen_bool(0.8)).then(|| rng.gen_range(-3.0..3.0)))
                .collect();
            let y: Vec<Option<f64>> = (0..n)
                .map(|_| (rng.gen_bool(0.8)).then(|| rng.gen_range(-3.0..3.0)))
                .collect();
            let a = spearman(&x, &y).unwrap();
            let b = spearman(&y, &x).unwrap();
            assert_eq!(a.rho, b.rho);
            assert_eq!(a.p_value, b.p_value);
        }
    }

    #[test]
    fn invariant_under_strictly_increasing_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..30 {
            let n = rng.gen_range(4..25);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let base = spearman_dense(&x, &y).unwrap().rho.unwrap();
            let cubed: Vec<f64> = x.iter().map(|v| v.powi(3)).collect();
            let exped: Vec<f64> = y.iter().map(|v| v.exp()).collect();
            let transformed = spearman_dense(&cubed, &exped).unwrap().rho.unwrap();
            assert!((base - transformed).abs() < 1e-12);
        }
    }

    #[test]
    fn self_correlation_is_one() {
        let x = [0.3, 1.7, -2.0, 0.9, 5.5];
        assert_eq!(spearman_dense(&x, &x).unwrap().rho, Some(1.0));
    }

    #[test]
    fn undefined_below_three_pairs_or_constant() {
        let cell = spearman(&dense(&[1.0, 2.0]), &dense(&[2.0, 1.0])).unwrap();
        assert_eq!(cell.rho, None);
        assert_eq!(cell.n_effective, 2);

        let constant = spearman_dense(&[1.0, 1.0, 1.0, 1.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(constant.rho, None);
        assert_eq!(constant.n_effective, 4);
    }

    #[test]
    fn p_absent_at_three_pairs() {
        let cell = spearman_dense(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!(cell.rho.is_some());
        assert_eq!(cell.p_value, None);
    }

    #[test]
    fn pairwise_deletion_matches_explicit_filtering() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let n = rng.gen_range(6..30);
            let x: Vec<Option<f64>> = (0..n)
                .map(|_| rng.gen_bool(0.7).then(|| rng.gen_range(0.0..1.0)))
                .collect();
            let y: Vec<Option<f64>> = (0..n)
                .map(|_| rng.gen_bool(0.7).then(|| rng.gen_range(0.0..1.0)))
                .collect();
            let with_missing = spearman(&x, &y).unwrap();
            let (fx, fy): (Vec<f64>, Vec<f64>) = x
                .iter()
                .zip(&y)
                .filter_map(|(a, b)| a.zip(*b))
                .unzip();
            let filtered = spearman_dense(&fx, &fy).unwrap();
            assert_eq!(with_missing.rho, filtered.rho);
            assert_eq!(with_missing.n_effective, filtered.n_effective);
        }
    }

    #[test]
    fn tie_ranks_average() {
        let ranks = average_ranks(&[10.0, 20.0, 20.0, 30.0]);
        assert_eq!(ranks, vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn p_value_matches_closed_form_t_cdf_for_df_3() {
        // n = 5, rho = 0.6 exactly: t = 0.6 sqrt(3/0.64); with df = 3 the
        // Student CDF has the closed form
        //   F(t) = 1/2 + (1/pi) [ (t/sqrt 3)/(1 + t^2/3) + atan(t/sqrt 3) ]
        let cell = spearman_dense(&[1.0, 2.0, 3.0, 4.0, 5.0], &[3.0, 2.0, 1.0, 4.0, 5.0]).unwrap();
        let rho = cell.rho.unwrap();
        assert!((rho - 0.6).abs() < 1e-12);
        let t = 0.6 * (3.0_f64 / (1.0 - 0.36)).sqrt();
        let u = t / 3.0_f64.sqrt();
        let cdf = 0.5 + (u / (1.0 + t * t / 3.0) + u.atan()) / std::f64::consts::PI;
        let expected = 2.0 * (1.0 - cdf);
        assert!(
            (cell.p_value.unwrap() - expected).abs() < 1e-9,
            "{} vs {expected}",
            cell.p_value.unwrap()
        );
    }

    #[test]
    fn perfect_correlation_has_zero_p() {
        let cell = spearman_dense(&[1.0, 2.0, 3.0, 4.0, 5.0], &[10.0, 20.0, 30.0, 40.0, 50.0])
            .unwrap();
        assert_eq!(cell.rho, Some(1.0));
        assert_eq!(cell.p_value, Some(0.0));
    }

    #[test]
    fn permutation_p_tracks_t_approximation() {
        let x: Vec<Option<f64>> = (0..20).map(|i| Some(i as f64)).collect();
        let y: Vec<Option<f64>> = (0..20)
            .map(|i| Some(i as f64 + if i % 4 == 0 { 6.0 } else { 0.0 }))
            .collect();
        let cell = spearman(&x, &y).unwrap();
        let perm = spearman_permutation_p(&x, &y, 4000, 0).unwrap().unwrap();
        let t_p = cell.p_value.unwrap();
        assert!(
            (perm - t_p).abs() < 0.05,
            "permutation {perm} vs t-approximation {t_p}"
        );
    }

    mod matrix {
        use super::*;
        use crate::aggregate::PlaceProfile;
        use crate::registry::{FeatureValue, FEATURE_COUNT};

        fn profile(place_id: &str, fill: f64, missing_feature: Option<usize>) -> PlaceProfile {
            let mut mean = vec![FeatureValue::Present(fill); FEATURE_COUNT];
            if let Some(idx) = missing_feature {
                mean[idx] = FeatureValue::Missing;
            }
            PlaceProfile {
                place_id: place_id.into(),
                manifest_version: crate::manifest::MANIFEST_VERSION.into(),
                mean,
                std: vec![FeatureValue::Present(fill / 2.0); FEATURE_COUNT],
                face_count: 10,
            }
        }

        fn targets(place_id: &str, fill: f64, k: usize) -> TargetScores {
            TargetScores {
                place_id: place_id.into(),
                values: vec![fill; k],
            }
        }

        #[test]
        fn matrix_is_129_by_18() {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let profiles: Vec<PlaceProfile> = (0..8)
                .map(|i| profile(&format!("p{i}"), rng.gen_range(0.0..1.0), None))
                .collect();
            let target_rows: Vec<TargetScores> = (0..8)
                .map(|i| targets(&format!("p{i}"), rng.gen_range(0.0..1.0), 18))
                .collect();
            let labels: Vec<String> = (0..18).map(|i| format!("dim{i}")).collect();
            let matrix = correlation_matrix(&profiles, &target_rows, &labels, 0.05).unwrap();
            assert_eq!(matrix.row_labels.len(), 129);
            assert_eq!(matrix.col_labels.len(), 18);
            assert_eq!(matrix.cell_count(), 2322);
        }

        #[test]
        fn all_missing_feature_row_is_undefined_not_a_crash() {
            let profiles: Vec<PlaceProfile> = (0..6)
                .map(|i| profile(&format!("p{i}"), i as f64 / 6.0, Some(3)))
                .collect();
            let target_rows: Vec<TargetScores> = (0..6)
                .map(|i| targets(&format!("p{i}"), i as f64 / 6.0, 18))
                .collect();
            let labels: Vec<String> = (0..18).map(|i| format!("dim{i}")).collect();
            let matrix = correlation_matrix(&profiles, &target_rows, &labels, 0.05).unwrap();
            for cell in &matrix.cells[3] {
                assert_eq!(cell.rho, None);
                assert_eq!(cell.n_effective, 0);
            }
        }

        #[test]
        fn duplicate_place_id_is_alignment_error() {
            let profiles: Vec<PlaceProfile> =
                (0..5).map(|i| profile(&format!("p{i}"), 0.5, None)).collect();
            let mut target_rows: Vec<TargetScores> =
                (0..5).map(|i| targets(&format!("p{i}"), 0.5, 18)).collect();
            target_rows[4].place_id = "p0".into();
            let labels: Vec<String> = (0..18).map(|i| format!("dim{i}")).collect();
            assert!(matches!(
                correlation_matrix(&profiles, &target_rows, &labels, 0.05),
                Err(StatsError::AlignmentError(_))
            ));
        }

        #[test]
        fn planted_monotone_pair_ranks_first() {
            let mut rng = ChaCha8Rng::seed_from_u64(33);
            let mut profiles = Vec::new();
            let mut target_rows = Vec::new();
            for i in 0..12 {
                let mut p = profile(&format!("p{i}"), rng.gen_range(0.0..1.0), None);
                for v in p.mean.iter_mut().chain(p.std.iter_mut()) {
                    *v = FeatureValue::Present(rng.gen_range(0.0..1.0));
                }
                p.mean[0] = FeatureValue::Present(i as f64 / 12.0);
                p.face_count = rng.gen_range(0..26);
                profiles.push(p);
                let mut t = targets(&format!("p{i}"), 0.0, 18);
                for v in t.values.iter_mut() {
                    *v = rng.gen_range(0.0..1.0);
                }
                t.values[0] = (i as f64 / 12.0).powi(2); // monotone in mean[0]
                target_rows.push(t);
            }
            let labels: Vec<String> = (0..18).map(|i| format!("dim{i}")).collect();
            let matrix = correlation_matrix(&profiles, &target_rows, &labels, 0.05).unwrap();
            let significant = significant_cells(&matrix, 0.05);
            assert!(!significant.is_empty());
            assert_eq!(significant[0].rho, 1.0);
            assert_eq!(significant[0].feature, "mean camera_shake");
            assert_eq!(significant[0].ambiance, "dim0");

            assert!(significant_cells(&matrix, 0.0).is_empty());
        }
    }
}

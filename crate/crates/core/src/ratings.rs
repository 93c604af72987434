//! Raw ambiance ratings: 72 named dimensions per place, two rating sets
//! (face-driven and on-the-spot), normalized to [0,1] at ingest using the
//! scale declared in the file's metadata line.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The canonical 72 ambiance dimensions, grouped cluster by cluster
/// (target term first) in the default arrangement's order.
#[rustfmt::skip]
pub const DIMENSIONS: [&str; 72] = [
    // middle-class
    "trendy", "stylish", "modern", "white-collar", "impress",
    // relaxing
    "relax", "cozy", "simple", "clean", "comfortable", "pleasant", "relaxed", "homey",
    // posh
    "formal", "luxurious", "upscale", "sophisticated",
    // friendly
    "cheerful", "funny", "friendly",
    // social
    "drink /eat", "meet new people", "watch people", "hangout",
    // romantic
    "dating", "cheesy", "romantic",
    // pickup
    "pickup", "meat market",
    // creative
    "artsy", "quirk", "imaginative", "art", "eclectic", "edgy", "unique", "hipster", "bohemian",
    // party
    "music", "energetic", "loud", "dancing", "camp",
    // attractive
    "attractive",
    // open-minded
    "open", "open-minded", "adventurous", "extraverted",
    // blue-collar
    "blue-collar",
    // traditional
    "bland", "conservative", "old-fashion", "sterile", "stuffy", "traditional",
    "politically conservative",
    // strange
    "off path", "strange",
    // cramp
    "cramp", "dark", "dingy", "creep",
    // calm
    "agreeable", "emotionally stable", "concencious",
    // reading
    "read", "study", "work", "web",
    // pretentious
    "douchy", "pretentious", "self centered",
];

pub const DIMENSION_COUNT: usize = 72;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingSet {
    FaceDriven,
    OnTheSpot,
}

impl RatingSet {
    pub fn label(&self) -> &'static str {
        match self {
            RatingSet::FaceDriven => "face_driven",
            RatingSet::OnTheSpot => "on_the_spot",
        }
    }

    fn parse(text: &str) -> Option<RatingSet> {
        match text {
            "face_driven" => Some(RatingSet::FaceDriven),
            "on_the_spot" => Some(RatingSet::OnTheSpot),
            _ => None,
        }
    }
}

/// One place's raw ratings on all 72 dimensions, already normalized to
/// [0,1].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmbianceRatings {
    pub place_id: String,
    pub rating_set: RatingSet,
    /// Parallel to the file's dimension header.
    pub values: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum RatingsError {
    #[error("ratings file malformed: {0}")]
    Malformed(String),
    #[error("ratings file declares {got} dimensions, expected {DIMENSION_COUNT}")]
    WrongDimensionCount { got: usize },
    #[error("duplicate ratings row for place {place_id:?} set {set}")]
    DuplicateRow { place_id: String, set: &'static str },
    #[error("rating {value} outside declared scale [{min}, {max}] at {place}")]
    OutOfScale {
        value: f64,
        min: f64,
        max: f64,
        place: String,
    },
}

/// Parsed ratings table: the dimension names as declared by the file header
/// plus all rows, normalized to [0,1].
#[derive(Debug, Clone)]
pub struct RatingsTable {
    pub dimensions: Vec<String>,
    pub rows: Vec<AmbianceRatings>,
}

impl RatingsTable {
    pub fn rows_for(&self, set: RatingSet) -> Vec<&AmbianceRatings> {
        self.rows.iter().filter(|r| r.rating_set == set).collect()
    }

    pub fn place_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.rows.iter().map(|r| r.place_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn dimension_index(&self, name: &str) -> Option<usize> {
        self.dimensions.iter().position(|d| d == name)
    }
}

/// Parse the ratings CSV. Line 1 declares the raw scale
/// (`# scale_min=<f> scale_max=<f>`), line 2 is
/// `place_id,rating_set,<72 dimension names>`, and each following row holds
/// one (place, rating set) pair. Raw values map linearly onto [0,1].
pub fn parse_ratings_csv(text: &str) -> Result<RatingsTable, RatingsError> {
    let mut lines = text.lines().enumerate();
    let (_, meta) = lines
        .next()
        .ok_or_else(|| RatingsError::Malformed("empty file".into()))?;
    let (min, max) = parse_scale_line(meta)?;
    let (_, header) = lines
        .next()
        .ok_or_else(|| RatingsError::Malformed("missing header row".into()))?;
    let mut columns = header.split(',');
    if columns.next() != Some("place_id") || columns.next() != Some("rating_set") {
        return Err(RatingsError::Malformed(
            "header must start with place_id,rating_set".into(),
        ));
    }
    let dimensions: Vec<String> = columns.map(|c| c.trim().to_string()).collect();
    if dimensions.len() != DIMENSION_COUNT {
        return Err(RatingsError::WrongDimensionCount {
            got: dimensions.len(),
        });
    }
    if let Some(dup) = first_duplicate(&dimensions) {
        return Err(RatingsError::Malformed(format!(
            "duplicate dimension name {dup:?}"
        )));
    }

    let mut seen = BTreeMap::new();
    let mut rows = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',');
        let place_id = fields
            .next()
            .ok_or_else(|| RatingsError::Malformed(format!("line {}: no place id", lineno + 1)))?
            .trim()
            .to_string();
        if place_id.is_empty() {
            return Err(RatingsError::Malformed(format!(
                "line {}: empty place id",
                lineno + 1
            )));
        }
        let set_text = fields
            .next()
            .ok_or_else(|| RatingsError::Malformed(format!("line {}: no rating set", lineno + 1)))?
            .trim();
        let rating_set = RatingSet::parse(set_text).ok_or_else(|| {
            RatingsError::Malformed(format!("line {}: unknown rating set {set_text:?}", lineno + 1))
        })?;
        let raw: Result<Vec<f64>, _> = fields
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| {
                    RatingsError::Malformed(format!("line {}: {e}", lineno + 1))
                })
            })
            .collect();
        let raw = raw?;
        if raw.len() != DIMENSION_COUNT {
            return Err(RatingsError::Malformed(format!(
                "line {}: {} values, expected {DIMENSION_COUNT}",
                lineno + 1,
                raw.len()
            )));
        }
        let values: Result<Vec<f64>, RatingsError> = raw
            .into_iter()
            .map(|v| {
                if v < min || v > max || !v.is_finite() {
                    Err(RatingsError::OutOfScale {
                        value: v,
                        min,
                        max,
                        place: place_id.clone(),
                    })
                } else {
                    Ok((v - min) / (max - min))
                }
            })
            .collect();
        let key = (place_id.clone(), rating_set.label());
        if seen.insert(key, ()).is_some() {
            return Err(RatingsError::DuplicateRow {
                place_id,
                set: rating_set.label(),
            });
        }
        rows.push(AmbianceRatings {
            place_id,
            rating_set,
            values: values?,
        });
    }
    Ok(RatingsTable { dimensions, rows })
}

fn parse_scale_line(line: &str) -> Result<(f64, f64), RatingsError> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| RatingsError::Malformed("first line must declare # scale_min/scale_max".into()))?;
    let mut min = None;
    let mut max = None;
    for token in body.split_whitespace() {
        if let Some(v) = token.strip_prefix("scale_min=") {
            min = v.parse::<f64>().ok();
        } else if let Some(v) = token.strip_prefix("scale_max=") {
            max = v.parse::<f64>().ok();
        }
    }
    match (min, max) {
        (Some(min), Some(max)) if max > min && min.is_finite() && max.is_finite() => {
            Ok((min, max))
        }
        _ => Err(RatingsError::Malformed(
            "scale line must declare finite scale_min < scale_max".into(),
        )),
    }
}

fn first_duplicate(names: &[String]) -> Option<&String> {
    let mut seen = std::collections::BTreeSet::new();
    names.iter().find(|n| !seen.insert(n.as_str()))
}

/// Render a ratings CSV in the canonical dimension order on a [0,1] scale.
pub fn render_ratings_csv(rows: &[AmbianceRatings]) -> String {
    let mut out = String::from("# scale_min=0 scale_max=1\n");
    out.push_str("place_id,rating_set");
    for d in DIMENSIONS {
        out.push(',');
        out.push_str(d);
    }
    out.push('\n');
    for row in rows {
        out.push_str(&row.place_id);
        out.push(',');
        out.push_str(row.rating_set.label());
        for v in &row.values {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_csv(scale: &str, value: f64) -> String {
        let mut text = format!("{scale}\nplace_id,rating_set");
        for d in DIMENSIONS {
            text.push(',');
            text.push_str(d);
        }
        text.push('\n');
        text.push_str("p1,face_driven");
        for _ in 0..DIMENSION_COUNT {
            text.push_str(&format!(",{value}"));
        }
        text.push('\n');
        text
    }

    #[test]
    fn canonical_dimensions_number_72_unique() {
        let mut names = DIMENSIONS.to_vec();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 72);
    }

    #[test]
    fn parses_and_normalizes_by_declared_scale() {
        let table = parse_ratings_csv(&tiny_csv("# scale_min=1 scale_max=7", 4.0)).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.dimensions.len(), 72);
        for v in &table.rows[0].values {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_scale_rating_is_rejected() {
        let err = parse_ratings_csv(&tiny_csv("# scale_min=0 scale_max=1", 1.5)).unwrap_err();
        assert!(matches!(err, RatingsError::OutOfScale { .. }));
    }

    #[test]
    fn duplicate_rows_are_rejected() {
        let mut text = tiny_csv("# scale_min=0 scale_max=1", 0.5);
        let dup = text.lines().last().unwrap().to_string();
        text.push_str(&dup);
        text.push('\n');
        let err = parse_ratings_csv(&text).unwrap_err();
        assert!(matches!(err, RatingsError::DuplicateRow { .. }));
    }

    #[test]
    fn wrong_dimension_count_is_rejected() {
        let text = "# scale_min=0 scale_max=1\nplace_id,rating_set,only,two\np,face_driven,0.1,0.2\n";
        assert!(matches!(
            parse_ratings_csv(text),
            Err(RatingsError::WrongDimensionCount { got: 2 })
        ));
    }

    #[test]
    fn render_round_trips() {
        let rows = vec![
            AmbianceRatings {
                place_id: "a".into(),
                rating_set: RatingSet::FaceDriven,
                values: (0..72).map(|i| i as f64 / 71.0).collect(),
            },
            AmbianceRatings {
                place_id: "a".into(),
                rating_set: RatingSet::OnTheSpot,
                values: vec![0.25; 72],
            },
        ];
        let table = parse_ratings_csv(&render_ratings_csv(&rows)).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].values, rows[0].values);
        assert_eq!(table.rows[1].rating_set, RatingSet::OnTheSpot);
    }
}

//! Machine-readable and visual report rendering: correlation-matrix CSV
//! triplets, SVG heatmaps and error bar charts, and the people-vs-algorithm
//! comparison table as Markdown and CSV.
//!
//! Everything renders from plain data with fixed-precision formatting, so a
//! rerun with the same inputs is byte-identical and golden tests can diff
//! the output directly.

use crate::predict::{ComparisonTable, PredictionReport, Winner};
use crate::stats::CorrelationMatrix;

/// Significance stars: *** below .01, * below .05.
pub fn stars(p: Option<f64>) -> &'static str {
    match p {
        Some(p) if p < 0.01 => "***",
        Some(p) if p < 0.05 => "*",
        _ => "",
    }
}

fn fmt(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

// ---------------------------------------------------------------------------
// Correlation matrix exports
// ---------------------------------------------------------------------------

/// Render the rho, p, and n grids as three CSV strings (in that order),
/// each prefixed with the given comment lines.
pub fn matrix_csvs(matrix: &CorrelationMatrix, comment: &str) -> (String, String, String) {
    let render = |value: &dyn Fn(usize, usize) -> String| -> String {
        let mut out = String::new();
        for line in comment.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str("feature");
        for col in &matrix.col_labels {
            out.push(',');
            out.push_str(col);
        }
        out.push('\n');
        for (r, row_label) in matrix.row_labels.iter().enumerate() {
            out.push_str(row_label);
            for c in 0..matrix.col_labels.len() {
                out.push(',');
                out.push_str(&value(r, c));
            }
            out.push('\n');
        }
        out
    };
    let rho = render(&|r, c| {
        matrix.cells[r][c]
            .rho
            .map(|v| format!("{v}"))
            .unwrap_or_default()
    });
    let p = render(&|r, c| {
        matrix.cells[r][c]
            .p_value
            .map(|v| format!("{v}"))
            .unwrap_or_default()
    });
    let n = render(&|r, c| matrix.cells[r][c].n_effective.to_string());
    (rho, p, n)
}

// ---------------------------------------------------------------------------
// SVG rendering
// ---------------------------------------------------------------------------

fn diverging_color(rho: f64) -> String {
    // white at 0, saturated blue at -1, saturated red at +1
    let t = rho.clamp(-1.0, 1.0);
    let (r, g, b) = if t >= 0.0 {
        let u = t;
        (
            255.0 - u * (255.0 - 178.0),
            255.0 - u * (255.0 - 24.0),
            255.0 - u * (255.0 - 43.0),
        )
    } else {
        let u = -t;
        (
            255.0 - u * (255.0 - 33.0),
            255.0 - u * (255.0 - 102.0),
            255.0 - u * (255.0 - 172.0),
        )
    };
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}

/// Heatmap of the full matrix: diverging color for significant cells, gray
/// for insignificant, pale gray for undefined.
pub fn heatmap_svg(matrix: &CorrelationMatrix, title: &str) -> String {
    const CELL: f64 = 9.0;
    const LEFT: f64 = 190.0;
    const TOP: f64 = 120.0;
    let width = LEFT + matrix.col_labels.len() as f64 * CELL + 20.0;
    let height = TOP + matrix.row_labels.len() as f64 * CELL + 20.0;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         font-family=\"monospace\" font-size=\"7\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{LEFT}\" y=\"14\" font-size=\"12\">{}</text>\n",
        xml_escape(title)
    ));
    for (c, label) in matrix.col_labels.iter().enumerate() {
        let x = LEFT + c as f64 * CELL + CELL / 2.0;
        svg.push_str(&format!(
            "  <text x=\"{x}\" y=\"{}\" transform=\"rotate(-60 {x} {})\">{}</text>\n",
            TOP - 6.0,
            TOP - 6.0,
            xml_escape(label)
        ));
    }
    for (r, row_label) in matrix.row_labels.iter().enumerate() {
        let y = TOP + r as f64 * CELL;
        svg.push_str(&format!(
            "  <text x=\"4\" y=\"{}\">{}</text>\n",
            y + CELL - 2.0,
            xml_escape(row_label)
        ));
        for c in 0..matrix.col_labels.len() {
            let cell = &matrix.cells[r][c];
            let fill = match (cell.rho, cell.p_value) {
                (Some(rho), Some(p)) if p < matrix.alpha => diverging_color(rho),
                (Some(_), _) => "#c8c8c8".to_string(),
                _ => "#eeeeee".to_string(),
            };
            let tooltip = match cell.rho {
                Some(rho) => format!(
                    "{} x {}: rho={} p={} n={}",
                    row_label,
                    matrix.col_labels[c],
                    fmt(rho, 3),
                    cell.p_value.map(|p| fmt(p, 4)).unwrap_or_else(|| "-".into()),
                    cell.n_effective
                ),
                None => format!("{} x {}: undefined", row_label, matrix.col_labels[c]),
            };
            svg.push_str(&format!(
                "  <rect x=\"{}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{fill}\">\
                 <title>{}</title></rect>\n",
                LEFT + c as f64 * CELL,
                xml_escape(&tooltip)
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Bar chart of per-dimension percent MSE with a reference line at 10.
pub fn error_bars_svg(report: &PredictionReport, title: &str) -> String {
    const BAR: f64 = 26.0;
    const GAP: f64 = 10.0;
    const LEFT: f64 = 50.0;
    const TOP: f64 = 40.0;
    const PLOT_H: f64 = 220.0;
    let n = report.dimensions.len();
    let width = LEFT + n as f64 * (BAR + GAP) + 20.0;
    let height = TOP + PLOT_H + 110.0;
    let max_value = report
        .dimensions
        .iter()
        .map(|d| d.percent_mse)
        .fold(10.0_f64, f64::max)
        * 1.15;
    let scale = PLOT_H / max_value;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         font-family=\"monospace\" font-size=\"9\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{LEFT}\" y=\"16\" font-size=\"12\">{}</text>\n",
        xml_escape(title)
    ));
    // axis and the 10% reference
    svg.push_str(&format!(
        "  <line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{}\" stroke=\"black\"/>\n",
        TOP + PLOT_H
    ));
    let ref_y = TOP + PLOT_H - 10.0 * scale;
    svg.push_str(&format!(
        "  <line x1=\"{LEFT}\" y1=\"{ref_y}\" x2=\"{}\" y2=\"{ref_y}\" stroke=\"#999999\" \
         stroke-dasharray=\"4 3\"/>\n  <text x=\"4\" y=\"{}\">10.0</text>\n",
        width - 16.0,
        ref_y + 3.0
    ));
    for (i, dim) in report.dimensions.iter().enumerate() {
        let x = LEFT + 4.0 + i as f64 * (BAR + GAP);
        let bar_h = dim.percent_mse * scale;
        let y = TOP + PLOT_H - bar_h;
        svg.push_str(&format!(
            "  <rect x=\"{x}\" y=\"{}\" width=\"{BAR}\" height=\"{}\" fill=\"#4477aa\">\
             <title>{}: %MSE {}</title></rect>\n",
            fmt(y, 2),
            fmt(bar_h, 2),
            xml_escape(&dim.dimension),
            fmt(dim.percent_mse, 3)
        ));
        svg.push_str(&format!(
            "  <text x=\"{x}\" y=\"{}\">{}</text>\n",
            fmt(y - 3.0, 2),
            fmt(dim.percent_mse, 1)
        ));
        let lx = x + BAR / 2.0;
        let ly = TOP + PLOT_H + 12.0;
        svg.push_str(&format!(
            "  <text x=\"{lx}\" y=\"{ly}\" transform=\"rotate(55 {lx} {ly})\">{}</text>\n",
            xml_escape(&dim.dimension)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

// ---------------------------------------------------------------------------
// Prediction report exports
// ---------------------------------------------------------------------------

pub fn prediction_csv(report: &PredictionReport, comment: &str) -> String {
    let mut out = String::new();
    for line in comment.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("dimension,percent_mse,percent_rmse,accuracy_rho,accuracy_p,n_places\n");
    for dim in &report.dimensions {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            dim.dimension,
            dim.percent_mse,
            dim.percent_rmse,
            dim.accuracy.rho.map(|v| v.to_string()).unwrap_or_default(),
            dim.accuracy
                .p_value
                .map(|v| v.to_string())
                .unwrap_or_default(),
            dim.folds.len()
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Comparison table
// ---------------------------------------------------------------------------

fn rho_with_stars(cell: &crate::stats::CorrelationCell) -> String {
    match cell.rho {
        Some(rho) => format!("{}{}", fmt(rho, 2), stars(cell.p_value)),
        None => "-".into(),
    }
}

fn feature_list(features: &[String]) -> String {
    if features.is_empty() {
        "-".into()
    } else {
        features.join("; ")
    }
}

pub fn comparison_markdown(table: &ComparisonTable) -> String {
    let mut out = String::new();
    out.push_str("| Ambiance | People | Algorithm | Winner | People + | People - | Algorithm + | Algorithm - | Both |\n");
    out.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for row in &table.rows {
        let winner = match row.winner {
            Winner::People => "people",
            Winner::Algorithm => "algorithm",
            Winner::Tie => "tie",
        };
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
            row.dimension,
            rho_with_stars(&row.people),
            rho_with_stars(&row.algorithm),
            winner,
            feature_list(&row.people_features.positive),
            feature_list(&row.people_features.negative),
            feature_list(&row.algorithm_features.positive),
            feature_list(&row.algorithm_features.negative),
            feature_list(&row.shared),
        ));
    }
    out.push_str(&format!(
        "\nTop-5 lists keep only associations significant at p < {}. \
         Stars: *** p < .01, * p < .05.\n",
        table.alpha
    ));
    out
}

pub fn comparison_csv(table: &ComparisonTable, comment: &str) -> String {
    let mut out = String::new();
    for line in comment.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("dimension,people_rho,people_p,algorithm_rho,algorithm_p,winner,people_positive,people_negative,algorithm_positive,algorithm_negative,shared\n");
    for row in &table.rows {
        let field = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let winner = match row.winner {
            Winner::People => "people",
            Winner::Algorithm => "algorithm",
            Winner::Tie => "tie",
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            row.dimension,
            field(row.people.rho),
            field(row.people.p_value),
            field(row.algorithm.rho),
            field(row.algorithm.p_value),
            winner,
            feature_list(&row.people_features.positive),
            feature_list(&row.people_features.negative),
            feature_list(&row.algorithm_features.positive),
            feature_list(&row.algorithm_features.negative),
            feature_list(&row.shared),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predict::{
        compare, ComparisonRow, DimensionReport, FoldOutcome, PredictionReport, TopFeatures,
    };
    use crate::stats::{spearman_dense, CorrelationCell, CorrelationMatrix};

    #[test]
    fn star_boundaries() {
        assert_eq!(stars(Some(0.002)), "***");
        assert_eq!(stars(Some(0.02)), "*");
        assert_eq!(stars(Some(0.2)), "");
        assert_eq!(stars(None), "");
    }

    fn cell(rho: f64, p: f64) -> CorrelationCell {
        CorrelationCell {
            rho: Some(rho),
            p_value: Some(p),
            n_effective: 49,
        }
    }

    #[test]
    fn heatmap_contains_cells_and_gray_for_insignificant() {
        let matrix = CorrelationMatrix {
            row_labels: vec!["f1".into(), "f2".into()],
            col_labels: vec!["d1".into()],
            cells: vec![
                vec![cell(0.9, 0.001)],
                vec![cell(0.5, 0.5)],
            ],
            alpha: 0.05,
        };
        let svg = heatmap_svg(&matrix, "associations");
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<rect").count(), 2);
        assert!(svg.contains("#c8c8c8"), "insignificant cell should be gray");
    }

    /// Ranks 1..=49 with the listed swaps applied; the rank-correlation of
    /// the swapped sequence against 1..=49 follows 1 - 6 sum(d^2)/(n(n^2-1)).
    fn swapped_ranks(swaps: &[(usize, usize)]) -> Vec<f64> {
        let mut ranks: Vec<f64> = (1..=49).map(|v| v as f64).collect();
        for &(a, b) in swaps {
            ranks.swap(a, b);
        }
        ranks
    }

    #[test]
    fn golden_comparison_row_for_the_reading_dimension() {
        let identity: Vec<f64> = (1..=49).map(|v| v as f64).collect();
        // sum d^2 = 2(46^2 + 6^2 + 2^2) = 4312; rho = 1 - 6*4312/117600 = 0.78
        let people_ranks = swapped_ranks(&[(0, 46), (1, 7), (2, 4)]);
        // sum d^2 = 2(48^2 + 41^2 + 5^2 + 2^2 + 2^2) = 8036; rho = 0.59
        let algo_ranks = swapped_ranks(&[(0, 48), (1, 42), (2, 7), (3, 5), (4, 6)]);

        let people_rho = spearman_dense(&people_ranks, &identity).unwrap();
        assert!((people_rho.rho.unwrap() - 0.78).abs() < 1e-12);
        let algo_rho = spearman_dense(&algo_ranks, &identity).unwrap();
        assert!((algo_rho.rho.unwrap() - 0.59).abs() < 1e-12);

        let face: Vec<crate::cluster::TargetScores> = people_ranks
            .iter()
            .enumerate()
            .map(|(i, r)| crate::cluster::TargetScores {
                place_id: format!("p{i:02}"),
                values: vec![r / 49.0],
            })
            .collect();
        let spot: Vec<crate::cluster::TargetScores> = identity
            .iter()
            .enumerate()
            .map(|(i, r)| crate::cluster::TargetScores {
                place_id: format!("p{i:02}"),
                values: vec![r / 49.0],
            })
            .collect();
        let report = PredictionReport {
            dimensions: vec![DimensionReport {
                dimension: "reading".into(),
                folds: algo_ranks
                    .iter()
                    .enumerate()
                    .map(|(i, r)| FoldOutcome {
                        place_id: format!("p{i:02}"),
                        selected: vec![],
                        predicted: r / 49.0,
                        actual: identity[i] / 49.0,
                    })
                    .collect(),
                percent_mse: 1.2,
                percent_rmse: 10.9,
                accuracy: algo_rho,
            }],
        };
        // both sides rank glasses and age in their top lists
        let matrix_for = |extra: &str| CorrelationMatrix {
            row_labels: vec!["glasses".into(), "old".into(), extra.to_string()],
            col_labels: vec!["reading".into()],
            cells: vec![
                vec![cell(0.61, 0.001)],
                vec![cell(0.55, 0.002)],
                vec![cell(0.4, 0.01)],
            ],
            alpha: 0.05,
        };
        let names = vec!["reading".to_string()];
        let table = compare(
            &face,
            &spot,
            &names,
            &report,
            &matrix_for("photo quality"),
            &matrix_for("yellow"),
            0.05,
        )
        .unwrap();

        let markdown = comparison_markdown(&table);
        let row = markdown
            .lines()
            .find(|l| l.starts_with("| reading"))
            .expect("reading row");
        assert!(row.contains("0.78***"), "row: {row}");
        assert!(row.contains("0.59***"), "row: {row}");
        assert!(row.contains("glasses; old"), "row: {row}");
        assert!(markdown.contains("Stars: *** p < .01, * p < .05"));
    }

    #[test]
    fn markdown_and_csv_agree_on_winner() {
        let table = ComparisonTable {
            rows: vec![ComparisonRow {
                dimension: "posh".into(),
                people: cell(0.15, 0.3),
                algorithm: cell(0.30, 0.03),
                winner: Winner::Algorithm,
                people_features: TopFeatures {
                    positive: vec!["smile".into()],
                    negative: vec![],
                },
                algorithm_features: TopFeatures {
                    positive: vec![],
                    negative: vec!["circle_count".into()],
                },
                shared: vec![],
            }],
            alpha: 0.05,
        };
        let md = comparison_markdown(&table);
        assert!(md.contains("| posh | 0.15 | 0.30* | algorithm |"));
        let csv = comparison_csv(&table, "seed=0");
        assert!(csv.lines().any(|l| l.starts_with("posh,0.15,") && l.contains("algorithm")));
    }

    #[test]
    fn error_bars_render_one_bar_per_dimension() {
        let report = PredictionReport {
            dimensions: (0..18)
                .map(|i| DimensionReport {
                    dimension: format!("dim{i}"),
                    folds: vec![],
                    percent_mse: i as f64,
                    percent_rmse: 10.0 * (i as f64).sqrt(),
                    accuracy: CorrelationCell::undefined(0),
                })
                .collect(),
        };
        let svg = error_bars_svg(&report, "errors");
        assert_eq!(svg.matches("<rect").count(), 18);
    }

    #[test]
    fn matrix_csvs_align() {
        let matrix = CorrelationMatrix {
            row_labels: vec!["f1".into()],
            col_labels: vec!["d1".into(), "d2".into()],
            cells: vec![vec![cell(0.5, 0.04), CorrelationCell::undefined(2)]],
            alpha: 0.05,
        };
        let (rho, p, n) = matrix_csvs(&matrix, "seed=1");
        assert!(rho.contains("f1,0.5,"));
        assert!(p.lines().last().unwrap().starts_with("f1,0.04"));
        assert_eq!(n.lines().last().unwrap(), "f1,49,2");
    }
}

//! Report artifacts: labeled CSV matrices (bit-exact float round trip),
//! the cohort summary table, the pairwise p-value matrix, training-curve
//! CSVs, and hand-rolled SVG reward histograms.

use std::fmt::Write as _;

use crate::checkpoint::fmt_f64;
use crate::cohort::ComparisonReport;
use crate::dqn::TrainPoint;
use crate::error::{Error, Result};
use crate::mat::Mat;

fn check_label(label: &str) -> Result<()> {
    if label.is_empty() || label.contains([',', '\n', '\r', '"']) {
        return Err(Error::InvalidArgument(format!(
            "CSV label '{label}' must be nonempty and free of commas/quotes/newlines"
        )));
    }
    Ok(())
}

/// Write a labeled numeric matrix as CSV: first row = column labels, first
/// column = row labels, floats at 17 significant digits.
pub fn write_labeled_csv(
    row_labels: &[String],
    col_labels: &[String],
    matrix: &Mat<f64>,
) -> Result<String> {
    if matrix.rows() != row_labels.len() || matrix.cols() != col_labels.len() {
        return Err(Error::Shape(format!(
            "matrix {}x{} vs {} row labels, {} column labels",
            matrix.rows(),
            matrix.cols(),
            row_labels.len(),
            col_labels.len()
        )));
    }
    for label in row_labels.iter().chain(col_labels.iter()) {
        check_label(label)?;
    }
    let mut out = String::new();
    for label in col_labels {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    for (r, label) in row_labels.iter().enumerate() {
        out.push_str(label);
        for c in 0..matrix.cols() {
            out.push(',');
            out.push_str(&fmt_f64(matrix[(r, c)]));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Parse a labeled CSV matrix produced by `write_labeled_csv` (or any CSV
/// with a label header row/column and float64 cells).
pub fn read_labeled_csv(text: &str) -> Result<(Vec<String>, Vec<String>, Mat<f64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
    let col_labels: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
    if col_labels.is_empty() {
        return Err(Error::Parse("CSV header has no column labels".into()));
    }
    let mut row_labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut fields = line.split(',');
        let label = fields
            .next()
            .ok_or_else(|| Error::Parse(format!("CSV row {i}: missing row label")))?;
        row_labels.push(label.to_string());
        let values: Vec<f64> = fields
            .enumerate()
            .map(|(j, f)| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("CSV row {i}, cell {j}: '{f}': {e}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != col_labels.len() {
            return Err(Error::Parse(format!(
                "CSV row {i} has {} cells, expected {}",
                values.len(),
                col_labels.len()
            )));
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Parse("CSV has no data rows".into()));
    }
    Ok((row_labels, col_labels, Mat::from_nested(&rows)?))
}

/// Binary 0/1 matrix as labeled CSV (for co-expression masks).
pub fn write_mask_csv(
    row_labels: &[String],
    col_labels: &[String],
    mask: &Mat<u8>,
) -> Result<String> {
    if mask.rows() != row_labels.len() || mask.cols() != col_labels.len() {
        return Err(Error::Shape(format!(
            "mask {}x{} vs {} row labels, {} column labels",
            mask.rows(),
            mask.cols(),
            row_labels.len(),
            col_labels.len()
        )));
    }
    for label in row_labels.iter().chain(col_labels.iter()) {
        check_label(label)?;
    }
    let mut out = String::new();
    for label in col_labels {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    for (r, label) in row_labels.iter().enumerate() {
        out.push_str(label);
        for c in 0..mask.cols() {
            let v = mask[(r, c)];
            if v > 1 {
                return Err(Error::InvalidArgument(format!(
                    "mask cell ({r},{c}) = {v} is not 0/1"
                )));
            }
            out.push(',');
            out.push_str(if v == 1 { "1" } else { "0" });
        }
        out.push('\n');
    }
    Ok(out)
}

/// Parse a labeled CSV of 0/1 cells back into a binary matrix.
pub fn read_mask_csv(text: &str) -> Result<(Vec<String>, Vec<String>, Mat<u8>)> {
    let (rows, cols, values) = read_labeled_csv(text)?;
    let mut mask = Mat::filled(values.rows(), values.cols(), 0u8);
    for r in 0..values.rows() {
        for c in 0..values.cols() {
            let v = values[(r, c)];
            if v != 0.0 && v != 1.0 {
                return Err(Error::Parse(format!("mask cell ({r},{c}) = {v} is not 0/1")));
            }
            mask[(r, c)] = v as u8;
        }
    }
    Ok((rows, cols, mask))
}

/// Summary table shaped like the aggregated-results table: one row per
/// cohort with mean, std, top-10 mean/std, and % solved. Missing top-10
/// statistics (cohorts under 10 agents) serialize as empty cells.
pub fn comparison_table_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("model,env,mean,std,top10_mean,top10_std,solved_percent\n");
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    for (tag, row) in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            tag.label(),
            report.env_id,
            fmt_f64(row.mean),
            fmt_f64(row.std),
            opt(row.top10_mean),
            opt(row.top10_std),
            fmt_f64(row.solved_percent),
        );
    }
    out
}

/// Square matrix of Bonferroni-adjusted p-values over the report's cohorts
/// (diagonal = 1: a cohort is never distinguishable from itself).
pub fn p_value_matrix_csv(report: &ComparisonReport) -> Result<String> {
    let labels: Vec<String> = report.rows.iter().map(|(tag, _)| tag.label().to_string()).collect();
    let n = labels.len();
    let mut m = Mat::filled(n, n, 1.0f64);
    for test in &report.tests {
        let i = report.rows.iter().position(|(t, _)| *t == test.left);
        let j = report.rows.iter().position(|(t, _)| *t == test.right);
        if let (Some(i), Some(j)) = (i, j) {
            m[(i, j)] = test.p_adjusted;
            m[(j, i)] = test.p_adjusted;
        }
    }
    write_labeled_csv(&labels, &labels, &m)
}

/// Training-curve CSV: step, validation mean, mean interval loss.
pub fn training_curve_csv(curve: &[TrainPoint]) -> String {
    let mut out = String::from("step,validation_mean,loss\n");
    for point in curve {
        let _ = writeln!(
            out,
            "{},{},{}",
            point.step,
            fmt_f64(point.validation_mean),
            fmt_f64(point.loss)
        );
    }
    out
}

/// Evolution-curve CSV: generation, best fitness, mean fitness, env steps.
pub fn snes_curve_csv(generations: &[crate::snes::GenerationLog]) -> String {
    let mut out = String::from("generation,best_fitness,mean_fitness,env_steps\n");
    for g in generations {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            g.generation,
            fmt_f64(g.best_fitness),
            fmt_f64(g.mean_fitness),
            g.env_steps
        );
    }
    out
}

/// Fixed-range histogram counts: `bins` equal-width bins over [lo, hi],
/// clamping out-of-range values into the end bins.
pub fn histogram_counts(scores: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Vec<usize>> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    if !(hi > lo) {
        return Err(Error::InvalidArgument(format!("bad histogram range [{lo}, {hi}]")));
    }
    let mut counts = vec![0usize; bins];
    for &s in scores {
        if !s.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite score {s}")));
        }
        let t = (s - lo) / (hi - lo);
        let idx = ((t * bins as f64).floor() as i64).clamp(0, bins as i64 - 1) as usize;
        counts[idx] += 1;
    }
    Ok(counts)
}

/// Hand-rolled SVG bar histogram of a cohort's reward distribution.
pub fn histogram_svg(title: &str, scores: &[f64], bins: usize, lo: f64, hi: f64) -> Result<String> {
    let counts = histogram_counts(scores, bins, lo, hi)?;
    let max_count = counts.iter().copied().max().unwrap_or(0).max(1);
    let (width, height) = (640.0, 400.0);
    let margin = 50.0;
    let plot_w = width - 2.0 * margin;
    let plot_h = height - 2.0 * margin;
    let bar_w = plot_w / bins as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(svg, "  <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "  <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>",
        width / 2.0,
        title.replace('<', "&lt;").replace('>', "&gt;").replace('&', "&amp;")
    );
    // axes
    let _ = writeln!(
        svg,
        "  <line x1=\"{margin}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        height - margin,
        width - margin,
        height - margin
    );
    let _ = writeln!(
        svg,
        "  <line x1=\"{margin}\" y1=\"{margin}\" x2=\"{margin}\" y2=\"{}\" stroke=\"black\"/>",
        height - margin
    );
    for (i, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let h = plot_h * count as f64 / max_count as f64;
        let x = margin + i as f64 * bar_w;
        let y = height - margin - h;
        let _ = writeln!(
            svg,
            "  <rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"steelblue\" stroke=\"black\" stroke-width=\"0.5\"/>",
            x,
            y,
            bar_w.max(1.0),
            h
        );
    }
    // range and count labels
    let _ = writeln!(
        svg,
        "  <text x=\"{margin}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{lo}</text>",
        height - margin + 20.0
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{hi}</text>",
        width - margin,
        height - margin + 20.0
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">{max_count}</text>",
        margin - 6.0,
        margin + 4.0
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

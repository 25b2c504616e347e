//! Metrics, binned truth-vs-prediction matrices, full-population
//! evaluation against the informer table, and report emission.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::informer::InformerTable;
use crate::ml::{LabelColumn, Predictor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub n: usize,
    pub label: LabelColumn,
    pub model_name: String,
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Mean squared and mean absolute error over paired values.
pub fn metrics(
    predictions: &[f64],
    labels: &[f64],
    label: LabelColumn,
    model_name: &str,
) -> Result<Metrics> {
    if predictions.is_empty() {
        return Err(Error::InvalidInput("empty prediction set".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            got: predictions.len(),
        });
    }
    let n = predictions.len() as f64;
    let mse = kahan_sum(
        predictions
            .iter()
            .zip(labels)
            .map(|(p, y)| (p - y) * (p - y)),
    ) / n;
    let mae = kahan_sum(predictions.iter().zip(labels).map(|(p, y)| (p - y).abs())) / n;
    Ok(Metrics {
        mse,
        mae,
        n: predictions.len(),
        label,
        model_name: model_name.to_string(),
    })
}

/// Counts of (true_bin, predicted_bin) pairs over uniform bins on [0,1];
/// the last bin is closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedMatrix {
    pub bins: usize,
    pub counts: Vec<Vec<u64>>,
}

fn bin_of(v: f64, bins: usize) -> usize {
    ((v * bins as f64) as usize).min(bins - 1)
}

pub fn binned_matrix(predictions: &[f64], labels: &[f64], bins: usize) -> Result<BinnedMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            got: predictions.len(),
        });
    }
    if bins == 0 {
        return Err(Error::InvalidInput("bins must be >= 1".into()));
    }
    for &v in predictions.iter().chain(labels) {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidInput(format!("value {v} outside [0,1]")));
        }
    }
    let mut counts = vec![vec![0u64; bins]; bins];
    for (p, y) in predictions.iter().zip(labels) {
        counts[bin_of(*y, bins)][bin_of(*p, bins)] += 1;
    }
    Ok(BinnedMatrix { bins, counts })
}

/// Predicts every subpopulation in the table and scores against the
/// exact oracle bound. Rows are visited in key order.
pub fn full_population_eval<P: Predictor>(
    model: &P,
    table: &InformerTable,
    label: LabelColumn,
    model_name: &str,
) -> Result<Metrics> {
    let (preds, truths) = predictions_and_truths(model, table, label);
    metrics(&preds, &truths, label, model_name)
}

/// Per-key (prediction, truth) vectors in key order.
pub fn predictions_and_truths<P: Predictor>(
    model: &P,
    table: &InformerTable,
    label: LabelColumn,
) -> (Vec<f64>, Vec<f64>) {
    let mut preds = Vec::with_capacity(table.rows.len());
    let mut truths = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let feats: Vec<f64> = row
            .key
            .bits(table.n_observed)
            .iter()
            .map(|&b| b as u8 as f64)
            .collect();
        preds.push(model.predict(&feats));
        truths.push(match label {
            LabelColumn::Lb => row.lb,
            LabelColumn::Ub => row.ub,
        });
    }
    (preds, truths)
}

/// Everything needed to report one evaluated model.
pub struct ModelReport {
    pub metrics: Metrics,
    pub matrix: BinnedMatrix,
    /// (key, true, predicted)
    pub scatter: Vec<(u32, f64, f64)>,
}

/// Builds the report artifacts for one model against the informer table.
pub fn evaluate_model<P: Predictor>(
    model: &P,
    table: &InformerTable,
    label: LabelColumn,
    model_name: &str,
    bins: usize,
) -> Result<ModelReport> {
    let (preds, truths) = predictions_and_truths(model, table, label);
    let clamped: Vec<f64> = preds.iter().map(|p| p.clamp(0.0, 1.0)).collect();
    let truths_clamped: Vec<f64> = truths.iter().map(|t| t.clamp(0.0, 1.0)).collect();
    Ok(ModelReport {
        metrics: metrics(&preds, &truths, label, model_name)?,
        matrix: binned_matrix(&clamped, &truths_clamped, bins)?,
        scatter: table
            .rows
            .iter()
            .zip(truths.iter().zip(&preds))
            .map(|(row, (t, p))| (row.key.0, *t, *p))
            .collect(),
    })
}

fn scatter_svg(scatter: &[(u32, f64, f64)]) -> String {
    let size = 640.0;
    let margin = 40.0;
    let plot = size - 2.0 * margin;
    let px = |v: f64| margin + v.clamp(0.0, 1.0) * plot;
    let py = |v: f64| size - margin - v.clamp(0.0, 1.0) * plot;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"{margin}\" y=\"{margin}\" width=\"{plot}\" height=\"{plot}\" fill=\"none\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n",
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    ));
    for (_, t, p) in scatter {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.2\" fill=\"steelblue\" fill-opacity=\"0.35\"/>\n",
            px(*t),
            py(*p)
        ));
    }
    svg.push_str("<text x=\"320\" y=\"630\" text-anchor=\"middle\">true</text>\n");
    svg.push_str("<text x=\"12\" y=\"320\" text-anchor=\"middle\" transform=\"rotate(-90 12 320)\">predicted</text>\n");
    svg.push_str("</svg>\n");
    svg
}

/// Writes comparison.csv, per-model matrix and scatter CSVs, and a
/// static SVG scatter per model.
pub fn emit_report(reports: &[ModelReport], out_dir: &Path, write_svg: bool) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut cmp = std::fs::File::create(out_dir.join("comparison.csv"))?;
    writeln!(cmp, "Model,Dataset,MSE,MAE")?;
    for r in reports {
        let ds = match r.metrics.label {
            LabelColumn::Lb => "Lower bound",
            LabelColumn::Ub => "Upper bound",
        };
        writeln!(
            cmp,
            "{},{},{:.6},{:.6}",
            r.metrics.model_name, ds, r.metrics.mse, r.metrics.mae
        )?;
    }
    for r in reports {
        let stem = format!(
            "{}_{}",
            r.metrics.model_name.replace(['(', ')', ' '], "_"),
            r.metrics.label
        );
        let mut mf = std::fs::File::create(out_dir.join(format!("matrix_{stem}.csv")))?;
        for row in &r.matrix.counts {
            let line: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            writeln!(mf, "{}", line.join(","))?;
        }
        let mut sf = std::fs::File::create(out_dir.join(format!("scatter_{stem}.csv")))?;
        writeln!(sf, "key,true,predicted")?;
        for (k, t, p) in &r.scatter {
            writeln!(sf, "{k},{t:.17},{p:.17}")?;
        }
        if write_svg {
            std::fs::write(
                out_dir.join(format!("scatter_{stem}.svg")),
                scatter_svg(&r.scatter),
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::informer::enumerate_informer;
    use crate::scm::random_scm;
    use proptest::prelude::*;

    #[test]
    fn exact_predictions_zero_error() {
        let m = metrics(&[0.1, 0.5], &[0.1, 0.5], LabelColumn::Lb, "t").unwrap();
        assert_eq!(m.mse, 0.0);
        assert_eq!(m.mae, 0.0);
    }

    #[test]
    fn single_pair() {
        let m = metrics(&[0.5], &[0.4], LabelColumn::Lb, "t").unwrap();
        assert!((m.mse - 0.01).abs() < 1e-15);
        assert!((m.mae - 0.1).abs() < 1e-15);
    }

    #[test]
    fn mismatch_and_empty_rejected() {
        assert!(metrics(&[0.5], &[0.4, 0.3], LabelColumn::Lb, "t").is_err());
        assert!(metrics(&[], &[], LabelColumn::Lb, "t").is_err());
    }

    #[test]
    fn matrix_diagonal_and_corners() {
        let m = binned_matrix(&[0.05, 0.95], &[0.05, 0.95], 10).unwrap();
        assert_eq!(m.counts[0][0], 1);
        assert_eq!(m.counts[9][9], 1);
        let m = binned_matrix(&[1.0], &[0.0], 10).unwrap();
        assert_eq!(m.counts[0][9], 1);
        let total: u64 = m.counts.iter().flatten().sum();
        assert_eq!(total, 1);
    }

    #[test]
    fn matrix_rejects_out_of_range() {
        assert!(binned_matrix(&[1.5], &[0.5], 10).is_err());
    }

    #[test]
    fn oracle_as_model_is_perfect() {
        let spec = random_scm(3, 6, 4, (-1.0, 1.0), (0.0, 1.0)).unwrap();
        let table = enumerate_informer(&spec).unwrap();
        let lut: std::collections::HashMap<u32, f64> =
            table.rows.iter().map(|r| (r.key.0, r.lb)).collect();
        let n_obs = table.n_observed;
        let oracle = move |f: &[f64]| {
            let bits: Vec<bool> = f.iter().map(|&v| v > 0.5).collect();
            lut[&crate::informer::SubpopKey::from_bits(&bits[..n_obs]).0]
        };
        let m = full_population_eval(&oracle, &table, LabelColumn::Lb, "oracle").unwrap();
        assert_eq!(m.mse, 0.0);
        assert_eq!(m.mae, 0.0);
        assert_eq!(m.n, table.rows.len());
    }

    #[test]
    fn constant_predictor_matches_direct_sum() {
        let spec = random_scm(5, 6, 4, (-1.0, 1.0), (0.0, 1.0)).unwrap();
        let table = enumerate_informer(&spec).unwrap();
        let half = |_: &[f64]| 0.5;
        let m = full_population_eval(&half, &table, LabelColumn::Ub, "const").unwrap();
        let direct: f64 = table.rows.iter().map(|r| (r.ub - 0.5).abs()).sum::<f64>()
            / table.rows.len() as f64;
        assert!((m.mae - direct).abs() < 1e-14);
    }

    #[test]
    fn report_files_and_determinism() {
        let spec = random_scm(7, 6, 3, (-1.0, 1.0), (0.0, 1.0)).unwrap();
        let table = enumerate_informer(&spec).unwrap();
        let half = |_: &[f64]| 0.5;
        let rep = evaluate_model(&half, &table, LabelColumn::Lb, "const", 10).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&[rep], dir.path(), true).unwrap();
        let cmp = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
        assert!(cmp.starts_with("Model,Dataset,MSE,MAE"));
        assert_eq!(cmp.lines().count(), 2);
        assert!(dir.path().join("matrix_const_lb.csv").exists());
        assert!(dir.path().join("scatter_const_lb.svg").exists());
        // regeneration is byte-identical
        let rep2 = evaluate_model(&half, &table, LabelColumn::Lb, "const", 10).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        emit_report(&[rep2], dir2.path(), true).unwrap();
        let a = std::fs::read(dir.path().join("scatter_const_lb.csv")).unwrap();
        let b = std::fs::read(dir2.path().join("scatter_const_lb.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_model_set_header_only() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&[], dir.path(), false).unwrap();
        let cmp = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
        assert_eq!(cmp.lines().count(), 1);
    }

    proptest! {
        #[test]
        fn jensen_and_permutation(values in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..50)) {
            let preds: Vec<f64> = values.iter().map(|v| v.0).collect();
            let labels: Vec<f64> = values.iter().map(|v| v.1).collect();
            let m = metrics(&preds, &labels, LabelColumn::Lb, "p").unwrap();
            prop_assert!(m.mae * m.mae <= m.mse + 1e-12);
            let mut rev_p = preds.clone();
            let mut rev_l = labels.clone();
            rev_p.reverse();
            rev_l.reverse();
            let m2 = metrics(&rev_p, &rev_l, LabelColumn::Lb, "p").unwrap();
            prop_assert!((m.mse - m2.mse).abs() < 1e-12);
            prop_assert!((m.mae - m2.mae).abs() < 1e-12);
        }
    }
}

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::adapter::{ModelAdapter, VideoBank};
use super::metrics::{accuracy, mda_of_rows, rel_diff, round2, AccuracyRow, BiasSet, EvalReport};
use crate::benchkit::McqItem;
use crate::error::{invalid, Result};

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{:.2}", round2(x))).unwrap_or_else(|| "-".into())
}

/// Method rows (Original, one per exclusion, MDA) by per-model Short/Medium/Long/Avg columns.
pub fn write_mda_csv<W: Write>(w: W, report: &EvalReport) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let mut head = vec!["Method".to_string()];
    for m in &report.models {
        for c in ["Short", "Medium", "Long", "Avg"] {
            head.push(format!("{} {c}", m.model_id));
        }
    }
    csv.write_record(&head)?;
    let row = |name: String, pick: &dyn Fn(usize) -> AccuracyRow| {
        let mut r = vec![name];
        for i in 0..report.models.len() {
            r.extend(pick(i).rounded().map(cell));
        }
        r
    };
    csv.write_record(row("Original".into(), &|i| report.models[i].original))?;
    for (e, name) in report.exclusion_models.iter().enumerate() {
        csv.write_record(row(format!("Exclude {name} Bias"), &|i| report.models[i].excluded[e]))?;
    }
    csv.write_record(row("Mean Debiased Accuracy (MDA)".into(), &|i| report.models[i].mda))?;
    csv.flush()?;
    Ok(())
}

/// MDA per frame budget and model, as measured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameAblation {
    pub models: Vec<String>,
    /// Frame budgets, largest first.
    pub budgets: Vec<usize>,
    /// `rows[b][m]` is model `m` at budget `budgets[b]`.
    pub rows: Vec<Vec<AccuracyRow>>,
}

impl FrameAblation {
    /// Relative drop from the first (largest) to the last (smallest) budget, per
    /// model as `[short, medium, long, avg]`.
    pub fn rel_diffs(&self) -> Result<Vec<[Option<f64>; 4]>> {
        let (first, last) = match (self.rows.first(), self.rows.last()) {
            (Some(f), Some(l)) if self.rows.len() >= 2 => (f, l),
            _ => return Err(invalid("need at least two frame budgets")),
        };
        (0..self.models.len())
            .map(|m| {
                let (a, b) = (first[m], last[m]);
                let pair = |x: Option<f64>, y: Option<f64>| match (x, y) {
                    (Some(x), Some(y)) => rel_diff(x, y).map(Some),
                    _ => Ok(None),
                };
                Ok([
                    pair(a.short, b.short)?,
                    pair(a.medium, b.medium)?,
                    pair(a.long, b.long)?,
                    pair(a.avg(), b.avg())?,
                ])
            })
            .collect()
    }

    /// Rows per budget plus a Rel. Diff row; columns grouped by class then model.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        let mut head = vec!["Frames".to_string()];
        for c in ["Short", "Medium", "Long", "Avg"] {
            for m in &self.models {
                head.push(format!("{c} {m}"));
            }
        }
        csv.write_record(&head)?;
        for (b, row) in self.budgets.iter().zip(&self.rows) {
            let mut r = vec![b.to_string()];
            for c in 0..4 {
                r.extend(row.iter().map(|a| cell(a.rounded()[c])));
            }
            csv.write_record(&r)?;
        }
        let diffs = self.rel_diffs()?;
        let mut r = vec!["Rel. Diff".to_string()];
        for c in 0..4 {
            r.extend(diffs.iter().map(|d| d[c].map(|x| format!("{:.2}%", round2(x))).unwrap_or_else(|| "-".into())));
        }
        csv.write_record(&r)?;
        csv.flush()?;
        Ok(())
    }
}

/// MDA of one prediction set over fixed bias sets (the original accuracy when none).
pub fn debiased_mda(predictions: &[super::Prediction], bench: &[McqItem], bias_sets: &[BiasSet]) -> Result<AccuracyRow> {
    if bias_sets.is_empty() {
        return accuracy(predictions, bench, &HashSet::new());
    }
    let rows = bias_sets.iter().map(|b| accuracy(predictions, bench, &b.ids())).collect::<Result<Vec<_>>>()?;
    Ok(mda_of_rows(&rows))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub mda: AccuracyRow,
}

/// One full evaluation per alpha with everything else fixed.
pub fn alpha_sweep<F>(
    factory: F,
    bench: &[McqItem],
    videos: &VideoBank,
    bias_sets: &[BiasSet],
    alphas: &[f64],
    max_in_flight: usize,
) -> Result<Vec<SweepRow>>
where
    F: Fn(f64) -> Result<Box<dyn ModelAdapter>>,
{
    alphas
        .iter()
        .map(|&alpha| {
            let adapter = factory(alpha)?;
            let run = super::run_predictions(adapter.as_ref(), bench, Some(videos), max_in_flight)?;
            Ok(SweepRow { alpha, mda: debiased_mda(&run.predictions, bench, bias_sets)? })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["alpha", "short", "medium", "long", "avg"])?;
    for r in rows {
        let mut rec = vec![r.alpha.to_string()];
        rec.extend(r.mda.rounded().map(cell));
        csv.write_record(&rec)?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalharness::ModelReport;

    #[test]
    fn mda_csv_layout() {
        let row = AccuracyRow::from_classes(70.24, 64.94, 61.19);
        let report = EvalReport {
            exclusion_models: vec!["x".into()],
            models: vec![ModelReport { model_id: "m".into(), original: row, excluded: vec![row], mda: row }],
        };
        let mut buf = Vec::new();
        write_mda_csv(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "Method,m Short,m Medium,m Long,m Avg");
        assert_eq!(lines[1], "Original,70.24,64.94,61.19,65.46");
        assert_eq!(lines[2], "Exclude x Bias,70.24,64.94,61.19,65.46");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn frame_ablation_rel_diff_row() {
        let ab = FrameAblation {
            models: vec!["a".into()],
            budgets: vec![32, 4],
            rows: vec![vec![AccuracyRow::from_classes(53.20, 47.01, 41.76)], vec![AccuracyRow::from_classes(50.43, 42.54, 38.88)]],
        };
        let d = ab.rel_diffs().unwrap();
        assert_eq!(round2(d[0][0].unwrap()), 5.21);
        let mut buf = Vec::new();
        ab.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().last().unwrap().starts_with("Rel. Diff,5.21%,"));
    }
}
